//! Procedural face-like images with independent identity and expression
//! factors.
//!
//! Geometry is expressed in fractions of the image side. Identity controls the
//! face outline, eye placement and nose; emotion controls the mouth and the
//! eyebrow tilt. Each identity (and each emotion) sits on its own level of
//! every factor it owns, so any single factor separates the classes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

const BACKGROUND: f64 = 0.5;
const SKIN: f64 = 0.82;
const INK: f64 = 0.12;
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRange {
    pub min: f64,
    pub max: f64,
}

impl FactorRange {
    pub const fn new(min: f64, max: f64) -> Self {
        FactorRange { min, max }
    }

    fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Value of level `i` out of `n` evenly spaced levels.
    fn level(&self, i: usize, n: usize) -> f64 {
        if n <= 1 {
            return 0.5 * (self.min + self.max);
        }
        self.min + self.span() * i as f64 / (n - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityFactors {
    /// Semi-axes of the face ellipse.
    pub face_half_width: FactorRange,
    pub face_half_height: FactorRange,
    /// Horizontal distance from the midline to each eye.
    pub eye_spacing: FactorRange,
    /// Height of the eyes above the face center.
    pub eye_height: FactorRange,
    pub nose_length: FactorRange,
}

impl Default for IdentityFactors {
    fn default() -> Self {
        IdentityFactors {
            face_half_width: FactorRange::new(0.26, 0.42),
            face_half_height: FactorRange::new(0.34, 0.47),
            eye_spacing: FactorRange::new(0.09, 0.21),
            eye_height: FactorRange::new(0.05, 0.19),
            nose_length: FactorRange::new(0.05, 0.19),
        }
    }
}

impl IdentityFactors {
    fn ranges(&self) -> [FactorRange; 5] {
        [self.face_half_width, self.face_half_height, self.eye_spacing, self.eye_height, self.nose_length]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmotionFactors {
    /// Signed sag of the mouth arc; positive curves upward (smile).
    pub mouth_curvature: FactorRange,
    /// Gap between the lips.
    pub mouth_openness: FactorRange,
    /// Eyebrow tilt in degrees, mirrored across the midline.
    pub eyebrow_angle: FactorRange,
}

impl Default for EmotionFactors {
    fn default() -> Self {
        EmotionFactors {
            mouth_curvature: FactorRange::new(-0.07, 0.07),
            mouth_openness: FactorRange::new(0.0, 0.09),
            eyebrow_angle: FactorRange::new(-25.0, 25.0),
        }
    }
}

impl EmotionFactors {
    fn ranges(&self) -> [FactorRange; 3] {
        [self.mouth_curvature, self.mouth_openness, self.eyebrow_angle]
    }
}

/// Per-image perturbations. Factor jitter is uniform in
/// `±fraction × (factor range)`; translation is uniform in `±pixels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    pub identity: f64,
    pub emotion: f64,
    pub translation: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter { identity: 0.02, emotion: 0.05, translation: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_identities: usize,
    pub num_emotions: usize,
    pub images_per_cell: usize,
    pub image_size: usize,
    pub identity: IdentityFactors,
    pub emotion: EmotionFactors,
    pub jitter: Jitter,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_identities: 10,
            num_emotions: 4,
            images_per_cell: 30,
            image_size: 48,
            identity: IdentityFactors::default(),
            emotion: EmotionFactors::default(),
            jitter: Jitter::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 || self.num_emotions < 2 {
            return Err(Error::Config(format!(
                "need at least 2 identities and 2 emotions, got {} and {}",
                self.num_identities, self.num_emotions
            )));
        }
        if self.images_per_cell == 0 {
            return Err(Error::Config("images_per_cell must be positive".into()));
        }
        if self.image_size < 16 {
            return Err(Error::Config(format!("image_size {} is below the 16 px minimum", self.image_size)));
        }
        let j = &self.jitter;
        if [j.identity, j.emotion, j.translation].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("jitter magnitudes must be finite and non-negative".into()));
        }
        let ranges = self.identity.ranges().into_iter().chain(self.emotion.ranges());
        for r in ranges {
            if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
                return Err(Error::Config(format!("bad factor range [{}, {}]", r.min, r.max)));
            }
        }
        Ok(())
    }
}

/// Level index of each class on each factor.
fn assign_levels(classes: usize, factors: usize, seed: u64, tag: &str) -> Vec<Vec<usize>> {
    // Among a few seeded candidate permutation sets, keep the one whose
    // closest pair of classes is farthest apart.
    let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
    for candidate in 0..32usize {
        let mut rng = rng_from(derive_seed(seed, &[&tag, &candidate]));
        let perms: Vec<Vec<usize>> = (0..factors)
            .map(|_| {
                let mut p: Vec<usize> = (0..classes).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let levels: Vec<Vec<usize>> = (0..classes).map(|c| perms.iter().map(|p| p[c]).collect()).collect();
        let mut closest = usize::MAX;
        for a in 0..classes {
            for b in a + 1..classes {
                let d = levels[a].iter().zip(&levels[b]).map(|(x, y)| x.abs_diff(*y).pow(2)).sum();
                closest = closest.min(d);
            }
        }
        if best.as_ref().is_none_or(|(d, _)| closest > *d) {
            best = Some((closest, levels));
        }
    }
    best.expect("at least one candidate").1
}

struct Face {
    cx: f64,
    cy: f64,
    half_width: f64,
    half_height: f64,
    eye_spacing: f64,
    eye_height: f64,
    nose_length: f64,
    mouth_curvature: f64,
    mouth_openness: f64,
    eyebrow_angle: f64,
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

impl Face {
    /// Intensity at a point, in units of the image side.
    fn shade(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        if (dx / self.half_width).powi(2) + (dy / self.half_height).powi(2) > 1.0 {
            return BACKGROUND;
        }
        let eye_y = self.cy - self.eye_height;
        for side in [-1.0, 1.0] {
            let ex = self.cx + side * self.eye_spacing;
            if (x - ex).powi(2) + (y - eye_y).powi(2) <= 0.042f64.powi(2) {
                return INK;
            }
            // Brow: short bar above the eye, tilted symmetrically.
            let (by, half) = (eye_y - 0.085, 0.07);
            let theta = (side * self.eyebrow_angle).to_radians();
            let (ux, uy) = (half * theta.cos(), half * theta.sin());
            if segment_distance(x, y, ex - ux, by - uy, ex + ux, by + uy) <= 0.016 {
                return INK;
            }
        }
        let nose_top = self.cy - 0.03;
        if segment_distance(x, y, self.cx, nose_top, self.cx, nose_top + self.nose_length) <= 0.014 {
            return INK;
        }
        let (mouth_y, mouth_half) = (self.cy + 0.23, 0.13);
        if dx.abs() <= mouth_half {
            // Parabolic arc: corners lift for positive curvature.
            let u = dx / mouth_half;
            let mid = mouth_y - self.mouth_curvature * (u * u - 0.5) * 2.0;
            let half_thickness = 0.5 * self.mouth_openness + 0.015;
            if (y - mid).abs() <= half_thickness {
                return INK;
            }
        }
        SKIN
    }

    fn render(&self, size: usize) -> Vec<f64> {
        let inv = 1.0 / size as f64;
        let step = 1.0 / SUPERSAMPLE as f64;
        let mut pixels = Vec::with_capacity(size * size);
        for row in 0..size {
            for col in 0..size {
                let mut acc = 0.0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let x = (col as f64 + (sx as f64 + 0.5) * step) * inv;
                        let y = (row as f64 + (sy as f64 + 0.5) * step) * inv;
                        acc += self.shade(x, y);
                    }
                }
                pixels.push((acc / (SUPERSAMPLE * SUPERSAMPLE) as f64).clamp(0.0, 1.0));
            }
        }
        pixels
    }
}

/// Renders `identities × emotions × images_per_cell` images, identity-major.
/// Group ids are the generation index.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<LabeledImage>> {
    config.validate()?;
    let id_ranges = config.identity.ranges();
    let em_ranges = config.emotion.ranges();
    let id_levels = assign_levels(config.num_identities, id_ranges.len(), config.seed, "identity-levels");
    let em_levels = assign_levels(config.num_emotions, em_ranges.len(), config.seed, "emotion-levels");

    let id_values: Vec<Vec<f64>> = id_levels
        .iter()
        .map(|lv| lv.iter().zip(&id_ranges).map(|(&l, r)| r.level(l, config.num_identities)).collect())
        .collect();
    let em_values: Vec<Vec<f64>> = em_levels
        .iter()
        .map(|lv| lv.iter().zip(&em_ranges).map(|(&l, r)| r.level(l, config.num_emotions)).collect())
        .collect();

    // Two identities collide when every factor stays within reach of the
    // other's jitter band.
    for a in 0..config.num_identities {
        for b in a + 1..config.num_identities {
            let overlapping = id_ranges.iter().enumerate().all(|(f, r)| {
                (id_values[a][f] - id_values[b][f]).abs() <= 2.0 * config.jitter.identity * r.span()
            });
            if overlapping {
                return Err(Error::Config(format!(
                    "identities {a} and {b} are closer than the identity jitter on every factor"
                )));
            }
        }
    }

    let size = config.image_size;
    let j = &config.jitter;
    let mut images = Vec::with_capacity(config.num_identities * config.num_emotions * config.images_per_cell);
    for identity in 0..config.num_identities {
        for emotion in 0..config.num_emotions {
            for _ in 0..config.images_per_cell {
                let index = images.len();
                let mut rng = rng_from(derive_seed(config.seed, &[&"image", &index]));
                let mut perturb = |v: f64, r: &FactorRange, frac: f64| {
                    if frac == 0.0 {
                        v
                    } else {
                        v + rng.gen_range(-1.0..=1.0) * frac * r.span()
                    }
                };
                let iv: Vec<f64> =
                    id_values[identity].iter().zip(&id_ranges).map(|(&v, r)| perturb(v, r, j.identity)).collect();
                let ev: Vec<f64> =
                    em_values[emotion].iter().zip(&em_ranges).map(|(&v, r)| perturb(v, r, j.emotion)).collect();
                let (tx, ty) = if j.translation == 0.0 {
                    (0.0, 0.0)
                } else {
                    (rng.gen_range(-1.0..=1.0) * j.translation, rng.gen_range(-1.0..=1.0) * j.translation)
                };
                let face = Face {
                    cx: 0.5 + tx / size as f64,
                    cy: 0.5 + ty / size as f64,
                    half_width: iv[0],
                    half_height: iv[1],
                    eye_spacing: iv[2],
                    eye_height: iv[3],
                    nose_length: iv[4],
                    mouth_curvature: ev[0],
                    mouth_openness: ev[1].max(0.0),
                    eyebrow_angle: ev[2],
                };
                images.push(LabeledImage {
                    size,
                    pixels: face.render(size),
                    emotion,
                    identity,
                    group_id: index as u64,
                });
            }
        }
    }
    Ok(images)
}
