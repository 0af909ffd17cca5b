use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// Fill value for pixels that rotate in from outside the frame.
pub const ROTATION_FILL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotation angle is uniform in `±rotation_degrees`.
    pub rotation_degrees: f64,
    pub flip_probability: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
    /// Corpus size after expansion, originals included.
    pub target_size: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { rotation_degrees: 12.0, flip_probability: 0.5, noise_sigma: 0.03, target_size: 3000 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_degrees >= 0.0 && self.rotation_degrees.is_finite()) {
            return Err(Error::Config(format!("rotation range must be >= 0, got {}", self.rotation_degrees)));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!("flip probability must lie in [0, 1], got {}", self.flip_probability)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Rotates a square image about its center with bilinear sampling.
pub fn rotate(pixels: &[f64], size: usize, degrees: f64, fill: f64) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (size as f64 - 1.0) / 2.0;
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
            fill
        } else {
            pixels[y as usize * size + x as usize]
        }
    };
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // Inverse map: where does this output pixel come from?
            let sx = c + cos * dx + sin * dy;
            let sy = c - sin * dx + cos * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

pub fn flip_horizontal(pixels: &[f64], size: usize) -> Vec<f64> {
    pixels.chunks_exact(size).flat_map(|row| row.iter().rev().copied()).collect()
}

/// Random rotation, optional mirror, additive noise, then clamp to `[0, 1]`.
/// Labels and group id are copied unchanged.
pub fn augment(image: &LabeledImage, config: &AugmentConfig, rng: &mut impl Rng) -> LabeledImage {
    let size = image.size;
    let mut pixels = if config.rotation_degrees > 0.0 {
        let angle = rng.gen_range(-config.rotation_degrees..=config.rotation_degrees);
        rotate(&image.pixels, size, angle, ROTATION_FILL)
    } else {
        image.pixels.clone()
    };
    if config.flip_probability > 0.0 && rng.gen_bool(config.flip_probability) {
        pixels = flip_horizontal(&pixels, size);
    }
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
        pixels.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    LabeledImage { pixels, ..image.clone() }
}

/// Keeps the originals and appends augmented copies, cycling through the
/// originals, until `config.target_size` images exist.
pub fn expand_corpus(images: &[LabeledImage], config: &AugmentConfig, seed: u64) -> Result<Vec<LabeledImage>> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Empty("corpus to expand"));
    }
    if config.target_size < images.len() {
        return Err(Error::Config(format!(
            "target size {} is smaller than the {} input images",
            config.target_size,
            images.len()
        )));
    }
    let mut out = images.to_vec();
    out.reserve(config.target_size - images.len());
    for copy in 0..config.target_size - images.len() {
        let mut rng = rng_from(derive_seed(seed, &[&"augment", &copy]));
        out.push(augment(&images[copy % images.len()], config, &mut rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(size: usize) -> LabeledImage {
        LabeledImage {
            size,
            pixels: (0..size * size).map(|i| ((i * 37) % 101) as f64 / 100.0).collect(),
            emotion: 1,
            identity: 2,
            group_id: 9,
        }
    }

    #[test]
    fn identity_config_is_exact() {
        let cfg = AugmentConfig { rotation_degrees: 0.0, flip_probability: 0.0, noise_sigma: 0.0, target_size: 1 };
        let x = img(8);
        assert_eq!(augment(&x, &cfg, &mut rng_from(1)), x);
    }

    #[test]
    fn forced_flip_twice_is_identity() {
        let cfg = AugmentConfig { rotation_degrees: 0.0, flip_probability: 1.0, noise_sigma: 0.0, target_size: 1 };
        let x = img(7);
        let mut rng = rng_from(3);
        let once = augment(&x, &cfg, &mut rng);
        assert_ne!(once.pixels, x.pixels);
        assert_eq!(augment(&once, &cfg, &mut rng), x);
    }

    #[test]
    fn half_turn_of_symmetric_disk() {
        let size = 21;
        let c = (size as f64 - 1.0) / 2.0;
        let disk: Vec<f64> = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64 - c, (i / size) as f64 - c);
                if x * x + y * y <= 36.0 { 1.0 } else { 0.2 }
            })
            .collect();
        let turned = rotate(&disk, size, 180.0, ROTATION_FILL);
        for (a, b) in disk.iter().zip(&turned) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn expansion_counts_and_labels() {
        let base: Vec<LabeledImage> = (0..3).map(|g| LabeledImage { group_id: g, ..img(6) }).collect();
        let cfg = AugmentConfig { target_size: 10, ..Default::default() };
        let out = expand_corpus(&base, &cfg, 5).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(&out[..3], &base[..]);
        for (i, a) in out[3..].iter().enumerate() {
            assert_eq!(a.group_id, base[i % 3].group_id);
            assert_eq!((a.emotion, a.identity), (1, 2));
        }
        assert_eq!(out, expand_corpus(&base, &cfg, 5).unwrap());
    }

    #[test]
    fn expansion_to_same_size_is_identity() {
        let base = vec![img(4), img(4)];
        let cfg = AugmentConfig { target_size: 2, ..Default::default() };
        assert_eq!(expand_corpus(&base, &cfg, 0).unwrap(), base);
    }

    #[test]
    fn expansion_errors() {
        let cfg = AugmentConfig { target_size: 1, ..Default::default() };
        assert!(expand_corpus(&[], &cfg, 0).is_err());
        assert!(expand_corpus(&[img(4), img(4)], &cfg, 0).is_err());
    }
}
