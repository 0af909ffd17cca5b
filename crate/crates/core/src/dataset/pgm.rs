//! Dataset directory layout: `images/*.pgm` (binary P5, maxval 255) plus a
//! `manifest.csv` with columns `filename,identity,emotion,group_id`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledImage};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
const IMAGES_DIR: &str = "images";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    filename: String,
    identity: usize,
    emotion: usize,
    group_id: u64,
}

/// Encodes `pixels` (row-major, in `[0, 1]`) as binary PGM.
pub fn write_pgm(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Decodes a binary PGM into `(width, height, pixels in [0, 1])`.
pub fn read_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |line: usize, msg: String| Error::Format { path: path.into(), line, msg };
    // Header: magic, width, height, maxval, separated by whitespace; '#' starts a comment.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    let mut line = 1;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                if bytes[pos] == b'\n' {
                    line += 1;
                }
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(line, "truncated PGM header".into()));
        }
        fields.push((std::str::from_utf8(&bytes[start..pos]).unwrap_or("?").to_string(), line));
    }
    if fields[0].0 != "P5" {
        return Err(bad(fields[0].1, format!("expected magic P5, found {}", fields[0].0)));
    }
    let num = |i: usize| -> Result<usize> {
        fields[i].0.parse().map_err(|_| bad(fields[i].1, format!("bad header number {:?}", fields[i].0)))
    };
    let (width, height, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(bad(fields[3].1, format!("only maxval 255 is supported, found {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(bad(line, format!("expected {} raster bytes, found {}", width * height, raster.len())));
    }
    Ok((width, height, raster.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// Writes every image plus the manifest under `dir`.
pub fn save_dataset(images: &[LabeledImage], dir: &Path) -> Result<()> {
    let img_dir = dir.join(IMAGES_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&manifest_path)
        .map_err(|e| csv_error(&manifest_path, e))?;
    for (i, img) in images.iter().enumerate() {
        let filename = format!("img_{i:05}.pgm");
        let path = img_dir.join(&filename);
        fs::write(&path, write_pgm(img.size, img.size, &img.pixels)).map_err(|e| Error::io(&path, e))?;
        writer
            .serialize(ManifestRow { filename, identity: img.identity, emotion: img.emotion, group_id: img.group_id })
            .map_err(|e| csv_error(&manifest_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))
}

/// Loads a dataset, inferring class counts as `max label + 1`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let images = load_images(dir)?;
    let num_identities = images.iter().map(|i| i.identity).max().unwrap_or(0) + 1;
    let num_emotions = images.iter().map(|i| i.emotion).max().unwrap_or(0) + 1;
    Dataset::new(images, num_emotions, num_identities)
}

/// Loads a dataset and rejects any label outside the given class counts.
pub fn load_dataset_with_classes(dir: &Path, num_emotions: usize, num_identities: usize) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let images = load_images(dir)?;
    for (row, img) in images.iter().enumerate() {
        if img.identity >= num_identities || img.emotion >= num_emotions {
            return Err(Error::Format {
                path: manifest_path,
                line: row + 2,
                msg: format!(
                    "label out of range: identity {} (< {num_identities}), emotion {} (< {num_emotions})",
                    img.identity, img.emotion
                ),
            });
        }
    }
    Dataset::new(images, num_emotions, num_identities)
}

fn load_images(dir: &Path) -> Result<Vec<LabeledImage>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut reader = csv::Reader::from_path(&manifest_path).map_err(|e| csv_error(&manifest_path, e))?;
    let mut images = Vec::new();
    for record in reader.deserialize::<ManifestRow>() {
        let row = record.map_err(|e| csv_error(&manifest_path, e))?;
        let path = dir.join(IMAGES_DIR).join(&row.filename);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (w, h, pixels) = read_pgm(&bytes, &path)?;
        if w != h {
            return Err(Error::Format { path, line: 2, msg: format!("images must be square, got {w}×{h}") });
        }
        images.push(LabeledImage { size: w, pixels, emotion: row.emotion, identity: row.identity, group_id: row.group_id });
    }
    if images.is_empty() {
        return Err(Error::Empty("dataset manifest"));
    }
    Ok(images)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Format { path: path.into(), line, msg: e.to_string() }
}
