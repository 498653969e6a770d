//! Image/mask ingestion and the synthetic training set.

mod pnm;
mod resize;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pgm, write_pnm};
pub use resize::{resize_bilinear, resize_mask};
pub use synth::{synth_dataset, synth_dataset_split};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// RGB image `[3, H, W]` in `[0, 1]` with its binary mask `[1, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Tensor,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub id: String,
}

/// Tab-separated `image<TAB>mask<TAB>id` lines; `#` starts a comment line.
/// Relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [image, mask, id] = fields[..] else {
            return Err(Error::Input(format!(
                "manifest line {}: expected 3 tab-separated fields, found {}",
                lineno + 1,
                fields.len()
            )));
        };
        if !seen.insert(id.to_owned()) {
            return Err(Error::Input(format!("manifest line {}: duplicate id `{id}`", lineno + 1)));
        }
        out.push(ManifestEntry {
            image: base.join(image),
            mask: base.join(mask),
            id: id.to_owned(),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Load an image as RGB: grayscale files are replicated to three channels.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let t = read_pnm(path)?;
    if t.shape()[0] == 3 {
        return Ok(t);
    }
    let plane = t.data().to_vec();
    let (h, w) = (t.shape()[1], t.shape()[2]);
    Tensor::from_vec(&[3, h, w], plane.repeat(3))
}

/// Load a mask (first channel) binarized at 0.5.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Tensor> {
    let t = read_pnm(path)?;
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let first = t.data()[..h * w].iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec(&[1, h, w], first)
}

pub fn load_entry(entry: &ManifestEntry, target_size: usize) -> Result<Sample> {
    let with_id = |e: Error| Error::Input(format!("sample `{}`: {e}", entry.id));
    let image = read_rgb(&entry.image).map_err(with_id)?;
    let mask = read_mask(&entry.mask).map_err(with_id)?;
    if image.shape()[1..] != mask.shape()[1..] {
        return Err(Error::Input(format!(
            "sample `{}`: image is {:?} but mask is {:?}",
            entry.id,
            &image.shape()[1..],
            &mask.shape()[1..]
        )));
    }
    Ok(Sample {
        image: resize_bilinear(&image, target_size, target_size)?,
        mask: resize_mask(&mask, target_size, target_size)?,
        id: entry.id.clone(),
    })
}

/// Every manifest sample resized to `target_size × target_size`.
pub fn load_manifest(path: impl AsRef<Path>, target_size: usize) -> Result<Vec<Sample>> {
    read_manifest(path)?
        .iter()
        .map(|e| load_entry(e, target_size))
        .collect()
}
