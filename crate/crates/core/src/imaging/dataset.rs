use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gaussian_kernel, load_image, narrow_convolve, save_image, GaussianKernelSpec};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub source: String,
    /// Blurred file, relative to the manifest's directory.
    pub output: String,
    pub k: usize,
    pub sigma: f64,
    /// Size of the blurred output.
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "image", default)]
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Blurs every input with a Gaussian kernel and writes the results plus a
/// `manifest.toml` into `out_dir`. Outputs are 16-bit PGM files named after
/// the source stem.
pub fn generate_blurred_dataset(
    inputs: &[PathBuf],
    spec: GaussianKernelSpec,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if inputs.is_empty() {
        return Err(Error::param("no input images given"));
    }
    let kernel = gaussian_kernel(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records = inputs
        .par_iter()
        .map(|src| -> Result<ManifestRecord> {
            let img = load_image(src)?;
            let blurred = narrow_convolve(&img, &kernel)?;
            let stem = src
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::param(format!("bad file name {}", src.display())))?;
            let output = format!("{stem}.pgm");
            save_image(out_dir.join(&output), &blurred)?;
            Ok(ManifestRecord {
                source: src.display().to_string(),
                output,
                k: spec.k,
                sigma: spec.sigma,
                height: blurred.height(),
                width: blurred.width(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest { records };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
