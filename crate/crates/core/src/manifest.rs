//! Block manifest: a JSON index of per-`M` Matrix Market files for `J^2` and
//! the Hamiltonian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mm::{self, MmError};
use crate::spin::{BlockedOperator, HalfInt};

pub const MANIFEST_SCHEMA: &str = "nucsolve.manifest/1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported manifest schema '{0}'")]
    Schema(String),
    #[error("block {label}: {source}")]
    Matrix { label: String, source: MmError },
    #[error("block {label}: {msg}")]
    Inconsistent { label: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    /// Twice the projection `M`.
    pub two_m: i32,
    pub dim: usize,
    /// Matrix Market file of the `J^2` block, relative to the manifest.
    pub jsq: String,
    /// Matrix Market file of the Hamiltonian block, relative to the manifest.
    pub hamiltonian: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockManifest {
    pub schema: String,
    pub blocks: Vec<ManifestEntry>,
}

impl BlockManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(ManifestError::Schema(manifest.schema));
        }
        Ok(manifest)
    }

    /// Reads every referenced block; returns `(J^2, H)`.
    pub fn read_operators(&self, base: &Path) -> Result<(BlockedOperator, BlockedOperator), ManifestError> {
        let mut jsq = Vec::new();
        let mut ham = Vec::new();
        for e in &self.blocks {
            let read = |file: &str| {
                mm::read_symmetric_file(&base.join(file), &e.label)
                    .map_err(|source| ManifestError::Matrix { label: e.label.clone(), source })
            };
            let j = read(&e.jsq)?;
            let h = read(&e.hamiltonian)?;
            if j.dim() != e.dim || h.dim() != e.dim {
                return Err(ManifestError::Inconsistent {
                    label: e.label.clone(),
                    msg: format!("declared dim {}, files have {} and {}", e.dim, j.dim(), h.dim()),
                });
            }
            let m = HalfInt::from_twice(e.two_m);
            jsq.push((m, j));
            ham.push((m, h));
        }
        let order_err = || ManifestError::Inconsistent {
            label: "manifest".into(),
            msg: "blocks must be listed with strictly increasing M".into(),
        };
        Ok((BlockedOperator::new(jsq).ok_or_else(order_err)?, BlockedOperator::new(ham).ok_or_else(order_err)?))
    }

    /// Writes both operators as Matrix Market files plus `manifest.json` into
    /// `dir`, returning the manifest.
    pub fn export(dir: &Path, jsq: &BlockedOperator, ham: &BlockedOperator) -> Result<Self, ManifestError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ManifestError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut blocks = Vec::new();
        for ((m, j), (m2, h)) in jsq.blocks().iter().zip(ham.blocks()) {
            let label = j.label().to_string();
            if m != m2 || j.dim() != h.dim() {
                return Err(ManifestError::Inconsistent { label, msg: "J^2 and H block structures differ".into() });
            }
            let jsq_file = format!("jsq_m{}.mtx", m.twice());
            let h_file = format!("h_m{}.mtx", m.twice());
            for (block, file) in [(j, &jsq_file), (h, &h_file)] {
                mm::write_symmetric_file(block, &dir.join(file))
                    .map_err(|source| ManifestError::Matrix { label: label.clone(), source })?;
            }
            blocks.push(ManifestEntry { label, two_m: m.twice(), dim: j.dim(), jsq: jsq_file, hamiltonian: h_file });
        }
        let manifest = Self { schema: MANIFEST_SCHEMA.to_string(), blocks };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    }
}
