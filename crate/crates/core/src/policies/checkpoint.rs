use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Architecture, Policy, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "gkp-qec-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub noise_preset: String,
    #[serde(default)]
    pub n_fock: usize,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub learning_rate: f64,
    #[serde(default)]
    pub agent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
    #[serde(default)]
    pub created: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

/// Versioned JSON policy checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    architecture: Architecture,
    tensors: Vec<TensorRecord>,
    pub metadata: CheckpointMetadata,
}

impl Checkpoint {
    pub fn new(policy: &Policy, metadata: CheckpointMetadata) -> Self {
        let tensors = policy
            .tensors()
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                rows: t.value.nrows(),
                cols: t.value.ncols(),
                data: t.value.transpose().iter().copied().collect(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            architecture: policy.architecture(),
            tensors,
            metadata,
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "not a policy checkpoint (format {:?})",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}, expected {}",
                self.version, CHECKPOINT_VERSION
            )));
        }
        let tensors = self
            .tensors
            .iter()
            .map(|r| {
                if r.data.len() != r.rows * r.cols {
                    return Err(Error::Config(format!("tensor {} has inconsistent size", r.name)));
                }
                Ok(Tensor {
                    name: r.name.clone(),
                    value: DMatrix::from_row_slice(r.rows, r.cols, &r.data),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Policy::from_parts(self.architecture, tensors)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
