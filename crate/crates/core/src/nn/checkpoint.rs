use serde::{Deserialize, Serialize};

use super::param::{named, tensors_mut, Parameters};
use crate::error::{Error, Result};

pub const PARAM_CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Layer-qualified parameter names mapped to shape and values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamContainer {
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

impl ParamContainer {
    pub fn from_params<P: Parameters + ?Sized>(p: &P) -> Self {
        Self {
            version: PARAM_CONTAINER_VERSION,
            tensors: named(p)
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Copies values into `p`, which must already have the right layout.
    pub fn load_into<P: Parameters + ?Sized>(&self, p: &mut P) -> Result<()> {
        if self.version != PARAM_CONTAINER_VERSION {
            return Err(Error::validation(format!(
                "unsupported parameter container version {}",
                self.version
            )));
        }
        let names: Vec<(String, Vec<usize>)> = named(p)
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != self.tensors.len() {
            return Err(Error::integrity(format!(
                "container holds {} tensors, model expects {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, shape), stored) in names.iter().zip(&self.tensors) {
            if *name != stored.name || *shape != stored.shape || stored.values.len() != shape.iter().product::<usize>() {
                return Err(Error::integrity(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    stored.name, stored.shape
                )));
            }
        }
        for (t, stored) in tensors_mut(p).into_iter().zip(&self.tensors) {
            t.data_mut().copy_from_slice(&stored.values);
        }
        Ok(())
    }
}
