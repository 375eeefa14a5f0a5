use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, TrainConfig};
use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_features: usize,
    pub n_concepts: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serialized training state. Parameter names are prefixed by the model
/// part they belong to (`encoder.`, `dcr.`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub params: BTreeMap<String, ParamRecord>,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, dims: ModelDims) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            dims,
            params: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn store<T: Scalar>(&mut self, params: &ParamSet<T>) -> Result<()> {
        if !params.all_finite() {
            return Err(Error::Numeric("refusing to store non-finite parameters".into()));
        }
        for p in params.iter() {
            self.params.insert(
                p.name.clone(),
                ParamRecord {
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                },
            );
        }
        Ok(())
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.params.keys().any(|k| k.starts_with(prefix))
    }

    /// Overwrites every parameter of `params`; all of them must be present.
    pub fn restore<T: Scalar>(&self, params: &mut ParamSet<T>) -> Result<()> {
        let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
        let mut staged = Vec::with_capacity(names.len());
        for name in &names {
            let rec = self
                .params
                .get(name)
                .ok_or_else(|| Error::contract(format!("checkpoint lacks parameter {name}")))?;
            let expected = &params.by_name(name).expect("name taken from the set").shape;
            if &rec.shape != expected || rec.values.len() != rec.shape.iter().product::<usize>() {
                return Err(Error::shape(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {expected:?}",
                    rec.shape
                )));
            }
            staged.push(rec.values.iter().map(|&v| T::lit(v)).collect::<Vec<T>>());
        }
        for (name, values) in names.iter().zip(staged) {
            let shape = params.by_name(name).expect("checked above").shape.clone();
            params.load_values(name, &shape, values)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Parse("checkpoint has no version field".into()))?;
        if found != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(raw)?;
        ckpt.config.validate()?;
        for (name, rec) in &ckpt.params {
            if rec.values.len() != rec.shape.iter().product::<usize>() {
                return Err(Error::shape(format!("parameter {name}: {} values for shape {:?}", rec.values.len(), rec.shape)));
            }
        }
        Ok(ckpt)
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(e)
    })
}
