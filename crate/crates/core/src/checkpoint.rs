//! Versioned JSON checkpoints and the inference wrapper built from them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelConfig, SurrogateModel};
use crate::preprocess::{make_windows, RowKey, RowScaler};
use crate::trace_io::{FeatureSchema, SampleRow};

pub const CHECKPOINT_FORMAT: &str = "gridsurrogate-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Windows per forward pass during inference.
const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub scaler: RowScaler,
    pub params: Vec<ParamRecord>,
    /// Free-form provenance (seeds, manifest hash, best epoch, ...).
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

/// A trained model plus the scaling and schema it was trained with.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: SurrogateModel,
    pub scaler: RowScaler,
    pub schema: FeatureSchema,
}

impl Surrogate {
    pub fn new(model: SurrogateModel, scaler: RowScaler, schema: FeatureSchema) -> Result<Self> {
        let cfg = model.config();
        if scaler.features.dim() != cfg.input_dim || scaler.targets.dim() != cfg.output_dim {
            return Err(Error::Checkpoint(format!(
                "scaler covers {} features / {} targets, model expects {} / {}",
                scaler.features.dim(),
                scaler.targets.dim(),
                cfg.input_dim,
                cfg.output_dim
            )));
        }
        if scaler.features.names.iter().map(String::as_str).ne(schema.feature_names().iter().copied()) {
            return Err(Error::Checkpoint(format!(
                "scaler features {:?} do not match the {} schema",
                scaler.features.names, schema.scenario
            )));
        }
        Ok(Self { model, scaler, schema })
    }

    pub fn to_checkpoint(&self, provenance: BTreeMap<String, String>) -> Checkpoint {
        let ps = self.model.params();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.model.config().clone(),
            schema: self.schema,
            scaler: self.scaler.clone(),
            params: ps
                .ids()
                .map(|id| {
                    let v = ps.value(id);
                    ParamRecord {
                        name: ps.name(id).to_owned(),
                        shape: [v.nrows(), v.ncols()],
                        data: v.iter().copied().collect(),
                    }
                })
                .collect(),
            provenance,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let values = ck
            .params
            .into_iter()
            .map(|p| {
                Array2::from_shape_vec((p.shape[0], p.shape[1]), p.data)
                    .map(|a| (p.name.clone(), a))
                    .map_err(|_| Error::Checkpoint(format!("parameter `{}` data does not fit its shape", p.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = SurrogateModel::from_parts(ck.config, values)?;
        Self::new(model, ck.scaler, ck.schema)
    }

    pub fn save(&self, path: &Path, provenance: BTreeMap<String, String>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint(provenance)).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        Self::from_checkpoint(ck)
    }

    /// Original-scale predictions for every row, keyed and ordered by
    /// (simulation_id, job_index). Row targets, if any, are ignored.
    pub fn predict(&self, rows: &[SampleRow]) -> Result<BTreeMap<RowKey, Vec<f64>>> {
        let inputs: Vec<SampleRow> = rows
            .iter()
            .map(|r| SampleRow {
                simulation_id: r.simulation_id,
                job_index: r.job_index,
                features: r.features.clone(),
                targets: Vec::new(),
            })
            .collect();
        let cfg = self.model.config();
        let mut batch = make_windows(&inputs, cfg.window_size, cfg.window_overlap)?;
        drop(inputs);
        for (mut lane, &real) in batch.windows.lanes_mut(Axis(2)).into_iter().zip(batch.mask.iter()) {
            if real {
                let row = lane.as_slice_mut().expect("windows are standard layout");
                self.scaler.features.transform_in_place(row)?;
            }
        }
        let mut out = BTreeMap::new();
        let idx: Vec<usize> = (0..batch.len()).collect();
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let part = batch.select(chunk);
            let pred = self.model.forward(&part.windows, &part.mask)?;
            // earliest window wins, as in `unwindow`
            let rows_out = pred.view().into_shape_with_order((part.provenance.len(), cfg.output_dim)).expect("contiguous");
            for (key, scaled) in part.provenance.iter().zip(rows_out.rows()) {
                if let Some(key) = key {
                    if let std::collections::btree_map::Entry::Vacant(slot) = out.entry(*key) {
                        slot.insert(self.scaler.targets.inverse_transform(scaled.as_slice().expect("contiguous"))?);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Predictions as a `[rows, observables]` matrix in key order.
pub fn prediction_matrix(pred: &BTreeMap<RowKey, Vec<f64>>) -> Array2<f64> {
    let cols = pred.values().next().map_or(0, Vec::len);
    let mut m = Array2::zeros((0, cols));
    for v in pred.values() {
        m.push(Axis(0), ndarray::ArrayView1::from(v)).expect("equal widths");
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use crate::preprocess::Standardizer;
    use crate::trace_io::TARGET_NAMES;
    use crate::workload::Scenario;

    fn surrogate() -> Surrogate {
        let schema = FeatureSchema::new(Scenario::Homogeneous);
        let names = schema.feature_names();
        let cfg = ModelConfig {
            architecture: Architecture::Bigru,
            hidden_size: 3,
            num_layers: 1,
            window_size: 4,
            window_overlap: 1,
            batch_size: 2,
            num_heads: 1,
            input_dim: names.len(),
            output_dim: TARGET_NAMES.len(),
            seed: 5,
        };
        let scaler = RowScaler {
            features: Standardizer {
                names: names.iter().map(|s| s.to_string()).collect(),
                means: vec![1.0; names.len()],
                stds: vec![2.0; names.len()],
            },
            targets: Standardizer {
                names: TARGET_NAMES.iter().map(|s| s.to_string()).collect(),
                means: vec![10.0; 5],
                stds: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            },
        };
        Surrogate::new(SurrogateModel::new(cfg).unwrap(), scaler, schema).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let s = surrogate();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        s.save(&path, BTreeMap::new()).unwrap();
        let back = Surrogate::load(&path).unwrap();
        let rows: Vec<SampleRow> = (0..9)
            .map(|i| SampleRow {
                simulation_id: 1 + i / 5,
                job_index: i % 5,
                features: vec![i as f64, 2.0, 3.0, 4.0],
                targets: Vec::new(),
            })
            .collect();
        let a = s.predict(&rows).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(a, back.predict(&rows).unwrap());
    }

    #[test]
    fn version_and_shape_are_checked() {
        let s = surrogate();
        let mut ck = s.to_checkpoint(BTreeMap::new());
        ck.version = 99;
        assert!(Surrogate::from_checkpoint(ck).is_err());
        let mut ck = s.to_checkpoint(BTreeMap::new());
        ck.params[0].data.pop();
        assert!(Surrogate::from_checkpoint(ck).is_err());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let s = surrogate();
        let mut ck = s.to_checkpoint(BTreeMap::new());
        ck.schema = FeatureSchema::new(Scenario::Heterogeneous);
        assert!(Surrogate::from_checkpoint(ck).is_err());
    }
}
