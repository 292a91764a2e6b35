//! Deep ensembles: several identically shaped networks trained from different
//! random initialisations, whose mean prediction is the surrogate.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ScaledData;
use crate::error::{Error, Result};
use crate::io;
use crate::neural::{self, Architecture, LayerRecord, Network, TrainConfig, MODEL_VERSION};
use crate::oracle::{Predictor, OUTPUT_DIM};
use crate::space::Scaler;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub architecture: Architecture,
    pub scaler: Scaler,
    pub members: Vec<Network>,
}

/// Ensemble output for one scaled input: member mean and per-output sample
/// standard deviation across members (zero for a single member).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
}

impl EnsembleModel {
    pub fn new(architecture: Architecture, scaler: Scaler, members: Vec<Network>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("ensemble members"));
        }
        if let Some(m) = members.iter().find(|m| m.architecture() != architecture) {
            return Err(Error::Config(format!(
                "member architecture {} differs from ensemble architecture {architecture}",
                m.architecture()
            )));
        }
        if scaler.inputs.len() != architecture.input_dim || scaler.outputs.len() != architecture.output_dim {
            return Err(Error::Shape {
                context: "ensemble scaler",
                expected: architecture.input_dim + architecture.output_dim,
                found: scaler.inputs.len() + scaler.outputs.len(),
            });
        }
        Ok(EnsembleModel {
            architecture,
            scaler,
            members,
        })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Prediction for an input already scaled with [`Self::scaler`].
    pub fn predict_scaled(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.scaler.inputs.len() {
            return Err(Error::Shape {
                context: "ensemble input (scaler)",
                expected: self.scaler.inputs.len(),
                found: x.len(),
            });
        }
        let outputs = self
            .members
            .iter()
            .map(|m| m.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let m = outputs.len() as f64;
        let dim = self.architecture.output_dim;
        let mean: Vec<f64> = (0..dim)
            .map(|j| outputs.iter().map(|o| o[j]).sum::<f64>() / m)
            .collect();
        let spread = (0..dim)
            .map(|j| {
                if outputs.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = outputs.iter().map(|o| (o[j] - mean[j]).powi(2)).sum();
                (ss / (m - 1.0)).sqrt()
            })
            .collect();
        Ok(Prediction { mean, spread })
    }

    /// Mean prediction for every row of a scaled batch.
    pub fn predict_batch_scaled(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut sum = self.members[0].forward_batch(x);
        for m in &self.members[1..] {
            sum += &m.forward_batch(x);
        }
        sum / self.members.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(
            path,
            &EnsembleFile {
                version: MODEL_VERSION,
                architecture: self.architecture.clone(),
                scaler: self.scaler.clone(),
                members: self
                    .members
                    .iter()
                    .map(|m| MemberRecord {
                        layers: neural::layers_to_records(m),
                    })
                    .collect(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: EnsembleFile = io::read_json(path)?;
        if file.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported model version {}",
                path.display(),
                file.version
            )));
        }
        let members = file
            .members
            .iter()
            .map(|m| neural::records_to_network(&m.layers, &file.architecture))
            .collect::<Result<Vec<_>>>()?;
        EnsembleModel::new(file.architecture, file.scaler, members)
    }
}

impl Predictor for EnsembleModel {
    /// Physical inputs in, physical outputs out.
    fn predict(&self, x: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
        if x.len() != self.scaler.inputs.len() {
            return Err(Error::Shape {
                context: "ensemble input",
                expected: self.scaler.inputs.len(),
                found: x.len(),
            });
        }
        let p = self.predict_scaled(&self.scaler.scale_x(x))?;
        let y = self.scaler.unscale_y(&p.mean);
        let mut out = [0.0; OUTPUT_DIM];
        if y.len() != OUTPUT_DIM {
            return Err(Error::Shape {
                context: "ensemble output",
                expected: OUTPUT_DIM,
                found: y.len(),
            });
        }
        out.copy_from_slice(&y);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemberRecord {
    layers: Vec<LayerRecord>,
}

/// Ensemble model file: the single-network layout with one layer list per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleFile {
    version: u32,
    architecture: Architecture,
    scaler: Scaler,
    members: Vec<MemberRecord>,
}

/// Trains `members` networks on the same data; member `m` uses seed
/// `base_seed + m`. Members train independently and in parallel.
pub fn train_ensemble(
    arch: &Architecture,
    data: &ScaledData,
    scaler: &Scaler,
    members: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<EnsembleModel> {
    if members == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    let nets = (0..members as u64)
        .into_par_iter()
        .map(|m| {
            let cfg = TrainConfig {
                seed: base_seed.wrapping_add(m),
                ..*config
            };
            neural::train(arch, data, &cfg).map(|t| t.net)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(arch.clone(), scaler.clone(), nets)
}

/// Coefficient of determination per output, `1 - SS_res / SS_tot`.
/// `None` marks an output whose target is constant (undefined R²).
pub fn r_squared(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Vec<Option<f64>>> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape {
            context: "r-squared operands",
            expected: target.len(),
            found: pred.len(),
        });
    }
    if target.nrows() < 2 {
        return Err(Error::Empty("r-squared needs at least two samples"));
    }
    Ok(pred
        .columns()
        .into_iter()
        .zip(target.columns())
        .map(|(p, t)| {
            let mean = t.sum() / t.len() as f64;
            let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
            (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
        })
        .collect())
}
