//! JSON run configuration. Defaults reproduce the ideal-gas setting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{DpdGasSpec, Forcing};
use crate::dpd::DpdParams;
use crate::error::{Error, Result};
use crate::geometry::BoundaryMode;
use crate::nn::Architecture;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    #[default]
    None,
    TaylorGreen,
    Shear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n: usize,
    pub length: f64,
    pub h: f64,
    pub dt: f64,
    pub boundary: BoundaryMode,
    pub shear_rate: f64,
    pub forcing: ForcingKind,
    pub taylor_green_amplitude: f64,
    /// Ground-truth DPD parameters of `generate`.
    pub dpd: DpdParams,
    pub equilibration_steps: usize,
    pub n_snapshots: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 500,
            length: 1.0,
            h: 0.2,
            dt: 5e-4,
            boundary: BoundaryMode::Periodic,
            shear_rate: 0.0,
            forcing: ForcingKind::None,
            taylor_green_amplitude: 1.0,
            dpd: DpdParams::default(),
            equilibration_steps: 1000,
            n_snapshots: 300,
            stride: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub solid: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            width: 50,
            hidden_layers: 2,
            solid: false,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Leading snapshots used for training and validation.
    pub n_train: usize,
    /// Rollout length of `simulate`.
    pub n_extrap: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub split: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n_train: 300,
            n_extrap: 7500,
            learning_rate: 1e-2,
            epochs: 5000,
            batch: 1,
            split: 0.75,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub max_lag: usize,
    pub rdf_bins: usize,
    /// Defaults to the cutoff radius.
    pub rdf_r_max: Option<f64>,
    pub profile_bins: usize,
    pub origin_stride: usize,
    /// Frame separation of the D²min field; skipped when null.
    pub d2min_lag: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            max_lag: 100,
            rdf_bins: 200,
            rdf_r_max: None,
            profile_bins: 20,
            origin_stride: 1,
            d2min_lag: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: PathBuf,
    pub model: PathBuf,
    pub rollout: PathBuf,
    pub log: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data: "data.dump".into(),
            model: "model.json".into(),
            rollout: "rollout.dump".into(),
            log: "train_log.csv".into(),
            output_dir: "analysis".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub analysis: AnalysisConfig,
    pub paths: PathsConfig,
}

/// JSON schema of [`RunConfig`].
pub const SCHEMA: &str = include_str!("config.schema.json");

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    /// Parse and validate. Errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let msg = e.into_inner().to_string();
            bad(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        let pos = |key: &str, x: f64| if x > 0.0 && x.is_finite() { Ok(()) } else { Err(bad(key, format!("must be positive, got {x}"))) };
        if d.n == 0 {
            return Err(bad("dataset.n", "must be positive"));
        }
        pos("dataset.length", d.length)?;
        pos("dataset.h", d.h)?;
        pos("dataset.dt", d.dt)?;
        if d.boundary != BoundaryMode::Open && d.h > 0.5 * d.length {
            return Err(bad("dataset.h", format!("cutoff {} exceeds half the box length", d.h)));
        }
        if d.boundary != BoundaryMode::LeesEdwards && d.shear_rate != 0.0 {
            return Err(bad("dataset.shear_rate", "only Lees-Edwards boxes can be sheared"));
        }
        if (d.forcing == ForcingKind::Shear) != (d.boundary == BoundaryMode::LeesEdwards) {
            return Err(bad("dataset.boundary", "shear forcing and Lees-Edwards boundaries go together"));
        }
        if d.boundary == BoundaryMode::Open {
            return Err(bad("dataset.boundary", "the generator needs a periodic box"));
        }
        d.dpd.validate().map_err(|e| bad("dataset.dpd", e.to_string()))?;
        if d.n_snapshots < 2 {
            return Err(bad("dataset.n_snapshots", "need at least two snapshots"));
        }
        if d.stride == 0 {
            return Err(bad("dataset.stride", "must be positive"));
        }
        let m = &self.model;
        if m.dim != 2 && m.dim != 3 {
            return Err(bad("model.dim", format!("must be 2 or 3, got {}", m.dim)));
        }
        if m.width == 0 {
            return Err(bad("model.width", "must be positive"));
        }
        if m.hidden_layers == 0 {
            return Err(bad("model.hidden_layers", "must be positive"));
        }
        let t = &self.training;
        if t.n_train < 2 {
            return Err(bad("training.n_train", "need at least two snapshots"));
        }
        pos("training.learning_rate", t.learning_rate)?;
        if t.batch == 0 {
            return Err(bad("training.batch", "must be positive"));
        }
        if !(t.split > 0.0 && t.split <= 1.0) {
            return Err(bad("training.split", format!("must lie in (0, 1], got {}", t.split)));
        }
        let a = &self.analysis;
        if a.rdf_bins == 0 {
            return Err(bad("analysis.rdf_bins", "must be positive"));
        }
        if a.profile_bins == 0 {
            return Err(bad("analysis.profile_bins", "must be positive"));
        }
        if a.origin_stride == 0 {
            return Err(bad("analysis.origin_stride", "must be positive"));
        }
        if let Some(r) = a.rdf_r_max {
            pos("analysis.rdf_r_max", r)?;
            if r > 0.5 * d.length {
                return Err(bad("analysis.rdf_r_max", "exceeds half the box length"));
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            dim: self.model.dim,
            solid: self.model.solid,
            cutoff: self.dataset.h,
            width: self.model.width,
            hidden_layers: self.model.hidden_layers,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch: t.batch,
            split: t.split,
            seed: t.seed,
        }
    }

    pub fn gas_spec(&self) -> DpdGasSpec {
        let d = &self.dataset;
        DpdGasSpec {
            n: d.n,
            dim: self.model.dim,
            length: d.length,
            h: d.h,
            dt: d.dt,
            params: d.dpd,
            forcing: match d.forcing {
                ForcingKind::None => Forcing::None,
                ForcingKind::TaylorGreen => Forcing::TaylorGreen {
                    amplitude: d.taylor_green_amplitude,
                },
                ForcingKind::Shear => Forcing::Shear { rate: d.shear_rate },
            },
            equilibration_steps: d.equilibration_steps,
            n_snapshots: d.n_snapshots,
            stride: d.stride,
            seed: d.seed,
        }
    }
}
