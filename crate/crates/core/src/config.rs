//! Run configuration: a TOML file with `[data]`, `[model]` and `[train]`
//! sections. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::WindowConfig;
use crate::encoding::Ablation;
use crate::error::{Error, Result};
use crate::models::{CnnOptions, ModelKind, TrainConfig};
use crate::nn::{PoolKind, BN_MOMENTUM};
use crate::phonology::MutaCumLiquida;
use crate::scansion::ScanOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `label = path` manifest of the corpus.
    pub manifest: Option<PathBuf>,
    /// Artifact directory; `carmen-out` in the working directory when unset.
    pub output: Option<PathBuf>,
    pub ablation: String,
    pub window: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub ratios: [f64; 3],
    pub spondeiazon: bool,
    /// `heterosyllabic` or `tautosyllabic`.
    pub muta_cum_liquida: String,
}

impl Default for DataSection {
    fn default() -> Self {
        let w = WindowConfig::default();
        DataSection {
            manifest: None,
            output: None,
            ablation: "full".into(),
            window: w.window,
            train_stride: w.train_stride,
            eval_stride: w.eval_stride,
            ratios: w.ratios,
            spondeiazon: false,
            muta_cum_liquida: "heterosyllabic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: String,
    pub pooling: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "cnn".into(),
            pooling: "average".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Option<f64>,
    pub seed: u64,
    pub patience: usize,
    pub bn_momentum: f64,
    pub bn_recalibrate: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: None,
            seed: t.seed,
            patience: t.patience,
            bn_momentum: BN_MOMENTUM,
            bn_recalibrate: t.bn_recalibrate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

fn parse_mcl(s: &str) -> Result<MutaCumLiquida> {
    match s {
        "heterosyllabic" => Ok(MutaCumLiquida::Heterosyllabic),
        "tautosyllabic" => Ok(MutaCumLiquida::Tautosyllabic),
        other => Err(Error::Config(format!("unknown muta_cum_liquida {other:?}"))),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Parse a file and anchor its relative paths at the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.data.manifest.as_mut() {
            anchor(m);
        }
        if let Some(o) = cfg.data.output.as_mut() {
            anchor(o);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every enumerated field and numeric bound.
    pub fn validate(&self) -> Result<()> {
        self.ablation()?;
        self.kind()?;
        self.pooling()?;
        self.scan_options()?;
        if self.train.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.train.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.train.bn_momentum) {
            return Err(Error::Config("bn_momentum must lie in [0, 1)".into()));
        }
        if self.data.window == 0 || self.data.train_stride == 0 || self.data.eval_stride == 0 {
            return Err(Error::Config("window and strides must be positive".into()));
        }
        Ok(())
    }

    pub fn output(&self) -> PathBuf {
        self.data.output.clone().unwrap_or_else(|| PathBuf::from("carmen-out"))
    }

    pub fn manifest(&self) -> Result<&Path> {
        let m = self
            .data
            .manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus manifest (set data.manifest or --manifest)".into()))?;
        if !m.is_file() {
            return Err(Error::Config(format!("manifest {} does not exist", m.display())));
        }
        Ok(m)
    }

    pub fn ablation(&self) -> Result<Ablation> {
        self.data.ablation.parse()
    }

    pub fn kind(&self) -> Result<ModelKind> {
        self.model.kind.parse()
    }

    pub fn pooling(&self) -> Result<PoolKind> {
        self.model.pooling.parse()
    }

    pub fn cnn_options(&self) -> Result<CnnOptions> {
        Ok(CnnOptions {
            pooling: self.pooling()?,
            ..CnnOptions::default()
        })
    }

    pub fn scan_options(&self) -> Result<ScanOptions> {
        Ok(ScanOptions {
            spondeiazon: self.data.spondeiazon,
            muta_cum_liquida: parse_mcl(&self.data.muta_cum_liquida)?,
        })
    }

    pub fn windows(&self) -> WindowConfig {
        WindowConfig {
            window: self.data.window,
            train_stride: self.data.train_stride,
            eval_stride: self.data.eval_stride,
            ratios: self.data.ratios,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.train.seed,
            patience: self.train.patience,
            bn_momentum: self.train.bn_momentum,
            bn_recalibrate: self.train.bn_recalibrate,
        }
    }
}
