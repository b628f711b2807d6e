//! Run configuration: one TOML file, versioned, every field defaulted so an
//! empty config runs the smoke demo. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{ErasingParams, Filter};
use crate::error::{Error, Result};
use crate::sim::{SimConfig, TeacherProfile};
use crate::synthetic::SyntheticSpec;

pub const CONFIG_VERSION: u32 = 1;

/// Detector preset selecting the pseudo-label confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorPreset {
    /// Cross-entropy classification loss (two-stage and cascade detectors).
    CeLoss,
    /// Focal classification loss (most one-stage and query detectors).
    Focal,
    /// Centerness-scaled focal loss scores run lower still.
    Fcos,
}

impl DetectorPreset {
    pub fn threshold(self) -> f64 {
        match self {
            DetectorPreset::CeLoss => 0.7,
            DetectorPreset::Focal => 0.4,
            DetectorPreset::Fcos => 0.3,
        }
    }

    /// Teacher profile matching the preset's score regime.
    pub fn profile(self) -> TeacherProfile {
        match self {
            DetectorPreset::CeLoss => TeacherProfile::faster_rcnn(),
            DetectorPreset::Focal | DetectorPreset::Fcos => TeacherProfile::retinanet(),
        }
    }
}

impl std::str::FromStr for DetectorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce-loss" => Ok(DetectorPreset::CeLoss),
            "focal" => Ok(DetectorPreset::Focal),
            "fcos" => Ok(DetectorPreset::Fcos),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected ce-loss, focal, or fcos)"
            ))),
        }
    }
}

/// Where the dataset comes from: an annotation file or the procedural
/// generator.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// COCO annotation document; when unset, the synthetic spec is used.
    pub annotations: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

/// The full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub version: u32,
    pub dataset: DatasetConfig,
    pub split_fraction: f64,
    pub seed: u64,
    pub preset: DetectorPreset,
    /// Explicit threshold override; presets fill it when unset.
    pub threshold: Option<f64>,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub w_u: f64,
    pub mixup_alpha: f64,
    pub mosaic_range: (u32, u32),
    pub resample_power: f64,
    pub iterations: u64,
    pub resize_short: (u32, u32),
    pub resize_long_cap: u32,
    pub flip_prob: f64,
    pub erasing: ErasingParams,
    pub filter: Filter,
    pub cache_window: usize,
    pub ema_momentum: f64,
    pub teacher: Option<TeacherProfile>,
    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            version: CONFIG_VERSION,
            dataset: DatasetConfig::default(),
            split_fraction: 0.1,
            seed: 0,
            preset: DetectorPreset::CeLoss,
            threshold: None,
            batch_labeled: 1,
            batch_unlabeled: 4,
            w_u: 2.0,
            mixup_alpha: 0.5,
            mosaic_range: (400, 800),
            resample_power: 0.5,
            iterations: 50,
            resize_short: (400, 1200),
            resize_long_cap: 1333,
            flip_prob: 0.5,
            erasing: ErasingParams::default(),
            filter: Filter::Bilinear,
            cache_window: 1,
            ema_momentum: 0.999,
            teacher: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| self.preset.threshold())
    }

    pub fn teacher_profile(&self) -> TeacherProfile {
        self.teacher.clone().unwrap_or_else(|| self.preset.profile())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            batch_labeled: self.batch_labeled,
            batch_unlabeled: self.batch_unlabeled,
            threshold: self.threshold(),
            w_u: self.w_u,
            mixup_alpha: self.mixup_alpha,
            mosaic_range: self.mosaic_range,
            resample_power: self.resample_power,
            iterations: self.iterations,
            seed: self.seed,
            resize_short: self.resize_short,
            resize_long_cap: self.resize_long_cap,
            flip_prob: self.flip_prob,
            erasing: self.erasing,
            filter: self.filter,
            cache_window: self.cache_window,
            ema_momentum: self.ema_momentum,
        }
    }

    /// Load the configured dataset (annotation file or synthetic).
    pub fn load_dataset(&self) -> Result<crate::DatasetIndex> {
        match &self.dataset.annotations {
            Some(path) => crate::coco::load_dataset(path),
            None => {
                let mut spec = self.dataset.synthetic.clone();
                spec.seed = spec.seed.wrapping_add(self.seed);
                spec.generate()
            }
        }
    }
}
