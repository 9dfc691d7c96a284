//! Declarative experiment configuration.
//!
//! The config file is TOML with strict parsing: unknown keys are rejected
//! and every field has a default, so an empty file is a valid experiment.
//! One global seed feeds named randomness streams (device, init, data,
//! shuffle).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{self, HrsDistribution, LrsLevel, LrsLevelTable};
use crate::encoding::SynthParams;
use crate::error::{Error, Result};
use crate::network::{SomaConfig, DEFAULT_BRANCH_TAUS_S};
use crate::trainer::TrainConfig;

/// Device section: HRS law, LRS level table, delay capacitance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub capacitance_f: f64,
    pub hrs: HrsSection,
    pub lrs: LrsSection,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            capacitance_f: device::DEFAULT_CAPACITANCE_F,
            hrs: HrsSection::default(),
            lrs: LrsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HrsSection {
    pub median_ohm: f64,
    pub sigma_log: f64,
    pub label: String,
}

impl Default for HrsSection {
    fn default() -> Self {
        HrsSection {
            median_ohm: device::DEFAULT_HRS_MEDIAN_OHM,
            sigma_log: device::DEFAULT_HRS_SIGMA_LOG,
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrsSection {
    pub min_ohm: f64,
    pub max_ohm: f64,
    /// Explicit level list; empty means the default conductance-spaced grid.
    pub levels: Vec<LrsLevel>,
    /// Level count for the default grid.
    pub n_levels: usize,
    /// Sigma as a fraction of each level mean, for the default grid.
    pub sigma_fraction: f64,
}

impl Default for LrsSection {
    fn default() -> Self {
        LrsSection {
            min_ohm: device::DEFAULT_LRS_MIN_OHM,
            max_ohm: device::DEFAULT_LRS_MAX_OHM,
            levels: Vec::new(),
            n_levels: device::DEFAULT_LRS_LEVELS,
            sigma_fraction: device::DEFAULT_LRS_SIGMA_FRACTION,
        }
    }
}

/// Encoding section: modulator, windowing and dataset source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingSection {
    pub threshold_mv: f64,
    pub dt_s: f64,
    pub window_s: f64,
    /// `synthetic` or `csv`.
    pub source: DataSource,
    /// Recording CSV path when `source = "csv"`.
    pub csv_recording: Option<PathBuf>,
    /// Annotation CSV path when `source = "csv"`.
    pub csv_annotations: Option<PathBuf>,
    pub n_train_beats: usize,
    pub n_test_beats: usize,
    pub class_mix: f64,
    pub synth: SynthParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

impl Default for EncodingSection {
    fn default() -> Self {
        EncodingSection {
            threshold_mv: crate::encoding::DEFAULT_THRESHOLD_MV,
            dt_s: crate::encoding::DEFAULT_DT_S,
            window_s: crate::encoding::DEFAULT_WINDOW_S,
            source: DataSource::Synthetic,
            csv_recording: None,
            csv_annotations: None,
            n_train_beats: 400,
            n_test_beats: 100,
            class_mix: 0.5,
            synth: SynthParams::default(),
        }
    }
}

/// Network section: topology and soma parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub n_branches: usize,
    pub synapses_per_branch: usize,
    pub channels: usize,
    pub tau_s: Vec<f64>,
    /// Per-branch HRS median overrides; empty means the device median for
    /// all branches.
    pub hrs_median_override: Vec<f64>,
    pub soma: SomaConfig,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            n_branches: 2,
            synapses_per_branch: 64,
            channels: 2,
            tau_s: DEFAULT_BRANCH_TAUS_S.to_vec(),
            hrs_median_override: Vec::new(),
            soma: SomaConfig::default(),
        }
    }
}

/// Sweep section: HRS median grid and repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub hrs_medians_ohm: Vec<f64>,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            hrs_medians_ohm: default_sweep_grid(),
            repetitions: 3,
        }
    }
}

/// Default 7-point log-spaced grid from 10 GOhm to 1 TOhm.
pub fn default_sweep_grid() -> Vec<f64> {
    (0..7)
        .map(|k| 10f64.powf(10.0 + k as f64 * 2.0 / 6.0))
        .collect()
}

/// Whole experiment config: one section per subsystem plus global seed and
/// output directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub device: DeviceSection,
    pub encoding: EncodingSection,
    pub network: NetworkSection,
    pub training: TrainConfig,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.hrs()?;
        self.lrs_table()?;
        if !(self.device.capacitance_f > 0.0) {
            return Err(Error::Config("capacitance must be > 0".into()));
        }
        if self.network.tau_s.len() != self.network.n_branches {
            return Err(Error::Config(format!(
                "need {} branch time constants, got {}",
                self.network.n_branches,
                self.network.tau_s.len()
            )));
        }
        if !self.network.hrs_median_override.is_empty()
            && self.network.hrs_median_override.len() != self.network.n_branches
        {
            return Err(Error::Config(
                "hrs_median_override must list one median per branch".into(),
            ));
        }
        if self.encoding.source == DataSource::Csv
            && (self.encoding.csv_recording.is_none() || self.encoding.csv_annotations.is_none())
        {
            return Err(Error::Config(
                "csv source requires csv_recording and csv_annotations paths".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.encoding.class_mix) {
            return Err(Error::Config("class_mix must be in [0, 1]".into()));
        }
        self.training.validate()?;
        Ok(())
    }

    /// HRS law from the device section.
    pub fn hrs(&self) -> Result<HrsDistribution> {
        HrsDistribution::new(
            self.device.hrs.median_ohm,
            self.device.hrs.sigma_log,
            self.device.hrs.label.clone(),
        )
    }

    /// One HRS law per branch, honoring per-branch median overrides.
    pub fn hrs_per_branch(&self) -> Result<Vec<HrsDistribution>> {
        let base = self.hrs()?;
        if self.network.hrs_median_override.is_empty() {
            return Ok(vec![base; self.network.n_branches]);
        }
        self.network
            .hrs_median_override
            .iter()
            .map(|&m| base.with_median(m))
            .collect()
    }

    /// LRS level table from the device section.
    pub fn lrs_table(&self) -> Result<LrsLevelTable> {
        if self.device.lrs.levels.is_empty() {
            LrsLevelTable::conductance_spaced(
                self.device.lrs.n_levels,
                self.device.lrs.min_ohm,
                self.device.lrs.max_ohm,
                self.device.lrs.sigma_fraction,
            )
        } else {
            LrsLevelTable::new(
                self.device.lrs.levels.clone(),
                self.device.lrs.min_ohm,
                self.device.lrs.max_ohm,
            )
        }
    }

    /// Copy of this config with every branch's HRS median replaced, as used
    /// by the delay sweep.
    pub fn with_hrs_median(&self, median_ohm: f64) -> Self {
        let mut config = self.clone();
        config.device.hrs.median_ohm = median_ohm;
        config.network.hrs_median_override.clear();
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid_defaults() {
        let config: ExperimentConfig = toml::from_str("").unwrap();
        config.validate().unwrap();
        assert_eq!(config.network.synapses_per_branch, 64);
        assert_eq!(config.sweep.hrs_medians_ohm.len(), 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<ExperimentConfig>("mystery_knob = 3\n");
        assert!(err.is_err());
        let err = toml::from_str::<ExperimentConfig>("[network]\nwidth = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn round_trip_identity() {
        let mut config = ExperimentConfig::default();
        config.seed = 99;
        config.network.synapses_per_branch = 32;
        let text = config.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        let again = back.to_toml().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn sweep_grid_brackets_the_working_point() {
        let grid = default_sweep_grid();
        assert_eq!(grid.len(), 7);
        assert!((grid[0] - 1e10).abs() < 1.0);
        assert!((grid[6] - 1e12).abs() < 1e3);
        // 400 GOhm (the 40 ms point) falls inside the grid.
        assert!(grid[0] < 4e11 && 4e11 < grid[6]);
    }

    #[test]
    fn tau_count_must_match_branches() {
        let mut config = ExperimentConfig::default();
        config.network.n_branches = 3;
        assert!(config.validate().is_err());
    }

    #[test]
    fn csv_source_requires_paths() {
        let mut config = ExperimentConfig::default();
        config.encoding.source = DataSource::Csv;
        assert!(config.validate().is_err());
    }
}
