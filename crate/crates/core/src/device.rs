//! Statistical RRAM device models.
//!
//! Two device regimes are modeled. The high-resistive state (HRS) is highly
//! variable and follows a log-normal law; paired with a capacitor it provides
//! a fixed synaptic delay through the RC product. The low-resistive state
//! (LRS) is controllable into a small set of discrete levels; programming a
//! level yields a Gaussian draw around the level mean, clamped to the LRS
//! window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Default HRS median, chosen so that median x 100 fF gives a 40 ms delay.
pub const DEFAULT_HRS_MEDIAN_OHM: f64 = 400e9;
/// Default log-space spread of the HRS law.
pub const DEFAULT_HRS_SIGMA_LOG: f64 = 0.5;
/// Default delay capacitance.
pub const DEFAULT_CAPACITANCE_F: f64 = 100e-15;
/// LRS window lower bound.
pub const DEFAULT_LRS_MIN_OHM: f64 = 7_000.0;
/// LRS window upper bound.
pub const DEFAULT_LRS_MAX_OHM: f64 = 50_000.0;
/// Default number of programmable LRS levels (3 bits).
pub const DEFAULT_LRS_LEVELS: usize = 8;
/// Default programming-noise sigma as a fraction of the level mean.
pub const DEFAULT_LRS_SIGMA_FRACTION: f64 = 0.03;

/// Log-normal law for the RRAM high-resistive state.
///
/// `median_ohm` is the median of the resistance distribution (equivalently
/// `exp` of the log-space mean), `sigma_log` the standard deviation of the
/// natural log of resistance. The `label` records intent only, e.g. a nominal
/// reset voltage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HrsDistribution {
    median_ohm: f64,
    sigma_log: f64,
    #[serde(default)]
    label: String,
}

impl HrsDistribution {
    pub fn new(median_ohm: f64, sigma_log: f64, label: impl Into<String>) -> Result<Self> {
        if !(median_ohm > 0.0) {
            return Err(Error::Domain(format!(
                "HRS median must be > 0 ohm, got {median_ohm}"
            )));
        }
        if !(sigma_log >= 0.0) {
            return Err(Error::Domain(format!(
                "HRS sigma_log must be >= 0, got {sigma_log}"
            )));
        }
        Ok(HrsDistribution {
            median_ohm,
            sigma_log,
            label: label.into(),
        })
    }

    pub fn median_ohm(&self) -> f64 {
        self.median_ohm
    }

    pub fn sigma_log(&self) -> f64 {
        self.sigma_log
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same law with a different median, keeping spread and label.
    pub fn with_median(&self, median_ohm: f64) -> Result<Self> {
        HrsDistribution::new(median_ohm, self.sigma_log, self.label.clone())
    }
}

impl Default for HrsDistribution {
    fn default() -> Self {
        HrsDistribution::new(DEFAULT_HRS_MEDIAN_OHM, DEFAULT_HRS_SIGMA_LOG, "").unwrap()
    }
}

/// One draw from the HRS law: `exp(N(ln(median), sigma_log^2))`, strictly
/// positive by construction.
pub fn sample_hrs(dist: &HrsDistribution, rng: &mut SeededRng) -> f64 {
    if dist.sigma_log == 0.0 {
        return dist.median_ohm;
    }
    (dist.median_ohm.ln() + dist.sigma_log * rng.standard_normal()).exp()
}

/// One programmable LRS level: target mean and programming-noise sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrsLevel {
    pub mu_ohm: f64,
    pub sigma_ohm: f64,
}

/// Ordered table of discrete LRS levels together with the clamp window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrsLevelTable {
    levels: Vec<LrsLevel>,
    min_ohm: f64,
    max_ohm: f64,
}

impl LrsLevelTable {
    pub fn new(levels: Vec<LrsLevel>, min_ohm: f64, max_ohm: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("LRS level table must be non-empty".into()));
        }
        if !(min_ohm > 0.0 && max_ohm > min_ohm) {
            return Err(Error::Domain(format!(
                "invalid LRS window [{min_ohm}, {max_ohm}]"
            )));
        }
        for pair in levels.windows(2) {
            if pair[1].mu_ohm <= pair[0].mu_ohm {
                return Err(Error::Domain(
                    "LRS level means must be strictly increasing".into(),
                ));
            }
        }
        for level in &levels {
            if level.mu_ohm < min_ohm || level.mu_ohm > max_ohm {
                return Err(Error::Domain(format!(
                    "level mean {} outside LRS window [{min_ohm}, {max_ohm}]",
                    level.mu_ohm
                )));
            }
            if !(level.sigma_ohm >= 0.0) {
                return Err(Error::Domain("level sigma must be >= 0".into()));
            }
        }
        Ok(LrsLevelTable {
            levels,
            min_ohm,
            max_ohm,
        })
    }

    /// Default 8-level table: conductances (1/R) equally spaced between
    /// 1/50 kOhm and 1/7 kOhm, so weight steps are linear under a
    /// current-summing readout. Sigma is 3% of each level mean.
    pub fn default_table() -> Self {
        Self::conductance_spaced(
            DEFAULT_LRS_LEVELS,
            DEFAULT_LRS_MIN_OHM,
            DEFAULT_LRS_MAX_OHM,
            DEFAULT_LRS_SIGMA_FRACTION,
        )
        .unwrap()
    }

    /// `n` levels with equally spaced conductance between `1/max_ohm` and
    /// `1/min_ohm`, sigma a fixed fraction of each mean.
    pub fn conductance_spaced(
        n: usize,
        min_ohm: f64,
        max_ohm: f64,
        sigma_fraction: f64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain("need at least 2 levels".into()));
        }
        let g_lo = 1.0 / max_ohm;
        let g_hi = 1.0 / min_ohm;
        let mut levels = Vec::with_capacity(n);
        // Build resistance-ascending, i.e. conductance descending from g_hi.
        for k in 0..n {
            let g = g_hi - (g_hi - g_lo) * k as f64 / (n - 1) as f64;
            // 1/(1/R) round-trips with rounding error; snap into the window.
            let mu = (1.0 / g).clamp(min_ohm, max_ohm);
            levels.push(LrsLevel {
                mu_ohm: mu,
                sigma_ohm: sigma_fraction * mu,
            });
        }
        LrsLevelTable::new(levels, min_ohm, max_ohm)
    }

    pub fn levels(&self) -> &[LrsLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min_ohm(&self) -> f64 {
        self.min_ohm
    }

    pub fn max_ohm(&self) -> f64 {
        self.max_ohm
    }
}

impl Default for LrsLevelTable {
    fn default() -> Self {
        Self::default_table()
    }
}

/// RC delay element: a resistance sampled once from the HRS law, in series
/// with a fixed capacitor. Immutable after construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DelayElement {
    resistance_ohm: f64,
    capacitance_f: f64,
    delay_s: f64,
}

impl DelayElement {
    /// Sample a fresh element from `dist` at the given capacitance.
    pub fn sample(dist: &HrsDistribution, capacitance_f: f64, rng: &mut SeededRng) -> Result<Self> {
        let resistance_ohm = sample_hrs(dist, rng);
        Ok(DelayElement {
            resistance_ohm,
            capacitance_f,
            delay_s: delay_from_rc(resistance_ohm, capacitance_f)?,
        })
    }

    pub fn resistance_ohm(&self) -> f64 {
        self.resistance_ohm
    }

    pub fn capacitance_f(&self) -> f64 {
        self.capacitance_f
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }
}

/// RC product in seconds. Errors on non-positive inputs.
pub fn delay_from_rc(resistance_ohm: f64, capacitance_f: f64) -> Result<f64> {
    if !(resistance_ohm > 0.0) {
        return Err(Error::Domain(format!(
            "resistance must be > 0 ohm, got {resistance_ohm}"
        )));
    }
    if !(capacitance_f > 0.0) {
        return Err(Error::Domain(format!(
            "capacitance must be > 0 F, got {capacitance_f}"
        )));
    }
    Ok(resistance_ohm * capacitance_f)
}

/// Program the device to `level_index`: a Gaussian draw around the level
/// mean, clamped to the LRS window.
pub fn program_lrs(table: &LrsLevelTable, level_index: usize, rng: &mut SeededRng) -> Result<f64> {
    let level = table
        .levels
        .get(level_index)
        .ok_or(Error::Index {
            index: level_index,
            len: table.levels.len(),
        })?;
    let raw = rng.normal(level.mu_ohm, level.sigma_ohm);
    Ok(raw.clamp(table.min_ohm, table.max_ohm))
}

/// Index of the level mean closest to `resistance_ohm`; exact ties resolve
/// to the lower index.
pub fn nearest_level(table: &LrsLevelTable, resistance_ohm: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (k, level) in table.levels.iter().enumerate() {
        let d = (level.mu_ohm - resistance_ohm).abs();
        if d < best_dist {
            best_dist = d;
            best = k;
        }
    }
    best
}

/// Weight-storage cost in bits: `n_synapses * ceil(log2(n_levels))`.
pub fn footprint_bits(n_synapses: usize, n_levels: usize) -> Result<u64> {
    if n_synapses < 1 {
        return Err(Error::Domain("need at least one synapse".into()));
    }
    if n_levels < 2 {
        return Err(Error::Domain("need at least two levels".into()));
    }
    let bits_per_synapse = (usize::BITS - (n_levels - 1).leading_zeros()) as u64;
    Ok(n_synapses as u64 * bits_per_synapse)
}
