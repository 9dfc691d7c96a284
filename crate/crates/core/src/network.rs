//! Clocked forward simulation of the dendritic architecture.
//!
//! Input spikes enter per-synapse delay lines (ring buffers sized by the
//! RC delay of each synapse's delay element), are weighted, and feed a leaky
//! current integrator per branch, each with its own time constant. Branch
//! currents are summed into a LIF soma. Decay uses exact exponential factors
//! `exp(-dt/tau)`, so the linear filters are unconditionally stable.

use serde::{Deserialize, Serialize};

use crate::device::{sample_hrs, HrsDistribution};
use crate::encoding::{BeatLabel, SpikeRaster};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Default soma membrane time constant.
pub const DEFAULT_TAU_MEM_S: f64 = 0.02;
/// Default firing threshold.
pub const DEFAULT_V_THRESHOLD: f64 = 1.0;
/// Default reset potential.
pub const DEFAULT_V_RESET: f64 = 0.0;
/// Default branch time constants (the multiscale pair).
pub const DEFAULT_BRANCH_TAUS_S: [f64; 2] = [0.02, 0.1];

/// One synapse: fixed delay, trainable weight, fixed input channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynapseConfig {
    pub branch_index: usize,
    pub source_channel: usize,
    /// Delay quantized to simulation steps, `round(delay_s / dt_s)`.
    pub delay_steps: usize,
    /// Effective (dimensionless) weight, always nonnegative.
    pub weight: f64,
    /// Sampled HRS resistance of the delay element.
    pub resistance_ohm: f64,
    /// Continuous RC delay before step quantization.
    pub delay_s: f64,
}

/// One dendritic branch: a leaky current integrator over its synapses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchConfig {
    pub tau_s: f64,
    pub synapses: Vec<SynapseConfig>,
}

/// LIF soma parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SomaConfig {
    pub tau_mem_s: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
}

impl Default for SomaConfig {
    fn default() -> Self {
        SomaConfig {
            tau_mem_s: DEFAULT_TAU_MEM_S,
            v_threshold: DEFAULT_V_THRESHOLD,
            v_reset: DEFAULT_V_RESET,
        }
    }
}

impl SomaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau_mem_s > 0.0) {
            return Err(Error::Config("soma tau_mem must be > 0".into()));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::Config("v_threshold must exceed v_reset".into()));
        }
        Ok(())
    }
}

/// Immutable network topology and parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub dt_s: f64,
    pub channels: usize,
    pub branches: Vec<BranchConfig>,
    pub soma: SomaConfig,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if self.channels == 0 || self.branches.is_empty() {
            return Err(Error::Config("need at least one channel and branch".into()));
        }
        self.soma.validate()?;
        for (i, branch) in self.branches.iter().enumerate() {
            if !(branch.tau_s > 0.0) {
                return Err(Error::Config(format!("branch {i} tau must be > 0")));
            }
            for syn in &branch.synapses {
                if syn.branch_index != i {
                    return Err(Error::Config(format!(
                        "synapse branch_index {} in branch {i}",
                        syn.branch_index
                    )));
                }
                if syn.source_channel >= self.channels {
                    return Err(Error::Config(format!(
                        "source channel {} out of range",
                        syn.source_channel
                    )));
                }
                if !(syn.weight >= 0.0) {
                    return Err(Error::Config("weights must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_synapses(&self) -> usize {
        self.branches.iter().map(|b| b.synapses.len()).sum()
    }

    /// Per-branch current decay factors `exp(-dt/tau_i)`.
    pub fn branch_decays(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| (-self.dt_s / b.tau_s).exp())
            .collect()
    }

    /// Soma membrane decay factor `exp(-dt/tau_mem)`.
    pub fn soma_decay(&self) -> f64 {
        (-self.dt_s / self.soma.tau_mem_s).exp()
    }

    /// Flat view of all synapses in (branch, position) order.
    pub fn synapses(&self) -> impl Iterator<Item = &SynapseConfig> {
        self.branches.iter().flat_map(|b| b.synapses.iter())
    }

    /// Flat weight vector in (branch, position) order.
    pub fn weights(&self) -> Vec<f64> {
        self.synapses().map(|s| s.weight).collect()
    }

    /// Replace all weights from a flat vector in (branch, position) order.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_synapses() {
            return Err(Error::Config(format!(
                "expected {} weights, got {}",
                self.n_synapses(),
                weights.len()
            )));
        }
        let mut it = weights.iter();
        for branch in &mut self.branches {
            for syn in &mut branch.synapses {
                syn.weight = *it.next().unwrap();
            }
        }
        Ok(())
    }
}

/// Build a network: sample every synapse's delay element from the branch's
/// HRS law, assign source channels round-robin, initialize weights uniformly
/// on `[0, 0.5]`.
///
/// `hrs_per_branch` gives each branch its own law so branch delay means can
/// differ (the multiscale arrangement).
#[allow(clippy::too_many_arguments)]
pub fn init_network(
    n_branches: usize,
    synapses_per_branch: usize,
    channels: usize,
    hrs_per_branch: &[HrsDistribution],
    branch_taus_s: &[f64],
    capacitance_f: f64,
    dt_s: f64,
    soma: SomaConfig,
    device_rng: &mut SeededRng,
    init_rng: &mut SeededRng,
) -> Result<NetworkConfig> {
    if n_branches == 0 || synapses_per_branch == 0 || channels == 0 {
        return Err(Error::Config("all counts must be >= 1".into()));
    }
    if synapses_per_branch % channels != 0 {
        return Err(Error::Config(format!(
            "synapses_per_branch {synapses_per_branch} not divisible by channels {channels}"
        )));
    }
    if hrs_per_branch.len() != n_branches || branch_taus_s.len() != n_branches {
        return Err(Error::Config(
            "need one HRS law and one tau per branch".into(),
        ));
    }
    if !(capacitance_f > 0.0) {
        return Err(Error::Config("capacitance must be > 0".into()));
    }
    let mut branches = Vec::with_capacity(n_branches);
    for (b, (hrs, &tau_s)) in hrs_per_branch.iter().zip(branch_taus_s).enumerate() {
        let mut synapses = Vec::with_capacity(synapses_per_branch);
        for j in 0..synapses_per_branch {
            let resistance_ohm = sample_hrs(hrs, device_rng);
            let delay_s = resistance_ohm * capacitance_f;
            synapses.push(SynapseConfig {
                branch_index: b,
                source_channel: j % channels,
                delay_steps: (delay_s / dt_s).round() as usize,
                weight: init_rng.uniform(0.0, 0.5),
                resistance_ohm,
                delay_s,
            });
        }
        branches.push(BranchConfig { tau_s, synapses });
    }
    let config = NetworkConfig {
        dt_s,
        channels,
        branches,
        soma,
    };
    config.validate()?;
    Ok(config)
}

/// Time-evolving simulation state: per-synapse delay lines, per-branch
/// currents, soma membrane potential.
#[derive(Debug, Clone)]
pub struct NetworkState {
    branch_currents: Vec<f64>,
    membrane_v: f64,
    /// One ring buffer per synapse, depth `delay_steps + 1`.
    delay_buffers: Vec<Vec<u8>>,
    positions: Vec<usize>,
    step_index: usize,
    // Cached decay factors.
    branch_decays: Vec<f64>,
    soma_decay: f64,
}

impl NetworkState {
    pub fn new(config: &NetworkConfig) -> Self {
        NetworkState {
            branch_currents: vec![0.0; config.n_branches()],
            membrane_v: 0.0,
            delay_buffers: config
                .synapses()
                .map(|s| vec![0u8; s.delay_steps + 1])
                .collect(),
            positions: vec![0; config.n_synapses()],
            step_index: 0,
            branch_decays: config.branch_decays(),
            soma_decay: config.soma_decay(),
        }
    }

    /// Zero all state so a rerun is bit-identical.
    pub fn reset(&mut self) {
        self.branch_currents.iter_mut().for_each(|c| *c = 0.0);
        self.membrane_v = 0.0;
        for buf in &mut self.delay_buffers {
            buf.iter_mut().for_each(|b| *b = 0);
        }
        self.positions.iter_mut().for_each(|p| *p = 0);
        self.step_index = 0;
    }

    pub fn membrane_v(&self) -> f64 {
        self.membrane_v
    }

    pub fn branch_currents(&self) -> &[f64] {
        &self.branch_currents
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }
}

/// Per-step record of the forward pass, kept when gradients are requested.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub n_branches: usize,
    /// Branch currents after the update at each step, `[step * n_branches + i]`.
    pub branch_currents: Vec<f64>,
    /// Pre-reset membrane potential at each step.
    pub membrane_v: Vec<f64>,
    /// Spike indicator at each step.
    pub spikes: Vec<u8>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.membrane_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membrane_v.is_empty()
    }

    /// Peak pre-reset membrane potential and its step index.
    pub fn peak(&self) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0;
        for (t, &v) in self.membrane_v.iter().enumerate() {
            if v > best {
                best = v;
                at = t;
            }
        }
        (best, at)
    }
}

/// Advance the network one dt bin. Returns 1 if the soma spiked.
///
/// Per branch `i`: `I_i <- I_i * exp(-dt/tau_i) + sum_j w_ij * s(t - d_ij)`.
/// Soma: `V <- V * exp(-dt/tau_mem) + sum_i I_i * dt`, hard reset on
/// threshold crossing.
pub fn step(config: &NetworkConfig, state: &mut NetworkState, input_spikes: &[u8]) -> u8 {
    debug_assert_eq!(input_spikes.len(), config.channels);
    let dt = config.dt_s;
    let mut flat = 0usize;
    for (i, branch) in config.branches.iter().enumerate() {
        let mut injected = 0.0;
        for syn in &branch.synapses {
            let buf = &mut state.delay_buffers[flat];
            let pos = state.positions[flat];
            let len = buf.len();
            buf[pos] = input_spikes[syn.source_channel];
            let delayed = buf[(pos + 1) % len];
            state.positions[flat] = (pos + 1) % len;
            if delayed != 0 {
                injected += syn.weight;
            }
            flat += 1;
        }
        state.branch_currents[i] = state.branch_currents[i] * state.branch_decays[i] + injected;
    }
    let input: f64 = state.branch_currents.iter().sum::<f64>() * dt;
    let v_pre = state.membrane_v * state.soma_decay + input;
    let spike = v_pre >= config.soma.v_threshold;
    state.membrane_v = if spike { config.soma.v_reset } else { v_pre };
    state.step_index += 1;
    spike as u8
}

/// Step variant that also records the pre-reset trace.
fn step_recording(
    config: &NetworkConfig,
    state: &mut NetworkState,
    input_spikes: &[u8],
    trace: &mut ForwardTrace,
) -> u8 {
    let dt = config.dt_s;
    let mut flat = 0usize;
    for (i, branch) in config.branches.iter().enumerate() {
        let mut injected = 0.0;
        for syn in &branch.synapses {
            let buf = &mut state.delay_buffers[flat];
            let pos = state.positions[flat];
            let len = buf.len();
            buf[pos] = input_spikes[syn.source_channel];
            let delayed = buf[(pos + 1) % len];
            state.positions[flat] = (pos + 1) % len;
            if delayed != 0 {
                injected += syn.weight;
            }
            flat += 1;
        }
        state.branch_currents[i] = state.branch_currents[i] * state.branch_decays[i] + injected;
        trace.branch_currents.push(state.branch_currents[i]);
    }
    let input: f64 = state.branch_currents.iter().sum::<f64>() * dt;
    let v_pre = state.membrane_v * state.soma_decay + input;
    let spike = v_pre >= config.soma.v_threshold;
    trace.membrane_v.push(v_pre);
    trace.spikes.push(spike as u8);
    state.membrane_v = if spike { config.soma.v_reset } else { v_pre };
    state.step_index += 1;
    spike as u8
}

/// Run the network over a full raster from zeroed state.
///
/// Returns the total soma spike count and, if `record`, the forward trace.
pub fn run(
    config: &NetworkConfig,
    raster: &SpikeRaster,
    record: bool,
) -> Result<(usize, Option<ForwardTrace>)> {
    if raster.channel_count() != config.channels {
        return Err(Error::Config(format!(
            "raster has {} channels, network expects {}",
            raster.channel_count(),
            config.channels
        )));
    }
    let mut state = NetworkState::new(config);
    let mut trace = record.then(|| ForwardTrace {
        n_branches: config.n_branches(),
        ..Default::default()
    });
    let mut count = 0usize;
    let mut input = vec![0u8; config.channels];
    for t in 0..raster.duration_steps() {
        for (c, slot) in input.iter_mut().enumerate() {
            *slot = raster.get(c, t);
        }
        let s = match trace.as_mut() {
            Some(trace) => step_recording(config, &mut state, &input, trace),
            None => step(config, &mut state, &input),
        };
        count += s as usize;
    }
    Ok((count, trace))
}

/// Count-threshold readout: anomalous iff the soma spiked at least
/// `decision_threshold` times.
pub fn classify(spike_count: usize, decision_threshold: usize) -> BeatLabel {
    debug_assert!(decision_threshold >= 1);
    if spike_count >= decision_threshold {
        BeatLabel::Anomalous
    } else {
        BeatLabel::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, SeededRng};

    fn single_synapse_config(weight: f64, delay_steps: usize, v_threshold: f64) -> NetworkConfig {
        NetworkConfig {
            dt_s: 1e-3,
            channels: 1,
            branches: vec![BranchConfig {
                tau_s: 0.02,
                synapses: vec![SynapseConfig {
                    branch_index: 0,
                    source_channel: 0,
                    delay_steps,
                    weight,
                    resistance_ohm: delay_steps as f64 * 1e-3 / 100e-15,
                    delay_s: delay_steps as f64 * 1e-3,
                }],
            }],
            soma: SomaConfig {
                v_threshold,
                ..Default::default()
            },
        }
    }

    fn spike_at(t: usize, channels: usize, steps: usize) -> SpikeRaster {
        let mut r = SpikeRaster::zeros(1e-3, channels, steps).unwrap();
        r.set(0, t);
        r
    }

    #[test]
    fn zero_weights_stay_silent() {
        let config = single_synapse_config(0.0, 3, 1.0);
        let mut raster = SpikeRaster::zeros(1e-3, 1, 200).unwrap();
        for t in 0..200 {
            raster.set(0, t);
        }
        let (count, trace) = run(&config, &raster, true).unwrap();
        assert_eq!(count, 0);
        assert!(trace.unwrap().membrane_v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delay_line_first_effect_at_exact_lag() {
        for delay in [0usize, 1, 7, 40] {
            let config = single_synapse_config(1.0, delay, 1e9);
            let raster = spike_at(0, 1, delay + 10);
            let (_, trace) = run(&config, &raster, true).unwrap();
            let trace = trace.unwrap();
            for t in 0..delay {
                assert_eq!(trace.branch_currents[t], 0.0, "early current at t={t}");
            }
            assert!(trace.branch_currents[delay] > 0.0, "no current at lag {delay}");
        }
    }

    #[test]
    fn time_shift_equivariance_below_threshold() {
        let config = single_synapse_config(0.7, 5, 1e9);
        let shift = 13;
        let (_, t0) = run(&config, &spike_at(0, 1, 100), true).unwrap();
        let (_, t1) = run(&config, &spike_at(shift, 1, 100 + shift), true).unwrap();
        let (t0, t1) = (t0.unwrap(), t1.unwrap());
        for t in 0..100 {
            assert_eq!(t0.branch_currents[t], t1.branch_currents[t + shift]);
        }
    }

    #[test]
    fn linearity_below_threshold() {
        // With an unreachable threshold the final V is linear in each weight:
        // a multi-synapse run equals the superposition of single-synapse runs.
        let mut rng = SeededRng::new(17, stream::INIT);
        let mut synapses = Vec::new();
        for j in 0..6 {
            synapses.push(SynapseConfig {
                branch_index: 0,
                source_channel: 0,
                delay_steps: j * 3,
                weight: rng.uniform(0.1, 0.9),
                resistance_ohm: 1.0,
                delay_s: j as f64 * 3e-3,
            });
        }
        let config = NetworkConfig {
            dt_s: 1e-3,
            channels: 1,
            branches: vec![BranchConfig { tau_s: 0.02, synapses: synapses.clone() }],
            soma: SomaConfig { v_threshold: 1e9, ..Default::default() },
        };
        let raster = spike_at(2, 1, 80);
        let (_, full) = run(&config, &raster, true).unwrap();
        let v_full = *full.unwrap().membrane_v.last().unwrap();
        let mut v_sum = 0.0;
        for j in 0..synapses.len() {
            let mut single = config.clone();
            let weights: Vec<f64> = (0..synapses.len())
                .map(|k| if k == j { synapses[k].weight } else { 0.0 })
                .collect();
            single.set_weights(&weights).unwrap();
            let (_, t) = run(&single, &raster, true).unwrap();
            v_sum += *t.unwrap().membrane_v.last().unwrap();
        }
        assert!(
            (v_full - v_sum).abs() <= 1e-10 * v_full.abs().max(1e-30),
            "superposition violated: {v_full} vs {v_sum}"
        );
    }

    #[test]
    fn doubling_one_weight_doubles_its_contribution() {
        let base = single_synapse_config(0.4, 2, 1e9);
        let mut doubled = base.clone();
        doubled.set_weights(&[0.8]).unwrap();
        let raster = spike_at(0, 1, 60);
        let (_, tb) = run(&base, &raster, true).unwrap();
        let (_, td) = run(&doubled, &raster, true).unwrap();
        let vb = *tb.unwrap().membrane_v.last().unwrap();
        let vd = *td.unwrap().membrane_v.last().unwrap();
        assert!((vd - 2.0 * vb).abs() <= 1e-12 * vd.abs());
    }

    #[test]
    fn reset_and_rerun_is_bit_identical() {
        let config = single_synapse_config(50.0, 4, 0.5);
        let raster = spike_at(1, 1, 120);
        let mut state = NetworkState::new(&config);
        let mut input = vec![0u8; 1];
        let mut run_once = |state: &mut NetworkState| {
            let mut spikes = Vec::new();
            let mut vs = Vec::new();
            for t in 0..raster.duration_steps() {
                input[0] = raster.get(0, t);
                spikes.push(step(&config, state, &input));
                vs.push(state.membrane_v());
            }
            (spikes, vs)
        };
        let first = run_once(&mut state);
        state.reset();
        let second = run_once(&mut state);
        assert_eq!(first, second);
    }

    #[test]
    fn empty_raster_no_spikes() {
        let config = single_synapse_config(1.0, 2, 1.0);
        let raster = SpikeRaster::zeros(1e-3, 1, 0).unwrap();
        let (count, _) = run(&config, &raster, false).unwrap();
        assert_eq!(count, 0);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let config = single_synapse_config(1.0, 2, 1.0);
        let raster = SpikeRaster::zeros(1e-3, 3, 10).unwrap();
        assert!(run(&config, &raster, false).is_err());
    }

    #[test]
    fn classify_thresholds() {
        assert_eq!(classify(0, 1), BeatLabel::Normal);
        assert_eq!(classify(3, 1), BeatLabel::Anomalous);
        assert_eq!(classify(3, 4), BeatLabel::Normal);
    }

    #[test]
    fn init_network_fanout_and_delays() {
        let hrs = vec![crate::device::HrsDistribution::default(); 2];
        let mut dev = SeededRng::new(1, stream::DEVICE);
        let mut init = SeededRng::new(1, stream::INIT);
        let config = init_network(
            2, 64, 2, &hrs, &DEFAULT_BRANCH_TAUS_S, 100e-15, 1e-3,
            SomaConfig::default(), &mut dev, &mut init,
        )
        .unwrap();
        assert_eq!(config.n_synapses(), 128);
        for branch in &config.branches {
            for c in 0..2 {
                let n = branch.synapses.iter().filter(|s| s.source_channel == c).count();
                assert_eq!(n, 32);
            }
        }
        // Indivisible fan-out is a config error.
        assert!(init_network(
            2, 63, 2, &hrs, &DEFAULT_BRANCH_TAUS_S, 100e-15, 1e-3,
            SomaConfig::default(), &mut dev, &mut init,
        )
        .is_err());
    }

    #[test]
    fn init_network_zero_spread_gives_identical_delays() {
        let hrs = vec![crate::device::HrsDistribution::new(400e9, 0.0, "").unwrap()];
        let mut dev = SeededRng::new(1, stream::DEVICE);
        let mut init = SeededRng::new(1, stream::INIT);
        let config = init_network(
            1, 8, 2, &hrs, &[0.02], 100e-15, 1e-3,
            SomaConfig::default(), &mut dev, &mut init,
        )
        .unwrap();
        for syn in config.synapses() {
            assert_eq!(syn.delay_steps, 40);
        }
    }

    #[test]
    fn init_network_mean_delay_matches_law() {
        // Median 400 GOhm at 100 fF and dt 1 ms: mean delay_steps over 1e3
        // synapses within 10% of the log-normal mean 40 * exp(0.125) ms.
        let hrs = vec![crate::device::HrsDistribution::default()];
        let mut dev = SeededRng::new(3, stream::DEVICE);
        let mut init = SeededRng::new(3, stream::INIT);
        let config = init_network(
            1, 1000, 2, &hrs, &[0.02], 100e-15, 1e-3,
            SomaConfig::default(), &mut dev, &mut init,
        )
        .unwrap();
        let mean: f64 = config.synapses().map(|s| s.delay_steps as f64).sum::<f64>() / 1000.0;
        let expected = 40.0 * (0.5f64 * 0.5 / 2.0).exp();
        assert!(
            (mean - expected).abs() < 0.10 * expected,
            "mean delay_steps {mean} vs expected {expected}"
        );
    }
}
