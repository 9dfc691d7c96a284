//! Device-aware training of the dendritic network.
//!
//! Training runs in two phases. Pre-training does plain minibatch gradient
//! descent on full-precision weights, clipped to stay nonnegative. At the
//! precision transition a scale factor maps the hidden-weight range onto the
//! device level grid; from then on the forward pass uses the effective
//! (programmed, noisy) weights while gradients keep accumulating into the
//! high-precision hidden weights. A device is reprogrammed only when its
//! hidden weight's nearest level changes at an epoch boundary, drawing fresh
//! programming noise at that moment and never per forward pass.
//!
//! The loss head is binary cross-entropy on a sigmoid of the peak pre-reset
//! membrane potential relative to the firing threshold; the reset path is
//! detached from the gradient.

use serde::{Deserialize, Serialize};

use crate::device::{program_lrs, LrsLevelTable};
use crate::encoding::{BeatLabel, LabeledWindow};
use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::rng::SeededRng;

/// Pre-transition hidden-weight ceiling.
pub const PRETRAIN_W_MAX: f64 = 1.0;
/// Default surrogate slope of the sigmoid head.
pub const DEFAULT_SURROGATE_SLOPE: f64 = 10.0;
/// Default minibatch size.
pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub n_pre: usize,
    pub n_training: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub surrogate_slope: f64,
    pub decision_threshold: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_pre: 50,
            n_training: 100,
            learning_rate: 0.02,
            batch_size: DEFAULT_BATCH_SIZE,
            surrogate_slope: DEFAULT_SURROGATE_SLOPE,
            decision_threshold: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.decision_threshold == 0 {
            return Err(Error::Config("decision_threshold must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scale factor relating hidden weights to the device level grid, fixed at
/// the precision transition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub s_w: f64,
}

/// High-precision shadow weights plus the per-synapse device state.
///
/// A synapse whose hidden weight sits closer to zero than to the bottom LRS
/// level is left in the high-resistive state instead of being programmed:
/// `level_index` and `programmed_ohm` are `None` and the effective weight is
/// zero. The LRS grid alone cannot express low weights (its bottom level is
/// a sizable fraction of the top one), so the off state is what lets
/// pruned-away synapses stay silent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenWeights {
    /// Hidden weights, clipped to `[0, w_max]` after every update.
    pub w: Vec<f64>,
    /// Gradient accumulator for the current minibatch.
    pub grad_accum: Vec<f64>,
    /// Currently programmed level per synapse; `None` = HRS off state.
    pub level_index: Vec<Option<usize>>,
    /// Sampled device resistance per synapse; `None` = HRS off state.
    pub programmed_ohm: Vec<Option<f64>>,
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub reprogram_count: usize,
}

/// Confusion counts and balanced accuracy of one evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_normal: usize,
    pub false_anomalous: usize,
    pub false_normal: usize,
    pub true_anomalous: usize,
    pub balanced_accuracy: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Forward pass with the given effective weights, then backpropagation
/// through time.
///
/// Loss: `BCE(sigmoid(a * (V_peak - v_threshold)), label)` with `V_peak` the
/// maximum pre-reset membrane potential over the window. The backward pass
/// unrolls time; gradient flow stops at reset events (detached reset path).
/// Returns the loss and `dL/dw` per synapse in flat (branch, position) order.
pub fn loss_and_grad(
    config: &NetworkConfig,
    window: &LabeledWindow,
    weights: &[f64],
    surrogate_slope: f64,
    window_id: usize,
) -> Result<(f64, Vec<f64>)> {
    let n_syn = config.n_synapses();
    if weights.len() != n_syn {
        return Err(Error::Config(format!(
            "expected {n_syn} weights, got {}",
            weights.len()
        )));
    }
    let raster = &window.raster;
    if raster.channel_count() != config.channels {
        return Err(Error::Config(format!(
            "raster has {} channels, network expects {}",
            raster.channel_count(),
            config.channels
        )));
    }
    let steps = raster.duration_steps();
    if steps == 0 {
        return Err(Error::Evaluation("empty window".into()));
    }
    let n_branches = config.n_branches();
    let dt = config.dt_s;
    let decays = config.branch_decays();
    let beta = config.soma_decay();
    let theta = config.soma.v_threshold;

    // Per-channel spike times, used for the scatter into branch injections
    // and later for the weight gradients.
    let spike_times: Vec<Vec<usize>> = (0..config.channels)
        .map(|c| raster.spike_times(c))
        .collect();

    // Injected weighted input per branch per step. Mirrors the step()
    // semantics: a spike at t on channel c reaches a synapse with delay d at
    // step t + d.
    let mut injected = vec![0.0f64; n_branches * steps];
    let mut flat = 0usize;
    for branch in &config.branches {
        for syn in &branch.synapses {
            let w = weights[flat];
            for &t0 in &spike_times[syn.source_channel] {
                let t = t0 + syn.delay_steps;
                if t < steps {
                    injected[syn.branch_index * steps + t] += w;
                }
            }
            flat += 1;
        }
    }

    // Forward scan.
    let mut currents = vec![0.0f64; n_branches];
    let mut v_post = 0.0f64;
    let mut v_pre_trace = vec![0.0f64; steps];
    let mut spike_trace = vec![false; steps];
    for t in 0..steps {
        let mut sum_i = 0.0;
        for b in 0..n_branches {
            currents[b] = currents[b] * decays[b] + injected[b * steps + t];
            sum_i += currents[b];
        }
        let v_pre = v_post * beta + sum_i * dt;
        v_pre_trace[t] = v_pre;
        let spike = v_pre >= theta;
        spike_trace[t] = spike;
        v_post = if spike { config.soma.v_reset } else { v_pre };
    }

    let (v_peak, t_peak) = v_pre_trace
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, at), (t, &v)| {
            if v > best {
                (v, t)
            } else {
                (best, at)
            }
        });

    let y = match window.label {
        BeatLabel::Anomalous => 1.0,
        BeatLabel::Normal => 0.0,
    };
    let z = surrogate_slope * (v_peak - theta);
    let loss = softplus(z) - y * z;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss on window {window_id}"
        )));
    }
    let g_peak = surrogate_slope * (sigmoid(z) - y);

    // Membrane adjoint: gV[t] = beta^(t_peak - t) * g_peak back to the last
    // reset before t_peak; the reset severs earlier contributions.
    let mut g_v = vec![0.0f64; steps];
    let mut g = g_peak;
    let mut t = t_peak;
    loop {
        g_v[t] = g;
        if t == 0 {
            break;
        }
        if spike_trace[t - 1] {
            break;
        }
        g *= beta;
        t -= 1;
    }

    // Branch-current adjoint and weight gradients.
    let mut grad = vec![0.0f64; n_syn];
    let mut a_i = vec![0.0f64; steps];
    for b in 0..n_branches {
        // dV_pre(t)/dI_b(t) = dt, and I_b(t) feeds I_b(t+1) through decay.
        // Currents after the peak never reach the loss.
        let mut acc = 0.0;
        for t in (0..=t_peak).rev() {
            acc = acc * decays[b] + g_v[t] * dt;
            a_i[t] = acc;
        }
        for slot in a_i.iter_mut().take(steps).skip(t_peak + 1) {
            *slot = 0.0;
        }
        let mut flat = 0usize;
        for branch in &config.branches {
            for syn in &branch.synapses {
                if syn.branch_index == b {
                    let mut g_w = 0.0;
                    for &t0 in &spike_times[syn.source_channel] {
                        let t = t0 + syn.delay_steps;
                        if t < steps {
                            g_w += a_i[t];
                        }
                    }
                    grad[flat] += g_w;
                }
                flat += 1;
            }
        }
    }
    Ok((loss, grad))
}

/// Result of the pre-training phase.
#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub weights: Vec<f64>,
    pub metrics: Vec<EpochMetrics>,
}

/// `n_pre` epochs of minibatch gradient descent on full-precision weights,
/// clipped to `[0, 1]` after each update.
pub fn pretrain(
    config: &NetworkConfig,
    dataset: &[LabeledWindow],
    train: &TrainConfig,
    shuffle_rng: &mut SeededRng,
) -> Result<PretrainResult> {
    if dataset.is_empty() {
        return Err(Error::Evaluation("pretrain on empty dataset".into()));
    }
    train.validate()?;
    let mut weights = config.weights();
    let mut metrics = Vec::with_capacity(train.n_pre);
    for epoch in 0..train.n_pre {
        let loss = run_epoch(
            config,
            dataset,
            &mut weights,
            None,
            PRETRAIN_W_MAX,
            train,
            shuffle_rng,
        )
        .map_err(|e| annotate_epoch(e, epoch))?;
        let accuracy = training_accuracy(config, &weights, dataset, train.decision_threshold)?;
        metrics.push(EpochMetrics {
            epoch,
            loss,
            accuracy,
            reprogram_count: 0,
        });
    }
    Ok(PretrainResult { weights, metrics })
}

fn annotate_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

/// One epoch of shuffled minibatch descent. When `hidden` is given, the
/// forward pass uses `effective` weights while updates land on the hidden
/// weights; otherwise `effective` is both read and updated (full precision).
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    config: &NetworkConfig,
    dataset: &[LabeledWindow],
    effective: &mut Vec<f64>,
    mut hidden: Option<&mut Vec<f64>>,
    w_max: f64,
    train: &TrainConfig,
    shuffle_rng: &mut SeededRng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    shuffle_rng.shuffle(&mut order);
    let n_syn = effective.len();
    let mut epoch_loss = 0.0;
    for batch in order.chunks(train.batch_size) {
        let mut grad = vec![0.0f64; n_syn];
        for &idx in batch {
            let (loss, g) = loss_and_grad(
                config,
                &dataset[idx],
                effective,
                train.surrogate_slope,
                idx,
            )?;
            epoch_loss += loss;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let scale = train.learning_rate / batch.len() as f64;
        let target: &mut Vec<f64> = match hidden.as_deref_mut() {
            Some(h) => h,
            None => effective,
        };
        for (w, g) in target.iter_mut().zip(&grad) {
            *w = (*w - scale * g).clamp(0.0, w_max);
        }
    }
    Ok(epoch_loss / dataset.len() as f64)
}

fn training_accuracy(
    config: &NetworkConfig,
    weights: &[f64],
    dataset: &[LabeledWindow],
    decision_threshold: usize,
) -> Result<f64> {
    Ok(evaluate(config, weights, dataset, decision_threshold)?.balanced_accuracy)
}

/// Scale factor at the precision transition: `s_w = g_max / max(W_trained)`
/// with `g_max` the largest level conductance, so the top level's effective
/// weight equals the largest trained hidden weight.
pub fn compute_scale(w_trained: &[f64], table: &LrsLevelTable) -> Result<ScaleFactor> {
    let w_max = w_trained.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(w_max > 0.0) {
        return Err(Error::Numeric(
            "cannot compute scale: max hidden weight is not positive".into(),
        ));
    }
    let g_max = 1.0 / table.levels()[0].mu_ohm;
    Ok(ScaleFactor { s_w: g_max / w_max })
}

/// Weight-domain image of the level grid: `L_k = (1/mu_k) / s_w`, indexed by
/// table position (so `L_k` decreases with k).
pub fn level_weights(table: &LrsLevelTable, scale: ScaleFactor) -> Vec<f64> {
    table
        .levels()
        .iter()
        .map(|l| 1.0 / l.mu_ohm / scale.s_w)
        .collect()
}

/// Table index of the weight-domain level closest to `w`; ties resolve to
/// the lower table index.
pub fn nearest_level_weight(level_grid: &[f64], w: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (k, &lw) in level_grid.iter().enumerate() {
        let d = (lw - w).abs();
        if d < best_dist {
            best_dist = d;
            best = k;
        }
    }
    best
}

/// Effective weight of one programmed device; an unprogrammed (HRS off)
/// device contributes nothing.
pub fn effective_weight(programmed_ohm: Option<f64>, scale: ScaleFactor) -> f64 {
    match programmed_ohm {
        Some(r) => 1.0 / r / scale.s_w,
        None => 0.0,
    }
}

/// Target device state for one hidden weight: the nearest level, or off when
/// the weight is closer to zero than to the bottom level.
pub fn target_level(grid: &[f64], w: f64) -> Option<usize> {
    let bottom = *grid.last().unwrap();
    if w < 0.5 * bottom {
        None
    } else {
        Some(nearest_level_weight(grid, w))
    }
}

/// Program every synapse to the level nearest its scaled hidden weight, or
/// leave it in the off state for near-zero weights.
pub fn quantize_all(
    w: &[f64],
    scale: ScaleFactor,
    table: &LrsLevelTable,
    rng: &mut SeededRng,
) -> Result<HiddenWeights> {
    let grid = level_weights(table, scale);
    let mut level_index = Vec::with_capacity(w.len());
    let mut programmed_ohm = Vec::with_capacity(w.len());
    for &wi in w {
        let target = target_level(&grid, wi);
        level_index.push(target);
        programmed_ohm.push(match target {
            Some(k) => Some(program_lrs(table, k, rng)?),
            None => None,
        });
    }
    Ok(HiddenWeights {
        w: w.to_vec(),
        grad_accum: vec![0.0; w.len()],
        level_index,
        programmed_ohm,
    })
}

/// `n_training` epochs on quantized weights: the forward pass uses the
/// programmed (noisy) effective weights, gradients accumulate into the
/// hidden weights, and at each epoch end any synapse whose nearest level
/// changed is reprogrammed with fresh noise. Unchanged synapses keep their
/// sampled resistance.
#[allow(clippy::too_many_arguments)]
pub fn train_quantized(
    config: &NetworkConfig,
    dataset: &[LabeledWindow],
    state: &mut HiddenWeights,
    table: &LrsLevelTable,
    scale: ScaleFactor,
    train: &TrainConfig,
    shuffle_rng: &mut SeededRng,
    device_rng: &mut SeededRng,
) -> Result<Vec<EpochMetrics>> {
    if dataset.is_empty() {
        return Err(Error::Evaluation("train_quantized on empty dataset".into()));
    }
    train.validate()?;
    let grid = level_weights(table, scale);
    // Top level weight caps the hidden range after the transition.
    let w_max = grid[0];
    let mut metrics = Vec::with_capacity(train.n_training);
    for epoch in 0..train.n_training {
        let mut effective: Vec<f64> = state
            .programmed_ohm
            .iter()
            .map(|&r| effective_weight(r, scale))
            .collect();
        let loss = run_epoch(
            config,
            dataset,
            &mut effective,
            Some(&mut state.w),
            w_max,
            train,
            shuffle_rng,
        )
        .map_err(|e| annotate_epoch(e, epoch))?;
        // Epoch-boundary reprogramming pass: fresh noise only where the
        // target level changed.
        let mut reprogram_count = 0;
        for j in 0..state.w.len() {
            let target = target_level(&grid, state.w[j]);
            if target != state.level_index[j] {
                state.level_index[j] = target;
                state.programmed_ohm[j] = match target {
                    Some(k) => Some(program_lrs(table, k, device_rng)?),
                    None => None,
                };
                reprogram_count += 1;
            }
        }
        let effective: Vec<f64> = state
            .programmed_ohm
            .iter()
            .map(|&r| effective_weight(r, scale))
            .collect();
        let accuracy = training_accuracy(config, &effective, dataset, train.decision_threshold)?;
        metrics.push(EpochMetrics {
            epoch,
            loss,
            accuracy,
            reprogram_count,
        });
    }
    Ok(metrics)
}

/// Output spike count and true label per window, in dataset order.
pub fn spike_counts(
    config: &NetworkConfig,
    weights: &[f64],
    dataset: &[LabeledWindow],
) -> Result<Vec<(usize, BeatLabel)>> {
    let mut run_config = config.clone();
    run_config.set_weights(weights)?;
    dataset
        .iter()
        .map(|window| {
            let (count, _) = crate::network::run(&run_config, &window.raster, false)?;
            Ok((count, window.label))
        })
        .collect()
}

fn report_from_counts(counts: &[(usize, BeatLabel)], decision_threshold: usize) -> EvalReport {
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    let mut tp = 0usize;
    for &(count, label) in counts {
        let predicted = crate::network::classify(count, decision_threshold);
        match (label, predicted) {
            (BeatLabel::Normal, BeatLabel::Normal) => tn += 1,
            (BeatLabel::Normal, BeatLabel::Anomalous) => fp += 1,
            (BeatLabel::Anomalous, BeatLabel::Normal) => fne += 1,
            (BeatLabel::Anomalous, BeatLabel::Anomalous) => tp += 1,
        }
    }
    let mut recalls = Vec::new();
    if tn + fp > 0 {
        recalls.push(tn as f64 / (tn + fp) as f64);
    }
    if tp + fne > 0 {
        recalls.push(tp as f64 / (tp + fne) as f64);
    }
    let balanced_accuracy = recalls.iter().sum::<f64>() / recalls.len() as f64;
    EvalReport {
        true_normal: tn,
        false_anomalous: fp,
        false_normal: fne,
        true_anomalous: tp,
        balanced_accuracy,
    }
}

/// Classify every window by spike count and report balanced accuracy with
/// the 2x2 confusion matrix.
pub fn evaluate(
    config: &NetworkConfig,
    weights: &[f64],
    dataset: &[LabeledWindow],
    decision_threshold: usize,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Evaluation("evaluate on empty dataset".into()));
    }
    let counts = spike_counts(config, weights, dataset)?;
    Ok(report_from_counts(&counts, decision_threshold))
}

/// Sweep the decision threshold over the observed count range and return the
/// value maximizing balanced accuracy on `dataset` (ties to the lowest
/// threshold). Counts are computed once; the sweep itself is free.
pub fn pick_decision_threshold(
    config: &NetworkConfig,
    weights: &[f64],
    dataset: &[LabeledWindow],
) -> Result<usize> {
    if dataset.is_empty() {
        return Err(Error::Evaluation(
            "pick_decision_threshold on empty dataset".into(),
        ));
    }
    let counts = spike_counts(config, weights, dataset)?;
    let max_count = counts.iter().map(|&(c, _)| c).max().unwrap_or(0);
    let mut best = (1usize, f64::NEG_INFINITY);
    // max_count + 1 is the "never anomalous" threshold; everything above it
    // is equivalent.
    for threshold in 1..=max_count + 1 {
        let report = report_from_counts(&counts, threshold);
        if report.balanced_accuracy > best.1 {
            best = (threshold, report.balanced_accuracy);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{HrsDistribution, LrsLevel};
    use crate::encoding::SpikeRaster;
    use crate::network::{init_network, SomaConfig};
    use crate::rng::{stream, SeededRng};

    fn small_net(seed: u64, v_threshold: f64) -> NetworkConfig {
        let hrs = vec![HrsDistribution::new(40e9, 0.4, "").unwrap(); 2];
        let mut dev = SeededRng::new(seed, stream::DEVICE);
        let mut init = SeededRng::new(seed, stream::INIT);
        init_network(
            2,
            8,
            2,
            &hrs,
            &[0.02, 0.1],
            100e-15,
            1e-3,
            SomaConfig {
                v_threshold,
                ..Default::default()
            },
            &mut dev,
            &mut init,
        )
        .unwrap()
    }

    fn random_window(seed: u64, steps: usize, label: BeatLabel) -> LabeledWindow {
        let mut rng = SeededRng::new(seed, stream::DATA);
        let mut raster = SpikeRaster::zeros(1e-3, 2, steps).unwrap();
        for c in 0..2 {
            for t in 0..steps {
                if rng.bernoulli(0.05) {
                    raster.set(c, t);
                }
            }
        }
        LabeledWindow { raster, label }
    }

    #[test]
    fn zero_weight_loss_closed_form() {
        // Silent network: V_peak = 0, so the normal-label loss is
        // -ln(1 - sigmoid(-a*theta)) = softplus(-a*theta).
        let config = small_net(1, 1.0);
        let window = random_window(2, 100, BeatLabel::Normal);
        let weights = vec![0.0; config.n_synapses()];
        let a = 10.0;
        let (loss, grad) = loss_and_grad(&config, &window, &weights, a, 0).unwrap();
        let expected = softplus(-a * 1.0);
        assert!((loss - expected).abs() < 1e-12);
        assert_eq!(grad.len(), config.n_synapses());
    }

    #[test]
    fn loss_at_threshold_is_ln2_for_any_slope() {
        // With V_peak = theta the sigmoid argument is 0 regardless of slope.
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_smooth_path() {
        let mut config = small_net(5, 1e9);
        let window = random_window(7, 200, BeatLabel::Anomalous);
        let mut rng = SeededRng::new(9, stream::INIT);
        let weights: Vec<f64> = (0..config.n_synapses())
            .map(|_| rng.uniform(0.05, 0.9))
            .collect();
        // Put the threshold just above the reachable peak so the sigmoid
        // head stays in its responsive range while no reset fires.
        let mut run_cfg = config.clone();
        run_cfg.set_weights(&weights).unwrap();
        let (_, trace) = crate::network::run(&run_cfg, &window.raster, true).unwrap();
        let (v_peak, _) = trace.unwrap().peak();
        config.soma.v_threshold = 1.5 * v_peak + 0.01;
        let slope = 2.0 / config.soma.v_threshold.max(1.0);

        let (_, grad) = loss_and_grad(&config, &window, &weights, slope, 0).unwrap();
        let eps = 1e-4;
        for j in 0..weights.len() {
            let mut wp = weights.clone();
            wp[j] += eps;
            let mut wm = weights.clone();
            wm[j] -= eps;
            let (lp, _) = loss_and_grad(&config, &window, &wp, slope, 0).unwrap();
            let (lm, _) = loss_and_grad(&config, &window, &wm, slope, 0).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (grad[j] - fd).abs() / (fd.abs() + 1e-8);
            assert!(
                rel < 1e-3,
                "weight {j}: analytic {} vs fd {fd}, rel {rel}",
                grad[j]
            );
        }
    }

    #[test]
    fn pretrain_zero_epochs_returns_init() {
        let config = small_net(11, 1.0);
        let dataset = vec![random_window(1, 100, BeatLabel::Normal)];
        let train = TrainConfig {
            n_pre: 0,
            ..Default::default()
        };
        let mut rng = SeededRng::new(11, stream::SHUFFLE);
        let result = pretrain(&config, &dataset, &train, &mut rng).unwrap();
        assert_eq!(result.weights, config.weights());
    }

    #[test]
    fn pretrain_is_deterministic() {
        let config = small_net(13, 0.5);
        let dataset = vec![
            random_window(1, 150, BeatLabel::Normal),
            random_window(2, 150, BeatLabel::Anomalous),
            random_window(3, 150, BeatLabel::Normal),
        ];
        let train = TrainConfig {
            n_pre: 5,
            learning_rate: 0.05,
            ..Default::default()
        };
        let run = || {
            let mut rng = SeededRng::new(13, stream::SHUFFLE);
            pretrain(&config, &dataset, &train, &mut rng).unwrap().weights
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pretrain_clipping_keeps_weights_in_range() {
        let config = small_net(17, 0.2);
        let dataset: Vec<_> = (0..8)
            .map(|i| {
                random_window(
                    i,
                    200,
                    if i % 2 == 0 {
                        BeatLabel::Normal
                    } else {
                        BeatLabel::Anomalous
                    },
                )
            })
            .collect();
        let train = TrainConfig {
            n_pre: 10,
            learning_rate: 5.0,
            ..Default::default()
        };
        let mut rng = SeededRng::new(17, stream::SHUFFLE);
        let result = pretrain(&config, &dataset, &train, &mut rng).unwrap();
        for &w in &result.weights {
            assert!((0.0..=PRETRAIN_W_MAX).contains(&w));
        }
    }

    fn zero_sigma_table() -> LrsLevelTable {
        LrsLevelTable::new(
            LrsLevelTable::default_table()
                .levels()
                .iter()
                .map(|l| LrsLevel {
                    mu_ohm: l.mu_ohm,
                    sigma_ohm: 0.0,
                })
                .collect(),
            7_000.0,
            50_000.0,
        )
        .unwrap()
    }

    #[test]
    fn scale_factor_examples() {
        let table = zero_sigma_table();
        let g_max = 1.0 / 7_000.0;
        // max W equal to g_max gives s_w = 1.
        let s = compute_scale(&[g_max, 0.1 * g_max], &table).unwrap();
        assert!((s.s_w - 1.0).abs() < 1e-12);
        // Scaling W by 2 halves s_w.
        let s2 = compute_scale(&[2.0 * g_max, 0.2 * g_max], &table).unwrap();
        assert!((s2.s_w - 0.5).abs() < 1e-12);
        // Top level maps to max W.
        let s3 = compute_scale(&[0.5, 0.2], &table).unwrap();
        let grid = level_weights(&table, s3);
        assert!((grid[0] - 0.5).abs() < 1e-12);
        assert!(compute_scale(&[0.0, 0.0], &table).is_err());
    }

    #[test]
    fn level_assignment_invariant_under_common_scaling() {
        let table = zero_sigma_table();
        let mut rng = SeededRng::new(23, stream::INIT);
        let w: Vec<f64> = (0..64).map(|_| rng.uniform(0.0, 0.8)).collect();
        let assign = |w: &[f64]| {
            let s = compute_scale(w, &table).unwrap();
            let grid = level_weights(&table, s);
            w.iter()
                .map(|&wi| nearest_level_weight(&grid, wi))
                .collect::<Vec<_>>()
        };
        let base = assign(&w);
        for c in [0.25, 3.0, 17.5] {
            let scaled: Vec<f64> = w.iter().map(|&wi| c * wi).collect();
            assert_eq!(assign(&scaled), base, "assignment changed at c = {c}");
        }
    }

    #[test]
    fn quantize_zero_sigma_lands_on_grid() {
        let table = zero_sigma_table();
        let mut rng = SeededRng::new(29, stream::DEVICE);
        let w: Vec<f64> = {
            let mut r = SeededRng::new(29, stream::INIT);
            (0..100).map(|_| r.uniform(0.01, 0.7)).collect()
        };
        let scale = compute_scale(&w, &table).unwrap();
        let grid = level_weights(&table, scale);
        let state = quantize_all(&w, scale, &table, &mut rng).unwrap();
        let max_gap = grid
            .windows(2)
            .map(|p| (p[0] - p[1]).abs())
            .fold(0.0f64, f64::max);
        let bottom = *grid.last().unwrap();
        for (j, &r) in state.programmed_ohm.iter().enumerate() {
            let eff = effective_weight(r, scale);
            match state.level_index[j] {
                Some(k) => {
                    assert!((eff - grid[k]).abs() < 1e-12);
                    if w[j] >= bottom {
                        // Nearest-neighbor bound inside the grid span.
                        assert!((eff - w[j]).abs() <= 0.5 * max_gap + 1e-12);
                    } else {
                        assert_eq!(k, grid.len() - 1);
                    }
                }
                None => {
                    // Off state: weight closer to zero than to the bottom level.
                    assert!(w[j] < 0.5 * bottom);
                    assert_eq!(eff, 0.0);
                }
            }
        }
    }

    #[test]
    fn quantization_error_matches_brute_force_expectation() {
        // Mean absolute quantization error over a random population matches
        // a brute-force evaluation of the same population within 5%.
        let table = zero_sigma_table();
        let mut wrng = SeededRng::new(31, stream::INIT);
        let w: Vec<f64> = (0..1000).map(|_| wrng.uniform(0.0, 0.6)).collect();
        let scale = compute_scale(&w, &table).unwrap();
        let grid = level_weights(&table, scale);
        let mut dev = SeededRng::new(31, stream::DEVICE);
        let state = quantize_all(&w, scale, &table, &mut dev).unwrap();
        let impl_err: f64 = state
            .programmed_ohm
            .iter()
            .zip(&w)
            .map(|(&r, &wi)| (effective_weight(r, scale) - wi).abs())
            .sum::<f64>()
            / w.len() as f64;
        // Oracle: exhaustive min over the grid per weight, with the off
        // state available below half the bottom level.
        let bottom = *grid.last().unwrap();
        let oracle_err: f64 = w
            .iter()
            .map(|&wi| {
                if wi < 0.5 * bottom {
                    wi
                } else {
                    grid.iter()
                        .map(|&l| (l - wi).abs())
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .sum::<f64>()
            / w.len() as f64;
        assert!(
            (impl_err - oracle_err).abs() <= 0.05 * oracle_err,
            "impl {impl_err} vs oracle {oracle_err}"
        );
    }

    #[test]
    fn zero_learning_rate_never_reprograms() {
        let config = small_net(37, 0.5);
        let dataset: Vec<_> = (0..6)
            .map(|i| {
                random_window(
                    i + 40,
                    150,
                    if i % 2 == 0 {
                        BeatLabel::Normal
                    } else {
                        BeatLabel::Anomalous
                    },
                )
            })
            .collect();
        let table = LrsLevelTable::default_table();
        let w = config.weights();
        let scale = compute_scale(&w, &table).unwrap();
        let mut dev = SeededRng::new(37, stream::DEVICE);
        let mut state = quantize_all(&w, scale, &table, &mut dev).unwrap();
        let before = (state.level_index.clone(), state.programmed_ohm.clone());
        let train = TrainConfig {
            n_training: 4,
            learning_rate: 1e-300,
            ..Default::default()
        };
        let mut shuffle = SeededRng::new(37, stream::SHUFFLE);
        let metrics = train_quantized(
            &config, &dataset, &mut state, &table, scale, &train, &mut shuffle, &mut dev,
        )
        .unwrap();
        assert!(metrics.iter().all(|m| m.reprogram_count == 0));
        assert_eq!(before, (state.level_index, state.programmed_ohm));
    }

    #[test]
    fn crossing_a_level_boundary_triggers_one_reprogram() {
        let config = small_net(41, 0.5);
        let dataset = vec![random_window(50, 100, BeatLabel::Normal)];
        let table = zero_sigma_table();
        let w = config.weights();
        let scale = compute_scale(&w, &table).unwrap();
        let grid = level_weights(&table, scale);
        let mut dev = SeededRng::new(41, stream::DEVICE);
        let mut state = quantize_all(&w, scale, &table, &mut dev).unwrap();
        // Force synapse 0 across a boundary; negligible learning rate keeps
        // everything else in place.
        let current = state.level_index[0].unwrap_or(grid.len() - 1);
        let target = if current == 0 { 1 } else { current - 1 };
        state.w[0] = grid[target];
        let train = TrainConfig {
            n_training: 2,
            learning_rate: 1e-300,
            ..Default::default()
        };
        let mut shuffle = SeededRng::new(41, stream::SHUFFLE);
        let metrics = train_quantized(
            &config, &dataset, &mut state, &table, scale, &train, &mut shuffle, &mut dev,
        )
        .unwrap();
        assert_eq!(metrics[0].reprogram_count, 1);
        assert_eq!(metrics[1].reprogram_count, 0);
        assert_eq!(state.level_index[0], Some(target));
    }

    #[test]
    fn evaluate_confusion_and_symmetry() {
        let config = small_net(43, 1e9);
        let weights = vec![0.0; config.n_synapses()];
        // Silent network predicts normal for everything.
        let one_normal = vec![random_window(60, 100, BeatLabel::Normal)];
        let report = evaluate(&config, &weights, &one_normal, 1).unwrap();
        assert_eq!(report.balanced_accuracy, 1.0);
        assert_eq!(report.true_normal, 1);

        let mixed = vec![
            random_window(61, 100, BeatLabel::Normal),
            random_window(62, 100, BeatLabel::Anomalous),
        ];
        let r = evaluate(&config, &weights, &mixed, 1).unwrap();
        let inverted: Vec<_> = mixed
            .iter()
            .map(|w| LabeledWindow {
                raster: w.raster.clone(),
                label: match w.label {
                    BeatLabel::Normal => BeatLabel::Anomalous,
                    BeatLabel::Anomalous => BeatLabel::Normal,
                },
            })
            .collect();
        let ri = evaluate(&config, &weights, &inverted, 1).unwrap();
        assert!((r.balanced_accuracy + ri.balanced_accuracy - 1.0).abs() < 1e-12);
        assert!(evaluate(&config, &weights, &[], 1).is_err());
    }
}
