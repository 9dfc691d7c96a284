//! Experiment orchestration: dataset preparation, training, evaluation, the
//! delay sweep and the footprint report.
//!
//! Every command is driven by an [`ExperimentConfig`] and writes
//! machine-readable outputs (JSON and CSV) into the run directory. Outputs
//! are byte-stable given identical config and seed; timestamps live only in
//! log lines on stderr.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, ExperimentConfig};
use crate::device::{footprint_bits, LrsLevelTable};
use crate::encoding::{
    delta_modulate, load_recording, segment_beats, synth_ecg, BeatLabel, LabeledWindow,
    SpikeRaster,
};
use crate::error::{Error, Result};
use crate::network::{init_network, NetworkConfig};
use crate::rng::{stream, SeededRng};
use crate::trainer::{
    self, compute_scale, evaluate, pick_decision_threshold, pretrain, quantize_all,
    train_quantized, EpochMetrics, EvalReport, ScaleFactor,
};

/// Paper reference values printed by the report alongside computed ones.
pub const REFERENCE_FOOTPRINT_BITS: u64 = 256;
pub const REFERENCE_SYNAPSES: usize = 128;

const DATASET_VERSION: u32 = 1;
const MODEL_VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(data).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&data).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut data = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    data.push(b'\n');
    write_file(path, &data)?;
    Ok(data)
}

/// One stored window: label plus spike step indices per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredWindow {
    pub label: BeatLabel,
    pub spike_steps: Vec<Vec<u32>>,
}

/// On-disk dataset of encoded windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: u32,
    pub dt_s: f64,
    pub channels: usize,
    pub duration_steps: usize,
    pub windows: Vec<StoredWindow>,
}

impl DatasetFile {
    pub fn from_windows(windows: &[LabeledWindow], dt_s: f64) -> Self {
        let channels = windows.first().map_or(0, |w| w.raster.channel_count());
        let duration_steps = windows.first().map_or(0, |w| w.raster.duration_steps());
        DatasetFile {
            version: DATASET_VERSION,
            dt_s,
            channels,
            duration_steps,
            windows: windows
                .iter()
                .map(|w| StoredWindow {
                    label: w.label,
                    spike_steps: (0..w.raster.channel_count())
                        .map(|c| w.raster.spike_times(c).iter().map(|&t| t as u32).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_windows(&self) -> Result<Vec<LabeledWindow>> {
        self.windows
            .iter()
            .map(|sw| {
                let mut raster = SpikeRaster::zeros(self.dt_s, self.channels, self.duration_steps)?;
                for (c, times) in sw.spike_steps.iter().enumerate() {
                    for &t in times {
                        raster.set(c, t as usize);
                    }
                }
                Ok(LabeledWindow {
                    raster,
                    label: sw.label,
                })
            })
            .collect()
    }
}

/// Class counts of one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_windows: usize,
    pub n_normal: usize,
    pub n_anomalous: usize,
    pub content_hash: String,
}

/// Provenance manifest written by `prepare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub dt_s: f64,
    pub window_s: f64,
    pub threshold_mv: f64,
    pub source: String,
    pub train: SplitSummary,
    pub test: SplitSummary,
}

fn split_summary(windows: &[LabeledWindow], json: &[u8]) -> SplitSummary {
    SplitSummary {
        n_windows: windows.len(),
        n_normal: windows
            .iter()
            .filter(|w| w.label == BeatLabel::Normal)
            .count(),
        n_anomalous: windows
            .iter()
            .filter(|w| w.label == BeatLabel::Anomalous)
            .count(),
        content_hash: sha256_hex(json),
    }
}

/// Run-directory file names.
pub mod files {
    pub const TRAIN_DATASET: &str = "dataset_train.json";
    pub const TEST_DATASET: &str = "dataset_test.json";
    pub const MANIFEST: &str = "manifest.json";
    pub const MODEL: &str = "model.json";
    pub const METRICS: &str = "metrics.csv";
    pub const TRAIN_SUMMARY: &str = "train_summary.json";
    pub const SWEEP: &str = "sweep.csv";
    pub const SWEEP_SUMMARY: &str = "sweep_summary.json";
}

/// Encode the configured data source into labeled train/test windows.
fn build_windows(config: &ExperimentConfig) -> Result<(Vec<LabeledWindow>, Vec<LabeledWindow>)> {
    let enc = &config.encoding;
    match enc.source {
        DataSource::Synthetic => {
            let data_rng = SeededRng::new(config.seed, stream::DATA);
            let mut train_rng = data_rng.substream(0);
            let mut test_rng = data_rng.substream(1);
            let encode = |n_beats: usize, rng: &mut SeededRng| -> Result<Vec<LabeledWindow>> {
                let (trace, anns) = synth_ecg(n_beats, enc.class_mix, &enc.synth, rng)?;
                let raster = delta_modulate(&trace, enc.threshold_mv, enc.dt_s)?;
                segment_beats(&raster, &anns, enc.window_s)
            };
            Ok((
                encode(enc.n_train_beats, &mut train_rng)?,
                encode(enc.n_test_beats, &mut test_rng)?,
            ))
        }
        DataSource::Csv => {
            let rec = enc.csv_recording.as_ref().unwrap();
            let ann = enc.csv_annotations.as_ref().unwrap();
            let (trace, annotations) = load_recording(rec, ann)?;
            let raster = delta_modulate(&trace, enc.threshold_mv, enc.dt_s)?;
            let windows = segment_beats(&raster, &annotations, enc.window_s)?;
            // Deterministic 80/20 split: every fifth window held out.
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, w) in windows.into_iter().enumerate() {
                if i % 5 == 4 {
                    test.push(w);
                } else {
                    train.push(w);
                }
            }
            Ok((train, test))
        }
    }
}

/// `prepare`: encode the dataset and write both splits plus the manifest.
pub fn cmd_prepare(config: &ExperimentConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let (train, test) = build_windows(config)?;
    let train_file = DatasetFile::from_windows(&train, config.encoding.dt_s);
    let test_file = DatasetFile::from_windows(&test, config.encoding.dt_s);
    let train_json = write_json(&out_dir.join(files::TRAIN_DATASET), &train_file)?;
    let test_json = write_json(&out_dir.join(files::TEST_DATASET), &test_file)?;
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        seed: config.seed,
        dt_s: config.encoding.dt_s,
        window_s: config.encoding.window_s,
        threshold_mv: config.encoding.threshold_mv,
        source: match config.encoding.source {
            DataSource::Synthetic => "synthetic".into(),
            DataSource::Csv => "csv".into(),
        },
        train: split_summary(&train, &train_json),
        test: split_summary(&test, &test_json),
    };
    write_json(&out_dir.join(files::MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Persisted model: topology, device state and the chosen operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Network with effective weights installed.
    pub network: NetworkConfig,
    pub table: LrsLevelTable,
    pub scale: ScaleFactor,
    /// `None` entries are devices left in the HRS off state.
    pub level_index: Vec<Option<usize>>,
    pub programmed_ohm: Vec<Option<f64>>,
    pub hidden_w: Vec<f64>,
    pub decision_threshold: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub fp_test_accuracy: f64,
}

/// Outcome of one full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub fp_report: EvalReport,
    pub quantized_report: EvalReport,
}

fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(config.to_toml()?.as_bytes()))
}

fn metrics_csv(pre: &[EpochMetrics], quant: &[EpochMetrics]) -> String {
    let mut out = String::from("phase,epoch,loss,accuracy,reprogram_count\n");
    for m in pre {
        let _ = writeln!(out, "pretrain,{},{},{},{}", m.epoch, m.loss, m.accuracy, m.reprogram_count);
    }
    for m in quant {
        let _ = writeln!(out, "quantized,{},{},{},{}", m.epoch, m.loss, m.accuracy, m.reprogram_count);
    }
    out
}

fn build_network(config: &ExperimentConfig, device_rng: &mut SeededRng) -> Result<NetworkConfig> {
    let hrs = config.hrs_per_branch()?;
    let mut init_rng = SeededRng::new(config.seed, stream::INIT);
    init_network(
        config.network.n_branches,
        config.network.synapses_per_branch,
        config.network.channels,
        &hrs,
        &config.network.tau_s,
        config.device.capacitance_f,
        config.encoding.dt_s,
        config.network.soma,
        device_rng,
        &mut init_rng,
    )
}

fn load_dataset(out_dir: &Path, name: &str) -> Result<Vec<LabeledWindow>> {
    let file: DatasetFile = read_json(&out_dir.join(name))?;
    if file.version != DATASET_VERSION {
        return Err(Error::Config(format!(
            "unsupported dataset version {}",
            file.version
        )));
    }
    file.to_windows()
}

/// `train`: the full procedure — pre-training on full-precision weights,
/// scale computation, quantization, quantized training — followed by the
/// decision-threshold sweep and held-out evaluation. Writes the model file,
/// per-epoch metrics CSV and a summary.
pub fn cmd_train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let train_set = load_dataset(out_dir, files::TRAIN_DATASET)?;
    let test_set = load_dataset(out_dir, files::TEST_DATASET)?;
    let table = config.lrs_table()?;
    let mut device_rng = SeededRng::new(config.seed, stream::DEVICE);
    let mut shuffle_rng = SeededRng::new(config.seed, stream::SHUFFLE);
    let network = build_network(config, &mut device_rng)?;

    let pre = pretrain(&network, &train_set, &config.training, &mut shuffle_rng)?;

    let scale = compute_scale(&pre.weights, &table)?;
    let mut state = quantize_all(&pre.weights, scale, &table, &mut device_rng)?;
    let quant_metrics = train_quantized(
        &network,
        &train_set,
        &mut state,
        &table,
        scale,
        &config.training,
        &mut shuffle_rng,
        &mut device_rng,
    )?;

    let effective: Vec<f64> = state
        .programmed_ohm
        .iter()
        .map(|&r| trainer::effective_weight(r, scale))
        .collect();
    let decision_threshold = pick_decision_threshold(&network, &effective, &train_set)?;
    let train_report = evaluate(&network, &effective, &train_set, decision_threshold)?;
    let quantized_report = evaluate(&network, &effective, &test_set, decision_threshold)?;
    // Full-precision baseline at its own best threshold, for the robustness
    // comparison.
    let fp_threshold = pick_decision_threshold(&network, &pre.weights, &train_set)?;
    let fp_report = evaluate(&network, &pre.weights, &test_set, fp_threshold)?;

    let mut trained_network = network.clone();
    trained_network.set_weights(&effective)?;
    let model = ModelFile {
        version: MODEL_VERSION,
        config_hash: config_hash(config)?,
        seed: config.seed,
        network: trained_network,
        table,
        scale,
        level_index: state.level_index.clone(),
        programmed_ohm: state.programmed_ohm.clone(),
        hidden_w: state.w.clone(),
        decision_threshold,
        train_accuracy: train_report.balanced_accuracy,
        test_accuracy: quantized_report.balanced_accuracy,
        fp_test_accuracy: fp_report.balanced_accuracy,
    };
    write_json(&out_dir.join(files::MODEL), &model)?;
    write_file(
        &out_dir.join(files::METRICS),
        metrics_csv(&pre.metrics, &quant_metrics).as_bytes(),
    )?;
    write_json(&out_dir.join(files::TRAIN_SUMMARY), &serde_json::json!({
        "decision_threshold": decision_threshold,
        "train_balanced_accuracy": train_report.balanced_accuracy,
        "test_balanced_accuracy": quantized_report.balanced_accuracy,
        "fp_test_balanced_accuracy": fp_report.balanced_accuracy,
        "reprogram_events": quant_metrics.iter().map(|m| m.reprogram_count).sum::<usize>(),
    }))?;
    Ok(TrainOutcome {
        model,
        fp_report,
        quantized_report,
    })
}

/// Load a model file, validating its version.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    let model: ModelFile = read_json(path)?;
    if model.version != MODEL_VERSION {
        return Err(Error::Config(format!(
            "unsupported model version {}",
            model.version
        )));
    }
    Ok(model)
}

/// `eval`: rerun a persisted model against the held-out split.
pub fn cmd_eval(_config: &ExperimentConfig, out_dir: &Path, model_path: &Path) -> Result<EvalReport> {
    let model = load_model(model_path)?;
    let test_set = load_dataset(out_dir, files::TEST_DATASET)?;
    let weights = model.network.weights();
    evaluate(
        &model.network,
        &weights,
        &test_set,
        model.decision_threshold,
    )
}

/// One sweep measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub hrs_median_ohm: f64,
    pub mean_delay_ms: f64,
    pub accuracy: f64,
    pub seed: u64,
}

/// Complete sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
}

impl SweepResult {
    /// Mean accuracy per grid point, in grid order.
    pub fn mean_by_point(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&m| {
                let acc: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.hrs_median_ohm == m)
                    .map(|r| r.accuracy)
                    .collect();
                (m, acc.iter().sum::<f64>() / acc.len().max(1) as f64)
            })
            .collect()
    }
}

/// `sweep`: a full prepare-train-evaluate cycle per (HRS median x seed),
/// emitting one CSV row each. Failing points are recorded and skipped.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepResult> {
    config.validate()?;
    if config.sweep.hrs_medians_ohm.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &median in &config.sweep.hrs_medians_ohm {
        for rep in 0..config.sweep.repetitions {
            let mut point = config.with_hrs_median(median);
            point.seed = config.seed.wrapping_add(rep as u64);
            let point_dir = out_dir.join(format!("point_{median:.3e}_seed{}", point.seed));
            let result = cmd_prepare(&point, &point_dir)
                .and_then(|_| cmd_train(&point, &point_dir));
            match result {
                Ok(outcome) => rows.push(SweepRow {
                    hrs_median_ohm: median,
                    mean_delay_ms: median * point.device.capacitance_f * 1e3,
                    accuracy: outcome.quantized_report.balanced_accuracy,
                    seed: point.seed,
                }),
                Err(e) => failures.push(format!(
                    "median {median:.3e} seed {}: {e}",
                    point.seed
                )),
            }
        }
    }
    let mut csv = String::from("hrs_median_ohm,mean_delay_ms,accuracy,seed\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.hrs_median_ohm, r.mean_delay_ms, r.accuracy, r.seed);
    }
    write_file(&out_dir.join(files::SWEEP), csv.as_bytes())?;
    let result = SweepResult { rows, failures };
    let by_point = result.mean_by_point(&config.sweep.hrs_medians_ohm);
    let best = by_point
        .iter()
        .cloned()
        .fold((0.0, f64::NEG_INFINITY), |best, p| {
            if p.1 > best.1 {
                p
            } else {
                best
            }
        });
    write_json(&out_dir.join(files::SWEEP_SUMMARY), &serde_json::json!({
        "best_hrs_median_ohm": best.0,
        "best_mean_delay_ms": best.0 * config.device.capacitance_f * 1e3,
        "best_mean_accuracy": best.1,
        "failures": result.failures,
    }))?;
    Ok(result)
}

/// Text report of a model's memory footprint and delay statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FootprintReport {
    pub n_synapses: usize,
    pub n_levels: usize,
    pub footprint_bits: u64,
    pub reference_footprint_bits: u64,
    pub reference_synapses: usize,
    pub delay_min_ms: f64,
    pub delay_mean_ms: f64,
    pub delay_max_ms: f64,
}

/// `report`: footprint and delay statistics of a persisted model, with the
/// published reference values printed alongside.
pub fn cmd_report(model_path: &Path) -> Result<FootprintReport> {
    let model = load_model(model_path)?;
    let n_synapses = model.network.n_synapses();
    let n_levels = model.table.len();
    let delays_ms: Vec<f64> = model
        .network
        .synapses()
        .map(|s| s.delay_s * 1e3)
        .collect();
    let n = delays_ms.len().max(1) as f64;
    Ok(FootprintReport {
        n_synapses,
        n_levels,
        footprint_bits: footprint_bits(n_synapses, n_levels)?,
        reference_footprint_bits: REFERENCE_FOOTPRINT_BITS,
        reference_synapses: REFERENCE_SYNAPSES,
        delay_min_ms: delays_ms.iter().cloned().fold(f64::INFINITY, f64::min),
        delay_mean_ms: delays_ms.iter().sum::<f64>() / n,
        delay_max_ms: delays_ms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

impl FootprintReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "synapses:        {}", self.n_synapses);
        let _ = writeln!(out, "weight levels:   {}", self.n_levels);
        let _ = writeln!(out, "footprint:       {} bits", self.footprint_bits);
        let _ = writeln!(
            out,
            "reference:       {} bits for {} synapses (published table)",
            self.reference_footprint_bits, self.reference_synapses
        );
        if self.n_synapses == REFERENCE_SYNAPSES
            && self.footprint_bits != REFERENCE_FOOTPRINT_BITS
        {
            let _ = writeln!(
                out,
                "note: {} synapses x ceil(log2({})) = {} bits differs from the \
                 published {} b figure, which matches 2-bit weights",
                self.n_synapses, self.n_levels, self.footprint_bits,
                self.reference_footprint_bits
            );
        }
        let _ = writeln!(
            out,
            "delays:          min {:.3} ms / mean {:.3} ms / max {:.3} ms",
            self.delay_min_ms, self.delay_mean_ms, self.delay_max_ms
        );
        out
    }
}

/// Convenience for tests and the Python bindings: resolve a run directory
/// from config, defaulting next to the config's `out_dir` or cwd.
pub fn resolve_out_dir(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"))
}
