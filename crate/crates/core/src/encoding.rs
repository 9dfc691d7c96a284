//! Spike encoding of analog traces.
//!
//! Analog recordings are converted to spike rasters by delta modulation:
//! each input channel tracks a reconstruction level and emits an UP or DOWN
//! event whenever the signal departs from that level by one threshold step.
//! Beat annotations then cut the raster into fixed-length labeled windows.
//!
//! A synthetic two-class generator stands in for licensed ECG data at desk
//! scale. Its classes differ only in the timing of the second wave of each
//! beat, so only delay-sensitive models can separate them.

use std::fmt;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Multichannel analog recording at a uniform sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogTrace {
    sample_period_s: f64,
    /// One amplitude vector (mV) per channel; all equal length.
    channels: Vec<Vec<f64>>,
}

impl AnalogTrace {
    pub fn new(sample_period_s: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_period_s > 0.0) {
            return Err(Error::Domain(format!(
                "sample period must be > 0 s, got {sample_period_s}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::Domain("trace needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Domain("all channels must have equal length".into()));
        }
        Ok(AnalogTrace {
            sample_period_s,
            channels,
        })
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 * self.sample_period_s
    }
}

/// Multichannel binary spike train at a fixed simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    dt_s: f64,
    duration_steps: usize,
    /// `spikes[channel][step]` in {0, 1}.
    spikes: Vec<Vec<u8>>,
}

impl SpikeRaster {
    pub fn zeros(dt_s: f64, channels: usize, duration_steps: usize) -> Result<Self> {
        if !(dt_s > 0.0) {
            return Err(Error::Domain(format!("dt must be > 0 s, got {dt_s}")));
        }
        Ok(SpikeRaster {
            dt_s,
            duration_steps,
            spikes: vec![vec![0; duration_steps]; channels],
        })
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn channel_count(&self) -> usize {
        self.spikes.len()
    }

    pub fn duration_steps(&self) -> usize {
        self.duration_steps
    }

    pub fn get(&self, channel: usize, step: usize) -> u8 {
        self.spikes[channel][step]
    }

    pub fn set(&mut self, channel: usize, step: usize) {
        self.spikes[channel][step] = 1;
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        &self.spikes[c]
    }

    /// Spike step indices of one channel.
    pub fn spike_times(&self, channel: usize) -> Vec<usize> {
        self.spikes[channel]
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(t, _)| t)
            .collect()
    }

    pub fn total_spikes(&self, channel: usize) -> usize {
        self.spikes[channel].iter().map(|&s| s as usize).sum()
    }

    /// Contiguous sub-raster over `[start, start + len)` steps.
    pub fn window(&self, start: usize, len: usize) -> SpikeRaster {
        SpikeRaster {
            dt_s: self.dt_s,
            duration_steps: len,
            spikes: self
                .spikes
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
        }
    }
}

/// Two-class beat label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatLabel {
    Normal,
    Anomalous,
}

impl fmt::Display for BeatLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeatLabel::Normal => write!(f, "normal"),
            BeatLabel::Anomalous => write!(f, "anomalous"),
        }
    }
}

impl std::str::FromStr for BeatLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "normal" => Ok(BeatLabel::Normal),
            "anomalous" => Ok(BeatLabel::Anomalous),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

/// One fixed-length raster window with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub raster: SpikeRaster,
    pub label: BeatLabel,
}

/// Beat annotation: time of the beat center plus its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub time_s: f64,
    pub label: BeatLabel,
}

/// Default delta-modulator threshold.
pub const DEFAULT_THRESHOLD_MV: f64 = 0.1;
/// Default simulation step.
pub const DEFAULT_DT_S: f64 = 1e-3;
/// Default beat window length.
pub const DEFAULT_WINDOW_S: f64 = 0.7;

/// Delta-modulate `trace` into a spike raster.
///
/// Each input channel produces two output channels: UP at `2c`, DOWN at
/// `2c + 1`. A per-channel reconstruction level starts at the first sample;
/// each emitted event moves it by one threshold step. At most one spike per
/// output channel per dt bin; events beyond that are dropped and the level
/// holds until a later bin.
pub fn delta_modulate(trace: &AnalogTrace, threshold_mv: f64, dt_s: f64) -> Result<SpikeRaster> {
    if !(threshold_mv > 0.0) {
        return Err(Error::Domain(format!(
            "threshold must be > 0 mV, got {threshold_mv}"
        )));
    }
    if dt_s + 1e-12 < trace.sample_period_s() {
        return Err(Error::Domain(format!(
            "dt {dt_s} must be >= sample period {}",
            trace.sample_period_s()
        )));
    }
    let n = trace.len();
    let sp = trace.sample_period_s();
    let duration_steps = if n == 0 {
        0
    } else {
        ((n - 1) as f64 * sp / dt_s).floor() as usize + 1
    };
    let mut raster = SpikeRaster::zeros(dt_s, 2 * trace.channel_count(), duration_steps)?;
    for c in 0..trace.channel_count() {
        let samples = trace.channel(c);
        if samples.is_empty() {
            continue;
        }
        let mut level = samples[0];
        for (i, &x) in samples.iter().enumerate() {
            let bin = (i as f64 * sp / dt_s).floor() as usize;
            while x - level >= threshold_mv {
                if raster.get(2 * c, bin) != 0 {
                    break;
                }
                raster.set(2 * c, bin);
                level += threshold_mv;
            }
            while level - x >= threshold_mv {
                if raster.get(2 * c + 1, bin) != 0 {
                    break;
                }
                raster.set(2 * c + 1, bin);
                level -= threshold_mv;
            }
        }
    }
    Ok(raster)
}

/// Cut one fixed-length window per annotation, centered on the annotation
/// time. Windows that would extend past either recording edge are dropped.
pub fn segment_beats(
    raster: &SpikeRaster,
    annotations: &[Annotation],
    window_s: f64,
) -> Result<Vec<LabeledWindow>> {
    if !(window_s > 0.0) {
        return Err(Error::Domain(format!(
            "window length must be > 0 s, got {window_s}"
        )));
    }
    let dt = raster.dt_s();
    let len = (window_s / dt).round() as usize;
    let mut windows = Vec::new();
    for ann in annotations {
        let start = ((ann.time_s - window_s / 2.0) / dt).round() as i64;
        if start < 0 || start as usize + len > raster.duration_steps() {
            continue;
        }
        windows.push(LabeledWindow {
            raster: raster.window(start as usize, len),
            label: ann.label,
        });
    }
    Ok(windows)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Load a recording from the documented CSV schema.
///
/// Recording file: header `time_s,ch0_mv[,ch1_mv...]`, one row per sample.
/// The sample period is inferred from the first two rows and validated as
/// uniform within one part in 10^3. Annotation file: header `time_s,label`
/// with labels `normal` or `anomalous`.
pub fn load_recording(
    recording_path: &Path,
    annotation_path: &Path,
) -> Result<(AnalogTrace, Vec<Annotation>)> {
    let trace = load_trace_csv(recording_path)?;
    let annotations = load_annotations_csv(annotation_path)?;
    Ok((trace, annotations))
}

fn open_reader(path: &Path) -> Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn load_trace_csv(path: &Path) -> Result<AnalogTrace> {
    let reader = open_reader(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut channels: Vec<Vec<f64>> = Vec::new();
    let mut n_cols = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            let header: Vec<&str> = line.split(',').collect();
            if header.first() != Some(&"time_s") || header.len() < 2 {
                return Err(parse_err(1, "expected header 'time_s,ch0_mv[,...]'"));
            }
            n_cols = header.len();
            channels = vec![Vec::new(); n_cols - 1];
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(parse_err(
                lineno,
                format!("expected {n_cols} columns, found {}", fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad time value '{}'", fields[0])))?;
        times.push(t);
        for (c, field) in fields[1..].iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad amplitude '{field}'")))?;
            channels[c].push(v);
        }
    }
    if times.len() < 2 {
        return Err(parse_err(times.len() + 1, "need at least 2 sample rows"));
    }
    let period = times[1] - times[0];
    if !(period > 0.0) {
        return Err(parse_err(3, "timestamps must be strictly increasing"));
    }
    for (i, pair) in times.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if ((step - period) / period).abs() > 1e-3 {
            return Err(parse_err(
                i + 3,
                format!("non-uniform sampling: step {step} vs period {period}"),
            ));
        }
    }
    AnalogTrace::new(period, channels)
}

fn load_annotations_csv(path: &Path) -> Result<Vec<Annotation>> {
    let reader = open_reader(path)?;
    let mut annotations = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != "time_s,label" {
                return Err(parse_err(1, "expected header 'time_s,label'"));
            }
            continue;
        }
        let (t_str, label_str) = line
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected 'time_s,label'"))?;
        let time_s: f64 = t_str
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad time value '{t_str}'")))?;
        let label: BeatLabel = label_str
            .parse()
            .map_err(|m: String| parse_err(lineno, m))?;
        annotations.push(Annotation { time_s, label });
    }
    Ok(annotations)
}

/// Write a recording and its annotations in the CSV schema read by
/// [`load_recording`].
pub fn write_recording(
    recording_path: &Path,
    annotation_path: &Path,
    trace: &AnalogTrace,
    annotations: &[Annotation],
) -> Result<()> {
    let mut rec = std::fs::File::create(recording_path)
        .map_err(|e| Error::io(recording_path, e))?;
    let header: Vec<String> = std::iter::once("time_s".to_string())
        .chain((0..trace.channel_count()).map(|c| format!("ch{c}_mv")))
        .collect();
    writeln!(rec, "{}", header.join(",")).map_err(|e| Error::io(recording_path, e))?;
    for i in 0..trace.len() {
        let mut row = format!("{:.6}", i as f64 * trace.sample_period_s());
        for c in 0..trace.channel_count() {
            row.push_str(&format!(",{:.6}", trace.channel(c)[i]));
        }
        writeln!(rec, "{row}").map_err(|e| Error::io(recording_path, e))?;
    }
    let mut ann = std::fs::File::create(annotation_path)
        .map_err(|e| Error::io(annotation_path, e))?;
    writeln!(ann, "time_s,label").map_err(|e| Error::io(annotation_path, e))?;
    for a in annotations {
        writeln!(ann, "{:.6},{}", a.time_s, a.label).map_err(|e| Error::io(annotation_path, e))?;
    }
    Ok(())
}

/// Parameters of the synthetic two-class beat generator.
///
/// Each beat is a pair of raised-cosine waves. The classes share the wave
/// shapes and differ only in the inter-wave interval: the anomalous class
/// has its second wave displaced by `displacement_s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub beat_period_s: f64,
    pub sample_period_s: f64,
    /// Offset of the first wave from the beat start.
    pub first_wave_s: f64,
    /// Inter-wave interval of the normal class.
    pub normal_interval_s: f64,
    /// The anomalous second wave arrives this much earlier.
    pub displacement_s: f64,
    pub wave_width_s: f64,
    pub amp1_mv: f64,
    pub amp2_mv: f64,
    /// Relative amplitude jitter applied to every beat.
    pub amplitude_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            beat_period_s: 0.7,
            sample_period_s: 1e-3,
            first_wave_s: 0.15,
            normal_interval_s: 0.12,
            displacement_s: 0.08,
            wave_width_s: 0.03,
            amp1_mv: 1.0,
            amp2_mv: 0.8,
            amplitude_jitter: 0.1,
        }
    }
}

/// Generate a 1-channel synthetic trace of `n_beats` beats with anomalous
/// fraction `class_mix`, plus one annotation per beat center.
///
/// Deterministic given `(rng seed/stream, params)`.
pub fn synth_ecg(
    n_beats: usize,
    class_mix: f64,
    params: &SynthParams,
    rng: &mut SeededRng,
) -> Result<(AnalogTrace, Vec<Annotation>)> {
    if !(0.0..=1.0).contains(&class_mix) {
        return Err(Error::Domain(format!(
            "class_mix must be in [0, 1], got {class_mix}"
        )));
    }
    let sp = params.sample_period_s;
    let beat_len = (params.beat_period_s / sp).round() as usize;
    let mut samples = vec![0.0f64; n_beats * beat_len];
    let mut annotations = Vec::with_capacity(n_beats);
    for b in 0..n_beats {
        let anomalous = rng.bernoulli(class_mix);
        // Jitter both classes identically so amplitude statistics carry no
        // class information; the classes differ only in timing.
        let gain = 1.0 + params.amplitude_jitter * rng.uniform(-1.0, 1.0);
        let beat_start = b as f64 * params.beat_period_s;
        let wave1 = beat_start + params.first_wave_s;
        let interval = if anomalous {
            params.normal_interval_s - params.displacement_s
        } else {
            params.normal_interval_s
        };
        let wave2 = wave1 + interval;
        add_wave(&mut samples, sp, wave1, params.wave_width_s, gain * params.amp1_mv);
        add_wave(&mut samples, sp, wave2, params.wave_width_s, gain * params.amp2_mv);
        annotations.push(Annotation {
            time_s: beat_start + params.beat_period_s / 2.0,
            label: if anomalous {
                BeatLabel::Anomalous
            } else {
                BeatLabel::Normal
            },
        });
    }
    let trace = AnalogTrace::new(sp, vec![samples])?;
    Ok((trace, annotations))
}

/// Add a raised-cosine bump of the given width and peak amplitude.
fn add_wave(samples: &mut [f64], sp: f64, onset_s: f64, width_s: f64, amp_mv: f64) {
    let start = (onset_s / sp).ceil() as usize;
    let end = ((onset_s + width_s) / sp).floor() as usize;
    for i in start..=end.min(samples.len().saturating_sub(1)) {
        let phase = (i as f64 * sp - onset_s) / width_s;
        samples[i] += amp_mv * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos());
    }
}
