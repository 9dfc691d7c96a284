//! Python bindings for the dendritic delay-network simulator.
//!
//! Build with `cargo build --release -p dendritic-py`, then rename or copy
//! `libdendritic_py.so` to `dendritic_py.so` somewhere on `sys.path` (see
//! `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dendritic::device::{
    self, HrsDistribution, LrsLevelTable, DEFAULT_CAPACITANCE_F, DEFAULT_HRS_MEDIAN_OHM,
    DEFAULT_HRS_SIGMA_LOG,
};
use dendritic::encoding::{
    self, AnalogTrace, BeatLabel, SpikeRaster, SynthParams, DEFAULT_THRESHOLD_MV,
    DEFAULT_WINDOW_S,
};
use dendritic::network::{self, NetworkConfig, SomaConfig, DEFAULT_BRANCH_TAUS_S};
use dendritic::rng::{stream, SeededRng};
use dendritic::trainer;

fn py_err(e: dendritic::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Quantized LRS level table.
#[pyclass(name = "LrsTable")]
struct PyLrsTable {
    inner: LrsLevelTable,
}

#[pymethods]
impl PyLrsTable {
    /// Default eight-level, conductance-equispaced table on [7k, 50k] ohm.
    #[new]
    fn new() -> Self {
        PyLrsTable {
            inner: LrsLevelTable::default_table(),
        }
    }

    /// Conductance-equispaced table with `n_levels` levels on the window.
    #[staticmethod]
    fn conductance_spaced(
        n_levels: usize,
        min_ohm: f64,
        max_ohm: f64,
        sigma_fraction: f64,
    ) -> PyResult<Self> {
        Ok(PyLrsTable {
            inner: LrsLevelTable::conductance_spaced(n_levels, min_ohm, max_ohm, sigma_fraction)
                .map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Target mean resistance per level, in ohm.
    fn mu_ohms(&self) -> Vec<f64> {
        self.inner.levels().iter().map(|l| l.mu_ohm).collect()
    }

    /// Index of the level whose mean is closest to `resistance_ohm`.
    fn nearest_level(&self, resistance_ohm: f64) -> usize {
        device::nearest_level(&self.inner, resistance_ohm)
    }

    /// Draw one programmed resistance for `level` (Gaussian noise, clamped
    /// to the window).
    fn program(&self, level: usize, seed: u64) -> PyResult<f64> {
        let mut rng = SeededRng::new(seed, stream::DEVICE);
        device::program_lrs(&self.inner, level, &mut rng).map_err(py_err)
    }

    /// Digital footprint in bits of `n_synapses` synapses at this table's
    /// resolution.
    fn footprint_bits(&self, n_synapses: usize) -> PyResult<u64> {
        device::footprint_bits(n_synapses, self.inner.len()).map_err(py_err)
    }
}

fn raster_from_steps(spike_steps: Vec<Vec<usize>>, duration_steps: usize, dt_s: f64) -> PyResult<SpikeRaster> {
    let mut raster =
        SpikeRaster::zeros(dt_s, spike_steps.len(), duration_steps).map_err(py_err)?;
    for (c, steps) in spike_steps.iter().enumerate() {
        for &t in steps {
            if t >= duration_steps {
                return Err(PyValueError::new_err(format!(
                    "spike step {t} out of range on channel {c} (duration {duration_steps})"
                )));
            }
            raster.set(c, t);
        }
    }
    Ok(raster)
}

/// A feed-forward dendritic delay network with one LIF soma.
#[pyclass(name = "Network")]
struct PyNetwork {
    config: NetworkConfig,
}

#[pymethods]
impl PyNetwork {
    /// Sample a fresh network: per-synapse delays from the HRS log-normal
    /// times the membrane capacitance, weights uniform on [0, 0.5].
    #[new]
    #[pyo3(signature = (seed, n_branches=2, synapses_per_branch=64, channels=2,
                        hrs_median_ohm=DEFAULT_HRS_MEDIAN_OHM,
                        hrs_sigma_log=DEFAULT_HRS_SIGMA_LOG,
                        capacitance_f=DEFAULT_CAPACITANCE_F, dt_s=1e-3))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        n_branches: usize,
        synapses_per_branch: usize,
        channels: usize,
        hrs_median_ohm: f64,
        hrs_sigma_log: f64,
        capacitance_f: f64,
        dt_s: f64,
    ) -> PyResult<Self> {
        let hrs = vec![
            HrsDistribution::new(hrs_median_ohm, hrs_sigma_log, "hrs").map_err(py_err)?;
            n_branches
        ];
        let taus: Vec<f64> = (0..n_branches)
            .map(|b| DEFAULT_BRANCH_TAUS_S[b % DEFAULT_BRANCH_TAUS_S.len()])
            .collect();
        let mut device_rng = SeededRng::new(seed, stream::DEVICE);
        let mut init_rng = SeededRng::new(seed, stream::INIT);
        let config = network::init_network(
            n_branches,
            synapses_per_branch,
            channels,
            &hrs,
            &taus,
            capacitance_f,
            dt_s,
            SomaConfig::default(),
            &mut device_rng,
            &mut init_rng,
        )
        .map_err(py_err)?;
        Ok(PyNetwork { config })
    }

    #[getter]
    fn n_synapses(&self) -> usize {
        self.config.n_synapses()
    }

    #[getter]
    fn dt_s(&self) -> f64 {
        self.config.dt_s
    }

    /// Synaptic weights in flat (branch, position) order.
    fn weights(&self) -> Vec<f64> {
        self.config.weights()
    }

    fn set_weights(&mut self, weights: Vec<f64>) -> PyResult<()> {
        self.config.set_weights(&weights).map_err(py_err)
    }

    /// Per-synapse delays in time steps, flat order.
    fn delay_steps(&self) -> Vec<usize> {
        self.config.synapses().map(|s| s.delay_steps).collect()
    }

    /// Output spike count for one window given as per-channel spike step
    /// lists.
    fn run(&self, spike_steps: Vec<Vec<usize>>, duration_steps: usize) -> PyResult<usize> {
        let raster = raster_from_steps(spike_steps, duration_steps, self.config.dt_s)?;
        let (count, _) = network::run(&self.config, &raster, false).map_err(py_err)?;
        Ok(count)
    }

    /// Post-reset membrane trace for one window.
    fn membrane(&self, spike_steps: Vec<Vec<usize>>, duration_steps: usize) -> PyResult<Vec<f64>> {
        let raster = raster_from_steps(spike_steps, duration_steps, self.config.dt_s)?;
        let (_, trace) = network::run(&self.config, &raster, true).map_err(py_err)?;
        Ok(trace.expect("trace requested").membrane_v)
    }

    /// Loss and per-synapse gradient of the surrogate peak-membrane loss on
    /// one labeled window.
    fn loss_and_grad(
        &self,
        spike_steps: Vec<Vec<usize>>,
        duration_steps: usize,
        label: &str,
        surrogate_slope: f64,
    ) -> PyResult<(f64, Vec<f64>)> {
        let label: BeatLabel = label.parse().map_err(PyValueError::new_err)?;
        let raster = raster_from_steps(spike_steps, duration_steps, self.config.dt_s)?;
        let window = encoding::LabeledWindow { raster, label };
        trainer::loss_and_grad(
            &self.config,
            &window,
            &self.config.weights(),
            surrogate_slope,
            0,
        )
        .map_err(py_err)
    }
}

/// RC delay in seconds.
#[pyfunction]
fn delay_from_rc(resistance_ohm: f64, capacitance_f: f64) -> PyResult<f64> {
    device::delay_from_rc(resistance_ohm, capacitance_f).map_err(py_err)
}

/// Draw `n` HRS resistances from the log-normal device distribution.
#[pyfunction]
fn sample_hrs(median_ohm: f64, sigma_log: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let dist = HrsDistribution::new(median_ohm, sigma_log, "hrs").map_err(py_err)?;
    let mut rng = SeededRng::new(seed, stream::DEVICE);
    Ok((0..n).map(|_| device::sample_hrs(&dist, &mut rng)).collect())
}

/// Delta-modulate multi-channel analog samples into per-channel spike step
/// lists (UP at `2c`, DOWN at `2c + 1`).
#[pyfunction]
fn delta_modulate(
    channels: Vec<Vec<f64>>,
    sample_period_s: f64,
    threshold_mv: f64,
    dt_s: f64,
) -> PyResult<Vec<Vec<usize>>> {
    let trace = AnalogTrace::new(sample_period_s, channels).map_err(py_err)?;
    let raster = encoding::delta_modulate(&trace, threshold_mv, dt_s).map_err(py_err)?;
    Ok((0..raster.channel_count())
        .map(|c| raster.spike_times(c))
        .collect())
}

/// Generate `n_beats` synthetic two-class heartbeat windows, already
/// delta-modulated and segmented. Returns `(spike_steps, duration, label)`
/// triples.
#[pyfunction]
#[pyo3(signature = (n_beats, seed, class_mix=0.5))]
fn synth_windows(
    n_beats: usize,
    seed: u64,
    class_mix: f64,
) -> PyResult<Vec<(Vec<Vec<usize>>, usize, String)>> {
    let params = SynthParams::default();
    let mut rng = SeededRng::new(seed, stream::DATA);
    let (trace, annotations) =
        encoding::synth_ecg(n_beats, class_mix, &params, &mut rng).map_err(py_err)?;
    let raster =
        encoding::delta_modulate(&trace, DEFAULT_THRESHOLD_MV, params.sample_period_s)
            .map_err(py_err)?;
    let windows =
        encoding::segment_beats(&raster, &annotations, DEFAULT_WINDOW_S).map_err(py_err)?;
    Ok(windows
        .into_iter()
        .map(|w| {
            let steps: Vec<Vec<usize>> = (0..w.raster.channel_count())
                .map(|c| w.raster.spike_times(c))
                .collect();
            (steps, w.raster.duration_steps(), w.label.to_string())
        })
        .collect())
}

/// Digital footprint in bits of a synapse population at a given level count.
#[pyfunction]
fn footprint_bits(n_synapses: usize, n_levels: usize) -> PyResult<u64> {
    device::footprint_bits(n_synapses, n_levels).map_err(py_err)
}

#[pymodule]
fn dendritic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLrsTable>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(delay_from_rc, m)?)?;
    m.add_function(wrap_pyfunction!(sample_hrs, m)?)?;
    m.add_function(wrap_pyfunction!(delta_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(synth_windows, m)?)?;
    m.add_function(wrap_pyfunction!(footprint_bits, m)?)?;
    Ok(())
}
