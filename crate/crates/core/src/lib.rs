//! Simulation and training toolkit for a feed-forward spiking network whose
//! synapses combine a fixed stochastic delay (an RRAM-capacitor element) with
//! a trainable quantized weight (discrete RRAM low-resistive-state levels).
//!
//! The crate is organized around five subsystems:
//!
//! - [`device`]: statistical RRAM models — log-normal high-resistive-state
//!   sampling for delays, discrete Gaussian-programmed levels for weights,
//!   RC delay arithmetic and the memory-footprint formula.
//! - [`encoding`]: delta modulation of analog traces into spike rasters, beat
//!   segmentation, CSV recording I/O and a synthetic two-class ECG-like
//!   generator whose classes differ only in timing structure.
//! - [`network`]: clocked forward simulation of the dendritic architecture —
//!   per-synapse delay lines, per-branch leaky current integrators with
//!   branch-specific time constants, and a LIF soma.
//! - [`trainer`]: surrogate-gradient backpropagation through time with the
//!   mixed-precision device-aware procedure: full-precision pre-training,
//!   scale-factor computation, quantized training on hidden weights with
//!   level-change-triggered reprogramming.
//! - [`experiment`]: declarative experiment configs and the orchestration
//!   behind the `dendrite` CLI (prepare / train / eval / sweep / report).

pub mod config;
pub mod device;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod network;
pub mod rng;
pub mod trainer;

pub use config::ExperimentConfig;
pub use device::{DelayElement, HrsDistribution, LrsLevelTable};
pub use encoding::{AnalogTrace, BeatLabel, LabeledWindow, SpikeRaster};
pub use error::{Error, Result};
pub use network::{NetworkConfig, NetworkState};
pub use rng::SeededRng;
pub use trainer::{HiddenWeights, ScaleFactor, TrainConfig};
