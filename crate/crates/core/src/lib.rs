//! Spiking neural state machine that detects monotonic heart-rate trends
//! from single-lead ECG.
//!
//! The numerical core (neuron, synapse and filter updates, and the engine)
//! is generic over [`Scalar`]; the f64 and f32 aliases below cover the
//! common cases.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dsp;
pub mod engine;
pub mod error;
pub mod io;
pub mod network;
pub mod neuron;
pub mod pipeline;
pub mod scalar;
pub mod stimuli;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type AdExParams64 = neuron::AdExParams<f64>;
pub type AdExParams32 = neuron::AdExParams<f32>;
pub type LifParams64 = neuron::LifParams<f64>;
pub type LifParams32 = neuron::LifParams<f32>;
pub type NeuronState64 = neuron::NeuronState<f64>;
pub type NeuronState32 = neuron::NeuronState<f32>;
pub type SynapseParams64 = neuron::SynapseParams<f64>;
pub type SynapseParams32 = neuron::SynapseParams<f32>;
pub type BiquadCascade64 = dsp::BiquadCascade<f64>;
pub type BiquadCascade32 = dsp::BiquadCascade<f32>;
pub type Signal64 = dsp::SampledSignal<f64>;
pub type Signal32 = dsp::SampledSignal<f32>;
