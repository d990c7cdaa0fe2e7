//! Point-neuron and synapse dynamics.
//!
//! Two membrane models are provided, both integrated with fixed-step forward
//! Euler:
//!
//! * adaptive exponential integrate-and-fire (AdEx):
//!   `C dV/dt = -g_L (V - E_L) + g_L Δ_T exp((V - V_T)/Δ_T) - w + I`,
//!   `tau_w dw/dt = a (V - E_L) - w`, reset `V <- V_r`, `w <- w + b` when
//!   `V >= V_cut`;
//! * leaky integrate-and-fire (LIF):
//!   `tau_m dV/dt = -(V - V_rest) + R I`, reset `V <- V_r` when `V >= V_th`.
//!
//! Synapses are current based with a single exponential decay. The four
//! kinds split fast/slow and excitatory/inhibitory; the sign lives in the
//! kind, weights are magnitudes.
//!
//! All quantities are SI (volts, amperes, farads, siemens, seconds).

use serde::{Deserialize, Serialize};

use crate::error::{Error, NonFiniteState, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdExParams<T> {
    pub capacitance: T,
    pub g_leak: T,
    pub e_leak: T,
    pub v_thresh: T,
    /// Slope factor. Zero disables the exponential term; `v_thresh` then acts
    /// as a hard threshold (the `Δ_T -> 0` limit of the model).
    pub delta_t: T,
    pub v_cut: T,
    pub v_reset: T,
    pub a: T,
    pub b: T,
    pub tau_w: T,
    pub t_ref: T,
}

impl<T: Scalar> Default for AdExParams<T> {
    /// Regular-spiking tonic regime (tau_m = 20 ms).
    fn default() -> Self {
        Self {
            capacitance: T::lit(200e-12),
            g_leak: T::lit(10e-9),
            e_leak: T::lit(-70e-3),
            v_thresh: T::lit(-50e-3),
            delta_t: T::lit(2e-3),
            v_cut: T::lit(0.0),
            v_reset: T::lit(-58e-3),
            a: T::lit(2e-9),
            b: T::lit(0.0),
            tau_w: T::lit(100e-3),
            t_ref: T::lit(2e-3),
        }
    }
}

impl<T: Scalar> AdExParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let ok = self.capacitance > zero
            && self.g_leak > zero
            && self.tau_w > zero
            && self.delta_t >= zero
            && self.t_ref >= zero
            && self.v_reset < self.v_cut
            && self.e_leak <= self.v_thresh
            && self.v_thresh < self.v_cut;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("AdEx parameters violate invariants: {self:?}")))
        }
    }

    /// Membrane potential at which a spike is registered.
    #[inline]
    fn spike_level(&self) -> T {
        if self.delta_t > T::zero() {
            self.v_cut
        } else {
            self.v_thresh
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams<T> {
    pub tau_m: T,
    pub resistance: T,
    pub v_rest: T,
    pub v_thresh: T,
    pub v_reset: T,
    pub t_ref: T,
}

impl<T: Scalar> Default for LifParams<T> {
    /// Encoder neuron: 10 ms membrane, 100 MΩ, 20 mV to threshold (rheobase 200 pA).
    fn default() -> Self {
        Self {
            tau_m: T::lit(10e-3),
            resistance: T::lit(100e6),
            v_rest: T::lit(-70e-3),
            v_thresh: T::lit(-50e-3),
            v_reset: T::lit(-70e-3),
            t_ref: T::lit(2e-3),
        }
    }
}

impl<T: Scalar> LifParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if self.tau_m > zero && self.resistance > zero && self.v_reset < self.v_thresh && self.t_ref >= zero {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("LIF parameters violate invariants: {self:?}")))
        }
    }

    /// Smallest constant current that eventually drives the neuron to threshold.
    pub fn rheobase(&self) -> T {
        (self.v_thresh - self.v_rest) / self.resistance
    }
}

/// Dynamic state of one neuron. `w` stays zero for LIF neurons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState<T> {
    pub v: T,
    pub w: T,
    pub refractory: T,
    pub last_spike: Option<f64>,
}

impl<T: Scalar> NeuronState<T> {
    pub fn at_rest(v: T) -> Self {
        Self {
            v,
            w: T::zero(),
            refractory: T::zero(),
            last_spike: None,
        }
    }

    fn check_finite(self) -> Result<Self, NonFiniteState> {
        if self.v.is_finite() && self.w.is_finite() {
            Ok(self)
        } else {
            Err(NonFiniteState {
                v: self.v.as_f64(),
                w: self.w.as_f64(),
            })
        }
    }
}

#[inline]
fn count_down<T: Scalar>(refractory: T, dt: T) -> T {
    let left = refractory - dt;
    // Absorb rounding residue so a t_ref that is a multiple of dt lasts exactly t_ref/dt steps.
    if left <= dt * T::lit(1e-6) {
        T::zero()
    } else {
        left
    }
}

/// Advances an AdEx neuron by one forward-Euler step of length `dt`.
///
/// Returns the new state and whether the neuron spiked during the step.
pub fn adex_step<T: Scalar>(
    state: &NeuronState<T>,
    p: &AdExParams<T>,
    i_in: T,
    dt: T,
) -> Result<(NeuronState<T>, bool), NonFiniteState> {
    let mut next = *state;
    if state.refractory > T::zero() {
        next.v = p.v_reset;
        next.w = state.w + dt * (p.a * (p.v_reset - p.e_leak) - state.w) / p.tau_w;
        next.refractory = count_down(state.refractory, dt);
        return next.check_finite().map(|s| (s, false));
    }

    let spike_level = p.spike_level();
    if state.v >= spike_level {
        next.v = p.v_reset;
        next.w = state.w + p.b;
        next.refractory = p.t_ref;
        return next.check_finite().map(|s| (s, true));
    }

    let v = state.v;
    let w = state.w;
    let exp_term = if p.delta_t > T::zero() {
        p.g_leak * p.delta_t * ((v - p.v_thresh) / p.delta_t).exp()
    } else {
        T::zero()
    };
    let dv = (-p.g_leak * (v - p.e_leak) + exp_term - w + i_in) / p.capacitance;
    let dw = (p.a * (v - p.e_leak) - w) / p.tau_w;
    next.v = v + dt * dv;
    next.w = w + dt * dw;
    let next = next.check_finite()?;

    if next.v >= spike_level {
        Ok((
            NeuronState {
                v: p.v_reset,
                w: next.w + p.b,
                refractory: p.t_ref,
                last_spike: next.last_spike,
            },
            true,
        ))
    } else {
        Ok((next, false))
    }
}

/// Advances a LIF neuron by one forward-Euler step of length `dt`.
pub fn lif_step<T: Scalar>(
    state: &NeuronState<T>,
    p: &LifParams<T>,
    i_in: T,
    dt: T,
) -> Result<(NeuronState<T>, bool), NonFiniteState> {
    let mut next = *state;
    if state.refractory > T::zero() {
        next.v = p.v_reset;
        next.refractory = count_down(state.refractory, dt);
        return next.check_finite().map(|s| (s, false));
    }
    if state.v >= p.v_thresh {
        next.v = p.v_reset;
        next.refractory = p.t_ref;
        return next.check_finite().map(|s| (s, true));
    }
    next.v = state.v + dt * (-(state.v - p.v_rest) + p.resistance * i_in) / p.tau_m;
    let mut next = next.check_finite()?;
    if next.v >= p.v_thresh {
        next.v = p.v_reset;
        next.refractory = p.t_ref;
        Ok((next, true))
    } else {
        Ok((next, false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SynapseKind {
    #[serde(rename = "AMPA")]
    FastExc,
    #[serde(rename = "NMDA")]
    SlowExc,
    #[serde(rename = "GABA_A")]
    FastInh,
    #[serde(rename = "GABA_B")]
    SlowInh,
}

impl SynapseKind {
    pub const ALL: [SynapseKind; 4] = [
        SynapseKind::FastExc,
        SynapseKind::SlowExc,
        SynapseKind::FastInh,
        SynapseKind::SlowInh,
    ];

    pub fn is_inhibitory(self) -> bool {
        matches!(self, SynapseKind::FastInh | SynapseKind::SlowInh)
    }

    pub fn sign(self) -> f64 {
        if self.is_inhibitory() {
            -1.0
        } else {
            1.0
        }
    }

    /// Position in [`SynapseKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Receptor name, as used in configs and CSV exports.
    pub fn name(self) -> &'static str {
        match self {
            SynapseKind::FastExc => "AMPA",
            SynapseKind::SlowExc => "NMDA",
            SynapseKind::FastInh => "GABA_A",
            SynapseKind::SlowInh => "GABA_B",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }

    pub fn default_tau(self) -> f64 {
        match self {
            SynapseKind::FastExc => 5e-3,
            SynapseKind::SlowExc => 100e-3,
            SynapseKind::FastInh => 10e-3,
            SynapseKind::SlowInh => 100e-3,
        }
    }
}

impl std::fmt::Display for SynapseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseParams<T> {
    pub kind: SynapseKind,
    pub weight: T,
    pub tau: T,
}

impl<T: Scalar> SynapseParams<T> {
    pub fn new(kind: SynapseKind, weight: T) -> Self {
        Self {
            kind,
            weight,
            tau: T::lit(kind.default_tau()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight >= T::zero() && self.tau > T::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("synapse parameters violate invariants: {self:?}")))
        }
    }
}

/// One step of an exponential current synapse: decay, then add `n_spikes`
/// increments of the weight. Returns `(signed contribution, next state)`.
pub fn synapse_step<T: Scalar>(
    current: T,
    p: &SynapseParams<T>,
    n_spikes: u32,
    dt: T,
) -> Result<(T, T), NonFiniteState> {
    let next = current * (-dt / p.tau).exp() + T::lit(n_spikes as f64) * p.weight;
    if !next.is_finite() {
        return Err(NonFiniteState {
            v: f64::NAN,
            w: next.as_f64(),
        });
    }
    let contribution = if p.kind.is_inhibitory() { -next } else { next };
    Ok((contribution, next))
}
