//! Clock-driven simulation loop.
//!
//! Each step of length `dt`:
//! 1. decay every synaptic current and add the increments of spikes emitted
//!    at the previous step boundary (one-step synaptic delay) plus injected
//!    stimulus spikes,
//! 2. advance every neuron with its summed synaptic and external current,
//! 3. collect this step's spikes, stamped with the step's end time.
//!
//! Synapses with equal kind onto the same neuron share one current state;
//! the current-based model is linear, so this is exact.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ConnectivityMatrix, Layout, NetworkSpec, NeuronModel};
use crate::neuron::{adex_step, lif_step, AdExParams, LifParams, NeuronState, SynapseKind};
use crate::scalar::Scalar;
use crate::stimuli::poisson_train;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Populations to record; `None` records everything.
    pub record: Option<Vec<String>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            duration: 1.0,
            seed: 0,
            record: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.dt.is_finite() && self.duration > 0.0 && self.duration.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "dt and duration must be positive, got dt={} duration={}",
                self.dt, self.duration
            )))
        }
    }

    pub fn steps(&self) -> usize {
        // Guard against 5.0/1e-4 = 50000.000000000007 style rounding.
        (self.duration / self.dt - 1e-9).ceil() as usize
    }
}

/// A whole population, or one neuron of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveTarget {
    pub population: String,
    pub neuron: Option<usize>,
}

impl DriveTarget {
    pub fn population(id: impl Into<String>) -> Self {
        Self {
            population: id.into(),
            neuron: None,
        }
    }

    pub fn neuron(id: impl Into<String>, neuron: usize) -> Self {
        Self {
            population: id.into(),
            neuron: Some(neuron),
        }
    }

    fn resolve(&self, layout: &Layout) -> Result<Vec<usize>> {
        let pop = layout.population(&self.population)?;
        let size = layout.sizes[pop];
        match self.neuron {
            Some(n) if n < size => Ok(vec![layout.global(pop, n)]),
            Some(n) => Err(Error::InvalidInput(format!(
                "drive targets neuron {n} of `{}` which has {size} neurons",
                self.population
            ))),
            None => Ok((0..size).map(|n| layout.global(pop, n)).collect()),
        }
    }
}

/// A stimulus spike, delivered through the target neuron's outgoing synapses
/// as if that neuron had fired. Injected spikes are not part of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeInput {
    pub time: f64,
    pub population: String,
    pub neuron: usize,
}

/// Sampled current waveform (amperes), held constant between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentInput {
    pub target: DriveTarget,
    pub sample_rate: f64,
    pub start: f64,
    pub samples: Vec<f64>,
}

impl CurrentInput {
    /// Constant current over `[start, end)`.
    pub fn pulse(target: DriveTarget, start: f64, end: f64, amplitude: f64) -> Self {
        Self {
            target,
            sample_rate: 1.0 / (end - start),
            start,
            samples: vec![amplitude],
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        let pos = (t - self.start) * self.sample_rate;
        if pos < -1e-9 {
            return 0.0;
        }
        let idx = (pos + 1e-9).floor() as usize;
        self.samples.get(idx).copied().unwrap_or(0.0)
    }
}

/// Homogeneous Poisson spike input over `[start, end)`, realized inside the
/// run from the simulation seed. A population target gets one independent
/// train per neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonInput {
    pub target: DriveTarget,
    pub rate: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalDrive {
    pub spikes: Vec<SpikeInput>,
    pub currents: Vec<CurrentInput>,
    pub poisson: Vec<PoissonInput>,
}

impl ExternalDrive {
    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty() && self.currents.is_empty() && self.poisson.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: f64,
    pub population: u32,
    pub neuron: u32,
}

/// Spikes of the monitored populations, ordered by time then flat neuron index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub populations: Vec<String>,
    pub sizes: Vec<usize>,
    pub monitored: Vec<bool>,
    pub duration: f64,
    pub events: Vec<SpikeEvent>,
}

impl SpikeRecord {
    pub fn empty(populations: Vec<String>, sizes: Vec<usize>, duration: f64) -> Self {
        let monitored = vec![true; populations.len()];
        Self {
            populations,
            sizes,
            monitored,
            duration,
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn population_index(&self, id: &str) -> Result<usize> {
        self.populations
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::UnknownPopulation(id.to_string()))
    }

    /// Spike count per population.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.populations.len()];
        for e in &self.events {
            counts[e.population as usize] += 1;
        }
        counts
    }

    /// Raster as CSV: `time_s,population,neuron`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * self.events.len() + 32);
        out.push_str("time_s,population,neuron\n");
        for e in &self.events {
            writeln!(out, "{},{},{}", e.time, self.populations[e.population as usize], e.neuron)
                .expect("write to String");
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Dynamics<T> {
    Adex(AdExParams<T>),
    Lif(LifParams<T>),
}

fn cast_adex<T: Scalar>(p: &AdExParams<f64>) -> AdExParams<T> {
    AdExParams {
        capacitance: T::lit(p.capacitance),
        g_leak: T::lit(p.g_leak),
        e_leak: T::lit(p.e_leak),
        v_thresh: T::lit(p.v_thresh),
        delta_t: T::lit(p.delta_t),
        v_cut: T::lit(p.v_cut),
        v_reset: T::lit(p.v_reset),
        a: T::lit(p.a),
        b: T::lit(p.b),
        tau_w: T::lit(p.tau_w),
        t_ref: T::lit(p.t_ref),
    }
}

fn cast_lif<T: Scalar>(p: &LifParams<f64>) -> LifParams<T> {
    LifParams {
        tau_m: T::lit(p.tau_m),
        resistance: T::lit(p.resistance),
        v_rest: T::lit(p.v_rest),
        v_thresh: T::lit(p.v_thresh),
        v_reset: T::lit(p.v_reset),
        t_ref: T::lit(p.t_ref),
    }
}

#[derive(Debug, Clone, Copy)]
struct Synapse<T> {
    dst: u32,
    kind: u8,
    weight: T,
}

/// Runs a network for `cfg.duration` seconds with scalar type `T`.
pub fn simulate<T: Scalar>(
    spec: &NetworkSpec,
    conn: &ConnectivityMatrix,
    drive: &ExternalDrive,
    cfg: &SimulationConfig,
) -> Result<SpikeRecord> {
    spec.validate()?;
    conn.validate_against(spec)?;
    cfg.validate()?;
    let layout = spec.layout();
    let n_neurons = layout.total();
    let steps = cfg.steps();
    let dt = T::lit(cfg.dt);

    let monitored: Vec<bool> = match &cfg.record {
        None => vec![true; spec.populations.len()],
        Some(ids) => {
            let mut m = vec![false; spec.populations.len()];
            for id in ids {
                m[layout.population(id)?] = true;
            }
            m
        }
    };

    // Outgoing synapses in CSR form, ordered by projection then sampling order.
    let mut fanout: Vec<Vec<Synapse<T>>> = vec![Vec::new(); n_neurons];
    for pe in &conn.projections {
        let src = layout.population(&pe.source)?;
        let dst = layout.population(&pe.target)?;
        for e in &pe.edges {
            fanout[layout.global(src, e.src as usize)].push(Synapse {
                dst: layout.global(dst, e.dst as usize) as u32,
                kind: e.kind.index() as u8,
                weight: T::lit(e.weight),
            });
        }
    }
    let mut out_start = Vec::with_capacity(n_neurons + 1);
    let mut out_edges = Vec::new();
    for list in fanout {
        out_start.push(out_edges.len());
        out_edges.extend(list);
    }
    out_start.push(out_edges.len());

    // Stimulus spikes bucketed by the step in which they arrive.
    let mut injected: Vec<(usize, usize)> = Vec::new();
    for s in &drive.spikes {
        if !(0.0..=cfg.duration).contains(&s.time) {
            return Err(Error::InvalidInput(format!(
                "stimulus spike at {}s outside [0, {}]",
                s.time, cfg.duration
            )));
        }
        let target = DriveTarget::neuron(s.population.clone(), s.neuron).resolve(&layout)?[0];
        injected.push((((s.time / cfg.dt) + 1e-9).floor() as usize, target));
    }
    for (i, p) in drive.poisson.iter().enumerate() {
        if p.start < 0.0 || p.end > cfg.duration + 1e-9 || p.end < p.start {
            return Err(Error::InvalidInput(format!(
                "Poisson drive window [{}, {}] outside [0, {}]",
                p.start, p.end, cfg.duration
            )));
        }
        for (j, target) in p.target.resolve(&layout)?.into_iter().enumerate() {
            let seed = cfg
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(((i as u64) << 32) | j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in poisson_train(p.rate, p.end - p.start, &mut rng) {
                injected.push(((((p.start + t) / cfg.dt) + 1e-9).floor() as usize, target));
            }
        }
    }
    injected.sort_unstable();

    let mut currents = Vec::with_capacity(drive.currents.len());
    for c in &drive.currents {
        if !(c.sample_rate > 0.0) || c.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "current drive on `{}` needs a positive sample rate and finite samples",
                c.target.population
            )));
        }
        currents.push((c, c.target.resolve(&layout)?));
    }

    let dynamics: Vec<Dynamics<T>> = spec
        .populations
        .iter()
        .map(|p| match &p.model {
            NeuronModel::Adex(a) => Dynamics::Adex(cast_adex(a)),
            NeuronModel::Lif(l) => Dynamics::Lif(cast_lif(l)),
        })
        .collect();
    let mut state: Vec<NeuronState<T>> = Vec::with_capacity(n_neurons);
    for (pop, d) in dynamics.iter().enumerate() {
        let v0 = match d {
            Dynamics::Adex(p) => p.e_leak,
            Dynamics::Lif(p) => p.v_rest,
        };
        state.extend(std::iter::repeat_n(NeuronState::at_rest(v0), layout.sizes[pop]));
    }

    let decay: [T; 4] = SynapseKind::ALL.map(|k| (-dt / T::lit(k.default_tau())).exp());
    let sign: [T; 4] = SynapseKind::ALL.map(|k| T::lit(k.sign()));
    let mut syn: Vec<[T; 4]> = vec![[T::zero(); 4]; n_neurons];
    let mut ext: Vec<T> = vec![T::zero(); n_neurons];
    let mut pending: Vec<usize> = Vec::new();
    let mut fired: Vec<usize> = Vec::new();
    let mut next_injected = 0;
    let mut events = Vec::new();

    for step in 0..steps {
        let t_start = step as f64 * cfg.dt;
        let t_end = (step + 1) as f64 * cfg.dt;

        for s in syn.iter_mut() {
            for k in 0..4 {
                s[k] *= decay[k];
            }
        }
        while next_injected < injected.len() && injected[next_injected].0 <= step {
            pending.push(injected[next_injected].1);
            next_injected += 1;
        }
        for &src in &pending {
            for e in &out_edges[out_start[src]..out_start[src + 1]] {
                syn[e.dst as usize][e.kind as usize] += e.weight;
            }
        }
        pending.clear();

        if !currents.is_empty() {
            ext.iter_mut().for_each(|x| *x = T::zero());
            for (c, targets) in &currents {
                let v = c.value_at(t_start);
                if v != 0.0 {
                    let v = T::lit(v);
                    for &n in targets {
                        ext[n] += v;
                    }
                }
            }
        }

        for (pop, d) in dynamics.iter().enumerate() {
            let base = layout.offsets[pop];
            for i in base..base + layout.sizes[pop] {
                let s = &syn[i];
                let input = sign[0] * s[0] + sign[1] * s[1] + sign[2] * s[2] + sign[3] * s[3] + ext[i];
                let result = match d {
                    Dynamics::Adex(p) => adex_step(&state[i], p, input, dt),
                    Dynamics::Lif(p) => lif_step(&state[i], p, input, dt),
                };
                let (mut next, spiked) = result.map_err(|source| Error::NumericalOverflow {
                    population: layout.names[pop].clone(),
                    neuron: i - base,
                    time: t_end,
                    source,
                })?;
                if spiked {
                    next.last_spike = Some(t_end);
                    fired.push(i);
                    if monitored[pop] {
                        events.push(SpikeEvent {
                            time: t_end,
                            population: pop as u32,
                            neuron: (i - base) as u32,
                        });
                    }
                }
                state[i] = next;
            }
        }
        std::mem::swap(&mut pending, &mut fired);
    }

    Ok(SpikeRecord {
        populations: layout.names.clone(),
        sizes: layout.sizes.clone(),
        monitored,
        duration: steps as f64 * cfg.dt,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_nsm_topology, sample_connectivity, PopulationSpec, Role, TopologyOptions};

    fn single_lif(p: LifParams<f64>) -> (NetworkSpec, ConnectivityMatrix) {
        let spec = NetworkSpec {
            populations: vec![PopulationSpec {
                id: "lif".into(),
                size: 1,
                model: NeuronModel::Lif(p),
                role: Role::Other,
            }],
            projections: vec![],
            seed: 0,
        };
        let conn = sample_connectivity(&spec).unwrap();
        (spec, conn)
    }

    #[test]
    fn quiescent_network_stays_silent() {
        let spec = build_nsm_topology(&TopologyOptions::default()).unwrap();
        let conn = sample_connectivity(&spec).unwrap();
        let cfg = SimulationConfig {
            duration: 0.5,
            ..Default::default()
        };
        let rec = simulate::<f64>(&spec, &conn, &ExternalDrive::default(), &cfg).unwrap();
        assert!(rec.is_empty());
        assert_eq!(rec.duration, 0.5);
    }

    #[test]
    fn constant_current_matches_lif_rate() {
        let p = LifParams {
            tau_m: 20e-3,
            t_ref: 0.0,
            ..LifParams::default()
        };
        let (spec, conn) = single_lif(p);
        let i = 350e-12;
        let drive = ExternalDrive {
            currents: vec![CurrentInput::pulse(DriveTarget::population("lif"), 0.0, 10.0, i)],
            ..Default::default()
        };
        let cfg = SimulationConfig {
            duration: 10.0,
            ..Default::default()
        };
        let rec = simulate::<f64>(&spec, &conn, &drive, &cfg).unwrap();
        let drive_v = p.resistance * i;
        let expected = 1.0 / (p.tau_m * (drive_v / (drive_v - (p.v_thresh - p.v_rest))).ln());
        let measured = rec.len() as f64 / 10.0;
        assert!((measured - expected).abs() / expected < 0.02, "{measured} vs {expected}");
    }

    #[test]
    fn current_drive_is_sample_and_hold() {
        let c = CurrentInput {
            target: DriveTarget::population("x"),
            sample_rate: 256.0,
            start: 1.0,
            samples: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(c.value_at(0.5), 0.0);
        assert_eq!(c.value_at(1.0), 1.0);
        assert_eq!(c.value_at(1.0 + 1.5 / 256.0), 2.0);
        assert_eq!(c.value_at(1.0 + 2.0 / 256.0), 3.0);
        assert_eq!(c.value_at(1.0 + 3.0 / 256.0), 0.0);
    }

    #[test]
    fn injected_spike_reaches_targets_one_step_later() {
        let spec = build_nsm_topology(&TopologyOptions {
            wta_only: true,
            weights: crate::network::WeightTable {
                input_to_state: 5e-9,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap();
        let conn = sample_connectivity(&spec).unwrap();
        let drive = ExternalDrive {
            spikes: vec![SpikeInput {
                time: 0.01,
                population: "input1".into(),
                neuron: 0,
            }],
            ..Default::default()
        };
        let cfg = SimulationConfig {
            duration: 0.1,
            ..Default::default()
        };
        let rec = simulate::<f64>(&spec, &conn, &drive, &cfg).unwrap();
        let state1 = rec.population_index("state1").unwrap() as u32;
        assert!(!rec.is_empty());
        assert!(rec.events.iter().all(|e| e.time > 0.01));
        assert!(rec.events.iter().any(|e| e.population == state1));
        assert!(rec.events.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn drive_validation() {
        let (spec, conn) = single_lif(LifParams::default());
        let cfg = SimulationConfig::default();
        let bad_time = ExternalDrive {
            spikes: vec![SpikeInput {
                time: 2.0,
                population: "lif".into(),
                neuron: 0,
            }],
            ..Default::default()
        };
        assert!(simulate::<f64>(&spec, &conn, &bad_time, &cfg).is_err());
        let bad_target = ExternalDrive {
            spikes: vec![SpikeInput {
                time: 0.5,
                population: "lif".into(),
                neuron: 3,
            }],
            ..Default::default()
        };
        assert!(simulate::<f64>(&spec, &conn, &bad_target, &cfg).is_err());
        let unknown = ExternalDrive {
            currents: vec![CurrentInput::pulse(DriveTarget::population("nope"), 0.0, 1.0, 1e-9)],
            ..Default::default()
        };
        assert!(matches!(
            simulate::<f64>(&spec, &conn, &unknown, &cfg),
            Err(Error::UnknownPopulation(_))
        ));
        let bad_cfg = SimulationConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(simulate::<f64>(&spec, &conn, &ExternalDrive::default(), &bad_cfg).is_err());
    }

    #[test]
    fn overflow_names_the_neuron() {
        let (spec, conn) = single_lif(LifParams::default());
        let drive = ExternalDrive {
            currents: vec![CurrentInput::pulse(DriveTarget::population("lif"), 0.0, 1.0, f64::MAX)],
            ..Default::default()
        };
        // f64::MAX * R overflows to infinity inside the step.
        let err = simulate::<f64>(&spec, &conn, &drive, &SimulationConfig::default()).unwrap_err();
        match err {
            Error::NumericalOverflow { population, neuron, .. } => {
                assert_eq!(population, "lif");
                assert_eq!(neuron, 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn record_filter_limits_output() {
        let (mut spec, _) = single_lif(LifParams::default());
        spec.populations.push(PopulationSpec {
            id: "other".into(),
            ..spec.populations[0].clone()
        });
        let conn = sample_connectivity(&spec).unwrap();
        let drive = ExternalDrive {
            currents: vec![
                CurrentInput::pulse(DriveTarget::population("lif"), 0.0, 1.0, 1e-9),
                CurrentInput::pulse(DriveTarget::population("other"), 0.0, 1.0, 1e-9),
            ],
            ..Default::default()
        };
        let cfg = SimulationConfig {
            record: Some(vec!["other".into()]),
            ..Default::default()
        };
        let rec = simulate::<f64>(&spec, &conn, &drive, &cfg).unwrap();
        assert!(!rec.is_empty());
        assert!(rec.events.iter().all(|e| e.population == 1));
        assert_eq!(rec.monitored, vec![false, true]);
    }

    #[test]
    fn raster_csv_has_one_row_per_spike() {
        let rec = SpikeRecord {
            populations: vec!["a".into()],
            sizes: vec![2],
            monitored: vec![true],
            duration: 1.0,
            events: vec![
                SpikeEvent {
                    time: 0.1,
                    population: 0,
                    neuron: 1,
                },
                SpikeEvent {
                    time: 0.2,
                    population: 0,
                    neuron: 0,
                },
            ],
        };
        let csv = rec.to_csv();
        assert_eq!(csv, "time_s,population,neuron\n0.1,a,1\n0.2,a,0\n");
        assert_eq!(rec.counts(), vec![2]);
    }
}
