//! Population-level network description, the monotonic state-machine builder,
//! and the seeded Bernoulli connectivity sampler.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{AdExParams, LifParams, SynapseKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum NeuronModel {
    Adex(AdExParams<f64>),
    Lif(LifParams<f64>),
}

impl NeuronModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NeuronModel::Adex(p) => p.validate(),
            NeuronModel::Lif(p) => p.validate(),
        }
    }

    pub fn t_ref(&self) -> f64 {
        match self {
            NeuronModel::Adex(p) => p.t_ref,
            NeuronModel::Lif(p) => p.t_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    State(usize),
    WtaInh,
    Gate(usize),
    /// Inhibitory partner of `Gate(k)`; `None` when one inhibitor is shared by all gates.
    GateInh(Option<usize>),
    InputEncoder(usize),
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub id: String,
    pub size: usize,
    pub model: NeuronModel,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub source: String,
    pub target: String,
    pub kind: SynapseKind,
    pub probability: f64,
    /// Per-spike current increment in amperes.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub populations: Vec<PopulationSpec>,
    pub projections: Vec<ProjectionSpec>,
    pub seed: u64,
}

/// Neuron counts and flat index offsets for every population of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub names: Vec<String>,
    pub sizes: Vec<usize>,
    pub offsets: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.sizes.last().copied().unwrap_or(0)
    }

    pub fn population(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPopulation(id.to_string()))
    }

    pub fn global(&self, pop: usize, neuron: usize) -> usize {
        self.offsets[pop] + neuron
    }

    /// Inverse of [`Layout::global`].
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let pop = self.offsets.partition_point(|&o| o <= global) - 1;
        (pop, global - self.offsets[pop])
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, p) in self.populations.iter().enumerate() {
            if p.size == 0 {
                return Err(Error::InvalidTopology(format!("population `{}` is empty", p.id)));
            }
            if seen.insert(p.id.as_str(), i).is_some() {
                return Err(Error::InvalidTopology(format!("duplicate population id `{}`", p.id)));
            }
            p.model.validate()?;
        }
        for pr in &self.projections {
            for end in [&pr.source, &pr.target] {
                if !seen.contains_key(end.as_str()) {
                    return Err(Error::InvalidTopology(format!(
                        "projection {} -> {} references unknown population `{end}`",
                        pr.source, pr.target
                    )));
                }
            }
            if !(0.0..=1.0).contains(&pr.probability) {
                return Err(Error::InvalidTopology(format!(
                    "projection {} -> {} has probability {} outside [0, 1]",
                    pr.source, pr.target, pr.probability
                )));
            }
            if !(pr.weight >= 0.0 && pr.weight.is_finite()) {
                return Err(Error::InvalidTopology(format!(
                    "projection {} -> {} has invalid weight {}",
                    pr.source, pr.target, pr.weight
                )));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let mut offsets = Vec::with_capacity(self.populations.len());
        let mut acc = 0;
        for p in &self.populations {
            offsets.push(acc);
            acc += p.size;
        }
        Layout {
            names: self.populations.iter().map(|p| p.id.clone()).collect(),
            sizes: self.populations.iter().map(|p| p.size).collect(),
            index: self
                .populations
                .iter()
                .enumerate()
                .map(|(i, p)| (p.id.clone(), i))
                .collect(),
            offsets,
        }
    }

    pub fn total_neurons(&self) -> usize {
        self.populations.iter().map(|p| p.size).sum()
    }

    pub fn population(&self, id: &str) -> Option<&PopulationSpec> {
        self.populations.iter().find(|p| p.id == id)
    }

    /// Ids of the STATE populations ordered by state index.
    pub fn state_populations(&self) -> Vec<String> {
        let mut states: Vec<(usize, &str)> = self
            .populations
            .iter()
            .filter_map(|p| match p.role {
                Role::State(k) => Some((k, p.id.as_str())),
                _ => None,
            })
            .collect();
        states.sort();
        states.into_iter().map(|(_, id)| id.to_string()).collect()
    }

    /// Populations that belong to the state machine proper (everything except input encoders).
    pub fn core_neurons(&self) -> usize {
        self.populations
            .iter()
            .filter(|p| !matches!(p.role, Role::InputEncoder(_)))
            .map(|p| p.size)
            .sum()
    }
}

/// Per-spike current increments (amperes) for each projection family of the
/// state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightTable {
    pub state_recurrent: f64,
    pub state_to_inh: f64,
    pub inh_to_state: f64,
    pub inh_recurrent: f64,
    pub gate_recurrent: f64,
    pub gate_to_inh: f64,
    pub inh_to_gate: f64,
    pub gate_inh_recurrent: f64,
    pub gate_to_state: f64,
    pub state_to_next_gate: f64,
    pub state_to_gate_rearm: f64,
    pub input_to_state: f64,
}

impl Default for WeightTable {
    fn default() -> Self {
        Self {
            state_recurrent: 10e-12,
            state_to_inh: 4e-12,
            inh_to_state: 32e-12,
            inh_recurrent: 20e-12,
            gate_recurrent: 16.6e-12,
            gate_to_inh: 8e-12,
            inh_to_gate: 16e-12,
            gate_inh_recurrent: 8e-12,
            gate_to_state: 50e-12,
            state_to_next_gate: 20e-12,
            state_to_gate_rearm: 150e-12,
            input_to_state: 2e-9,
        }
    }
}

/// Refractory period of the network's AdEx neurons. It caps the rate at
/// which a self-exciting population saturates, which is what holds
/// persistent activity near 50 Hz instead of running away.
pub const NETWORK_T_REF: f64 = 12e-3;

/// AdEx parameters used for STATE, GATE and inhibitory populations.
pub fn network_neuron() -> AdExParams<f64> {
    AdExParams {
        t_ref: NETWORK_T_REF,
        ..AdExParams::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderModel {
    Lif,
    Adex,
}

/// Everything that parameterizes [`build_nsm_topology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyOptions {
    pub n_states: usize,
    pub pop_size: usize,
    pub weights: WeightTable,
    /// One gating inhibitor for all gates instead of one per gate.
    pub shared_gate_inhibitor: bool,
    /// Omit the gating populations and the monotonic wiring (plain WTA).
    pub wta_only: bool,
    pub encoder_size: usize,
    pub encoder_model: EncoderModel,
    /// Partial tables override fields of [`network_neuron`], not of the
    /// generic AdEx defaults.
    #[serde(deserialize_with = "network_neuron_overrides")]
    pub neuron: AdExParams<f64>,
    pub encoder: LifParams<f64>,
    pub seed: u64,
}

fn network_neuron_overrides<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<AdExParams<f64>, D::Error> {
    use serde::de::Error as _;
    let overrides = std::collections::BTreeMap::<String, f64>::deserialize(d)?;
    let mut base = serde_json::to_value(network_neuron()).map_err(D::Error::custom)?;
    let fields = base.as_object_mut().expect("AdExParams serializes to a map");
    for (k, v) in overrides {
        fields.insert(k, v.into());
    }
    serde_json::from_value(base).map_err(D::Error::custom)
}

impl Default for TopologyOptions {
    fn default() -> Self {
        Self {
            n_states: 4,
            pop_size: 16,
            weights: WeightTable::default(),
            shared_gate_inhibitor: false,
            wta_only: false,
            encoder_size: 1,
            encoder_model: EncoderModel::Lif,
            neuron: network_neuron(),
            encoder: LifParams::default(),
            seed: 1,
        }
    }
}

pub fn state_id(k: usize) -> String {
    format!("state{k}")
}

pub fn gate_id(k: usize) -> String {
    format!("gate{k}")
}

pub fn gate_inh_id(k: Option<usize>) -> String {
    match k {
        Some(k) => format!("gate_inh{k}"),
        None => "gate_inh".to_string(),
    }
}

pub fn input_id(k: usize) -> String {
    format!("input{k}")
}

pub const WTA_INH: &str = "wta_inh";

struct Builder {
    populations: Vec<PopulationSpec>,
    projections: Vec<ProjectionSpec>,
}

impl Builder {
    fn population(&mut self, id: String, size: usize, model: NeuronModel, role: Role) {
        self.populations.push(PopulationSpec { id, size, model, role });
    }

    fn project(&mut self, source: &str, target: &str, kind: SynapseKind, probability: f64, weight: f64) {
        self.projections.push(ProjectionSpec {
            source: source.to_string(),
            target: target.to_string(),
            kind,
            probability,
            weight,
        });
    }
}

/// Builds the monotonic neural state machine.
///
/// * `n_states` STATE populations share one inhibitory population (WTA).
/// * Every state `k >= 1` has a GATE population with an inhibitory partner;
///   an active gate silences its state. State 0 has no gate and acts as the
///   reset state.
/// * STATE(k) inhibits GATE(k+1), opening the next state, and excites the
///   gates of all lower states and of every state beyond the next.
/// * Input encoder `i` drives STATE(i).
pub fn build_nsm_topology(opts: &TopologyOptions) -> Result<NetworkSpec> {
    use SynapseKind::{FastExc, SlowExc, SlowInh};

    if opts.n_states < 2 {
        return Err(Error::InvalidTopology(format!(
            "a state machine needs at least 2 states, got {}",
            opts.n_states
        )));
    }
    if opts.pop_size == 0 || opts.encoder_size == 0 {
        return Err(Error::InvalidTopology("population sizes must be at least 1".into()));
    }
    let w = &opts.weights;
    let n = opts.n_states;
    let adex = NeuronModel::Adex(opts.neuron);
    let encoder_model = match opts.encoder_model {
        EncoderModel::Lif => NeuronModel::Lif(opts.encoder),
        EncoderModel::Adex => NeuronModel::Adex(opts.neuron),
    };

    let mut b = Builder {
        populations: Vec::new(),
        projections: Vec::new(),
    };

    for k in 0..n {
        b.population(state_id(k), opts.pop_size, adex, Role::State(k));
    }
    b.population(WTA_INH.into(), opts.pop_size, adex, Role::WtaInh);
    if !opts.wta_only {
        for k in 1..n {
            b.population(gate_id(k), opts.pop_size, adex, Role::Gate(k));
        }
        if opts.shared_gate_inhibitor {
            b.population(gate_inh_id(None), opts.pop_size, adex, Role::GateInh(None));
        } else {
            for k in 1..n {
                b.population(gate_inh_id(Some(k)), opts.pop_size, adex, Role::GateInh(Some(k)));
            }
        }
    }
    for k in 0..n {
        b.population(input_id(k), opts.encoder_size, encoder_model, Role::InputEncoder(k));
    }

    // WTA core.
    for k in 0..n {
        let s = state_id(k);
        b.project(&s, &s, SlowExc, 0.83, w.state_recurrent);
        b.project(&s, WTA_INH, SlowExc, 0.60, w.state_to_inh);
        b.project(WTA_INH, &s, SlowInh, 0.60, w.inh_to_state);
    }
    b.project(WTA_INH, WTA_INH, SlowInh, 0.20, w.inh_recurrent);

    if !opts.wta_only {
        // Gating EI pairs.
        for k in 1..n {
            let g = gate_id(k);
            let gi = gate_inh_id((!opts.shared_gate_inhibitor).then_some(k));
            b.project(&g, &gi, SlowExc, 0.30, w.gate_to_inh);
            b.project(&gi, &g, SlowInh, 0.30, w.inh_to_gate);
            b.project(&g, &g, SlowExc, 0.50, w.gate_recurrent);
            if !opts.shared_gate_inhibitor {
                b.project(&gi, &gi, SlowInh, 0.50, w.gate_inh_recurrent);
            }
        }
        if opts.shared_gate_inhibitor {
            let gi = gate_inh_id(None);
            b.project(&gi, &gi, SlowInh, 0.50, w.gate_inh_recurrent);
        }

        // Monotonic wiring.
        for k in 1..n {
            b.project(&gate_id(k), &state_id(k), SlowInh, 1.0, w.gate_to_state);
        }
        for k in 0..n {
            let s = state_id(k);
            if k + 1 < n {
                b.project(&s, &gate_id(k + 1), SlowInh, 1.0, w.state_to_next_gate);
            }
            for j in (1..k).chain(k + 2..n) {
                b.project(&s, &gate_id(j), FastExc, 1.0, w.state_to_gate_rearm);
            }
        }
    }

    for k in 0..n {
        b.project(&input_id(k), &state_id(k), FastExc, 1.0, w.input_to_state);
    }

    let spec = NetworkSpec {
        populations: b.populations,
        projections: b.projections,
        seed: opts.seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// A single excitatory population with the shared-inhibitor wiring of the
/// WTA core, driven by one input encoder: the building block whose persistent
/// activity every state and gate relies on.
pub fn build_ei_primitive(opts: &TopologyOptions) -> Result<NetworkSpec> {
    let full = build_nsm_topology(&TopologyOptions {
        n_states: 2,
        wta_only: true,
        ..opts.clone()
    })?;
    let keep = [state_id(0), WTA_INH.to_string(), input_id(0)];
    let spec = NetworkSpec {
        populations: full
            .populations
            .into_iter()
            .filter(|p| keep.contains(&p.id))
            .collect(),
        projections: full
            .projections
            .into_iter()
            .filter(|p| keep.contains(&p.source) && keep.contains(&p.target))
            .collect(),
        seed: full.seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// One sampled synapse. Indices are local to the projection's populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub kind: SynapseKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEdges {
    pub source: String,
    pub target: String,
    pub edges: Vec<Edge>,
}

/// Sampled edge lists, one entry per projection of the originating spec, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    pub projections: Vec<ProjectionEdges>,
}

/// Draws every projection's edges: each ordered pair (self-pairs excluded
/// inside recurrent projections) is kept independently with the projection's
/// probability. Deterministic in `spec.seed`.
pub fn sample_connectivity(spec: &NetworkSpec) -> Result<ConnectivityMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut projections = Vec::with_capacity(spec.projections.len());
    for pr in &spec.projections {
        let src_size = spec.population(&pr.source).map(|p| p.size).unwrap_or(0);
        let dst_size = spec.population(&pr.target).map(|p| p.size).unwrap_or(0);
        let recurrent = pr.source == pr.target;
        let mut edges = Vec::new();
        for src in 0..src_size {
            for dst in 0..dst_size {
                if recurrent && src == dst {
                    continue;
                }
                if rng.random::<f64>() < pr.probability {
                    edges.push(Edge {
                        src: src as u32,
                        dst: dst as u32,
                        kind: pr.kind,
                        weight: pr.weight,
                    });
                }
            }
        }
        projections.push(ProjectionEdges {
            source: pr.source.clone(),
            target: pr.target.clone(),
            edges,
        });
    }
    Ok(ConnectivityMatrix { projections })
}

impl ConnectivityMatrix {
    pub fn edge_count(&self) -> usize {
        self.projections.iter().map(|p| p.edges.len()).sum()
    }

    /// Checks that this matrix was sampled from `spec`.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        if self.projections.len() != spec.projections.len() {
            return Err(Error::Validation(format!(
                "{} edge lists for {} projections",
                self.projections.len(),
                spec.projections.len()
            )));
        }
        for (pe, pr) in self.projections.iter().zip(&spec.projections) {
            if pe.source != pr.source || pe.target != pr.target {
                return Err(Error::Validation(format!(
                    "edge list {} -> {} does not match projection {} -> {}",
                    pe.source, pe.target, pr.source, pr.target
                )));
            }
            let src_size = spec.population(&pr.source).map(|p| p.size).unwrap_or(0);
            let dst_size = spec.population(&pr.target).map(|p| p.size).unwrap_or(0);
            for e in &pe.edges {
                if e.src as usize >= src_size || e.dst as usize >= dst_size || e.kind != pr.kind {
                    return Err(Error::Validation(format!(
                        "edge {e:?} violates projection {} -> {}",
                        pr.source, pr.target
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of outgoing synapses of every neuron, indexed by flat neuron index.
    pub fn out_degree(&self, layout: &Layout) -> Result<Vec<usize>> {
        let mut deg = vec![0; layout.total()];
        for pe in &self.projections {
            let src = layout.population(&pe.source)?;
            for e in &pe.edges {
                deg[layout.global(src, e.src as usize)] += 1;
            }
        }
        Ok(deg)
    }

    /// In-degree per neuron; compared against the 64-entry fan-in table of the reference chip.
    pub fn in_degree(&self, layout: &Layout) -> Result<Vec<usize>> {
        let mut deg = vec![0; layout.total()];
        for pe in &self.projections {
            let dst = layout.population(&pe.target)?;
            for e in &pe.edges {
                deg[layout.global(dst, e.dst as usize)] += 1;
            }
        }
        Ok(deg)
    }

    /// Edge list as CSV with flat neuron indices: `src,dst,kind,weight`.
    pub fn to_csv(&self, layout: &Layout) -> Result<String> {
        let mut out = String::from("src,dst,kind,weight\n");
        for pe in &self.projections {
            let src = layout.population(&pe.source)?;
            let dst = layout.population(&pe.target)?;
            for e in &pe.edges {
                writeln!(
                    out,
                    "{},{},{},{}",
                    layout.global(src, e.src as usize),
                    layout.global(dst, e.dst as usize),
                    e.kind,
                    e.weight
                )
                .expect("write to String");
            }
        }
        Ok(out)
    }
}

/// Fan-in capacity of one neuron's presynaptic address table on the reference chip.
pub const CAM_FAN_IN: usize = 64;
