//! Interpretation of spike records: windowed rates, state decoding,
//! monotonicity checks, and the event-based power estimate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::SpikeRecord;
use crate::error::{Error, Result};
use crate::network::{state_id, ConnectivityMatrix, Layout};

/// Window boundaries covering `[0, duration]`; the last window may be short.
fn window_edges(duration: f64, window: f64) -> Vec<(f64, f64)> {
    let n = (duration / window - 1e-9).ceil().max(0.0) as usize;
    (0..n)
        .map(|k| (k as f64 * window, ((k + 1) as f64 * window).min(duration)))
        .collect()
}

fn window_counts(rec: &SpikeRecord, pop: usize, window: f64, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for e in rec.events.iter().filter(|e| e.population as usize == pop) {
        // Spikes are stamped at step ends; a spike at exactly k*window belongs to window k-1.
        let k = ((e.time / window) - 1e-9).floor().max(0.0) as usize;
        if k < n {
            counts[k] += 1;
        }
    }
    counts
}

/// Per-window population rate in Hz per neuron.
pub fn firing_rate(rec: &SpikeRecord, population: &str, window: f64) -> Result<Vec<f64>> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput(format!("window must be positive, got {window}")));
    }
    let pop = rec.population_index(population)?;
    let edges = window_edges(rec.duration, window);
    let counts = window_counts(rec, pop, window, edges.len());
    let size = rec.sizes[pop] as f64;
    Ok(edges
        .iter()
        .zip(counts)
        .map(|(&(a, b), c)| c as f64 / ((b - a) * size))
        .collect())
}

/// Mean rate of `population` over `[start, end)`, Hz per neuron.
pub fn mean_rate(rec: &SpikeRecord, population: &str, start: f64, end: f64) -> Result<f64> {
    let pop = rec.population_index(population)?;
    let n = rec
        .events
        .iter()
        .filter(|e| e.population as usize == pop && e.time > start && e.time <= end)
        .count();
    Ok(n as f64 / ((end - start) * rec.sizes[pop] as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub start: f64,
    pub end: f64,
    pub state: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateTimeline {
    pub entries: Vec<TimelineEntry>,
}

impl StateTimeline {
    pub fn from_states(states: &[Option<usize>], window: f64) -> Self {
        Self {
            entries: states
                .iter()
                .enumerate()
                .map(|(k, &state)| TimelineEntry {
                    start: k as f64 * window,
                    end: (k + 1) as f64 * window,
                    state,
                })
                .collect(),
        }
    }

    pub fn states(&self) -> Vec<Option<usize>> {
        self.entries.iter().map(|e| e.state).collect()
    }

    pub fn final_state(&self) -> Option<usize> {
        self.entries.iter().rev().find_map(|e| e.state)
    }

    /// Consecutive distinct non-NONE states, in order of appearance.
    pub fn visited(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for s in self.entries.iter().filter_map(|e| e.state) {
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    /// Entries overlapping `[start, end)`.
    pub fn between(&self, start: f64, end: f64) -> impl Iterator<Item = &TimelineEntry> {
        self.entries
            .iter()
            .filter(move |e| e.end > start + 1e-9 && e.start < end - 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start,t_end,state\n");
        for e in &self.entries {
            let state = e.state.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
            writeln!(out, "{},{},{}", e.start, e.end, state).expect("write to String");
        }
        out
    }
}

/// Decodes the state from populations `state0, state1, ...` of the record.
pub fn decode_state(rec: &SpikeRecord, window: f64, active_threshold: f64) -> Result<StateTimeline> {
    let ids: Vec<String> = (0..)
        .map(state_id)
        .take_while(|id| rec.populations.contains(id))
        .collect();
    decode_state_with(rec, &ids, window, active_threshold)
}

/// Per window, the index (into `state_ids`) of the most active population if
/// its rate reaches `active_threshold`; ties go to the lowest index.
pub fn decode_state_with(
    rec: &SpikeRecord,
    state_ids: &[String],
    window: f64,
    active_threshold: f64,
) -> Result<StateTimeline> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput(format!("window must be positive, got {window}")));
    }
    let rates = state_ids
        .iter()
        .map(|id| firing_rate(rec, id, window))
        .collect::<Result<Vec<_>>>()?;
    let edges = window_edges(rec.duration, window);
    let entries = edges
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let mut best: Option<(usize, f64)> = None;
            for (s, r) in rates.iter().enumerate() {
                if best.is_none_or(|(_, b)| r[k] > b) {
                    best = Some((s, r[k]));
                }
            }
            let state = best.filter(|&(_, r)| r >= active_threshold).map(|(s, _)| s);
            TimelineEntry { start, end, state }
        })
        .collect();
    Ok(StateTimeline { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Start of the window in which the illegal state first appears.
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// A change `s -> s'` between consecutive decoded states (NONE windows are
/// skipped) is legal iff `s' > s` or `s' == 0`.
pub fn check_monotonic(t: &StateTimeline) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for e in &t.entries {
        let Some(s) = e.state else { continue };
        if let Some(prev) = last {
            if s != prev && !(s > prev || s == 0) {
                out.push(Violation {
                    time: e.start,
                    from: prev,
                    to: s,
                });
            }
        }
        last = Some(s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    /// Joules per emitted spike, generation and communication included.
    pub e_spike: f64,
    /// Joules per routed synaptic event.
    pub e_route: f64,
    /// Watts.
    pub p_static: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            e_spike: 10.2e-9,
            e_route: 0.0,
            p_static: 0.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if self.e_spike >= 0.0 && self.e_route >= 0.0 && self.p_static >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("power model terms must be >= 0: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub watts: f64,
    pub spikes: u64,
    pub routed_events: u64,
    pub duration: f64,
    pub neurons: usize,
    pub mean_rate_hz: f64,
}

/// `P = P_static + (spikes * E_spike + routed * E_route) / duration`, where a
/// spike routes one event per outgoing synapse of its neuron.
pub fn estimate_power(
    rec: &SpikeRecord,
    conn: &ConnectivityMatrix,
    layout: &Layout,
    model: &PowerModel,
) -> Result<PowerReport> {
    model.validate()?;
    if !(rec.duration > 0.0) {
        return Err(Error::InvalidInput("power estimate needs a record with positive duration".into()));
    }
    let out_degree = conn.out_degree(layout)?;
    let pops = rec
        .populations
        .iter()
        .map(|id| layout.population(id))
        .collect::<Result<Vec<_>>>()?;
    let mut routed = 0u64;
    for e in &rec.events {
        routed += out_degree[layout.global(pops[e.population as usize], e.neuron as usize)] as u64;
    }
    let spikes = rec.events.len() as u64;
    let neurons: usize = rec
        .sizes
        .iter()
        .zip(&rec.monitored)
        .filter(|(_, &m)| m)
        .map(|(s, _)| s)
        .sum();
    Ok(PowerReport {
        watts: model.p_static + (spikes as f64 * model.e_spike + routed as f64 * model.e_route) / rec.duration,
        spikes,
        routed_events: routed,
        duration: rec.duration,
        neurons,
        mean_rate_hz: if neurons > 0 {
            spikes as f64 / (neurons as f64 * rec.duration)
        } else {
            0.0
        },
    })
}

/// Per-population spike counts and windowed rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub duration: f64,
    pub window: f64,
    pub populations: Vec<PopulationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub id: String,
    pub size: usize,
    pub spikes: u64,
    pub mean_rate_hz: f64,
    pub rates_hz: Vec<f64>,
}

pub fn summarize(rec: &SpikeRecord, window: f64) -> Result<RecordSummary> {
    let counts = rec.counts();
    let mut populations = Vec::new();
    for (i, id) in rec.populations.iter().enumerate() {
        if !rec.monitored[i] {
            continue;
        }
        populations.push(PopulationSummary {
            id: id.clone(),
            size: rec.sizes[i],
            spikes: counts[i],
            mean_rate_hz: counts[i] as f64 / (rec.sizes[i] as f64 * rec.duration),
            rates_hz: firing_rate(rec, id, window)?,
        });
    }
    Ok(RecordSummary {
        duration: rec.duration,
        window,
        populations,
    })
}

/// Windowed rates of every monitored population as CSV: `t_start,t_end,<pop>...`.
pub fn rates_csv(rec: &SpikeRecord, window: f64) -> Result<String> {
    let ids: Vec<&String> = rec
        .populations
        .iter()
        .zip(&rec.monitored)
        .filter(|(_, &m)| m)
        .map(|(id, _)| id)
        .collect();
    let series = ids
        .iter()
        .map(|id| firing_rate(rec, id, window))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("t_start,t_end");
    for id in &ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (k, (a, b)) in window_edges(rec.duration, window).into_iter().enumerate() {
        write!(out, "{a},{b}").expect("write to String");
        for s in &series {
            write!(out, ",{}", s[k]).expect("write to String");
        }
        out.push('\n');
    }
    Ok(out)
}
