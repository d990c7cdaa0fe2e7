//! End-to-end runs: ECG -> frontend -> network -> analysis, plus the
//! transition protocol, and the writers for their output bundles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    check_monotonic, decode_state_with, estimate_power, rates_csv, summarize, PowerReport, StateTimeline, Violation,
};
use crate::config::{Precision, RunConfig};
use crate::dsp::{Frontend, SampledSignal};
use crate::engine::{simulate, CurrentInput, DriveTarget, ExternalDrive, SimulationConfig, SpikeInput, SpikeRecord};
use crate::error::{Error, Result};
use crate::io::read_ecg_csv;
use crate::network::{sample_connectivity, ConnectivityMatrix, NetworkSpec, Role};
use crate::stimuli::{all_transitions_protocol, synthetic_ecg, StimulusProgram, Window};

/// File names of an output bundle.
pub const RASTER: &str = "raster.csv";
pub const RATES: &str = "rates.csv";
pub const TIMELINE: &str = "timeline.csv";
pub const POWER: &str = "power.json";
pub const VIOLATIONS: &str = "violations.json";
pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const PLOT: &str = "plot.json";
pub const EDGES: &str = "edges.csv";

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub spec: NetworkSpec,
    pub connectivity: ConnectivityMatrix,
    pub record: SpikeRecord,
    pub timeline: StateTimeline,
    pub violations: Vec<Violation>,
    pub power: PowerReport,
    /// Encoder gain per band (amperes per unit of band signal); empty for protocol runs.
    pub gains: Vec<f64>,
    /// Stimulation windows of a protocol run, in run time.
    pub windows: Vec<Window>,
}

/// Population ids by role, in index order.
fn ids_with(spec: &NetworkSpec, pick: impl Fn(&Role) -> Option<usize>) -> Vec<String> {
    let mut found: Vec<(usize, String)> = spec
        .populations
        .iter()
        .filter_map(|p| pick(&p.role).map(|k| (k, p.id.clone())))
        .collect();
    found.sort();
    found.into_iter().map(|(_, id)| id).collect()
}

pub fn state_ids(spec: &NetworkSpec) -> Vec<String> {
    ids_with(spec, |r| match r {
        Role::State(k) => Some(*k),
        _ => None,
    })
}

pub fn encoder_ids(spec: &NetworkSpec) -> Vec<String> {
    ids_with(spec, |r| match r {
        Role::InputEncoder(k) => Some(*k),
        _ => None,
    })
}

/// Loads the configured input signal.
pub fn load_input(cfg: &RunConfig) -> Result<SampledSignal<f64>> {
    match (&cfg.input.path, &cfg.input.synthetic) {
        (Some(path), None) => Ok(read_ecg_csv(path, cfg.input.fs_hz)?.to_signal()),
        (None, Some(s)) => synthetic_ecg(&s.profile, &s.ecg, s.seed),
        (None, None) => Err(Error::Config("[input] no ECG file or synthetic profile given".into())),
        (Some(_), Some(_)) => Err(Error::Config("[input] give either `path` or `synthetic`, not both".into())),
    }
}

/// The reset pulse into STATE(0).
fn priming(spec: &NetworkSpec, cfg: &RunConfig) -> Vec<CurrentInput> {
    let e = &cfg.engine;
    match state_ids(spec).first() {
        Some(s0) if e.prime_current > 0.0 && e.prime_duration > 0.0 => vec![CurrentInput::pulse(
            DriveTarget::population(s0.clone()),
            0.0,
            e.prime_duration,
            e.prime_current,
        )],
        _ => Vec::new(),
    }
}

/// Encoder current drive for `signal`: band `i` feeds encoder `i`.
pub fn ecg_drive(spec: &NetworkSpec, frontend: &Frontend, signal: &SampledSignal<f64>) -> Result<(ExternalDrive, Vec<f64>)> {
    let encoders = encoder_ids(spec);
    if encoders.len() != frontend.bands.len() {
        return Err(Error::Config(format!(
            "{} frequency bands but {} input encoders",
            frontend.bands.len(),
            encoders.len()
        )));
    }
    let bands = frontend.band_signals(signal)?;
    let gains = frontend.gains()?;
    let currents = encoders
        .iter()
        .zip(&bands)
        .zip(&gains)
        .map(|((id, band), &g)| CurrentInput {
            target: DriveTarget::population(id.clone()),
            sample_rate: band.fs,
            start: 0.0,
            samples: band.samples.iter().map(|x| x * g).collect(),
        })
        .collect();
    Ok((
        ExternalDrive {
            currents,
            ..Default::default()
        },
        gains,
    ))
}

fn run_network(
    cfg: &RunConfig,
    spec: &NetworkSpec,
    drive: &ExternalDrive,
    duration: f64,
) -> Result<(ConnectivityMatrix, SpikeRecord)> {
    let conn = sample_connectivity(spec)?;
    let sim = SimulationConfig {
        dt: cfg.engine.dt,
        duration,
        seed: cfg.engine.seed,
        record: None,
    };
    let rec = match cfg.engine.precision {
        Precision::F64 => simulate::<f64>(spec, &conn, drive, &sim)?,
        Precision::F32 => simulate::<f32>(spec, &conn, drive, &sim)?,
    };
    Ok((conn, rec))
}

/// Drops encoder spikes: power and rate reports cover the state machine only.
pub fn core_record(spec: &NetworkSpec, rec: &SpikeRecord) -> SpikeRecord {
    let keep: Vec<bool> = rec
        .populations
        .iter()
        .map(|id| !matches!(spec.population(id).map(|p| &p.role), Some(Role::InputEncoder(_))))
        .collect();
    SpikeRecord {
        populations: rec.populations.clone(),
        sizes: rec.sizes.clone(),
        monitored: rec.monitored.iter().zip(&keep).map(|(m, k)| *m && *k).collect(),
        duration: rec.duration,
        events: rec
            .events
            .iter()
            .filter(|e| keep[e.population as usize])
            .copied()
            .collect(),
    }
}

fn analyze(
    cfg: &RunConfig,
    spec: NetworkSpec,
    connectivity: ConnectivityMatrix,
    record: SpikeRecord,
    gains: Vec<f64>,
    windows: Vec<Window>,
) -> Result<Artifacts> {
    let timeline = decode_state_with(&record, &state_ids(&spec), cfg.analysis.window, cfg.analysis.threshold)?;
    let violations = check_monotonic(&timeline);
    let power = estimate_power(
        &core_record(&spec, &record),
        &connectivity,
        &spec.layout(),
        &cfg.analysis.power,
    )?;
    Ok(Artifacts {
        spec,
        connectivity,
        record,
        timeline,
        violations,
        power,
        gains,
        windows,
    })
}

/// Full detection run on `signal`.
pub fn run_pipeline(cfg: &RunConfig, signal: &SampledSignal<f64>) -> Result<Artifacts> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    let frontend = Frontend::new(&cfg.frontend, signal.fs)?;
    let (mut drive, gains) = ecg_drive(&spec, &frontend, signal)?;
    drive.currents.extend(priming(&spec, cfg));
    let duration = cfg.engine.duration.unwrap_or_else(|| signal.duration());
    let (conn, rec) = run_network(cfg, &spec, &drive, duration)?;
    analyze(cfg, spec, conn, rec, gains, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOptions {
    pub rate: f64,
    pub segment: f64,
    pub gap: f64,
    /// Settling time after priming, before the first segment.
    pub lead_in: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            rate: 50.0,
            segment: 3.0,
            gap: 2.0,
            lead_in: 0.5,
        }
    }
}

/// Drives every ordered pair of input channels with Poisson bursts.
pub fn run_protocol(cfg: &RunConfig, opts: &ProtocolOptions) -> Result<Artifacts> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    let n = state_ids(&spec).len();
    let program = all_transitions_protocol(n, opts.rate, opts.segment, opts.gap)?;
    run_program(cfg, &spec, &program, opts.lead_in)
}

/// Runs an arbitrary stimulus program on `spec`, starting at `offset`.
pub fn run_program(cfg: &RunConfig, spec: &NetworkSpec, program: &StimulusProgram, offset: f64) -> Result<Artifacts> {
    program.validate(encoder_ids(spec).len())?;
    let mut drive = program.to_drive(offset);
    drive.currents.extend(priming(spec, cfg));
    let duration = cfg.engine.duration.unwrap_or(offset + program.duration());
    let (conn, rec) = run_network(cfg, spec, &drive, duration)?;
    analyze(cfg, spec.clone(), conn, rec, Vec::new(), program.windows(offset))
}

/// Feeds recorded spike events into the network. Without a configured
/// duration the run lasts one second past the last input spike.
pub fn run_spikes(cfg: &RunConfig, spikes: Vec<SpikeInput>) -> Result<Artifacts> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    let last = spikes.iter().map(|s| s.time).fold(0.0, f64::max);
    let mut drive = ExternalDrive {
        spikes,
        ..Default::default()
    };
    drive.currents.extend(priming(&spec, cfg));
    let duration = cfg.engine.duration.unwrap_or(last + 1.0);
    let (conn, rec) = run_network(cfg, &spec, &drive, duration)?;
    analyze(cfg, spec, conn, rec, Vec::new(), Vec::new())
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Raster, rate and timeline CSVs plus a JSON bundle that plotting tools
/// can consume directly (the raster is referenced by file, not inlined).
pub fn emit_plot_data(a: &Artifacts, window: f64, out_dir: &Path) -> Result<Vec<&'static str>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir, RASTER, a.record.to_csv())?;
    write(out_dir, RATES, rates_csv(&a.record, window)?)?;
    write(out_dir, TIMELINE, a.timeline.to_csv())?;
    let summary = summarize(&a.record, window)?;
    let rates: Vec<_> = summary
        .populations
        .iter()
        .flat_map(|p| {
            p.rates_hz.iter().enumerate().map(move |(k, r)| {
                json!({"t": k as f64 * window, "population": p.id, "rate_hz": r})
            })
        })
        .collect();
    let timeline: Vec<_> = a
        .timeline
        .entries
        .iter()
        .map(|e| json!({"t_start": e.start, "t_end": e.end, "state": e.state}))
        .collect();
    let windows: Vec<_> = a
        .windows
        .iter()
        .map(|w| json!({"channel": w.channel, "start": w.start, "end": w.end}))
        .collect();
    let bundle = json!({
        "data": [
            {"name": "raster", "url": RASTER, "format": {"type": "csv"}},
            {"name": "rates", "values": rates},
            {"name": "timeline", "values": timeline},
            {"name": "stimulus", "values": windows},
        ],
        "populations": a.record.populations,
        "sizes": a.record.sizes,
        "duration": a.record.duration,
    });
    write(out_dir, PLOT, to_json(&bundle))?;
    write(out_dir, SUMMARY, to_json(&summary))?;
    Ok(vec![RASTER, RATES, TIMELINE, PLOT, SUMMARY])
}

/// Writes the complete output bundle (everything but the manifest).
pub fn write_outputs(a: &Artifacts, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<&'static str>> {
    let mut files = emit_plot_data(a, cfg.analysis.window, out_dir)?;
    write(out_dir, POWER, to_json(&a.power))?;
    write(out_dir, VIOLATIONS, to_json(&json!({"count": a.violations.len(), "violations": a.violations})))?;
    write(out_dir, EDGES, a.connectivity.to_csv(&a.spec.layout())?)?;
    files.extend([POWER, VIOLATIONS, EDGES]);
    Ok(files)
}

/// Describes a finished or failed run. Contains no timestamps so that
/// identical runs give identical bundles.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub input: Option<String>,
    pub duration_s: Option<f64>,
    pub spikes: Option<usize>,
    pub final_state: Option<usize>,
    pub visited_states: Option<Vec<usize>>,
    pub violations: Option<usize>,
    pub power_w: Option<f64>,
    pub encoder_gains: Vec<f64>,
    pub files: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, input: Option<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            status: "failed",
            exit_code: 2,
            error: None,
            input,
            duration_s: None,
            spikes: None,
            final_state: None,
            visited_states: None,
            violations: None,
            power_w: None,
            encoder_gains: Vec::new(),
            files: Vec::new(),
            config: cfg.clone(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        write(out_dir, MANIFEST, to_json(self))
    }
}

/// Exit status for a completed run: 1 when the timeline broke monotonicity.
pub fn exit_code(a: &Artifacts) -> i32 {
    if a.violations.is_empty() {
        0
    } else {
        1
    }
}

/// Runs `job`, writes its bundle to `out_dir`, and always leaves a manifest
/// behind, marked failed if anything went wrong along the way.
pub fn run_to_dir(
    command: &str,
    cfg: &RunConfig,
    input: Option<String>,
    out_dir: &Path,
    job: impl FnOnce() -> Result<Artifacts>,
) -> Result<(Artifacts, i32)> {
    let mut manifest = Manifest::new(command, cfg, input);
    let result = job().and_then(|a| {
        manifest.files = write_outputs(&a, cfg, out_dir)?.iter().map(|s| s.to_string()).collect();
        Ok(a)
    });
    match result {
        Ok(a) => {
            let code = exit_code(&a);
            manifest.status = if code == 0 { "ok" } else { "violations" };
            manifest.exit_code = code;
            manifest.duration_s = Some(a.record.duration);
            manifest.spikes = Some(a.record.len());
            manifest.final_state = a.timeline.final_state();
            manifest.visited_states = Some(a.timeline.visited());
            manifest.violations = Some(a.violations.len());
            manifest.power_w = Some(a.power.watts);
            manifest.encoder_gains = a.gains.clone();
            manifest.write(out_dir)?;
            Ok((a, code))
        }
        Err(e) => {
            manifest.exit_code = e.exit_code();
            manifest.error = Some(e.to_string());
            // Best effort: the original error matters more than a failed manifest write.
            let _ = manifest.write(out_dir);
            Err(e)
        }
    }
}

/// Default output directory name for a command.
pub fn default_out_dir(command: &str) -> PathBuf {
    PathBuf::from(format!("out-{command}"))
}

/// Human-readable one-screen report of a run.
pub fn report(a: &Artifacts) -> String {
    let mut s = String::new();
    let visited: Vec<String> = a.timeline.visited().iter().map(|v| v.to_string()).collect();
    writeln!(s, "duration      {:.1} s", a.record.duration).ok();
    writeln!(s, "spikes        {}", a.record.len()).ok();
    writeln!(s, "states        {}", visited.join(" -> ")).ok();
    writeln!(
        s,
        "final state   {}",
        a.timeline.final_state().map(|v| v.to_string()).unwrap_or_else(|| "none".into())
    )
    .ok();
    writeln!(s, "violations    {}", a.violations.len()).ok();
    writeln!(
        s,
        "power         {:.2} uW ({:.1} Hz mean over {} neurons)",
        a.power.watts * 1e6,
        a.power.mean_rate_hz,
        a.power.neurons
    )
    .ok();
    s
}
