//! ECG ingestion and export.
//!
//! The signal format is a small CSV:
//!
//! ```text
//! fs_hz=256
//! # subject=s03
//! # activity=bike
//! t,mv
//! 0,0.012
//! 0.00390625,0.015
//! ```
//!
//! The `fs_hz=` line and the `#` metadata lines are optional; the header row
//! is not. The time column may be omitted (header `mv`), in which case the
//! samples are taken as evenly spaced.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::SampledSignal;
use crate::engine::SpikeInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecording {
    pub fs: f64,
    /// Millivolts.
    pub samples: Vec<f64>,
    pub subject: Option<String>,
    pub activity: Option<String>,
}

impl EcgRecording {
    pub fn from_signal(signal: &SampledSignal<f64>) -> Self {
        Self {
            fs: signal.fs,
            samples: signal.samples.clone(),
            subject: None,
            activity: None,
        }
    }

    pub fn to_signal(&self) -> SampledSignal<f64> {
        SampledSignal::new(self.fs, self.samples.clone())
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an ECG CSV. `fs_override` takes precedence over the file's
/// `fs_hz=` line; one of the two must be present.
pub fn read_ecg_csv(path: impl AsRef<Path>, fs_override: Option<f64>) -> Result<EcgRecording> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ecg_csv(&text, path, fs_override)
}

fn parse_ecg_csv(text: &str, path: &Path, fs_override: Option<f64>) -> Result<EcgRecording> {
    let mut fs_header = None;
    let mut subject = None;
    let mut activity = None;
    let mut columns: Option<(Option<usize>, usize)> = None;
    let mut samples = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if columns.is_none() {
            if let Some(v) = line.strip_prefix("fs_hz=") {
                let fs: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad sample rate `{v}`")))?;
                fs_header = Some(fs);
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    match k.trim() {
                        "subject" => subject = Some(v.trim().to_string()),
                        "activity" => activity = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            let names: Vec<String> = line.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
            let t = names.iter().position(|c| c == "t" || c == "t_s" || c == "time");
            let mv = names
                .iter()
                .position(|c| c == "mv" || c == "ecg" || c == "ecg_mv")
                .ok_or_else(|| parse_err(path, lineno, format!("header `{line}` has no `mv` column")))?;
            columns = Some((t, mv));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (_, mv) = columns.expect("header parsed");
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = cells
            .get(mv)
            .ok_or_else(|| parse_err(path, lineno, format!("expected {} columns, got {}", mv + 1, cells.len())))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("`{cell}` is not a number")))?;
        if !v.is_finite() {
            return Err(parse_err(path, lineno, format!("non-finite sample `{cell}`")));
        }
        samples.push(v);
    }

    if columns.is_none() {
        return Err(parse_err(path, 1, "missing header row"));
    }
    let fs = fs_override.or(fs_header).ok_or_else(|| {
        Error::Config(format!(
            "{}: no sample rate; add an `fs_hz=` line or pass it explicitly",
            path.display()
        ))
    })?;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::Config(format!("sample rate must be positive, got {fs}")));
    }
    Ok(EcgRecording {
        fs,
        samples,
        subject,
        activity,
    })
}

pub fn ecg_to_csv(rec: &EcgRecording) -> String {
    let mut out = String::with_capacity(rec.samples.len() * 24);
    writeln!(out, "fs_hz={}", rec.fs).expect("write to String");
    if let Some(s) = &rec.subject {
        writeln!(out, "# subject={s}").expect("write to String");
    }
    if let Some(a) = &rec.activity {
        writeln!(out, "# activity={a}").expect("write to String");
    }
    out.push_str("t,mv\n");
    for (i, v) in rec.samples.iter().enumerate() {
        writeln!(out, "{},{}", i as f64 / rec.fs, v).expect("write to String");
    }
    out
}

pub fn write_ecg_csv(path: impl AsRef<Path>, rec: &EcgRecording) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ecg_to_csv(rec)).map_err(|e| Error::io(path, e))
}

/// Converter for generic two-column exports (time, value) with any of `,`
/// `;` tab or space as separator and no header requirements. Lines that do
/// not parse as two numbers are skipped; the sample rate comes from the
/// median time step unless given.
pub fn convert_two_column(path: impl AsRef<Path>, fs: Option<f64>) -> Result<EcgRecording> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for line in text.lines() {
        let cells: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|c| !c.is_empty())
            .collect();
        if cells.len() < 2 {
            continue;
        }
        if let (Ok(a), Ok(b)) = (cells[0].parse::<f64>(), cells[1].parse::<f64>()) {
            if a.is_finite() && b.is_finite() {
                t.push(a);
                v.push(b);
            }
        }
    }
    let fs = match fs {
        Some(fs) => fs,
        None => {
            let mut steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
            if steps.is_empty() {
                return Err(Error::Config(format!("{}: cannot infer a sample rate", path.display())));
            }
            steps.sort_by(f64::total_cmp);
            1.0 / steps[steps.len() / 2]
        }
    };
    Ok(EcgRecording {
        fs,
        samples: v,
        subject: None,
        activity: None,
    })
}

/// Reads spike events in the raster format (`time_s,population,neuron`),
/// e.g. a previous run's `raster.csv`. Events come back sorted by time.
pub fn read_spike_csv(path: impl AsRef<Path>) -> Result<Vec<SpikeInput>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spike_csv(&text, path)
}

fn parse_spike_csv(text: &str, path: &Path) -> Result<Vec<SpikeInput>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(path, hline, format!("header `{header}` has no `{name}` column")))
    };
    let (ct, cp, cn) = (col("time_s")?, col("population")?, col("neuron")?);
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| {
            cells
                .get(c)
                .copied()
                .ok_or_else(|| parse_err(path, lineno, format!("expected {} columns, got {}", names.len(), cells.len())))
        };
        let time: f64 = get(ct)?
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad spike time"))?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(parse_err(path, lineno, format!("spike time must be finite and >= 0, got {time}")));
        }
        let neuron: usize = get(cn)?
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad neuron index"))?;
        out.push(SpikeInput {
            time,
            population: get(cp)?.to_string(),
            neuron,
        });
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}
