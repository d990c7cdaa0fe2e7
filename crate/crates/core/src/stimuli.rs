//! Test signals: Poisson spike trains, the all-transitions stimulation
//! protocol, and a synthetic ECG with a programmable heart-rate profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::SampledSignal;
use crate::engine::{DriveTarget, ExternalDrive, PoissonInput};
use crate::error::{Error, Result};
use crate::network::input_id;

/// Spike times of a homogeneous Poisson process on `[0, duration)`.
pub fn poisson_train<R: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut R) -> Vec<f64> {
    if !(rate > 0.0) || !(duration > 0.0) {
        return Vec::new();
    }
    let isi = Exp::new(rate).expect("positive rate");
    let mut times = Vec::with_capacity((rate * duration * 1.2) as usize + 4);
    let mut t = isi.sample(rng);
    while t < duration {
        times.push(t);
        t += isi.sample(rng);
    }
    times
}

pub fn poisson_train_seeded(rate: f64, duration: f64, seed: u64) -> Vec<f64> {
    poisson_train(rate, duration, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Driven input channel; `None` is a silent gap.
    pub channel: Option<usize>,
    pub rate: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StimulusProgram {
    pub segments: Vec<Segment>,
}

/// A stimulation segment placed on the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub channel: usize,
    pub start: f64,
    pub end: f64,
}

impl StimulusProgram {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        for s in &self.segments {
            if !(s.duration > 0.0) || s.rate < 0.0 {
                return Err(Error::InvalidInput(format!("invalid stimulus segment {s:?}")));
            }
            if let Some(c) = s.channel {
                if c >= n_channels {
                    return Err(Error::InvalidInput(format!(
                        "segment drives channel {c} but only {n_channels} exist"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Driven segments with absolute times, starting the program at `offset`.
    pub fn windows(&self, offset: f64) -> Vec<Window> {
        let mut t = offset;
        let mut out = Vec::new();
        for s in &self.segments {
            if let Some(channel) = s.channel {
                out.push(Window {
                    channel,
                    start: t,
                    end: t + s.duration,
                });
            }
            t += s.duration;
        }
        out
    }

    /// Poisson drive onto the input encoders, one train per encoder neuron.
    pub fn to_drive(&self, offset: f64) -> ExternalDrive {
        let rates: Vec<f64> = self
            .segments
            .iter()
            .filter(|s| s.channel.is_some())
            .map(|s| s.rate)
            .collect();
        ExternalDrive {
            poisson: self
                .windows(offset)
                .into_iter()
                .zip(rates)
                .map(|(w, rate)| PoissonInput {
                    target: DriveTarget::population(input_id(w.channel)),
                    rate,
                    start: w.start,
                    end: w.end,
                })
                .collect(),
            ..Default::default()
        }
    }
}

/// Visits every ordered channel pair `(i, j)`, `i != j`, in lexicographic
/// order: drive `i` for one segment, pause, drive `j`, pause.
pub fn all_transitions_protocol(n_states: usize, rate: f64, segment: f64, gap: f64) -> Result<StimulusProgram> {
    if n_states < 2 {
        return Err(Error::InvalidInput(format!("protocol needs at least 2 states, got {n_states}")));
    }
    let mut segments = Vec::new();
    for i in 0..n_states {
        for j in (0..n_states).filter(|&j| j != i) {
            for c in [i, j] {
                segments.push(Segment {
                    channel: Some(c),
                    rate,
                    duration: segment,
                });
                if gap > 0.0 {
                    segments.push(Segment {
                        channel: None,
                        rate: 0.0,
                        duration: gap,
                    });
                }
            }
        }
    }
    Ok(StimulusProgram { segments })
}

/// Piecewise-linear instantaneous heart rate; constant beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrProfile {
    /// `(time s, bpm)` knots.
    pub knots: Vec<(f64, f64)>,
}

pub const MIN_BPM: f64 = 30.0;
pub const MAX_BPM: f64 = 220.0;

impl HrProfile {
    pub fn constant(bpm: f64, duration: f64) -> Self {
        Self {
            knots: vec![(0.0, bpm), (duration, bpm)],
        }
    }

    pub fn ramp(from: f64, to: f64, duration: f64) -> Self {
        Self {
            knots: vec![(0.0, from), (duration, to)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.len() < 2 {
            return Err(Error::InvalidProfile("at least two knots are required".into()));
        }
        for &(t, bpm) in &self.knots {
            if !(MIN_BPM..=MAX_BPM).contains(&bpm) || !t.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "knot ({t}, {bpm}) outside [{MIN_BPM}, {MAX_BPM}] bpm"
                )));
            }
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidProfile("knot times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.knots.last().map(|k| k.0).unwrap_or(0.0)
    }

    pub fn bpm_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, b0), (t1, b1)) = (w[0], w[1]);
            if t <= t1 {
                return b0 + (b1 - b0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEcgOptions {
    pub fs: f64,
    /// Full width at half maximum of the Gaussian QRS surrogate, seconds.
    pub pulse_fwhm: f64,
    /// Additive white noise at this SNR (dB, relative to the mean signal power); `None` disables it.
    pub snr_db: Option<f64>,
}

impl Default for SyntheticEcgOptions {
    fn default() -> Self {
        Self {
            fs: 256.0,
            pulse_fwhm: 0.025,
            snr_db: None,
        }
    }
}

/// Beat times for `profile`: each interval equals `60 / bpm` evaluated at the
/// beat that opens it. The first beat sits half an interval after zero.
pub fn beat_times(profile: &HrProfile) -> Vec<f64> {
    let end = profile.duration();
    let mut t = 30.0 / profile.bpm_at(0.0);
    let mut beats = Vec::new();
    while t < end {
        beats.push(t);
        t += 60.0 / profile.bpm_at(t);
    }
    beats
}

/// Train of unit-amplitude Gaussian pulses following `profile`, on a zero baseline.
pub fn synthetic_ecg(profile: &HrProfile, opts: &SyntheticEcgOptions, seed: u64) -> Result<SampledSignal<f64>> {
    profile.validate()?;
    if opts.fs < 128.0 {
        return Err(Error::InvalidInput(format!("synthetic ECG needs fs >= 128 Hz, got {}", opts.fs)));
    }
    if !(opts.pulse_fwhm > 0.0) {
        return Err(Error::InvalidInput("pulse width must be positive".into()));
    }
    let n = (profile.duration() * opts.fs).round() as usize;
    let sigma = opts.pulse_fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let reach = 6.0 * sigma;
    let mut samples = vec![0.0; n];
    for beat in beat_times(profile) {
        let lo = ((beat - reach) * opts.fs).floor().max(0.0) as usize;
        let hi = (((beat + reach) * opts.fs).ceil() as usize).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
            let d = i as f64 / opts.fs - beat;
            *s += (-0.5 * (d / sigma).powi(2)).exp();
        }
    }
    if let Some(snr_db) = opts.snr_db {
        let power = samples.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64;
        let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        if sd > 0.0 {
            let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in samples.iter_mut() {
                *s += noise.sample(&mut rng);
            }
        }
    }
    Ok(SampledSignal {
        fs: opts.fs,
        samples,
        units: "a.u.".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_empty() {
        assert!(poisson_train_seeded(0.0, 10.0, 1).is_empty());
    }

    #[test]
    fn poisson_is_seed_deterministic() {
        assert_eq!(poisson_train_seeded(50.0, 5.0, 7), poisson_train_seeded(50.0, 5.0, 7));
        assert_ne!(poisson_train_seeded(50.0, 5.0, 7), poisson_train_seeded(50.0, 5.0, 8));
    }

    #[test]
    fn poisson_isi_cv_is_one() {
        let t = poisson_train_seeded(50.0, 100.0, 3);
        let isi: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = isi.iter().sum::<f64>() / isi.len() as f64;
        let var = isi.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (isi.len() - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((0.9..=1.1).contains(&cv), "{cv}");
        assert!((mean - 0.02).abs() < 0.001);
    }

    #[test]
    fn protocol_shapes() {
        let p = all_transitions_protocol(4, 50.0, 3.0, 2.0).unwrap();
        let w = p.windows(0.0);
        assert_eq!(w.len(), 24);
        for c in 0..4 {
            let firsts = w.iter().step_by(2).filter(|x| x.channel == c).count();
            assert_eq!(firsts, 3);
        }
        let p2 = all_transitions_protocol(2, 50.0, 3.0, 2.0).unwrap();
        let ch: Vec<usize> = p2.windows(0.0).iter().map(|w| w.channel).collect();
        assert_eq!(ch, vec![0, 1, 1, 0]);
        assert!(all_transitions_protocol(1, 50.0, 3.0, 2.0).is_err());
        assert_eq!(p.duration(), 24.0 * 5.0);
    }

    #[test]
    fn protocol_windows_are_contiguous_with_gaps() {
        let p = all_transitions_protocol(3, 50.0, 3.0, 2.0).unwrap();
        let w = p.windows(1.0);
        assert_eq!(w[0].start, 1.0);
        for pair in w.windows(2) {
            assert!((pair[1].start - pair[0].end - 2.0).abs() < 1e-9);
        }
        let drive = p.to_drive(1.0);
        assert_eq!(drive.poisson.len(), w.len());
        assert_eq!(drive.poisson[1].target.population, "input1");
    }

    #[test]
    fn constant_60_bpm_pulses() {
        let ecg = synthetic_ecg(&HrProfile::constant(60.0, 60.0), &SyntheticEcgOptions::default(), 0).unwrap();
        let beats = beat_times(&HrProfile::constant(60.0, 60.0));
        assert!((59..=61).contains(&beats.len()));
        for w in beats.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() <= 0.005);
        }
        assert_eq!(ecg.samples.len(), 60 * 256);
        // local maxima above half amplitude, one per beat
        let peaks = ecg
            .samples
            .windows(3)
            .filter(|w| w[1] > 0.5 && w[1] >= w[0] && w[1] > w[2])
            .count();
        assert_eq!(peaks, beats.len());
    }

    #[test]
    fn noiseless_ecg_is_deterministic_with_zero_baseline() {
        let prof = HrProfile::constant(75.0, 20.0);
        let a = synthetic_ecg(&prof, &SyntheticEcgOptions::default(), 1).unwrap();
        let b = synthetic_ecg(&prof, &SyntheticEcgOptions::default(), 2).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        let baseline = a.samples.iter().filter(|&&x| x < 1e-12).count();
        assert!(baseline > a.samples.len() / 2);
    }

    #[test]
    fn noise_is_seeded() {
        let prof = HrProfile::constant(75.0, 10.0);
        let opts = SyntheticEcgOptions {
            snr_db: Some(10.0),
            ..Default::default()
        };
        let a = synthetic_ecg(&prof, &opts, 1).unwrap();
        assert_eq!(a, synthetic_ecg(&prof, &opts, 1).unwrap());
        assert_ne!(a, synthetic_ecg(&prof, &opts, 2).unwrap());
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(HrProfile::constant(20.0, 10.0).validate().is_err());
        assert!(HrProfile::constant(250.0, 10.0).validate().is_err());
        let p = HrProfile {
            knots: vec![(0.0, 60.0), (0.0, 70.0)],
        };
        assert!(matches!(p.validate(), Err(Error::InvalidProfile(_))));
        assert!(synthetic_ecg(&HrProfile::constant(300.0, 1.0), &SyntheticEcgOptions::default(), 0).is_err());
        let low_fs = SyntheticEcgOptions {
            fs: 100.0,
            ..Default::default()
        };
        assert!(synthetic_ecg(&HrProfile::constant(60.0, 1.0), &low_fs, 0).is_err());
    }

    #[test]
    fn profile_interpolates() {
        let p = HrProfile {
            knots: vec![(0.0, 60.0), (10.0, 80.0), (20.0, 80.0)],
        };
        assert_eq!(p.bpm_at(-1.0), 60.0);
        assert_eq!(p.bpm_at(5.0), 70.0);
        assert_eq!(p.bpm_at(15.0), 80.0);
        assert_eq!(p.bpm_at(25.0), 80.0);
    }
}
