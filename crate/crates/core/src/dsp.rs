//! ECG-to-spike frontend: Butterworth bandpass filterbank over heart-rate
//! bands, full-wave rectification, and LIF current encoding.
//!
//! Filters are designed from the analog Butterworth prototype, moved to the
//! bandpass (or lowpass) domain, and mapped to the z-plane with a bilinear
//! transform whose edges are pre-warped, so the digital -3 dB points land
//! exactly on the requested band edges. Each conjugate pole pair becomes one
//! second-order section.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{lif_step, LifParams, NeuronState};
use crate::scalar::Scalar;
use crate::stimuli::{synthetic_ecg, HrProfile, SyntheticEcgOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal<T> {
    pub fs: f64,
    pub samples: Vec<T>,
    pub units: String,
}

impl<T: Scalar> SampledSignal<T> {
    pub fn new(fs: f64, samples: Vec<T>) -> Self {
        Self {
            fs,
            samples,
            units: "a.u.".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidInput(format!("sample rate must be positive, got {}", self.fs)));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    fn with_samples(&self, samples: Vec<T>) -> Self {
        Self {
            fs: self.fs,
            samples,
            units: self.units.clone(),
        }
    }
}

pub fn bpm_to_hz(bpm: f64) -> f64 {
    bpm / 60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub index: usize,
    pub low_bpm: f64,
    pub high_bpm: f64,
}

impl BandSpec {
    pub fn low_hz(&self) -> f64 {
        bpm_to_hz(self.low_bpm)
    }

    pub fn high_hz(&self) -> f64 {
        bpm_to_hz(self.high_bpm)
    }

    /// Geometric band center in bpm.
    pub fn center_bpm(&self) -> f64 {
        (self.low_bpm * self.high_bpm).sqrt()
    }

    pub fn contains(&self, bpm: f64) -> bool {
        (self.low_bpm..self.high_bpm).contains(&bpm)
    }
}

/// The four heart-rate bands: relaxed (#0) to tachycardic (#3).
pub fn default_bands() -> Vec<BandSpec> {
    [(60.0, 82.0), (82.0, 105.0), (105.0, 128.0), (128.0, 150.0)]
        .into_iter()
        .enumerate()
        .map(|(index, (low_bpm, high_bpm))| BandSpec {
            index,
            low_bpm,
            high_bpm,
        })
        .collect()
}

pub fn validate_bands(bands: &[BandSpec]) -> Result<()> {
    for (i, b) in bands.iter().enumerate() {
        if b.index != i || !(b.low_bpm > 0.0) || b.low_bpm >= b.high_bpm {
            return Err(Error::InvalidBand(format!("band {i} is malformed: {b:?}")));
        }
    }
    if bands.windows(2).any(|w| w[1].low_bpm < w[0].high_bpm) {
        return Err(Error::InvalidBand("bands must be ordered and non-overlapping".into()));
    }
    Ok(())
}

/// Normalized second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad<T> {
    pub b0: T,
    pub b1: T,
    pub b2: T,
    pub a1: T,
    pub a2: T,
}

impl<T: Scalar> Biquad<T> {
    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a1.as_f64(), self.a2.as_f64());
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) / 2.0;
        let p2 = (-a1 - disc) / 2.0;
        p1.norm().max(p2.norm())
    }

    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b0.as_f64() + self.b1.as_f64() * z1 + self.b2.as_f64() * z2;
        let den = 1.0 + self.a1.as_f64() * z1 + self.a2.as_f64() * z2;
        num / den
    }
}

/// Cascade of second-order sections with per-section transposed
/// direct-form II state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade<T> {
    pub sections: Vec<Biquad<T>>,
    state: Vec<[T; 2]>,
}

impl<T: Scalar> BiquadCascade<T> {
    pub fn new(sections: Vec<Biquad<T>>) -> Self {
        let state = vec![[T::zero(); 2]; sections.len()];
        Self { sections, state }
    }

    /// Filter order (two per section).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radius() < 1.0 - 1e-6)
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [T::zero(); 2]);
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        let mut y = x;
        for (s, z) in self.sections.iter().zip(self.state.iter_mut()) {
            let input = y;
            y = s.b0 * input + z[0];
            z[0] = s.b1 * input - s.a1 * y + z[1];
            z[1] = s.b2 * input - s.a2 * y;
        }
        y
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(freq_hz, fs).norm().log10()
    }

    /// Coefficients as CSV, one row per section: `section,b0,b1,b2,a0,a1,a2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,b0,b1,b2,a0,a1,a2\n");
        for (i, s) in self.sections.iter().enumerate() {
            writeln!(out, "{i},{},{},{},1,{},{}", s.b0, s.b1, s.b2, s.a1, s.a2).expect("write to String");
        }
        out
    }
}

/// Which reading of "fourth order" a band filter uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOrder {
    /// 4th-order bandpass from a 2nd-order prototype (two sections).
    Fourth,
    /// 8th-order bandpass from a 4th-order prototype (four sections).
    Eighth,
}

impl FilterOrder {
    pub fn prototype_order(self) -> usize {
        match self {
            FilterOrder::Fourth => 2,
            FilterOrder::Eighth => 4,
        }
    }
}

fn prewarp(f_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (std::f64::consts::PI * f_hz / fs).tan()
}

/// Left-half-plane poles of the normalized Butterworth lowpass prototype.
fn butterworth_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    (2.0 * fs + s) / (2.0 * fs - s)
}

/// Groups analog poles into conjugate pairs (or pairs of real poles) and
/// returns the digital denominators `(a1, a2)`.
fn digital_denominators(poles: &[Complex64], fs: f64) -> Vec<(f64, f64)> {
    let tol = 1e-9;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        let z = bilinear(p, fs);
        if p.im > tol * p.norm().max(1.0) {
            out.push((-2.0 * z.re, z.norm_sqr()));
        } else if p.im.abs() <= tol * p.norm().max(1.0) {
            reals.push(z.re);
        }
    }
    for pair in reals.chunks(2) {
        match *pair {
            [z1, z2] => out.push((-(z1 + z2), z1 * z2)),
            [z1] => out.push((-z1, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

fn normalize_sections<T: Scalar>(dens: Vec<(f64, f64)>, numerator: [f64; 3], omega: f64) -> Vec<Biquad<T>> {
    dens.into_iter()
        .map(|(a1, a2)| {
            let raw = Biquad {
                b0: numerator[0],
                b1: numerator[1],
                b2: numerator[2],
                a1,
                a2,
            };
            let g = 1.0 / raw.response(omega).norm();
            Biquad {
                b0: T::lit(numerator[0] * g),
                b1: T::lit(numerator[1] * g),
                b2: T::lit(numerator[2] * g),
                a1: T::lit(a1),
                a2: T::lit(a2),
            }
        })
        .collect()
}

/// Digital Butterworth bandpass for `band` at sample rate `fs`.
pub fn design_butterworth_bandpass<T: Scalar>(band: &BandSpec, fs: f64, order: FilterOrder) -> Result<BiquadCascade<T>> {
    design_bandpass_hz(band.low_hz(), band.high_hz(), fs, order.prototype_order())
}

/// Digital Butterworth bandpass between `low_hz` and `high_hz` with a
/// prototype of `prototype_order` (the bandpass has twice that order).
pub fn design_bandpass_hz<T: Scalar>(low_hz: f64, high_hz: f64, fs: f64, prototype_order: usize) -> Result<BiquadCascade<T>> {
    if !(fs > 0.0) || !(low_hz > 0.0) || low_hz >= high_hz || high_hz >= fs / 2.0 || prototype_order == 0 {
        return Err(Error::InvalidBand(format!(
            "need 0 < {low_hz} < {high_hz} < Nyquist {} Hz",
            fs / 2.0
        )));
    }
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let w0_sq = w1 * w2;
    let bw = w2 - w1;
    let mut poles = Vec::with_capacity(2 * prototype_order);
    for p in butterworth_prototype(prototype_order) {
        let half = p * bw / 2.0;
        let root = (half * half - w0_sq).sqrt();
        poles.push(half + root);
        poles.push(half - root);
    }
    let omega0 = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
    let sections = normalize_sections(digital_denominators(&poles, fs), [1.0, 0.0, -1.0], omega0);
    Ok(BiquadCascade::new(sections))
}

/// Digital Butterworth lowpass of even `order` with unit DC gain.
pub fn design_butterworth_lowpass<T: Scalar>(cutoff_hz: f64, fs: f64, order: usize) -> Result<BiquadCascade<T>> {
    if !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 || order == 0 || !order.is_multiple_of(2) {
        return Err(Error::InvalidBand(format!(
            "lowpass needs an even order and 0 < {cutoff_hz} < Nyquist {} Hz",
            fs / 2.0
        )));
    }
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<Complex64> = butterworth_prototype(order).into_iter().map(|p| p * wc).collect();
    let sections = normalize_sections(digital_denominators(&poles, fs), [1.0, 2.0, 1.0], 0.0);
    Ok(BiquadCascade::new(sections))
}

/// Causal filtering from a zero initial state; `f`'s own state is untouched.
pub fn filter_signal<T: Scalar>(x: &SampledSignal<T>, f: &BiquadCascade<T>) -> SampledSignal<T> {
    let mut f = f.clone();
    f.reset();
    x.with_samples(x.samples.iter().map(|&v| f.process(v)).collect())
}

pub fn full_wave_rectify<T: Scalar>(x: &SampledSignal<T>) -> SampledSignal<T> {
    x.with_samples(x.samples.iter().map(|v| v.abs()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderParams<T> {
    /// Amperes per input unit.
    pub gain: T,
    pub lif: LifParams<T>,
}

/// Runs one LIF neuron on `gain * x` (sample-and-hold onto steps of `dt`)
/// and returns its spike times.
pub fn encode_to_spikes<T: Scalar>(x: &SampledSignal<T>, e: &EncoderParams<T>, dt: f64) -> Result<Vec<f64>> {
    if !(e.gain > T::zero()) {
        return Err(Error::InvalidParams(format!("encoder gain must be positive, got {}", e.gain)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    e.lif.validate()?;
    let steps = (x.duration() / dt - 1e-9).ceil().max(0.0) as usize;
    let dt_t = T::lit(dt);
    let mut s = NeuronState::at_rest(e.lif.v_rest);
    let mut spikes = Vec::new();
    for n in 0..steps {
        let idx = ((n as f64 * dt * x.fs) + 1e-9).floor() as usize;
        let input = x.samples.get(idx).copied().unwrap_or(T::zero()) * e.gain;
        let (next, spiked) = lif_step(&s, &e.lif, input, dt_t)
            .map_err(|source| Error::NumericalOverflow {
                population: "encoder".into(),
                neuron: 0,
                time: (n + 1) as f64 * dt,
                source,
            })?;
        s = next;
        if spiked {
            spikes.push((n + 1) as f64 * dt);
        }
    }
    Ok(spikes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GainSetting {
    /// Per band, the gain at which a synthetic ECG at the band's center rate
    /// drives the encoder at `target_rate` Hz.
    Auto { target_rate: f64 },
    Fixed { gains: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub bands: Vec<BandSpec>,
    pub filter_order: FilterOrder,
    /// QRS-band envelope (bandpass, rectify, lowpass) ahead of the filterbank.
    pub envelope: bool,
    pub envelope_band_hz: (f64, f64),
    pub envelope_lowpass_hz: f64,
    /// Scale the filterbank input so its 99th percentile magnitude is 1.
    pub normalize: bool,
    /// Lowpass cutoff applied after rectifying each band, turning the
    /// per-beat pulses into a steady level. `None` feeds the rectified
    /// band straight to the encoder.
    pub smoothing_hz: Option<f64>,
    pub encoder: LifParams<f64>,
    pub gain: GainSetting,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            bands: default_bands(),
            filter_order: FilterOrder::Fourth,
            envelope: true,
            envelope_band_hz: (5.0, 40.0),
            envelope_lowpass_hz: 5.0,
            normalize: true,
            smoothing_hz: Some(SMOOTHING_HZ),
            encoder: LifParams::default(),
            gain: GainSetting::Auto { target_rate: 50.0 },
        }
    }
}

/// Designed filterbank plus pre-stage for one sample rate.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub config: FrontendConfig,
    pub fs: f64,
    pub bands: Vec<BiquadCascade<f64>>,
    envelope_band: Option<BiquadCascade<f64>>,
    envelope_lowpass: Option<BiquadCascade<f64>>,
    smoothing: Option<BiquadCascade<f64>>,
}

const NORMALIZE_PERCENTILE: f64 = 0.99;
const SMOOTHING_HZ: f64 = 0.5;

impl Frontend {
    pub fn new(config: &FrontendConfig, fs: f64) -> Result<Self> {
        validate_bands(&config.bands)?;
        config.encoder.validate()?;
        let bands = config
            .bands
            .iter()
            .map(|b| design_butterworth_bandpass(b, fs, config.filter_order))
            .collect::<Result<Vec<_>>>()?;
        let (envelope_band, envelope_lowpass) = if config.envelope {
            let (lo, hi) = config.envelope_band_hz;
            (
                Some(design_bandpass_hz(lo, hi, fs, 2)?),
                Some(design_butterworth_lowpass(config.envelope_lowpass_hz, fs, 2)?),
            )
        } else {
            (None, None)
        };
        let smoothing = config
            .smoothing_hz
            .map(|hz| design_butterworth_lowpass(hz, fs, 2))
            .transpose()?;
        if let GainSetting::Fixed { gains } = &config.gain {
            if gains.len() != config.bands.len() || gains.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::Config(format!(
                    "need {} positive encoder gains, got {gains:?}",
                    config.bands.len()
                )));
            }
        }
        Ok(Self {
            config: config.clone(),
            fs,
            bands,
            envelope_band,
            envelope_lowpass,
            smoothing,
        })
    }

    /// Pre-stage and normalization: the common input of every band filter.
    pub fn condition(&self, x: &SampledSignal<f64>) -> Result<SampledSignal<f64>> {
        x.validate()?;
        if (x.fs - self.fs).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "frontend designed for {} Hz, signal sampled at {} Hz",
                self.fs, x.fs
            )));
        }
        let mut y = x.clone();
        if let (Some(bp), Some(lp)) = (&self.envelope_band, &self.envelope_lowpass) {
            y = filter_signal(&full_wave_rectify(&filter_signal(&y, bp)), lp);
        }
        if self.config.normalize {
            let scale = percentile_abs(&y.samples, NORMALIZE_PERCENTILE);
            if scale > 0.0 {
                y.samples.iter_mut().for_each(|v| *v /= scale);
            }
        }
        Ok(y)
    }

    /// Rectified (and smoothed, if configured) output of every band filter,
    /// unitless and before encoder gain.
    pub fn band_signals(&self, x: &SampledSignal<f64>) -> Result<Vec<SampledSignal<f64>>> {
        let y = self.condition(x)?;
        Ok(self
            .bands
            .iter()
            .map(|f| {
                let r = full_wave_rectify(&filter_signal(&y, f));
                match &self.smoothing {
                    Some(lp) => filter_signal(&r, lp),
                    None => r,
                }
            })
            .collect())
    }

    /// Encoder gain per band, calibrating if configured to.
    pub fn gains(&self) -> Result<Vec<f64>> {
        match &self.config.gain {
            GainSetting::Fixed { gains } => Ok(gains.clone()),
            GainSetting::Auto { target_rate } => self
                .config
                .bands
                .iter()
                .map(|b| self.calibrate_band(b, *target_rate))
                .collect(),
        }
    }

    fn calibrate_band(&self, band: &BandSpec, target_rate: f64) -> Result<f64> {
        const SETTLE: f64 = 5.0;
        const MEASURE: f64 = 20.0;
        let profile = HrProfile::constant(band.center_bpm(), SETTLE + MEASURE);
        let ecg = synthetic_ecg(
            &profile,
            &SyntheticEcgOptions {
                fs: self.fs,
                ..Default::default()
            },
            0,
        )?;
        let drive = &self.band_signals(&ecg)?[band.index];
        let skip = (SETTLE * self.fs) as usize;
        let steady = SampledSignal::new(self.fs, drive.samples[skip..].to_vec());
        let rate = |gain: f64| -> Result<f64> {
            let e = EncoderParams {
                gain,
                lif: self.config.encoder,
            };
            Ok(encode_to_spikes(&steady, &e, 1e-4)?.len() as f64 / steady.duration())
        };
        let peak = steady.samples.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Config(format!("band {} produced no signal during calibration", band.index)));
        }
        // Bracket: at gain * peak = rheobase the encoder is silent.
        let mut lo = self.config.encoder.rheobase() / peak;
        let mut hi = 2.0 * lo;
        let mut guard = 0;
        while rate(hi)? < target_rate {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 40 {
                return Err(Error::Config(format!("encoder cannot reach {target_rate} Hz")));
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if rate(mid)? < target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

fn percentile_abs(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = x.iter().map(|a| a.abs()).collect();
    let k = ((v.len() - 1) as f64 * q).round() as usize;
    let (_, kth, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *kth
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FS: f64 = 256.0;

    fn band0() -> BiquadCascade<f64> {
        design_butterworth_bandpass(&default_bands()[0], FS, FilterOrder::Fourth).unwrap()
    }

    fn sine(freq: f64, seconds: f64) -> SampledSignal<f64> {
        let n = (seconds * FS) as usize;
        SampledSignal::new(
            FS,
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / FS).sin())
                .collect(),
        )
    }

    fn steady_amplitude(y: &SampledSignal<f64>, settle: f64) -> f64 {
        let skip = (settle * y.fs) as usize;
        y.samples[skip..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn bpm_conversion() {
        assert_eq!(bpm_to_hz(60.0), 1.0);
        assert_eq!(bpm_to_hz(150.0), 2.5);
        assert!((bpm_to_hz(82.0) - 1.3667).abs() < 5e-5);
    }

    #[test]
    fn default_bands_are_valid() {
        validate_bands(&default_bands()).unwrap();
        let mut bad = default_bands();
        bad[1].low_bpm = 70.0;
        assert!(validate_bands(&bad).is_err());
    }

    #[test]
    fn band0_edges_and_center() {
        let f = band0();
        assert_eq!(f.order(), 4);
        for edge in [1.0, 82.0 / 60.0] {
            let db = f.magnitude_db(edge, FS);
            assert!((-3.5..=-2.5).contains(&db), "{edge} Hz: {db} dB");
        }
        let center = (1.0f64 * 82.0 / 60.0).sqrt();
        assert!(f.magnitude_db(center, FS) >= -0.1);
    }

    #[test]
    fn eighth_order_reading() {
        let f: BiquadCascade<f64> = design_butterworth_bandpass(&default_bands()[2], FS, FilterOrder::Eighth).unwrap();
        assert_eq!(f.sections.len(), 4);
        assert!(f.is_stable());
        let db = f.magnitude_db(105.0 / 60.0, FS);
        assert!((-3.5..=-2.5).contains(&db));
        // steeper than the 4th-order design outside the band
        let f4: BiquadCascade<f64> = design_butterworth_bandpass(&default_bands()[2], FS, FilterOrder::Fourth).unwrap();
        assert!(f.magnitude_db(3.0, FS) < f4.magnitude_db(3.0, FS));
    }

    #[test]
    fn invalid_bands_rejected() {
        let b = BandSpec {
            index: 0,
            low_bpm: 60.0,
            high_bpm: 8000.0,
        };
        assert!(matches!(
            design_butterworth_bandpass::<f64>(&b, FS, FilterOrder::Fourth),
            Err(Error::InvalidBand(_))
        ));
        assert!(design_bandpass_hz::<f64>(2.0, 1.0, FS, 2).is_err());
        assert!(design_butterworth_lowpass::<f64>(5.0, FS, 3).is_err());
    }

    #[test]
    fn sinusoid_pass_and_reject() {
        let f = band0();
        let pass = steady_amplitude(&filter_signal(&sine(1.15, 60.0), &f), 20.0);
        assert!(pass >= 0.9, "{pass}");
        let reject = steady_amplitude(&filter_signal(&sine(3.0, 60.0), &f), 20.0);
        assert!(reject <= 0.1, "{reject}");
    }

    #[test]
    fn zero_in_zero_out() {
        let y = filter_signal(&SampledSignal::new(FS, vec![0.0; 500]), &band0());
        assert!(y.samples.iter().all(|&v| v == 0.0));
        assert_eq!(y.samples.len(), 500);
        assert_eq!(y.fs, FS);
    }

    #[test]
    fn impulse_energy_matches_spectrum() {
        let f = band0();
        let mut impulse = vec![0.0; 1 << 16];
        impulse[0] = 1.0;
        let h = filter_signal(&SampledSignal::new(FS, impulse), &f);
        let energy: f64 = h.samples.iter().map(|v| v * v).sum();
        // Parseval: sum h^2 = (1/pi) * integral_0^pi |H(w)|^2 dw (trapezoid, fine grid).
        let n = 400_000;
        let mut integral = 0.0;
        for k in 0..=n {
            let w = std::f64::consts::PI * k as f64 / n as f64;
            let m = f.response(w * FS / (2.0 * std::f64::consts::PI), FS).norm_sqr();
            integral += if k == 0 || k == n { 0.5 * m } else { m };
        }
        let spectral = integral / n as f64;
        assert!((energy - spectral).abs() / spectral < 0.01, "{energy} vs {spectral}");
    }

    #[test]
    fn lowpass_has_unit_dc_gain() {
        let f: BiquadCascade<f64> = design_butterworth_lowpass(5.0, FS, 2).unwrap();
        assert!((f.response(0.0, FS).norm() - 1.0).abs() < 1e-12);
        assert!((f.magnitude_db(5.0, FS) + 3.0103).abs() < 0.01);
        assert!(f.is_stable());
    }

    #[test]
    fn f32_filter_tracks_f64() {
        let b = &default_bands()[1];
        let f64_filter: BiquadCascade<f64> = design_butterworth_bandpass(b, FS, FilterOrder::Fourth).unwrap();
        let f32_filter: BiquadCascade<f32> = design_butterworth_bandpass(b, FS, FilterOrder::Fourth).unwrap();
        let x = sine(1.55, 30.0);
        let x32 = SampledSignal::new(FS, x.samples.iter().map(|&v| v as f32).collect());
        let y64 = filter_signal(&x, &f64_filter);
        let y32 = filter_signal(&x32, &f32_filter);
        let err = y64
            .samples
            .iter()
            .zip(&y32.samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - *b as f64).abs()));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn rectifier_examples() {
        let x = SampledSignal::new(FS, vec![-1.0, 2.0, -3.0]);
        assert_eq!(full_wave_rectify(&x).samples, vec![1.0, 2.0, 3.0]);
        let pos = SampledSignal::new(FS, vec![0.0, 1.5, 2.0]);
        assert_eq!(full_wave_rectify(&pos), pos);
    }

    #[test]
    fn coefficient_csv() {
        let csv = band0().to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("section,b0,b1,b2,a0,a1,a2\n0,"));
    }

    #[test]
    fn zero_signal_encodes_nothing() {
        let e = EncoderParams {
            gain: 1e-9,
            lif: LifParams::default(),
        };
        let spikes = encode_to_spikes(&SampledSignal::new(FS, vec![0.0; 2560]), &e, 1e-4).unwrap();
        assert!(spikes.is_empty());
        assert!(encode_to_spikes(&SampledSignal::new(FS, vec![0.0; 10]), &EncoderParams { gain: 0.0, ..e }, 1e-4).is_err());
    }

    #[test]
    fn constant_amplitude_encodes_at_lif_rate() {
        let lif: LifParams<f64> = LifParams {
            t_ref: 0.0,
            ..LifParams::default()
        };
        let e = EncoderParams { gain: 300e-12, lif };
        let amp = 1.5;
        let spikes = encode_to_spikes(&SampledSignal::new(FS, vec![amp; 10 * 256]), &e, 1e-4).unwrap();
        let drive = lif.resistance * e.gain * amp;
        let expected = 1.0 / (lif.tau_m * (drive / (drive - (lif.v_thresh - lif.v_rest))).ln());
        let measured = spikes.len() as f64 / 10.0;
        assert!((measured - expected).abs() / expected < 0.02, "{measured} vs {expected}");
    }

    #[test]
    fn mismatched_sample_rate_rejected() {
        let fe = Frontend::new(&FrontendConfig::default(), FS).unwrap();
        assert!(fe.condition(&SampledSignal::new(128.0, vec![0.0; 10])).is_err());
        assert!(fe.condition(&SampledSignal::new(FS, vec![f64::NAN])).is_err());
    }

    #[test]
    fn fixed_gains_validated() {
        let cfg = FrontendConfig {
            gain: GainSetting::Fixed { gains: vec![1.0; 3] },
            ..Default::default()
        };
        assert!(Frontend::new(&cfg, FS).is_err());
    }

    proptest! {
        #[test]
        fn filtering_is_linear(
            xs in prop::collection::vec(-1.0f64..1.0, 64..256),
            a in -10.0f64..10.0,
        ) {
            let f = band0();
            let x = SampledSignal::new(FS, xs.clone());
            let ax = SampledSignal::new(FS, xs.iter().map(|v| a * v).collect());
            let y = filter_signal(&x, &f);
            let ay = filter_signal(&ax, &f);
            let scale = a.abs() * y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (p, q) in y.samples.iter().zip(&ay.samples) {
                prop_assert!((a * p - q).abs() <= 1e-9 * scale.max(1e-12));
            }
        }

        #[test]
        fn rectifier_nonnegative_idempotent(xs in prop::collection::vec(-1e3f64..1e3, 0..100)) {
            let x = SampledSignal::new(FS, xs);
            let r = full_wave_rectify(&x);
            prop_assert!(r.samples.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(full_wave_rectify(&r), r);
        }

        #[test]
        fn encoder_is_monotone_in_input(
            base in prop::collection::vec(0.0f64..3.0, 32..128),
            bumps in prop::collection::vec(0.0f64..1.0, 128),
        ) {
            let e = EncoderParams { gain: 250e-12, lif: LifParams::default() };
            let lo = SampledSignal::new(FS, base.clone());
            let hi = SampledSignal::new(FS, base.iter().zip(&bumps).map(|(b, d)| b + d).collect());
            let n_lo = encode_to_spikes(&lo, &e, 1e-4).unwrap().len();
            let n_hi = encode_to_spikes(&hi, &e, 1e-4).unwrap().len();
            prop_assert!(n_hi >= n_lo, "{} < {}", n_hi, n_lo);
        }

        #[test]
        fn every_designed_band_is_stable(lo in 0.5f64..20.0, width in 0.1f64..20.0, proto in 1usize..5) {
            let f: BiquadCascade<f64> = design_bandpass_hz(lo, lo + width, FS, proto).unwrap();
            prop_assert!(f.is_stable());
            prop_assert_eq!(f.order(), 2 * proto);
        }
    }
}
