//! Statistical and closed-form oracles that need more than a unit test's
//! worth of setup or runtime.

use std::collections::HashMap;

use hrnsm::analysis::{check_monotonic, firing_rate, StateTimeline};
use hrnsm::dsp::{encode_to_spikes, EncoderParams, Frontend, FrontendConfig, SampledSignal};
use hrnsm::engine::{SpikeEvent, SpikeRecord};
use hrnsm::io::{read_ecg_csv, write_ecg_csv, EcgRecording};
use hrnsm::network::{
    build_nsm_topology, sample_connectivity, NetworkSpec, NeuronModel, PopulationSpec, ProjectionSpec, Role,
    TopologyOptions,
};
use hrnsm::neuron::{LifParams, SynapseKind};
use hrnsm::stimuli::{beat_times, poisson_train_seeded, synthetic_ecg, HrProfile, SyntheticEcgOptions};

fn two_population_spec(p: f64, recurrent: bool, seed: u64) -> NetworkSpec {
    let pop = |id: &str| PopulationSpec {
        id: id.into(),
        size: 16,
        model: NeuronModel::Lif(LifParams::default()),
        role: Role::Other,
    };
    NetworkSpec {
        populations: vec![pop("a"), pop("b")],
        projections: vec![ProjectionSpec {
            source: "a".into(),
            target: if recurrent { "a" } else { "b" }.into(),
            kind: SynapseKind::FastExc,
            probability: p,
            weight: 1e-12,
        }],
        seed,
    }
}

fn mean_edges(p: f64, recurrent: bool, seeds: u64) -> f64 {
    let total: usize = (0..seeds)
        .map(|s| sample_connectivity(&two_population_spec(p, recurrent, s)).unwrap().edge_count())
        .sum();
    total as f64 / seeds as f64
}

#[test]
fn connectivity_edge_count_is_binomial() {
    let seeds = 10_000;
    // 16 x 16 distinct populations: n = 256 Bernoulli trials.
    let n = 256.0;
    let p = 0.6;
    let se = (n * p * (1.0 - p) / seeds as f64).sqrt();
    let mean = mean_edges(p, false, seeds);
    assert!((mean - 153.6).abs() <= 3.0 * se, "mean {mean}, expected 153.6 +- {}", 3.0 * se);

    // Recurrent projections skip self-pairs: n = 16 * 15.
    let n = 240.0;
    let p = 0.83;
    let se = (n * p * (1.0 - p) / seeds as f64).sqrt();
    let mean = mean_edges(p, true, seeds);
    assert!((mean - n * p).abs() <= 3.0 * se, "mean {mean}, expected {} +- {}", n * p, 3.0 * se);
}

fn group(role: &Role) -> &'static str {
    match role {
        Role::State(_) => "state",
        Role::WtaInh => "wta_inh",
        Role::Gate(_) => "gate",
        Role::GateInh(_) => "gate_inh",
        Role::InputEncoder(_) => "lif",
        Role::Other => "other",
    }
}

#[test]
fn default_machine_matches_connection_table() {
    // (source group, target group, synapse, probability), transcribed row by row.
    let table: [(&str, &str, SynapseKind, f64); 12] = [
        ("state", "wta_inh", SynapseKind::SlowExc, 0.60),
        ("wta_inh", "state", SynapseKind::SlowInh, 0.60),
        ("state", "state", SynapseKind::SlowExc, 0.83),
        ("wta_inh", "wta_inh", SynapseKind::SlowInh, 0.20),
        ("gate", "gate_inh", SynapseKind::SlowExc, 0.30),
        ("gate_inh", "gate", SynapseKind::SlowInh, 0.30),
        ("gate", "gate", SynapseKind::SlowExc, 0.50),
        ("gate_inh", "gate_inh", SynapseKind::SlowInh, 0.50),
        ("gate", "state", SynapseKind::SlowInh, 1.00),
        ("state", "gate", SynapseKind::SlowInh, 1.00),
        ("state", "gate", SynapseKind::FastExc, 1.00),
        ("lif", "state", SynapseKind::FastExc, 1.00),
    ];
    let spec = build_nsm_topology(&TopologyOptions::default()).unwrap();
    let roles: HashMap<&str, &Role> = spec.populations.iter().map(|p| (p.id.as_str(), &p.role)).collect();
    let mut seen = vec![0usize; table.len()];
    for pr in &spec.projections {
        let key = (group(roles[pr.source.as_str()]), group(roles[pr.target.as_str()]), pr.kind);
        let row = table
            .iter()
            .position(|(s, t, k, _)| (*s, *t, *k) == key)
            .unwrap_or_else(|| panic!("projection {} -> {} ({:?}) has no table row", pr.source, pr.target, pr.kind));
        assert_eq!(pr.probability, table[row].3, "{} -> {}", pr.source, pr.target);
        seen[row] += 1;
    }
    assert!(seen.iter().all(|&n| n > 0), "unused table rows: {seen:?}");
    // 4 states, 3 gates: one entry per state for the WTA rows, one per gate
    // for the gating rows.
    assert_eq!(&seen[..4], &[4, 4, 4, 1]);
    assert_eq!(&seen[4..8], &[3, 3, 3, 3]);
    assert_eq!(seen[8], 3);
    assert_eq!(seen[9], 3);
    assert_eq!(seen[11], 4);
    assert_eq!(spec.core_neurons(), 176);
}

#[test]
fn poisson_counts_within_three_sigma() {
    let bound = 3.0 * 500f64.sqrt();
    let inside = (0..1000u64)
        .filter(|&s| (poisson_train_seeded(50.0, 10.0, s).len() as f64 - 500.0).abs() <= bound)
        .count();
    assert!(inside >= 990, "{inside} of 1000 seeds inside 500 +- {bound:.1}");
}

#[test]
fn pass_through_monitor_measures_poisson_rate() {
    let duration = 20.0;
    for seed in 0..20 {
        let train = poisson_train_seeded(50.0, duration, seed);
        let mut rec = SpikeRecord::empty(vec!["monitor".into()], vec![1], duration);
        rec.events = train
            .iter()
            .map(|&t| SpikeEvent {
                time: t,
                population: 0,
                neuron: 0,
            })
            .collect();
        let rate = firing_rate(&rec, "monitor", duration).unwrap()[0];
        let sigma = (50.0 / duration).sqrt();
        assert!((rate - 50.0).abs() <= 3.0 * sigma, "seed {seed}: {rate} Hz");
    }
}

#[test]
fn ramp_beat_count_is_integral_of_rate() {
    let beats = beat_times(&HrProfile::ramp(60.0, 150.0, 600.0)).len() as f64;
    // Integral of bpm/60 over the ramp: mean rate 105 bpm for 10 minutes.
    let expected = (60.0 + 150.0) / 2.0 / 60.0 * 600.0;
    assert!((beats - expected).abs() <= 2.0, "{beats} beats, expected {expected}");
}

/// Magnitude of the discrete-time Fourier transform at `f`, i.e. the
/// infinitely zero-padded spectrum.
fn dtft_mag(x: &[f64], fs: f64, f: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let (s, c) = (w * n as f64).sin_cos();
        re += v * c;
        im -= v * s;
    }
    re.hypot(im)
}

#[test]
fn synthetic_ecg_fundamental_matches_profile() {
    for bpm in [62.0, 75.0, 100.0, 125.0, 148.0] {
        let ecg = synthetic_ecg(&HrProfile::constant(bpm, 60.0), &SyntheticEcgOptions::default(), 0).unwrap();
        let mean = ecg.samples.iter().sum::<f64>() / ecg.samples.len() as f64;
        let x: Vec<f64> = ecg.samples.iter().map(|v| v - mean).collect();
        let (mut best_f, mut best) = (0.0, 0.0);
        let mut f = 0.5;
        while f <= 4.0 {
            let m = dtft_mag(&x, ecg.fs, f);
            if m > best {
                best = m;
                best_f = f;
            }
            f += 0.002;
        }
        let found = best_f * 60.0;
        assert!((found - bpm).abs() <= 2.0, "{bpm} bpm profile, spectral peak at {found:.2} bpm");
    }
}

fn encoder_counts(bpm: f64, duration: f64) -> Vec<usize> {
    let cfg = FrontendConfig::default();
    let frontend = Frontend::new(&cfg, 256.0).unwrap();
    let gains = frontend.gains().unwrap();
    let ecg = synthetic_ecg(&HrProfile::constant(bpm, duration), &SyntheticEcgOptions::default(), 0).unwrap();
    frontend
        .band_signals(&ecg)
        .unwrap()
        .iter()
        .zip(&gains)
        .map(|(band, &gain)| {
            let e = EncoderParams { gain, lif: cfg.encoder };
            encode_to_spikes(band, &e, 1e-4).unwrap().len()
        })
        .collect()
}

#[test]
fn each_heart_rate_wins_its_own_band() {
    for (expected, bpm) in [70.0, 95.0, 115.0, 140.0].into_iter().enumerate() {
        let counts = encoder_counts(bpm, 30.0);
        let winner = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        assert_eq!(winner, expected, "{bpm} bpm: counts {counts:?}");
    }
}

#[test]
fn seventy_bpm_favors_band_zero_over_band_three() {
    let counts = encoder_counts(70.0, 60.0);
    assert!(counts[0] >= 5 * counts[3], "counts {counts:?}");
    assert!(counts[0] > 0);
}

#[test]
fn ecg_file_round_trip() {
    let profile = HrProfile::ramp(70.0, 120.0, 30.0);
    let opts = SyntheticEcgOptions {
        snr_db: Some(15.0),
        ..Default::default()
    };
    let signal: SampledSignal<f64> = synthetic_ecg(&profile, &opts, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ecg.csv");
    write_ecg_csv(&path, &EcgRecording::from_signal(&signal)).unwrap();
    let back = read_ecg_csv(&path, None).unwrap();
    assert_eq!(back.fs, signal.fs);
    assert_eq!(back.samples.len(), signal.samples.len());
    for (a, b) in back.samples.iter().zip(&signal.samples) {
        assert!((a - b).abs() <= 1e-9);
    }
}

/// Direct reading of the legal-transition rule: drop silent windows and
/// repeats, then every step must go up or land on the reset state.
fn illegal_steps(seq: &[Option<usize>]) -> Vec<(usize, usize)> {
    let states: Vec<usize> = seq.iter().flatten().copied().collect();
    let mut out = Vec::new();
    for w in states.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a != b && b < a && b != 0 {
            out.push((a, b));
        }
    }
    out
}

#[test]
fn monotonic_check_matches_enumeration() {
    let alphabet = [None, Some(0), Some(1), Some(2), Some(3)];
    let mut checked = 0;
    for len in 0..=6u32 {
        for code in 0..alphabet.len().pow(len) {
            let mut c = code;
            let seq: Vec<Option<usize>> = (0..len)
                .map(|_| {
                    let s = alphabet[c % alphabet.len()];
                    c /= alphabet.len();
                    s
                })
                .collect();
            let found: Vec<(usize, usize)> = check_monotonic(&StateTimeline::from_states(&seq, 0.1))
                .iter()
                .map(|v| (v.from, v.to))
                .collect();
            assert_eq!(found, illegal_steps(&seq), "{seq:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, (0..=6).map(|l| 5usize.pow(l)).sum::<usize>());
}
