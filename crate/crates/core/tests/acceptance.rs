//! Acceptance suite: one test per criterion. Every test takes a shared lock
//! so criteria never interleave within this binary — several assert
//! wall-clock properties (real-time factor, phase speedup) that concurrent
//! heavyweight tests would distort.

mod common;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use paraspeech_core::combination::{combine_product, combine_sum, entropy, PosteriorStream, Weighting};
use paraspeech_core::decoder::network::{NetArc, RecognitionNetwork};
use paraspeech_core::decoder::{decode, observation_phase, DecodeConfig};
use paraspeech_core::diarization::der::diarization_error_rate;
use paraspeech_core::diarization::online::{OnlineDiarizer, OnlineModels};
use paraspeech_core::diarization::{
    bic_merge_candidate, diarize_offline, Cluster, ClusterSet, DiarizationConfig,
};
use paraspeech_core::feat::{FeatureKind, FeatureMatrix};
use paraspeech_core::gmm::{train_gmm_em, DiagonalGaussian, EmConfig, Gmm};
use paraspeech_core::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use paraspeech_core::workers::run_with_workers;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static TIMING_LOCK: Mutex<()> = Mutex::new(());

#[test]
fn criterion_01_decoder_oracle_equivalence() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 200 {
        assert!(seed < 2000, "too many degenerate networks");
        if common::check_decode_against_oracle(seed, 10) {
            checked += 1;
        }
        seed += 1;
    }
    println!("criterion 1 PASS: {checked} networks matched exhaustive enumeration");
}

fn looping_network(rng: &mut ChaCha8Rng) -> (RecognitionNetwork, FeatureMatrix) {
    let dim = 2;
    let means = [(0.0, 0.0), (3.0, 3.0), (-3.0, 3.0)];
    let models: Vec<Gmm> = means
        .iter()
        .map(|&(a, b)| {
            Gmm::new(vec![1.0], vec![DiagonalGaussian::new(vec![a, b], vec![1.0, 1.0]).unwrap()])
                .unwrap()
        })
        .collect();
    let words = vec!["one".into(), "two".into(), "three".into()];
    let mut arcs = Vec::new();
    for s in 0..3u32 {
        let m = s + 1;
        arcs.push(NetArc { src: s, dest: (s + 1) % 3, ilabel: m, olabel: m, weight: 0.5 });
        arcs.push(NetArc { src: s, dest: s, ilabel: m, olabel: 0, weight: 0.2 });
    }
    let finals = vec![(0, 0.0), (1, 0.0), (2, 0.0)];
    let net = RecognitionNetwork::new(3, arcs, finals, words, models).unwrap();
    let n = 1000;
    let mut data = Vec::with_capacity(n * dim);
    for t in 0..n {
        let (a, b) = means[(t / 40) % 3];
        data.push(a + rng.gen_range(-0.5..0.5));
        data.push(b + rng.gen_range(-0.5..0.5));
    }
    let features = FeatureMatrix::from_data(data, n, dim, FeatureKind::Mfcc).unwrap();
    (net, features)
}

#[test]
fn criterion_02_worker_count_invariance() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // decode, 1000 frames
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (net, features) = looping_network(&mut rng);
    let config = DecodeConfig::default();
    let reference = run_with_workers(1, || decode(&net, &features, &config)).unwrap();
    for wc in [2usize, 4, 8] {
        let r = run_with_workers(wc, || decode(&net, &features, &config)).unwrap();
        assert!(reference.same_output(&r), "decode diverged at {wc} workers");
    }
    // diarization, 10 minutes of synthetic audio
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::default()).unwrap();
    let cfg = DiarizationConfig { k: 4, g: 3, ..Default::default() };
    let reference = run_with_workers(1, || diarize_offline(&corpus.features, &cfg)).unwrap();
    for wc in [2usize, 4, 8] {
        let r = run_with_workers(wc, || diarize_offline(&corpus.features, &cfg)).unwrap();
        assert!(reference.same_output(&r), "diarization diverged at {wc} workers");
    }
    println!("criterion 2 PASS: decode and diarization identical across 1/2/4/8 workers");
}

#[test]
fn criterion_03_observation_phase_scaling() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // 4096 single-component models active on every frame
    let dim = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models: Vec<Gmm> = (0..4096)
        .map(|_| {
            let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Gmm::new(vec![1.0], vec![DiagonalGaussian::new(mean, vec![1.0; dim]).unwrap()]).unwrap()
        })
        .collect();
    let net = RecognitionNetwork::new(1, vec![], vec![(0, 0.0)], vec![], models).unwrap();
    let ids: Vec<u32> = (1..=4096).collect();
    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reps = 20;
    let time_for = |wc: usize| {
        run_with_workers(wc, || {
            let t0 = Instant::now();
            for _ in 0..reps {
                observation_phase(&ids, &net, &x, 1.0).unwrap();
            }
            t0.elapsed().as_secs_f64()
        })
    };
    // warm up the pools, then measure
    time_for(1);
    time_for(4);
    let t1 = time_for(1);
    let t4 = time_for(4);
    let speedup = t1 / t4;
    println!(
        "criterion 3: observation phase 1-worker {t1:.4}s, 4-worker {t4:.4}s, speedup {speedup:.2}x"
    );
    assert!(
        speedup >= 2.0,
        "criterion 3 FAIL: 4-worker speedup {speedup:.2}x below 2x (needs >= 4 hardware cores)"
    );
    println!("criterion 3 PASS");
}

#[test]
fn criterion_04_min_duration_invariant() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut violations = 0usize;
    for seed in 0..50u64 {
        let spec = SyntheticCorpusSpec {
            n_speakers: 2,
            dim: 4,
            components_per_speaker: 1,
            mean_separation: 8.0,
            turn_seconds: (6.0, 10.0),
            gap_seconds: 0.5,
            total_seconds: 90.0,
            seed,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let cfg = DiarizationConfig { k: 4, g: 2, seed, ..Default::default() };
        let result = diarize_offline(&corpus.features, &cfg).unwrap();
        for entry in &result.trace {
            if entry.min_segment_frames < 250 {
                violations += 1;
                eprintln!(
                    "seed {seed}: segment of {} frames below 250",
                    entry.min_segment_frames
                );
            }
        }
    }
    assert_eq!(violations, 0, "criterion 4 FAIL: {violations} short segments");
    println!("criterion 4 PASS: 50 runs, every re-segmentation segment >= 250 frames");
}

#[test]
fn criterion_05_synthetic_diarization_accuracy() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut successes = 0usize;
    for seed in 0..20u64 {
        // "well-separated": the corpus default of 10 unit standard
        // deviations (>= 5 sigma pairwise as required)
        let spec = SyntheticCorpusSpec {
            n_speakers: 3,
            mean_separation: 10.0,
            seed,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let cfg = DiarizationConfig { k: 8, g: 5, seed, ..Default::default() };
        let result = diarize_offline(&corpus.features, &cfg).unwrap();
        let der = diarization_error_rate(&result.segmentation, &corpus.reference).unwrap();
        let count = result.clusters.len();
        let ok = count == 3 && der <= 0.05;
        println!(
            "criterion 5 seed {seed}: clusters {count}, DER {:.3} -> {}",
            der,
            if ok { "ok" } else { "MISS" }
        );
        if ok {
            successes += 1;
        }
    }
    assert!(
        successes >= 18,
        "criterion 5 FAIL: only {successes}/20 seeds reached 3 clusters with DER <= 5%"
    );
    println!("criterion 5 PASS: {successes}/20 seeds");
}

#[test]
fn criterion_06_offline_rtf() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::default()).unwrap();
    let cfg = DiarizationConfig::default();
    let result = diarize_offline(&corpus.features, &cfg).unwrap();
    println!(
        "criterion 6: measured RTF {:.3} on 10 min synthetic (reference figure from the original \
         system: ~0.6x realtime; not asserted)",
        result.real_time_factor
    );
    assert!(result.real_time_factor < 1.0, "criterion 6 FAIL: RTF {}", result.real_time_factor);
    println!("criterion 6 PASS");
}

#[test]
fn criterion_07_online_latency_accounting() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let gauss = |m: f64| {
        Gmm::new(vec![1.0], vec![DiagonalGaussian::new(vec![m], vec![1.0]).unwrap()]).unwrap()
    };
    let models = OnlineModels {
        names: vec!["spk0".into(), "spk1".into()],
        models: vec![gauss(-3.0), gauss(3.0)],
        warnings: vec![],
    };
    let mut d = OnlineDiarizer::new(models, 250).unwrap();
    let mut decisions = Vec::new();
    for _ in 0..1000 {
        if let Some(dec) = d.push(&[-3.0]).unwrap() {
            decisions.push(dec);
        }
    }
    let frames: Vec<usize> = decisions.iter().map(|d| d.decision_frame).collect();
    assert_eq!(frames, vec![250, 500, 750, 1000]);
    assert_eq!(d.latency_description(0.010), "t + 2.5 s");
    println!("criterion 7 PASS: decisions at (i+1)*250, latency t + 2.5 s");
}

fn random_posterior(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.0f64..1.0).max(1e-9)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

#[test]
fn criterion_08_combination_rule_properties() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let classes = rng.gen_range(2..=20);
        let p = random_posterior(&mut rng, classes);
        let q = random_posterior(&mut rng, classes);
        let sp = PosteriorStream::from_rows(std::slice::from_ref(&p)).unwrap();
        let sq = PosteriorStream::from_rows(std::slice::from_ref(&q)).unwrap();

        // product and sum outputs are distributions
        for combined in [
            combine_product(&[sp.clone(), sq.clone()], &Weighting::Uniform).unwrap(),
            combine_sum(&[sp.clone(), sq.clone()], &Weighting::Uniform).unwrap(),
        ] {
            let row = combined.matrix().row(0);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
                violations += 1;
            }
        }

        // product with the uniform stream returns the original
        let uniform =
            PosteriorStream::from_rows(&[vec![1.0 / classes as f64; classes]]).unwrap();
        let back = combine_product(&[sp.clone(), uniform], &Weighting::Uniform).unwrap();
        if back
            .matrix()
            .row(0)
            .iter()
            .zip(&p)
            .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            violations += 1;
        }

        // sharpening: entropy(product(p, p)) < entropy(p) away from the fixed
        // points (p here is random, so strictness is required)
        let sharpened = combine_product(&[sp.clone(), sp.clone()], &Weighting::Uniform).unwrap();
        let h0 = entropy(&p);
        let h1 = entropy(sharpened.matrix().row(0));
        if h1 > h0 + 1e-12 {
            violations += 1;
        }
        let near_fixed_point = p.iter().all(|&v| (v - 1.0 / classes as f64).abs() < 1e-9)
            || p.iter().any(|&v| v > 1.0 - 1e-9);
        if !near_fixed_point && h1 >= h0 - 1e-12 {
            violations += 1;
        }
    }
    // equality at the fixed points
    let uniform = vec![0.25; 4];
    let su = PosteriorStream::from_rows(std::slice::from_ref(&uniform)).unwrap();
    let hu = entropy(
        combine_product(&[su.clone(), su], &Weighting::Uniform).unwrap().matrix().row(0),
    );
    assert!((hu - entropy(&uniform)).abs() < 1e-12);
    let onehot = vec![1.0, 0.0, 0.0, 0.0];
    let so = PosteriorStream::from_rows(std::slice::from_ref(&onehot)).unwrap();
    let ho = entropy(
        combine_product(&[so.clone(), so], &Weighting::Uniform).unwrap().matrix().row(0),
    );
    assert!((ho - entropy(&onehot)).abs() < 1e-9);

    assert_eq!(violations, 0, "criterion 8 FAIL: {violations} violations");
    println!("criterion 8 PASS: 1000 posterior pairs, zero violations");
}

#[test]
fn criterion_09_em_properties() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // monotone log-likelihood over 100 seeded runs
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 300;
        let dim = 3;
        let data: Vec<f64> = (0..n * dim)
            .map(|i| rng.gen_range(-1.0..1.0) + if i % 2 == 0 { 2.0 } else { -2.0 })
            .collect();
        let features = FeatureMatrix::from_data(data, n, dim, FeatureKind::Mfcc).unwrap();
        let config = EmConfig { seed, ..Default::default() };
        let trained = train_gmm_em(&features, 3, &config).unwrap();
        for w in trained.log_likelihood_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9,
                "seed {seed}: log-likelihood decreased {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    // single-component closed form to 1e-12
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 500;
    let dim = 4;
    let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let features = FeatureMatrix::from_data(data.clone(), n, dim, FeatureKind::Mfcc).unwrap();
    let model = train_gmm_em(&features, 1, &EmConfig::default()).unwrap().model;
    for d in 0..dim {
        let mean: f64 = (0..n).map(|t| data[t * dim + d]).sum::<f64>() / n as f64;
        let var: f64 =
            (0..n).map(|t| (data[t * dim + d] - mean).powi(2)).sum::<f64>() / n as f64;
        let c = &model.components()[0];
        assert!((c.mean[d] - mean).abs() <= 1e-12 * mean.abs().max(1.0), "mean dim {d}");
        assert!((c.variance[d] - var).abs() <= 1e-12 * var.max(1.0), "variance dim {d}");
    }
    println!("criterion 9 PASS: monotone EM over 100 seeds, closed form to 1e-12");
}

fn sample_gmm_frames(model: &Gmm, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = model.dim();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let r: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        let mut pick = model.num_components() - 1;
        for (i, &w) in model.weights().iter().enumerate() {
            acc += w;
            if r < acc {
                pick = i;
                break;
            }
        }
        let c = &model.components()[pick];
        for d in 0..dim {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            data.push(c.mean[d] + c.variance[d].sqrt() * z);
        }
    }
    data
}

fn merge_trial(seed: u64, separated: bool) -> bool {
    // clusters at the scale the agglomerative loop produces them: thousands
    // of frames, g=5 models trained with the default EM budget
    let dim = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian_source = |shift: f64| {
        Gmm::new(vec![1.0], vec![DiagonalGaussian::new(vec![shift; dim], vec![1.0; dim]).unwrap()])
            .unwrap()
    };
    let source_a = gaussian_source(0.0);
    // unit variances, so a shift of 5 is a 5-sigma separation per dimension
    let source_b = gaussian_source(if separated { 5.0 } else { 0.0 });
    let n = 2000;
    let mut data = sample_gmm_frames(&source_a, n, &mut rng);
    data.extend(sample_gmm_frames(&source_b, n, &mut rng));
    let features = FeatureMatrix::from_data(data, 2 * n, dim, FeatureKind::Mfcc).unwrap();
    let frames_a: Vec<usize> = (0..n).collect();
    let frames_b: Vec<usize> = (n..2 * n).collect();
    let em = EmConfig { seed, ..Default::default() };
    let model_a = train_gmm_em(&features.select_frames(&frames_a), 5, &em).unwrap().model;
    let model_b = train_gmm_em(&features.select_frames(&frames_b), 5, &em).unwrap().model;
    let mut clusters = BTreeMap::new();
    clusters.insert(0u32, Cluster { model: model_a, frames: frames_a });
    clusters.insert(1u32, Cluster { model: model_b, frames: frames_b });
    let set = ClusterSet { clusters };
    let cfg = DiarizationConfig { g: 5, seed, ..Default::default() };
    bic_merge_candidate(&features, &set, &cfg).unwrap().is_some()
}

#[test]
fn criterion_10_same_source_merge_property() {
    let _t = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut same_merged = 0usize;
    let mut separated_kept = 0usize;
    for seed in 0..100u64 {
        if merge_trial(seed, false) {
            same_merged += 1;
        }
        if !merge_trial(seed, true) {
            separated_kept += 1;
        }
    }
    println!(
        "criterion 10: same-source merges {same_merged}/100, separated kept apart \
         {separated_kept}/100"
    );
    assert!(same_merged >= 95, "criterion 10 FAIL: same-source merges {same_merged}/100");
    assert!(separated_kept >= 95, "criterion 10 FAIL: separated kept {separated_kept}/100");
    println!("criterion 10 PASS");
}
