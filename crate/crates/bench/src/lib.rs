//! Shared fixtures for the criterion benchmarks: seeded models, feature
//! frames, and a looping recognition network sized so the observation phase
//! dominates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paraspeech_core::decoder::network::{NetArc, RecognitionNetwork};
use paraspeech_core::feat::{AudioBuffer, FeatureKind, FeatureMatrix};
use paraspeech_core::gmm::{DiagonalGaussian, Gmm};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A single-component diagonal GMM with random mean in [-1, 1].
pub fn random_model(rng: &mut ChaCha8Rng, dim: usize) -> Gmm {
    let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let var = vec![1.0; dim];
    Gmm::new(vec![1.0], vec![DiagonalGaussian::new(mean, var).unwrap()]).unwrap()
}

pub fn random_frame(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_features(rng: &mut ChaCha8Rng, n_frames: usize, dim: usize) -> FeatureMatrix {
    let data: Vec<f64> = (0..n_frames * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMatrix::from_data(data, n_frames, dim, FeatureKind::Mfcc).unwrap()
}

/// Cyclic three-state network over `n_models` models so every state stays
/// active and the model set is fully gathered each frame.
pub fn looping_network(rng: &mut ChaCha8Rng, n_models: usize, dim: usize) -> RecognitionNetwork {
    let models: Vec<Gmm> = (0..n_models).map(|_| random_model(rng, dim)).collect();
    let words = vec!["w".to_string()];
    let mut arcs = Vec::new();
    let n_states = 3u32;
    for s in 0..n_states {
        for m in 0..n_models as u32 {
            arcs.push(NetArc {
                src: s,
                dest: (s + 1) % n_states,
                ilabel: m + 1,
                olabel: if m == 0 { 1 } else { 0 },
                weight: 0.5 + m as f64 * 0.01,
            });
        }
    }
    let finals = vec![(0, 0.0), (1, 0.0), (2, 0.0)];
    RecognitionNetwork::new(n_states as usize, arcs, finals, words, models).unwrap()
}

/// One second of a 440 Hz tone at 16 kHz, for the front-end benchmarks.
pub fn tone() -> AudioBuffer {
    let rate = 16_000u32;
    let samples: Vec<f64> = (0..rate as usize)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
        .collect();
    AudioBuffer::new(samples, rate).unwrap()
}
