//! Shared helpers for integration tests: seeded random networks and an
//! exhaustive path-enumeration decode oracle that is independent of the
//! decoder's token-passing machinery.

use paraspeech_core::decoder::network::{NetArc, RecognitionNetwork, EPSILON};
use paraspeech_core::decoder::{decode, DecodeConfig, DecodeResult, WordHyp};
use paraspeech_core::feat::{FeatureKind, FeatureMatrix};
use paraspeech_core::gmm::{DiagonalGaussian, Gmm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A complete accepted path found by enumeration.
#[derive(Debug, Clone)]
pub struct OraclePath {
    pub total_cost: f64,
    pub final_state: u32,
    /// Transition keys (arc_id << 32 | src_state), last first, for the
    /// decoder's tie rule: smaller key wins at every resolution point, so the
    /// surviving path minimizes the reversed key sequence lexicographically.
    pub rev_keys: Vec<u64>,
    /// (frame, olabel) of every word emission, in path order.
    pub emissions: Vec<(u32, u32)>,
}

struct Enumerator<'a> {
    net: &'a RecognitionNetwork,
    features: &'a FeatureMatrix,
    scale: f64,
    best: Option<OraclePath>,
    steps: usize,
}

const STEP_BUDGET: usize = 20_000_000;

impl<'a> Enumerator<'a> {
    fn better(&self, cand: &OraclePath) -> bool {
        match &self.best {
            None => true,
            Some(b) => {
                cand.total_cost
                    .total_cmp(&b.total_cost)
                    .then(cand.final_state.cmp(&b.final_state))
                    .then(cand.rev_keys.cmp(&b.rev_keys))
                    .is_lt()
            }
        }
    }

    /// Depth-first walk. `frame` counts consumed emitting steps; epsilon arcs
    /// are taken between emissions and stamped with the closure frame the
    /// decoder would use.
    fn walk(
        &mut self,
        state: u32,
        frame: usize,
        cost: f64,
        keys: &mut Vec<u64>,
        emissions: &mut Vec<(u32, u32)>,
    ) {
        self.steps += 1;
        assert!(self.steps < STEP_BUDGET, "oracle path enumeration exploded");
        let n = self.features.n_frames();
        if frame == n {
            if let Some(fw) = self.net.final_weight(state) {
                let total = cost + fw;
                let mut rev_keys = keys.clone();
                rev_keys.reverse();
                let cand = OraclePath {
                    total_cost: total,
                    final_state: state,
                    rev_keys,
                    emissions: emissions.clone(),
                };
                if self.better(&cand) {
                    self.best = Some(cand);
                }
            }
        }
        let closure_frame = frame.saturating_sub(if frame == 0 { 0 } else { 1 }) as u32;
        let mut arc_id = self.net.first_arc_id(state);
        for a in self.net.arcs_from(state) {
            let key = ((arc_id as u64) << 32) | state as u64;
            if a.ilabel == EPSILON {
                // closure step; the epsilon subgraph is acyclic so this
                // cannot recurse forever
                keys.push(key);
                if a.olabel != EPSILON {
                    emissions.push((closure_frame, a.olabel));
                }
                self.walk(a.dest, frame, cost + a.weight, keys, emissions);
                if a.olabel != EPSILON {
                    emissions.pop();
                }
                keys.pop();
            } else if frame < n {
                let ll = self.net.model(a.ilabel).log_likelihood(self.features.row(frame)).unwrap();
                let like = -self.scale * ll;
                keys.push(key);
                if a.olabel != EPSILON {
                    emissions.push((frame as u32, a.olabel));
                }
                self.walk(a.dest, frame + 1, cost + a.weight + like, keys, emissions);
                if a.olabel != EPSILON {
                    emissions.pop();
                }
                keys.pop();
            }
            arc_id += 1;
        }
    }
}

/// Enumerates every accepted path and returns the one the decoder must pick
/// under its tie rule, or None when the network accepts nothing of this
/// length.
pub fn oracle_best_path(
    net: &RecognitionNetwork,
    features: &FeatureMatrix,
    scale: f64,
) -> Option<OraclePath> {
    let mut e = Enumerator { net, features, scale, best: None, steps: 0 };
    let mut keys = Vec::new();
    let mut emissions = Vec::new();
    e.walk(net.start_state(), 0, 0.0, &mut keys, &mut emissions);
    e.best
}

/// Applies the decoder's span rule to oracle emissions: word i runs from its
/// emission frame to the next emission frame (exclusive), the last to
/// n_frames.
pub fn oracle_words(path: &OraclePath, net: &RecognitionNetwork, n_frames: usize) -> Vec<WordHyp> {
    let mut words = Vec::with_capacity(path.emissions.len());
    for (i, &(frame, olabel)) in path.emissions.iter().enumerate() {
        let start = frame as usize;
        let end = if i + 1 < path.emissions.len() {
            (path.emissions[i + 1].0 as usize).max(start)
        } else {
            n_frames.max(start)
        };
        words.push(WordHyp {
            word_id: olabel,
            word: net.word(olabel).to_string(),
            start_frame: start,
            end_frame: end,
        });
    }
    words
}

/// Seeded random network: <= 12 states, <= 3 one-dimensional models, a
/// guaranteed emitting chain with a self-loop at the end, extra random arcs
/// (epsilon arcs only forward so the epsilon subgraph stays acyclic), and
/// quarter-unit weights so cost ties actually occur.
pub fn random_network(rng: &mut ChaCha8Rng) -> RecognitionNetwork {
    let n_states = rng.gen_range(2..=12u32);
    let n_models = rng.gen_range(1..=3usize);
    let n_words = rng.gen_range(1..=3usize);
    let models: Vec<Gmm> = (0..n_models)
        .map(|_| {
            let mean = rng.gen_range(-2i32..=2) as f64;
            let var = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
            Gmm::new(vec![1.0], vec![DiagonalGaussian::new(vec![mean], vec![var]).unwrap()])
                .unwrap()
        })
        .collect();
    let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
    let q_weight = |rng: &mut ChaCha8Rng| rng.gen_range(0..=8) as f64 * 0.25;
    let rand_ilabel = |rng: &mut ChaCha8Rng| rng.gen_range(1..=n_models) as u32;
    let rand_olabel = |rng: &mut ChaCha8Rng| rng.gen_range(0..=n_words) as u32;

    let mut arcs = Vec::new();
    for s in 0..n_states - 1 {
        arcs.push(NetArc {
            src: s,
            dest: s + 1,
            ilabel: rand_ilabel(rng),
            olabel: rand_olabel(rng),
            weight: q_weight(rng),
        });
    }
    // emitting self-loop at the end so any frame count is reachable
    arcs.push(NetArc {
        src: n_states - 1,
        dest: n_states - 1,
        ilabel: rand_ilabel(rng),
        olabel: 0,
        weight: q_weight(rng),
    });
    let extra = rng.gen_range(0..=n_states);
    for _ in 0..extra {
        let src = rng.gen_range(0..n_states);
        let dest = rng.gen_range(0..n_states);
        let eps = rng.gen_bool(0.3);
        if eps {
            // forward only: keeps the epsilon subgraph acyclic
            if src + 1 >= n_states {
                continue;
            }
            let dest = rng.gen_range(src + 1..n_states);
            arcs.push(NetArc {
                src,
                dest,
                ilabel: EPSILON,
                olabel: rand_olabel(rng),
                weight: q_weight(rng),
            });
        } else {
            arcs.push(NetArc {
                src,
                dest,
                ilabel: rand_ilabel(rng),
                olabel: rand_olabel(rng),
                weight: q_weight(rng),
            });
        }
    }
    let mut finals = vec![(n_states - 1, q_weight(rng))];
    for s in 0..n_states - 1 {
        if rng.gen_bool(0.3) {
            finals.push((s, q_weight(rng)));
        }
    }
    RecognitionNetwork::new(n_states as usize, arcs, finals, words, models).unwrap()
}

/// Integer-valued features so likelihood collisions (and therefore cost ties)
/// are common.
pub fn random_features(rng: &mut ChaCha8Rng, max_frames: usize) -> FeatureMatrix {
    let n = rng.gen_range(1..=max_frames);
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
    FeatureMatrix::from_data(data, n, 1, FeatureKind::Mfcc).unwrap()
}

/// Runs one seeded oracle-vs-decoder comparison. Returns false when the
/// network accepts nothing of this length (both sides must agree on that).
pub fn check_decode_against_oracle(seed: u64, max_frames: usize) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_network(&mut rng);
    let features = random_features(&mut rng, max_frames);
    let config = DecodeConfig {
        beam_width: f64::INFINITY,
        acoustic_scale: 0.5,
        max_active: None,
    };
    let oracle = oracle_best_path(&net, &features, config.acoustic_scale);
    let decoded: Option<DecodeResult> = decode(&net, &features, &config).ok();
    match (oracle, decoded) {
        (None, None) => false,
        (Some(o), Some(d)) => {
            assert!(
                (o.total_cost - d.total_cost).abs() <= 1e-9,
                "seed {seed}: oracle cost {} vs decoder {}",
                o.total_cost,
                d.total_cost
            );
            let expect = oracle_words(&o, &net, features.n_frames());
            assert_eq!(expect, d.words, "seed {seed}: word sequence mismatch");
            true
        }
        (o, d) => panic!(
            "seed {seed}: oracle found path = {}, decoder found path = {}",
            o.is_some(),
            d.is_some()
        ),
    }
}
