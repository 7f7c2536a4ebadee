//! Online diarization bootstrapped from an offline pass: per-model GMMs are
//! trained once on seeded chunks of the offline segmentation, then a stream
//! processor labels each incoming frame and emits a majority-vote decision
//! every `vote_window` frames.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::gmm::{gmm_log_likelihood_batch, train_gmm_em, EmConfig, Gmm};

use super::DiarizationResult;

#[derive(Debug, Clone)]
pub struct OnlineConfig {
    /// Seconds of audio the bootstrap offline pass covers.
    pub train_duration: f64,
    /// Seconds of each model's training chunk.
    pub chunk_duration: f64,
    /// Frames per majority-vote window.
    pub vote_window: usize,
    /// Gaussians per online model.
    pub g: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            train_duration: 1000.0,
            chunk_duration: 60.0,
            vote_window: 250,
            g: 5,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_duration > self.chunk_duration) {
            return Err(Error::Config("train_duration must exceed chunk_duration".into()));
        }
        if self.vote_window < 1 {
            return Err(Error::Config("vote_window must be >= 1".into()));
        }
        Ok(())
    }
}

/// The table of online models. Index order is speakers sorted by cluster id,
/// then the nonspeech model last.
#[derive(Debug, Clone)]
pub struct OnlineModels {
    pub names: Vec<String>,
    pub models: Vec<Gmm>,
    pub warnings: Vec<String>,
}

impl OnlineModels {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Picks about `chunk_frames` frames from `frames` (sorted, possibly with
/// gaps), preferring one contiguous run. When no single run is long enough,
/// seeded-shuffled runs are concatenated; when even the total falls short,
/// everything is used and `short` is set.
fn select_chunk(frames: &[usize], chunk_frames: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    if frames.len() <= chunk_frames {
        return (frames.to_vec(), frames.len() < chunk_frames);
    }
    // split into contiguous runs
    let mut runs: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i] != frames[i - 1] + 1 {
            runs.push(&frames[start..i]);
            start = i;
        }
    }
    let long: Vec<&&[usize]> = runs.iter().filter(|r| r.len() >= chunk_frames).collect();
    if !long.is_empty() {
        let run = long[rng.gen_range(0..long.len())];
        let offset = rng.gen_range(0..=(run.len() - chunk_frames));
        return (run[offset..offset + chunk_frames].to_vec(), false);
    }
    // concatenate shuffled sub-chunks
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.shuffle(rng);
    let mut picked = Vec::with_capacity(chunk_frames);
    for &r in &order {
        let need = chunk_frames - picked.len();
        let take = need.min(runs[r].len());
        picked.extend_from_slice(&runs[r][..take]);
        if picked.len() == chunk_frames {
            break;
        }
    }
    picked.sort_unstable();
    (picked, false)
}

/// Trains one GMM per offline speaker on a seeded chunk of that speaker's
/// segmented frames, plus one nonspeech model, per the bootstrap recipe.
pub fn train_online_models(
    features: &FeatureMatrix,
    offline: &DiarizationResult,
    config: &OnlineConfig,
) -> Result<OnlineModels> {
    config.validate()?;
    let chunk_frames = ((config.chunk_duration / features.frame_period).round() as usize).max(1);
    let labels = offline.segmentation.frame_labels(features.n_frames());

    // frames per speaker (speech only), then the nonspeech pool
    let mut pools: Vec<(String, Vec<usize>)> = Vec::new();
    let mut ids: Vec<u32> = Vec::new();
    for t in 0..features.n_frames() {
        if let Some(c) = labels[t] {
            if offline.speech_mask[t] && !ids.contains(&c) {
                ids.push(c);
            }
        }
    }
    ids.sort_unstable();
    for &id in &ids {
        let frames: Vec<usize> = (0..features.n_frames())
            .filter(|&t| offline.speech_mask[t] && labels[t] == Some(id))
            .collect();
        pools.push((format!("spk{id}"), frames));
    }
    let nonspeech: Vec<usize> = (0..features.n_frames()).filter(|&t| !offline.speech_mask[t]).collect();
    pools.push(("nonspeech".into(), nonspeech));

    let mut names = Vec::new();
    let mut warnings = Vec::new();
    let mut jobs: Vec<(usize, Vec<usize>)> = Vec::new();
    for (idx, (name, frames)) in pools.into_iter().enumerate() {
        if frames.len() < config.g {
            warnings.push(format!("model '{name}' skipped: only {} frames", frames.len()));
            continue;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (idx as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let (chunk, short) = select_chunk(&frames, chunk_frames, &mut rng);
        if short {
            warnings.push(format!(
                "model '{name}' has {:.1} s of data, less than the {:.1} s chunk; using all of it",
                frames.len() as f64 * features.frame_period,
                config.chunk_duration
            ));
        }
        names.push(name);
        jobs.push((idx, chunk));
    }
    if names.is_empty() {
        return Err(Error::InsufficientSpeech("no online model has enough frames".into()));
    }
    let models: Vec<Gmm> = jobs
        .par_iter()
        .map(|(idx, chunk)| {
            let data = features.select_frames(chunk);
            let mut em = config.em.clone();
            em.seed = config.seed ^ (*idx as u64).wrapping_mul(0x9e3779b97f4a7c15);
            Ok(train_gmm_em(&data, config.g.min(chunk.len()), &em)?.model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OnlineModels { names, models, warnings })
}

/// One emitted decision. `decision_frame` is the 1-based count of frames
/// consumed when the decision becomes available: decision i is emitted at
/// frame (i + 1) * vote_window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub decision_frame: usize,
    pub model_id: usize,
    pub label: String,
}

/// Single-consumer stream processor: frames in, decisions out every
/// `vote_window` frames.
pub struct OnlineDiarizer {
    models: OnlineModels,
    vote_window: usize,
    votes: Vec<usize>,
    frames_seen: usize,
}

impl OnlineDiarizer {
    pub fn new(models: OnlineModels, vote_window: usize) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config("online diarizer needs at least one model".into()));
        }
        if vote_window < 1 {
            return Err(Error::Config("vote_window must be >= 1".into()));
        }
        let n = models.len();
        Ok(Self { models, vote_window, votes: vec![0; n], frames_seen: 0 })
    }

    pub fn models(&self) -> &OnlineModels {
        &self.models
    }

    /// Human-readable decision latency, e.g. "t + 2.5 s" at the defaults.
    pub fn latency_description(&self, frame_period: f64) -> String {
        format!("t + {} s", self.vote_window as f64 * frame_period)
    }

    /// Consumes one frame; returns a decision when it closes a vote window.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<Decision>> {
        let refs: Vec<&Gmm> = self.models.models.iter().collect();
        let ll = gmm_log_likelihood_batch(&refs, frame)?;
        let mut winner = 0;
        for (i, &v) in ll.iter().enumerate() {
            if v > ll[winner] {
                winner = i;
            }
        }
        self.votes[winner] += 1;
        self.frames_seen += 1;
        if self.frames_seen % self.vote_window != 0 {
            return Ok(None);
        }
        let mut model_id = 0;
        for (i, &v) in self.votes.iter().enumerate() {
            if v > self.votes[model_id] {
                model_id = i;
            }
        }
        let decision = Decision {
            decision_frame: self.frames_seen,
            model_id,
            label: self.models.names[model_id].clone(),
        };
        self.votes.iter_mut().for_each(|v| *v = 0);
        Ok(Some(decision))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diarization::{Cluster, ClusterSet, DiarizationResult, Segment, Segmentation};
    use crate::feat::FeatureKind;
    use crate::gmm::DiagonalGaussian;
    use std::collections::BTreeMap;

    fn gaussian(mean: f64) -> Gmm {
        Gmm::new(vec![1.0], vec![DiagonalGaussian::new(vec![mean], vec![1.0]).unwrap()]).unwrap()
    }

    fn two_model_diarizer() -> OnlineDiarizer {
        let models = OnlineModels {
            names: vec!["spk0".into(), "spk1".into()],
            models: vec![gaussian(-3.0), gaussian(3.0)],
            warnings: vec![],
        };
        OnlineDiarizer::new(models, 250).unwrap()
    }

    #[test]
    fn unanimous_vote_and_cadence() {
        let mut d = two_model_diarizer();
        let mut decisions = Vec::new();
        for i in 0..500 {
            if let Some(dec) = d.push(&[-3.0]).unwrap() {
                decisions.push((i, dec));
            }
        }
        assert_eq!(decisions.len(), 2);
        // first decision exactly as the 250th frame is consumed
        assert_eq!(decisions[0].0, 249);
        assert_eq!(decisions[0].1.decision_frame, 250);
        assert_eq!(decisions[1].1.decision_frame, 500);
        assert!(decisions.iter().all(|(_, dec)| dec.label == "spk0"));
        assert_eq!(d.latency_description(0.010), "t + 2.5 s");
    }

    #[test]
    fn majority_counting_oracle() {
        // 130 frames voting spk0 vs 120 voting spk1 -> spk0
        let mut d = two_model_diarizer();
        let mut out = None;
        for i in 0..250 {
            let x = if i < 130 { -3.0 } else { 3.0 };
            if let Some(dec) = d.push(&[x]).unwrap() {
                out = Some(dec);
            }
        }
        assert_eq!(out.unwrap().model_id, 0);
    }

    #[test]
    fn vote_tie_goes_to_lowest_model_id() {
        let mut d = two_model_diarizer();
        let mut out = None;
        for i in 0..250 {
            let x = if i % 2 == 0 { -3.0 } else { 3.0 };
            if let Some(dec) = d.push(&[x]).unwrap() {
                out = Some(dec);
            }
        }
        assert_eq!(out.unwrap().model_id, 0);
    }

    fn synthetic_offline(n: usize, speakers: usize) -> (FeatureMatrix, DiarizationResult) {
        // round-robin 1000-frame turns, energy dim carries the speaker mean
        let turns = n / 1000;
        let mut data = Vec::with_capacity(n);
        let mut segments = Vec::new();
        for turn in 0..turns {
            let spk = (turn % speakers) as u32;
            for t in 0..1000 {
                data.push(5.0 * spk as f64 + 0.001 * (t as f64 % 7.0));
            }
            segments.push(Segment { start: turn * 1000, end: (turn + 1) * 1000, cluster: spk });
        }
        let features = FeatureMatrix::from_data(data, turns * 1000, 1, FeatureKind::Mfcc).unwrap();
        let segmentation = Segmentation { segments, frame_period: 0.010 };
        let result = DiarizationResult {
            segmentation,
            clusters: ClusterSet { clusters: BTreeMap::<u32, Cluster>::new() },
            trace: vec![],
            real_time_factor: 0.0,
            speech_mask: vec![true; turns * 1000],
        };
        (features, result)
    }

    #[test]
    fn three_speakers_make_four_models() {
        // 120 s of audio with all speech; nonspeech pool is empty and skipped,
        // so force some nonspeech at the tail
        let (features, mut offline) = synthetic_offline(12_000, 3);
        for t in 11_000..12_000 {
            offline.speech_mask[t] = false;
        }
        let mut cfg = OnlineConfig::default();
        cfg.chunk_duration = 10.0;
        cfg.g = 2;
        let models = train_online_models(&features, &offline, &cfg).unwrap();
        assert_eq!(models.len(), 4);
        assert_eq!(models.names, vec!["spk0", "spk1", "spk2", "nonspeech"]);
    }

    #[test]
    fn short_speaker_uses_all_data_with_warning() {
        let (features, offline) = synthetic_offline(6_000, 3);
        let mut cfg = OnlineConfig::default();
        cfg.chunk_duration = 40.0; // each speaker has only 20 s
        cfg.g = 2;
        let models = train_online_models(&features, &offline, &cfg).unwrap();
        assert!(models.warnings.iter().any(|w| w.contains("less than")));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (features, offline) = synthetic_offline(12_000, 2);
        let mut cfg = OnlineConfig::default();
        cfg.chunk_duration = 10.0;
        cfg.g = 2;
        cfg.seed = 42;
        let a = train_online_models(&features, &offline, &cfg).unwrap();
        let b = train_online_models(&features, &offline, &cfg).unwrap();
        assert_eq!(a.models, b.models);
        assert_eq!(a.names, b.names);
    }

    #[test]
    fn select_chunk_prefers_contiguous_run() {
        let mut frames: Vec<usize> = (0..100).collect();
        frames.extend(200..1200); // one long run
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (chunk, short) = select_chunk(&frames, 500, &mut rng);
        assert!(!short);
        assert_eq!(chunk.len(), 500);
        assert!(chunk.windows(2).all(|w| w[1] == w[0] + 1), "chunk not contiguous");
    }

    #[test]
    fn select_chunk_concatenates_when_no_long_run() {
        let mut frames = Vec::new();
        for r in 0..10 {
            frames.extend(r * 1000..r * 1000 + 100);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (chunk, short) = select_chunk(&frames, 500, &mut rng);
        assert!(!short);
        assert_eq!(chunk.len(), 500);
    }
}
