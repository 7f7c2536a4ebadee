//! Agglomerative speaker diarization: uniform initialization, Viterbi
//! re-segmentation with a minimum duration, per-cluster GMM re-training, and
//! BIC-based cluster merging; plus the online mode bootstrapped from an
//! offline pass.

pub mod der;
pub mod online;
pub mod resegment;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::gmm::{pool_models, train_gmm_em, train_gmm_em_from, EmConfig, Gmm};

pub use resegment::{min_duration_frames, resegment, Resegmentation};

/// One labeled time span; `end` is exclusive, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub cluster: u32,
}

/// A time segmentation labeled by cluster identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub frame_period: f64,
}

impl Segmentation {
    /// Per-frame cluster labels; `None` outside any segment.
    pub fn frame_labels(&self, n_frames: usize) -> Vec<Option<u32>> {
        let mut labels = vec![None; n_frames];
        for s in &self.segments {
            for slot in labels.iter_mut().take(s.end.min(n_frames)).skip(s.start) {
                *slot = Some(s.cluster);
            }
        }
        labels
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.end - s.start).sum()
    }

    pub fn end_frame(&self) -> usize {
        self.segments.iter().map(|s| s.end).max().unwrap_or(0)
    }

    /// RTTM lines: `SPEAKER <file> 1 <tbeg> <tdur> <NA> <NA> <name> <NA> <NA>`.
    pub fn to_rttm(&self, file_id: &str) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let tbeg = s.start as f64 * self.frame_period;
            let tdur = (s.end - s.start) as f64 * self.frame_period;
            out.push_str(&format!(
                "SPEAKER {file_id} 1 {tbeg:.3} {tdur:.3} <NA> <NA> spk{} <NA> <NA>\n",
                s.cluster
            ));
        }
        out
    }

    /// Parses RTTM produced by `to_rttm` (cluster names `spk<N>`).
    pub fn from_rttm(text: &str, frame_period: f64) -> Result<Self> {
        let mut segments = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 8 || f[0] != "SPEAKER" {
                return Err(Error::Parse(format!("RTTM line {}: bad record", lineno + 1)));
            }
            let tbeg: f64 = f[3].parse().map_err(|_| Error::Parse(format!("line {}: bad tbeg", lineno + 1)))?;
            let tdur: f64 = f[4].parse().map_err(|_| Error::Parse(format!("line {}: bad tdur", lineno + 1)))?;
            let name = f[7];
            let cluster: u32 = name
                .strip_prefix("spk")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("line {}: cluster name '{name}'", lineno + 1)))?;
            let start = (tbeg / frame_period).round() as usize;
            let end = start + (tdur / frame_period).round() as usize;
            segments.push(Segment { start, end, cluster });
        }
        segments.sort_by_key(|s| s.start);
        Ok(Self { segments, frame_period })
    }
}

/// One cluster: its model and its assigned frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub model: Gmm,
    pub frames: Vec<usize>,
}

/// Clusters keyed by id; iteration order is the id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: BTreeMap<u32, Cluster>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DiarizationConfig {
    /// Initial cluster count, larger than the expected speaker count.
    pub k: usize,
    /// Gaussians per cluster model.
    pub g: usize,
    /// Minimum speech segment duration in seconds.
    pub min_duration: f64,
    /// Energy percentile below which frames are treated as non-speech.
    pub vad_percentile: f64,
    /// Absolute log-energy floor; frames below it are never speech.
    pub energy_floor: f64,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for DiarizationConfig {
    fn default() -> Self {
        Self {
            k: 16,
            g: 5,
            min_duration: 2.5,
            vad_percentile: 30.0,
            energy_floor: -100.0,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

impl DiarizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("k must be >= 2".into()));
        }
        if self.g < 1 {
            return Err(Error::Config("g must be >= 1".into()));
        }
        if !(self.min_duration > 0.0) {
            return Err(Error::Config("min_duration must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of the agglomerative loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub cluster_count: usize,
    pub merged: Option<(u32, u32)>,
    pub bic_delta: Option<f64>,
    pub min_segment_frames: usize,
}

#[derive(Debug, Clone)]
pub struct DiarizationResult {
    pub segmentation: Segmentation,
    pub clusters: ClusterSet,
    pub trace: Vec<TraceEntry>,
    pub real_time_factor: f64,
    pub speech_mask: Vec<bool>,
}

impl DiarizationResult {
    /// Equality of everything except the measured real-time factor.
    pub fn same_output(&self, other: &Self) -> bool {
        self.segmentation == other.segmentation
            && self.clusters == other.clusters
            && self.trace == other.trace
            && self.speech_mask == other.speech_mask
    }
}

/// Energy-based speech activity detection. The first feature dimension is
/// taken as log-energy (MFCC c0 qualifies). A frame is speech when its
/// smoothed energy reaches the configured percentile of all smoothed
/// energies and exceeds the absolute floor; the boolean mask is then smoothed
/// by a 0.5 s majority filter.
pub fn detect_speech(features: &FeatureMatrix, config: &DiarizationConfig) -> Vec<bool> {
    let n = features.n_frames();
    if n == 0 {
        return Vec::new();
    }
    let energy: Vec<f64> = (0..n).map(|t| features.row(t)[0]).collect();
    // short moving-average smoothing of the energy track
    let radius = 2usize;
    let smoothed: Vec<f64> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius + 1).min(n);
            energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut sorted = smoothed.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((config.vad_percentile / 100.0) * (n as f64 - 1.0)).round() as usize;
    let threshold = sorted[idx.min(n - 1)];
    let raw: Vec<bool> = smoothed
        .iter()
        .map(|&e| e >= threshold && e > config.energy_floor)
        .collect();
    // 0.5 s majority filter
    let win = ((0.5 / features.frame_period).round() as usize).max(1) | 1;
    let half = win / 2;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let votes = raw[lo..hi].iter().filter(|&&b| b).count();
            votes * 2 > hi - lo
        })
        .collect()
}

/// Uniform initialization: k contiguous spans of speech frames with lengths
/// differing by at most one, cluster ids 0..k-1.
pub fn uniform_init(speech_frames: &[usize], k: usize) -> Result<Segmentation> {
    if speech_frames.len() < k {
        return Err(Error::InsufficientSpeech(format!(
            "{} speech frames for {k} initial clusters",
            speech_frames.len()
        )));
    }
    let n = speech_frames.len();
    let base = n / k;
    let rem = n % k;
    let mut segments = Vec::with_capacity(k);
    let mut pos = 0usize;
    for c in 0..k {
        let len = base + if c < rem { 1 } else { 0 };
        let start = speech_frames[pos];
        let end = speech_frames[pos + len - 1] + 1;
        segments.push(Segment { start, end, cluster: c as u32 });
        pos += len;
    }
    Ok(Segmentation { segments, frame_period: crate::feat::DEFAULT_FRAME_PERIOD })
}

/// Trains one GMM per cluster on that cluster's speech frames. Clusters with
/// fewer than g frames are dissolved; their frames return to the surviving
/// clusters at the next re-segmentation. Per-cluster training runs in
/// parallel and matches sequential training exactly.
pub fn retrain(
    features: &FeatureMatrix,
    segmentation: &Segmentation,
    speech_mask: &[bool],
    config: &DiarizationConfig,
) -> Result<ClusterSet> {
    let mut frames_of: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for s in &segmentation.segments {
        for t in s.start..s.end.min(features.n_frames()) {
            if speech_mask[t] {
                frames_of.entry(s.cluster).or_default().push(t);
            }
        }
    }
    let trainable: Vec<(u32, Vec<usize>)> = frames_of
        .into_iter()
        .filter(|(_, frames)| frames.len() >= config.g)
        .collect();
    if trainable.is_empty() {
        return Err(Error::InsufficientSpeech("every cluster starved".into()));
    }
    let trained: Vec<(u32, Cluster)> = trainable
        .par_iter()
        .map(|(id, frames)| -> Result<(u32, Cluster)> {
            let data = features.select_frames(frames);
            let mut em = config.em.clone();
            em.seed = config.seed ^ (*id as u64).wrapping_mul(0x9e3779b97f4a7c15);
            let model = train_gmm_em(&data, config.g.min(frames.len()), &em)?.model;
            Ok((*id, Cluster { model, frames: frames.clone() }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterSet { clusters: trained.into_iter().collect() })
}

/// BIC merge test with parameter-matched models: the merged model carries
/// g_a + g_b components so complexity penalties cancel, and delta is
/// LL_merged(union) - (LL_a(a) + LL_b(b)). The merged model must sit near its
/// likelihood maximum for the test to discriminate, so each pair trains
/// several seeded candidates (the pooled-model warm start plus fresh
/// restarts) and keeps the best. Returns the maximizing pair with its delta
/// and trained merged model when delta >= 0.
pub fn bic_merge_candidate(
    features: &FeatureMatrix,
    clusters: &ClusterSet,
    config: &DiarizationConfig,
) -> Result<Option<(u32, u32, f64, Gmm)>> {
    let ids: Vec<u32> = clusters.clusters.keys().copied().collect();
    if ids.len() < 2 {
        return Ok(None);
    }
    // own-frame log-likelihood of each cluster under its model
    let own_ll: BTreeMap<u32, f64> = ids
        .iter()
        .map(|&id| {
            let c = &clusters.clusters[&id];
            let data = features.select_frames(&c.frames);
            Ok((id, c.model.total_log_likelihood(&data)?))
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            pairs.push((ids[i], ids[j]));
        }
    }
    let mut em = config.em.clone();
    em.max_iterations = 50;
    const MERGE_RESTARTS: u64 = 8;
    // Low-tolerance polish applied to the best candidate: borderline pairs
    // sit within tens of nats of zero, which EM's slow tail can cover.
    let mut polish = config.em.clone();
    polish.max_iterations = 300;
    polish.ll_tolerance = 1e-6;
    let scored: Vec<(u32, u32, f64, Gmm)> = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<(u32, u32, f64, Gmm)> {
            let ca = &clusters.clusters[&a];
            let cb = &clusters.clusters[&b];
            let mut union = ca.frames.clone();
            union.extend_from_slice(&cb.frames);
            union.sort_unstable();
            let data = features.select_frames(&union);
            let g_merged = ca.model.num_components() + cb.model.num_components();
            let init = pool_models(&ca.model, ca.frames.len(), &cb.model, cb.frames.len())?;
            let mut merged = train_gmm_em_from(&data, &init, &em)?.model;
            let mut merged_ll = merged.total_log_likelihood(&data)?;
            for r in 0..MERGE_RESTARTS {
                let mut em_r = em.clone();
                em_r.seed = config
                    .seed
                    .wrapping_add(((a as u64) << 40) ^ ((b as u64) << 20) ^ (r + 1))
                    .wrapping_mul(0x9e3779b97f4a7c15);
                let cand = train_gmm_em(&data, g_merged.min(data.n_frames()), &em_r)?.model;
                let cand_ll = cand.total_log_likelihood(&data)?;
                if cand_ll > merged_ll {
                    merged = cand;
                    merged_ll = cand_ll;
                }
            }
            let polished = train_gmm_em_from(&data, &merged, &polish)?.model;
            let polished_ll = polished.total_log_likelihood(&data)?;
            if polished_ll > merged_ll {
                merged = polished;
                merged_ll = polished_ll;
            }
            let delta = merged_ll - (own_ll[&a] + own_ll[&b]);
            Ok((a, b, delta, merged))
        })
        .collect::<Result<Vec<_>>>()?;

    let best = scored
        .into_iter()
        .max_by(|x, y| x.2.total_cmp(&y.2).then(y.0.cmp(&x.0)).then(y.1.cmp(&x.1)));
    match best {
        Some((a, b, delta, merged)) if delta >= 0.0 => Ok(Some((a, b, delta, merged))),
        _ => Ok(None),
    }
}

/// The full offline loop: speech detection, uniform init, then
/// {re-segmentation, re-training, BIC merge} until no pair merges.
pub fn diarize_offline(features: &FeatureMatrix, config: &DiarizationConfig) -> Result<DiarizationResult> {
    config.validate()?;
    let started = Instant::now();
    let speech_mask = detect_speech(features, config);
    let speech: Vec<usize> = (0..features.n_frames()).filter(|&t| speech_mask[t]).collect();
    if speech.len() < config.k * config.g {
        return Err(Error::InsufficientSpeech(format!(
            "{} speech frames, need at least k*g = {}",
            speech.len(),
            config.k * config.g
        )));
    }
    let mut segmentation = uniform_init(&speech, config.k)?;
    segmentation.frame_period = features.frame_period;
    let mut clusters = retrain(features, &segmentation, &speech_mask, config)?;
    let mut trace = Vec::new();

    // at most k-1 merges; the extra headroom covers dissolution-only rounds
    for _round in 0..(2 * config.k) {
        let reseg = resegment(features, &clusters, config.min_duration, &speech_mask)?;
        segmentation = reseg.segmentation;
        clusters = retrain(features, &segmentation, &speech_mask, config)?;
        if clusters.len() < 2 {
            trace.push(TraceEntry {
                cluster_count: clusters.len(),
                merged: None,
                bic_delta: None,
                min_segment_frames: reseg.min_segment_frames,
            });
            break;
        }
        match bic_merge_candidate(features, &clusters, config)? {
            Some((a, b, delta, merged)) => {
                let ca = clusters.clusters.remove(&a).unwrap();
                let cb = clusters.clusters.remove(&b).unwrap();
                let mut frames = ca.frames;
                frames.extend(cb.frames);
                frames.sort_unstable();
                clusters.clusters.insert(a.min(b), Cluster { model: merged, frames });
                trace.push(TraceEntry {
                    cluster_count: clusters.len(),
                    merged: Some((a, b)),
                    bic_delta: Some(delta),
                    min_segment_frames: reseg.min_segment_frames,
                });
            }
            None => {
                trace.push(TraceEntry {
                    cluster_count: clusters.len(),
                    merged: None,
                    bic_delta: None,
                    min_segment_frames: reseg.min_segment_frames,
                });
                break;
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let audio = features.duration_seconds();
    Ok(DiarizationResult {
        segmentation,
        clusters,
        trace,
        real_time_factor: if audio > 0.0 { elapsed / audio } else { 0.0 },
        speech_mask,
    })
}
