//! Viterbi re-segmentation over an ergodic cluster model with a minimum
//! segment duration.
//!
//! Each cluster is a chain of D = ceil(min_duration / frame_period) states
//! sharing the cluster's GMM, with a self-loop on the last state and
//! zero-cost transitions between cluster units. The chain structure makes
//! the dynamic program collapse to two alternatives per (cluster, frame):
//! continue the current segment, or close one D frames back and enter fresh.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::workers::REDUCE_CHUNK;

use super::{ClusterSet, Segment, Segmentation};

/// Minimum segment length in frames for the given duration and frame period.
pub fn min_duration_frames(min_duration: f64, frame_period: f64) -> usize {
    ((min_duration / frame_period).ceil() as usize).max(1)
}

/// Result of a re-segmentation: the segmentation in original frame indices
/// plus the shortest segment length in speech frames (before merging
/// adjacent same-cluster segments).
pub struct Resegmentation {
    pub segmentation: Segmentation,
    pub min_segment_frames: usize,
}

pub fn resegment(
    features: &FeatureMatrix,
    clusters: &ClusterSet,
    min_duration: f64,
    speech_mask: &[bool],
) -> Result<Resegmentation> {
    if clusters.clusters.is_empty() {
        return Err(Error::Config("resegment needs at least one cluster".into()));
    }
    if speech_mask.len() != features.n_frames() {
        return Err(Error::DimensionMismatch("speech mask length vs frames".into()));
    }
    let speech: Vec<usize> = (0..features.n_frames()).filter(|&t| speech_mask[t]).collect();
    let t_len = speech.len();
    if t_len == 0 {
        return Err(Error::InsufficientSpeech("no speech frames to segment".into()));
    }
    let ids: Vec<u32> = clusters.clusters.keys().copied().collect();
    let k = ids.len();
    let d = min_duration_frames(min_duration, features.frame_period);

    // per-cluster frame costs (negative log-likelihood), parallel over frames
    let costs: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            let model = &clusters.clusters[id].model;
            speech
                .par_chunks(REDUCE_CHUNK)
                .flat_map_iter(|chunk| {
                    chunk
                        .iter()
                        .map(|&t| -model.log_likelihood_unchecked(features.row(t)))
                        .collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();

    if t_len <= d || k == 1 {
        // too short to switch, or only one labeling exists
        let best = (0..k)
            .min_by(|&a, &b| {
                let sa: f64 = costs[a].iter().sum();
                let sb: f64 = costs[b].iter().sum();
                sa.total_cmp(&sb)
            })
            .unwrap();
        let segmentation = Segmentation {
            segments: vec![Segment {
                start: speech[0],
                end: speech[t_len - 1] + 1,
                cluster: ids[best],
            }],
            frame_period: features.frame_period,
        };
        return Ok(Resegmentation { segmentation, min_segment_frames: t_len });
    }

    // prefix sums per cluster
    let prefix: Vec<Vec<f64>> = costs
        .iter()
        .map(|c| {
            let mut p = Vec::with_capacity(t_len + 1);
            p.push(0.0);
            let mut acc = 0.0;
            for &v in c {
                acc += v;
                p.push(acc);
            }
            p
        })
        .collect();

    const INF: f64 = f64::INFINITY;
    // a[c][t]: best cost with cluster c's segment >= d frames old at t
    let mut a = vec![vec![INF; t_len]; k];
    let mut entered = vec![vec![false; t_len]; k];
    let mut arg_best = vec![u32::MAX; t_len];
    let mut best_at = vec![INF; t_len];

    for t in (d - 1)..t_len {
        for c in 0..k {
            let cont = if t >= d { a[c][t - 1] + costs[c][t] } else { INF };
            let enter_prev = if t + 1 == d {
                0.0
            } else if t >= 2 * d - 1 {
                best_at[t - d]
            } else {
                INF
            };
            let enter = enter_prev + (prefix[c][t + 1] - prefix[c][t + 1 - d]);
            if enter < cont {
                a[c][t] = enter;
                entered[c][t] = true;
            } else {
                a[c][t] = cont;
            }
        }
        let mut b = INF;
        let mut arg = u32::MAX;
        for c in 0..k {
            if a[c][t] < b {
                b = a[c][t];
                arg = c as u32;
            }
        }
        best_at[t] = b;
        arg_best[t] = arg;
    }

    // backtrack segment by segment
    let mut raw: Vec<(usize, usize, u32)> = Vec::new(); // positions, inclusive
    let mut t = t_len - 1;
    let mut c = arg_best[t] as usize;
    let mut min_len = usize::MAX;
    loop {
        let mut pos = t;
        while !entered[c][pos] {
            pos -= 1;
        }
        let start = pos + 1 - d;
        raw.push((start, t, ids[c]));
        min_len = min_len.min(t - start + 1);
        if start == 0 {
            break;
        }
        t = start - 1;
        c = arg_best[t] as usize;
    }
    raw.reverse();

    // map to original frames, merging adjacent same-cluster segments
    let mut segments: Vec<Segment> = Vec::new();
    for (p0, p1, cluster) in raw {
        let start = speech[p0];
        let end = speech[p1] + 1;
        match segments.last_mut() {
            Some(last) if last.cluster == cluster && last.end >= start => last.end = end,
            _ => segments.push(Segment { start, end, cluster }),
        }
    }
    let segmentation = Segmentation { segments, frame_period: features.frame_period };
    Ok(Resegmentation { segmentation, min_segment_frames: min_len })
}
