//! Diarization error rate: the fraction of reference speech time whose
//! hypothesis label disagrees with the reference under the best one-to-one
//! cluster mapping.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::Segmentation;

/// DER in [0, 1]. The hypothesis-to-reference cluster mapping is chosen to
/// maximize matched frames over all injective mappings (exact assignment via
/// a bitmask dynamic program over reference clusters — fine at the cluster
/// counts diarization produces). Mislabeled time counts reference frames that
/// are unlabeled or mapped wrongly, plus hypothesis speech in reference
/// non-speech.
pub fn diarization_error_rate(hypothesis: &Segmentation, reference: &Segmentation) -> Result<f64> {
    if (hypothesis.frame_period - reference.frame_period).abs() > 1e-12 {
        return Err(Error::DimensionMismatch("frame periods differ".into()));
    }
    let n = hypothesis.end_frame().max(reference.end_frame());
    let hyp = hypothesis.frame_labels(n);
    let rf = reference.frame_labels(n);

    let mut ref_ids: Vec<u32> = Vec::new();
    let mut hyp_ids: Vec<u32> = Vec::new();
    for t in 0..n {
        if let Some(c) = rf[t] {
            if !ref_ids.contains(&c) {
                ref_ids.push(c);
            }
        }
        if let Some(c) = hyp[t] {
            if !hyp_ids.contains(&c) {
                hyp_ids.push(c);
            }
        }
    }
    ref_ids.sort_unstable();
    hyp_ids.sort_unstable();
    let ref_speech = rf.iter().filter(|l| l.is_some()).count();
    if ref_speech == 0 {
        return Err(Error::Config("reference contains no speech".into()));
    }
    if ref_ids.len() > 20 {
        return Err(Error::Config(format!(
            "{} reference clusters exceeds the exact-assignment limit",
            ref_ids.len()
        )));
    }

    // overlap[h][r]: frames where hypothesis cluster h meets reference cluster r
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for t in 0..n {
        if let (Some(h), Some(r)) = (hyp[t], rf[t]) {
            *overlap.entry((h, r)).or_default() += 1;
        }
    }

    // dp over hypothesis clusters; mask selects reference clusters already used
    let r_count = ref_ids.len();
    let full = 1usize << r_count;
    let mut dp = vec![0usize; full];
    for &h in &hyp_ids {
        let mut next = dp.clone();
        for mask in 0..full {
            for (ri, &r) in ref_ids.iter().enumerate() {
                if mask & (1 << ri) != 0 {
                    continue;
                }
                let gain = overlap.get(&(h, r)).copied().unwrap_or(0);
                let m2 = mask | (1 << ri);
                let cand = dp[mask] + gain;
                if cand > next[m2] {
                    next[m2] = cand;
                }
            }
        }
        // carrying dp forward lets a hypothesis cluster stay unmapped
        for mask in 0..full {
            if next[mask] < dp[mask] {
                next[mask] = dp[mask];
            }
        }
        dp = next;
    }
    let matched = dp.iter().copied().max().unwrap_or(0);

    let false_alarm = (0..n).filter(|&t| rf[t].is_none() && hyp[t].is_some()).count();
    let mislabeled = ref_speech - matched + false_alarm;
    Ok(mislabeled as f64 / ref_speech as f64)
}
