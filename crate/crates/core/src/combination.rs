//! Combining per-frame posterior streams: appending, product rule, additive
//! rule, and static inverse-entropy weighting.

use crate::error::{Error, Result};
use crate::feat::{FeatureKind, FeatureMatrix};

/// Floor applied to probabilities before exponentiation under the product
/// rule, so zero entries cannot produce -inf.
pub const PROB_FLOOR: f64 = 1e-12;

/// Epsilon in the inverse-entropy weight rule w_s ∝ 1/(H_s + EPS).
pub const ENTROPY_EPS: f64 = 1e-6;

/// A feature matrix whose rows are probability distributions over a fixed
/// class set.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStream {
    matrix: FeatureMatrix,
}

impl PosteriorStream {
    pub fn new(matrix: FeatureMatrix) -> Result<Self> {
        if matrix.kind != FeatureKind::Posterior {
            return Err(Error::Config("posterior stream requires kind=posterior".into()));
        }
        matrix.validate()?;
        Ok(Self { matrix })
    }

    /// Builds a stream from raw rows, normalizing each row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let s: f64 = r.iter().sum();
            if !(s > 0.0) {
                return Err(Error::Config("posterior row sums to zero".into()));
            }
            data.extend(r.iter().map(|&p| p / s));
        }
        let m = FeatureMatrix::from_data(data, rows.len(), dim, FeatureKind::Posterior)?;
        Self::new(m)
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.matrix
    }

    pub fn class_count(&self) -> usize {
        self.matrix.dim()
    }

    pub fn n_frames(&self) -> usize {
        self.matrix.n_frames()
    }
}

/// Normalized per-stream weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamWeights {
    weights: Vec<f64>,
}

impl StreamWeights {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Config("empty weight vector".into()));
        }
        if raw.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("weights must be nonnegative and finite".into()));
        }
        let s: f64 = raw.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Config("weights sum to zero".into()));
        }
        Ok(Self { weights: raw.into_iter().map(|w| w / s).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// How to weight streams in the product and additive rules. `Uniform` is the
/// unscaled case.
#[derive(Debug, Clone)]
pub enum Weighting {
    Uniform,
    Fixed(StreamWeights),
    /// One weight vector per frame, e.g. from `inverse_entropy_weights`.
    PerFrame(Vec<StreamWeights>),
}

impl Weighting {
    fn frame_weights<'a>(&'a self, frame: usize, n_streams: usize, uniform: &'a StreamWeights) -> Result<&'a [f64]> {
        match self {
            Weighting::Uniform => Ok(uniform.weights()),
            Weighting::Fixed(w) => {
                if w.weights.len() != n_streams {
                    return Err(Error::Alignment("weight count vs stream count".into()));
                }
                Ok(w.weights())
            }
            Weighting::PerFrame(per) => {
                let w = per
                    .get(frame)
                    .ok_or_else(|| Error::Alignment("per-frame weights shorter than input".into()))?;
                if w.weights.len() != n_streams {
                    return Err(Error::Alignment("weight count vs stream count".into()));
                }
                Ok(w.weights())
            }
        }
    }
}

fn check_aligned(frames: &[usize], periods: &[f64]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no streams to combine".into()));
    }
    if frames.iter().any(|&n| n != frames[0]) {
        return Err(Error::Alignment(format!("frame counts differ: {frames:?}")));
    }
    if periods.iter().any(|&p| (p - periods[0]).abs() > 1e-12) {
        return Err(Error::Alignment("frame periods differ".into()));
    }
    Ok(())
}

/// Appends all streams into one wide feature matrix; column order follows the
/// input stream order.
pub fn combine_append(streams: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
    check_aligned(
        &streams.iter().map(|s| s.n_frames()).collect::<Vec<_>>(),
        &streams.iter().map(|s| s.frame_period).collect::<Vec<_>>(),
    )?;
    let n = streams[0].n_frames();
    let dim: usize = streams.iter().map(|s| s.dim()).sum();
    let mut out = FeatureMatrix::zeros(n, dim, streams[0].kind);
    out.frame_period = streams[0].frame_period;
    for t in 0..n {
        let row = out.row_mut(t);
        let mut off = 0;
        for s in streams {
            row[off..off + s.dim()].copy_from_slice(s.row(t));
            off += s.dim();
        }
    }
    Ok(out)
}

fn check_posterior_aligned(streams: &[PosteriorStream]) -> Result<()> {
    check_aligned(
        &streams.iter().map(|s| s.n_frames()).collect::<Vec<_>>(),
        &streams.iter().map(|s| s.matrix.frame_period).collect::<Vec<_>>(),
    )?;
    if streams.iter().any(|s| s.class_count() != streams[0].class_count()) {
        return Err(Error::Alignment("class counts differ across streams".into()));
    }
    Ok(())
}

/// Product rule: p(c) ∝ Π_s p_s(c)^{w_s}, renormalized per frame. The
/// unscaled rule (`Weighting::Uniform`) uses exponent 1 for every stream, so
/// multiplying by a uniform stream renormalizes back to the original.
pub fn combine_product(streams: &[PosteriorStream], weighting: &Weighting) -> Result<PosteriorStream> {
    check_posterior_aligned(streams)?;
    let n = streams[0].n_frames();
    let classes = streams[0].class_count();
    // exponent 1 per stream in the unscaled case
    let uniform = StreamWeights { weights: vec![1.0; streams.len()] };
    let mut out = FeatureMatrix::zeros(n, classes, FeatureKind::Posterior);
    out.frame_period = streams[0].matrix.frame_period;
    for t in 0..n {
        let w = weighting.frame_weights(t, streams.len(), &uniform)?;
        let row = out.row_mut(t);
        for c in 0..classes {
            let mut lg = 0.0;
            for (s, stream) in streams.iter().enumerate() {
                lg += w[s] * stream.matrix.row(t)[c].max(PROB_FLOOR).ln();
            }
            row[c] = lg;
        }
        // normalize in the log domain for stability
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    PosteriorStream::new(out)
}

/// Additive rule: p(c) = Σ_s w_s p_s(c). Renormalized per frame to absorb
/// rounding.
pub fn combine_sum(streams: &[PosteriorStream], weighting: &Weighting) -> Result<PosteriorStream> {
    check_posterior_aligned(streams)?;
    let n = streams[0].n_frames();
    let classes = streams[0].class_count();
    let uniform = StreamWeights::uniform(streams.len());
    let mut out = FeatureMatrix::zeros(n, classes, FeatureKind::Posterior);
    out.frame_period = streams[0].matrix.frame_period;
    for t in 0..n {
        let w = weighting.frame_weights(t, streams.len(), &uniform)?;
        let row = out.row_mut(t);
        for c in 0..classes {
            row[c] = streams
                .iter()
                .enumerate()
                .map(|(s, stream)| w[s] * stream.matrix.row(t)[c])
                .sum();
        }
        let z: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    PosteriorStream::new(out)
}

/// Shannon entropy of one distribution, in nats. 0·ln 0 counts as 0.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 }).sum()
}

/// Per-frame inverse-entropy weights: w_s ∝ 1/(H_s + eps), normalized to sum
/// to one. Confident (low-entropy) streams dominate.
pub fn inverse_entropy_weights(streams: &[PosteriorStream]) -> Result<Weighting> {
    check_posterior_aligned(streams)?;
    let n = streams[0].n_frames();
    let mut per_frame = Vec::with_capacity(n);
    for t in 0..n {
        let raw: Vec<f64> = streams
            .iter()
            .map(|s| 1.0 / (entropy(s.matrix.row(t)) + ENTROPY_EPS))
            .collect();
        per_frame.push(StreamWeights::new(raw)?);
    }
    Ok(Weighting::PerFrame(per_frame))
}
