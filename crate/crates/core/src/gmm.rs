//! Diagonal-covariance Gaussian mixture models: likelihood evaluation and
//! expectation-maximization training.
//!
//! Models are immutable after construction and safe to share across workers.
//! Training accumulates statistics over fixed-size chunks reduced in a fixed
//! order, so results do not depend on the worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::math::LogSumExp;
use crate::workers::REDUCE_CHUNK;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;
const LN_2PI: f64 = 1.837877066409345483560659472811235279722;

/// One diagonal-covariance Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch("mean/variance length mismatch".into()));
        }
        if variance.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Training("variances must be positive and finite".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Training("means must be finite".into()));
        }
        Ok(Self { mean, variance })
    }
}

/// Weighted mixture of diagonal Gaussians with cached log-weights and
/// log-normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    components: Vec<DiagonalGaussian>,
    log_weights: Vec<f64>,
    // -0.5 * (d*ln(2*pi) + sum ln var), per component
    log_norms: Vec<f64>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<DiagonalGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Training("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch("weights/components length mismatch".into()));
        }
        let dim = components[0].mean.len();
        if components.iter().any(|c| c.mean.len() != dim) {
            return Err(Error::DimensionMismatch("components disagree on dimension".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Training("weights must be positive and finite".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Training(format!("weights sum to {s}, expected 1")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let log_norms = components
            .iter()
            .map(|c| -0.5 * (dim as f64 * LN_2PI + c.variance.iter().map(|v| v.ln()).sum::<f64>()))
            .collect();
        Ok(Self { weights, components, log_weights, log_norms })
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagonalGaussian] {
        &self.components
    }

    /// log sum_i w_i N(x; mu_i, sigma_i^2), via streaming log-sum-exp.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature dim {} vs model dim {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.log_likelihood_unchecked(x))
    }

    #[inline]
    pub(crate) fn log_likelihood_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = LogSumExp::new();
        for i in 0..self.components.len() {
            acc.push(self.component_log_density(i, x));
        }
        acc.value()
    }

    /// Log density of component `i` at `x`, including the mixture log-weight.
    #[inline]
    fn component_log_density(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.components[i];
        let mut quad = 0.0;
        for d in 0..x.len() {
            let z = x[d] - c.mean[d];
            quad += z * z / c.variance[d];
        }
        self.log_weights[i] + self.log_norms[i] - 0.5 * quad
    }

    /// Per-component log joint densities, for EM responsibilities.
    fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.components.len() {
            out.push(self.component_log_density(i, x));
        }
    }

    /// Total log-likelihood of a feature matrix.
    pub fn total_log_likelihood(&self, data: &FeatureMatrix) -> Result<f64> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch("data dim vs model dim".into()));
        }
        // chunked sum with a fixed tree, worker-count independent
        let partials: Vec<f64> = (0..data.n_frames())
            .collect::<Vec<_>>()
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| chunk.iter().map(|&t| self.log_likelihood_unchecked(data.row(t))).sum::<f64>())
            .collect();
        Ok(partials.iter().sum())
    }
}

/// Evaluates many gathered models against one feature vector. Work may be
/// split across workers; element i always equals the scalar result for
/// `models[i]`, bitwise.
pub fn gmm_log_likelihood_batch(models: &[&Gmm], x: &[f64]) -> Result<Vec<f64>> {
    for m in models {
        if m.dim() != x.len() {
            return Err(Error::DimensionMismatch("batch model dim vs feature dim".into()));
        }
    }
    Ok(models.par_iter().map(|m| m.log_likelihood_unchecked(x)).collect())
}

/// EM training configuration.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Absolute per-frame log-likelihood improvement below which EM stops.
    pub ll_tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            ll_tolerance: 1e-4,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

/// A trained model plus its per-iteration total log-likelihood trace.
#[derive(Debug, Clone)]
pub struct TrainedGmm {
    pub model: Gmm,
    pub log_likelihood_trace: Vec<f64>,
}

/// EM with seeded initialization: g distinct random frames as means, global
/// variance, then two k-means sweeps before the EM iterations.
pub fn train_gmm_em(data: &FeatureMatrix, g: usize, config: &EmConfig) -> Result<TrainedGmm> {
    if g < 1 {
        return Err(Error::Training("g must be >= 1".into()));
    }
    if data.n_frames() < g {
        return Err(Error::Training(format!(
            "{} frames is fewer than {} components",
            data.n_frames(),
            g
        )));
    }
    let init = initialize(data, g, config)?;
    train_gmm_em_from(data, &init, config)
}

/// EM starting from a given model; used for BIC merge candidates where the
/// initial model pools the components of two trained clusters.
pub fn train_gmm_em_from(data: &FeatureMatrix, init: &Gmm, config: &EmConfig) -> Result<TrainedGmm> {
    if data.dim() != init.dim() {
        return Err(Error::DimensionMismatch("data dim vs init model dim".into()));
    }
    if data.n_frames() < init.num_components() {
        return Err(Error::Training("fewer frames than components".into()));
    }
    let n = data.n_frames();
    let dim = data.dim();
    let g = init.num_components();
    let mut model = init.clone();
    let mut trace = Vec::new();

    for _iter in 0..config.max_iterations {
        // E-step: per-chunk partial accumulators, reduced in chunk order.
        let frames: Vec<usize> = (0..n).collect();
        let partials: Vec<Accumulators> = frames
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut acc = Accumulators::new(g, dim);
                let mut logp = Vec::with_capacity(g);
                for &t in chunk {
                    let x = data.row(t);
                    model.component_log_densities(x, &mut logp);
                    let mut lse = LogSumExp::new();
                    for &v in &logp {
                        lse.push(v);
                    }
                    let ll = lse.value();
                    acc.log_likelihood += ll;
                    for i in 0..g {
                        let r = (logp[i] - ll).exp();
                        acc.resp[i] += r;
                        let mean_i = &model.components[i].mean;
                        let base = i * dim;
                        for d in 0..dim {
                            // shifted by the current mean for conditioning
                            let z = x[d] - mean_i[d];
                            acc.sum_z[base + d] += r * z;
                            acc.sum_z2[base + d] += r * z * z;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut acc = Accumulators::new(g, dim);
        for p in partials {
            acc.merge(&p);
        }
        trace.push(acc.log_likelihood);

        // M-step
        let mut weights = Vec::with_capacity(g);
        let mut comps = Vec::with_capacity(g);
        for i in 0..g {
            let r = acc.resp[i];
            let old = &model.components[i];
            if r < 1e-10 {
                // starved component: keep parameters, floor the weight
                weights.push(1e-10);
                comps.push(old.clone());
                continue;
            }
            let base = i * dim;
            let mut mean = Vec::with_capacity(dim);
            let mut var = Vec::with_capacity(dim);
            for d in 0..dim {
                let dz = acc.sum_z[base + d] / r;
                let m = old.mean[d] + dz;
                let v = acc.sum_z2[base + d] / r - dz * dz;
                mean.push(m);
                var.push(v.max(config.variance_floor));
            }
            weights.push(r / n as f64);
            comps.push(DiagonalGaussian { mean, variance: var });
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
        model = Gmm::new(weights, comps)?;

        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            let cur = trace[trace.len() - 1];
            if (cur - prev).abs() < config.ll_tolerance * n as f64 {
                break;
            }
        }
    }
    Ok(TrainedGmm { model, log_likelihood_trace: trace })
}

struct Accumulators {
    log_likelihood: f64,
    resp: Vec<f64>,
    sum_z: Vec<f64>,
    sum_z2: Vec<f64>,
}

impl Accumulators {
    fn new(g: usize, dim: usize) -> Self {
        Self {
            log_likelihood: 0.0,
            resp: vec![0.0; g],
            sum_z: vec![0.0; g * dim],
            sum_z2: vec![0.0; g * dim],
        }
    }

    fn merge(&mut self, other: &Self) {
        self.log_likelihood += other.log_likelihood;
        for (a, b) in self.resp.iter_mut().zip(&other.resp) {
            *a += b;
        }
        for (a, b) in self.sum_z.iter_mut().zip(&other.sum_z) {
            *a += b;
        }
        for (a, b) in self.sum_z2.iter_mut().zip(&other.sum_z2) {
            *a += b;
        }
    }
}

fn initialize(data: &FeatureMatrix, g: usize, config: &EmConfig) -> Result<Gmm> {
    let n = data.n_frames();
    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // global mean/variance
    let mut gmean = vec![0.0; dim];
    for row in data.rows() {
        for d in 0..dim {
            gmean[d] += row[d];
        }
    }
    for m in &mut gmean {
        *m /= n as f64;
    }
    let mut gvar = vec![0.0; dim];
    for row in data.rows() {
        for d in 0..dim {
            let z = row[d] - gmean[d];
            gvar[d] += z * z;
        }
    }
    for v in &mut gvar {
        *v = (*v / n as f64).max(config.variance_floor);
    }

    // g distinct random frames as initial means
    let picks = sample(&mut rng, n, g);
    let mut means: Vec<Vec<f64>> = picks.iter().map(|t| data.row(t).to_vec()).collect();

    // two k-means sweeps
    let mut assign = vec![0usize; n];
    for _sweep in 0..2 {
        for (t, row) in data.rows().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, m) in means.iter().enumerate() {
                let d2: f64 = row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best_d {
                    best_d = d2;
                    best = i;
                }
            }
            assign[t] = best;
        }
        let mut counts = vec![0usize; g];
        let mut sums = vec![vec![0.0; dim]; g];
        for (t, row) in data.rows().enumerate() {
            counts[assign[t]] += 1;
            for d in 0..dim {
                sums[assign[t]][d] += row[d];
            }
        }
        for i in 0..g {
            if counts[i] > 0 {
                for d in 0..dim {
                    means[i][d] = sums[i][d] / counts[i] as f64;
                }
            } else {
                // restart an empty cluster at a random frame
                let t = rng.gen_range(0..n);
                means[i] = data.row(t).to_vec();
            }
        }
    }

    // per-cluster variances from the final assignment, global fallback
    let mut counts = vec![0usize; g];
    let mut vars = vec![vec![0.0; dim]; g];
    for (t, row) in data.rows().enumerate() {
        let i = assign[t];
        counts[i] += 1;
        for d in 0..dim {
            let z = row[d] - means[i][d];
            vars[i][d] += z * z;
        }
    }
    let mut weights = Vec::with_capacity(g);
    let mut comps = Vec::with_capacity(g);
    for i in 0..g {
        let var = if counts[i] >= 2 {
            vars[i].iter().map(|v| (v / counts[i] as f64).max(config.variance_floor)).collect()
        } else {
            gvar.clone()
        };
        weights.push((counts[i].max(1)) as f64);
        comps.push(DiagonalGaussian { mean: means[i].clone(), variance: var });
    }
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    Gmm::new(weights, comps)
}

/// Builds a pooled mixture from two models, weighted by frame counts. The
/// result has g_a + g_b components and is the standard initialization for a
/// merged-cluster model.
pub fn pool_models(a: &Gmm, n_a: usize, b: &Gmm, n_b: usize) -> Result<Gmm> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("pooled models disagree on dimension".into()));
    }
    let total = (n_a + n_b) as f64;
    let wa = n_a as f64 / total;
    let wb = n_b as f64 / total;
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for (w, c) in a.weights().iter().zip(a.components()) {
        weights.push(w * wa);
        comps.push(c.clone());
    }
    for (w, c) in b.weights().iter().zip(b.components()) {
        weights.push(w * wb);
        comps.push(c.clone());
    }
    let s: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= s;
    }
    Gmm::new(weights, comps)
}

const GMM_MAGIC: &[u8; 4] = b"GMM1";

/// Writes the versioned binary model format: magic "GMM1", u32 g, u32 dim,
/// then weights, means, variances as little-endian f64.
pub fn write_gmm(path: &Path, model: &Gmm) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GMM_MAGIC)?;
    w.write_all(&(model.num_components() as u32).to_le_bytes())?;
    w.write_all(&(model.dim() as u32).to_le_bytes())?;
    for &x in model.weights() {
        w.write_all(&x.to_le_bytes())?;
    }
    for c in model.components() {
        for &x in &c.mean {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for c in model.components() {
        for &x in &c.variance {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_gmm(path: &Path) -> Result<Gmm> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GMM_MAGIC {
        return Err(Error::Format(format!("{}: bad GMM magic", path.display())));
    }
    let g = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    if g == 0 || dim == 0 {
        return Err(Error::Format("GMM file has zero components or dimension".into()));
    }
    let weights = read_f64s(&mut r, g)?;
    let mut means = Vec::with_capacity(g);
    for _ in 0..g {
        means.push(read_f64s(&mut r, dim)?);
    }
    let mut comps = Vec::with_capacity(g);
    for (i, mean) in means.into_iter().enumerate() {
        let variance = read_f64s(&mut r, dim)?;
        let _ = i;
        comps.push(DiagonalGaussian::new(mean, variance)?);
    }
    Gmm::new(weights, comps)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
