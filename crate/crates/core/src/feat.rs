//! Feature containers shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Default frame period in seconds (10 ms).
pub const DEFAULT_FRAME_PERIOD: f64 = 0.010;

/// Tolerance used when validating posterior rows.
pub const POSTERIOR_SUM_TOL: f64 = 1e-9;

/// Mono PCM audio normalized to [-1, 1].
#[derive(Debug, Clone)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("audio contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// What a feature matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Mfcc,
    LogMel,
    Gabor,
    Posterior,
}

/// A frames-by-dimensions matrix of real-valued features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_frames: usize,
    dim: usize,
    pub frame_period: f64,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn zeros(n_frames: usize, dim: usize, kind: FeatureKind) -> Self {
        assert!(dim >= 1, "feature dimension must be >= 1");
        Self {
            data: vec![0.0; n_frames * dim],
            n_frames,
            dim,
            frame_period: DEFAULT_FRAME_PERIOD,
            kind,
        }
    }

    pub fn from_data(data: Vec<f64>, n_frames: usize, dim: usize, kind: FeatureKind) -> Result<Self> {
        if dim < 1 {
            return Err(Error::DimensionMismatch("dim must be >= 1".into()));
        }
        if data.len() != n_frames * dim {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match {} x {}",
                data.len(),
                n_frames,
                dim
            )));
        }
        let m = Self {
            data,
            n_frames,
            dim,
            frame_period: DEFAULT_FRAME_PERIOD,
            kind,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("feature matrix contains non-finite entries".into()));
        }
        if self.kind == FeatureKind::Posterior {
            for (i, row) in self.rows().enumerate() {
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::Format(format!("posterior row {i} has a negative entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > POSTERIOR_SUM_TOL {
                    return Err(Error::Format(format!(
                        "posterior row {i} sums to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    pub fn row_mut(&mut self, frame: usize) -> &mut [f64] {
        &mut self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Audio duration covered by this matrix, in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.n_frames as f64 * self.frame_period
    }

    /// New matrix holding only the given frames, in order.
    pub fn select_frames(&self, frames: &[usize]) -> Self {
        let mut data = Vec::with_capacity(frames.len() * self.dim);
        for &f in frames {
            data.extend_from_slice(self.row(f));
        }
        Self {
            data,
            n_frames: frames.len(),
            dim: self.dim,
            frame_period: self.frame_period,
            kind: self.kind,
        }
    }
}
