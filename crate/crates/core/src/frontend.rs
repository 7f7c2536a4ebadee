//! Audio front end: MFCCs with time derivatives, log-mel spectrograms, and
//! Gabor-filtered spectro-temporal feature streams.
//!
//! Pipeline for MFCCs: pre-emphasis -> Hamming windowing -> magnitude
//! spectrum -> mel filterbank -> log -> DCT-II. All operations are pure
//! functions of input and configuration; stream fan-out may run on any number
//! of workers with identical results.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::feat::{AudioBuffer, FeatureKind, FeatureMatrix};

pub const PRE_EMPHASIS: f64 = 0.97;
pub const NUM_MEL_CHANNELS: usize = 26;
/// Floor applied before the log: ln(1e-10).
pub const LOG_FLOOR_INPUT: f64 = 1e-10;

/// Frame count for a signal of `n` samples with the given window and hop, both
/// in samples. Callers must ensure n >= win.
pub fn num_frames(n: usize, win: usize, hop: usize) -> usize {
    (n - win) / hop + 1
}

/// Log-mel spectrogram of an audio buffer.
pub fn compute_log_mel(
    audio: &AudioBuffer,
    window: f64,
    hop: f64,
    n_channels: usize,
) -> Result<FeatureMatrix> {
    let (win, hop_s) = window_samples(audio, window, hop)?;
    let n = audio.samples.len();
    let n_frames = num_frames(n, win, hop_s);
    let fft_size = win.next_power_of_two();
    let filterbank = mel_filterbank(n_channels, fft_size, audio.sample_rate as f64);
    let hamming = hamming_window(win);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_size);

    // whole-signal pre-emphasis
    let mut pre = Vec::with_capacity(n);
    pre.push(audio.samples[0]);
    for i in 1..n {
        pre.push(audio.samples[i] - PRE_EMPHASIS * audio.samples[i - 1]);
    }

    let mut out = FeatureMatrix::zeros(n_frames, n_channels, FeatureKind::LogMel);
    out.frame_period = hop;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut mag = vec![0.0f64; fft_size / 2 + 1];
    for t in 0..n_frames {
        let start = t * hop_s;
        for i in 0..fft_size {
            let v = if i < win { pre[start + i] * hamming[i] } else { 0.0 };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (i, m) in mag.iter_mut().enumerate() {
            *m = buf[i].norm();
        }
        let row = out.row_mut(t);
        for (c, filter) in filterbank.iter().enumerate() {
            let mut e = 0.0;
            for &(bin, w) in filter {
                e += w * mag[bin];
            }
            row[c] = e.max(LOG_FLOOR_INPUT).ln();
        }
    }
    Ok(out)
}

/// MFCC features: the DCT-II of the log-mel spectrogram, truncated to
/// `n_coeffs`. Coefficient 0 is a scaled sum of the log-mel channels and
/// serves as the log-energy dimension downstream.
pub fn compute_mfcc(
    audio: &AudioBuffer,
    window: f64,
    hop: f64,
    n_coeffs: usize,
) -> Result<FeatureMatrix> {
    let logmel = compute_log_mel(audio, window, hop, NUM_MEL_CHANNELS)?;
    if n_coeffs < 1 || n_coeffs > NUM_MEL_CHANNELS {
        return Err(Error::Config(format!(
            "n_coeffs must be in 1..={NUM_MEL_CHANNELS}"
        )));
    }
    let mut out = FeatureMatrix::zeros(logmel.n_frames(), n_coeffs, FeatureKind::Mfcc);
    out.frame_period = logmel.frame_period;
    let m = NUM_MEL_CHANNELS as f64;
    for t in 0..logmel.n_frames() {
        let src = logmel.row(t);
        let dst = out.row_mut(t);
        for (k, d) in dst.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, &v) in src.iter().enumerate() {
                s += v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / m).cos();
            }
            // orthonormal DCT-II scaling
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            *d = scale * s;
        }
    }
    Ok(out)
}

fn window_samples(audio: &AudioBuffer, window: f64, hop: f64) -> Result<(usize, usize)> {
    if !(hop > 0.0) || window < hop {
        return Err(Error::Config("need window >= hop > 0".into()));
    }
    let win = (window * audio.sample_rate as f64).round() as usize;
    let hop_s = (hop * audio.sample_rate as f64).round() as usize;
    if win == 0 || hop_s == 0 {
        return Err(Error::Config("window/hop round to zero samples".into()));
    }
    if audio.samples.len() < win {
        return Err(Error::EmptyInput(format!(
            "audio has {} samples, shorter than one {}-sample window",
            audio.samples.len(),
            win
        )));
    }
    Ok((win, hop_s))
}

fn hamming_window(win: usize) -> Vec<f64> {
    (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win as f64 - 1.0)).cos())
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank as sparse (bin, weight) lists, one per channel.
pub fn mel_filterbank(n_channels: usize, fft_size: usize, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let n_bins = fft_size / 2 + 1;
    let max_mel = hz_to_mel(sample_rate / 2.0);
    let centers: Vec<f64> = (0..n_channels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_channels + 1) as f64))
        .collect();
    let bin_hz = sample_rate / fft_size as f64;
    (0..n_channels)
        .map(|c| {
            let (lo, mid, hi) = (centers[c], centers[c + 1], centers[c + 2]);
            let mut filter = Vec::new();
            for bin in 0..n_bins {
                let f = bin as f64 * bin_hz;
                let w = if f > lo && f < mid {
                    (f - lo) / (mid - lo)
                } else if f >= mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                if w > 0.0 {
                    filter.push((bin, w));
                }
            }
            filter
        })
        .collect()
}

/// Center frequencies (Hz) of the filterbank channels; used by callers that
/// need to reason about which channel a tone lands in.
pub fn mel_center_frequencies(n_channels: usize, sample_rate: f64) -> Vec<f64> {
    let max_mel = hz_to_mel(sample_rate / 2.0);
    (1..=n_channels)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_channels + 1) as f64))
        .collect()
}

/// Appends first (and optionally second) order time derivatives, computed by
/// a symmetric +/-2 frame regression with edge replication.
pub fn append_deltas(features: &FeatureMatrix, order: usize) -> Result<FeatureMatrix> {
    if features.n_frames() == 0 {
        return Err(Error::EmptyInput("cannot take deltas of zero frames".into()));
    }
    if order < 1 || order > 2 {
        return Err(Error::Config("delta order must be 1 or 2".into()));
    }
    let n = features.n_frames();
    let dim = features.dim();
    let base: Vec<Vec<f64>> = features.rows().map(|r| r.to_vec()).collect();
    let d1 = regression_deltas(&base, n, dim);
    let mut blocks = vec![base, d1];
    if order == 2 {
        let d2 = regression_deltas(&blocks[1], n, dim);
        blocks.push(d2);
    }
    let mut out = FeatureMatrix::zeros(n, dim * (order + 1), features.kind);
    out.frame_period = features.frame_period;
    for t in 0..n {
        let row = out.row_mut(t);
        for (b, block) in blocks.iter().enumerate() {
            row[b * dim..(b + 1) * dim].copy_from_slice(&block[t]);
        }
    }
    Ok(out)
}

fn regression_deltas(x: &[Vec<f64>], n: usize, dim: usize) -> Vec<Vec<f64>> {
    // d_t = sum_{k=1..2} k * (x[t+k] - x[t-k]) / (2 * (1 + 4))
    let clamp = |t: isize| -> usize { t.clamp(0, n as isize - 1) as usize };
    (0..n)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    let mut num = 0.0;
                    for k in 1..=2isize {
                        num += k as f64
                            * (x[clamp(t as isize + k)][d] - x[clamp(t as isize - k)][d]);
                    }
                    num / 10.0
                })
                .collect()
        })
        .collect()
}

/// One 2-D Gabor filter: a Gaussian envelope times a cosine carrier tuned to
/// a temporal modulation rate (Hz) and a spectral modulation rate
/// (cycles/channel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborFilterSpec {
    pub temporal_rate: f64,
    pub spectral_rate: f64,
    pub temporal_extent: usize,
    pub spectral_extent: usize,
}

impl GaborFilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.temporal_extent % 2 == 0 || self.temporal_extent < 1 {
            return Err(Error::Config("temporal_extent must be odd and >= 1".into()));
        }
        if self.spectral_extent % 2 == 0 || self.spectral_extent < 1 {
            return Err(Error::Config("spectral_extent must be odd and >= 1".into()));
        }
        if !self.temporal_rate.is_finite() || !self.spectral_rate.is_finite() {
            return Err(Error::Config("modulation rates must be finite".into()));
        }
        Ok(())
    }

    /// Materializes the kernel for a given frame period. Gaussian sigma is
    /// extent/6 along each axis. Centrally symmetric, so convolution and
    /// correlation coincide.
    pub fn kernel(&self, frame_period: f64) -> Vec<Vec<f64>> {
        let nt = self.temporal_extent;
        let nk = self.spectral_extent;
        let ct = (nt as isize - 1) / 2;
        let ck = (nk as isize - 1) / 2;
        let sig_t = nt as f64 / 6.0;
        let sig_k = nk as f64 / 6.0;
        (0..nt as isize)
            .map(|a| {
                (0..nk as isize)
                    .map(|b| {
                        let dt = (a - ct) as f64;
                        let dk = (b - ck) as f64;
                        let env = (-0.5 * (dt / sig_t).powi(2) - 0.5 * (dk / sig_k).powi(2)).exp();
                        let phase = 2.0
                            * std::f64::consts::PI
                            * (self.temporal_rate * frame_period * dt + self.spectral_rate * dk);
                        env * phase.cos()
                    })
                    .collect()
            })
            .collect()
    }
}

/// 2-D convolution of a log-mel spectrogram with one Gabor kernel. The time
/// axis is edge-replicated so the frame count is preserved; along frequency
/// only channels where the kernel fully fits are retained, so the output has
/// dim - spectral_extent + 1 channels.
pub fn apply_gabor_stream(logmel: &FeatureMatrix, spec: &GaborFilterSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    if logmel.kind != FeatureKind::LogMel {
        return Err(Error::Config("gabor filtering expects a log-mel input".into()));
    }
    if spec.spectral_extent > logmel.dim() || spec.temporal_extent > logmel.n_frames().max(1) {
        return Err(Error::DimensionMismatch(format!(
            "kernel {}x{} does not fit input {}x{}",
            spec.temporal_extent,
            spec.spectral_extent,
            logmel.n_frames(),
            logmel.dim()
        )));
    }
    let n = logmel.n_frames();
    let dim = logmel.dim();
    let kern = spec.kernel(logmel.frame_period);
    let nt = spec.temporal_extent as isize;
    let nk = spec.spectral_extent;
    let ct = (nt - 1) / 2;
    let out_dim = dim - nk + 1;
    let mut out = FeatureMatrix::zeros(n, out_dim, FeatureKind::Gabor);
    out.frame_period = logmel.frame_period;
    for t in 0..n {
        let row = out.row_mut(t);
        for (j, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..nt {
                let src_t = (t as isize + ct - a).clamp(0, n as isize - 1) as usize;
                let src = logmel.row(src_t);
                let krow = &kern[a as usize];
                for b in 0..nk {
                    // flipped along frequency: true convolution
                    acc += krow[b] * src[j + nk - 1 - b];
                }
            }
            *o = acc;
        }
    }
    Ok(out)
}

/// A bank of Gabor filters grouped by how the modulation plane is divided:
/// by temporal rate, by spectral rate, or jointly by both.
#[derive(Debug, Clone)]
pub struct StreamBankSpec {
    pub temporal: Vec<GaborFilterSpec>,
    pub spectral: Vec<GaborFilterSpec>,
    pub joint: Vec<GaborFilterSpec>,
}

impl StreamBankSpec {
    pub fn stream_count(&self) -> usize {
        self.temporal.len() + self.spectral.len() + self.joint.len()
    }

    /// Default 28-stream bank: 16 temporal divisions with rates log-spaced
    /// over [2, 16] Hz, 8 spectral divisions log-spaced over
    /// [0.06, 0.42] cycles/channel, and 4 joint divisions crossing two
    /// temporal with two spectral rates. The exact division is configurable.
    pub fn default_bank() -> Self {
        let temporal: Vec<GaborFilterSpec> = log_space(2.0, 16.0, 16)
            .into_iter()
            .map(|r| GaborFilterSpec {
                temporal_rate: r,
                spectral_rate: 0.0,
                temporal_extent: 21,
                spectral_extent: 1,
            })
            .collect();
        let spectral: Vec<GaborFilterSpec> = log_space(0.06, 0.42, 8)
            .into_iter()
            .map(|r| GaborFilterSpec {
                temporal_rate: 0.0,
                spectral_rate: r,
                temporal_extent: 1,
                spectral_extent: 9,
            })
            .collect();
        let mut joint = Vec::new();
        for &tr in &[3.0, 10.0] {
            for &sr in &[0.1, 0.3] {
                joint.push(GaborFilterSpec {
                    temporal_rate: tr,
                    spectral_rate: sr,
                    temporal_extent: 15,
                    spectral_extent: 7,
                });
            }
        }
        Self { temporal, spectral, joint }
    }

    pub fn all_filters(&self) -> Vec<GaborFilterSpec> {
        self.temporal
            .iter()
            .chain(self.spectral.iter())
            .chain(self.joint.iter())
            .copied()
            .collect()
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n as f64 - 1.0)).exp())
        .collect()
}

/// One feature stream per filter, computed independently (map step). Output
/// order follows the bank order and does not depend on the worker count.
pub fn build_stream_set(logmel: &FeatureMatrix, bank: &StreamBankSpec) -> Result<Vec<FeatureMatrix>> {
    let filters = bank.all_filters();
    filters
        .par_iter()
        .map(|spec| apply_gabor_stream(logmel, spec))
        .collect()
}
