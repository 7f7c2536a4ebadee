//! Log-domain numerics.

/// log(exp(a) + exp(b)) without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Streaming log-sum-exp accumulator. Order of pushes is fixed by the caller,
/// so results are reproducible.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// Opt-in quantized lookup table for the log-add correction term
/// ln(1 + exp(-d)), d >= 0. The exact path stays the default everywhere so
/// determinism contracts remain bitwise; this trades a bounded quantization
/// error for avoiding repeated exp/ln calls.
pub struct LogAddTable {
    step: f64,
    inv_step: f64,
    table: Vec<f64>,
}

impl LogAddTable {
    /// `step` is the quantization width of the difference d; the table spans
    /// d in [0, 30] (the correction is below 1e-13 beyond that).
    pub fn new(step: f64) -> Self {
        assert!(step > 0.0);
        let n = (30.0 / step).ceil() as usize + 2;
        let table = (0..n).map(|i| ((-(i as f64) * step).exp()).ln_1p()).collect();
        Self { step, inv_step: 1.0 / step, table }
    }

    #[inline]
    pub fn log_add(&self, a: f64, b: f64) -> f64 {
        if a == f64::NEG_INFINITY {
            return b;
        }
        if b == f64::NEG_INFINITY {
            return a;
        }
        let (hi, d) = if a > b { (a, a - b) } else { (b, b - a) };
        let idx = (d * self.inv_step).round() as usize;
        if idx >= self.table.len() {
            hi
        } else {
            hi + self.table[idx]
        }
    }

    /// Worst-case absolute error: the correction has |slope| <= 0.5, so a
    /// half-step quantization of d costs at most step/4.
    pub fn max_error(&self) -> f64 {
        self.step * 0.25
    }
}
