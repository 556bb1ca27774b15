//! Signal-processing helpers shared by the spectral and autocorrelation features.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// A component's time course: `trials` contiguous records of `pnts` samples.
#[derive(Debug, Clone, Copy)]
pub struct Signal<'a> {
    pub data: &'a [f64],
    pub pnts: usize,
    pub trials: usize,
}

impl<'a> Signal<'a> {
    pub fn new(data: &'a [f64], pnts: usize, trials: usize) -> Self {
        assert_eq!(
            data.len(),
            pnts * trials,
            "signal length must equal pnts * trials"
        );
        Signal { data, pnts, trials }
    }

    pub fn continuous(data: &'a [f64]) -> Self {
        Signal::new(data, data.len(), 1)
    }

    pub fn trial(&self, t: usize) -> &'a [f64] {
        &self.data[t * self.pnts..(t + 1) * self.pnts]
    }

    pub fn trials(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..self.trials).map(move |t| self.trial(t))
    }
}

/// Start offsets of `len`-sample windows with 50% overlap that fit within
/// the largest multiple of `len` not exceeding `pnts`. Starts are
/// `ceil(k·len/2)`, so odd lengths alternate between floor and ceiling hops.
pub fn half_overlap_starts(pnts: usize, len: usize) -> Vec<usize> {
    if len == 0 || len > pnts {
        return Vec::new();
    }
    let cutoff = (pnts / len) * len;
    let last = cutoff - len;
    (0..)
        .map(|k: usize| (k * len).div_ceil(2))
        .take_while(|&s| s <= last)
        .collect()
}

/// Symmetric Hamming window `0.54 − 0.46·cos(2πi/(n−1))`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Median of a slice; the mean of the middle pair for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) struct FftPair {
    pub len: usize,
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    /// Zero-padded forward transform of a real sequence.
    pub fn forward_real(&self, x: &[f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(buf);
    }
}
