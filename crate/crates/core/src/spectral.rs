//! Log-power spectral density feature.
//!
//! Each component is cut into Hamming-tapered segments of
//! `n = min(pnts, srate)` samples hopping by `n/2`, segments from every trial
//! are pooled, and the per-bin median periodogram is converted to decibels.
//! Bins 1..=nfreqs (1 Hz spacing when `n = srate`) are kept, where
//! `nfreqs = min(floor(srate/2), 100)`, then padded to 100 entries by
//! repeating the last bin.

use rand_mt::Mt;
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::dsp::{half_overlap_starts, hamming, median, FftPair, Signal};

pub const PSD_LEN: usize = 100;
/// Multiplier applied to `log10(power)`.
pub const DB_SCALE: f64 = 20.0;
pub const SUBSET_SEED: u32 = 435_656;
pub const SUBSET_FRACTION: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("record too short for the spectrum: {0}")]
    TooShort(String),
    #[error("sampling rate {0} Hz is below 2 Hz")]
    RateTooLow(usize),
    #[error("signal has zero power in frequency bin {bin}")]
    DegenerateSignal { bin: usize },
    #[error("non-finite samples in activation")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdFeature {
    pub values: Vec<f64>,
    pub nfreqs: usize,
}

/// Segment layout and the retained subset, shared by every component of a
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub seg_len: usize,
    pub starts: Vec<usize>,
    pub trials: usize,
    /// Retained segment indices; segment `j` is start `j % starts.len()` of
    /// trial `j / starts.len()`.
    pub selected: Vec<usize>,
}

impl SegmentPlan {
    /// With `reference_subset`, keeps `ceil(0.95 · n_seg)` segments chosen by
    /// a fixed-seed Mersenne-Twister permutation; otherwise keeps them all.
    pub fn new(
        pnts: usize,
        srate: usize,
        trials: usize,
        reference_subset: bool,
    ) -> Result<Self, SpectralError> {
        if pnts < 4 {
            return Err(SpectralError::TooShort(format!(
                "{pnts} samples per trial, need at least 4"
            )));
        }
        if srate < 2 {
            return Err(SpectralError::RateTooLow(srate));
        }
        let seg_len = pnts.min(srate);
        let nfreqs = nfreqs(srate);
        if seg_len < nfreqs + 1 {
            return Err(SpectralError::TooShort(format!(
                "{seg_len}-sample segments cannot resolve {nfreqs} frequency bins"
            )));
        }
        let starts = half_overlap_starts(pnts, seg_len);
        let n_seg = starts.len() * trials;
        let selected = if reference_subset {
            let keep = (n_seg as f64 * SUBSET_FRACTION).ceil() as usize;
            let mut perm = random_permutation(n_seg, SUBSET_SEED);
            perm.truncate(keep);
            perm
        } else {
            (0..n_seg).collect()
        };
        Ok(SegmentPlan {
            seg_len,
            starts,
            trials,
            selected,
        })
    }

    pub fn n_segments(&self) -> usize {
        self.starts.len() * self.trials
    }
}

pub fn nfreqs(srate: usize) -> usize {
    (srate / 2).min(PSD_LEN)
}

/// Uniform `[0, 1)` doubles from MT19937 using the 53-bit construction
/// shared by MATLAB and NumPy.
pub(crate) fn mt_uniforms(seed: u32, n: usize) -> Vec<f64> {
    let mut mt = Mt::new(seed);
    (0..n)
        .map(|_| {
            let a = (mt.next_u32() >> 5) as f64;
            let b = (mt.next_u32() >> 6) as f64;
            (a * 67_108_864.0 + b) / 9_007_199_254_740_992.0
        })
        .collect()
}

/// Permutation given by the sort order of `n` consecutive uniform draws.
pub fn random_permutation(n: usize, seed: u32) -> Vec<usize> {
    let draws = mt_uniforms(seed, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| draws[a].total_cmp(&draws[b]));
    idx
}

/// PSD feature for one component; the segment plan is derived from the signal.
pub fn psd_feature(
    sig: Signal<'_>,
    srate: usize,
    reference_subset: bool,
) -> Result<PsdFeature, SpectralError> {
    let plan = SegmentPlan::new(sig.pnts, srate, sig.trials, reference_subset)?;
    psd_with_plan(sig, srate, &plan)
}

pub fn psd_with_plan(
    sig: Signal<'_>,
    srate: usize,
    plan: &SegmentPlan,
) -> Result<PsdFeature, SpectralError> {
    if sig.data.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let n = plan.seg_len;
    let nfreqs = nfreqs(srate);
    let window = hamming(n);
    let scale = 2.0 / (srate as f64 * window.iter().map(|w| w * w).sum::<f64>());
    let fft = FftPair::new(n);

    // power[bin][segment]
    let mut power = vec![Vec::with_capacity(plan.selected.len()); nfreqs];
    let mut buf: Vec<Complex64> = Vec::with_capacity(n);
    let mut tapered = vec![0.0; n];
    let per_trial = plan.starts.len();
    for &seg in &plan.selected {
        let record = sig.trial(seg / per_trial);
        let start = plan.starts[seg % per_trial];
        for ((t, &x), &w) in tapered
            .iter_mut()
            .zip(&record[start..start + n])
            .zip(&window)
        {
            *t = x * w;
        }
        fft.forward_real(&tapered, &mut buf);
        for (bin, p) in power.iter_mut().enumerate() {
            p.push(buf[bin + 1].norm_sqr() * scale);
        }
    }
    if nfreqs == srate / 2 {
        power[nfreqs - 1].iter_mut().for_each(|p| *p /= 2.0);
    }

    let mut values = Vec::with_capacity(PSD_LEN);
    for (bin, p) in power.iter_mut().enumerate() {
        let m = median(p);
        if m <= 0.0 {
            return Err(SpectralError::DegenerateSignal { bin: bin + 1 });
        }
        values.push(DB_SCALE * m.log10());
    }
    let last = values[nfreqs - 1];
    values.resize(PSD_LEN, last);
    Ok(PsdFeature { values, nfreqs })
}

/// Replaces a notch-filtered 50 Hz or 60 Hz bin by the mean of its
/// neighbours when both neighbours exceed it by more than 5 dB.
pub fn undo_notch(psd: &mut PsdFeature) {
    for line in [50usize, 60] {
        let (lo, mid, hi) = (line - 2, line - 1, line);
        let v = &mut psd.values;
        if v[lo] - v[mid] > 5.0 && v[hi] - v[mid] > 5.0 {
            v[mid] = 0.5 * (v[lo] + v[hi]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mt_matches_reference_stream() {
        // numpy.random.RandomState(435656).random_sample(4)
        let want = [0.08925476, 0.76961223, 0.90462118, 0.52436484];
        for (got, want) in mt_uniforms(SUBSET_SEED, 4).iter().zip(want) {
            assert!((got - want).abs() < 5e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = random_permutation(37, SUBSET_SEED);
        p.sort_unstable();
        assert_eq!(p, (0..37).collect::<Vec<_>>());
        // Sort order of the four draws above.
        assert_eq!(random_permutation(4, SUBSET_SEED), vec![0, 3, 1, 2]);
    }

    #[test]
    fn plan_subset_size() {
        let plan = SegmentPlan::new(256, 128, 10, true).unwrap();
        assert_eq!(plan.n_segments(), 30);
        assert_eq!(plan.selected.len(), 29);
        let plan = SegmentPlan::new(256, 128, 10, false).unwrap();
        assert_eq!(plan.selected.len(), 30);
    }

    #[test]
    fn padding_repeats_last_bin() {
        let x: Vec<f64> = (0..1280)
            .map(|i| ((i * 7919) % 101) as f64 - 50.0)
            .collect();
        let psd = psd_feature(Signal::continuous(&x), 128, false).unwrap();
        assert_eq!(psd.nfreqs, 64);
        assert_eq!(psd.values.len(), 100);
        assert!(psd.values[64..].iter().all(|&v| v == psd.values[63]));
    }

    #[test]
    fn errors() {
        let z = vec![0.0; 512];
        assert!(matches!(
            psd_feature(Signal::continuous(&z), 128, false),
            Err(SpectralError::DegenerateSignal { .. })
        ));
        assert!(matches!(
            psd_feature(Signal::continuous(&[1.0, 2.0, 3.0]), 128, false),
            Err(SpectralError::TooShort(_))
        ));
    }

    #[test]
    fn notch_is_filled() {
        let mut psd = PsdFeature {
            values: vec![0.0; 100],
            nfreqs: 100,
        };
        psd.values[49] = -20.0;
        psd.values[59] = -3.0;
        undo_notch(&mut psd);
        assert_eq!(psd.values[49], 0.0);
        assert_eq!(psd.values[59], -3.0);
    }
}
