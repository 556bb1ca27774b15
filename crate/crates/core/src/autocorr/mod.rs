//! Autocorrelation feature: 100 lags from 10 ms to 1 s.
//!
//! All three variants share one FFT autocovariance core and differ only in
//! which records are averaged:
//!
//! * `Fftw` — every trial of an epoched dataset, whole.
//! * `Direct` — a single continuous record, whole.
//! * `Welch` — a continuous record cut into 3 s windows with 50% overlap.
//!
//! Lags `0..=srate` (one second) are normalized by lag 0, resampled to
//! 100 Hz and lag 0 is dropped.

mod resample;

pub use resample::{
    design_filter, kaiser, resample_100, resample_rational, HALF_CROSSINGS, KAISER_BETA,
    RESAMPLED_LAGS, TARGET_RATE,
};

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::dsp::{half_overlap_starts, FftPair, Signal};

pub const ACF_LEN: usize = 100;
/// Window length of the Welch variant, in seconds.
pub const WELCH_WINDOW_SECONDS: usize = 3;
/// The Welch variant is used when a continuous record holds more than this
/// many windows.
pub const WELCH_MIN_WINDOWS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcfError {
    #[error("activation has zero variance")]
    ZeroVariance,
    #[error("non-finite samples in activation")]
    NonFinite,
    #[error("variant needs a single continuous record, got {0} trials")]
    NotContinuous(usize),
    #[error("sampling rate must be positive")]
    ZeroRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AcfVariant {
    Fftw,
    Welch,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfFeature {
    pub values: Vec<f64>,
    pub variant: AcfVariant,
}

/// Picks the variant for a dataset shape.
///
/// Epoched data (`trials > 1`) always uses `Fftw`. For continuous data the
/// default rule counts whole 3 s windows and uses `Welch` when there are more
/// than five. With `duration_rule` the record length in seconds is compared
/// against five instead, which is what the MATLAB feature extractor does.
pub fn acf_dispatch(pnts: usize, trials: usize, srate: usize, duration_rule: bool) -> AcfVariant {
    if trials > 1 {
        return AcfVariant::Fftw;
    }
    let welch = if duration_rule {
        pnts as f64 / srate as f64 > WELCH_MIN_WINDOWS as f64
    } else {
        pnts / (WELCH_WINDOW_SECONDS * srate) > WELCH_MIN_WINDOWS
    };
    if welch {
        AcfVariant::Welch
    } else {
        AcfVariant::Direct
    }
}

/// Computes the feature with the variant [`acf_dispatch`] selects.
pub fn acf_feature(
    sig: Signal<'_>,
    srate: usize,
    duration_rule: bool,
) -> Result<AcfFeature, AcfError> {
    match acf_dispatch(sig.pnts, sig.trials, srate, duration_rule) {
        AcfVariant::Fftw => acf_fftw(sig, srate),
        AcfVariant::Welch => acf_welch(sig, srate),
        AcfVariant::Direct => acf_direct(sig, srate),
    }
}

/// Sum over records of the linear (non-circular) autocovariance, lags
/// `0..=max_lag`. Lags at or beyond the record length are zero.
pub fn autocovariance<'a, I>(records: I, len: usize, max_lag: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = vec![0.0; max_lag + 1];
    if len == 0 {
        return out;
    }
    let nfft = (2 * len - 1).next_power_of_two();
    let fft = FftPair::new(nfft);
    let mut spectrum = vec![0.0; nfft];
    let mut buf: Vec<Complex64> = Vec::with_capacity(nfft);
    for record in records {
        debug_assert_eq!(record.len(), len);
        fft.forward_real(record, &mut buf);
        for (s, x) in spectrum.iter_mut().zip(&buf) {
            *s += x.norm_sqr();
        }
    }
    buf.clear();
    buf.extend(spectrum.iter().map(|&s| Complex64::new(s, 0.0)));
    fft.inverse.process(&mut buf);
    let kept = (max_lag + 1).min(len);
    for (o, x) in out.iter_mut().zip(&buf[..kept]) {
        *o = x.re / nfft as f64;
    }
    out
}

/// Lag-0-normalized autocorrelation at the native rate, lags `0..=srate`.
pub fn native_acf<'a, I>(records: I, len: usize, srate: usize) -> Result<Vec<f64>, AcfError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut lags = autocovariance(records, len, srate);
    let zero = lags[0];
    if !zero.is_finite() {
        return Err(AcfError::NonFinite);
    }
    if zero <= 0.0 {
        return Err(AcfError::ZeroVariance);
    }
    lags.iter_mut().for_each(|v| *v /= zero);
    Ok(lags)
}

fn finish(native: Vec<f64>, srate: usize, variant: AcfVariant) -> AcfFeature {
    let mut values = resample_100(&native, srate);
    values.remove(0);
    AcfFeature { values, variant }
}

fn check(sig: &Signal<'_>, srate: usize) -> Result<(), AcfError> {
    if srate == 0 {
        return Err(AcfError::ZeroRate);
    }
    if sig.data.iter().any(|v| !v.is_finite()) {
        return Err(AcfError::NonFinite);
    }
    Ok(())
}

/// Averages autocovariance over whole trials.
pub fn acf_fftw(sig: Signal<'_>, srate: usize) -> Result<AcfFeature, AcfError> {
    check(&sig, srate)?;
    let native = native_acf(sig.trials(), sig.pnts, srate)?;
    Ok(finish(native, srate, AcfVariant::Fftw))
}

/// Autocovariance of one continuous record.
pub fn acf_direct(sig: Signal<'_>, srate: usize) -> Result<AcfFeature, AcfError> {
    check(&sig, srate)?;
    if sig.trials != 1 {
        return Err(AcfError::NotContinuous(sig.trials));
    }
    let native = native_acf([sig.data], sig.pnts, srate)?;
    Ok(finish(native, srate, AcfVariant::Direct))
}

/// Averages autocovariance over 3 s windows with 50% overlap.
pub fn acf_welch(sig: Signal<'_>, srate: usize) -> Result<AcfFeature, AcfError> {
    check(&sig, srate)?;
    if sig.trials != 1 {
        return Err(AcfError::NotContinuous(sig.trials));
    }
    let len = sig.pnts.min(WELCH_WINDOW_SECONDS * srate);
    let windows = half_overlap_starts(sig.pnts, len)
        .into_iter()
        .map(|s| &sig.data[s..s + len]);
    let native = native_acf(windows, len, srate)?;
    Ok(finish(native, srate, AcfVariant::Welch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_table() {
        assert_eq!(acf_dispatch(100, 80, 128, false), AcfVariant::Fftw);
        assert_eq!(acf_dispatch(30 * 250, 1, 250, false), AcfVariant::Welch);
        assert_eq!(acf_dispatch(12 * 250, 1, 250, false), AcfVariant::Direct);
        // 15 s holds exactly five windows: not more than five.
        assert_eq!(acf_dispatch(15 * 100, 1, 100, false), AcfVariant::Direct);
        assert_eq!(acf_dispatch(18 * 100, 1, 100, false), AcfVariant::Welch);
        // Duration rule flips the 5..18 s band.
        assert_eq!(acf_dispatch(12 * 100, 1, 100, true), AcfVariant::Welch);
        assert_eq!(acf_dispatch(5 * 100, 1, 100, true), AcfVariant::Direct);
    }

    #[test]
    fn lag_zero_is_exactly_one() {
        let x: Vec<f64> = (0..300)
            .map(|i| (i as f64 * 0.3).sin() + 0.1 * i as f64)
            .collect();
        let native = native_acf([x.as_slice()], x.len(), 100).unwrap();
        assert_eq!(native[0], 1.0);
        assert_eq!(native.len(), 101);
    }

    #[test]
    fn short_record_zero_fills() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let native = native_acf([&x[..]], 4, 10).unwrap();
        assert!(native[4..].iter().all(|&v| v == 0.0));
        assert!(native[3] != 0.0);
    }

    #[test]
    fn zero_variance() {
        let x = vec![0.0; 200];
        assert_eq!(
            acf_direct(Signal::continuous(&x), 100),
            Err(AcfError::ZeroVariance)
        );
    }

    #[test]
    fn record_of_one_second_plus_one() {
        let x: Vec<f64> = (0..129).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let native = native_acf([x.as_slice()], 129, 128).unwrap();
        assert_eq!(native.len(), 129);
        assert!(native[128] != 0.0);
        let f = acf_direct(Signal::continuous(&x), 128).unwrap();
        assert_eq!(f.values.len(), ACF_LEN);
    }
}
