//! Rational-rate polyphase resampling with a Kaiser-windowed sinc filter.
//!
//! Mirrors the classic `resample(x, p, q)` behaviour: the filter has
//! `2·10·max(p, q) + 1` taps (10 zero crossings per side), Kaiser shape
//! parameter 5, cutoff at `1/(2·max(p, q))` of the upsampled rate and gain
//! `p`. The output is delay-compensated and has `ceil(len·p/q)` samples.

/// Zero crossings of the sinc on each side of the centre tap.
pub const HALF_CROSSINGS: usize = 10;
pub const KAISER_BETA: f64 = 5.0;
pub const TARGET_RATE: usize = 100;
/// Lags 0..=1 s at 100 Hz.
pub const RESAMPLED_LAGS: usize = TARGET_RATE + 1;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

pub fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let half = (len - 1) as f64 / 2.0;
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let t = (n as f64 - half) / half;
            bessel_i0(beta * (1.0 - t * t).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Anti-aliasing filter for up-by-`p`, down-by-`q` (already reduced).
pub fn design_filter(p: usize, q: usize) -> Vec<f64> {
    let pqmax = p.max(q);
    let cutoff = 1.0 / pqmax as f64; // relative to Nyquist of the upsampled rate
    let len = 2 * HALF_CROSSINGS * pqmax + 1;
    let centre = (len - 1) as f64 / 2.0;
    let window = kaiser(len, KAISER_BETA);
    (0..len)
        .map(|n| {
            let m = n as f64 - centre;
            let ideal = if m == 0.0 {
                cutoff
            } else {
                (std::f64::consts::PI * cutoff * m).sin() / (std::f64::consts::PI * m)
            };
            p as f64 * ideal * window[n]
        })
        .collect()
}

/// Resamples `x` by the rational factor `p/q`.
pub fn resample_rational(x: &[f64], p: usize, q: usize) -> Vec<f64> {
    assert!(p > 0 && q > 0, "resampling factors must be positive");
    if x.is_empty() {
        return Vec::new();
    }
    let g = gcd(p, q);
    let (p, q) = (p / g, q / g);
    if p == 1 && q == 1 {
        return x.to_vec();
    }
    let mut h = design_filter(p, q);
    let lx = x.len();
    let half = (h.len() - 1) / 2;

    // Delay the filter so that decimation lands on its centre tap.
    let nz = q - half % q;
    let mut padded = vec![0.0; nz];
    padded.append(&mut h);
    let mut h = padded;
    let half = half + nz;
    let delay = half / q;

    let out_len = (lx * p).div_ceil(q);
    while ((lx - 1) * p + h.len()).div_ceil(q) - delay < out_len {
        h.push(0.0);
    }

    // Output sample m of upfirdn is sum_k h[m·q − k·p] · x[k].
    let hl = h.len();
    (delay..delay + out_len)
        .map(|m| {
            let pos = m * q;
            let k_min = if pos + 1 > hl {
                (pos + 1 - hl).div_ceil(p)
            } else {
                0
            };
            let k_max = (pos / p).min(lx - 1);
            (k_min..=k_max).map(|k| h[pos - k * p] * x[k]).sum()
        })
        .collect()
}

/// Resamples a lag series at `srate` to 100 Hz and returns exactly
/// [`RESAMPLED_LAGS`] values (lag 0 through 1 s).
pub fn resample_100(series: &[f64], srate: usize) -> Vec<f64> {
    let mut out = if srate == TARGET_RATE {
        series.to_vec()
    } else {
        resample_rational(series, TARGET_RATE, srate)
    };
    out.resize(RESAMPLED_LAGS, 0.0);
    out
}
