//! Seeded synthetic montages, datasets and weights.

use std::f64::consts::PI;

use iclabel_core::linalg::Matrix;
use iclabel_core::network::{LayerParams, NetworkWeights, ARCHITECTURE};
use iclabel_core::{ChannelLoc, EegDataset, IcaDecomposition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matwrite::MatWriter;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one draw per call keeps streams simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `n` electrodes with distinct positions inside radius `max_radius`.
pub fn montage(rng: &mut impl Rng, n: usize, max_radius: f64) -> Vec<ChannelLoc> {
    let mut out: Vec<ChannelLoc> = Vec::with_capacity(n);
    while out.len() < n {
        let theta: f64 = rng.gen_range(-180.0..180.0);
        let radius = max_radius * rng.gen::<f64>().sqrt();
        let (s, c) = theta.to_radians().sin_cos();
        let close = out.iter().any(|l| {
            let (s2, c2) = l.theta.to_radians().sin_cos();
            (radius * s - l.radius * s2).hypot(radius * c - l.radius * c2) < 0.02
        });
        if !close {
            out.push(ChannelLoc::positioned(
                format!("E{}", out.len() + 1),
                theta,
                radius,
            ));
        }
    }
    out
}

/// Square ICA over all channels with `winv = randn + 3·I`, activations made
/// of per-component sinusoids plus noise.
pub fn dataset(seed: u64, n: usize, srate: usize, pnts: usize, trials: usize) -> EegDataset {
    let mut r = rng(seed);
    let locs = montage(&mut r, n, 0.55);
    let mut entries = vec![0.0; n * n];
    for (k, e) in entries.iter_mut().enumerate() {
        *e = normal(&mut r) * 0.5 + if k % n == k / n { 3.0 } else { 0.0 };
    }
    let winv = Matrix::from_col_major(n, n, entries).unwrap();
    let weights = winv.inverse().unwrap();
    let samples = pnts * trials;
    let mut act = vec![0.0; n * samples];
    for c in 0..n {
        let f = 2.0 + 5.3 * c as f64;
        for s in 0..samples {
            let t = s as f64 / srate as f64;
            act[c * samples + s] = (2.0 * PI * f * t + c as f64).sin() + 0.4 * normal(&mut r);
        }
    }
    let mut data = vec![0.0; n * samples];
    for s in 0..samples {
        for ch in 0..n {
            data[ch + n * s] = (0..n).map(|c| winv[(ch, c)] * act[c * samples + s]).sum();
        }
    }
    let ica = IcaDecomposition {
        weights,
        sphere: Matrix::identity(n),
        winv,
        chan_indices: (0..n).collect(),
    };
    EegDataset::new(srate as f64, pnts, trials, data, locs, ica).unwrap()
}

/// Full-size weights with entries uniform in ±sqrt(3/fan_in).
pub fn random_weights(seed: u64) -> NetworkWeights {
    let mut r = rng(seed);
    let layers = ARCHITECTURE
        .iter()
        .map(|spec| {
            let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
            let a = (3.0 / fan_in as f64).sqrt();
            LayerParams {
                weight: (0..spec.weight_len()).map(|_| r.gen_range(-a..a)).collect(),
                bias: (0..spec.out_channels)
                    .map(|_| r.gen_range(-0.1..0.1))
                    .collect(),
            }
        })
        .collect();
    NetworkWeights::new(layers).unwrap()
}

/// Writes `w` in the `<layer>_weight` / `<layer>_bias` MAT layout.
pub fn weights_mat(w: &NetworkWeights) -> MatWriter {
    let mut m = MatWriter::new();
    for (spec, p) in w.layers() {
        m.double_row_major(
            &format!("{}_weight", spec.name),
            &spec.weight_dims(),
            &p.weight,
        );
        m.double(
            &format!("{}_bias", spec.name),
            &[spec.out_channels, 1],
            &p.bias,
        );
    }
    m
}
