//! Slow, direct reimplementations used as independent references. None of
//! these call into the engine's numerical code.

use std::f64::consts::PI;

/// Solves `a·x = b` by Gauss-Jordan elimination with full pivoting.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, -1.0);
        for r in k..n {
            for c in k..n {
                if a[r][c].abs() > best {
                    best = a[r][c].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        assert!(best > 0.0, "oracle system is singular");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_of.swap(k, pc);
        let p = a[k][k];
        for c in 0..n {
            a[k][c] /= p;
        }
        b[k] /= p;
        for r in 0..n {
            if r != k && a[r][k] != 0.0 {
                let f = a[r][k];
                for c in 0..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_of[k]] = b[k];
    }
    x
}

fn biharmonic(r: f64) -> f64 {
    if r > 0.0 {
        r * r * r.ln() - r * r
    } else {
        0.0
    }
}

/// Biharmonic spline through `(sites, values)` evaluated on the 32×32 head
/// grid spanning [-0.5, 0.5] on both axes; rows follow y, columns follow x,
/// cells outside radius 0.5 are zero.
pub fn spline_grid(sites: &[[f64; 2]], values: &[f64]) -> Vec<f64> {
    let n = sites.len();
    let dist = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| biharmonic(dist(sites[i], sites[j])))
                .collect()
        })
        .collect();
    let w = gauss_jordan(a, values.to_vec());
    let coord = |i: usize| -0.5 + i as f64 / 31.0;
    let mut grid = vec![0.0; 1024];
    for row in 0..32 {
        for col in 0..32 {
            let q = [coord(col), coord(row)];
            if (q[0] * q[0] + q[1] * q[1]).sqrt() <= 0.5 {
                grid[row * 32 + col] = (0..n).map(|k| w[k] * biharmonic(dist(q, sites[k]))).sum();
            }
        }
    }
    grid
}

/// Periodogram bin `k` of `x` by direct summation.
pub fn dft_power(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, &v) in x.iter().enumerate() {
        let ang = -2.0 * PI * k as f64 * t as f64 / n;
        re += v * ang.cos();
        im += v * ang.sin();
    }
    re * re + im * im
}

/// Median-of-periodograms log spectrum, bins 1..=min(srate/2, 100), padded
/// to 100 by repeating the last bin. `segments` lists (trial, start) pairs
/// to use; `None` uses every half-overlapping segment in order.
pub fn psd_direct(
    x: &[f64],
    pnts: usize,
    trials: usize,
    srate: usize,
    segments: Option<&[(usize, usize)]>,
) -> Vec<f64> {
    let n = pnts.min(srate);
    let nfreqs = (srate / 2).min(100);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos())
        .collect();
    let wsum: f64 = window.iter().map(|w| w * w).sum();
    let all: Vec<(usize, usize)>;
    let segs = match segments {
        Some(s) => s,
        None => {
            // Starts ceil(k·n/2) while the window ends within floor(pnts/n)·n.
            let limit = (pnts / n) * n;
            let mut starts = Vec::new();
            let mut k = 0;
            loop {
                let s = ((k as f64) * n as f64 / 2.0).ceil() as usize;
                if s + n > limit {
                    break;
                }
                starts.push(s);
                k += 1;
            }
            all = (0..trials)
                .flat_map(|t| starts.iter().map(move |&s| (t, s)))
                .collect();
            &all
        }
    };
    let mut out = Vec::with_capacity(100);
    for bin in 1..=nfreqs {
        let mut p: Vec<f64> = segs
            .iter()
            .map(|&(t, s)| {
                let seg: Vec<f64> = (0..n).map(|i| x[t * pnts + s + i] * window[i]).collect();
                let mut v = 2.0 * dft_power(&seg, bin) / (srate as f64 * wsum);
                if bin == nfreqs && nfreqs == srate / 2 {
                    v /= 2.0;
                }
                v
            })
            .collect();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = p.len();
        let med = if m % 2 == 1 {
            p[m / 2]
        } else {
            (p[m / 2 - 1] + p[m / 2]) / 2.0
        };
        out.push(20.0 * med.log10());
    }
    let last = *out.last().unwrap();
    while out.len() < 100 {
        out.push(last);
    }
    out
}

/// Normalized autocovariance summed over records, lags `0..=max_lag`, by
/// direct summation. Lags beyond the record are zero.
pub fn acf_direct_sum(records: &[&[f64]], max_lag: usize) -> Vec<f64> {
    let mut r = vec![0.0; max_lag + 1];
    for rec in records {
        for (k, rk) in r.iter_mut().enumerate() {
            if k < rec.len() {
                *rk += (0..rec.len() - k).map(|t| rec[t] * rec[t + k]).sum::<f64>();
            }
        }
    }
    let r0 = r[0];
    r.iter().map(|v| v / r0).collect()
}

/// Convolution by nested loops; `input` is `[c][y][x]`, `weight` is
/// `[o][c][ky][kx]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_loops(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
    (kh, kw): (usize, usize),
    stride: usize,
    (ph, pw): (usize, usize),
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * ph - kh) / stride + 1;
    let ow = (w + 2 * pw - kw) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as i64 - ph as i64;
                            let ix = (ox * stride + kx) as i64 - pw as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            acc += weight[((o * c_in + c) * kh + ky) * kw + kx]
                                * input[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

fn lrelu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x *= 0.2;
        }
    }
}

/// Row-major kernels and biases for the ten layers, in the order
/// Topo1-3, PSD1-3, ACF1-3, Discr.
pub struct OracleNet<'a> {
    pub kernels: Vec<&'a [f64]>,
    pub biases: Vec<&'a [f64]>,
}

impl OracleNet<'_> {
    pub fn logits(&self, topo: &[f64], psd: &[f64], acf: &[f64]) -> [f64; 7] {
        let chans = [128, 256, 512];
        let mut t = topo.to_vec();
        let (mut c, mut side) = (1, 32);
        for (l, &co) in chans.iter().enumerate() {
            let (o, oh, _) = conv_loops(
                &t,
                (c, side, side),
                self.kernels[l],
                self.biases[l],
                co,
                (4, 4),
                2,
                (1, 1),
            );
            t = o;
            lrelu(&mut t);
            c = co;
            side = oh;
        }
        assert_eq!(side, 4);
        let line = |x: &[f64], first: usize| -> Vec<f64> {
            let mut v = x.to_vec();
            let mut c = 1;
            for (l, co) in [128, 256, 1].into_iter().enumerate() {
                let (o, _, _) = conv_loops(
                    &v,
                    (c, 1, 100),
                    self.kernels[first + l],
                    self.biases[first + l],
                    co,
                    (1, 3),
                    1,
                    (0, 1),
                );
                v = o;
                lrelu(&mut v);
                c = co;
            }
            v
        };
        let p = line(psd, 3);
        let a = line(acf, 6);
        let mut cat = t;
        for v in p.iter().chain(&a) {
            cat.extend(std::iter::repeat_n(*v, 16));
        }
        assert_eq!(cat.len(), 712 * 16);
        let (o, _, _) = conv_loops(
            &cat,
            (712, 4, 4),
            self.kernels[9],
            self.biases[9],
            7,
            (4, 4),
            1,
            (0, 0),
        );
        o.try_into().unwrap()
    }

    pub fn probabilities(&self, topo: &[f64], psd: &[f64], acf: &[f64]) -> [f64; 7] {
        softmax(self.logits(topo, psd, acf))
    }

    pub fn augmented(&self, topo: &[f64], psd: &[f64], acf: &[f64]) -> [f64; 7] {
        let mut mirrored = vec![0.0; 1024];
        for r in 0..32 {
            for c in 0..32 {
                mirrored[r * 32 + c] = topo[r * 32 + 31 - c];
            }
        }
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let mut acc = [0.0; 7];
        for v in [topo.to_vec(), neg(topo), mirrored.clone(), neg(&mirrored)] {
            let p = self.probabilities(&v, psd, acf);
            for k in 0..7 {
                acc[k] += p[k] / 4.0;
            }
        }
        acc
    }
}

pub fn softmax(l: [f64; 7]) -> [f64; 7] {
    let m = l.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    std::array::from_fn(|k| e[k] / s)
}
