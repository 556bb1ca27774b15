//! The ICLabel convolutional classifier.
//!
//! Three branches process the scalp map (32×32), the PSD (1×100) and the
//! autocorrelation (1×100). The PSD and ACF branch outputs are reshaped to
//! 100 channels, tiled to 4×4 and concatenated after the 512 topo channels.
//! A final 4×4 convolution yields 7 logits.
//!
//! Weights are read from a MAT file holding `<layer>_weight` with extents
//! `[out, in, kh, kw]` and `<layer>_bias` with `out` elements, for the layers
//! in [`ARCHITECTURE`].

pub mod conv;

use thiserror::Error;

use crate::matreader::MatFile;
use crate::spectral::PSD_LEN;
use crate::topomap::GRID_SIZE;
use conv::{conv2d, out_extent, ConvGeometry, Volume};

pub const N_CLASSES: usize = 7;
pub const LEAKY_SLOPE: f64 = 0.2;
/// Spatial extent of the topo branch output, onto which the PSD and ACF
/// vectors are tiled.
pub const TILE: usize = 4;
pub const CONCAT_CHANNELS: usize = 512 + 2 * PSD_LEN;

/// Output classes in the order the pretrained network emits them.
pub const CLASS_NAMES: [&str; N_CLASSES] = [
    "Brain",
    "Muscle",
    "Eye",
    "Heart",
    "Line Noise",
    "Channel Noise",
    "Other",
];

/// Native indices listed in the customary reporting order
/// (Brain, Eye, Muscle, Heart, Line Noise, Channel Noise, Other).
pub const REPORT_ORDER: [usize; N_CLASSES] = [0, 2, 1, 3, 4, 5, 6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("weights file has no variable `{0}`")]
    MissingLayer(String),
    #[error("`{name}` has extents {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("`{0}` contains non-finite values")]
    NonFinite(String),
    #[error("`{0}` is not a numeric array")]
    NotNumeric(String),
    #[error("invalid feature batch: {0}")]
    Batch(String),
    #[error("architecture check failed: {0}")]
    Architecture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Topo,
    Psd,
    Acf,
    Discr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: &'static str,
    pub branch: Branch,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub followed_by_lrelu: bool,
}

impl ConvSpec {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_dims().iter().product()
    }
}

const fn topo(name: &'static str, i: usize, o: usize) -> ConvSpec {
    ConvSpec {
        name,
        branch: Branch::Topo,
        in_channels: i,
        out_channels: o,
        kernel: (4, 4),
        stride: 2,
        padding: (1, 1),
        followed_by_lrelu: true,
    }
}

const fn line(name: &'static str, branch: Branch, i: usize, o: usize) -> ConvSpec {
    ConvSpec {
        name,
        branch,
        in_channels: i,
        out_channels: o,
        kernel: (1, 3),
        stride: 1,
        padding: (0, 1),
        followed_by_lrelu: true,
    }
}

pub const ARCHITECTURE: [ConvSpec; 10] = [
    topo("Topo1", 1, 128),
    topo("Topo2", 128, 256),
    topo("Topo3", 256, 512),
    line("PSD1", Branch::Psd, 1, 128),
    line("PSD2", Branch::Psd, 128, 256),
    line("PSD3", Branch::Psd, 256, 1),
    line("ACF1", Branch::Acf, 1, 128),
    line("ACF2", Branch::Acf, 128, 256),
    line("ACF3", Branch::Acf, 256, 1),
    ConvSpec {
        name: "Discr",
        branch: Branch::Discr,
        in_channels: CONCAT_CHANNELS,
        out_channels: N_CLASSES,
        kernel: (4, 4),
        stride: 1,
        padding: (0, 0),
        followed_by_lrelu: false,
    },
];

/// Output extents of each stage, derived from an architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeChain {
    /// Spatial side of the topo volume after each topo conv.
    pub topo_sides: Vec<usize>,
    /// Width after each PSD conv.
    pub psd_widths: Vec<usize>,
    pub acf_widths: Vec<usize>,
    pub concat_channels: usize,
    pub discr_out: (usize, usize),
}

/// Walks `arch` from the input extents and checks that the branches meet at
/// a `TILE × TILE` concat whose channel count feeds the discriminator.
pub fn shape_chain(arch: &[ConvSpec]) -> Result<ShapeChain, NetworkError> {
    let fail = |m: String| NetworkError::Architecture(m);
    let walk = |branch: Branch,
                h0: usize,
                w0: usize,
                c0: usize|
     -> Result<(Vec<(usize, usize)>, usize), NetworkError> {
        let (mut h, mut w, mut c) = (h0, w0, c0);
        let mut seen = Vec::new();
        for s in arch.iter().filter(|s| s.branch == branch) {
            if s.in_channels != c {
                return Err(fail(format!(
                    "{} expects {} input channels, receives {c}",
                    s.name, s.in_channels
                )));
            }
            h = out_extent(h, s.kernel.0, s.stride, s.padding.0)
                .ok_or_else(|| fail(format!("{} kernel does not fit", s.name)))?;
            w = out_extent(w, s.kernel.1, s.stride, s.padding.1)
                .ok_or_else(|| fail(format!("{} kernel does not fit", s.name)))?;
            c = s.out_channels;
            seen.push((h, w));
        }
        Ok((seen, c))
    };
    let (topo, topo_c) = walk(Branch::Topo, GRID_SIZE, GRID_SIZE, 1)?;
    let (psd, psd_c) = walk(Branch::Psd, 1, PSD_LEN, 1)?;
    let (acf, acf_c) = walk(Branch::Acf, 1, PSD_LEN, 1)?;
    if topo.last() != Some(&(TILE, TILE)) {
        return Err(fail(format!(
            "topo branch ends at {:?}, expected {TILE}x{TILE}",
            topo.last()
        )));
    }
    for (name, seen, c) in [("PSD", &psd, psd_c), ("ACF", &acf, acf_c)] {
        if seen.last() != Some(&(1, PSD_LEN)) || c != 1 {
            return Err(fail(format!(
                "{name} branch must end at 1 channel x 1 x {PSD_LEN}"
            )));
        }
    }
    let concat = topo_c + 2 * PSD_LEN;
    let discr: Vec<&ConvSpec> = arch.iter().filter(|s| s.branch == Branch::Discr).collect();
    let [d] = discr.as_slice() else {
        return Err(fail("expected exactly one discriminator layer".into()));
    };
    if d.in_channels != concat {
        return Err(fail(format!(
            "Discr expects {} channels, concat has {concat}",
            d.in_channels
        )));
    }
    let dh = out_extent(TILE, d.kernel.0, d.stride, d.padding.0);
    let dw = out_extent(TILE, d.kernel.1, d.stride, d.padding.1);
    if dh != Some(1) || dw != Some(1) || d.out_channels != N_CLASSES {
        return Err(fail(format!(
            "Discr must map {concat}x{TILE}x{TILE} to {N_CLASSES}x1x1"
        )));
    }
    Ok(ShapeChain {
        topo_sides: topo.iter().map(|&(h, _)| h).collect(),
        psd_widths: psd.iter().map(|&(_, w)| w).collect(),
        acf_widths: acf.iter().map(|&(_, w)| w).collect(),
        concat_channels: concat,
        discr_out: (1, 1),
    })
}

/// Kernel (row-major `[out][in][ky][kx]`) and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<LayerParams>,
}

fn strip_trailing_ones(dims: &[usize]) -> &[usize] {
    let mut end = dims.len();
    while end > 0 && dims[end - 1] == 1 {
        end -= 1;
    }
    &dims[..end]
}

/// Reorders a column-major `[o, i, kh, kw]` array to row-major.
fn kernel_to_row_major(col: &[f64], [o, i, kh, kw]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; col.len()];
    for x in 0..kw {
        for y in 0..kh {
            for c in 0..i {
                for n in 0..o {
                    out[((n * i + c) * kh + y) * kw + x] = col[n + o * (c + i * (y + kh * x))];
                }
            }
        }
    }
    out
}

impl NetworkWeights {
    /// Validates parameters given in [`ARCHITECTURE`] order.
    pub fn new(layers: Vec<LayerParams>) -> Result<Self, NetworkError> {
        shape_chain(&ARCHITECTURE)?;
        if layers.len() != ARCHITECTURE.len() {
            return Err(NetworkError::Architecture(format!(
                "{} parameter sets for {} layers",
                layers.len(),
                ARCHITECTURE.len()
            )));
        }
        for (spec, p) in ARCHITECTURE.iter().zip(&layers) {
            if p.weight.len() != spec.weight_len() {
                return Err(NetworkError::ShapeMismatch {
                    name: format!("{}_weight", spec.name),
                    expected: spec.weight_dims().to_vec(),
                    found: vec![p.weight.len()],
                });
            }
            if p.bias.len() != spec.out_channels {
                return Err(NetworkError::ShapeMismatch {
                    name: format!("{}_bias", spec.name),
                    expected: vec![spec.out_channels],
                    found: vec![p.bias.len()],
                });
            }
            if p.weight.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::NonFinite(format!("{}_weight", spec.name)));
            }
            if p.bias.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::NonFinite(format!("{}_bias", spec.name)));
            }
        }
        Ok(NetworkWeights { layers })
    }

    pub fn zeros() -> Self {
        NetworkWeights::from_fn(|_, _| 0.0)
    }

    /// Fills every parameter from `f(layer_index, flat_index)`; biases follow
    /// the kernel in the flat index space.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let layers = ARCHITECTURE
            .iter()
            .enumerate()
            .map(|(l, spec)| {
                let n = spec.weight_len();
                LayerParams {
                    weight: (0..n).map(|k| f(l, k)).collect(),
                    bias: (0..spec.out_channels).map(|k| f(l, n + k)).collect(),
                }
            })
            .collect();
        NetworkWeights { layers }
    }

    pub fn load(file: &MatFile) -> Result<Self, NetworkError> {
        let fetch = |name: String, expected: &[usize]| -> Result<Vec<f64>, NetworkError> {
            let value = file
                .get(&name)
                .ok_or_else(|| NetworkError::MissingLayer(name.clone()))?;
            let arr = value
                .as_numeric()
                .ok_or_else(|| NetworkError::NotNumeric(name.clone()))?;
            let ok = if expected.len() == 1 {
                arr.dims.iter().product::<usize>() == expected[0]
                    && arr.dims.iter().filter(|&&d| d != 1).count() <= 1
            } else {
                strip_trailing_ones(&arr.dims) == strip_trailing_ones(expected)
            };
            if !ok {
                return Err(NetworkError::ShapeMismatch {
                    name,
                    expected: expected.to_vec(),
                    found: arr.dims.clone(),
                });
            }
            Ok(arr.data.to_f64())
        };
        let mut layers = Vec::with_capacity(ARCHITECTURE.len());
        for spec in &ARCHITECTURE {
            let dims = spec.weight_dims();
            let weight = fetch(format!("{}_weight", spec.name), &dims)?;
            let bias = fetch(format!("{}_bias", spec.name), &[spec.out_channels])?;
            layers.push(LayerParams {
                weight: kernel_to_row_major(&weight, dims),
                bias,
            });
        }
        NetworkWeights::new(layers)
    }

    pub fn layer(&self, index: usize) -> &LayerParams {
        &self.layers[index]
    }

    pub fn layers(&self) -> impl Iterator<Item = (&ConvSpec, &LayerParams)> {
        ARCHITECTURE.iter().zip(&self.layers)
    }

    fn run_branch(&self, branch: Branch, mut v: Volume) -> Volume {
        for (spec, p) in self.layers().filter(|(s, _)| s.branch == branch) {
            v = conv2d(&v, &spec.geometry(), &p.weight, &p.bias);
            if spec.followed_by_lrelu {
                v.leaky_relu(LEAKY_SLOPE);
            }
        }
        v
    }

    fn discriminate(&self, topo: &Volume, psd: &Volume, acf: &Volume) -> [f64; N_CLASSES] {
        let cells = TILE * TILE;
        let mut data = Vec::with_capacity(CONCAT_CHANNELS * cells);
        data.extend_from_slice(&topo.data);
        for line in [psd, acf] {
            for &v in &line.data {
                data.extend(std::iter::repeat_n(v, cells));
            }
        }
        let input = Volume::new(CONCAT_CHANNELS, TILE, TILE, data);
        let (spec, p) = self
            .layers()
            .find(|(s, _)| s.branch == Branch::Discr)
            .unwrap();
        let out = conv2d(&input, &spec.geometry(), &p.weight, &p.bias);
        let mut logits = [0.0; N_CLASSES];
        logits.copy_from_slice(&out.data);
        logits
    }

    fn line_volumes(&self, batch: &FeatureBatch, i: usize) -> (Volume, Volume) {
        let psd = self.run_branch(
            Branch::Psd,
            Volume::new(1, 1, PSD_LEN, batch.psd(i).to_vec()),
        );
        let acf = self.run_branch(
            Branch::Acf,
            Volume::new(1, 1, PSD_LEN, batch.acf(i).to_vec()),
        );
        (psd, acf)
    }

    fn topo_volume(&self, grid: Vec<f64>) -> Volume {
        self.run_branch(Branch::Topo, Volume::new(1, GRID_SIZE, GRID_SIZE, grid))
    }

    /// Logits of item `i`.
    pub fn forward_one(&self, batch: &FeatureBatch, i: usize) -> [f64; N_CLASSES] {
        let (psd, acf) = self.line_volumes(batch, i);
        let topo = self.topo_volume(batch.topo(i).to_vec());
        self.discriminate(&topo, &psd, &acf)
    }

    pub fn forward(&self, batch: &FeatureBatch) -> Vec<[f64; N_CLASSES]> {
        (0..batch.len())
            .map(|i| self.forward_one(batch, i))
            .collect()
    }

    /// Probabilities of item `i` averaged over the sign-flipped and
    /// left-right mirrored scalp maps.
    pub fn infer_augmented_one(&self, batch: &FeatureBatch, i: usize) -> [f64; N_CLASSES] {
        let (psd, acf) = self.line_volumes(batch, i);
        let grid = batch.topo(i);
        let mirrored = mirror(grid);
        let variants = [
            grid.to_vec(),
            grid.iter().map(|v| -v).collect(),
            mirrored.clone(),
            mirrored.iter().map(|v| -v).collect(),
        ];
        let mut acc = [0.0; N_CLASSES];
        for v in variants {
            let p = softmax(&self.discriminate(&self.topo_volume(v), &psd, &acf));
            acc.iter_mut().zip(p).for_each(|(a, p)| *a += p);
        }
        let total: f64 = acc.iter().sum();
        acc.map(|a| a / total)
    }

    pub fn infer_augmented(&self, batch: &FeatureBatch) -> Probabilities {
        Probabilities {
            rows: (0..batch.len())
                .map(|i| self.infer_augmented_one(batch, i))
                .collect(),
        }
    }

    pub fn infer_plain(&self, batch: &FeatureBatch) -> Probabilities {
        softmax7(&self.forward(batch))
    }
}

/// Reverses the column (left-right) axis of a row-major grid.
pub fn mirror(grid: &[f64]) -> Vec<f64> {
    grid.chunks_exact(GRID_SIZE)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}

pub fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

pub fn softmax7(logits: &[[f64; N_CLASSES]]) -> Probabilities {
    Probabilities {
        rows: logits.iter().map(softmax).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    pub rows: Vec<[f64; N_CLASSES]>,
}

impl Probabilities {
    pub fn argmax(&self) -> Vec<usize> {
        self.rows.iter().map(argmax).collect()
    }
}

/// First index of the largest value.
pub fn argmax(row: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Network inputs for `n` components, each stored flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    n: usize,
    topo: Vec<f64>,
    psd: Vec<f64>,
    acf: Vec<f64>,
}

pub const TOPO_LEN: usize = GRID_SIZE * GRID_SIZE;
/// Largest accepted magnitude of the max-abs normalized topo and PSD rows.
pub const FEATURE_BOUND: f64 = 1.0 + 1e-6;
/// Largest accepted ACF magnitude. The resampler treats lags before 0 as
/// zero, so the first lags ring above 1 (about 10% when upsampling).
pub const ACF_BOUND: f64 = 1.25;

impl FeatureBatch {
    pub fn new(
        n: usize,
        topo: Vec<f64>,
        psd: Vec<f64>,
        acf: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        for (name, v, per, bound) in [
            ("topo", &topo, TOPO_LEN, FEATURE_BOUND),
            ("psd", &psd, PSD_LEN, FEATURE_BOUND),
            ("acf", &acf, PSD_LEN, ACF_BOUND),
        ] {
            if v.len() != n * per {
                return Err(NetworkError::Batch(format!(
                    "{name} has {} values, expected {n} x {per}",
                    v.len()
                )));
            }
            if let Some(k) = v.iter().position(|x| !x.is_finite() || x.abs() > bound) {
                return Err(NetworkError::Batch(format!(
                    "{name} value {} at item {} is not finite or exceeds {bound}",
                    v[k],
                    k / per
                )));
            }
        }
        Ok(FeatureBatch { n, topo, psd, acf })
    }

    pub fn empty() -> Self {
        FeatureBatch {
            n: 0,
            topo: Vec::new(),
            psd: Vec::new(),
            acf: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn topo(&self, i: usize) -> &[f64] {
        &self.topo[i * TOPO_LEN..(i + 1) * TOPO_LEN]
    }

    pub fn psd(&self, i: usize) -> &[f64] {
        &self.psd[i * PSD_LEN..(i + 1) * PSD_LEN]
    }

    pub fn acf(&self, i: usize) -> &[f64] {
        &self.acf[i * PSD_LEN..(i + 1) * PSD_LEN]
    }

    pub fn topo_all(&self) -> &[f64] {
        &self.topo
    }

    pub fn psd_all(&self) -> &[f64] {
        &self.psd
    }

    pub fn acf_all(&self) -> &[f64] {
        &self.acf
    }

    /// Items `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureBatch {
        let gather = |src: &[f64], per: usize| -> Vec<f64> {
            indices
                .iter()
                .flat_map(|&i| src[i * per..(i + 1) * per].iter().copied())
                .collect()
        };
        FeatureBatch {
            n: indices.len(),
            topo: gather(&self.topo, TOPO_LEN),
            psd: gather(&self.psd, PSD_LEN),
            acf: gather(&self.acf, PSD_LEN),
        }
    }
}
