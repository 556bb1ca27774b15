//! Dense 2-D convolution (cross-correlation, no kernel flip) via im2col.

/// A single item's activation volume, row-major `[channel][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "volume data length");
        Volume {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Volume::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn leaky_relu(&mut self, slope: f64) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v *= slope;
            }
        }
    }
}

/// Geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
}

/// `floor((input + 2·pad − kernel) / stride) + 1`, or `None` when the kernel
/// does not fit.
pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = input + 2 * pad;
    if kernel == 0 || stride == 0 || kernel > span {
        return None;
    }
    Some((span - kernel) / stride + 1)
}

/// Convolves `input` with `weight` (row-major `[out][in][ky][kx]`) and adds
/// `bias`. Out-of-range taps read zero padding.
pub fn conv2d(input: &Volume, g: &ConvGeometry, weight: &[f64], bias: &[f64]) -> Volume {
    let (kh, kw) = g.kernel;
    let (ph, pw) = g.padding;
    assert_eq!(input.channels, g.in_channels, "input channel count");
    assert_eq!(
        weight.len(),
        g.out_channels * g.in_channels * kh * kw,
        "kernel size"
    );
    assert_eq!(bias.len(), g.out_channels, "bias size");
    let oh = out_extent(input.height, kh, g.stride, ph).expect("kernel taller than padded input");
    let ow = out_extent(input.width, kw, g.stride, pw).expect("kernel wider than padded input");
    let positions = oh * ow;
    let taps = g.in_channels * kh * kw;

    // cols[tap][position]
    let mut cols = vec![0.0; taps * positions];
    for c in 0..g.in_channels {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut cols[((c * kh + ky) * kw + kx) * positions..][..positions];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - ph as isize;
                    if iy < 0 || iy >= input.height as isize {
                        continue;
                    }
                    let src = &input.data[(c * input.height + iy as usize) * input.width..]
                        [..input.width];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - pw as isize;
                        if ix >= 0 && ix < input.width as isize {
                            row[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }

    let mut out = vec![0.0; g.out_channels * positions];
    for (o, dst) in out.chunks_exact_mut(positions).enumerate() {
        dst.fill(bias[o]);
        let w = &weight[o * taps..(o + 1) * taps];
        for (&wk, src) in w.iter().zip(cols.chunks_exact(positions)) {
            if wk == 0.0 {
                continue;
            }
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    Volume::new(g.out_channels, oh, ow, out)
}
