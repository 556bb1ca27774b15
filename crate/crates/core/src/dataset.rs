//! Typed EEG dataset model built from an EEGLAB-shaped MAT tree.

use std::path::Path;

use thiserror::Error;

use crate::dsp::Signal;
use crate::linalg::Matrix;
use crate::matreader::{self, MatError, MatFile, MatValue, StructArray};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("external data payload `{path}` unavailable: {reason}")]
    PayloadMissing { path: String, reason: String },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Electrode position in EEGLAB polar convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLoc {
    pub label: String,
    /// Azimuth in degrees; 0 points at the nose, positive toward the right ear.
    pub theta: f64,
    /// Arc length from the vertex in head-model units (0.5 on the ear line).
    pub radius: f64,
    pub has_position: bool,
}

impl ChannelLoc {
    pub fn positioned(label: impl Into<String>, theta: f64, radius: f64) -> Self {
        ChannelLoc {
            label: label.into(),
            theta,
            radius,
            has_position: true,
        }
    }

    pub fn unpositioned(label: impl Into<String>) -> Self {
        ChannelLoc {
            label: label.into(),
            theta: f64::NAN,
            radius: f64::NAN,
            has_position: false,
        }
    }
}

/// ICA decomposition. `winv` rows follow `chan_indices`, columns are components.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaDecomposition {
    pub weights: Matrix,
    pub sphere: Matrix,
    pub winv: Matrix,
    /// Zero-based channel indices the decomposition was computed on.
    pub chan_indices: Vec<usize>,
}

impl IcaDecomposition {
    pub fn n_components(&self) -> usize {
        self.weights.rows()
    }

    /// Unmixing matrix `weights · sphere` (components x ICA channels).
    pub fn unmixing(&self) -> Matrix {
        self.weights
            .matmul(&self.sphere)
            .expect("shapes validated at construction")
    }

    fn validate(&self, n_chan: usize) -> Result<(), DatasetError> {
        let n_ica = self.chan_indices.len();
        let shape = |m: &Matrix| format!("{}x{}", m.rows(), m.cols());
        if self.weights.cols() != self.sphere.rows() {
            return Err(DatasetError::ShapeMismatch(format!(
                "icaweights {} incompatible with icasphere {}",
                shape(&self.weights),
                shape(&self.sphere)
            )));
        }
        if self.sphere.cols() != n_ica {
            return Err(DatasetError::ShapeMismatch(format!(
                "icasphere {} does not match {n_ica} ICA channels",
                shape(&self.sphere)
            )));
        }
        if self.winv.rows() != n_ica || self.winv.cols() != self.n_components() {
            return Err(DatasetError::ShapeMismatch(format!(
                "icawinv {} should be {n_ica}x{}",
                shape(&self.winv),
                self.n_components()
            )));
        }
        if let Some(&bad) = self.chan_indices.iter().find(|&&c| c >= n_chan) {
            return Err(DatasetError::ShapeMismatch(format!(
                "ICA channel index {} exceeds {n_chan} channels",
                bad + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegDataset {
    pub n_chan: usize,
    pub srate: f64,
    pub pnts: usize,
    pub trials: usize,
    /// `n_chan x pnts x trials`, column-major (channel fastest).
    pub data: Vec<f64>,
    pub chanlocs: Vec<ChannelLoc>,
    pub ica: IcaDecomposition,
}

impl EegDataset {
    pub fn new(
        srate: f64,
        pnts: usize,
        trials: usize,
        data: Vec<f64>,
        chanlocs: Vec<ChannelLoc>,
        ica: IcaDecomposition,
    ) -> Result<Self, DatasetError> {
        let n_chan = chanlocs.len();
        if !(srate > 0.0 && srate.is_finite()) {
            return Err(DatasetError::InvalidValue {
                field: "srate".into(),
                reason: format!("{srate} is not a positive rate"),
            });
        }
        if pnts == 0 || trials == 0 {
            return Err(DatasetError::InvalidValue {
                field: "pnts/trials".into(),
                reason: "must be at least 1".into(),
            });
        }
        if data.len() != n_chan * pnts * trials {
            return Err(DatasetError::ShapeMismatch(format!(
                "data has {} values, expected {n_chan}x{pnts}x{trials}",
                data.len()
            )));
        }
        ica.validate(n_chan)?;
        Ok(EegDataset {
            n_chan,
            srate,
            pnts,
            trials,
            data,
            chanlocs,
            ica,
        })
    }

    pub fn n_components(&self) -> usize {
        self.ica.n_components()
    }

    #[inline]
    pub fn sample(&self, chan: usize, t: usize, trial: usize) -> f64 {
        self.data[chan + self.n_chan * (t + self.pnts * trial)]
    }

    /// Loads a `.set` file, resolving an external `.fdt` payload relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file = matreader::parse_mat(&bytes)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        from_matfile(&file, |name| std::fs::read(dir.join(name)))
    }

    /// Component activations `(weights · sphere) · data[ica channels]` per trial.
    pub fn ica_activations(&self) -> Activations {
        ica_activations(self)
    }
}

/// Component time courses, one contiguous `pnts · trials` block per
/// component (trial-major within the block).
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub n_comp: usize,
    pub pnts: usize,
    pub trials: usize,
    data: Vec<f64>,
}

impl Activations {
    /// `data` holds one `pnts · trials` block per component.
    pub fn new(
        n_comp: usize,
        pnts: usize,
        trials: usize,
        data: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        if data.len() != n_comp * pnts * trials {
            return Err(DatasetError::ShapeMismatch(format!(
                "activations have {} values, expected {n_comp}x{pnts}x{trials}",
                data.len()
            )));
        }
        Ok(Activations {
            n_comp,
            pnts,
            trials,
            data,
        })
    }

    pub fn signal(&self, c: usize) -> Signal<'_> {
        Signal::new(self.component(c), self.pnts, self.trials)
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let len = self.pnts * self.trials;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn trial(&self, c: usize, trial: usize) -> &[f64] {
        &self.component(c)[trial * self.pnts..(trial + 1) * self.pnts]
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, trial: usize) -> f64 {
        self.data[c * self.pnts * self.trials + trial * self.pnts + t]
    }
}

pub fn ica_activations(ds: &EegDataset) -> Activations {
    let unmix = ds.ica.unmixing();
    let n_comp = unmix.rows();
    let idx = &ds.ica.chan_indices;
    let samples = ds.pnts * ds.trials;
    let mut data = vec![0.0; n_comp * samples];
    let mut column = vec![0.0; idx.len()];
    for s in 0..samples {
        let base = s * ds.n_chan;
        for (j, &ch) in idx.iter().enumerate() {
            column[j] = ds.data[base + ch];
        }
        for c in 0..n_comp {
            let mut acc = 0.0;
            for (j, &x) in column.iter().enumerate() {
                acc += unmix[(c, j)] * x;
            }
            data[c * samples + s] = acc;
        }
    }
    Activations {
        n_comp,
        pnts: ds.pnts,
        trials: ds.trials,
        data,
    }
}

/// Field lookup over either layout: a single `EEG` struct variable, or the
/// struct's fields saved as top-level variables.
enum Root<'a> {
    Flat(&'a MatFile),
    Nested(&'a StructArray),
}

impl<'a> Root<'a> {
    fn of(file: &'a MatFile) -> Self {
        match file.get("EEG") {
            Some(MatValue::Struct(s)) if s.len() == 1 => Root::Nested(s),
            _ => Root::Flat(file),
        }
    }

    fn get(&self, name: &str) -> Option<&'a MatValue> {
        match self {
            Root::Flat(f) => f.get(name),
            Root::Nested(s) => s.field(0, name),
        }
    }

    fn non_empty(&self, name: &str) -> Option<&'a MatValue> {
        self.get(name).filter(|v| !v.is_empty())
    }

    fn scalar(&self, name: &str) -> Result<Option<f64>, DatasetError> {
        match self.non_empty(name) {
            None => Ok(None),
            Some(v) => v
                .scalar()
                .map(Some)
                .ok_or_else(|| DatasetError::InvalidValue {
                    field: name.into(),
                    reason: "expected a numeric scalar".into(),
                }),
        }
    }

    fn matrix(&self, name: &str) -> Result<Option<Matrix>, DatasetError> {
        let Some(v) = self.non_empty(name) else {
            return Ok(None);
        };
        let a = v.as_numeric().ok_or_else(|| DatasetError::InvalidValue {
            field: name.into(),
            reason: "expected a numeric matrix".into(),
        })?;
        if a.dims.len() != 2 {
            return Err(DatasetError::ShapeMismatch(format!(
                "`{name}` has {} dimensions",
                a.dims.len()
            )));
        }
        Ok(Some(
            Matrix::from_col_major(a.dims[0], a.dims[1], a.data.to_f64())
                .expect("dims checked by parser"),
        ))
    }
}

fn count(root: &Root<'_>, name: &str) -> Result<Option<usize>, DatasetError> {
    match root.scalar(name)? {
        None => Ok(None),
        Some(v) if v >= 0.0 && v.fract() == 0.0 && v.is_finite() => Ok(Some(v as usize)),
        Some(v) => Err(DatasetError::InvalidValue {
            field: name.into(),
            reason: format!("{v} is not a count"),
        }),
    }
}

/// Builds a dataset from a parsed `.set` file. `payload_loader` resolves the
/// file name stored in `data` when samples live in a sidecar `.fdt`.
///
/// A stored `icaact` is ignored; activations are always recomputed.
pub fn from_matfile<F>(file: &MatFile, payload_loader: F) -> Result<EegDataset, DatasetError>
where
    F: Fn(&str) -> std::io::Result<Vec<u8>>,
{
    let root = Root::of(file);

    let srate = root
        .scalar("srate")?
        .ok_or_else(|| DatasetError::MissingField("srate".into()))?;

    let weights = root
        .matrix("icaweights")?
        .ok_or_else(|| DatasetError::MissingField("icaweights".into()))?;
    let sphere = root
        .matrix("icasphere")?
        .ok_or_else(|| DatasetError::MissingField("icasphere".into()))?;

    let data_value = root
        .get("data")
        .ok_or_else(|| DatasetError::MissingField("data".into()))?;
    let data_dims = data_value.dims().to_vec();

    let n_chan = match count(&root, "nbchan")? {
        Some(n) => n,
        None => data_dims.first().copied().unwrap_or(0),
    };
    let pnts = match count(&root, "pnts")? {
        Some(n) => n,
        None => data_dims.get(1).copied().unwrap_or(0),
    };
    let trials = match count(&root, "trials")? {
        Some(n) => n,
        None => data_dims.get(2).copied().unwrap_or(1),
    };

    let data = match data_value {
        MatValue::Char(c) => {
            let name = c.text.trim();
            let bytes = payload_loader(name).map_err(|e| DatasetError::PayloadMissing {
                path: name.to_string(),
                reason: e.to_string(),
            })?;
            matreader::read_fdt(&bytes, n_chan, pnts * trials).map_err(|e| match e {
                MatError::SizeMismatch { expected, found } => DatasetError::ShapeMismatch(format!(
                    "`{name}` holds {found} bytes, expected {expected} for {n_chan}x{pnts}x{trials}"
                )),
                other => other.into(),
            })?
        }
        MatValue::Numeric(a) => {
            if a.len() != n_chan * pnts * trials {
                return Err(DatasetError::ShapeMismatch(format!(
                    "data dims {:?} do not match {n_chan}x{pnts}x{trials}",
                    a.dims
                )));
            }
            a.data.to_f64()
        }
        _ => {
            return Err(DatasetError::InvalidValue {
                field: "data".into(),
                reason: "expected samples or a payload file name".into(),
            })
        }
    };

    let chanlocs = read_chanlocs(root.get("chanlocs"), n_chan)?;

    let chan_indices = match root.non_empty("icachansind") {
        None => (0..sphere.cols()).collect(),
        Some(v) => {
            let raw = v.to_f64_vec().ok_or_else(|| DatasetError::InvalidValue {
                field: "icachansind".into(),
                reason: "expected numeric indices".into(),
            })?;
            raw.iter()
                .map(|&i| {
                    if i >= 1.0 && i.fract() == 0.0 {
                        Ok(i as usize - 1)
                    } else {
                        Err(DatasetError::InvalidValue {
                            field: "icachansind".into(),
                            reason: format!("{i} is not a 1-based index"),
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };

    let winv = match root.matrix("icawinv")? {
        Some(w) => w,
        None => {
            let unmix = weights
                .matmul(&sphere)
                .map_err(|e| DatasetError::ShapeMismatch(e.to_string()))?;
            if unmix.rows() != unmix.cols() {
                return Err(DatasetError::MissingField("icawinv".into()));
            }
            unmix
                .inverse()
                .map_err(|e| DatasetError::ShapeMismatch(format!("cannot invert unmixing: {e}")))?
        }
    };

    let ica = IcaDecomposition {
        weights,
        sphere,
        winv,
        chan_indices,
    };
    EegDataset::new(srate, pnts, trials, data, chanlocs, ica)
}

fn read_chanlocs(value: Option<&MatValue>, n_chan: usize) -> Result<Vec<ChannelLoc>, DatasetError> {
    let locs = match value {
        Some(MatValue::Struct(s)) if !s.is_empty() => s,
        // No geometry at all: every channel is unpositioned.
        _ => {
            return Ok((1..=n_chan)
                .map(|i| ChannelLoc::unpositioned(format!("E{i}")))
                .collect())
        }
    };
    if locs.len() != n_chan {
        return Err(DatasetError::ShapeMismatch(format!(
            "{} channel locations for {n_chan} channels",
            locs.len()
        )));
    }
    let coord = |i: usize, name: &str| -> Option<f64> {
        locs.field(i, name)
            .filter(|v| !v.is_empty())
            .and_then(MatValue::scalar)
            .filter(|v| v.is_finite())
    };
    Ok((0..n_chan)
        .map(|i| {
            let label = locs
                .field(i, "labels")
                .and_then(MatValue::as_text)
                .map(str::to_string)
                .unwrap_or_else(|| format!("E{}", i + 1));
            match (coord(i, "theta"), coord(i, "radius")) {
                (Some(theta), Some(radius)) => ChannelLoc::positioned(label, theta, radius),
                _ => ChannelLoc::unpositioned(label),
            }
        })
        .collect())
}
