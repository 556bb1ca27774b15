//! Comparing engine outputs against reference outputs.
//!
//! The metric is the maximum relative difference
//! `max_i |(ref_i − test_i) / ref_i|`, with the reference in the
//! denominator. Pairs where both values are zero contribute 0; a zero
//! reference against a nonzero test value contributes infinity. NaN on one
//! side only is also infinity, NaN on both sides (a component that failed in
//! both runs) contributes 0.
//!
//! Differences are also summarized as a histogram over the number of
//! matching decimals, `floor(−log10(diff))` clamped to `[0, max_decimals]`.

mod dump;

pub use dump::{
    col_to_row_major, item_extents, write_atomic, DumpArray, FeatureDump, MAGIC, VERSION,
    VOCABULARY,
};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::matreader::MatError;

/// Default gate: 0.1%.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_DECIMALS: usize = 16;
/// Slack added before flooring so that a difference of exactly `10^-k`,
/// computed with rounding error, lands in bin `k`.
const DECIMAL_SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformanceError {
    #[error("length mismatch: reference has {reference} values, test has {test}")]
    LengthMismatch { reference: usize, test: usize },
    #[error("nothing to compare")]
    EmptyInput,
    #[error("dumps share no array names")]
    NoOverlap,
    #[error("`{name}`: reference extents {reference:?}, test extents {test:?}")]
    ShapeMismatch {
        name: String,
        reference: Vec<usize>,
        test: Vec<usize>,
    },
    #[error("unknown dump array `{0}`")]
    UnknownArray(String),
    #[error("bad dump: {0}")]
    BadDump(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    #[default]
    Relative,
    Absolute,
}

/// Contribution of one pair to the maximum relative difference.
fn pair_mdp(r: f64, t: f64) -> f64 {
    match (r.is_nan(), t.is_nan()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    if r == t {
        return 0.0;
    }
    if r == 0.0 {
        return f64::INFINITY;
    }
    ((r - t) / r).abs()
}

fn check_lengths(reference: &[f64], test: &[f64]) -> Result<(), ConformanceError> {
    if reference.len() != test.len() {
        return Err(ConformanceError::LengthMismatch {
            reference: reference.len(),
            test: test.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpDetail {
    /// Fraction; multiply by 100 for percent.
    pub value: f64,
    /// Flat index of the first pair attaining `value`.
    pub worst_index: usize,
}

pub fn mdp_detail(reference: &[f64], test: &[f64]) -> Result<MdpDetail, ConformanceError> {
    check_lengths(reference, test)?;
    if reference.is_empty() {
        return Err(ConformanceError::EmptyInput);
    }
    let mut best = MdpDetail {
        value: 0.0,
        worst_index: 0,
    };
    for (i, (&r, &t)) in reference.iter().zip(test).enumerate() {
        let d = pair_mdp(r, t);
        if d > best.value {
            best = MdpDetail {
                value: d,
                worst_index: i,
            };
        }
    }
    Ok(best)
}

/// Maximum relative difference, as a fraction.
pub fn mdp(reference: &[f64], test: &[f64]) -> Result<f64, ConformanceError> {
    mdp_detail(reference, test).map(|d| d.value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecimalHistogram {
    /// `bins[k]` counts pairs agreeing to `k` decimals.
    pub bins: Vec<u64>,
    /// Pairs left out: zero reference (relative mode) or NaN on either side.
    pub skipped: u64,
}

impl DecimalHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

pub fn decimal_histogram(
    reference: &[f64],
    test: &[f64],
    max_decimals: usize,
    mode: DiffMode,
) -> Result<DecimalHistogram, ConformanceError> {
    check_lengths(reference, test)?;
    let mut bins = vec![0u64; max_decimals + 1];
    let mut skipped = 0;
    for (&r, &t) in reference.iter().zip(test) {
        if r.is_nan() || t.is_nan() || (mode == DiffMode::Relative && r == 0.0) {
            skipped += 1;
            continue;
        }
        let diff = match mode {
            DiffMode::Relative => ((r - t) / r).abs(),
            DiffMode::Absolute => (r - t).abs(),
        };
        let bin = if diff == 0.0 {
            max_decimals
        } else {
            let k = (-diff.log10() + DECIMAL_SLACK).floor();
            k.clamp(0.0, max_decimals as f64) as usize
        };
        bins[bin] += 1;
    }
    Ok(DecimalHistogram { bins, skipped })
}

/// Per-array tolerances (fractions) with a shared default.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub default: f64,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            default: DEFAULT_TOLERANCE,
            overrides: BTreeMap::new(),
        }
    }
}

impl Tolerances {
    pub fn with(mut self, name: &str, tol: f64) -> Self {
        self.overrides.insert(name.to_string(), tol);
        self
    }

    pub fn for_array(&self, name: &str) -> f64 {
        self.overrides.get(name).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayReport {
    pub name: String,
    /// Fraction; serialized as `null` when infinite.
    pub mdp: f64,
    pub mdp_percent: f64,
    pub elements: usize,
    pub worst_index: usize,
    pub tolerance: f64,
    pub pass: bool,
    pub histogram: DecimalHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub arrays: Vec<ArrayReport>,
    pub only_in_reference: Vec<String>,
    pub only_in_test: Vec<String>,
    pub mode: DiffMode,
    pub max_decimals: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub max_decimals: usize,
    pub mode: DiffMode,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            max_decimals: DEFAULT_MAX_DECIMALS,
            mode: DiffMode::Relative,
        }
    }
}

/// Compares every array the dumps share. Overall pass requires each shared
/// array's mdp to be within its tolerance.
pub fn compare_dumps(
    reference: &FeatureDump,
    test: &FeatureDump,
    tolerances: &Tolerances,
    options: CompareOptions,
) -> Result<ComparisonReport, ConformanceError> {
    let shared: Vec<&String> = reference
        .arrays
        .keys()
        .filter(|k| test.arrays.contains_key(*k))
        .collect();
    if shared.is_empty() {
        return Err(ConformanceError::NoOverlap);
    }
    let mut arrays = Vec::with_capacity(shared.len());
    for name in shared {
        let (r, t) = (&reference.arrays[name], &test.arrays[name]);
        if r.extents != t.extents {
            return Err(ConformanceError::ShapeMismatch {
                name: name.clone(),
                reference: r.extents.clone(),
                test: t.extents.clone(),
            });
        }
        let detail = mdp_detail(&r.data, &t.data)?;
        let histogram = decimal_histogram(&r.data, &t.data, options.max_decimals, options.mode)?;
        let tolerance = tolerances.for_array(name);
        arrays.push(ArrayReport {
            name: name.clone(),
            mdp: detail.value,
            mdp_percent: detail.value * 100.0,
            elements: r.data.len(),
            worst_index: detail.worst_index,
            tolerance,
            pass: detail.value <= tolerance,
            histogram,
        });
    }
    let only = |a: &FeatureDump, b: &FeatureDump| -> Vec<String> {
        a.arrays
            .keys()
            .filter(|k| !b.arrays.contains_key(*k))
            .cloned()
            .collect()
    };
    let pass = arrays.iter().all(|a| a.pass);
    Ok(ComparisonReport {
        arrays,
        only_in_reference: only(reference, test),
        only_in_test: only(test, reference),
        mode: options.mode,
        max_decimals: options.max_decimals,
        pass,
    })
}
