//! Dataset to features to class probabilities.

use rayon::prelude::*;
use thiserror::Error;

use crate::autocorr::{acf_feature, AcfError};
use crate::dataset::EegDataset;
use crate::dsp::Signal;
use crate::network::{
    argmax, FeatureBatch, NetworkError, NetworkWeights, CLASS_NAMES, N_CLASSES, TOPO_LEN,
};
use crate::spectral::{psd_with_plan, undo_notch, SegmentPlan, SpectralError};
use crate::topomap::{ica_plane, topo_feature_on, TopoError};

/// Every feature is multiplied by this after normalization.
pub const FEATURE_SCALE: f64 = 0.99;

/// Switches between behaviour that reproduces the MATLAB reference outputs
/// and the plain algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompatFlags {
    /// Random 95% segment subset and notch filling in the PSD, duration-based
    /// ACF dispatch.
    pub reference_compat: bool,
    /// Average probabilities over sign-flipped and mirrored scalp maps.
    pub augment: bool,
}

impl Default for CompatFlags {
    fn default() -> Self {
        CompatFlags {
            reference_compat: true,
            augment: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("topography: {0}")]
    Topo(#[from] TopoError),
    #[error("power spectrum: {0}")]
    Spectral(#[from] SpectralError),
    #[error("autocorrelation: {0}")]
    Acf(#[from] AcfError),
    #[error("topography is zero everywhere")]
    FlatTopography,
    #[error("power spectrum is 0 dB in every bin")]
    FlatSpectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFailure {
    pub component: usize,
    pub error: FeatureError,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sampling rate {0} Hz is not a whole number")]
    NonIntegerRate(f64),
    #[error("dataset has no ICA components")]
    NoComponents,
    #[error("{} component(s) failed: {}", .0.len(), describe(.0))]
    Features(Vec<ComponentFailure>),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn describe(failures: &[ComponentFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("#{} {}", f.component + 1, f.error))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Normalized features of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFeatures {
    /// 32×32 row-major, row 0 at the back of the head.
    pub topo: Vec<f64>,
    pub psd: Vec<f64>,
    pub acf: Vec<f64>,
}

/// Per-component feature results in component order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub rows: Vec<Result<ComponentFeatures, FeatureError>>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn failures(&self) -> Vec<ComponentFailure> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(component, r)| {
                r.as_ref().err().map(|e| ComponentFailure {
                    component,
                    error: e.clone(),
                })
            })
            .collect()
    }

    /// Indices of components whose features succeeded.
    pub fn succeeded(&self) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].is_ok())
            .collect()
    }

    /// Batch of the successful components, in the order of [`Self::succeeded`].
    pub fn partial_batch(&self) -> Result<FeatureBatch, NetworkError> {
        let ok: Vec<&ComponentFeatures> =
            self.rows.iter().filter_map(|r| r.as_ref().ok()).collect();
        let cat = |f: fn(&ComponentFeatures) -> &Vec<f64>| -> Vec<f64> {
            ok.iter().flat_map(|c| f(c).iter().copied()).collect()
        };
        FeatureBatch::new(ok.len(), cat(|c| &c.topo), cat(|c| &c.psd), cat(|c| &c.acf))
    }

    /// Batch of all components; fails listing every component that failed.
    pub fn batch(&self) -> Result<FeatureBatch, PipelineError> {
        let failures = self.failures();
        if !failures.is_empty() {
            return Err(PipelineError::Features(failures));
        }
        Ok(self.partial_batch()?)
    }
}

fn integer_rate(srate: f64) -> Result<usize, PipelineError> {
    if srate.fract() != 0.0 || srate < 1.0 {
        return Err(PipelineError::NonIntegerRate(srate));
    }
    Ok(srate as usize)
}

fn scale_by_max_abs(v: &mut [f64]) -> bool {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x = *x / max * FEATURE_SCALE);
    true
}

/// Computes normalized topo, PSD and ACF features for every component.
/// Components run in parallel on the current rayon pool; results are in
/// component order and independent of the thread count.
pub fn extract_features(ds: &EegDataset, compat: CompatFlags) -> Result<FeatureSet, PipelineError> {
    let n_comp = ds.n_components();
    if n_comp == 0 {
        return Err(PipelineError::NoComponents);
    }
    let srate = integer_rate(ds.srate)?;
    let plane = ica_plane(ds);
    let plan = SegmentPlan::new(ds.pnts, srate, ds.trials, compat.reference_compat);
    let act = ds.ica_activations();

    let rows = (0..n_comp)
        .into_par_iter()
        .map(|c| -> Result<ComponentFeatures, FeatureError> {
            let plane = plane.as_ref().map_err(Clone::clone)?;
            let plan = plan.as_ref().map_err(Clone::clone)?;
            component_features(ds, plane, plan, act.signal(c), srate, c, compat)
        })
        .collect();
    Ok(FeatureSet { rows })
}

fn component_features(
    ds: &EegDataset,
    plane: &crate::topomap::ElectrodePlane,
    plan: &SegmentPlan,
    sig: Signal<'_>,
    srate: usize,
    comp: usize,
    compat: CompatFlags,
) -> Result<ComponentFeatures, FeatureError> {
    let grid = topo_feature_on(ds, plane, comp)?;
    let mut topo = grid.values;
    debug_assert_eq!(topo.len(), TOPO_LEN);
    if !scale_by_max_abs(&mut topo) {
        return Err(FeatureError::FlatTopography);
    }

    let mut psd = psd_with_plan(sig, srate, plan)?;
    if compat.reference_compat {
        undo_notch(&mut psd);
    }
    let mut psd = psd.values;
    if !scale_by_max_abs(&mut psd) {
        return Err(FeatureError::FlatSpectrum);
    }

    let mut acf = acf_feature(sig, srate, compat.reference_compat)?.values;
    acf.iter_mut().for_each(|x| *x *= FEATURE_SCALE);

    Ok(ComponentFeatures { topo, psd, acf })
}

/// Class probabilities per component; failed components keep their error.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationTable {
    pub rows: Vec<Result<[f64; N_CLASSES], FeatureError>>,
}

impl ClassificationTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_names(&self) -> [&'static str; N_CLASSES] {
        CLASS_NAMES
    }

    pub fn probabilities(&self, comp: usize) -> Option<&[f64; N_CLASSES]> {
        self.rows[comp].as_ref().ok()
    }

    pub fn argmax(&self, comp: usize) -> Option<usize> {
        self.probabilities(comp).map(argmax)
    }

    pub fn label(&self, comp: usize) -> Option<&'static str> {
        self.argmax(comp).map(|i| CLASS_NAMES[i])
    }

    pub fn failures(&self) -> Vec<ComponentFailure> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(component, r)| {
                r.as_ref().err().map(|e| ComponentFailure {
                    component,
                    error: e.clone(),
                })
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(Result::is_ok)
    }
}

/// Runs the network on precomputed features; failed rows pass through.
pub fn classify_features(
    features: &FeatureSet,
    w: &NetworkWeights,
    compat: CompatFlags,
) -> Result<ClassificationTable, PipelineError> {
    let batch = features.partial_batch()?;
    let probs: Vec<[f64; N_CLASSES]> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            if compat.augment {
                w.infer_augmented_one(&batch, i)
            } else {
                crate::network::softmax(&w.forward_one(&batch, i))
            }
        })
        .collect();
    let mut probs = probs.into_iter();
    let rows = features
        .rows
        .iter()
        .map(|r| match r {
            Ok(_) => Ok(probs.next().expect("one probability row per success")),
            Err(e) => Err(e.clone()),
        })
        .collect();
    Ok(ClassificationTable { rows })
}

pub fn classify(
    ds: &EegDataset,
    w: &NetworkWeights,
    compat: CompatFlags,
) -> Result<ClassificationTable, PipelineError> {
    let features = extract_features(ds, compat)?;
    classify_features(&features, w, compat)
}
