//! ICLabel-compatible classification of EEG independent components.
//!
//! The pipeline loads an EEGLAB dataset ([`dataset`]), derives three
//! features per component ([`topomap`], [`spectral`], [`autocorr`]), runs the
//! pretrained convolutional classifier ([`network`]) and returns per-class
//! probabilities ([`pipeline`]). [`conformance`] compares engine outputs with
//! reference dumps.

pub mod autocorr;
pub mod conformance;
pub mod dataset;
pub mod dsp;
pub mod linalg;
pub mod matreader;
pub mod network;
pub mod pipeline;
pub mod spectral;
pub mod topomap;

pub use dataset::{ChannelLoc, EegDataset, IcaDecomposition};
pub use matreader::{parse_mat, MatFile, MatValue};
pub use network::{FeatureBatch, NetworkWeights, Probabilities};
pub use pipeline::{classify, extract_features, ClassificationTable, CompatFlags};
