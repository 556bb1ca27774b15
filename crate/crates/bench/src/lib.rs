//! Criterion benchmarks for feature extraction and network inference; see
//! `benches/`.
