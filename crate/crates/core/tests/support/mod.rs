//! Shared test support: a MAT writer, direct-computation oracles and seeded
//! synthetic inputs.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod matwrite;
pub mod oracles;
pub mod synth;

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    // Resolves from either crate that includes this module.
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}
