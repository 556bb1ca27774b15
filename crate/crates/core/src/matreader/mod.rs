//! Reader for MAT-file Level 5 containers and raw `.fdt` float payloads.
//!
//! EEGLAB `.set` files, reference feature dumps and network weight files all
//! share this container. Parsing produces an immutable [`MatFile`] holding a
//! tree of [`MatValue`]s. Numeric data keeps its stored element kind and
//! MATLAB's column-major order; consumers widen to `f64` on access.
//!
//! Only Level 5 (versions up to 7) is understood. Files written with the
//! HDF5-based v7.3 format are detected from the header and rejected.

mod parse;
mod value;

pub use parse::parse_mat;
pub use value::{
    CellArray, CharArray, MatValue, Node, NumericArray, NumericData, NumericKind, StructArray,
};

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("unsupported MAT-file version: {0}")]
    UnsupportedVersion(String),
    #[error("truncated stream: {0}")]
    Truncated(String),
    #[error("unknown array class id {0}")]
    UnknownClass(u8),
    #[error("unsupported array: {0}")]
    Unsupported(String),
    #[error("compressed element checksum mismatch")]
    BadChecksum,
    #[error("corrupt compressed element: {0}")]
    BadStream(String),
    #[error("undecodable character data: {0}")]
    BadText(String),
    #[error("malformed element: {0}")]
    Malformed(String),
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("empty access path")]
    EmptyPath,
    #[error("no such field or variable `{0}`")]
    NoSuchField(String),
    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

/// Byte order of a MAT file, from the two-character indicator at offset 126.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// A parsed MAT-file: header metadata plus top-level variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MatFile {
    pub header_text: String,
    pub version: u16,
    pub endian: Endian,
    variables: BTreeMap<String, MatValue>,
    order: Vec<String>,
}

impl MatFile {
    pub(crate) fn new(header_text: String, version: u16, endian: Endian) -> Self {
        MatFile {
            header_text,
            version,
            endian,
            variables: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    pub(crate) fn insert(&mut self, name: String, value: MatValue) -> Result<(), MatError> {
        if name.is_empty() {
            return Err(MatError::Malformed("empty variable name".into()));
        }
        if self.variables.contains_key(&name) {
            return Err(MatError::Malformed(format!("duplicate variable `{name}`")));
        }
        self.order.push(name.clone());
        self.variables.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MatValue> {
        self.variables.get(name)
    }

    /// Variable names in file order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Variables in file order.
    pub fn variables(&self) -> impl Iterator<Item = (&str, &MatValue)> {
        self.order
            .iter()
            .map(move |n| (n.as_str(), &self.variables[n]))
    }
}

/// One step of a [`get_path`] walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathSegment {
    Field(String),
    /// Zero-based linear (column-major) element index.
    Index(usize),
}

impl From<&str> for PathSegment {
    fn from(s: &str) -> Self {
        PathSegment::Field(s.to_string())
    }
}

impl From<usize> for PathSegment {
    fn from(i: usize) -> Self {
        PathSegment::Index(i)
    }
}

/// Walks a path of field names and element indices from the top-level
/// variables. The first segment must name a variable.
///
/// Field access on a 1x1 struct reads that element's field, as MATLAB's
/// `s.field` does; on larger struct arrays an explicit index must come first.
pub fn get_path<'a>(file: &'a MatFile, path: &[PathSegment]) -> Result<Node<'a>, MatError> {
    let (first, rest) = path.split_first().ok_or(MatError::EmptyPath)?;
    let mut node = match first {
        PathSegment::Field(name) => Node::Value(
            file.get(name)
                .ok_or_else(|| MatError::NoSuchField(name.clone()))?,
        ),
        PathSegment::Index(_) => {
            return Err(MatError::TypeMismatch(
                "path must start with a variable name".into(),
            ))
        }
    };
    for seg in rest {
        node = match seg {
            PathSegment::Field(name) => node.field(name)?,
            PathSegment::Index(i) => node.index(*i)?,
        };
    }
    Ok(node)
}

/// Decodes an EEGLAB `.fdt` payload: little-endian `f32`, all channels of
/// sample 0 first. The result is `n_channels x n_samples` in column-major
/// order, widened to `f64`.
pub fn read_fdt(bytes: &[u8], n_channels: usize, n_samples: usize) -> Result<Vec<f64>, MatError> {
    let expected = n_channels
        .checked_mul(n_samples)
        .and_then(|n| n.checked_mul(4))
        .ok_or(MatError::SizeMismatch {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    if bytes.len() != expected {
        return Err(MatError::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}
