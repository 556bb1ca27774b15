//! Feature dumps: named `f64` arrays with a provenance note.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ICLDUMP\0"
//! version    u32      1
//! n_arrays   u32
//! prov_len   u32, then prov_len bytes of UTF-8 provenance text
//! per array:
//!   name_len u32, then name bytes (UTF-8)
//!   kind     u8       1 = f64
//!   ndim     u8
//!   reserved 2 bytes  zero
//!   extents  ndim x u64
//!   data     product(extents) x f64, row-major (last extent fastest)
//! ```
//!
//! A JSON manifest naming the binary file and listing each array's extents
//! and byte offset is written next to it. MAT files with variables `topo`
//! (n×32×32), `psd` (n×100), `acf` (n×100) and `probs` (n×7) are accepted
//! for reading.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ConformanceError;
use crate::matreader::{parse_mat, MatFile};
use crate::network::{Probabilities, N_CLASSES};
use crate::pipeline::{ClassificationTable, FeatureSet};
use crate::spectral::PSD_LEN;
use crate::topomap::GRID_SIZE;

pub const MAGIC: &[u8; 8] = b"ICLDUMP\0";
pub const VERSION: u32 = 1;
const KIND_F64: u8 = 1;

/// Array names a dump may contain.
pub const VOCABULARY: [&str; 4] = ["topo", "psd", "acf", "probs"];

/// Per-item extents of each vocabulary array.
pub fn item_extents(name: &str) -> Option<&'static [usize]> {
    match name {
        "topo" => Some(&[GRID_SIZE, GRID_SIZE]),
        "psd" | "acf" => Some(&[PSD_LEN]),
        "probs" => Some(&[N_CLASSES]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpArray {
    pub extents: Vec<usize>,
    /// Row-major.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureDump {
    pub provenance: String,
    pub arrays: BTreeMap<String, DumpArray>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    data: String,
    provenance: String,
    arrays: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    kind: String,
    extents: Vec<usize>,
    offset: u64,
}

fn bad(msg: impl Into<String>) -> ConformanceError {
    ConformanceError::BadDump(msg.into())
}

impl FeatureDump {
    pub fn new(provenance: impl Into<String>) -> Self {
        FeatureDump {
            provenance: provenance.into(),
            arrays: BTreeMap::new(),
        }
    }

    /// Adds an array after checking its name and extents.
    pub fn insert(
        &mut self,
        name: &str,
        extents: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<(), ConformanceError> {
        let per =
            item_extents(name).ok_or_else(|| ConformanceError::UnknownArray(name.to_string()))?;
        if extents.len() != per.len() + 1 || extents[1..] != *per {
            return Err(bad(format!(
                "`{name}` extents {extents:?} do not end in {per:?}"
            )));
        }
        if extents.iter().product::<usize>() != data.len() {
            return Err(bad(format!(
                "`{name}` has {} values for extents {extents:?}",
                data.len()
            )));
        }
        self.arrays
            .insert(name.to_string(), DumpArray { extents, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DumpArray> {
        self.arrays.get(name)
    }

    /// Features of every component; failed components are rows of NaN.
    pub fn from_features(features: &FeatureSet, provenance: impl Into<String>) -> Self {
        let n = features.len();
        let mut dump = FeatureDump::new(provenance);
        let topo_len = GRID_SIZE * GRID_SIZE;
        let mut topo = Vec::with_capacity(n * topo_len);
        let mut psd = Vec::with_capacity(n * PSD_LEN);
        let mut acf = Vec::with_capacity(n * PSD_LEN);
        for row in &features.rows {
            match row {
                Ok(f) => {
                    topo.extend_from_slice(&f.topo);
                    psd.extend_from_slice(&f.psd);
                    acf.extend_from_slice(&f.acf);
                }
                Err(_) => {
                    topo.extend(std::iter::repeat_n(f64::NAN, topo_len));
                    psd.extend(std::iter::repeat_n(f64::NAN, PSD_LEN));
                    acf.extend(std::iter::repeat_n(f64::NAN, PSD_LEN));
                }
            }
        }
        dump.insert("topo", vec![n, GRID_SIZE, GRID_SIZE], topo)
            .expect("topo extents");
        dump.insert("psd", vec![n, PSD_LEN], psd)
            .expect("psd extents");
        dump.insert("acf", vec![n, PSD_LEN], acf)
            .expect("acf extents");
        dump
    }

    pub fn set_probabilities(&mut self, table: &ClassificationTable) {
        let data = table
            .rows
            .iter()
            .flat_map(|r| match r {
                Ok(p) => *p,
                Err(_) => [f64::NAN; N_CLASSES],
            })
            .collect();
        self.insert("probs", vec![table.len(), N_CLASSES], data)
            .expect("probs extents");
    }

    pub fn set_probability_rows(&mut self, probs: &Probabilities) {
        let data = probs.rows.iter().flatten().copied().collect();
        self.insert("probs", vec![probs.rows.len(), N_CLASSES], data)
            .expect("probs extents");
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.provenance.len() as u32).to_le_bytes());
        out.extend_from_slice(self.provenance.as_bytes());
        for (name, arr) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&[KIND_F64, arr.extents.len() as u8, 0, 0]);
            for &e in &arr.extents {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in &arr.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Byte offset of each array's data within [`Self::to_bytes`].
    fn data_offsets(&self) -> Vec<u64> {
        let mut pos = (8 + 4 + 4 + 4 + self.provenance.len()) as u64;
        self.arrays
            .iter()
            .map(|(name, arr)| {
                pos += (4 + name.len() + 4 + 8 * arr.extents.len()) as u64;
                let at = pos;
                pos += 8 * arr.data.len() as u64;
                at
            })
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConformanceError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("missing ICLDUMP magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported dump version {version}")));
        }
        let n = r.u32()?;
        let prov_len = r.u32()? as usize;
        let provenance = std::str::from_utf8(r.take(prov_len)?)
            .map_err(|_| bad("provenance is not UTF-8"))?
            .to_string();
        let mut dump = FeatureDump::new(provenance);
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| bad("array name is not UTF-8"))?
                .to_string();
            let head = r.take(4)?;
            if head[0] != KIND_F64 {
                return Err(bad(format!(
                    "`{name}` has unknown element kind {}",
                    head[0]
                )));
            }
            let ndim = head[1] as usize;
            let mut extents = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let e = r.u64()?;
                extents.push(usize::try_from(e).map_err(|_| bad("extent overflows"))?);
            }
            let count = extents
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .filter(|c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| bad(format!("`{name}` extents {extents:?} exceed the file")))?;
            let data = r
                .take(count * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if dump.arrays.contains_key(&name) {
                return Err(bad(format!("duplicate array `{name}`")));
            }
            dump.insert(&name, extents, data)?;
        }
        if r.remaining() != 0 {
            return Err(bad(format!("{} trailing bytes", r.remaining())));
        }
        Ok(dump)
    }

    /// Reads the vocabulary variables present in a MAT file. Arrays stored
    /// column-major are reordered to row-major.
    pub fn from_matfile(file: &MatFile) -> Result<Self, ConformanceError> {
        let mut dump = FeatureDump::new(file.header_text.trim_end().to_string());
        for name in VOCABULARY {
            let Some(value) = file.get(name) else {
                continue;
            };
            let arr = value
                .as_numeric()
                .ok_or_else(|| bad(format!("`{name}` is not a numeric array")))?;
            let per = item_extents(name).unwrap();
            let mut dims = arr.dims.clone();
            // MAT arrays carry at least two extents; `n x 100` stays as is,
            // `n x 32 x 32` too. Drop trailing singletons beyond the expected rank.
            while dims.len() > per.len() + 1 && dims.last() == Some(&1) {
                dims.pop();
            }
            if dims.len() != per.len() + 1 || dims[1..] != *per {
                return Err(ConformanceError::ShapeMismatch {
                    name: name.to_string(),
                    reference: dims,
                    test: [&[0usize][..], per].concat(),
                });
            }
            let data = col_to_row_major(&arr.data.to_f64(), &dims);
            dump.insert(name, dims, data)?;
        }
        if dump.arrays.is_empty() {
            return Err(bad("MAT file holds none of topo, psd, acf, probs"));
        }
        Ok(dump)
    }

    /// Reads a binary dump, its JSON manifest, or a MAT file, detected by
    /// content.
    pub fn read(path: &Path) -> Result<Self, ConformanceError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ConformanceError::Io(format!("{}: {e}", path.display())))?;
        if bytes.starts_with(MAGIC) {
            return FeatureDump::from_bytes(&bytes);
        }
        if bytes.first() == Some(&b'{') {
            let manifest: Manifest =
                serde_json::from_slice(&bytes).map_err(|e| bad(format!("manifest: {e}")))?;
            if manifest.format != "icldump" {
                return Err(bad(format!("manifest format `{}`", manifest.format)));
            }
            let data_path = path.parent().unwrap_or(Path::new("")).join(&manifest.data);
            let data = std::fs::read(&data_path)
                .map_err(|e| ConformanceError::Io(format!("{}: {e}", data_path.display())))?;
            let dump = FeatureDump::from_bytes(&data)?;
            for entry in &manifest.arrays {
                let arr = dump.get(&entry.name).ok_or_else(|| {
                    bad(format!("manifest lists `{}` absent from data", entry.name))
                })?;
                if arr.extents != entry.extents {
                    return Err(bad(format!(
                        "manifest extents for `{}` disagree with data",
                        entry.name
                    )));
                }
            }
            return Ok(dump);
        }
        let file = parse_mat(&bytes)?;
        FeatureDump::from_matfile(&file)
    }

    pub fn manifest_json(&self, data_file_name: &str) -> String {
        let manifest = Manifest {
            format: "icldump".into(),
            version: VERSION,
            data: data_file_name.to_string(),
            provenance: self.provenance.clone(),
            arrays: self
                .arrays
                .iter()
                .zip(self.data_offsets())
                .map(|((name, arr), offset)| ManifestEntry {
                    name: name.clone(),
                    kind: "f64".into(),
                    extents: arr.extents.clone(),
                    offset,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes the binary dump to `path` and its manifest to `path.json`,
    /// each through a temporary file and rename.
    pub fn write(&self, path: &Path) -> Result<PathBuf, ConformanceError> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| ConformanceError::Io(format!("{}: not a file path", path.display())))?;
        let manifest_path = path.with_file_name(format!("{name}.json"));
        write_atomic(path, &self.to_bytes())?;
        write_atomic(&manifest_path, self.manifest_json(name).as_bytes())?;
        Ok(manifest_path)
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ConformanceError> {
    let io = |e: std::io::Error| ConformanceError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Reorders column-major data with extents `dims` to row-major.
pub fn col_to_row_major(col: &[f64], dims: &[usize]) -> Vec<f64> {
    let n = col.len();
    let mut out = vec![0.0; n];
    let mut idx = vec![0usize; dims.len()];
    for &v in col {
        let mut row = 0;
        for (d, &i) in dims.iter().zip(&idx) {
            row = row * d + i;
        }
        out[row] = v;
        for (i, &d) in idx.iter_mut().zip(dims) {
            *i += 1;
            if *i < d {
                break;
            }
            *i = 0;
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ConformanceError> {
        if n > self.remaining() {
            return Err(bad("dump is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ConformanceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ConformanceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col_major_reorder() {
        // 2x3 matrix [[1,2,3],[4,5,6]] stored column-major.
        let col = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        assert_eq!(
            col_to_row_major(&col, &[2, 3]),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
    }

    #[test]
    fn bytes_round_trip() {
        let mut d = FeatureDump::new("unit test");
        d.insert(
            "psd",
            vec![2, 100],
            (0..200).map(|v| v as f64 * 0.5).collect(),
        )
        .unwrap();
        d.insert("probs", vec![1, 7], vec![f64::NAN; 7]).unwrap();
        let back = FeatureDump::from_bytes(&d.to_bytes()).unwrap();
        assert_eq!(back.provenance, "unit test");
        assert_eq!(back.get("psd"), d.get("psd"));
        assert!(back.get("probs").unwrap().data.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn offsets_point_at_data() {
        let mut d = FeatureDump::new("x");
        d.insert("acf", vec![1, 100], vec![0.25; 100]).unwrap();
        d.insert("probs", vec![1, 7], vec![0.5; 7]).unwrap();
        let bytes = d.to_bytes();
        for ((_, arr), off) in d.arrays.iter().zip(d.data_offsets()) {
            let off = off as usize;
            let first = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            assert_eq!(first, arr.data[0]);
        }
    }

    #[test]
    fn rejects_bad_names_and_extents() {
        let mut d = FeatureDump::new("");
        assert!(matches!(
            d.insert("weights", vec![1, 7], vec![0.0; 7]),
            Err(ConformanceError::UnknownArray(_))
        ));
        assert!(d.insert("psd", vec![1, 99], vec![0.0; 99]).is_err());
        assert!(d.insert("psd", vec![2, 100], vec![0.0; 100]).is_err());
    }
}
