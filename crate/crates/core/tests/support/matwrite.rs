//! Minimal MAT-file Level 5 writer for tests: little-endian, uncompressed
//! double arrays and char rows.

use std::path::Path;

const MI_INT8: u32 = 1;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_DOUBLE: u32 = 9;
const MI_MATRIX: u32 = 14;
const MX_CHAR: u32 = 4;
const MX_DOUBLE: u32 = 6;

fn element(ty: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + payload.len() + 7);
    out.extend_from_slice(&ty.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.resize(out.len() + (8 - payload.len() % 8) % 8, 0);
    out
}

fn matrix(name: &str, class: u32, dims: &[usize], body: Vec<u8>) -> Vec<u8> {
    let mut flags = Vec::new();
    flags.extend_from_slice(&class.to_le_bytes());
    flags.extend_from_slice(&0u32.to_le_bytes());
    let dims: Vec<u8> = dims
        .iter()
        .flat_map(|&d| (d as i32).to_le_bytes())
        .collect();
    let mut parts = element(MI_UINT32, &flags);
    parts.extend(element(MI_INT32, &dims));
    parts.extend(element(MI_INT8, name.as_bytes()));
    parts.extend(body);
    element(MI_MATRIX, &parts)
}

#[derive(Default)]
pub struct MatWriter {
    body: Vec<u8>,
}

impl MatWriter {
    pub fn new() -> Self {
        MatWriter::default()
    }

    /// `data` is column-major over `dims`.
    pub fn double(&mut self, name: &str, dims: &[usize], data: &[f64]) -> &mut Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.body
            .extend(matrix(name, MX_DOUBLE, dims, element(MI_DOUBLE, &bytes)));
        self
    }

    /// Row-major data over `dims`, stored column-major.
    pub fn double_row_major(&mut self, name: &str, dims: &[usize], data: &[f64]) -> &mut Self {
        let col = row_to_col_major(data, dims);
        self.double(name, dims, &col)
    }

    pub fn text(&mut self, name: &str, text: &str) -> &mut Self {
        let units: Vec<u16> = text.encode_utf16().collect();
        let bytes: Vec<u8> = units.iter().flat_map(|u| u.to_le_bytes()).collect();
        self.body.extend(matrix(
            name,
            MX_CHAR,
            &[1, units.len()],
            element(MI_UINT16, &bytes),
        ));
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"MATLAB 5.0 MAT-file, test writer".to_vec();
        out.resize(116, b' ');
        out.extend_from_slice(&[0u8; 8]);
        out.extend_from_slice(&0x0100u16.to_le_bytes());
        out.extend_from_slice(b"IM");
        out.extend_from_slice(&self.body);
        out
    }

    pub fn write(&self, path: &Path) {
        std::fs::write(path, self.to_bytes()).expect("write MAT file");
    }
}

pub fn row_to_col_major(row: &[f64], dims: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    let mut idx = vec![0usize; dims.len()];
    for &v in row {
        let mut col = 0;
        for (d, &i) in dims.iter().zip(&idx).rev() {
            col = col * d + i;
        }
        out[col] = v;
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
