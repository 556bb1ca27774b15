use flate2::{Decompress, FlushDecompress, Status};

use super::value::{
    check_count, CellArray, CharArray, MatValue, NumericArray, NumericData, StructArray,
};
use super::{Endian, MatError, MatFile};

const HEADER_LEN: usize = 128;
const MAX_DEPTH: usize = 64;
const MAX_INFLATED: usize = 1 << 31;

// Data element types.
const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;
const MI_UTF8: u32 = 16;
const MI_UTF16: u32 = 17;
const MI_UTF32: u32 = 18;

// Array classes.
const MX_CELL: u8 = 1;
const MX_STRUCT: u8 = 2;
const MX_OBJECT: u8 = 3;
const MX_CHAR: u8 = 4;
const MX_SPARSE: u8 = 5;
const MX_DOUBLE: u8 = 6;
const MX_UINT64: u8 = 15;
const MX_FUNCTION: u8 = 16;
const MX_OPAQUE: u8 = 17;

const FLAG_COMPLEX: u32 = 0x0800;
const FLAG_LOGICAL: u32 = 0x0200;

/// Parses a complete MAT-file Level 5 byte stream.
pub fn parse_mat(bytes: &[u8]) -> Result<MatFile, MatError> {
    if bytes.len() < HEADER_LEN {
        return Err(MatError::Truncated(format!(
            "{} bytes is shorter than the 128-byte header",
            bytes.len()
        )));
    }
    let header_text = String::from_utf8_lossy(&bytes[..116])
        .trim_end_matches(['\0', ' '])
        .to_string();
    let endian = match &bytes[126..128] {
        b"IM" => Endian::Little,
        b"MI" => Endian::Big,
        other => {
            if header_text.starts_with("MATLAB 7.3") {
                return Err(MatError::UnsupportedVersion("7.3 (HDF5-based)".into()));
            }
            return Err(MatError::Malformed(format!(
                "bad endian indicator {:?}",
                String::from_utf8_lossy(other)
            )));
        }
    };
    let version = match endian {
        Endian::Little => u16::from_le_bytes([bytes[124], bytes[125]]),
        Endian::Big => u16::from_be_bytes([bytes[124], bytes[125]]),
    };
    if version == 0x0200 || header_text.starts_with("MATLAB 7.3") {
        return Err(MatError::UnsupportedVersion("7.3 (HDF5-based)".into()));
    }
    if version != 0x0100 {
        return Err(MatError::UnsupportedVersion(format!("{version:#06x}")));
    }

    let mut file = MatFile::new(header_text, version, endian);
    let mut reader = Reader::new(&bytes[HEADER_LEN..], endian);
    read_top_level(&mut reader, &mut file, 0)?;
    Ok(file)
}

fn read_top_level(
    reader: &mut Reader<'_>,
    file: &mut MatFile,
    depth: usize,
) -> Result<(), MatError> {
    if depth > MAX_DEPTH {
        return Err(MatError::Malformed(
            "compressed elements nested too deeply".into(),
        ));
    }
    while !reader.at_end() {
        // Writers may leave zero fill shorter than a tag at the end.
        if reader.remaining() < 8 && reader.rest().iter().all(|&b| b == 0) {
            break;
        }
        let tag = reader.tag()?;
        match tag.kind {
            MI_COMPRESSED => {
                let payload = reader.take(tag.len)?;
                let inflated = inflate(payload)?;
                let mut inner = Reader::new(&inflated, reader.endian);
                read_top_level(&mut inner, file, depth + 1)?;
            }
            MI_MATRIX => {
                let payload = reader.take_padded(tag)?;
                let (name, value) = parse_matrix(payload, reader.endian, depth + 1)?;
                // Unnamed top-level arrays are subsystem data (class metadata).
                if !name.is_empty() {
                    file.insert(name, value)?;
                }
            }
            other => {
                return Err(MatError::Malformed(format!(
                    "unexpected top-level element type {other}"
                )))
            }
        }
    }
    Ok(())
}

/// Inflates an `miCOMPRESSED` payload (zlib framing: header, deflate, Adler-32).
fn inflate(payload: &[u8]) -> Result<Vec<u8>, MatError> {
    if payload.len() < 2 {
        return Err(MatError::BadStream("missing zlib header".into()));
    }
    let (cmf, flg) = (payload[0], payload[1]);
    if cmf & 0x0f != 8 || (u16::from(cmf) << 8 | u16::from(flg)) % 31 != 0 {
        return Err(MatError::BadStream("invalid zlib header".into()));
    }
    if flg & 0x20 != 0 {
        return Err(MatError::BadStream(
            "preset dictionary not supported".into(),
        ));
    }
    let body = &payload[2..];
    let mut d = Decompress::new(false);
    let mut out = Vec::with_capacity((body.len() * 4).clamp(64, 1 << 24));
    loop {
        if out.len() == out.capacity() {
            if out.len() >= MAX_INFLATED {
                return Err(MatError::BadStream("inflated size exceeds limit".into()));
            }
            out.reserve(out.len().max(64));
        }
        let consumed = d.total_in() as usize;
        let produced = out.len();
        let status = d
            .decompress_vec(&body[consumed..], &mut out, FlushDecompress::None)
            .map_err(|e| MatError::BadStream(e.to_string()))?;
        match status {
            Status::StreamEnd => break,
            Status::Ok | Status::BufError => {
                let stalled = d.total_in() as usize == consumed && out.len() == produced;
                if stalled && out.len() < out.capacity() {
                    return Err(MatError::BadStream("unexpected end of deflate data".into()));
                }
            }
        }
    }
    let end = d.total_in() as usize;
    let trailer = body
        .get(end..end + 4)
        .ok_or_else(|| MatError::BadStream("missing Adler-32 trailer".into()))?;
    let stored = u32::from_be_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    if adler32(&out) != stored {
        return Err(MatError::BadChecksum);
    }
    Ok(out)
}

fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    let (mut a, mut b) = (1u32, 0u32);
    for chunk in data.chunks(5552) {
        for &x in chunk {
            a += u32::from(x);
            b += a;
        }
        a %= MOD;
        b %= MOD;
    }
    (b << 16) | a
}

#[derive(Debug, Clone, Copy)]
struct Tag {
    kind: u32,
    len: usize,
    small: bool,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    endian: Endian,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], endian: Endian) -> Self {
        Reader {
            buf,
            pos: 0,
            endian,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MatError> {
        if n > self.remaining() {
            return Err(MatError::Truncated(format!(
                "element needs {n} bytes, {} remain",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MatError> {
        let b = self.take(4)?;
        let b = [b[0], b[1], b[2], b[3]];
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        })
    }

    fn tag(&mut self) -> Result<Tag, MatError> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            let len = (first >> 16) as usize;
            if len > 4 {
                return Err(MatError::Malformed(format!(
                    "small data element claims {len} bytes"
                )));
            }
            Ok(Tag {
                kind: first & 0xffff,
                len,
                small: true,
            })
        } else {
            let len = self.u32()? as usize;
            Ok(Tag {
                kind: first,
                len,
                small: false,
            })
        }
    }

    /// Data of a non-compressed element, consuming alignment padding.
    fn take_padded(&mut self, tag: Tag) -> Result<&'a [u8], MatError> {
        if tag.small {
            let word = self.take(4)?;
            return Ok(&word[..tag.len]);
        }
        let data = self.take(tag.len)?;
        let pad = (8 - tag.len % 8) % 8;
        // The final element of a stream may omit its padding.
        let pad = pad.min(self.remaining());
        self.take(pad)?;
        Ok(data)
    }

    fn element(&mut self) -> Result<(u32, &'a [u8]), MatError> {
        let tag = self.tag()?;
        let data = self.take_padded(tag)?;
        Ok((tag.kind, data))
    }
}

fn parse_matrix(
    payload: &[u8],
    endian: Endian,
    depth: usize,
) -> Result<(String, MatValue), MatError> {
    if depth > MAX_DEPTH {
        return Err(MatError::Malformed("arrays nested too deeply".into()));
    }
    if payload.is_empty() {
        return Ok((String::new(), MatValue::Empty));
    }
    let mut r = Reader::new(payload, endian);

    let (kind, flags) = r.element()?;
    if kind != MI_UINT32 || flags.len() != 8 {
        return Err(MatError::Malformed("bad array flags subelement".into()));
    }
    let flags = decode_u32(&flags[..4], endian);
    let class = (flags & 0xff) as u8;

    let (kind, dim_bytes) = r.element()?;
    if kind != MI_INT32 || dim_bytes.len() % 4 != 0 {
        return Err(MatError::Malformed("bad dimensions subelement".into()));
    }
    let dims = dim_bytes
        .chunks_exact(4)
        .map(|c| {
            let d = decode_u32(c, endian) as i32;
            usize::try_from(d).map_err(|_| MatError::Malformed(format!("negative dimension {d}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() < 2 {
        return Err(MatError::Malformed("fewer than two dimensions".into()));
    }

    let (kind, name_bytes) = r.element()?;
    if kind != MI_INT8 && kind != MI_UINT8 {
        return Err(MatError::Malformed("bad array name subelement".into()));
    }
    let name = String::from_utf8(name_bytes.to_vec())
        .map_err(|_| MatError::BadText("array name is not valid text".into()))?;

    let value = match class {
        MX_CELL => parse_cell(&mut r, dims, depth)?,
        MX_STRUCT => parse_struct(&mut r, dims, depth)?,
        MX_OBJECT => {
            // Class name, then the same layout as a struct.
            r.element()?;
            parse_struct(&mut r, dims, depth)?
        }
        MX_CHAR => {
            if flags & FLAG_COMPLEX != 0 {
                return Err(MatError::Unsupported("complex character array".into()));
            }
            parse_char(&mut r, dims)?
        }
        MX_SPARSE => return Err(MatError::Unsupported("sparse array".into())),
        MX_DOUBLE..=MX_UINT64 => {
            if flags & FLAG_COMPLEX != 0 {
                return Err(MatError::Unsupported("complex numeric array".into()));
            }
            let (kind, bytes) = r.element()?;
            let raw = decode_numeric(kind, bytes, endian)?;
            let data = convert_class(raw, class);
            let mut array = NumericArray::new(dims, data)?;
            array.logical = flags & FLAG_LOGICAL != 0;
            MatValue::Numeric(array)
        }
        MX_FUNCTION => return Err(MatError::Unsupported("function handle".into())),
        MX_OPAQUE => return Err(MatError::Unsupported("opaque object".into())),
        other => return Err(MatError::UnknownClass(other)),
    };
    Ok((name, value))
}

fn element_count(dims: &[usize], remaining: usize) -> Result<usize, MatError> {
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| MatError::Malformed("dimension product overflows".into()))?;
    // Every nested array needs at least an 8-byte tag.
    if n.checked_mul(8).is_none_or(|b| b > remaining) {
        return Err(MatError::Truncated(format!(
            "{n} nested arrays cannot fit in {remaining} bytes"
        )));
    }
    Ok(n)
}

fn nested_matrix(r: &mut Reader<'_>, depth: usize) -> Result<MatValue, MatError> {
    let (kind, payload) = r.element()?;
    if kind != MI_MATRIX {
        return Err(MatError::Malformed(format!(
            "expected nested array element, found type {kind}"
        )));
    }
    parse_matrix(payload, r.endian, depth + 1).map(|(_, v)| v)
}

fn parse_cell(r: &mut Reader<'_>, dims: Vec<usize>, depth: usize) -> Result<MatValue, MatError> {
    let n = element_count(&dims, r.remaining())?;
    let elements = (0..n)
        .map(|_| nested_matrix(r, depth))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatValue::Cell(CellArray { dims, elements }))
}

fn parse_struct(r: &mut Reader<'_>, dims: Vec<usize>, depth: usize) -> Result<MatValue, MatError> {
    let (kind, len_bytes) = r.element()?;
    if kind != MI_INT32 || len_bytes.len() != 4 {
        return Err(MatError::Malformed(
            "bad field name length subelement".into(),
        ));
    }
    let name_len = decode_u32(len_bytes, r.endian) as usize;
    let (kind, names) = r.element()?;
    if kind != MI_INT8 && kind != MI_UINT8 {
        return Err(MatError::Malformed("bad field names subelement".into()));
    }
    if name_len == 0 && !names.is_empty() || name_len != 0 && names.len() % name_len != 0 {
        return Err(MatError::Malformed(
            "field names do not tile the name block".into(),
        ));
    }
    let mut field_names = Vec::new();
    if name_len != 0 {
        for chunk in names.chunks_exact(name_len) {
            let end = chunk.iter().position(|&b| b == 0).unwrap_or(chunk.len());
            let name = String::from_utf8(chunk[..end].to_vec())
                .map_err(|_| MatError::BadText("field name is not valid text".into()))?;
            if field_names.contains(&name) {
                return Err(MatError::Malformed(format!("duplicate field `{name}`")));
            }
            field_names.push(name);
        }
    }
    let n = if field_names.is_empty() {
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= r.remaining().max(1) * 8)
            .ok_or_else(|| MatError::Malformed("implausible struct dimensions".into()))?
    } else {
        let n = element_count(&dims, r.remaining())?;
        if n.checked_mul(field_names.len() * 8)
            .is_none_or(|b| b > r.remaining())
        {
            return Err(MatError::Truncated("struct fields exceed element".into()));
        }
        n
    };
    let mut elements = Vec::with_capacity(n);
    for _ in 0..n {
        let fields = (0..field_names.len())
            .map(|_| nested_matrix(r, depth))
            .collect::<Result<Vec<_>, _>>()?;
        elements.push(fields);
    }
    Ok(MatValue::Struct(StructArray {
        dims,
        field_names,
        elements,
    }))
}

fn parse_char(r: &mut Reader<'_>, dims: Vec<usize>) -> Result<MatValue, MatError> {
    let count: usize = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| MatError::Malformed("dimension product overflows".into()))?;
    if count == 0 && r.at_end() {
        return Ok(MatValue::Char(CharArray {
            dims,
            text: String::new(),
        }));
    }
    let (kind, bytes) = r.element()?;
    let e = r.endian;
    let text = match kind {
        MI_UTF8 => String::from_utf8(bytes.to_vec())
            .map_err(|_| MatError::BadText("invalid UTF-8".into()))?,
        MI_INT8 | MI_UINT8 => {
            if !bytes.is_ascii() {
                return Err(MatError::BadText(
                    "8-bit character data is not ASCII".into(),
                ));
            }
            String::from_utf8(bytes.to_vec()).expect("ASCII is valid UTF-8")
        }
        MI_UINT16 | MI_UTF16 => {
            if bytes.len() % 2 != 0 {
                return Err(MatError::BadText("odd UTF-16 byte count".into()));
            }
            let units: Vec<u16> = bytes
                .chunks_exact(2)
                .map(|c| match e {
                    Endian::Little => u16::from_le_bytes([c[0], c[1]]),
                    Endian::Big => u16::from_be_bytes([c[0], c[1]]),
                })
                .collect();
            String::from_utf16(&units).map_err(|_| MatError::BadText("invalid UTF-16".into()))?
        }
        MI_UTF32 | MI_UINT32 | MI_INT32 => {
            if bytes.len() % 4 != 0 {
                return Err(MatError::BadText("ragged UTF-32 data".into()));
            }
            bytes
                .chunks_exact(4)
                .map(|c| {
                    char::from_u32(decode_u32(c, e))
                        .ok_or_else(|| MatError::BadText("invalid UTF-32 scalar".into()))
                })
                .collect::<Result<String, _>>()?
        }
        other => {
            return Err(MatError::BadText(format!(
                "unsupported character encoding type {other}"
            )))
        }
    };
    // MATLAB characters are UTF-16 code units.
    check_count(&dims, text.encode_utf16().count())?;
    Ok(MatValue::Char(CharArray { dims, text }))
}

fn decode_u32(b: &[u8], e: Endian) -> u32 {
    let b = [b[0], b[1], b[2], b[3]];
    match e {
        Endian::Little => u32::from_le_bytes(b),
        Endian::Big => u32::from_be_bytes(b),
    }
}

macro_rules! decode_as {
    ($bytes:expr, $e:expr, $t:ty, $n:expr) => {{
        if $bytes.len() % $n != 0 {
            return Err(MatError::Malformed(format!(
                "{} bytes is not a whole number of {}-byte values",
                $bytes.len(),
                $n
            )));
        }
        $bytes
            .chunks_exact($n)
            .map(|c| {
                let arr: [u8; $n] = c.try_into().expect("chunk size");
                match $e {
                    Endian::Little => <$t>::from_le_bytes(arr),
                    Endian::Big => <$t>::from_be_bytes(arr),
                }
            })
            .collect::<Vec<$t>>()
    }};
}

fn decode_numeric(kind: u32, bytes: &[u8], e: Endian) -> Result<NumericData, MatError> {
    Ok(match kind {
        MI_INT8 => NumericData::I8(bytes.iter().map(|&b| b as i8).collect()),
        MI_UINT8 => NumericData::U8(bytes.to_vec()),
        MI_INT16 => NumericData::I16(decode_as!(bytes, e, i16, 2)),
        MI_UINT16 => NumericData::U16(decode_as!(bytes, e, u16, 2)),
        MI_INT32 => NumericData::I32(decode_as!(bytes, e, i32, 4)),
        MI_UINT32 => NumericData::U32(decode_as!(bytes, e, u32, 4)),
        MI_SINGLE => NumericData::F32(decode_as!(bytes, e, f32, 4)),
        MI_DOUBLE => NumericData::F64(decode_as!(bytes, e, f64, 8)),
        MI_INT64 => NumericData::I64(decode_as!(bytes, e, i64, 8)),
        MI_UINT64 => NumericData::U64(decode_as!(bytes, e, u64, 8)),
        other => {
            return Err(MatError::Malformed(format!(
                "numeric data stored with element type {other}"
            )))
        }
    })
}

/// Converts stored values to the array's declared class. Writers commonly
/// store doubles in the narrowest integer type that holds them exactly.
fn convert_class(raw: NumericData, class: u8) -> NumericData {
    use super::value::for_each_numeric;
    macro_rules! to {
        ($variant:ident, $t:ty) => {
            match raw {
                NumericData::$variant(v) => NumericData::$variant(v),
                other => NumericData::$variant(for_each_numeric!(other, v => {
                    v.into_iter().map(|x| x as $t).collect()
                })),
            }
        };
    }
    match class {
        6 => to!(F64, f64),
        7 => to!(F32, f32),
        8 => to!(I8, i8),
        9 => to!(U8, u8),
        10 => to!(I16, i16),
        11 => to!(U16, u16),
        12 => to!(I32, i32),
        13 => to!(U32, u32),
        14 => to!(I64, i64),
        _ => to!(U64, u64),
    }
}
