use super::MatError;

/// Storage kind of a numeric array, matching the MATLAB array class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericKind {
    F64,
    F32,
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumericData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I8(Vec<i8>),
    U8(Vec<u8>),
    I16(Vec<i16>),
    U16(Vec<u16>),
    I32(Vec<i32>),
    U32(Vec<u32>),
    I64(Vec<i64>),
    U64(Vec<u64>),
}

macro_rules! for_each_numeric {
    ($data:expr, $v:ident => $body:expr) => {
        match $data {
            NumericData::F64($v) => $body,
            NumericData::F32($v) => $body,
            NumericData::I8($v) => $body,
            NumericData::U8($v) => $body,
            NumericData::I16($v) => $body,
            NumericData::U16($v) => $body,
            NumericData::I32($v) => $body,
            NumericData::U32($v) => $body,
            NumericData::I64($v) => $body,
            NumericData::U64($v) => $body,
        }
    };
}
pub(crate) use for_each_numeric;

impl NumericData {
    pub fn len(&self) -> usize {
        for_each_numeric!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> NumericKind {
        match self {
            NumericData::F64(_) => NumericKind::F64,
            NumericData::F32(_) => NumericKind::F32,
            NumericData::I8(_) => NumericKind::I8,
            NumericData::U8(_) => NumericKind::U8,
            NumericData::I16(_) => NumericKind::I16,
            NumericData::U16(_) => NumericKind::U16,
            NumericData::I32(_) => NumericKind::I32,
            NumericData::U32(_) => NumericKind::U32,
            NumericData::I64(_) => NumericKind::I64,
            NumericData::U64(_) => NumericKind::U64,
        }
    }

    /// Values widened to `f64`, column-major.
    #[allow(clippy::unnecessary_cast)]
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NumericData::F64(v) => v.clone(),
            other => for_each_numeric!(other, v => v.iter().map(|&x| x as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericArray {
    pub dims: Vec<usize>,
    pub data: NumericData,
    /// Set for MATLAB `logical` arrays (stored as `u8`).
    pub logical: bool,
}

impl NumericArray {
    pub fn new(dims: Vec<usize>, data: NumericData) -> Result<Self, MatError> {
        check_count(&dims, data.len())?;
        Ok(NumericArray {
            dims,
            data,
            logical: false,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Character array. `text` holds the characters in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CharArray {
    pub dims: Vec<usize>,
    pub text: String,
}

impl CharArray {
    /// Splits a 2-D character matrix into its rows.
    pub fn rows(&self) -> Vec<String> {
        let units: Vec<u16> = self.text.encode_utf16().collect();
        let nrows = self.dims.first().copied().unwrap_or(0);
        if nrows <= 1 {
            return vec![self.text.clone()];
        }
        let ncols = units.len() / nrows;
        (0..nrows)
            .map(|r| {
                let row: Vec<u16> = (0..ncols).map(|c| units[r + c * nrows]).collect();
                String::from_utf16_lossy(&row)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructArray {
    pub dims: Vec<usize>,
    pub field_names: Vec<String>,
    /// One entry per element (column-major); each holds one value per field.
    pub elements: Vec<Vec<MatValue>>,
}

impl StructArray {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.field_names.iter().position(|f| f == name)
    }

    pub fn field(&self, element: usize, name: &str) -> Option<&MatValue> {
        let f = self.field_index(name)?;
        self.elements.get(element).map(|e| &e[f])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellArray {
    pub dims: Vec<usize>,
    pub elements: Vec<MatValue>,
}

/// A decoded MAT array.
#[derive(Debug, Clone, PartialEq)]
pub enum MatValue {
    Numeric(NumericArray),
    Char(CharArray),
    Struct(StructArray),
    Cell(CellArray),
    /// An element with no content at all (zero-length `miMATRIX`).
    Empty,
}

impl MatValue {
    pub fn dims(&self) -> &[usize] {
        match self {
            MatValue::Numeric(a) => &a.dims,
            MatValue::Char(a) => &a.dims,
            MatValue::Struct(a) => &a.dims,
            MatValue::Cell(a) => &a.dims,
            MatValue::Empty => &[0, 0],
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims().iter().product()
    }

    /// True for `[]`-like values of any class.
    pub fn is_empty(&self) -> bool {
        self.element_count() == 0
    }

    pub fn as_numeric(&self) -> Option<&NumericArray> {
        match self {
            MatValue::Numeric(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_struct(&self) -> Option<&StructArray> {
        match self {
            MatValue::Struct(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_cell(&self) -> Option<&CellArray> {
        match self {
            MatValue::Cell(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            MatValue::Char(a) => Some(&a.text),
            _ => None,
        }
    }

    /// Numeric contents widened to `f64`.
    pub fn to_f64_vec(&self) -> Option<Vec<f64>> {
        self.as_numeric().map(|a| a.data.to_f64())
    }

    /// The single value of a 1x1 numeric array.
    pub fn scalar(&self) -> Option<f64> {
        let a = self.as_numeric()?;
        if a.len() != 1 {
            return None;
        }
        Some(a.data.to_f64()[0])
    }
}

/// Borrowed position inside a [`MatValue`] tree. Selecting one element of a
/// struct array yields a `Record` rather than a copied value.
#[derive(Debug, Clone, Copy)]
pub enum Node<'a> {
    Value(&'a MatValue),
    Record(&'a StructArray, usize),
}

impl<'a> Node<'a> {
    pub fn field(self, name: &str) -> Result<Node<'a>, MatError> {
        let (array, element) = match self {
            Node::Record(a, i) => (a, i),
            Node::Value(MatValue::Struct(a)) if a.len() == 1 => (a, 0),
            Node::Value(MatValue::Struct(a)) => {
                return Err(MatError::TypeMismatch(format!(
                    "field `{name}` of a {}-element struct array needs an index",
                    a.len()
                )))
            }
            Node::Value(_) => {
                return Err(MatError::TypeMismatch(format!(
                    "field `{name}` requested from a non-struct value"
                )))
            }
        };
        array
            .field(element, name)
            .map(Node::Value)
            .ok_or_else(|| MatError::NoSuchField(name.to_string()))
    }

    pub fn index(self, index: usize) -> Result<Node<'a>, MatError> {
        let check = |len: usize| {
            if index < len {
                Ok(())
            } else {
                Err(MatError::IndexOutOfRange { index, len })
            }
        };
        match self {
            Node::Value(MatValue::Struct(a)) => {
                check(a.len())?;
                Ok(Node::Record(a, index))
            }
            Node::Value(MatValue::Cell(c)) => {
                check(c.elements.len())?;
                Ok(Node::Value(&c.elements[index]))
            }
            Node::Record(_, _) if index == 0 => Ok(self),
            Node::Record(_, _) => Err(MatError::IndexOutOfRange { index, len: 1 }),
            Node::Value(_) => Err(MatError::TypeMismatch(
                "only struct and cell arrays can be indexed".into(),
            )),
        }
    }

    /// The addressed value, if this node is a whole value.
    pub fn value(self) -> Option<&'a MatValue> {
        match self {
            Node::Value(v) => Some(v),
            Node::Record(a, 0) if a.len() == 1 => None,
            Node::Record(..) => None,
        }
    }

    /// Owned copy of the addressed value; a record becomes a 1x1 struct.
    pub fn to_value(self) -> MatValue {
        match self {
            Node::Value(v) => v.clone(),
            Node::Record(a, i) => MatValue::Struct(StructArray {
                dims: vec![1, 1],
                field_names: a.field_names.clone(),
                elements: vec![a.elements[i].clone()],
            }),
        }
    }

    pub fn scalar(self) -> Option<f64> {
        self.value().and_then(MatValue::scalar)
    }
}

pub(crate) fn check_count(dims: &[usize], count: usize) -> Result<(), MatError> {
    let product = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| MatError::Malformed("dimension product overflows".into()))?;
    if product != count {
        return Err(MatError::Malformed(format!(
            "dims {dims:?} imply {product} elements, found {count}"
        )));
    }
    Ok(())
}
