//! Header decoding for NetCDF classic files.

use super::{FormatVersion, NcError};

const NC_DIMENSION: u32 = 0x0A;
const NC_VARIABLE: u32 = 0x0B;
const NC_ATTRIBUTE: u32 = 0x0C;
const STREAMING: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NcType {
    Byte,
    Char,
    Short,
    Int,
    Float,
    Double,
}

impl NcType {
    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            1 => NcType::Byte,
            2 => NcType::Char,
            3 => NcType::Short,
            4 => NcType::Int,
            5 => NcType::Float,
            6 => NcType::Double,
            _ => return None,
        })
    }

    pub fn width(self) -> usize {
        match self {
            NcType::Byte | NcType::Char => 1,
            NcType::Short => 2,
            NcType::Int | NcType::Float => 4,
            NcType::Double => 8,
        }
    }

    /// The format's default fill value for this type.
    pub fn default_fill(self) -> f64 {
        match self {
            NcType::Byte => -127.0,
            NcType::Char => 0.0,
            NcType::Short => -32767.0,
            NcType::Int => -2147483647.0,
            NcType::Float => 9.969_209_968_386_869e36_f32 as f64,
            NcType::Double => 9.969_209_968_386_869e36,
        }
    }

    /// Decodes element `i` of a big-endian block, widened to f64 (lossless).
    fn decode(self, block: &[u8], i: usize) -> f64 {
        let w = self.width();
        let b = &block[i * w..(i + 1) * w];
        match self {
            NcType::Byte => b[0] as i8 as f64,
            NcType::Char => b[0] as f64,
            NcType::Short => i16::from_be_bytes([b[0], b[1]]) as f64,
            NcType::Int => i32::from_be_bytes(b.try_into().unwrap()) as f64,
            NcType::Float => f32::from_be_bytes(b.try_into().unwrap()) as f64,
            NcType::Double => f64::from_be_bytes(b.try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Text(String),
    Numbers(NcType, Vec<f64>),
}

impl AttrValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            AttrValue::Numbers(..) => None,
        }
    }

    pub fn first_number(&self) -> Option<f64> {
        match self {
            AttrValue::Numbers(_, v) => v.first().copied(),
            AttrValue::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcDimension {
    pub name: String,
    /// 0 marks the record (unlimited) dimension.
    pub length: usize,
}

impl NcDimension {
    pub fn is_record(&self) -> bool {
        self.length == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcVariable {
    pub name: String,
    pub dim_indices: Vec<usize>,
    pub nc_type: NcType,
    pub attributes: Vec<(String, AttrValue)>,
    /// Padded byte size computed from the dimension lengths (per record for
    /// record variables).
    pub vsize: u64,
    /// The size field as written in the header.
    pub header_vsize: u64,
    pub begin_offset: u64,
    pub is_record: bool,
}

impl NcVariable {
    pub fn attribute(&self, name: &str) -> Option<&AttrValue> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn text_attribute(&self, name: &str) -> Option<&str> {
        self.attribute(name).and_then(AttrValue::as_text)
    }
}

/// Decoded header plus the layout facts needed to read data blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NcHeader {
    pub version: FormatVersion,
    pub numrecs: usize,
    pub dimensions: Vec<NcDimension>,
    pub attributes: Vec<(String, AttrValue)>,
    pub variables: Vec<NcVariable>,
    /// Bytes between successive records.
    pub record_size: u64,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], NcError> {
        if n > self.remaining() {
            return Err(NcError::TruncatedData(format!(
                "header needs {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NcError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NcError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn non_neg(&mut self, what: &str) -> Result<usize, NcError> {
        let v = self.u32()?;
        if v > i32::MAX as u32 {
            return Err(NcError::MalformedHeader(format!(
                "{what} {v:#x} is negative"
            )));
        }
        Ok(v as usize)
    }

    fn padding(&mut self, used: usize) -> Result<(), NcError> {
        let pad = pad4(used) - used;
        let at = self.pos;
        if self.take(pad)?.iter().any(|&b| b != 0) {
            return Err(NcError::MalformedHeader(format!(
                "non-zero padding at offset {at}"
            )));
        }
        Ok(())
    }

    fn name(&mut self) -> Result<String, NcError> {
        let len = self.non_neg("name length")?;
        let at = self.pos;
        let raw = self.take(len)?;
        self.padding(len)?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| NcError::MalformedHeader(format!("name at offset {at} is not UTF-8")))?;
        if name.is_empty() {
            return Err(NcError::MalformedHeader(format!("empty name at offset {at}")));
        }
        Ok(name.to_string())
    }

    /// Reads a list tag and element count; `None` for an absent list.
    fn list(&mut self, tag: u32, what: &str) -> Result<usize, NcError> {
        let at = self.pos;
        let t = self.u32()?;
        let n = self.non_neg("list length")?;
        match t {
            0 if n == 0 => Ok(0),
            0 => Err(NcError::MalformedHeader(format!(
                "absent {what} list at offset {at} has non-zero count"
            ))),
            t if t == tag => Ok(n),
            t => Err(NcError::MalformedHeader(format!(
                "expected {what} tag {tag:#x} at offset {at}, found {t:#x}"
            ))),
        }
    }

    fn nc_type(&mut self) -> Result<NcType, NcError> {
        let at = self.pos;
        let code = self.u32()?;
        NcType::from_code(code).ok_or_else(|| {
            NcError::MalformedHeader(format!("unknown type code {code} at offset {at}"))
        })
    }

    fn attributes(&mut self) -> Result<Vec<(String, AttrValue)>, NcError> {
        let n = self.list(NC_ATTRIBUTE, "attribute")?;
        let mut out = Vec::new();
        for _ in 0..n {
            let name = self.name()?;
            let ty = self.nc_type()?;
            let count = self.non_neg("attribute length")?;
            let bytes = count
                .checked_mul(ty.width())
                .filter(|&b| b <= self.remaining())
                .ok_or_else(|| {
                    NcError::TruncatedData(format!("attribute {name} overruns the header"))
                })?;
            let block = self.take(bytes)?;
            self.padding(bytes)?;
            let value = if ty == NcType::Char {
                let end = block.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
                AttrValue::Text(String::from_utf8_lossy(&block[..end]).into_owned())
            } else {
                AttrValue::Numbers(ty, (0..count).map(|i| ty.decode(block, i)).collect())
            };
            out.push((name, value));
        }
        Ok(out)
    }
}

/// Parses the header of a classic-format file and validates every data
/// offset against the file length.
pub fn parse_header(bytes: &[u8]) -> Result<NcHeader, NcError> {
    let version = match super::detect_format(bytes) {
        super::Format::ClassicV1 => FormatVersion::Cdf1,
        super::Format::ClassicV2 => FormatVersion::Cdf2,
        super::Format::Unsupported => return Err(NcError::UnsupportedFormat),
    };
    let mut c = Cursor { buf: bytes, pos: 4 };
    let numrecs_raw = c.u32()?;

    let ndims = c.list(NC_DIMENSION, "dimension")?;
    let mut dimensions: Vec<NcDimension> = Vec::new();
    for _ in 0..ndims {
        let name = c.name()?;
        let length = c.non_neg("dimension length")?;
        if dimensions.iter().any(|d| d.name == name) {
            return Err(NcError::MalformedHeader(format!("duplicate dimension {name}")));
        }
        if length == 0 && dimensions.iter().any(NcDimension::is_record) {
            return Err(NcError::MalformedHeader(
                "more than one record dimension".into(),
            ));
        }
        dimensions.push(NcDimension { name, length });
    }

    let attributes = c.attributes()?;

    let nvars = c.list(NC_VARIABLE, "variable")?;
    let mut variables: Vec<NcVariable> = Vec::new();
    for _ in 0..nvars {
        let name = c.name()?;
        let rank = c.non_neg("variable rank")?;
        if rank.saturating_mul(4) > c.remaining() {
            return Err(NcError::TruncatedData(format!("variable {name} rank overruns header")));
        }
        let mut dim_indices = Vec::with_capacity(rank);
        for pos in 0..rank {
            let d = c.u32()? as usize;
            let dim = dimensions.get(d).ok_or_else(|| {
                NcError::MalformedHeader(format!("variable {name} references missing dimension {d}"))
            })?;
            if dim.is_record() && pos != 0 {
                return Err(NcError::MalformedHeader(format!(
                    "variable {name} uses the record dimension in position {pos}"
                )));
            }
            dim_indices.push(d);
        }
        let vatts = c.attributes()?;
        let nc_type = c.nc_type()?;
        let header_vsize = c.u32()? as u64;
        let begin_offset = match version {
            FormatVersion::Cdf1 => c.u32()? as u64,
            FormatVersion::Cdf2 => c.u64()?,
        };
        let is_record = dim_indices
            .first()
            .is_some_and(|&d| dimensions[d].is_record());
        let slice_len = slice_len(&dimensions, &dim_indices)?;
        let raw = slice_len
            .checked_mul(nc_type.width() as u64)
            .ok_or_else(|| NcError::MalformedHeader(format!("variable {name} is too large")))?;
        variables.push(NcVariable {
            name,
            dim_indices,
            nc_type,
            attributes: vatts,
            vsize: (raw + 3) & !3,
            header_vsize,
            begin_offset,
            is_record,
        });
    }
    let header_end = c.pos as u64;

    let record_vars: Vec<&NcVariable> = variables.iter().filter(|v| v.is_record).collect();
    let record_size = match record_vars.as_slice() {
        [] => 0,
        [only] => slice_len(&dimensions, &only.dim_indices)? * only.nc_type.width() as u64,
        many => many.iter().map(|v| v.vsize).sum(),
    };

    let file_len = bytes.len() as u64;
    let numrecs = if numrecs_raw == STREAMING {
        let first = record_vars.iter().map(|v| v.begin_offset).min().unwrap_or(file_len);
        if record_size == 0 {
            0
        } else {
            (file_len.saturating_sub(first) / record_size) as usize
        }
    } else if numrecs_raw > i32::MAX as u32 {
        return Err(NcError::MalformedHeader(format!("numrecs {numrecs_raw:#x} is negative")));
    } else {
        numrecs_raw as usize
    };

    for v in &variables {
        let slice_bytes = slice_len(&dimensions, &v.dim_indices)? * v.nc_type.width() as u64;
        if v.begin_offset < header_end && slice_bytes > 0 {
            return Err(NcError::MalformedHeader(format!(
                "variable {} begins at {} inside the header",
                v.name, v.begin_offset
            )));
        }
        let end = if v.is_record {
            if numrecs == 0 {
                continue;
            }
            (numrecs as u64 - 1)
                .checked_mul(record_size)
                .and_then(|o| o.checked_add(v.begin_offset))
                .and_then(|o| o.checked_add(slice_bytes))
        } else {
            v.begin_offset.checked_add(slice_bytes)
        };
        match end {
            Some(e) if e <= file_len => {}
            _ => {
                return Err(NcError::TruncatedData(format!(
                    "variable {} data at offset {} runs past the end of the {file_len}-byte file",
                    v.name, v.begin_offset
                )))
            }
        }
    }

    Ok(NcHeader {
        version,
        numrecs,
        dimensions,
        attributes,
        variables,
        record_size,
    })
}

fn slice_len(dims: &[NcDimension], idx: &[usize]) -> Result<u64, NcError> {
    idx.iter()
        .filter(|&&d| !dims[d].is_record())
        .try_fold(1u64, |acc, &d| acc.checked_mul(dims[d].length as u64))
        .ok_or_else(|| NcError::MalformedHeader("variable shape overflows".into()))
}

impl NcHeader {
    pub fn variable(&self, name: &str) -> Option<&NcVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Shape of a variable with the record dimension resolved to `numrecs`.
    pub fn shape(&self, var: &NcVariable) -> Vec<usize> {
        var.dim_indices
            .iter()
            .map(|&d| {
                let dim = &self.dimensions[d];
                if dim.is_record() {
                    self.numrecs
                } else {
                    dim.length
                }
            })
            .collect()
    }

    /// Reads every element of a variable in storage order, widened to f64.
    pub fn read_values(&self, bytes: &[u8], var: &NcVariable) -> Vec<f64> {
        let slice = slice_len(&self.dimensions, &var.dim_indices).unwrap_or(0) as usize;
        let w = var.nc_type.width();
        let begin = var.begin_offset as usize;
        if !var.is_record {
            let block = &bytes[begin..begin + slice * w];
            return (0..slice).map(|i| var.nc_type.decode(block, i)).collect();
        }
        let mut out = Vec::with_capacity(slice * self.numrecs);
        for r in 0..self.numrecs {
            let start = begin + r * self.record_size as usize;
            let block = &bytes[start..start + slice * w];
            out.extend((0..slice).map(|i| var.nc_type.decode(block, i)));
        }
        out
    }
}
