//! Independent NetCDF classic (CDF-1 / CDF-2) writer.
//!
//! Grammar, big-endian throughout:
//!
//! ```text
//! netcdf_file = header data
//! header      = magic numrecs dim_list gatt_list var_list
//! dim_list    = ABSENT | NC_DIMENSION nelems [dim ...]
//! att_list    = ABSENT | NC_ATTRIBUTE nelems [attr ...]
//! var_list    = ABSENT | NC_VARIABLE nelems [var ...]
//! dim         = name dim_length
//! attr        = name nc_type nelems [values ...]
//! var         = name nelems [dimid ...] vatt_list nc_type vsize begin
//! name        = nelems namestring          (padded to 4 bytes)
//! begin       = INT (CDF-1) | INT64 (CDF-2)
//! ```

const NC_DIMENSION: u32 = 0x0A;
const NC_VARIABLE: u32 = 0x0B;
const NC_ATTRIBUTE: u32 = 0x0C;

/// Typed payload for an attribute or variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Byte(Vec<i8>),
    Char(Vec<u8>),
    Short(Vec<i16>),
    Int(Vec<i32>),
    Float(Vec<f32>),
    Double(Vec<f64>),
}

impl Values {
    pub fn text(s: &str) -> Self {
        Values::Char(s.as_bytes().to_vec())
    }

    pub fn type_code(&self) -> u32 {
        match self {
            Values::Byte(_) => 1,
            Values::Char(_) => 2,
            Values::Short(_) => 3,
            Values::Int(_) => 4,
            Values::Float(_) => 5,
            Values::Double(_) => 6,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Values::Byte(_) | Values::Char(_) => 1,
            Values::Short(_) => 2,
            Values::Int(_) | Values::Float(_) => 4,
            Values::Double(_) => 8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Values::Byte(v) => v.len(),
            Values::Char(v) => v.len(),
            Values::Short(v) => v.len(),
            Values::Int(v) => v.len(),
            Values::Float(v) => v.len(),
            Values::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` widened to f64.
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Values::Byte(v) => v[i] as f64,
            Values::Char(v) => v[i] as f64,
            Values::Short(v) => v[i] as f64,
            Values::Int(v) => v[i] as f64,
            Values::Float(v) => v[i] as f64,
            Values::Double(v) => v[i],
        }
    }

    fn write_range(&self, out: &mut Vec<u8>, start: usize, end: usize) {
        match self {
            Values::Byte(v) => v[start..end].iter().for_each(|x| out.push(*x as u8)),
            Values::Char(v) => out.extend_from_slice(&v[start..end]),
            Values::Short(v) => v[start..end]
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
            Values::Int(v) => v[start..end]
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
            Values::Float(v) => v[start..end]
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
            Values::Double(v) => v[start..end]
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleAttr {
    pub name: String,
    pub values: Values,
}

impl OracleAttr {
    pub fn new(name: &str, values: Values) -> Self {
        Self {
            name: name.to_string(),
            values,
        }
    }
}

/// A variable. For record variables `data` holds every record back to back.
#[derive(Debug, Clone)]
pub struct OracleVar {
    pub name: String,
    pub dims: Vec<usize>,
    pub attrs: Vec<OracleAttr>,
    pub data: Values,
}

impl OracleVar {
    pub fn new(name: &str, dims: &[usize], data: Values) -> Self {
        Self {
            name: name.to_string(),
            dims: dims.to_vec(),
            attrs: Vec::new(),
            data,
        }
    }

    pub fn attr(mut self, name: &str, values: Values) -> Self {
        self.attrs.push(OracleAttr::new(name, values));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    /// Per-variable size (one record's worth for record variables), padded.
    pub vsize: u64,
    pub begin: u64,
    pub is_record: bool,
}

#[derive(Debug, Clone)]
pub struct OracleFile {
    /// 1 for CDF-1, 2 for CDF-2.
    pub version: u8,
    /// Dimension (name, length); length 0 marks the record dimension.
    pub dims: Vec<(String, usize)>,
    pub numrecs: usize,
    pub gatts: Vec<OracleAttr>,
    pub vars: Vec<OracleVar>,
}

fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn push_name(out: &mut Vec<u8>, name: &str) {
    push_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    out.resize(pad4(out.len()), 0);
}

fn push_attrs(out: &mut Vec<u8>, attrs: &[OracleAttr]) {
    if attrs.is_empty() {
        push_u32(out, 0);
        push_u32(out, 0);
        return;
    }
    push_u32(out, NC_ATTRIBUTE);
    push_u32(out, attrs.len() as u32);
    for a in attrs {
        push_name(out, &a.name);
        push_u32(out, a.values.type_code());
        push_u32(out, a.values.len() as u32);
        a.values.write_range(out, 0, a.values.len());
        out.resize(pad4(out.len()), 0);
    }
}

impl OracleFile {
    pub fn new(version: u8) -> Self {
        Self {
            version,
            dims: Vec::new(),
            numrecs: 0,
            gatts: Vec::new(),
            vars: Vec::new(),
        }
    }

    pub fn dim(mut self, name: &str, len: usize) -> Self {
        self.dims.push((name.to_string(), len));
        self
    }

    pub fn numrecs(mut self, n: usize) -> Self {
        self.numrecs = n;
        self
    }

    pub fn var(mut self, v: OracleVar) -> Self {
        self.vars.push(v);
        self
    }

    pub fn gatt(mut self, name: &str, values: Values) -> Self {
        self.gatts.push(OracleAttr::new(name, values));
        self
    }

    fn is_record(&self, v: &OracleVar) -> bool {
        v.dims.first().is_some_and(|&d| self.dims[d].1 == 0)
    }

    /// Element count of one variable slice (one record for record variables).
    fn slice_len(&self, v: &OracleVar) -> usize {
        v.dims
            .iter()
            .filter(|&&d| self.dims[d].1 != 0)
            .map(|&d| self.dims[d].1)
            .product()
    }

    fn header_without_vars(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"CDF");
        out.push(self.version);
        push_u32(&mut out, self.numrecs as u32);
        if self.dims.is_empty() {
            push_u32(&mut out, 0);
            push_u32(&mut out, 0);
        } else {
            push_u32(&mut out, NC_DIMENSION);
            push_u32(&mut out, self.dims.len() as u32);
            for (name, len) in &self.dims {
                push_name(&mut out, name);
                push_u32(&mut out, *len as u32);
            }
        }
        push_attrs(&mut out, &self.gatts);
        out
    }

    fn var_entry(&self, out: &mut Vec<u8>, v: &OracleVar, layout: &VarLayout) {
        push_name(out, &v.name);
        push_u32(out, v.dims.len() as u32);
        for d in &v.dims {
            push_u32(out, *d as u32);
        }
        push_attrs(out, &v.attrs);
        push_u32(out, v.data.type_code());
        push_u32(out, layout.vsize as u32);
        if self.version == 2 {
            out.extend_from_slice(&layout.begin.to_be_bytes());
        } else {
            push_u32(out, layout.begin as u32);
        }
    }

    fn header_len(&self) -> usize {
        let dummy = vec![
            VarLayout {
                vsize: 0,
                begin: 0,
                is_record: false
            };
            self.vars.len()
        ];
        self.header_with(&dummy).len()
    }

    fn header_with(&self, layouts: &[VarLayout]) -> Vec<u8> {
        let mut out = self.header_without_vars();
        if self.vars.is_empty() {
            push_u32(&mut out, 0);
            push_u32(&mut out, 0);
        } else {
            push_u32(&mut out, NC_VARIABLE);
            push_u32(&mut out, self.vars.len() as u32);
            for (v, l) in self.vars.iter().zip(layouts) {
                self.var_entry(&mut out, v, l);
            }
        }
        out
    }

    /// Offsets and sizes the writer assigns, in variable order.
    pub fn layout(&self) -> Vec<VarLayout> {
        let mut offset = self.header_len() as u64;
        let mut layouts = vec![
            VarLayout {
                vsize: 0,
                begin: 0,
                is_record: false
            };
            self.vars.len()
        ];
        // non-record variables first, in definition order
        for (i, v) in self.vars.iter().enumerate() {
            if self.is_record(v) {
                continue;
            }
            let vsize = pad4(self.slice_len(v) * v.data.width()) as u64;
            layouts[i] = VarLayout {
                vsize,
                begin: offset,
                is_record: false,
            };
            offset += vsize;
        }
        for (i, v) in self.vars.iter().enumerate() {
            if !self.is_record(v) {
                continue;
            }
            let vsize = pad4(self.slice_len(v) * v.data.width()) as u64;
            layouts[i] = VarLayout {
                vsize,
                begin: offset,
                is_record: true,
            };
            offset += vsize;
        }
        layouts
    }

    /// Bytes of one record: the sum of record-variable vsizes, except that a
    /// lone record variable is stored without per-record padding.
    pub fn record_size(&self) -> u64 {
        let rec: Vec<&OracleVar> = self.vars.iter().filter(|v| self.is_record(v)).collect();
        match rec.len() {
            0 => 0,
            1 => (self.slice_len(rec[0]) * rec[0].data.width()) as u64,
            _ => rec
                .iter()
                .map(|v| pad4(self.slice_len(v) * v.data.width()) as u64)
                .sum(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layouts = self.layout();
        let mut out = self.header_with(&layouts);
        for (v, l) in self.vars.iter().zip(&layouts) {
            if l.is_record {
                continue;
            }
            assert_eq!(out.len() as u64, l.begin);
            v.data.write_range(&mut out, 0, v.data.len());
            out.resize(pad4(out.len()), 0);
        }
        let recsize = self.record_size() as usize;
        let rec_vars: Vec<(usize, &OracleVar)> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| self.is_record(v))
            .collect();
        for r in 0..self.numrecs {
            let rec_start = out.len();
            for (i, v) in &rec_vars {
                let n = self.slice_len(v);
                let target = layouts[*i].begin as usize + r * recsize;
                assert_eq!(out.len(), target);
                v.data.write_range(&mut out, r * n, (r + 1) * n);
                if rec_vars.len() > 1 {
                    out.resize(pad4(out.len()), 0);
                }
            }
            debug_assert_eq!(out.len() - rec_start, recsize);
        }
        out
    }
}

/// Default fill constants from the format conventions.
pub mod fill {
    pub const BYTE: i8 = -127;
    pub const CHAR: u8 = 0;
    pub const SHORT: i16 = -32767;
    pub const INT: i32 = -2147483647;
    pub const FLOAT: f32 = 9.969_209_968_386_869e36;
    pub const DOUBLE: f64 = 9.969_209_968_386_869e36;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_magic_plus_absent_lists() {
        let bytes = OracleFile::new(1).to_bytes();
        let mut expected = b"CDF\x01".to_vec();
        expected.extend_from_slice(&[0; 4 + 8 * 3]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn lone_record_variable_is_unpadded() {
        let f = OracleFile::new(1)
            .dim("time", 0)
            .numrecs(3)
            .var(OracleVar::new("b", &[0], Values::Byte(vec![1, 2, 3])));
        assert_eq!(f.record_size(), 1);
        let bytes = f.to_bytes();
        let l = f.layout()[0];
        assert_eq!(&bytes[l.begin as usize..], &[1, 2, 3]);
    }
}
