//! NetCDF classic (CDF-1 / CDF-2) reader and CSV converter.
//!
//! Only the classic container is understood. NetCDF-4 files are HDF5
//! containers; [`detect_format`] reports them as unsupported and
//! [`parse_classic`] refuses them with [`NcError::UnsupportedFormat`].

mod csv;
mod dataset;
mod header;

pub use csv::convert_to_csv;
pub use dataset::{parse_classic, Field, FieldView, GridDataset};
pub use header::{parse_header, AttrValue, NcDimension, NcHeader, NcType, NcVariable};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NcError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated data: {0}")]
    TruncatedData(String),
    #[error("no latitude/longitude coordinate variables")]
    MissingCoordinates,
    #[error("not a NetCDF classic file")]
    UnsupportedFormat,
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("invalid axis: {0}")]
    BadAxis(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    ClassicV1,
    ClassicV2,
    Unsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatVersion {
    /// 32-bit offsets.
    Cdf1,
    /// 64-bit offsets.
    Cdf2,
}

/// Identifies the container from its first four bytes. Shorter inputs are
/// reported as unsupported.
pub fn detect_format(prefix: &[u8]) -> Format {
    match prefix {
        [b'C', b'D', b'F', 1, ..] => Format::ClassicV1,
        [b'C', b'D', b'F', 2, ..] => Format::ClassicV2,
        _ => Format::Unsupported,
    }
}
