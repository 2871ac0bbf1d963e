//! Fixture builders shared by the skycast test suites.
//!
//! [`OracleFile`] is a small NetCDF classic writer built directly from the
//! published format grammar. It shares no code with the parser in
//! `skycast-core`, so files it produces are an independent check on that
//! parser.

pub mod fixtures;
pub mod netcdf;
pub mod oracles;
pub mod random;
pub mod synth;

pub use netcdf::{OracleAttr, OracleFile, OracleVar, VarLayout, Values};
