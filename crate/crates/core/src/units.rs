//! Variable kinds and unit normalization applied at ingest.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Physical meaning of a gridded field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    /// °C after ingest.
    Temperature,
    /// hPa after ingest.
    Pressure,
    /// mm.
    Rainfall,
    Other,
}

impl VariableKind {
    /// Name used for the variable inside a store.
    pub fn canonical_name(self) -> Option<&'static str> {
        match self {
            VariableKind::Temperature => Some("temperature"),
            VariableKind::Pressure => Some("pressure"),
            VariableKind::Rainfall => Some("rainfall"),
            VariableKind::Other => None,
        }
    }

    /// Guesses the kind from a variable name and optional `units` attribute.
    pub fn classify(name: &str, units: Option<&str>) -> Self {
        let n = name.to_ascii_lowercase();
        match n.as_str() {
            "temp" | "temperature" | "tas" | "t2m" | "t2" | "air" | "tmp" | "tmean" => {
                return VariableKind::Temperature
            }
            "pres" | "pressure" | "psl" | "slp" | "msl" | "ps" | "prmsl" => {
                return VariableKind::Pressure
            }
            "pr" | "precip" | "prcp" | "rain" | "rainfall" | "tp" | "precipitation" => {
                return VariableKind::Rainfall
            }
            _ => {}
        }
        match units.map(|u| u.trim()) {
            Some("K" | "degK" | "kelvin" | "degC" | "celsius" | "degrees_celsius" | "°C") => {
                VariableKind::Temperature
            }
            Some("hPa" | "Pa" | "mbar" | "millibar") => VariableKind::Pressure,
            Some("mm" | "mm/day" | "mm/month") => VariableKind::Rainfall,
            _ => VariableKind::Other,
        }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name().unwrap_or("other"))
    }
}

pub fn kelvin_to_celsius(k: f64) -> f64 {
    k - 273.15
}

/// Converts a raw value to the kind's store unit given its `units` attribute.
/// Unrecognized units pass through unchanged.
pub fn normalize(kind: VariableKind, units: Option<&str>, value: f64) -> f64 {
    match (kind, units.map(str::trim)) {
        (VariableKind::Temperature, Some("K" | "degK" | "kelvin")) => kelvin_to_celsius(value),
        (VariableKind::Pressure, Some("Pa")) => value / 100.0,
        (VariableKind::Rainfall, Some("m")) => value * 1000.0,
        _ => value,
    }
}
