//! On-disk snapshot layout.
//!
//! ```text
//! <root>/v000001/manifest.json
//! <root>/v000001/<variable>.col
//! ```
//!
//! A column file is `WXCOL1`, a u32 cell count, then for every cell in
//! row-major (lat, lon) order a u32 observation count followed by that many
//! (i64 epoch day, f32 value) pairs. Integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Provenance, StoreError, StoreSnapshot, VariableData};
use crate::units::VariableKind;

pub const COLUMN_MAGIC: &[u8; 6] = b"WXCOL1";
const MANIFEST_FORMAT: &str = "skycast-store/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u64,
    lats: Vec<f64>,
    lons: Vec<f64>,
    variables: Vec<ManifestVariable>,
    provenance: Vec<Provenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestVariable {
    name: String,
    kind: VariableKind,
    file: String,
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

fn version_dir(root: &Path, version: u64) -> PathBuf {
    root.join(format!("v{version:06}"))
}

fn column_file_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.col")
}

fn encode_column(data: &VariableData) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(COLUMN_MAGIC);
    out.extend_from_slice(&(data.cells.len() as u32).to_le_bytes());
    for cell in &data.cells {
        out.extend_from_slice(&(cell.len() as u32).to_le_bytes());
        for (day, v) in cell {
            out.extend_from_slice(&day.to_le_bytes());
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn decode_column(bytes: &[u8], expected_cells: usize, file: &str) -> Result<Vec<Vec<(i64, f64)>>, StoreError> {
    let corrupt = |m: &str| StoreError::Corrupt(format!("{file}: {m}"));
    if bytes.len() < 10 || &bytes[..6] != COLUMN_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let ncell = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if ncell != expected_cells {
        return Err(corrupt("cell count does not match the manifest grid"));
    }
    let mut pos = 10;
    let mut cells = Vec::with_capacity(ncell);
    for _ in 0..ncell {
        let n = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| corrupt("truncated"))?;
        let n = u32::from_le_bytes(n.try_into().unwrap()) as usize;
        pos += 4;
        let end = n
            .checked_mul(12)
            .and_then(|b| b.checked_add(pos))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated"))?;
        let mut series = Vec::with_capacity(n);
        for chunk in bytes[pos..end].chunks_exact(12) {
            let day = i64::from_le_bytes(chunk[..8].try_into().unwrap());
            let v = f32::from_le_bytes(chunk[8..].try_into().unwrap());
            series.push((day, v as f64));
        }
        if series.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(corrupt("series days not increasing"));
        }
        cells.push(series);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(cells)
}

/// Writes `snapshot` under `root/v<version>/`, staging in a temporary
/// directory and renaming into place.
pub fn save_snapshot(snapshot: &StoreSnapshot, root: &Path) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(root).map_err(io)?;
    let final_dir = version_dir(root, snapshot.version());
    let staging = root.join(format!(".staging-v{:06}-{}", snapshot.version(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io)?;
    }
    fs::create_dir_all(&staging).map_err(io)?;

    let mut variables = Vec::new();
    for (name, data) in snapshot.variable_data() {
        let file = column_file_name(name);
        fs::write(staging.join(&file), encode_column(data)).map_err(io)?;
        variables.push(ManifestVariable {
            name: name.clone(),
            kind: data.kind,
            file,
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: snapshot.version(),
        lats: snapshot.lats().to_vec(),
        lons: snapshot.lons().to_vec(),
        variables,
        provenance: snapshot.provenance().to_vec(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::Io(e.to_string()))?;
    fs::write(staging.join("manifest.json"), json).map_err(io)?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(io)?;
    }
    fs::rename(&staging, &final_dir).map_err(io)?;
    Ok(final_dir)
}

pub fn load_snapshot(dir: &Path) -> Result<StoreSnapshot, StoreError> {
    let raw = fs::read(dir.join("manifest.json")).map_err(io)?;
    let m: Manifest = serde_json::from_slice(&raw)
        .map_err(|e| StoreError::Corrupt(format!("manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT {
        return Err(StoreError::Corrupt(format!("unknown manifest format {:?}", m.format)));
    }
    let ncell = m.lats.len() * m.lons.len();
    let mut variables = BTreeMap::new();
    for v in m.variables {
        let bytes = fs::read(dir.join(&v.file)).map_err(io)?;
        let cells = decode_column(&bytes, ncell, &v.file)?;
        variables.insert(v.name, Arc::new(VariableData { kind: v.kind, cells }));
    }
    Ok(StoreSnapshot::from_parts(m.version, m.lats, m.lons, variables, m.provenance))
}

/// Snapshot directories under `root`, oldest first.
pub fn snapshot_dirs(root: &Path) -> Result<Vec<(u64, PathBuf)>, StoreError> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io)? {
        let entry = entry.map_err(io)?;
        let name = entry.file_name();
        let Some(v) = name.to_str().and_then(|n| n.strip_prefix('v')).and_then(|n| n.parse().ok()) else {
            continue;
        };
        if entry.path().join("manifest.json").is_file() {
            out.push((v, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Highest-versioned snapshot under `root`, or an empty snapshot.
pub fn load_latest(root: &Path) -> Result<StoreSnapshot, StoreError> {
    match snapshot_dirs(root)?.pop() {
        Some((_, dir)) => load_snapshot(&dir),
        None => Ok(StoreSnapshot::empty()),
    }
}
