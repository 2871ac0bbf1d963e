//! Heatmap rasters of gridded fields, encoded as binary PPM.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("degenerate colour range: lo {lo} must be below hi {hi}")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("field has no cells")]
    EmptyField,
    #[error("scale must be at least 1")]
    BadScale,
    #[error("invalid palette: {0}")]
    BadPalette(String),
    #[error("invalid PPM: {0}")]
    BadPpm(String),
}

/// Piecewise-linear colour ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    name: String,
    anchors: Vec<(f64, Rgb)>,
    missing_color: Rgb,
}

/// Colours for categorical maps such as cluster ids.
pub const CATEGORICAL: [Rgb; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

impl Palette {
    /// Anchors must start at 0, end at 1 and increase strictly.
    pub fn new(name: &str, anchors: Vec<(f64, Rgb)>, missing_color: Rgb) -> Result<Self, RenderError> {
        if anchors.len() < 2 {
            return Err(RenderError::BadPalette("need at least two anchors".into()));
        }
        if anchors[0].0 != 0.0 || anchors[anchors.len() - 1].0 != 1.0 {
            return Err(RenderError::BadPalette("anchors must span 0 to 1".into()));
        }
        if anchors.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(RenderError::BadPalette("anchors must increase strictly".into()));
        }
        Ok(Self {
            name: name.to_string(),
            anchors,
            missing_color,
        })
    }

    /// Blue through white to red, for temperature.
    pub fn thermal() -> Self {
        Self::new(
            "thermal",
            vec![(0.0, [49, 54, 149]), (0.5, [255, 255, 255]), (1.0, [165, 0, 38])],
            [64, 64, 64],
        )
        .unwrap()
    }

    /// White to dark blue, for rainfall.
    pub fn rain() -> Self {
        Self::new("rain", vec![(0.0, [255, 255, 255]), (1.0, [8, 48, 107])], [64, 64, 64]).unwrap()
    }

    pub fn grayscale() -> Self {
        Self::new("grayscale", vec![(0.0, [0, 0, 0]), (1.0, [255, 255, 255])], [255, 0, 255]).unwrap()
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "thermal" => Some(Self::thermal()),
            "rain" => Some(Self::rain()),
            "grayscale" => Some(Self::grayscale()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn anchors(&self) -> &[(f64, Rgb)] {
        &self.anchors
    }

    pub fn missing_color(&self) -> Rgb {
        self.missing_color
    }
}

/// Maps `value` into the palette after clamping to `[lo, hi]`. Each channel
/// is interpolated between the surrounding anchors and rounded half up.
/// NaN maps to the missing colour.
pub fn color_of(value: f64, lo: f64, hi: f64, palette: &Palette) -> Result<Rgb, RenderError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(RenderError::DegenerateRange { lo, hi });
    }
    if value.is_nan() {
        return Ok(palette.missing_color);
    }
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    let a = &palette.anchors;
    let seg = a.windows(2).position(|w| t <= w[1].0).unwrap_or(a.len() - 2);
    let ((t0, c0), (t1, c1)) = (a[seg], a[seg + 1]);
    let f = (t - t0) / (t1 - t0);
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let (x0, x1) = (c0[ch] as f64, c1[ch] as f64);
        out[ch] = (x0 + f * (x1 - x0) + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

/// Values on a lat/lon grid, row-major by (lat, lon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GridField {
    /// Min and max over unmasked finite values.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(v, m)| !**m && v.is_finite())
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// [`range`](Self::range), widened by 0.5 on each side when flat.
    pub fn auto_range(&self) -> Option<(f64, f64)> {
        self.range()
            .map(|(lo, hi)| if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<Rgb>,
}

fn rasterize(field: &GridField, scale: usize, color: impl Fn(usize) -> Rgb) -> Result<RasterImage, RenderError> {
    let (nlat, nlon) = (field.lats.len(), field.lons.len());
    if nlat == 0 || nlon == 0 || field.values.len() != nlat * nlon || field.mask.len() != nlat * nlon {
        return Err(RenderError::EmptyField);
    }
    if scale == 0 {
        return Err(RenderError::BadScale);
    }
    let north_first = nlat < 2 || field.lats[0] > field.lats[nlat - 1];
    let (width, height) = (nlon * scale, nlat * scale);
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..nlat {
        let lat_idx = if north_first { row } else { nlat - 1 - row };
        let line: Vec<Rgb> = (0..nlon)
            .flat_map(|lon_idx| std::iter::repeat_n(color(lat_idx * nlon + lon_idx), scale))
            .collect();
        for _ in 0..scale {
            pixels.extend_from_slice(&line);
        }
    }
    Ok(RasterImage {
        width,
        height,
        pixels,
    })
}

/// One `scale`×`scale` block per cell, northernmost row at the top.
pub fn render_field(
    field: &GridField,
    lo: f64,
    hi: f64,
    palette: &Palette,
    scale: usize,
) -> Result<RasterImage, RenderError> {
    color_of(lo, lo, hi, palette)?;
    rasterize(field, scale, |i| {
        if field.mask[i] {
            palette.missing_color
        } else {
            color_of(field.values[i], lo, hi, palette).unwrap_or(palette.missing_color)
        }
    })
}

/// Categorical rendering: each value is a class id coloured from [`CATEGORICAL`].
pub fn render_categories(field: &GridField, scale: usize, missing: Rgb) -> Result<RasterImage, RenderError> {
    rasterize(field, scale, |i| {
        let v = field.values[i];
        if field.mask[i] || !(v >= 0.0) {
            missing
        } else {
            CATEGORICAL[v as usize % CATEGORICAL.len()]
        }
    })
}

pub fn encode_ppm(image: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.pixels.len() * 3);
    for p in &image.pixels {
        out.extend_from_slice(p);
    }
    out
}

/// Decodes the canonical P6 form written by [`encode_ppm`].
pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage, RenderError> {
    let bad = |m: &str| RenderError::BadPpm(m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() || start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
        pos += 1;
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let body = &bytes[pos..];
    if Some(body.len()) != width.checked_mul(height).and_then(|n| n.checked_mul(3)) {
        return Err(bad("pixel data length mismatch"));
    }
    Ok(RasterImage {
        width,
        height,
        pixels: body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}

/// Metadata written next to a raster so auto-ranged output can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub variable: String,
    pub date: String,
    pub lo: f64,
    pub hi: f64,
    pub palette: String,
    /// (lats, lons)
    pub grid_shape: [usize; 2],
}
