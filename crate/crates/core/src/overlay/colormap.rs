// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{OverlayError, QuantityDescriptor, SemanticKind};

pub const TRANSPARENT: [u8; 4] = [0, 0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub t: f64,
    pub rgba: [u8; 4],
}

const fn cp(t: f64, r: u8, g: u8, b: u8) -> ControlPoint {
    ControlPoint { t, rgba: [r, g, b, 255] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColormapSpec {
    pub colormap_id: String,
    pub semantic_kind: SemanticKind,
    pub control_points: Vec<ControlPoint>,
}

// Default registry tables. One map per semantic kind.
//
// The probability map is viridis-like (dark blue, teal, green, yellow) but
// every channel is non-decreasing, so after per-channel rounding the
// rendered luminance still never drops as the value grows. Real viridis
// lowers red and blue while luminance rises and loses that property.
const BLUE_GREEN_YELLOW: [ControlPoint; 5] = [
    cp(0.0, 68, 1, 84),
    cp(0.25, 68, 82, 120),
    cp(0.5, 68, 145, 120),
    cp(0.75, 120, 201, 120),
    cp(1.0, 253, 231, 120),
];
const BLUE_WHITE_RED: [ControlPoint; 3] = [cp(0.0, 33, 102, 172), cp(0.5, 247, 247, 247), cp(1.0, 178, 24, 43)];
const YELLOW_RED: [ControlPoint; 3] = [cp(0.0, 255, 255, 178), cp(0.5, 253, 141, 60), cp(1.0, 189, 0, 38)];
const GRAY_BLUE: [ControlPoint; 3] = [cp(0.0, 240, 240, 240), cp(0.5, 107, 174, 214), cp(1.0, 8, 48, 107)];

/// The platform registry: exactly one default colormap per semantic kind,
/// ordered by kind.
pub fn default_registry() -> Vec<ColormapSpec> {
    SemanticKind::ALL.iter().map(|&k| default_colormap(k)).collect()
}

pub fn default_colormap(kind: SemanticKind) -> ColormapSpec {
    let (id, points): (&str, &[ControlPoint]) = match kind {
        SemanticKind::Probability => ("blue-green-yellow", &BLUE_GREEN_YELLOW),
        SemanticKind::Attribution => ("blue-white-red", &BLUE_WHITE_RED),
        SemanticKind::Density => ("yellow-red", &YELLOW_RED),
        SemanticKind::Score => ("gray-blue", &GRAY_BLUE),
    };
    ColormapSpec { colormap_id: id.into(), semantic_kind: kind, control_points: points.to_vec() }
}

impl ColormapSpec {
    pub fn validate(&self) -> Result<(), OverlayError> {
        let pts = &self.control_points;
        let bad = |m: &str| Err(OverlayError::InvalidColormap(format!("{}: {m}", self.colormap_id)));
        if pts.len() < 2 {
            return bad("needs at least two control points");
        }
        if pts[0].t != 0.0 || pts[pts.len() - 1].t != 1.0 {
            return bad("control points must start at t=0 and end at t=1");
        }
        if pts.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return bad("t must be strictly increasing");
        }
        Ok(())
    }

    /// Color at normalized position `t` (clamped to [0, 1]).
    pub fn sample(&self, t: f64) -> [u8; 4] {
        let pts = &self.control_points;
        let t = t.clamp(0.0, 1.0);
        let i = pts.partition_point(|p| p.t <= t).clamp(1, pts.len() - 1);
        let (a, b) = (pts[i - 1], pts[i]);
        let s = (t - a.t) / (b.t - a.t);
        let mut out = [0u8; 4];
        for c in 0..4 {
            let (ca, cb) = (f64::from(a.rgba[c]), f64::from(b.rgba[c]));
            out[c] = round_half_up(ca + (cb - ca) * s);
        }
        out
    }
}

fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Relative luminance (Rec. 709 weights) of the RGB part.
pub fn luminance(rgba: [u8; 4]) -> f64 {
    0.2126 * f64::from(rgba[0]) + 0.7152 * f64::from(rgba[1]) + 0.0722 * f64::from(rgba[2])
}

pub fn map_value_to_color(value: f32, quantity: &QuantityDescriptor, colormap: &ColormapSpec) -> Result<[u8; 4], OverlayError> {
    if colormap.semantic_kind != quantity.semantic_kind {
        return Err(OverlayError::KindMismatch { colormap: colormap.semantic_kind, quantity: quantity.semantic_kind });
    }
    if value.is_nan() {
        return Ok(TRANSPARENT);
    }
    let t = (f64::from(value) - quantity.min()) / (quantity.max() - quantity.min());
    Ok(colormap.sample(t))
}

/// Renders a float tile to RGBA8, scaling alpha by `opacity`. Pixels whose
/// alpha ends up zero are emitted as fully transparent black.
pub fn render_tile(
    values: &[f32],
    quantity: &QuantityDescriptor,
    colormap: &ColormapSpec,
    opacity: f64,
) -> Result<Vec<u8>, OverlayError> {
    if !(0.0..=1.0).contains(&opacity) {
        return Err(OverlayError::InvalidOpacity(opacity));
    }
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        let mut px = map_value_to_color(v, quantity, colormap)?;
        px[3] = round_half_up(f64::from(px[3]) * opacity);
        if px[3] == 0 {
            px = TRANSPARENT;
        }
        out.extend_from_slice(&px);
    }
    Ok(out)
}
