// SPDX-License-Identifier: Apache-2.0

//! Deterministic synthetic IHC-like slides with ground truth.
//!
//! Cells are filled discs on a near-white textured background. Positive
//! cells use base color (120, 66, 18), negative cells (70, 70, 160). Radii
//! are 6..=10 px. Discs keep a gap of [`CELL_GAP`] px so that no two cells
//! touch. A scanner variant applies a per-channel affine color shift to the
//! whole image after rendering.

use serde::{Deserialize, Serialize};

use super::error::SlideError;
use super::image::RgbImage;
use crate::Id;

pub const POSITIVE_COLOR: [u8; 3] = [120, 66, 18];
pub const NEGATIVE_COLOR: [u8; 3] = [70, 70, 160];
pub const MIN_RADIUS: i64 = 6;
pub const MAX_RADIUS: i64 = 10;
pub const CELL_GAP: i64 = 3;
pub const MAX_PLACEMENT_ATTEMPTS: u64 = 100_000;

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish integer in `0..n` (modulo reduction).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }
}

/// Per-channel affine shift `c' = clamp(round(gain * c / 1000 + offset))`,
/// gains in thousandths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScannerShift {
    pub gain_milli: [i32; 3],
    pub offset: [i32; 3],
}

/// Known scanner variants and their color shifts.
pub const SCANNER_VARIANTS: &[(&str, ScannerShift)] = &[
    ("scanner-a", ScannerShift { gain_milli: [1000, 1000, 1000], offset: [0, 0, 0] }),
    ("scanner-b", ScannerShift { gain_milli: [940, 970, 900], offset: [10, 4, 14] }),
    ("scanner-c", ScannerShift { gain_milli: [1030, 950, 1020], offset: [-6, 6, -4] }),
];

pub fn scanner_shift(variant: &str) -> Option<ScannerShift> {
    SCANNER_VARIANTS.iter().find(|(name, _)| *name == variant).map(|(_, s)| *s)
}

impl ScannerShift {
    pub fn apply(&self, rgb: [u8; 3]) -> [u8; 3] {
        let mut out = [0u8; 3];
        for c in 0..3 {
            let scaled = self.gain_milli[c] * i32::from(rgb[c]) + self.offset[c] * 1000;
            out[c] = ((scaled + 500).div_euclid(1000)).clamp(0, 255) as u8;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: u32,
    pub height: u32,
    pub n_positive: u32,
    pub n_negative: u32,
    #[serde(default = "default_scanner")]
    pub scanner_variant: String,
    #[serde(default = "default_antibody")]
    pub antibody_variant: String,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    #[serde(default = "default_pixel_size")]
    pub pixel_size_nm: u64,
}

fn default_scanner() -> String {
    "scanner-a".into()
}
fn default_antibody() -> String {
    "ab-22c3".into()
}
fn default_tile_size() -> u32 {
    256
}
fn default_pixel_size() -> u64 {
    250
}

impl SyntheticSpec {
    pub fn new(width: u32, height: u32, n_positive: u32, n_negative: u32) -> Self {
        SyntheticSpec {
            width,
            height,
            n_positive,
            n_negative,
            scanner_variant: default_scanner(),
            antibody_variant: default_antibody(),
            tile_size: default_tile_size(),
            pixel_size_nm: default_pixel_size(),
        }
    }

    pub fn with_scanner(mut self, variant: &str) -> Self {
        self.scanner_variant = variant.to_string();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Positive,
    Negative,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthCell {
    pub center: [i64; 2],
    pub radius: i64,
    pub class: CellClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSheet {
    pub slide_id: Id,
    pub cells: Vec<GroundTruthCell>,
    pub generator_seed: u64,
    pub scanner_variant: String,
    pub antibody_variant: String,
}

impl GroundTruthSheet {
    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| c.class == class).count()
    }

    /// Cells whose center lies in the half-open box `[x, x+w) x [y, y+h)`.
    pub fn cells_in(&self, x: i64, y: i64, w: i64, h: i64) -> impl Iterator<Item = &GroundTruthCell> {
        self.cells
            .iter()
            .filter(move |c| (x..x + w).contains(&c.center[0]) && (y..y + h).contains(&c.center[1]))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("PLACEMENT_OVERFLOW: could not place {requested} cells within {MAX_PLACEMENT_ATTEMPTS} attempts ({placed} placed)")]
    PlacementOverflow { requested: u32, placed: usize },
    #[error("INVALID_SPEC: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Slide(#[from] SlideError),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::PlacementOverflow { .. } => "PLACEMENT_OVERFLOW",
            SynthError::InvalidSpec(_) => "INVALID_SPEC",
            SynthError::Slide(e) => e.code(),
        }
    }
}

/// Base image plus ground truth for a synthetic slide.
#[derive(Debug, Clone)]
pub struct SyntheticSlide {
    pub base: RgbImage,
    pub ground_truth: GroundTruthSheet,
}

/// Renders a synthetic slide. Output depends only on `seed` and `spec`.
pub fn generate(seed: u64, spec: &SyntheticSpec, slide_id: Id) -> Result<SyntheticSlide, SynthError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(SynthError::InvalidSpec("slide must be at least 1x1".into()));
    }
    let shift = scanner_shift(&spec.scanner_variant)
        .ok_or_else(|| SynthError::InvalidSpec(format!("unknown scanner variant {:?}", spec.scanner_variant)))?;
    let cells = place_cells(seed, spec)?;

    let mut texture = SplitMix64::new(seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut data = Vec::with_capacity(spec.width as usize * spec.height as usize * 3);
    for _ in 0..spec.width as usize * spec.height as usize {
        let r = texture.next_u64();
        let v = 232 + (r % 24) as u8;
        let tint = ((r >> 8) % 5) as u8;
        data.extend_from_slice(&[v, v.saturating_sub(tint), v]);
    }
    let mut base = RgbImage::from_raw(spec.width, spec.height, data).expect("sized");
    for cell in &cells {
        let color = match cell.class {
            CellClass::Positive => POSITIVE_COLOR,
            _ => NEGATIVE_COLOR,
        };
        let [cx, cy] = cell.center;
        let r = cell.radius;
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    base.set_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    if shift != SCANNER_VARIANTS[0].1 {
        for y in 0..spec.height {
            for x in 0..spec.width {
                let p = base.pixel(x, y);
                base.set_pixel(x, y, shift.apply(p));
            }
        }
    }
    Ok(SyntheticSlide {
        base,
        ground_truth: GroundTruthSheet {
            slide_id,
            cells,
            generator_seed: seed,
            scanner_variant: spec.scanner_variant.clone(),
            antibody_variant: spec.antibody_variant.clone(),
        },
    })
}

fn place_cells(seed: u64, spec: &SyntheticSpec) -> Result<Vec<GroundTruthCell>, SynthError> {
    let mut rng = SplitMix64::new(seed);
    let requested = spec.n_positive + spec.n_negative;
    let mut cells: Vec<GroundTruthCell> = Vec::with_capacity(requested as usize);
    let mut attempts = 0u64;
    let classes = std::iter::repeat_n(CellClass::Positive, spec.n_positive as usize)
        .chain(std::iter::repeat_n(CellClass::Negative, spec.n_negative as usize));
    for class in classes {
        let radius = MIN_RADIUS + rng.below((MAX_RADIUS - MIN_RADIUS + 1) as u64) as i64;
        let span_x = i64::from(spec.width) - 2 * radius;
        let span_y = i64::from(spec.height) - 2 * radius;
        loop {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS || span_x <= 0 || span_y <= 0 {
                return Err(SynthError::PlacementOverflow { requested, placed: cells.len() });
            }
            let center = [radius + rng.below(span_x as u64) as i64, radius + rng.below(span_y as u64) as i64];
            let clear = cells.iter().all(|c| {
                let min = c.radius + radius + CELL_GAP;
                (c.center[0] - center[0]).pow(2) + (c.center[1] - center[1]).pow(2) >= min * min
            });
            if clear {
                cells.push(GroundTruthCell { center, radius, class });
                break;
            }
        }
    }
    Ok(cells)
}
