// SPDX-License-Identifier: Apache-2.0

//! Pixel-wise float overlays. Values (content) and colormaps
//! (representation) are separate types; only [`render_tile`] combines them.

mod colormap;
mod pyramid;
mod quantity;

pub use colormap::{
    default_colormap, default_registry, luminance, map_value_to_color, render_tile, ColormapSpec, ControlPoint,
    TRANSPARENT,
};
pub use pyramid::{decode_values, encode_values, OverlayPyramid};
pub use quantity::{QuantityDescriptor, SemanticKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OverlayError {
    #[error("invalid quantity descriptor: {0}")]
    InvalidQuantity(String),
    #[error("invalid colormap: {0}")]
    InvalidColormap(String),
    #[error("colormap serves {colormap} but quantity is {quantity}")]
    KindMismatch { colormap: SemanticKind, quantity: SemanticKind },
    #[error("unknown colormap {0}")]
    UnknownColormap(String),
    #[error("tile payload has {found} values, expected {expected}")]
    GeometryMismatch { expected: usize, found: usize },
    #[error("value {value} at index {index} outside [{min}, {max}]")]
    ValueOutOfRange { index: usize, value: f32, min: f64, max: f64 },
    #[error("overlay is sealed")]
    Sealed,
    #[error("level {level} out of range (overlay has {num_levels} levels)")]
    LevelOutOfRange { level: u32, num_levels: u32 },
    #[error("tile ({col}, {row}) outside the {cols}x{rows} grid")]
    TileOutOfRange { col: u32, row: u32, cols: u32, rows: u32 },
    #[error("opacity {0} outside [0, 1]")]
    InvalidOpacity(f64),
}

impl OverlayError {
    pub fn code(&self) -> &'static str {
        match self {
            OverlayError::InvalidQuantity(_) => "INVALID_QUANTITY",
            OverlayError::InvalidColormap(_) => "INVALID_COLORMAP",
            OverlayError::KindMismatch { .. } => "KIND_MISMATCH",
            OverlayError::UnknownColormap(_) => "NOT_FOUND",
            OverlayError::GeometryMismatch { .. } => "GEOMETRY_MISMATCH",
            OverlayError::ValueOutOfRange { .. } => "VALUE_OUT_OF_RANGE",
            OverlayError::Sealed => "SEALED",
            OverlayError::LevelOutOfRange { .. } => "LEVEL_OUT_OF_RANGE",
            OverlayError::TileOutOfRange { .. } => "TILE_OUT_OF_RANGE",
            OverlayError::InvalidOpacity(_) => "INVALID_OPACITY",
        }
    }
}
