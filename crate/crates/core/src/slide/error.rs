// SPDX-License-Identifier: Apache-2.0

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum SlideError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("not a PTC1 container (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("container truncated: {0}")]
    TruncatedFile(String),
    #[error("container index corrupt: {0}")]
    IndexCorrupt(String),
    #[error("level {level} out of range (slide has {num_levels})")]
    LevelOutOfRange { level: u32, num_levels: u32 },
    #[error("tile ({col}, {row}) outside the {cols}x{rows} grid of level {level}")]
    TileOutOfRange { level: u32, col: u32, row: u32, cols: u32, rows: u32 },
    #[error("region {width}x{height} exceeds the {cap} pixel cap")]
    RegionTooLarge { width: u32, height: u32, cap: u64 },
    #[error("invalid slide geometry: {0}")]
    InvalidInfo(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl SlideError {
    pub fn code(&self) -> &'static str {
        match self {
            SlideError::EmptyImage => "EMPTY_IMAGE",
            SlideError::BadMagic(_) => "BAD_MAGIC",
            SlideError::UnsupportedVersion(_) => "UNSUPPORTED_VERSION",
            SlideError::TruncatedFile(_) => "TRUNCATED_FILE",
            SlideError::IndexCorrupt(_) => "INDEX_CORRUPT",
            SlideError::LevelOutOfRange { .. } => "LEVEL_OUT_OF_RANGE",
            SlideError::TileOutOfRange { .. } => "TILE_OUT_OF_RANGE",
            SlideError::RegionTooLarge { .. } => "REGION_TOO_LARGE",
            SlideError::InvalidInfo(_) => "INVALID_INFO",
            SlideError::Io(_) => "IO_ERROR",
        }
    }
}
