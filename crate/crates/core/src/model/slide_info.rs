// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::Id;

pub const FORMAT_PTC1: &str = "PTC1";

/// Geometry and provenance-free metadata of a pyramidal slide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideInfo {
    pub slide_id: Id,
    pub width_base: u64,
    pub height_base: u64,
    pub num_levels: u32,
    pub tile_size: u32,
    pub pixel_size_nm: u64,
    pub channels: u8,
    pub format_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SlideInfoError {
    #[error("slide must be at least 1x1 pixels")]
    Empty,
    #[error("tile size {0} is not one of 256, 512")]
    TileSize(u32),
    #[error("pixel size must be positive")]
    PixelSize,
    #[error("expected 3 channels, found {0}")]
    Channels(u8),
    #[error("pyramid of {width}x{height} with tile size {tile_size} needs {expected} levels, found {found}")]
    LevelCount { width: u64, height: u64, tile_size: u32, expected: u32, found: u32 },
}

/// Dimensions of `level` for a base image of `width` x `height`.
pub fn level_dims(width: u64, height: u64, level: u32) -> (u64, u64) {
    if level >= 64 {
        return (1, 1);
    }
    let div = 1u64 << level;
    (width.div_ceil(div), height.div_ceil(div))
}

/// Number of levels needed until both dimensions fit in one tile.
pub fn levels_for(width: u64, height: u64, tile_size: u32) -> u32 {
    let tile = u64::from(tile_size.max(1));
    let mut level = 0;
    loop {
        let (w, h) = level_dims(width, height, level);
        if w <= tile && h <= tile {
            return level + 1;
        }
        level += 1;
    }
}

/// Tile grid (columns, rows) covering a level of the given dimensions.
pub fn grid_for(level_width: u64, level_height: u64, tile_size: u32) -> (u32, u32) {
    let tile = u64::from(tile_size.max(1));
    (level_width.div_ceil(tile) as u32, level_height.div_ceil(tile) as u32)
}

impl SlideInfo {
    pub fn new(slide_id: Id, width_base: u64, height_base: u64, tile_size: u32, pixel_size_nm: u64) -> Self {
        SlideInfo {
            slide_id,
            width_base,
            height_base,
            num_levels: levels_for(width_base, height_base, tile_size),
            tile_size,
            pixel_size_nm,
            channels: 3,
            format_name: FORMAT_PTC1.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), SlideInfoError> {
        if self.width_base == 0 || self.height_base == 0 {
            return Err(SlideInfoError::Empty);
        }
        if !matches!(self.tile_size, 256 | 512) {
            return Err(SlideInfoError::TileSize(self.tile_size));
        }
        if self.pixel_size_nm == 0 {
            return Err(SlideInfoError::PixelSize);
        }
        if self.channels != 3 {
            return Err(SlideInfoError::Channels(self.channels));
        }
        let expected = levels_for(self.width_base, self.height_base, self.tile_size);
        if expected != self.num_levels {
            return Err(SlideInfoError::LevelCount {
                width: self.width_base,
                height: self.height_base,
                tile_size: self.tile_size,
                expected,
                found: self.num_levels,
            });
        }
        Ok(())
    }

    pub fn level_dims(&self, level: u32) -> Option<(u64, u64)> {
        (level < self.num_levels).then(|| level_dims(self.width_base, self.height_base, level))
    }

    pub fn grid(&self, level: u32) -> Option<(u32, u32)> {
        self.level_dims(level).map(|(w, h)| grid_for(w, h, self.tile_size))
    }

    pub fn tile_bytes(&self) -> usize {
        self.tile_size as usize * self.tile_size as usize * 3
    }
}
