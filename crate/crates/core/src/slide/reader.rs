// SPDX-License-Identifier: Apache-2.0

use super::error::SlideError;
use super::image::RgbImage;
use super::pyramid::build_pyramid;
use crate::model::SlideInfo;
use crate::Id;

/// Format-independent tile access. Every slide source the platform serves
/// implements this; callers never see the storage format.
pub trait SlideReader: Send + Sync {
    fn info(&self) -> &SlideInfo;

    /// Returns the `tile_size x tile_size` RGB8 tile, white-padded at edges.
    fn read_tile(&self, level: u32, col: u32, row: u32) -> Result<Vec<u8>, SlideError>;
}

/// Cuts tile (`col`, `row`) out of a level buffer, padding with white.
pub(crate) fn tile_from_level(level: &RgbImage, tile: u32, col: u32, row: u32) -> Vec<u8> {
    level
        .crop(i64::from(col) * i64::from(tile), i64::from(row) * i64::from(tile), tile, tile)
        .into_bytes()
}

/// A slide held as in-memory level buffers, with the pyramid built on the
/// fly from a base image (used for raw image imports).
#[derive(Debug, Clone)]
pub struct MemorySlide {
    info: SlideInfo,
    levels: Vec<RgbImage>,
}

impl MemorySlide {
    pub fn from_base(slide_id: Id, base: RgbImage, tile_size: u32, pixel_size_nm: u64) -> Result<Self, SlideError> {
        let info = SlideInfo::new(slide_id, u64::from(base.width()), u64::from(base.height()), tile_size, pixel_size_nm);
        info.validate().map_err(|e| SlideError::InvalidInfo(e.to_string()))?;
        let levels = build_pyramid(base, tile_size)?;
        Ok(MemorySlide { info, levels })
    }

    pub fn levels(&self) -> &[RgbImage] {
        &self.levels
    }

    pub fn into_parts(self) -> (SlideInfo, Vec<RgbImage>) {
        (self.info, self.levels)
    }
}

impl SlideReader for MemorySlide {
    fn info(&self) -> &SlideInfo {
        &self.info
    }

    fn read_tile(&self, level: u32, col: u32, row: u32) -> Result<Vec<u8>, SlideError> {
        let (cols, rows) = self.info.grid(level).ok_or(SlideError::LevelOutOfRange {
            level,
            num_levels: self.info.num_levels,
        })?;
        if col >= cols || row >= rows {
            return Err(SlideError::TileOutOfRange { level, col, row, cols, rows });
        }
        Ok(tile_from_level(&self.levels[level as usize], self.info.tile_size, col, row))
    }
}
