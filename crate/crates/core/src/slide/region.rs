// SPDX-License-Identifier: Apache-2.0

use super::error::SlideError;
use super::image::{RgbImage, WHITE};
use super::reader::SlideReader;

/// Default area cap for region requests (4096 x 4096 pixels).
pub const DEFAULT_REGION_CAP: u64 = 4096 * 4096;

/// Reads a `width` x `height` region at (`x`, `y`) in the coordinate system
/// of `level`, stitched from tiles. Pixels outside the level extent are
/// white; the origin may be negative.
pub fn read_region(
    reader: &(impl SlideReader + ?Sized),
    level: u32,
    x: i64,
    y: i64,
    width: u32,
    height: u32,
    cap: u64,
) -> Result<RgbImage, SlideError> {
    let info = reader.info();
    let (level_w, level_h) = info.level_dims(level).ok_or(SlideError::LevelOutOfRange {
        level,
        num_levels: info.num_levels,
    })?;
    if width == 0 || height == 0 || u64::from(width) * u64::from(height) > cap {
        return Err(SlideError::RegionTooLarge { width, height, cap });
    }
    let mut out = RgbImage::filled(width, height, WHITE);
    // Clip to the level extent; everything else stays white.
    let x0 = x.max(0);
    let y0 = y.max(0);
    let x1 = (x + i64::from(width)).min(level_w as i64);
    let y1 = (y + i64::from(height)).min(level_h as i64);
    if x0 >= x1 || y0 >= y1 {
        return Ok(out);
    }
    let tile = i64::from(info.tile_size);
    for row in (y0 / tile)..=((y1 - 1) / tile) {
        for col in (x0 / tile)..=((x1 - 1) / tile) {
            let bytes = reader.read_tile(level, col as u32, row as u32)?;
            let tile_img = RgbImage::from_raw(info.tile_size, info.tile_size, bytes)
                .ok_or_else(|| SlideError::IndexCorrupt("tile payload has the wrong size".into()))?;
            // Copy only the in-extent part of each tile.
            let tx0 = (col * tile).max(x0);
            let ty0 = (row * tile).max(y0);
            let tx1 = ((col + 1) * tile).min(x1);
            let ty1 = ((row + 1) * tile).min(y1);
            let part = tile_img.crop(tx0 - col * tile, ty0 - row * tile, (tx1 - tx0) as u32, (ty1 - ty0) as u32);
            out.paste(&part, tx0 - x, ty0 - y);
        }
    }
    Ok(out)
}
