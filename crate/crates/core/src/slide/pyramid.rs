// SPDX-License-Identifier: Apache-2.0

use super::error::SlideError;
use super::image::RgbImage;

/// Halves an image with an integer 2x2 box filter. Each output channel is
/// `floor((sum + floor(count / 2)) / count)` over the up-to-four source
/// pixels that exist, so odd edges average fewer samples.
pub fn downsample(src: &RgbImage) -> RgbImage {
    let (sw, sh) = (src.width(), src.height());
    let (dw, dh) = (sw.div_ceil(2), sh.div_ceil(2));
    let mut data = Vec::with_capacity(dw as usize * dh as usize * 3);
    for y in 0..dh {
        let r0 = src.row(2 * y);
        let r1 = (2 * y + 1 < sh).then(|| src.row(2 * y + 1));
        for x in 0..dw {
            let has_right = 2 * x + 1 < sw;
            let count = (1 + u32::from(has_right)) * (1 + u32::from(r1.is_some()));
            for c in 0..3 {
                let i = (2 * x as usize) * 3 + c;
                let mut sum = u32::from(r0[i]);
                if has_right {
                    sum += u32::from(r0[i + 3]);
                }
                if let Some(r1) = r1 {
                    sum += u32::from(r1[i]);
                    if has_right {
                        sum += u32::from(r1[i + 3]);
                    }
                }
                data.push(((sum + count / 2) / count) as u8);
            }
        }
    }
    RgbImage::from_raw(dw, dh, data).expect("dimensions match")
}

/// Builds levels from the base image until both dimensions fit in one tile.
pub fn build_pyramid(base: RgbImage, tile_size: u32) -> Result<Vec<RgbImage>, SlideError> {
    if base.width() == 0 || base.height() == 0 {
        return Err(SlideError::EmptyImage);
    }
    let tile_size = tile_size.max(1);
    let mut levels = vec![base];
    loop {
        let last = levels.last().expect("non-empty");
        if last.width() <= tile_size && last.height() <= tile_size {
            return Ok(levels);
        }
        let next = downsample(last);
        levels.push(next);
    }
}
