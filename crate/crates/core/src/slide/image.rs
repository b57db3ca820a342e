// SPDX-License-Identifier: Apache-2.0

pub const WHITE: [u8; 3] = [255, 255, 255];

/// Interleaved 8-bit RGB buffer, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&color);
        }
        RgbImage { width, height, data }
    }

    /// Wraps raw bytes; `None` if the length does not match the dimensions.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(RgbImage { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let start = self.offset(0, y);
        &self.data[start..start + self.width as usize * 3]
    }

    /// Copies the `width` x `height` window at (`x`, `y`); pixels outside the
    /// image are white.
    pub fn crop(&self, x: i64, y: i64, width: u32, height: u32) -> RgbImage {
        let mut out = RgbImage::filled(width, height, WHITE);
        let x0 = x.max(0);
        let x1 = (x + i64::from(width)).min(i64::from(self.width));
        if x0 >= x1 {
            return out;
        }
        for oy in 0..height {
            let sy = y + i64::from(oy);
            if sy < 0 || sy >= i64::from(self.height) {
                continue;
            }
            let src = self.offset(x0 as u32, sy as u32);
            let dst = out.offset((x0 - x) as u32, oy);
            let n = (x1 - x0) as usize * 3;
            out.data[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
        }
        out
    }

    /// Pastes `src` with its upper-left corner at (`x`, `y`), clipping.
    pub fn paste(&mut self, src: &RgbImage, x: i64, y: i64) {
        for sy in 0..src.height {
            let dy = y + i64::from(sy);
            if dy < 0 || dy >= i64::from(self.height) {
                continue;
            }
            let dx0 = x.max(0);
            let dx1 = (x + i64::from(src.width)).min(i64::from(self.width));
            if dx0 >= dx1 {
                continue;
            }
            let s = src.offset((dx0 - x) as u32, sy);
            let d = self.offset(dx0 as u32, dy as u32);
            let n = (dx1 - dx0) as usize * 3;
            self.data[d..d + n].copy_from_slice(&src.data[s..s + n]);
        }
    }
}
