// SPDX-License-Identifier: Apache-2.0

use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::synth::{SplitMix64, SyntheticSpec};
use pathharbor_core::slide::{build_pyramid, read_region, MemorySlide, RgbImage, SlideReader, DEFAULT_REGION_CAP};
use pathharbor_core::Id;
use proptest::prelude::*;

/// Pixel of level `i` straight from the base buffer, children first.
fn oracle_pixel(base: &RgbImage, i: u32, x: u64, y: u64) -> [u8; 3] {
    if i == 0 {
        return base.pixel(x as u32, y as u32);
    }
    let (w, h) = (u64::from(base.width()), u64::from(base.height()));
    let d = 1u64 << (i - 1);
    let (cw, ch) = (w.div_ceil(d), h.div_ceil(d));
    let mut sum = [0u32; 3];
    let mut n = 0u32;
    for (cx, cy) in [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)] {
        if cx < cw && cy < ch {
            let p = oracle_pixel(base, i - 1, cx, cy);
            for c in 0..3 {
                sum[c] += u32::from(p[c]);
            }
            n += 1;
        }
    }
    sum.map(|s| ((s + n / 2) / n) as u8)
}

fn random_image(seed: u64, w: u32, h: u32) -> RgbImage {
    let mut rng = SplitMix64::new(seed);
    let data = (0..w as usize * h as usize * 3).map(|_| rng.next_u64() as u8).collect();
    RgbImage::from_raw(w, h, data).unwrap()
}

fn oracle_crop(level: &RgbImage, x: i64, y: i64, w: u32, h: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(w as usize * h as usize * 3);
    for yy in y..y + i64::from(h) {
        for xx in x..x + i64::from(w) {
            if xx >= 0 && yy >= 0 && xx < i64::from(level.width()) && yy < i64::from(level.height()) {
                out.extend_from_slice(&level.pixel(xx as u32, yy as u32));
            } else {
                out.extend_from_slice(&[255, 255, 255]);
            }
        }
    }
    out
}

#[test]
fn fixture_geometry_has_three_levels() {
    let base = random_image(1, 1024, 768);
    let levels = build_pyramid(base, 256).unwrap();
    let dims: Vec<_> = levels.iter().map(|l| (l.width(), l.height())).collect();
    assert_eq!(dims, [(1024, 768), (512, 384), (256, 192)]);
}

#[test]
fn odd_sizes_match_oracle() {
    for (seed, w, h) in [(2, 517, 263), (3, 1, 1), (4, 300, 1), (5, 1025, 70)] {
        let base = random_image(seed, w, h);
        let levels = build_pyramid(base.clone(), 256).unwrap();
        for (i, level) in levels.iter().enumerate() {
            assert_eq!(u64::from(level.width()), u64::from(w).div_ceil(1 << i));
            for y in 0..level.height() {
                for x in 0..level.width() {
                    assert_eq!(level.pixel(x, y), oracle_pixel(&base, i as u32, x.into(), y.into()), "level {i} ({x},{y})");
                }
            }
        }
        let last = levels.last().unwrap();
        assert!(last.width() <= 256 && last.height() <= 256);
    }
}

#[test]
fn regions_and_edge_fill() {
    let base = random_image(9, 700, 450);
    let slide = MemorySlide::from_base(Id::derive(&[b"r"]), base, 256, 250).unwrap();
    let levels = slide.levels().to_vec();
    let mut rng = SplitMix64::new(77);
    for _ in 0..200 {
        let l = rng.below(levels.len() as u64) as u32;
        let lv = &levels[l as usize];
        let x = rng.below(u64::from(lv.width()) + 40) as i64 - 20;
        let y = rng.below(u64::from(lv.height()) + 40) as i64 - 20;
        let (w, h) = (1 + rng.below(300) as u32, 1 + rng.below(300) as u32);
        let got = read_region(&slide, l, x, y, w, h, DEFAULT_REGION_CAP).unwrap();
        assert_eq!(got.as_bytes(), oracle_crop(lv, x, y, w, h).as_slice());
    }
    // right edge overlap by 10 px
    let r = read_region(&slide, 0, 690, 0, 20, 5, DEFAULT_REGION_CAP).unwrap();
    for y in 0..5 {
        for x in 10..20 {
            assert_eq!(r.pixel(x, y), [255, 255, 255]);
        }
    }
    let err = read_region(&slide, 0, 0, 0, 100, 100, 99 * 100).unwrap_err();
    assert_eq!(err.code(), "REGION_TOO_LARGE");
    assert_eq!(read_region(&slide, 9, 0, 0, 1, 1, DEFAULT_REGION_CAP).unwrap_err().code(), "LEVEL_OUT_OF_RANGE");
}

#[test]
fn tiles_are_padded_crops() {
    let base = random_image(11, 1000, 300);
    let slide = MemorySlide::from_base(Id::derive(&[b"t"]), base.clone(), 256, 250).unwrap();
    let last = slide.read_tile(0, 3, 0).unwrap();
    assert_eq!(last, oracle_crop(&base, 768, 0, 256, 256));
    for row in 0..256usize {
        for col in 232..256usize {
            let i = (row * 256 + col) * 3;
            assert_eq!(&last[i..i + 3], &[255, 255, 255]);
        }
    }
    assert_eq!(slide.read_tile(0, 4, 0).unwrap_err().code(), "TILE_OUT_OF_RANGE");
}

#[test]
fn synthetic_slides_are_deterministic() {
    let spec = SyntheticSpec::new(640, 480, 5, 9);
    let id = Id::derive(&[b"s"]);
    let a = pathharbor_core::slide::synth::generate(5, &spec, id).unwrap();
    let b = pathharbor_core::slide::synth::generate(5, &spec, id).unwrap();
    assert_eq!(a.base, b.base);
    assert_eq!(a.ground_truth, b.ground_truth);
    let empty = pathharbor_core::slide::synth::generate(5, &SyntheticSpec::new(64, 64, 0, 0), id).unwrap();
    assert!(empty.ground_truth.cells.is_empty());
    let info = SlideInfo::new(id, 640, 480, 256, 250);
    assert_eq!(info.num_levels, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_reads_compose(seed in 0u64..1000, x in -30i64..300, y in -30i64..200, w in 2u32..200, h in 1u32..100, cut in 1u32..199) {
        prop_assume!(cut < w);
        let slide = MemorySlide::from_base(Id::derive(&[b"c"]), random_image(seed, 320, 210), 256, 250).unwrap();
        let whole = read_region(&slide, 0, x, y, w, h, DEFAULT_REGION_CAP).unwrap();
        let left = read_region(&slide, 0, x, y, cut, h, DEFAULT_REGION_CAP).unwrap();
        let right = read_region(&slide, 0, x + i64::from(cut), y, w - cut, h, DEFAULT_REGION_CAP).unwrap();
        let mut stitched = RgbImage::filled(w, h, [0, 0, 0]);
        stitched.paste(&left, 0, 0);
        stitched.paste(&right, i64::from(cut), 0);
        prop_assert_eq!(whole, stitched);
    }
}
