// SPDX-License-Identifier: Apache-2.0

//! Reference cell detector: nearest-base-color pixel classification,
//! 4-connected components, area filter, integer centroids.

use serde::{Deserialize, Serialize};

use crate::slide::synth::{NEGATIVE_COLOR, POSITIVE_COLOR};
use crate::slide::RgbImage;

/// Maximum Euclidean RGB distance for a pixel to count as stained.
pub const COLOR_THRESHOLD: u32 = 60;
/// Minimum component area in pixels.
pub const MIN_AREA: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detections {
    pub positive: Vec<[i64; 2]>,
    pub negative: Vec<[i64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Background,
    Positive,
    Negative,
}

fn dist2(a: [u8; 3], b: [u8; 3]) -> u32 {
    (0..3).map(|c| (i32::from(a[c]) - i32::from(b[c])).pow(2) as u32).sum()
}

fn classify(p: [u8; 3]) -> Label {
    let limit = COLOR_THRESHOLD * COLOR_THRESHOLD;
    let (dp, dn) = (dist2(p, POSITIVE_COLOR), dist2(p, NEGATIVE_COLOR));
    if dp <= limit && dp <= dn {
        Label::Positive
    } else if dn <= limit {
        Label::Negative
    } else {
        Label::Background
    }
}

/// Detects positive and negative cells in `region`, whose upper-left pixel
/// sits at base coordinates `origin`.
pub fn detect_cells(region: &RgbImage, origin: [i64; 2]) -> Detections {
    let (w, h) = (region.width() as usize, region.height() as usize);
    let labels: Vec<Label> = region.as_bytes().chunks_exact(3).map(|p| classify([p[0], p[1], p[2]])).collect();
    let mut visited = vec![false; w * h];
    let mut out = Detections::default();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if visited[start] || labels[start] == Label::Background {
            continue;
        }
        let label = labels[start];
        visited[start] = true;
        stack.push(start);
        let (mut n, mut sx, mut sy) = (0usize, 0u64, 0u64);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            n += 1;
            sx += x as u64;
            sy += y as u64;
            let mut push = |j: usize| {
                if !visited[j] && labels[j] == label {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        if n < MIN_AREA {
            continue;
        }
        // round half up
        let n64 = n as u64;
        let cx = ((2 * sx + n64) / (2 * n64)) as i64 + origin[0];
        let cy = ((2 * sy + n64) / (2 * n64)) as i64 + origin[1];
        match label {
            Label::Positive => out.positive.push([cx, cy]),
            Label::Negative => out.negative.push([cx, cy]),
            Label::Background => unreachable!(),
        }
    }
    out
}
