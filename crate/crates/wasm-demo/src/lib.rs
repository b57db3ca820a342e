// SPDX-License-Identifier: Apache-2.0

//! Browser demo over `pathharbor-core`. Generates a synthetic slide and its
//! pyramid, runs the cell detector, and renders float overlays derived from
//! the detections. [`Session`] holds the logic; [`Demo`] is the JS face used
//! by `www/index.html`.

use std::collections::HashMap;

use pathharbor_core::detect::{detect_cells, Detections};
use pathharbor_core::overlay::{default_colormap, render_tile, QuantityDescriptor, SemanticKind};
use pathharbor_core::slide::synth::{self, CellClass, GroundTruthSheet, SyntheticSpec};
use pathharbor_core::slide::{build_pyramid, RgbImage};
use pathharbor_core::validation::compute_tps;
use pathharbor_core::Id;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const TILE_SIZE: u32 = 256;
/// Proximity falls to zero this far (base px) from a positive cell.
pub const PROXIMITY_RADIUS: f64 = 48.0;
/// Neighbourhood of the density overlay, base px.
pub const DENSITY_RADIUS: f64 = 96.0;
pub const DENSITY_MAX: f64 = 12.0;

pub const QUANTITIES: [&str; 2] = ["positive-proximity", "cell-density"];

pub struct Session {
    levels: Vec<RgbImage>,
    truth: GroundTruthSheet,
    detections: Option<Detections>,
    overlays: HashMap<(u32, String), Vec<f32>>,
}

fn quantity(name: &str) -> Result<QuantityDescriptor, String> {
    match name {
        "positive-proximity" => Ok(QuantityDescriptor::new(name, "dimensionless", 0.0, 1.0, SemanticKind::Probability)),
        "cell-density" => Ok(QuantityDescriptor::new(name, "cells", 0.0, DENSITY_MAX, SemanticKind::Density)),
        other => Err(format!("unknown quantity {other:?}")),
    }
}

impl Session {
    pub fn generate(seed: u64, width: u32, height: u32, positive: u32, negative: u32) -> Result<Self, String> {
        let spec = SyntheticSpec::new(width, height, positive, negative);
        let id = Id::derive(&[b"wasm-demo", &seed.to_le_bytes()]);
        let s = synth::generate(seed, &spec, id).map_err(|e| e.to_string())?;
        let levels = build_pyramid(s.base, TILE_SIZE).map_err(|e| e.to_string())?;
        Ok(Session { levels, truth: s.ground_truth, detections: None, overlays: HashMap::new() })
    }

    pub fn num_levels(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn level_size(&self, level: u32) -> Option<(u32, u32)> {
        self.levels.get(level as usize).map(|l| (l.width(), l.height()))
    }

    /// RGBA8 copy of one level, ready for `ImageData`.
    pub fn level_rgba(&self, level: u32) -> Vec<u8> {
        let Some(l) = self.levels.get(level as usize) else { return Vec::new() };
        let mut out = Vec::with_capacity(l.as_bytes().len() / 3 * 4);
        for px in l.as_bytes().chunks_exact(3) {
            out.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
        out
    }

    fn detections(&mut self) -> &Detections {
        let base = &self.levels[0];
        self.detections.get_or_insert_with(|| detect_cells(base, [0, 0]))
    }

    /// Counts, TPS and centroids, next to the ground truth counts.
    pub fn detect(&mut self) -> Value {
        let truth = (self.truth.count(CellClass::Positive), self.truth.count(CellClass::Negative));
        let d = self.detections();
        let (p, n) = (d.positive.len() as u64, d.negative.len() as u64);
        json!({
            "positive": p,
            "negative": n,
            "tps": compute_tps(p, p + n).ok(),
            "truth": {"positive": truth.0, "negative": truth.1},
            "positive_points": d.positive,
            "negative_points": d.negative,
        })
    }

    /// Float values of `name` over the whole of `level`, row-major. NaN
    /// marks nodata.
    pub fn overlay_values(&mut self, level: u32, name: &str) -> Result<Vec<f32>, String> {
        quantity(name)?;
        let (w, h) = self.level_size(level).ok_or_else(|| format!("no level {level}"))?;
        let scale = f64::from(1u32 << level);
        let d = self.detections().clone();
        let all: Vec<[i64; 2]> = d.positive.iter().chain(&d.negative).copied().collect();
        let mut out = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            for x in 0..w {
                let (bx, by) = ((f64::from(x) + 0.5) * scale, (f64::from(y) + 0.5) * scale);
                let dist = |p: &[i64; 2]| ((p[0] as f64 - bx).powi(2) + (p[1] as f64 - by).powi(2)).sqrt();
                let v = if name == "positive-proximity" {
                    let nearest = d.positive.iter().map(dist).fold(f64::INFINITY, f64::min);
                    if nearest > PROXIMITY_RADIUS {
                        f32::NAN
                    } else {
                        (1.0 - nearest / PROXIMITY_RADIUS) as f32
                    }
                } else {
                    all.iter().filter(|p| dist(p) <= DENSITY_RADIUS).count().min(DENSITY_MAX as usize) as f32
                };
                out.push(v);
            }
        }
        Ok(out)
    }

    /// RGBA8 rendering of an overlay with its kind's default colormap.
    pub fn overlay_rgba(&mut self, level: u32, name: &str, opacity: f64) -> Result<Vec<u8>, String> {
        let q = quantity(name)?;
        let key = (level, name.to_string());
        if !self.overlays.contains_key(&key) {
            let v = self.overlay_values(level, name)?;
            self.overlays.insert(key.clone(), v);
        }
        render_tile(&self.overlays[&key], &q, &default_colormap(q.semantic_kind), opacity).map_err(|e| e.to_string())
    }

    pub fn legend(name: &str) -> Result<Value, String> {
        let q = quantity(name)?;
        let cm = default_colormap(q.semantic_kind);
        Ok(json!({"quantity": q, "colormap": cm.colormap_id, "stops": cm.control_points}))
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, width: u32, height: u32, positive: u32, negative: u32) -> Result<Demo, JsError> {
        Session::generate(u64::from(seed), width, height, positive, negative).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn num_levels(&self) -> u32 {
        self.0.num_levels()
    }

    pub fn level_width(&self, level: u32) -> u32 {
        self.0.level_size(level).map_or(0, |s| s.0)
    }

    pub fn level_height(&self, level: u32) -> u32 {
        self.0.level_size(level).map_or(0, |s| s.1)
    }

    pub fn level_rgba(&self, level: u32) -> Vec<u8> {
        self.0.level_rgba(level)
    }

    /// JSON text; see [`Session::detect`].
    pub fn detect(&mut self) -> String {
        self.0.detect().to_string()
    }

    pub fn overlay_rgba(&mut self, level: u32, quantity: &str, opacity: f64) -> Result<Vec<u8>, JsError> {
        self.0.overlay_rgba(level, quantity, opacity).map_err(|e| JsError::new(&e))
    }

    pub fn legend(quantity: &str) -> Result<String, JsError> {
        Session::legend(quantity).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
    }
}
