// SPDX-License-Identifier: Apache-2.0

//! Overlay service: float tile pyramids written by jobs, read as values or
//! rendered through a colormap.
//!
//! On disk: `<dir>/<overlay_id>/meta.json` plus one `<l>_<c>_<r>.f32` file
//! per written tile. Tile files are written to a temporary name and renamed,
//! so a reader sees either the old or the new tile.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use pathharbor_core::overlay::{
    decode_values, default_colormap, default_registry, encode_values, render_tile, ColormapSpec, OverlayError,
    OverlayPyramid, QuantityDescriptor,
};
use pathharbor_core::Id;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::orchestrator::{JobStatus, Orchestrator};
use crate::random_id;
use crate::tokens::{Resource, TokenKind};

/// Body of an overlay creation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayRequest {
    pub slide_id: Id,
    pub quantity: QuantityDescriptor,
    /// Optional geometry claim; must equal the slide's when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_levels: Option<u32>,
}

pub struct OverlayService {
    dir: Option<PathBuf>,
    orchestrator: Orchestrator,
    overlays: RwLock<HashMap<Id, Arc<RwLock<OverlayPyramid>>>>,
    colormaps: Vec<ColormapSpec>,
}

fn tile_file(level: u32, col: u32, row: u32) -> String {
    format!("{level}_{col}_{row}.f32")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl OverlayService {
    /// Opens the store at `dir` (memory only when `None`).
    pub fn open(dir: Option<&Path>, orchestrator: Orchestrator) -> std::io::Result<Self> {
        let mut overlays = HashMap::new();
        if let Some(dir) = dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                let Ok(text) = fs::read_to_string(path.join("meta.json")) else { continue };
                let Ok(meta) = serde_json::from_str::<OverlayPyramid>(&text) else { continue };
                let mut pyramid =
                    OverlayPyramid::new(meta.overlay_id, &meta.geometry, meta.produced_by, meta.quantity.clone())
                        .map_err(std::io::Error::other)?;
                for tile in fs::read_dir(&path)? {
                    let tile = tile?.path();
                    let Some(stem) = tile.file_stem().and_then(|s| s.to_str()).filter(|_| {
                        tile.extension().is_some_and(|e| e == "f32")
                    }) else {
                        continue;
                    };
                    let parts: Vec<u32> = stem.split('_').filter_map(|p| p.parse().ok()).collect();
                    let [l, c, r] = parts[..] else { continue };
                    if let Some(values) = decode_values(&fs::read(&tile)?) {
                        let _ = pyramid.write_tile(l, c, r, values);
                    }
                }
                if meta.sealed {
                    pyramid.seal();
                }
                overlays.insert(meta.overlay_id, Arc::new(RwLock::new(pyramid)));
            }
        }
        Ok(OverlayService {
            dir: dir.map(Path::to_path_buf),
            orchestrator,
            overlays: RwLock::new(overlays),
            colormaps: default_registry(),
        })
    }

    pub fn colormaps(&self) -> &[ColormapSpec] {
        &self.colormaps
    }

    fn get(&self, id: Id) -> Result<Arc<RwLock<OverlayPyramid>>, ApiError> {
        self.overlays.read().get(&id).cloned().ok_or_else(|| ApiError::not_found(format!("overlay {id}")))
    }

    fn save_meta(&self, p: &OverlayPyramid) -> Result<(), ApiError> {
        if let Some(dir) = &self.dir {
            let d = dir.join(p.overlay_id.to_string());
            fs::create_dir_all(&d)?;
            write_atomic(&d.join("meta.json"), &serde_json::to_vec_pretty(p).map_err(ApiError::internal)?)?;
        }
        Ok(())
    }

    /// Creates an overlay for the token's running job.
    pub fn create(&self, secret: Option<&str>, req: &OverlayRequest) -> Result<OverlayPyramid, ApiError> {
        let token = self.orchestrator.authorize(secret, &Resource::Slide(req.slide_id))?;
        let job_id = match (token.kind, token.job_id) {
            (TokenKind::Job, Some(j)) => j,
            _ => return Err(ApiError::unauthorized("overlays are created by jobs")),
        };
        let info = self.orchestrator.slides().info(req.slide_id).ok_or_else(|| ApiError::not_found(req.slide_id))?;
        if req.tile_size.is_some_and(|t| t != info.tile_size) || req.num_levels.is_some_and(|n| n != info.num_levels) {
            return Err(ApiError::new(ErrorCode::GeometryMismatch, "overlay geometry differs from the slide"));
        }
        let pyramid = OverlayPyramid::new(random_id(), &info, Some(job_id), req.quantity.clone())?;
        self.save_meta(&pyramid)?;
        self.overlays.write().insert(pyramid.overlay_id, Arc::new(RwLock::new(pyramid.clone())));
        Ok(pyramid)
    }

    /// Seals the overlay when its producing job has ended. Returns whether
    /// it is sealed.
    fn refresh_seal(&self, p: &mut OverlayPyramid) -> Result<bool, ApiError> {
        if !p.sealed {
            let ended = p
                .produced_by
                .and_then(|j| self.orchestrator.job(j))
                .is_none_or(|j| j.status.is_terminal());
            if ended {
                p.seal();
                self.save_meta(p)?;
            }
        }
        Ok(p.sealed)
    }

    pub fn write_tile(
        &self,
        secret: Option<&str>,
        id: Id,
        level: u32,
        col: u32,
        row: u32,
        body: &[u8],
    ) -> Result<(), ApiError> {
        let overlay = self.get(id)?;
        let mut p = overlay.write();
        let token = self.orchestrator.authorize(secret, &Resource::Slide(p.slide_id))?;
        if token.job_id.is_none() || token.job_id != p.produced_by {
            return Err(ApiError::unauthorized("only the producing job may write tiles"));
        }
        if self.refresh_seal(&mut p)? {
            return Err(OverlayError::Sealed.into());
        }
        let values = decode_values(body).ok_or_else(|| {
            ApiError::from(OverlayError::GeometryMismatch { expected: p.tile_len(), found: body.len() / 4 })
        })?;
        p.check_tile(level, col, row, &values)?;
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(id.to_string()).join(tile_file(level, col, row)), body)?;
        }
        p.write_tile(level, col, row, values)?;
        Ok(())
    }

    fn readable(&self, secret: Option<&str>, id: Id) -> Result<Arc<RwLock<OverlayPyramid>>, ApiError> {
        let overlay = self.get(id)?;
        let slide = overlay.read().slide_id;
        self.orchestrator.authorize(secret, &Resource::OverlayRead(slide))?;
        Ok(overlay)
    }

    pub fn value_tile(&self, secret: Option<&str>, id: Id, level: u32, col: u32, row: u32) -> Result<Vec<u8>, ApiError> {
        let overlay = self.readable(secret, id)?;
        let tile = overlay.read().get_tile(level, col, row)?;
        Ok(encode_values(&tile))
    }

    /// RGBA8 rendering; the default colormap of the quantity's kind is used
    /// when `colormap` is `None`.
    pub fn render(
        &self,
        secret: Option<&str>,
        id: Id,
        (level, col, row): (u32, u32, u32),
        colormap: Option<&str>,
        opacity: f64,
    ) -> Result<Vec<u8>, ApiError> {
        let overlay = self.readable(secret, id)?;
        let (tile, quantity) = {
            let p = overlay.read();
            (p.get_tile(level, col, row)?, p.quantity.clone())
        };
        let cm = match colormap {
            None => default_colormap(quantity.semantic_kind),
            Some(name) => self
                .colormaps
                .iter()
                .find(|c| c.colormap_id == name)
                .cloned()
                .ok_or_else(|| ApiError::from(OverlayError::UnknownColormap(name.into())))?,
        };
        Ok(render_tile(&tile, &quantity, &cm, opacity)?)
    }

    /// Overlay descriptors of one slide, oldest id first.
    pub fn list(&self, secret: Option<&str>, slide_id: Id) -> Result<Vec<OverlayPyramid>, ApiError> {
        self.orchestrator.authorize(secret, &Resource::OverlayRead(slide_id))?;
        let all: Vec<Arc<RwLock<OverlayPyramid>>> = self.overlays.read().values().cloned().collect();
        let mut out = Vec::new();
        for o in all {
            let mut p = o.write();
            if p.slide_id == slide_id {
                self.refresh_seal(&mut p)?;
                out.push(p.clone());
            }
        }
        out.sort_by_key(|p| p.overlay_id);
        Ok(out)
    }

    /// Descriptor without authorization (platform side).
    pub fn descriptor(&self, id: Id) -> Option<OverlayPyramid> {
        let o = self.overlays.read().get(&id).cloned()?;
        let mut p = o.write();
        let _ = self.refresh_seal(&mut p);
        Some(p.clone())
    }

    /// True when the producing job is no longer running.
    pub fn producer_running(&self, id: Id) -> bool {
        self.descriptor(id)
            .and_then(|p| p.produced_by)
            .and_then(|j| self.orchestrator.job(j))
            .is_some_and(|j| j.status == JobStatus::Running)
    }
}
