// SPDX-License-Identifier: Apache-2.0

//! Slide registry: the on-disk slide directory, synthetic generation and
//! anonymizing import.
//!
//! Slides live in `<data_dir>/slides/` as `<slide_id>.ptc` containers. Raw
//! `<slide_id>.ppm` images are served too, through an in-memory pyramid.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::synth::{self, GroundTruthSheet, SyntheticSpec};
use pathharbor_core::slide::{
    build_pyramid, open_container, write_container, MemorySlide, RgbImage, SlideError, SlideReader,
};
use pathharbor_core::Id;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ErrorCode};
use crate::random_id;

pub const DEFAULT_PIXEL_SIZE_NM: u64 = 250;
pub const DEFAULT_TILE_SIZE: u32 = 256;

pub struct SlideEntry {
    pub info: SlideInfo,
    pub path: PathBuf,
    pub reader: Arc<dyn SlideReader>,
    /// SHA-256 of the file; equal pixel content gives equal digests since
    /// containers hold no identifiers.
    pub content_sha256: String,
}

impl std::fmt::Debug for SlideEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlideEntry").field("info", &self.info).field("path", &self.path).finish()
    }
}

/// One line of the local import manifest. This file is the only place a
/// case alias is ever written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRecord {
    pub case_alias: String,
    pub slide_id: Id,
}

#[derive(Debug)]
pub struct SlideRegistry {
    dir: PathBuf,
    manifest_path: PathBuf,
    slides: RwLock<BTreeMap<Id, Arc<SlideEntry>>>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = std::io::Read::read(&mut file, &mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn unreadable(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorCode::SourceUnreadable, e.to_string())
}

/// Reassembles full level buffers from a reader's tiles.
pub fn read_levels(reader: &dyn SlideReader) -> Result<Vec<RgbImage>, SlideError> {
    let info = reader.info().clone();
    let tile = info.tile_size;
    let mut levels = Vec::with_capacity(info.num_levels as usize);
    for level in 0..info.num_levels {
        let (w, h) = info.level_dims(level).expect("level in range");
        let (cols, rows) = info.grid(level).expect("level in range");
        let mut img = RgbImage::filled(w as u32, h as u32, [255, 255, 255]);
        for row in 0..rows {
            for col in 0..cols {
                let bytes = reader.read_tile(level, col, row)?;
                let t = RgbImage::from_raw(tile, tile, bytes)
                    .ok_or_else(|| SlideError::IndexCorrupt("tile payload has the wrong size".into()))?;
                img.paste(&t, i64::from(col * tile), i64::from(row * tile));
            }
        }
        levels.push(img);
    }
    Ok(levels)
}

/// Loads a raw image file (PPM or PNG) as RGB8.
pub fn load_raw_image(path: &Path) -> Result<RgbImage, ApiError> {
    let img = image::open(path).map_err(unreadable)?.into_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::from_raw(w, h, img.into_raw()).ok_or_else(|| unreadable("image buffer has the wrong size"))
}

impl SlideRegistry {
    /// Opens `<data_dir>/slides`, registering every readable slide file.
    pub fn open(data_dir: &Path) -> std::io::Result<Self> {
        let dir = data_dir.join("slides");
        fs::create_dir_all(&dir)?;
        let reg = SlideRegistry {
            manifest_path: data_dir.join("import-manifest.jsonl"),
            dir,
            slides: RwLock::new(BTreeMap::new()),
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&reg.dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if matches!(path.extension().and_then(|e| e.to_str()), Some("ptc" | "ppm")) {
                if let Err(e) = reg.register_file(&path) {
                    tracing::warn!("skipping unreadable slide {}: {e}", path.display());
                }
            }
        }
        Ok(reg)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Registers a slide file already inside the slide directory.
    pub fn register_file(&self, path: &Path) -> Result<SlideInfo, ApiError> {
        let reader: Arc<dyn SlideReader> = match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => {
                let stem = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<Id>().ok());
                let base = load_raw_image(path)?;
                let id = match stem {
                    Some(id) => id,
                    None => Id::derive(&[base.as_bytes()]),
                };
                Arc::new(MemorySlide::from_base(id, base, DEFAULT_TILE_SIZE, DEFAULT_PIXEL_SIZE_NM)?)
            }
            _ => Arc::new(open_container(path)?),
        };
        let info = reader.info().clone();
        let entry = SlideEntry {
            info: info.clone(),
            path: path.to_path_buf(),
            reader,
            content_sha256: sha256_file(path)?,
        };
        self.slides.write().insert(info.slide_id, Arc::new(entry));
        Ok(info)
    }

    /// Writes levels as a new container and registers it.
    pub fn add_levels(&self, info: &SlideInfo, levels: &[RgbImage]) -> Result<SlideInfo, ApiError> {
        let path = self.dir.join(format!("{}.ptc", info.slide_id));
        write_container(&path, info, levels)?;
        self.register_file(&path)
    }

    /// Generates a synthetic slide under a fresh id; the ground truth sheet
    /// is stored next to it as `<slide_id>.truth.json`.
    pub fn generate(&self, seed: u64, spec: &SyntheticSpec) -> Result<(SlideInfo, GroundTruthSheet), ApiError> {
        self.generate_with_id(seed, spec, random_id())
    }

    /// Like [`generate`](Self::generate) under a caller-chosen id.
    pub fn generate_with_id(&self, seed: u64, spec: &SyntheticSpec, id: Id) -> Result<(SlideInfo, GroundTruthSheet), ApiError> {
        let synthetic = synth::generate(seed, spec, id).map_err(|e| {
            ApiError::new(ErrorCode::parse(e.code()).unwrap_or(ErrorCode::InvalidSpec), e.to_string())
        })?;
        let info = SlideInfo::new(
            id,
            u64::from(spec.width),
            u64::from(spec.height),
            spec.tile_size,
            spec.pixel_size_nm,
        );
        info.validate().map_err(|e| ApiError::new(ErrorCode::InvalidSpec, e.to_string()))?;
        let levels = build_pyramid(synthetic.base, spec.tile_size)?;
        let info = self.add_levels(&info, &levels)?;
        let truth_path = self.dir.join(format!("{id}.truth.json"));
        fs::write(&truth_path, serde_json::to_vec_pretty(&synthetic.ground_truth).map_err(ApiError::internal)?)?;
        Ok((info, synthetic.ground_truth))
    }

    pub fn ground_truth(&self, id: Id) -> Option<GroundTruthSheet> {
        let bytes = fs::read(self.dir.join(format!("{id}.truth.json"))).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Imports a container or raw image under a fresh slide id. Only pixel
    /// data and geometry are carried over; the alias goes to the local
    /// manifest only.
    pub fn import_and_anonymize(&self, source: &Path, case_alias: &str) -> Result<SlideInfo, ApiError> {
        let levels_and_info = if source.extension().and_then(|e| e.to_str()) == Some("ptc")
            || fs::read(source).map(|b| b.starts_with(&pathharbor_core::slide::MAGIC)).unwrap_or(false)
        {
            let src = open_container(source).map_err(unreadable)?;
            let levels = read_levels(&src).map_err(unreadable)?;
            let s = src.info();
            (levels, s.width_base, s.height_base, s.tile_size, s.pixel_size_nm)
        } else {
            let base = load_raw_image(source)?;
            let (w, h) = (u64::from(base.width()), u64::from(base.height()));
            let levels = build_pyramid(base, DEFAULT_TILE_SIZE).map_err(unreadable)?;
            (levels, w, h, DEFAULT_TILE_SIZE, DEFAULT_PIXEL_SIZE_NM)
        };
        let (levels, w, h, tile, px) = levels_and_info;
        let info = SlideInfo::new(random_id(), w, h, tile, px);
        let info = self.add_levels(&info, &levels)?;
        let record = ImportRecord { case_alias: case_alias.to_string(), slide_id: info.slide_id };
        let mut manifest = fs::OpenOptions::new().create(true).append(true).open(&self.manifest_path)?;
        manifest.write_all(&serde_json::to_vec(&record).map_err(ApiError::internal)?)?;
        manifest.write_all(b"\n")?;
        manifest.sync_data()?;
        Ok(info)
    }

    pub fn import_manifest(&self) -> Vec<ImportRecord> {
        fs::read_to_string(&self.manifest_path)
            .map(|t| t.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, id: Id) -> Option<Arc<SlideEntry>> {
        self.slides.read().get(&id).cloned()
    }

    pub fn contains(&self, id: Id) -> bool {
        self.slides.read().contains_key(&id)
    }

    pub fn info(&self, id: Id) -> Option<SlideInfo> {
        self.get(id).map(|e| e.info.clone())
    }

    pub fn list(&self) -> Vec<SlideInfo> {
        self.slides.read().values().map(|e| e.info.clone()).collect()
    }
}
