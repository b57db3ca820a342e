// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{OverlayError, QuantityDescriptor};
use crate::model::SlideInfo;
use crate::Id;

/// A float-valued tile pyramid over a slide. Geometry is copied from the
/// slide; tiles that were never written read as nodata (NaN).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlayPyramid {
    pub overlay_id: Id,
    pub slide_id: Id,
    pub produced_by: Option<Id>,
    pub quantity: QuantityDescriptor,
    pub geometry: SlideInfo,
    pub sealed: bool,
    #[serde(skip)]
    tiles: BTreeMap<(u32, u32, u32), Arc<[f32]>>,
}

impl OverlayPyramid {
    pub fn new(overlay_id: Id, slide: &SlideInfo, produced_by: Option<Id>, quantity: QuantityDescriptor) -> Result<Self, OverlayError> {
        quantity.validate()?;
        Ok(OverlayPyramid {
            overlay_id,
            slide_id: slide.slide_id,
            produced_by,
            quantity,
            geometry: slide.clone(),
            sealed: false,
            tiles: BTreeMap::new(),
        })
    }

    pub fn tile_len(&self) -> usize {
        (self.geometry.tile_size as usize).pow(2)
    }

    pub fn check_position(&self, level: u32, col: u32, row: u32) -> Result<(), OverlayError> {
        let (cols, rows) = self
            .geometry
            .grid(level)
            .ok_or(OverlayError::LevelOutOfRange { level, num_levels: self.geometry.num_levels })?;
        if col >= cols || row >= rows {
            return Err(OverlayError::TileOutOfRange { col, row, cols, rows });
        }
        Ok(())
    }

    /// Checks a tile payload without storing it.
    pub fn check_tile(&self, level: u32, col: u32, row: u32, values: &[f32]) -> Result<(), OverlayError> {
        if self.sealed {
            return Err(OverlayError::Sealed);
        }
        self.check_position(level, col, row)?;
        if values.len() != self.tile_len() {
            return Err(OverlayError::GeometryMismatch { expected: self.tile_len(), found: values.len() });
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !v.is_nan() && !self.quantity.contains(**v))
        {
            return Err(OverlayError::ValueOutOfRange {
                index,
                value,
                min: self.quantity.min(),
                max: self.quantity.max(),
            });
        }
        Ok(())
    }

    /// Stores a tile, replacing any earlier write of the same position.
    pub fn write_tile(&mut self, level: u32, col: u32, row: u32, values: Vec<f32>) -> Result<(), OverlayError> {
        self.check_tile(level, col, row, &values)?;
        self.tiles.insert((level, col, row), values.into());
        Ok(())
    }

    pub fn get_tile(&self, level: u32, col: u32, row: u32) -> Result<Arc<[f32]>, OverlayError> {
        self.check_position(level, col, row)?;
        Ok(match self.tiles.get(&(level, col, row)) {
            Some(t) => t.clone(),
            None => vec![f32::NAN; self.tile_len()].into(),
        })
    }

    pub fn is_written(&self, level: u32, col: u32, row: u32) -> bool {
        self.tiles.contains_key(&(level, col, row))
    }

    pub fn written_tiles(&self) -> impl Iterator<Item = ((u32, u32, u32), &Arc<[f32]>)> {
        self.tiles.iter().map(|(k, v)| (*k, v))
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }
}

/// Little-endian float32 wire encoding.
pub fn encode_values(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8]) -> Option<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
