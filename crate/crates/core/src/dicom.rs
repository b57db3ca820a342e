// SPDX-License-Identifier: Apache-2.0

//! DICOMweb-style addressing of slide tiles: each pyramid level is an
//! instance and each tile a 1-based, row-major frame.

use serde_json::{json, Map, Value};

use crate::model::SlideInfo;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DicomError {
    #[error("instance {level} out of range (slide has {num_levels} levels)")]
    LevelOutOfRange { level: u32, num_levels: u32 },
    #[error("frame {frame} out of range 1..={frames}")]
    FrameOutOfRange { frame: u32, frames: u32 },
}

impl DicomError {
    pub fn code(&self) -> &'static str {
        match self {
            DicomError::LevelOutOfRange { .. } => "LEVEL_OUT_OF_RANGE",
            DicomError::FrameOutOfRange { .. } => "FRAME_OUT_OF_RANGE",
        }
    }
}

fn grid(info: &SlideInfo, level: u32) -> Result<(u32, u32), DicomError> {
    info.grid(level).ok_or(DicomError::LevelOutOfRange { level, num_levels: info.num_levels })
}

/// Maps a 1-based frame number of level instance `level` to `(col, row)`.
pub fn frame_to_tile(info: &SlideInfo, level: u32, frame: u32) -> Result<(u32, u32), DicomError> {
    let (cols, rows) = grid(info, level)?;
    let frames = cols * rows;
    if frame == 0 || frame > frames {
        return Err(DicomError::FrameOutOfRange { frame, frames });
    }
    Ok(((frame - 1) % cols, (frame - 1) / cols))
}

pub fn tile_to_frame(info: &SlideInfo, level: u32, col: u32, row: u32) -> Result<u32, DicomError> {
    let (cols, rows) = grid(info, level)?;
    if col >= cols || row >= rows {
        return Err(DicomError::FrameOutOfRange { frame: 0, frames: cols * rows });
    }
    Ok(row * cols + col + 1)
}

fn attr(vr: &str, value: Value) -> Value {
    json!({ "vr": vr, "Value": [value] })
}

/// DICOM JSON metadata for one level instance.
pub fn instance_metadata(info: &SlideInfo, level: u32) -> Result<Value, DicomError> {
    let (cols, rows) = grid(info, level)?;
    let (w, h) = info.level_dims(level).expect("grid implies level");
    let spacing_mm = info.pixel_size_nm as f64 * f64::from(1u32 << level.min(31)) / 1e6;
    let mut m = Map::new();
    m.insert("0020000D".into(), attr("UI", json!(info.slide_id.to_string()))); // StudyInstanceUID
    m.insert("0020000E".into(), attr("UI", json!("0"))); // SeriesInstanceUID
    m.insert("00080018".into(), attr("UI", json!(level.to_string()))); // SOPInstanceUID
    m.insert("00200013".into(), attr("IS", json!(level + 1))); // InstanceNumber
    m.insert("00280002".into(), attr("US", json!(3))); // SamplesPerPixel
    m.insert("00280004".into(), attr("CS", json!("RGB"))); // PhotometricInterpretation
    m.insert("00280006".into(), attr("US", json!(0))); // PlanarConfiguration
    m.insert("00280008".into(), attr("IS", json!(cols * rows))); // NumberOfFrames
    m.insert("00280010".into(), attr("US", json!(info.tile_size))); // Rows
    m.insert("00280011".into(), attr("US", json!(info.tile_size))); // Columns
    m.insert("00280100".into(), attr("US", json!(8))); // BitsAllocated
    m.insert("00280101".into(), attr("US", json!(8))); // BitsStored
    m.insert("00480006".into(), attr("UL", json!(w))); // TotalPixelMatrixColumns
    m.insert("00480007".into(), attr("UL", json!(h))); // TotalPixelMatrixRows
    m.insert("00209311".into(), attr("CS", json!("TILED_FULL"))); // DimensionOrganizationType
    m.insert(
        "00280030".into(),
        json!({ "vr": "DS", "Value": [spacing_mm, spacing_mm] }), // PixelSpacing (mm)
    );
    Ok(Value::Object(m))
}

/// Metadata for every level instance of the slide's single series.
pub fn series_metadata(info: &SlideInfo) -> Vec<Value> {
    (0..info.num_levels)
        .map(|l| instance_metadata(info, l).expect("level in range"))
        .collect()
}
