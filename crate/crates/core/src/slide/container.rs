// SPDX-License-Identifier: Apache-2.0

//! The PTC1 pyramidal tile container.
//!
//! Little-endian layout:
//!
//! ```text
//! 0   magic "PTC1"            4 bytes
//! 4   version = 1             u32
//! 8   width, height           u64, u64
//! 24  tile_size               u32
//! 28  num_levels              u32
//! 32  pixel_size_nm           u64
//! 40  channels = 3            u8
//! 41  reserved                7 zero bytes
//! 48  per level: grid_cols u32, grid_rows u32,
//!     then cols*rows entries of {offset u64, length u64}
//!     tile payloads: raw RGB8, row-major, tile_size^2 * 3 bytes each
//! ```
//!
//! The container carries no identifiers or text metadata. The slide id is
//! the file stem (`<32 hex>.ptc`).

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::error::SlideError;
use super::image::RgbImage;
use super::reader::{tile_from_level, SlideReader};
use crate::model::{grid_for, level_dims, levels_for, SlideInfo, FORMAT_PTC1};
use crate::Id;

pub const MAGIC: [u8; 4] = *b"PTC1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;
const ENTRY_LEN: u64 = 16;

/// Positional reads over an immutable byte source.
pub trait ReadAt: Send + Sync {
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> io::Result<()>;
    fn len(&self) -> io::Result<u64>;
}

impl ReadAt for Vec<u8> {
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> io::Result<()> {
        let start = usize::try_from(offset).map_err(|_| io::ErrorKind::UnexpectedEof)?;
        let src = self
            .get(start..start.saturating_add(buf.len()))
            .ok_or(io::ErrorKind::UnexpectedEof)?;
        buf.copy_from_slice(src);
        Ok(())
    }

    fn len(&self) -> io::Result<u64> {
        Ok(Vec::len(self) as u64)
    }
}

/// A container file opened for shared positional reads.
#[derive(Debug)]
pub struct FileSource {
    #[cfg(unix)]
    file: File,
    #[cfg(not(unix))]
    file: std::sync::Mutex<File>,
}

impl FileSource {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = File::open(path)?;
        #[cfg(unix)]
        return Ok(FileSource { file });
        #[cfg(not(unix))]
        return Ok(FileSource { file: std::sync::Mutex::new(file) });
    }
}

impl ReadAt for FileSource {
    #[cfg(unix)]
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> io::Result<()> {
        std::os::unix::fs::FileExt::read_exact_at(&self.file, buf, offset)
    }

    #[cfg(not(unix))]
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> io::Result<()> {
        use std::io::{Read, Seek, SeekFrom};
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.seek(SeekFrom::Start(offset))?;
        file.read_exact(buf)
    }

    #[cfg(unix)]
    fn len(&self) -> io::Result<u64> {
        Ok(self.file.metadata()?.len())
    }

    #[cfg(not(unix))]
    fn len(&self) -> io::Result<u64> {
        Ok(self.file.lock().unwrap_or_else(|e| e.into_inner()).metadata()?.len())
    }
}

fn check_levels(info: &SlideInfo, levels: &[RgbImage]) -> Result<(), SlideError> {
    info.validate().map_err(|e| SlideError::InvalidInfo(e.to_string()))?;
    if levels.len() != info.num_levels as usize {
        return Err(SlideError::InvalidInfo(format!(
            "{} level buffers for a {}-level slide",
            levels.len(),
            info.num_levels
        )));
    }
    for (i, level) in levels.iter().enumerate() {
        let expected = level_dims(info.width_base, info.height_base, i as u32);
        if (u64::from(level.width()), u64::from(level.height())) != expected {
            return Err(SlideError::InvalidInfo(format!(
                "level {i} is {}x{}, expected {}x{}",
                level.width(),
                level.height(),
                expected.0,
                expected.1
            )));
        }
    }
    Ok(())
}

/// Serializes a slide into PTC1 bytes.
pub fn encode_container(info: &SlideInfo, levels: &[RgbImage], out: &mut impl Write) -> Result<(), SlideError> {
    check_levels(info, levels)?;
    let tile = info.tile_size;
    let tile_bytes = info.tile_bytes() as u64;

    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&info.width_base.to_le_bytes());
    header.extend_from_slice(&info.height_base.to_le_bytes());
    header.extend_from_slice(&tile.to_le_bytes());
    header.extend_from_slice(&info.num_levels.to_le_bytes());
    header.extend_from_slice(&info.pixel_size_nm.to_le_bytes());
    header.push(3);
    header.extend_from_slice(&[0u8; 7]);
    debug_assert_eq!(header.len(), HEADER_LEN);

    let grids: Vec<(u32, u32)> = levels
        .iter()
        .map(|l| grid_for(u64::from(l.width()), u64::from(l.height()), tile))
        .collect();
    let index_len: u64 = grids.iter().map(|&(c, r)| 8 + u64::from(c) * u64::from(r) * ENTRY_LEN).sum();
    let mut offset = HEADER_LEN as u64 + index_len;
    let mut index = Vec::with_capacity(index_len as usize);
    for &(cols, rows) in &grids {
        index.extend_from_slice(&cols.to_le_bytes());
        index.extend_from_slice(&rows.to_le_bytes());
        for _ in 0..u64::from(cols) * u64::from(rows) {
            index.extend_from_slice(&offset.to_le_bytes());
            index.extend_from_slice(&tile_bytes.to_le_bytes());
            offset += tile_bytes;
        }
    }
    out.write_all(&header)?;
    out.write_all(&index)?;
    for (level, &(cols, rows)) in levels.iter().zip(&grids) {
        for row in 0..rows {
            for col in 0..cols {
                out.write_all(&tile_from_level(level, tile, col, row))?;
            }
        }
    }
    Ok(())
}

/// Writes a container atomically: a temporary sibling file is renamed into
/// place once fully written and synced.
pub fn write_container(path: &Path, info: &SlideInfo, levels: &[RgbImage]) -> Result<PathBuf, SlideError> {
    let tmp = path.with_extension("ptc.tmp");
    let result = (|| {
        let mut file = io::BufWriter::new(File::create(&tmp)?);
        encode_container(info, levels, &mut file)?;
        let file = file.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(path.to_path_buf())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// A validated container over any positional byte source.
#[derive(Debug)]
pub struct ContainerSlide<S> {
    info: SlideInfo,
    grids: Vec<(u32, u32)>,
    index: Vec<Vec<(u64, u64)>>,
    source: S,
}

pub type SlideHandle = ContainerSlide<FileSource>;

/// Opens a container file; the slide id comes from the file stem.
pub fn open_container(path: &Path) -> Result<SlideHandle, SlideError> {
    let source = FileSource::open(path)?;
    let stem_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse::<Id>().ok());
    ContainerSlide::open(source, stem_id)
}

fn truncated(what: &str) -> impl Fn(io::Error) -> SlideError + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            SlideError::TruncatedFile(what.to_string())
        } else {
            SlideError::Io(e)
        }
    }
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().expect("8 bytes"))
}

impl<S: ReadAt> ContainerSlide<S> {
    /// Parses and validates header and index. Fails closed: no partially
    /// read geometry is ever returned.
    pub fn open(source: S, slide_id: Option<Id>) -> Result<Self, SlideError> {
        let file_len = source.len()?;
        let mut magic = [0u8; 4];
        source.read_exact_at(&mut magic, 0).map_err(truncated("header"))?;
        if magic != MAGIC {
            return Err(SlideError::BadMagic(magic));
        }
        let mut header = [0u8; HEADER_LEN];
        source.read_exact_at(&mut header, 0).map_err(truncated("header"))?;
        let version = u32_at(&header, 4);
        if version != VERSION {
            return Err(SlideError::UnsupportedVersion(version));
        }
        let width = u64_at(&header, 8);
        let height = u64_at(&header, 16);
        let tile_size = u32_at(&header, 24);
        let num_levels = u32_at(&header, 28);
        let pixel_size_nm = u64_at(&header, 32);
        let channels = header[40];
        if header[41..48].iter().any(|&b| b != 0) {
            return Err(SlideError::IndexCorrupt("reserved header bytes are not zero".into()));
        }
        let mut info = SlideInfo {
            slide_id: slide_id.unwrap_or(Id::from_bytes([0; 16])),
            width_base: width,
            height_base: height,
            num_levels,
            tile_size,
            pixel_size_nm,
            channels,
            format_name: FORMAT_PTC1.to_string(),
        };
        info.validate().map_err(|e| SlideError::IndexCorrupt(e.to_string()))?;
        let tile_bytes = info.tile_bytes() as u64;

        let mut pos = HEADER_LEN as u64;
        let mut grids = Vec::with_capacity(num_levels as usize);
        let mut index = Vec::with_capacity(num_levels as usize);
        let data_start = {
            let mut total = pos;
            for level in 0..num_levels {
                let (w, h) = level_dims(width, height, level);
                let (c, r) = grid_for(w, h, tile_size);
                total += 8 + u64::from(c) * u64::from(r) * ENTRY_LEN;
            }
            total
        };
        for level in 0..num_levels {
            let mut dims = [0u8; 8];
            source.read_exact_at(&mut dims, pos).map_err(truncated("level index"))?;
            pos += 8;
            let (cols, rows) = (u32_at(&dims, 0), u32_at(&dims, 4));
            let (w, h) = level_dims(width, height, level);
            let expected = grid_for(w, h, tile_size);
            if (cols, rows) != expected {
                return Err(SlideError::IndexCorrupt(format!(
                    "level {level} grid {cols}x{rows}, expected {}x{}",
                    expected.0, expected.1
                )));
            }
            let n = u64::from(cols) * u64::from(rows);
            let mut raw = vec![0u8; (n * ENTRY_LEN) as usize];
            source.read_exact_at(&mut raw, pos).map_err(truncated("tile index"))?;
            pos += n * ENTRY_LEN;
            let entries: Vec<(u64, u64)> = raw
                .chunks_exact(ENTRY_LEN as usize)
                .map(|e| (u64_at(e, 0), u64_at(e, 8)))
                .collect();
            for (i, &(offset, length)) in entries.iter().enumerate() {
                if length != tile_bytes || offset < data_start {
                    return Err(SlideError::IndexCorrupt(format!(
                        "level {level} entry {i}: offset {offset} length {length}"
                    )));
                }
                if offset.checked_add(length).is_none_or(|end| end > file_len) {
                    return Err(SlideError::TruncatedFile(format!(
                        "level {level} tile {i} ends past the end of the file"
                    )));
                }
            }
            grids.push((cols, rows));
            index.push(entries);
        }
        if slide_id.is_none() {
            let mut index_bytes = vec![0u8; (data_start - HEADER_LEN as u64) as usize];
            source.read_exact_at(&mut index_bytes, HEADER_LEN as u64).map_err(truncated("index"))?;
            info.slide_id = Id::derive(&[&header, &index_bytes]);
        }
        debug_assert_eq!(levels_for(width, height, tile_size), num_levels);
        Ok(ContainerSlide { info, grids, index, source })
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: ReadAt> SlideReader for ContainerSlide<S> {
    fn info(&self) -> &SlideInfo {
        &self.info
    }

    fn read_tile(&self, level: u32, col: u32, row: u32) -> Result<Vec<u8>, SlideError> {
        let &(cols, rows) = self.grids.get(level as usize).ok_or(SlideError::LevelOutOfRange {
            level,
            num_levels: self.info.num_levels,
        })?;
        if col >= cols || row >= rows {
            return Err(SlideError::TileOutOfRange { level, col, row, cols, rows });
        }
        let (offset, length) = self.index[level as usize][(row * cols + col) as usize];
        let mut buf = vec![0u8; length as usize];
        self.source.read_exact_at(&mut buf, offset).map_err(truncated("tile payload"))?;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide::{build_pyramid, WHITE};

    fn fixture(width: u32, height: u32) -> (SlideInfo, Vec<RgbImage>) {
        let mut base = RgbImage::filled(width, height, WHITE);
        for y in 0..height {
            for x in 0..width {
                base.set_pixel(x, y, [(x % 251) as u8, (y % 241) as u8, ((x + y) % 239) as u8]);
            }
        }
        let levels = build_pyramid(base, 256).unwrap();
        let info = SlideInfo::new(Id::from_bytes([4; 16]), u64::from(width), u64::from(height), 256, 250);
        (info, levels)
    }

    fn encode(info: &SlideInfo, levels: &[RgbImage]) -> Vec<u8> {
        let mut bytes = Vec::new();
        encode_container(info, levels, &mut bytes).unwrap();
        bytes
    }

    #[test]
    fn header_is_bit_exact() {
        let (info, levels) = fixture(300, 200);
        let bytes = encode(&info, &levels);
        assert_eq!(&bytes[0..4], &[0x50, 0x54, 0x43, 0x31]);
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u64_at(&bytes, 8), 300);
        assert_eq!(u64_at(&bytes, 16), 200);
        assert_eq!(u32_at(&bytes, 24), 256);
        assert_eq!(u32_at(&bytes, 28), 2);
        assert_eq!(u64_at(&bytes, 32), 250);
        assert_eq!(bytes[40], 3);
        assert_eq!(&bytes[41..48], &[0; 7]);
        // level 0: 2x1 grid, level 1: 1x1 grid
        assert_eq!((u32_at(&bytes, 48), u32_at(&bytes, 52)), (2, 1));
        let first_offset = u64_at(&bytes, 56);
        assert_eq!(first_offset, 48 + 8 + 2 * 16 + 8 + 16);
        assert_eq!(u64_at(&bytes, 64), 256 * 256 * 3);
        assert_eq!(bytes.len() as u64, first_offset + 3 * 256 * 256 * 3);
    }

    #[test]
    fn roundtrip_and_padding() {
        let (info, levels) = fixture(1000, 300);
        let slide = ContainerSlide::open(encode(&info, &levels), Some(info.slide_id)).unwrap();
        assert_eq!(slide.info(), &info);
        let tile = slide.read_tile(0, 3, 0).unwrap();
        // columns 1000..1023 of the last tile are white
        for y in [0usize, 100, 255] {
            for x in 1000 - 768..256 {
                let o = (y * 256 + x) * 3;
                assert_eq!(&tile[o..o + 3], &WHITE);
            }
            let o = (y * 256 + 231) * 3;
            assert_eq!(&tile[o..o + 3], &levels[0].pixel(999, y as u32));
        }
        assert!(matches!(slide.read_tile(info.num_levels, 0, 0), Err(SlideError::LevelOutOfRange { .. })));
        assert!(matches!(slide.read_tile(0, 4, 0), Err(SlideError::TileOutOfRange { .. })));
    }

    #[test]
    fn bad_magic() {
        let (info, levels) = fixture(64, 64);
        let mut bytes = encode(&info, &levels);
        bytes[0..4].fill(0);
        assert!(matches!(ContainerSlide::open(bytes, None), Err(SlideError::BadMagic([0, 0, 0, 0]))));
    }

    #[test]
    fn unsupported_version() {
        let (info, levels) = fixture(64, 64);
        let mut bytes = encode(&info, &levels);
        bytes[4] = 2;
        assert!(matches!(ContainerSlide::open(bytes, None), Err(SlideError::UnsupportedVersion(2))));
    }

    #[test]
    fn truncation_anywhere_fails_closed() {
        let (info, levels) = fixture(600, 300);
        let bytes = encode(&info, &levels);
        for cut in [0, 3, 20, 47, 48, 60, 100, 200, bytes.len() - 1] {
            let err = ContainerSlide::open(bytes[..cut].to_vec(), None).unwrap_err();
            assert_eq!(err.code(), "TRUNCATED_FILE", "cut at {cut}: {err}");
        }
    }

    #[test]
    fn corrupt_index() {
        let (info, levels) = fixture(600, 300);
        let mut bytes = encode(&info, &levels);
        bytes[48] = 9; // grid cols
        assert_eq!(ContainerSlide::open(bytes.clone(), None).unwrap_err().code(), "INDEX_CORRUPT");
        let mut bytes2 = encode(&info, &levels);
        bytes2[64] = 1; // first entry length
        assert_eq!(ContainerSlide::open(bytes2, None).unwrap_err().code(), "INDEX_CORRUPT");
        bytes[48] = 3;
        bytes[44] = 1; // reserved
        assert_eq!(ContainerSlide::open(bytes, None).unwrap_err().code(), "INDEX_CORRUPT");
    }

    #[test]
    fn derived_id_is_stable() {
        let (info, levels) = fixture(64, 64);
        let a = ContainerSlide::open(encode(&info, &levels), None).unwrap();
        let b = ContainerSlide::open(encode(&info, &levels), None).unwrap();
        assert_eq!(a.info().slide_id, b.info().slide_id);
    }
}
