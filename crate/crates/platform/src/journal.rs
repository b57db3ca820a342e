// SPDX-License-Identifier: Apache-2.0

//! Append-only JSON-lines journal with per-record CRC32.
//!
//! Each line is `<crc32 as 8 hex digits> <json>\n`. On open, records are
//! replayed up to the first line that is incomplete or fails its checksum;
//! the file is truncated there, so a torn final write never survives a
//! restart.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug)]
enum Backend {
    File { file: File, path: PathBuf, sync: bool },
    Memory,
}

#[derive(Debug)]
pub struct Journal {
    backend: Backend,
    records: u64,
}

/// What replay found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Recovery {
    pub records: u64,
    pub truncated_bytes: u64,
}

fn encode_line<T: Serialize>(record: &T) -> io::Result<Vec<u8>> {
    let json = serde_json::to_vec(record).map_err(io::Error::other)?;
    let mut line = format!("{:08x} ", crc32fast::hash(&json)).into_bytes();
    line.extend_from_slice(&json);
    line.push(b'\n');
    Ok(line)
}

fn decode_line<T: DeserializeOwned>(line: &[u8]) -> Option<T> {
    if line.len() < 10 || line[8] != b' ' {
        return None;
    }
    let crc = u32::from_str_radix(std::str::from_utf8(&line[..8]).ok()?, 16).ok()?;
    let json = &line[9..];
    if crc32fast::hash(json) != crc {
        return None;
    }
    serde_json::from_slice(json).ok()
}

impl Journal {
    /// A journal that keeps nothing; for tests and throwaway platforms.
    pub fn memory() -> Self {
        Journal { backend: Backend::Memory, records: 0 }
    }

    /// Opens (or creates) `path`, returning the journal, the replayed
    /// records and a recovery summary.
    pub fn open<T: DeserializeOwned>(path: &Path, sync: bool) -> io::Result<(Self, Vec<T>, Recovery)> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut records = Vec::new();
        let mut good = 0usize;
        while good < bytes.len() {
            let Some(nl) = bytes[good..].iter().position(|&b| b == b'\n') else { break };
            match decode_line::<T>(&bytes[good..good + nl]) {
                Some(r) => records.push(r),
                None => break,
            }
            good += nl + 1;
        }
        let truncated_bytes = (bytes.len() - good) as u64;
        if truncated_bytes > 0 {
            file.set_len(good as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let recovery = Recovery { records: records.len() as u64, truncated_bytes };
        let journal =
            Journal { backend: Backend::File { file, path: path.to_path_buf(), sync }, records: records.len() as u64 };
        Ok((journal, records, recovery))
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        if let Backend::File { file, sync, .. } = &mut self.backend {
            let line = encode_line(record)?;
            file.write_all(&line)?;
            if *sync {
                file.sync_data()?;
            }
        }
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::File { path, .. } => Some(path),
            Backend::Memory => None,
        }
    }
}
