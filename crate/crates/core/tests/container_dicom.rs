// SPDX-License-Identifier: Apache-2.0

use std::thread;

use pathharbor_core::dicom::{frame_to_tile, instance_metadata, series_metadata};
use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::synth::{generate, SyntheticSpec};
use pathharbor_core::slide::{build_pyramid, open_container, write_container, SlideReader, MAGIC};
use pathharbor_core::Id;

fn fixture(dir: &std::path::Path) -> (SlideInfo, std::path::PathBuf) {
    let id = Id::derive(&[b"fixture"]);
    let s = generate(42, &SyntheticSpec::new(1024, 768, 30, 70), id).unwrap();
    let info = SlideInfo::new(id, 1024, 768, 256, 250);
    let levels = build_pyramid(s.base, 256).unwrap();
    let path = write_container(&dir.join(format!("{id}.ptc")), &info, &levels).unwrap();
    (info, path)
}

#[test]
fn roundtrip_and_fail_closed() {
    let dir = tempfile::tempdir().unwrap();
    let (info, path) = fixture(dir.path());
    let h = open_container(&path).unwrap();
    assert_eq!(h.info(), &info);

    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(&MAGIC));
    let mut zeroed = bytes.clone();
    zeroed[..4].fill(0);
    let p = dir.path().join("zero.ptc");
    std::fs::write(&p, &zeroed).unwrap();
    assert_eq!(open_container(&p).unwrap_err().code(), "BAD_MAGIC");

    for cut in [10, 60, 100] {
        let p = dir.path().join(format!("cut{cut}.ptc"));
        std::fs::write(&p, &bytes[..cut]).unwrap();
        assert_eq!(open_container(&p).unwrap_err().code(), "TRUNCATED_FILE", "cut at {cut}");
    }
}

#[test]
fn frames_equal_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let (info, path) = fixture(dir.path());
    let h = open_container(&path).unwrap();
    assert_eq!(frame_to_tile(&info, 0, 1).unwrap(), (0, 0));
    let series = series_metadata(&info);
    assert_eq!(series.len(), 3);
    for level in 0..info.num_levels {
        let meta = instance_metadata(&info, level).unwrap();
        let (cols, rows) = info.grid(level).unwrap();
        for frame in 1..=cols * rows {
            let (c, r) = frame_to_tile(&info, level, frame).unwrap();
            assert_eq!((c, r), ((frame - 1) % cols, (frame - 1) / cols));
            h.read_tile(level, c, r).unwrap();
        }
        assert_eq!(frame_to_tile(&info, level, cols * rows + 1).unwrap_err().code(), "FRAME_OUT_OF_RANGE");
        assert!(meta.is_object());
    }
    assert_eq!(frame_to_tile(&info, 0, 0).unwrap_err().code(), "FRAME_OUT_OF_RANGE");
}

#[test]
fn concurrent_reads_match_serial() {
    let dir = tempfile::tempdir().unwrap();
    let (info, path) = fixture(dir.path());
    let h = open_container(&path).unwrap();
    let (cols, rows) = info.grid(0).unwrap();
    let serial: Vec<Vec<u8>> = (0..cols * rows).map(|i| h.read_tile(0, i % cols, i / cols).unwrap()).collect();
    thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                for i in (0..cols * rows).rev() {
                    assert_eq!(h.read_tile(0, i % cols, i / cols).unwrap(), serial[i as usize]);
                }
            });
        }
    });
}
