// SPDX-License-Identifier: Apache-2.0

//! Whole-slide image storage: pyramid construction, the PTC1 container,
//! tile and region access behind a reader abstraction, and synthetic slides
//! with ground truth.

mod container;
mod error;
mod image;
mod pyramid;
mod reader;
mod region;
pub mod synth;

pub use container::{encode_container, open_container, write_container, ContainerSlide, FileSource, ReadAt, SlideHandle, HEADER_LEN, MAGIC, VERSION};
pub use error::SlideError;
pub use image::{RgbImage, WHITE};
pub use pyramid::{build_pyramid, downsample};
pub use reader::{MemorySlide, SlideReader};
pub use region::{read_region, DEFAULT_REGION_CAP};
