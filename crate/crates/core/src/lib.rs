// SPDX-License-Identifier: Apache-2.0

//! Core domain logic for the PathHarbor digital-pathology platform.
//!
//! This crate holds everything that does not need a network or a process
//! table: the shared entity vocabulary and App Description validation
//! ([`model`]), the PTC1 pyramidal slide container and its readers
//! ([`slide`]), the reference cell detector ([`detect`]), float overlay
//! pyramids with colormap rendering ([`overlay`]) and the TPS validation
//! metrics ([`validation`]). It compiles for `wasm32-unknown-unknown`.

pub mod detect;
pub mod dicom;
pub mod ids;
pub mod model;
pub mod overlay;
pub mod slide;
pub mod validation;

pub use ids::Id;
