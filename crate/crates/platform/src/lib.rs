// SPDX-License-Identifier: Apache-2.0

//! PathHarbor platform services.
//!
//! One process hosts the slide service, the App Interface and platform API
//! of the job orchestrator, the overlay service and the Workbench API, all
//! on a single HTTP listener ([`http`]). The same services run in-process
//! for the app test suite ([`compliance`]) and the validation runner
//! ([`validation`]).

pub mod client;
pub mod clock;
pub mod compliance;
pub mod config;
pub mod error;
pub mod executor;
pub mod fixtures;
pub mod http;
pub mod journal;
pub mod orchestrator;
pub mod overlays;
pub mod platform;
pub mod slides;
pub mod tokens;
pub mod validation;

pub use error::{ApiError, ErrorCode};
pub use platform::Platform;

use pathharbor_core::Id;

/// A fresh random 128-bit id.
pub fn random_id() -> Id {
    let mut b = [0u8; 16];
    getrandom::fill(&mut b).expect("OS randomness available");
    Id::from_bytes(b)
}
