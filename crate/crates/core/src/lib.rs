// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

pub mod error;
pub mod experiment;
pub mod landscape;
pub mod dynamics;
pub mod matrix;
pub mod singular;
pub mod zoo;
mod small;

pub use error::{LandscapeError, Result};
