//! File formats, WAV IO and the command-line driver around `vadkit-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod labels;
pub mod report;
pub mod wav;
pub mod weights;

pub use error::{Error, Result};
