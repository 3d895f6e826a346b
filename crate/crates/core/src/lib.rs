//! Voice activity detection engine: log-mel front end, DFSMN / RWKV / SAN-M
//! encoders on a small reverse-mode autodiff tape, multi-task heads (VAD,
//! CTC, punctuation), streaming segmentation and scoring.
//!
//! The crate is `no_std` with `alloc`; file formats, the CLI and threading
//! live in the `vadkit` companion crate.

#![no_std]

extern crate alloc;

pub mod audio;
pub mod autodiff;
pub mod config;
pub mod encoders;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod heads;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod segment;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
