#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod bounds;
pub mod emulator;
pub mod error;
pub mod flux;
pub mod fv;
pub mod init;
pub mod kl;
pub mod nn;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
