//! Command implementations behind the `cfqp` binary.
//!
//! Each command module exposes its clap arguments and a `run` function that
//! returns a structured result, so the commands can be driven from tests.

pub mod bench;
pub mod data;
pub mod discover;
pub mod exit;
pub mod gendata;
pub mod import;
pub mod predict;
pub mod report;
pub mod source;

use cfqp_core::Precision;

/// `32` or `64`.
pub fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Precision::from_bits)
        .ok_or_else(|| format!("precision must be 32 or 64, got {s:?}"))
}
