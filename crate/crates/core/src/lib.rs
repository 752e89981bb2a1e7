//! Passive detection of address-rotating Bluetooth LE trackers from
//! carrier frequency offset fingerprints.
//!
//! The crate covers the whole chain: a GFSK synthesiser with per-device
//! oscillator impairments, CFO fingerprint extraction, the streaming
//! detector, synthetic mobility scenarios with adversary injection, and the
//! file formats that connect them.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod gfsk;
pub mod io;
pub mod scenario;

pub use error::{Error, Result};
pub use exec::Exec;
