//! Obfuscation of crowdsourced signal-strength measurements.
//!
//! The library implements four privatizers (Gaussian noise, local differential
//! privacy via the Gaussian and truncated-Laplacian mechanisms, generative
//! adversarial obfuscation, and an information-theoretic codebook scheme), an
//! inference adversary that estimates user IDs and locations from obfuscated
//! data, and the privacy/utility metrics needed to map the tradeoff frontier
//! between them. The `bench` module drives parameter sweeps end to end and is
//! what the `sigmapriv` CLI wraps.

pub mod adversary;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nncore;
pub mod priv_basic;
pub mod priv_gap;
pub mod priv_it;
pub mod rssmap;

pub use error::{Error, Result};
