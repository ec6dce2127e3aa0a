//! Graph pre-training by link prediction and few-shot adaptation of a
//! frozen encoder to heterogeneous graphs through a graph template and a
//! tunable feature/heterogeneity prompt pair.

pub mod cli;
pub mod config;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod objectives;
pub mod tasks;
pub mod template;

pub use error::{Error, Result};

/// Derives an independent stream seed from a master seed (SplitMix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
