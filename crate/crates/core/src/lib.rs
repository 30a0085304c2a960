//! Single-logical-qubit quantum polar codes: construction, measurement-based
//! preparation with error detection, and Steane error correction.

pub mod channel;
pub mod cli;
pub mod code;
pub mod gf2;
pub mod oracle;
pub mod prep;
pub mod reliability;
pub mod rng;
pub mod sc;
pub mod steane;

pub use gf2::{BitVector, IndexSet};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resource bound exceeded: {0}")]
    ResourceBound(String),
}
