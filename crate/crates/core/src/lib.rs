//! Semi-blind joint channel and symbol estimation for links through a hybrid
//! reflecting/sensing reconfigurable intelligent surface.

pub mod bs_rx;
pub mod coding;
pub mod error;
pub mod harness;
pub mod hris_rx;
pub mod identifiability;
pub mod scenario;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
