//! Connectivity-mask segmentation pipeline: tensor kernels, 8-neighbourhood
//! connectivity encoding and voting, the network's blocks and assembly,
//! losses, and overlap metrics.

pub mod blocks;
pub mod connectivity;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod params;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
