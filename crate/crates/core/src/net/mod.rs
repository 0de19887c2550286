//! Network assembly, optimiser and weight files.

mod adam;
mod config;
mod network;
mod weights;

pub use adam::{Adam, AdamConfig};
pub use config::{BranchKind, NetworkConfig, Task, DEPTH, FULL_PROFILE, REDUCED_PROFILE, SPATIAL_DIVISOR};
pub use network::Network;
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
