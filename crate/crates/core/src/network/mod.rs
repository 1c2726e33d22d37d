//! Network assembly, configuration, and cost accounting.

mod config;
mod cost;
mod model;

pub use config::{NetworkConfig, STAGES};
pub use cost::{count_cost, ConvCost, CostReport, ModuleCost};
pub use model::{
    init_weights, param_specs, DecoderStage, EncoderStage, Network, NetworkOutput, NetworkParams, IMAGE_CHANNELS,
    OUTPUT_CHANNELS,
};
