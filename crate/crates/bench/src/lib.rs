//! Benchmarks for the simulation kernels live in `benches/`.

use itinerant_core::{BridgeConfig, Network, SimConfig};

/// Desk-scale network with a fitted input bridge, shared by the benches.
pub fn desk_network(n_symbols: usize) -> Network {
    let net = Network::build(SimConfig::desk().with_seed(1), n_symbols).expect("build");
    net.tune_input_bridge(&BridgeConfig::default())
        .expect("bridge")
        .0
}
