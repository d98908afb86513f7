//! Built-in 4-node benchmark network used by the Monte Carlo study and
//! throughout the test suite.

use crate::network::{load_network, NetworkModel};
use crate::tf::RationalTf;

/// Config text for the 4-node benchmark network: seven modules, one loop
/// through the target output node, references at nodes 1, 2 and 4, and a
/// noise filter per node.
pub fn benchmark_network_json() -> &'static str {
    r#"{
  "schema_version": 1,
  "nodes": 4,
  "modules": [
    {"from": 1, "to": 3, "num": [0, 1, 0.05], "den": [1, 1, 0.6]},
    {"from": 2, "to": 3, "num": [0, 0.09], "den": [1, 0.5]},
    {"from": 4, "to": 3, "num": [0, 1.184, -0.647, 0.151, -0.082], "den": [1, -0.8, 0.279, -0.048, 0.01]},
    {"from": 4, "to": 1, "num": [0, 0.4, -0.5], "den": [1, 0.3]},
    {"from": 1, "to": 2, "num": [0, 0.4, -0.5], "den": [1, 0.3]},
    {"from": 2, "to": 1, "num": [0, 0.4, 0.5], "den": [1, 0.3]},
    {"from": 3, "to": 2, "num": [0, 0.4, 0.5], "den": [1, 0.3]}
  ],
  "noise_filters": [
    {"node": 1, "num": [1], "den": [1, 0.2]},
    {"node": 2, "num": [1], "den": [1, 0.3]},
    {"node": 3, "num": [1, -0.505, 0.155, -0.01], "den": [1, -0.729, 0.236, -0.019]},
    {"node": 4, "num": [1], "den": [1]}
  ],
  "noise_cov": {"diag": [0.05, 0.08, 1.0, 0.1]},
  "references": [1, 2, 4],
  "sensor_noise_var": [0, 0, 0, 0]
}"#
}

pub fn benchmark_network() -> NetworkModel {
    load_network(benchmark_network_json()).expect("built-in benchmark network is valid")
}

/// True target module of the benchmark study: the transfer from node 1
/// into node 3.
pub fn benchmark_target_truth() -> RationalTf {
    RationalTf::new(vec![0.0, 1.0, 0.05], vec![1.0, 1.0, 0.6]).unwrap()
}

/// True parameter vector `(b1, b2, a1, a2)` of the target module.
pub const BENCHMARK_TARGET_THETA: [f64; 4] = [1.0, 0.05, 1.0, 0.6];
