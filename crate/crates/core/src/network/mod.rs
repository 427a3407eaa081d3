//! Communication graphs, their Laplacians, and the synchronous decentralised
//! simulator.

mod sim;
mod topology;

pub use sim::{
    bits_report, consensus_gap, decentralized_solve, dual_gradient_identity_check, network_lipschitz, network_radius,
    BitsReport, BitBoundParams, Decentralized, DecentralizedOptions, DecentralizedRun, EdgeRecord, LiftedOracle,
    NetworkProblem,
};
pub use topology::{laplacian, LaplacianSpectrum, Topology, TopologyKind};
