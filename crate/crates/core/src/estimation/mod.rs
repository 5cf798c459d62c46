//! Fully distributed estimation of the rigidity eigenvalue and eigenvector.

pub mod baseline;
pub mod bus;
pub mod consensus;
pub mod deflation;
pub mod estimator;

pub use bus::{Header, NetBus, Phase};
pub use consensus::{AverageReport, ConsensusBank, ConsensusConfig, ConsensusState};
pub use deflation::{deflated_laplacian, deflation_matrix, q_block, DeflationParams};
pub use estimator::{
    AgentState, CycleRecord, CycleReport, DistributedEstimator, EstimateReport, EstimationConfig,
    Method, RunOptions, SolveReport,
};
