//! Discretized coalescing flows on the line: particle systems, clusters,
//! cluster boundaries, and the stationary point of a drifted flow.

pub mod boundary;
pub mod coalescing;
pub mod drifted;

pub use boundary::{
    sample_boundary_oracle, sample_boundary_oracle_recorded, sample_boundary_sde, sample_boundary_sde_recorded,
    BoundaryPair, OracleDraw,
};
pub use coalescing::{
    block_map, cluster_partition, CoarsenedNoise, simulate_coalescing, simulate_coalescing_recorded, step_plan, ClusterSnapshot,
    FlowNoise, FlowSnapshot, ParticleSystem,
};
pub use drifted::{
    sample_infinite_cluster_oracle, sample_infinite_cluster_sde, sample_infinite_cluster_sde_recorded,
    stationary_point_estimate, stationary_point_run, InfiniteOracleSpec, StationaryRun,
};
