//! Deterministic fixed-tick simulation of clustered UAV swarms.
//!
//! Nodes organise into two-hop clusters by max-degree election and talk over
//! a short channel; cluster heads additionally share a long channel. Five
//! fused message types carry both routing state and flight-control inputs.
//! Inside a cluster, nodes fly a leader-follower hierarchy; between clusters,
//! whole formations react to their nearest neighbours per sector.

pub mod baselines;
pub mod cluster;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod pigeon;
pub mod radio;
pub mod route;
pub mod starling;
pub mod wire;
