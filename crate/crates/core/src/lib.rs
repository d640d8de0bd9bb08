//! Unsupervised discriminant projection (UDP) with a two-sided neighbor graph.
//!
//! Each point keeps its `K` nearest neighbors with heat-kernel weights `H`
//! and its `N` farthest points with weights `W`. Projections minimize local
//! scatter relative to distant scatter, either linearly ([`udp`]) or as a
//! regularizer on an MLP's embedding ([`trainer`]).
//!
//! The crate is `no_std` with `alloc`. File formats, parallel drivers and the
//! command line live in the `udp-runner` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod trainer;
pub mod udp;

pub use dataset::{Dataset, Normalization, SemiSplit, Unlabeled};
pub use error::{Error, Result};
pub use graph::{build_graph, EdgeKind, NeighborGraph};
pub use matrix::Matrix;
pub use nn::{Mlp, Placement};
pub use trainer::{train, Regularizer, TrainConfig, TrainReport};
pub use udp::{solve_projection, LinearProjection, ScatterPair, UdpVariant, Whitening};
