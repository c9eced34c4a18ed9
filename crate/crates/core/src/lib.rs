//! Random quotients of weighted digraphs and their limits.

pub mod combinatorics;
pub mod edge_sampling;
pub mod eqp;
pub mod error;
pub mod grapheur;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod property_testing;

pub use edge_sampling::{Component, EdgeSample};
pub use error::{Error, Result};
pub use graph::{
    equipartition_map, normalize, random_equipartition_map, random_partition_map,
    NormalizedGraph, PartitionMap, WeightedDigraph,
};
pub use combinatorics::Multigraph;
pub use grapheur::{estimate_grapheur, Grapheur, MeasureRealization};
pub use metrics::{AtomicMeasure2D, DistanceBracket};
pub use numeric::Estimate;
pub use property_testing::{Certificate, TestableParameter};
