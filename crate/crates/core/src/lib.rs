//! Simulation laboratory for soft random geometric graphs and the planar
//! random connection model.
//!
//! Points are Poisson in the box `B(s) = [-s/2, s/2]^2` (or in the whole
//! plane, generated lazily), and each pair at distance `r` is joined with
//! probability `phi(r)` for a nonincreasing, finite-range connection
//! function `phi`.
//!
//! * [`model`]: connection functions, boxes, Poisson sampling.
//! * [`graph`]: eager edge construction with a cell list, union-find
//!   components, `L_1` and `L_2`.
//! * [`growth`]: breadth-first cluster growth with lazy edge revelation.
//! * [`estimators`]: percolation probability, threshold bracketing, Mecke
//!   identity checks, giant-component statistics, positive association.
//! * [`events`]: renormalization events and the block field.

pub mod error;
pub mod estimators;
pub mod events;
pub mod graph;
pub mod growth;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{
    estimate_lambda_c, estimate_theta, fkg_sanity, giant_statistics, mecke_check_ns,
    mecke_check_second, CrossingCriterion, LambdaCBracket, ThetaEstimate,
};
pub use graph::{build_edges, connected_components, giant_fraction, ComponentSummary, EdgeSet};
pub use growth::{grow_cluster, grow_from_region, ClusterResult, ClusterStatus, StoppingRule};
pub use model::{expected_degree, sample_points, BoxSpec, ConnectionFunction, PalmPointSet, PointSet};
pub use stats::EstimateWithCI;
