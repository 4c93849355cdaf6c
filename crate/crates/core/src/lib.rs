//! Driving-trajectory reconstruction from CAN speed and pedal logs.
//!
//! The pipeline turns a CAN log into a weighted line graph of stops and turns
//! ([`trajgraph`]), searches a road network ([`roadnet`]) for simple paths
//! whose segment lengths agree with it ([`matcher`]), ranks the candidates and
//! scores them against a known route ([`metrics`]). [`simulate`] produces
//! synthetic road grids, routes and CAN logs with known ground truth.

pub mod canlog;
pub mod cli;
pub mod geo;
pub mod matcher;
pub mod metrics;
pub mod roadnet;
pub mod simulate;
pub mod trajgraph;

pub use canlog::{CanLog, CanSample, PedalSeries, SpeedSeries};
pub use matcher::{AttackResult, CandidatePath, MatchConfig};
pub use metrics::{EvalReport, GroundTruth};
pub use roadnet::{NodeId, RoadEdge, RoadGraph, RoadNode};
pub use simulate::{DriveProfile, SimScenario};
pub use trajgraph::{TrajectoryConfig, TrajectoryGraph};
