//! Symbolic skill discovery and visual planning over object-centric feature
//! sequences.
//!
//! The pipeline: load per-object feature trajectories, find stable states via
//! temporal-similarity peaks, cluster key-frame features into per-object
//! symbol vocabularies, build a transition graph, train a two-tower
//! reachability estimator and a next-state predictor, then answer goal
//! queries with A* over symbols plus reachability-constrained beam search
//! over retrieved frames.
//!
//! All numeric code is generic over [`scalar::Real`] (`f32` or `f64`);
//! feature files always store 32-bit floats. The aliases below fix the two
//! lanes, with `f64` as the default everywhere arithmetic stability matters.

pub mod error;
pub mod features;
pub mod graph;
pub mod planner;
pub mod predictor;
pub mod reachability;
pub mod scalar;
pub mod segmentation;
pub mod symbols;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PlayDataset32 = features::PlayDataset<f32>;
pub type PlayDataset64 = features::PlayDataset<f64>;
pub type PlayTrajectory32 = features::PlayTrajectory<f32>;
pub type PlayTrajectory64 = features::PlayTrajectory<f64>;
pub type TwoTowerModel32 = reachability::TwoTowerModel<f32>;
pub type TwoTowerModel64 = reachability::TwoTowerModel<f64>;
pub type ReachabilityArtifact32 = reachability::ReachabilityArtifact<f32>;
pub type ReachabilityArtifact64 = reachability::ReachabilityArtifact<f64>;
pub type SoftmaxPredictor32 = predictor::SoftmaxPredictor<f32>;
pub type SoftmaxPredictor64 = predictor::SoftmaxPredictor<f64>;
pub type GoalIndex32 = planner::GoalIndex<f32>;
pub type GoalIndex64 = planner::GoalIndex<f64>;
pub type VisualPlan32 = planner::VisualPlan<f32>;
pub type VisualPlan64 = planner::VisualPlan<f64>;
pub type PlannerBundle64 = planner::PlannerBundle<f64>;
pub type WorldSpec32 = synth::WorldSpec<f32>;
pub type WorldSpec64 = synth::WorldSpec<f64>;
