//! Run configuration: one self-describing JSON file per run, no hidden
//! defaults beyond the documented ones, unknown keys rejected. The
//! `SYMPLAN_SEED` environment variable overrides the file's seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symplan_core::graph::Heuristic;
use symplan_core::planner::PlanConfig;
use symplan_core::predictor::PredictorConfig;
use symplan_core::reachability::ReachabilityConfig;
use symplan_core::segmentation::{NmsParams, SmoothingParams};
use symplan_core::symbols::SymbolFitParams;

use crate::pipeline::{Stage, StageError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    pub artifact_dir: PathBuf,
    pub seed: u64,
    pub segmentation: SegmentationSection,
    pub symbols: SymbolsSection,
    pub reachability: ReachabilitySection,
    pub predictor: PredictorSection,
    pub planner: PlannerSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("dataset"),
            artifact_dir: PathBuf::from("artifacts"),
            seed: 0,
            segmentation: SegmentationSection::default(),
            symbols: SymbolsSection::default(),
            reachability: ReachabilitySection::default(),
            predictor: PredictorSection::default(),
            planner: PlannerSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    pub half_window: usize,
    pub sigma_t: f64,
    /// Value-kernel width; absent means plain Gaussian smoothing.
    pub sigma_v: Option<f64>,
    /// Minimum frame distance between accepted peaks.
    pub window: usize,
    /// Absolute prominence floor; absent means 0.05 per tracked object.
    pub min_prominence: Option<f64>,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        Self {
            half_window: 7,
            sigma_t: 2.0,
            sigma_v: None,
            window: 10,
            min_prominence: None,
        }
    }
}

impl SegmentationSection {
    pub fn smoothing(&self) -> SmoothingParams<f64> {
        SmoothingParams {
            sigma_t: self.sigma_t,
            sigma_v: self.sigma_v.unwrap_or(f64::INFINITY),
            half_window: self.half_window,
        }
    }

    pub fn nms(&self, num_objects: usize) -> NmsParams<f64> {
        NmsParams {
            window: self.window,
            min_prominence: self.min_prominence.unwrap_or(0.05 * num_objects as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolsSection {
    pub neighbor_count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub single_state_threshold: f64,
}

impl Default for SymbolsSection {
    fn default() -> Self {
        let d = SymbolFitParams::default();
        Self {
            neighbor_count: d.neighbor_count,
            n_min: d.n_min,
            n_max: d.n_max,
            single_state_threshold: d.single_state_threshold,
        }
    }
}

impl SymbolsSection {
    pub fn fit_params(&self) -> SymbolFitParams {
        SymbolFitParams {
            neighbor_count: self.neighbor_count,
            n_min: self.n_min,
            n_max: self.n_max,
            single_state_threshold: self.single_state_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachabilitySection {
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub grad_clip: f64,
    pub delta_percentile: f64,
}

impl Default for ReachabilitySection {
    fn default() -> Self {
        let d = ReachabilityConfig::default();
        Self {
            gamma: d.gamma,
            batch_size: d.batch_size,
            hidden_dim: d.hidden_dim,
            embed_dim: d.embed_dim,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            grad_clip: d.grad_clip,
            delta_percentile: d.delta_percentile,
        }
    }
}

impl ReachabilitySection {
    pub fn training(&self, seed: u64) -> ReachabilityConfig {
        ReachabilityConfig {
            gamma: self.gamma,
            batch_size: self.batch_size,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            grad_clip: self.grad_clip,
            delta_percentile: self.delta_percentile,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let d = PredictorConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
        }
    }
}

impl PredictorSection {
    pub fn training(&self, seed: u64) -> PredictorConfig {
        PredictorConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub top_m: usize,
    pub per_state: usize,
    pub beam_width: usize,
    /// "hamming" or "zero" (plain uniform-cost search).
    pub heuristic: String,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            top_m: 3,
            per_state: 10,
            beam_width: 5,
            heuristic: "hamming".into(),
        }
    }
}

impl PlannerSection {
    pub fn plan_config(&self, seed: u64) -> PlanConfig {
        PlanConfig {
            top_m: self.top_m,
            per_state: self.per_state,
            beam_width: self.beam_width,
            heuristic: if self.heuristic == "zero" {
                Heuristic::Zero
            } else {
                Heuristic::Hamming
            },
            seed,
        }
    }
}

fn config_error(reason: String) -> StageError {
    StageError {
        stage: Stage::Config,
        source: symplan_core::Error::InvalidParameter {
            name: "config",
            reason,
        },
    }
}

impl PipelineConfig {
    /// Parse, apply the `SYMPLAN_SEED` override, and validate ranges.
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        if let Ok(seed) = std::env::var("SYMPLAN_SEED") {
            config.seed = seed
                .parse()
                .map_err(|_| config_error(format!("SYMPLAN_SEED is not a u64: {seed}")))?;
        }
        config.validate()?;
        Ok(config)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN parameters
    pub fn validate(&self) -> Result<(), StageError> {
        let mut issues: Vec<String> = Vec::new();
        let s = &self.segmentation;
        if s.half_window < 1 {
            issues.push("segmentation.half_window must be >= 1".into());
        }
        if !(s.sigma_t > 0.0) {
            issues.push("segmentation.sigma_t must be positive".into());
        }
        if let Some(v) = s.sigma_v {
            if !(v > 0.0) {
                issues.push("segmentation.sigma_v must be positive when set".into());
            }
        }
        if s.window < 1 {
            issues.push("segmentation.window must be >= 1".into());
        }
        if let Some(p) = s.min_prominence {
            if p < 0.0 {
                issues.push("segmentation.min_prominence must be nonnegative".into());
            }
        }
        let y = &self.symbols;
        if y.neighbor_count < 1 {
            issues.push("symbols.neighbor_count must be >= 1".into());
        }
        if y.n_min < 2 || y.n_min > y.n_max {
            issues.push("symbols requires 2 <= n_min <= n_max".into());
        }
        let r = &self.reachability;
        if !(r.gamma > 0.0 && r.gamma < 1.0) {
            issues.push("reachability.gamma must lie in (0, 1)".into());
        }
        if r.batch_size < 1 {
            issues.push("reachability.batch_size must be >= 1".into());
        }
        if r.hidden_dim < 1 || r.embed_dim < 1 {
            issues.push("reachability tower dims must be >= 1".into());
        }
        if !(r.learning_rate > 0.0) {
            issues.push("reachability.learning_rate must be positive".into());
        }
        if !(r.grad_clip > 0.0) {
            issues.push("reachability.grad_clip must be positive".into());
        }
        if !(0.0..=100.0).contains(&r.delta_percentile) {
            issues.push("reachability.delta_percentile must lie in [0, 100]".into());
        }
        if !(self.predictor.learning_rate > 0.0) {
            issues.push("predictor.learning_rate must be positive".into());
        }
        let p = &self.planner;
        if p.top_m < 1 || p.per_state < 1 || p.beam_width < 1 {
            issues.push("planner.top_m, per_state, and beam_width must be >= 1".into());
        }
        if p.heuristic != "hamming" && p.heuristic != "zero" {
            issues.push(format!(
                "planner.heuristic must be \"hamming\" or \"zero\", got {:?}",
                p.heuristic
            ));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(config_error(issues.join("; ")))
        }
    }
}

/// Configuration for the synthetic dataset generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub out_dir: PathBuf,
    pub world: WorldSection,
    pub play: PlaySection,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("dataset"),
            world: WorldSection::default(),
            play: PlaySection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub num_objects: usize,
    pub states_per_object: Vec<usize>,
    pub num_skills: usize,
    pub dim: usize,
    pub min_separation_deg: f64,
    pub seed: u64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let d = symplan_core::synth::WorldParams::default();
        Self {
            num_objects: d.num_objects,
            states_per_object: d.states_per_object,
            num_skills: d.num_skills,
            dim: d.dim,
            min_separation_deg: d.min_separation_deg,
            seed: d.seed,
        }
    }
}

impl WorldSection {
    pub fn params(&self) -> symplan_core::synth::WorldParams {
        symplan_core::synth::WorldParams {
            num_objects: self.num_objects,
            states_per_object: self.states_per_object.clone(),
            num_skills: self.num_skills,
            dim: self.dim,
            min_separation_deg: self.min_separation_deg,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaySection {
    pub num_trajectories: usize,
    pub skills_per_trajectory_min: usize,
    pub skills_per_trajectory_max: usize,
    pub dwell: usize,
    pub transit: usize,
    pub noise_sigma: f64,
    pub motion_jitter: f64,
    pub transit_waypoints: usize,
    pub seed: u64,
}

impl Default for PlaySection {
    fn default() -> Self {
        let d = symplan_core::synth::PlayParams::default();
        Self {
            num_trajectories: d.num_trajectories,
            skills_per_trajectory_min: d.skills_per_trajectory_min,
            skills_per_trajectory_max: d.skills_per_trajectory_max,
            dwell: d.dwell,
            transit: d.transit,
            noise_sigma: d.noise_sigma,
            motion_jitter: d.motion_jitter,
            transit_waypoints: d.transit_waypoints,
            seed: d.seed,
        }
    }
}

impl PlaySection {
    pub fn params(&self) -> symplan_core::synth::PlayParams {
        symplan_core::synth::PlayParams {
            num_trajectories: self.num_trajectories,
            skills_per_trajectory_min: self.skills_per_trajectory_min,
            skills_per_trajectory_max: self.skills_per_trajectory_max,
            dwell: self.dwell,
            transit: self.transit,
            noise_sigma: self.noise_sigma,
            motion_jitter: self.motion_jitter,
            transit_waypoints: self.transit_waypoints,
            seed: self.seed,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"dataset_root": "d", "artifact_dir": "a", "bogus": 1}"#;
        assert!(serde_json::from_str::<PipelineConfig>(text).is_err());
        let nested = r#"{"planner": {"beam": 5}}"#;
        assert!(serde_json::from_str::<PipelineConfig>(nested).is_err());
    }

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_values_are_reported() {
        let mut config = PipelineConfig::default();
        config.reachability.gamma = 1.5;
        config.planner.beam_width = 0;
        let err = config.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma"));
        assert!(msg.contains("beam_width"));
    }
}
