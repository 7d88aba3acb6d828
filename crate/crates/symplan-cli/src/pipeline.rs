//! Stage orchestration. Every stage reads its inputs from the dataset and
//! artifact directories and writes its outputs back, so single-stage
//! subcommands and the full pipeline produce byte-identical artifacts.
//!
//! Stage seeds derive from the run seed with fixed offsets; reachability and
//! predictor training consume the model files they just wrote, so downstream
//! scores always reflect the 32-bit parameters on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symplan_core::features::FrameRef;
use symplan_core::graph::{self, TransitionGraph};
use symplan_core::planner::{build_goal_index, GoalIndex, PlannerBundle};
use symplan_core::predictor::{
    build_training_set, cross_entropy_and_grads, load_predictor, predict_next, save_predictor,
    train_predictor, SoftmaxPredictor,
};
use symplan_core::reachability::{
    load_reachability, save_reachability, train_reachability, ReachabilityArtifact,
};
use symplan_core::segmentation::{nms_peaks, smooth, temporal_similarity, KeyFrameSet};
use symplan_core::symbols::{
    extract_transitions, fit_object_models, label_keyframes, ObjectSymbolModel, SymbolicState,
    SymbolicTransition,
};
use symplan_core::{Error, PlayDataset64};

/// Pipeline stages; each maps to a stable process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Features,
    Segmentation,
    Symbols,
    Graph,
    Reachability,
    Predictor,
    Index,
    Plan,
    Loop,
    Benchmark,
    Report,
    Synth,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Features => "features",
            Stage::Segmentation => "segmentation",
            Stage::Symbols => "symbols",
            Stage::Graph => "graph",
            Stage::Reachability => "reachability",
            Stage::Predictor => "predictor",
            Stage::Index => "index",
            Stage::Plan => "plan",
            Stage::Loop => "loop",
            Stage::Benchmark => "benchmark",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Features => 3,
            Stage::Segmentation => 4,
            Stage::Symbols => 5,
            Stage::Graph => 6,
            Stage::Reachability => 7,
            Stage::Predictor => 8,
            Stage::Index => 9,
            Stage::Plan => 10,
            Stage::Loop => 11,
            Stage::Benchmark => 12,
            Stage::Report => 13,
            Stage::Synth => 14,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A core error attributed to the stage it occurred in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

pub type StageResult<T> = Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

use crate::config::PipelineConfig;

// Artifact file names, fixed across the CLI.
pub const KEYFRAMES_FILE: &str = "keyframes.json";
pub const SYMBOLS_MODEL_FILE: &str = "symbols.model.json";
pub const SYMBOLS_SUMMARY_FILE: &str = "symbols.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const GRAPH_DOT_FILE: &str = "graph.dot";
pub const REACHABILITY_FILE: &str = "reachability.model";
pub const PREDICTOR_FILE: &str = "predictor.model";
pub const GOAL_INDEX_FILE: &str = "goal_index.json";
pub const REPORT_FILE: &str = "report.json";

fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> StageResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(Error::from)
        .at(stage)?;
    fs::write(path, text + "\n").map_err(Error::from).at(stage)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: Stage) -> StageResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|_| Error::InvalidParameter {
            name: "artifact",
            reason: format!(
                "{} not found; run the earlier pipeline stages first",
                path.display()
            ),
        })
        .at(stage)?;
    serde_json::from_str(&text).map_err(Error::from).at(stage)
}

pub fn load_dataset(config: &PipelineConfig) -> StageResult<PlayDataset64> {
    PlayDataset64::load(&config.dataset_root).at(Stage::Features)
}

/// Per-trajectory segmentation record: key frames plus the smoothed series
/// they were picked from.
#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub trajectory_id: String,
    pub keyframes: Vec<usize>,
    pub series: Vec<f64>,
}

pub fn stage_segment(config: &PipelineConfig) -> StageResult<Vec<KeyFrameSet>> {
    let dataset = load_dataset(config)?;
    fs::create_dir_all(&config.artifact_dir)
        .map_err(Error::from)
        .at(Stage::Segmentation)?;
    let mut records = Vec::new();
    let mut keyframes = Vec::new();
    for traj in dataset.trajectories() {
        let sim = temporal_similarity(traj).at(Stage::Segmentation)?;
        let smoothed = smooth(&sim, config.segmentation.smoothing()).at(Stage::Segmentation)?;
        let kf = nms_peaks(&smoothed, config.segmentation.nms(dataset.num_objects()))
            .at(Stage::Segmentation)?;
        records.push(SegmentRecord {
            trajectory_id: traj.id().to_string(),
            keyframes: kf.indices.clone(),
            series: smoothed.values.clone(),
        });
        keyframes.push(kf);
    }
    write_json(
        &config.artifact_dir.join(KEYFRAMES_FILE),
        &records,
        Stage::Segmentation,
    )?;
    Ok(keyframes)
}

pub fn load_keyframes(config: &PipelineConfig) -> StageResult<Vec<KeyFrameSet>> {
    let records: Vec<SegmentRecord> = read_json(
        &config.artifact_dir.join(KEYFRAMES_FILE),
        Stage::Segmentation,
    )?;
    records
        .into_iter()
        .map(|r| KeyFrameSet::new(r.trajectory_id, r.keyframes))
        .collect::<Result<_, _>>()
        .at(Stage::Segmentation)
}

/// Human-readable vocabulary summary, one entry per object.
#[derive(Debug, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub object_index: usize,
    pub object_name: String,
    pub num_clusters: usize,
    pub exemplar_counts: Vec<usize>,
    pub silhouette: f64,
}

/// One labelled key frame.
#[derive(Debug, Serialize, Deserialize)]
pub struct Assignment {
    pub trajectory_id: String,
    pub frame_index: usize,
    pub symbols: Vec<usize>,
}

pub fn stage_symbols(config: &PipelineConfig) -> StageResult<Vec<ObjectSymbolModel<f64>>> {
    let dataset = load_dataset(config)?;
    let keyframes = load_keyframes(config)?;
    let models =
        fit_object_models(&dataset, &keyframes, config.symbols.fit_params()).at(Stage::Symbols)?;
    write_json(
        &config.artifact_dir.join(SYMBOLS_MODEL_FILE),
        &models,
        Stage::Symbols,
    )?;
    let summary: Vec<VocabularyEntry> = models
        .iter()
        .map(|m| {
            let mut counts = vec![0usize; m.num_clusters];
            for (_, label) in m.exemplars() {
                counts[*label] += 1;
            }
            VocabularyEntry {
                object_index: m.object_index,
                object_name: dataset.object_names()[m.object_index].clone(),
                num_clusters: m.num_clusters,
                exemplar_counts: counts,
                silhouette: m.selection_score,
            }
        })
        .collect();
    write_json(
        &config.artifact_dir.join(SYMBOLS_SUMMARY_FILE),
        &summary,
        Stage::Symbols,
    )?;
    let labelled = label_keyframes(&dataset, &keyframes, &models).at(Stage::Symbols)?;
    let assignments: Vec<Assignment> = labelled
        .iter()
        .map(|(frame, state)| Assignment {
            trajectory_id: frame.trajectory_id.clone(),
            frame_index: frame.frame_index,
            symbols: state.0.clone(),
        })
        .collect();
    write_json(
        &config.artifact_dir.join(ASSIGNMENTS_FILE),
        &assignments,
        Stage::Symbols,
    )?;
    Ok(models)
}

pub fn load_symbol_models(config: &PipelineConfig) -> StageResult<Vec<ObjectSymbolModel<f64>>> {
    read_json(
        &config.artifact_dir.join(SYMBOLS_MODEL_FILE),
        Stage::Symbols,
    )
}

pub fn load_assignments(config: &PipelineConfig) -> StageResult<Vec<(FrameRef, SymbolicState)>> {
    let assignments: Vec<Assignment> =
        read_json(&config.artifact_dir.join(ASSIGNMENTS_FILE), Stage::Symbols)?;
    Ok(assignments
        .into_iter()
        .map(|a| {
            (
                FrameRef::new(a.trajectory_id, a.frame_index),
                SymbolicState(a.symbols),
            )
        })
        .collect())
}

pub fn stage_graph(config: &PipelineConfig) -> StageResult<TransitionGraph> {
    let dataset = load_dataset(config)?;
    let keyframes = load_keyframes(config)?;
    let models = load_symbol_models(config)?;
    let transitions = extract_transitions(&dataset, &keyframes, &models).at(Stage::Graph)?;
    let labelled = label_keyframes(&dataset, &keyframes, &models).at(Stage::Graph)?;
    let mut state_frames: BTreeMap<SymbolicState, Vec<FrameRef>> = BTreeMap::new();
    for (frame, state) in labelled {
        state_frames.entry(state).or_default().push(frame);
    }
    let graph = graph::build_graph(&transitions, &state_frames).at(Stage::Graph)?;
    write_json(
        &config.artifact_dir.join(GRAPH_FILE),
        &graph::to_json(&graph),
        Stage::Graph,
    )?;
    fs::write(
        config.artifact_dir.join(GRAPH_DOT_FILE),
        graph::export_dot(&graph),
    )
    .map_err(Error::from)
    .at(Stage::Graph)?;
    Ok(graph)
}

pub fn load_graph(config: &PipelineConfig) -> StageResult<TransitionGraph> {
    let json: graph::GraphJson = read_json(&config.artifact_dir.join(GRAPH_FILE), Stage::Graph)?;
    let transitions = transitions_from_json(&json);
    let mut state_frames: BTreeMap<SymbolicState, Vec<FrameRef>> = BTreeMap::new();
    if config.artifact_dir.join(ASSIGNMENTS_FILE).is_file() {
        for (frame, state) in load_assignments(config)? {
            state_frames.entry(state).or_default().push(frame);
        }
    }
    graph::build_graph(&transitions, &state_frames).at(Stage::Graph)
}

pub fn transitions_from_json(json: &graph::GraphJson) -> Vec<SymbolicTransition> {
    let mut transitions = Vec::new();
    for e in &json.edges {
        for p in &e.provenance {
            transitions.push(SymbolicTransition {
                before: SymbolicState(e.before.clone()),
                after: SymbolicState(e.after.clone()),
                provenance: (
                    FrameRef::new(p.traj.clone(), p.start),
                    FrameRef::new(p.traj.clone(), p.end),
                ),
            });
        }
    }
    transitions
}

pub fn stage_reachability(config: &PipelineConfig) -> StageResult<ReachabilityArtifact<f64>> {
    let dataset = load_dataset(config)?;
    let keyframes = load_keyframes(config)?;
    let training = config.reachability.training(config.seed.wrapping_add(1));
    let artifact = train_reachability(&dataset, &keyframes, &training).at(Stage::Reachability)?;
    let path = config.artifact_dir.join(REACHABILITY_FILE);
    save_reachability(&artifact, &path).at(Stage::Reachability)?;
    // hand back the reloaded artifact so downstream stages score with the
    // same 32-bit parameters any later process would read
    let mut reloaded: ReachabilityArtifact<f64> =
        load_reachability(&path).at(Stage::Reachability)?;
    reloaded.training_log = artifact.training_log;
    Ok(reloaded)
}

pub fn load_reachability_artifact(
    config: &PipelineConfig,
) -> StageResult<ReachabilityArtifact<f64>> {
    load_reachability(&config.artifact_dir.join(REACHABILITY_FILE)).at(Stage::Reachability)
}

pub fn stage_predictor(config: &PipelineConfig) -> StageResult<SoftmaxPredictor<f64>> {
    let dataset = load_dataset(config)?;
    let keyframes = load_keyframes(config)?;
    let graph = load_graph(config)?;
    let json: graph::GraphJson = read_json(&config.artifact_dir.join(GRAPH_FILE), Stage::Graph)?;
    let transitions = transitions_from_json(&json);
    let training_set = build_training_set(&dataset, &keyframes, &transitions, graph.nodes())
        .at(Stage::Predictor)?;
    let predictor = train_predictor(
        &training_set,
        &config.predictor.training(config.seed.wrapping_add(2)),
    )
    .at(Stage::Predictor)?;
    let path = config.artifact_dir.join(PREDICTOR_FILE);
    save_predictor(&predictor, &path).at(Stage::Predictor)?;
    load_predictor(&path).at(Stage::Predictor)
}

pub fn load_predictor_artifact(config: &PipelineConfig) -> StageResult<SoftmaxPredictor<f64>> {
    load_predictor(&config.artifact_dir.join(PREDICTOR_FILE)).at(Stage::Predictor)
}

pub fn stage_index(config: &PipelineConfig) -> StageResult<GoalIndex<f64>> {
    let dataset = load_dataset(config)?;
    let labels = load_assignments(config)?;
    let artifact = load_reachability_artifact(config)?;
    let index = build_goal_index(&dataset, &labels, &artifact.model).at(Stage::Index)?;
    write_json(
        &config.artifact_dir.join(GOAL_INDEX_FILE),
        &index,
        Stage::Index,
    )?;
    Ok(index)
}

pub fn load_goal_index(config: &PipelineConfig) -> StageResult<GoalIndex<f64>> {
    read_json(&config.artifact_dir.join(GOAL_INDEX_FILE), Stage::Index)
}

/// Load every artifact needed to answer plan queries.
pub fn load_bundle(config: &PipelineConfig) -> StageResult<PlannerBundle<f64>> {
    Ok(PlannerBundle {
        graph: load_graph(config)?,
        symbol_models: load_symbol_models(config)?,
        predictor: load_predictor_artifact(config)?,
        reachability: load_reachability_artifact(config)?,
        goal_index: load_goal_index(config)?,
    })
}

/// Summary of one full pipeline run.
#[derive(Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dataset: DatasetReport,
    pub segmentation: SegmentationReport,
    pub symbols: Vec<VocabularyEntry>,
    pub graph: GraphReport,
    pub reachability: ReachabilityReport,
    pub predictor: PredictorReport,
    pub goal_index: IndexReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetReport {
    pub trajectories: usize,
    pub objects: usize,
    pub dim: usize,
    pub total_frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub total_keyframes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphReport {
    pub nodes: usize,
    pub edges: usize,
    pub transitions: usize,
    pub max_symbol_change: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub epochs: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictorReport {
    pub examples: usize,
    pub classes: usize,
    pub final_cross_entropy: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IndexReport {
    pub states: usize,
    pub frames: usize,
}

/// Run every stage in order and write `report.json`.
pub fn run_pipeline(config: &PipelineConfig) -> StageResult<PipelineReport> {
    let dataset = load_dataset(config)?;
    let keyframes = stage_segment(config)?;
    stage_symbols(config)?;
    let graph = stage_graph(config)?;
    let reach = stage_reachability(config)?;
    let predictor = stage_predictor(config)?;
    let index = stage_index(config)?;

    let json: graph::GraphJson = read_json(&config.artifact_dir.join(GRAPH_FILE), Stage::Graph)?;
    let transitions = transitions_from_json(&json);
    let training_set = build_training_set(&dataset, &keyframes, &transitions, graph.nodes())
        .at(Stage::Predictor)?;
    let (ce, _, _) =
        cross_entropy_and_grads(&predictor, &training_set.examples).at(Stage::Predictor)?;
    let correct = training_set
        .examples
        .iter()
        .filter(|(x, t)| {
            predict_next(&predictor, x, 1)
                .ok()
                .and_then(|top| graph.nodes().iter().position(|n| n == &top[0].0))
                == Some(*t)
        })
        .count();
    let summary: Vec<VocabularyEntry> = read_json(
        &config.artifact_dir.join(SYMBOLS_SUMMARY_FILE),
        Stage::Symbols,
    )?;

    let report = PipelineReport {
        dataset: DatasetReport {
            trajectories: dataset.trajectories().len(),
            objects: dataset.num_objects(),
            dim: dataset.dim(),
            total_frames: dataset.total_frames(),
        },
        segmentation: SegmentationReport {
            total_keyframes: keyframes.iter().map(|k| k.indices.len()).sum(),
        },
        symbols: summary,
        graph: GraphReport {
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            transitions: transitions.len(),
            max_symbol_change: graph.max_symbol_change(),
        },
        reachability: ReachabilityReport {
            epochs: reach.training_log.len(),
            initial_loss: reach.training_log.first().copied(),
            final_loss: reach.training_log.last().copied(),
            delta: reach.delta,
            gamma: reach.gamma,
        },
        predictor: PredictorReport {
            examples: training_set.examples.len(),
            classes: predictor.num_classes(),
            final_cross_entropy: ce,
            train_accuracy: correct as f64 / training_set.examples.len().max(1) as f64,
        },
        goal_index: IndexReport {
            states: index.entries.len(),
            frames: index.total_frames(),
        },
    };
    write_json(
        &config.artifact_dir.join(REPORT_FILE),
        &report,
        Stage::Report,
    )?;
    Ok(report)
}

/// Generate a synthetic dataset with ground truth into `out_dir`.
pub fn run_synth(config: &crate::config::SynthConfig) -> StageResult<PathBuf> {
    let world: symplan_core::WorldSpec64 =
        symplan_core::synth::generate_world(&config.world.params()).at(Stage::Synth)?;
    let (dataset, truth) =
        symplan_core::synth::generate_play(&world, &config.play.params()).at(Stage::Synth)?;
    fs::create_dir_all(&config.out_dir)
        .map_err(Error::from)
        .at(Stage::Synth)?;
    dataset.save(&config.out_dir).at(Stage::Synth)?;
    write_json(
        &config.out_dir.join("ground_truth.json"),
        &truth,
        Stage::Synth,
    )?;
    write_json(&config.out_dir.join("world.json"), &world, Stage::Synth)?;
    Ok(config.out_dir.clone())
}

pub fn load_ground_truth(dataset_root: &Path) -> Option<symplan_core::synth::GroundTruth> {
    let text = fs::read_to_string(dataset_root.join("ground_truth.json")).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn load_world(dataset_root: &Path) -> Option<symplan_core::WorldSpec64> {
    let text = fs::read_to_string(dataset_root.join("world.json")).ok()?;
    serde_json::from_str(&text).ok()
}
