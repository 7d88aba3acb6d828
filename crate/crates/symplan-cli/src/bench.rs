//! Plan queries, the closed replanning loop, and the benchmark harness.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use symplan_core::features::FrameRef;
use symplan_core::planner::{plan, PlanOutcome, PlannerBundle};
use symplan_core::symbols::{label_state, SymbolicState};
use symplan_core::synth::evaluate_plan;
use symplan_core::{Error, PlayDataset64};

use crate::config::PipelineConfig;
use crate::pipeline::{load_ground_truth, Stage, StageError, StageResult};

/// `"traj-003:57"` -> FrameRef.
pub fn parse_frame_ref(text: &str) -> Result<FrameRef, Error> {
    let (traj, frame) = text.rsplit_once(':').ok_or(Error::InvalidParameter {
        name: "frame_ref",
        reason: format!("expected trajectory:frame, got {text:?}"),
    })?;
    let frame_index = frame.parse().map_err(|_| Error::InvalidParameter {
        name: "frame_ref",
        reason: format!("frame index is not an integer: {frame:?}"),
    })?;
    Ok(FrameRef::new(traj, frame_index))
}

/// A goal is either a symbol tuple (`"1,0,2"`) or a frame reference
/// (`"traj-003:57"`), which is labelled through the symbol models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalSpec {
    Tuple(Vec<usize>),
    Frame(String),
}

impl GoalSpec {
    pub fn parse(text: &str) -> Result<Self, Error> {
        if text.contains(':') {
            parse_frame_ref(text)?;
            return Ok(GoalSpec::Frame(text.to_string()));
        }
        let symbols: Result<Vec<usize>, _> = text.split(',').map(|p| p.trim().parse()).collect();
        match symbols {
            Ok(symbols) if !symbols.is_empty() => Ok(GoalSpec::Tuple(symbols)),
            _ => Err(Error::InvalidParameter {
                name: "goal",
                reason: format!(
                    "expected a symbol tuple like 1,0,2 or a frame like traj-000:57, got {text:?}"
                ),
            }),
        }
    }

    pub fn resolve(
        &self,
        dataset: &PlayDataset64,
        bundle: &PlannerBundle<f64>,
    ) -> Result<SymbolicState, Error> {
        match self {
            GoalSpec::Tuple(symbols) => Ok(SymbolicState(symbols.clone())),
            GoalSpec::Frame(text) => {
                let frame = parse_frame_ref(text)?;
                let traj = dataset.trajectory(&frame.trajectory_id)?;
                label_state(&bundle.symbol_models, traj, frame.frame_index)
            }
        }
    }
}

impl std::fmt::Display for GoalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GoalSpec::Tuple(symbols) => {
                let parts: Vec<String> = symbols.iter().map(|s| s.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
            GoalSpec::Frame(text) => f.write_str(text),
        }
    }
}

/// Wire form of a plan: what `symplan plan` prints.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanJson {
    pub symbolic_path: Vec<Vec<usize>>,
    pub subgoals: Vec<FrameRefJson>,
    pub pair_scores: Vec<f64>,
    pub feasible: bool,
    pub total_score: f64,
    pub timing_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameRefJson {
    pub trajectory_id: String,
    pub frame_index: usize,
}

pub fn plan_to_json(outcome: &PlanOutcome<f64>) -> PlanJson {
    let plan = &outcome.plan;
    PlanJson {
        symbolic_path: plan
            .symbolic_path
            .states
            .iter()
            .map(|s| s.0.clone())
            .collect(),
        subgoals: plan
            .subgoals
            .iter()
            .map(|f| FrameRefJson {
                trajectory_id: f.trajectory_id.clone(),
                frame_index: f.frame_index,
            })
            .collect(),
        pair_scores: plan.pair_scores.clone(),
        feasible: plan.feasible,
        total_score: plan.total_score,
        timing_ms: outcome.elapsed.as_secs_f64() * 1e3,
    }
}

/// Answer one plan query from serialized artifacts.
pub fn run_plan(
    config: &PipelineConfig,
    obs: &str,
    goal: &GoalSpec,
) -> StageResult<PlanOutcome<f64>> {
    let dataset = crate::pipeline::load_dataset(config)?;
    let bundle = crate::pipeline::load_bundle(config)?;
    let at = |e: Error| StageError {
        stage: Stage::Plan,
        source: e,
    };
    let obs_ref = parse_frame_ref(obs).map_err(at)?;
    let feature = dataset.resolve(&obs_ref).map_err(at)?;
    let goal_state = goal.resolve(&dataset, &bundle).map_err(at)?;
    plan(
        &bundle,
        feature,
        &goal_state,
        &config.planner.plan_config(config.seed),
    )
    .map_err(at)
}

/// Episode summary printed by `symplan loop`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EpisodeJson {
    pub reached: bool,
    pub steps: usize,
    pub iterations: Vec<IterationJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IterationJson {
    pub observed_state: Vec<usize>,
    pub submitted: Option<FrameRefJson>,
    pub advanced: bool,
    pub feasible: bool,
}

/// Closed-loop run against the synthetic executor; needs the ground truth
/// files written by `symplan synth`.
pub fn run_loop(
    config: &PipelineConfig,
    goal: &GoalSpec,
    max_steps: usize,
    fail_probability: f64,
    obs_noise: f64,
    start: Option<&str>,
) -> StageResult<EpisodeJson> {
    use symplan_core::planner::{replan_loop, ReplanConfig};
    use symplan_core::synth::SyntheticExecutor;

    let at = |e: Error| StageError {
        stage: Stage::Loop,
        source: e,
    };
    let dataset = crate::pipeline::load_dataset(config)?;
    let bundle = crate::pipeline::load_bundle(config)?;
    let truth = load_ground_truth(&config.dataset_root).ok_or_else(|| {
        at(Error::InvalidParameter {
            name: "ground_truth",
            reason: format!(
                "{}/ground_truth.json not found; the loop needs a synthetic dataset",
                config.dataset_root.display()
            ),
        })
    })?;
    let world = crate::pipeline::load_world(&config.dataset_root).ok_or_else(|| {
        at(Error::InvalidParameter {
            name: "world",
            reason: format!("{}/world.json not found", config.dataset_root.display()),
        })
    })?;
    let goal_state = goal.resolve(&dataset, &bundle).map_err(at)?;
    let start_tuple = match start {
        Some(text) => match GoalSpec::parse(text).map_err(at)? {
            GoalSpec::Tuple(symbols) => SymbolicState(symbols),
            GoalSpec::Frame(frame) => {
                let frame = parse_frame_ref(&frame).map_err(at)?;
                truth.frame_tuple(&frame).map_err(at)?.clone()
            }
        },
        None => truth.initial.clone(),
    };
    let mut executor = SyntheticExecutor::new(
        &world,
        &truth,
        start_tuple,
        fail_probability,
        obs_noise,
        config.seed.wrapping_add(3),
    );
    let replan = ReplanConfig {
        plan: config.planner.plan_config(config.seed),
        max_steps,
        cache_symbolic_path: false,
    };
    match replan_loop(&mut executor, &bundle, &goal_state, &replan) {
        Ok(record) => Ok(EpisodeJson {
            reached: true,
            steps: record.steps,
            iterations: record
                .iterations
                .iter()
                .map(|it| IterationJson {
                    observed_state: it.observed_state.0.clone(),
                    submitted: it.plan.subgoals.first().map(|f| FrameRefJson {
                        trajectory_id: f.trajectory_id.clone(),
                        frame_index: f.frame_index,
                    }),
                    advanced: it.advanced,
                    feasible: it.plan.feasible,
                })
                .collect(),
        }),
        Err(e) => Err(at(e)),
    }
}

/// Benchmark input: a list of goals, each planned from several observations.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalsFile {
    pub goals: Vec<GoalSpec>,
    pub plans_per_goal: usize,
}

impl Default for GoalsFile {
    fn default() -> Self {
        Self {
            goals: Vec::new(),
            plans_per_goal: 20,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub goals: Vec<GoalReport>,
    pub overall: OverallReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GoalReport {
    pub goal: String,
    pub plans: usize,
    pub no_path: usize,
    /// Ground-truth meaningful rate when the oracle is available, else the
    /// delta-feasibility rate.
    pub meaningful_rate: f64,
    pub oracle: String,
    pub feasible_rate: f64,
    pub latency_ms: LatencyReport,
    /// Path length (state count) -> number of plans.
    pub path_lengths: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OverallReport {
    pub plans: usize,
    pub meaningful_rate: f64,
    pub feasible_rate: f64,
    pub latency_ms: LatencyReport,
    /// Budget the median latency is judged against, in milliseconds.
    pub latency_target_ms: f64,
    pub within_latency_target: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

fn latency_report(samples: &mut [f64]) -> LatencyReport {
    if samples.is_empty() {
        return LatencyReport {
            mean: 0.0,
            p50: 0.0,
            p95: 0.0,
        };
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let pick = |q: f64| samples[((q * (samples.len() - 1) as f64).round()) as usize];
    LatencyReport {
        mean,
        p50: pick(0.5),
        p95: pick(0.95),
    }
}

/// Plan `plans_per_goal` times per goal from randomly drawn key-frame
/// observations and report quality and latency.
pub fn run_benchmark(config: &PipelineConfig, goals_path: &Path) -> StageResult<BenchReport> {
    let at = |e: Error| StageError {
        stage: Stage::Benchmark,
        source: e,
    };
    let text = std::fs::read_to_string(goals_path)
        .map_err(Error::from)
        .map_err(at)?;
    let goals: GoalsFile = serde_json::from_str(&text)
        .map_err(Error::from)
        .map_err(at)?;
    if goals.goals.is_empty() {
        return Err(at(Error::InvalidParameter {
            name: "goals",
            reason: "goals file lists no goals".into(),
        }));
    }
    let dataset = crate::pipeline::load_dataset(config)?;
    let bundle = crate::pipeline::load_bundle(config)?;
    let truth = load_ground_truth(&config.dataset_root);
    let labels = crate::pipeline::load_assignments(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(4));

    let mut reports = Vec::new();
    let mut all_latency = Vec::new();
    let mut all_meaningful = (0usize, 0usize);
    let mut all_feasible = (0usize, 0usize);
    for goal in &goals.goals {
        let goal_state = goal.resolve(&dataset, &bundle).map_err(at)?;
        let mut no_path = 0usize;
        let mut meaningful = (0usize, 0usize);
        let mut feasible = (0usize, 0usize);
        let mut latency = Vec::new();
        let mut lengths: std::collections::BTreeMap<usize, usize> =
            std::collections::BTreeMap::new();
        for i in 0..goals.plans_per_goal {
            let (obs_ref, _) = labels
                .choose(&mut rng)
                .expect("assignments are nonempty")
                .clone();
            let feature = dataset.resolve(&obs_ref).map_err(at)?;
            let mut plan_cfg = config
                .planner
                .plan_config(config.seed.wrapping_add(i as u64));
            plan_cfg.seed = config.seed.wrapping_add(i as u64);
            match plan(&bundle, feature, &goal_state, &plan_cfg) {
                Ok(outcome) => {
                    latency.push(outcome.elapsed.as_secs_f64() * 1e3);
                    *lengths
                        .entry(outcome.plan.symbolic_path.states.len())
                        .or_default() += 1;
                    feasible.1 += 1;
                    if outcome.plan.feasible {
                        feasible.0 += 1;
                    }
                    if let Some(truth) = &truth {
                        let start = truth.frame_tuple(&obs_ref).ok().cloned();
                        if let Ok(verdict) =
                            evaluate_plan(truth, start.as_ref(), &outcome.plan.subgoals)
                        {
                            meaningful.1 += 1;
                            if verdict.meaningful {
                                meaningful.0 += 1;
                            }
                        }
                    } else {
                        meaningful.1 += 1;
                        if outcome.plan.feasible {
                            meaningful.0 += 1;
                        }
                    }
                }
                Err(Error::NoPath { .. }) | Err(Error::GoalNotInGraph(_)) => no_path += 1,
                Err(e) => return Err(at(e)),
            }
        }
        all_latency.extend(latency.iter().copied());
        all_meaningful.0 += meaningful.0;
        all_meaningful.1 += meaningful.1;
        all_feasible.0 += feasible.0;
        all_feasible.1 += feasible.1;
        reports.push(GoalReport {
            goal: goal.to_string(),
            plans: feasible.1,
            no_path,
            meaningful_rate: meaningful.0 as f64 / meaningful.1.max(1) as f64,
            oracle: if truth.is_some() {
                "ground_truth".into()
            } else {
                "delta_feasible".into()
            },
            feasible_rate: feasible.0 as f64 / feasible.1.max(1) as f64,
            latency_ms: latency_report(&mut latency),
            path_lengths: lengths.into_iter().collect(),
        });
    }
    let latency_ms = latency_report(&mut all_latency);
    let within = latency_ms.p50 <= LATENCY_TARGET_MS;
    Ok(BenchReport {
        goals: reports,
        overall: OverallReport {
            plans: all_feasible.1,
            meaningful_rate: all_meaningful.0 as f64 / all_meaningful.1.max(1) as f64,
            feasible_rate: all_feasible.0 as f64 / all_feasible.1.max(1) as f64,
            latency_ms,
            latency_target_ms: LATENCY_TARGET_MS,
            within_latency_target: within,
        },
    })
}

/// Median plan latency budget.
pub const LATENCY_TARGET_MS: f64 = 50.0;

/// Plain-text table for terminals; the JSON report carries the same data.
pub fn format_bench_table(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>6} {:>8} {:>12} {:>10} {:>10} {:>10}\n",
        "goal", "plans", "no-path", "meaningful", "feasible", "p50 ms", "p95 ms"
    ));
    for g in &report.goals {
        out.push_str(&format!(
            "{:<16} {:>6} {:>8} {:>12.2} {:>10.2} {:>10.3} {:>10.3}\n",
            g.goal,
            g.plans,
            g.no_path,
            g.meaningful_rate,
            g.feasible_rate,
            g.latency_ms.p50,
            g.latency_ms.p95
        ));
    }
    out.push_str(&format!(
        "{:<16} {:>6} {:>8} {:>12.2} {:>10.2} {:>10.3} {:>10.3}\n",
        "overall",
        report.overall.plans,
        "",
        report.overall.meaningful_rate,
        report.overall.feasible_rate,
        report.overall.latency_ms.p50,
        report.overall.latency_ms.p95
    ));
    out.push_str(&format!(
        "p50 within {} ms budget: {}\n",
        report.overall.latency_target_ms,
        if report.overall.within_latency_target {
            "yes"
        } else {
            "NO"
        }
    ));
    out
}
