//! Three-stage planning: predictor candidates, A* over the symbolic graph,
//! and reachability-constrained beam search over retrieved key frames.
//!
//! The goal index pre-computes both tower embeddings of every key frame, so
//! assembling a visual plan never re-runs the towers over candidate frames;
//! only the live observation is embedded per call.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FrameRef, PlayDataset};
use crate::graph::{astar_with, Heuristic, SymbolicPath, TransitionGraph};
use crate::predictor::{predict_next, SoftmaxPredictor};
use crate::reachability::{ReachabilityArtifact, TwoTowerModel};
use crate::scalar::Real;
use crate::symbols::{label_feature, ObjectSymbolModel, SymbolicState};

/// One retrievable key frame with its pre-computed tower embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
pub struct GoalIndexEntry<T> {
    pub frame: FrameRef,
    pub phi: Vec<T>,
    pub psi: Vec<T>,
}

/// Key frames grouped by symbolic state, embeddings included.
///
/// JSON serialization goes through a list of (state, entries) pairs because
/// JSON map keys must be strings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(
    bound(
        serialize = "T: Serialize + Clone",
        deserialize = "T: serde::de::DeserializeOwned"
    ),
    from = "GoalIndexRepr<T>",
    into = "GoalIndexRepr<T>"
)]
pub struct GoalIndex<T> {
    pub entries: BTreeMap<SymbolicState, Vec<GoalIndexEntry<T>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
struct GoalIndexRepr<T> {
    entries: Vec<(SymbolicState, Vec<GoalIndexEntry<T>>)>,
}

impl<T> From<GoalIndexRepr<T>> for GoalIndex<T> {
    fn from(repr: GoalIndexRepr<T>) -> Self {
        Self {
            entries: repr.entries.into_iter().collect(),
        }
    }
}

impl<T> From<GoalIndex<T>> for GoalIndexRepr<T> {
    fn from(index: GoalIndex<T>) -> Self {
        Self {
            entries: index.entries.into_iter().collect(),
        }
    }
}

impl<T: Real> GoalIndex<T> {
    pub fn total_frames(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    pub fn get(&self, state: &SymbolicState) -> Option<&[GoalIndexEntry<T>]> {
        self.entries.get(state).map(|v| v.as_slice())
    }
}

/// Embed every labelled key frame through both towers once and group by
/// state. Entry order within a state follows the input label order.
pub fn build_goal_index<T: Real>(
    dataset: &PlayDataset<T>,
    labels: &[(FrameRef, SymbolicState)],
    model: &TwoTowerModel<T>,
) -> Result<GoalIndex<T>> {
    let mut entries: BTreeMap<SymbolicState, Vec<GoalIndexEntry<T>>> = BTreeMap::new();
    for (frame, state) in labels {
        let feature = dataset.resolve(frame)?;
        entries
            .entry(state.clone())
            .or_default()
            .push(GoalIndexEntry {
                frame: frame.clone(),
                phi: model.phi_embed(feature)?,
                psi: model.psi_embed(feature)?,
            });
    }
    Ok(GoalIndex { entries })
}

/// An assembled visual plan: the symbolic path plus one retrieved frame per
/// path state after the start, scored pairwise by the reachability model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
pub struct VisualPlan<T> {
    pub symbolic_path: SymbolicPath,
    pub subgoals: Vec<FrameRef>,
    /// Score of each consecutive pair, starting with (observation, first
    /// subgoal).
    pub pair_scores: Vec<T>,
    /// True iff every pair score clears the feasibility threshold.
    pub feasible: bool,
    pub total_score: T,
}

/// Run A* from each candidate in order and keep the cheapest path; among
/// equal costs the earlier (higher-probability) candidate wins.
pub fn symbolic_plan(
    graph: &TransitionGraph,
    candidates: &[SymbolicState],
    goal: &SymbolicState,
    heuristic: Heuristic,
) -> Result<SymbolicPath> {
    let mut best: Option<SymbolicPath> = None;
    for candidate in candidates {
        if !graph.contains(candidate) {
            continue;
        }
        match astar_with(graph, candidate, goal, heuristic) {
            Ok(path) => {
                let better = best.as_ref().is_none_or(|b| path.cost < b.cost);
                if better {
                    best = Some(path);
                }
            }
            Err(Error::NoPath { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::NoPath {
        start: format!("{} candidate(s)", candidates.len()),
        goal: goal.to_string(),
    })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[derive(Clone)]
struct BeamItem<T> {
    choices: Vec<usize>,
    scores: Vec<T>,
    total: T,
    feasible: bool,
}

/// Pick one frame per path state maximizing the summed pairwise reachability,
/// subject to every pair clearing `delta`. The beam keeps the `beam_width`
/// best prefixes per step over at most `per_state` sampled candidates per
/// state; when no feasible assembly exists the best-scoring infeasible one is
/// returned with `feasible = false`.
#[allow(clippy::too_many_arguments)]
pub fn beam_search_plan<T: Real>(
    index: &GoalIndex<T>,
    path: &SymbolicPath,
    current: &[T],
    model: &TwoTowerModel<T>,
    delta: T,
    per_state: usize,
    beam_width: usize,
    rng: &mut impl Rng,
) -> Result<VisualPlan<T>> {
    if per_state == 0 || beam_width == 0 {
        return Err(Error::InvalidParameter {
            name: "beam",
            reason: "per_state and beam_width must be at least 1".into(),
        });
    }
    if path.states.len() <= 1 {
        return Ok(VisualPlan {
            symbolic_path: path.clone(),
            subgoals: Vec::new(),
            pair_scores: Vec::new(),
            feasible: true,
            total_score: T::zero(),
        });
    }
    // sample up to per_state candidates per path state, without replacement
    let mut stages: Vec<Vec<&GoalIndexEntry<T>>> = Vec::with_capacity(path.states.len() - 1);
    for state in &path.states[1..] {
        let entries = index
            .get(state)
            .filter(|e| !e.is_empty())
            .ok_or_else(|| Error::EmptyIndexEntry(state.to_string()))?;
        let chosen: Vec<&GoalIndexEntry<T>> = if entries.len() <= per_state {
            entries.iter().collect()
        } else {
            let mut ids: Vec<usize> = (0..entries.len()).collect();
            ids.shuffle(rng);
            ids.truncate(per_state);
            ids.sort_unstable();
            ids.into_iter().map(|i| &entries[i]).collect()
        };
        stages.push(chosen);
    }

    let phi_current = model.phi_embed(current)?;
    let mut beam = vec![BeamItem {
        choices: Vec::new(),
        scores: Vec::new(),
        total: T::zero(),
        feasible: true,
    }];
    for (stage_idx, stage) in stages.iter().enumerate() {
        let mut next: Vec<BeamItem<T>> = Vec::with_capacity(beam.len() * stage.len());
        for item in &beam {
            let phi_prev = if stage_idx == 0 {
                &phi_current
            } else {
                &stages[stage_idx - 1][*item.choices.last().unwrap()].phi
            };
            for (cand_idx, cand) in stage.iter().enumerate() {
                let score = dot(phi_prev, &cand.psi);
                let mut choices = item.choices.clone();
                choices.push(cand_idx);
                let mut scores = item.scores.clone();
                scores.push(score);
                next.push(BeamItem {
                    choices,
                    scores,
                    total: item.total + score,
                    feasible: item.feasible && score >= delta,
                });
            }
        }
        // feasible prefixes first, then score, then candidate order
        next.sort_by(|a, b| {
            b.feasible
                .cmp(&a.feasible)
                .then(b.total.partial_cmp(&a.total).expect("finite scores"))
                .then(a.choices.cmp(&b.choices))
        });
        next.truncate(beam_width);
        beam = next;
    }
    let best = beam.into_iter().next().expect("beam never empties");
    Ok(VisualPlan {
        symbolic_path: path.clone(),
        subgoals: best
            .choices
            .iter()
            .zip(&stages)
            .map(|(&c, stage)| stage[c].frame.clone())
            .collect(),
        pair_scores: best.scores,
        feasible: best.feasible,
        total_score: best.total,
    })
}

/// Everything needed to plan, loaded once and shared read-only.
#[derive(Debug, Clone)]
pub struct PlannerBundle<T> {
    pub graph: TransitionGraph,
    pub symbol_models: Vec<ObjectSymbolModel<T>>,
    pub predictor: SoftmaxPredictor<T>,
    pub reachability: ReachabilityArtifact<T>,
    pub goal_index: GoalIndex<T>,
}

/// Per-call planning knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Predictor candidates considered.
    pub top_m: usize,
    /// Candidate frames sampled per path state.
    pub per_state: usize,
    pub beam_width: usize,
    pub heuristic: Heuristic,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            top_m: 3,
            per_state: 10,
            beam_width: 5,
            heuristic: Heuristic::Hamming,
            seed: 0,
        }
    }
}

/// A plan plus how long it took to produce.
#[derive(Debug, Clone)]
pub struct PlanOutcome<T> {
    pub plan: VisualPlan<T>,
    pub elapsed: Duration,
}

/// Candidate paths anchored at the labelled observation: a candidate equal
/// to the current state plans from it directly; a candidate one observed
/// skill ahead gets the current state prepended; anything else is not
/// executable as a next step and is skipped.
fn anchored_plan(
    graph: &TransitionGraph,
    now: &SymbolicState,
    candidates: &[SymbolicState],
    goal: &SymbolicState,
    heuristic: Heuristic,
) -> Option<SymbolicPath> {
    let mut best: Option<SymbolicPath> = None;
    for candidate in candidates {
        let full = if candidate == now {
            astar_with(graph, now, goal, heuristic).ok()
        } else if graph.edge(now, candidate).is_some() {
            astar_with(graph, candidate, goal, heuristic).ok().map(|p| {
                let mut states = Vec::with_capacity(p.states.len() + 1);
                states.push(now.clone());
                states.extend(p.states);
                SymbolicPath {
                    cost: p.cost + 1,
                    states,
                }
            })
        } else {
            None
        };
        if let Some(path) = full {
            if best.as_ref().is_none_or(|b| path.cost < b.cost) {
                best = Some(path);
            }
        }
    }
    // the predictor may fail to propose anything executable; the labelled
    // state itself is still a valid anchor
    best.or_else(|| astar_with(graph, now, goal, heuristic).ok())
}

/// Compose predictor, symbolic search, and beam search into one plan. Pure
/// function of the artifacts, the observation, and the seed.
///
/// When the labelled observation is a graph node, every candidate path is
/// anchored there so the first subgoal is always one observed skill away;
/// otherwise the minimum-cost candidate path is used as-is.
pub fn plan<T: Real>(
    bundle: &PlannerBundle<T>,
    current: &[T],
    goal: &SymbolicState,
    config: &PlanConfig,
) -> Result<PlanOutcome<T>> {
    let started = Instant::now();
    if !bundle.graph.contains(goal) {
        return Err(Error::GoalNotInGraph(goal.to_string()));
    }
    let candidates: Vec<SymbolicState> = predict_next(&bundle.predictor, current, config.top_m)?
        .into_iter()
        .map(|(state, _)| state)
        .collect();
    let now = label_feature(&bundle.symbol_models, current)?;
    let path = if bundle.graph.contains(&now) {
        // we know where we are: an unreachable goal is a real NoPath, not a
        // license to plan from an unrelated candidate
        anchored_plan(&bundle.graph, &now, &candidates, goal, config.heuristic).ok_or_else(
            || Error::NoPath {
                start: now.to_string(),
                goal: goal.to_string(),
            },
        )?
    } else {
        symbolic_plan(&bundle.graph, &candidates, goal, config.heuristic)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let plan = beam_search_plan(
        &bundle.goal_index,
        &path,
        current,
        &bundle.reachability.model,
        bundle.reachability.delta,
        config.per_state,
        config.beam_width,
        &mut rng,
    )?;
    Ok(PlanOutcome {
        plan,
        elapsed: started.elapsed(),
    })
}

/// Environment surface for the closed planning loop: observe the current
/// frame feature and try to advance one symbolic step toward a subgoal.
pub trait World<T: Real> {
    fn observe(&mut self) -> Vec<T>;
    /// Returns true when the step was actually taken.
    fn advance(&mut self, subgoal: &FrameRef) -> Result<bool>;
}

/// One iteration of [`replan_loop`].
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    pub observed_state: SymbolicState,
    pub plan: VisualPlan<T>,
    pub advanced: bool,
}

/// Full episode trace.
#[derive(Debug, Clone)]
pub struct EpisodeRecord<T> {
    pub iterations: Vec<IterationRecord<T>>,
    pub steps: usize,
}

/// Closed-loop knobs.
#[derive(Debug, Clone, Copy)]
pub struct ReplanConfig {
    pub plan: PlanConfig,
    pub max_steps: usize,
    /// Reuse the previous symbolic path when the labelled state still lies on
    /// it, re-running only the beam search. Off by default: the loop re-plans
    /// from scratch every iteration.
    pub cache_symbolic_path: bool,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        Self {
            plan: PlanConfig::default(),
            max_steps: 50,
            cache_symbolic_path: false,
        }
    }
}

/// Plan, submit the first subgoal, observe, repeat. Terminates when the
/// labelled observation equals the goal, or fails with `MaxStepsExceeded`.
pub fn replan_loop<T: Real, W: World<T>>(
    world: &mut W,
    bundle: &PlannerBundle<T>,
    goal: &SymbolicState,
    config: &ReplanConfig,
) -> Result<EpisodeRecord<T>> {
    let mut iterations = Vec::new();
    let mut cached_path: Option<SymbolicPath> = None;
    for step in 0..config.max_steps {
        let observation = world.observe();
        let state = label_feature(&bundle.symbol_models, &observation)?;
        if &state == goal {
            return Ok(EpisodeRecord {
                iterations,
                steps: step,
            });
        }
        // deterministic per-iteration seed keeps the whole episode replayable
        let mut per_step = config.plan;
        per_step.seed = config.plan.seed.wrapping_add(step as u64);

        let reusable = cached_path.as_ref().and_then(|p| {
            p.states
                .iter()
                .position(|s| *s == state)
                .filter(|&i| i + 1 < p.states.len())
                .map(|i| SymbolicPath {
                    states: p.states[i..].to_vec(),
                    cost: p.states.len() - 1 - i,
                })
        });
        let outcome = match (config.cache_symbolic_path, reusable) {
            (true, Some(path)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(per_step.seed);
                let plan = beam_search_plan(
                    &bundle.goal_index,
                    &path,
                    &observation,
                    &bundle.reachability.model,
                    bundle.reachability.delta,
                    per_step.per_state,
                    per_step.beam_width,
                    &mut rng,
                )?;
                PlanOutcome {
                    plan,
                    elapsed: Duration::ZERO,
                }
            }
            _ => plan(bundle, &observation, goal, &per_step)?,
        };
        cached_path = Some(outcome.plan.symbolic_path.clone());
        let advanced = match outcome.plan.subgoals.first() {
            Some(subgoal) => world.advance(subgoal)?,
            // planner thinks it is done but the labelled state disagrees;
            // observe again next iteration
            None => false,
        };
        iterations.push(IterationRecord {
            observed_state: state,
            plan: outcome.plan,
            advanced,
        });
    }
    Err(Error::MaxStepsExceeded(config.max_steps))
}
