//! Synthetic play-data generator with known ground truth.
//!
//! A world holds per-object unit prototype vectors, one per discrete state,
//! plus a set of single-object skills forming a connected directed graph over
//! tuples reachable from the initial tuple. Play trajectories random-walk the
//! skill graph: dwell segments emit the prototype plus observation noise,
//! transit segments spherically interpolate the moving object's prototype
//! (with extra per-frame motion jitter, since an object under manipulation
//! changes appearance much faster than a resting one). Everything here is the
//! test bed; nothing downstream depends on it at run time.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FrameRef, PlayDataset, PlayTrajectory};
use crate::scalar::Real;
use crate::symbols::SymbolicState;

/// Ground-truth world: prototypes and the skill set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
pub struct WorldSpec<T> {
    pub num_objects: usize,
    pub dim: usize,
    pub states_per_object: Vec<usize>,
    /// `prototypes[object][state]` is a unit vector.
    pub prototypes: Vec<Vec<Vec<T>>>,
    /// Allowed (before, after) tuple transitions; each changes one object.
    pub skills: Vec<(SymbolicState, SymbolicState)>,
    pub initial: SymbolicState,
    pub seed: u64,
}

impl<T: Real> WorldSpec<T> {
    pub fn prototype(&self, object: usize, state: usize) -> &[T] {
        &self.prototypes[object][state]
    }

    /// Tuples reachable from the initial tuple via the skill set.
    pub fn reachable(&self) -> Vec<SymbolicState> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.initial.clone());
        queue.push_back(self.initial.clone());
        while let Some(s) = queue.pop_front() {
            for (before, after) in &self.skills {
                if *before == s && seen.insert(after.clone()) {
                    queue.push_back(after.clone());
                }
            }
        }
        seen.into_iter().collect()
    }

    pub fn has_skill(&self, before: &SymbolicState, after: &SymbolicState) -> bool {
        self.skills.iter().any(|(b, a)| b == before && a == after)
    }
}

/// Parameters for [`generate_world`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldParams {
    pub num_objects: usize,
    pub states_per_object: Vec<usize>,
    pub num_skills: usize,
    pub dim: usize,
    /// Minimum pairwise angle between same-object prototypes, degrees.
    pub min_separation_deg: f64,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            num_objects: 3,
            states_per_object: vec![3, 3, 2],
            num_skills: 8,
            dim: 8,
            min_separation_deg: 30.0,
            seed: 0,
        }
    }
}

fn unit_gaussian<T: Real>(rng: &mut ChaCha8Rng, dim: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| T::of(x / norm)).collect();
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

const SEPARATION_RETRIES: usize = 10_000;

/// Random prototypes with the requested separation plus a connected skill
/// graph grown from the all-zeros initial tuple.
pub fn generate_world<T: Real>(params: &WorldParams) -> Result<WorldSpec<T>> {
    if params.num_objects == 0
        || params.dim == 0
        || params.states_per_object.len() != params.num_objects
        || params.states_per_object.contains(&0)
    {
        return Err(Error::InvalidParameter {
            name: "world",
            reason: "need at least one object, one dimension, and one state per object".into(),
        });
    }
    if params.states_per_object.iter().all(|&n| n == 1) {
        return Err(Error::NoSkillsPossible);
    }
    let universe: usize = params.states_per_object.iter().product();
    let out_degree: usize = params.states_per_object.iter().map(|n| n - 1).sum();
    let max_skills = universe * out_degree;
    if params.num_skills == 0 || params.num_skills > max_skills {
        return Err(Error::InvalidParameter {
            name: "num_skills",
            reason: format!("must be in [1, {max_skills}]"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let min_cos = T::of(params.min_separation_deg.to_radians().cos());

    let mut prototypes = Vec::with_capacity(params.num_objects);
    for &n_states in &params.states_per_object {
        let mut protos: Vec<Vec<T>> = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut attempts = 0;
            let accepted = loop {
                let cand = unit_gaussian::<T>(&mut rng, params.dim);
                if protos.iter().all(|p| dot(p, &cand) <= min_cos) {
                    break cand;
                }
                attempts += 1;
                if attempts >= SEPARATION_RETRIES {
                    return Err(Error::SeparationUnsatisfiable {
                        retries: SEPARATION_RETRIES,
                    });
                }
            };
            protos.push(accepted);
        }
        prototypes.push(protos);
    }

    let initial = SymbolicState(vec![0; params.num_objects]);
    let mut reached: Vec<SymbolicState> = vec![initial.clone()];
    let mut skills: BTreeSet<(SymbolicState, SymbolicState)> = BTreeSet::new();
    let mut attempts = 0;
    while skills.len() < params.num_skills {
        attempts += 1;
        if attempts > 1000 * params.num_skills {
            return Err(Error::InvalidParameter {
                name: "num_skills",
                reason: "could not place the requested number of distinct skills".into(),
            });
        }
        // grow from a node with no outgoing skill when one exists, so play
        // walks rarely dead-end
        let sinks: Vec<&SymbolicState> = reached
            .iter()
            .filter(|s| !skills.iter().any(|(b, _)| b == *s))
            .collect();
        let before = if sinks.is_empty() {
            reached[rng.gen_range(0..reached.len())].clone()
        } else {
            sinks[rng.gen_range(0..sinks.len())].clone()
        };
        let object = rng.gen_range(0..params.num_objects);
        let n_states = params.states_per_object[object];
        if n_states < 2 {
            continue;
        }
        let mut after = before.clone();
        let next = rng.gen_range(0..n_states);
        if next == before.0[object] {
            continue;
        }
        after.0[object] = next;
        if skills.insert((before, after.clone())) && !reached.contains(&after) {
            reached.push(after);
        }
    }

    Ok(WorldSpec {
        num_objects: params.num_objects,
        dim: params.dim,
        states_per_object: params.states_per_object.clone(),
        prototypes,
        skills: skills.into_iter().collect(),
        initial,
        seed: params.seed,
    })
}

/// Parameters for [`generate_play`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayParams {
    pub num_trajectories: usize,
    pub skills_per_trajectory_min: usize,
    pub skills_per_trajectory_max: usize,
    /// Frames spent resting at each stable tuple.
    pub dwell: usize,
    /// Frames spent interpolating during each skill.
    pub transit: usize,
    /// Observation noise on every emitted object vector.
    pub noise_sigma: f64,
    /// Extra jitter on the moving object during transit frames.
    pub motion_jitter: f64,
    /// Random detour waypoints the moving object passes through during a
    /// skill. An object under manipulation changes appearance fast; routing
    /// its feature path through off-prototype waypoints gives transits the
    /// deep, consistent similarity dips that resting segments never show.
    pub transit_waypoints: usize,
    pub seed: u64,
}

impl Default for PlayParams {
    fn default() -> Self {
        Self {
            num_trajectories: 15,
            skills_per_trajectory_min: 5,
            skills_per_trajectory_max: 15,
            dwell: 20,
            transit: 8,
            noise_sigma: 0.05,
            motion_jitter: 0.1,
            transit_waypoints: 6,
            seed: 0,
        }
    }
}

/// Everything the generator knows about one emitted trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTruth {
    pub id: String,
    /// Inclusive frame ranges of each dwell segment.
    pub stable_segments: Vec<(usize, usize)>,
    /// Midpoint frame of each dwell segment.
    pub stable_frames: Vec<usize>,
    /// True tuple of every frame (transit frames belong to the nearer end).
    pub frame_tuples: Vec<SymbolicState>,
    /// Executed skills, in order.
    pub script: Vec<(SymbolicState, SymbolicState)>,
}

/// Ground truth for a generated dataset, free of the scalar type so it can be
/// stored next to the dataset and reloaded by any lane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub skills: Vec<(SymbolicState, SymbolicState)>,
    pub initial: SymbolicState,
    pub trajectories: Vec<TrajectoryTruth>,
}

impl GroundTruth {
    pub fn trajectory(&self, id: &str) -> Result<&TrajectoryTruth> {
        self.trajectories
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::UnknownTrajectory(id.to_string()))
    }

    /// True tuple behind a frame reference.
    pub fn frame_tuple(&self, frame: &FrameRef) -> Result<&SymbolicState> {
        let traj =
            self.trajectory(&frame.trajectory_id)
                .map_err(|_| Error::UnresolvableFrameRef {
                    trajectory: frame.trajectory_id.clone(),
                    frame: frame.frame_index,
                })?;
        traj.frame_tuples
            .get(frame.frame_index)
            .ok_or_else(|| Error::UnresolvableFrameRef {
                trajectory: frame.trajectory_id.clone(),
                frame: frame.frame_index,
            })
    }

    pub fn has_skill(&self, before: &SymbolicState, after: &SymbolicState) -> bool {
        self.skills.iter().any(|(b, a)| b == before && a == after)
    }
}

fn slerp<T: Real>(a: &[T], b: &[T], u: f64) -> Vec<T> {
    let cos = dot(a, b).as_f64().clamp(-1.0, 1.0);
    let omega = cos.acos();
    if omega.abs() < 1e-9 {
        return a.to_vec();
    }
    let sin = omega.sin();
    let wa = ((1.0 - u) * omega).sin() / sin;
    let wb = (u * omega).sin() / sin;
    a.iter()
        .zip(b)
        .map(|(&x, &y)| T::of(wa) * x + T::of(wb) * y)
        .collect()
}

/// Generate a play dataset plus its ground truth. Emitted values are rounded
/// through the 32-bit storage format so the in-memory dataset is identical to
/// a saved-and-reloaded one.
pub fn generate_play<T: Real>(
    world: &WorldSpec<T>,
    params: &PlayParams,
) -> Result<(PlayDataset<T>, GroundTruth)> {
    if params.num_trajectories == 0
        || params.dwell == 0
        || params.skills_per_trajectory_min == 0
        || params.skills_per_trajectory_min > params.skills_per_trajectory_max
    {
        return Err(Error::InvalidParameter {
            name: "play",
            reason: "trajectory count, dwell, and skill range must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // outgoing skills per tuple, in skill order
    let mut outgoing: BTreeMap<&SymbolicState, Vec<&SymbolicState>> = BTreeMap::new();
    for (before, after) in &world.skills {
        outgoing.entry(before).or_default().push(after);
    }

    let k = world.num_objects;
    let d = world.dim;
    let mut trajectories = Vec::with_capacity(params.num_trajectories);
    let mut truths = Vec::with_capacity(params.num_trajectories);
    for idx in 0..params.num_trajectories {
        let id = format!("traj-{idx:03}");
        let target_skills =
            rng.gen_range(params.skills_per_trajectory_min..=params.skills_per_trajectory_max);
        let mut script = Vec::new();
        let mut current = world.initial.clone();
        for _ in 0..target_skills {
            let Some(options) = outgoing.get(&current) else {
                break;
            };
            let next = options[rng.gen_range(0..options.len())].clone();
            script.push((current.clone(), next.clone()));
            current = next;
        }

        let mut flat: Vec<T> = Vec::new();
        let mut frame_tuples: Vec<SymbolicState> = Vec::new();
        let mut stable_segments: Vec<(usize, usize)> = Vec::new();
        let sigma = params.noise_sigma;
        let jitter = params.motion_jitter;

        let emit_dwell = |flat: &mut Vec<T>,
                          tuples: &mut Vec<SymbolicState>,
                          segments: &mut Vec<(usize, usize)>,
                          tuple: &SymbolicState,
                          rng: &mut ChaCha8Rng| {
            let start = tuples.len();
            for _ in 0..params.dwell {
                for (obj, &state) in tuple.0.iter().enumerate() {
                    let proto = world.prototype(obj, state);
                    for &p in proto {
                        let noise: f64 = rng.sample(StandardNormal);
                        flat.push((p + T::of(sigma * noise)).through_f32());
                    }
                }
                tuples.push(tuple.clone());
            }
            segments.push((start, tuples.len() - 1));
        };

        let mut tuple = world.initial.clone();
        emit_dwell(
            &mut flat,
            &mut frame_tuples,
            &mut stable_segments,
            &tuple,
            &mut rng,
        );
        for (before, after) in &script {
            debug_assert_eq!(*before, tuple);
            let moving = (0..k)
                .find(|&o| before.0[o] != after.0[o])
                .expect("skills change exactly one object");
            // the moving object's feature routes through random detour
            // waypoints between the two prototypes
            let mut waypoints: Vec<Vec<T>> =
                vec![world.prototype(moving, before.0[moving]).to_vec()];
            for _ in 0..params.transit_waypoints.min(params.transit) {
                waypoints.push(unit_gaussian(&mut rng, d));
            }
            waypoints.push(world.prototype(moving, after.0[moving]).to_vec());
            let segments = waypoints.len() - 1;
            for i in 1..=params.transit {
                let u = i as f64 / (params.transit + 1) as f64;
                for obj in 0..k {
                    if obj == moving {
                        let scaled = u * segments as f64;
                        let seg = (scaled as usize).min(segments - 1);
                        let local = scaled - seg as f64;
                        let path = slerp(&waypoints[seg], &waypoints[seg + 1], local);
                        for p in path {
                            let noise: f64 = rng.sample(StandardNormal);
                            let wobble: f64 = rng.sample(StandardNormal);
                            flat.push(
                                (p + T::of(jitter * wobble) + T::of(sigma * noise)).through_f32(),
                            );
                        }
                    } else {
                        let proto = world.prototype(obj, before.0[obj]);
                        for &p in proto {
                            let noise: f64 = rng.sample(StandardNormal);
                            flat.push((p + T::of(sigma * noise)).through_f32());
                        }
                    }
                }
                frame_tuples.push(if u < 0.5 {
                    before.clone()
                } else {
                    after.clone()
                });
            }
            tuple = after.clone();
            emit_dwell(
                &mut flat,
                &mut frame_tuples,
                &mut stable_segments,
                &tuple,
                &mut rng,
            );
        }

        let num_frames = frame_tuples.len();
        trajectories.push(PlayTrajectory::new(id.clone(), num_frames, k, d, flat)?);
        truths.push(TrajectoryTruth {
            id,
            stable_frames: stable_segments.iter().map(|(s, e)| (s + e) / 2).collect(),
            stable_segments,
            frame_tuples,
            script,
        });
    }

    let names = (0..k).map(|o| format!("object-{o}")).collect();
    let dataset = PlayDataset::new(trajectories, names)?;
    let truth = GroundTruth {
        skills: world.skills.clone(),
        initial: world.initial.clone(),
        trajectories: truths,
    };
    Ok((dataset, truth))
}

/// One symbolic step: move to `requested` iff a ground-truth skill connects
/// the tuples (staying put is always allowed).
pub fn executor_step(
    truth: &GroundTruth,
    current: &SymbolicState,
    requested: &SymbolicState,
) -> SymbolicState {
    if requested == current || truth.has_skill(current, requested) {
        requested.clone()
    } else {
        current.clone()
    }
}

/// Ground-truth-driven stand-in for a low-level controller: submitting a
/// subgoal advances one symbolic step when a skill connects the tuples,
/// modulo a configurable failure probability. Observations are the current
/// tuple's prototypes plus noise.
pub struct SyntheticExecutor<'a, T> {
    world: &'a WorldSpec<T>,
    truth: &'a GroundTruth,
    current: SymbolicState,
    fail_probability: f64,
    obs_noise: f64,
    rng: ChaCha8Rng,
}

impl<'a, T: Real> SyntheticExecutor<'a, T> {
    pub fn new(
        world: &'a WorldSpec<T>,
        truth: &'a GroundTruth,
        start: SymbolicState,
        fail_probability: f64,
        obs_noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            world,
            truth,
            current: start,
            fail_probability,
            obs_noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn current(&self) -> &SymbolicState {
        &self.current
    }
}

impl<T: Real> crate::planner::World<T> for SyntheticExecutor<'_, T> {
    fn observe(&mut self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.world.num_objects * self.world.dim);
        for (obj, &state) in self.current.0.iter().enumerate() {
            for &p in self.world.prototype(obj, state) {
                let noise: f64 = self.rng.sample(StandardNormal);
                out.push((p + T::of(self.obs_noise * noise)).through_f32());
            }
        }
        out
    }

    fn advance(&mut self, subgoal: &FrameRef) -> Result<bool> {
        let requested = self.truth.frame_tuple(subgoal)?.clone();
        if requested == self.current {
            return Ok(true);
        }
        if !self.truth.has_skill(&self.current, &requested) {
            return Ok(false);
        }
        if self.rng.gen::<f64>() < self.fail_probability {
            return Ok(false);
        }
        self.current = requested;
        Ok(true)
    }
}

/// Verdict of [`evaluate_plan`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanVerdict {
    pub meaningful: bool,
    /// Index of the first consecutive pair not connected by a skill.
    pub violating_pair: Option<usize>,
}

/// A plan is meaningful iff every consecutive pair of subgoal frames maps to
/// tuples that are equal or connected by a ground-truth skill. When the
/// caller knows the tuple the plan starts from, it participates as the
/// zeroth element.
pub fn evaluate_plan(
    truth: &GroundTruth,
    start: Option<&SymbolicState>,
    subgoals: &[FrameRef],
) -> Result<PlanVerdict> {
    let mut tuples: Vec<SymbolicState> = Vec::with_capacity(subgoals.len() + 1);
    if let Some(s) = start {
        tuples.push(s.clone());
    }
    for frame in subgoals {
        tuples.push(truth.frame_tuple(frame)?.clone());
    }
    for (i, pair) in tuples.windows(2).enumerate() {
        if pair[0] != pair[1] && !truth.has_skill(&pair[0], &pair[1]) {
            return Ok(PlanVerdict {
                meaningful: false,
                violating_pair: Some(i),
            });
        }
    }
    Ok(PlanVerdict {
        meaningful: true,
        violating_pair: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::temporal_similarity;

    #[test]
    fn world_is_connected_and_reproducible() {
        let params = WorldParams {
            num_objects: 3,
            states_per_object: vec![2, 3, 2],
            num_skills: 6,
            ..WorldParams::default()
        };
        let w: WorldSpec<f64> = generate_world(&params).unwrap();
        assert_eq!(w.skills.len(), 6);
        // every skill endpoint is reachable from the initial tuple
        let reachable = w.reachable();
        for (b, a) in &w.skills {
            assert!(reachable.contains(b), "unreached before {b}");
            assert!(reachable.contains(a), "unreached after {a}");
        }
        let again: WorldSpec<f64> = generate_world(&params).unwrap();
        assert_eq!(w.skills, again.skills);
        assert_eq!(w.prototypes, again.prototypes);
    }

    #[test]
    fn all_single_state_objects_admit_no_skills() {
        let params = WorldParams {
            num_objects: 2,
            states_per_object: vec![1, 1],
            num_skills: 1,
            ..WorldParams::default()
        };
        assert!(matches!(
            generate_world::<f64>(&params).unwrap_err(),
            Error::NoSkillsPossible
        ));
    }

    #[test]
    fn prototypes_satisfy_separation() {
        let params = WorldParams {
            min_separation_deg: 60.0,
            ..WorldParams::default()
        };
        let w: WorldSpec<f64> = generate_world(&params).unwrap();
        let max_cos = 60f64.to_radians().cos() + 1e-9;
        for protos in &w.prototypes {
            for i in 0..protos.len() {
                let norm: f64 = protos[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-9);
                for j in i + 1..protos.len() {
                    let cos: f64 = protos[i].iter().zip(&protos[j]).map(|(a, b)| a * b).sum();
                    assert!(cos <= max_cos);
                }
            }
        }
    }

    fn small_world(seed: u64) -> WorldSpec<f64> {
        generate_world(&WorldParams {
            num_objects: 2,
            states_per_object: vec![2, 2],
            num_skills: 4,
            dim: 6,
            min_separation_deg: 60.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn noiseless_single_transit_play_has_unit_similarity_with_dips() {
        let world = small_world(1);
        let params = PlayParams {
            num_trajectories: 1,
            skills_per_trajectory_min: 3,
            skills_per_trajectory_max: 3,
            dwell: 10,
            transit: 1,
            noise_sigma: 0.0,
            motion_jitter: 0.0,
            transit_waypoints: 6,
            seed: 5,
        };
        let (ds, truth) = generate_play(&world, &params).unwrap();
        let traj = &ds.trajectories()[0];
        let sim = temporal_similarity(traj).unwrap();
        let k = world.num_objects as f64;
        // transit frames are at segment boundaries; similarity dips only there
        let transit_frames: Vec<usize> = truth.trajectories[0]
            .stable_segments
            .windows(2)
            .map(|w| w[0].1 + 1)
            .collect();
        for (t, &v) in sim.values.iter().enumerate() {
            let near_transit = transit_frames.iter().any(|&f| t + 1 == f || t == f);
            if near_transit {
                assert!(v < k - 1e-6, "expected dip at {t}, got {v}");
            } else {
                assert!((v - k).abs() < 1e-6, "expected flat {k} at {t}, got {v}");
            }
        }
    }

    #[test]
    fn play_generation_is_seed_deterministic() {
        let world = small_world(2);
        let params = PlayParams {
            num_trajectories: 3,
            skills_per_trajectory_min: 2,
            skills_per_trajectory_max: 5,
            dwell: 8,
            transit: 2,
            noise_sigma: 0.05,
            motion_jitter: 0.2,
            transit_waypoints: 6,
            seed: 9,
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_play(&world, &params)
            .unwrap()
            .0
            .save(dir_a.path())
            .unwrap();
        generate_play(&world, &params)
            .unwrap()
            .0
            .save(dir_b.path())
            .unwrap();
        for entry in std::fs::read_dir(dir_a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name:?} differs");
        }
    }

    #[test]
    fn ground_truth_is_consistent_with_script() {
        let world = small_world(3);
        let params = PlayParams {
            num_trajectories: 2,
            skills_per_trajectory_min: 4,
            skills_per_trajectory_max: 4,
            dwell: 6,
            transit: 2,
            noise_sigma: 0.01,
            motion_jitter: 0.1,
            transit_waypoints: 6,
            seed: 4,
        };
        let (ds, truth) = generate_play(&world, &params).unwrap();
        for (traj, tt) in ds.trajectories().iter().zip(&truth.trajectories) {
            assert_eq!(tt.frame_tuples.len(), traj.num_frames());
            assert_eq!(tt.stable_segments.len(), tt.script.len() + 1);
            // dwell tuples follow the script
            let mut expected = vec![truth.initial.clone()];
            expected.extend(tt.script.iter().map(|(_, a)| a.clone()));
            for (seg, tuple) in tt.stable_segments.iter().zip(&expected) {
                for f in seg.0..=seg.1 {
                    assert_eq!(&tt.frame_tuples[f], tuple);
                }
            }
            // every scripted step is a world skill
            for (b, a) in &tt.script {
                assert!(world.has_skill(b, a));
            }
        }
    }

    #[test]
    fn executor_moves_only_along_skills() {
        let world = small_world(6);
        let (_, truth) = generate_play(
            &world,
            &PlayParams {
                num_trajectories: 1,
                skills_per_trajectory_min: 2,
                skills_per_trajectory_max: 2,
                dwell: 4,
                transit: 1,
                noise_sigma: 0.0,
                motion_jitter: 0.0,
                transit_waypoints: 6,
                seed: 1,
            },
        )
        .unwrap();
        let (before, after) = truth.skills[0].clone();
        assert_eq!(executor_step(&truth, &before, &after), after);
        // a jump with no connecting skill keeps the current tuple
        let far = SymbolicState(vec![9, 9]);
        assert_eq!(executor_step(&truth, &before, &far), before);
        // no-op request is accepted
        assert_eq!(executor_step(&truth, &before, &before), before);
    }

    #[test]
    fn evaluate_plan_follows_generated_script() {
        let world = small_world(8);
        let params = PlayParams {
            num_trajectories: 1,
            skills_per_trajectory_min: 3,
            skills_per_trajectory_max: 3,
            dwell: 6,
            transit: 1,
            noise_sigma: 0.0,
            motion_jitter: 0.0,
            transit_waypoints: 6,
            seed: 2,
        };
        let (_, truth) = generate_play(&world, &params).unwrap();
        let tt = &truth.trajectories[0];
        // subgoals at the stable frames follow the script: meaningful
        let subgoals: Vec<FrameRef> = tt
            .stable_frames
            .iter()
            .map(|&f| FrameRef::new(tt.id.clone(), f))
            .collect();
        let verdict = evaluate_plan(&truth, None, &subgoals).unwrap();
        assert!(verdict.meaningful);
    }

    #[test]
    fn evaluate_plan_reports_first_unconnected_pair() {
        let s = |v: &[usize]| SymbolicState(v.to_vec());
        let truth = GroundTruth {
            skills: vec![(s(&[0, 0]), s(&[1, 0])), (s(&[1, 0]), s(&[1, 1]))],
            initial: s(&[0, 0]),
            trajectories: vec![TrajectoryTruth {
                id: "t".into(),
                stable_segments: vec![(0, 1), (2, 3), (4, 5)],
                stable_frames: vec![0, 2, 4],
                frame_tuples: vec![
                    s(&[0, 0]),
                    s(&[0, 0]),
                    s(&[1, 0]),
                    s(&[1, 0]),
                    s(&[1, 1]),
                    s(&[1, 1]),
                ],
                script: vec![(s(&[0, 0]), s(&[1, 0])), (s(&[1, 0]), s(&[1, 1]))],
            }],
        };
        let f = |i: usize| FrameRef::new("t", i);
        assert!(
            evaluate_plan(&truth, None, &[f(0), f(2), f(4)])
                .unwrap()
                .meaningful
        );
        // skipping the middle subgoal jumps (0,0) -> (1,1), not a skill
        let verdict = evaluate_plan(&truth, None, &[f(0), f(4)]).unwrap();
        assert!(!verdict.meaningful);
        assert_eq!(verdict.violating_pair, Some(0));
        // the start tuple participates when provided
        let verdict = evaluate_plan(&truth, Some(&s(&[0, 0])), &[f(4)]).unwrap();
        assert_eq!(verdict.violating_pair, Some(0));
        // repeated tuples are allowed
        assert!(
            evaluate_plan(&truth, None, &[f(0), f(1), f(2)])
                .unwrap()
                .meaningful
        );

        let missing = FrameRef::new("nope", 0);
        assert!(matches!(
            evaluate_plan(&truth, None, &[missing]).unwrap_err(),
            Error::UnresolvableFrameRef { .. }
        ));
    }
}
