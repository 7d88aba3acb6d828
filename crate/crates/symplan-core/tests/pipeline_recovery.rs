//! End-to-end recovery on synthetic worlds: segmentation finds the dwell
//! midpoints, clustering recovers the per-object state counts, and the
//! rebuilt transition graph matches the visited ground-truth skill graph up
//! to per-object label permutation.

use std::collections::{BTreeMap, BTreeSet};

use symplan_core::features::PlayDataset;
use symplan_core::graph::{build_graph, TransitionGraph};
use symplan_core::segmentation::{
    nms_peaks, smooth, temporal_similarity, KeyFrameSet, NmsParams, SmoothingParams,
};
use symplan_core::symbols::{
    extract_transitions, fit_object_models, label_keyframes, ObjectSymbolModel, SymbolFitParams,
    SymbolicState,
};
use symplan_core::synth::{
    generate_play, generate_world, GroundTruth, PlayParams, WorldParams, WorldSpec,
};

fn world_params(seed: u64) -> WorldParams {
    WorldParams {
        num_objects: 3,
        states_per_object: vec![3, 3, 2],
        num_skills: 8,
        dim: 8,
        min_separation_deg: 60.0,
        seed,
    }
}

fn play_params(seed: u64, noise: f64) -> PlayParams {
    PlayParams {
        num_trajectories: 10,
        skills_per_trajectory_min: 5,
        skills_per_trajectory_max: 10,
        dwell: 20,
        transit: 8,
        noise_sigma: noise,
        motion_jitter: 0.1,
        transit_waypoints: 6,
        seed,
    }
}

fn segment_dataset(ds: &PlayDataset<f64>) -> Vec<KeyFrameSet> {
    let k = ds.num_objects() as f64;
    ds.trajectories()
        .iter()
        .map(|traj| {
            let sim = temporal_similarity(traj).unwrap();
            let smoothed = smooth(&sim, SmoothingParams::default()).unwrap();
            nms_peaks(
                &smoothed,
                NmsParams {
                    window: 10,
                    min_prominence: 0.05 * k,
                },
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn segmentation_recovers_stable_frames_exactly_at_zero_noise() {
    let world: WorldSpec<f64> = generate_world(&world_params(1)).unwrap();
    let (ds, truth) = generate_play(&world, &play_params(2, 0.0)).unwrap();
    let keyframes = segment_dataset(&ds);
    let w = 10usize;
    for (kf, tt) in keyframes.iter().zip(&truth.trajectories) {
        // every ground-truth stable frame has a detection within w frames
        for &gt in &tt.stable_frames {
            assert!(
                kf.indices.iter().any(|&d| d.abs_diff(gt) <= w),
                "{}: stable frame {gt} missed, detected {:?}",
                tt.id,
                kf.indices
            );
        }
        // and every detection sits within w frames of a true stable frame
        for &d in &kf.indices {
            assert!(
                tt.stable_frames.iter().any(|&gt| d.abs_diff(gt) <= w),
                "{}: spurious key frame {d}, truth {:?}",
                tt.id,
                tt.stable_frames
            );
        }
        // one detection per dwell segment
        assert_eq!(
            kf.indices.len(),
            tt.stable_frames.len(),
            "{}: {:?} vs {:?}",
            tt.id,
            kf.indices,
            tt.stable_frames
        );
    }
}

#[test]
fn segmentation_recall_stays_high_under_noise() {
    let mut total = 0usize;
    let mut hit = 0usize;
    for seed in 0..3u64 {
        let world: WorldSpec<f64> = generate_world(&world_params(10 + seed)).unwrap();
        let (ds, truth) = generate_play(&world, &play_params(20 + seed, 0.05)).unwrap();
        let keyframes = segment_dataset(&ds);
        for (kf, tt) in keyframes.iter().zip(&truth.trajectories) {
            for &gt in &tt.stable_frames {
                total += 1;
                if kf.indices.iter().any(|&d| d.abs_diff(gt) <= 10) {
                    hit += 1;
                }
            }
        }
    }
    let recall = hit as f64 / total as f64;
    assert!(recall >= 0.9, "recall {recall:.3} ({hit}/{total})");
}

/// Map each recovered per-object label to the ground-truth state it labels
/// most often; requires the mapping to be a bijection.
fn object_label_mapping(
    ds: &PlayDataset<f64>,
    truth: &GroundTruth,
    keyframes: &[KeyFrameSet],
    models: &[ObjectSymbolModel<f64>],
) -> Option<Vec<BTreeMap<usize, usize>>> {
    let labelled = label_keyframes(ds, keyframes, models).unwrap();
    let mut mappings = Vec::new();
    for (obj, model) in models.iter().enumerate() {
        let mut votes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (frame, state) in &labelled {
            let gt = truth.frame_tuple(frame).unwrap();
            *votes.entry((state.0[obj], gt.0[obj])).or_default() += 1;
        }
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for recovered in 0..model.num_clusters {
            let best = votes
                .iter()
                .filter(|((r, _), _)| *r == recovered)
                .max_by_key(|(_, &count)| count)?;
            map.insert(recovered, best.0 .1);
        }
        let distinct: BTreeSet<usize> = map.values().copied().collect();
        if distinct.len() != map.len() {
            return None; // not a bijection
        }
        mappings.push(map);
    }
    Some(mappings)
}

fn translate(state: &SymbolicState, mapping: &[BTreeMap<usize, usize>]) -> Option<SymbolicState> {
    let mut out = Vec::with_capacity(state.arity());
    for (obj, &label) in state.0.iter().enumerate() {
        out.push(*mapping[obj].get(&label)?);
    }
    Some(SymbolicState(out))
}

/// The ground-truth transitions actually executed, deduplicated.
fn visited_skills(truth: &GroundTruth) -> BTreeSet<(SymbolicState, SymbolicState)> {
    truth
        .trajectories
        .iter()
        .flat_map(|t| t.script.iter().cloned())
        .collect()
}

fn recovered_graph(
    ds: &PlayDataset<f64>,
    keyframes: &[KeyFrameSet],
) -> (TransitionGraph, Vec<ObjectSymbolModel<f64>>) {
    let models = fit_object_models(ds, keyframes, SymbolFitParams::default()).unwrap();
    let transitions = extract_transitions(ds, keyframes, &models).unwrap();
    let labelled = label_keyframes(ds, keyframes, &models).unwrap();
    let mut state_frames: BTreeMap<SymbolicState, Vec<_>> = BTreeMap::new();
    for (frame, state) in labelled {
        state_frames.entry(state).or_default().push(frame);
    }
    let graph = build_graph(&transitions, &state_frames).unwrap();
    (graph, models)
}

#[test]
fn cluster_counts_and_graph_match_ground_truth() {
    let mut graph_ok = 0usize;
    let worlds = 3u64;
    for seed in 0..worlds {
        let world: WorldSpec<f64> = generate_world(&world_params(30 + seed)).unwrap();
        let (ds, truth) = generate_play(&world, &play_params(40 + seed, 0.05)).unwrap();
        let keyframes = segment_dataset(&ds);
        let (graph, models) = recovered_graph(&ds, &keyframes);

        // per-object cluster counts: compare against the states the data
        // actually visited (a random walk may never reach some state)
        for (obj, model) in models.iter().enumerate() {
            let mut seen: BTreeSet<usize> = BTreeSet::new();
            for tt in &truth.trajectories {
                for &f in &tt.stable_frames {
                    seen.insert(tt.frame_tuples[f].0[obj]);
                }
            }
            assert_eq!(
                model.num_clusters,
                seen.len(),
                "world {seed} object {obj}: {} clusters for {} visited states",
                model.num_clusters,
                seen.len()
            );
        }

        // graph isomorphism to the visited skill graph, via label mapping
        let Some(mapping) = object_label_mapping(&ds, &truth, &keyframes, &models) else {
            continue;
        };
        let mut recovered: BTreeSet<(SymbolicState, SymbolicState)> = BTreeSet::new();
        let mut translated_all = true;
        for (before, after, _) in graph.edges() {
            match (translate(before, &mapping), translate(after, &mapping)) {
                (Some(b), Some(a)) => {
                    recovered.insert((b, a));
                }
                _ => translated_all = false,
            }
        }
        if translated_all && recovered == visited_skills(&truth) {
            graph_ok += 1;
        }
    }
    assert!(
        graph_ok >= worlds as usize - 1,
        "graph recovered in {graph_ok}/{worlds} worlds"
    );
}
