//! The whole pipeline is generic over the scalar type; run a compact pass in
//! the `f32` lane to keep both instantiations honest.

use std::collections::BTreeMap;

use symplan_core::features::{cosine_similarity, FrameRef};
use symplan_core::graph::build_graph;
use symplan_core::planner::{build_goal_index, plan, PlanConfig, PlannerBundle};
use symplan_core::predictor::{build_training_set, train_predictor, PredictorConfig};
use symplan_core::reachability::{train_reachability, ReachabilityConfig};
use symplan_core::segmentation::{
    nms_peaks, smooth, temporal_similarity, KeyFrameSet, NmsParams, SmoothingParams,
};
use symplan_core::symbols::{
    extract_transitions, fit_object_models, label_keyframes, SymbolFitParams, SymbolicState,
};
use symplan_core::synth::{generate_play, generate_world, PlayParams, WorldParams};
use symplan_core::{PlayDataset32, WorldSpec32};

#[test]
fn f32_lane_plans_end_to_end() {
    let world: WorldSpec32 = generate_world(&WorldParams {
        num_objects: 2,
        states_per_object: vec![2, 2],
        num_skills: 4,
        dim: 6,
        min_separation_deg: 60.0,
        seed: 9,
    })
    .unwrap();
    let (dataset, _truth) = generate_play(
        &world,
        &PlayParams {
            num_trajectories: 6,
            skills_per_trajectory_min: 3,
            skills_per_trajectory_max: 6,
            dwell: 16,
            transit: 6,
            noise_sigma: 0.05,
            motion_jitter: 0.1,
            transit_waypoints: 5,
            seed: 10,
        },
    )
    .unwrap();

    // cosine in f32 behaves
    let a = dataset.trajectories()[0].frame_feature(0).unwrap();
    let c: f32 = cosine_similarity(a, a).unwrap();
    assert!((c - 1.0).abs() < 1e-6);

    let keyframes: Vec<KeyFrameSet> = dataset
        .trajectories()
        .iter()
        .map(|traj| {
            let sim = temporal_similarity(traj).unwrap();
            let smoothed = smooth(&sim, SmoothingParams::default()).unwrap();
            nms_peaks(
                &smoothed,
                NmsParams {
                    window: 8,
                    min_prominence: 0.05 * dataset.num_objects() as f32,
                },
            )
            .unwrap()
        })
        .collect();
    let models = fit_object_models(&dataset, &keyframes, SymbolFitParams::default()).unwrap();
    let transitions = extract_transitions(&dataset, &keyframes, &models).unwrap();
    assert!(!transitions.is_empty());
    let labelled = label_keyframes(&dataset, &keyframes, &models).unwrap();
    let mut state_frames: BTreeMap<SymbolicState, Vec<FrameRef>> = BTreeMap::new();
    for (frame, state) in &labelled {
        state_frames
            .entry(state.clone())
            .or_default()
            .push(frame.clone());
    }
    let graph = build_graph(&transitions, &state_frames).unwrap();

    let reachability = train_reachability(
        &dataset,
        &keyframes,
        &ReachabilityConfig {
            epochs: 150,
            batch_size: 32,
            hidden_dim: 16,
            embed_dim: 8,
            seed: 3,
            ..ReachabilityConfig::default()
        },
    )
    .unwrap();
    let training = build_training_set(&dataset, &keyframes, &transitions, graph.nodes()).unwrap();
    let predictor = train_predictor(
        &training,
        &PredictorConfig {
            epochs: 100,
            ..Default::default()
        },
    )
    .unwrap();
    let goal_index = build_goal_index(&dataset, &labelled, &reachability.model).unwrap();
    let bundle = PlannerBundle {
        graph,
        symbol_models: models,
        predictor,
        reachability,
        goal_index,
    };

    // plan from some node toward every other reachable node
    let nodes = bundle.graph.nodes().to_vec();
    let mut planned = 0;
    for start in &nodes {
        let obs_frame = &bundle.graph.state_frames(start).unwrap()[0];
        let obs = dataset.resolve(obs_frame).unwrap();
        for goal in &nodes {
            if let Ok(outcome) = plan(&bundle, obs, goal, &PlanConfig::default()) {
                planned += 1;
                assert_eq!(
                    outcome.plan.subgoals.len(),
                    outcome.plan.symbolic_path.states.len() - 1
                );
                for w in outcome.plan.symbolic_path.states.windows(2) {
                    assert!(bundle.graph.edge(&w[0], &w[1]).is_some());
                }
            }
        }
    }
    assert!(planned >= nodes.len(), "too few successful f32 plans");

    // the f32 dataset round-trips through disk like the f64 one
    let dir = tempfile::tempdir().unwrap();
    dataset.save(dir.path()).unwrap();
    let reloaded = PlayDataset32::load(dir.path()).unwrap();
    assert_eq!(reloaded.trajectories().len(), dataset.trajectories().len());
    for (a, b) in reloaded.trajectories().iter().zip(dataset.trajectories()) {
        assert_eq!(a.frame_feature(0).unwrap(), b.frame_feature(0).unwrap());
    }
}
