use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symplan_cli::bench::{self, GoalSpec};
use symplan_cli::config::{PipelineConfig, SynthConfig};
use symplan_cli::pipeline::{self, StageError};

#[derive(Parser)]
#[command(
    name = "symplan",
    about = "Symbolic skill discovery and visual planning over feature-sequence datasets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic play dataset with ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Detect stable states and write per-trajectory key frames.
    Segment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cluster key-frame features into per-object symbol vocabularies.
    Symbols {
        #[arg(long)]
        config: PathBuf,
        /// Also print key frame -> symbolic state assignments.
        #[arg(long)]
        assignments: bool,
    },
    /// Build the symbolic transition graph.
    Graph {
        #[arg(long)]
        config: PathBuf,
        /// Also print the DOT rendering.
        #[arg(long)]
        dot: bool,
    },
    /// Train the two-tower reachability estimator.
    TrainReachability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the next-symbolic-state predictor.
    TrainPredictor {
        #[arg(long)]
        config: PathBuf,
    },
    /// Precompute tower embeddings of every labelled key frame.
    Index {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every stage in order and write report.json.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Plan from an observation frame to a goal.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Observation frame, as trajectory:frame.
        #[arg(long)]
        obs: String,
        /// Goal: a symbol tuple "1,0,2" or a frame reference "traj-000:57".
        #[arg(long)]
        goal: String,
        /// Write the plan JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop replanning against the synthetic executor.
    Loop {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        goal: String,
        #[arg(long, default_value_t = 50)]
        max_steps: usize,
        /// Probability that a submitted step fails.
        #[arg(long, default_value_t = 0.0)]
        fail_prob: f64,
        /// Observation noise of the executor.
        #[arg(long, default_value_t = 0.05)]
        obs_noise: f64,
        /// Start tuple or frame reference; defaults to the world's initial tuple.
        #[arg(long)]
        start: Option<String>,
    },
    /// Plan repeatedly over a goals file and report quality and latency.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        goals: PathBuf,
        /// Write the metrics JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the latest pipeline report.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(command: Command) -> Result<(), StageError> {
    match command {
        Command::Synth { config } => {
            let config = SynthConfig::load(&config)?;
            let out = pipeline::run_synth(&config)?;
            println!("dataset written to {}", out.display());
        }
        Command::Segment { config } => {
            let config = PipelineConfig::load(&config)?;
            let keyframes = pipeline::stage_segment(&config)?;
            let total: usize = keyframes.iter().map(|k| k.indices.len()).sum();
            println!(
                "{} trajectories, {total} key frames -> {}",
                keyframes.len(),
                config.artifact_dir.join(pipeline::KEYFRAMES_FILE).display()
            );
        }
        Command::Symbols {
            config,
            assignments,
        } => {
            let config = PipelineConfig::load(&config)?;
            let models = pipeline::stage_symbols(&config)?;
            for m in &models {
                println!(
                    "object {}: {} states (silhouette {:.3})",
                    m.object_index, m.num_clusters, m.selection_score
                );
            }
            if assignments {
                let text =
                    std::fs::read_to_string(config.artifact_dir.join(pipeline::ASSIGNMENTS_FILE))
                        .map_err(|e| StageError {
                        stage: pipeline::Stage::Symbols,
                        source: e.into(),
                    })?;
                println!("{text}");
            }
        }
        Command::Graph { config, dot } => {
            let config = PipelineConfig::load(&config)?;
            let graph = pipeline::stage_graph(&config)?;
            println!(
                "{} nodes, {} edges -> {}",
                graph.num_nodes(),
                graph.num_edges(),
                config.artifact_dir.join(pipeline::GRAPH_FILE).display()
            );
            if dot {
                println!("{}", symplan_core::graph::export_dot(&graph));
            }
        }
        Command::TrainReachability { config } => {
            let config = PipelineConfig::load(&config)?;
            let artifact = pipeline::stage_reachability(&config)?;
            println!(
                "trained {} epochs, delta {:.6} -> {}",
                artifact.training_log.len(),
                artifact.delta,
                config
                    .artifact_dir
                    .join(pipeline::REACHABILITY_FILE)
                    .display()
            );
        }
        Command::TrainPredictor { config } => {
            let config = PipelineConfig::load(&config)?;
            let predictor = pipeline::stage_predictor(&config)?;
            println!(
                "{} classes over {}-dim features -> {}",
                predictor.num_classes(),
                predictor.input_dim,
                config.artifact_dir.join(pipeline::PREDICTOR_FILE).display()
            );
        }
        Command::Index { config } => {
            let config = PipelineConfig::load(&config)?;
            let index = pipeline::stage_index(&config)?;
            println!(
                "{} states, {} frames -> {}",
                index.entries.len(),
                index.total_frames(),
                config
                    .artifact_dir
                    .join(pipeline::GOAL_INDEX_FILE)
                    .display()
            );
        }
        Command::Pipeline { config } => {
            let config = PipelineConfig::load(&config)?;
            let report = pipeline::run_pipeline(&config)?;
            println!(
                "pipeline complete: {} nodes, {} edges, delta {:.6} -> {}",
                report.graph.nodes,
                report.graph.edges,
                report.reachability.delta,
                config.artifact_dir.join(pipeline::REPORT_FILE).display()
            );
        }
        Command::Plan {
            config,
            obs,
            goal,
            out,
        } => {
            let config = PipelineConfig::load(&config)?;
            let goal = GoalSpec::parse(&goal).map_err(|e| StageError {
                stage: pipeline::Stage::Plan,
                source: e,
            })?;
            let outcome = bench::run_plan(&config, &obs, &goal)?;
            let json = serde_json::to_string_pretty(&bench::plan_to_json(&outcome))
                .expect("plan serializes");
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| StageError {
                    stage: pipeline::Stage::Plan,
                    source: e.into(),
                })?,
                None => println!("{json}"),
            }
        }
        Command::Loop {
            config,
            goal,
            max_steps,
            fail_prob,
            obs_noise,
            start,
        } => {
            let config = PipelineConfig::load(&config)?;
            let goal = GoalSpec::parse(&goal).map_err(|e| StageError {
                stage: pipeline::Stage::Loop,
                source: e,
            })?;
            let episode = bench::run_loop(
                &config,
                &goal,
                max_steps,
                fail_prob,
                obs_noise,
                start.as_deref(),
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&episode).expect("episode serializes")
            );
        }
        Command::Benchmark { config, goals, out } => {
            let config = PipelineConfig::load(&config)?;
            let report = bench::run_benchmark(&config, &goals)?;
            print!("{}", bench::format_bench_table(&report));
            let json = serde_json::to_string_pretty(&report).expect("benchmark report serializes");
            if let Some(path) = out {
                std::fs::write(&path, json + "\n").map_err(|e| StageError {
                    stage: pipeline::Stage::Benchmark,
                    source: e.into(),
                })?;
            }
        }
        Command::Report { config } => {
            let config = PipelineConfig::load(&config)?;
            let path = config.artifact_dir.join(pipeline::REPORT_FILE);
            let text = std::fs::read_to_string(&path).map_err(|e| StageError {
                stage: pipeline::Stage::Report,
                source: symplan_core::Error::InvalidParameter {
                    name: "report",
                    reason: format!("{}: {e}; run the pipeline first", path.display()),
                },
            })?;
            let report: pipeline::PipelineReport =
                serde_json::from_str(&text).map_err(|e| StageError {
                    stage: pipeline::Stage::Report,
                    source: e.into(),
                })?;
            println!(
                "dataset: {} trajectories, {} objects, dim {}, {} frames",
                report.dataset.trajectories,
                report.dataset.objects,
                report.dataset.dim,
                report.dataset.total_frames
            );
            println!("key frames: {}", report.segmentation.total_keyframes);
            for s in &report.symbols {
                println!(
                    "object {} ({}): {} states, silhouette {:.3}, exemplars {:?}",
                    s.object_index, s.object_name, s.num_clusters, s.silhouette, s.exemplar_counts
                );
            }
            println!(
                "graph: {} nodes, {} edges from {} transitions (max symbol change {})",
                report.graph.nodes,
                report.graph.edges,
                report.graph.transitions,
                report.graph.max_symbol_change
            );
            println!(
                "reachability: {} epochs, loss {:?} -> {:?}, delta {:.6}, gamma {}",
                report.reachability.epochs,
                report.reachability.initial_loss,
                report.reachability.final_loss,
                report.reachability.delta,
                report.reachability.gamma
            );
            println!(
                "predictor: {} examples, {} classes, cross-entropy {:.4}, train accuracy {:.3}",
                report.predictor.examples,
                report.predictor.classes,
                report.predictor.final_cross_entropy,
                report.predictor.train_accuracy
            );
            println!(
                "goal index: {} states, {} frames",
                report.goal_index.states, report.goal_index.frames
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
