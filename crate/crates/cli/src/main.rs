//! dsrecon: dual-stream clinical memory reconciliation over file-based
//! corpora.
//!
//! The subcommands mirror the pipeline stages: `segment` raw message
//! logs, `build-hybrid` transcripts, `curate` clinical summaries,
//! `replay` extraction, `reconcile` in isolated or pipeline mode, and
//! `evaluate` the three dimensions with cascade accounting. `gen-demo`
//! writes a synthetic corpus plus the scripted fixture that makes every
//! other command reproducible offline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Mode, RunConfig};
use dsrecon_core::dataset::demo::DemoConfig;
use dsrecon_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dsrecon",
    version,
    about = "Dual-stream clinical memory reconciliation pipeline"
)]
struct Cli {
    /// Run configuration (JSON); flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Gateway mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Scripted fixture file.
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    /// Worker-pool size for patient fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Audit log path (JSONL, one entry per gateway call).
    #[arg(long, global = true)]
    audit: Option<PathBuf>,
    /// Bootstrap seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic demo corpus with its scripted fixture.
    GenDemo {
        #[arg(long)]
        out: PathBuf,
        /// Corpus preset.
        #[arg(long, default_value = "small")]
        scale: String,
        /// Patients (real-only preset).
        #[arg(long)]
        patients: Option<usize>,
        /// Real sessions (real-only preset).
        #[arg(long)]
        real_sessions: Option<usize>,
        #[arg(long)]
        gen_seed: Option<u64>,
    },
    /// Parse bundles and write curated summaries with sidecar manifests.
    Curate {
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget_min: Option<usize>,
        #[arg(long)]
        budget_max: Option<usize>,
    },
    /// Segment raw message logs into sessions.
    Segment {
        #[arg(long)]
        messages: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate scenario sessions and interleave them with the real
    /// trajectory, annotating ground truth.
    BuildHybrid {
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay transcripts through per-turn delta extraction.
    Replay {
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// One extraction call per session instead of per patient turn.
        #[arg(long)]
        session_batched: bool,
    },
    /// Reconcile memories against the clinical stream.
    Reconcile {
        /// Classify ground-truth memories directly (dimension 2).
        #[arg(long, conflicts_with = "pipeline")]
        isolated: bool,
        /// Classify the memories the replay extracted (dimension 3).
        #[arg(long)]
        pipeline: bool,
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the full three-dimension report.
    Evaluate {
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        dim2: Option<PathBuf>,
        #[arg(long)]
        dim3: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Render a stored report as text.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(fixture) = cli.fixture {
        config.fixture = Some(fixture);
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(audit) = cli.audit {
        config.audit = Some(audit);
    }
    if let Some(seed) = cli.seed {
        config.bootstrap.seed = seed;
    }

    match cli.command {
        Command::GenDemo {
            out,
            scale,
            patients,
            real_sessions,
            gen_seed,
        } => {
            let mut demo = match scale.as_str() {
                "paper" => DemoConfig::paper(),
                "small" => DemoConfig::small(11),
                "real-only" => DemoConfig::real_only(
                    patients.unwrap_or(5),
                    real_sessions.unwrap_or(50),
                    17,
                ),
                other => {
                    return Err(Error::Config(format!(
                        "unknown scale {other:?} (expected paper, small, or real-only)"
                    )))
                }
            };
            if let Some(seed) = gen_seed {
                demo.seed = seed;
            }
            commands::gen_demo(&out, &demo)
        }
        Command::Curate {
            bundles,
            out,
            budget_min,
            budget_max,
        } => {
            if let Some(min) = budget_min {
                config.token_budget.min = min;
            }
            if let Some(max) = budget_max {
                config.token_budget.max = max;
            }
            let bundles = bundles.or(config.paths.bundles.clone());
            let out = out.or(config.paths.report.clone());
            commands::curate(
                &config,
                &commands::require_path(&bundles, "bundles")?,
                &commands::require_path(&out, "out")?,
            )
        }
        Command::Segment { messages, out } => {
            let messages = messages.or(config.paths.messages.clone());
            let out = out.or(config.paths.sessions.clone());
            commands::segment(
                &commands::require_path(&messages, "messages")?,
                &commands::require_path(&out, "out (sessions)")?,
            )
        }
        Command::BuildHybrid {
            sessions,
            scenarios,
            bundles,
            out,
        } => {
            let sessions = sessions.or(config.paths.sessions.clone());
            let scenarios = scenarios.or(config.paths.scenarios.clone());
            let bundles = bundles.or(config.paths.bundles.clone());
            let out = out.or(config.paths.transcripts.clone());
            commands::build_hybrid(
                &config,
                &commands::require_path(&sessions, "sessions")?,
                &commands::require_path(&scenarios, "scenarios")?,
                &commands::require_path(&bundles, "bundles")?,
                &commands::require_path(&out, "out (transcripts)")?,
            )
        }
        Command::Replay {
            transcripts,
            out,
            session_batched,
        } => {
            if session_batched {
                config.session_batched = true;
            }
            let transcripts = transcripts.or(config.paths.transcripts.clone());
            let out = out.or(config.paths.replay.clone());
            commands::replay(
                &config,
                &commands::require_path(&transcripts, "transcripts")?,
                &commands::require_path(&out, "out (replay)")?,
            )
        }
        Command::Reconcile {
            isolated,
            pipeline,
            transcripts,
            replay,
            bundles,
            out,
        } => {
            if isolated == pipeline {
                return Err(Error::Config(
                    "reconcile requires exactly one of --isolated or --pipeline".into(),
                ));
            }
            let bundles = bundles.or(config.paths.bundles.clone());
            if isolated {
                let transcripts = transcripts.or(config.paths.transcripts.clone());
                let out = out.or(config.paths.dim2.clone());
                commands::reconcile_isolated(
                    &config,
                    &commands::require_path(&transcripts, "transcripts")?,
                    &commands::require_path(&bundles, "bundles")?,
                    &commands::require_path(&out, "out (dim2)")?,
                )
            } else {
                let replay = replay.or(config.paths.replay.clone());
                let out = out.or(config.paths.dim3.clone());
                commands::reconcile_pipeline(
                    &config,
                    &commands::require_path(&replay, "replay")?,
                    &commands::require_path(&bundles, "bundles")?,
                    &commands::require_path(&out, "out (dim3)")?,
                )
            }
        }
        Command::Evaluate {
            transcripts,
            scenarios,
            replay,
            dim2,
            dim3,
            out,
            iterations,
        } => {
            if let Some(iterations) = iterations {
                config.bootstrap.iterations = iterations;
            }
            let transcripts = transcripts.or(config.paths.transcripts.clone());
            let scenarios = scenarios.or(config.paths.scenarios.clone());
            let replay = replay.or(config.paths.replay.clone());
            let dim2 = dim2.or(config.paths.dim2.clone());
            let dim3 = dim3.or(config.paths.dim3.clone());
            let out = out.or(config.paths.report.clone());
            commands::evaluate(
                &config,
                &commands::require_path(&transcripts, "transcripts")?,
                &commands::require_path(&scenarios, "scenarios")?,
                &commands::require_path(&replay, "replay")?,
                &commands::require_path(&dim2, "dim2")?,
                &commands::require_path(&dim3, "dim3")?,
                &commands::require_path(&out, "out (report)")?,
            )
        }
        Command::Report { report, out } => commands::report(&report, out.as_deref()),
    }
}
