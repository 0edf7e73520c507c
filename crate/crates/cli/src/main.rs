//! `demoplan`: one binary for the whole pipeline.
//!
//! Data goes to stdout, logs to stderr, files under `--out`. Exit codes:
//! 0 success, 1 operational failure (stage-tagged message), 2 usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};
use demoplan::eval::ReportFormat;
use demoplan::keyframes::DEFAULT_WINDOW;
use thiserror::Error;

use crate::config::{Config, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Failed { stage: String, message: String },
}

impl CliError {
    pub fn failed(stage: impl Into<String>, e: impl ToString) -> Self {
        CliError::Failed {
            stage: stage.into(),
            message: e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed { .. } => 1,
        }
    }
}

/// Set by the first Ctrl-C; the second one aborts.
pub static CANCEL: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Parser)]
#[command(name = "demoplan", version, about = "Learn PDDL domains from demonstrations, fuse them, and plan unseen tasks")]
struct Cli {
    /// TOML configuration file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Default, clap::Args)]
pub struct PlanFlags {
    /// Ablation: list predicates flat instead of grouped
    #[arg(long)]
    pub no_grouping: bool,
    /// Ablation: skip operator filtering and the refined problem
    #[arg(long)]
    pub no_filtering: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check PDDL files; exits 0 iff no errors were found
    Validate {
        /// Domain and problem files; problems are checked against the given domain of the same name
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Domain to check every problem against
        #[arg(long, value_name = "FILE")]
        domain: Option<PathBuf>,
    },
    /// Extract keyframes from a directory of frames or an `index,energy` CSV
    Keyframes {
        input: PathBuf,
        /// Half-width of the extremum window
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Print index, extremum kind and filename instead of bare indices
        #[arg(long)]
        detail: bool,
    },
    /// Learn an atomic domain from a demonstration manifest
    Learn {
        manifest: PathBuf,
        /// Ablation: skip the holistic revision
        #[arg(long)]
        no_revision: bool,
        /// Ablation: do not gate on the solvability score
        #[arg(long)]
        no_solvability: bool,
        /// Ablation: skip solution verification
        #[arg(long)]
        no_verification: bool,
        /// Ablation: one pass, no refinement or restart
        #[arg(long)]
        no_closed_loop: bool,
    },
    /// Fuse the domains listed in a file (one path per line) into one
    Fuse {
        list: PathBuf,
        /// Name of the fused domain (default: the first listed domain's)
        #[arg(long)]
        name: Option<String>,
        /// Also write every intermediate level
        #[arg(long)]
        intermediates: bool,
    },
    /// Inspect the knowledge graph of domains or saved graphs
    Graph {
        #[command(subcommand)]
        view: GraphView,
    },
    /// Plan one task against a fused domain
    Plan {
        fused: PathBuf,
        task: PathBuf,
        #[command(flatten)]
        flags: PlanFlags,
    },
    /// Run a task suite and report SR, SPL and OR(K)
    Eval {
        fused: PathBuf,
        suite: PathBuf,
        #[command(flatten)]
        flags: PlanFlags,
        /// Report format on stdout: json, csv or markdown
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
}

#[derive(Debug, Subcommand)]
enum GraphView {
    /// Node, edge and category counts as JSON
    Stats {
        /// `.pddl` domains or `.json` graphs; several are unioned
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Graphviz DOT
    Dot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?.with_env()?.apply(&cli.overrides);
    cfg.check()?;
    log::debug!("configuration: {cfg:?}");
    match cli.command {
        Command::Validate { files, domain } => commands::validate(&files, domain.as_deref()),
        Command::Keyframes { input, window, detail } => commands::keyframes(&input, window, detail),
        Command::Learn {
            manifest,
            no_revision,
            no_solvability,
            no_verification,
            no_closed_loop,
        } => {
            let ablation = demoplan::learn::LearnAblation {
                no_revision,
                no_solvability,
                no_verification,
                no_closed_loop,
            };
            commands::learn(&cfg, &manifest, ablation)
        }
        Command::Fuse { list, name, intermediates } => commands::fuse(&cfg, &list, name.as_deref(), intermediates),
        Command::Graph { view } => match view {
            GraphView::Stats { inputs } => commands::graph(&inputs, false),
            GraphView::Dot { inputs } => commands::graph(&inputs, true),
        },
        Command::Plan { fused, task, flags } => commands::plan(&cfg, &fused, &task, flags),
        Command::Eval {
            fused,
            suite,
            flags,
            format,
        } => commands::eval(&cfg, &fused, &suite, flags, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let handler = ctrlc::set_handler(|| {
        if CANCEL.swap(true, Ordering::SeqCst) {
            eprintln!("demoplan: interrupted again; aborting");
            std::process::exit(130);
        }
        eprintln!("demoplan: cancelling; finishing tasks already running (Ctrl-C again to abort)");
    });
    if let Err(e) = handler {
        log::warn!("cannot install the Ctrl-C handler: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("demoplan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
