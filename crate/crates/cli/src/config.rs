//! Layered configuration: built-in defaults, then a TOML file, then
//! `ORACLE_*` environment variables, then command-line flags.
//!
//! File grammar: TOML with the sections below; every key is optional.
//!
//! ```toml
//! [oracle]
//! mode = "replay"            # live | record | replay
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4.1"
//! embed_model = "text-embedding-3-small"
//! embedder = "stub"          # stub | remote
//! parallelism = 4
//! timeout_s = 120.0
//! transcript = "fixtures/kitchen/transcript.jsonl"
//!
//! [learn]
//! k_test = 5
//! theta = 0.6
//! l_max = 5
//! r_parse = 3                # repair attempts, used by every stage
//!
//! [fusion]
//! tau_p = 0.3
//! tau_o = 0.3
//! equivalence = "llm"        # llm | exact-name
//!
//! [planner]
//! max_expansions = 1000000
//! time_limit_s = 60.0
//! max_ground_actions = 200000
//!
//! [eval]
//! min_sr = 0.0
//!
//! [paths]
//! out = "out"
//! ```
//!
//! Each key has exactly one flag, named after the key with dashes
//! (`learn.k_test` is `--k-test`); see [`KEYS`]. The API key is read from
//! `ORACLE_API_KEY` only.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use demoplan::fusion::{Equivalence, FusionConfig};
use demoplan::learn::LearnConfig;
use demoplan::oracle::{EmbedderKind, OracleConfig, OracleMode};
use demoplan::planner::{GroundLimit, Limits, SearchLimit};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every configuration key and the flag that overrides it.
pub const KEYS: [(&str, &str); 20] = [
    ("oracle.mode", "--mode"),
    ("oracle.base_url", "--base-url"),
    ("oracle.model", "--model"),
    ("oracle.embed_model", "--embed-model"),
    ("oracle.embedder", "--embedder"),
    ("oracle.parallelism", "--parallelism"),
    ("oracle.timeout_s", "--timeout-s"),
    ("oracle.transcript", "--transcript"),
    ("learn.k_test", "--k-test"),
    ("learn.theta", "--theta"),
    ("learn.l_max", "--l-max"),
    ("learn.r_parse", "--r-parse"),
    ("fusion.tau_p", "--tau-p"),
    ("fusion.tau_o", "--tau-o"),
    ("fusion.equivalence", "--equivalence"),
    ("planner.max_expansions", "--max-expansions"),
    ("planner.time_limit_s", "--time-limit-s"),
    ("planner.max_ground_actions", "--max-ground-actions"),
    ("eval.min_sr", "--min-sr"),
    ("paths.out", "--out"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnSection {
    pub k_test: usize,
    pub theta: f64,
    pub l_max: usize,
    pub r_parse: usize,
}

impl Default for LearnSection {
    fn default() -> Self {
        let d = LearnConfig::default();
        Self {
            k_test: d.k_test,
            theta: d.theta,
            l_max: d.l_max,
            r_parse: d.r_parse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub tau_p: f32,
    pub tau_o: f32,
    pub equivalence: Equivalence,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionConfig::default();
        Self {
            tau_p: d.tau_p,
            tau_o: d.tau_o,
            equivalence: d.equivalence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub max_expansions: u64,
    pub time_limit_s: f64,
    pub max_ground_actions: usize,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let l = Limits::default();
        Self {
            max_expansions: l.search.max_expansions,
            time_limit_s: l.search.time_limit.as_secs_f64(),
            max_ground_actions: l.ground.max_actions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// `eval` exits 1 when the success rate is below this floor.
    pub min_sr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub out: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { out: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub oracle: OracleConfig,
    pub learn: LearnSection,
    pub fusion: FusionSection,
    pub planner: PlannerSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

/// Flags mirroring [`KEYS`]; unset flags leave the layer below alone.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Configuration (overrides the config file)")]
pub struct Overrides {
    /// Oracle mode: live, record or replay [oracle.mode]
    #[arg(long, global = true, value_name = "MODE")]
    pub mode: Option<OracleMode>,
    /// OpenAI-compatible endpoint [oracle.base_url]
    #[arg(long, global = true, value_name = "URL")]
    pub base_url: Option<String>,
    /// Chat model name [oracle.model]
    #[arg(long, global = true, value_name = "NAME")]
    pub model: Option<String>,
    /// Embedding model name [oracle.embed_model]
    #[arg(long, global = true, value_name = "NAME")]
    pub embed_model: Option<String>,
    /// Embedder: stub (local trigram hashing) or remote [oracle.embedder]
    #[arg(long, global = true, value_name = "KIND")]
    pub embedder: Option<EmbedderKind>,
    /// Concurrent oracle calls, and tasks evaluated at once [oracle.parallelism]
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Per-request timeout in seconds [oracle.timeout_s]
    #[arg(long, global = true, value_name = "SECS")]
    pub timeout_s: Option<f64>,
    /// JSONL transcript read in replay mode, appended to in record mode [oracle.transcript]
    #[arg(long, global = true, value_name = "FILE")]
    pub transcript: Option<PathBuf>,
    /// Test problems per solvability check [learn.k_test]
    #[arg(long, global = true, value_name = "K")]
    pub k_test: Option<usize>,
    /// Solvability threshold [learn.theta]
    #[arg(long, global = true, value_name = "THETA")]
    pub theta: Option<f64>,
    /// Refinement iterations per attempt [learn.l_max]
    #[arg(long, global = true, value_name = "L")]
    pub l_max: Option<usize>,
    /// Repair prompts after an unusable reply, in every stage [learn.r_parse]
    #[arg(long, global = true, value_name = "R")]
    pub r_parse: Option<usize>,
    /// Predicate similarity threshold [fusion.tau_p]
    #[arg(long, global = true, value_name = "TAU")]
    pub tau_p: Option<f32>,
    /// Operator similarity threshold [fusion.tau_o]
    #[arg(long, global = true, value_name = "TAU")]
    pub tau_o: Option<f32>,
    /// Equivalence decisions: llm or exact-name [fusion.equivalence]
    #[arg(long, global = true, value_name = "MODE")]
    pub equivalence: Option<Equivalence>,
    /// Search node budget [planner.max_expansions]
    #[arg(long, global = true, value_name = "N")]
    pub max_expansions: Option<u64>,
    /// Search wall-clock budget in seconds [planner.time_limit_s]
    #[arg(long, global = true, value_name = "SECS")]
    pub time_limit_s: Option<f64>,
    /// Grounding budget in actions [planner.max_ground_actions]
    #[arg(long, global = true, value_name = "N")]
    pub max_ground_actions: Option<usize>,
    /// Success-rate floor for `eval` [eval.min_sr]
    #[arg(long, global = true, value_name = "SR")]
    pub min_sr: Option<f64>,
    /// Directory all artifacts are written under [paths.out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Keys present in a parsed file, as `section.key`.
fn file_keys(v: &toml::Value) -> Vec<String> {
    let mut out = Vec::new();
    if let toml::Value::Table(t) = v {
        for (section, inner) in t {
            match inner {
                toml::Value::Table(keys) => out.extend(keys.keys().map(|k| format!("{section}.{k}"))),
                _ => out.push(section.clone()),
            }
        }
    }
    out
}

impl Config {
    /// Parses file contents; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let unknown: Vec<String> = file_keys(&raw)
            .into_iter()
            .filter(|k| !KEYS.iter().any(|(key, _)| key == k))
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown key(s): {}", unknown.join(", "))));
        }
        raw.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn load(file: Option<&Path>) -> Result<Self, CliError> {
        match file {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn with_env(mut self) -> Result<Self, CliError> {
        self.oracle = self.oracle.with_env().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(self)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        let c = &mut self;
        set(&mut c.oracle.mode, o.mode);
        set(&mut c.oracle.base_url, o.base_url.clone());
        set(&mut c.oracle.model, o.model.clone());
        set(&mut c.oracle.embed_model, o.embed_model.clone());
        set(&mut c.oracle.embedder, o.embedder);
        set(&mut c.oracle.parallelism, o.parallelism);
        set(&mut c.oracle.timeout_s, o.timeout_s);
        if o.transcript.is_some() {
            c.oracle.transcript = o.transcript.clone();
        }
        set(&mut c.learn.k_test, o.k_test);
        set(&mut c.learn.theta, o.theta);
        set(&mut c.learn.l_max, o.l_max);
        set(&mut c.learn.r_parse, o.r_parse);
        set(&mut c.fusion.tau_p, o.tau_p);
        set(&mut c.fusion.tau_o, o.tau_o);
        set(&mut c.fusion.equivalence, o.equivalence);
        set(&mut c.planner.max_expansions, o.max_expansions);
        set(&mut c.planner.time_limit_s, o.time_limit_s);
        set(&mut c.planner.max_ground_actions, o.max_ground_actions);
        set(&mut c.eval.min_sr, o.min_sr);
        set(&mut c.paths.out, o.out.clone());
        self
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.oracle.parallelism == 0 {
            return Err(CliError::Config("oracle.parallelism must be at least 1".into()));
        }
        if !(self.planner.time_limit_s > 0.0 && self.planner.time_limit_s.is_finite()) {
            return Err(CliError::Config("planner.time_limit_s must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.min_sr) {
            return Err(CliError::Config("eval.min_sr must be in [0, 1]".into()));
        }
        for (key, tau) in [("fusion.tau_p", self.fusion.tau_p), ("fusion.tau_o", self.fusion.tau_o)] {
            if !(-1.0..=1.0).contains(&tau) {
                return Err(CliError::Config(format!("{key} must be in [-1, 1]")));
            }
        }
        self.learn_config().check().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn limits(&self) -> Limits {
        Limits {
            ground: GroundLimit {
                max_actions: self.planner.max_ground_actions,
                ..GroundLimit::default()
            },
            search: SearchLimit {
                max_expansions: self.planner.max_expansions,
                time_limit: Duration::from_secs_f64(self.planner.time_limit_s),
            },
        }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            k_test: self.learn.k_test,
            theta: self.learn.theta,
            l_max: self.learn.l_max,
            r_parse: self.learn.r_parse,
            limits: self.limits(),
            ..LearnConfig::default()
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            tau_p: self.fusion.tau_p,
            tau_o: self.fusion.tau_o,
            equivalence: self.fusion.equivalence,
            r_parse: self.learn.r_parse,
        }
    }
}
