//! Experiment configs, run directories and run comparison.
//!
//! A run directory doubles as the checkpoint:
//!
//! | file | content |
//! |------|---------|
//! | `config.json` | the parsed config echoed back |
//! | `status.json` | `running` until the run finishes, then `complete` |
//! | `records.csv` | one row per evaluation point |
//! | `timing.csv` | wall-clock seconds per evaluation point |
//! | `summary.json` | final evaluation and stopping episode |
//! | `traces.txt` | every training episode |
//! | `qtable.csv` | sorted `obs,state,flag,action,value` records |
//! | `model.txt`, `model.dot` | learned model, exact and for viewing |
//!
//! Every text artifact carries the config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{
    baseline_obs_q, evaluate, train, AgentConfig, AgentError, EvalPoint, EvalStats, ObsAgent, PoqlAgent, QTable,
    QTableParseError, RandomPolicy,
};
use crate::dot::{parse_model, to_dot, write_model, FormatError};
use crate::env::suite::{grid_environment, grid_spec};
use crate::env::{hot_beverage_pomdp, EnvError, Environment, GridSpec, HotBeverageParams};
use crate::symbol::Symbol;
use crate::trace::write_traces;

pub const SCHEMA: &str = "poql-experiment/1";
pub const RECORD_COLUMNS: &str = "episode,goal_rate,mean_steps,mean_return,model_state_count,q_rows,config_hash";
pub const OUTPUT_ROOT_VAR: &str = "POQL_OUTPUT_ROOT";
pub const FAILURE_MARKER: &str = "✗";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unsupported schema {found:?}, expected {SCHEMA:?}")]
    Schema { found: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}: run is incomplete")]
    Incomplete(PathBuf),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    QTable(#[from] QTableParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Poql,
    ObsBaseline,
    Random,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Poql => "poql",
            AgentKind::ObsBaseline => "obs_baseline",
            AgentKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub name: String,
    /// Grid layout file replacing the bundled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hot_beverage: Option<HotBeverageParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub agent: AgentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub agent_config: AgentConfig,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = read(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_path_buf(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema != SCHEMA {
            return Err(ExperimentError::Schema { found: self.schema.clone() });
        }
        self.agent_config.validate()?;
        self.build_environment().map(|_| ())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    pub fn build_environment(&self) -> Result<Environment, ExperimentError> {
        let e = &self.environment;
        let mut env = if let Some(layout) = &e.layout {
            let mut spec = GridSpec::parse(&read(layout)?).map_err(EnvError::from)?;
            spec.name = e.name.clone();
            if let Some(m) = e.max_steps {
                spec.max_steps = m;
            }
            grid_environment(&spec, self.seed)?
        } else if e.name == "hot_beverage" {
            let mut p = e.hot_beverage.unwrap_or_default();
            if let Some(m) = e.max_steps {
                p.max_steps = m;
            }
            Environment::new("hot_beverage", hot_beverage_pomdp(&p).map_err(EnvError::from)?, p.max_steps, self.seed)?
        } else {
            let mut spec = grid_spec(&e.name).ok_or_else(|| EnvError::UnknownEnvironment(e.name.clone()))?;
            if let Some(m) = e.max_steps {
                spec.max_steps = m;
            }
            grid_environment(&spec, self.seed)?
        };
        env.reseed(self.seed);
        Ok(env)
    }

    /// `output_dir`, resolved against `root` when relative.
    pub fn run_dir(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output_dir.is_relative() => r.join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub environment: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub stopped_early: bool,
    pub goal_rate: f64,
    pub mean_steps: Option<f64>,
    pub mean_return: f64,
    pub oracle_steps: Option<usize>,
    pub model_states: usize,
}

#[derive(Serialize, Deserialize)]
struct Status {
    status: String,
    config_hash: String,
}

fn write_status(dir: &Path, status: &str, hash: &str) -> Result<(), ExperimentError> {
    let s = Status { status: status.to_string(), config_hash: hash.to_string() };
    write(&dir.join("status.json"), &(serde_json::to_string_pretty(&s).expect("status serializes") + "\n"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn records_csv(evals: &[EvalPoint], hash: &str) -> String {
    let mut out = format!("{RECORD_COLUMNS}\n");
    for e in evals {
        writeln!(
            out,
            "{},{},{},{},{},{},{hash}",
            e.episode,
            e.stats.goal_rate,
            fmt_opt(e.stats.mean_steps),
            e.stats.mean_return,
            e.model_states,
            e.q_rows
        )
        .unwrap();
    }
    out
}

fn timing_csv(evals: &[EvalPoint]) -> String {
    let mut out = String::from("episode,wall_time\n");
    for e in evals {
        writeln!(out, "{},{:.3}", e.episode, e.wall_time).unwrap();
    }
    out
}

/// Runs one experiment and writes its run directory. Returns the directory
/// and the final summary.
pub fn run_experiment(
    config: &ExperimentConfig,
    root: Option<&Path>,
) -> Result<(PathBuf, RunSummary), ExperimentError> {
    config.validate()?;
    let mut env = config.build_environment()?;
    let dir = config.run_dir(root);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hash = config.hash();
    write_status(&dir, "running", &hash)?;
    write(&dir.join("config.json"), &config.to_json())?;
    let header = vec![format!("config_hash {hash}")];
    let ac = &config.agent_config;
    let oracle = env.oracle_steps(ac.gamma);
    let actions = env.actions().to_vec();
    let (evals, episodes, stopped_early, model_states) = match config.agent {
        AgentKind::Poql => {
            let run = train(&mut env, ac, config.seed, oracle)?;
            write(&dir.join("model.txt"), &write_model(&run.agent.model, &header))?;
            write(&dir.join("model.dot"), &to_dot(&run.agent.model, None))?;
            write(&dir.join("qtable.csv"), &run.agent.q.to_csv(&actions))?;
            write(&dir.join("traces.txt"), &write_traces(&run.history, &header))?;
            (run.evals, run.episodes, run.stopped_early, run.agent.model.num_states())
        }
        AgentKind::ObsBaseline => {
            let run = baseline_obs_q(&mut env, ac, config.seed, oracle)?;
            write(&dir.join("qtable.csv"), &run.agent.q.to_csv(&actions))?;
            write(&dir.join("traces.txt"), &write_traces(&run.history, &header))?;
            (run.evals, run.episodes, run.stopped_early, 0)
        }
        AgentKind::Random => {
            let policy = RandomPolicy { n_actions: actions.len() };
            let stats = evaluate(&policy, &env, ac.eval_episodes, config.seed, ac.gamma)?;
            let point = EvalPoint { episode: 0, stats, model_states: 0, q_rows: 0, wall_time: 0.0 };
            write(&dir.join("traces.txt"), &write_traces(&[], &header))?;
            (vec![point], 0, false, 0)
        }
    };
    write(&dir.join("records.csv"), &records_csv(&evals, &hash))?;
    write(&dir.join("timing.csv"), &timing_csv(&evals))?;
    let last = evals.last().map(|e| e.stats.clone()).expect("at least one evaluation");
    let summary = RunSummary {
        environment: config.environment.name.clone(),
        agent: config.agent,
        seed: config.seed,
        config_hash: hash.clone(),
        episodes,
        stopped_early,
        goal_rate: last.goal_rate,
        mean_steps: last.mean_steps,
        mean_return: last.mean_return,
        oracle_steps: oracle,
        model_states,
    };
    write(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    write_status(&dir, "complete", &hash)?;
    Ok((dir, summary))
}

pub enum LoadedAgent {
    Poql(PoqlAgent),
    Obs(ObsAgent),
    Random(RandomPolicy),
}

pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub agent: LoadedAgent,
}

pub fn is_complete(dir: &Path) -> bool {
    fs::read_to_string(dir.join("status.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Status>(&t).ok())
        .is_some_and(|s| s.status == "complete")
}

fn read_model(dir: &Path) -> Result<crate::model::Dlmdp, ExperimentError> {
    Ok(parse_model(&read(&dir.join("model.txt"))?)?)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, ExperimentError> {
    if !is_complete(dir) {
        return Err(ExperimentError::Incomplete(dir.to_path_buf()));
    }
    let config_path = dir.join("config.json");
    let config: ExperimentConfig = serde_json::from_str(&read(&config_path)?)
        .map_err(|source| ExperimentError::Json { path: config_path, source })?;
    let actions: Vec<Symbol> = config.build_environment()?.actions().to_vec();
    let agent = match config.agent {
        AgentKind::Poql => {
            let q = QTable::from_csv(&read(&dir.join("qtable.csv"))?, &actions)?;
            LoadedAgent::Poql(PoqlAgent { model: read_model(dir)?, q, actions })
        }
        AgentKind::ObsBaseline => {
            let q = QTable::from_csv(&read(&dir.join("qtable.csv"))?, &actions)?;
            LoadedAgent::Obs(ObsAgent { q, actions })
        }
        AgentKind::Random => LoadedAgent::Random(RandomPolicy { n_actions: actions.len() }),
    };
    Ok(Checkpoint { config, agent })
}

/// Greedy evaluation of a stored agent.
pub fn evaluate_checkpoint(dir: &Path, episodes: usize, seed: u64) -> Result<EvalStats, ExperimentError> {
    let cp = load_checkpoint(dir)?;
    let env = cp.config.build_environment()?;
    let gamma = cp.config.agent_config.gamma;
    Ok(match &cp.agent {
        LoadedAgent::Poql(a) => evaluate(a, &env, episodes, seed, gamma)?,
        LoadedAgent::Obs(a) => evaluate(a, &env, episodes, seed, gamma)?,
        LoadedAgent::Random(a) => evaluate(a, &env, episodes, seed, gamma)?,
    })
}

/// DOT form of the stored model, regenerated from the exact text form.
pub fn export_model(dir: &Path) -> Result<String, ExperimentError> {
    Ok(to_dot(&read_model(dir)?, None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub run: String,
    pub environment: String,
    pub agent: String,
    pub status: String,
    pub steps: String,
    pub goal_rate: String,
    pub episodes: String,
}

fn compare_row(dir: &Path) -> CompareRow {
    let run = dir.display().to_string();
    let summary = is_complete(dir)
        .then(|| fs::read_to_string(dir.join("summary.json")).ok())
        .flatten()
        .and_then(|t| serde_json::from_str::<RunSummary>(&t).ok());
    match summary {
        Some(s) => CompareRow {
            run,
            environment: s.environment,
            agent: s.agent.as_str().to_string(),
            status: "complete".into(),
            steps: match s.mean_steps {
                Some(m) if s.goal_rate >= 1.0 => format!("{}", m.round() as u64),
                _ => FAILURE_MARKER.into(),
            },
            goal_rate: format!("{:.2}", s.goal_rate),
            episodes: s.episodes.to_string(),
        },
        None => CompareRow {
            run,
            environment: "-".into(),
            agent: "-".into(),
            status: "incomplete".into(),
            steps: "-".into(),
            goal_rate: "-".into(),
            episodes: "-".into(),
        },
    }
}

/// Rows grouped by environment, in input order within a group. A run that did
/// not reach the goal in every final evaluation episode shows the failure
/// marker in the steps column.
pub fn compare(dirs: &[PathBuf]) -> Vec<CompareRow> {
    let mut rows: Vec<CompareRow> = dirs.iter().map(|d| compare_row(d)).collect();
    rows.sort_by(|a, b| a.environment.cmp(&b.environment));
    rows
}

const COMPARE_HEADER: [&str; 7] = ["environment", "agent", "steps", "goal_rate", "episodes", "status", "run"];

fn cells(r: &CompareRow) -> [&str; 7] {
    [&r.environment, &r.agent, &r.steps, &r.goal_rate, &r.episodes, &r.status, &r.run]
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut widths = COMPARE_HEADER.map(|h| h.chars().count());
    for r in rows {
        for (w, c) in widths.iter_mut().zip(cells(r)) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: [&str; 7]| {
        let padded: Vec<String> =
            cols.iter().zip(widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(COMPARE_HEADER);
    let mut prev: Option<&str> = None;
    for r in rows {
        if prev.is_some_and(|p| p != r.environment) {
            out.push('\n');
        }
        prev = Some(&r.environment);
        out.push_str(&line(cells(r)));
    }
    out
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = COMPARE_HEADER.join(",") + "\n";
    for r in rows {
        out.push_str(&cells(r).join(","));
        out.push('\n');
    }
    out
}
