use std::fmt;
use std::path::{Path, PathBuf};

use popfix::engine::{EngineError, Method};
use popfix::evaluator::{EvalError, EvaluatorConfig};
use popfix::generator::{BackendConfig, GeneratorError};
use popfix::model::EngineConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, dataset or report input.
    Config(String),
    /// The backend or execution environment failed.
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Environment(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Environment(m) => write!(f, "environment error: {m}"),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Environment(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Environment(_) | EvalError::Protocol(_) => CliError::Environment(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Generator(g) => g.into(),
            EngineError::Evaluation(v) => v.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Everything one `run` invocation needs. Every command-line flag of `run`
/// has a field here; flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub method: Method,
    pub runs_per_task: usize,
    /// Per-run seeds are derived from this, the task id and the run index.
    pub master_seed: u64,
    /// Task ids or glob patterns; empty selects every task.
    pub tasks: Vec<String>,
    pub jobs: usize,
    pub templates_dir: Option<PathBuf>,
    /// Per-run exchange logs, `<cache_dir>/<task>/<run>.jsonl`. Live
    /// backends record there and the replay backend reads from there.
    pub cache_dir: Option<PathBuf>,
    pub engine: EngineConfig,
    pub evaluator: EvaluatorConfig,
    pub backend: BackendConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            output_dir: PathBuf::from("popfix-out"),
            method: Method::Evolve,
            runs_per_task: 1,
            master_seed: 0,
            tasks: Vec::new(),
            jobs: 1,
            templates_dir: None,
            cache_dir: None,
            engine: EngineConfig::default(),
            evaluator: EvaluatorConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.dataset.is_none() {
            return bad("no dataset given".into());
        }
        if self.runs_per_task == 0 {
            return bad("runs_per_task must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        self.engine.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.evaluator.validate().map_err(CliError::Config)?;
        let probe = self.backend_for("probe", 0);
        probe.validate().map_err(CliError::from)
    }

    /// `true` when `task_id` passes the task filter.
    pub fn selects(&self, task_id: &str) -> Result<bool, CliError> {
        if self.tasks.is_empty() {
            return Ok(true);
        }
        for pattern in &self.tasks {
            let p = glob::Pattern::new(pattern)
                .map_err(|e| CliError::Config(format!("task pattern {pattern:?}: {e}")))?;
            if p.matches(task_id) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Backend settings for one run, with the per-run exchange log filled in.
    pub fn backend_for(&self, task_id: &str, run_index: usize) -> BackendConfig {
        let mut cfg = self.backend.clone();
        if let Some(dir) = &self.cache_dir {
            cfg.cache_path = Some(exchange_log_path(dir, task_id, run_index));
        }
        cfg
    }

    pub fn engine_for(&self, task_id: &str, run_index: usize) -> EngineConfig {
        EngineConfig {
            rng_seed: derive_seed(self.master_seed, task_id, run_index),
            ..self.engine.clone()
        }
    }

    pub fn report_path(&self, task_id: &str, run_index: usize) -> PathBuf {
        self.output_dir
            .join(self.method.as_str())
            .join(path_component(task_id))
            .join(format!("{run_index}.json"))
    }
}

/// First eight bytes of SHA-256 over the master seed, task id and run index,
/// so a task's runs do not depend on which other tasks are selected.
pub fn derive_seed(master: u64, task_id: &str, run_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((task_id.len() as u64).to_le_bytes());
    h.update(task_id.as_bytes());
    h.update((run_index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn exchange_log_path(dir: &Path, task_id: &str, run_index: usize) -> PathBuf {
    dir.join(path_component(task_id)).join(format!("{run_index}.jsonl"))
}

/// Task ids may hold characters that are awkward in file names.
pub fn path_component(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part() {
        let base = derive_seed(1, "t", 0);
        assert_eq!(base, derive_seed(1, "t", 0));
        assert_ne!(base, derive_seed(2, "t", 0));
        assert_ne!(base, derive_seed(1, "u", 0));
        assert_ne!(base, derive_seed(1, "t", 1));
        // Length prefix keeps ("ab", 0) and ("a", ...) apart.
        assert_ne!(derive_seed(0, "ab", 0), derive_seed(0, "a", 0));
    }

    #[test]
    fn task_filter_accepts_ids_and_globs() {
        let cfg = ExperimentConfig {
            tasks: vec!["exact".into(), "lc-*".into()],
            ..ExperimentConfig::default()
        };
        assert!(cfg.selects("exact").unwrap());
        assert!(cfg.selects("lc-81").unwrap());
        assert!(!cfg.selects("other").unwrap());
        assert!(ExperimentConfig::default().selects("anything").unwrap());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"runs": 3}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let ok: ExperimentConfig = serde_json::from_str(r#"{"runs_per_task": 3}"#).unwrap();
        assert_eq!(ok.runs_per_task, 3);
    }

    #[test]
    fn unsafe_task_ids_become_plain_paths() {
        assert_eq!(path_component("a/b c"), "a_b_c");
        let cfg = ExperimentConfig::default();
        assert!(cfg.report_path("x/y", 2).ends_with("evolve/x_y/2.json"));
    }
}
