//! Running candidate programs against a test suite.
//!
//! Two evaluators implement [`Evaluator`]:
//!
//! * [`SyntheticEvaluator`] reads the behavior a program should exhibit from
//!   directive comments embedded in its source (see [`SyntheticProgramSpec`]).
//!   It is deterministic and is what the engine tests run against.
//! * [`ExternalEvaluator`] drives an interpreter-side shim process over a
//!   line-delimited JSON protocol ([`ShimRequest`] / [`ShimReply`]).
//!
//! A program that cannot load still receives one verdict per test, all
//! `runtime_error`, so fitness and signature stay defined.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    EvaluationOutcome, FailureRecord, ModelError, RepairTask, TestCase, TestKind, TestSuite,
    Verdict,
};

#[derive(Debug, Error)]
pub enum EvalError {
    /// The execution substrate itself failed (shim missing, pipe broken).
    #[error("evaluation environment error: {0}")]
    Environment(String),
    #[error("shim protocol error: {0}")]
    Protocol(String),
    #[error("invalid synthetic program: {0}")]
    InvalidSynthetic(String),
    #[error("invalid test {index}: {message}")]
    InvalidTest { index: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorMode {
    #[default]
    Synthetic,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorConfig {
    pub mode: EvaluatorMode,
    /// Command line that starts one shim process, e.g. `["python3", "shim.py"]`.
    pub interpreter_command: Vec<String>,
    /// Caps every test's own time limit when set.
    pub per_test_timeout_ms: Option<u64>,
    /// How long a shim may take to acknowledge `load`.
    pub load_timeout_ms: u64,
    pub max_parallel_evaluations: usize,
    pub max_failures_in_report: usize,
    /// Entry point for functional tests when the task does not name one.
    pub entry_point: String,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            mode: EvaluatorMode::Synthetic,
            interpreter_command: Vec::new(),
            per_test_timeout_ms: None,
            load_timeout_ms: 10_000,
            max_parallel_evaluations: 1,
            max_failures_in_report: 3,
            entry_point: "solve".to_string(),
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.mode == EvaluatorMode::External && self.interpreter_command.is_empty() {
            return Err("external evaluator requires a non-empty interpreter_command".into());
        }
        if self.max_parallel_evaluations == 0 {
            return Err("max_parallel_evaluations must be at least 1".into());
        }
        if self.max_failures_in_report == 0 {
            return Err("max_failures_in_report must be at least 1".into());
        }
        Ok(())
    }

    fn time_limit(&self, case: &TestCase) -> u64 {
        match self.per_test_timeout_ms {
            Some(cap) => case.time_limit_ms.min(cap).max(1),
            None => case.time_limit_ms,
        }
    }
}

/// Anything that can turn a program into per-test verdicts.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, source: &str, task: &RepairTask) -> Result<EvaluationOutcome, EvalError>;

    /// In-flight evaluations allowed at once.
    fn max_parallel(&self) -> usize {
        1
    }
}

/// Builds the evaluator described by `cfg`.
pub fn build_evaluator(cfg: &EvaluatorConfig) -> Result<Box<dyn Evaluator>, EvalError> {
    cfg.validate().map_err(EvalError::Environment)?;
    Ok(match cfg.mode {
        EvaluatorMode::Synthetic => Box::new(SyntheticEvaluator::new(cfg.clone())),
        EvaluatorMode::External => Box::new(ExternalEvaluator::new(cfg.clone())),
    })
}

/// Evaluates several programs with at most `evaluator.max_parallel()` in
/// flight. Results are returned in input order.
pub fn evaluate_many(
    evaluator: &dyn Evaluator,
    task: &RepairTask,
    sources: &[String],
) -> Vec<Result<EvaluationOutcome, EvalError>> {
    let workers = evaluator.max_parallel().max(1).min(sources.len());
    if workers <= 1 {
        return sources.iter().map(|s| evaluator.evaluate(s, task)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<EvaluationOutcome, EvalError>>>> =
        sources.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(source) = sources.get(i) else { break };
                let result = evaluator.evaluate(source, task);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
        .collect()
}

/// First `limit` failures in suite order.
pub fn build_failure_report(outcome: &EvaluationOutcome, limit: usize) -> Vec<FailureRecord> {
    let mut records: Vec<FailureRecord> = outcome.failures().to_vec();
    records.sort_by_key(|r| r.test_index);
    records.truncate(limit.max(1));
    records
}

/// Judging rule for stdio tests: compare line by line after removing
/// trailing whitespace from each line and dropping trailing blank lines.
pub fn stdio_outputs_match(actual: &str, expected: &str) -> bool {
    fn canonical(text: &str) -> Vec<&str> {
        let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        lines
    }
    canonical(actual) == canonical(expected)
}

/// Structural JSON equality where numbers compare by value (`1 == 1.0`).
pub fn json_values_match(actual: &serde_json::Value, expected: &serde_json::Value) -> bool {
    use serde_json::Value;
    match (actual, expected) {
        (Value::Number(a), Value::Number(b)) => match (a.as_i64(), b.as_i64()) {
            (Some(x), Some(y)) => x == y,
            _ => a.as_f64() == b.as_f64(),
        },
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| json_values_match(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len()
                && a.iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| json_values_match(v, w)))
        }
        _ => actual == expected,
    }
}

/// Behavior declared by directive lines inside a synthetic program:
///
/// ```text
/// # @passes: 1,2,4        (or `all` / `none`)
/// # @errors: 3=runtime_error, 5=timeout
/// # @load_error: SyntaxError: invalid syntax
/// ```
///
/// Tests that are neither passed nor listed under `@errors` are wrong output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyntheticProgramSpec {
    pub declared_pass_set: BTreeSet<usize>,
    pub pass_all: bool,
    pub declared_error_tests: BTreeMap<usize, Verdict>,
    pub load_error: Option<String>,
}

impl SyntheticProgramSpec {
    pub fn passing(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            declared_pass_set: indices.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn parse(source: &str) -> Result<Self, EvalError> {
        let mut spec = Self::default();
        for line in source.lines() {
            if let Some(rest) = directive(line, "@passes:") {
                match rest.trim() {
                    "all" => spec.pass_all = true,
                    "none" | "" => {}
                    list => {
                        for item in list.split(',') {
                            spec.declared_pass_set.insert(parse_index(item)?);
                        }
                    }
                }
            } else if let Some(rest) = directive(line, "@errors:") {
                for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
                    let (index, kind) = item.split_once('=').ok_or_else(|| {
                        EvalError::InvalidSynthetic(format!("bad @errors entry {item:?}"))
                    })?;
                    let verdict = match kind.trim() {
                        "runtime_error" => Verdict::RuntimeError,
                        "timeout" => Verdict::Timeout,
                        "wrong_output" => Verdict::WrongOutput,
                        other => {
                            return Err(EvalError::InvalidSynthetic(format!(
                                "unknown error category {other:?}"
                            )))
                        }
                    };
                    spec.declared_error_tests.insert(parse_index(index)?, verdict);
                }
            } else if let Some(rest) = directive(line, "@load_error:") {
                spec.load_error = Some(rest.trim().to_string());
            }
        }
        Ok(spec)
    }

    /// Prepends this spec's directives to `body`.
    pub fn render(&self, body: &str) -> String {
        let mut out = String::new();
        if self.pass_all {
            out.push_str("# @passes: all\n");
        } else {
            let list: Vec<String> = self.declared_pass_set.iter().map(|i| i.to_string()).collect();
            let list = if list.is_empty() { "none".to_string() } else { list.join(",") };
            out.push_str(&format!("# @passes: {list}\n"));
        }
        if !self.declared_error_tests.is_empty() {
            let items: Vec<String> = self
                .declared_error_tests
                .iter()
                .map(|(i, v)| format!("{i}={v}"))
                .collect();
            out.push_str(&format!("# @errors: {}\n", items.join(",")));
        }
        if let Some(msg) = &self.load_error {
            out.push_str(&format!("# @load_error: {msg}\n"));
        }
        out.push_str(body);
        out
    }

    pub fn outcome(&self, suite: &TestSuite) -> Result<EvaluationOutcome, EvalError> {
        let m = suite.len();
        let out_of_range = self
            .declared_pass_set
            .iter()
            .chain(self.declared_error_tests.keys())
            .find(|&&i| i == 0 || i > m);
        if let Some(i) = out_of_range {
            return Err(EvalError::InvalidSynthetic(format!(
                "test index {i} outside 1..={m}"
            )));
        }
        if let Some(msg) = &self.load_error {
            return Ok(EvaluationOutcome::uniform_failure(suite, Verdict::RuntimeError, msg));
        }
        let mut per_test = Vec::with_capacity(m);
        let mut failures = Vec::new();
        for case in suite.cases() {
            let verdict = if self.pass_all || self.declared_pass_set.contains(&case.index) {
                Verdict::Pass
            } else {
                self.declared_error_tests
                    .get(&case.index)
                    .copied()
                    .unwrap_or(Verdict::WrongOutput)
            };
            if !verdict.is_pass() {
                let actual = match verdict {
                    Verdict::RuntimeError => "synthetic runtime error",
                    Verdict::Timeout => "time limit exceeded",
                    _ => "synthetic wrong output",
                };
                failures.push(FailureRecord::new(
                    case.index,
                    &case.input,
                    &case.expected,
                    actual,
                    verdict,
                ));
            }
            per_test.push(verdict);
        }
        Ok(EvaluationOutcome::new(per_test, failures)?)
    }
}

fn directive<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    line.find(name).map(|at| &line[at + name.len()..])
}

fn parse_index(text: &str) -> Result<usize, EvalError> {
    text.trim()
        .parse()
        .map_err(|_| EvalError::InvalidSynthetic(format!("bad test index {text:?}")))
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticEvaluator {
    cfg: EvaluatorConfig,
}

impl SyntheticEvaluator {
    pub fn new(cfg: EvaluatorConfig) -> Self {
        Self { cfg }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, source: &str, task: &RepairTask) -> Result<EvaluationOutcome, EvalError> {
        SyntheticProgramSpec::parse(source)?.outcome(&task.suite)
    }

    fn max_parallel(&self) -> usize {
        self.cfg.max_parallel_evaluations
    }
}

/// Engine → shim messages, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum ShimRequest {
    Load {
        source: String,
    },
    Run {
        kind: TestKind,
        /// A string for stdio tests, the decoded argument list for functional ones.
        input: serde_json::Value,
        #[serde(skip_serializing_if = "Option::is_none")]
        entry: Option<String>,
        timeout_ms: u64,
    },
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShimErrorType {
    Exception,
    Timeout,
    LoadError,
}

/// Shim → engine reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimReply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<ShimErrorType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ShimReply {
    pub fn parse(line: &str) -> Result<Self, EvalError> {
        let reply: ShimReply = serde_json::from_str(line)
            .map_err(|e| EvalError::Protocol(format!("{e} in reply {line:?}")))?;
        if !reply.ok && reply.error_type.is_none() {
            return Err(EvalError::Protocol(format!("error reply without error_type: {line:?}")));
        }
        Ok(reply)
    }
}

enum ReadOutcome {
    Line(String),
    Closed,
    TimedOut,
}

/// One live shim process with a loaded candidate.
struct ShimSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl ShimSession {
    fn spawn(command: &[String]) -> Result<Self, EvalError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| EvalError::Environment("empty interpreter command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EvalError::Environment(format!("cannot launch {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }

    fn send(&mut self, request: &ShimRequest) -> Result<(), EvalError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| EvalError::Environment(format!("shim pipe closed: {e}")))
    }

    fn read(&self, timeout: Duration) -> ReadOutcome {
        loop {
            match self.lines.recv_timeout(timeout) {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => return ReadOutcome::Line(line),
                Err(RecvTimeoutError::Timeout) => return ReadOutcome::TimedOut,
                Err(RecvTimeoutError::Disconnected) => return ReadOutcome::Closed,
            }
        }
    }
}

impl Drop for ShimSession {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Outcome of loading a candidate into a fresh shim.
enum Loaded {
    Ready(ShimSession),
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    cfg: EvaluatorConfig,
}

impl ExternalEvaluator {
    pub fn new(cfg: EvaluatorConfig) -> Self {
        Self { cfg }
    }

    fn load(&self, source: &str) -> Result<Loaded, EvalError> {
        let mut session = ShimSession::spawn(&self.cfg.interpreter_command)?;
        session.send(&ShimRequest::Load {
            source: source.to_string(),
        })?;
        match session.read(Duration::from_millis(self.cfg.load_timeout_ms)) {
            ReadOutcome::Line(line) => {
                let reply = ShimReply::parse(&line)?;
                if reply.ok {
                    Ok(Loaded::Ready(session))
                } else {
                    Ok(Loaded::Failed(
                        reply.message.unwrap_or_else(|| "load failed".to_string()),
                    ))
                }
            }
            ReadOutcome::Closed => Err(EvalError::Environment(
                "shim exited before acknowledging load".into(),
            )),
            ReadOutcome::TimedOut => Ok(Loaded::Failed("load timed out".into())),
        }
    }

    fn run_request(&self, case: &TestCase, entry: &str) -> Result<ShimRequest, EvalError> {
        let input = match case.kind {
            TestKind::Stdio => serde_json::Value::String(case.input.clone()),
            TestKind::Functional => {
                serde_json::from_str(&case.input).map_err(|e| EvalError::InvalidTest {
                    index: case.index,
                    message: format!("input is not JSON: {e}"),
                })?
            }
        };
        Ok(ShimRequest::Run {
            kind: case.kind,
            input,
            entry: (case.kind == TestKind::Functional).then(|| entry.to_string()),
            timeout_ms: self.cfg.time_limit(case),
        })
    }

    fn judge(&self, case: &TestCase, reply: &ShimReply) -> Result<(Verdict, String), EvalError> {
        if !reply.ok {
            let message = reply.message.clone().unwrap_or_default();
            return Ok(match reply.error_type {
                Some(ShimErrorType::Timeout) => (Verdict::Timeout, format!("timeout: {message}")),
                _ => (Verdict::RuntimeError, message),
            });
        }
        match case.kind {
            TestKind::Stdio => {
                let stdout = reply
                    .stdout
                    .as_deref()
                    .ok_or_else(|| EvalError::Protocol("stdio reply without stdout".into()))?;
                if stdio_outputs_match(stdout, &case.expected) {
                    Ok((Verdict::Pass, String::new()))
                } else {
                    Ok((Verdict::WrongOutput, stdout.to_string()))
                }
            }
            TestKind::Functional => {
                let result = reply
                    .result
                    .as_ref()
                    .ok_or_else(|| EvalError::Protocol("functional reply without result".into()))?;
                let expected: serde_json::Value =
                    serde_json::from_str(&case.expected).map_err(|e| EvalError::InvalidTest {
                        index: case.index,
                        message: format!("expected value is not JSON: {e}"),
                    })?;
                if json_values_match(result, &expected) {
                    Ok((Verdict::Pass, String::new()))
                } else {
                    Ok((Verdict::WrongOutput, result.to_string()))
                }
            }
        }
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, source: &str, task: &RepairTask) -> Result<EvaluationOutcome, EvalError> {
        let entry = task
            .entry_point
            .clone()
            .unwrap_or_else(|| self.cfg.entry_point.clone());
        let suite = &task.suite;
        let mut per_test = Vec::with_capacity(suite.len());
        let mut failures = Vec::new();
        let mut session: Option<ShimSession> = None;

        for case in suite.cases() {
            if session.is_none() {
                match self.load(source)? {
                    Loaded::Ready(s) => session = Some(s),
                    Loaded::Failed(message) => {
                        if per_test.is_empty() {
                            return Ok(EvaluationOutcome::uniform_failure(
                                suite,
                                Verdict::RuntimeError,
                                &message,
                            ));
                        }
                        // A reload after a timeout failed; the rest cannot run.
                        for rest in &suite.cases()[per_test.len()..] {
                            per_test.push(Verdict::RuntimeError);
                            failures.push(FailureRecord::new(
                                rest.index,
                                &rest.input,
                                &rest.expected,
                                &message,
                                Verdict::RuntimeError,
                            ));
                        }
                        break;
                    }
                }
            }
            let live = session.as_mut().expect("session loaded");
            let request = self.run_request(case, &entry)?;
            let limit = self.cfg.time_limit(case);
            live.send(&request)?;
            let (verdict, actual, keep) = match live.read(Duration::from_millis(2 * limit)) {
                ReadOutcome::Line(line) => {
                    let reply = ShimReply::parse(&line)?;
                    let (verdict, actual) = self.judge(case, &reply)?;
                    // The shim exits after reporting a timeout.
                    (verdict, actual, verdict != Verdict::Timeout)
                }
                ReadOutcome::TimedOut => (
                    Verdict::Timeout,
                    format!("timeout: no reply within {} ms", 2 * limit),
                    false,
                ),
                ReadOutcome::Closed => (
                    Verdict::RuntimeError,
                    "interpreter exited while running the test".to_string(),
                    false,
                ),
            };
            if !keep {
                session = None;
            }
            if !verdict.is_pass() {
                failures.push(FailureRecord::new(
                    case.index,
                    &case.input,
                    &case.expected,
                    &actual,
                    verdict,
                ));
            }
            per_test.push(verdict);
        }
        if let Some(mut live) = session {
            let _ = live.send(&ShimRequest::Exit);
        }
        Ok(EvaluationOutcome::new(per_test, failures)?)
    }

    fn max_parallel(&self) -> usize {
        self.cfg.max_parallel_evaluations
    }
}
