//! JSON Lines dataset ingestion. Each non-blank line holds one task:
//!
//! ```json
//! {"task_id": "t1", "problem_statement": "...", "buggy_program": "...",
//!  "tests": [{"input": "1 2", "expected": "3", "kind": "stdio", "time_limit_ms": 2000}],
//!  "initial_error_info": "optional", "entry_point": "optional"}
//! ```
//!
//! `input` and `expected` are strings; any other JSON value is accepted and
//! stored in its compact JSON encoding. `kind` defaults to `stdio` and
//! `time_limit_ms` to [`DEFAULT_TIME_LIMIT_MS`].

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::model::{ModelError, RepairTask, TestCase, TestKind, TestSuite};

pub const DEFAULT_TIME_LIMIT_MS: u64 = 2_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    #[serde(deserialize_with = "string_or_json")]
    input: String,
    #[serde(deserialize_with = "string_or_json")]
    expected: String,
    #[serde(default)]
    kind: TestKind,
    #[serde(default = "default_time_limit")]
    time_limit_ms: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    task_id: String,
    problem_statement: String,
    buggy_program: String,
    tests: Vec<RawTest>,
    #[serde(default)]
    initial_error_info: Option<String>,
    #[serde(default)]
    entry_point: Option<String>,
}

#[derive(Serialize)]
struct RawTestOut<'a> {
    input: &'a str,
    expected: &'a str,
    kind: TestKind,
    time_limit_ms: u64,
}

#[derive(Serialize)]
struct RawTaskOut<'a> {
    task_id: &'a str,
    problem_statement: &'a str,
    buggy_program: &'a str,
    tests: Vec<RawTestOut<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_error_info: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entry_point: Option<&'a str>,
}

fn default_time_limit() -> u64 {
    DEFAULT_TIME_LIMIT_MS
}

fn string_or_json<'de, D: Deserializer<'de>>(deserializer: D) -> Result<String, D::Error> {
    let value = serde_json::Value::deserialize(deserializer)?;
    Ok(match value {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    })
}

fn convert(raw: RawTask) -> Result<RepairTask, ModelError> {
    let cases = raw
        .tests
        .into_iter()
        .enumerate()
        .map(|(i, t)| TestCase {
            index: i + 1,
            input: t.input,
            expected: t.expected,
            kind: t.kind,
            time_limit_ms: t.time_limit_ms,
        })
        .collect();
    let task = RepairTask {
        task_id: raw.task_id,
        problem_statement: raw.problem_statement,
        buggy_program: raw.buggy_program,
        suite: TestSuite::new(cases)?,
        initial_error_info: raw.initial_error_info,
        entry_point: raw.entry_point,
    };
    task.validate()?;
    Ok(task)
}

/// Checks that functional tests carry a JSON argument list and a JSON
/// expected value.
fn check_functional(task: &RepairTask) -> Result<(), String> {
    for case in task.suite.cases() {
        if case.kind != TestKind::Functional {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(&case.input) {
            Ok(serde_json::Value::Array(_)) => {}
            _ => {
                return Err(format!(
                    "test {} is functional but its input is not a JSON argument list",
                    case.index
                ))
            }
        }
        if serde_json::from_str::<serde_json::Value>(&case.expected).is_err() {
            return Err(format!(
                "test {} is functional but its expected value is not JSON",
                case.index
            ));
        }
    }
    Ok(())
}

pub fn parse_task_line(line: &str) -> Result<RepairTask, String> {
    let raw: RawTask = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let task = convert(raw).map_err(|e| e.to_string())?;
    check_functional(&task)?;
    Ok(task)
}

/// Parses a whole dataset; errors carry the 1-based line number.
pub fn parse_dataset(text: &str) -> Result<Vec<RepairTask>, DatasetError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task = parse_task_line(line).map_err(|message| DatasetError::Line {
            line: i + 1,
            message,
        })?;
        if !seen.insert(task.task_id.clone()) {
            return Err(DatasetError::Line {
                line: i + 1,
                message: format!("duplicate task_id {:?}", task.task_id),
            });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn load_dataset(path: &Path) -> Result<Vec<RepairTask>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

/// Encodes a task as one dataset line.
pub fn to_dataset_line(task: &RepairTask) -> String {
    let out = RawTaskOut {
        task_id: &task.task_id,
        problem_statement: &task.problem_statement,
        buggy_program: &task.buggy_program,
        tests: task
            .suite
            .cases()
            .iter()
            .map(|c| RawTestOut {
                input: &c.input,
                expected: &c.expected,
                kind: c.kind,
                time_limit_ms: c.time_limit_ms,
            })
            .collect(),
        initial_error_info: task.initial_error_info.as_deref(),
        entry_point: task.entry_point.as_deref(),
    };
    serde_json::to_string(&out).expect("dataset line serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"task_id":"t1","problem_statement":"add","buggy_program":"print(1)","tests":[{"input":"1 2","expected":"3"},{"input":[[1,2]],"expected":3,"kind":"functional","time_limit_ms":500}]}"#;

    #[test]
    fn parses_defaults_and_json_values() {
        let tasks = parse_dataset(LINE).unwrap();
        let suite = &tasks[0].suite;
        assert_eq!(suite.len(), 2);
        assert_eq!(suite.cases()[0].kind, TestKind::Stdio);
        assert_eq!(suite.cases()[0].time_limit_ms, DEFAULT_TIME_LIMIT_MS);
        assert_eq!(suite.cases()[1].input, "[[1,2]]");
        assert_eq!(suite.cases()[1].expected, "3");
        assert_eq!(suite.cases()[1].index, 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{LINE}\n\n{{not json\n");
        match parse_dataset(&text).unwrap_err() {
            DatasetError::Line { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_empty_suite_and_duplicates() {
        let empty = r#"{"task_id":"t","problem_statement":"p","buggy_program":"x","tests":[]}"#;
        assert!(parse_dataset(empty).is_err());
        let dup = format!("{LINE}\n{LINE}");
        assert!(parse_dataset(&dup).is_err());
    }

    #[test]
    fn functional_input_must_be_argument_list() {
        let bad = r#"{"task_id":"t","problem_statement":"p","buggy_program":"x","tests":[{"input":"3","expected":"1","kind":"functional"}]}"#;
        assert!(parse_dataset(bad).is_err());
    }

    #[test]
    fn line_round_trip() {
        let task = parse_dataset(LINE).unwrap().remove(0);
        let again = parse_task_line(&to_dataset_line(&task)).unwrap();
        assert_eq!(task, again);
    }
}
