//! Variation operators: prompt rendering for initialization, recombination
//! and mutation, response parsing, and fitness-proportional parent selection.
//!
//! Rendering is a pure function of its inputs. The compositions
//! [`recombine`] and [`mutate`] add one generator round trip each, with a
//! single re-generation when the reply cannot be parsed.

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::build_failure_report;
use crate::generator::{Generator, GeneratorError, GeneratorExchange};
use crate::model::{CandidateId, EvaluatedCandidate, FailureRecord, RepairTask, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Init,
    Recombination,
    Mutation,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Init => "init",
            PromptKind::Recombination => "recombination",
            PromptKind::Mutation => "mutation",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OperatorError {
    #[error("recombination needs at least two candidates, got {0}")]
    PoolTooSmall(usize),
    #[error("candidate {0} passes every test; nothing to mutate")]
    NothingToMutate(CandidateId),
    #[error("mutation needs a non-empty failure report")]
    EmptyFailureReport,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{reason}")]
pub struct ParseError {
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub rendered_text: String,
    /// Pool members for recombination, the parent for mutation, empty for init.
    pub source_pool: Vec<CandidateId>,
    pub token_estimate: usize,
}

impl PromptBundle {
    fn new(kind: PromptKind, rendered_text: String, source_pool: Vec<CandidateId>) -> Self {
        let token_estimate = estimate_tokens(&rendered_text);
        Self {
            kind,
            rendered_text,
            source_pool,
            token_estimate,
        }
    }
}

/// Rough token count (four characters per token).
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub reflection: Option<String>,
    pub solution_source: String,
    pub raw: String,
}

/// Prompt text resources with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub init: String,
    pub recombination: String,
    pub pool_entry: String,
    pub mutation: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            init: include_str!("../templates/init.txt").to_string(),
            recombination: include_str!("../templates/recombination.txt").to_string(),
            pool_entry: include_str!("../templates/pool_entry.txt").to_string(),
            mutation: include_str!("../templates/mutation.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Defaults overridden by any of `init.txt`, `recombination.txt`,
    /// `pool_entry.txt` and `mutation.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut templates = Self::default();
        let slots: [(&str, &mut String); 4] = [
            ("init.txt", &mut templates.init),
            ("recombination.txt", &mut templates.recombination),
            ("pool_entry.txt", &mut templates.pool_entry),
            ("mutation.txt", &mut templates.mutation),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(templates)
    }
}

/// Rendering switches that come from the engine configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptOptions {
    pub language: String,
    pub include_buggy_in_recombination: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            language: "Python".to_string(),
            include_buggy_in_recombination: false,
        }
    }
}

impl PromptOptions {
    fn fence(&self) -> String {
        self.language.to_lowercase()
    }
}

/// Single-pass substitution of `{name}` slots. Unknown slots are left as is,
/// and substituted text is never re-scanned.
pub fn fill_template(template: &str, vars: &[(&str, &str)]) -> String {
    let lookup: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name.and_then(|n| lookup.get(n).map(|v| (n, v))) {
            Some((n, value)) => {
                out.push_str(value);
                rest = &after[n.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// One-line behavior summary: `passes k/M tests; fails: [i, j]`.
pub fn behavior_summary(candidate: &EvaluatedCandidate) -> String {
    let failing: Vec<String> = candidate
        .outcome()
        .per_test()
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_pass())
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    format!(
        "passes {}/{} tests; fails: [{}]",
        candidate.signature().len(),
        candidate.suite_size(),
        failing.join(", ")
    )
}

/// Failure records as prompt text, one block per test.
pub fn render_failure_report(records: &[FailureRecord]) -> String {
    let mut out = String::new();
    for (n, record) in records.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Test {}:\n", record.test_index));
        out.push_str(&format!("Input: {}\n", record.failing_input));
        out.push_str(&format!("Expected: {}\n", record.expected));
        let label = match record.category {
            Verdict::RuntimeError => "Runtime error",
            Verdict::Timeout => "Timeout",
            _ => "Actual",
        };
        out.push_str(&format!("{label}: {}\n", record.actual));
    }
    out
}

pub fn render_init_prompt(
    task: &RepairTask,
    templates: &PromptTemplates,
    opts: &PromptOptions,
) -> PromptBundle {
    let fence = opts.fence();
    let failure_section = match &task.initial_error_info {
        Some(info) => format!("\n### Failure Report\n{}\n", info.trim_end()),
        None => String::new(),
    };
    let text = fill_template(
        &templates.init,
        &[
            ("language", &opts.language),
            ("fence", &fence),
            ("question_content", task.problem_statement.trim_end()),
            ("candidate", task.buggy_program.trim_end()),
            ("failure_section", &failure_section),
        ],
    );
    PromptBundle::new(PromptKind::Init, text, Vec::new())
}

/// Pool members are listed in candidate-id order regardless of input order.
pub fn render_recombination_prompt(
    task: &RepairTask,
    pool: &[&EvaluatedCandidate],
    templates: &PromptTemplates,
    opts: &PromptOptions,
) -> Result<PromptBundle, OperatorError> {
    if pool.len() < 2 {
        return Err(OperatorError::PoolTooSmall(pool.len()));
    }
    let fence = opts.fence();
    let mut ordered: Vec<&EvaluatedCandidate> = pool.to_vec();
    ordered.sort_by_key(|c| c.id());
    let mut entries = String::new();
    for (i, candidate) in ordered.iter().enumerate() {
        let index = (i + 1).to_string();
        let behavior = behavior_summary(candidate);
        entries.push_str(&fill_template(
            &templates.pool_entry,
            &[
                ("index", &index),
                ("fence", &fence),
                ("candidate", candidate.source().trim_end()),
                ("behavior", &behavior),
            ],
        ));
    }
    let buggy_section = if opts.include_buggy_in_recombination {
        format!(
            "\n### Original Faulty Program\n```{fence}\n{}\n```\n",
            task.buggy_program.trim_end()
        )
    } else {
        String::new()
    };
    let text = fill_template(
        &templates.recombination,
        &[
            ("language", &opts.language),
            ("fence", &fence),
            ("question_content", task.problem_statement.trim_end()),
            ("buggy_section", &buggy_section),
            ("candidate_pool", &entries),
        ],
    );
    Ok(PromptBundle::new(
        PromptKind::Recombination,
        text,
        ordered.iter().map(|c| c.id()).collect(),
    ))
}

pub fn render_mutation_prompt(
    task: &RepairTask,
    parent: &EvaluatedCandidate,
    report: &[FailureRecord],
    templates: &PromptTemplates,
    opts: &PromptOptions,
) -> Result<PromptBundle, OperatorError> {
    if parent.fitness().is_perfect() {
        return Err(OperatorError::NothingToMutate(parent.id()));
    }
    if report.is_empty() {
        return Err(OperatorError::EmptyFailureReport);
    }
    let fence = opts.fence();
    let failures = render_failure_report(report);
    let text = fill_template(
        &templates.mutation,
        &[
            ("language", &opts.language),
            ("fence", &fence),
            ("question_content", task.problem_statement.trim_end()),
            ("candidate", parent.source().trim_end()),
            ("error_message", failures.trim_end()),
        ],
    );
    Ok(PromptBundle::new(PromptKind::Mutation, text, vec![parent.id()]))
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let rest = &text[start..];
    Some(match rest.find(close) {
        Some(end) => &rest[..end],
        None => rest,
    })
}

/// Extracts the single fenced code block inside `<solution>…</solution>`.
///
/// Text after `</solution>` is ignored, and a missing closing tag is
/// tolerated (the block then runs to the end of the reply). Any language tag
/// on the fence is accepted.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, ParseError> {
    let fail = |reason: &str| ParseError {
        reason: reason.to_string(),
        raw: raw.to_string(),
    };
    let solution = between(raw, "<solution>", "</solution>")
        .ok_or_else(|| fail("response has no <solution> block"))?;

    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in solution.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            None => {
                if trimmed.starts_with("```") {
                    current = Some(Vec::new());
                }
            }
            Some(body) => {
                if trimmed.starts_with("```") && trimmed.chars().all(|c| c == '`') {
                    blocks.push(current.take().expect("open block"));
                } else {
                    body.push(line);
                }
            }
        }
    }
    if current.is_some() {
        return Err(fail("unterminated code block inside <solution>"));
    }
    match blocks.len() {
        0 => Err(fail("no fenced code block inside <solution>")),
        1 => {
            let source = blocks.remove(0).join("\n");
            if source.trim().is_empty() {
                return Err(fail("empty code block inside <solution>"));
            }
            Ok(ParsedResponse {
                reflection: between(raw, "<reflection>", "</reflection>")
                    .map(|r| r.trim().to_string()),
                solution_source: source,
                raw: raw.to_string(),
            })
        }
        n => Err(fail(&format!("{n} code blocks inside <solution>, expected one"))),
    }
}

/// Exact selection probabilities `(F_i + eps) / Σ_j (F_j + eps)` over the
/// candidates that do not yet pass every test. Perfect candidates get 0.
pub fn selection_probabilities(population: &[EvaluatedCandidate], eps: f64) -> Vec<f64> {
    let weights: Vec<f64> = population
        .iter()
        .map(|c| {
            if c.fitness().is_perfect() {
                0.0
            } else {
                c.fitness().as_f64() + eps
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![0.0; population.len()];
    }
    weights.into_iter().map(|w| w / total).collect()
}

/// `count` independent fitness-proportional draws, with replacement.
/// Returns an empty list when no candidate is eligible.
pub fn select_mutation_parents<'a, R: Rng + ?Sized>(
    population: &'a [EvaluatedCandidate],
    count: usize,
    eps: f64,
    rng: &mut R,
) -> Vec<&'a EvaluatedCandidate> {
    let weights: Vec<f64> = population
        .iter()
        .map(|c| {
            if c.fitness().is_perfect() {
                0.0
            } else {
                c.fitness().as_f64() + eps
            }
        })
        .collect();
    let Ok(dist) = WeightedIndex::new(&weights) else {
        return Vec::new();
    };
    (0..count).map(|_| &population[dist.sample(rng)]).collect()
}

/// One generator round trip for an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorAttempt {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchange: Option<GeneratorExchange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorResult {
    pub bundle: PromptBundle,
    pub parsed: Option<ParsedResponse>,
    /// Every generator call made, in order.
    pub attempts: Vec<OperatorAttempt>,
}

impl OperatorResult {
    pub fn source(&self) -> Option<&str> {
        self.parsed.as_ref().map(|p| p.solution_source.as_str())
    }
}

/// Sends `bundle` and parses the reply, re-generating up to `parse_retries`
/// times when the reply does not parse. Transport and backend failures end
/// the operator without a candidate; only fatal generator errors propagate.
pub fn run_operator(
    generator: &dyn Generator,
    bundle: PromptBundle,
    parse_retries: usize,
) -> Result<OperatorResult, GeneratorError> {
    let mut attempts = Vec::new();
    for _ in 0..=parse_retries {
        match generator.generate(&bundle) {
            Ok(exchange) => {
                let parsed = parse_response(&exchange.response_text);
                match parsed {
                    Ok(parsed) => {
                        attempts.push(OperatorAttempt {
                            exchange: Some(exchange),
                            error: None,
                        });
                        return Ok(OperatorResult {
                            bundle,
                            parsed: Some(parsed),
                            attempts,
                        });
                    }
                    Err(e) => attempts.push(OperatorAttempt {
                        exchange: Some(exchange),
                        error: Some(format!("parse error: {}", e.reason)),
                    }),
                }
            }
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                log::warn!("{} operator failed: {e}", bundle.kind.as_str());
                attempts.push(OperatorAttempt {
                    exchange: None,
                    error: Some(e.to_string()),
                });
                break;
            }
        }
    }
    Ok(OperatorResult {
        bundle,
        parsed: None,
        attempts,
    })
}

/// Recombination: one pool in, at most one candidate source out.
pub fn recombine(
    task: &RepairTask,
    pool: &[&EvaluatedCandidate],
    generator: &dyn Generator,
    templates: &PromptTemplates,
    opts: &PromptOptions,
) -> Result<Result<OperatorResult, GeneratorError>, OperatorError> {
    let bundle = render_recombination_prompt(task, pool, templates, opts)?;
    Ok(run_operator(generator, bundle, 1))
}

/// Mutation guided by the parent's first `report_limit` failures.
pub fn mutate(
    task: &RepairTask,
    parent: &EvaluatedCandidate,
    report_limit: usize,
    generator: &dyn Generator,
    templates: &PromptTemplates,
    opts: &PromptOptions,
) -> Result<Result<OperatorResult, GeneratorError>, OperatorError> {
    let report = build_failure_report(parent.outcome(), report_limit);
    let bundle = render_mutation_prompt(task, parent, &report, templates, opts)?;
    Ok(run_operator(generator, bundle, 1))
}
