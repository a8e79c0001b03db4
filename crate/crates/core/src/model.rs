//! Domain types shared by every stage of the search: tasks, test suites,
//! evaluation outcomes, candidates and the engine configuration.
//!
//! Two quantities are derived from an [`EvaluationOutcome`] and nothing else:
//! the [`Fitness`] (pass rate, kept as an exact fraction) and the behavioral
//! [`Signature`] (the set of passed test indices). Both are pure functions of
//! the outcome, so a stored candidate can always be re-derived and checked.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure-report text fields are cut to this many characters.
pub const FAILURE_TEXT_LIMIT: usize = 2_000;

/// Appended to any text shortened by [`truncate_text`].
pub const TRUNCATION_MARKER: &str = "...[truncated]";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("outcome has {actual} verdicts but the suite has {expected} tests")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("test suite must contain at least one test")]
    EmptySuite,
    #[error("test indices must be exactly 1..={len}, found {found} at position {position}")]
    BadTestIndex { len: usize, position: usize, found: usize },
    #[error("test {index} has a zero time limit")]
    ZeroTimeLimit { index: usize },
    #[error("task {task_id} has an empty buggy program")]
    EmptyProgram { task_id: String },
    #[error("failure record for test {index} does not refer to a failing test")]
    StrayFailure { index: usize },
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("candidate {id} is inconsistent with its outcome")]
    InconsistentCandidate { id: CandidateId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    Stdio,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    /// 1-based position in the suite.
    pub index: usize,
    pub input: String,
    pub expected: String,
    pub kind: TestKind,
    pub time_limit_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TestCase>", into = "Vec<TestCase>")]
pub struct TestSuite {
    cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn new(cases: Vec<TestCase>) -> Result<Self, ModelError> {
        if cases.is_empty() {
            return Err(ModelError::EmptySuite);
        }
        for (position, case) in cases.iter().enumerate() {
            if case.index != position + 1 {
                return Err(ModelError::BadTestIndex {
                    len: cases.len(),
                    position,
                    found: case.index,
                });
            }
            if case.time_limit_ms == 0 {
                return Err(ModelError::ZeroTimeLimit { index: case.index });
            }
        }
        Ok(Self { cases })
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    /// Number of tests `M`.
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, index: usize) -> Option<&TestCase> {
        index.checked_sub(1).and_then(|i| self.cases.get(i))
    }
}

impl TryFrom<Vec<TestCase>> for TestSuite {
    type Error = ModelError;

    fn try_from(cases: Vec<TestCase>) -> Result<Self, Self::Error> {
        Self::new(cases)
    }
}

impl From<TestSuite> for Vec<TestCase> {
    fn from(suite: TestSuite) -> Self {
        suite.cases
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTask {
    pub task_id: String,
    pub problem_statement: String,
    pub buggy_program: String,
    pub suite: TestSuite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_error_info: Option<String>,
    /// Function invoked by functional tests; falls back to the evaluator's
    /// configured entry point when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
}

impl RepairTask {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.buggy_program.trim().is_empty() {
            return Err(ModelError::EmptyProgram {
                task_id: self.task_id.clone(),
            });
        }
        TestSuite::new(self.suite.cases.clone()).map(|_| ())
    }
}

/// Per-test verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::WrongOutput => "wrong_output",
            Verdict::RuntimeError => "runtime_error",
            Verdict::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub test_index: usize,
    pub failing_input: String,
    pub expected: String,
    /// Program output, or the error message for crashes and timeouts.
    pub actual: String,
    pub category: Verdict,
}

impl FailureRecord {
    /// Builds a record with every text field bounded by [`FAILURE_TEXT_LIMIT`].
    pub fn new(
        test_index: usize,
        failing_input: &str,
        expected: &str,
        actual: &str,
        category: Verdict,
    ) -> Self {
        Self {
            test_index,
            failing_input: truncate_text(failing_input, FAILURE_TEXT_LIMIT),
            expected: truncate_text(expected, FAILURE_TEXT_LIMIT),
            actual: truncate_text(actual, FAILURE_TEXT_LIMIT),
            category,
        }
    }
}

/// Shortens `text` to at most `limit` characters followed by
/// [`TRUNCATION_MARKER`]. Text within the limit is returned unchanged.
pub fn truncate_text(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        None => text.to_string(),
        Some((cut, _)) => format!("{}{}", &text[..cut], TRUNCATION_MARKER),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    per_test: Vec<Verdict>,
    failures: Vec<FailureRecord>,
}

impl EvaluationOutcome {
    /// `failures` may omit failing tests but must not name passing ones.
    pub fn new(per_test: Vec<Verdict>, failures: Vec<FailureRecord>) -> Result<Self, ModelError> {
        for record in &failures {
            let ok = record
                .test_index
                .checked_sub(1)
                .and_then(|i| per_test.get(i))
                .is_some_and(|v| !v.is_pass() && *v == record.category);
            if !ok {
                return Err(ModelError::StrayFailure {
                    index: record.test_index,
                });
            }
        }
        Ok(Self { per_test, failures })
    }

    /// An outcome where every test fails with the same category and message,
    /// used when the program cannot even start.
    pub fn uniform_failure(suite: &TestSuite, category: Verdict, message: &str) -> Self {
        let per_test = vec![category; suite.len()];
        let failures = suite
            .cases()
            .iter()
            .map(|c| FailureRecord::new(c.index, &c.input, &c.expected, message, category))
            .collect();
        Self { per_test, failures }
    }

    pub fn per_test(&self) -> &[Verdict] {
        &self.per_test
    }

    pub fn failures(&self) -> &[FailureRecord] {
        &self.failures
    }

    pub fn pass_count(&self) -> usize {
        self.per_test.iter().filter(|v| v.is_pass()).count()
    }
}

/// Exact pass rate `passed / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fitness {
    passed: u32,
    total: u32,
}

impl Fitness {
    pub fn new(passed: u32, total: u32) -> Self {
        assert!(total >= 1 && passed <= total, "fitness {passed}/{total}");
        Self { passed, total }
    }

    pub fn passed(self) -> u32 {
        self.passed
    }

    pub fn total(self) -> u32 {
        self.total
    }

    pub fn is_perfect(self) -> bool {
        self.passed == self.total
    }

    /// Reporting projection; ranking uses the exact fraction.
    pub fn as_f64(self) -> f64 {
        f64::from(self.passed) / f64::from(self.total)
    }
}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Fitness {
    /// Compares the fractions exactly, ignoring how they are written.
    pub fn rate_cmp(self, other: Self) -> Ordering {
        let lhs = u64::from(self.passed) * u64::from(other.total);
        let rhs = u64::from(other.passed) * u64::from(self.total);
        lhs.cmp(&rhs)
    }
}

/// By rate, then by passed count, so that equal rates over different suite
/// sizes still order consistently with `Eq`.
impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rate_cmp(*other)
            .then(self.passed.cmp(&other.passed))
            .then(self.total.cmp(&other.total))
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.passed, self.total)
    }
}

/// Pass rate of an outcome against a suite of `m` tests.
pub fn compute_fitness(outcome: &EvaluationOutcome, m: usize) -> Result<Fitness, ModelError> {
    if m == 0 {
        return Err(ModelError::EmptySuite);
    }
    if outcome.per_test.len() != m {
        return Err(ModelError::LengthMismatch {
            expected: m,
            actual: outcome.per_test.len(),
        });
    }
    Ok(Fitness::new(outcome.pass_count() as u32, m as u32))
}

/// Set of 1-based indices of passed tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(BTreeSet<usize>);

impl Signature {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        Self(indices.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_set(&self) -> &BTreeSet<usize> {
        &self.0
    }

    pub fn intersection_len(&self, other: &Signature) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &Signature) -> usize {
        self.0.len() + other.0.len() - self.intersection_len(other)
    }
}

impl FromIterator<usize> for Signature {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::new(iter)
    }
}

pub fn compute_signature(outcome: &EvaluationOutcome) -> Signature {
    outcome
        .per_test
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_pass())
        .map(|(i, _)| i + 1)
        .collect()
}

/// Run-unique candidate identifier, allocated in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateId(pub u64);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{:04}", self.0)
    }
}

impl std::str::FromStr for CandidateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('c')
            .and_then(|n| n.parse().ok())
            .map(CandidateId)
            .ok_or_else(|| format!("bad candidate id {s:?}"))
    }
}

impl Serialize for CandidateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CandidateId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineageKind {
    /// The buggy program itself.
    Seed,
    Init,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub kind: LineageKind,
    pub parents: Vec<CandidateId>,
}

impl Lineage {
    pub fn root(kind: LineageKind) -> Self {
        Self {
            kind,
            parents: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatedCandidate {
    id: CandidateId,
    source: String,
    signature: Signature,
    fitness: Fitness,
    outcome: EvaluationOutcome,
    lineage: Lineage,
    generation_born: usize,
}

impl EvaluatedCandidate {
    /// Signature and fitness are derived from `outcome`.
    pub fn new(
        id: CandidateId,
        source: String,
        outcome: EvaluationOutcome,
        lineage: Lineage,
        generation_born: usize,
    ) -> Result<Self, ModelError> {
        let fitness = compute_fitness(&outcome, outcome.per_test.len())?;
        let signature = compute_signature(&outcome);
        Ok(Self {
            id,
            source,
            signature,
            fitness,
            outcome,
            lineage,
            generation_born,
        })
    }

    pub fn id(&self) -> CandidateId {
        self.id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn fitness(&self) -> Fitness {
        self.fitness
    }

    pub fn outcome(&self) -> &EvaluationOutcome {
        &self.outcome
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn generation_born(&self) -> usize {
        self.generation_born
    }

    /// Suite size `M` this candidate was evaluated against.
    pub fn suite_size(&self) -> usize {
        self.outcome.per_test.len()
    }

    /// Checks that stored signature and fitness match the stored outcome.
    pub fn verify(&self) -> Result<(), ModelError> {
        let m = self.outcome.per_test.len();
        let consistent = compute_fitness(&self.outcome, m).ok() == Some(self.fitness)
            && compute_signature(&self.outcome) == self.signature;
        if consistent {
            Ok(())
        } else {
            Err(ModelError::InconsistentCandidate { id: self.id })
        }
    }

    /// Ranking used for survivor selection and best-so-far tracking:
    /// pass rate, then passed-test count (both descending), then normalized
    /// source length and id (ascending). `Less` means `self` ranks higher.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .fitness
            .cmp(&self.fitness)
            .then_with(|| other.fitness.passed.cmp(&self.fitness.passed))
            .then_with(|| source_len(&self.source).cmp(&source_len(&other.source)))
            .then_with(|| self.id.cmp(&other.id))
    }
}

fn source_len(source: &str) -> usize {
    normalize_source(source).chars().count()
}

/// Canonical form used to detect duplicate programs: LF line endings,
/// trailing whitespace removed from every line, and no leading or trailing
/// blank lines.
pub fn normalize_source(source: &str) -> String {
    let unified = source.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    let start = lines.iter().position(|l| !l.is_empty());
    let end = lines.iter().rposition(|l| !l.is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub generation: usize,
    pub members: Vec<EvaluatedCandidate>,
    pub target_size: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&EvaluatedCandidate> {
        self.members.iter().min_by(|a, b| a.rank_cmp(b))
    }

    pub fn ids(&self) -> Vec<CandidateId> {
        self.members.iter().map(|c| c.id).collect()
    }
}

/// Search hyperparameters. Defaults are `(α, β, γ, δ, ε, η) = (5, 6, 2, 2, 3, 3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Maximum evolutionary turns `G`.
    pub max_turns: usize,
    /// Target population size `N`.
    pub init_population: usize,
    /// Maximum behavior groups `K_max`.
    pub behavior_groups: usize,
    /// Mixed groups built per turn `M_mix`.
    pub crossing_groups: usize,
    /// Target size `E` of each mixed group.
    pub candidates_per_crossing_group: usize,
    /// Mutation operations per turn.
    pub mutations_per_turn: usize,
    /// Stabilizer inside the group diversity logarithm.
    pub entropy_epsilon: f64,
    /// Additive smoothing in fitness-proportional parent selection.
    pub selection_epsilon: f64,
    pub rng_seed: u64,
    /// Init prompt attempts; `None` means twice the population size.
    pub init_attempt_budget: Option<usize>,
    /// Generator calls allowed for the greedy-refinement baseline.
    pub greedy_attempt_budget: usize,
    /// Language named in prompts.
    pub language: String,
    /// Adds the original buggy program to recombination prompts.
    pub include_buggy_in_recombination: bool,
    /// Failure records shown per mutation prompt.
    pub max_failures_in_report: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_turns: 5,
            init_population: 6,
            behavior_groups: 2,
            crossing_groups: 2,
            candidates_per_crossing_group: 3,
            mutations_per_turn: 3,
            entropy_epsilon: 1e-9,
            selection_epsilon: 0.01,
            rng_seed: 0,
            init_attempt_budget: None,
            greedy_attempt_budget: 41,
            language: "Python".to_string(),
            include_buggy_in_recombination: false,
            max_failures_in_report: 3,
        }
    }
}

impl EngineConfig {
    pub fn effective_init_budget(&self) -> usize {
        self.init_attempt_budget
            .unwrap_or(2 * self.init_population)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("max_turns", self.max_turns),
            ("init_population", self.init_population),
            ("behavior_groups", self.behavior_groups),
            ("candidates_per_crossing_group", self.candidates_per_crossing_group),
            ("mutations_per_turn", self.mutations_per_turn),
            ("init_attempt_budget", self.effective_init_budget()),
            ("greedy_attempt_budget", self.greedy_attempt_budget),
            ("max_failures_in_report", self.max_failures_in_report),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        let positive = [
            ("entropy_epsilon", self.entropy_epsilon),
            ("selection_epsilon", self.selection_epsilon),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
