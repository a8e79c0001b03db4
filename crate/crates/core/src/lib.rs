//! Population-based program repair driven by test-suite behavior.
//!
//! A run keeps a population of candidate programs, clusters them by the set
//! of tests they pass, recombines candidates within and across clusters
//! through a pluggable [`generator::Generator`], mutates weak candidates
//! using their failure reports, and keeps the best unique programs until one
//! passes the whole suite.
//!
//! ```
//! use popfix::prelude::*;
//!
//! let a = Signature::new([1, 2, 3]);
//! let b = Signature::new([2, 3, 4]);
//! assert_eq!(jaccard_similarity(&a, &b), 0.5);
//! assert_eq!(effective_group_count(6, 2), 2);
//! ```

pub mod dataset;
pub mod engine;
pub mod evaluator;
pub mod generator;
pub mod grouping;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod sampling;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/candidates.md")]
mod book_candidates {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/grouping.md")]
mod book_grouping {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/sampling.md")]
mod book_sampling {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/operators.md")]
mod book_operators {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/running.md")]
mod book_running {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/replay.md")]
mod book_replay {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluators.md")]
mod book_evaluators {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
mod book_metrics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

pub mod prelude {
    pub use crate::dataset::{load_dataset, parse_dataset};
    pub use crate::engine::{
        baseline_greedy, baseline_naive, run, survivor_selection, Engine, EngineError, Method,
        RunReport, Termination,
    };
    pub use crate::evaluator::{
        build_evaluator, Evaluator, EvaluatorConfig, EvaluatorMode, SyntheticEvaluator,
        SyntheticProgramSpec,
    };
    pub use crate::generator::{
        build_generator, BackendConfig, BackendKind, Generator, GeneratorExchange, ReplayGenerator,
        Script, ScriptRule, ScriptedGenerator,
    };
    pub use crate::grouping::{
        behavioral_grouping, cluster, effective_group_count, jaccard_similarity, GroupSet,
        SimilarityMatrix,
    };
    pub use crate::metrics::{
        avg_pass_rate, combination_indicator, combination_rate, compute_metrics, coverage_gap,
        pass_at_k, test_case_coverage, Combination, MetricsInput, PassAtKEstimator,
    };
    pub use crate::model::{
        compute_fitness, compute_signature, CandidateId, EngineConfig, EvaluatedCandidate,
        EvaluationOutcome, Fitness, Lineage, LineageKind, RepairTask, Signature, TestCase,
        TestKind, TestSuite, Verdict,
    };
    pub use crate::operators::{parse_response, PromptKind};
    pub use crate::sampling::{allocate_samples, build_mixed_groups, group_entropy, Allocation};
}
