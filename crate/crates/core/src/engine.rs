//! The search loop: initialization, behavioral grouping, cross-group
//! sampling, recombination, mutation and survivor selection, plus the
//! naive-prompting and greedy-refinement comparison modes.
//!
//! Every run produces a [`RunReport`] that holds all candidates and every
//! generator exchange, enough to recompute the metrics offline.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{evaluate_many, EvalError, Evaluator};
use crate::generator::{Generator, GeneratorError, GeneratorExchange};
use crate::grouping::{behavioral_grouping, GroupSet, GroupingError};
use crate::model::{
    normalize_source, CandidateId, EngineConfig, EvaluatedCandidate, EvaluationOutcome, Fitness,
    Lineage, LineageKind, ModelError, Population, RepairTask, Verdict,
};
use crate::operators::{
    render_init_prompt, render_mutation_prompt, render_recombination_prompt, run_operator,
    select_mutation_parents, OperatorResult, PromptBundle, PromptKind, PromptOptions,
    PromptTemplates,
};
use crate::evaluator::build_failure_report;
use crate::sampling::{build_mixed_groups, MixedGroupPlan};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Evolve,
    Naive,
    Greedy,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Evolve => "evolve",
            Method::Naive => "naive",
            Method::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Solved,
    BudgetExhausted,
    GenerationsExhausted,
}

/// One generator call made on behalf of an operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOrigin {
    /// A behavior group used directly as a recombination pool.
    Behavior,
    /// A mixed group drawn across behavior groups.
    Mixed,
    /// A single mutation parent.
    Mutation,
    /// An initialization prompt.
    Init,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub kind: PromptKind,
    pub origin: PoolOrigin,
    pub parents: Vec<CandidateId>,
    pub attempts: Vec<AttemptRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child: Option<CandidateId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitRecord {
    pub seed: Option<CandidateId>,
    pub operations: Vec<OperationRecord>,
    pub population: Vec<CandidateId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub population: Vec<CandidateId>,
    pub groups: GroupSet,
    pub mixed_plan: MixedGroupPlan,
    pub operations: Vec<OperationRecord>,
    /// Next population; empty when the generation ended in a solve.
    pub survivors: Vec<CandidateId>,
    pub best_fitness: Fitness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: Method,
    pub task_id: String,
    pub run_index: usize,
    pub seed: u64,
    pub config: EngineConfig,
    pub suite_size: usize,
    pub termination: Termination,
    pub solved: bool,
    pub best_candidate: Option<CandidateId>,
    /// Every candidate evaluated during the run, in creation order.
    pub candidates: Vec<EvaluatedCandidate>,
    pub init: Option<InitRecord>,
    pub generations: Vec<GenerationRecord>,
    /// Greedy-refinement steps, one per generator call.
    pub refinements: Vec<OperationRecord>,
    pub exchanges: Vec<GeneratorExchange>,
    pub generator_calls: usize,
    pub failed_calls: usize,
    /// Best fitness after initialization and after each generation or step.
    pub best_fitness_trace: Vec<Fitness>,
    pub warnings: Vec<String>,
    pub wall_clock_ms: u64,
    /// Effective experiment configuration, filled in by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
}

impl RunReport {
    pub fn candidate(&self, id: CandidateId) -> Option<&EvaluatedCandidate> {
        self.candidates.iter().find(|c| c.id() == id)
    }

    pub fn best(&self) -> Option<&EvaluatedCandidate> {
        self.best_candidate.and_then(|id| self.candidate(id))
    }

    /// Candidates produced by the generator, excluding the seed.
    pub fn generated(&self) -> impl Iterator<Item = &EvaluatedCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.lineage().kind != LineageKind::Seed)
    }

    /// All operation records in call order.
    pub fn operations(&self) -> impl Iterator<Item = &OperationRecord> {
        self.init
            .iter()
            .flat_map(|i| i.operations.iter())
            .chain(self.generations.iter().flat_map(|g| g.operations.iter()))
            .chain(self.refinements.iter())
    }

    /// Zeroes the fields that depend on wall-clock time.
    pub fn without_timings(&self) -> RunReport {
        let mut copy = self.clone();
        copy.wall_clock_ms = 0;
        for e in &mut copy.exchanges {
            e.latency_ms = 0;
        }
        copy
    }
}

/// `TopN(Unique(pool))`: one representative per normalized source (the best
/// ranked), ordered by the ranking key, truncated to `n`.
pub fn survivor_selection(pool: &[EvaluatedCandidate], n: usize) -> Vec<EvaluatedCandidate> {
    let mut ranked: Vec<&EvaluatedCandidate> = pool.iter().collect();
    ranked.sort_by(|a, b| a.rank_cmp(b));
    let mut seen = std::collections::HashSet::new();
    ranked
        .into_iter()
        .filter(|c| seen.insert(normalize_source(c.source())))
        .take(n)
        .cloned()
        .collect()
}

struct Job {
    bundle: PromptBundle,
    origin: PoolOrigin,
    parents: Vec<CandidateId>,
    lineage: LineageKind,
    parse_retries: usize,
}

/// Search state of one run. Construct with [`Engine::new`] and consume with
/// one of [`Engine::run`], [`Engine::baseline_naive`] or
/// [`Engine::baseline_greedy`].
pub struct Engine<'a> {
    task: &'a RepairTask,
    cfg: &'a EngineConfig,
    generator: &'a dyn Generator,
    evaluator: &'a dyn Evaluator,
    templates: PromptTemplates,
    opts: PromptOptions,
    run_index: usize,
    started: Instant,
    rng: ChaCha8Rng,
    next_id: u64,
    candidates: Vec<EvaluatedCandidate>,
    by_id: HashMap<CandidateId, usize>,
    outcomes: HashMap<String, EvaluationOutcome>,
    best: Option<usize>,
    exchanges: Vec<GeneratorExchange>,
    failed_calls: usize,
    warnings: Vec<String>,
}

impl<'a> Engine<'a> {
    pub fn new(
        task: &'a RepairTask,
        cfg: &'a EngineConfig,
        generator: &'a dyn Generator,
        evaluator: &'a dyn Evaluator,
    ) -> Self {
        Self {
            task,
            cfg,
            generator,
            evaluator,
            templates: PromptTemplates::default(),
            opts: PromptOptions {
                language: cfg.language.clone(),
                include_buggy_in_recombination: cfg.include_buggy_in_recombination,
            },
            run_index: 0,
            started: Instant::now(),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            next_id: 0,
            candidates: Vec::new(),
            by_id: HashMap::new(),
            outcomes: HashMap::new(),
            best: None,
            exchanges: Vec::new(),
            failed_calls: 0,
            warnings: Vec::new(),
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_run_index(mut self, run_index: usize) -> Self {
        self.run_index = run_index;
        self
    }

    fn check(&self) -> Result<(), EngineError> {
        self.cfg.validate()?;
        self.task.validate()?;
        Ok(())
    }

    fn candidate(&self, id: CandidateId) -> &EvaluatedCandidate {
        &self.candidates[self.by_id[&id]]
    }

    fn best(&self) -> Option<&EvaluatedCandidate> {
        self.best.map(|i| &self.candidates[i])
    }

    fn solved(&self) -> bool {
        self.best().is_some_and(|c| c.fitness().is_perfect())
    }

    fn best_fitness(&self) -> Fitness {
        self.best()
            .map(|c| c.fitness())
            .unwrap_or(Fitness::new(0, self.task.suite.len() as u32))
    }

    /// Evaluates and registers new candidates, in order. Sources already
    /// seen in this run reuse their stored outcome.
    fn admit(
        &mut self,
        items: Vec<(String, Lineage)>,
        generation: usize,
    ) -> Result<Vec<CandidateId>, EngineError> {
        let mut pending: Vec<String> = Vec::new();
        let mut pending_keys: Vec<String> = Vec::new();
        for (source, _) in &items {
            let key = normalize_source(source);
            if !self.outcomes.contains_key(&key) && !pending_keys.contains(&key) {
                pending.push(source.clone());
                pending_keys.push(key);
            }
        }
        let results = evaluate_many(self.evaluator, self.task, &pending);
        for (key, result) in pending_keys.into_iter().zip(results) {
            let outcome = match result {
                Ok(outcome) => outcome,
                Err(EvalError::InvalidSynthetic(msg)) => {
                    self.warnings.push(format!("candidate rejected by synthetic evaluator: {msg}"));
                    EvaluationOutcome::uniform_failure(&self.task.suite, Verdict::RuntimeError, &msg)
                }
                Err(e) => return Err(e.into()),
            };
            self.outcomes.insert(key, outcome);
        }
        let mut ids = Vec::with_capacity(items.len());
        for (source, lineage) in items {
            let outcome = self.outcomes[&normalize_source(&source)].clone();
            let id = CandidateId(self.next_id);
            self.next_id += 1;
            let candidate = EvaluatedCandidate::new(id, source, outcome, lineage, generation)?;
            let index = self.candidates.len();
            let better = self
                .best()
                .is_none_or(|b| candidate.rank_cmp(b) == std::cmp::Ordering::Less);
            self.candidates.push(candidate);
            self.by_id.insert(id, index);
            if better {
                self.best = Some(index);
            }
            ids.push(id);
        }
        Ok(ids)
    }

    /// Issues the jobs with at most `max_in_flight` calls at once, then
    /// numbers the exchanges in job order.
    fn dispatch(&mut self, jobs: Vec<Job>) -> Result<Vec<(Job, OperatorResult, Vec<AttemptRecord>)>, EngineError> {
        let width = self.generator.max_in_flight().max(1).min(jobs.len());
        let generator = self.generator;
        let results: Vec<Result<OperatorResult, GeneratorError>> = if width <= 1 {
            jobs.iter()
                .map(|j| run_operator(generator, j.bundle.clone(), j.parse_retries))
                .collect()
        } else {
            let next = AtomicUsize::new(0);
            let slots: Vec<Mutex<Option<Result<OperatorResult, GeneratorError>>>> =
                jobs.iter().map(|_| Mutex::new(None)).collect();
            std::thread::scope(|scope| {
                for _ in 0..width {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(job) = jobs.get(i) else { break };
                        let r = run_operator(generator, job.bundle.clone(), job.parse_retries);
                        *slots[i].lock().expect("slot") = Some(r);
                    });
                }
            });
            slots
                .into_iter()
                .map(|s| s.into_inner().expect("slot").expect("filled"))
                .collect()
        };
        let mut out = Vec::with_capacity(jobs.len());
        for (job, result) in jobs.into_iter().zip(results) {
            let mut result = result?;
            let mut records = Vec::with_capacity(result.attempts.len());
            for attempt in std::mem::take(&mut result.attempts) {
                if attempt.error.is_some() {
                    self.failed_calls += 1;
                }
                let request_id = attempt.exchange.map(|mut e| {
                    let id = self.exchanges.len() as u64;
                    e.request_id = id;
                    self.exchanges.push(e);
                    id
                });
                records.push(AttemptRecord {
                    request_id,
                    error: attempt.error,
                });
            }
            out.push((job, result, records));
        }
        Ok(out)
    }

    /// Runs the jobs and admits every parsed child; returns the operation
    /// records with children filled in.
    fn execute(&mut self, jobs: Vec<Job>, generation: usize) -> Result<Vec<OperationRecord>, EngineError> {
        let finished = self.dispatch(jobs)?;
        let mut records = Vec::with_capacity(finished.len());
        let mut children = Vec::new();
        for (job, result, attempts) in finished {
            let reflection = result.parsed.as_ref().and_then(|p| p.reflection.clone());
            if let Some(source) = result.source() {
                children.push((
                    records.len(),
                    source.to_string(),
                    Lineage {
                        kind: job.lineage,
                        parents: job.parents.clone(),
                    },
                ));
            }
            records.push(OperationRecord {
                kind: job.bundle.kind,
                origin: job.origin,
                parents: job.parents,
                attempts,
                child: None,
                reflection,
            });
        }
        let slots: Vec<usize> = children.iter().map(|(i, _, _)| *i).collect();
        let ids = self.admit(
            children.into_iter().map(|(_, s, l)| (s, l)).collect(),
            generation,
        )?;
        for (slot, id) in slots.into_iter().zip(ids) {
            records[slot].child = Some(id);
        }
        Ok(records)
    }

    fn init_job(&self) -> Job {
        Job {
            bundle: render_init_prompt(self.task, &self.templates, &self.opts),
            origin: PoolOrigin::Init,
            parents: Vec::new(),
            lineage: LineageKind::Init,
            parse_retries: 0,
        }
    }

    fn admit_seed(&mut self) -> Result<CandidateId, EngineError> {
        let id = self.admit(
            vec![(self.task.buggy_program.clone(), Lineage::root(LineageKind::Seed))],
            0,
        )?[0];
        if self.candidate(id).fitness().is_perfect() {
            self.warnings.push("the buggy program already passes every test".to_string());
        }
        Ok(id)
    }

    /// Seeds the run with the buggy program, then issues init prompts until
    /// `N` parse-valid candidates exist or the attempt budget is spent.
    /// Stops early at the first candidate that passes every test.
    pub fn initialize_population(&mut self) -> Result<(Population, InitRecord), EngineError> {
        let n = self.cfg.init_population;
        let budget = self.cfg.effective_init_budget();
        let seed = self.admit_seed()?;
        let mut operations = Vec::new();
        let mut valid = 0;
        let mut attempts = 0;
        while !self.solved() && valid < n && attempts < budget {
            let wave = self
                .generator
                .max_in_flight()
                .max(1)
                .min(n - valid)
                .min(budget - attempts);
            let jobs = (0..wave).map(|_| self.init_job()).collect();
            let records = self.execute(jobs, 0)?;
            attempts += records.iter().map(|r| r.attempts.len()).sum::<usize>();
            valid += records.iter().filter(|r| r.child.is_some()).count();
            operations.extend(records);
        }
        if valid == 0 {
            self.warnings.push(format!(
                "no parse-valid initialization candidate after {attempts} attempts; continuing from the seed"
            ));
        }
        let mut pool: Vec<EvaluatedCandidate> = vec![self.candidate(seed).clone()];
        pool.extend(
            operations
                .iter()
                .filter_map(|r| r.child)
                .map(|id| self.candidate(id).clone()),
        );
        let members = survivor_selection(&pool, n);
        let population = Population {
            generation: 0,
            members,
            target_size: n,
        };
        let record = InitRecord {
            seed: Some(seed),
            operations,
            population: population.ids(),
        };
        Ok((population, record))
    }

    /// One turn of the loop. Returns the record and the next population, or
    /// `None` for the population when a child solved the task.
    pub fn evolve_generation(
        &mut self,
        population: &Population,
    ) -> Result<(GenerationRecord, Option<Population>), EngineError> {
        let g = population.generation;
        let (groups, sim) =
            behavioral_grouping(&population.members, self.cfg.behavior_groups, g)?;
        let mixed_plan = build_mixed_groups(
            &groups,
            &sim,
            self.cfg.crossing_groups,
            self.cfg.candidates_per_crossing_group,
            self.cfg.entropy_epsilon,
            &mut self.rng,
        );
        let parents: Vec<CandidateId> = select_mutation_parents(
            &population.members,
            self.cfg.mutations_per_turn,
            self.cfg.selection_epsilon,
            &mut self.rng,
        )
        .into_iter()
        .map(|c| c.id())
        .collect();

        let mut jobs = Vec::new();
        let pools = groups
            .groups
            .iter()
            .map(|p| (PoolOrigin::Behavior, p))
            .chain(mixed_plan.mixed_groups.iter().map(|p| (PoolOrigin::Mixed, p)));
        for (origin, pool) in pools {
            if pool.len() < 2 {
                continue;
            }
            let members: Vec<&EvaluatedCandidate> = pool.iter().map(|&id| self.candidate(id)).collect();
            let bundle = render_recombination_prompt(self.task, &members, &self.templates, &self.opts)
                .expect("pool has two members");
            jobs.push(Job {
                parents: bundle.source_pool.clone(),
                bundle,
                origin,
                lineage: LineageKind::Crossover,
                parse_retries: 1,
            });
        }
        for id in parents {
            let parent = self.candidate(id);
            let report = build_failure_report(parent.outcome(), self.cfg.max_failures_in_report);
            match render_mutation_prompt(self.task, parent, &report, &self.templates, &self.opts) {
                Ok(bundle) => jobs.push(Job {
                    bundle,
                    origin: PoolOrigin::Mutation,
                    parents: vec![id],
                    lineage: LineageKind::Mutation,
                    parse_retries: 1,
                }),
                Err(e) => self.warnings.push(format!("mutation of {id} skipped: {e}")),
            }
        }

        let operations = self.execute(jobs, g + 1)?;
        let mut union = population.members.clone();
        union.extend(
            operations
                .iter()
                .filter_map(|r| r.child)
                .map(|id| self.candidate(id).clone()),
        );
        let next = if self.solved() {
            None
        } else {
            Some(Population {
                generation: g + 1,
                members: survivor_selection(&union, self.cfg.init_population),
                target_size: self.cfg.init_population,
            })
        };
        let record = GenerationRecord {
            generation: g,
            population: population.ids(),
            groups,
            mixed_plan,
            operations,
            survivors: next.as_ref().map(Population::ids).unwrap_or_default(),
            best_fitness: self.best_fitness(),
        };
        Ok((record, next))
    }

    fn finish(
        self,
        method: Method,
        termination: Termination,
        init: Option<InitRecord>,
        generations: Vec<GenerationRecord>,
        refinements: Vec<OperationRecord>,
        best_fitness_trace: Vec<Fitness>,
    ) -> RunReport {
        let generator_calls = init
            .iter()
            .flat_map(|i| i.operations.iter())
            .chain(generations.iter().flat_map(|g| g.operations.iter()))
            .chain(refinements.iter())
            .map(|r| r.attempts.len())
            .sum();
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            method,
            task_id: self.task.task_id.clone(),
            run_index: self.run_index,
            seed: self.cfg.rng_seed,
            config: self.cfg.clone(),
            suite_size: self.task.suite.len(),
            termination,
            solved: self.solved(),
            best_candidate: self.best().map(|c| c.id()),
            candidates: self.candidates,
            init,
            generations,
            refinements,
            exchanges: self.exchanges,
            generator_calls,
            failed_calls: self.failed_calls,
            best_fitness_trace,
            warnings: self.warnings,
            wall_clock_ms: self.started.elapsed().as_millis() as u64,
            experiment: None,
        }
    }

    /// Initialization followed by at most `max_turns` generations.
    pub fn run(mut self) -> Result<RunReport, EngineError> {
        self.check()?;
        let (mut population, init) = self.initialize_population()?;
        let mut trace = vec![self.best_fitness()];
        let mut generations = Vec::new();
        let mut termination = Termination::GenerationsExhausted;
        if self.solved() {
            termination = Termination::Solved;
        } else {
            for _ in 0..self.cfg.max_turns {
                let (record, next) = self.evolve_generation(&population)?;
                generations.push(record);
                trace.push(self.best_fitness());
                match next {
                    Some(p) => population = p,
                    None => {
                        termination = Termination::Solved;
                        break;
                    }
                }
            }
        }
        Ok(self.finish(Method::Evolve, termination, Some(init), generations, Vec::new(), trace))
    }

    /// A single init-prompt call, no seed and no search.
    pub fn baseline_naive(mut self) -> Result<RunReport, EngineError> {
        self.check()?;
        let operations = self.execute(vec![self.init_job()], 0)?;
        let population = operations.iter().filter_map(|r| r.child).collect();
        let init = InitRecord {
            seed: None,
            operations,
            population,
        };
        let trace = vec![self.best_fitness()];
        let termination = if self.solved() {
            Termination::Solved
        } else {
            Termination::BudgetExhausted
        };
        Ok(self.finish(Method::Naive, termination, Some(init), Vec::new(), Vec::new(), trace))
    }

    /// Repeatedly mutates the current best candidate from its failure
    /// report, keeping a child only when it ranks strictly higher. Each
    /// generator call spends one unit of `greedy_attempt_budget`.
    pub fn baseline_greedy(mut self) -> Result<RunReport, EngineError> {
        self.check()?;
        let seed = self.admit_seed()?;
        let mut current = seed;
        let mut trace = vec![self.best_fitness()];
        let mut steps = Vec::new();
        let mut calls = 0;
        while !self.solved() && calls < self.cfg.greedy_attempt_budget {
            let parent = self.candidate(current);
            let report = build_failure_report(parent.outcome(), self.cfg.max_failures_in_report);
            let bundle = render_mutation_prompt(self.task, parent, &report, &self.templates, &self.opts)
                .expect("unsolved parent has failures");
            let job = Job {
                bundle,
                origin: PoolOrigin::Mutation,
                parents: vec![current],
                lineage: LineageKind::Mutation,
                parse_retries: 0,
            };
            let record = self.execute(vec![job], steps.len() + 1)?.remove(0);
            calls += record.attempts.len();
            if let Some(child) = record.child {
                if self.candidate(child).rank_cmp(self.candidate(current)) == std::cmp::Ordering::Less {
                    current = child;
                }
            }
            steps.push(record);
            trace.push(self.candidate(current).fitness());
        }
        let termination = if self.solved() {
            Termination::Solved
        } else {
            Termination::BudgetExhausted
        };
        let init = InitRecord {
            seed: Some(seed),
            operations: Vec::new(),
            population: vec![seed],
        };
        Ok(self.finish(Method::Greedy, termination, Some(init), Vec::new(), steps, trace))
    }

    pub fn run_method(self, method: Method) -> Result<RunReport, EngineError> {
        match method {
            Method::Evolve => self.run(),
            Method::Naive => self.baseline_naive(),
            Method::Greedy => self.baseline_greedy(),
        }
    }
}

pub fn run(
    task: &RepairTask,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    evaluator: &dyn Evaluator,
) -> Result<RunReport, EngineError> {
    Engine::new(task, cfg, generator, evaluator).run()
}

pub fn baseline_naive(
    task: &RepairTask,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    evaluator: &dyn Evaluator,
) -> Result<RunReport, EngineError> {
    Engine::new(task, cfg, generator, evaluator).baseline_naive()
}

pub fn baseline_greedy(
    task: &RepairTask,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    evaluator: &dyn Evaluator,
) -> Result<RunReport, EngineError> {
    Engine::new(task, cfg, generator, evaluator).baseline_greedy()
}
