use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use popfix::dataset::load_dataset;
use popfix::engine::{Engine, RunReport};
use popfix::evaluator::{build_evaluator, Evaluator, EvaluatorConfig};
use popfix::generator::{build_generator, read_exchanges, BackendKind, Generator, RecordingGenerator};
use popfix::metrics::{compute_metrics, render_table, traces_csv, MetricsInput, PassAtKEstimator};
use popfix::model::{Fitness, RepairTask};
use popfix::operators::PromptTemplates;
use walkdir::WalkDir;

use crate::config::{CliError, ExperimentConfig};

/// Writes through a sibling temp file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let env = |e: std::io::Error| CliError::Environment(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(env)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(env)?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(env)?;
    std::fs::rename(&tmp, path).map_err(env)
}

fn load_tasks(cfg: &ExperimentConfig) -> Result<Vec<RepairTask>, CliError> {
    let path = cfg.dataset.as_ref().expect("validated");
    let tasks = load_dataset(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut selected = Vec::new();
    for task in tasks {
        if cfg.selects(&task.task_id)? {
            selected.push(task);
        }
    }
    if selected.is_empty() {
        return Err(CliError::Config("no task matches the task filter".into()));
    }
    Ok(selected)
}

fn run_one(
    cfg: &ExperimentConfig,
    effective: &serde_json::Value,
    task: &RepairTask,
    run_index: usize,
    templates: &PromptTemplates,
    evaluator: &dyn Evaluator,
) -> Result<RunReport, CliError> {
    let mut backend = cfg.backend_for(&task.task_id, run_index);
    let generator: Box<dyn Generator> = match (backend.backend, backend.cache_path.take()) {
        (BackendKind::Replay, path) => {
            backend.cache_path = path;
            build_generator(&backend)?
        }
        (_, Some(path)) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Environment(format!("{}: {e}", dir.display())))?;
            }
            // One log per run; a rerun starts it afresh.
            let _ = std::fs::remove_file(&path);
            Box::new(RecordingGenerator::create(build_generator(&backend)?, &path)?)
        }
        (_, None) => build_generator(&backend)?,
    };
    let engine_cfg = cfg.engine_for(&task.task_id, run_index);
    let mut report = Engine::new(task, &engine_cfg, generator.as_ref(), evaluator)
        .with_templates(templates.clone())
        .with_run_index(run_index)
        .run_method(cfg.method)?;
    report.experiment = Some(effective.clone());
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    write_atomic(&cfg.report_path(&task.task_id, run_index), &json)?;
    Ok(report)
}

struct RunOutcome {
    solved: bool,
    best: Option<Fitness>,
    calls: usize,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let tasks = load_tasks(cfg)?;
    let templates = match &cfg.templates_dir {
        Some(dir) => PromptTemplates::from_dir(dir)
            .map_err(|e| CliError::Config(format!("templates {}: {e}", dir.display())))?,
        None => PromptTemplates::default(),
    };
    let evaluator = build_evaluator(&cfg.evaluator)?;
    let effective = serde_json::to_value(cfg).expect("config serializes");

    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..cfg.runs_per_task).map(move |r| (t, r)))
        .collect();
    let results: Mutex<Vec<Option<Result<RunOutcome, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(t, r)) = jobs.get(i) else { break };
                let task = &tasks[t];
                log::info!("{} run {r}: starting", task.task_id);
                let out = run_one(cfg, &effective, task, r, &templates, evaluator.as_ref()).map(|rep| {
                    RunOutcome {
                        solved: rep.solved,
                        best: rep.best().map(|c| c.fitness()),
                        calls: rep.generator_calls,
                    }
                });
                results.lock().expect("results")[i] = Some(out);
            });
        }
    });

    let results = results.into_inner().expect("results");
    let mut first_error: Option<CliError> = None;
    for (t, task) in tasks.iter().enumerate() {
        let mut solved = 0;
        let mut best: Option<Fitness> = None;
        let mut calls = 0;
        let mut failed = 0;
        for (i, &(jt, _)) in jobs.iter().enumerate() {
            if jt != t {
                continue;
            }
            match results[i].as_ref().expect("every job ran") {
                Ok(o) => {
                    solved += o.solved as usize;
                    calls += o.calls;
                    if let Some(f) = o.best {
                        best = Some(best.map_or(f, |b| b.max(f)));
                    }
                }
                Err(_) => failed += 1,
            }
        }
        let best = best.map_or_else(|| "-".to_string(), |f| f.to_string());
        let mut line = format!(
            "{}: solved {solved}/{} best {best} calls {calls}",
            task.task_id, cfg.runs_per_task
        );
        if failed > 0 {
            line.push_str(&format!(" errors {failed}"));
        }
        println!("{line}");
    }
    for r in results.into_iter().flatten() {
        if let Err(e) = r {
            eprintln!("{e}");
            if first_error.as_ref().is_none_or(|f| e.exit_code() > f.exit_code()) {
                first_error = Some(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

pub struct MetricsArgs {
    pub reports_dir: PathBuf,
    pub ks: Vec<usize>,
    pub estimator: PassAtKEstimator,
    pub output: Option<PathBuf>,
    pub csv_traces: Option<PathBuf>,
}

/// Every `RunReport` below `dir`, in path order.
pub fn read_reports(dir: &Path) -> Result<Vec<RunReport>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", dir.display())));
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "metrics.json"))
        .collect();
    paths.sort();
    let mut reports = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)
            .map_err(|e| CliError::Environment(format!("{}: {e}", p.display())))?;
        let report: RunReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{} is not a run report: {e}", p.display())))?;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(CliError::Config(format!("no run reports under {}", dir.display())));
    }
    Ok(reports)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let reports = read_reports(&args.reports_dir)?;
    let input = MetricsInput::from_reports(&reports);
    let metrics = compute_metrics(&input, &args.ks, args.estimator).map_err(|e| CliError::Config(e.to_string()))?;
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| args.reports_dir.join("metrics.json"));
    let json = serde_json::to_vec_pretty(&metrics).expect("metrics serialize");
    write_atomic(&output, &json)?;
    print!("{}", render_table(&metrics));
    if let Some(csv) = &args.csv_traces {
        write_atomic(csv, traces_csv(&reports).as_bytes())?;
    }
    Ok(())
}

pub struct ValidateArgs {
    pub dataset: PathBuf,
    pub execute: bool,
    pub strict: bool,
    pub evaluator: EvaluatorConfig,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let tasks = load_dataset(&args.dataset)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.dataset.display())))?;
    println!("{}: {} tasks well-formed", args.dataset.display(), tasks.len());
    if !args.execute {
        return Ok(());
    }
    args.evaluator.validate().map_err(CliError::Config)?;
    let evaluator = build_evaluator(&args.evaluator)?;
    let mut flagged = 0;
    for task in &tasks {
        let outcome = evaluator.evaluate(&task.buggy_program, task)?;
        let passed = outcome.pass_count();
        let m = task.suite.len();
        let note = if passed == m {
            flagged += 1;
            " FLAGGED: buggy program passes every test"
        } else if passed == 0 {
            flagged += 1;
            " FLAGGED: buggy program passes no test"
        } else {
            ""
        };
        println!("{}: buggy program passes {passed}/{m}{note}", task.task_id);
    }
    if flagged > 0 {
        println!("{flagged} task(s) are not partially correct");
        if args.strict {
            return Err(CliError::Config(format!("{flagged} task(s) flagged")));
        }
    }
    Ok(())
}

pub fn cmd_replay_inspect(path: &Path, verbose: bool) -> Result<(), CliError> {
    let exchanges = read_exchanges(path)?;
    let mut by_kind: BTreeMap<&str, usize> = BTreeMap::new();
    let mut hashes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut models: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut prompt_tokens, mut completion_tokens, mut cost, mut latency) = (0u64, 0u64, 0.0, 0u64);
    for x in &exchanges {
        *by_kind.entry(x.prompt_kind.as_str()).or_insert(0) += 1;
        *hashes.entry(&x.prompt_hash).or_insert(0) += 1;
        *models.entry(&x.model_name).or_insert(0) += 1;
        prompt_tokens += x.prompt_tokens;
        completion_tokens += x.completion_tokens;
        cost += x.estimated_cost;
        latency += x.latency_ms;
    }
    println!("{}: {} exchanges, {} distinct prompts", path.display(), exchanges.len(), hashes.len());
    for (kind, n) in &by_kind {
        println!("  {kind:<14} {n}");
    }
    for (model, n) in &models {
        println!("  model {model} ({n})");
    }
    println!("  tokens {prompt_tokens} prompt + {completion_tokens} completion, cost {cost:.4}, latency {latency} ms");
    let repeated = hashes.values().filter(|&&n| n > 1).count();
    if repeated > 0 {
        println!("  {repeated} prompt(s) recorded more than once; replay serves them in order");
    }
    if verbose {
        for x in &exchanges {
            println!(
                "{:>5} {:<14} {} {:>6} {:>6} {:>6}ms",
                x.request_id,
                x.prompt_kind.as_str(),
                &x.prompt_hash[..x.prompt_hash.len().min(12)],
                x.prompt_tokens,
                x.completion_tokens,
                x.latency_ms
            );
        }
    }
    Ok(())
}
