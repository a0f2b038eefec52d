use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use cubicml::metrics::{learning_curve, CorrelationReport};
use cubicml::orchestrator::{frontier_csv, report_from_records, round_corr_csv, run_loop};
use cubicml::predictor::{Backend, ConfigScorer, Dataset, GbdtParams, MlpConfig};
use cubicml::seed::derive_seed;
use cubicml::sim::{executor_by_name, generate_dataset, DatasetOptions, TimestampPolicy};
use cubicml::space::{Encoding, SearchSpace};
use cubicml::store::{split_random, split_scale, split_temporal, JobRecord, JobStore};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{
    BackendArg, CurveArgs, FitEvalArgs, GenDatasetArgs, ModelArgs, PolicyArg, ReportArgs, SearchArgs,
    SpaceInfoArgs, SplitArg,
};

const OUT_ENV: &str = "CUBIC_OUT_DIR";

fn out_dir(flag: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or(manifest)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn check_normalize(x: Option<f64>) -> Result<f64, CliError> {
    match x {
        None => Ok(1.0),
        Some(x) if x.is_finite() && x > 0.0 => Ok(x),
        Some(x) => Err(CliError::Usage(format!("--normalize must be a positive number, got {x}"))),
    }
}

/// Fresh file-backed store; an existing file is an error unless `force`.
fn fresh_store(path: &Path, force: bool) -> Result<JobStore, CliError> {
    if path.exists() {
        if !force {
            return Err(CliError::Usage(format!(
                "{} already exists; pass --force to replace it",
                path.display()
            )));
        }
        std::fs::remove_file(path).map_err(|e| CliError::Io(format!("cannot remove {}: {e}", path.display())))?;
    }
    Ok(JobStore::open(path)?)
}

fn scaled(records: &[JobRecord], norm: f64) -> Vec<JobRecord> {
    records
        .iter()
        .map(|r| JobRecord {
            metric: r.metric.map(|m| m / norm),
            predicted: r.predicted.map(|p| p / norm),
            ..r.clone()
        })
        .collect()
}

fn load_history(path: &Path) -> Result<Vec<JobRecord>, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("history file not found: {}", path.display())));
    }
    Ok(JobStore::load(path)?)
}

pub fn search(args: SearchArgs) -> Result<(), CliError> {
    let norm = check_normalize(args.normalize)?;
    let m = RunManifest::load(&args.manifest)?;
    let mut config = m.loop_config;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(p) = args.parallel {
        config.parallel = p;
    }
    config.validate()?;
    let dir = out_dir(args.out.out, m.out_dir)?;
    let mut store = fresh_store(&dir.join("history.jsonl"), args.force)?;
    println!(
        "space {} ({} configurations), executor {}, budget {} jobs, seed {}",
        m.space_path.display(),
        m.space.cardinality(),
        m.executor.name(),
        config.budget(),
        config.seed
    );
    let report = run_loop(&m.space, m.executor.as_ref(), &mut store, &config)?;
    let records = store.records();

    let shown = scaled(records, norm);
    write_file(&dir.join("frontier.csv"), &frontier_csv(&shown))?;
    write_file(&dir.join("round_corr.csv"), &round_corr_csv(&report_from_records(&shown)))?;

    for r in &report.rounds {
        let corr = r
            .correlation
            .map_or_else(String::new, |c| format!(", spearman {:.3}", c.spearman));
        let best = r.best.map_or_else(|| "none".to_owned(), |b| format!("{:.6}", b / norm));
        println!("{}: {} jobs, best {best}{corr}", r.round, r.launched.len());
    }

    let best = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.completed_metric().map(|m| (i, r, m)))
        .fold(None, |acc: Option<(usize, &JobRecord, f64)>, x| match acc {
            Some(a) if a.2 >= x.2 => Some(a),
            _ => Some(x),
        });
    let (i, rec, metric) = best.ok_or_else(|| CliError::Data("no completed jobs".into()))?;
    let mut doc = json!({
        "config": rec.config,
        "metric": metric,
        "round": rec.round,
        "launch_index": i,
    });
    if args.normalize.is_some() {
        doc["normalized_metric"] = json!(metric / norm);
    }
    let text = serde_json::to_string_pretty(&doc).expect("json value serializes");
    write_file(&dir.join("best_config.json"), &(text + "\n"))?;
    println!(
        "best {:.6} at launch {i} ({}), {} of {} jobs failed; outputs in {}",
        metric / norm,
        rec.round,
        report.failed,
        report.jobs,
        dir.display()
    );
    Ok(())
}

fn backend_for(args: &ModelArgs, default: BackendArg) -> Result<Backend, CliError> {
    if let Some(p) = &args.predictor_config {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Io(format!("cannot read predictor config {}: {e}", p.display())))?;
        return toml::from_str(&text).map_err(|e| CliError::Usage(format!("predictor config {}: {e}", p.display())));
    }
    Ok(match default {
        BackendArg::Mlp => Backend::Mlp(MlpConfig::default()),
        BackendArg::Gbdt => Backend::Gbdt(GbdtParams {
            log_target: args.log_target,
            ..GbdtParams::default()
        }),
    })
}

fn score_all(
    space: &SearchSpace,
    backend: &Backend,
    train: &[JobRecord],
    valid: &[JobRecord],
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let data = Dataset::from_records(space, backend.encoding(), train)?;
    let model = backend.fit(&data, seed)?;
    let scorer = ConfigScorer::new(space, &model)?;
    let mut pred = Vec::with_capacity(valid.len());
    let mut actual = Vec::with_capacity(valid.len());
    for r in valid {
        pred.push(scorer.score(&r.config)?);
        actual.push(r.metric.expect("splits keep completed records"));
    }
    Ok((pred, actual))
}

pub fn fit_eval(args: FitEvalArgs) -> Result<(), CliError> {
    let space = SearchSpace::from_file(&args.model.space)?;
    let records = load_history(&args.model.history)?;
    let backend = backend_for(&args.model, args.backend)?;
    let seed = args.model.seed;
    let (split, name) = match args.split {
        SplitArg::Random => (
            split_random(&records, args.model.valid_fraction, derive_seed(seed, "split"))?,
            "random",
        ),
        SplitArg::Temporal => (split_temporal(&records, args.model.valid_fraction)?, "temporal"),
        SplitArg::Scale => (split_scale(&records, args.train_max, args.valid_min)?, "scale"),
    };
    let (pred, actual) = score_all(&space, &backend, &split.train, &split.valid, derive_seed(seed, "predictor"))?;
    let c = CorrelationReport::compute(&pred, &actual)?;

    let dir = out_dir(args.out.out, None)?;
    let mut rows = String::from("valid_index,timestamp,scale,predicted,actual\n");
    for (i, (r, (p, a))) in split.valid.iter().zip(pred.iter().zip(&actual)).enumerate() {
        let scale = r.scale.map_or_else(String::new, |s| s.to_string());
        let _ = writeln!(rows, "{i},{},{scale},{p},{a}", r.timestamp);
    }
    write_file(&dir.join("predictions.csv"), &rows)?;
    let report = format!(
        "split,n_train,n_valid,kendall,pearson,spearman\n{name},{},{},{},{},{}\n",
        split.train.len(),
        split.valid.len(),
        c.kendall,
        c.pearson,
        c.spearman
    );
    write_file(&dir.join("corr_report.csv"), &report)?;
    println!(
        "{name} split {}/{}: kendall {:.4} pearson {:.4} spearman {:.4}",
        split.train.len(),
        split.valid.len(),
        c.kendall,
        c.pearson,
        c.spearman
    );
    Ok(())
}

pub fn gen_dataset(args: GenDatasetArgs) -> Result<(), CliError> {
    let space = SearchSpace::from_file(&args.space)?;
    if let Some(p) = &args.params {
        if !p.is_file() {
            return Err(CliError::Io(format!("simulator parameter file not found: {}", p.display())));
        }
    }
    let executor = executor_by_name(&args.executor, args.params.as_deref())?;
    let mut opts = DatasetOptions::new(args.count, derive_seed(args.seed, "dataset"));
    opts.policy = match args.policy {
        PolicyArg::Uniform => TimestampPolicy::Uniform,
        PolicyArg::ScaleCorrelated => TimestampPolicy::ScaleCorrelated { jitter: args.jitter },
    };
    opts.failure_rate = args.failure_rate;
    opts.horizon = args.horizon;
    let records = generate_dataset(&space, executor.as_ref(), &opts)?;
    let path = match args.output {
        Some(p) => p,
        None => out_dir(args.out.out, None)?.join("dataset.jsonl"),
    };
    let mut store = fresh_store(&path, args.force)?;
    for r in records {
        store.append(r)?;
    }
    println!("wrote {} records to {}", store.len(), path.display());
    Ok(())
}

pub fn curve(args: CurveArgs) -> Result<(), CliError> {
    let space = SearchSpace::from_file(&args.model.space)?;
    let records = load_history(&args.model.history)?;
    let params = match backend_for(&args.model, BackendArg::Gbdt)? {
        Backend::Gbdt(p) => p,
        Backend::Mlp(_) => return Err(CliError::Usage("learning curves use the gbdt backend".into())),
    };
    let seed = args.model.seed;
    let split = split_random(&records, args.model.valid_fraction, derive_seed(seed, "split"))?;
    let pool = Dataset::from_records(&space, Encoding::Mixed, &split.train)?;
    let valid = Dataset::from_records(&space, Encoding::Mixed, &split.valid)?;
    let points = learning_curve(
        &pool,
        &valid,
        &args.sizes,
        args.perturbations,
        &params,
        derive_seed(seed, "curve"),
    )?;
    let mut csv = String::from("size,kendall_mean,kendall_std,pearson_mean,pearson_std,spearman_mean,spearman_std\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.size, p.kendall.mean, p.kendall.std, p.pearson.mean, p.pearson.std, p.spearman.mean, p.spearman.std
        );
        println!(
            "n={:>4}  spearman {:.3} ± {:.3} (2σ)",
            p.size,
            p.spearman.mean,
            2.0 * p.spearman.std
        );
    }
    let dir = out_dir(args.out.out, None)?;
    write_file(&dir.join("learning_curve.csv"), &csv)
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    let norm = check_normalize(args.normalize)?;
    let records = load_history(&args.history)?;
    if !records.iter().any(|r| r.status.is_completed()) {
        return Err(CliError::Data(format!("no completed jobs in {}", args.history.display())));
    }
    let shown = scaled(&records, norm);
    let report = report_from_records(&shown);
    let dir = out_dir(args.out.out, None)?;
    write_file(&dir.join("frontier.csv"), &frontier_csv(&shown))?;
    write_file(&dir.join("round_corr.csv"), &round_corr_csv(&report))?;
    let mut timeline = String::from("launch_index,timestamp,scale,status\n");
    for (i, r) in records.iter().enumerate() {
        let scale = r.scale.map_or_else(String::new, |s| s.to_string());
        let status = serde_json::to_value(r.status).expect("status serializes");
        let _ = writeln!(timeline, "{i},{},{scale},{}", r.timestamp, status.as_str().unwrap_or_default());
    }
    write_file(&dir.join("scale_timeline.csv"), &timeline)?;
    println!(
        "{} jobs, {} failed, best {:.6}",
        report.jobs,
        report.failed,
        report.best_metric.expect("history has a completed job")
    );
    Ok(())
}

pub fn space_info(args: SpaceInfoArgs) -> Result<(), CliError> {
    let space = SearchSpace::from_file(&args.space)?;
    println!("{} (version {})", space.name, space.version);
    for d in space.dimensions() {
        let role = d
            .role
            .map(|r| serde_json::to_value(r).expect("role serializes"))
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_else(|| "-".into());
        println!("  {:<28} {:<16} {:>6} values  {role}", d.name, d.kind_name(), d.value_count());
    }
    println!("cardinality {}", space.cardinality());
    Ok(())
}
