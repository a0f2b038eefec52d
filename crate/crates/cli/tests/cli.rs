use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(p: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(p).canonicalize().unwrap()
}

fn cubicml(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cubicml"));
    cmd.args(args).env_remove("CUBIC_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CUBIC_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_manifest(dir: &Path, space: &Path) -> PathBuf {
    let text = format!(
        r#"space = "{}"
seed = 3

[executor]
name = "fsdp"
params = "{}"

[loop]
bootstrap = 24
rounds = 2

[loop.predictor]
backend = "gbdt"
n_trees = 40

[loop.searcher]
samples_per_trial = 300
top_k = 4
"#,
        space.display(),
        repo("sims/fsdp_reduced.params").display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn search_writes_parseable_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_manifest(dir.path(), &repo("spaces/ads_fsdp_reduced.space"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = cubicml(&["search", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    let history = std::fs::read_to_string(a.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 32);
    for line in history.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["config"].is_object());
    }
    assert_eq!(history, std::fs::read_to_string(b.join("history.jsonl")).unwrap());

    let (header, rows) = csv_rows(&a.join("frontier.csv"));
    assert_eq!(header, "launch_index,round,actual_metric,frontier");
    assert_eq!(rows.len(), 32);
    let frontier: Vec<f64> = rows.iter().filter(|r| !r[3].is_empty()).map(|r| r[3].parse().unwrap()).collect();
    assert!(frontier.windows(2).all(|w| w[0] <= w[1]));

    let (header, rows) = csv_rows(&a.join("round_corr.csv"));
    assert_eq!(header, "round,n,kendall,pearson,spearman");
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["round-1", "round-2"]);

    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("best_config.json")).unwrap()).unwrap();
    assert_eq!(best["metric"].as_f64().unwrap(), *frontier.last().unwrap());
    assert!(best["config"]["local_batch_size"].is_i64());
}

#[test]
fn search_refuses_to_clobber_and_honours_out_env() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_manifest(dir.path(), &repo("spaces/ads_fsdp_reduced.space"));
    let out = dir.path().join("env-out");
    let args = ["search", manifest.to_str().unwrap()];
    assert!(cubicml(&args, Some(&out)).status.success());
    assert!(out.join("best_config.json").is_file());
    let again = cubicml(&args, Some(&out));
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    let forced = cubicml(&["search", manifest.to_str().unwrap(), "--force", "--parallel", "2"], Some(&out));
    assert!(forced.status.success(), "{}", stderr(&forced));
}

#[test]
fn missing_space_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.space");
    let manifest = small_manifest(dir.path(), &missing);
    let o = cubicml(&["search", manifest.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.space"));
}

#[test]
fn bad_loop_setting_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_manifest(dir.path(), &repo("spaces/ads_fsdp_reduced.space"));
    let text = std::fs::read_to_string(&manifest).unwrap().replace("rounds = 2", "rounds = 2\nseed = 1");
    std::fs::write(&manifest, text).unwrap();
    let o = cubicml(&["search", manifest.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("top level"));
}

#[test]
fn dataset_fit_eval_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let space = repo("spaces/llm.space");
    let space = space.to_str().unwrap();
    let params = repo("sims/llm_default.params");
    let o = cubicml(
        &["gen-dataset", "--space", space, "--executor", "llm", "--params", params.to_str().unwrap()],
        Some(out),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let data = out.join("dataset.jsonl");
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 568);
    let history = data.to_str().unwrap();

    let o = cubicml(&["fit-eval", "--space", space, "--history", history, "--log-target"], Some(out));
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.join("corr_report.csv"));
    assert_eq!(header, "split,n_train,n_valid,kendall,pearson,spearman");
    assert_eq!(rows[0][..3], ["random", "423", "145"]);
    assert!(rows[0][5].parse::<f64>().unwrap() >= 0.9);
    let (header, rows) = csv_rows(&out.join("predictions.csv"));
    assert_eq!(header, "valid_index,timestamp,scale,predicted,actual");
    assert_eq!(rows.len(), 145);

    let o = cubicml(
        &["curve", "--space", space, "--history", history, "--log-target", "--perturbations", "3"],
        Some(out),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.join("learning_curve.csv"));
    assert_eq!(
        header,
        "size,kendall_mean,kendall_std,pearson_mean,pearson_std,spearman_mean,spearman_std"
    );
    let sizes: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(sizes, ["25", "50", "100", "150", "200", "300", "423"]);

    let o = cubicml(&["curve", "--space", space, "--history", history, "--sizes", "1000"], Some(out));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_inputs_exit_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = cubicml(&["report", empty.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no completed jobs"));

    let space = repo("spaces/llm.space");
    let o = cubicml(
        &["fit-eval", "--space", space.to_str().unwrap(), "--history", empty.to_str().unwrap()],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn report_normalizes_without_touching_history() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_manifest(dir.path(), &repo("spaces/ads_fsdp_reduced.space"));
    let run = dir.path().join("run");
    assert!(cubicml(&["search", manifest.to_str().unwrap(), "--out", run.to_str().unwrap()], None).status.success());
    let history = run.join("history.jsonl");
    let before = std::fs::read(&history).unwrap();
    let rep = dir.path().join("rep");
    let o = cubicml(
        &["report", history.to_str().unwrap(), "--normalize", "1000", "--out", rep.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&history).unwrap(), before);
    let (_, raw) = csv_rows(&run.join("frontier.csv"));
    let (_, norm) = csv_rows(&rep.join("frontier.csv"));
    let last = |rows: &[Vec<String>]| rows.last().unwrap()[3].parse::<f64>().unwrap();
    assert!((last(&raw) / 1000.0 - last(&norm)).abs() < 1e-9 * last(&raw));
    let (header, rows) = csv_rows(&rep.join("scale_timeline.csv"));
    assert_eq!(header, "launch_index,timestamp,scale,status");
    assert_eq!(rows.len(), 32);
}

#[test]
fn space_info_prints_exact_cardinality() {
    let o = cubicml(&["space-info", repo("spaces/ads_fsdp.space").to_str().unwrap()], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("cardinality 8857350"));
}

#[test]
fn help_documents_file_formats() {
    let expect = [
        ("search", "best_config.json"),
        ("search", "[loop.searcher]"),
        ("fit-eval", "split,n_train,n_valid,kendall,pearson,spearman"),
        ("gen-dataset", "history.jsonl"),
        ("curve", "size,kendall_mean,kendall_std"),
        ("report", "scale_timeline.csv"),
        ("space-info", "stepped-int"),
    ];
    for (cmd, needle) in expect {
        let o = cubicml(&[cmd, "--help"], None);
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(o.status.success());
        assert!(text.contains(needle), "{cmd} --help lacks {needle}");
        assert!(text.contains("Exit codes"), "{cmd} --help lacks exit codes");
    }
}
