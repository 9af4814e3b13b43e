use std::path::Path;
use std::process::{Command, Output};

use load_core::experiment::{simulate_logged_data, synthetic_ids, write_interactions_csv, write_items_csv, ItemTable};
use load_core::sim::{EnvironmentSpec, Scenario};

const CONFIG: &str = r#"{
    "d1": 4, "d2": 3, "n_items": 6, "capacity": 2, "rank": 2,
    "horizon": 120, "checkpoints": [60, 120], "replications": 3, "seed": 5,
    "policies": [
        {"kind": "elsa", "config": {"rank": 2, "exploration_c": 2.0}},
        {"kind": "ucb_mnl_stacked"},
        {"kind": "uniform"}
    ]
}"#;

fn load(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_load"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = load(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_into(&config, &a, &[]);
    run_into(&config, &b, &["--threads", "1"]);
    for f in ["regret.csv", "summary.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let regret = std::fs::read_to_string(a.join("regret.csv")).unwrap();
    assert_eq!(regret.lines().next().unwrap(), "policy,seed,t,cum_regret,mean_flag");
    // 3 policies × 3 seeds × 2 checkpoints.
    assert_eq!(regret.lines().count(), 1 + 18);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_into(&config, &a, &[]);
    run_into(&config, &b, &["--seed", "99"]);
    let x = std::fs::read_to_string(a.join("regret.csv")).unwrap();
    let y = std::fs::read_to_string(b.join("regret.csv")).unwrap();
    assert_ne!(x, y);
    assert!(y.lines().nth(1).unwrap().contains(",99,"));
}

#[test]
fn json_format_writes_results_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("j");
    let o = run_into(&config, &out, &["--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(v["regret"].as_array().unwrap().len(), 18);
    assert_eq!(v["summary"].as_array().unwrap().len(), 6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ELSA-UCB"));
}

#[test]
fn invalid_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("\"horizon\": 120,", ""));
    let o = load(&["run", "--config", &config]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));

    let config = write_config(dir.path(), &CONFIG.replace("\"capacity\": 2", "\"capacity\": 9"));
    let o = load(&["run", "--config", &config]);
    assert!(!o.status.success());

    let o = load(&["run", "--config", "/nonexistent/config.json"]);
    assert!(!o.status.success());

    let config = write_config(dir.path(), CONFIG);
    let o = load(&["run", "--config", &config, "--format", "xml"]);
    assert!(!o.status.success());
}

#[test]
fn rank_reports_scores_for_synthetic_configs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("\"horizon\": 120", "\"horizon\": 400"));
    let out = dir.path().join("gic");
    let o = load(&["rank", "--config", &config, "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("rank,nll,penalty,gic\n"));
    assert!(stdout.contains("selected rank: "));
    // Grid 1..=min(d1, d2).
    assert_eq!(std::fs::read_to_string(out.join("gic.csv")).unwrap().lines().count(), 4);
}

fn export_dataset(dir: &Path) {
    let spec = EnvironmentSpec::Synthetic {
        d1: 4,
        d2: 3,
        n_items: 6,
        capacity: 3,
        rank: 1,
        singular_scale: 3.0,
        scenario: Scenario::LowRank,
    };
    let env = spec.build(1).unwrap();
    let records = simulate_logged_data(&env, 800, 2).unwrap();
    let items = ItemTable {
        ids: synthetic_ids(6),
        catalog: env.catalog().clone(),
    };
    write_items_csv(&items, std::fs::File::create(dir.join("items.csv")).unwrap()).unwrap();
    write_interactions_csv(&items.ids, &records, std::fs::File::create(dir.join("log.csv")).unwrap()).unwrap();
}

const REPLAY: &str = r#"{
    "items_csv": "items.csv",
    "interactions_csv": "log.csv",
    "rank_grid": [1, 2],
    "horizon": 100,
    "replications": 2,
    "policies": [{"kind": "uniform"}, {"kind": "oracle"}]
}"#;

#[test]
fn replay_and_rank_on_a_logged_dataset() {
    let dir = tempfile::tempdir().unwrap();
    export_dataset(dir.path());
    let config = write_config(dir.path(), REPLAY);
    let out = dir.path().join("r");
    let o = load(&["replay", "--config", &config, "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("selected rank: 1"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "policy,t,mean_cum_regret,ci_halfwidth");
    assert_eq!(summary.lines().count(), 3);

    let o = load(&["rank", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.ends_with("selected rank: 1\n"));
}

#[test]
fn bad_interaction_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    export_dataset(dir.path());
    let log = dir.path().join("log.csv");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("oops\n");
    std::fs::write(&log, text).unwrap();
    let config = write_config(dir.path(), REPLAY);
    let o = load(&["replay", "--config", &config]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 802"));
}
