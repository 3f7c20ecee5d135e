use std::path::{Path, PathBuf};
use std::process::Command;

use stocktrader::cli::{self, RunConfig, CHECKPOINT_FILE, COMPARISON_JSON, TRAINING_LOG_FILE};
use stocktrader::ddpg::{Agent, DdpgConfig};
use stocktrader::env::ObservationScaler;

const SMALL_RUN: &str = r#"
synth_kind = "random-walk"
synth_days = 320
synth_start = "2015-01-01"
synth_p0 = [50.0, 80.0, 20.0]
synth_drift = [0.0005]
synth_vol = [0.01]
train_end = "2015-06-30"
validation_end = "2015-09-30"
seed = 5
episodes = 2
batch_size = 8
warmup = 16
actor_hidden = [8]
critic_hidden = [8]
lookback = 20
rebalance_every = 5
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    std::fs::write(&path, format!("out = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["stocktrader"];
    argv.extend_from_slice(args);
    cli::run(argv)
}

fn run_with(config: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["--config", config.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(&argv)
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn report(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

#[test]
fn synth_trend_writes_compounded_prices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "synth_days = 3\nsynth_p0 = [100.0]\nsynth_drift = [0.01]\nseed = 1\n",
    );
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    assert_eq!(run_with(&cfg, &["synth", "--output", first.to_str().unwrap()]), 0);
    assert_eq!(run_with(&cfg, &["synth", "--output", second.to_str().unwrap()]), 0);
    let text = read(&first);
    let prices: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(prices, ["100", "101", "102.01"]);
    assert_eq!(text, read(&second));
}

#[test]
fn synth_random_walk_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let paths: Vec<PathBuf> = ["a.csv", "b.csv"].iter().map(|n| dir.path().join(n)).collect();
    for p in &paths {
        assert_eq!(run_with(&cfg, &["synth", "--output", p.to_str().unwrap()]), 0);
    }
    assert_eq!(read(&paths[0]), read(&paths[1]));
    let other = dir.path().join("c.csv");
    assert_eq!(run_with(&cfg, &["--seed", "6", "synth", "--output", other.to_str().unwrap()]), 0);
    assert_ne!(read(&paths[0]), read(&other));
}

#[test]
fn missing_data_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("data = \"nowhere.csv\"\n{SMALL_RUN}"));
    assert_eq!(run_with(&cfg, &["baseline"]), cli::EXIT_IO);
}

#[test]
fn missing_seed_or_dates_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = SMALL_RUN.replace("seed = 5\n", "");
    let cfg = write_config(dir.path(), &no_seed);
    assert_eq!(run_with(&cfg, &["train"]), cli::EXIT_CONFIG);

    let no_dates = SMALL_RUN.replace("train_end = \"2015-06-30\"\n", "");
    let cfg = write_config(dir.path(), &no_dates);
    assert_eq!(run_with(&cfg, &["baseline"]), cli::EXIT_CONFIG);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("learning_rate = 0.1\n{SMALL_RUN}"));
    assert_eq!(run_with(&cfg, &["train"]), cli::EXIT_CONFIG);
}

#[test]
fn bad_arguments_exit_with_config_code() {
    assert_eq!(run(&["frobnicate"]), cli::EXIT_CONFIG);
    assert_eq!(run(&["--help"]), cli::EXIT_OK);
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), SMALL_RUN);
    let output = Command::new(env!("CARGO_BIN_EXE_stocktrader"))
        .args(["--config", cfg_path.to_str().unwrap(), "--dump-config", "baseline"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let dumped = RunConfig::from_toml(std::str::from_utf8(&output.stdout).unwrap()).unwrap();
    assert_eq!(dumped, RunConfig::load(&cfg_path).unwrap());
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("data = \"missing.csv\"\n{SMALL_RUN}"));
    let status = Command::new(env!("CARGO_BIN_EXE_stocktrader"))
        .args(["--config", cfg.to_str().unwrap(), "baseline"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(cli::EXIT_IO));
}

#[test]
fn single_episode_training_logs_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_RUN.replace("episodes = 2", "episodes = 1") + "validation_mode = \"none\"\n";
    let cfg = write_config(dir.path(), &body);
    assert_eq!(run_with(&cfg, &["train"]), 0);
    let log = read(dir.path().join("out").join(TRAINING_LOG_FILE));
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2, "{log}");
    assert!(lines[1].starts_with("1,"));
    assert!(dir.path().join("out").join(CHECKPOINT_FILE).exists());
}

fn zero_actor_checkpoint(path: &Path, n_assets: usize) {
    let cfg = DdpgConfig {
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        ..DdpgConfig::default()
    };
    let agent = Agent::new(cfg.clone(), ObservationScaler::identity(n_assets)).unwrap();
    let zero = Agent::from_networks(cfg, agent.scaler.clone(), agent.actor.zeroed(), agent.critic.clone()).unwrap();
    zero.save(path).unwrap();
}

#[test]
fn zero_actor_backtest_holds_cash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let ckpt = dir.path().join("zero.json");
    zero_actor_checkpoint(&ckpt, 3);
    assert_eq!(run_with(&cfg, &["backtest", "--checkpoint", ckpt.to_str().unwrap()]), 0);
    let r = report(dir.path().join("out/ddpg_report.json"));
    assert_eq!(r["annualized_return"].as_f64(), Some(0.0));
    assert_eq!(r["final_value"].as_f64(), Some(10_000.0));
}

#[test]
fn backtest_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    assert_eq!(run_with(&cfg, &["train"]), 0);
    let out = dir.path().join("out");
    assert_eq!(run_with(&cfg, &["backtest"]), 0);
    let first = (read(out.join("ddpg_report.json")), read(out.join("trades.csv")));
    assert_eq!(run_with(&cfg, &["backtest"]), 0);
    let second = (read(out.join("ddpg_report.json")), read(out.join("trades.csv")));
    assert_eq!(first, second);
}

#[test]
fn flat_market_comparison_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_RUN
        .replace("synth_kind = \"random-walk\"", "synth_kind = \"trend\"")
        .replace("synth_drift = [0.0005]", "synth_drift = [0.0]")
        .replace("synth_vol = [0.01]", "synth_vol = [0.0]");
    let cfg = write_config(dir.path(), &body);
    assert_eq!(run_with(&cfg, &["compare"]), 0);
    let out = dir.path().join("out");
    let cmp = report(out.join(COMPARISON_JSON));
    let rows = cmp["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let names: Vec<&str> = rows.iter().map(|r| r["strategy"].as_str().unwrap()).collect();
    assert_eq!(names, ["DDPG", "Min-Variance", "Index"]);
    for r in rows {
        let obj = r.as_object().unwrap();
        for key in ["initial_value", "final_value", "annualized_return", "annualized_std", "sharpe"] {
            assert!(obj.contains_key(key), "{key} missing");
        }
        assert!(r["annualized_return"].as_f64().unwrap().abs() < 1e-12, "{r}");
        assert!(r["sharpe"].is_null(), "{r}");
        assert_eq!(r["initial_value"].as_f64(), Some(10_000.0));
    }
    let starts: Vec<String> = ["ddpg", "min_variance", "index"]
        .iter()
        .map(|s| read(out.join(format!("{s}_curve.csv"))).lines().nth(1).unwrap().split(',').next().unwrap().to_string())
        .collect();
    assert!(starts.iter().all(|d| *d == starts[0]), "{starts:?}");
    assert_eq!(starts[0], cmp["start_date"].as_str().unwrap());
}

#[test]
fn checkpoint_width_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let ckpt = dir.path().join("two.json");
    zero_actor_checkpoint(&ckpt, 2);
    assert_eq!(run_with(&cfg, &["backtest", "--checkpoint", ckpt.to_str().unwrap()]), cli::EXIT_CONFIG);
}

#[test]
fn corrupt_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let ckpt = dir.path().join("bad.json");
    std::fs::write(&ckpt, "{\"actor\": [1, 2").unwrap();
    assert_eq!(run_with(&cfg, &["backtest", "--checkpoint", ckpt.to_str().unwrap()]), cli::EXIT_IO);
}

#[test]
fn multiple_seeds_get_their_own_directories() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_RUN.replace("episodes = 2", "episodes = 1");
    let cfg = write_config(dir.path(), &body);
    assert_eq!(run_with(&cfg, &["train", "--seeds", "3,4"]), 0);
    let out = dir.path().join("out");
    let a = read(out.join("seed_3").join(CHECKPOINT_FILE));
    let b = read(out.join("seed_4").join(CHECKPOINT_FILE));
    assert_ne!(a, b);
}
