use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tabmix::pipeline::{cmd_eval, cmd_gen_data, cmd_sample, cmd_train, LogRecord, CHECKPOINT_FILE, LOG_FILE};
use tabmix_core::diffusion::UnmaskPolicy;
use tempfile::TempDir;

const TINY: &str = r#"
[codec]
epochs = 100
grid_points = 51
mean_tolerance = 1.0
max_tolerance = 10.0

[model.backbone]
layers = 1
hidden = 16
heads = 2
ff = 32

[train]
epochs = 1
batch_size = 32
warm_steps = 2

[run]
checkpoint_every = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tabmix"))
}

fn setup(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let files = cmd_gen_data("mathexpr", n, 3, &dir.join("data")).unwrap();
    let cfg = dir.join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    (cfg, files.train)
}

fn log_lines(run: &Path) -> Vec<LogRecord> {
    fs::read_to_string(run.join(LOG_FILE)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn gen_data_is_deterministic_and_split() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let st = bin().args(["gen-data", "--dataset", "profilebio", "--n", "200", "--seed", "9", "--out"]).arg(dir.path().join(out)).status().unwrap();
        assert!(st.success());
    }
    for f in ["profilebio.csv", "profilebio.train.csv", "profilebio.val.csv", "profilebio.schema.json", "profilebio.manifest.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let train = fs::read_to_string(dir.path().join("a/profilebio.train.csv")).unwrap();
    assert_eq!(train.lines().count(), 1 + 180);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = TempDir::new().unwrap();
    let out = bin().args(["gen-data", "--dataset", "nope", "--n", "10", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = bin().args(["gen-data", "--dataset", "mathexpr", "--n", "0", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["sample", "--ckpt", "x", "--n", "1", "--policy", "sideways", "--out", "y"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn eval_of_real_against_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let files = cmd_gen_data("mathexpr", 300, 1, dir.path()).unwrap();
    let report = dir.path().join("self");
    let out = cmd_eval(&files.full, &files.full, &files.schema, &report).unwrap();
    assert_eq!(out.report.shape, 0.0);
    assert_eq!(out.report.trend, 0.0);
    assert_eq!(out.report.op_mr, Some(1.0));
    assert!(report.with_extension("json").exists());
    assert!(fs::read_to_string(report.with_extension("txt")).unwrap().contains("shape error: 0.00%"));
}

#[test]
fn train_sample_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let (cfg, train) = setup(dir.path(), 100);
    let run = dir.path().join("run");
    let o = cmd_train(&cfg, &train, &run).unwrap();
    assert_eq!(o.step, 3);
    assert_eq!(o.resumed_from, None);
    let steps: Vec<u64> = log_lines(&run).iter().map(|r| r.step).collect();
    assert_eq!(steps, [0, 1, 2]);
    assert!(log_lines(&run).iter().all(|r| r.total.is_finite()));

    let ck = run.join(CHECKPOINT_FILE);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let ma = cmd_sample(&ck, 20, 5, UnmaskPolicy::Random, 4, &a).unwrap();
    let mb = cmd_sample(&ck, 20, 5, UnmaskPolicy::Random, 4, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ma.rows + ma.invalid_records, 20);
    assert_eq!(ma.csv_sha256, mb.csv_sha256);
    assert!(dir.path().join("a.schema.json").exists());

    // A completed run is left alone when trained again.
    let again = cmd_train(&cfg, &train, &run).unwrap();
    assert_eq!((again.steps_run, again.resumed_from), (0, Some(3)));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let (cfg, train) = setup(dir.path(), 100);
    let whole = dir.path().join("whole");
    cmd_train(&cfg, &train, &whole).unwrap();

    let halves = dir.path().join("halves");
    let stopped = dir.path().join("stopped.toml");
    fs::write(&stopped, format!("{TINY}max_steps = 1\n")).unwrap();
    assert_eq!(cmd_train(&stopped, &train, &halves).unwrap().step, 1);
    // Pretend the interruption came after a log line was written past the
    // checkpoint; resuming must drop it.
    let mut log = fs::read_to_string(halves.join(LOG_FILE)).unwrap();
    log.push_str(&log.lines().next().unwrap().replace("\"step\":0", "\"step\":1"));
    log.push('\n');
    fs::write(halves.join(LOG_FILE), log).unwrap();

    let rest = cmd_train(&cfg, &train, &halves).unwrap();
    assert_eq!((rest.resumed_from, rest.steps_run), (Some(1), 2));
    assert_eq!(fs::read(whole.join(CHECKPOINT_FILE)).unwrap(), fs::read(halves.join(CHECKPOINT_FILE)).unwrap());
    let strip = |v: Vec<LogRecord>| v.into_iter().map(|r| LogRecord { wall_s: 0.0, ..r }).collect::<Vec<_>>();
    assert_eq!(strip(log_lines(&whole)), strip(log_lines(&halves)));
}

#[test]
fn resuming_with_other_settings_is_refused() {
    let dir = TempDir::new().unwrap();
    let (cfg, train) = setup(dir.path(), 100);
    let run = dir.path().join("run");
    cmd_train(&cfg, &train, &run).unwrap();

    let other = dir.path().join("other.toml");
    fs::write(&other, TINY.replace("batch_size = 32", "batch_size = 16")).unwrap();
    let err = cmd_train(&other, &train, &run).unwrap_err();
    assert!(format!("{err:#}").contains("config"), "{err:#}");

    let more = cmd_gen_data("mathexpr", 120, 3, &dir.path().join("more")).unwrap();
    let err = cmd_train(&cfg, &more.train, &run).unwrap_err();
    assert!(format!("{err:#}").contains("data"), "{err:#}");
}
