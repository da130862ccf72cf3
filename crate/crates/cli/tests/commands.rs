use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn sqlcontam(args: &[&str], envs: &[(&str, &str)]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_sqlcontam"))
        .args(args)
        .env_remove("SQLCONTAM_PASSPHRASE")
        .envs(envs.iter().copied())
        .current_dir(fixtures())
        .output()
        .expect("run sqlcontam");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(sqlcontam(&["bogus"], &[]).code, 2);
    assert_eq!(sqlcontam(&["stats"], &[]).code, 2);
    let missing = sqlcontam(&["--config", "missing.toml", "stats", "--manifest", "spider"], &[]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("missing.toml"), "{}", missing.stderr);
    assert_eq!(sqlcontam(&["hardness", "classify", "--manifest", "no_such_dir"], &[]).code, 2);
}

#[test]
fn hardness_classify_prints_both_tables() {
    let run = sqlcontam(&["hardness", "classify", "--manifest", "spider"], &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.starts_with("id,database,hardness\n"));
    assert!(run.stdout.contains("database,easy,medium,hard,extra\n"));
    let rows = run.stdout.lines().take_while(|l| !l.is_empty()).count();
    assert_eq!(rows, 400);
}

#[test]
fn atd_strips_keys_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("car_1.sql");
    let run = sqlcontam(&["atd", "--in", "spider/dumps/car_1.sql", "--out", path(&out)], &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("CREATE TABLE"));
    for gone in ["REFERENCES", "FOREIGN KEY", "INSERT"] {
        assert!(!text.contains(gone), "{gone} survived ATD");
    }
}

#[test]
fn masking_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let mask = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let truth = dir.path().join(format!("{name}.json"));
        let run = sqlcontam(
            &["--seed", seed, "mask", "--dump", "spider/dumps/car_1.sql", "--out", path(&out), "--truth", path(&truth)],
            &[],
        );
        assert_eq!(run.code, 0, "{}", run.stderr);
        (fs::read_to_string(out).unwrap(), fs::read_to_string(truth).unwrap())
    };
    let (a, truth_a) = mask("5", "a.sql");
    let (b, truth_b) = mask("5", "b.sql");
    let (c, truth_c) = mask("6", "c.sql");
    assert_eq!((&a, &truth_a), (&b, &truth_b));
    assert_ne!(a, c);
    assert_eq!(truth_a.matches("\"position\"").count(), truth_c.matches("\"position\"").count());
    assert!(!a.contains("INSERT"));

    let prompt = sqlcontam(&["--seed", "5", "mask", "--dump", "spider/dumps/car_1.sql", "--prompt"], &[]);
    assert!(prompt.stdout.contains("[MASK]") && prompt.stdout.contains(a.trim_end()));
}

#[test]
fn replayed_translation_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let predictions = dir.path().join("predictions.jsonl");
    let report = dir.path().join("eval");
    let base = ["--config", "audit.toml", "--replay", "transcripts.jsonl"];

    let translate = [&base[..], &["translate", "--manifest", "termite", "--out", path(&predictions)]].concat();
    let run = sqlcontam(&translate, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let lines = fs::read_to_string(&predictions).unwrap().lines().count();
    assert_eq!(lines, 203);

    let evaluate = [
        &base[..],
        &["evaluate", "--predictions", path(&predictions), "--dumps", "termite/dumps", "--max-instances", "20"],
        &["--out", path(&report)],
    ]
    .concat();
    let run = sqlcontam(&evaluate, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let md = fs::read_to_string(report.join("eval_report.md")).unwrap();
    assert!(md.contains("termite"));
    assert!(report.join("eval_per_database.csv").exists());
    assert!(report.join("manual_review.jsonl").exists());
}

#[test]
fn replay_miss_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let run = sqlcontam(
        &["--config", "audit.toml", "--replay", path(&empty), "translate", "--manifest", "mcq", "--out", path(&dir.path().join("p.jsonl"))],
        &[],
    );
    assert_eq!(run.code, 1, "{}", run.stderr);
}

#[test]
fn wrong_passphrase_restores_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("mcq.bundle");
    let restored = dir.path().join("restored");
    let good = [("SQLCONTAM_PASSPHRASE", "open sesame")];
    let bad = [("SQLCONTAM_PASSPHRASE", "open barley")];

    assert_eq!(sqlcontam(&["pack", "--in", "mcq", "--out", path(&bundle)], &good).code, 0);
    let run = sqlcontam(&["unpack", "--in", path(&bundle), "--out", path(&restored)], &bad);
    assert_eq!(run.code, 1, "{}", run.stderr);
    assert!(!restored.exists() || fs::read_dir(&restored).unwrap().next().is_none());

    let run = sqlcontam(&["unpack", "--in", path(&bundle), "--out", path(&restored)], &good);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(
        fs::read(restored.join("manifest.json")).unwrap(),
        fs::read(fixtures().join("mcq/manifest.json")).unwrap()
    );
}
