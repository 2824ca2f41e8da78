use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn skillcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillcast"))
        .args(args)
        .env_remove("EMBED_API_KEY")
        .env_remove("CHAT_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the fixture inputs into `dir`, optionally filtering record lines,
/// and writes a config with `extra` appended.
fn workspace(dir: &Path, keep: impl Fn(&str) -> bool, extra: &str) -> PathBuf {
    let records = fs::read_to_string(fixture_dir().join("records.csv")).unwrap();
    let kept: Vec<&str> = records.lines().enumerate().filter(|(i, l)| *i == 0 || keep(l)).map(|(_, l)| l).collect();
    fs::write(dir.join("records.csv"), kept.join("\n") + "\n").unwrap();
    fs::copy(fixture_dir().join("taxonomy.csv"), dir.join("taxonomy.csv")).unwrap();
    let config = dir.join("config.toml");
    fs::write(
        &config,
        format!("output_dir = \"out\"\n\n[inputs]\nrecords = \"records.csv\"\ntaxonomy = \"taxonomy.csv\"\n{extra}"),
    )
    .unwrap();
    config
}

#[test]
fn missing_stage_input_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = skillcast(&["--out", out.to_str().unwrap(), "classify"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("run `skillcast build` first"), "{}", stderr(&o));
}

#[test]
fn config_problems_are_listed_together() {
    let o = skillcast(&[
        "--set",
        "match.workers=0",
        "--set",
        "classify.quantile=1.5",
        "--set",
        "eval.models=[\"lstm\"]",
        "check-config",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("3 problem(s)"), "{err}");
    assert!(err.contains("match.workers") && err.contains("quantile") && err.contains("lstm"), "{err}");
}

#[test]
fn missing_records_setting_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = skillcast(&["--out", dir.path().to_str().unwrap(), "match"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("inputs.records"));
}

#[test]
fn unreachable_remote_backend_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(
        dir.path(),
        |l| l.starts_with("J0000"),
        "\n[embed]\nbackend = \"remote\"\nendpoint = \"http://127.0.0.1:9/v1/embeddings\"\n\n[match]\nmax_retries = 0\ntimeout_secs = 2\n",
    );
    let o = skillcast(&["-c", config.to_str().unwrap(), "match"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("remote"), "{}", stderr(&o));
}

#[test]
fn second_run_skips_current_stages_and_changes_rerun_them() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path(), |_| true, "");
    let c = config.to_str().unwrap();
    assert!(skillcast(&["-c", c, "run-all"]).status.success());
    let again = skillcast(&["-c", c, "run-all"]);
    assert!(again.status.success());
    let text = stdout(&again);
    for stage in ["match", "build", "eval", "forecast", "classify", "report"] {
        assert!(text.contains(&format!("{stage}: up to date")), "{text}");
    }
    let changed = skillcast(&["-c", c, "--set", "classify.quantile=0.5", "run-all"]);
    assert!(changed.status.success());
    let text = stdout(&changed);
    assert!(text.contains("forecast: up to date"), "{text}");
    assert!(text.contains("classify: 20 skills"), "{text}");
    assert!(!text.contains("report: up to date"), "{text}");
}

#[test]
fn tampered_artifact_is_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path(), |_| true, "");
    let c = config.to_str().unwrap();
    assert!(skillcast(&["-c", c, "run-all"]).status.success());
    let matrix = dir.path().join("out/matrix.csv");
    let original = fs::read(&matrix).unwrap();
    fs::write(&matrix, b"skill_id,2024-01\n1,0.5\n").unwrap();
    let o = skillcast(&["-c", c, "build"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&matrix).unwrap(), original);
}

#[test]
fn gap_months_follow_the_period_policy() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path(), |l| !l.contains(",6,2024,"), "");
    let c = config.to_str().unwrap();

    for stage in ["match", "build"] {
        let o = skillcast(&["-c", c, stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let header = fs::read_to_string(dir.path().join("out/matrix.csv")).unwrap();
    let columns = header.lines().next().unwrap().split(',').count() - 1;
    assert_eq!(columns, 11);

    // Twelve history months are required by default.
    let short = skillcast(&["-c", c, "run-all"]);
    assert_eq!(short.status.code(), Some(2), "{}", stderr(&short));
    assert!(stderr(&short).contains("H=12"), "{}", stderr(&short));

    let filled = skillcast(&["-c", c, "--set", "series.period_policy=zero_fill_gaps", "run-all"]);
    assert!(filled.status.success(), "{}", stderr(&filled));
    let matrix = fs::read_to_string(dir.path().join("out/matrix.csv")).unwrap();
    let header: Vec<&str> = matrix.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len() - 1, 12);
    let june = header.iter().position(|h| *h == "2024-06").unwrap();
    assert!(matrix.lines().skip(1).all(|l| l.split(',').nth(june) == Some("0.0")));
    let summary = fs::read_to_string(dir.path().join("out/summary.md")).unwrap();
    assert!(summary.contains("No observations for 2024-06"), "{summary}");
    let shares = fs::read_to_string(dir.path().join("out/shares.csv")).unwrap();
    assert!(!shares.contains("2024-06"));
}

#[test]
fn imported_predictions_are_scored_alongside_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let mut preds = String::from("skill_id,origin_t,step,value\n");
    for t in 4..=9 {
        for step in 1..=3 {
            preds.push_str(&format!("1,{t},{step},0.004\n"));
        }
    }
    fs::write(dir.path().join("preds.csv"), preds).unwrap();
    let config = workspace(
        dir.path(),
        |_| true,
        "\n[eval]\nmodels = [\"naive\"]\nseq_lens = [4]\n\n[[eval.imports]]\nname = \"vendor_model\"\npath = \"preds.csv\"\nseq_len = 4\n",
    );
    let c = config.to_str().unwrap();
    for stage in ["match", "build", "eval"] {
        let o = skillcast(&["-c", c, stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let eval = fs::read_to_string(dir.path().join("out/eval.csv")).unwrap();
    let row = eval.lines().find(|l| l.contains("vendor_model")).expect("import row");
    assert!(row.starts_with("external,vendor_model,4,3,6,18,"), "{row}");
}

#[test]
fn check_config_prints_resolved_settings() {
    let o = skillcast(&["--set", "forecast.model=ses", "--seed", "7", "check-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seed = 7") && text.contains("model = \"ses\""), "{text}");
}
