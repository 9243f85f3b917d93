use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memaudit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memaudit")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = "\
synth.n = 160
synth.dim = 6
train.hidden = 8
train.max_epochs = 8
shadow.count = 3
shadow.epochs = 3
run.repetitions = 2
run.workers = 1
output.dir = out
";

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&memaudit(&[], tmp.path())), 1);
    assert_eq!(code(&memaudit(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&memaudit(&["--help"], tmp.path())), 0);
    assert_eq!(code(&memaudit(&["run", "missing.conf"], tmp.path())), 1);
}

#[test]
fn validate_reports_every_bad_key() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.conf"), "synth.n = 100\nshadow.count = 1\nattack.rmia.gamma = -2\nnonsense = 3\n").unwrap();
    let o = memaudit(&["validate", "bad.conf"], tmp.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["shadow.count", "attack.rmia.gamma", "nonsense"] {
        assert!(err.contains(key), "{key} not reported in {err}");
    }

    fs::write(tmp.path().join("good.conf"), SMALL).unwrap();
    let o = memaudit(&["validate", "good.conf"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("attack.rmia.gamma = 2"));
    assert!(text.contains("synth.n = 160"));
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = memaudit(&["synth", "--n", "50", "--dim", "3", "--positive-fraction", "0.2", "--out", "d.csv"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("id,label"));
    assert_eq!(lines.count(), 50);

    fs::write(tmp.path().join("csv.conf"), SMALL.replace("synth.n = 160\nsynth.dim = 6\n", "data.path = d.csv\n")).unwrap();
    assert_eq!(code(&memaudit(&["validate", "csv.conf"], tmp.path())), 0);
}

#[test]
fn run_attack_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("exp.conf"), SMALL).unwrap();
    let o = memaudit(&["--quiet", "run", "exp.conf"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("lira") && stdout.contains("rmia"));
    let report = fs::read(dir.join("out/report.json")).unwrap();

    // resuming with identical settings rewrites the same report
    assert_eq!(code(&memaudit(&["-q", "run", "exp.conf"], dir)), 0);
    assert_eq!(fs::read(dir.join("out/report.json")).unwrap(), report);

    // a changed configuration cannot reuse the directory
    fs::write(dir.join("other.conf"), SMALL.replace("run.repetitions = 2", "run.repetitions = 2\nrun.seed = 5")).unwrap();
    assert_eq!(code(&memaudit(&["-q", "run", "other.conf"], dir)), 1);

    assert_eq!(code(&memaudit(&["-q", "attack", "exp.conf"], dir)), 0);
    assert_eq!(fs::read(dir.join("out/report.json")).unwrap(), report);

    let o = memaudit(&["report", "out/report.json", "--format", "csv", "--out", "tables"], dir);
    assert_eq!(code(&o), 0);
    for f in ["report_flat.csv", "tpr_summary.csv", "overlap.csv", "label_fractions.csv"] {
        assert!(dir.join("tables").join(f).is_file(), "{f}");
    }
    assert_eq!(code(&memaudit(&["report", "out/report.json", "--format", "svg"], dir)), 0);
    assert!(dir.join("out/roc.svg").is_file());
    assert_eq!(code(&memaudit(&["report", "out/report.json", "--format", "pdf"], dir)), 1);
    assert_eq!(code(&memaudit(&["report", "nowhere.json"], dir)), 2);
}

#[test]
fn overrides_apply_to_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("exp.conf"), SMALL).unwrap();
    let o = memaudit(&["-q", "run", "exp.conf", "--repetitions", "1", "--output", "elsewhere"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("elsewhere/rep_000").is_dir());
    assert!(!dir.join("elsewhere/rep_001").exists());
    assert_eq!(code(&memaudit(&["-q", "run", "exp.conf", "--workers", "0", "--repetitions", "0"], dir)), 1);
}
