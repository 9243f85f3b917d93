use std::fs;
use std::path::Path;

use memaudit::config::{parse_config, DataSource, ExperimentConfig};
use memaudit::game::{run_game, GameConfig};
use memaudit::nnet::TrainConfig;
use memaudit::pipeline::{rerun_attacks, run_experiment};
use memaudit::report::{report_from_flat_csv, report_render, ExperimentReport};
use memaudit::synth::{synth_dataset, SynthSpec};
use memaudit::Error;

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_data(DataSource::Synth(SynthSpec {
        n: 200,
        dimension: 8,
        positive_fraction: 0.3,
        separation: 1.5,
        seed: 3,
    }));
    cfg.train.hidden_dims = vec![16];
    cfg.train.max_epochs = 20;
    cfg.shadow.count = 3;
    cfg.shadow.epochs = 5;
    cfg.repetitions = 2;
    cfg.seed = 17;
    cfg.workers = 1;
    cfg.metadata_key = Some("size".into());
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn run_writes_every_repetition_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small(&out);
    let first = run_experiment(&cfg).unwrap();
    assert!(!first.is_partial());
    assert!(first.resumed.is_empty());
    assert_eq!(first.report.repetitions.len(), 2);
    for r in 0..2 {
        let dir = out.join(format!("rep_{r:03}"));
        for f in ["rep.json", "confidences.csv", "manifest.json", "scores_lira.csv", "scores_rmia.csv", "roc_lira.csv", "roc_rmia.csv"] {
            assert!(dir.join(f).is_file(), "{f} missing in rep {r}");
        }
    }
    assert!(out.join("config.txt").is_file());
    let report = read(out.join("report.json"));

    // A stale partial directory and a missing repetition are both rebuilt.
    fs::remove_dir_all(out.join("rep_001")).unwrap();
    fs::create_dir_all(out.join("rep_001.partial")).unwrap();
    fs::write(out.join("rep_001.partial/junk"), "x").unwrap();
    let second = run_experiment(&cfg).unwrap();
    assert_eq!(second.resumed, vec![0]);
    assert!(!out.join("rep_001.partial").exists());
    assert!(!out.join("rep_001/junk").exists());
    assert_eq!(read(out.join("report.json")), report);

    let third = run_experiment(&cfg).unwrap();
    assert_eq!(third.resumed, vec![0, 1]);
    assert_eq!(read(out.join("report.json")), report);
}

#[test]
fn output_directory_is_tied_to_its_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = small(&out);
    cfg.repetitions = 1;
    run_experiment(&cfg).unwrap();

    let mut workers = cfg.clone();
    workers.workers = 2;
    assert!(run_experiment(&workers).is_ok());

    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(run_experiment(&other), Err(Error::Config(_))));
}

#[test]
fn attacks_rerun_from_stored_confidences() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small(&out);
    let original = run_experiment(&cfg).unwrap().report;
    let confidences = read(out.join("rep_000/confidences.csv"));

    let same = rerun_attacks(&cfg).unwrap().report;
    assert_eq!(same, original);

    let mut strict = cfg.clone();
    strict.rmia.gamma = 1e-300;
    let rerun = rerun_attacks(&strict).unwrap().report;
    assert_eq!(read(out.join("rep_000/confidences.csv")), confidences);
    for rep in &rerun.repetitions {
        // every reference point is dominated, so all candidates tie at 1
        assert!(rep.attacks["rmia"].identified.is_empty());
        assert_eq!(rep.attacks["rmia"].tpr["0.0"], 0.0);
        assert_eq!(rep.attacks["lira"], original.repetitions[rep.game.index].attacks["lira"]);
    }
}

#[test]
fn rendered_reports_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_experiment(&small(&out)).unwrap();
    let report_path = out.join("report.json");
    let rendered = tmp.path().join("rendered");

    let csv = report_render(&report_path, "csv", &rendered).unwrap();
    assert_eq!(csv.len(), 4);
    let back = report_from_flat_csv(&fs::read_to_string(rendered.join("report_flat.csv")).unwrap()).unwrap();
    assert_eq!(back, ExperimentReport::load(&report_path).unwrap());

    let svg = report_render(&report_path, "svg", &rendered).unwrap();
    let body = fs::read_to_string(&svg[0]).unwrap();
    assert!(body.starts_with("<svg") && body.contains("polyline"));

    let json = report_render(&report_path, "json", &rendered).unwrap();
    assert_eq!(read(&json[0]), read(&report_path));
    assert!(report_render(&report_path, "pdf", &rendered).is_err());
}

#[test]
fn config_file_drives_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "synth.n = 150\nsynth.dim = 6\ntrain.hidden = 8\ntrain.max_epochs = 5\nshadow.count = 2\nshadow.epochs = 3\nrun.repetitions = 1\noutput.dir = results\n";
    let cfg = parse_config(text, Some(tmp.path())).unwrap();
    assert_eq!(cfg.output_dir, tmp.path().join("results"));
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.report.repetitions.len(), 1);
    assert!(tmp.path().join("results/report.json").is_file());
}

#[test]
fn overfit_target_is_more_confident_on_members() {
    let d = synth_dataset(&SynthSpec {
        n: 300,
        dimension: 20,
        positive_fraction: 0.5,
        separation: 0.5,
        seed: 8,
    })
    .unwrap();
    let train = TrainConfig {
        hidden_dims: vec![64],
        dropout_rate: 0.0,
        weight_decay: 0.0,
        learning_rate: 3e-3,
        max_epochs: 150,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let art = run_game(&d, &train, &GameConfig::default()).unwrap();
    let mean = |member: bool| {
        let v: Vec<f64> = art.confidences.iter().zip(&art.challenge.is_member).filter(|(_, &m)| m == member).map(|(c, _)| *c).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) > mean(false) + 0.1, "members {} non-members {}", mean(true), mean(false));
}
