//! End-to-end experiments: repeated games, both attacks, evaluation and the
//! aggregated report.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! config.txt                 normalized configuration
//! rep_000/                   one directory per finished repetition
//!   confidences.csv          adversary inputs (target + shadow confidences, mask)
//!   manifest.json            shadow seeds, training sets, reference set
//!   scores_lira.csv          score tables
//!   scores_rmia.csv
//!   roc_lira.csv             ROC points
//!   roc_rmia.csv
//!   rep.json                 per-repetition summary
//!   checkpoints/             target.json and shadow_XX.json when enabled
//! report.json
//! ```
//!
//! A repetition directory exists only once it is complete: work happens in
//! `rep_XXX.partial` and is renamed at the end, so an interrupted run resumes
//! by recomputing the missing repetitions only.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::attacks::{run_lira, run_rmia, write_scores, AttackKind, AttackScores};
use crate::config::{ConfigErrors, ConfigIssue, DataSource, ExperimentConfig};
use crate::data::{load_dataset, split_dataset, Dataset};
use crate::eval::{
    aggregate_against, baseline_tpr, identified_with, label_characteristics, median, metadata_characteristics, overlap_analysis, roc_curve,
    IdentifiedRepetition, OverlapRepetition,
};
use crate::game::{collect_attack_inputs, read_attack_inputs, run_game, train_shadow_ensemble, write_attack_inputs, AttackInputs, EnsembleManifest, GameConfig};
use crate::nnet::{random_search, write_checkpoint, SearchSpace};
use crate::report::{
    fpr_key, AttackRepetition, AttackSummary, ExperimentReport, GameSummary, RepetitionFailure, RepetitionRecord, REPORT_FORMAT, REPORT_VERSION, ROC_GRID,
};
use crate::seed::{self, role};
use crate::synth::synth_dataset;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub report_path: PathBuf,
    /// Repetitions loaded from an earlier run instead of recomputed.
    pub resumed: Vec<usize>,
}

impl RunOutcome {
    pub fn is_partial(&self) -> bool {
        !self.report.failures.is_empty()
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synth(spec) => Ok(synth_dataset(spec)?),
        DataSource::Csv(path) => {
            let outcome = load_dataset(path, &cfg.schema())?;
            let c = outcome.cleaning;
            if c.duplicates_removed + c.conflicts_removed > 0 {
                log::info!(
                    "{}: {} rows read, {} duplicates and {} conflicting rows removed",
                    path.display(),
                    c.rows_read,
                    c.duplicates_removed,
                    c.conflicts_removed
                );
            }
            Ok(outcome.dataset)
        }
    }
}

/// Seed of repetition `r`.
pub fn repetition_seed(master: u64, r: usize) -> u64 {
    seed::derive(master, &[r as u64])
}

fn rep_dir(out: &Path, r: usize) -> PathBuf {
    out.join(format!("rep_{r:03}"))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Config text that identifies an experiment: output location and worker
/// count do not change results and are left out.
fn identity_text(cfg: &ExperimentConfig) -> String {
    cfg.to_text()
        .lines()
        .filter(|l| !l.starts_with("output.dir") && !l.starts_with("run.workers"))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn attack_scores(inputs: &AttackInputs, cfg: &ExperimentConfig) -> Result<Vec<AttackScores>> {
    Ok(vec![run_lira(inputs, &cfg.lira)?, run_rmia(inputs, &cfg.rmia)?])
}

/// Scores, ROC and per-attack summaries for one repetition's inputs.
fn evaluate(inputs: &AttackInputs, cfg: &ExperimentConfig, minority: u8, dir: &Path) -> Result<BTreeMap<String, AttackRepetition>> {
    let mut out = BTreeMap::new();
    for scores in attack_scores(inputs, cfg)? {
        let name = scores.attack.name();
        write_scores(&scores, create(&dir.join(format!("scores_{name}.csv")))?)?;
        let roc = roc_curve(&scores)?;
        let roc_path = dir.join(format!("roc_{name}.csv"));
        roc.write_csv(create(&roc_path)?).map_err(|e| Error::io(&roc_path, e))?;
        let mut tpr = BTreeMap::new();
        let mut minority_tpr = BTreeMap::new();
        for &f in &cfg.fpr_targets {
            let set = identified_with(&scores, &roc, f)?;
            tpr.insert(fpr_key(f), set.tpr);
            let minority_members: Vec<usize> = (0..scores.len()).filter(|&i| scores.is_member[i] && inputs.candidate_labels[i] == minority).collect();
            let m = (!minority_members.is_empty()).then(|| {
                let hit = minority_members.iter().filter(|&&i| set.ids.contains(&scores.ids[i])).count();
                hit as f64 / minority_members.len() as f64
            });
            minority_tpr.insert(fpr_key(f), m);
        }
        let roc_grid = ROC_GRID.iter().map(|&f| roc.operating_point(f).map(|p| p.tpr)).collect::<std::result::Result<_, _>>()?;
        out.insert(
            name.to_string(),
            AttackRepetition {
                tpr,
                minority_tpr,
                auc: roc.auc(),
                flagged: scores.flagged(),
                identified: identified_with(&scores, &roc, 0.0)?.ids,
                roc_grid,
            },
        );
    }
    Ok(out)
}

fn union_size(attacks: &BTreeMap<String, AttackRepetition>) -> usize {
    attacks.values().flat_map(|a| a.identified.iter()).collect::<BTreeSet<_>>().len()
}

fn members_of(inputs: &AttackInputs) -> Vec<String> {
    inputs.candidate_ids.iter().zip(&inputs.is_member).filter(|(_, &m)| m).map(|(id, _)| id.clone()).collect()
}

fn run_repetition(d: &Dataset, cfg: &ExperimentConfig, r: usize, dir: &Path) -> Result<RepetitionRecord> {
    let rep_seed = repetition_seed(cfg.seed, r);
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed::derive(rep_seed, &[role::TARGET]);
    if cfg.search_trials > 0 {
        let split = split_dataset(d, cfg.fractions, seed::derive(rep_seed, &[role::SPLIT]))?;
        let (best, _) = random_search(
            &d.select(&split.train_ids)?,
            &d.select(&split.validation_ids)?,
            &train_cfg,
            &SearchSpace::default(),
            cfg.search_trials,
            seed::derive(rep_seed, &[role::SEARCH]),
        )?;
        train_cfg = best;
    }
    let game = GameConfig {
        p_member: cfg.p_member,
        fractions: cfg.fractions,
        seed: rep_seed,
        membership: cfg.membership,
        null_target: cfg.null_target,
    };
    let art = run_game(d, &train_cfg, &game)?;
    let ensemble = train_shadow_ensemble(
        d,
        &art.split.population_ids,
        &art.challenge,
        &art.split.validation_ids,
        &cfg.shadow,
        &train_cfg,
        seed::derive(rep_seed, &[role::SHADOW]),
    )?;
    let inputs = collect_attack_inputs(d, &art, &ensemble)?;
    write_attack_inputs(&inputs, create(&dir.join("confidences.csv"))?)?;

    let checkpoints = if cfg.save_checkpoints {
        let cdir = dir.join("checkpoints");
        fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        write_checkpoint(&art.model, &art.train_config, create(&cdir.join("target.json"))?)?;
        let mut names = Vec::new();
        for (i, m) in ensemble.models.iter().enumerate() {
            let name = format!("checkpoints/shadow_{i:02}.json");
            let shadow_cfg = crate::nnet::TrainConfig {
                seed: seed::derive(ensemble.seeds[i], &[0x7A12]),
                ..train_cfg.clone()
            };
            write_checkpoint(m, &shadow_cfg, create(&dir.join(&name))?)?;
            names.push(name);
        }
        Some(names)
    } else {
        None
    };
    let manifest = EnsembleManifest::new(&ensemble, &art.challenge.candidates, checkpoints.as_deref());
    write_file(&dir.join("manifest.json"), manifest.to_json())?;

    let members = members_of(&inputs);
    let attacks = evaluate(&inputs, cfg, d.minority_label(), dir)?;
    Ok(RepetitionRecord {
        game: GameSummary {
            index: r,
            seed: rep_seed,
            members: members.len(),
            non_members: inputs.candidate_ids.len() - members.len(),
            baseline: baseline_tpr(members.len())?,
            target_epochs: art.model.log.len(),
            reference_points: inputs.z_ids.len(),
            unbalanced_candidates: ensemble.unbalanced_candidates.len(),
        },
        union_identified: union_size(&attacks),
        attacks,
        members,
    })
}

fn read_record(dir: &Path) -> Option<RepetitionRecord> {
    let text = fs::read_to_string(dir.join("rep.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn finish_repetition(out: &Path, r: usize, work: impl FnOnce(&Path) -> Result<RepetitionRecord>) -> Result<RepetitionRecord> {
    let partial = out.join(format!("rep_{r:03}.partial"));
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    let record = work(&partial)?;
    let mut json = serde_json::to_string_pretty(&record).expect("record serializes");
    json.push('\n');
    write_file(&partial.join("rep.json"), json)?;
    let final_dir = rep_dir(out, r);
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    fs::rename(&partial, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(record)
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("config.txt");
    let text = identity_text(cfg);
    match fs::read_to_string(&path) {
        Ok(existing) if existing != text => Err(ConfigErrors(vec![ConfigIssue {
            line: None,
            key: Some("output.dir".into()),
            message: format!("{} holds results of a different configuration", out.display()),
        }])
        .into()),
        Ok(_) => Ok(()),
        Err(_) => write_file(&path, text),
    }
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// Runs (or resumes) every repetition and writes `report.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.check()?;
    let d = load_data(cfg)?;
    prepare_output(cfg)?;
    let out = cfg.output_dir.clone();
    let results: Vec<(usize, Result<RepetitionRecord>, bool)> = thread_pool(cfg.workers).install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|r| {
                if let Some(rec) = read_record(&rep_dir(&out, r)) {
                    if rec.game.seed == repetition_seed(cfg.seed, r) {
                        return (r, Ok(rec), true);
                    }
                }
                log::info!("repetition {r}: running");
                let res = finish_repetition(&out, r, |dir| run_repetition(&d, cfg, r, dir));
                if let Err(e) = &res {
                    log::error!("repetition {r} failed: {e}");
                }
                (r, res, false)
            })
            .collect()
    });
    let resumed = results.iter().filter(|x| x.2).map(|x| x.0).collect();
    assemble(cfg, &d, results.into_iter().map(|(r, res, _)| (r, res)).collect(), resumed)
}

/// Recomputes both attacks from stored confidence tables, for example
/// after changing attack parameters, and rewrites the report.
pub fn rerun_attacks(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.check()?;
    let d = load_data(cfg)?;
    let out = cfg.output_dir.clone();
    let results: Vec<(usize, Result<RepetitionRecord>)> = thread_pool(cfg.workers).install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|r| {
                let dir = rep_dir(&out, r);
                let res = (|| {
                    let mut rec = read_record(&dir).ok_or_else(|| {
                        Error::io(dir.join("rep.json"), std::io::Error::new(std::io::ErrorKind::NotFound, "repetition not completed"))
                    })?;
                    let path = dir.join("confidences.csv");
                    let inputs = read_attack_inputs(fs::File::open(&path).map_err(|e| Error::io(&path, e))?)?;
                    rec.attacks = evaluate(&inputs, cfg, d.minority_label(), &dir)?;
                    rec.union_identified = union_size(&rec.attacks);
                    let mut json = serde_json::to_string_pretty(&rec).expect("record serializes");
                    json.push('\n');
                    write_file(&dir.join("rep.json"), json)?;
                    Ok(rec)
                })();
                (r, res)
            })
            .collect()
    });
    assemble(cfg, &d, results, Vec::new())
}

fn summarize(
    cfg: &ExperimentConfig,
    d: &Dataset,
    records: &[&RepetitionRecord],
    identified: impl Fn(&RepetitionRecord) -> Option<Vec<String>>,
    tpr_at: impl Fn(&RepetitionRecord, &str) -> Option<f64>,
    notes: &mut Vec<String>,
    name: &str,
) -> Option<AttackSummary> {
    let mut tpr = BTreeMap::new();
    for &f in &cfg.fpr_targets {
        let key = fpr_key(f);
        let (values, baselines): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter_map(|r| {
                let t = tpr_at(r, &key)?;
                let n_neg = r.game.non_members as f64;
                // A random guesser admits floor(f * n_neg) false positives and
                // about 2/N members per false positive it is allowed.
                Some((t, r.game.baseline * ((f * n_neg).floor() + 1.0)))
            })
            .unzip();
        if values.is_empty() {
            continue;
        }
        match aggregate_against(&values, &baselines) {
            Ok(a) => {
                tpr.insert(key, a);
            }
            Err(e) => notes.push(format!("{name}: aggregation at FPR {f:?} failed: {e}")),
        }
    }
    if tpr.is_empty() {
        return None;
    }
    let reps: Vec<IdentifiedRepetition> = records
        .iter()
        .filter_map(|r| {
            Some(IdentifiedRepetition {
                identified: identified(r)?,
                members: r.members.clone(),
            })
        })
        .collect();
    let labels = match label_characteristics(d, &reps) {
        Ok(l) => Some(l),
        Err(e) => {
            notes.push(format!("{name}: label analysis unavailable: {e}"));
            None
        }
    };
    let metadata = cfg.metadata_key.as_ref().and_then(|k| match metadata_characteristics(d, &reps, k) {
        Ok(m) => Some(m),
        Err(e) => {
            notes.push(format!("{name}: metadata analysis unavailable: {e}"));
            None
        }
    });
    let mut median_minority_tpr = BTreeMap::new();
    for &f in &cfg.fpr_targets {
        let key = fpr_key(f);
        let v: Vec<f64> = records
            .iter()
            .filter_map(|r| r.attacks.get(name).and_then(|a| a.minority_tpr.get(&key).copied().flatten()))
            .collect();
        median_minority_tpr.insert(key, (!v.is_empty()).then(|| median(&v)));
    }
    let aucs: Vec<f64> = records.iter().filter_map(|r| r.attacks.get(name).map(|a| a.auc)).collect();
    Some(AttackSummary {
        tpr,
        median_minority_tpr,
        mean_auc: if aucs.is_empty() { 0.0 } else { aucs.iter().sum::<f64>() / aucs.len() as f64 },
        mean_identified: reps.iter().map(|r| r.identified.len() as f64).sum::<f64>() / reps.len().max(1) as f64,
        labels,
        metadata,
    })
}

fn assemble(cfg: &ExperimentConfig, d: &Dataset, results: Vec<(usize, Result<RepetitionRecord>)>, resumed: Vec<usize>) -> Result<RunOutcome> {
    let mut repetitions = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(rec) => repetitions.push(rec),
            Err(e) => failures.push(RepetitionFailure { index: r, error: e.to_string() }),
        }
    }
    let mut notes = Vec::new();
    if !failures.is_empty() {
        notes.push(format!("{} of {} repetitions failed", failures.len(), cfg.repetitions));
    }
    let records: Vec<&RepetitionRecord> = repetitions.iter().collect();
    let mut attacks = BTreeMap::new();
    for kind in AttackKind::ALL {
        let name = kind.name();
        let summary = summarize(
            cfg,
            d,
            &records,
            |r| r.attacks.get(name).map(|a| a.identified.clone()),
            |r, key| r.attacks.get(name).and_then(|a| a.tpr.get(key).copied()),
            &mut notes,
            name,
        );
        if let Some(s) = summary {
            attacks.insert(name.to_string(), s);
        }
    }
    let union_of = |r: &RepetitionRecord| -> Vec<String> {
        let set: BTreeSet<&String> = r.attacks.values().flat_map(|a| a.identified.iter()).collect();
        r.members.iter().filter(|m| set.contains(m)).cloned().collect()
    };
    let zero = fpr_key(0.0);
    let combined_cfg = ExperimentConfig {
        fpr_targets: vec![0.0],
        ..cfg.clone()
    };
    let combined = summarize(
        &combined_cfg,
        d,
        &records,
        |r| Some(union_of(r)),
        |r, key| (key == zero).then(|| r.union_identified as f64 / r.game.members as f64),
        &mut notes,
        "combined",
    )
    .map(|mut s| {
        s.median_minority_tpr.clear();
        s.mean_auc = 0.0;
        s
    });
    let overlap_reps: Vec<OverlapRepetition> = records
        .iter()
        .filter_map(|r| {
            Some(OverlapRepetition {
                a: r.attacks.get("lira")?.identified.clone(),
                b: r.attacks.get("rmia")?.identified.clone(),
                population: r.game.members,
            })
        })
        .collect();
    let overlap = match overlap_analysis(&overlap_reps) {
        Ok(o) => Some(o),
        Err(e) => {
            notes.push(format!("overlap analysis unavailable: {e}"));
            None
        }
    };
    let mut mean_roc = BTreeMap::new();
    for kind in AttackKind::ALL {
        let rows: Vec<&Vec<f64>> = records.iter().filter_map(|r| r.attacks.get(kind.name()).map(|a| &a.roc_grid)).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = (0..ROC_GRID.len()).map(|j| rows.iter().map(|row| row[j]).sum::<f64>() / rows.len() as f64).collect();
        mean_roc.insert(kind.name().to_string(), mean);
    }
    let [neg, pos] = d.class_counts();
    let report = ExperimentReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: identity_text(cfg),
        repetitions_requested: cfg.repetitions,
        repetitions,
        failures,
        attacks,
        combined,
        overlap,
        dataset_positive_fraction: pos as f64 / (neg + pos) as f64,
        roc_grid: ROC_GRID.to_vec(),
        mean_roc,
        notes,
    };
    let report_path = cfg.output_dir.join("report.json");
    write_file(&report_path, report.to_json())?;
    Ok(RunOutcome {
        report,
        report_path,
        resumed,
    })
}
