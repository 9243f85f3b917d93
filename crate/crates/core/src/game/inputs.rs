//! The adversary's view of one game: target and shadow confidences for
//! every challenge candidate and every reference point, plus the inclusion
//! mask. Stored as `confidences.csv`:
//!
//! ```text
//! id,role,is_member,label,target,s_0,...,s_{K-1},m_0,...,m_{K-1}
//! ```
//!
//! `role` is `candidate` or `reference`; `is_member` is `0`/`1` for
//! candidates and empty for references; `m_i` is the inclusion bit of the
//! row's sample in shadow `i` (always `0` for references).

use std::collections::HashSet;
use std::io::{Read, Write};

use super::{collect_confidences, ConfidenceMatrix, GameError, ShadowEnsemble, TargetArtifacts};
use crate::data::Dataset;
use crate::nnet::predict_confidence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Candidate,
    Reference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackInputs {
    pub candidate_ids: Vec<String>,
    pub is_member: Vec<bool>,
    pub candidate_labels: Vec<u8>,
    pub target: Vec<f64>,
    pub shadow: ConfidenceMatrix,
    pub z_ids: Vec<String>,
    pub z_labels: Vec<u8>,
    pub z_target: Vec<f64>,
    pub z_shadow: ConfidenceMatrix,
}

impl AttackInputs {
    pub fn shadows(&self) -> usize {
        self.shadow.shadows
    }
}

pub fn collect_attack_inputs(d: &Dataset, artifacts: &TargetArtifacts, ensemble: &ShadowEnsemble) -> Result<AttackInputs, GameError> {
    let candidates = d.select(&artifacts.challenge.candidates)?;
    let refs = d.select(&ensemble.z_ids)?;
    let shadow = collect_confidences(ensemble, &candidates)?;
    let z_shadow = collect_confidences(ensemble, &refs)?;
    let z_target = refs
        .iter()
        .map(|s| predict_confidence(&artifacts.model, &s.features, s.label))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttackInputs {
        candidate_ids: artifacts.challenge.candidates.clone(),
        is_member: artifacts.challenge.is_member.clone(),
        candidate_labels: candidates.iter().map(|s| s.label).collect(),
        target: artifacts.confidences.clone(),
        shadow,
        z_ids: ensemble.z_ids.clone(),
        z_labels: refs.iter().map(|s| s.label).collect(),
        z_target,
        z_shadow,
    })
}

pub fn write_attack_inputs<W: Write>(inputs: &AttackInputs, writer: W) -> Result<(), GameError> {
    let err = |e: csv::Error| GameError::Table(e.to_string());
    let k = inputs.shadows();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["id".to_string(), "role".into(), "is_member".into(), "label".into(), "target".into()];
    header.extend((0..k).map(|i| format!("s_{i}")));
    header.extend((0..k).map(|i| format!("m_{i}")));
    w.write_record(&header).map_err(err)?;
    let mut emit = |id: &str, role: &str, member: &str, label: u8, target: f64, conf: &[f64], mask: &[bool]| {
        let mut row = vec![id.to_string(), role.to_string(), member.to_string(), label.to_string(), format!("{target:?}")];
        row.extend(conf.iter().map(|v| format!("{v:?}")));
        row.extend(mask.iter().map(|&m| if m { "1" } else { "0" }.to_string()));
        w.write_record(&row)
    };
    for i in 0..inputs.candidate_ids.len() {
        let member = if inputs.is_member[i] { "1" } else { "0" };
        emit(
            &inputs.candidate_ids[i],
            "candidate",
            member,
            inputs.candidate_labels[i],
            inputs.target[i],
            inputs.shadow.row(i),
            inputs.shadow.mask_row(i),
        )
        .map_err(err)?;
    }
    for i in 0..inputs.z_ids.len() {
        emit(&inputs.z_ids[i], "reference", "", inputs.z_labels[i], inputs.z_target[i], inputs.z_shadow.row(i), inputs.z_shadow.mask_row(i))
            .map_err(err)?;
    }
    w.flush().map_err(|e| GameError::Table(e.to_string()))
}

fn parse_confidence(cell: &str) -> Result<f64, String> {
    let v: f64 = cell.parse().map_err(|_| format!("bad confidence {cell:?}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("confidence {cell:?} outside (0, 1)"))
    }
}

fn parse_bit(cell: &str) -> Result<bool, String> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, found {other:?}")),
    }
}

pub fn read_attack_inputs<R: Read>(reader: R) -> Result<AttackInputs, GameError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| GameError::Table(e.to_string()))?.clone();
    let fixed = ["id", "role", "is_member", "label", "target"];
    if header.len() < fixed.len() + 2 || !(header.len() - fixed.len()).is_multiple_of(2) {
        return Err(GameError::Table("unexpected column count".into()));
    }
    let k = (header.len() - fixed.len()) / 2;
    let expected: Vec<String> = fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..k).map(|i| format!("s_{i}")))
        .chain((0..k).map(|i| format!("m_{i}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(GameError::Table(format!("header must be {}", expected.join(","))));
    }
    let empty = |shadows| ConfidenceMatrix {
        ids: Vec::new(),
        shadows,
        values: Vec::new(),
        mask: Vec::new(),
    };
    let mut out = AttackInputs {
        candidate_ids: Vec::new(),
        is_member: Vec::new(),
        candidate_labels: Vec::new(),
        target: Vec::new(),
        shadow: empty(k),
        z_ids: Vec::new(),
        z_labels: Vec::new(),
        z_target: Vec::new(),
        z_shadow: empty(k),
    };
    let mut seen = HashSet::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| GameError::Table(format!("row {line}: {e}")))?;
        let row_err = |m: String| GameError::Table(format!("row {line}: {m}"));
        let id = rec[0].to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(row_err(format!("empty or duplicate id {id:?}")));
        }
        let label = match &rec[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(row_err(format!("bad label {other:?}"))),
        };
        let target = parse_confidence(&rec[4]).map_err(row_err)?;
        let conf = (0..k).map(|i| parse_confidence(&rec[5 + i])).collect::<Result<Vec<_>, _>>().map_err(row_err)?;
        let mask = (0..k).map(|i| parse_bit(&rec[5 + k + i])).collect::<Result<Vec<_>, _>>().map_err(row_err)?;
        match &rec[1] {
            "candidate" => {
                let member = parse_bit(&rec[2]).map_err(row_err)?;
                out.candidate_ids.push(id.clone());
                out.is_member.push(member);
                out.candidate_labels.push(label);
                out.target.push(target);
                out.shadow.ids.push(id);
                out.shadow.values.extend(conf);
                out.shadow.mask.extend(mask);
            }
            "reference" => {
                if !rec[2].is_empty() {
                    return Err(row_err("reference rows carry no membership bit".into()));
                }
                if mask.iter().any(|&m| m) {
                    return Err(row_err("reference point included in a shadow".into()));
                }
                out.z_ids.push(id.clone());
                out.z_labels.push(label);
                out.z_target.push(target);
                out.z_shadow.ids.push(id);
                out.z_shadow.values.extend(conf);
                out.z_shadow.mask.extend(mask);
            }
            other => return Err(row_err(format!("unknown role {other:?}"))),
        }
    }
    if out.candidate_ids.is_empty() {
        return Err(GameError::Table("no candidate rows".into()));
    }
    Ok(out)
}
