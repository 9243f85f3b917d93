//! Membership scores from target and shadow confidences. Higher scores mean
//! "more likely a member"; a threshold on them is left to the evaluation.

mod lira;
mod rmia;

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::StatsError;

pub use lira::{lira_log_score, lira_score, rescale_confidence, run_lira, LiraFallback, LiraParams};
pub use rmia::{rmia_score, run_rmia, RmiaParams, RmiaScore};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid parameter {name}: {message}")]
    Param { name: &'static str, message: String },
    #[error("empty {0} population")]
    EmptyPopulation(&'static str),
    #[error("empty reference set")]
    EmptyReference,
    #[error("input shape: {0}")]
    Shape(String),
    #[error("non-finite score for {0:?}")]
    NonFinite(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("score table: {0}")]
    Table(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Lira,
    Rmia,
}

impl AttackKind {
    pub const ALL: [AttackKind; 2] = [AttackKind::Lira, AttackKind::Rmia];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Lira => "lira",
            AttackKind::Rmia => "rmia",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-sample notes on how a score was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFlag {
    /// No shadow was trained on the sample; the in-distribution was substituted.
    NoInShadows,
    /// Every shadow was trained on the sample; the out-distribution was substituted.
    NoOutShadows,
    /// Neither distribution could be estimated; the score is neutral.
    Neutral,
    /// RMIA had no shadow excluding the sample and averaged over all shadows.
    AllShadowsInclude,
}

impl ScoreFlag {
    pub fn name(self) -> &'static str {
        match self {
            ScoreFlag::NoInShadows => "no-in-shadows",
            ScoreFlag::NoOutShadows => "no-out-shadows",
            ScoreFlag::Neutral => "neutral",
            ScoreFlag::AllShadowsInclude => "all-shadows-include",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [ScoreFlag::NoInShadows, ScoreFlag::NoOutShadows, ScoreFlag::Neutral, ScoreFlag::AllShadowsInclude]
            .into_iter()
            .find(|f| f.name() == s)
    }
}

/// One score per challenge candidate, in challenge order. LiRA scores are
/// stored as `ln LR`, which orders candidates exactly as `LR` does and stays
/// finite where `LR` would overflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScores {
    pub attack: AttackKind,
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub is_member: Vec<bool>,
    pub flags: Vec<Vec<ScoreFlag>>,
}

impl AttackScores {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|f| !f.is_empty()).count()
    }

    pub fn members(&self) -> usize {
        self.is_member.iter().filter(|&&m| m).count()
    }

    fn check(&self) -> Result<(), AttackError> {
        let n = self.ids.len();
        if self.scores.len() != n || self.is_member.len() != n || self.flags.len() != n {
            return Err(AttackError::Shape("score table columns differ in length".into()));
        }
        if let Some(i) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(AttackError::NonFinite(self.ids[i].clone()));
        }
        Ok(())
    }
}

pub fn write_scores<W: Write>(scores: &AttackScores, writer: W) -> Result<(), AttackError> {
    scores.check()?;
    let err = |e: csv::Error| AttackError::Table(e.to_string());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["id", "score", "is_member", "flags"]).map_err(err)?;
    for i in 0..scores.len() {
        let flags: Vec<&str> = scores.flags[i].iter().map(|f| f.name()).collect();
        w.write_record([
            scores.ids[i].as_str(),
            &format!("{:?}", scores.scores[i]),
            if scores.is_member[i] { "1" } else { "0" },
            &flags.join(";"),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AttackError::Table(e.to_string()))
}

pub fn read_scores<R: Read>(reader: R, attack: AttackKind) -> Result<AttackScores, AttackError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers().map_err(|e| AttackError::Table(e.to_string()))?;
    if header.iter().ne(["id", "score", "is_member", "flags"]) {
        return Err(AttackError::Table("header must be id,score,is_member,flags".into()));
    }
    let mut out = AttackScores {
        attack,
        ids: Vec::new(),
        scores: Vec::new(),
        is_member: Vec::new(),
        flags: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| AttackError::Table(format!("row {line}: {e}")))?;
        let bad = |m: String| AttackError::Table(format!("row {line}: {m}"));
        if rec[0].is_empty() || !seen.insert(rec[0].to_string()) {
            return Err(bad(format!("empty or duplicate id {:?}", &rec[0])));
        }
        let score: f64 = rec[1].parse().map_err(|_| bad(format!("bad score {:?}", &rec[1])))?;
        if !score.is_finite() {
            return Err(bad("score is not finite".into()));
        }
        let member = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("bad membership bit {other:?}"))),
        };
        let flags = if rec[3].is_empty() {
            Vec::new()
        } else {
            rec[3]
                .split(';')
                .map(|f| ScoreFlag::parse(f).ok_or_else(|| bad(format!("unknown flag {f:?}"))))
                .collect::<Result<Vec<_>, _>>()?
        };
        out.ids.push(rec[0].to_string());
        out.scores.push(score);
        out.is_member.push(member);
        out.flags.push(flags);
    }
    Ok(out)
}
