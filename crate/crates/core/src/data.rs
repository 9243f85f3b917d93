//! Tabular binary-classification datasets.
//!
//! The on-disk format is a header-bearing UTF-8 CSV:
//!
//! ```text
//! id,label[,meta_<key>...],f_0,f_1,...,f_{d-1}
//! ```
//!
//! `label` is `0` or `1`. Metadata cells may be empty (attribute absent).
//! Feature columns must appear in index order. Ingestion removes exact
//! duplicates (identical feature vector and label, first occurrence kept) and
//! drops every record whose feature vector also occurs with the other label.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid split fractions: {0}")]
    Fractions(String),
    #[error("class weights undefined: only label {present} present")]
    SingleClass { present: u8 },
    #[error("class weights undefined: no labels")]
    NoLabels,
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
}

/// Column naming of the dataset CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSchema {
    pub id: String,
    pub label: String,
    pub meta_prefix: String,
    pub feature_prefix: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            label: "label".into(),
            meta_prefix: "meta_".into(),
            feature_prefix: "f_".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: u8,
    pub features: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

/// An immutable, validated collection of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<SampleRecord>,
    dimension: usize,
    class_counts: [usize; 2],
    metadata_keys: BTreeSet<String>,
    index: HashMap<String, usize>,
}

/// What ingestion removed while cleaning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningStats {
    pub rows_read: usize,
    pub duplicates_removed: usize,
    pub conflicts_removed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub cleaning: CleaningStats,
}

/// Bit pattern of a feature vector with `-0.0` folded onto `0.0`.
fn feature_key(features: &[f64]) -> Vec<u64> {
    features
        .iter()
        .map(|&v| if v == 0.0 { 0u64 } else { v.to_bits() })
        .collect()
}

impl Dataset {
    /// Builds a dataset from records that are already clean. Fails on any
    /// invariant violation, including duplicate feature vectors.
    pub fn new(samples: Vec<SampleRecord>) -> Result<Self, DataError> {
        let dimension = samples
            .first()
            .map(|s| s.features.len())
            .ok_or_else(|| DataError::Invalid("no samples".into()))?;
        if dimension == 0 {
            return Err(DataError::Invalid("feature dimension must be positive".into()));
        }
        let mut index = HashMap::with_capacity(samples.len());
        let mut seen = HashMap::with_capacity(samples.len());
        let mut class_counts = [0usize; 2];
        let mut metadata_keys = BTreeSet::new();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dimension {
                return Err(DataError::Invalid(format!(
                    "sample {:?} has {} features, expected {dimension}",
                    s.id,
                    s.features.len()
                )));
            }
            if s.label > 1 {
                return Err(DataError::Invalid(format!("sample {:?} has label {}", s.id, s.label)));
            }
            if let Some(v) = s.features.iter().find(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("sample {:?} has non-finite feature {v}", s.id)));
            }
            if s.metadata.values().any(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("sample {:?} has non-finite metadata", s.id)));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(DataError::Invalid(format!("duplicate id {:?}", s.id)));
            }
            if let Some(prev) = seen.insert(feature_key(&s.features), i) {
                return Err(DataError::Invalid(format!(
                    "samples {:?} and {:?} share a feature vector",
                    samples[prev].id, s.id
                )));
            }
            class_counts[s.label as usize] += 1;
            metadata_keys.extend(s.metadata.keys().cloned());
        }
        Ok(Self {
            samples,
            dimension,
            class_counts,
            metadata_keys,
            index,
        })
    }

    /// Applies the cleaning contract and then validates.
    pub fn from_records(records: Vec<SampleRecord>) -> Result<LoadOutcome, DataError> {
        let rows_read = records.len();
        // label occurrence per feature vector
        let mut labels_by_key: HashMap<Vec<u64>, [bool; 2]> = HashMap::new();
        for r in &records {
            if r.label > 1 {
                return Err(DataError::Invalid(format!("sample {:?} has label {}", r.id, r.label)));
            }
            labels_by_key.entry(feature_key(&r.features)).or_default()[r.label as usize] = true;
        }
        let mut kept = Vec::with_capacity(records.len());
        let mut emitted = BTreeSet::new();
        let mut stats = CleaningStats {
            rows_read,
            ..CleaningStats::default()
        };
        for r in records {
            let key = feature_key(&r.features);
            if labels_by_key[&key] == [true, true] {
                stats.conflicts_removed += 1;
                continue;
            }
            if !emitted.insert(key) {
                stats.duplicates_removed += 1;
                continue;
            }
            kept.push(r);
        }
        Ok(LoadOutcome {
            dataset: Dataset::new(kept)?,
            cleaning: stats,
        })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn class_counts(&self) -> [usize; 2] {
        self.class_counts
    }

    pub fn metadata_keys(&self) -> &BTreeSet<String> {
        &self.metadata_keys
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.position(id).map(|i| &self.samples[i])
    }

    /// Looks up every id, preserving the order given.
    pub fn select<I, S>(&self, ids: I) -> Result<Vec<&SampleRecord>, DataError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        ids.into_iter()
            .map(|id| {
                self.get(id.as_ref())
                    .ok_or_else(|| DataError::UnknownId(id.as_ref().to_string()))
            })
            .collect()
    }

    /// The label that occurs less often (ties resolve to 1).
    pub fn minority_label(&self) -> u8 {
        if self.class_counts[0] < self.class_counts[1] {
            0
        } else {
            1
        }
    }
}

/// Reads and cleans a dataset from any CSV source.
pub fn read_dataset<R: Read>(reader: R, schema: &ColumnSchema) -> Result<LoadOutcome, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let layout = Layout::from_header(&header, schema)?;

    let mut records = Vec::new();
    let mut ids = HashMap::new();
    for result in rdr.records() {
        let row = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::Row {
                row: line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record = layout.parse_row(&row).map_err(|message| DataError::Row { row: line, message })?;
        if let Some(first) = ids.insert(record.id.clone(), line) {
            return Err(DataError::Row {
                row: line,
                message: format!("duplicate id {:?} (first seen on row {first})", record.id),
            });
        }
        records.push(record);
    }
    Dataset::from_records(records)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<LoadOutcome, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(std::io::BufReader::new(file), schema)
}

/// Serializes a dataset. Output is byte-stable: floats use the shortest
/// representation that round-trips exactly.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W, schema: &ColumnSchema) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec![schema.id.clone(), schema.label.clone()];
    header.extend(dataset.metadata_keys.iter().map(|k| format!("{}{k}", schema.meta_prefix)));
    header.extend((0..dataset.dimension).map(|i| format!("{}{i}", schema.feature_prefix)));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in &dataset.samples {
        row.clear();
        row.push(s.id.clone());
        row.push(s.label.to_string());
        for k in &dataset.metadata_keys {
            row.push(s.metadata.get(k).map(|v| format!("{v:?}")).unwrap_or_default());
        }
        row.extend(s.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_dataset(dataset, std::io::BufWriter::new(file), schema)
}

struct Layout {
    id: usize,
    label: usize,
    meta: Vec<(usize, String)>,
    features: Vec<usize>,
    width: usize,
}

impl Layout {
    fn from_header(header: &csv::StringRecord, schema: &ColumnSchema) -> Result<Self, DataError> {
        let mut id = None;
        let mut label = None;
        let mut meta = Vec::new();
        let mut features = Vec::new();
        for (col, name) in header.iter().enumerate() {
            if name == schema.id {
                if id.replace(col).is_some() {
                    return Err(DataError::Header(format!("duplicate column {name:?}")));
                }
            } else if name == schema.label {
                if label.replace(col).is_some() {
                    return Err(DataError::Header(format!("duplicate column {name:?}")));
                }
            } else if let Some(key) = name.strip_prefix(schema.meta_prefix.as_str()) {
                if key.is_empty() || meta.iter().any(|(_, k)| k == key) {
                    return Err(DataError::Header(format!("bad metadata column {name:?}")));
                }
                meta.push((col, key.to_string()));
            } else if let Some(idx) = name.strip_prefix(schema.feature_prefix.as_str()) {
                let expected = features.len();
                if idx.parse::<usize>().ok() != Some(expected) || idx != expected.to_string() {
                    return Err(DataError::Header(format!(
                        "feature column {name:?} out of order, expected {}{expected}",
                        schema.feature_prefix
                    )));
                }
                features.push(col);
            } else {
                return Err(DataError::Header(format!("unknown column {name:?}")));
            }
        }
        let id = id.ok_or_else(|| DataError::Header(format!("missing {:?} column", schema.id)))?;
        let label = label.ok_or_else(|| DataError::Header(format!("missing {:?} column", schema.label)))?;
        if features.is_empty() {
            return Err(DataError::Header("no feature columns".into()));
        }
        Ok(Self {
            id,
            label,
            meta,
            features,
            width: header.len(),
        })
    }

    fn parse_row(&self, row: &csv::StringRecord) -> Result<SampleRecord, String> {
        if row.len() != self.width {
            return Err(format!("expected {} fields, found {}", self.width, row.len()));
        }
        let id = row[self.id].to_string();
        if id.is_empty() {
            return Err("empty id".into());
        }
        let label = match &row[self.label] {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("label must be 0 or 1, found {other:?}")),
        };
        let mut metadata = BTreeMap::new();
        for (col, key) in &self.meta {
            let cell = &row[*col];
            if cell.is_empty() {
                continue;
            }
            let v = parse_finite(cell).map_err(|e| format!("metadata {key:?}: {e}"))?;
            metadata.insert(key.clone(), v);
        }
        let features = self
            .features
            .iter()
            .enumerate()
            .map(|(i, &col)| parse_finite(&row[col]).map_err(|e| format!("feature {i}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SampleRecord {
            id,
            label,
            features,
            metadata,
        })
    }
}

fn parse_finite(cell: &str) -> Result<f64, String> {
    let v: f64 = cell.trim().parse().map_err(|_| format!("not a number: {cell:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value {cell:?}"))
    }
}

/// Train / validation / population partition of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub population_ids: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub population: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.45,
            validation: 0.10,
            population: 0.45,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.validation, self.population];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(DataError::Fractions(format!("fractions must be non-negative, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Fractions(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Uniformly random partition. Train and validation sizes are floored
/// (with a 1e-9 guard against representation error such as
/// `0.29 * 100 = 28.999999999999996`); the remainder goes to population.
pub fn split_dataset(d: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitAssignment, DataError> {
    fractions.validate()?;
    let n = d.len();
    let n_train = (fractions.train * n as f64 + 1e-9).floor() as usize;
    let n_val = (fractions.validation * n as f64 + 1e-9).floor() as usize;
    let n_pop = n - n_train - n_val;
    for (name, frac, size) in [
        ("train", fractions.train, n_train),
        ("validation", fractions.validation, n_val),
        ("population", fractions.population, n_pop),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(DataError::Fractions(format!("{name} split is empty for {n} samples")));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let ids_of = |range: &[usize]| {
        let mut idx = range.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| d.samples[i].id.clone()).collect::<Vec<_>>()
    };
    Ok(SplitAssignment {
        train_ids: ids_of(&order[..n_train]),
        validation_ids: ids_of(&order[n_train..n_train + n_val]),
        population_ids: ids_of(&order[n_train + n_val..]),
        seed,
    })
}

/// Per-class loss weights, inversely proportional to class frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        negative: 1.0,
        positive: 1.0,
    };

    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// `w_c = n / (2 n_c)`, so both classes carry the same total weight.
pub fn class_weights<I: IntoIterator<Item = u8>>(labels: I) -> Result<ClassWeights, DataError> {
    let mut counts = [0usize; 2];
    for l in labels {
        counts[usize::from(l.min(1))] += 1;
    }
    let n = counts[0] + counts[1];
    match counts {
        [0, 0] => Err(DataError::NoLabels),
        [0, _] => Err(DataError::SingleClass { present: 1 }),
        [_, 0] => Err(DataError::SingleClass { present: 0 }),
        [n0, n1] => Ok(ClassWeights {
            negative: n as f64 / (2.0 * n0 as f64),
            positive: n as f64 / (2.0 * n1 as f64),
        }),
    }
}
