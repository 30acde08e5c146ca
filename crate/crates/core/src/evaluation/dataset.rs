use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_err, EvaluationError};
use crate::types::{ClaimPair, LabelScheme};

/// Where a claims file lives and how its records are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub scheme: LabelScheme,
    pub path: PathBuf,
    pub claim_field: String,
    pub label_field: String,
    /// Records without this field are identified by their line number.
    pub id_field: String,
}

impl DatasetDescriptor {
    pub fn new(name: impl Into<String>, scheme: LabelScheme, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            scheme,
            path: path.into(),
            claim_field: "claim".into(),
            label_field: "label".into(),
            id_field: "id".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRecord {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub claims: Vec<ClaimPair>,
    pub rejected: Vec<RejectedRecord>,
}

fn field_as_string(record: &Value, field: &str) -> Option<String> {
    match record.get(field)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads a JSONL claims file. Records with a missing claim, a label outside
/// the scheme or a repeated id are rejected and reported; the rest keep file
/// order with their labels in canonical spelling.
pub fn load_dataset(desc: &DatasetDescriptor) -> Result<LoadedDataset, EvaluationError> {
    if !desc.path.is_file() {
        return Err(EvaluationError::FileMissing(desc.path.clone()));
    }
    let raw = fs::read_to_string(&desc.path).map_err(io_err(&desc.path))?;
    let mut claims = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut reject = |reason: String| {
            rejected.push(RejectedRecord {
                line: line_no,
                reason,
            })
        };
        let record: Value = match serde_json::from_str(line) {
            Ok(v @ Value::Object(_)) => v,
            Ok(_) => {
                reject("record is not a JSON object".into());
                continue;
            }
            Err(e) => {
                reject(format!("invalid JSON: {e}"));
                continue;
            }
        };
        let Some(text) = record.get(&desc.claim_field).and_then(Value::as_str) else {
            reject(format!("missing string field {:?}", desc.claim_field));
            continue;
        };
        let Some(label) = field_as_string(&record, &desc.label_field) else {
            reject(format!("missing label field {:?}", desc.label_field));
            continue;
        };
        let Some(label) = desc.scheme.canonical_label(&label) else {
            reject(format!(
                "label {label:?} is not in scheme {}",
                desc.scheme.name
            ));
            continue;
        };
        let id = field_as_string(&record, &desc.id_field).unwrap_or_else(|| line_no.to_string());
        if !seen.insert(id.clone()) {
            reject(format!("duplicate id {id:?}"));
            continue;
        }
        match ClaimPair::new(id, text.trim()) {
            Ok(claim) => claims.push(claim.with_gold_label(label)),
            Err(e) => reject(e.to_string()),
        }
    }
    if !rejected.is_empty() {
        log::warn!(
            "{}: rejected {} record(s); first at line {}: {}",
            desc.path.display(),
            rejected.len(),
            rejected[0].line,
            rejected[0].reason
        );
    }
    if claims.is_empty() {
        return Err(EvaluationError::EmptyDataset(desc.name.clone()));
    }
    Ok(LoadedDataset { claims, rejected })
}

/// The first `limit` claims of a seeded shuffle, returned in file order.
pub fn select_subset(claims: &[ClaimPair], limit: Option<usize>, seed: u64) -> Vec<ClaimPair> {
    let Some(limit) = limit.filter(|l| *l < claims.len()) else {
        return claims.to_vec();
    };
    let mut order: Vec<usize> = (0..claims.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked = order[..limit].to_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| claims[i].clone()).collect()
}
