//! Dataset ingestion and resumable experiment runs.
//!
//! A run directory holds one trace per claim under `traces/`, plus
//! `confidences.csv`, `kde.csv`, `metrics.json` and `run-manifest.json`.
//! Claims whose trace already exists are not recomputed, so an interrupted
//! run can be resumed by running it again.

mod dataset;
mod pipeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use dataset::{load_dataset, select_subset, DatasetDescriptor, LoadedDataset, RejectedRecord};
pub use pipeline::{
    verify_claim, Abstention, ClaimTrace, Condition, DocRef, Providers, RetrievalTrace, Stage,
};

use crate::analysis::{
    compute_metrics, kde_by_group, profile_from_verdicts, write_confidences_csv, write_kde_csv,
    ConfidenceRow, MetricsReport, DEFAULT_GRID_POINTS,
};
use crate::error::{io_err, ConfigError, EvaluationError};
use crate::text::fnv1a64;
use crate::types::{ClaimPair, PipelineConfig};
use crate::verdict::VerdictSource;

pub const RUN_FORMAT: &str = "claimcheck-run/1";
pub const TRACES_DIR: &str = "traces";
pub const CONFIDENCES_FILE: &str = "confidences.csv";
pub const KDE_FILE: &str = "kde.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "run-manifest.json";

/// Predicted-label placeholder for abstentions when scoring.
pub const ABSTAIN: &str = "<abstain>";

/// One cell of the experiment grid: a dataset, a set of verdict sources
/// (optionally including the merged evidence) and a claim condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetDescriptor,
    pub sources: Vec<VerdictSource>,
    pub condition: Condition,
    pub limit: Option<usize>,
    pub cfg: PipelineConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cfg.validate()?;
        if self.sources.is_empty() {
            return Err(ConfigError::Invalid("no sources selected".into()));
        }
        let mut sorted = self.sources.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.sources.len() {
            return Err(ConfigError::Invalid("a source is listed twice".into()));
        }
        if self.limit == Some(0) {
            return Err(ConfigError::Invalid("limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Claims processed concurrently.
    pub workers: usize,
    /// Stop after computing this many new traces without writing the
    /// summary files, as if the run had been interrupted.
    pub max_new_claims: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            max_new_claims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub claims: usize,
    pub rejected: usize,
    /// Traces reused from an earlier run.
    pub resumed: usize,
    pub processed: usize,
    /// False when stopped early by `max_new_claims`.
    pub complete: bool,
    pub abstentions: BTreeMap<VerdictSource, usize>,
    pub metrics: BTreeMap<VerdictSource, MetricsReport>,
}

/// File name for a claim's trace; ids that are not filename-safe get a hash
/// suffix so distinct ids never collide.
pub fn trace_file_name(claim_id: &str) -> String {
    let safe: String = claim_id
        .chars()
        .enumerate()
        .map(|(i, c)| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_') || (c == '.' && i > 0) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == claim_id {
        format!("{safe}.json")
    } else {
        format!("{safe}-{:016x}.json", fnv1a64(claim_id.as_bytes()))
    }
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvaluationError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn read_trace(path: &Path, claim: &ClaimPair, condition: Condition) -> Option<ClaimTrace> {
    let raw = fs::read(path).ok()?;
    match serde_json::from_slice::<ClaimTrace>(&raw) {
        Ok(t) if t.claim.id == claim.id && t.condition == condition => Some(t),
        Ok(_) => {
            log::warn!(
                "{} belongs to another claim or condition; recomputing",
                path.display()
            );
            None
        }
        Err(e) => {
            log::warn!("{} is unreadable ({e}); recomputing", path.display());
            None
        }
    }
}

pub fn load_trace(path: &Path) -> Result<ClaimTrace, EvaluationError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&raw).map_err(|e| EvaluationError::Artifact {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn manifest(
    plan: &ExperimentPlan,
    providers: &Providers,
    claims: &[ClaimPair],
) -> serde_json::Value {
    json!({
        "format": RUN_FORMAT,
        "dataset": {
            "name": plan.dataset.name,
            "path": plan.dataset.path,
            "scheme": plan.dataset.scheme,
            "claim_field": plan.dataset.claim_field,
            "label_field": plan.dataset.label_field,
            "id_field": plan.dataset.id_field,
        },
        "condition": plan.condition,
        "sources": plan.sources,
        "limit": plan.limit,
        "pipeline": plan.cfg,
        "providers": providers.identities(),
        "prompt_template": providers.template.as_str(),
        "logprob_floor": providers.logprob_floor,
        "claims": claims.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
    })
}

/// Metrics and abstention counts, keyed by verdict source.
pub type SourceScores = (
    BTreeMap<VerdictSource, MetricsReport>,
    BTreeMap<VerdictSource, usize>,
);

/// Summary metrics per verdict source; abstentions count as wrong answers.
pub fn metrics_from_traces(
    traces: &[ClaimTrace],
    sources: &[VerdictSource],
    plan: &ExperimentPlan,
) -> Result<SourceScores, EvaluationError> {
    let mut metrics = BTreeMap::new();
    let mut abstentions = BTreeMap::new();
    for source in sources {
        let mut pairs = Vec::with_capacity(traces.len());
        let mut abstained = 0;
        for t in traces {
            let gold = t.claim.gold_label.as_deref().unwrap_or_default();
            let predicted = match t.verdict(source) {
                Some(v) => v.label.as_str(),
                None => {
                    abstained += 1;
                    ABSTAIN
                }
            };
            pairs.push((gold, predicted));
        }
        metrics.insert(
            source.clone(),
            compute_metrics(&pairs, &plan.dataset.scheme)?,
        );
        abstentions.insert(source.clone(), abstained);
    }
    Ok((metrics, abstentions))
}

/// Runs (or resumes) the plan and writes every artifact into `run_dir`.
pub fn run_experiment(
    plan: &ExperimentPlan,
    providers: &Providers,
    run_dir: &Path,
    options: &RunOptions,
) -> Result<RunSummary, EvaluationError> {
    plan.validate()?;
    let loaded = load_dataset(&plan.dataset)?;
    let claims = select_subset(&loaded.claims, plan.limit, plan.cfg.seed);

    let traces_dir = run_dir.join(TRACES_DIR);
    fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    write_atomic(
        &run_dir.join(MANIFEST_FILE),
        &to_pretty_json(&manifest(plan, providers, &claims)),
    )?;

    let mut slots: Vec<Option<ClaimTrace>> = claims
        .iter()
        .map(|c| read_trace(&traces_dir.join(trace_file_name(&c.id)), c, plan.condition))
        .collect();
    let resumed = slots.iter().filter(|s| s.is_some()).count();
    let mut todo: Vec<usize> = (0..claims.len()).filter(|i| slots[*i].is_none()).collect();
    let complete = match options.max_new_claims {
        Some(n) if n < todo.len() => {
            todo.truncate(n);
            false
        }
        _ => true,
    };
    if resumed > 0 {
        log::info!(
            "resuming: {resumed} of {} claims already have traces",
            claims.len()
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let computed: Vec<(usize, Result<ClaimTrace, EvaluationError>)> = pool.install(|| {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|&i| {
                let claim = &claims[i];
                let trace = verify_claim(
                    claim,
                    &plan.sources,
                    plan.condition,
                    providers,
                    &plan.cfg,
                    &plan.dataset.scheme,
                );
                let path = traces_dir.join(trace_file_name(&claim.id));
                let written = write_atomic(&path, &to_pretty_json(&trace)).map(|_| trace);
                (i, written)
            })
            .collect()
    });
    let processed = computed.len();
    for (i, trace) in computed {
        slots[i] = Some(trace?);
    }

    let mut summary = RunSummary {
        run_dir: run_dir.to_owned(),
        claims: claims.len(),
        rejected: loaded.rejected.len(),
        resumed,
        processed,
        complete,
        abstentions: BTreeMap::new(),
        metrics: BTreeMap::new(),
    };
    if !complete {
        return Ok(summary);
    }

    let traces: Vec<ClaimTrace> = slots
        .into_iter()
        .map(|t| t.expect("every claim has a trace"))
        .collect();
    let rows: Vec<ConfidenceRow> = traces
        .iter()
        .flat_map(|t| profile_from_verdicts(&t.claim.id, &t.verdicts).rows())
        .collect();
    let mut csv = Vec::new();
    write_confidences_csv(&mut csv, &rows).map_err(io_err(run_dir.join(CONFIDENCES_FILE)))?;
    write_atomic(&run_dir.join(CONFIDENCES_FILE), &csv)?;

    let (curves, skipped) = kde_by_group(&rows, DEFAULT_GRID_POINTS);
    for note in skipped {
        log::info!("kde skipped {note}");
    }
    let mut kde = Vec::new();
    write_kde_csv(&mut kde, &curves).map_err(io_err(run_dir.join(KDE_FILE)))?;
    write_atomic(&run_dir.join(KDE_FILE), &kde)?;

    let (metrics, abstentions) = metrics_from_traces(&traces, &plan.sources, plan)?;
    let report = json!({
        "dataset": plan.dataset.name,
        "scheme": plan.dataset.scheme.name,
        "condition": plan.condition,
        "claims": traces.len(),
        "abstentions": abstentions,
        "metrics": metrics,
    });
    write_atomic(&run_dir.join(METRICS_FILE), &to_pretty_json(&report))?;
    summary.metrics = metrics;
    summary.abstentions = abstentions;
    Ok(summary)
}

/// Reads the summary written by [`run_experiment`].
pub fn read_metrics(
    run_dir: &Path,
) -> Result<BTreeMap<VerdictSource, MetricsReport>, EvaluationError> {
    #[derive(Deserialize)]
    struct File {
        metrics: BTreeMap<VerdictSource, MetricsReport>,
    }
    let path = run_dir.join(METRICS_FILE);
    let raw = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice::<File>(&raw)
        .map(|f| f.metrics)
        .map_err(|e| EvaluationError::Artifact {
            path,
            reason: e.to_string(),
        })
}
