use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use claimcheck_core::analysis::{
    kde_by_group, read_confidences_csv, render_kde_svg, write_kde_csv, write_violin_csv,
    DEFAULT_GRID_POINTS,
};
use claimcheck_core::config::{parse_targets, EngineConfig, FileConfig};
use claimcheck_core::evaluation::{
    run_experiment, verify_claim, ClaimTrace, Condition, ExperimentPlan, RunOptions, RunSummary,
    CONFIDENCES_FILE, KDE_FILE,
};
use claimcheck_core::retrieval::build_local_index;
use claimcheck_core::verdict::VerdictSource;
use claimcheck_core::ClaimPair;

use crate::{Cli, Command, UsageError};

const DEFAULT_CONFIG: &str = "claimcheck.toml";

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Index { corpus } => cmd_index(cli, out, corpus),
        Command::Negate { claims } => cmd_negate(cli, out, claims),
        Command::Verify { claim, id } => cmd_verify(cli, out, claim, id),
        Command::Evaluate { workers } => cmd_evaluate(cli, out, *workers),
        Command::Analyze { run_dir } => cmd_analyze(cli, out, run_dir),
    }
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let path = match &cli.config {
        Some(p) => Some(p.clone()),
        None => Some(PathBuf::from(DEFAULT_CONFIG)).filter(|p| p.is_file()),
    };
    let mut config = match path {
        Some(p) => EngineConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => EngineConfig::from_file_config(FileConfig::default(), ".")?,
    };
    if let Some(seed) = cli.seed {
        config.file.pipeline.seed = seed;
    }
    Ok(config)
}

fn targets(cli: &Cli, config: &EngineConfig) -> Result<Vec<VerdictSource>> {
    match &cli.sources {
        Some(list) => Ok(parse_targets(list)?),
        None => Ok(config.default_targets()),
    }
}

fn conditions(cli: &Cli, config: &EngineConfig, allow_all: bool) -> Result<Vec<Condition>> {
    match cli.condition.as_deref().map(str::trim) {
        Some("all" | "both") if allow_all => Ok(Condition::ALL.to_vec()),
        Some(c) => Ok(vec![c
            .parse::<Condition>()
            .map_err(|e| UsageError(e.to_string()))?]),
        None => Ok(vec![config
            .file
            .runtime
            .condition
            .unwrap_or(Condition::OriginalPlusNegated)]),
    }
}

fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_index(cli: &Cli, out: &mut dyn Write, corpus: &Path) -> Result<()> {
    let build = build_local_index(corpus)?;
    for bad in &build.rejected {
        log::warn!("{}:{}: {}", bad.file.display(), bad.line, bad.reason);
    }
    let dest = cli.out.clone().unwrap_or_else(|| {
        let stem = corpus
            .file_stem()
            .map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(format!("{stem}.index"))
    });
    build.index.save(&dest)?;
    let manifest = build.index.manifest();
    if cli.json {
        print_json(
            out,
            &json!({
                "out": dest,
                "documents": manifest.doc_count,
                "terms": manifest.term_count,
                "rejected": build.rejected.len(),
            }),
        )?;
    } else {
        writeln!(
            out,
            "indexed {} documents ({} terms, {} rejected) into {}",
            manifest.doc_count,
            manifest.term_count,
            build.rejected.len(),
            dest.display()
        )?;
    }
    Ok(())
}

fn cmd_negate(cli: &Cli, out: &mut dyn Write, claims: &[String]) -> Result<()> {
    let config = load_config(cli)?;
    let negator = config.build_negator(cli.mock)?;
    let mut results = Vec::new();
    for (i, text) in claims.iter().enumerate() {
        let claim = ClaimPair::new((i + 1).to_string(), text.as_str())
            .map_err(|e| UsageError(e.to_string()))?;
        let negated = negator.negate_claim(&claim)?;
        results.push((claim.text, negated.negated_text.unwrap_or_default()));
    }
    if cli.json {
        let list: Vec<_> = results
            .iter()
            .map(|(c, n)| json!({"claim": c, "negation": n}))
            .collect();
        print_json(out, &serde_json::Value::Array(list))?;
    } else {
        for (_, n) in results {
            writeln!(out, "{n}")?;
        }
    }
    Ok(())
}

fn render_trace(trace: &ClaimTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Claim [{}]: {}", trace.claim.id, trace.claim.text);
    if let Some(neg) = &trace.claim.negated_text {
        let _ = writeln!(out, "Negation: {neg}");
    }
    let _ = writeln!(out, "Condition: {}", trace.condition);
    let evidence = trace.merged_evidence();
    let _ = writeln!(out, "\nEvidence ({} sentences):", evidence.len());
    for (i, s) in evidence.iter().enumerate() {
        let side = match s.polarity {
            claimcheck_core::selection::Polarity::FromClaim => "claim",
            claimcheck_core::selection::Polarity::FromNegation => "negation",
        };
        let _ = writeln!(
            out,
            "  {:>2}. [{} {} via {}, sim {:.3}] {}",
            i + 1,
            s.source,
            s.doc_id,
            side,
            s.similarity,
            s.text
        );
    }
    let _ = writeln!(out, "\nVerdicts:");
    for v in &trace.verdicts {
        let _ = writeln!(
            out,
            "  {:<12} {:<28} confidence {:>9.4}  (p = {:.3})",
            v.source.to_string(),
            v.label,
            v.confidence,
            v.confidence.exp()
        );
    }
    for a in &trace.abstentions {
        let _ = writeln!(
            out,
            "  {:<12} abstained at {:?}: {}",
            a.source.to_string(),
            a.stage,
            a.reason
        );
    }
    let regime = trace.regime.map_or("n/a", |r| r.as_str());
    let dispersion = trace
        .dispersion
        .map_or_else(|| "n/a".to_owned(), |d| format!("{d:.4}"));
    let _ = writeln!(out, "\nAgreement: {regime}   Dispersion: {dispersion}");
    out
}

fn cmd_verify(cli: &Cli, out: &mut dyn Write, text: &str, id: &str) -> Result<()> {
    let config = load_config(cli)?;
    let targets = targets(cli, &config)?;
    let condition = conditions(cli, &config, false)?[0];
    let claim = ClaimPair::new(id, text).map_err(|e| UsageError(e.to_string()))?;
    let providers = config.build_providers(&targets, condition, cli.mock)?;
    let scheme = match &config.file.dataset {
        Some(_) => config.dataset_descriptor()?.scheme,
        None => claimcheck_core::LabelScheme::builtin("scifact")?,
    };
    let trace = verify_claim(
        &claim,
        &targets,
        condition,
        &providers,
        config.pipeline(),
        &scheme,
    );
    if cli.json {
        print_json(out, &serde_json::to_value(&trace)?)?;
    } else {
        out.write_all(render_trace(&trace).as_bytes())?;
    }
    Ok(())
}

fn metrics_table(summary: &RunSummary, condition: Condition) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} claims, condition {condition} ({} resumed, {} computed) -> {}",
        summary.claims,
        summary.resumed,
        summary.processed,
        summary.run_dir.display()
    );
    let _ = writeln!(
        out,
        "  {:<12} {:>8} {:>8} {:>8} {:>8} {:>10}",
        "source", "A", "P", "R", "F1", "abstained"
    );
    for (source, m) in &summary.metrics {
        let _ = writeln!(
            out,
            "  {:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10}",
            source.to_string(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            summary.abstentions.get(source).copied().unwrap_or(0)
        );
    }
    out
}

fn cmd_evaluate(cli: &Cli, out: &mut dyn Write, workers: Option<usize>) -> Result<()> {
    let config = load_config(cli)?;
    let dataset = config.dataset_descriptor()?;
    let targets = targets(cli, &config)?;
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let options = RunOptions {
        workers: workers.unwrap_or(config.file.runtime.workers).max(1),
        max_new_claims: None,
    };
    let mut reports = Vec::new();
    for condition in conditions(cli, &config, true)? {
        let plan = ExperimentPlan {
            dataset: dataset.clone(),
            sources: targets.clone(),
            condition,
            limit: cli.limit.or(config.file.runtime.limit),
            cfg: config.pipeline().clone(),
        };
        let providers = config.build_providers(&targets, condition, cli.mock)?;
        let run_dir = root.join(&dataset.name).join(condition.as_str());
        let summary = run_experiment(&plan, &providers, &run_dir, &options)?;
        if summary.rejected > 0 {
            log::warn!("{} dataset records were rejected", summary.rejected);
        }
        if !cli.json {
            out.write_all(metrics_table(&summary, condition).as_bytes())?;
        }
        reports.push(json!({
            "condition": condition,
            "run_dir": summary.run_dir,
            "claims": summary.claims,
            "abstentions": summary.abstentions,
            "metrics": summary.metrics,
        }));
    }
    if cli.json {
        print_json(out, &json!({"dataset": dataset.name, "runs": reports}))?;
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, out: &mut dyn Write, run_dir: &Path) -> Result<()> {
    let csv_path = run_dir.join(CONFIDENCES_FILE);
    if !csv_path.is_file() {
        return Err(UsageError(format!(
            "{} not found; run `evaluate` first",
            csv_path.display()
        ))
        .into());
    }
    let rows = read_confidences_csv(fs::File::open(&csv_path)?)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let (curves, skipped) = kde_by_group(&rows, DEFAULT_GRID_POINTS);
    for note in &skipped {
        log::info!("skipped {note}");
    }
    let mut kde = Vec::new();
    write_kde_csv(&mut kde, &curves)?;
    fs::write(run_dir.join(KDE_FILE), kde)?;
    fs::write(run_dir.join("kde.svg"), render_kde_svg(&curves))?;
    let mut violin = Vec::new();
    write_violin_csv(&mut violin, &rows)?;
    fs::write(run_dir.join("violin.csv"), violin)?;

    if cli.json {
        let groups: Vec<_> = curves
            .iter()
            .map(|g| {
                json!({
                    "regime": g.regime.as_str(),
                    "source": g.source,
                    "n": g.curve.n_samples,
                    "bandwidth": g.curve.bandwidth,
                })
            })
            .collect();
        print_json(out, &json!({"curves": groups, "skipped": skipped}))?;
    } else {
        writeln!(
            out,
            "{} curves written to {}",
            curves.len(),
            run_dir.join(KDE_FILE).display()
        )?;
        for g in &curves {
            writeln!(
                out,
                "  {:<5} {:<12} n = {:<4} bandwidth = {:.4}",
                g.regime.as_str(),
                g.source,
                g.curve.n_samples,
                g.curve.bandwidth
            )?;
        }
        if !skipped.is_empty() {
            writeln!(
                out,
                "{} group(s) skipped (fewer than two samples or no spread)",
                skipped.len()
            )?;
        }
    }
    Ok(())
}
