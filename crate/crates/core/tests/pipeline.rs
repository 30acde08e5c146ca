use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use claimcheck_core::config::EngineConfig;
use claimcheck_core::evaluation::{
    run_experiment, verify_claim, Condition, ExperimentPlan, Providers, RunOptions,
    CONFIDENCES_FILE, METRICS_FILE, TRACES_DIR,
};
use claimcheck_core::negation::{NegationProvider, Negator, RuleBasedNegator};
use claimcheck_core::verdict::VerdictSource;
use claimcheck_core::{ClaimPair, NegationError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn demo() -> EngineConfig {
    EngineConfig::load(&fixture("demo/config.toml")).unwrap()
}

fn plan(config: &EngineConfig, condition: Condition) -> ExperimentPlan {
    ExperimentPlan {
        dataset: config.dataset_descriptor().unwrap(),
        sources: config.default_targets(),
        condition,
        limit: None,
        cfg: config.pipeline().clone(),
    }
}

fn providers(config: &EngineConfig, condition: Condition) -> Providers {
    config
        .build_providers(&config.default_targets(), condition, true)
        .unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

struct Counting {
    calls: Arc<AtomicUsize>,
}

impl NegationProvider for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn negate(&self, claim: &str) -> Result<String, NegationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        RuleBasedNegator.negate(claim)
    }
}

#[test]
fn interrupted_run_resumes_to_identical_artifacts() {
    let config = demo();
    let plan = plan(&config, Condition::OriginalPlusNegated);
    let providers = providers(&config, Condition::OriginalPlusNegated);
    let tmp = tempfile::tempdir().unwrap();

    let straight = tmp.path().join("straight");
    let summary = run_experiment(&plan, &providers, &straight, &RunOptions::default()).unwrap();
    assert!(summary.complete);
    assert_eq!(summary.processed, 5);

    let resumed = tmp.path().join("resumed");
    let partial = run_experiment(
        &plan,
        &providers,
        &resumed,
        &RunOptions {
            workers: 1,
            max_new_claims: Some(3),
        },
    )
    .unwrap();
    assert!(!partial.complete);
    assert_eq!(partial.processed, 3);
    assert!(!resumed.join(METRICS_FILE).exists());
    assert_eq!(fs::read_dir(resumed.join(TRACES_DIR)).unwrap().count(), 3);

    let finished = run_experiment(&plan, &providers, &resumed, &RunOptions::default()).unwrap();
    assert!(finished.complete);
    assert_eq!((finished.resumed, finished.processed), (3, 2));

    let (a, b) = (snapshot(&straight), snapshot(&resumed));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(b[name] == *bytes, "{name} differs after resuming");
    }
}

#[test]
fn original_only_never_calls_the_negator() {
    let config = demo();
    let calls = Arc::new(AtomicUsize::new(0));
    let tmp = tempfile::tempdir().unwrap();

    for (condition, expected_calls) in [
        (Condition::OriginalOnly, 0),
        (Condition::OriginalPlusNegated, 5),
    ] {
        calls.store(0, Ordering::SeqCst);
        let mut providers = providers(&config, condition);
        providers.negator = Some(Negator::new(Box::new(Counting {
            calls: calls.clone(),
        })));
        let dir = tmp.path().join(condition.as_str());
        let summary = run_experiment(
            &plan(&config, condition),
            &providers,
            &dir,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(summary.claims, 5);
        assert_eq!(calls.load(Ordering::SeqCst), expected_calls, "{condition}");
    }
}

#[test]
fn negated_query_surfaces_refuting_evidence() {
    let config = EngineConfig::load(&fixture("dual/config.toml")).unwrap();
    let targets = [VerdictSource::Merged];
    let claim = ClaimPair::new("g1", "Garlic supplements prevent influenza.").unwrap();
    let scheme = config.dataset_descriptor().unwrap().scheme;
    let refuting = "In a controlled trial, garlic does not stop influenza infections.";

    let mut texts = BTreeMap::new();
    for condition in Condition::ALL {
        let providers = config
            .build_providers(&config.default_targets(), condition, true)
            .unwrap();
        let trace = verify_claim(
            &claim,
            &targets,
            condition,
            &providers,
            config.pipeline(),
            &scheme,
        );
        assert!(trace.abstentions.is_empty(), "{:?}", trace.abstentions);
        let found: Vec<String> = trace
            .merged_evidence()
            .iter()
            .map(|s| s.text.clone())
            .collect();
        texts.insert(condition, found);
    }
    assert!(texts[&Condition::OriginalPlusNegated]
        .iter()
        .any(|t| t == refuting));
    assert!(!texts[&Condition::OriginalOnly]
        .iter()
        .any(|t| t == refuting));
}

#[test]
fn conditions_write_separate_confidence_tables() {
    let config = demo();
    let tmp = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for condition in Condition::ALL {
        let dir = tmp.path().join(condition.as_str());
        run_experiment(
            &plan(&config, condition),
            &providers(&config, condition),
            &dir,
            &RunOptions::default(),
        )
        .unwrap();
        tables.push(fs::read_to_string(dir.join(CONFIDENCES_FILE)).unwrap());
    }
    // five claims, four verdict sources each, plus the header
    assert!(tables.iter().all(|t| t.lines().count() == 21));
}
