use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::types::LabelScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences.
    pub support: usize,
    pub predicted: usize,
}

/// Accuracy plus macro precision, recall and F1 over the classes that occur
/// among the gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total: usize,
    pub correct: usize,
    /// Predictions that are not a label of the scheme (e.g. abstentions).
    pub outside_scheme: usize,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores `(gold, predicted)` pairs. Labels match the scheme
/// case-insensitively; a predicted label outside the scheme is simply wrong.
pub fn compute_metrics<G: AsRef<str>, P: AsRef<str>>(
    pairs: &[(G, P)],
    scheme: &LabelScheme,
) -> Result<MetricsReport, AnalysisError> {
    let m = scheme.len();
    // confusion[gold][pred]; column m collects predictions outside the scheme
    let mut confusion = vec![vec![0usize; m + 1]; m];
    for (gold, pred) in pairs {
        let g = scheme
            .canonical_label(gold.as_ref())
            .and_then(|l| scheme.label_index(l))
            .ok_or_else(|| AnalysisError::UnknownGoldLabel(gold.as_ref().to_owned()))?;
        let p = scheme
            .canonical_label(pred.as_ref())
            .and_then(|l| scheme.label_index(l))
            .unwrap_or(m);
        confusion[g][p] += 1;
    }

    let total = pairs.len();
    let correct: usize = (0..m).map(|i| confusion[i][i]).sum();
    let outside_scheme: usize = confusion.iter().map(|row| row[m]).sum();
    let per_class: Vec<ClassMetrics> = (0..m)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                label: scheme.labels[c].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
                predicted,
            }
        })
        .collect();

    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let macro_avg = |f: fn(&ClassMetrics) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    Ok(MetricsReport {
        accuracy: ratio(correct, total),
        precision: macro_avg(|c| c.precision),
        recall: macro_avg(|c| c.recall),
        f1: macro_avg(|c| c.f1),
        total,
        correct,
        outside_scheme,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> LabelScheme {
        LabelScheme::new("tf", vec!["T".into(), "F".into()]).unwrap()
    }

    #[test]
    fn binary_toy_set() {
        let pairs = [("T", "T"), ("T", "F"), ("F", "F"), ("F", "F")];
        let r = compute_metrics(&pairs, &binary()).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn constant_predictor_on_balanced_three_classes() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let pairs: Vec<(&str, &str)> = ["Supported", "Refuted", "Not Enough Info"]
            .iter()
            .flat_map(|g| std::iter::repeat_n((*g, "Supported"), 4))
            .collect();
        let r = compute_metrics(&pairs, &scheme).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let scheme = LabelScheme::builtin("pubhealth").unwrap();
        let pairs: Vec<(&str, &str)> = scheme
            .labels
            .iter()
            .map(|l| (l.as_str(), l.as_str()))
            .collect();
        let r = compute_metrics(&pairs, &scheme).unwrap();
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn absent_classes_do_not_enter_the_macro_average() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let r = compute_metrics(
            &[("Supported", "Supported"), ("Supported", "Refuted")],
            &scheme,
        )
        .unwrap();
        // only "Supported" has gold support: P = 1, R = 0.5
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.5);
    }

    #[test]
    fn abstentions_and_unknown_gold() {
        let scheme = binary();
        let r = compute_metrics(&[("T", "abstain"), ("t", "t")], &scheme).unwrap();
        assert_eq!(r.outside_scheme, 1);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(
            compute_metrics(&[("X", "T")], &scheme),
            Err(AnalysisError::UnknownGoldLabel("X".into()))
        );
    }
}
