//! Inter-source agreement, confidence dispersion, density curves and
//! classification metrics.

mod kde;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use kde::{
    gaussian_density, kde, mean, sample_std, silverman_bandwidth, standard_normal_pdf, trapezoid,
    KdeCurve, DEFAULT_GRID_POINTS,
};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport};

use crate::error::AnalysisError;
use crate::types::SourceKind;
use crate::verdict::{VeracityVerdict, VerdictSource};

/// How many of the three per-source labels coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgreementRegime {
    #[serde(rename = "all")]
    AllAgree,
    #[serde(rename = "two")]
    TwoAgree,
    #[serde(rename = "none")]
    NoneAgree,
}

impl AgreementRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            AgreementRegime::AllAgree => "all",
            AgreementRegime::TwoAgree => "two",
            AgreementRegime::NoneAgree => "none",
        }
    }
}

impl FromStr for AgreementRegime {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(AgreementRegime::AllAgree),
            "two" => Ok(AgreementRegime::TwoAgree),
            "none" => Ok(AgreementRegime::NoneAgree),
            other => Err(AnalysisError::InvalidArgument(format!(
                "unknown regime {other:?}"
            ))),
        }
    }
}

pub fn agreement_regime<S: AsRef<str>>(labels: &[S]) -> Result<AgreementRegime, AnalysisError> {
    let [a, b, c] = labels else {
        return Err(AnalysisError::WrongArity {
            expected: 3,
            got: labels.len(),
        });
    };
    let (a, b, c) = (a.as_ref(), b.as_ref(), c.as_ref());
    Ok(if a == b && b == c {
        AgreementRegime::AllAgree
    } else if a == b || b == c || a == c {
        AgreementRegime::TwoAgree
    } else {
        AgreementRegime::NoneAgree
    })
}

/// Sample standard deviation of per-source confidences.
pub fn dispersion(confidences: &[f64]) -> Result<f64, AnalysisError> {
    if confidences.len() < 2 {
        return Err(AnalysisError::TooFewSamples {
            needed: 2,
            got: confidences.len(),
        });
    }
    if confidences.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(sample_std(confidences))
}

/// Per-claim view of the per-source verdicts.
///
/// `regime` needs exactly three source verdicts and `dispersion` at least
/// two; otherwise they are absent (e.g. when a source abstained).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfidenceProfile {
    pub claim_id: String,
    pub verdicts: BTreeMap<SourceKind, VeracityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged: Option<VeracityVerdict>,
    pub regime: Option<AgreementRegime>,
    pub dispersion: Option<f64>,
}

impl SourceConfidenceProfile {
    pub fn new(
        claim_id: &str,
        verdicts: BTreeMap<SourceKind, VeracityVerdict>,
        merged: Option<VeracityVerdict>,
    ) -> Self {
        let labels: Vec<&str> = verdicts.values().map(|v| v.label.as_str()).collect();
        let confidences: Vec<f64> = verdicts.values().map(|v| v.confidence).collect();
        Self {
            claim_id: claim_id.to_owned(),
            regime: agreement_regime(&labels).ok(),
            dispersion: dispersion(&confidences).ok(),
            verdicts,
            merged,
        }
    }

    /// One row per verdict, sources first in provenance order, then merged.
    pub fn rows(&self) -> Vec<ConfidenceRow> {
        let regime = self.regime.map_or(NO_REGIME, AgreementRegime::as_str);
        self.verdicts
            .values()
            .chain(self.merged.as_ref())
            .map(|v| ConfidenceRow {
                claim_id: self.claim_id.clone(),
                source: v.source.to_string(),
                label: v.label.clone(),
                confidence: v.confidence,
                regime: regime.to_owned(),
                dispersion: self.dispersion,
            })
            .collect()
    }
}

/// Regime column value for claims without three source verdicts.
pub const NO_REGIME: &str = "na";

/// One line of `confidences.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub claim_id: String,
    pub source: String,
    pub label: String,
    pub confidence: f64,
    pub regime: String,
    pub dispersion: Option<f64>,
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

pub fn write_confidences_csv<W: Write>(out: W, rows: &[ConfidenceRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "claim_id",
            "source",
            "label",
            "confidence",
            "regime",
            "dispersion",
        ])
        .map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()
}

pub fn read_confidences_csv<R: Read>(input: R) -> std::io::Result<Vec<ConfidenceRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

/// A density curve for one (regime, source) group.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGroup {
    pub regime: AgreementRegime,
    pub source: String,
    pub curve: KdeCurve,
}

/// Curves per (regime, source) group, plus a note for every group that was
/// skipped because it had fewer than two samples or no spread.
pub fn kde_by_group(rows: &[ConfidenceRow], grid_points: usize) -> (Vec<KdeGroup>, Vec<String>) {
    let mut groups: BTreeMap<(AgreementRegime, String), Vec<f64>> = BTreeMap::new();
    for row in rows {
        if let Ok(regime) = row.regime.parse::<AgreementRegime>() {
            groups
                .entry((regime, row.source.clone()))
                .or_default()
                .push(row.confidence);
        }
    }
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for ((regime, source), samples) in groups {
        match kde(&samples, grid_points, None) {
            Ok(curve) => curves.push(KdeGroup {
                regime,
                source,
                curve,
            }),
            Err(e) => skipped.push(format!("regime {} source {source}: {e}", regime.as_str())),
        }
    }
    (curves, skipped)
}

pub fn write_kde_csv<W: Write>(out: W, groups: &[KdeGroup]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["regime", "source", "x", "density", "bandwidth", "n"])
        .map_err(csv_err)?;
    for g in groups {
        let bandwidth = g.curve.bandwidth.to_string();
        let n = g.curve.n_samples.to_string();
        for (x, d) in g.curve.grid.iter().zip(&g.curve.density) {
            w.write_record([
                g.regime.as_str(),
                &g.source,
                &x.to_string(),
                &d.to_string(),
                &bandwidth,
                &n,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
}

/// Wide table for violin plots: one row per claim, one confidence column
/// per source (empty where the source has no verdict).
pub fn write_violin_csv<W: Write>(out: W, rows: &[ConfidenceRow]) -> std::io::Result<()> {
    let mut sources: Vec<&str> = Vec::new();
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for row in rows {
        if !sources.contains(&row.source.as_str()) {
            sources.push(&row.source);
        }
        table
            .entry(&row.claim_id)
            .or_default()
            .insert(&row.source, row.confidence);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("claim_id").chain(sources.iter().copied()))
        .map_err(csv_err)?;
    for (claim, values) in table {
        let record: Vec<String> = std::iter::once(claim.to_owned())
            .chain(
                sources
                    .iter()
                    .map(|s| values.get(s).map(f64::to_string).unwrap_or_default()),
            )
            .collect();
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()
}

const SVG_COLOURS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Static line chart of the curves, one panel per regime.
pub fn render_kde_svg(groups: &[KdeGroup]) -> String {
    const PANEL_W: f64 = 320.0;
    const PANEL_H: f64 = 220.0;
    const PAD: f64 = 30.0;
    let regimes: Vec<AgreementRegime> = {
        let mut r: Vec<_> = groups.iter().map(|g| g.regime).collect();
        r.dedup();
        r
    };
    let mut sources: Vec<&str> = groups.iter().map(|g| g.source.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();

    let x_min = groups
        .iter()
        .flat_map(|g| g.curve.grid.first())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let x_max = groups
        .iter()
        .flat_map(|g| g.curve.grid.last())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let y_max = groups
        .iter()
        .flat_map(|g| g.curve.density.iter())
        .copied()
        .fold(0.0, f64::max);

    let width = PANEL_W * regimes.len().max(1) as f64;
    let height = PANEL_H + 20.0 * sources.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (p, regime) in regimes.iter().enumerate() {
        let ox = p as f64 * PANEL_W;
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="16">regime: {}</text><rect x="{}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
            ox + PAD,
            regime.as_str(),
            ox + PAD,
            PANEL_W - 2.0 * PAD,
            PANEL_H - 2.0 * PAD
        );
        for g in groups.iter().filter(|g| g.regime == *regime) {
            let colour = SVG_COLOURS
                [sources.iter().position(|s| *s == g.source).unwrap_or(0) % SVG_COLOURS.len()];
            let points: Vec<String> = g
                .curve
                .grid
                .iter()
                .zip(&g.curve.density)
                .map(|(x, d)| {
                    let px = ox
                        + PAD
                        + (x - x_min) / (x_max - x_min).max(f64::MIN_POSITIVE)
                            * (PANEL_W - 2.0 * PAD);
                    let py =
                        PANEL_H - PAD - d / y_max.max(f64::MIN_POSITIVE) * (PANEL_H - 2.0 * PAD);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
        }
    }
    for (i, source) in sources.iter().enumerate() {
        let y = PANEL_H + 14.0 + 20.0 * i as f64;
        let colour = SVG_COLOURS[i % SVG_COLOURS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{y}">{source}</text>"#,
            y - 4.0,
            PAD + 20.0,
            y - 4.0,
            PAD + 26.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Convenience for profiles built from the merged-condition verdict list.
pub fn profile_from_verdicts(
    claim_id: &str,
    verdicts: &[VeracityVerdict],
) -> SourceConfidenceProfile {
    let mut per_source = BTreeMap::new();
    let mut merged = None;
    for v in verdicts {
        match &v.source {
            VerdictSource::Source(kind) => {
                per_source.insert(kind.clone(), v.clone());
            }
            VerdictSource::Merged => merged = Some(v.clone()),
        }
    }
    SourceConfidenceProfile::new(claim_id, per_source, merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelScheme;
    use crate::verdict::LabelLogits;
    use proptest::prelude::*;

    #[test]
    fn regime_examples() {
        assert_eq!(
            agreement_regime(&["X", "X", "X"]),
            Ok(AgreementRegime::AllAgree)
        );
        assert_eq!(
            agreement_regime(&["X", "X", "Y"]),
            Ok(AgreementRegime::TwoAgree)
        );
        assert_eq!(
            agreement_regime(&["Y", "X", "X"]),
            Ok(AgreementRegime::TwoAgree)
        );
        assert_eq!(
            agreement_regime(&["X", "Y", "Z"]),
            Ok(AgreementRegime::NoneAgree)
        );
        assert_eq!(
            agreement_regime(&["X", "Y"]),
            Err(AnalysisError::WrongArity {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(&[-1.0, -1.0, -1.0]), Ok(0.0));
        assert!((dispersion(&[-1.0, -3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            dispersion(&[-1.0]),
            Err(AnalysisError::TooFewSamples { .. })
        ));
    }

    fn verdict(source: VerdictSource, logits: Vec<f64>) -> VeracityVerdict {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        VeracityVerdict::from_logits("c1", source, LabelLogits::new(scheme, logits).unwrap())
    }

    #[test]
    fn profile_rows_and_csv_round_trip() {
        let verdicts = vec![
            verdict(
                VerdictSource::Source(SourceKind::WebSearch),
                vec![0.0, -1.0, -2.0],
            ),
            verdict(
                VerdictSource::Source(SourceKind::WikipediaLike),
                vec![0.0, -1.0, -2.0],
            ),
            verdict(
                VerdictSource::Source(SourceKind::PubMedLike),
                vec![-3.0, 0.0, -2.0],
            ),
            verdict(VerdictSource::Merged, vec![0.0, -0.5, -2.0]),
        ];
        let profile = profile_from_verdicts("c1", &verdicts);
        assert_eq!(profile.regime, Some(AgreementRegime::TwoAgree));
        let rows = profile.rows();
        let sources: Vec<&str> = rows.iter().map(|r| r.source.as_str()).collect();
        assert_eq!(sources, ["wikipedia", "pubmed", "web", "merged"]);
        let mut buf = Vec::new();
        write_confidences_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("claim_id,source,label,confidence,regime,dispersion\n"));
        assert_eq!(read_confidences_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn two_sources_have_no_regime() {
        let verdicts = vec![
            verdict(
                VerdictSource::Source(SourceKind::WebSearch),
                vec![0.0, -1.0, -2.0],
            ),
            verdict(
                VerdictSource::Source(SourceKind::PubMedLike),
                vec![-3.0, 0.0, -2.0],
            ),
        ];
        let profile = profile_from_verdicts("c", &verdicts);
        assert_eq!(profile.regime, None);
        assert!(profile.dispersion.is_some());
        assert_eq!(profile.rows()[0].regime, NO_REGIME);
    }

    fn row(claim: &str, source: &str, regime: &str, confidence: f64) -> ConfidenceRow {
        ConfidenceRow {
            claim_id: claim.into(),
            source: source.into(),
            label: "Supported".into(),
            confidence,
            regime: regime.into(),
            dispersion: None,
        }
    }

    #[test]
    fn groups_with_one_sample_are_skipped() {
        let rows = vec![
            row("a", "web", "all", -0.1),
            row("b", "web", "all", -0.7),
            row("c", "web", "none", -0.3),
            row("d", "web", "na", -0.3),
        ];
        let (curves, skipped) = kde_by_group(&rows, 32);
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].regime, AgreementRegime::AllAgree);
        assert_eq!(skipped.len(), 1);
        let mut buf = Vec::new();
        write_kde_csv(&mut buf, &curves).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 33);
        assert!(render_kde_svg(&curves).contains("<polyline"));
    }

    #[test]
    fn violin_table_is_wide() {
        let rows = vec![
            row("a", "web", "all", -0.1),
            row("a", "pubmed", "all", -0.2),
            row("b", "web", "all", -0.3),
        ];
        let mut buf = Vec::new();
        write_violin_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "claim_id,web,pubmed\na,-0.1,-0.2\nb,-0.3,\n"
        );
    }

    proptest! {
        #[test]
        fn regime_is_permutation_invariant(a in 0u8..3, b in 0u8..3, c in 0u8..3) {
            let l = [a.to_string(), b.to_string(), c.to_string()];
            let r = agreement_regime(&l).unwrap();
            for p in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                prop_assert_eq!(agreement_regime(&[&l[p[0]], &l[p[1]], &l[p[2]]]).unwrap(), r);
            }
        }

        #[test]
        fn dispersion_is_translation_invariant(xs in prop::collection::vec(-20.0f64..0.0, 2..8), c in -10.0f64..10.0) {
            let d = dispersion(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            prop_assert!(d >= 0.0);
            prop_assert!((d - dispersion(&shifted).unwrap()).abs() < 1e-9);
        }
    }
}
