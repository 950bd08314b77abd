//! Evaluation metrics and reports.
//!
//! Candidate generation is scored by the reduction rate against the greedy
//! pair universe and by micro/macro recall of relevant pairs. Alignment is
//! scored with per-class precision/recall/F1 from a 3x3 confusion matrix.
//! Reports serialize to JSON and render as aligned text tables.

mod synth;

pub use synth::{
    generate_synthetic_corpus, read_gold_tsv, relevant_article_pairs, write_gold_tsv, GoldPair,
    SynthOutput, SynthSpec,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelationLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("retained count {retained} exceeds the pair universe {universe}")]
    RetainedExceedsUniverse { retained: u64, universe: u64 },
    #[error("pair universe is empty (k * |A| = 0)")]
    EmptyUniverse,
    #[error("no relevant pairs to compute recall over")]
    NoRelevantPairs,
    #[error("predictions and gold have different lengths: {predictions} vs {gold}")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed gold TSV line {line}: {reason}")]
    MalformedTsv { line: usize, reason: String },
}

/// Reduction rate against the greedy universe `k * |A|`, clamped to [0, 1].
pub fn delta(retained: u64, k: u64, total_articles: u64) -> Result<f64, EvalError> {
    let universe = k * total_articles;
    if universe == 0 {
        return Err(EvalError::EmptyUniverse);
    }
    if retained > universe {
        return Err(EvalError::RetainedExceedsUniverse { retained, universe });
    }
    Ok((1.0 - retained as f64 / universe as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallScores {
    pub micro: f64,
    /// Mean per-source recall; absent when every source had zero relevant
    /// pairs (all excluded).
    pub macro_: Option<f64>,
    /// Sources excluded from the macro average for lacking relevant pairs.
    pub excluded_sources: usize,
}

/// Micro recall is globally retained/relevant; macro recall averages
/// per-source recall over sources with at least one relevant pair.
pub fn recall_scores(
    retained_relevant: u64,
    all_relevant: u64,
    per_source: &[(u64, u64)],
) -> Result<RecallScores, EvalError> {
    if all_relevant == 0 {
        return Err(EvalError::NoRelevantPairs);
    }
    let micro = retained_relevant as f64 / all_relevant as f64;
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for &(retained, relevant) in per_source {
        if relevant == 0 {
            excluded += 1;
        } else {
            sum += retained as f64 / relevant as f64;
            counted += 1;
        }
    }
    let macro_ = if counted > 0 {
        Some(sum / counted as f64)
    } else {
        None
    };
    Ok(RecallScores {
        micro,
        macro_,
        excluded_sources: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: u64,
}

/// Flat report covering both pipeline halves; unset sections stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub delta: Option<f64>,
    pub micro_recall: Option<f64>,
    pub macro_recall: Option<f64>,
    pub k: Option<u64>,
    pub total_articles: Option<u64>,
    pub retained_pairs: Option<u64>,
    pub confusion: Option<[[u64; 3]; 3]>,
    pub per_class: Option<Vec<ClassRow>>,
    /// Macro average over classes with defined metrics.
    pub macro_row: Option<ClassRow>,
    pub accuracy: Option<f64>,
}

/// Per-class precision/recall/F1 from the 3x3 confusion matrix
/// (`confusion[gold][predicted]`). Metrics stay absent rather than zero
/// when undefined: precision without predictions of the class, recall
/// without gold support.
pub fn prf_report(
    predictions: &[RelationLabel],
    gold: &[RelationLabel],
) -> Result<EvalReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, g) in predictions.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let mut rows = Vec::with_capacity(3);
    for class in RelationLabel::ALL {
        let c = class.index();
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = (0..3).map(|g| confusion[g][c]).sum();
        let precision = if predicted > 0 {
            Some(tp as f64 / predicted as f64)
        } else {
            None
        };
        let recall = if support > 0 {
            Some(tp as f64 / support as f64)
        } else {
            None
        };
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        rows.push(ClassRow {
            label: class.as_str().to_string(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let macro_of = |pick: fn(&ClassRow) -> Option<f64>| -> Option<f64> {
        let defined: Vec<f64> = rows.iter().filter_map(pick).collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    };
    let macro_row = ClassRow {
        label: "macro".to_string(),
        precision: macro_of(|r| r.precision),
        recall: macro_of(|r| r.recall),
        f1: macro_of(|r| r.f1),
        support: total,
    };
    let accuracy = if total > 0 {
        (0..3).map(|i| confusion[i][i]).sum::<u64>() as f64 / total as f64
    } else {
        0.0
    };
    Ok(EvalReport {
        confusion: Some(confusion),
        per_class: Some(rows),
        macro_row: Some(macro_row),
        accuracy: Some(accuracy),
        ..EvalReport::default()
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}"),
        None => "-".to_string(),
    }
}

/// Aligned-column text rendering of a report.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    if let (Some(d), Some(k), Some(a)) = (report.delta, report.k, report.total_articles) {
        out.push_str(&format!(
            "pairs retained: {:>10}   delta: {:.4}   (k = {k}, |A| = {a})\n",
            report
                .retained_pairs
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".into()),
            d
        ));
    }
    if report.micro_recall.is_some() || report.macro_recall.is_some() {
        out.push_str(&format!(
            "micro recall: {}   macro recall: {}\n",
            fmt_opt(report.micro_recall),
            fmt_opt(report.macro_recall)
        ));
    }
    if let Some(rows) = &report.per_class {
        out.push_str(&format!(
            "{:<12} {:>9} {:>9} {:>9} {:>9}\n",
            "class", "P", "R", "F1", "support"
        ));
        for row in rows.iter().chain(report.macro_row.iter()) {
            out.push_str(&format!(
                "{:<12} {:>9} {:>9} {:>9} {:>9}\n",
                row.label,
                fmt_opt(row.precision),
                fmt_opt(row.recall),
                fmt_opt(row.f1),
                row.support
            ));
        }
    }
    if let Some(acc) = report.accuracy {
        out.push_str(&format!("accuracy: {acc:.3}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_trivial_and_errors() {
        assert_eq!(delta(100, 10, 10).unwrap(), 0.0);
        assert!(matches!(
            delta(101, 10, 10),
            Err(EvalError::RetainedExceedsUniverse { .. })
        ));
        assert!(matches!(delta(0, 0, 10), Err(EvalError::EmptyUniverse)));
        assert_eq!(delta(0, 10, 10).unwrap(), 1.0);
    }

    #[test]
    fn delta_reproduces_published_reduction_rates() {
        // Reference reduction rates for k = 50 sources over 529,170
        // table-bearing articles; the published table shows these at two
        // decimals (rounded for the lower values, floored near one).
        let d_pc = delta(3_486_031, 50, 529_170).unwrap();
        assert!((d_pc - 0.868).abs() < 5e-4);
        assert_eq!(format!("{d_pc:.2}"), "0.87");

        let d_c1 = delta(792_701, 50, 529_170).unwrap();
        assert_eq!(format!("{d_c1:.2}"), "0.97");

        let d_mw = delta(33_890, 50, 529_170).unwrap();
        assert!((d_mw - 0.9987).abs() < 5e-4);
        assert_eq!((d_mw * 100.0).floor() / 100.0, 0.99);

        let d_c2 = delta(6_738, 50, 529_170).unwrap();
        assert_eq!((d_c2 * 100.0).floor() / 100.0, 0.99);
    }

    #[test]
    fn delta_is_decreasing_in_retained() {
        let mut prev = f64::INFINITY;
        for retained in [0u64, 10, 100, 1000, 5000] {
            let d = delta(retained, 10, 500).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn recall_trivial_and_published_values() {
        let all = recall_scores(10, 10, &[(10, 10)]).unwrap();
        assert_eq!(all.micro, 1.0);
        assert_eq!(all.macro_, Some(1.0));

        // Reference relevant-pair retention out of 876.
        assert!((recall_scores(724, 876, &[]).unwrap().micro - 0.826).abs() < 5e-4);
        assert!((recall_scores(571, 876, &[]).unwrap().micro - 0.652).abs() < 5e-4);
        assert!((recall_scores(429, 876, &[]).unwrap().micro - 0.490).abs() < 5e-4);
        assert!((recall_scores(440, 876, &[]).unwrap().micro - 0.502).abs() < 5e-4);
    }

    #[test]
    fn micro_vs_macro_weighting() {
        let scores = recall_scores(9, 10, &[(9, 9), (0, 1)]).unwrap();
        assert!((scores.micro - 0.9).abs() < 1e-12);
        assert_eq!(scores.macro_, Some(0.5));
        assert_eq!(scores.excluded_sources, 0);
    }

    #[test]
    fn zero_support_sources_are_excluded_with_flag() {
        let scores = recall_scores(5, 10, &[(5, 10), (0, 0)]).unwrap();
        assert_eq!(scores.macro_, Some(0.5));
        assert_eq!(scores.excluded_sources, 1);
        assert!(recall_scores(0, 0, &[]).is_err());
    }

    #[test]
    fn prf_perfect_predictions() {
        let gold = vec![
            RelationLabel::Equivalent,
            RelationLabel::SubPartOf,
            RelationLabel::None,
        ];
        let report = prf_report(&gold, &gold).unwrap();
        assert_eq!(report.accuracy, Some(1.0));
        for row in report.per_class.unwrap() {
            assert_eq!(row.precision, Some(1.0));
            assert_eq!(row.recall, Some(1.0));
            assert_eq!(row.f1, Some(1.0));
        }
    }

    #[test]
    fn prf_all_none_predictor_on_balanced_gold() {
        let gold = vec![
            RelationLabel::Equivalent,
            RelationLabel::SubPartOf,
            RelationLabel::None,
        ];
        let preds = vec![RelationLabel::None; 3];
        let report = prf_report(&preds, &gold).unwrap();
        assert!((report.accuracy.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let rows = report.per_class.unwrap();
        // No predictions for the first two classes: precision absent.
        assert_eq!(rows[0].precision, None);
        assert_eq!(rows[0].recall, Some(0.0));
        assert_eq!(rows[1].precision, None);
    }

    #[test]
    fn prf_absent_gold_class_reports_absent_recall() {
        let gold = vec![RelationLabel::Equivalent, RelationLabel::Equivalent];
        let preds = vec![RelationLabel::Equivalent, RelationLabel::SubPartOf];
        let report = prf_report(&preds, &gold).unwrap();
        let rows = report.per_class.unwrap();
        assert_eq!(rows[2].recall, None, "no gold support for none");
        assert_eq!(rows[2].support, 0);
    }

    #[test]
    fn prf_ten_item_fixture_matches_hand_confusion() {
        use RelationLabel::{Equivalent as E, None as N, SubPartOf as S};
        let gold = vec![E, E, E, S, S, S, N, N, N, N];
        let pred = vec![E, S, E, S, N, S, N, N, E, N];
        let report = prf_report(&pred, &gold).unwrap();
        let confusion = report.confusion.unwrap();
        assert_eq!(confusion[0], [2, 1, 0]);
        assert_eq!(confusion[1], [0, 2, 1]);
        assert_eq!(confusion[2], [1, 0, 3]);
        let rows = report.per_class.unwrap();
        assert!((rows[0].precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((rows[0].recall.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((rows[1].precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((rows[2].recall.unwrap() - 3.0 / 4.0).abs() < 1e-12);
        assert!((report.accuracy.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn prf_agrees_with_independent_confusion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(1..1000);
            let gold: Vec<RelationLabel> = (0..n)
                .map(|_| RelationLabel::ALL[rng.gen_range(0..3)])
                .collect();
            let pred: Vec<RelationLabel> = (0..n)
                .map(|_| RelationLabel::ALL[rng.gen_range(0..3)])
                .collect();
            let report = prf_report(&pred, &gold).unwrap();
            // Oracle: recount from scratch.
            let mut m = [[0u64; 3]; 3];
            for (p, g) in pred.iter().zip(&gold) {
                m[g.index()][p.index()] += 1;
            }
            assert_eq!(report.confusion.unwrap(), m);
            let correct: u64 = (0..3).map(|i| m[i][i]).sum();
            assert!(
                (report.accuracy.unwrap() - correct as f64 / n as f64).abs() < 1e-12
            );
        }
    }

    #[test]
    fn render_text_includes_macro_row() {
        let gold = vec![
            RelationLabel::Equivalent,
            RelationLabel::SubPartOf,
            RelationLabel::None,
        ];
        let report = prf_report(&gold, &gold).unwrap();
        let text = render_text(&report);
        assert!(text.contains("macro"));
        assert!(text.contains("accuracy: 1.000"));
    }
}
