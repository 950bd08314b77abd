//! Candidate article-pair generation.
//!
//! Ten similarity features per article pair: abstract similarity (f1 tf-idf,
//! f2 weighted document vectors, f3 plain word-vector average), category and
//! KB similarity (f4 category embedding cosine, f5 category overlap, f6
//! article embedding cosine, f7 type overlap), and table-level signals from
//! the best-matching table pair (f8_l best-column similarity, f8_d
//! positional distance, f9 attribute-profile distance).
//!
//! Pairs are first filtered by a conjunction of per-feature mean thresholds,
//! then a random forest trained on labeled pairs keeps the survivors whose
//! relevance probability clears a confidence `tau`.

mod features;
mod forest;

pub use features::{
    featurize_pair, featurize_pairs, read_features_tsv, write_features_tsv, FeatureContext,
    PairFeatures,
};
pub use forest::{
    classify_pairs, rf_predict_proba, train_rf, Node, RandomForestModel, RfParams, Tree,
    RELEVANT_CLASS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CandgenError {
    #[error("unknown article {0:?}")]
    UnknownArticle(String),
    #[error("article {0:?} has no tables")]
    NoTables(String),
    #[error("cannot pair an article with itself: {0:?}")]
    SelfPair(String),
    #[error("threshold for {0} is unusable (feature absent in the whole sample)")]
    UnusableThreshold(&'static str),
    #[error("training data contains {0} classes; need at least 2 labeled classes")]
    TooFewClasses(usize),
    #[error("no labeled pairs in training data")]
    NoLabels,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed features TSV line {line}: {reason}")]
    MalformedTsv { line: usize, reason: String },
}

/// Whether larger values mean more related (similarity) or less (distance).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Similarity,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum FeatureId {
    #[serde(rename = "f1")]
    F1,
    #[serde(rename = "f2")]
    F2,
    #[serde(rename = "f3")]
    F3,
    #[serde(rename = "f4")]
    F4,
    #[serde(rename = "f5")]
    F5,
    #[serde(rename = "f6")]
    F6,
    #[serde(rename = "f7")]
    F7,
    #[serde(rename = "f8_l")]
    F8L,
    #[serde(rename = "f8_d")]
    F8D,
    #[serde(rename = "f9")]
    F9,
}

impl FeatureId {
    pub const ALL: [FeatureId; 10] = [
        FeatureId::F1,
        FeatureId::F2,
        FeatureId::F3,
        FeatureId::F4,
        FeatureId::F5,
        FeatureId::F6,
        FeatureId::F7,
        FeatureId::F8L,
        FeatureId::F8D,
        FeatureId::F9,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::F1 => "f1",
            FeatureId::F2 => "f2",
            FeatureId::F3 => "f3",
            FeatureId::F4 => "f4",
            FeatureId::F5 => "f5",
            FeatureId::F6 => "f6",
            FeatureId::F7 => "f7",
            FeatureId::F8L => "f8_l",
            FeatureId::F8D => "f8_d",
            FeatureId::F9 => "f9",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureId> {
        Self::ALL.iter().copied().find(|f| f.name() == s)
    }

    /// f8_d and f9 are distances; everything else is a similarity.
    pub fn direction(self) -> Direction {
        match self {
            FeatureId::F8D | FeatureId::F9 => Direction::Distance,
            _ => Direction::Similarity,
        }
    }
}

/// Default conjunction criteria for mean-threshold filtering.
pub const DEFAULT_CRITERIA: [FeatureId; 4] =
    [FeatureId::F1, FeatureId::F2, FeatureId::F4, FeatureId::F5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub mean: f64,
    /// Pairs the mean was computed over (absents ignored).
    pub count: usize,
}

/// Per-feature arithmetic means over a pair sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub sample_size: usize,
    pub entries: [Option<ThresholdEntry>; 10],
}

impl Thresholds {
    pub fn get(&self, f: FeatureId) -> Option<ThresholdEntry> {
        self.entries[f.index()]
    }
}

/// Arithmetic mean per feature, ignoring absent values. A feature absent in
/// every pair gets an unusable (absent) threshold.
pub fn compute_thresholds(sample: &[PairFeatures]) -> Thresholds {
    let mut sums = [0.0f64; 10];
    let mut counts = [0usize; 10];
    for pf in sample {
        for f in FeatureId::ALL {
            if let Some(v) = pf.get(f) {
                sums[f.index()] += v;
                counts[f.index()] += 1;
            }
        }
    }
    let mut entries: [Option<ThresholdEntry>; 10] = Default::default();
    for f in FeatureId::ALL {
        let i = f.index();
        if counts[i] > 0 {
            entries[i] = Some(ThresholdEntry {
                mean: sums[i] / counts[i] as f64,
                count: counts[i],
            });
        }
    }
    Thresholds {
        sample_size: sample.len(),
        entries,
    }
}

/// Conjunction filter: a pair survives only if every criterion feature is on
/// the related side of its mean (at or above for similarities, at or below
/// for distances). An absent feature fails its criterion. Returns retained
/// indices in input order.
pub fn filter_pairs(
    pairs: &[PairFeatures],
    thresholds: &Thresholds,
    criteria: &[FeatureId],
) -> Result<Vec<usize>, CandgenError> {
    let mut resolved = Vec::with_capacity(criteria.len());
    for &f in criteria {
        match thresholds.get(f) {
            Some(t) => resolved.push((f, t.mean)),
            None => return Err(CandgenError::UnusableThreshold(f.name())),
        }
    }
    let mut kept = Vec::new();
    'pairs: for (i, pf) in pairs.iter().enumerate() {
        for &(f, mean) in &resolved {
            let Some(v) = pf.get(f) else { continue 'pairs };
            let ok = match f.direction() {
                Direction::Similarity => v >= mean,
                Direction::Distance => v <= mean,
            };
            if !ok {
                continue 'pairs;
            }
        }
        kept.push(i);
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(a: &str, b: &str, values: &[(FeatureId, f64)]) -> PairFeatures {
        let mut p = PairFeatures::new(a, b);
        for &(f, v) in values {
            p.set(f, Some(v));
        }
        p
    }

    #[test]
    fn thresholds_means() {
        let sample = vec![
            pf("a", "b", &[(FeatureId::F1, 0.0), (FeatureId::F5, 0.25)]),
            pf("a", "c", &[(FeatureId::F1, 1.0)]),
        ];
        let t = compute_thresholds(&sample);
        assert_eq!(t.sample_size, 2);
        let f1 = t.get(FeatureId::F1).unwrap();
        assert_eq!(f1.mean, 0.5);
        assert_eq!(f1.count, 2);
        // F5 present once: mean over present values only.
        assert_eq!(t.get(FeatureId::F5).unwrap().mean, 0.25);
        assert!(t.get(FeatureId::F9).is_none());
    }

    #[test]
    fn thresholds_constant_feature() {
        let sample: Vec<PairFeatures> = (0..10)
            .map(|i| pf("a", &format!("b{i}"), &[(FeatureId::F2, 0.75)]))
            .collect();
        let t = compute_thresholds(&sample);
        assert_eq!(t.get(FeatureId::F2).unwrap().mean, 0.75);
    }

    #[test]
    fn thresholds_ten_pair_fixture_matches_hand_means() {
        let vals = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let sample: Vec<PairFeatures> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                pf(
                    "a",
                    &format!("b{i}"),
                    &[(FeatureId::F1, v), (FeatureId::F8D, v * 2.0)],
                )
            })
            .collect();
        let t = compute_thresholds(&sample);
        assert!((t.get(FeatureId::F1).unwrap().mean - 0.55).abs() < 1e-12);
        assert!((t.get(FeatureId::F8D).unwrap().mean - 1.1).abs() < 1e-12);
    }

    #[test]
    fn filter_conjunction_drops_single_failure() {
        let sample = vec![
            pf("a", "b", &[(FeatureId::F1, 0.9), (FeatureId::F5, 0.9)]),
            pf("a", "c", &[(FeatureId::F1, 0.9), (FeatureId::F5, 0.1)]),
            pf("a", "d", &[(FeatureId::F1, 0.1), (FeatureId::F5, 0.1)]),
        ];
        let t = compute_thresholds(&sample);
        let kept = filter_pairs(&sample, &t, &[FeatureId::F1, FeatureId::F5]).unwrap();
        // means: f1 ~0.633, f5 ~0.367: only the first pair clears both.
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn filter_distance_features_invert() {
        let sample = vec![
            pf("a", "b", &[(FeatureId::F8D, 0.0)]),
            pf("a", "c", &[(FeatureId::F8D, 2.0)]),
        ];
        let t = compute_thresholds(&sample);
        let kept = filter_pairs(&sample, &t, &[FeatureId::F8D]).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn filter_absent_feature_fails_criterion() {
        let sample = vec![
            pf("a", "b", &[(FeatureId::F1, 1.0), (FeatureId::F2, 1.0)]),
            pf("a", "c", &[(FeatureId::F1, 1.0)]),
        ];
        let t = compute_thresholds(&sample);
        let kept = filter_pairs(&sample, &t, &[FeatureId::F1, FeatureId::F2]).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn filter_unusable_threshold_is_config_error() {
        let sample = vec![pf("a", "b", &[(FeatureId::F1, 1.0)])];
        let t = compute_thresholds(&sample);
        assert!(matches!(
            filter_pairs(&sample, &t, &[FeatureId::F9]),
            Err(CandgenError::UnusableThreshold("f9"))
        ));
    }

    #[test]
    fn filter_is_idempotent() {
        let sample: Vec<PairFeatures> = (0..20)
            .map(|i| {
                pf(
                    "a",
                    &format!("b{i}"),
                    &[
                        (FeatureId::F1, i as f64 / 19.0),
                        (FeatureId::F5, (19 - i) as f64 / 19.0),
                    ],
                )
            })
            .collect();
        let t = compute_thresholds(&sample);
        let criteria = [FeatureId::F1, FeatureId::F5];
        let once = filter_pairs(&sample, &t, &criteria).unwrap();
        let survivors: Vec<PairFeatures> = once.iter().map(|&i| sample[i].clone()).collect();
        let twice = filter_pairs(&survivors, &t, &criteria).unwrap();
        assert_eq!(twice.len(), survivors.len(), "second pass must keep all");
    }

    #[test]
    fn more_criteria_never_retain_more() {
        let sample: Vec<PairFeatures> = (0..30)
            .map(|i| {
                pf(
                    "a",
                    &format!("b{i}"),
                    &[
                        (FeatureId::F1, (i % 7) as f64),
                        (FeatureId::F2, (i % 5) as f64),
                        (FeatureId::F4, (i % 3) as f64),
                    ],
                )
            })
            .collect();
        let t = compute_thresholds(&sample);
        let k1 = filter_pairs(&sample, &t, &[FeatureId::F1]).unwrap().len();
        let k2 = filter_pairs(&sample, &t, &[FeatureId::F1, FeatureId::F2])
            .unwrap()
            .len();
        let k3 = filter_pairs(
            &sample,
            &t,
            &[FeatureId::F1, FeatureId::F2, FeatureId::F4],
        )
        .unwrap()
        .len();
        assert!(k1 >= k2 && k2 >= k3);
    }
}
