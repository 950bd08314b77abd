//! Semantic column profiles over a knowledge-base triple store.
//!
//! A column with instance values gets a type (the lowest-common-ancestor
//! categories of its instances) and an attribute-weight map `gamma`: each
//! predicate is weighted by how discriminative it is for that type, scaled
//! by the type's relative depth. Distances between gamma maps compare
//! columns whose raw values never overlap.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::catgraph::CategoryGraph;
use crate::corpus::Column;

#[derive(Debug, Error)]
pub enum ColsemError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed TSV line {line}: {reason}")]
    MalformedTsv { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, Default)]
pub struct KbStore {
    triples: Vec<Triple>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_subject: HashMap<String, Vec<usize>>,
    type_assoc: HashMap<String, BTreeSet<String>>,
}

impl KbStore {
    pub fn new(triples: Vec<Triple>, type_assoc: HashMap<String, BTreeSet<String>>) -> KbStore {
        let mut by_predicate: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_subject: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_predicate.entry(t.predicate.clone()).or_default().push(i);
            by_subject.entry(t.subject.clone()).or_default().push(i);
        }
        KbStore {
            triples,
            by_predicate,
            by_subject,
            type_assoc,
        }
    }

    /// `subject<TAB>predicate<TAB>object` and `article_id<TAB>type` files.
    pub fn from_files(triples_path: &Path, types_path: Option<&Path>) -> Result<KbStore, ColsemError> {
        let mut triples = Vec::new();
        for (lineno, line) in BufReader::new(File::open(triples_path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 || parts[1].is_empty() {
                return Err(ColsemError::MalformedTsv {
                    line: lineno + 1,
                    reason: "expected subject<TAB>predicate<TAB>object".into(),
                });
            }
            triples.push(Triple {
                subject: parts[0].to_string(),
                predicate: parts[1].to_string(),
                object: parts[2].to_string(),
            });
        }
        let mut type_assoc: HashMap<String, BTreeSet<String>> = HashMap::new();
        if let Some(tp) = types_path {
            for (lineno, line) in BufReader::new(File::open(tp)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut parts = line.split('\t');
                match (parts.next(), parts.next()) {
                    (Some(a), Some(t)) if !a.is_empty() && !t.is_empty() => {
                        type_assoc.entry(a.to_string()).or_default().insert(t.to_string());
                    }
                    _ => {
                        return Err(ColsemError::MalformedTsv {
                            line: lineno + 1,
                            reason: "expected article_id<TAB>type".into(),
                        })
                    }
                }
            }
        }
        Ok(KbStore::new(triples, type_assoc))
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.by_predicate.keys().map(|s| s.as_str())
    }

    pub fn triples_of_predicate(&self, p: &str) -> impl Iterator<Item = &Triple> {
        self.by_predicate
            .get(p)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    pub fn triples_of_subject(&self, s: &str) -> impl Iterator<Item = &Triple> {
        self.by_subject
            .get(s)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    pub fn types_of(&self, article_id: &str) -> Option<&BTreeSet<String>> {
        self.type_assoc.get(article_id)
    }
}

/// Type candidates plus the discriminativeness map of a column's instances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnProfile {
    pub lca_set: BTreeSet<String>,
    pub gamma: BTreeMap<String, f64>,
}

/// Lowest-common-ancestor categories of the column's distinct instance
/// values; `None` when the column has no instance cells (callers fall back
/// to the description-only representation).
pub fn column_lca(column: &Column, graph: &CategoryGraph) -> Option<BTreeSet<String>> {
    let ids = column.instance_ids();
    if ids.is_empty() {
        return None;
    }
    Some(graph.lca_categories(ids))
}

/// Assignment statistics of predicate `p` among members of `psi`:
/// `(total assignments, distinct objects)`. `None` when `p` is never
/// assigned inside `psi` (the division-by-zero flag case).
pub fn predicate_stats(
    p: &str,
    psi: &str,
    kb: &KbStore,
    graph: &CategoryGraph,
) -> Option<(usize, usize)> {
    let mut assignments = 0usize;
    let mut objects: BTreeSet<&str> = BTreeSet::new();
    for t in kb.triples_of_predicate(p) {
        if graph.article_ancestors(&t.subject).contains(psi) {
            assignments += 1;
            objects.insert(&t.object);
        }
    }
    if assignments == 0 {
        None
    } else {
        Some((assignments, objects.len()))
    }
}

/// Deepest category level at which `p` occurs: the maximum level over
/// categories containing at least one article with an assignment of `p`.
pub fn predicate_max_level(p: &str, kb: &KbStore, graph: &CategoryGraph) -> Option<u32> {
    let mut max = None;
    for t in kb.triples_of_predicate(p) {
        for c in graph.article_ancestors(&t.subject) {
            if let Some(lv) = graph.level(&c) {
                max = Some(max.map_or(lv, |m: u32| m.max(lv)));
            }
        }
    }
    max
}

/// Discriminativeness weight of attribute `p` for category `psi`:
/// depth ratio times the negative log of the distinct-to-total object
/// ratio. Zero when `p` is unused inside `psi` or depth is undefined.
pub fn gamma_weight(p: &str, psi: &str, kb: &KbStore, graph: &CategoryGraph) -> f64 {
    let Some(psi_level) = graph.level(psi) else {
        return 0.0;
    };
    let Some((assignments, distinct)) = predicate_stats(p, psi, kb, graph) else {
        return 0.0;
    };
    let Some(max_level) = predicate_max_level(p, kb, graph) else {
        return 0.0;
    };
    if max_level == 0 {
        return 0.0;
    }
    let depth_ratio = psi_level as f64 / max_level as f64;
    let ratio = distinct as f64 / assignments as f64;
    depth_ratio * (-(ratio.ln()))
}

/// Full profile for a column: LCA types plus gamma over every predicate
/// assigned within them. Ties in the LCA set contribute the mean of their
/// per-category weights.
pub fn column_profile(
    column: &Column,
    graph: &CategoryGraph,
    kb: &KbStore,
) -> Option<ColumnProfile> {
    let lca_set = column_lca(column, graph)?;
    let mut predicates: BTreeSet<&str> = BTreeSet::new();
    for psi in &lca_set {
        for t in kb.triples() {
            if graph.article_ancestors(&t.subject).contains(psi) {
                predicates.insert(&t.predicate);
            }
        }
    }
    let mut gamma = BTreeMap::new();
    for p in predicates {
        let mean = lca_set
            .iter()
            .map(|psi| gamma_weight(p, psi, kb, graph))
            .sum::<f64>()
            / lca_set.len() as f64;
        gamma.insert(p.to_string(), mean);
    }
    Some(ColumnProfile { lca_set, gamma })
}

/// Euclidean norm over the union of predicate keys; missing keys are zero.
pub fn profile_distance(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, va) in a {
        let vb = b.get(k).copied().unwrap_or(0.0);
        sum += (va - vb) * (va - vb);
    }
    for (k, vb) in b {
        if !a.contains_key(k) {
            sum += vb * vb;
        }
    }
    sum.sqrt()
}

/// Jaccard overlap of two articles' type sets; 0 when both are empty.
pub fn type_jaccard(a_i: &str, a_j: &str, kb: &KbStore) -> f64 {
    let empty = BTreeSet::new();
    let ti = kb.types_of(a_i).unwrap_or(&empty);
    let tj = kb.types_of(a_j).unwrap_or(&empty);
    let union = ti.union(tj).count();
    if union == 0 {
        return 0.0;
    }
    let inter = ti.intersection(tj).count();
    inter as f64 / union as f64
}
