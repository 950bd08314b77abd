//! Reference strategies for candidate generation and schema matching.
//!
//! Pair generation: greedy (every table-bearing article), shared direct
//! categories, shared deepest category, shared parent categories, and
//! anchor-graph relatedness. Alignment: an unsupervised schema matcher that
//! scores table pairs by maximum-weight bipartite matching over column
//! description and type similarity, thresholded on a tuned score.

mod matching;

pub use matching::max_weight_matching;

use std::collections::{BTreeSet, HashMap};

use crate::catgraph::CategoryGraph;
use crate::colsem::column_lca;
use crate::corpus::{Corpus, Table};

/// Inverted anchor link structure: who links to an article, and the size of
/// the article universe.
#[derive(Debug, Clone)]
pub struct AnchorGraph {
    in_links: HashMap<String, BTreeSet<String>>,
    pub total_articles: usize,
}

impl AnchorGraph {
    pub fn build(corpus: &Corpus) -> AnchorGraph {
        let mut in_links: HashMap<String, BTreeSet<String>> = HashMap::new();
        for article in corpus.articles() {
            for target in &article.anchor_out {
                in_links
                    .entry(target.clone())
                    .or_default()
                    .insert(article.id.clone());
            }
        }
        AnchorGraph {
            in_links,
            total_articles: corpus.len(),
        }
    }

    pub fn in_links(&self, article_id: &str) -> Option<&BTreeSet<String>> {
        self.in_links.get(article_id)
    }
}

/// All (source, other table-bearing article) pairs; duplicate-free and
/// irreflexive, in corpus order per source.
pub fn pairs_greedy(sources: &[String], corpus: &Corpus) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for src in sources {
        for target in corpus.table_bearing() {
            if target.id != *src {
                out.push((src.clone(), target.id.clone()));
            }
        }
    }
    out
}

/// Greedy pair count without materializing: `k * (table-bearing - 1)` when
/// every source bears tables.
pub fn greedy_pair_count(num_sources: u64, table_bearing_articles: u64) -> u64 {
    num_sources * table_bearing_articles.saturating_sub(1)
}

fn paired_targets<F>(sources: &[String], corpus: &Corpus, mut keep: F) -> Vec<(String, String)>
where
    F: FnMut(&str, &str) -> bool,
{
    let mut out = Vec::new();
    for src in sources {
        for target in corpus.table_bearing() {
            if target.id != *src && keep(src, &target.id) {
                out.push((src.clone(), target.id.clone()));
            }
        }
    }
    out
}

/// C1: pairs sharing at least one directly associated category.
pub fn pairs_same_direct_category(
    sources: &[String],
    corpus: &Corpus,
    graph: &CategoryGraph,
) -> Vec<(String, String)> {
    paired_targets(sources, corpus, |a, b| {
        !graph
            .article_categories(a)
            .is_disjoint(&graph.article_categories(b))
    })
}

/// C2: pairs sharing the source article's deepest category (all ties).
pub fn pairs_deepest_category(
    sources: &[String],
    corpus: &Corpus,
    graph: &CategoryGraph,
) -> Vec<(String, String)> {
    paired_targets(sources, corpus, |a, b| {
        let cats = graph.article_categories(a);
        let deepest_level = cats.iter().filter_map(|c| graph.level(c)).max();
        let Some(max) = deepest_level else {
            return false;
        };
        let deepest: BTreeSet<&String> = cats
            .iter()
            .filter(|c| graph.level(c) == Some(max))
            .collect();
        graph
            .article_categories(b)
            .iter()
            .any(|c| deepest.contains(c))
    })
}

/// PC: pairs whose direct-plus-parent category sets intersect.
pub fn pairs_same_parent_category(
    sources: &[String],
    corpus: &Corpus,
    graph: &CategoryGraph,
) -> Vec<(String, String)> {
    paired_targets(sources, corpus, |a, b| {
        match (graph.parents_of(a), graph.parents_of(b)) {
            (Ok(pa), Ok(pb)) => !pa.is_disjoint(&pb),
            _ => false,
        }
    })
}

/// In-link overlap relatedness of two articles on the anchor graph,
/// clamped to [0, 1]. Empty in-link sets or empty overlap give 0.
pub fn milne_witten(a: &str, b: &str, anchor: &AnchorGraph) -> f64 {
    let empty = BTreeSet::new();
    let la = anchor.in_links(a).unwrap_or(&empty);
    let lb = anchor.in_links(b).unwrap_or(&empty);
    if la.is_empty() || lb.is_empty() {
        return 0.0;
    }
    let inter = la.intersection(lb).count();
    if inter == 0 {
        return 0.0;
    }
    let (big, small) = if la.len() >= lb.len() {
        (la.len(), lb.len())
    } else {
        (lb.len(), la.len())
    };
    let w = anchor.total_articles as f64;
    let denom = w.ln() - (small as f64).ln();
    if denom <= 0.0 {
        return 1.0;
    }
    let score = 1.0 - ((big as f64).ln() - (inter as f64).ln()) / denom;
    score.clamp(0.0, 1.0)
}

/// MW: pairs related above a relatedness threshold.
pub fn pairs_milne_witten(
    sources: &[String],
    corpus: &Corpus,
    anchor: &AnchorGraph,
    tau: f64,
) -> Vec<(String, String)> {
    paired_targets(sources, corpus, |a, b| milne_witten(a, b, anchor) >= tau)
}

/// Mean relatedness over the greedy pair sample, the default MW threshold.
pub fn mean_milne_witten(sources: &[String], corpus: &Corpus, anchor: &AnchorGraph) -> f64 {
    let pairs = pairs_greedy(sources, corpus);
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|(a, b)| milne_witten(a, b, anchor))
        .sum::<f64>()
        / pairs.len() as f64
}

/// Levenshtein distance, O(len_a * len_b).
fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein similarity on lowercased strings.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

fn lca_jaccard(a: Option<&BTreeSet<String>>, b: Option<&BTreeSet<String>>) -> f64 {
    let empty = BTreeSet::new();
    let sa = a.unwrap_or(&empty);
    let sb = b.unwrap_or(&empty);
    let union = sa.union(sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(sb).count() as f64 / union as f64
}

/// Unsupervised schema-matching score in [0, 1]: column pair weights are
/// half string similarity of descriptions, half Jaccard of LCA type sets;
/// the exact maximum-weight bipartite matching weight is normalized by the
/// wider schema. Order-free by construction: permuting either schema's
/// columns cannot change the score.
pub fn fusion_schema_score(t_i: &Table, t_j: &Table, graph: &CategoryGraph) -> f64 {
    let n_i = t_i.columns.len();
    let n_j = t_j.columns.len();
    if n_i == 0 || n_j == 0 {
        return 0.0;
    }
    let lca_i: Vec<Option<BTreeSet<String>>> = t_i
        .columns
        .iter()
        .map(|c| column_lca(c, graph))
        .collect();
    let lca_j: Vec<Option<BTreeSet<String>>> = t_j
        .columns
        .iter()
        .map(|c| column_lca(c, graph))
        .collect();
    let weights: Vec<Vec<f64>> = (0..n_i)
        .map(|i| {
            (0..n_j)
                .map(|j| {
                    0.5 * string_similarity(
                        &t_i.columns[i].description,
                        &t_j.columns[j].description,
                    ) + 0.5 * lca_jaccard(lca_i[i].as_ref(), lca_j[j].as_ref())
                })
                .collect()
        })
        .collect();
    let (total, _) = max_weight_matching(&weights);
    total / n_i.max(n_j) as f64
}

/// Binary decision at threshold `tau_f`.
pub fn fusion_classify(score: f64, tau_f: f64) -> bool {
    score >= tau_f
}

/// Exhaustive threshold sweep over all achievable decision boundaries;
/// returns the smallest threshold maximizing F1 of the related class,
/// together with that F1.
pub fn tune_fusion_threshold(scored: &[(f64, bool)]) -> (f64, f64) {
    let mut candidates: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    candidates.push(0.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best = (0.0, -1.0);
    for &tau in &candidates {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for &(score, related) in scored {
            match (fusion_classify(score, tau), related) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let f1 = if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        if f1 > best.1 + 1e-12 {
            best = (tau, f1);
        }
    }
    best
}
