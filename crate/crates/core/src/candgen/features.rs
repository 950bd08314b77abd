//! Pair feature computation with a shared immutable context.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{CandgenError, FeatureId};
use crate::catgraph::CategoryGraph;
use crate::colsem::{column_profile, profile_distance, type_jaccard, ColumnProfile, KbStore};
use crate::corpus::{tokenize, Corpus};
use crate::embed::{cosine, cosine_sparse, doc_embedding, EmbeddingStore, TfIdfIndex, VectorKind};

/// Feature vector for one ordered article pair. Absent inputs leave the
/// feature absent rather than fabricating a value.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub a_i: String,
    pub a_j: String,
    values: [Option<f64>; 10],
    /// Relevance label for supervised training, when known.
    pub label: Option<bool>,
}

impl PairFeatures {
    pub fn new(a_i: &str, a_j: &str) -> PairFeatures {
        PairFeatures {
            a_i: a_i.to_string(),
            a_j: a_j.to_string(),
            values: Default::default(),
            label: None,
        }
    }

    pub fn get(&self, f: FeatureId) -> Option<f64> {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: FeatureId, v: Option<f64>) {
        self.values[f.index()] = v;
    }

    pub fn values(&self) -> &[Option<f64>; 10] {
        &self.values
    }
}

/// Everything featurization reads, precomputed once per corpus and shared
/// read-only across workers: tf-idf vectors, document/word/category/node
/// embeddings per table-bearing article, and per-column description vectors
/// and semantic profiles.
pub struct FeatureContext<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a CategoryGraph,
    pub store: &'a EmbeddingStore,
    pub kb: &'a KbStore,
    pub tfidf: TfIdfIndex,
    tfidf_vecs: HashMap<String, BTreeMap<String, f64>>,
    doc_vecs: HashMap<String, Option<Vec<f64>>>,
    word_avg: HashMap<String, Option<Vec<f64>>>,
    parent_sets: HashMap<String, BTreeSet<String>>,
    cat_vecs: HashMap<String, Option<Vec<f64>>>,
    node_vecs: HashMap<String, Option<Vec<f64>>>,
    /// (article, table index, column index) -> description embedding.
    desc_vecs: HashMap<(String, usize, usize), Option<Vec<f64>>>,
    profiles: HashMap<(String, usize, usize), Option<ColumnProfile>>,
}

impl<'a> FeatureContext<'a> {
    pub fn build(
        corpus: &'a Corpus,
        graph: &'a CategoryGraph,
        store: &'a EmbeddingStore,
        kb: &'a KbStore,
    ) -> FeatureContext<'a> {
        let tfidf = TfIdfIndex::build(corpus);
        let mut ctx = FeatureContext {
            corpus,
            graph,
            store,
            kb,
            tfidf,
            tfidf_vecs: HashMap::new(),
            doc_vecs: HashMap::new(),
            word_avg: HashMap::new(),
            parent_sets: HashMap::new(),
            cat_vecs: HashMap::new(),
            node_vecs: HashMap::new(),
            desc_vecs: HashMap::new(),
            profiles: HashMap::new(),
        };
        for article in corpus.table_bearing() {
            let id = article.id.clone();
            ctx.tfidf_vecs
                .insert(id.clone(), ctx.tfidf.tfidf_vector(article));
            ctx.doc_vecs
                .insert(id.clone(), doc_embedding(store, &ctx.tfidf, article));
            let tokens = tokenize(&article.abstract_text);
            ctx.word_avg.insert(
                id.clone(),
                store.avg_embedding(&tokens, VectorKind::Word).vector,
            );
            let parents = graph.parents_of(&id).unwrap_or_else(|_| {
                std::iter::once(graph.root_id.clone()).collect()
            });
            ctx.cat_vecs.insert(
                id.clone(),
                store.avg_embedding(&parents, VectorKind::Node).vector,
            );
            ctx.parent_sets.insert(id.clone(), parents);
            ctx.node_vecs.insert(id.clone(), store.node_vec(&id));
            for (ti, table) in article.tables.iter().enumerate() {
                for (ci, column) in table.columns.iter().enumerate() {
                    let key = (id.clone(), ti, ci);
                    let tokens = tokenize(&column.description);
                    ctx.desc_vecs.insert(
                        key.clone(),
                        store.avg_embedding(&tokens, VectorKind::Word).vector,
                    );
                    ctx.profiles
                        .insert(key, column_profile(column, graph, kb));
                }
            }
        }
        ctx
    }

    fn desc_vec(&self, article: &str, table: usize, col: usize) -> Option<&Vec<f64>> {
        self.desc_vecs
            .get(&(article.to_string(), table, col))
            .and_then(|v| v.as_ref())
    }

    fn profile(&self, article: &str, table: usize, col: usize) -> Option<&ColumnProfile> {
        self.profiles
            .get(&(article.to_string(), table, col))
            .and_then(|v| v.as_ref())
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn cosine_opt(a: Option<&Vec<f64>>, b: Option<&Vec<f64>>) -> Option<f64> {
    match (a, b) {
        (Some(u), Some(v)) => cosine(u, v).ok(),
        _ => None,
    }
}

/// Per-table-pair summary of the best column matching.
struct TableMatch {
    mean_sim: f64,
    mean_pos_dist: f64,
    profile_dist: Option<f64>,
}

/// For each column of `t_i` (with a description vector) the best-matching
/// column of `t_j` by cosine similarity; the table score averages those
/// maxima. Positional distance averages |pos - argmax pos|. The profile
/// distance averages, per profiled column of `t_i`, the closest profile in
/// `t_j`.
fn match_tables(
    ctx: &FeatureContext,
    a_i: &str,
    ti: usize,
    n_cols_i: usize,
    a_j: &str,
    tj: usize,
    n_cols_j: usize,
) -> Option<TableMatch> {
    let mut sims = Vec::new();
    let mut pos_dists = Vec::new();
    for ci in 0..n_cols_i {
        let Some(u) = ctx.desc_vec(a_i, ti, ci) else {
            continue;
        };
        let mut best: Option<(f64, usize)> = None;
        for cj in 0..n_cols_j {
            let Some(v) = ctx.desc_vec(a_j, tj, cj) else {
                continue;
            };
            let s = cosine(u, v).unwrap_or(0.0);
            if best.map(|(bs, _)| s > bs).unwrap_or(true) {
                best = Some((s, cj));
            }
        }
        if let Some((s, cj)) = best {
            sims.push(s);
            pos_dists.push((ci as f64 - cj as f64).abs());
        }
    }
    if sims.is_empty() {
        return None;
    }
    let mean_sim = sims.iter().sum::<f64>() / sims.len() as f64;
    let mean_pos_dist = pos_dists.iter().sum::<f64>() / pos_dists.len() as f64;

    let mut prof_dists = Vec::new();
    for ci in 0..n_cols_i {
        let Some(p) = ctx.profile(a_i, ti, ci) else {
            continue;
        };
        let mut best: Option<f64> = None;
        for cj in 0..n_cols_j {
            let Some(q) = ctx.profile(a_j, tj, cj) else {
                continue;
            };
            let d = profile_distance(&p.gamma, &q.gamma);
            if best.map(|b| d < b).unwrap_or(true) {
                best = Some(d);
            }
        }
        if let Some(d) = best {
            prof_dists.push(d);
        }
    }
    let profile_dist = if prof_dists.is_empty() {
        None
    } else {
        Some(prof_dists.iter().sum::<f64>() / prof_dists.len() as f64)
    };

    Some(TableMatch {
        mean_sim,
        mean_pos_dist,
        profile_dist,
    })
}

/// Compute all ten features for one ordered article pair.
pub fn featurize_pair(
    ctx: &FeatureContext,
    a_i: &str,
    a_j: &str,
) -> Result<PairFeatures, CandgenError> {
    if a_i == a_j {
        return Err(CandgenError::SelfPair(a_i.to_string()));
    }
    for id in [a_i, a_j] {
        let article = ctx
            .corpus
            .get(id)
            .ok_or_else(|| CandgenError::UnknownArticle(id.to_string()))?;
        if !article.has_tables() {
            return Err(CandgenError::NoTables(id.to_string()));
        }
    }
    let art_i = ctx.corpus.get(a_i).unwrap();
    let art_j = ctx.corpus.get(a_j).unwrap();

    let mut pf = PairFeatures::new(a_i, a_j);

    pf.set(
        FeatureId::F1,
        Some(cosine_sparse(&ctx.tfidf_vecs[a_i], &ctx.tfidf_vecs[a_j])),
    );
    pf.set(
        FeatureId::F2,
        cosine_opt(ctx.doc_vecs[a_i].as_ref(), ctx.doc_vecs[a_j].as_ref()),
    );
    pf.set(
        FeatureId::F3,
        cosine_opt(ctx.word_avg[a_i].as_ref(), ctx.word_avg[a_j].as_ref()),
    );
    pf.set(
        FeatureId::F4,
        cosine_opt(ctx.cat_vecs[a_i].as_ref(), ctx.cat_vecs[a_j].as_ref()),
    );
    pf.set(
        FeatureId::F5,
        Some(jaccard(&ctx.parent_sets[a_i], &ctx.parent_sets[a_j])),
    );
    pf.set(
        FeatureId::F6,
        cosine_opt(ctx.node_vecs[a_i].as_ref(), ctx.node_vecs[a_j].as_ref()),
    );
    pf.set(FeatureId::F7, Some(type_jaccard(a_i, a_j, ctx.kb)));

    // Best table pair by mean best-column similarity.
    let mut best: Option<TableMatch> = None;
    for (ti, t_i) in art_i.tables.iter().enumerate() {
        for (tj, t_j) in art_j.tables.iter().enumerate() {
            if let Some(m) = match_tables(
                ctx,
                a_i,
                ti,
                t_i.columns.len(),
                a_j,
                tj,
                t_j.columns.len(),
            ) {
                if best
                    .as_ref()
                    .map(|b| m.mean_sim > b.mean_sim)
                    .unwrap_or(true)
                {
                    best = Some(m);
                }
            }
        }
    }
    if let Some(m) = best {
        pf.set(FeatureId::F8L, Some(m.mean_sim));
        pf.set(FeatureId::F8D, Some(m.mean_pos_dist));
        pf.set(FeatureId::F9, m.profile_dist);
    }
    Ok(pf)
}

/// Featurize many pairs; parallel over pairs, output order matches input
/// order regardless of worker count.
pub fn featurize_pairs(
    ctx: &FeatureContext,
    pairs: &[(String, String)],
) -> Result<Vec<PairFeatures>, CandgenError> {
    pairs
        .par_iter()
        .map(|(a, b)| featurize_pair(ctx, a, b))
        .collect()
}

const TSV_HEADER: &str = "a_i\ta_j\tf1\tf2\tf3\tf4\tf5\tf6\tf7\tf8_l\tf8_d\tf9\tlabel";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

/// `a_i a_j f1 .. f9 label` with `NA` for absent features and an empty label
/// column for unlabeled pairs. Comment lines start with `#`.
pub fn write_features_tsv(
    path: &Path,
    features: &[PairFeatures],
    comments: &[String],
) -> Result<(), CandgenError> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{TSV_HEADER}")?;
    for pf in features {
        let cols: Vec<String> = FeatureId::ALL.iter().map(|&f| fmt_opt(pf.get(f))).collect();
        let label = match pf.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        writeln!(w, "{}\t{}\t{}\t{}", pf.a_i, pf.a_j, cols.join("\t"), label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_tsv(path: &Path) -> Result<(Vec<PairFeatures>, Vec<String>), CandgenError> {
    let mut out = Vec::new();
    let mut comments = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix("# ") {
            comments.push(c.to_string());
            continue;
        }
        if !saw_header {
            if line != TSV_HEADER {
                return Err(CandgenError::MalformedTsv {
                    line: lineno + 1,
                    reason: "unexpected header".into(),
                });
            }
            saw_header = true;
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 13 {
            return Err(CandgenError::MalformedTsv {
                line: lineno + 1,
                reason: format!("expected 13 fields, got {}", parts.len()),
            });
        }
        let mut pf = PairFeatures::new(parts[0], parts[1]);
        for (k, &f) in FeatureId::ALL.iter().enumerate() {
            let field = parts[2 + k];
            let v = if field == "NA" {
                None
            } else {
                Some(field.parse::<f64>().map_err(|e| CandgenError::MalformedTsv {
                    line: lineno + 1,
                    reason: e.to_string(),
                })?)
            };
            pf.set(f, v);
        }
        pf.label = match parts[12] {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            other => {
                return Err(CandgenError::MalformedTsv {
                    line: lineno + 1,
                    reason: format!("bad label {other:?}"),
                })
            }
        };
        out.push(pf);
    }
    Ok((out, comments))
}
