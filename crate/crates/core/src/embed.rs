//! Word/node vector stores, tf-idf over abstracts, and cosine similarity.
//!
//! Vectors come either from text files in the common pre-trained format
//! (`key v1 v2 ... vd` per line) or from a seeded hash fallback that derives
//! a unit vector from the key, so the full pipeline runs with no external
//! embedding files and stays deterministic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{tokenize, Article, Corpus};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed embedding line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("vector for {key:?} has {got} components, store dimension is {dim}")]
    WrongWidth { key: String, got: usize, dim: usize },
}

/// Which vector table a lookup goes against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Word,
    Node,
}

#[derive(Debug, Clone)]
enum Backing {
    Files,
    /// Seeded hash fallback: any key resolves to a deterministic unit vector.
    Hashed { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    word_vecs: HashMap<String, Vec<f64>>,
    node_vecs: HashMap<String, Vec<f64>>,
    backing: Backing,
}

/// Mean over found keys plus the miss count; `vector` is `None` when no key
/// was found (an explicit absent marker, never a silent zero).
#[derive(Debug, Clone, PartialEq)]
pub struct AvgEmbedding {
    pub vector: Option<Vec<f64>>,
    pub missing: usize,
}

impl EmbeddingStore {
    pub fn empty(dim: usize) -> EmbeddingStore {
        EmbeddingStore {
            dim,
            word_vecs: HashMap::new(),
            node_vecs: HashMap::new(),
            backing: Backing::Files,
        }
    }

    /// Store that synthesizes a deterministic unit vector per key.
    pub fn hashed(dim: usize, seed: u64) -> EmbeddingStore {
        EmbeddingStore {
            dim,
            word_vecs: HashMap::new(),
            node_vecs: HashMap::new(),
            backing: Backing::Hashed { seed },
        }
    }

    pub fn from_files(
        dim: usize,
        word_path: Option<&Path>,
        node_path: Option<&Path>,
    ) -> Result<EmbeddingStore, EmbedError> {
        let mut store = EmbeddingStore::empty(dim);
        if let Some(p) = word_path {
            store.word_vecs = load_vector_file(p, dim)?;
        }
        if let Some(p) = node_path {
            store.node_vecs = load_vector_file(p, dim)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert_word(&mut self, key: &str, vec: Vec<f64>) {
        assert_eq!(vec.len(), self.dim);
        self.word_vecs.insert(key.to_string(), vec);
    }

    pub fn insert_node(&mut self, key: &str, vec: Vec<f64>) {
        assert_eq!(vec.len(), self.dim);
        self.node_vecs.insert(key.to_string(), vec);
    }

    pub fn lookup(&self, kind: VectorKind, key: &str) -> Option<Vec<f64>> {
        let table = match kind {
            VectorKind::Word => &self.word_vecs,
            VectorKind::Node => &self.node_vecs,
        };
        if let Some(v) = table.get(key) {
            return Some(v.clone());
        }
        match self.backing {
            Backing::Files => None,
            Backing::Hashed { seed } => Some(hash_unit_vector(self.dim, seed, kind, key)),
        }
    }

    pub fn word_vec(&self, key: &str) -> Option<Vec<f64>> {
        self.lookup(VectorKind::Word, key)
    }

    pub fn node_vec(&self, key: &str) -> Option<Vec<f64>> {
        self.lookup(VectorKind::Node, key)
    }

    /// Arithmetic mean over the keys that resolve; permutation-invariant.
    pub fn avg_embedding<I, S>(&self, keys: I, kind: VectorKind) -> AvgEmbedding
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        let mut missing = 0usize;
        for key in keys {
            match self.lookup(kind, key.as_ref()) {
                Some(v) => {
                    for (s, x) in sum.iter_mut().zip(&v) {
                        *s += x;
                    }
                    found += 1;
                }
                None => missing += 1,
            }
        }
        if found == 0 {
            return AvgEmbedding {
                vector: None,
                missing,
            };
        }
        for s in &mut sum {
            *s /= found as f64;
        }
        AvgEmbedding {
            vector: Some(sum),
            missing,
        }
    }
}

/// FNV-1a, stable across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn hash_unit_vector(dim: usize, seed: u64, kind: VectorKind, key: &str) -> Vec<f64> {
    let ns: u64 = match kind {
        VectorKind::Word => 0x77,
        VectorKind::Node => 0x6e,
    };
    let h = fnv1a(key.as_bytes()) ^ seed.wrapping_mul(0x9e3779b97f4a7c15) ^ ns;
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let normal = rand::distributions::Uniform::new(-1.0f64, 1.0);
    let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

fn load_vector_file(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>, EmbedError> {
    let file = File::open(path)?;
    let mut out = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts
            .next()
            .ok_or_else(|| EmbedError::MalformedLine {
                line: lineno + 1,
                reason: "missing key".into(),
            })?
            .to_string();
        let values: Result<Vec<f64>, _> = parts.map(|t| t.parse::<f64>()).collect();
        let values = values.map_err(|e| EmbedError::MalformedLine {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        // Optional `count dim` header line.
        if lineno == 0 && values.len() == 1 && key.parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(EmbedError::WrongWidth {
                key,
                got: values.len(),
                dim,
            });
        }
        out.insert(key, values);
    }
    Ok(out)
}

/// Cosine similarity; zero-norm inputs compare as 0 by convention.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

/// Cosine over sparse maps; absent keys are zeros.
pub fn cosine_sparse(u: &BTreeMap<String, f64>, v: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = u
        .iter()
        .filter_map(|(k, a)| v.get(k).map(|b| a * b))
        .sum();
    let nu: f64 = u.values().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.values().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu * nv)
}

/// Document frequencies over corpus abstracts. Weights use
/// `tf * ln(num_docs / (1 + df))`, clamped at zero.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    doc_freq: HashMap<String, usize>,
    num_docs: usize,
}

impl TfIdfIndex {
    pub fn build(corpus: &Corpus) -> TfIdfIndex {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for article in corpus.articles() {
            let uniq: HashSet<String> = tokenize(&article.abstract_text).into_iter().collect();
            for t in uniq {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        TfIdfIndex {
            doc_freq,
            num_docs: corpus.len(),
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    fn idf(&self, token: &str) -> f64 {
        (self.num_docs as f64 / (1.0 + self.doc_freq(token) as f64)).ln()
    }

    /// Sparse tf-idf vector over the article's abstract tokens.
    pub fn tfidf_vector(&self, article: &Article) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(&article.abstract_text) {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        for (token, count) in tf.iter_mut() {
            *count = (*count * self.idf(token)).max(0.0);
        }
        tf
    }
}

/// tf-idf-weighted average of the abstract's word vectors. Zero vector for
/// an empty abstract; `None` when no token resolves in the store; plain
/// average when every resolved token has zero weight.
pub fn doc_embedding(
    store: &EmbeddingStore,
    index: &TfIdfIndex,
    article: &Article,
) -> Option<Vec<f64>> {
    let tokens = tokenize(&article.abstract_text);
    if tokens.is_empty() {
        return Some(vec![0.0; store.dim()]);
    }
    let weights = index.tfidf_vector(article);
    let mut sum = vec![0.0; store.dim()];
    let mut total_w = 0.0;
    let mut fallback_sum = vec![0.0; store.dim()];
    let mut found = 0usize;
    for (token, w) in &weights {
        if let Some(v) = store.word_vec(token) {
            found += 1;
            total_w += w;
            for ((s, fs), x) in sum.iter_mut().zip(&mut fallback_sum).zip(&v) {
                *s += w * x;
                *fs += x;
            }
        }
    }
    if found == 0 {
        return None;
    }
    if total_w > 0.0 {
        for s in &mut sum {
            *s /= total_w;
        }
        Some(sum)
    } else {
        for fs in &mut fallback_sum {
            *fs /= found as f64;
        }
        Some(fallback_sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use std::collections::BTreeSet;

    fn article(id: &str, abstract_text: &str) -> Article {
        Article {
            id: id.into(),
            title: id.into(),
            abstract_text: abstract_text.into(),
            category_ids: BTreeSet::new(),
            anchor_out: BTreeSet::new(),
            tables: Vec::new(),
        }
    }

    #[test]
    fn cosine_basics() {
        let u = vec![1.0, 2.0];
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let v = vec![2.0, -1.0];
        assert!(cosine(&u, &v).unwrap().abs() < 1e-12);
        let w = vec![2.0, 1.0];
        assert!((cosine(&u, &w).unwrap() - 0.8).abs() < 1e-12);
        assert!(cosine(&u, &[1.0][..]).is_err());
        assert_eq!(cosine(&[0.0, 0.0], &u).unwrap(), 0.0);
    }

    #[test]
    fn cosine_scale_invariance() {
        let u = vec![0.3, -1.2, 4.0];
        let v = vec![2.0, 0.5, -0.25];
        let scaled: Vec<f64> = u.iter().map(|x| 3.5 * x).collect();
        let a = cosine(&u, &v).unwrap();
        let b = cosine(&scaled, &v).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn avg_embedding_cases() {
        let mut store = EmbeddingStore::empty(2);
        store.insert_word("a", vec![1.0, 0.0]);
        store.insert_word("b", vec![0.0, 1.0]);

        let single = store.avg_embedding(["a"], VectorKind::Word);
        assert_eq!(single.vector, Some(vec![1.0, 0.0]));
        assert_eq!(single.missing, 0);

        let pair = store.avg_embedding(["a", "b"], VectorKind::Word);
        assert_eq!(pair.vector, Some(vec![0.5, 0.5]));

        let rev = store.avg_embedding(["b", "a"], VectorKind::Word);
        assert_eq!(pair.vector, rev.vector);

        let none = store.avg_embedding(["x", "y", "z"], VectorKind::Word);
        assert_eq!(none.vector, None);
        assert_eq!(none.missing, 3);
    }

    #[test]
    fn hashed_store_is_deterministic_and_unit_norm() {
        let s1 = EmbeddingStore::hashed(50, 7);
        let s2 = EmbeddingStore::hashed(50, 7);
        let v1 = s1.word_vec("anything").unwrap();
        let v2 = s2.word_vec("anything").unwrap();
        assert_eq!(v1, v2);
        let norm: f64 = v1.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        // Different namespaces and keys give different vectors.
        assert_ne!(s1.word_vec("anything"), s1.node_vec("anything"));
        assert_ne!(s1.word_vec("anything"), s1.word_vec("else"));
        // Different seeds give different vectors.
        assert_ne!(
            EmbeddingStore::hashed(50, 8).word_vec("anything"),
            s1.word_vec("anything")
        );
    }

    #[test]
    fn tfidf_common_token_clamped_to_zero() {
        let corpus = Corpus::from_articles(vec![
            article("a1", "shared token one"),
            article("a2", "shared token two"),
        ])
        .unwrap();
        let index = TfIdfIndex::build(&corpus);
        let v = index.tfidf_vector(corpus.get("a1").unwrap());
        // "shared" appears in both docs: idf = ln(2/3) < 0, clamped.
        assert_eq!(v["shared"], 0.0);
        // "one" is unique to a1: idf = ln(2/2) = 0 under +1 smoothing.
        assert_eq!(v["one"], 0.0);
    }

    #[test]
    fn tfidf_empty_abstract_is_empty_vector() {
        let corpus =
            Corpus::from_articles(vec![article("a1", ""), article("a2", "words here")]).unwrap();
        let index = TfIdfIndex::build(&corpus);
        let v = index.tfidf_vector(corpus.get("a1").unwrap());
        assert!(v.is_empty());
        let w = index.tfidf_vector(corpus.get("a2").unwrap());
        assert_eq!(cosine_sparse(&v, &w), 0.0);
    }

    #[test]
    fn tfidf_matches_brute_force_oracle() {
        // Independent evaluation of tf * ln(n/(1+df)) over a 3-doc corpus.
        let corpus = Corpus::from_articles(vec![
            article("a1", "alpha alpha beta"),
            article("a2", "beta gamma"),
            article("a3", "gamma gamma delta"),
        ])
        .unwrap();
        let index = TfIdfIndex::build(&corpus);
        let v = index.tfidf_vector(corpus.get("a1").unwrap());
        let n = 3.0f64;
        let expect_alpha = 2.0 * (n / (1.0 + 1.0)).ln();
        let expect_beta = (1.0 * (n / (1.0 + 2.0)).ln()).max(0.0);
        assert!((v["alpha"] - expect_alpha).abs() < 1e-12);
        assert!((v["beta"] - expect_beta).abs() < 1e-12);
    }

    #[test]
    fn doc_embedding_cases() {
        let mut store = EmbeddingStore::empty(2);
        store.insert_word("alpha", vec![1.0, 0.0]);
        store.insert_word("beta", vec![0.0, 1.0]);
        let corpus = Corpus::from_articles(vec![
            article("a1", "alpha"),
            article("a2", "alpha beta"),
            article("a3", ""),
            article("a4", "unknown tokens only"),
            article("a5", "filler so frequencies differ"),
            // keeps df(alpha) == df(beta) so a2's weights are equal
            article("a6", "beta"),
        ])
        .unwrap();
        let index = TfIdfIndex::build(&corpus);

        // Single known token: that token's vector.
        let v1 = doc_embedding(&store, &index, corpus.get("a1").unwrap()).unwrap();
        assert_eq!(v1, vec![1.0, 0.0]);

        // Equal weights: midpoint.
        let v2 = doc_embedding(&store, &index, corpus.get("a2").unwrap()).unwrap();
        assert!((v2[0] - 0.5).abs() < 1e-12 && (v2[1] - 0.5).abs() < 1e-12);

        // Empty abstract: zero vector.
        let v3 = doc_embedding(&store, &index, corpus.get("a3").unwrap()).unwrap();
        assert_eq!(v3, vec![0.0, 0.0]);

        // Nothing resolves: absent.
        assert_eq!(doc_embedding(&store, &index, corpus.get("a4").unwrap()), None);
    }

    #[test]
    fn doc_embedding_matches_weighted_mean_oracle() {
        let mut store = EmbeddingStore::empty(2);
        store.insert_word("alpha", vec![1.0, 0.0]);
        store.insert_word("beta", vec![0.0, 1.0]);
        store.insert_word("gamma", vec![1.0, 1.0]);
        let corpus = Corpus::from_articles(vec![
            article("a1", "alpha alpha beta gamma"),
            article("a2", "beta beta beta"),
            article("a3", "delta"),
        ])
        .unwrap();
        let index = TfIdfIndex::build(&corpus);
        let got = doc_embedding(&store, &index, corpus.get("a1").unwrap()).unwrap();

        // Straight-line recomputation.
        let w = index.tfidf_vector(corpus.get("a1").unwrap());
        let vecs = [
            ("alpha", [1.0, 0.0]),
            ("beta", [0.0, 1.0]),
            ("gamma", [1.0, 1.0]),
        ];
        let mut num = [0.0f64; 2];
        let mut den = 0.0;
        for (t, v) in vecs {
            let wt = w[t];
            den += wt;
            num[0] += wt * v[0];
            num[1] += wt * v[1];
        }
        assert!(den > 0.0, "fixture must have positive weights");
        assert!((got[0] - num[0] / den).abs() < 1e-12);
        assert!((got[1] - num[1] / den).abs() < 1e-12);
    }

    #[test]
    fn vector_file_round_trip() {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2 3").unwrap();
        writeln!(f, "alpha 0.5 -1.25 2").unwrap();
        writeln!(f, "beta 1 0 0.125").unwrap();
        f.flush().unwrap();
        let store = EmbeddingStore::from_files(3, Some(f.path()), None).unwrap();
        assert_eq!(store.word_vec("alpha"), Some(vec![0.5, -1.25, 2.0]));
        assert_eq!(store.word_vec("beta"), Some(vec![1.0, 0.0, 0.125]));
        assert_eq!(store.word_vec("gamma"), None);
    }
}
