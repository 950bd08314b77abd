//! Article/table data model and the JSONL interchange format.
//!
//! One article per line. Tables hold ordered columns; each cell is an
//! instance link, a primitive value, or explicitly missing. Column order is
//! significant (positional features depend on it) and is preserved verbatim
//! through load/save.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate article id {id:?} on line {line}")]
    DuplicateArticle { id: String, line: usize },
    #[error("duplicate table id {id:?} in article {article:?}")]
    DuplicateTable { id: String, article: String },
}

/// Three-way relation between an ordered table pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "equivalent")]
    Equivalent,
    #[serde(rename = "subPartOf")]
    SubPartOf,
    #[serde(rename = "none")]
    None,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 3] = [
        RelationLabel::Equivalent,
        RelationLabel::SubPartOf,
        RelationLabel::None,
    ];

    /// Fixed class index; ties in classifiers break toward lower indices.
    pub fn index(self) -> usize {
        match self {
            RelationLabel::Equivalent => 0,
            RelationLabel::SubPartOf => 1,
            RelationLabel::None => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<RelationLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Equivalent => "equivalent",
            RelationLabel::SubPartOf => "subPartOf",
            RelationLabel::None => "none",
        }
    }
}

impl std::str::FromStr for RelationLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equivalent" => Ok(RelationLabel::Equivalent),
            "subPartOf" => Ok(RelationLabel::SubPartOf),
            "none" => Ok(RelationLabel::None),
            other => Err(format!("unknown relation label {other:?}")),
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimitiveKind {
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "date")]
    Date,
}

/// Cell content. Wire form: `{"t":"i","v":id}`, `{"t":"p","k":kind,"v":raw}`,
/// or `{"t":"m"}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum CellValue {
    #[serde(rename = "i")]
    Instance { v: String },
    #[serde(rename = "p")]
    Primitive { k: PrimitiveKind, v: String },
    #[serde(rename = "m")]
    Missing,
}

impl CellValue {
    pub fn instance_id(&self) -> Option<&str> {
        match self {
            CellValue::Instance { v } => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    /// Header text, preserved verbatim including case.
    #[serde(rename = "desc")]
    pub description: String,
    pub cells: Vec<CellValue>,
}

impl Column {
    /// Distinct instance article ids, in first-seen order.
    pub fn instance_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for cell in &self.cells {
            if let Some(id) = cell.instance_id() {
                if seen.insert(id) {
                    out.push(id);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    /// Set during load from the containing article; not part of the wire form.
    #[serde(skip)]
    pub article_id: String,
    pub columns: Vec<Column>,
    #[serde(rename = "rows")]
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(rename = "categories")]
    pub category_ids: BTreeSet<String>,
    #[serde(rename = "anchors")]
    pub anchor_out: BTreeSet<String>,
    pub tables: Vec<Table>,
}

impl Article {
    pub fn has_tables(&self) -> bool {
        !self.tables.is_empty()
    }
}

/// Immutable article collection with id lookup. Safe to share read-only
/// across parallel workers.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_articles(articles: Vec<Article>) -> Result<Corpus, CorpusError> {
        let mut index = HashMap::with_capacity(articles.len());
        for (pos, article) in articles.iter().enumerate() {
            if index.insert(article.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateArticle {
                    id: article.id.clone(),
                    line: pos + 1,
                });
            }
        }
        Ok(Corpus { articles, index })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn table(&self, article_id: &str, table_id: &str) -> Option<&Table> {
        self.get(article_id)?.tables.iter().find(|t| t.id == table_id)
    }

    /// Articles that contain at least one table, in corpus order.
    pub fn table_bearing(&self) -> impl Iterator<Item = &Article> {
        self.articles.iter().filter(|a| a.has_tables())
    }

    pub fn table_bearing_count(&self) -> usize {
        self.table_bearing().count()
    }
}

/// A cell reference to an article id that does not resolve in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingRef {
    pub table_id: String,
    pub column_index: usize,
    pub target: String,
}

/// Load result: the linked corpus plus dangling-reference warnings
/// (collected, never silently dropped).
#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub dangling: Vec<DanglingRef>,
}

pub fn load_corpus(path: &Path) -> Result<CorpusLoad, CorpusError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut articles = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut article: Article = serde_json::from_str(&line).map_err(|source| {
            CorpusError::Parse {
                line: lineno + 1,
                source,
            }
        })?;
        for table in &mut article.tables {
            table.article_id = article.id.clone();
        }
        articles.push(article);
    }

    let mut index = HashMap::with_capacity(articles.len());
    for (pos, article) in articles.iter().enumerate() {
        if index.insert(article.id.clone(), pos).is_some() {
            return Err(CorpusError::DuplicateArticle {
                id: article.id.clone(),
                line: pos + 1,
            });
        }
        let mut table_ids = BTreeSet::new();
        for table in &article.tables {
            if !table_ids.insert(&table.id) {
                return Err(CorpusError::DuplicateTable {
                    id: table.id.clone(),
                    article: article.id.clone(),
                });
            }
        }
    }
    let corpus = Corpus { articles, index };
    let dangling = collect_dangling(&corpus);
    Ok(CorpusLoad { corpus, dangling })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for article in corpus.articles() {
        let line = serde_json::to_string(article).expect("article serialization");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

fn collect_dangling(corpus: &Corpus) -> Vec<DanglingRef> {
    let mut out = Vec::new();
    for article in corpus.articles() {
        for table in &article.tables {
            for (ci, column) in table.columns.iter().enumerate() {
                for cell in &column.cells {
                    if let Some(id) = cell.instance_id() {
                        if !corpus.contains(id) {
                            out.push(DanglingRef {
                                table_id: table.id.clone(),
                                column_index: ci,
                                target: id.to_string(),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Lowercase tokens split on non-alphanumeric runs; empty tokens dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finding {
    DanglingInstance {
        table_id: String,
        column_index: usize,
        target: String,
    },
    EmptySchema {
        table_id: String,
    },
    RowCountMismatch {
        table_id: String,
        column_index: usize,
        cells: usize,
        row_count: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Report-only integrity scan; the corpus is never modified.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut findings = Vec::new();
    for article in corpus.articles() {
        for table in &article.tables {
            if table.columns.is_empty() {
                findings.push(Finding::EmptySchema {
                    table_id: table.id.clone(),
                });
            }
            for (ci, column) in table.columns.iter().enumerate() {
                if column.cells.len() != table.row_count {
                    findings.push(Finding::RowCountMismatch {
                        table_id: table.id.clone(),
                        column_index: ci,
                        cells: column.cells.len(),
                        row_count: table.row_count,
                    });
                }
            }
        }
    }
    for d in collect_dangling(corpus) {
        findings.push(Finding::DanglingInstance {
            table_id: d.table_id,
            column_index: d.column_index,
            target: d.target,
        });
    }
    ValidationReport { findings }
}
