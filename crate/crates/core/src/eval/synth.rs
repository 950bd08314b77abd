//! Seeded synthetic corpus with planted table relations.
//!
//! Articles are grouped into topics, each with its own category subtree,
//! vocabulary, entity pool, KB predicates, and types. Every topic hosts one
//! table family per article: a base table, an equivalent partner (columns
//! renamed through the dictionary, rows resampled disjointly from the same
//! entity pool), and an inclusion child (row selection plus column
//! projection), spread round-robin over the topic's articles. Cross-topic
//! base pairs are recorded as `none`. All randomness flows from one seeded
//! generator, so a seed pins the corpus byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::colsem::Triple;
use crate::corpus::{Article, CellValue, Column, Corpus, PrimitiveKind, RelationLabel, Table};

fn default_rename_dict() -> BTreeMap<String, String> {
    [
        ("country", "nation"),
        ("athlete", "sportsperson"),
        ("result", "mark"),
        ("year", "season"),
        ("title", "name"),
        ("venue", "location"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn default_num_topics() -> usize {
    25
}
fn default_entities_per_topic() -> usize {
    20
}
fn default_nones_per_family() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Total table families; also the number of table-bearing articles.
    pub num_base_tables: usize,
    pub rows_per_table: usize,
    /// Fraction of parent rows kept in an inclusion child.
    pub selection_fraction: f64,
    /// Column renames applied to equivalent partners.
    #[serde(default = "default_rename_dict")]
    pub rename_dict: BTreeMap<String, String>,
    /// Probability of per-cell/token/anchor perturbations.
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_num_topics")]
    pub num_topics: usize,
    #[serde(default = "default_entities_per_topic")]
    pub entities_per_topic: usize,
    #[serde(default = "default_nones_per_family")]
    pub nones_per_family: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_base_tables: 200,
            rows_per_table: 8,
            selection_fraction: 0.5,
            rename_dict: default_rename_dict(),
            noise: 0.0,
            seed: 42,
            num_topics: default_num_topics(),
            entities_per_topic: default_entities_per_topic(),
            nones_per_family: default_nones_per_family(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub left_article: String,
    pub left_table: String,
    pub right_article: String,
    pub right_table: String,
    pub label: RelationLabel,
}

#[derive(Debug)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub gold: Vec<GoldPair>,
    /// Category edges (`child childOf parent`), root `"root"`.
    pub edges: Vec<(String, String)>,
    pub triples: Vec<Triple>,
    pub types: BTreeMap<String, BTreeSet<String>>,
}

impl SynthOutput {
    /// Canonically ordered article pairs holding at least one planted table
    /// relation.
    pub fn relevant_article_pairs(&self) -> BTreeSet<(String, String)> {
        relevant_article_pairs(&self.gold)
    }
}

pub fn relevant_article_pairs(gold: &[GoldPair]) -> BTreeSet<(String, String)> {
    gold.iter()
        .filter(|g| g.label != RelationLabel::None)
        .map(|g| {
            if g.left_article <= g.right_article {
                (g.left_article.clone(), g.right_article.clone())
            } else {
                (g.right_article.clone(), g.left_article.clone())
            }
        })
        .collect()
}

struct TopicIds {
    topic_cat: String,
    subcats: [String; 3],
    type_name: String,
    words: Vec<String>,
    entities: Vec<String>,
    predicates: [String; 2],
}

fn topic_ids(t: usize, spec: &SynthSpec) -> TopicIds {
    TopicIds {
        topic_cat: format!("top{t:02}"),
        subcats: [
            format!("top{t:02}s0"),
            format!("top{t:02}s1"),
            format!("top{t:02}s2"),
        ],
        type_name: format!("ty{t:02}"),
        words: (0..10).map(|j| format!("w{t:02}x{j}")).collect(),
        entities: (0..spec.entities_per_topic)
            .map(|i| format!("e{t:02}x{i:02}"))
            .collect(),
        predicates: [format!("p{t:02}a"), format!("p{t:02}b")],
    }
}

const FILLER_WORDS: [&str; 6] = ["record", "listing", "overview", "labeled", "entries", "compiled"];

fn sample_distinct(rng: &mut ChaCha8Rng, pool: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool).collect();
    for i in 0..count.min(pool) {
        let j = rng.gen_range(i..pool);
        idx.swap(i, j);
    }
    idx.truncate(count.min(pool));
    idx
}

fn abstract_text(rng: &mut ChaCha8Rng, topic: &TopicIds) -> String {
    // A fixed core of topic words keeps same-topic abstract overlap high;
    // the sampled tail varies the tf-idf weights.
    let mut tokens: Vec<String> = topic.words[..5].to_vec();
    for _ in 0..3 {
        tokens.push(topic.words[rng.gen_range(0..topic.words.len())].clone());
    }
    for _ in 0..2 {
        tokens.push(FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())].to_string());
    }
    tokens.join(" ")
}

fn primitive_cell(rng: &mut ChaCha8Rng, kind: usize, topic: &TopicIds) -> CellValue {
    match kind % 3 {
        0 => CellValue::Primitive {
            k: PrimitiveKind::Number,
            v: format!("{}", rng.gen_range(1..5000)),
        },
        1 => CellValue::Primitive {
            k: PrimitiveKind::Text,
            v: topic.words[rng.gen_range(0..topic.words.len())].clone(),
        },
        _ => CellValue::Primitive {
            k: PrimitiveKind::Date,
            v: format!(
                "20{:02}-{:02}-{:02}",
                rng.gen_range(0..20),
                rng.gen_range(1..13),
                rng.gen_range(1..29)
            ),
        },
    }
}

/// Rows materialized column-wise for one table.
fn make_rows(
    rng: &mut ChaCha8Rng,
    topic: &TopicIds,
    entity_rows: &[usize],
    n_cols: usize,
) -> Vec<Vec<CellValue>> {
    let mut columns: Vec<Vec<CellValue>> = vec![Vec::new(); n_cols];
    for &ent in entity_rows {
        columns[0].push(CellValue::Instance {
            v: topic.entities[ent].clone(),
        });
        for (c, col) in columns.iter_mut().enumerate().skip(1) {
            col.push(primitive_cell(rng, c, topic));
        }
    }
    columns
}

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> SynthOutput {
    assert!(spec.num_topics > 0, "need at least one topic");
    assert!(
        spec.num_base_tables.is_multiple_of(spec.num_topics),
        "num_base_tables must divide evenly into topics"
    );
    let articles_per_topic = spec.num_base_tables / spec.num_topics;
    assert!(
        articles_per_topic >= 3,
        "need at least 3 articles per topic to spread a family"
    );
    assert!(
        2 * spec.rows_per_table <= spec.entities_per_topic,
        "entity pool must cover two disjoint row samples"
    );
    let dict: Vec<(&String, &String)> = spec.rename_dict.iter().collect();
    assert!(dict.len() >= 4, "rename dictionary needs at least 4 entries");

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut triples: Vec<Triple> = Vec::new();
    let mut types: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut gold: Vec<GoldPair> = Vec::new();

    let topics: Vec<TopicIds> = (0..spec.num_topics).map(|t| topic_ids(t, spec)).collect();
    for topic in &topics {
        edges.push((topic.topic_cat.clone(), "root".to_string()));
        for sub in &topic.subcats {
            edges.push((sub.clone(), topic.topic_cat.clone()));
        }
    }

    let article_id = |t: usize, i: usize| format!("a{t:02}x{i:02}");

    // Tables per (topic, article slot), assembled family by family.
    let mut tables: Vec<Vec<Vec<Table>>> =
        vec![vec![Vec::new(); articles_per_topic]; spec.num_topics];
    // Remember each base table's instance rows for the audit of children.
    let mut base_coords: Vec<Vec<(usize, String)>> = vec![Vec::new(); spec.num_topics];

    for (t, topic) in topics.iter().enumerate() {
        for k in 0..articles_per_topic {
            let n_cols = 3 + (k % 2);
            let desc_keys: Vec<&String> =
                (0..n_cols).map(|j| dict[(k + j) % dict.len()].0).collect();
            let desc_vals: Vec<&String> =
                (0..n_cols).map(|j| dict[(k + j) % dict.len()].1).collect();

            let sample = sample_distinct(&mut rng, topic.entities.len(), 2 * spec.rows_per_table);
            let base_rows = &sample[..spec.rows_per_table];
            let equiv_rows = &sample[spec.rows_per_table..];

            let base_id = format!("t{t:02}f{k:02}b");
            let equiv_id = format!("t{t:02}f{k:02}e");
            let sub_id = format!("t{t:02}f{k:02}s");

            let base_cols = make_rows(&mut rng, topic, base_rows, n_cols);
            let equiv_cols = make_rows(&mut rng, topic, equiv_rows, n_cols);

            // Inclusion child: a row selection and a column projection of
            // the base.
            let keep = ((spec.rows_per_table as f64 * spec.selection_fraction).ceil() as usize)
                .clamp(1, spec.rows_per_table);
            let kept_rows = sample_distinct(&mut rng, spec.rows_per_table, keep);
            let sub_cols: Vec<Vec<CellValue>> = base_cols[..n_cols - 1]
                .iter()
                .map(|col| kept_rows.iter().map(|&r| col[r].clone()).collect())
                .collect();

            let build = |id: &str, descs: &[&String], cols: Vec<Vec<CellValue>>| -> Table {
                let rows = cols.first().map(|c| c.len()).unwrap_or(0);
                Table {
                    id: id.to_string(),
                    article_id: String::new(),
                    columns: descs
                        .iter()
                        .zip(cols)
                        .map(|(d, cells)| Column {
                            description: d.to_string(),
                            cells,
                        })
                        .collect(),
                    row_count: rows,
                }
            };

            let host_base = k;
            let host_equiv = (k + 1) % articles_per_topic;
            let host_sub = (k + 2) % articles_per_topic;
            tables[t][host_base].push(build(&base_id, &desc_keys, base_cols));
            tables[t][host_equiv].push(build(&equiv_id, &desc_vals, equiv_cols));
            tables[t][host_sub].push(build(&sub_id, &desc_keys[..n_cols - 1], sub_cols));
            base_coords[t].push((host_base, base_id.clone()));

            gold.push(GoldPair {
                left_article: article_id(t, host_base),
                left_table: base_id.clone(),
                right_article: article_id(t, host_equiv),
                right_table: equiv_id,
                label: RelationLabel::Equivalent,
            });
            gold.push(GoldPair {
                left_article: article_id(t, host_base),
                left_table: base_id,
                right_article: article_id(t, host_sub),
                right_table: sub_id,
                label: RelationLabel::SubPartOf,
            });
        }
    }

    // Cross-topic none pairs between planted bases.
    if spec.num_topics > 1 {
        for t in 0..spec.num_topics {
            for k in 0..articles_per_topic {
                for n in 0..spec.nones_per_family {
                    let other_t = (t + 1 + ((k + n) % (spec.num_topics - 1))) % spec.num_topics;
                    let other_k = (k * 7 + 3 + n) % articles_per_topic;
                    let (host, table) = &base_coords[t][k];
                    let (other_host, other_table) = &base_coords[other_t][other_k];
                    gold.push(GoldPair {
                        left_article: article_id(t, *host),
                        left_table: table.clone(),
                        right_article: article_id(other_t, *other_host),
                        right_table: other_table.clone(),
                        label: RelationLabel::None,
                    });
                }
            }
        }
    }

    // Assemble article records.
    let mut articles: Vec<Article> = Vec::new();
    for (t, topic) in topics.iter().enumerate() {
        for (i, table_list) in tables[t].iter().enumerate() {
            let id = article_id(t, i);
            let mut anchor_out: BTreeSet<String> = BTreeSet::new();
            for table in table_list {
                for column in &table.columns {
                    for cell in &column.cells {
                        if let Some(e) = cell.instance_id() {
                            anchor_out.insert(e.to_string());
                        }
                    }
                }
            }
            // A couple of extra topic entities keep anchor overlap within
            // the topic above zero even for disjoint row samples.
            anchor_out.insert(topic.entities[i % topic.entities.len()].clone());
            anchor_out.insert(topic.entities[(i + 1) % topic.entities.len()].clone());
            if spec.num_topics > 1 && rng.gen::<f64>() < spec.noise {
                let ot = (t + 1) % spec.num_topics;
                anchor_out.insert(topics[ot].entities[i % topics[ot].entities.len()].clone());
            }

            let mut tables_owned = table_list.clone();
            for table in &mut tables_owned {
                table.article_id = id.clone();
            }
            let mut category_ids: BTreeSet<String> = BTreeSet::new();
            category_ids.insert(topic.subcats[i % 3].clone());
            if i % 2 == 0 {
                category_ids.insert(topic.subcats[(i + 1) % 3].clone());
            }
            articles.push(Article {
                id: id.clone(),
                title: format!("List of {} {}", topic.words[0], i),
                abstract_text: abstract_text(&mut rng, topic),
                category_ids,
                anchor_out,
                tables: tables_owned,
            });
            types.insert(
                id.clone(),
                [topic.type_name.clone()].into_iter().collect(),
            );
        }
    }

    // Entity articles: categorized, linked within the topic, no tables.
    for (t, topic) in topics.iter().enumerate() {
        for (i, ent) in topic.entities.iter().enumerate() {
            let mut anchor_out: BTreeSet<String> = BTreeSet::new();
            // Entities link back to their topic's table articles, giving the
            // anchor graph in-link overlap for same-topic pairs.
            anchor_out.insert(article_id(t, i % articles_per_topic));
            anchor_out.insert(article_id(t, (i + 1) % articles_per_topic));
            articles.push(Article {
                id: ent.clone(),
                title: format!("{} {}", topic.words[1], i),
                abstract_text: abstract_text(&mut rng, topic),
                category_ids: [topic.subcats[i % 3].clone()].into_iter().collect(),
                anchor_out,
                tables: Vec::new(),
            });
            types.insert(ent.clone(), [topic.type_name.clone()].into_iter().collect());
            triples.push(Triple {
                subject: ent.clone(),
                predicate: topic.predicates[0].clone(),
                object: format!("o{t:02}v{}", i % 4),
            });
            triples.push(Triple {
                subject: ent.clone(),
                predicate: topic.predicates[1].clone(),
                object: format!("q{t:02}v{}", i % 2),
            });
        }
    }

    // Cell and abstract noise, applied after planting so clean fixtures
    // (noise 0) keep exact containment.
    if spec.noise > 0.0 {
        for article in &mut articles {
            for table in &mut article.tables {
                for column in &mut table.columns {
                    for cell in &mut column.cells {
                        if rng.gen::<f64>() < spec.noise {
                            *cell = CellValue::Missing;
                        }
                    }
                }
            }
            if spec.num_topics > 1 {
                let other = topics[(fnv_mod(&article.id, spec.num_topics)) % spec.num_topics]
                    .words
                    .clone();
                let mut tokens: Vec<String> = article
                    .abstract_text
                    .split(' ')
                    .map(|s| s.to_string())
                    .collect();
                for tok in &mut tokens {
                    if rng.gen::<f64>() < spec.noise {
                        *tok = other[rng.gen_range(0..other.len())].clone();
                    }
                }
                article.abstract_text = tokens.join(" ");
            }
        }
    }

    let corpus = Corpus::from_articles(articles).expect("generated ids are unique");
    SynthOutput {
        corpus,
        gold,
        edges,
        triples,
        types,
    }
}

fn fnv_mod(s: &str, m: usize) -> usize {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % m as u64) as usize
}

const GOLD_HEADER: &str = "left_article\tleft_table\tright_article\tright_table\tlabel";

pub fn write_gold_tsv(path: &Path, gold: &[GoldPair], comments: &[String]) -> Result<(), EvalError> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{GOLD_HEADER}")?;
    for g in gold {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            g.left_article, g.left_table, g.right_article, g.right_table, g.label
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gold_tsv(path: &Path) -> Result<(Vec<GoldPair>, Vec<String>), EvalError> {
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
            if line != GOLD_HEADER {
                return Err(EvalError::MalformedTsv {
                    line: lineno + 1,
                    reason: "unexpected header".into(),
                });
            }
            saw_header = true;
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 5 {
            return Err(EvalError::MalformedTsv {
                line: lineno + 1,
                reason: format!("expected 5 fields, got {}", parts.len()),
            });
        }
        let label: RelationLabel = parts[4].parse().map_err(|reason| EvalError::MalformedTsv {
            line: lineno + 1,
            reason,
        })?;
        out.push(GoldPair {
            left_article: parts[0].to_string(),
            left_table: parts[1].to_string(),
            right_article: parts[2].to_string(),
            right_table: parts[3].to_string(),
            label,
        });
    }
    Ok((out, comments))
}
