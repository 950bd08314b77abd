//! Pipeline stages with persisted artifacts between them.
//!
//! Each stage reads the artifacts of its upstream stages, refuses inputs
//! stamped with a foreign config hash (unless forced), and skips itself
//! when its outputs already carry the current hash.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tabrel_core::align::{
    encode_table, predict, split_dataset, train, AlignmentModel, EncodedPair, ReprMode,
    TrainConfig,
};
use tabrel_core::baselines::{
    fusion_schema_score, mean_milne_witten, pairs_deepest_category, pairs_greedy,
    pairs_milne_witten, pairs_same_direct_category, pairs_same_parent_category, tune_fusion_threshold,
    AnchorGraph,
};
use tabrel_core::candgen::{
    classify_pairs, compute_thresholds, featurize_pairs, filter_pairs, read_features_tsv, train_rf,
    write_features_tsv, FeatureContext, FeatureId, PairFeatures, RandomForestModel, RfParams,
};
use tabrel_core::catgraph::{load_assoc_tsv, load_edges_tsv, CategoryGraph};
use tabrel_core::colsem::KbStore;
use tabrel_core::corpus::{load_corpus, save_corpus, Corpus, RelationLabel};
use tabrel_core::embed::EmbeddingStore;
use tabrel_core::eval::{
    delta, generate_synthetic_corpus, prf_report, read_gold_tsv, recall_scores,
    relevant_article_pairs, render_text, write_gold_tsv, GoldPair,
};

use crate::artifacts::{
    peek_json_hash, peek_tsv_hash, read_json, read_stamped_tsv, tsv_meta_comments, write_json,
    write_stamped_tsv,
};
use crate::config::{resolve_sources, PipelineConfig};
use crate::{CliError, ErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    NormalizeGraph,
    Featurize,
    Filter,
    TrainCandgen,
    ClassifyPairs,
    Baseline,
    TrainAlign,
    Predict,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::NormalizeGraph,
        Stage::Featurize,
        Stage::Filter,
        Stage::TrainCandgen,
        Stage::ClassifyPairs,
        Stage::Baseline,
        Stage::TrainAlign,
        Stage::Predict,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::NormalizeGraph => "normalize-graph",
            Stage::Featurize => "featurize",
            Stage::Filter => "filter",
            Stage::TrainCandgen => "train-candgen",
            Stage::ClassifyPairs => "classify-pairs",
            Stage::Baseline => "baseline",
            Stage::TrainAlign => "train-align",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    UpToDate,
}

pub struct StageContext {
    pub config: PipelineConfig,
    pub hash: String,
    pub force: bool,
}

impl StageContext {
    pub fn new(config: PipelineConfig, force: bool) -> StageContext {
        let hash = config.config_hash();
        StageContext {
            config,
            hash,
            force,
        }
    }
}

fn data_err(message: String) -> CliError {
    CliError {
        kind: ErrorKind::Data,
        message,
    }
}

fn require(path: &Path, producer: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(data_err(format!(
            "missing upstream artifact {}; run the `{producer}` stage first",
            path.display()
        )));
    }
    Ok(())
}

/// Output files per stage, used for the up-to-date check.
fn stage_outputs(stage: Stage, config: &PipelineConfig) -> Vec<PathBuf> {
    match stage {
        Stage::Synth => vec![config.workfile("synth.meta.json")],
        Stage::NormalizeGraph => vec![config.workfile("graph.json")],
        Stage::Featurize => vec![config.workfile("features.tsv")],
        Stage::Filter => vec![
            config.workfile("thresholds.json"),
            config.workfile("filtered.tsv"),
        ],
        Stage::TrainCandgen => vec![config.workfile("rf_model.json")],
        Stage::ClassifyPairs => vec![config.workfile("relevant_pairs.tsv")],
        Stage::Baseline => vec![config.workfile("baseline_report.json")],
        Stage::TrainAlign => vec![config.workfile("align_model.json")],
        Stage::Predict => vec![config.workfile("predictions.tsv")],
        Stage::Evaluate => vec![config.workfile("eval_report.json")],
    }
}

fn outputs_up_to_date(stage: Stage, ctx: &StageContext) -> bool {
    let outputs = stage_outputs(stage, &ctx.config);
    !outputs.is_empty()
        && outputs.iter().all(|p| {
            let meta = if p.extension().map(|e| e == "json").unwrap_or(false) {
                peek_json_hash(p)
            } else {
                peek_tsv_hash(p)
            };
            meta.map(|m| m.config_hash == ctx.hash).unwrap_or(false)
        })
}

pub fn run_stage(stage: Stage, ctx: &StageContext) -> Result<StageOutcome, CliError> {
    std::fs::create_dir_all(&ctx.config.paths.workdir).map_err(|e| {
        data_err(format!(
            "cannot create workdir {}: {e}",
            ctx.config.paths.workdir.display()
        ))
    })?;
    if !ctx.force && outputs_up_to_date(stage, ctx) {
        return Ok(StageOutcome::UpToDate);
    }
    if ctx.config.workers > 0 {
        // Parallelism changes wall time only; ignore a pool that was
        // already configured.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.config.workers)
            .build_global();
    }
    match stage {
        Stage::Synth => stage_synth(ctx),
        Stage::NormalizeGraph => stage_normalize_graph(ctx),
        Stage::Featurize => stage_featurize(ctx),
        Stage::Filter => stage_filter(ctx),
        Stage::TrainCandgen => stage_train_candgen(ctx),
        Stage::ClassifyPairs => stage_classify_pairs(ctx),
        Stage::Baseline => stage_baseline(ctx),
        Stage::TrainAlign => stage_train_align(ctx),
        Stage::Predict => stage_predict(ctx),
        Stage::Evaluate => stage_evaluate(ctx),
    }?;
    Ok(StageOutcome::Ran)
}

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

fn load_corpus_checked(ctx: &StageContext) -> Result<Corpus, CliError> {
    require(&ctx.config.paths.corpus, "synth")?;
    let load = load_corpus(&ctx.config.paths.corpus)
        .map_err(|e| data_err(format!("corpus: {e}")))?;
    Ok(load.corpus)
}

fn load_graph_checked(ctx: &StageContext) -> Result<CategoryGraph, CliError> {
    let path = ctx.config.workfile("graph.json");
    require(&path, "normalize-graph")?;
    let (graph, _) = read_json::<CategoryGraph>(&path, &ctx.hash, ctx.force)?;
    Ok(graph.with_rebuilt_ancestors())
}

fn load_store(ctx: &StageContext) -> Result<EmbeddingStore, CliError> {
    let cfg = &ctx.config;
    match (&cfg.paths.word_embeddings, &cfg.paths.node_embeddings) {
        (None, None) => Ok(EmbeddingStore::hashed(
            cfg.embedding.dim,
            cfg.embedding.hash_seed,
        )),
        (word, node) => EmbeddingStore::from_files(
            cfg.embedding.dim,
            word.as_deref(),
            node.as_deref(),
        )
        .map_err(|e| data_err(format!("embeddings: {e}"))),
    }
}

fn load_kb(ctx: &StageContext) -> Result<KbStore, CliError> {
    require(&ctx.config.paths.kb, "synth")?;
    let types = if ctx.config.paths.types.exists() {
        Some(ctx.config.paths.types.as_path())
    } else {
        None
    };
    KbStore::from_files(&ctx.config.paths.kb, types).map_err(|e| data_err(format!("kb: {e}")))
}

fn load_gold(ctx: &StageContext) -> Result<Vec<GoldPair>, CliError> {
    require(&ctx.config.paths.gold, "synth")?;
    let (gold, comments) =
        read_gold_tsv(&ctx.config.paths.gold).map_err(|e| data_err(format!("gold: {e}")))?;
    crate::artifacts::check_tsv_meta(&ctx.config.paths.gold, &comments, &ctx.hash, ctx.force)?;
    Ok(gold)
}

fn parse_criteria(names: &[String]) -> Result<Vec<FeatureId>, CliError> {
    names
        .iter()
        .map(|n| {
            FeatureId::parse(n).ok_or_else(|| CliError {
                kind: ErrorKind::Usage,
                message: format!("unknown filter criterion {n:?}"),
            })
        })
        .collect()
}

fn parse_mode(ctx: &StageContext) -> Result<ReprMode, CliError> {
    ReprMode::parse(&ctx.config.align.mode).ok_or_else(|| CliError {
        kind: ErrorKind::Usage,
        message: format!(
            "unknown representation mode {:?} (expected desc|val|type)",
            ctx.config.align.mode
        ),
    })
}

fn train_config(ctx: &StageContext) -> TrainConfig {
    let a = &ctx.config.align;
    TrainConfig {
        hidden_dim: a.hidden_dim,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        split: a.split,
        seed: ctx.config.seed,
    }
}

/// Gold pairs encoded for the alignment model, in gold-file order.
fn encode_gold_pairs(
    gold: &[GoldPair],
    corpus: &Corpus,
    graph: &CategoryGraph,
    store: &EmbeddingStore,
    mode: ReprMode,
) -> Result<Vec<EncodedPair>, CliError> {
    gold.iter()
        .map(|g| {
            let left = corpus.table(&g.left_article, &g.left_table).ok_or_else(|| {
                data_err(format!(
                    "gold references missing table {}/{}",
                    g.left_article, g.left_table
                ))
            })?;
            let right = corpus
                .table(&g.right_article, &g.right_table)
                .ok_or_else(|| {
                    data_err(format!(
                        "gold references missing table {}/{}",
                        g.right_article, g.right_table
                    ))
                })?;
            Ok(EncodedPair {
                left_table: g.left_table.clone(),
                right_table: g.right_table.clone(),
                left: encode_table(left, mode, store, graph),
                right: encode_table(right, mode, store, graph),
                label: g.label,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SynthMeta {
    articles: usize,
    tables: usize,
    gold_pairs: usize,
}

fn stage_synth(ctx: &StageContext) -> Result<(), CliError> {
    let Some(spec) = &ctx.config.synth else {
        return Err(CliError {
            kind: ErrorKind::Usage,
            message: "config has no `synth` section".into(),
        });
    };
    let out = generate_synthetic_corpus(spec);
    let paths = &ctx.config.paths;
    for parent in [&paths.corpus, &paths.edges, &paths.gold] {
        if let Some(dir) = parent.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    save_corpus(&out.corpus, &paths.corpus).map_err(|e| data_err(format!("corpus: {e}")))?;

    let edge_lines: Vec<String> = out
        .edges
        .iter()
        .map(|(c, p)| format!("{c}\t{p}"))
        .collect();
    write_stamped_tsv(&paths.edges, "synth", &ctx.hash, "child\tparent", &edge_lines)?;

    let assoc_lines: Vec<String> = out
        .corpus
        .articles()
        .iter()
        .flat_map(|a| {
            a.category_ids
                .iter()
                .map(move |c| format!("{}\t{c}", a.id))
        })
        .collect();
    write_stamped_tsv(
        &paths.assoc,
        "synth",
        &ctx.hash,
        "article\tcategory",
        &assoc_lines,
    )?;

    let kb_lines: Vec<String> = out
        .triples
        .iter()
        .map(|t| format!("{}\t{}\t{}", t.subject, t.predicate, t.object))
        .collect();
    write_stamped_tsv(
        &paths.kb,
        "synth",
        &ctx.hash,
        "subject\tpredicate\tobject",
        &kb_lines,
    )?;

    let type_lines: Vec<String> = out
        .types
        .iter()
        .flat_map(|(a, ts)| ts.iter().map(move |t| format!("{a}\t{t}")))
        .collect();
    write_stamped_tsv(&paths.types, "synth", &ctx.hash, "article\ttype", &type_lines)?;

    write_gold_tsv(&paths.gold, &out.gold, &tsv_meta_comments("synth", &ctx.hash))
        .map_err(|e| data_err(format!("gold: {e}")))?;

    let tables = out.corpus.articles().iter().map(|a| a.tables.len()).sum();
    write_json(
        &ctx.config.workfile("synth.meta.json"),
        "synth",
        &ctx.hash,
        &SynthMeta {
            articles: out.corpus.len(),
            tables,
            gold_pairs: out.gold.len(),
        },
    )
}

fn stage_normalize_graph(ctx: &StageContext) -> Result<(), CliError> {
    require(&ctx.config.paths.edges, "synth")?;
    require(&ctx.config.paths.assoc, "synth")?;
    let edges =
        load_edges_tsv(&ctx.config.paths.edges).map_err(|e| data_err(format!("edges: {e}")))?;
    let assoc =
        load_assoc_tsv(&ctx.config.paths.assoc).map_err(|e| data_err(format!("assoc: {e}")))?;
    let (graph, log) = CategoryGraph::normalize(&ctx.config.graph_root, &edges, assoc)
        .map_err(|e| data_err(format!("normalize: {e}")))?;
    write_json(&ctx.config.workfile("graph.json"), "normalize-graph", &ctx.hash, &graph)?;
    write_json(
        &ctx.config.workfile("graph_log.json"),
        "normalize-graph",
        &ctx.hash,
        &log,
    )
}

fn stage_featurize(ctx: &StageContext) -> Result<(), CliError> {
    let corpus = load_corpus_checked(ctx)?;
    let graph = load_graph_checked(ctx)?;
    let store = load_store(ctx)?;
    let kb = load_kb(ctx)?;
    let sources = resolve_sources(&ctx.config, &corpus);
    if sources.is_empty() {
        return Err(data_err("no source articles resolve".into()));
    }
    let pairs = pairs_greedy(&sources, &corpus);
    let context = FeatureContext::build(&corpus, &graph, &store, &kb);
    let mut features =
        featurize_pairs(&context, &pairs).map_err(|e| data_err(format!("featurize: {e}")))?;

    if ctx.config.paths.gold.exists() {
        let gold = load_gold(ctx)?;
        let relevant = relevant_article_pairs(&gold);
        for pf in &mut features {
            let key = if pf.a_i <= pf.a_j {
                (pf.a_i.clone(), pf.a_j.clone())
            } else {
                (pf.a_j.clone(), pf.a_i.clone())
            };
            pf.label = Some(relevant.contains(&key));
        }
    }
    write_features_tsv(
        &ctx.config.workfile("features.tsv"),
        &features,
        &tsv_meta_comments("featurize", &ctx.hash),
    )
    .map_err(|e| data_err(format!("features: {e}")))
}

fn load_features(ctx: &StageContext, name: &str, producer: &str) -> Result<Vec<PairFeatures>, CliError> {
    let path = ctx.config.workfile(name);
    require(&path, producer)?;
    let (features, comments) =
        read_features_tsv(&path).map_err(|e| data_err(format!("{name}: {e}")))?;
    crate::artifacts::check_tsv_meta(&path, &comments, &ctx.hash, ctx.force)?;
    Ok(features)
}

fn stage_filter(ctx: &StageContext) -> Result<(), CliError> {
    let features = load_features(ctx, "features.tsv", "featurize")?;
    let thresholds = compute_thresholds(&features);
    let criteria = parse_criteria(&ctx.config.filter_criteria)?;
    let kept = filter_pairs(&features, &thresholds, &criteria)
        .map_err(|e| data_err(format!("filter: {e}")))?;
    let survivors: Vec<PairFeatures> = kept.iter().map(|&i| features[i].clone()).collect();
    write_json(
        &ctx.config.workfile("thresholds.json"),
        "filter",
        &ctx.hash,
        &thresholds,
    )?;
    write_features_tsv(
        &ctx.config.workfile("filtered.tsv"),
        &survivors,
        &tsv_meta_comments("filter", &ctx.hash),
    )
    .map_err(|e| data_err(format!("filtered: {e}")))
}

/// Sources shuffled by the pipeline seed; the leading fraction trains the
/// relevance forest.
fn rf_train_sources(ctx: &StageContext, corpus: &Corpus) -> BTreeSet<String> {
    let mut sources = resolve_sources(&ctx.config, corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed ^ 0x5eed_caf3);
    for i in (1..sources.len()).rev() {
        let j = rng.gen_range(0..=i);
        sources.swap(i, j);
    }
    let n = ((sources.len() as f64) * ctx.config.rf.train_fraction).ceil() as usize;
    sources.into_iter().take(n.max(1)).collect()
}

fn stage_train_candgen(ctx: &StageContext) -> Result<(), CliError> {
    let filtered = load_features(ctx, "filtered.tsv", "filter")?;
    let corpus = load_corpus_checked(ctx)?;
    let train_sources = rf_train_sources(ctx, &corpus);
    let mut training: Vec<PairFeatures> = filtered
        .iter()
        .filter(|pf| train_sources.contains(&pf.a_i))
        .cloned()
        .collect();
    training.retain(|pf| pf.label.is_some());
    if training.is_empty() {
        return Err(data_err(
            "no labeled pairs available to train the relevance forest; \
             featurize with a gold file present"
                .into(),
        ));
    }
    let model = train_rf(
        &training,
        &RfParams {
            num_trees: ctx.config.rf.num_trees,
            min_samples_split: ctx.config.rf.min_samples_split,
            seed: ctx.config.seed,
        },
    )
    .map_err(|e| data_err(format!("train-candgen: {e}")))?;
    write_json(&ctx.config.workfile("rf_model.json"), "train-candgen", &ctx.hash, &model)
}

fn stage_classify_pairs(ctx: &StageContext) -> Result<(), CliError> {
    let filtered = load_features(ctx, "filtered.tsv", "filter")?;
    let model_path = ctx.config.workfile("rf_model.json");
    require(&model_path, "train-candgen")?;
    let (model, _) = read_json::<RandomForestModel>(&model_path, &ctx.hash, ctx.force)?;
    let kept = classify_pairs(&model, &filtered, ctx.config.tau);
    let lines: Vec<String> = kept
        .iter()
        .map(|&i| format!("{}\t{}", filtered[i].a_i, filtered[i].a_j))
        .collect();
    write_stamped_tsv(
        &ctx.config.workfile("relevant_pairs.tsv"),
        "classify-pairs",
        &ctx.hash,
        "a_i\ta_j",
        &lines,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineRow {
    name: String,
    pairs: u64,
    delta: f64,
    relevant_retained: u64,
    relevant_total: u64,
    micro_recall: f64,
    macro_recall: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FusionReport {
    tau: f64,
    tuning_f1: f64,
    test_precision: Option<f64>,
    test_recall: Option<f64>,
    test_f1: Option<f64>,
    test_pairs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineReport {
    k: u64,
    table_bearing_articles: u64,
    greedy_pairs: u64,
    candidates: Vec<BaselineRow>,
    fusion: FusionReport,
}

fn recall_of_pairs(
    name: &str,
    pair_list: &[(String, String)],
    sources: &[String],
    relevant: &BTreeSet<(String, String)>,
    universe: u64,
) -> Result<BaselineRow, CliError> {
    let set: BTreeSet<(String, String)> = pair_list.iter().cloned().collect();
    let covered = |a: &str, b: &str| -> bool {
        set.contains(&(a.to_string(), b.to_string())) || set.contains(&(b.to_string(), a.to_string()))
    };
    let source_set: BTreeSet<&String> = sources.iter().collect();
    // Relevant pairs inside this run's universe: at least one side a source.
    let in_universe: Vec<&(String, String)> = relevant
        .iter()
        .filter(|(a, b)| source_set.contains(a) || source_set.contains(b))
        .collect();
    let retained = in_universe.iter().filter(|(a, b)| covered(a, b)).count() as u64;
    let per_source: Vec<(u64, u64)> = sources
        .iter()
        .map(|s| {
            let mine: Vec<&&(String, String)> = in_universe
                .iter()
                .filter(|(a, b)| a == s || b == s)
                .collect();
            let kept = mine.iter().filter(|(a, b)| covered(a, b)).count() as u64;
            (kept, mine.len() as u64)
        })
        .collect();
    let total = in_universe.len() as u64;
    let scores = recall_scores(retained, total.max(1), &per_source)
        .map_err(|e| data_err(format!("recall: {e}")))?;
    Ok(BaselineRow {
        name: name.to_string(),
        pairs: pair_list.len() as u64,
        delta: delta(pair_list.len() as u64, 1, universe)
            .map_err(|e| data_err(format!("delta: {e}")))?,
        relevant_retained: retained,
        relevant_total: total,
        micro_recall: scores.micro,
        macro_recall: scores.macro_,
    })
}

fn stage_baseline(ctx: &StageContext) -> Result<(), CliError> {
    let corpus = load_corpus_checked(ctx)?;
    let graph = load_graph_checked(ctx)?;
    let gold = load_gold(ctx)?;
    let sources = resolve_sources(&ctx.config, &corpus);
    let relevant = relevant_article_pairs(&gold);
    let anchor = AnchorGraph::build(&corpus);
    let k = sources.len() as u64;
    let table_bearing = corpus.table_bearing_count() as u64;
    let greedy = pairs_greedy(&sources, &corpus);
    let universe = greedy.len() as u64;

    let mw_tau = mean_milne_witten(&sources, &corpus, &anchor);
    let strategies: Vec<(&str, Vec<(String, String)>)> = vec![
        ("G", greedy.clone()),
        ("PC", pairs_same_parent_category(&sources, &corpus, &graph)),
        ("C1", pairs_same_direct_category(&sources, &corpus, &graph)),
        ("MW", pairs_milne_witten(&sources, &corpus, &anchor, mw_tau)),
        ("C2", pairs_deepest_category(&sources, &corpus, &graph)),
    ];
    let mut candidates = Vec::new();
    for (name, pairs) in &strategies {
        candidates.push(recall_of_pairs(name, pairs, &sources, &relevant, universe)?);
        // Pair lists share the classify-pairs TSV format for joint
        // evaluation.
        let lines: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}\t{b}")).collect();
        write_stamped_tsv(
            &ctx.config.workfile(&format!("baseline_{}.tsv", name.to_lowercase())),
            "baseline",
            &ctx.hash,
            "a_i\ta_j",
            &lines,
        )?;
    }

    // Schema-matching alignment baseline: threshold tuned on the
    // train+validation portion of the same split the neural model uses.
    let tc = train_config(ctx);
    let split = split_dataset(gold.len(), &tc).map_err(|e| data_err(format!("split: {e}")))?;
    let score_of = |i: usize| -> Result<(f64, bool), CliError> {
        let g = &gold[i];
        let left = corpus
            .table(&g.left_article, &g.left_table)
            .ok_or_else(|| data_err(format!("gold references missing table {}", g.left_table)))?;
        let right = corpus
            .table(&g.right_article, &g.right_table)
            .ok_or_else(|| data_err(format!("gold references missing table {}", g.right_table)))?;
        Ok((
            fusion_schema_score(left, right, &graph),
            g.label != RelationLabel::None,
        ))
    };
    let mut tuning = Vec::new();
    for &i in split.train.iter().chain(&split.val) {
        tuning.push(score_of(i)?);
    }
    let (tau_f, tuning_f1) = tune_fusion_threshold(&tuning);
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for &i in &split.test {
        let (score, related) = score_of(i)?;
        match (score >= tau_f, related) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };

    write_json(
        &ctx.config.workfile("baseline_report.json"),
        "baseline",
        &ctx.hash,
        &BaselineReport {
            k,
            table_bearing_articles: table_bearing,
            greedy_pairs: universe,
            candidates,
            fusion: FusionReport {
                tau: tau_f,
                tuning_f1,
                test_precision: precision,
                test_recall: recall,
                test_f1: f1,
                test_pairs: split.test.len(),
            },
        },
    )
}

#[derive(Serialize)]
struct EpochLine<'a> {
    config_hash: &'a str,
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    val_accuracy: f64,
}

fn stage_train_align(ctx: &StageContext) -> Result<(), CliError> {
    let corpus = load_corpus_checked(ctx)?;
    let graph = load_graph_checked(ctx)?;
    let store = load_store(ctx)?;
    let gold = load_gold(ctx)?;
    let mode = parse_mode(ctx)?;
    let examples = encode_gold_pairs(&gold, &corpus, &graph, &store, mode)?;
    let tc = train_config(ctx);
    let outcome =
        train(&examples, store.dim(), &tc).map_err(|e| data_err(format!("train-align: {e}")))?;
    write_json(
        &ctx.config.workfile("align_model.json"),
        "train-align",
        &ctx.hash,
        &outcome.model,
    )?;
    let metrics_path = ctx.config.workfile("train_metrics.jsonl");
    let lines: Vec<String> = outcome
        .metrics
        .iter()
        .map(|m| {
            serde_json::to_string(&EpochLine {
                config_hash: &ctx.hash,
                epoch: m.epoch,
                train_loss: m.train_loss,
                val_loss: m.val_loss,
                val_accuracy: m.val_accuracy,
            })
            .expect("metrics serialize")
        })
        .collect();
    std::fs::write(&metrics_path, lines.join("\n") + "\n")
        .map_err(|e| data_err(format!("cannot write {}: {e}", metrics_path.display())))
}

const PREDICTIONS_HEADER: &str =
    "left_article\tleft_table\tright_article\tright_table\tgold\tpredicted\tp_equivalent\tp_subPartOf\tp_none";

fn stage_predict(ctx: &StageContext) -> Result<(), CliError> {
    let corpus = load_corpus_checked(ctx)?;
    let graph = load_graph_checked(ctx)?;
    let store = load_store(ctx)?;
    let gold = load_gold(ctx)?;
    let mode = parse_mode(ctx)?;
    let model_path = ctx.config.workfile("align_model.json");
    require(&model_path, "train-align")?;
    let (model, _) = read_json::<AlignmentModel>(&model_path, &ctx.hash, ctx.force)?;
    let examples = encode_gold_pairs(&gold, &corpus, &graph, &store, mode)?;
    let tc = train_config(ctx);
    let split = split_dataset(examples.len(), &tc).map_err(|e| data_err(format!("split: {e}")))?;
    let mut lines = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let g = &gold[i];
        let ex = &examples[i];
        let (label, out) =
            predict(&model, &ex.left, &ex.right).map_err(|e| data_err(format!("predict: {e}")))?;
        lines.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.left_article,
            g.left_table,
            g.right_article,
            g.right_table,
            g.label,
            label,
            out.probs[0],
            out.probs[1],
            out.probs[2],
        ));
    }
    write_stamped_tsv(
        &ctx.config.workfile("predictions.tsv"),
        "predict",
        &ctx.hash,
        PREDICTIONS_HEADER,
        &lines,
    )
}

fn stage_evaluate(ctx: &StageContext) -> Result<(), CliError> {
    let predictions_path = ctx.config.workfile("predictions.tsv");
    require(&predictions_path, "predict")?;
    let rows = read_stamped_tsv(&predictions_path, PREDICTIONS_HEADER, &ctx.hash, ctx.force)?;
    let mut gold_labels = Vec::with_capacity(rows.len());
    let mut predicted = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 9 {
            return Err(data_err(format!(
                "predictions.tsv row {}: expected 9 fields, got {}",
                i + 1,
                row.len()
            )));
        }
        let g: RelationLabel = row[4]
            .parse()
            .map_err(|e| data_err(format!("predictions.tsv row {}: {e}", i + 1)))?;
        let p: RelationLabel = row[5]
            .parse()
            .map_err(|e| data_err(format!("predictions.tsv row {}: {e}", i + 1)))?;
        gold_labels.push(g);
        predicted.push(p);
    }
    let mut report =
        prf_report(&predicted, &gold_labels).map_err(|e| data_err(format!("report: {e}")))?;

    // Candidate-stage reduction and recall, when that half of the pipeline
    // has run under this same config.
    let relevant_path = ctx.config.workfile("relevant_pairs.tsv");
    if relevant_path.exists() {
        let pair_rows = read_stamped_tsv(&relevant_path, "a_i\ta_j", &ctx.hash, ctx.force)?;
        let corpus = load_corpus_checked(ctx)?;
        let gold = load_gold(ctx)?;
        let sources = resolve_sources(&ctx.config, &corpus);
        let relevant = relevant_article_pairs(&gold);
        let pair_list: Vec<(String, String)> = pair_rows
            .into_iter()
            .map(|r| (r[0].clone(), r[1].clone()))
            .collect();
        let universe = pairs_greedy(&sources, &corpus).len() as u64;
        let row = recall_of_pairs("pipeline", &pair_list, &sources, &relevant, universe)?;
        report.delta = Some(row.delta);
        report.micro_recall = Some(row.micro_recall);
        report.macro_recall = row.macro_recall;
        report.k = Some(sources.len() as u64);
        report.total_articles = Some(corpus.table_bearing_count() as u64);
        report.retained_pairs = Some(row.pairs);
    }

    write_json(&ctx.config.workfile("eval_report.json"), "evaluate", &ctx.hash, &report)?;
    let text_path = ctx.config.workfile("eval_report.txt");
    let mut text = String::new();
    for c in tsv_meta_comments("evaluate", &ctx.hash) {
        text.push_str(&format!("# {c}\n"));
    }
    text.push_str(&render_text(&report));
    std::fs::write(&text_path, text)
        .map_err(|e| data_err(format!("cannot write {}: {e}", text_path.display())))
}
