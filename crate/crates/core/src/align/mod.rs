//! Recurrent table-pair alignment model.
//!
//! Column vectors (description, optionally instance values and type) feed a
//! bidirectional LSTM over the column sequence `t_i ++ delimiter ++ t_j`.
//! The forward pass carries state through the delimiter, so `t_j` is encoded
//! conditioned on `t_i`'s final state, and the backward pass mirrors that
//! conditioning. Each `t_j` column then attends over the `t_i` column states
//! with a recurrently mixed attention summary; a nonlinear combination of
//! the summary and the final directional states feeds a 3-way softmax over
//! `equivalent`, `subPartOf`, `none`.
//!
//! Training is mini-batch Adam on categorical cross-entropy with manual
//! reverse-mode gradients, checked against finite differences in the tests.

mod tape;

pub use tape::{Matrix, Tape, Var};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catgraph::CategoryGraph;
use crate::colsem::column_lca;
use crate::corpus::{tokenize, Column, RelationLabel, Table};
use crate::embed::{EmbeddingStore, VectorKind};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("empty schema: both tables need at least one column")]
    EmptySchema,
    #[error("column vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient in parameter block {0:?}")]
    NonFiniteGradient(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("validation split is empty; adjust split fractions or dataset size")]
    EmptyValidationSplit,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadSplit((f64, f64, f64)),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Column representation mode: description only, plus instance values, plus
/// column type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReprMode {
    #[serde(rename = "desc")]
    Desc,
    #[serde(rename = "val")]
    DescVal,
    #[serde(rename = "type")]
    DescValType,
}

impl ReprMode {
    pub fn parse(s: &str) -> Option<ReprMode> {
        match s {
            "desc" => Some(ReprMode::Desc),
            "val" => Some(ReprMode::DescVal),
            "type" => Some(ReprMode::DescValType),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReprMode::Desc => "desc",
            ReprMode::DescVal => "val",
            ReprMode::DescValType => "type",
        }
    }
}

/// Model input vector for one column, with provenance flags for which
/// representation components actually contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnVector {
    pub vector: Vec<f64>,
    pub used_desc: bool,
    pub used_val: bool,
    pub used_type: bool,
}

impl ColumnVector {
    pub fn is_blank(&self) -> bool {
        !(self.used_desc || self.used_val || self.used_type)
    }
}

/// Element-wise sum of the representation components selected by `mode`:
/// mean word vector of the description tokens, mean node vector of the
/// instance cells, mean node vector of the LCA type categories (ties
/// averaged). Absent components contribute zero and clear their flag.
pub fn encode_column(
    column: &Column,
    mode: ReprMode,
    store: &EmbeddingStore,
    graph: &CategoryGraph,
) -> ColumnVector {
    let mut acc = vec![0.0; store.dim()];
    let mut cv = ColumnVector {
        vector: Vec::new(),
        used_desc: false,
        used_val: false,
        used_type: false,
    };
    let add = |acc: &mut Vec<f64>, v: &[f64]| {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    };

    let tokens = tokenize(&column.description);
    if let Some(v) = store.avg_embedding(&tokens, VectorKind::Word).vector {
        add(&mut acc, &v);
        cv.used_desc = true;
    }

    if matches!(mode, ReprMode::DescVal | ReprMode::DescValType) {
        let ids: Vec<&str> = column
            .cells
            .iter()
            .filter_map(|c| c.instance_id())
            .collect();
        if !ids.is_empty() {
            if let Some(v) = store.avg_embedding(&ids, VectorKind::Node).vector {
                add(&mut acc, &v);
                cv.used_val = true;
            }
        }
    }

    if matches!(mode, ReprMode::DescValType) {
        if let Some(lca) = column_lca(column, graph) {
            if let Some(v) = store.avg_embedding(&lca, VectorKind::Node).vector {
                add(&mut acc, &v);
                cv.used_type = true;
            }
        }
    }

    cv.vector = acc;
    cv
}

pub fn encode_table(
    table: &Table,
    mode: ReprMode,
    store: &EmbeddingStore,
    graph: &CategoryGraph,
) -> Vec<ColumnVector> {
    table
        .columns
        .iter()
        .map(|c| encode_column(c, mode, store, graph))
        .collect()
}

/// One labeled training/evaluation pair, already encoded.
#[derive(Debug, Clone)]
pub struct EncodedPair {
    pub left_table: String,
    pub right_table: String,
    pub left: Vec<ColumnVector>,
    pub right: Vec<ColumnVector>,
    pub label: RelationLabel,
}

const NUM_CLASSES: usize = 3;
const GATES: [&str; 4] = ["i", "f", "o", "c"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub version: u32,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// All parameter blocks by name; shapes fixed by the two dimensions.
    pub params: BTreeMap<String, Matrix>,
}

fn param_specs(embed: usize, hidden: usize) -> Vec<(String, usize, usize)> {
    let mut specs: Vec<(String, usize, usize)> = vec![
        ("input_proj".into(), hidden, embed),
        ("delimiter".into(), embed, 1),
        ("attn_y".into(), hidden, hidden),
        ("attn_h".into(), hidden, hidden),
        ("attn_r".into(), hidden, hidden),
        ("attn_energy".into(), hidden, 1),
        ("attn_mix".into(), hidden, hidden),
        ("comb_r".into(), hidden, hidden),
        ("comb_h".into(), hidden, 2 * hidden),
        ("out_w".into(), NUM_CLASSES, hidden),
        ("out_b".into(), NUM_CLASSES, 1),
    ];
    for dir in ["fwd", "bwd"] {
        for gate in GATES {
            specs.push((format!("{dir}_w_{gate}"), hidden, hidden));
            specs.push((format!("{dir}_u_{gate}"), hidden, hidden));
            specs.push((format!("{dir}_b_{gate}"), hidden, 1));
        }
    }
    specs
}

impl AlignmentModel {
    /// Seeded initialization: Xavier-uniform weights, zero biases, forget
    /// gate biases at one.
    pub fn new(embed_dim: usize, hidden_dim: usize, seed: u64) -> AlignmentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut specs = param_specs(embed_dim, hidden_dim);
        specs.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, rows, cols) in specs {
            let m = if name.ends_with("_b_f") {
                Matrix::from_vec(rows, cols, vec![1.0; rows * cols])
            } else if name.starts_with("out_b") || name.contains("_b_") {
                Matrix::zeros(rows, cols)
            } else {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let data: Vec<f64> = (0..rows * cols)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                Matrix::from_vec(rows, cols, data)
            };
            params.insert(name, m);
        }
        AlignmentModel {
            version: 1,
            embed_dim,
            hidden_dim,
            seed,
            params,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<(), AlignError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<AlignmentModel, AlignError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    fn check_pair(&self, left: &[ColumnVector], right: &[ColumnVector]) -> Result<(), AlignError> {
        if left.is_empty() || right.is_empty() {
            return Err(AlignError::EmptySchema);
        }
        for cv in left.iter().chain(right) {
            if cv.vector.len() != self.embed_dim {
                return Err(AlignError::DimensionMismatch {
                    expected: self.embed_dim,
                    got: cv.vector.len(),
                });
            }
        }
        Ok(())
    }
}

/// Probabilities over the three classes plus per-`t_j`-column attention over
/// `t_i` columns (rows sum to 1).
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: [f64; NUM_CLASSES],
    pub alpha: Vec<Vec<f64>>,
}

struct BuiltGraph {
    probs: Var,
    alpha_rows: Vec<Var>,
    loss: Option<Var>,
}

fn build_graph(
    tape: &mut Tape,
    params: &BTreeMap<String, Var>,
    model: &AlignmentModel,
    left: &[ColumnVector],
    right: &[ColumnVector],
    label: Option<usize>,
) -> BuiltGraph {
    let p = |name: &str| -> Var { params[name] };
    let hidden = model.hidden_dim;

    // Project every input column (and the learned delimiter) to model space.
    let proj = p("input_proj");
    let mut xs: Vec<Var> = Vec::with_capacity(left.len() + right.len() + 1);
    for cv in left {
        let leaf = tape.leaf(Matrix::column(&cv.vector));
        xs.push(tape.matmul(proj, leaf));
    }
    let delim = tape.matmul(proj, p("delimiter"));
    xs.push(delim);
    for cv in right {
        let leaf = tape.leaf(Matrix::column(&cv.vector));
        xs.push(tape.matmul(proj, leaf));
    }

    let lstm_step = |tape: &mut Tape, dir: &str, x: Var, h: Var, c: Var| -> (Var, Var) {
        let gate = |tape: &mut Tape, g: &str| -> Var {
            let wx = tape.matmul(p(&format!("{dir}_w_{g}")), x);
            let uh = tape.matmul(p(&format!("{dir}_u_{g}")), h);
            let s = tape.add(wx, uh);
            tape.add(s, p(&format!("{dir}_b_{g}")))
        };
        let i_pre = gate(tape, "i");
        let i = tape.sigmoid(i_pre);
        let f_pre = gate(tape, "f");
        let f = tape.sigmoid(f_pre);
        let o_pre = gate(tape, "o");
        let o = tape.sigmoid(o_pre);
        let g_pre = gate(tape, "c");
        let g = tape.tanh(g_pre);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_new = tape.add(fc, ig);
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc);
        (h_new, c_new)
    };

    // Forward direction over the whole sequence; state flows through the
    // delimiter, conditioning t_j's encoding on t_i's final state.
    let mut h = tape.leaf(Matrix::zeros(hidden, 1));
    let mut c = tape.leaf(Matrix::zeros(hidden, 1));
    let mut fwd_states: Vec<Var> = Vec::with_capacity(xs.len());
    for &x in &xs {
        let (nh, nc) = lstm_step(tape, "fwd", x, h, c);
        h = nh;
        c = nc;
        fwd_states.push(h);
    }
    let h_fwd_last = *fwd_states.last().unwrap();

    // Backward direction over the reversed sequence mirrors the
    // conditioning on t_j.
    let mut hb = tape.leaf(Matrix::zeros(hidden, 1));
    let mut cb = tape.leaf(Matrix::zeros(hidden, 1));
    for &x in xs.iter().rev() {
        let (nh, nc) = lstm_step(tape, "bwd", x, hb, cb);
        hb = nh;
        cb = nc;
    }
    let h_bwd_last = hb;

    // Column-by-column attention: each t_j column distributes weight over
    // the t_i column states.
    let mut y = fwd_states[0];
    for &s in &fwd_states[1..left.len()] {
        y = tape.concat_cols(y, s);
    }
    let wy_y = tape.matmul(p("attn_y"), y);
    let energy_t = tape.transpose_of(p("attn_energy"));

    let mut r = tape.leaf(Matrix::zeros(hidden, 1));
    let mut alpha_rows = Vec::with_capacity(right.len());
    for t in 0..right.len() {
        let h_t = fwd_states[left.len() + 1 + t];
        let wh = tape.matmul(p("attn_h"), h_t);
        let wr = tape.matmul(p("attn_r"), r);
        let mix = tape.add(wh, wr);
        let pre = tape.add_col_broadcast(wy_y, mix);
        let m = tape.tanh(pre);
        let e = tape.matmul(energy_t, m);
        let alpha = tape.softmax_flat(e);
        alpha_rows.push(alpha);
        let alpha_col = tape.transpose_of(alpha);
        let summary = tape.matmul(y, alpha_col);
        let mixed_pre = tape.matmul(p("attn_mix"), r);
        let mixed = tape.tanh(mixed_pre);
        r = tape.add(summary, mixed);
    }

    let wr_final = tape.matmul(p("comb_r"), r);
    let h_cat = tape.concat_rows(h_fwd_last, h_bwd_last);
    let wh_final = tape.matmul(p("comb_h"), h_cat);
    let pre_star = tape.add(wr_final, wh_final);
    let h_star = tape.tanh(pre_star);
    let logits_w = tape.matmul(p("out_w"), h_star);
    let logits = tape.add(logits_w, p("out_b"));
    let probs = tape.softmax_flat(logits);

    let loss = label.map(|idx| {
        let pl = tape.pick_scalar(probs, idx);
        let ln = tape.ln_clamped(pl, LOSS_EPSILON);
        tape.neg(ln)
    });

    BuiltGraph {
        probs,
        alpha_rows,
        loss,
    }
}

fn register_params(tape: &mut Tape, model: &AlignmentModel) -> BTreeMap<String, Var> {
    model
        .params
        .iter()
        .map(|(name, m)| (name.clone(), tape.leaf(m.clone())))
        .collect()
}

/// Run the model on one encoded pair.
pub fn forward(
    model: &AlignmentModel,
    left: &[ColumnVector],
    right: &[ColumnVector],
) -> Result<ForwardOutput, AlignError> {
    model.check_pair(left, right)?;
    let mut tape = Tape::new();
    let params = register_params(&mut tape, model);
    let built = build_graph(&mut tape, &params, model, left, right, None);
    let probs_m = tape.value(built.probs);
    let probs = [probs_m.data[0], probs_m.data[1], probs_m.data[2]];
    let alpha = built
        .alpha_rows
        .iter()
        .map(|&v| tape.value(v).data.clone())
        .collect();
    Ok(ForwardOutput { probs, alpha })
}

pub const LOSS_EPSILON: f64 = 1e-12;

/// Categorical cross-entropy of one prediction; probabilities are clamped
/// at `LOSS_EPSILON` before the log.
pub fn loss(probs: &[f64; NUM_CLASSES], label: RelationLabel) -> f64 {
    -probs[label.index()].max(LOSS_EPSILON).ln()
}

/// Mean-loss gradients over a batch for every parameter block.
pub fn gradients(
    model: &AlignmentModel,
    batch: &[EncodedPair],
) -> Result<(BTreeMap<String, Matrix>, f64), AlignError> {
    if batch.is_empty() {
        return Err(AlignError::EmptyDataset);
    }
    let mut acc: BTreeMap<String, Matrix> = model
        .params
        .iter()
        .map(|(k, m)| (k.clone(), Matrix::zeros(m.rows, m.cols)))
        .collect();
    let mut total_loss = 0.0;
    for ex in batch {
        model.check_pair(&ex.left, &ex.right)?;
        let mut tape = Tape::new();
        let params = register_params(&mut tape, model);
        let built = build_graph(
            &mut tape,
            &params,
            model,
            &ex.left,
            &ex.right,
            Some(ex.label.index()),
        );
        let loss_var = built.loss.unwrap();
        total_loss += tape.value(loss_var).data[0];
        tape.backward(loss_var);
        for (name, &var) in &params {
            acc.get_mut(name).unwrap().add_assign(tape.grad(var));
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for (name, g) in acc.iter_mut() {
        g.scale_assign(scale);
        if g.data.iter().any(|x| !x.is_finite()) {
            return Err(AlignError::NonFiniteGradient(name.clone()));
        }
    }
    Ok((acc, total_loss * scale))
}

/// Argmax prediction; ties break toward the lower class index
/// (equivalent < subPartOf < none).
pub fn predict(
    model: &AlignmentModel,
    left: &[ColumnVector],
    right: &[ColumnVector],
) -> Result<(RelationLabel, ForwardOutput), AlignError> {
    let out = forward(model, left, right)?;
    let mut best = 0usize;
    for i in 1..NUM_CLASSES {
        if out.probs[i] > out.probs[best] {
            best = i;
        }
    }
    Ok((RelationLabel::from_index(best).unwrap(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Train/validation/test fractions; must sum to 1.
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 100,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            split: (0.6, 0.1, 0.3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic shuffled split of `n` examples into train/val/test.
pub fn split_dataset(n: usize, config: &TrainConfig) -> Result<SplitIndices, AlignError> {
    let (a, b, c) = config.split;
    if a <= 0.0 || b <= 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(AlignError::BadSplit(config.split));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_train = ((n as f64) * a).round() as usize;
    let n_val = (((n as f64) * b).round() as usize).max(1);
    if n_train == 0 || n_train + n_val > n {
        return Err(AlignError::EmptyValidationSplit);
    }
    Ok(SplitIndices {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    })
}

struct AdamState {
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
    t: u64,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &AlignmentModel) -> AdamState {
        let zeros = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        AdamState {
            m: model.params.iter().map(|(k, p)| (k.clone(), zeros(p))).collect(),
            v: model.params.iter().map(|(k, p)| (k.clone(), zeros(p))).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut AlignmentModel, grads: &BTreeMap<String, Matrix>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self.m.get_mut(name).unwrap();
            let v = self.v.get_mut(name).unwrap();
            let p = model.params.get_mut(name).unwrap();
            for k in 0..g.data.len() {
                m.data[k] = Self::BETA1 * m.data[k] + (1.0 - Self::BETA1) * g.data[k];
                v.data[k] = Self::BETA2 * v.data[k] + (1.0 - Self::BETA2) * g.data[k] * g.data[k];
                let mhat = m.data[k] / bc1;
                let vhat = v.data[k] / bc2;
                p.data[k] -= lr * mhat / (vhat.sqrt() + Self::EPS);
            }
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation loss.
    pub model: AlignmentModel,
    pub metrics: Vec<EpochMetrics>,
    pub split: SplitIndices,
}

fn eval_split(
    model: &AlignmentModel,
    examples: &[EncodedPair],
    idx: &[usize],
) -> Result<(f64, f64), AlignError> {
    let mut total = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let ex = &examples[i];
        let out = forward(model, &ex.left, &ex.right)?;
        total += loss(&out.probs, ex.label);
        let (pred, _) = {
            let mut best = 0usize;
            for k in 1..NUM_CLASSES {
                if out.probs[k] > out.probs[best] {
                    best = k;
                }
            }
            (RelationLabel::from_index(best).unwrap(), ())
        };
        if pred == ex.label {
            correct += 1;
        }
    }
    Ok((total / idx.len() as f64, correct as f64 / idx.len() as f64))
}

/// Mini-batch Adam over the shuffled training split; returns the
/// best-validation-loss parameters and the per-epoch training curve.
pub fn train(
    examples: &[EncodedPair],
    embed_dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome, AlignError> {
    if examples.is_empty() {
        return Err(AlignError::EmptyDataset);
    }
    let split = split_dataset(examples.len(), config)?;
    let mut model = AlignmentModel::new(embed_dim, config.hidden_dim, config.seed);
    let mut adam = AdamState::new(&model);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, AlignmentModel)> = None;

    for epoch in 0..config.epochs {
        // Per-epoch seed schedule: shuffling is reproducible independently
        // of previous epochs.
        let mut order = split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1 + epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (grads, batch_loss) = gradients(&model, &batch)?;
            adam.step(&mut model, &grads, config.learning_rate);
            epoch_loss += batch_loss;
            batches += 1;
        }
        let (val_loss, val_accuracy) = eval_split(&model, examples, &split.val)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().map(|(b, _)| val_loss < *b).unwrap_or(true) {
            best = Some((val_loss, model.clone()));
        }
    }

    Ok(TrainOutcome {
        model: best.map(|(_, m)| m).unwrap_or(model),
        metrics,
        split,
    })
}
