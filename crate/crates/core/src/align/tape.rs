//! Minimal reverse-mode autodiff over dense row-major matrices.
//!
//! Nodes are appended in topological order, so the backward sweep is a
//! single reverse iteration with gradient accumulation. Column vectors are
//! `n x 1` matrices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    *out.at_mut(i, j) += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(j, i) = self.at(i, j);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }
}

pub type Var = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    /// Add a column vector to every column of a matrix.
    AddColBroadcast(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    /// Softmax over all entries, shape preserved.
    SoftmaxFlat(Var),
    Transpose(Var),
    ConcatRows(Var, Var),
    ConcatCols(Var, Var),
    /// Single entry by flat index, as a 1x1 matrix.
    PickScalar(Var, usize),
    /// Elementwise ln(max(x, eps)).
    LnClamped(Var, f64),
    Neg(Var),
}

struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

/// Computation tape; build forward, then [`Tape::backward`] from a scalar.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let grad = Matrix::zeros(value.rows, value.cols);
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v].value
    }

    pub fn grad(&self, v: Var) -> &Matrix {
        &self.nodes[v].grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((ma.rows, ma.cols), (mb.rows, mb.cols), "add shape mismatch");
        let mut value = ma.clone();
        value.add_assign(mb);
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((ma.rows, ma.cols), (mb.rows, mb.cols), "mul shape mismatch");
        let data: Vec<f64> = ma.data.iter().zip(&mb.data).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(ma.rows, ma.cols, data);
        self.push(value, Op::Mul(a, b))
    }

    pub fn add_col_broadcast(&mut self, m: Var, v: Var) -> Var {
        let (mm, mv) = (&self.nodes[m].value, &self.nodes[v].value);
        assert_eq!(mv.cols, 1, "broadcast operand must be a column");
        assert_eq!(mm.rows, mv.rows, "broadcast shape mismatch");
        let mut value = mm.clone();
        for i in 0..value.rows {
            for j in 0..value.cols {
                *value.at_mut(i, j) += mv.at(i, 0);
            }
        }
        self.push(value, Op::AddColBroadcast(m, v))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let m = &self.nodes[a].value;
        let data: Vec<f64> = m.data.iter().map(|x| x.tanh()).collect();
        let value = Matrix::from_vec(m.rows, m.cols, data);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let m = &self.nodes[a].value;
        let data: Vec<f64> = m.data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let value = Matrix::from_vec(m.rows, m.cols, data);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn softmax_flat(&mut self, a: Var) -> Var {
        let m = &self.nodes[a].value;
        let max = m.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = m.data.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let data: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let value = Matrix::from_vec(m.rows, m.cols, data);
        self.push(value, Op::SoftmaxFlat(a))
    }

    pub fn transpose_of(&mut self, a: Var) -> Var {
        let value = self.nodes[a].value.transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(ma.cols, mb.cols, "concat_rows width mismatch");
        let mut data = ma.data.clone();
        data.extend_from_slice(&mb.data);
        let value = Matrix::from_vec(ma.rows + mb.rows, ma.cols, data);
        self.push(value, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(ma.rows, mb.rows, "concat_cols height mismatch");
        let mut value = Matrix::zeros(ma.rows, ma.cols + mb.cols);
        for i in 0..ma.rows {
            for j in 0..ma.cols {
                *value.at_mut(i, j) = ma.at(i, j);
            }
            for j in 0..mb.cols {
                *value.at_mut(i, ma.cols + j) = mb.at(i, j);
            }
        }
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn pick_scalar(&mut self, a: Var, flat_index: usize) -> Var {
        let x = self.nodes[a].value.data[flat_index];
        self.push(Matrix::from_vec(1, 1, vec![x]), Op::PickScalar(a, flat_index))
    }

    pub fn ln_clamped(&mut self, a: Var, eps: f64) -> Var {
        let m = &self.nodes[a].value;
        let data: Vec<f64> = m.data.iter().map(|x| x.max(eps).ln()).collect();
        let value = Matrix::from_vec(m.rows, m.cols, data);
        self.push(value, Op::LnClamped(a, eps))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let m = &self.nodes[a].value;
        let data: Vec<f64> = m.data.iter().map(|x| -x).collect();
        let value = Matrix::from_vec(m.rows, m.cols, data);
        self.push(value, Op::Neg(a))
    }

    /// Reverse sweep from a scalar root; gradients accumulate in each node.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.nodes[root].value.len(), 1, "backward root must be scalar");
        for n in &mut self.nodes {
            n.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[root].grad.data[0] = 1.0;

        for at in (0..=root).rev() {
            if self.nodes[at].grad.data.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[at].op.clone();
            let g = self.nodes[at].grad.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.nodes[b].value.transpose());
                    let db = self.nodes[a].value.transpose().matmul(&g);
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                Op::Add(a, b) => {
                    self.nodes[a].grad.add_assign(&g);
                    self.nodes[b].grad.add_assign(&g);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&self.nodes[b].value.data)
                        .map(|(gi, bi)| gi * bi)
                        .collect();
                    let db: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&self.nodes[a].value.data)
                        .map(|(gi, ai)| gi * ai)
                        .collect();
                    let da = Matrix::from_vec(g.rows, g.cols, da);
                    let db = Matrix::from_vec(g.rows, g.cols, db);
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                Op::AddColBroadcast(m, v) => {
                    self.nodes[m].grad.add_assign(&g);
                    let mut dv = Matrix::zeros(g.rows, 1);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            *dv.at_mut(i, 0) += g.at(i, j);
                        }
                    }
                    self.nodes[v].grad.add_assign(&dv);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[at].value;
                    let da: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&y.data)
                        .map(|(gi, yi)| gi * (1.0 - yi * yi))
                        .collect();
                    let da = Matrix::from_vec(g.rows, g.cols, da);
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[at].value;
                    let da: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&y.data)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    let da = Matrix::from_vec(g.rows, g.cols, da);
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::SoftmaxFlat(a) => {
                    let y = &self.nodes[at].value;
                    let dot: f64 = g.data.iter().zip(&y.data).map(|(gi, yi)| gi * yi).sum();
                    let da: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&y.data)
                        .map(|(gi, yi)| yi * (gi - dot))
                        .collect();
                    let da = Matrix::from_vec(g.rows, g.cols, da);
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::Transpose(a) => {
                    let da = g.transpose();
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::ConcatRows(a, b) => {
                    let rows_a = self.nodes[a].value.rows;
                    let cols = g.cols;
                    let da = Matrix::from_vec(rows_a, cols, g.data[..rows_a * cols].to_vec());
                    let db = Matrix::from_vec(
                        g.rows - rows_a,
                        cols,
                        g.data[rows_a * cols..].to_vec(),
                    );
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                Op::ConcatCols(a, b) => {
                    let cols_a = self.nodes[a].value.cols;
                    let mut da = Matrix::zeros(g.rows, cols_a);
                    let mut db = Matrix::zeros(g.rows, g.cols - cols_a);
                    for i in 0..g.rows {
                        for j in 0..cols_a {
                            *da.at_mut(i, j) = g.at(i, j);
                        }
                        for j in cols_a..g.cols {
                            *db.at_mut(i, j - cols_a) = g.at(i, j);
                        }
                    }
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                Op::PickScalar(a, idx) => {
                    self.nodes[a].grad.data[idx] += g.data[0];
                }
                Op::LnClamped(a, eps) => {
                    let x = &self.nodes[a].value;
                    let da: Vec<f64> = g
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(gi, xi)| if *xi > eps { gi / xi } else { 0.0 })
                        .collect();
                    let da = Matrix::from_vec(g.rows, g.cols, da);
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::Neg(a) => {
                    let mut da = g.clone();
                    da.scale_assign(-1.0);
                    self.nodes[a].grad.add_assign(&da);
                }
            }
        }
    }
}
