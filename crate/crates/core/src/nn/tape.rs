//! Reverse-mode automatic differentiation over batched matrices.
//!
//! A [`Tape`] records every operation in evaluation order. Calling
//! [`Tape::backward`] on a 1x1 node propagates adjoints to every recorded node;
//! nodes that did not influence the loss end with an exact zero gradient.

use super::tensor::{affine, matmul, matmul_tn, Mat};
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    StraightThrough { logits: NodeId, soft: Mat, beta: f64 },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Mean(NodeId),
    Sum(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Mat>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.consumed = false;
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    /// Leaf holding a parameter, an input or a constant.
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `x · wᵀ + b`, with `w: out×in` and `b: 1×out`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols != wv.cols || bv.cols != wv.rows || bv.rows != 1 {
            return Err(Error::shape(
                "affine",
                format!("x: B×{}, b: 1×{}", wv.cols, wv.rows),
                format!("x: {}×{}, b: {}×{}", xv.rows, xv.cols, bv.rows, bv.cols),
            ));
        }
        let out = affine(xv, wv, &bv.data);
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows);
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows != rows) {
            return Err(Error::shape("concat", rows, self.value(bad).rows));
        }
        let mats: Vec<&Mat> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Mat::hcat(&mats);
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if start + width > xv.cols {
            return Err(Error::shape(
                "slice",
                format!("columns {start}..{}", start + width),
                format!("{} columns", xv.cols),
            ));
        }
        let v = xv.columns(start, width);
        Ok(self.push(v, Op::Slice { x, start }))
    }

    /// Records a straight-through estimator: the node's value is `hard`,
    /// its gradient is that of `soft = softmax(beta · (logits + g))`.
    pub fn straight_through(&mut self, logits: NodeId, hard: Mat, soft: Mat, beta: f64) -> NodeId {
        debug_assert_eq!(hard.shape(), self.value(logits).shape());
        self.push(hard, Op::StraightThrough { logits, soft, beta })
    }

    fn same_shape(&self, ctx: &str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(ctx, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (av, bv) = (self.value(a), self.value(b));
        Mat {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| a * c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = (xv.rows * xv.cols).max(1) as f64;
        let v = Mat::filled(1, 1, xv.sum() / n);
        self.push(v, Op::Mean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Mat::filled(1, 1, self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    /// Propagates adjoints from the scalar `loss` to every recorded node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        let lv = self.value(loss);
        if lv.rows != 1 || lv.cols != 1 {
            return Err(Error::NotScalar {
                rows: lv.rows,
                cols: lv.cols,
            });
        }
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Mat::filled(1, 1, 1.0));

        for id in (0..=loss).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    // Leaves keep their adjoint for retrieval.
                    grads[id] = Some(dy);
                }
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    accumulate(&mut grads, *x, matmul(&dy, wv));
                    accumulate(&mut grads, *w, matmul_tn(&dy, xv));
                    let mut db = Mat::zeros(1, dy.cols);
                    for r in 0..dy.rows {
                        for (acc, g) in db.data.iter_mut().zip(dy.row(r)) {
                            *acc += g;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    let g = zip_mat(&dy, xv, |g, a| if a > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *x, g);
                }
                Op::Tanh(x) => {
                    let g = zip_mat(&dy, &node.value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *x, g);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols;
                        accumulate(&mut grads, p, dy.columns(off, w));
                        off += w;
                    }
                }
                Op::Slice { x, start } => {
                    let xv = &self.nodes[*x].value;
                    let mut g = Mat::zeros(xv.rows, xv.cols);
                    g.set_columns(*start, &dy);
                    accumulate(&mut grads, *x, g);
                }
                Op::StraightThrough { logits, soft, beta } => {
                    let mut g = Mat::zeros(dy.rows, dy.cols);
                    for r in 0..dy.rows {
                        let (up, s) = (dy.row(r), soft.row(r));
                        let dot: f64 = up.iter().zip(s).map(|(a, b)| a * b).sum();
                        for (c, out) in g.row_mut(r).iter_mut().enumerate() {
                            *out = beta * s[c] * (up[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *logits, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, dy.map(|g| -g));
                    accumulate(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let ga = zip_mat(&dy, &self.nodes[*b].value, |g, v| g * v);
                    let gb = zip_mat(&dy, &self.nodes[*a].value, |g, v| g * v);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, dy.map(|g| g * c)),
                Op::Square(x) => {
                    let g = zip_mat(&dy, &self.nodes[*x].value, |g, a| 2.0 * g * a);
                    accumulate(&mut grads, *x, g);
                }
                Op::Mean(x) => {
                    let xv = &self.nodes[*x].value;
                    let n = (xv.rows * xv.cols).max(1) as f64;
                    accumulate(&mut grads, *x, Mat::filled(xv.rows, xv.cols, dy.data[0] / n));
                }
                Op::Sum(x) => {
                    let xv = &self.nodes[*x].value;
                    accumulate(&mut grads, *x, Mat::filled(xv.rows, xv.cols, dy.data[0]));
                }
            }
        }
        self.grads = grads;
        self.consumed = true;
        Ok(())
    }

    /// Gradient of the last backward pass with respect to a leaf. Leaves that
    /// did not influence the loss return an all-zero matrix.
    pub fn grad(&self, id: NodeId) -> Mat {
        match self.grads.get(id) {
            Some(Some(g)) => g.clone(),
            _ => {
                let v = self.value(id);
                Mat::zeros(v.rows, v.cols)
            }
        }
    }
}

fn zip_mat(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    Mat {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn accumulate(grads: &mut [Option<Mat>], id: NodeId, g: Mat) {
    match &mut grads[id] {
        Some(acc) => acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}
