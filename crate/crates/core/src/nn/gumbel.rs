//! Gumbel-Softmax sampling with the straight-through estimator.
//!
//! Forward: `hard = onehot(argmax(logits + g))`. Backward: the gradient of
//! `soft = softmax(beta · (logits + g))`, with `g = −log(−log u)`.

use super::tape::{NodeId, Tape};
use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::rng::RngStream;

const U_MIN: f64 = 1e-10;
const U_MAX: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub hard: Vec<f64>,
    pub soft: Vec<f64>,
}

impl GumbelSample {
    pub fn index(&self) -> usize {
        argmax(&self.hard)
    }
}

/// One standard Gumbel draw; the uniform is clamped away from 0 and 1.
pub fn gumbel_noise(rng: &mut RngStream) -> f64 {
    let u = rng.uniform().clamp(U_MIN, U_MAX);
    -(-u.ln()).ln()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(n: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "inverse temperature must be > 0, got {beta}"
        )));
    }
    Ok(())
}

/// Closed form given explicit noise.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], beta: f64) -> Result<GumbelSample> {
    check_beta(beta)?;
    if logits.len() != noise.len() || logits.is_empty() {
        return Err(Error::shape("gumbel_softmax", logits.len(), noise.len()));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "gumbel_softmax logits".into(),
            layer: 0,
        });
    }
    let z: Vec<f64> = logits.iter().zip(noise).map(|(l, g)| l + g).collect();
    let scaled: Vec<f64> = z.iter().map(|x| x * beta).collect();
    Ok(GumbelSample {
        hard: one_hot(z.len(), argmax(&z)),
        soft: softmax(&scaled),
    })
}

pub fn gumbel_softmax(logits: &[f64], beta: f64, rng: &mut RngStream) -> Result<GumbelSample> {
    check_beta(beta)?;
    let noise: Vec<f64> = (0..logits.len()).map(|_| gumbel_noise(rng)).collect();
    gumbel_softmax_with_noise(logits, &noise, beta)
}

/// Row-wise sampling for a batch of logits: returns `(hard, soft)`.
pub fn gumbel_softmax_rows(logits: &Mat, beta: f64, rng: &mut RngStream) -> Result<(Mat, Mat)> {
    let mut hard = Mat::zeros(logits.rows, logits.cols);
    let mut soft = Mat::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let s = gumbel_softmax(logits.row(r), beta, rng)?;
        hard.row_mut(r).copy_from_slice(&s.hard);
        soft.row_mut(r).copy_from_slice(&s.soft);
    }
    Ok((hard, soft))
}

/// Row-wise greedy one-hot.
pub fn one_hot_rows(logits: &Mat) -> Mat {
    let mut out = Mat::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let i = argmax(logits.row(r));
        out.set(r, i, 1.0);
    }
    out
}

/// Records a straight-through Gumbel-Softmax sample of `logits` on the tape.
pub fn straight_through_gumbel(
    tape: &mut Tape,
    logits: NodeId,
    beta: f64,
    rng: &mut RngStream,
) -> Result<NodeId> {
    let (hard, soft) = gumbel_softmax_rows(tape.value(logits), beta, rng)?;
    Ok(tape.straight_through(logits, hard, soft, beta))
}
