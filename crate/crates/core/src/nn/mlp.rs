//! Fully connected networks with ReLU (or tanh) hidden layers and an affine
//! output layer.

use super::tape::{NodeId, Tape};
use super::tensor::{affine, Mat};
use crate::checkpoint::Archive;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Weights are stored `out × in` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Per-parameter gradients (or Adam moments), shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

/// Tape handles for the parameters of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl MlpNodes {
    pub fn grads(&self, tape: &Tape) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|&w| tape.grad(w)).collect(),
            biases: self.biases.iter().map(|&b| tape.grad(b).data).collect(),
        }
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must hold at least two positive entries, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Mat::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Uniform initialization in ±1/√fan_in for weights and biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, rng: &mut RngStream) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        for (w, b) in p.weights.iter_mut().zip(p.biases.iter_mut()) {
            let bound = 1.0 / (w.cols as f64).sqrt();
            w.data
                .iter_mut()
                .for_each(|x| *x = rng.uniform_range(-bound, bound));
            b.iter_mut()
                .for_each(|x| *x = rng.uniform_range(-bound, bound));
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::shape(
                format!("mlp forward (layers {:?})", self.layer_sizes),
                format!("input width {}", self.input_dim()),
                format!("input width {cols}"),
            ));
        }
        Ok(())
    }

    /// Batched forward pass without recording.
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        self.check_input(x.cols)?;
        let last = self.num_layers() - 1;
        let mut h = affine(x, &self.weights[0], &self.biases[0]);
        for l in 0..last {
            h.data
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
            h = affine(&h, &self.weights[l + 1], &self.biases[l + 1]);
        }
        Ok(h)
    }

    /// Single-sample forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Mat::row_vector(x.to_vec()))?.data)
    }

    /// Recorded forward pass; parameters become leaves on `tape`.
    pub fn forward_tape(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, MlpNodes)> {
        self.check_input(tape.value(x).cols)?;
        let mut nodes = MlpNodes {
            weights: Vec::with_capacity(self.num_layers()),
            biases: Vec::with_capacity(self.num_layers()),
        };
        let mut h = x;
        for l in 0..self.num_layers() {
            let w = tape.leaf(self.weights[l].clone());
            let b = tape.leaf(Mat::row_vector(self.biases[l].clone()));
            nodes.weights.push(w);
            nodes.biases.push(b);
            h = tape.affine(h, w, b)?;
            if l + 1 < self.num_layers() {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok((h, nodes))
    }

    pub fn same_architecture(&self, other: &MlpParams) -> bool {
        self.layer_sizes == other.layer_sizes && self.activation == other.activation
    }

    /// `self ← tau · source + (1 − tau) · self`.
    pub fn soft_update(&mut self, source: &MlpParams, tau: f64) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::shape(
                "soft_update",
                format!("{:?}", self.layer_sizes),
                format!("{:?}", source.layer_sizes),
            ));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
        }
        let mix = |t: &mut f64, s: f64| *t = tau * s + (1.0 - tau) * *t;
        for (tw, sw) in self.weights.iter_mut().zip(&source.weights) {
            tw.data.iter_mut().zip(&sw.data).for_each(|(t, &s)| mix(t, s));
        }
        for (tb, sb) in self.biases.iter_mut().zip(&source.biases) {
            tb.iter_mut().zip(sb).for_each(|(t, &s)| mix(t, s));
        }
        Ok(())
    }

    pub fn store(&self, archive: &mut Archive, prefix: &str) {
        archive.put_u64s(
            &format!("{prefix}.layer_sizes"),
            self.layer_sizes.iter().map(|&n| n as u64).collect(),
        );
        archive.put_u64s(&format!("{prefix}.activation"), vec![self.activation.code()]);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            archive.put_mat(&format!("{prefix}.w{l}"), w);
            archive.put_f64s(&format!("{prefix}.b{l}"), b.clone());
        }
    }

    pub fn load(archive: &Archive, prefix: &str) -> Result<Self> {
        let sizes: Vec<usize> = archive
            .u64s(&format!("{prefix}.layer_sizes"))?
            .iter()
            .map(|&n| n as usize)
            .collect();
        let act = Activation::from_code(
            *archive
                .u64s(&format!("{prefix}.activation"))?
                .first()
                .ok_or_else(|| Error::Checkpoint(format!("{prefix}.activation empty")))?,
        )?;
        let mut p = Self::zeros(&sizes, act)?;
        for l in 0..p.num_layers() {
            let w = archive.mat(&format!("{prefix}.w{l}"))?;
            if w.shape() != p.weights[l].shape() {
                return Err(Error::Checkpoint(format!("{prefix}.w{l} has wrong shape")));
            }
            let b = archive.f64s(&format!("{prefix}.b{l}"))?;
            if b.len() != p.biases[l].len() {
                return Err(Error::Checkpoint(format!("{prefix}.b{l} has wrong length")));
            }
            p.weights[l] = w;
            p.biases[l] = b;
        }
        Ok(p)
    }
}

impl Gradients {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| Mat::zeros(w.rows, w.cols)).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn matches(&self, p: &MlpParams) -> bool {
        self.weights.len() == p.weights.len()
            && self
                .weights
                .iter()
                .zip(&p.weights)
                .all(|(a, b)| a.shape() == b.shape())
            && self
                .biases
                .iter()
                .zip(&p.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn global_norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flat_map(|w| &w.data).map(|x| x * x).sum();
        let b: f64 = self.biases.iter().flatten().map(|x| x * x).sum();
        (w + b).sqrt()
    }

    /// Rescales so that the global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let s = max_norm / (norm + 1e-6);
            self.weights
                .iter_mut()
                .for_each(|w| w.data.iter_mut().for_each(|x| *x *= s));
            self.biases
                .iter_mut()
                .for_each(|b| b.iter_mut().for_each(|x| *x *= s));
        }
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        (0..self.weights.len())
            .find(|&l| !self.weights[l].is_finite() || self.biases[l].iter().any(|x| !x.is_finite()))
    }

    pub fn store(&self, archive: &mut Archive, prefix: &str) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            archive.put_mat(&format!("{prefix}.w{l}"), w);
            archive.put_f64s(&format!("{prefix}.b{l}"), b.clone());
        }
    }

    pub fn load_like(archive: &Archive, prefix: &str, like: &MlpParams) -> Result<Self> {
        let mut g = Self::zeros_like(like);
        for l in 0..g.weights.len() {
            g.weights[l] = archive.mat(&format!("{prefix}.w{l}"))?;
            g.biases[l] = archive.f64s(&format!("{prefix}.b{l}"))?;
        }
        if !g.matches(like) {
            return Err(Error::Checkpoint(format!("{prefix} does not match architecture")));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_maps_to_zero() {
        let p = MlpParams::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        assert_eq!(p.forward_one(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut p = MlpParams::zeros(&[3, 3], Activation::Relu).unwrap();
        for i in 0..3 {
            p.weights[0].set(i, i, 1.0);
        }
        let v = [0.5, -1.5, 2.25];
        assert_eq!(p.forward_one(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn hand_computed_2_3_2() {
        // Weights chosen so every intermediate is easy to verify by hand.
        let mut p = MlpParams::zeros(&[2, 3, 2], Activation::Relu).unwrap();
        p.weights[0] = Mat::from_vec(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.25, -0.75]).unwrap();
        p.biases[0] = vec![0.1, 0.0, -0.2];
        p.weights[1] = Mat::from_vec(2, 3, vec![1.0, -1.0, 2.0, 0.5, 0.5, -0.5]).unwrap();
        p.biases[1] = vec![0.0, 1.0];
        // x = (1, 2): pre = (1+4+0.1, -1+1, 0.25-1.5-0.2) = (5.1, 0, -1.45)
        // relu = (5.1, 0, 0); out = (5.1, 2.55 + 1) = (5.1, 3.55)
        let out = p.forward_one(&[1.0, 2.0]).unwrap();
        assert!((out[0] - 5.1).abs() < 1e-12);
        assert!((out[1] - 3.55).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_reports_shape() {
        let p = MlpParams::zeros(&[3, 2], Activation::Relu).unwrap();
        let err = p.forward_one(&[1.0]).unwrap_err().to_string();
        assert!(err.contains("input width 3"), "{err}");
    }

    #[test]
    fn soft_update_arithmetic() {
        let mut target = MlpParams::zeros(&[2, 2], Activation::Relu).unwrap();
        let mut source = target.clone();
        source.weights[0].data.iter_mut().for_each(|x| *x = 1.0);
        source.biases[0].iter_mut().for_each(|x| *x = 1.0);

        let mut t = target.clone();
        t.soft_update(&source, 0.01).unwrap();
        assert!(t.weights[0].data.iter().all(|&x| x == 0.01));
        assert!(t.biases[0].iter().all(|&x| x == 0.01));

        let mut t = target.clone();
        t.soft_update(&source, 1.0).unwrap();
        assert_eq!(t, source);

        target.soft_update(&source, 0.0).unwrap();
        assert!(target.weights[0].data.iter().all(|&x| x == 0.0));

        let other = MlpParams::zeros(&[2, 3], Activation::Relu).unwrap();
        assert!(target.soft_update(&other, 0.5).is_err());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = MlpParams::init(&[16, 64, 64, 5], Activation::Relu, &mut RngStream::new(1)).unwrap();
        let b = MlpParams::init(&[16, 64, 64, 5], Activation::Relu, &mut RngStream::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.weights[0].data.iter().all(|x| x.abs() <= 0.25));
        assert!(a.weights[1].data.iter().all(|x| x.abs() <= 0.125));
    }
}
