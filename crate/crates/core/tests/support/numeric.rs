//! Finite-difference and statistical checks for the network toolkit.
#![allow(dead_code)]

use commrelabel::nn::adam::{AdamConfig, AdamState};
use commrelabel::nn::gumbel::{gumbel_softmax, gumbel_softmax_with_noise, softmax};
use commrelabel::nn::{Activation, Gradients, Mat, MlpParams, NodeId, Tape};
use commrelabel::RngStream;

pub const FD_STEP: f64 = 1e-5;

fn random_mat(rows: usize, cols: usize, rng: &mut RngStream) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    m.data.iter_mut().for_each(|x| *x = rng.uniform_range(-1.0, 1.0));
    m
}

/// Loss exercising affine, activations, concat, slice, mul, square, sub,
/// scale and mean: `mean((f(x) ⊙ c − slice(x))²) + 0.3 · sum(f(x))`.
fn build_loss(tape: &mut Tape, net: &MlpParams, x: &Mat, c: &Mat) -> (NodeId, NodeId, commrelabel::nn::MlpNodes) {
    let xn = tape.leaf(x.clone());
    let (y, nodes) = net.forward_tape(tape, xn).unwrap();
    let cn = tape.leaf(c.clone());
    let yc = tape.mul(y, cn).unwrap();
    let width = net.output_dim();
    let xs = tape.slice(xn, 0, width.min(x.cols)).unwrap();
    let xs = if width > x.cols {
        let pad = tape.leaf(Mat::zeros(x.rows, width - x.cols));
        tape.concat(&[xs, pad]).unwrap()
    } else {
        xs
    };
    let d = tape.sub(yc, xs).unwrap();
    let sq = tape.square(d);
    let m = tape.mean(sq);
    let s = tape.sum(y);
    let s = tape.scale(s, 0.3);
    let loss = tape.add(m, s).unwrap();
    (loss, xn, nodes)
}

fn loss_value(net: &MlpParams, x: &Mat, c: &Mat) -> f64 {
    let mut tape = Tape::new();
    let (loss, _, _) = build_loss(&mut tape, net, x, c);
    tape.value(loss).data[0]
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na.max(nn) == 0.0 {
        0.0
    } else {
        diff / na.max(nn)
    }
}

/// Largest relative error (per parameter tensor and for the input) between
/// tape gradients and central differences on one random network.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let depth = 1 + rng.index(3);
    let mut sizes = vec![1 + rng.index(6)];
    for _ in 0..depth {
        sizes.push(1 + rng.index(8));
    }
    let act = if rng.bernoulli(0.5) { Activation::Relu } else { Activation::Tanh };
    let net = MlpParams::init(&sizes, act, &mut rng).unwrap();
    let rows = 1 + rng.index(5);
    let x = random_mat(rows, sizes[0], &mut rng);
    let c = random_mat(rows, net.output_dim(), &mut rng);

    let mut tape = Tape::new();
    let (loss, xn, nodes) = build_loss(&mut tape, &net, &x, &c);
    tape.backward(loss).unwrap();
    let grads = nodes.grads(&tape);
    let gx = tape.grad(xn);

    let mut worst: f64 = 0.0;
    for l in 0..net.num_layers() {
        let mut num_w = vec![0.0; net.weights[l].data.len()];
        for (i, slot) in num_w.iter_mut().enumerate() {
            let mut p = net.clone();
            p.weights[l].data[i] += FD_STEP;
            let up = loss_value(&p, &x, &c);
            p.weights[l].data[i] -= 2.0 * FD_STEP;
            let down = loss_value(&p, &x, &c);
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&grads.weights[l].data, &num_w));
        let mut num_b = vec![0.0; net.biases[l].len()];
        for (i, slot) in num_b.iter_mut().enumerate() {
            let mut p = net.clone();
            p.biases[l][i] += FD_STEP;
            let up = loss_value(&p, &x, &c);
            p.biases[l][i] -= 2.0 * FD_STEP;
            let down = loss_value(&p, &x, &c);
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&grads.biases[l], &num_b));
    }
    let mut num_x = vec![0.0; x.data.len()];
    for (i, slot) in num_x.iter_mut().enumerate() {
        let mut xp = x.clone();
        xp.data[i] += FD_STEP;
        let up = loss_value(&net, &xp, &c);
        xp.data[i] -= 2.0 * FD_STEP;
        let down = loss_value(&net, &xp, &c);
        *slot = (up - down) / (2.0 * FD_STEP);
    }
    worst.max(rel_err(&gx.data, &num_x))
}

/// Straight-through backward against central differences of the relaxed
/// sample `softmax(β(z + g))` under a linear readout.
pub fn straight_through_check(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let k = 2 + rng.index(6);
    let beta = rng.uniform_range(0.5, 2.0);
    let logits: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let noise: Vec<f64> = (0..k).map(|_| commrelabel::nn::gumbel::gumbel_noise(&mut rng)).collect();
    let c: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let s = gumbel_softmax_with_noise(&logits, &noise, beta).unwrap();
    let mut tape = Tape::new();
    let z = tape.leaf(Mat::row_vector(logits.clone()));
    let st = tape.straight_through(z, Mat::row_vector(s.hard), Mat::row_vector(s.soft), beta);
    let cn = tape.leaf(Mat::row_vector(c.clone()));
    let prod = tape.mul(st, cn).unwrap();
    let loss = tape.sum(prod);
    tape.backward(loss).unwrap();
    let analytic = tape.grad(z).data;
    let relaxed = |l: &[f64]| -> f64 {
        let zs: Vec<f64> = l.iter().zip(&noise).map(|(a, g)| beta * (a + g)).collect();
        softmax(&zs).iter().zip(&c).map(|(p, w)| p * w).sum()
    };
    let numeric: Vec<f64> = (0..k)
        .map(|i| {
            let mut up = logits.clone();
            up[i] += FD_STEP;
            let mut down = logits.clone();
            down[i] -= FD_STEP;
            (relaxed(&up) - relaxed(&down)) / (2.0 * FD_STEP)
        })
        .collect();
    rel_err(&analytic, &numeric)
}

/// Hard samples are one-hot, soft samples lie on the simplex and share the
/// argmax of the hard sample.
pub fn gumbel_sample_is_valid(logits: &[f64], beta: f64, rng: &mut RngStream) -> bool {
    let s = gumbel_softmax(logits, beta, rng).unwrap();
    let ones = s.hard.iter().filter(|&&x| x == 1.0).count();
    let zeros = s.hard.iter().filter(|&&x| x == 0.0).count();
    let sum: f64 = s.soft.iter().sum();
    ones == 1
        && ones + zeros == logits.len()
        && s.soft.iter().all(|&p| (0.0..=1.0).contains(&p))
        && (sum - 1.0).abs() < 1e-12
        && commrelabel::nn::gumbel::argmax(&s.soft) == s.index()
}

/// Per-category counts of `draws` hard samples from uniform logits, and
/// whether each lies within 3σ of the binomial mean.
pub fn uniform_frequency(k: usize, draws: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = RngStream::new(seed);
    let logits = vec![0.7; k];
    let mut counts = vec![0usize; k];
    for _ in 0..draws {
        counts[gumbel_softmax(&logits, 1.0, &mut rng).unwrap().index()] += 1;
    }
    let p = 1.0 / k as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let ok = counts.iter().all(|&c| (c as f64 - mean).abs() <= 3.0 * sigma);
    (counts, ok)
}

/// Soft update arithmetic: τ = 1 copies, τ = 0 keeps, τ = 0.25 mixes.
pub fn soft_update_check() -> bool {
    let mut rng = RngStream::new(1);
    let src = MlpParams::init(&[3, 4, 2], Activation::Relu, &mut rng).unwrap();
    let base = MlpParams::init(&[3, 4, 2], Activation::Relu, &mut rng).unwrap();
    let mut copy = base.clone();
    copy.soft_update(&src, 1.0).unwrap();
    let mut keep = base.clone();
    keep.soft_update(&src, 0.0).unwrap();
    let mut mix = base.clone();
    mix.soft_update(&src, 0.25).unwrap();
    let mixed_ok = mix
        .weights
        .iter()
        .zip(&base.weights)
        .zip(&src.weights)
        .all(|((m, b), s)| {
            m.data
                .iter()
                .zip(&b.data)
                .zip(&s.data)
                .all(|((m, b), s)| (m - (0.25 * s + 0.75 * b)).abs() < 1e-15)
        });
    copy == src && keep == base && mixed_ok
}

/// Adam against an independent scalar recurrence over several steps.
pub fn adam_check() -> f64 {
    let cfg = AdamConfig::default();
    let mut params = MlpParams::zeros(&[1, 1], Activation::Relu).unwrap();
    params.weights[0].data[0] = 0.5;
    let mut state = AdamState::new(&params, cfg);
    let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    for t in 1..=20 {
        let g = (t as f64 * 0.7).sin();
        let mut grads = Gradients::zeros_like(&params);
        grads.weights[0].data[0] = g;
        state.update(&mut params, &grads).unwrap();
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        worst = worst.max((params.weights[0].data[0] - w).abs());
    }
    worst
}
