use super::mlp::{Gradients, MlpParams};
use crate::checkpoint::Archive;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    /// One bias-corrected Adam update. Non-finite gradients leave both the
    /// parameters and the moments untouched.
    pub fn update(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<()> {
        if !grads.matches(params) || !self.m.matches(params) {
            return Err(Error::shape(
                "adam_step",
                format!("{:?}", params.layer_sizes),
                "gradients of a different architecture",
            ));
        }
        if let Some(layer) = grads.first_non_finite_layer() {
            return Err(Error::NonFinite {
                context: "adam_step gradient".into(),
                layer,
            });
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for l in 0..params.num_layers() {
            apply(
                &mut params.weights[l].data,
                &grads.weights[l].data,
                &mut self.m.weights[l].data,
                &mut self.v.weights[l].data,
            );
            apply(
                &mut params.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
        Ok(())
    }

    pub fn store(&self, archive: &mut Archive, prefix: &str) {
        let c = self.config;
        archive.put_f64s(&format!("{prefix}.hyper"), vec![c.lr, c.beta1, c.beta2, c.eps]);
        archive.put_u64s(&format!("{prefix}.step"), vec![self.step]);
        self.m.store(archive, &format!("{prefix}.m"));
        self.v.store(archive, &format!("{prefix}.v"));
    }

    pub fn load(archive: &Archive, prefix: &str, like: &MlpParams) -> Result<Self> {
        let h = archive.f64s(&format!("{prefix}.hyper"))?;
        if h.len() != 4 {
            return Err(Error::Checkpoint(format!("{prefix}.hyper must hold 4 values")));
        }
        let step = archive
            .u64s(&format!("{prefix}.step"))?
            .first()
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("{prefix}.step empty")))?;
        Ok(Self {
            config: AdamConfig {
                lr: h[0],
                beta1: h[1],
                beta2: h[2],
                eps: h[3],
            },
            m: Gradients::load_like(archive, &format!("{prefix}.m"), like)?,
            v: Gradients::load_like(archive, &format!("{prefix}.v"), like)?,
            step,
        })
    }
}
