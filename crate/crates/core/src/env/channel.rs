//! One-step message delivery: a message sent at `t` is observed at `t + 1`.

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ChannelModel {
    #[default]
    Identity,
    /// With probability `p` the receiver sees all zeros.
    Dropout { p: f64 },
    /// Independent zero-mean noise with standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Identity => Ok(()),
            ChannelModel::Dropout { p } if (0.0..=1.0).contains(&p) => Ok(()),
            ChannelModel::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            other => Err(Error::InvalidArgument(format!("invalid channel {other:?}"))),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match *self {
            ChannelModel::Identity => true,
            ChannelModel::Dropout { p } => p == 0.0 || p == 1.0,
            ChannelModel::Gaussian { sigma } => sigma == 0.0,
        }
    }

    /// Writes the observed message into `out`.
    pub fn transmit_into(&self, message: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        if message.len() != out.len() {
            return Err(Error::shape("transmit", out.len(), message.len()));
        }
        match *self {
            ChannelModel::Identity => out.copy_from_slice(message),
            ChannelModel::Dropout { p } => {
                if rng.bernoulli(p) {
                    out.iter_mut().for_each(|x| *x = 0.0);
                } else {
                    out.copy_from_slice(message);
                }
            }
            ChannelModel::Gaussian { sigma } => {
                for (o, &m) in out.iter_mut().zip(message) {
                    *o = m + sigma * rng.normal();
                }
            }
        }
        Ok(())
    }

    pub fn transmit(&self, message: &[f64], dim: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut out = vec![0.0; dim];
        self.transmit_into(message, &mut out, rng)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exact() {
        let mut rng = RngStream::new(0);
        let m = [0.0, 1.0, 0.0];
        assert_eq!(ChannelModel::Identity.transmit(&m, 3, &mut rng).unwrap(), m.to_vec());
    }

    #[test]
    fn full_dropout_zeroes() {
        let mut rng = RngStream::new(0);
        let out = ChannelModel::Dropout { p: 1.0 }
            .transmit(&[0.0, 0.0, 1.0], 3, &mut rng)
            .unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = RngStream::new(0);
        assert!(ChannelModel::Identity.transmit(&[1.0], 2, &mut rng).is_err());
    }

    #[test]
    fn gaussian_noise_has_requested_spread() {
        let mut rng = RngStream::new(4);
        let ch = ChannelModel::Gaussian { sigma: 0.5 };
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x = ch.transmit(&[1.0], 1, &mut rng).unwrap()[0] - 1.0;
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.02);
        assert!((sd - 0.5).abs() < 0.02);
    }

    #[test]
    fn validation() {
        assert!(ChannelModel::Dropout { p: 1.5 }.validate().is_err());
        assert!(ChannelModel::Gaussian { sigma: -1.0 }.validate().is_err());
        assert!(ChannelModel::Dropout { p: 0.25 }.validate().is_ok());
    }
}
