//! Summary statistics and masked correlation matrices.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the n − 1 variance; zero for one sample.
pub fn sem(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Trailing windowed mean: entry `i` averages `xs[i + 1 - w ..= i]`,
/// clipped at the start.
pub fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            mean(&xs[lo..=i])
        })
        .collect()
}

/// Pearson correlation over the columns of row-major samples. Columns with
/// zero variance are masked and their entries left undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub dim: usize,
    /// Row-major, `None` where either column is masked.
    pub values: Vec<Option<f64>>,
    pub masked: Vec<bool>,
}

impl CorrMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for r in rows {
            means.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; dim * dim];
        for r in rows {
            for i in 0..dim {
                let di = r[i] - means[i];
                if di == 0.0 {
                    continue;
                }
                for j in i..dim {
                    cov[i * dim + j] += di * (r[j] - means[j]);
                }
            }
        }
        let var: Vec<f64> = (0..dim).map(|i| cov[i * dim + i]).collect();
        let masked: Vec<bool> = var.iter().map(|&v| !(v > 1e-12 * n)).collect();
        let mut values = vec![None; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                if masked[i] || masked[j] {
                    continue;
                }
                let c = if i == j {
                    1.0
                } else {
                    (cov[i * dim + j] / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0)
                };
                values[i * dim + j] = Some(c);
                values[j * dim + i] = Some(c);
            }
        }
        Self { dim, values, masked }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.dim + j]
    }

    /// Frobenius distance over entries defined in both matrices, and the
    /// number of such entries.
    pub fn distance(&self, other: &CorrMatrix) -> (f64, usize) {
        assert_eq!(self.dim, other.dim, "correlation matrices of different size");
        let mut sum = 0.0;
        let mut count = 0;
        for (a, b) in self.values.iter().zip(&other.values) {
            if let (Some(a), Some(b)) = (a, b) {
                sum += (a - b).powi(2);
                count += 1;
            }
        }
        (sum.sqrt(), count)
    }
}
