//! Row-major dense matrices with batch as the leading dimension.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Mat::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Copy of columns `start..start + width`.
    pub fn columns(&self, start: usize, width: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Overwrite columns `start..start + src.cols` with `src`.
    pub fn set_columns(&mut self, start: usize, src: &Mat) {
        debug_assert_eq!(self.rows, src.rows);
        for r in 0..self.rows {
            self.row_mut(r)[start..start + src.cols].copy_from_slice(src.row(r));
        }
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[&Mat]) -> Mat {
        let rows = parts.first().map_or(0, |m| m.rows);
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            debug_assert_eq!(p.rows, rows);
            out.set_columns(off, p);
            off += p.cols;
        }
        out
    }

    /// Rows selected by index (with repetition allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `x · wᵀ + b` for `x: B×in`, `w: out×in`, `b: out`.
pub fn affine(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let mut out = Mat::zeros(x.rows, w.rows);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(b);
    }
    gemm(
        x.rows, x.cols, w.rows, 1.0, &x.data, x.cols as isize, 1, &w.data, 1,
        w.cols as isize, 1.0, &mut out.data,
    );
    out
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.cols, b.rows);
    let mut out = Mat::zeros(a.rows, b.cols);
    gemm(
        a.rows, a.cols, b.cols, 1.0, &a.data, a.cols as isize, 1, &b.data,
        b.cols as isize, 1, 0.0, &mut out.data,
    );
    out
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.rows, b.rows);
    let mut out = Mat::zeros(a.cols, b.cols);
    gemm(
        a.cols, a.rows, b.cols, 1.0, &a.data, 1, a.cols as isize, &b.data,
        b.cols as isize, 1, 0.0, &mut out.data,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    // SAFETY: strides describe in-bounds row-major or transposed views of
    // slices whose lengths were checked by the callers' shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(a: &Mat) -> Mat {
        let mut t = Mat::zeros(a.cols, a.rows);
        for i in 0..a.rows {
            for j in 0..a.cols {
                t.set(j, i, a.get(i, j));
            }
        }
        t
    }

    fn sample(rows: usize, cols: usize, seed: f64) -> Mat {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 + seed) * 0.37).sin())
            .collect();
        Mat::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn kernels_match_naive_products() {
        let a = sample(5, 3, 0.1);
        let b = sample(3, 4, 1.3);
        assert!(matmul(&a, &b).max_abs_diff(&naive(&a, &b)) < 1e-12);

        let at = transpose(&a);
        assert!(matmul_tn(&at, &b).max_abs_diff(&naive(&a, &b)) < 1e-12);

        let w = sample(4, 3, 2.0);
        let bias = vec![0.5, -0.25, 1.0, 0.0];
        let mut expect = naive(&a, &transpose(&w));
        for r in 0..expect.rows {
            for c in 0..4 {
                let v = expect.get(r, c) + bias[c];
                expect.set(r, c, v);
            }
        }
        assert!(affine(&a, &w, &bias).max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn column_helpers() {
        let a = sample(3, 5, 0.0);
        let mid = a.columns(1, 2);
        let mut b = Mat::zeros(3, 5);
        b.set_columns(1, &mid);
        assert_eq!(b.get(2, 2), a.get(2, 2));
        assert_eq!(b.get(2, 0), 0.0);
        let joined = Mat::hcat(&[&a.columns(0, 1), &a.columns(1, 4)]);
        assert_eq!(joined, a);
    }
}
