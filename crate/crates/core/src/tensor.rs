//! Dense double-precision kernels, the deterministic RNG and the
//! finite-difference gradient oracle.
//!
//! Matrices are row-major. Sequences of per-step vectors are stored as a
//! matrix with one row per step so that each step is a contiguous slice.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!(
            "{what}: shape {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::dim(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
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
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vector {
        Vector::from((0..self.rows).map(|r| self.get(r, c)).collect::<Vec<_>>())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x` for a slice `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out)?;
        Ok(Vector::from(out))
    }

    /// `out += self · x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.cols || out.len() != self.rows {
            return Err(Error::dim(format!(
                "matvec {}x{} with input {} into {}",
                self.rows,
                self.cols,
                x.len(),
                out.len()
            )));
        }
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, x);
        }
        Ok(())
    }

    /// `out += selfᵀ · y` for a slice `y` of length `rows`.
    pub fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        if y.len() != self.rows || out.len() != self.cols {
            return Err(Error::dim(format!(
                "transposed matvec {}x{} with input {} into {}",
                self.rows,
                self.cols,
                y.len(),
                out.len()
            )));
        }
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        Ok(())
    }

    /// `self += a ⊗ b` (outer product accumulate).
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != self.rows || b.len() != self.cols {
            return Err(Error::dim(format!(
                "outer {}x{} into {}x{}",
                a.len(),
                b.len(),
                self.rows,
                self.cols
            )));
        }
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            for (o, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *o += ar * bc;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        check_same(self.shape(), other.shape(), "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        check_same(self.shape(), other.shape(), "elementwise")?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn tanh(&self) -> Matrix {
        self.map(f64::tanh)
    }

    pub fn sigmoid(&self) -> Matrix {
        self.map(sigmoid)
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        check_same((self.len(), 1), (other.len(), 1), "elementwise")?;
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn tanh(&self) -> Vector {
        self.map(f64::tanh)
    }

    pub fn sigmoid(&self) -> Vector {
        self.map(sigmoid)
    }

    pub fn mul(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &[f64]) -> Result<()> {
        check_same((self.len(), 1), (other.len(), 1), "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.data)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &[f64]) -> Result<Vector> {
    if x.is_empty() {
        return Err(Error::dim("softmax of an empty vector"));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Vector::from(
        exps.into_iter().map(|e| e / total).collect::<Vec<_>>(),
    ))
}

/// `log(Σ exp(x))`, stable.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Seeded, platform-independent random stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under `seed`. Used for per-sample,
    /// per-replicate and per-fold randomness so that parallel and serial
    /// execution draw identical numbers.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Normalized (Glorot) uniform initialization with bound `sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::dim(format!(
            "glorot_init with zero dimension {rows}x{cols}"
        )));
    }
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central-difference gradient of `f` at `theta`, one scalar at a time.
pub fn finite_diff_grad<F>(f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Numeric(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let grads = exec::map_range_init(
        theta.len(),
        || theta.to_vec(),
        |buf, i| {
            let orig = buf[i];
            buf[i] = orig + eps;
            let plus = f(buf);
            buf[i] = orig - eps;
            let minus = f(buf);
            buf[i] = orig;
            (plus, minus)
        },
    );
    grads
        .into_iter()
        .enumerate()
        .map(|(i, (plus, minus))| {
            if plus.is_finite() && minus.is_finite() {
                Ok((plus - minus) / (2.0 * eps))
            } else {
                Err(Error::Numeric(format!(
                    "non-finite objective while perturbing scalar {i}"
                )))
            }
        })
        .collect()
}

/// Relative error used by every gradient check: `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn glorot_bounds() {
        assert_abs_diff_eq!(glorot_bound(100, 200), 0.141421, epsilon = 1e-6);
        assert_abs_diff_eq!(glorot_bound(1, 1), 3f64.sqrt(), epsilon = 1e-12);
        let mut rng = Rng::new(1);
        let m = glorot_init(1, 1, &mut rng).unwrap();
        assert!(m.get(0, 0).abs() <= 1.7321);
        assert!(matches!(
            glorot_init(0, 3, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn glorot_deterministic_and_centered() {
        let a = glorot_init(100, 200, &mut Rng::new(9)).unwrap();
        let b = glorot_init(100, 200, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let l = glorot_bound(100, 200);
        assert!(a.data().iter().all(|x| x.abs() <= l));
        let n = a.data().len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        let sigma = l / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} sigma {sigma}");
    }

    #[test]
    fn matmul_cases() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.5],
        ])
        .unwrap();
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let (r, k, c) = (1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
            let a = glorot_init(r, k, &mut rng).unwrap();
            let b = glorot_init(k, c, &mut rng).unwrap();
            assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
        }
    }

    #[test]
    fn matvec_variants_agree_with_matmul() {
        let mut rng = Rng::new(4);
        let w = glorot_init(3, 4, &mut rng).unwrap();
        let x = vec![0.5, -1.0, 2.0, 0.25];
        let col = Matrix::from_vec(4, 1, x.clone()).unwrap();
        assert_eq!(w.matvec(&x).unwrap().data(), w.matmul(&col).unwrap().data());
        let y = vec![1.0, -2.0, 0.5];
        let mut out = vec![0.0; 4];
        w.matvec_t_into(&y, &mut out).unwrap();
        let expect = w.transpose().matvec(&y).unwrap();
        for (a, b) in out.iter().zip(expect.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn elementwise_ops() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0f64.tanh(), 0.0);
        let a = Vector::from(vec![2.0, 3.0]);
        let b = Vector::from(vec![4.0, 5.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[8.0, 15.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[6.0, 8.0]);
        assert_eq!(a.sub(&b).unwrap().data(), &[-2.0, -2.0]);
        assert!(a.mul(&Vector::zeros(3)).is_err());
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().data(), &[0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap().data(), &[0.5, 0.5]);
        let s = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(s.data()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.data()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn finite_difference_oracle() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-8);
        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_diff_grad(|t| t.iter().sum(), &[1.0, -2.0, 3.5], 1e-5).unwrap();
        for x in g {
            assert_abs_diff_eq!(x, 1.0, epsilon = 1e-9);
        }
        assert!(matches!(
            finite_diff_grad(|t| t[0].ln(), &[0.0], 1e-5),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn rng_streams() {
        let mut a = Rng::derive(5, 1);
        let mut b = Rng::derive(5, 1);
        let mut c = Rng::derive(5, 2);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_sums_to_one_and_shift_invariant(
                xs in prop::collection::vec(-50.0f64..50.0, 1..12),
                shift in -100.0f64..100.0,
            ) {
                let s = softmax(&xs).unwrap();
                prop_assert!((s.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(s.data().iter().all(|&p| p > 0.0));
                let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
                let t = softmax(&shifted).unwrap();
                for (a, b) in s.data().iter().zip(t.data()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
