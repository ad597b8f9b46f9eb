use crate::error::{Error, Result};
use crate::tensor::{glorot_init, Matrix, Rng, Vector};

/// Window convolution over token vectors: `C_j = tanh(W · [x_j; …; x_{j+k-1}] + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `d_c × (d_x · k)`
    pub weight: Matrix,
    pub bias: Vector,
    pub window: usize,
}

impl ConvParams {
    pub fn init(d_c: usize, d_x: usize, window: usize, rng: &mut Rng) -> Result<Self> {
        if window == 0 {
            return Err(Error::dim("convolution window must be at least 1"));
        }
        Ok(Self {
            weight: glorot_init(d_c, d_x * window, rng)?,
            bias: Vector::zeros(d_c),
            window,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Vector::zeros(self.bias.len()),
            window: self.window,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Concatenated windows, one row per output step.
    windows: Matrix,
    /// `tanh` outputs, one row per output step.
    out: Matrix,
    window: usize,
}

/// Valid convolution: `n` input steps give `n - k + 1` output steps.
pub fn conv_forward(inputs: &Matrix, p: &ConvParams) -> Result<(Matrix, ConvCache)> {
    let (n, d_x) = inputs.shape();
    let k = p.window;
    if p.weight.cols() != d_x * k || p.bias.len() != p.weight.rows() {
        return Err(Error::dim(format!(
            "conv weight {:?} / bias {} incompatible with token dim {d_x} and window {k}",
            p.weight.shape(),
            p.bias.len()
        )));
    }
    if n < k {
        return Err(Error::Degenerate(format!(
            "sequence of {n} steps is shorter than window {k}"
        )));
    }
    let steps = n - k + 1;
    // Rows are contiguous, so window j is the flat slice starting at row j.
    let flat = inputs.data();
    let mut windows = Matrix::zeros(steps, d_x * k);
    let mut out = Matrix::zeros(steps, p.out_dim());
    for j in 0..steps {
        let xj = &flat[j * d_x..(j + k) * d_x];
        windows.row_mut(j).copy_from_slice(xj);
        let row = out.row_mut(j);
        row.copy_from_slice(p.bias.data());
        p.weight.matvec_into(xj, row)?;
        row.iter_mut().for_each(|v| *v = v.tanh());
    }
    let cache = ConvCache {
        windows,
        out: out.clone(),
        window: k,
    };
    Ok((out, cache))
}

/// Returns the gradient w.r.t. the input steps; overlapping windows sum.
pub fn conv_backward(
    cache: &ConvCache,
    p: &ConvParams,
    upstream: &Matrix,
    grads: &mut ConvParams,
) -> Result<Matrix> {
    if cache.window != p.window || grads.window != p.window {
        return Err(Error::State(
            "convolution cache built with a different window".into(),
        ));
    }
    if upstream.shape() != cache.out.shape() {
        return Err(Error::dim(format!(
            "conv upstream {:?}, forward output {:?}",
            upstream.shape(),
            cache.out.shape()
        )));
    }
    let steps = cache.out.rows();
    let d_x = cache.windows.cols() / p.window;
    let mut d_in = Matrix::zeros(steps + p.window - 1, d_x);
    let mut d_pre = vec![0.0; p.out_dim()];
    for j in 0..steps {
        for ((d, &g), &c) in d_pre.iter_mut().zip(upstream.row(j)).zip(cache.out.row(j)) {
            *d = g * (1.0 - c * c);
        }
        grads.weight.add_outer(&d_pre, cache.windows.row(j))?;
        grads.bias.add_assign(&d_pre)?;
        let dst = &mut d_in.data_mut()[j * d_x..(j + p.window) * d_x];
        p.weight.matvec_t_into(&d_pre, dst)?;
    }
    Ok(d_in)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, relative_error};

    fn naive_conv(x: &Matrix, p: &ConvParams) -> Matrix {
        let (n, dx) = x.shape();
        let k = p.window;
        let mut out = Matrix::zeros(n - k + 1, p.out_dim());
        for j in 0..n - k + 1 {
            for c in 0..p.out_dim() {
                let mut s = p.bias.data()[c];
                for o in 0..k {
                    for f in 0..dx {
                        s += p.weight.get(c, o * dx + f) * x.get(j + o, f);
                    }
                }
                out.set(j, c, s.tanh());
            }
        }
        out
    }

    fn random(n: usize, dx: usize, dc: usize, k: usize, seed: u64) -> (Matrix, ConvParams) {
        let mut rng = Rng::new(seed);
        let x = glorot_init(n, dx, &mut rng).unwrap().map(|v| v * 2.0);
        let mut p = ConvParams::init(dc, dx, k, &mut rng).unwrap();
        p.bias = Vector::from((0..dc).map(|_| rng.uniform(-0.5, 0.5)).collect::<Vec<_>>());
        (x, p)
    }

    #[test]
    fn output_length_and_zero_weights() {
        let (x, mut p) = random(7, 4, 3, 3, 1);
        let (out, _) = conv_forward(&x, &p).unwrap();
        assert_eq!(out.rows(), 5);
        p.weight.fill(0.0);
        p.bias = Vector::zeros(3);
        let (out, _) = conv_forward(&x, &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_sequence_is_degenerate() {
        let (x, p) = random(2, 4, 3, 3, 1);
        assert!(matches!(conv_forward(&x, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn matches_per_window_oracle() {
        for seed in 0..20 {
            let k = 1 + (seed as usize % 3);
            let (x, p) = random(3 + seed as usize % 6, 5, 4, k, seed);
            let (out, _) = conv_forward(&x, &p).unwrap();
            let oracle = naive_conv(&x, &p);
            for (a, b) in out.data().iter().zip(oracle.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (x, p) = random(5, 4, 3, 2, 2);
        let (out, cache) = conv_forward(&x, &p).unwrap();
        let mut g = p.zeros_like();
        let d = conv_backward(&cache, &p, &Matrix::zeros(out.rows(), out.cols()), &mut g).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
        assert_eq!(g, p.zeros_like());
    }

    #[test]
    fn window_one_is_a_dense_layer() {
        let (x, p) = random(4, 3, 2, 1, 3);
        let (out, cache) = conv_forward(&x, &p).unwrap();
        let up = Matrix::from_vec(4, 2, vec![0.3, -0.2, 1.0, 0.5, -0.7, 0.1, 0.2, 0.9]).unwrap();
        let mut g = p.zeros_like();
        let d_in = conv_backward(&cache, &p, &up, &mut g).unwrap();
        // dense oracle: per step, dpre = up * (1 - y^2); dx = Wᵀ dpre; dW = Σ dpre xᵀ
        let mut dw = Matrix::zeros(2, 3);
        for t in 0..4 {
            let dpre: Vec<f64> = (0..2)
                .map(|c| up.get(t, c) * (1.0 - out.get(t, c).powi(2)))
                .collect();
            for c in 0..2 {
                for f in 0..3 {
                    dw.set(c, f, dw.get(c, f) + dpre[c] * x.get(t, f));
                }
            }
            for f in 0..3 {
                let dx: f64 = (0..2).map(|c| p.weight.get(c, f) * dpre[c]).sum();
                assert!((d_in.get(t, f) - dx).abs() < 1e-14);
            }
        }
        for (a, b) in g.weight.data().iter().zip(dw.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for k in 1..=3 {
            let (x, p) = random(6, 4, 3, k, 10 + k as u64);
            let (out, cache) = conv_forward(&x, &p).unwrap();
            let mut rng = Rng::new(99);
            let up: Vec<f64> = (0..out.data().len())
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect();
            let upm = Matrix::from_vec(out.rows(), out.cols(), up.clone()).unwrap();
            let mut g = p.zeros_like();
            let d_in = conv_backward(&cache, &p, &upm, &mut g).unwrap();
            let objective = |x: &Matrix, p: &ConvParams| -> f64 {
                let (o, _) = conv_forward(x, p).unwrap();
                o.data().iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let fd_x = finite_diff_grad(
                |v| {
                    objective(
                        &Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap(),
                        &p,
                    )
                },
                x.data(),
                1e-5,
            )
            .unwrap();
            let fd_w = finite_diff_grad(
                |v| {
                    let mut q = p.clone();
                    q.weight.data_mut().copy_from_slice(v);
                    objective(&x, &q)
                },
                p.weight.data(),
                1e-5,
            )
            .unwrap();
            for (a, n) in d_in
                .data()
                .iter()
                .zip(&fd_x)
                .chain(g.weight.data().iter().zip(&fd_w))
            {
                assert!(relative_error(*a, *n, 1e-6) < 1e-4, "{a} vs {n}");
            }
        }
    }
}
