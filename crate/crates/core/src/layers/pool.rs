use crate::error::{Error, Result};
use crate::tensor::{dot, softmax, Matrix, Vector};

fn check_valid(h: &Matrix, valid: usize) -> Result<()> {
    if valid == 0 {
        return Err(Error::Degenerate("pooling over zero valid steps".into()));
    }
    if valid > h.rows() {
        return Err(Error::dim(format!(
            "{valid} valid steps but only {} rows",
            h.rows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    /// Winning step per feature.
    pub argmax: Vec<usize>,
    steps: usize,
}

/// Feature-wise max over the first `valid` steps (rows) of `h`; ties go to
/// the earliest step.
pub fn max_pool(h: &Matrix, valid: usize) -> Result<(Vector, MaxPoolCache)> {
    check_valid(h, valid)?;
    let mut rs = h.row(0).to_vec();
    let mut argmax = vec![0; h.cols()];
    for j in 1..valid {
        for (i, &v) in h.row(j).iter().enumerate() {
            if v > rs[i] {
                rs[i] = v;
                argmax[i] = j;
            }
        }
    }
    Ok((
        Vector::from(rs),
        MaxPoolCache {
            argmax,
            steps: h.rows(),
        },
    ))
}

pub fn max_pool_backward(cache: &MaxPoolCache, d_rs: &[f64]) -> Result<Matrix> {
    if d_rs.len() != cache.argmax.len() {
        return Err(Error::dim(
            "max-pool upstream length differs from feature count",
        ));
    }
    let mut d = Matrix::zeros(cache.steps, d_rs.len());
    for (i, (&j, &g)) in cache.argmax.iter().zip(d_rs).enumerate() {
        d.set(j, i, g);
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// `tanh(h_j)` for the valid steps.
    squashed: Matrix,
    pub alpha: Vector,
    rs: Vec<f64>,
    steps: usize,
}

impl AttentionCache {
    /// Weights over every step of the padded input; zero past the valid ones.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.alpha.data().to_vec();
        w.resize(self.steps, 0.0);
        w
    }
}

/// `α = softmax(vᵀ tanh(H))` restricted to the first `valid` steps, and
/// `rs = tanh(Σ_j α_j h_j)`. Padded steps carry no weight.
pub fn attentive_pool(h: &Matrix, v: &Vector, valid: usize) -> Result<(Vector, AttentionCache)> {
    check_valid(h, valid)?;
    if v.len() != h.cols() {
        return Err(Error::dim(format!(
            "attention vector {} vs feature size {}",
            v.len(),
            h.cols()
        )));
    }
    let mut squashed = Matrix::zeros(valid, h.cols());
    let mut scores = Vec::with_capacity(valid);
    for j in 0..valid {
        let row = squashed.row_mut(j);
        row.iter_mut()
            .zip(h.row(j))
            .for_each(|(m, &x)| *m = x.tanh());
        scores.push(dot(row, v.data()));
    }
    let alpha = softmax(&scores)?;
    let mut pre = vec![0.0; h.cols()];
    for (j, &a) in alpha.data().iter().enumerate() {
        pre.iter_mut().zip(h.row(j)).for_each(|(p, &x)| *p += a * x);
    }
    let rs: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
    let cache = AttentionCache {
        squashed,
        alpha,
        rs: rs.clone(),
        steps: h.rows(),
    };
    Ok((Vector::from(rs), cache))
}

/// Returns `dH` (zero on padded rows) and accumulates into `grad_v`.
pub fn attentive_pool_backward(
    h: &Matrix,
    v: &Vector,
    cache: &AttentionCache,
    d_rs: &[f64],
    grad_v: &mut Vector,
) -> Result<Matrix> {
    let valid = cache.alpha.len();
    if h.rows() != cache.steps || d_rs.len() != h.cols() || grad_v.len() != v.len() {
        return Err(Error::dim(
            "attention backward shapes do not match the forward pass",
        ));
    }
    let d_pre: Vec<f64> = d_rs
        .iter()
        .zip(&cache.rs)
        .map(|(g, r)| g * (1.0 - r * r))
        .collect();
    let alpha = cache.alpha.data();
    let d_alpha: Vec<f64> = (0..valid).map(|j| dot(h.row(j), &d_pre)).collect();
    let mean = dot(alpha, &d_alpha);
    let mut d_h = Matrix::zeros(h.rows(), h.cols());
    for j in 0..valid {
        let d_score = alpha[j] * (d_alpha[j] - mean);
        let m = cache.squashed.row(j);
        grad_v.add_assign(&m.iter().map(|x| d_score * x).collect::<Vec<_>>())?;
        let row = d_h.row_mut(j);
        for i in 0..row.len() {
            row[i] = alpha[j] * d_pre[i] + d_score * v.data()[i] * (1.0 - m[i] * m[i]);
        }
    }
    Ok(d_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, relative_error, Rng};

    fn random(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.5, 1.5)).collect()).unwrap()
    }

    #[test]
    fn max_pool_examples() {
        // columns [1,-2] and [0,3] are steps
        let h = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap();
        let (rs, c) = max_pool(&h, 2).unwrap();
        assert_eq!(rs.data(), &[1.0, 3.0]);
        assert_eq!(c.argmax, vec![0, 1]);
        let (rs, _) = max_pool(&h, 1).unwrap();
        assert_eq!(rs.data(), h.row(0));
        assert!(matches!(max_pool(&h, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn max_pool_ties_pick_first_step() {
        let h = Matrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
        let (_, c) = max_pool(&h, 2).unwrap();
        assert_eq!(c.argmax, vec![0]);
    }

    #[test]
    fn max_pool_gradient_routes_to_argmax() {
        let h = random(4, 3, 1);
        let (_, c) = max_pool(&h, 4).unwrap();
        let d = max_pool_backward(&c, &[1.0, 1.0, 1.0]).unwrap();
        let fd = finite_diff_grad(
            |x| {
                max_pool(&Matrix::from_vec(4, 3, x.to_vec()).unwrap(), 4)
                    .unwrap()
                    .0
                    .data()
                    .iter()
                    .sum()
            },
            h.data(),
            1e-5,
        )
        .unwrap();
        for (a, n) in d.data().iter().zip(&fd) {
            assert!((a - n).abs() < 1e-9);
        }
        assert_eq!(d.data().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn attention_examples() {
        let h = Matrix::from_rows(&[vec![0.3, -0.8]]).unwrap();
        let v = Vector::from(vec![1.0, 2.0]);
        let (rs, c) = attentive_pool(&h, &v, 1).unwrap();
        assert_eq!(c.alpha.data(), &[1.0]);
        assert_eq!(rs.data(), &[0.3f64.tanh(), (-0.8f64).tanh()]);
        let h = Matrix::from_rows(&[vec![0.3, -0.8], vec![0.3, -0.8], vec![9.0, 9.0]]).unwrap();
        let (_, c) = attentive_pool(&h, &v, 2).unwrap();
        assert_eq!(c.alpha.data(), &[0.5, 0.5]);
        assert!(matches!(
            attentive_pool(&h, &v, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn attention_backward_matches_finite_differences() {
        for (steps, valid, seed) in [(5, 5, 1), (6, 4, 2), (3, 1, 3)] {
            let h = random(steps, 4, seed);
            let v = Vector::from(random(1, 4, seed + 10).into_data());
            let up = random(1, 4, seed + 20).into_data();
            let (_, cache) = attentive_pool(&h, &v, valid).unwrap();
            let mut gv = Vector::zeros(4);
            let dh = attentive_pool_backward(&h, &v, &cache, &up, &mut gv).unwrap();
            let obj =
                |h: &Matrix, v: &Vector| dot(attentive_pool(h, v, valid).unwrap().0.data(), &up);
            let fd_h = finite_diff_grad(
                |x| obj(&Matrix::from_vec(steps, 4, x.to_vec()).unwrap(), &v),
                h.data(),
                1e-5,
            )
            .unwrap();
            let fd_v =
                finite_diff_grad(|x| obj(&h, &Vector::from(x.to_vec())), v.data(), 1e-5).unwrap();
            for (a, n) in dh
                .data()
                .iter()
                .zip(&fd_h)
                .chain(gv.data().iter().zip(&fd_v))
            {
                assert!(relative_error(*a, *n, 1e-6) < 1e-4, "{a} vs {n}");
            }
            for j in valid..steps {
                assert!(dh.row(j).iter().all(|&x| x == 0.0));
            }
        }
    }
}
