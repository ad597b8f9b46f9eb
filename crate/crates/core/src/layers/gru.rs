use crate::error::{Error, Result};
use crate::tensor::{glorot_init, sigmoid, Matrix, Rng, Vector};

/// Gated recurrent unit weights. `w_*` map the input (`d_h × d_in`), `u_*`
/// map the previous state (`d_h × d_h`).
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: Matrix,
    pub w_z: Matrix,
    pub w_h: Matrix,
    pub u_r: Matrix,
    pub u_z: Matrix,
    pub u_h: Matrix,
    pub b_r: Vector,
    pub b_z: Vector,
    pub b_h: Vector,
}

impl GruParams {
    pub fn init(d_h: usize, d_in: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            w_r: glorot_init(d_h, d_in, rng)?,
            w_z: glorot_init(d_h, d_in, rng)?,
            w_h: glorot_init(d_h, d_in, rng)?,
            u_r: glorot_init(d_h, d_h, rng)?,
            u_z: glorot_init(d_h, d_h, rng)?,
            u_h: glorot_init(d_h, d_h, rng)?,
            b_r: Vector::zeros(d_h),
            b_z: Vector::zeros(d_h),
            b_h: Vector::zeros(d_h),
        })
    }

    pub fn zeros(d_h: usize, d_in: usize) -> Self {
        Self {
            w_r: Matrix::zeros(d_h, d_in),
            w_z: Matrix::zeros(d_h, d_in),
            w_h: Matrix::zeros(d_h, d_in),
            u_r: Matrix::zeros(d_h, d_h),
            u_z: Matrix::zeros(d_h, d_h),
            u_h: Matrix::zeros(d_h, d_h),
            b_r: Vector::zeros(d_h),
            b_z: Vector::zeros(d_h),
            b_h: Vector::zeros(d_h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden(), self.input())
    }

    pub fn hidden(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols()
    }

    fn check(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        let ok = [&self.w_r, &self.w_z, &self.w_h]
            .iter()
            .all(|m| m.shape() == (h, i))
            && [&self.u_r, &self.u_z, &self.u_h]
                .iter()
                .all(|m| m.shape() == (h, h))
            && [&self.b_r, &self.b_z, &self.b_h]
                .iter()
                .all(|b| b.len() == h);
        if ok {
            Ok(())
        } else {
            Err(Error::dim("inconsistent GRU parameter shapes"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    cand: Vec<f64>,
    /// `U_h · h_prev`, before the reset gate is applied.
    uh: Vec<f64>,
}

/// One GRU update. The update gate `z` weights the candidate state:
/// `h = (1 - z) ⊙ h_prev + z ⊙ h̃`.
pub fn gru_step(x: &[f64], h_prev: &[f64], p: &GruParams) -> Result<(Vector, GruStepCache)> {
    p.check()?;
    let d_h = p.hidden();
    if x.len() != p.input() || h_prev.len() != d_h {
        return Err(Error::dim(format!(
            "GRU step input {} / state {}, expected {} / {d_h}",
            x.len(),
            h_prev.len(),
            p.input()
        )));
    }
    let gate = |w: &Matrix, u: &Matrix, b: &Vector| -> Result<Vec<f64>> {
        let mut a = b.data().to_vec();
        w.matvec_into(x, &mut a)?;
        u.matvec_into(h_prev, &mut a)?;
        Ok(a.into_iter().map(sigmoid).collect())
    };
    let r = gate(&p.w_r, &p.u_r, &p.b_r)?;
    let z = gate(&p.w_z, &p.u_z, &p.b_z)?;
    let mut uh = vec![0.0; d_h];
    p.u_h.matvec_into(h_prev, &mut uh)?;
    let mut cand = p.b_h.data().to_vec();
    p.w_h.matvec_into(x, &mut cand)?;
    for i in 0..d_h {
        cand[i] = (cand[i] + r[i] * uh[i]).tanh();
    }
    let h: Vec<f64> = (0..d_h)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
        .collect();
    let cache = GruStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        cand,
        uh,
    };
    Ok((Vector::from(h), cache))
}

/// Backpropagates `dh` through one step. Accumulates into `grads`, returns
/// `(d_x, d_h_prev)`.
pub fn gru_step_backward(
    cache: &GruStepCache,
    p: &GruParams,
    dh: &[f64],
    grads: &mut GruParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d_h = p.hidden();
    if dh.len() != d_h || cache.x.len() != p.input() || cache.h_prev.len() != d_h {
        return Err(Error::State(
            "GRU step cache does not match parameters".into(),
        ));
    }
    let mut d_hprev = vec![0.0; d_h];
    let mut a_r = vec![0.0; d_h];
    let mut a_z = vec![0.0; d_h];
    let mut a_h = vec![0.0; d_h];
    let mut d_uh = vec![0.0; d_h];
    for i in 0..d_h {
        let (r, z, c) = (cache.r[i], cache.z[i], cache.cand[i]);
        d_hprev[i] = dh[i] * (1.0 - z);
        let dz = dh[i] * (c - cache.h_prev[i]);
        a_z[i] = dz * z * (1.0 - z);
        a_h[i] = dh[i] * z * (1.0 - c * c);
        let dr = a_h[i] * cache.uh[i];
        a_r[i] = dr * r * (1.0 - r);
        d_uh[i] = a_h[i] * r;
    }
    let mut d_x = vec![0.0; p.input()];
    for (a, w, u, gw, gu, gb) in [
        (
            &a_r,
            &p.w_r,
            &p.u_r,
            &mut grads.w_r,
            &mut grads.u_r,
            &mut grads.b_r,
        ),
        (
            &a_z,
            &p.w_z,
            &p.u_z,
            &mut grads.w_z,
            &mut grads.u_z,
            &mut grads.b_z,
        ),
    ] {
        gw.add_outer(a, &cache.x)?;
        gu.add_outer(a, &cache.h_prev)?;
        gb.add_assign(a)?;
        w.matvec_t_into(a, &mut d_x)?;
        u.matvec_t_into(a, &mut d_hprev)?;
    }
    grads.w_h.add_outer(&a_h, &cache.x)?;
    grads.b_h.add_assign(&a_h)?;
    p.w_h.matvec_t_into(&a_h, &mut d_x)?;
    grads.u_h.add_outer(&d_uh, &cache.h_prev)?;
    p.u_h.matvec_t_into(&d_uh, &mut d_hprev)?;
    Ok((d_x, d_hprev))
}

#[derive(Debug, Clone)]
pub struct BiGruCache {
    fwd: Vec<GruStepCache>,
    /// Indexed by input position, not by processing order.
    bwd: Vec<GruStepCache>,
}

/// Runs a forward GRU left-to-right and a backward GRU right-to-left from
/// zero initial states. Row `j` of the output is `[fwd_h_j; bwd_h_j]`.
pub fn bigru_forward(
    features: &Matrix,
    fwd: &GruParams,
    bwd: &GruParams,
) -> Result<(Matrix, BiGruCache)> {
    let steps = features.rows();
    if steps == 0 {
        return Err(Error::Degenerate(
            "bidirectional GRU over an empty sequence".into(),
        ));
    }
    let d_h = fwd.hidden();
    if bwd.hidden() != d_h {
        return Err(Error::dim("forward and backward GRU hidden sizes differ"));
    }
    let mut out = Matrix::zeros(steps, 2 * d_h);
    let mut fwd_cache = Vec::with_capacity(steps);
    let mut h = vec![0.0; d_h];
    for j in 0..steps {
        let (next, c) = gru_step(features.row(j), &h, fwd)?;
        h = next.into_data();
        out.row_mut(j)[..d_h].copy_from_slice(&h);
        fwd_cache.push(c);
    }
    let mut bwd_cache: Vec<Option<GruStepCache>> = vec![None; steps];
    let mut h = vec![0.0; d_h];
    for j in (0..steps).rev() {
        let (next, c) = gru_step(features.row(j), &h, bwd)?;
        h = next.into_data();
        out.row_mut(j)[d_h..].copy_from_slice(&h);
        bwd_cache[j] = Some(c);
    }
    let cache = BiGruCache {
        fwd: fwd_cache,
        bwd: bwd_cache
            .into_iter()
            .map(|c| c.expect("every step visited"))
            .collect(),
    };
    Ok((out, cache))
}

/// Backpropagation through time in both directions. Returns the gradient
/// w.r.t. the input features.
pub fn bigru_backward(
    cache: &BiGruCache,
    fwd: &GruParams,
    bwd: &GruParams,
    upstream: &Matrix,
    grad_fwd: &mut GruParams,
    grad_bwd: &mut GruParams,
) -> Result<Matrix> {
    let steps = cache.fwd.len();
    let d_h = fwd.hidden();
    if upstream.shape() != (steps, 2 * d_h) {
        return Err(Error::dim(format!(
            "BiGRU upstream {:?}, expected {:?}",
            upstream.shape(),
            (steps, 2 * d_h)
        )));
    }
    let mut d_in = Matrix::zeros(steps, fwd.input());
    let mut carry = vec![0.0; d_h];
    for j in (0..steps).rev() {
        let dh: Vec<f64> = upstream.row(j)[..d_h]
            .iter()
            .zip(&carry)
            .map(|(a, b)| a + b)
            .collect();
        let (dx, dprev) = gru_step_backward(&cache.fwd[j], fwd, &dh, grad_fwd)?;
        d_in.row_mut(j)
            .iter_mut()
            .zip(&dx)
            .for_each(|(d, v)| *d += v);
        carry = dprev;
    }
    let mut carry = vec![0.0; d_h];
    for j in 0..steps {
        let dh: Vec<f64> = upstream.row(j)[d_h..]
            .iter()
            .zip(&carry)
            .map(|(a, b)| a + b)
            .collect();
        let (dx, dprev) = gru_step_backward(&cache.bwd[j], bwd, &dh, grad_bwd)?;
        d_in.row_mut(j)
            .iter_mut()
            .zip(&dx)
            .for_each(|(d, v)| *d += v);
        carry = dprev;
    }
    Ok(d_in)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, relative_error};

    fn random_params(d_h: usize, d_in: usize, seed: u64) -> GruParams {
        let mut rng = Rng::new(seed);
        let mut p = GruParams::init(d_h, d_in, &mut rng).unwrap();
        for b in [&mut p.b_r, &mut p.b_z, &mut p.b_h] {
            b.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
        p
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    // Scalar reimplementation, one hidden unit at a time.
    fn scalar_step(x: &[f64], h: &[f64], p: &GruParams) -> Vec<f64> {
        let d_h = p.hidden();
        let lin = |w: &Matrix, u: &Matrix, b: &Vector, i: usize, hh: &[f64]| {
            let mut s = b.data()[i];
            for (k, xv) in x.iter().enumerate() {
                s += w.get(i, k) * xv;
            }
            for (k, hv) in hh.iter().enumerate() {
                s += u.get(i, k) * hv;
            }
            s
        };
        (0..d_h)
            .map(|i| {
                let r = sigmoid(lin(&p.w_r, &p.u_r, &p.b_r, i, h));
                let z = sigmoid(lin(&p.w_z, &p.u_z, &p.b_z, i, h));
                let mut uh = 0.0;
                for (k, hv) in h.iter().enumerate() {
                    uh += p.u_h.get(i, k) * hv;
                }
                let mut a = p.b_h.data()[i];
                for (k, xv) in x.iter().enumerate() {
                    a += p.w_h.get(i, k) * xv;
                }
                let c = (a + r * uh).tanh();
                (1.0 - z) * h[i] + z * c
            })
            .collect()
    }

    #[test]
    fn zero_weights_halve_previous_state() {
        let p = GruParams::zeros(3, 2);
        let (h, c) = gru_step(&[0.7, -1.0], &[0.4, -0.2, 1.0], &p).unwrap();
        assert_eq!(c.r, vec![0.5; 3]);
        assert_eq!(c.z, vec![0.5; 3]);
        assert_eq!(c.cand, vec![0.0; 3]);
        assert_eq!(h.data(), &[0.2, -0.1, 0.5]);
        let (h, _) = gru_step(&[0.0, 0.0], &[0.0; 3], &p).unwrap();
        assert_eq!(h.data(), &[0.0; 3]);
    }

    #[test]
    fn step_matches_scalar_oracle_and_is_convex() {
        for seed in 0..20 {
            let p = random_params(4, 5, seed);
            let x = random_matrix(1, 5, seed + 100).into_data();
            let h0 = random_matrix(1, 4, seed + 200).into_data();
            let (h, c) = gru_step(&x, &h0, &p).unwrap();
            for (a, b) in h.data().iter().zip(scalar_step(&x, &h0, &p)) {
                assert!((a - b).abs() < 1e-12);
            }
            for i in 0..4 {
                let (lo, hi) = (h0[i].min(c.cand[i]), h0[i].max(c.cand[i]));
                assert!(h.data()[i] >= lo - 1e-15 && h.data()[i] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = GruParams::zeros(3, 2);
        assert!(matches!(
            gru_step(&[0.0; 3], &[0.0; 3], &p),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            bigru_forward(&Matrix::zeros(0, 2), &p, &p),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_step_concatenates_both_directions() {
        let (f, b) = (random_params(3, 2, 1), random_params(3, 2, 2));
        let x = random_matrix(1, 2, 3);
        let (h, _) = bigru_forward(&x, &f, &b).unwrap();
        assert_eq!(h.shape(), (1, 6));
        let (hf, _) = gru_step(x.row(0), &[0.0; 3], &f).unwrap();
        let (hb, _) = gru_step(x.row(0), &[0.0; 3], &b).unwrap();
        assert_eq!(&h.row(0)[..3], hf.data());
        assert_eq!(&h.row(0)[3..], hb.data());
        let p = GruParams::zeros(100, 4);
        let (h, _) = bigru_forward(&Matrix::zeros(2, 4), &p, &p).unwrap();
        assert_eq!(h.cols(), 200);
    }

    #[test]
    fn reversal_symmetry() {
        let (f, b) = (random_params(3, 4, 5), random_params(3, 4, 6));
        let x = random_matrix(5, 4, 7);
        let rev_rows: Vec<Vec<f64>> = (0..5).rev().map(|j| x.row(j).to_vec()).collect();
        let x_rev = Matrix::from_rows(&rev_rows).unwrap();
        let (h, _) = bigru_forward(&x, &f, &b).unwrap();
        let (h_rev, _) = bigru_forward(&x_rev, &b, &f).unwrap();
        for j in 0..5 {
            let a = h.row(j);
            let r = h_rev.row(4 - j);
            assert_eq!(&a[..3], &r[3..]);
            assert_eq!(&a[3..], &r[..3]);
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let (f, b) = (random_params(3, 2, 1), random_params(3, 2, 2));
        let x = random_matrix(4, 2, 3);
        let (_, cache) = bigru_forward(&x, &f, &b).unwrap();
        let (mut gf, mut gb) = (f.zeros_like(), b.zeros_like());
        let d = bigru_backward(&cache, &f, &b, &Matrix::zeros(4, 6), &mut gf, &mut gb).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
        assert_eq!(gf, f.zeros_like());
    }

    #[test]
    fn single_step_backward_matches_hand_jacobian() {
        // With h_prev = 0: h = z ⊙ tanh(W_h x + b_h), z = σ(W_z x + b_z); r has no effect.
        let (f, b) = (random_params(2, 3, 8), random_params(2, 3, 9));
        let x = random_matrix(1, 3, 10);
        let (_, cache) = bigru_forward(&x, &f, &b).unwrap();
        let up = Matrix::from_vec(1, 4, vec![0.5, -1.0, 0.0, 0.0]).unwrap();
        let (mut gf, mut gb) = (f.zeros_like(), b.zeros_like());
        let d = bigru_backward(&cache, &f, &b, &up, &mut gf, &mut gb).unwrap();
        let xs = x.row(0);
        let mut expect_dx = [0.0; 3];
        for i in 0..2 {
            let az = f.b_z.data()[i] + (0..3).map(|k| f.w_z.get(i, k) * xs[k]).sum::<f64>();
            let ah = f.b_h.data()[i] + (0..3).map(|k| f.w_h.get(i, k) * xs[k]).sum::<f64>();
            let (z, c) = (sigmoid(az), ah.tanh());
            let g = up.get(0, i);
            let d_az = g * c * z * (1.0 - z);
            let d_ah = g * z * (1.0 - c * c);
            assert!((gf.b_z.data()[i] - d_az).abs() < 1e-14);
            assert!((gf.b_h.data()[i] - d_ah).abs() < 1e-14);
            assert_eq!(gf.b_r.data()[i], 0.0);
            for k in 0..3 {
                expect_dx[k] += f.w_z.get(i, k) * d_az + f.w_h.get(i, k) * d_ah;
            }
        }
        for k in 0..3 {
            assert!((d.get(0, k) - expect_dx[k]).abs() < 1e-14);
        }
        assert!(gf.u_h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bigru_backward_matches_finite_differences() {
        let (steps, d_in, d_h) = (5, 3, 4);
        let (f, b) = (random_params(d_h, d_in, 21), random_params(d_h, d_in, 22));
        let x = random_matrix(steps, d_in, 23);
        let up = random_matrix(steps, 2 * d_h, 24);
        let (_, cache) = bigru_forward(&x, &f, &b).unwrap();
        let (mut gf, mut gb) = (f.zeros_like(), b.zeros_like());
        let d_in_grad = bigru_backward(&cache, &f, &b, &up, &mut gf, &mut gb).unwrap();
        let objective = |x: &Matrix, f: &GruParams, b: &GruParams| -> f64 {
            let (h, _) = bigru_forward(x, f, b).unwrap();
            h.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let check = |analytic: &[f64], numeric: &[f64]| {
            for (a, n) in analytic.iter().zip(numeric) {
                assert!(relative_error(*a, *n, 1e-6) < 1e-4, "{a} vs {n}");
            }
        };
        let fd = finite_diff_grad(
            |v| objective(&Matrix::from_vec(steps, d_in, v.to_vec()).unwrap(), &f, &b),
            x.data(),
            1e-5,
        )
        .unwrap();
        check(d_in_grad.data(), &fd);
        type Pick = fn(&mut GruParams) -> &mut [f64];
        let picks: [Pick; 6] = [
            |p| p.w_r.data_mut(),
            |p| p.u_z.data_mut(),
            |p| p.u_h.data_mut(),
            |p| p.b_r.data_mut(),
            |p| p.b_z.data_mut(),
            |p| p.w_h.data_mut(),
        ];
        for pick in picks {
            let base = pick(&mut f.clone()).to_vec();
            let fd = finite_diff_grad(
                |v| {
                    let mut q = f.clone();
                    pick(&mut q).copy_from_slice(v);
                    objective(&x, &q, &b)
                },
                &base,
                1e-5,
            )
            .unwrap();
            check(pick(&mut gf.clone()), &fd);
            let base = pick(&mut b.clone()).to_vec();
            let fd = finite_diff_grad(
                |v| {
                    let mut q = b.clone();
                    pick(&mut q).copy_from_slice(v);
                    objective(&x, &f, &q)
                },
                &base,
                1e-5,
            )
            .unwrap();
            check(pick(&mut gb.clone()), &fd);
        }
    }
}
