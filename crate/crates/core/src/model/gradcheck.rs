//! Analytic gradients of every block and of the three full architectures,
//! compared against central finite differences on small random instances.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    attentive_pool, attentive_pool_backward, bigru_backward, bigru_forward, classifier_backward,
    classifier_forward, conv_backward, conv_forward, embed_backward, embed_forward, max_pool,
    max_pool_backward, ConvParams, EmbeddingTables, EncodedSequence, GruParams, SequenceBatch,
};
use crate::tensor::{finite_diff_grad, relative_error, Matrix, Rng, Vector, DEFAULT_FD_EPS};

use super::config::{ModelConfig, Pooling};
use super::network::{Mode, Model};

pub const BLOCKS: [&str; 11] = [
    "embed",
    "conv_k1",
    "conv_k2",
    "conv_k3",
    "bigru",
    "max_pool",
    "attentive_pool",
    "classifier",
    "model_max",
    "model_att",
    "model_cnn",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub eps: f64,
    /// Largest accepted relative error.
    pub threshold: f64,
    /// Denominator floor of the relative error, so components whose true
    /// value is zero are judged by absolute error.
    pub floor: f64,
    /// Test hook: perturb the analytic gradient of this block.
    pub corrupt: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            eps: DEFAULT_FD_EPS,
            threshold: 1e-4,
            floor: 1e-6,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub block: String,
    pub scalars: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub threshold: f64,
    pub results: Vec<BlockResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.block.as_str())
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<16}{:>9}{:>14}{:>14}  status\n",
            "block", "scalars", "max_rel", "max_abs"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<16}{:>9}{:>14.3e}{:>14.3e}  {}",
                r.block,
                r.scalars,
                r.max_rel_error,
                r.max_abs_error,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

const N_MIN: usize = 3;
const N_MAX: usize = 8;
const D_W: usize = 6;
const D_P: usize = 2;
const D_C: usize = 5;
const D_H: usize = 4;
const CLASSES: usize = 4;
const VOCAB: usize = 9;
const POSITIONS: usize = 7;

/// Runs every block in [`BLOCKS`] order.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if let Some(c) = &cfg.corrupt {
        if !BLOCKS.contains(&c.as_str()) {
            return Err(Error::Config(format!("unknown gradcheck block {c:?}")));
        }
    }
    let results = BLOCKS
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let mut rng = Rng::derive(cfg.seed, i as u64);
            let (theta, analytic, f) = instance(name, &mut rng)?;
            compare(name, &theta, analytic, &f, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        threshold: cfg.threshold,
        results,
    })
}

type Objective = Box<dyn Fn(&[f64]) -> f64 + Sync + Send>;

fn compare(
    name: &str,
    theta: &[f64],
    mut analytic: Vec<f64>,
    f: &Objective,
    cfg: &GradcheckConfig,
) -> Result<BlockResult> {
    if cfg.corrupt.as_deref() == Some(name) {
        let i = (0..analytic.len())
            .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
            .expect("non-empty gradient");
        analytic[i] *= 1.01;
    }
    let numeric = finite_diff_grad(f, theta, cfg.eps)?;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        max_rel = max_rel.max(relative_error(*a, *n, cfg.floor));
        max_abs = max_abs.max((a - n).abs());
    }
    Ok(BlockResult {
        block: name.to_string(),
        scalars: theta.len(),
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        passed: max_rel < cfg.threshold,
    })
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .expect("sized")
}

fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn steps(rng: &mut Rng) -> usize {
    N_MIN + rng.below(N_MAX - N_MIN + 1)
}

fn gru_tensors(g: &mut GruParams) -> [&mut [f64]; 9] {
    let GruParams {
        w_r,
        w_z,
        w_h,
        u_r,
        u_z,
        u_h,
        b_r,
        b_z,
        b_h,
    } = g;
    [
        w_r.data_mut(),
        w_z.data_mut(),
        w_h.data_mut(),
        u_r.data_mut(),
        u_z.data_mut(),
        u_h.data_mut(),
        b_r.data_mut(),
        b_z.data_mut(),
        b_h.data_mut(),
    ]
}

fn pack(parts: &mut [&mut [f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn unpack(parts: &mut [&mut [f64]], flat: &[f64]) {
    let mut off = 0;
    for p in parts.iter_mut() {
        let n = p.len();
        p.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}

fn random_gru(d_h: usize, d_in: usize, rng: &mut Rng) -> GruParams {
    let mut g = GruParams::zeros(d_h, d_in);
    for t in gru_tensors(&mut g) {
        t.iter_mut().for_each(|x| *x = rng.uniform(-0.8, 0.8));
    }
    g
}

/// Weighted sum of a matrix: a linear readout giving a scalar objective.
fn readout(m: &Matrix, w: &Matrix) -> f64 {
    m.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn instance(name: &str, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    match name {
        "embed" => embed_instance(rng),
        "conv_k1" => conv_instance(1, rng),
        "conv_k2" => conv_instance(2, rng),
        "conv_k3" => conv_instance(3, rng),
        "bigru" => bigru_instance(rng),
        "max_pool" => max_pool_instance(rng),
        "attentive_pool" => attentive_instance(rng),
        "classifier" => classifier_instance(rng),
        "model_max" => model_instance(Pooling::Max, true, rng),
        "model_att" => model_instance(Pooling::Attentive, true, rng),
        "model_cnn" => model_instance(Pooling::Max, false, rng),
        other => Err(Error::Config(format!("unknown gradcheck block {other:?}"))),
    }
}

fn embed_instance(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let n = steps(rng);
    let ids = |rng: &mut Rng, hi: usize| -> Vec<usize> {
        (0..n).map(|_| 1 + rng.below(hi - 1)).collect()
    };
    let (tok, p1, p2) = (ids(rng, VOCAB), ids(rng, POSITIONS), ids(rng, POSITIONS));
    let tables = EmbeddingTables {
        word: random_matrix(VOCAB, D_W, rng),
        pos: random_matrix(POSITIONS, D_P, rng),
    };
    let w = random_matrix(n, D_W + 2 * D_P, rng);
    let mut grads = tables.zeros_like();
    embed_backward(&mut grads, &tok, &p1, &p2, &w)?;
    let theta: Vec<f64> = tables
        .word
        .data()
        .iter()
        .chain(tables.pos.data())
        .copied()
        .collect();
    let analytic: Vec<f64> = grads
        .word
        .data()
        .iter()
        .chain(grads.pos.data())
        .copied()
        .collect();
    let split = VOCAB * D_W;
    let f = move |t: &[f64]| {
        let tables = EmbeddingTables {
            word: Matrix::from_vec(VOCAB, D_W, t[..split].to_vec()).expect("sized"),
            pos: Matrix::from_vec(POSITIONS, D_P, t[split..].to_vec()).expect("sized"),
        };
        readout(
            &embed_forward(&tables, &tok, &p1, &p2).expect("valid ids"),
            &w,
        )
    };
    Ok((theta, analytic, Box::new(f)))
}

fn conv_instance(k: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let n = steps(rng);
    let d_x = D_W + 2 * D_P;
    let x = random_matrix(n, d_x, rng);
    let p = ConvParams {
        weight: random_matrix(D_C, d_x * k, rng),
        bias: Vector::from(random_vec(D_C, rng)),
        window: k,
    };
    let (out, cache) = conv_forward(&x, &p)?;
    let w = random_matrix(out.rows(), D_C, rng);
    let mut grads = p.zeros_like();
    let d_x_grad = conv_backward(&cache, &p, &w, &mut grads)?;
    let theta: Vec<f64> = x
        .data()
        .iter()
        .chain(p.weight.data())
        .chain(p.bias.data())
        .copied()
        .collect();
    let analytic: Vec<f64> = d_x_grad
        .data()
        .iter()
        .chain(grads.weight.data())
        .chain(grads.bias.data())
        .copied()
        .collect();
    let (nx, nw) = (n * d_x, D_C * d_x * k);
    let f = move |t: &[f64]| {
        let x = Matrix::from_vec(n, d_x, t[..nx].to_vec()).expect("sized");
        let p = ConvParams {
            weight: Matrix::from_vec(D_C, d_x * k, t[nx..nx + nw].to_vec()).expect("sized"),
            bias: Vector::from(t[nx + nw..].to_vec()),
            window: k,
        };
        readout(&conv_forward(&x, &p).expect("n >= k").0, &w)
    };
    Ok((theta, analytic, Box::new(f)))
}

fn bigru_instance(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let n = steps(rng);
    let x = random_matrix(n, D_C, rng);
    let mut fwd = random_gru(D_H, D_C, rng);
    let mut bwd = random_gru(D_H, D_C, rng);
    let (out, cache) = bigru_forward(&x, &fwd, &bwd)?;
    let w = random_matrix(out.rows(), out.cols(), rng);
    let (mut gf, mut gb) = (fwd.zeros_like(), bwd.zeros_like());
    let dx = bigru_backward(&cache, &fwd, &bwd, &w, &mut gf, &mut gb)?;
    let mut theta = x.data().to_vec();
    theta.extend(pack(&mut gru_tensors(&mut fwd)));
    theta.extend(pack(&mut gru_tensors(&mut bwd)));
    let mut analytic = dx.data().to_vec();
    analytic.extend(pack(&mut gru_tensors(&mut gf)));
    analytic.extend(pack(&mut gru_tensors(&mut gb)));
    let nx = n * D_C;
    let ng = (theta.len() - nx) / 2;
    let f = move |t: &[f64]| {
        let x = Matrix::from_vec(n, D_C, t[..nx].to_vec()).expect("sized");
        let mut fwd = GruParams::zeros(D_H, D_C);
        let mut bwd = GruParams::zeros(D_H, D_C);
        unpack(&mut gru_tensors(&mut fwd), &t[nx..nx + ng]);
        unpack(&mut gru_tensors(&mut bwd), &t[nx + ng..]);
        readout(&bigru_forward(&x, &fwd, &bwd).expect("shapes").0, &w)
    };
    Ok((theta, analytic, Box::new(f)))
}

fn max_pool_instance(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let n = steps(rng);
    let valid = 1 + rng.below(n);
    let h = random_matrix(n, 2 * D_H, rng);
    let w = random_vec(2 * D_H, rng);
    let (_, cache) = max_pool(&h, valid)?;
    let analytic = max_pool_backward(&cache, &w)?.into_data();
    let f = move |t: &[f64]| {
        let h = Matrix::from_vec(n, 2 * D_H, t.to_vec()).expect("sized");
        let (rs, _) = max_pool(&h, valid).expect("valid > 0");
        rs.data().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    Ok((h.into_data(), analytic, Box::new(f)))
}

fn attentive_instance(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let n = steps(rng);
    let valid = 1 + rng.below(n);
    let d = 2 * D_H;
    let h = random_matrix(n, d, rng);
    let v = Vector::from(random_vec(d, rng));
    let w = random_vec(d, rng);
    let (_, cache) = attentive_pool(&h, &v, valid)?;
    let mut gv = Vector::zeros(d);
    let dh = attentive_pool_backward(&h, &v, &cache, &w, &mut gv)?;
    let theta: Vec<f64> = h.data().iter().chain(v.data()).copied().collect();
    let analytic: Vec<f64> = dh.data().iter().chain(gv.data()).copied().collect();
    let f = move |t: &[f64]| {
        let h = Matrix::from_vec(n, d, t[..n * d].to_vec()).expect("sized");
        let v = Vector::from(t[n * d..].to_vec());
        let (rs, _) = attentive_pool(&h, &v, valid).expect("valid > 0");
        rs.data().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    Ok((theta, analytic, Box::new(f)))
}

fn classifier_instance(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let d = 2 * D_H;
    let rs = random_vec(d, rng);
    let w_cs = random_matrix(CLASSES, d, rng);
    let gold = rng.below(CLASSES);
    let out = classifier_forward(&rs, &w_cs)?;
    let mut d_logits = out.probs.data().to_vec();
    d_logits[gold] -= 1.0;
    let mut gw = Matrix::zeros(CLASSES, d);
    let d_rs = classifier_backward(&rs, &w_cs, &d_logits, &mut gw)?;
    let theta: Vec<f64> = rs.iter().chain(w_cs.data()).copied().collect();
    let analytic: Vec<f64> = d_rs.iter().chain(gw.data()).copied().collect();
    let f = move |t: &[f64]| {
        let w = Matrix::from_vec(CLASSES, d, t[d..].to_vec()).expect("sized");
        let out = classifier_forward(&t[..d], &w).expect("shapes");
        -out.probs.data()[gold].ln()
    };
    Ok((theta, analytic, Box::new(f)))
}

fn model_instance(
    pooling: Pooling,
    use_gru: bool,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>, Objective)> {
    let cfg = ModelConfig {
        d_w: D_W,
        d_p: D_P,
        d_c: D_C,
        k: 2,
        d_h: D_H,
        pooling,
        use_gru,
        dropout_p: 0.0,
        l2_beta: 1e-3,
        class_names: (0..CLASSES).map(|c| format!("c{c}")).collect(),
        seed: rng.next_u64(),
    };
    let mut model = Model::new(cfg, VOCAB, POSITIONS)?;
    let seqs: Vec<EncodedSequence> = (0..3)
        .map(|_| {
            let n = steps(rng);
            let ids = |rng: &mut Rng, hi: usize| -> Vec<usize> {
                (0..n).map(|_| 1 + rng.below(hi - 1)).collect()
            };
            EncodedSequence {
                tokens: ids(rng, VOCAB),
                pos1: ids(rng, POSITIONS),
                pos2: ids(rng, POSITIONS),
            }
        })
        .collect();
    let batch = SequenceBatch::from_sequences(&seqs)?;
    let gold: Vec<usize> = (0..seqs.len()).map(|_| rng.below(CLASSES)).collect();
    {
        let values = model.params.values_mut();
        let mut flat = values.flatten();
        flat.iter_mut().for_each(|x| *x += rng.uniform(-0.3, 0.3));
        values.assign_flat(&flat)?;
        values.clear_pad_rows();
    }
    model.loss_and_grad(&batch, &gold, Mode::Eval)?;
    let theta = model.params.values.flatten();
    let analytic = model.params.grads.flatten();
    let f = move |t: &[f64]| {
        let mut m = model.clone();
        m.params.values_mut().assign_flat(t).expect("sized");
        m.loss(&batch, &gold).expect("finite loss")
    };
    Ok((theta, analytic, Box::new(f)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_blocks_pass() {
        let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(report.passed(), "{}", report.to_table());
        assert_eq!(report.results.len(), BLOCKS.len());
    }

    #[test]
    fn corruption_is_detected() {
        for block in ["conv_k2", "model_att"] {
            let cfg = GradcheckConfig {
                corrupt: Some(block.into()),
                ..GradcheckConfig::default()
            };
            let report = run_gradcheck(&cfg).unwrap();
            assert_eq!(report.failures(), vec![block]);
        }
    }

    #[test]
    fn deterministic() {
        let a = run_gradcheck(&GradcheckConfig::default()).unwrap();
        let b = run_gradcheck(&GradcheckConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_block() {
        let cfg = GradcheckConfig {
            corrupt: Some("nope".into()),
            ..GradcheckConfig::default()
        };
        assert!(matches!(run_gradcheck(&cfg), Err(Error::Config(_))));
    }
}
