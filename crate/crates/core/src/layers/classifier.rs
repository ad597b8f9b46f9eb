use crate::error::{Error, Result};
use crate::tensor::{softmax, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct ClassifierOutput {
    pub logits: Vector,
    pub probs: Vector,
}

/// `s = softmax(W_cs · rs)`.
pub fn classifier_forward(rs: &[f64], w_cs: &Matrix) -> Result<ClassifierOutput> {
    if rs.len() != w_cs.cols() {
        return Err(Error::dim(format!(
            "classifier expects {} features, got {}",
            w_cs.cols(),
            rs.len()
        )));
    }
    let logits = w_cs.matvec(rs)?;
    let probs = softmax(logits.data())?;
    Ok(ClassifierOutput { logits, probs })
}

/// Given `d_logits`, accumulates `d_logits ⊗ rs` into `grad_w` and returns `d_rs`.
pub fn classifier_backward(
    rs: &[f64],
    w_cs: &Matrix,
    d_logits: &[f64],
    grad_w: &mut Matrix,
) -> Result<Vec<f64>> {
    grad_w.add_outer(d_logits, rs)?;
    let mut d_rs = vec![0.0; rs.len()];
    w_cs.matvec_t_into(d_logits, &mut d_rs)?;
    Ok(d_rs)
}
