use crate::tensor::{Scalar, Tensor};
use crate::{NnError, Result};

/// Row-wise log-softmax over the last dimension.
pub fn log_softmax<F: Scalar>(logits: &Tensor<F>) -> Tensor<F> {
    let (rows, k) = logits.as_2d();
    let mut y = logits.clone();
    let yd = y.data_mut();
    for r in 0..rows {
        let row = &mut yd[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for v in row.iter() {
            denom = denom + (*v - max).exp();
        }
        let lse = max + denom.ln();
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    y
}

/// Mean cross-entropy over frames with optional per-frame mask.
/// Returns (loss, dloss/dlogits) where grad = (softmax - onehot) / frames.
pub fn log_softmax_xent<F: Scalar>(
    logits: &Tensor<F>,
    targets: &[usize],
    mask: Option<&[bool]>,
) -> Result<(f64, Tensor<F>)> {
    let (rows, k) = logits.as_2d();
    if targets.len() != rows {
        return Err(NnError::ShapeMismatch(format!(
            "{} targets for {} frames",
            targets.len(),
            rows
        )));
    }
    if let Some(m) = mask {
        if m.len() != rows {
            return Err(NnError::ShapeMismatch("mask length".into()));
        }
    }
    for &t in targets {
        if t >= k {
            return Err(NnError::InvalidArg(format!(
                "target {t} out of range for {k} classes"
            )));
        }
    }
    let active = match mask {
        Some(m) => m.iter().filter(|&&b| b).count(),
        None => rows,
    };
    if active == 0 {
        return Err(NnError::EmptyInput("no unmasked frames".into()));
    }
    let lp = log_softmax(logits);
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    let gd = grad.data_mut();
    let inv = F::c(1.0 / active as f64);
    for r in 0..rows {
        if let Some(m) = mask {
            if !m[r] {
                continue;
            }
        }
        let row = &lp.data()[r * k..(r + 1) * k];
        loss -= row[targets[r]].f64();
        for j in 0..k {
            let p = row[j].exp();
            let onehot = if j == targets[r] { F::one() } else { F::zero() };
            gd[r * k + j] = (p - onehot) * inv;
        }
    }
    Ok((loss / active as f64, grad))
}
