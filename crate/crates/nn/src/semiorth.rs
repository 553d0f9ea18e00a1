use crate::tensor::{Scalar, Tensor};
use crate::{NnError, Result};

/// One floating-scale semi-orthogonal constraint step on M [rows x cols],
/// rows <= cols: M <- M - (1/(2*sigma^2)) (M M^T - sigma^2 I) M with
/// sigma^2 = trace(P P) / trace(P), P = M M^T.
pub fn semi_orthogonal_step<F: Scalar>(m: &mut Tensor<F>) -> Result<()> {
    let s = m.shape();
    if s.len() != 2 {
        return Err(NnError::ShapeMismatch("semi-orth wants a matrix".into()));
    }
    let (rows, cols) = (s[0], s[1]);
    if rows > cols {
        return Err(NnError::InvalidArg(format!(
            "semi-orth constrains M M^T, needs rows <= cols, got {rows}x{cols}"
        )));
    }
    let p = gram(m);
    let trace_p: f64 = (0..rows).map(|i| p[i * rows + i]).sum();
    if trace_p <= 0.0 {
        return Err(NnError::Degenerate("all-zero matrix".into()));
    }
    let trace_pp: f64 = p.iter().map(|v| v * v).sum();
    let sigma2 = trace_pp / trace_p;
    // Q = P - sigma^2 I; M -= (1/(2 sigma^2)) Q M
    let alpha = 1.0 / (2.0 * sigma2);
    let md = m.data_mut();
    let old: Vec<f64> = md.iter().map(|v| v.f64()).collect();
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                let q = p[i * rows + r] - if r == i { sigma2 } else { 0.0 };
                acc += q * old[r * cols + j];
            }
            md[i * cols + j] = F::c(old[i * cols + j] - alpha * acc);
        }
    }
    Ok(())
}

/// Relative deviation ||M M^T - sigma^2 I||_F / ||sigma^2 I||_F.
pub fn semi_orth_deviation<F: Scalar>(m: &Tensor<F>) -> f64 {
    let rows = m.shape()[0];
    let p = gram(m);
    let trace_p: f64 = (0..rows).map(|i| p[i * rows + i]).sum();
    if trace_p <= 0.0 {
        return f64::INFINITY;
    }
    let trace_pp: f64 = p.iter().map(|v| v * v).sum();
    let sigma2 = trace_pp / trace_p;
    let mut num = 0.0;
    for i in 0..rows {
        for j in 0..rows {
            let d = p[i * rows + j] - if i == j { sigma2 } else { 0.0 };
            num += d * d;
        }
    }
    (num / (rows as f64 * sigma2 * sigma2)).sqrt()
}

fn gram<F: Scalar>(m: &Tensor<F>) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let md = m.data();
    let mut p = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in i..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += md[i * cols + c].f64() * md[j * cols + c].f64();
            }
            p[i * rows + j] = acc;
            p[j * rows + i] = acc;
        }
    }
    p
}
