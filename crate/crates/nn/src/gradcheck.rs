//! Central finite-difference gradient checking in 64-bit precision.

/// Numeric gradient of `f` at `x` for the given coordinates, central
/// differences with step `eps`.
pub fn central_diff<Func>(mut f: Func, x: &[f64], coords: &[usize], eps: f64) -> Vec<f64>
where
    Func: FnMut(&[f64]) -> f64,
{
    let mut buf = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = buf[i];
        buf[i] = orig + eps;
        let fp = f(&buf);
        buf[i] = orig - eps;
        let fm = f(&buf);
        buf[i] = orig;
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

/// Relative error |a - n| / max(|a| + |n|, 1e-6) per coordinate, maxed.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Checks analytic gradients of `f` at `x0` against central differences on
/// all coordinates. Returns the max relative error.
pub fn gradient_check<Func>(f: Func, x0: &[f64], analytic: &[f64], eps: f64) -> f64
where
    Func: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..x0.len()).collect();
    gradient_check_subset(f, x0, analytic, &coords, eps)
}

/// Same, restricted to a coordinate subset (for large models).
pub fn gradient_check_subset<Func>(
    f: Func,
    x0: &[f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
) -> f64
where
    Func: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), analytic.len());
    let numeric = central_diff(f, x0, coords, eps);
    let picked: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    max_rel_error(&picked, &numeric)
}
