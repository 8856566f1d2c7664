/// Relative gradient error `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss_fn` around
/// `theta` and returns the largest relative error.
///
/// `coords` restricts the check to a subset of coordinates; `None` checks all
/// of them. `loss_fn` must be deterministic.
pub fn finite_diff_check<F>(mut loss_fn: F, theta: &[f64], analytic: &[f64], eps: f64, coords: Option<&[usize]>) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "theta/gradient length mismatch");
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        probe[i] = theta[i] + eps;
        let plus = loss_fn(&probe);
        probe[i] = theta[i] - eps;
        let minus = loss_fn(&probe);
        probe[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
