use serde::Serialize;

/// Coordinates whose analytic gradient is at most this are not compared.
pub const MIN_GRAD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    /// Coordinates compared (those with `|g| > 1e-8`).
    pub checked: usize,
}

/// Central-difference check of `analytic` against `f` on the given coordinates.
///
/// Relative error is `|g - fd| / max(|g|, |fd|)`.
pub fn fd_gradient_check<F>(mut f: F, theta: &[f64], analytic: &[f64], eps: f64, coords: &[usize]) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
    let mut x = theta.to_vec();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_coord: None,
        checked: 0,
    };
    for &i in coords {
        let g = analytic[i];
        if g.abs() <= MIN_GRAD {
            continue;
        }
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let rel = (g - fd).abs() / g.abs().max(fd.abs());
        out.checked += 1;
        if rel > out.max_rel_error || out.worst_coord.is_none() {
            out.max_rel_error = out.max_rel_error.max(rel);
            out.worst_coord = Some(i);
        }
    }
    out
}
