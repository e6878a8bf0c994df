//! Finite-difference oracle shared by unit tests.

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Central differences of `objective` with respect to every parameter of a
/// cloned model, reached through `params`.
pub fn param_fd<T, P, F>(model: &T, params: P, h: f64, objective: F) -> Vec<f64>
where
    T: Clone,
    P: Fn(&mut T) -> &mut crate::diffcore::ParamSet,
    F: Fn(&T) -> f64,
{
    let mut base = model.clone();
    let n = params(&mut base).total_size();
    (0..n)
        .map(|i| {
            let mut up = model.clone();
            params(&mut up).perturb(i, h);
            let mut down = model.clone();
            params(&mut down).perturb(i, -h);
            (objective(&up) - objective(&down)) / (2.0 * h)
        })
        .collect()
}
