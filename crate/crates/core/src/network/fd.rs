/// Central-difference gradient estimate of `loss` at `params`.
pub fn finite_difference_gradients<F>(params: &[f64], mut loss: F, epsilon: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let up = loss(&probe);
        probe[i] = orig - epsilon;
        let down = loss(&probe);
        probe[i] = orig;
        grads.push((up - down) / (2.0 * epsilon));
    }
    grads
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps entries that are zero
/// analytically, and only round-off numerically, from reading as large errors.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
