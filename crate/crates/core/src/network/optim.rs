use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hp: &AdamParams) {
    assert_eq!(params.len(), grads.len(), "adam: parameter/gradient length");
    assert_eq!(params.len(), state.m.len(), "adam: state length");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropParams {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmsPropParams {
    fn default() -> Self {
        Self {
            lr: 7e-4,
            alpha: 0.99,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub mean_square: Vec<f64>,
    pub step: u64,
}

impl RmsPropState {
    pub fn new(len: usize) -> Self {
        Self {
            mean_square: vec![0.0; len],
            step: 0,
        }
    }
}

/// RMSProp with epsilon inside the square root: `p -= lr * g / sqrt(ms + eps)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut RmsPropState, hp: &RmsPropParams) {
    assert_eq!(params.len(), grads.len(), "rmsprop: parameter/gradient length");
    assert_eq!(params.len(), state.mean_square.len(), "rmsprop: state length");
    state.step += 1;
    for ((p, &g), ms) in params.iter_mut().zip(grads).zip(state.mean_square.iter_mut()) {
        *ms = hp.alpha * *ms + (1.0 - hp.alpha) * g * g;
        *p -= hp.lr * g / (*ms + hp.eps).sqrt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamParams::default());
        assert_eq!(p, vec![0.3, -1.2]);
        let mut r = RmsPropState::new(2);
        rmsprop_step(&mut p, &[0.0, 0.0], &mut r, &RmsPropParams::default());
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let hp = AdamParams {
            lr: 1e-3,
            ..AdamParams::default()
        };
        adam_step(&mut p, &[0.5], &mut s, &hp);
        // m_hat = 0.5, v_hat = 0.25 -> -1e-3 * 0.5 / (0.5 + 1e-8)
        let want = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
        assert!((p[0] + 1e-3).abs() < 1e-10);
    }

    // Scalar reference written independently from the vectorised update.
    fn adam_reference(mut theta: f64, g: f64, steps: u32, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        theta
    }

    #[test]
    fn adam_matches_scalar_reference() {
        let hp = AdamParams {
            lr: 1e-3,
            ..AdamParams::default()
        };
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        for _ in 0..2 {
            adam_step(&mut p, &[0.7], &mut s, &hp);
        }
        assert!((p[0] - adam_reference(1.0, 0.7, 2, 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut p = vec![0.0];
        let mut s = RmsPropState::new(1);
        rmsprop_step(&mut p, &[1.0], &mut s, &RmsPropParams::default());
        let want = -7e-4 / (0.01f64 + 1e-5).sqrt();
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_matches_scalar_reference() {
        let grads = [1.0, -0.5, 0.25, 2.0, 0.0, -1.0, 0.3, 0.3, -0.7, 1.1];
        let mut p = vec![0.5];
        let mut s = RmsPropState::new(1);
        let hp = RmsPropParams::default();
        let (mut theta, mut ms) = (0.5f64, 0.0f64);
        for g in grads {
            rmsprop_step(&mut p, &[g], &mut s, &hp);
            ms = 0.99 * ms + 0.01 * g * g;
            theta -= 7e-4 * g / (ms + 1e-5).sqrt();
        }
        assert!((p[0] - theta).abs() < 1e-12);
    }
}
