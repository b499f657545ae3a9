use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::Action;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Softmax policy over discrete actions, parameterised by logits.
pub mod categorical {
    use rand::Rng;

    pub fn log_probs(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.iter().map(|l| l - lse).collect()
    }

    pub fn probs(logits: &[f64]) -> Vec<f64> {
        log_probs(logits).into_iter().map(f64::exp).collect()
    }

    pub fn log_prob(logits: &[f64], action: usize) -> f64 {
        log_probs(logits)[action]
    }

    pub fn entropy(logits: &[f64]) -> f64 {
        log_probs(logits).iter().map(|lp| -lp.exp() * lp).sum()
    }

    pub fn greedy(logits: &[f64]) -> usize {
        logits
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &l)| if l > best.1 { (i, l) } else { best },
            )
            .0
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let p = probs(logits);
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    /// d log p(action) / d logits, added into `out` with weight `scale`.
    pub fn accumulate_log_prob_grad(logits: &[f64], action: usize, scale: f64, out: &mut [f64]) {
        for (i, (o, p)) in out.iter_mut().zip(probs(logits)).enumerate() {
            let onehot = if i == action { 1.0 } else { 0.0 };
            *o += scale * (onehot - p);
        }
    }

    /// d H / d logits, added into `out` with weight `scale`.
    pub fn accumulate_entropy_grad(logits: &[f64], scale: f64, out: &mut [f64]) {
        let lp = log_probs(logits);
        let h: f64 = lp.iter().map(|l| -l.exp() * l).sum();
        for (o, l) in out.iter_mut().zip(&lp) {
            *o += scale * (-l.exp() * (l + h));
        }
    }
}

/// Diagonal Gaussian with a state-independent, clamped log standard deviation.
pub mod gaussian {
    use super::{HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN};

    pub fn clamp_log_std(log_std: f64) -> f64 {
        log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    fn inside(log_std: f64) -> f64 {
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std) {
            1.0
        } else {
            0.0
        }
    }

    pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(log_std)
            .zip(action)
            .map(|((m, ls), a)| {
                let ls = clamp_log_std(*ls);
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum()
    }

    pub fn entropy(log_std: &[f64]) -> f64 {
        log_std.iter().map(|ls| clamp_log_std(*ls) + 0.5 + HALF_LN_2PI).sum()
    }

    /// Adds `scale * d log p / d mean` into `d_mean` and
    /// `scale * d log p / d log_std` into `d_log_std`.
    pub fn accumulate_log_prob_grad(
        mean: &[f64],
        log_std: &[f64],
        action: &[f64],
        scale: f64,
        d_mean: &mut [f64],
        d_log_std: &mut [f64],
    ) {
        for i in 0..mean.len() {
            let ls = clamp_log_std(log_std[i]);
            let var = (2.0 * ls).exp();
            let diff = action[i] - mean[i];
            d_mean[i] += scale * diff / var;
            d_log_std[i] += scale * inside(log_std[i]) * (diff * diff / var - 1.0);
        }
    }

    pub fn accumulate_entropy_grad(log_std: &[f64], scale: f64, d_log_std: &mut [f64]) {
        for (d, ls) in d_log_std.iter_mut().zip(log_std) {
            *d += scale * inside(*ls);
        }
    }
}

/// Distribution parameters for one state.
#[derive(Debug, Clone, Copy)]
pub enum Head<'a> {
    Categorical { logits: &'a [f64] },
    Gaussian { mean: &'a [f64], log_std: &'a [f64] },
}

impl Head<'_> {
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (Head::Categorical { logits }, Action::Discrete(a)) if *a < logits.len() => {
                Ok(categorical::log_prob(logits, *a))
            }
            (Head::Gaussian { mean, log_std }, Action::Continuous(a)) if a.len() == mean.len() => {
                Ok(gaussian::log_prob(mean, log_std, a))
            }
            _ => Err(Error::shape(format!("action {action:?} does not fit the policy head"))),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Head::Categorical { logits } => categorical::entropy(logits),
            Head::Gaussian { log_std, .. } => gaussian::entropy(log_std),
        }
    }

    /// Most likely action: argmax logit or the Gaussian mean.
    pub fn mode(&self) -> Action {
        match self {
            Head::Categorical { logits } => Action::Discrete(categorical::greedy(logits)),
            Head::Gaussian { mean, .. } => Action::Continuous(mean.to_vec()),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match self {
            Head::Categorical { logits } => logits.iter().all(|v| v.is_finite()),
            Head::Gaussian { mean, log_std } => mean.iter().chain(log_std.iter()).all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: "policy head parameters".into(),
            })
        }
    }
}

/// Draws an action and returns it with its exact log-probability.
pub fn sample_and_logprob<R: Rng + ?Sized>(head: Head<'_>, rng: &mut R) -> Result<(Action, f64)> {
    head.check_finite()?;
    let action = match head {
        Head::Categorical { logits } => Action::Discrete(categorical::sample(logits, rng)),
        Head::Gaussian { mean, log_std } => Action::Continuous(
            mean.iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let eps: f64 = rng.sample(StandardNormal);
                    m + gaussian::clamp_log_std(*ls).exp() * eps
                })
                .collect(),
        ),
    };
    let lp = head.log_prob(&action)?;
    Ok((action, lp))
}
