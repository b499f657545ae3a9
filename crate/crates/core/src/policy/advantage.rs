use crate::error::{Error, Result};

fn check_lengths(rewards: &[f64], values: &[f64], dones: &[bool]) -> Result<()> {
    if dones.len() != rewards.len() || values.len() != rewards.len() + 1 {
        return Err(Error::shape(format!(
            "advantage inputs: {} rewards, {} dones, {} values (need rewards + 1 values)",
            rewards.len(),
            dones.len(),
            values.len()
        )));
    }
    Ok(())
}

/// k-step advantage over one actor's segment.
///
/// `values[t]` is `V(s_t)` and `values[T]` bootstraps the state after the
/// segment. `dones[t]` marks that the episode ended with step `t`. Each
/// estimate sums at most `k` rewards, stops at a terminal (no bootstrap) and
/// bootstraps from `values[T]` when the segment ends first.
pub fn k_step_advantage(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, k: usize) -> Result<Vec<f64>> {
    check_lengths(rewards, values, dones)?;
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let n = rewards.len();
    let mut adv = Vec::with_capacity(n);
    for t in 0..n {
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut end = t;
        let mut terminal = false;
        while end < n && end < t + k {
            ret += discount * rewards[end];
            discount *= gamma;
            end += 1;
            if dones[end - 1] {
                terminal = true;
                break;
            }
        }
        if !terminal {
            ret += discount * values[end];
        }
        adv.push(ret - values[t]);
    }
    Ok(adv)
}

/// Generalised advantage estimation over one actor's segment.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    check_lengths(rewards, values, dones)?;
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Shift to mean 0 and scale to unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}
