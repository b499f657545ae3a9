//! Action distributions, advantage estimators and the actor-critic losses.

mod advantage;
mod dist;
mod loss;

pub use advantage::{gae, k_step_advantage, normalize_advantages};
pub use dist::{categorical, gaussian, sample_and_logprob, Head, LOG_STD_MAX, LOG_STD_MIN};
pub use loss::{a2c_loss, ppo_clip_loss, LossCoefs, LossGrads, LossTerms};
