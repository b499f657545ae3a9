//! Genetic-gated actor-critic training.
//!
//! A population of binary gate vectors masks the last hidden layer of one
//! shared actor network. Each gate row drives its own actor slot; episode
//! returns rank the rows, the best row becomes the elite that the gradient
//! update is computed under, and the rest are bred by crossover and mutation.

pub mod agent;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod genome;
pub mod gradcheck;
pub mod network;
pub mod plotdata;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod trainer;

pub use error::{Error, Result};
