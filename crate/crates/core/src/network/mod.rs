//! Actor and critic networks, optimizers, a finite-difference gradient oracle
//! and parameter checkpoints.

mod checkpoint;
mod fd;
mod mlp;
mod optim;

pub use checkpoint::{Checkpoint, NetworkRecord};
pub use fd::{finite_difference_gradients, relative_error};
pub(crate) use mlp::GateBackward;
pub use mlp::{Activation, ForwardCache, LayerShape, Mlp};
pub use optim::{adam_step, rmsprop_step, AdamParams, AdamState, RmsPropParams, RmsPropState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Chromosome;

pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
pub const VALUE_OUTPUT_GAIN: f64 = 1.0;

/// Actor MLP whose hidden layer `gated_layer` is multiplied by a binary gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedNetwork {
    mlp: Mlp,
    gated_layer: usize,
}

impl GatedNetwork {
    pub fn new(mlp: Mlp, gated_layer: usize) -> Result<Self> {
        if gated_layer + 1 >= mlp.layers().len() {
            return Err(Error::shape(format!(
                "gated layer {gated_layer} is not a hidden layer of a {}-layer network",
                mlp.layers().len()
            )));
        }
        Ok(Self { mlp, gated_layer })
    }

    /// Orthogonal init, gate on the last hidden layer.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mlp = Mlp::orthogonal(sizes, HIDDEN_GAIN, POLICY_OUTPUT_GAIN, rng)?;
        let gated = mlp.layers().len().saturating_sub(2);
        Self::new(mlp, gated)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn gated_layer(&self) -> usize {
        self.gated_layer
    }

    /// Width of the gated layer, i.e. the chromosome length.
    pub fn gate_width(&self) -> usize {
        self.mlp.layers()[self.gated_layer].output
    }

    pub fn forward_ungated(&self, states: &[f64]) -> Result<ForwardCache> {
        self.mlp.forward(states, None)
    }

    /// `gates` holds one gate row per batch element, row-major.
    pub fn forward_gated(&self, states: &[f64], gates: &[f64]) -> Result<ForwardCache> {
        self.mlp.forward(states, Some((self.gated_layer, gates)))
    }

    /// Forward with the same chromosome gating every batch element.
    pub fn forward_uniform(&self, states: &[f64], gate: &Chromosome) -> Result<ForwardCache> {
        if gate.len() != self.gate_width() {
            return Err(Error::shape(format!(
                "chromosome has {} genes, gated layer has {} units",
                gate.len(),
                self.gate_width()
            )));
        }
        let batch = states.len() / self.mlp.input_dim().max(1);
        let row = gate.to_gate();
        let rows: Vec<f64> = row.iter().copied().cycle().take(batch * row.len()).collect();
        self.forward_gated(states, &rows)
    }

    /// Gradients with respect to every actor parameter, summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        self.mlp.backward(cache, upstream)
    }

    /// Backward pass of an update through the elite. The cache must come from
    /// a forward pass in which every row was gated by `elite_gate`.
    pub fn backward_elite(&self, cache: &ForwardCache, upstream: &[f64], elite_gate: &Chromosome) -> Result<Vec<f64>> {
        let gate = elite_gate.to_gate();
        let rows = cache
            .gates()
            .ok_or_else(|| Error::shape("backward_elite needs a gated forward cache"))?;
        if gate.is_empty() || rows.chunks(gate.len()).any(|r| r != gate.as_slice()) {
            return Err(Error::shape("forward cache was not computed under the elite gate"));
        }
        self.mlp.backward(cache, upstream)
    }

    pub(crate) fn backward_faulty(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        fault: GateBackward,
    ) -> Result<Vec<f64>> {
        self.mlp.backward_with(cache, upstream, fault)
    }
}

/// Ungated state-value network with a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNetwork {
    mlp: Mlp,
}

impl CriticNetwork {
    pub fn new(mlp: Mlp) -> Result<Self> {
        if mlp.output_dim() != 1 {
            return Err(Error::shape(format!(
                "critic output width is {}, must be 1",
                mlp.output_dim()
            )));
        }
        Ok(Self { mlp })
    }

    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::new(Mlp::orthogonal(sizes, HIDDEN_GAIN, VALUE_OUTPUT_GAIN, rng)?)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn forward(&self, states: &[f64]) -> Result<ForwardCache> {
        self.mlp.forward(states, None)
    }

    pub fn values(&self, states: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(states)?.into_output())
    }

    pub fn backward(&self, cache: &ForwardCache, d_values: &[f64]) -> Result<Vec<f64>> {
        self.mlp.backward(cache, d_values)
    }
}
