//! Dense feed-forward networks with hand-written forward and backward passes.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as a
//! row-major `out x in` weight block followed by its `out` biases. Batches are
//! row-major `batch x dim` slices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    /// Start of this layer's weights in the flat parameter vector.
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.input * self.output
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.output
    }

    pub fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Activations retained by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Input to each layer (for the layer after the gate this is the gated output).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
    /// Gate rows applied at `gated_layer`, `batch x width`.
    gates: Option<(usize, Vec<f64>)>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }

    /// Post-activation, post-gate output of hidden layer `layer`.
    pub fn hidden(&self, layer: usize) -> &[f64] {
        &self.inputs[layer + 1]
    }

    pub fn gates(&self) -> Option<&[f64]> {
        self.gates.as_ref().map(|(_, g)| g.as_slice())
    }
}

/// Scale factor applied to the gate inside the backward pass. Anything other
/// than `1.0` produces deliberately wrong gradients for fault-injection checks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GateBackward(pub f64);

impl Mlp {
    /// `sizes` lists every layer width from input to output. Hidden layers use
    /// a rectifier; the output layer is linear. Parameters start at zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::shape("a network needs at least an input and an output width"));
        }
        if let Some(z) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::shape(format!("layer width {z} is zero")));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for (k, w) in sizes.windows(2).enumerate() {
            let activation = if k + 2 == sizes.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let shape = LayerShape {
                input: w[0],
                output: w[1],
                activation,
                offset,
            };
            offset += shape.param_len();
            layers.push(shape);
        }
        Ok(Self {
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Orthogonal weights scaled by `hidden_gain` on hidden layers and
    /// `output_gain` on the output layer; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = net.layers.len();
        for k in 0..n_layers {
            let shape = net.layers[k];
            let gain = if k + 1 == n_layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(shape.output, shape.input, rng);
            for (dst, src) in net.params[shape.offset..shape.bias_offset()].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn from_parts(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self> {
        let mut offset = 0;
        for (k, l) in layers.iter().enumerate() {
            if l.offset != offset {
                return Err(Error::shape(format!("layer {k} offset {} expected {offset}", l.offset)));
            }
            if k > 0 && layers[k - 1].output != l.input {
                return Err(Error::shape(format!(
                    "layer {k} input {} does not match previous output {}",
                    l.input,
                    layers[k - 1].output
                )));
            }
            offset += l.param_len();
        }
        if layers.is_empty() || offset != params.len() {
            return Err(Error::shape(format!(
                "parameter vector has {} entries, layers need {offset}",
                params.len()
            )));
        }
        Ok(Self { layers, params })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Human-readable location of a flat parameter index.
    pub fn describe_param(&self, index: usize) -> String {
        for (k, l) in self.layers.iter().enumerate() {
            if index < l.bias_offset() && index >= l.offset {
                let r = index - l.offset;
                return format!("layer {k} weight[{}, {}]", r / l.input, r % l.input);
            }
            if index >= l.bias_offset() && index < l.offset + l.param_len() {
                return format!("layer {k} bias[{}]", index - l.bias_offset());
            }
        }
        format!("parameter {index}")
    }

    /// Index of the layer owning flat parameter `index`.
    pub fn layer_of_param(&self, index: usize) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| index >= l.offset && index < l.offset + l.param_len())
    }

    /// Batched forward pass. When `gates` is given as `(layer, rows)`, the
    /// rectified output of hidden layer `layer` is multiplied elementwise by
    /// row `b` of `rows` for batch element `b`.
    pub fn forward(&self, states: &[f64], gates: Option<(usize, &[f64])>) -> Result<ForwardCache> {
        let in_dim = self.input_dim();
        if !states.len().is_multiple_of(in_dim) {
            return Err(Error::shape(format!(
                "state batch of {} values is not a multiple of input width {in_dim}",
                states.len()
            )));
        }
        let batch = states.len() / in_dim;
        if let Some((layer, rows)) = gates {
            if layer + 1 >= self.layers.len() {
                return Err(Error::shape(format!("gated layer {layer} is not a hidden layer")));
            }
            let width = self.layers[layer].output;
            if rows.len() != batch * width {
                return Err(Error::shape(format!(
                    "gate matrix has {} values, expected {batch} rows of width {width}",
                    rows.len()
                )));
            }
        }

        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(states.to_vec());
        for (k, l) in self.layers.iter().enumerate() {
            let x = &inputs[k];
            let z = self.affine(l, x, batch);
            let mut h: Vec<f64> = match l.activation {
                Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            if let Some((layer, rows)) = gates {
                if layer == k {
                    for (hv, g) in h.iter_mut().zip(rows) {
                        *hv *= g;
                    }
                }
            }
            pre.push(z);
            inputs.push(h);
        }
        let output = inputs.pop().expect("at least one layer");
        Ok(ForwardCache {
            batch,
            inputs,
            pre,
            gates: gates.map(|(l, r)| (l, r.to_vec())),
            output,
        })
    }

    fn affine(&self, l: &LayerShape, x: &[f64], batch: usize) -> Vec<f64> {
        let w = &self.params[l.offset..l.bias_offset()];
        let b = &self.params[l.bias_offset()..l.offset + l.param_len()];
        let mut out = Vec::with_capacity(batch * l.output);
        for row in x.chunks_exact(l.input) {
            for (o, bias) in b.iter().enumerate() {
                let wr = &w[o * l.input..(o + 1) * l.input];
                let mut acc = *bias;
                for (wi, xi) in wr.iter().zip(row) {
                    acc += wi * xi;
                }
                out.push(acc);
            }
        }
        out
    }

    /// Parameter gradients for upstream gradient `d_output` (`batch x out`),
    /// summed over the batch. Gate rows recorded in `cache` mask the gradient
    /// flowing into the gated layer.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> Result<Vec<f64>> {
        self.backward_with(cache, d_output, GateBackward(1.0))
    }

    pub(crate) fn backward_with(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        gate_fault: GateBackward,
    ) -> Result<Vec<f64>> {
        let batch = cache.batch;
        if cache.pre.len() != self.layers.len() {
            return Err(Error::shape("forward cache does not belong to this network"));
        }
        if d_output.len() != batch * self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient has {} values, expected {batch} x {}",
                d_output.len(),
                self.output_dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        // gradient w.r.t. the (post-gate) output of the current layer
        let mut d_h = d_output.to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = self.layers[k];
            if let Some((layer, rows)) = &cache.gates {
                if *layer == k {
                    for (d, g) in d_h.iter_mut().zip(rows) {
                        *d *= g * gate_fault.0;
                    }
                }
            }
            let d_z: Vec<f64> = match l.activation {
                Activation::Relu => d_h
                    .iter()
                    .zip(&cache.pre[k])
                    .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                    .collect(),
                Activation::Identity => d_h,
            };
            let x = &cache.inputs[k];
            let (gw, gb) = grads[l.offset..l.offset + l.param_len()].split_at_mut(l.weight_len());
            for (dz_row, x_row) in d_z.chunks_exact(l.output).zip(x.chunks_exact(l.input)) {
                for (o, &dz) in dz_row.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    gb[o] += dz;
                    for (g, xi) in gw[o * l.input..(o + 1) * l.input].iter_mut().zip(x_row) {
                        *g += dz * xi;
                    }
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[l.offset..l.bias_offset()];
            let mut d_x = vec![0.0; batch * l.input];
            for (dz_row, dx_row) in d_z.chunks_exact(l.output).zip(d_x.chunks_exact_mut(l.input)) {
                for (o, &dz) in dz_row.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    for (dx, wi) in dx_row.iter_mut().zip(&w[o * l.input..(o + 1) * l.input]) {
                        *dx += dz * wi;
                    }
                }
            }
            d_h = d_x;
        }
        Ok(grads)
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is the
/// smaller count), row-major.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, m, transpose) = if rows <= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    // n orthonormal vectors of length m via modified Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, b) in basis.iter().enumerate() {
        for (j, &val) in b.iter().enumerate() {
            if transpose {
                out[j * cols + i] = val;
            } else {
                out[i * cols + j] = val;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = seeded(1, 0);
        let w = orthogonal_matrix(4, 9, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..9).map(|k| w[i * 9 + k] * w[j * 9 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let w = orthogonal_matrix(9, 4, &mut rng);
        for i in 0..4 {
            let dot: f64 = (0..9).map(|k| w[k * 4 + i] * w[k * 4 + i]).sum();
            assert!((dot - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shapes_chain() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(net.layers()[1].offset, 20);
        assert_eq!(net.layers()[0].activation, Activation::Relu);
        assert_eq!(net.layers()[1].activation, Activation::Identity);
        assert!(Mlp::zeros(&[3]).is_err());
        assert_eq!(net.describe_param(21), "layer 1 weight[0, 1]");
        assert_eq!(net.describe_param(16), "layer 0 bias[1]");
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert!(net.forward(&[1.0; 4], None).is_err());
        assert!(net.forward(&[1.0; 6], Some((0, &[1.0; 4]))).is_err());
        assert!(net.forward(&[1.0; 3], Some((1, &[1.0; 2]))).is_err());
        let cache = net.forward(&[1.0; 3], None).unwrap();
        assert!(net.backward(&cache, &[1.0; 3]).is_err());
    }

    #[test]
    fn linear_layer_by_hand() {
        // 2 -> 1 identity layer: y = w0 x0 + w1 x1 + b
        let net = Mlp::from_parts(
            vec![LayerShape {
                input: 2,
                output: 1,
                activation: Activation::Identity,
                offset: 0,
            }],
            vec![2.0, -1.0, 0.5],
        )
        .unwrap();
        let cache = net.forward(&[3.0, 4.0], None).unwrap();
        assert_eq!(cache.output(), &[2.5]);
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g, vec![3.0, 4.0, 1.0]);
    }
}
