//! Dense feedforward network on row-major batches.
//!
//! All parameters live in one flat vector so the optimizer and the gradient
//! checker can treat them uniformly; [`LayerSpec`] records where each layer's
//! weights, bias and snake frequency sit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    /// `x + sin²(βx)`
    Snake,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "snake" => Ok(Activation::Snake),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Snake => "snake",
            Activation::Identity => "identity",
        })
    }
}

#[inline]
fn act(kind: Activation, beta: f64, z: f64) -> f64 {
    match kind {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
        Activation::Snake => {
            let s = (beta * z).sin();
            z + s * s
        }
        Activation::Identity => z,
    }
}

/// `(∂a/∂z, ∂a/∂β)`.
#[inline]
fn act_grad(kind: Activation, beta: f64, z: f64, a: f64) -> (f64, f64) {
    match kind {
        // subgradient 0 at the kink
        Activation::Relu => (if z > 0.0 { 1.0 } else { 0.0 }, 0.0),
        Activation::Tanh => (1.0 - a * a, 0.0),
        Activation::Snake => {
            let s2 = (2.0 * beta * z).sin();
            (1.0 + beta * s2, z * s2)
        }
        Activation::Identity => (1.0, 0.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub learn_beta: bool,
    /// Offsets into the flat parameter vector.
    pub w_offset: usize,
    pub b_offset: usize,
    /// Present for snake layers only.
    pub beta_offset: Option<usize>,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Per-layer description used to build a network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerDef {
    pub outputs: usize,
    pub activation: Activation,
    pub beta: f64,
    pub learn_beta: bool,
}

impl Mlp {
    /// Zero-initialized network. The last layer must be an identity head.
    pub fn zeros(inputs: usize, defs: &[LayerDef]) -> Result<Self> {
        if inputs == 0 || defs.is_empty() || defs.iter().any(|d| d.outputs == 0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if defs.last().map(|d| d.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidArgument(
                "the output layer must use the identity activation".into(),
            ));
        }
        let mut layers = Vec::with_capacity(defs.len());
        let mut params = Vec::new();
        let mut fan_in = inputs;
        for def in defs {
            let w_offset = params.len();
            params.resize(w_offset + fan_in * def.outputs, 0.0);
            let b_offset = params.len();
            params.resize(b_offset + def.outputs, 0.0);
            let beta_offset = if def.activation == Activation::Snake {
                params.push(def.beta);
                Some(params.len() - 1)
            } else {
                None
            };
            layers.push(LayerSpec {
                inputs: fan_in,
                outputs: def.outputs,
                activation: def.activation,
                learn_beta: def.learn_beta && beta_offset.is_some(),
                w_offset,
                b_offset,
                beta_offset,
            });
            fan_in = def.outputs;
        }
        Ok(Mlp { layers, params })
    }

    /// Weights and biases uniform in `±1/√fan_in`; snake frequencies keep
    /// their configured value.
    pub fn init_uniform<R: Rng + ?Sized>(inputs: usize, defs: &[LayerDef], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(inputs, defs)?;
        for l in 0..net.layers.len() {
            let spec = net.layers[l].clone();
            let bound = 1.0 / (spec.inputs as f64).sqrt();
            for v in &mut net.params[spec.w_offset..spec.b_offset + spec.outputs] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Reassembles a network from a layout and flat parameters.
    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let mut expect = 0;
        let mut fan_in = layers.first().map(|l| l.inputs).unwrap_or(0);
        for l in &layers {
            if l.inputs != fan_in || l.w_offset != expect || l.b_offset != expect + l.weight_len() {
                return Err(Error::InvalidArgument("inconsistent layer layout".into()));
            }
            expect = l.b_offset + l.outputs;
            match (l.activation, l.beta_offset) {
                (Activation::Snake, Some(o)) if o == expect => expect += 1,
                (Activation::Snake, _) => {
                    return Err(Error::InvalidArgument("snake layer without frequency".into()))
                }
                (_, None) => {}
                (_, Some(_)) => {
                    return Err(Error::InvalidArgument("frequency on a non-snake layer".into()))
                }
            }
            fan_in = l.outputs;
        }
        if layers.is_empty() || expect != params.len() {
            return Err(Error::DimensionMismatch {
                expected: expect,
                got: params.len(),
            });
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::InvalidArgument(
                "the output layer must use the identity activation".into(),
            ));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Mlp { layers, params })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.w_offset..l.b_offset]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.b_offset..l.b_offset + l.outputs]
    }

    pub fn beta(&self, layer: usize) -> Option<f64> {
        self.layers[layer].beta_offset.map(|o| self.params[o])
    }

    /// Mask that is `false` for frozen snake frequencies.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.params.len()];
        for l in &self.layers {
            if let (Some(o), false) = (l.beta_offset, l.learn_beta) {
                mask[o] = false;
            }
        }
        mask
    }

    /// Forward pass over `batch` rows of `input` (row-major `batch × N`).
    pub fn forward(&self, input: &[f64], batch: usize) -> Result<(Vec<f64>, Cache)> {
        if input.len() != batch * self.input_dim() || batch == 0 {
            return Err(Error::DimensionMismatch {
                expected: batch * self.input_dim(),
                got: input.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (i, l) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let mut z = Vec::with_capacity(batch * l.outputs);
            for _ in 0..batch {
                z.extend_from_slice(self.bias(i));
            }
            gemm(
                batch,
                l.inputs,
                l.outputs,
                x,
                false,
                &self.params[l.w_offset..l.b_offset],
                false,
                &mut z,
                1.0,
            );
            let beta = self.beta(i).unwrap_or(1.0);
            let a: Vec<f64> = if l.activation == Activation::Identity {
                z.clone()
            } else {
                z.iter().map(|v| act(l.activation, beta, *v)).collect()
            };
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("forward activations"));
            }
            pre.push(z);
            acts.push(a);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, Cache { batch, acts, pre }))
    }

    /// Gradient of the loss w.r.t. every parameter, given `∂L/∂output`.
    /// Frozen snake frequencies get a zero gradient.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Result<Vec<f64>> {
        let batch = cache.batch;
        if cache.pre.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&cache.pre)
                .any(|(l, z)| z.len() != batch * l.outputs)
        {
            return Err(Error::InvalidArgument("cache does not match network".into()));
        }
        if grad_out.len() != batch * self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.output_dim(),
                got: grad_out.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut da = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            let a = &cache.acts[i + 1];
            let beta = self.beta(i).unwrap_or(1.0);
            let mut dbeta = 0.0;
            let dz: Vec<f64> = if l.activation == Activation::Identity {
                da
            } else {
                da.iter()
                    .zip(z)
                    .zip(a)
                    .map(|((g, z), a)| {
                        let (dz, db) = act_grad(l.activation, beta, *z, *a);
                        dbeta += g * db;
                        g * dz
                    })
                    .collect()
            };
            let x = &cache.acts[i];
            // dW = Xᵀ dZ
            gemm(
                l.inputs,
                batch,
                l.outputs,
                x,
                true,
                &dz,
                false,
                &mut grads[l.w_offset..l.b_offset],
                0.0,
            );
            let db = &mut grads[l.b_offset..l.b_offset + l.outputs];
            for row in dz.chunks_exact(l.outputs) {
                for (b, v) in db.iter_mut().zip(row) {
                    *b += v;
                }
            }
            if let Some(o) = l.beta_offset {
                grads[o] = if l.learn_beta { dbeta } else { 0.0 };
            }
            if i > 0 {
                // dX = dZ Wᵀ
                let mut dx = vec![0.0; batch * l.inputs];
                gemm(
                    batch,
                    l.outputs,
                    l.inputs,
                    &dz,
                    false,
                    &self.params[l.w_offset..l.b_offset],
                    true,
                    &mut dx,
                    0.0,
                );
                da = dx;
            } else {
                da = Vec::new();
            }
        }
        Ok(grads)
    }
}

/// Activations and pre-activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    batch: usize,
    /// `acts[0]` is the input, `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Pre-activations of layer `l`.
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }

    /// Output of layer `l`.
    pub fn activation(&self, l: usize) -> &[f64] {
        &self.acts[l + 1]
    }
}

/// `C ← op(A)·op(B) + β_c C` for row-major operands, `op(A)` is `m × k` and
/// `op(B)` is `k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta_c: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta_c,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
