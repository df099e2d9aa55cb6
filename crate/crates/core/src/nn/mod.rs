//! Dense dueling Q-network with hand-written reverse-mode gradients and an
//! Adam optimizer with a stepped learning-rate schedule.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{Checkpoint, CheckpointError};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{gemm_slices, MatRef, Matrix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
}

fn mismatch(expected: impl ToString, got: impl ToString) -> NnError {
    NnError::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Layer sizes of a dueling network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    /// Hidden widths of the shared trunk.
    pub trunk: Vec<usize>,
    /// Hidden width of each head.
    pub head_hidden: usize,
    pub actions: usize,
    /// Subtract the mean advantage before adding the value (off: plain V + A).
    #[serde(default)]
    pub mean_centered: bool,
}

impl NetworkSpec {
    /// Number of stacked frames fed to the network.
    pub const FRAMES: usize = 4;
    pub const LEAKY_SLOPE: f64 = 0.01;

    /// Trunk `(2O, O, 896, 512)`, 384-unit heads, `4·O` stacked inputs.
    pub fn dueling(observation_size: usize, actions: usize) -> Self {
        let o = observation_size;
        NetworkSpec {
            input: Self::FRAMES * o,
            trunk: vec![2 * o, o, 896, 512],
            head_hidden: 384,
            actions,
            mean_centered: false,
        }
    }

    /// `(inputs, outputs)` of every layer: trunk, advantage hidden and
    /// output, value hidden and output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut width = self.input;
        for &h in &self.trunk {
            dims.push((width, h));
            width = h;
        }
        dims.push((width, self.head_hidden));
        dims.push((self.head_hidden, self.actions));
        dims.push((width, self.head_hidden));
        dims.push((self.head_hidden, 1));
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Offset of the `inputs × outputs` row-major weight block.
    w: usize,
    /// Offset of the bias vector.
    b: usize,
}

impl Layer {
    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.w..self.w + self.inputs * self.outputs]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.b..self.b + self.outputs]
    }
}

/// Dueling Q-network. All parameters live in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations recorded by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    batch: usize,
    /// Input of every layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of the hidden layers (empty for output layers).
    pre: Vec<Matrix>,
    advantage: Option<Matrix>,
}

impl Tape {
    pub fn is_recorded(&self) -> bool {
        !self.inputs.is_empty()
    }
}

fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        NetworkSpec::LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        NetworkSpec::LEAKY_SLOPE
    }
}

impl QNetwork {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(spec);
        for layer in net.layers.clone() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut net.params[layer.w..layer.w + layer.inputs * layer.outputs] {
                *w = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(spec: NetworkSpec) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in spec.layer_dims() {
            let w = offset;
            let b = w + inputs * outputs;
            offset = b + outputs;
            layers.push(Layer { inputs, outputs, w, b });
        }
        QNetwork {
            spec,
            layers,
            params: vec![0.0; offset],
        }
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self, NnError> {
        let mut net = QNetwork::zeros(spec);
        if params.len() != net.params.len() {
            return Err(mismatch(net.params.len(), params.len()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.spec.input
    }

    pub fn n_actions(&self) -> usize {
        self.spec.actions
    }

    /// Weight of layer `layer` from input `i` to output `o`.
    pub fn weight_mut(&mut self, layer: usize, i: usize, o: usize) -> &mut f64 {
        let l = self.layers[layer];
        &mut self.params[l.w + i * l.outputs + o]
    }

    pub fn bias_mut(&mut self, layer: usize, o: usize) -> &mut f64 {
        let l = self.layers[layer];
        &mut self.params[l.b + o]
    }

    fn dense(&self, layer: Layer, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows, layer.outputs);
        let bias = layer.bias(&self.params);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        if x.rows == 1 {
            let w = layer.weights(&self.params);
            for (i, &xi) in x.data.iter().enumerate() {
                let row = &w[i * layer.outputs..(i + 1) * layer.outputs];
                out.data.iter_mut().zip(row).for_each(|(o, wij)| *o += xi * wij);
            }
            return out;
        }
        gemm_slices(
            1.0,
            MatRef::new(&x.data, x.rows, x.cols, false),
            MatRef::new(layer.weights(&self.params), layer.inputs, layer.outputs, false),
            1.0,
            &mut out.data,
            x.rows,
            layer.outputs,
        );
        out
    }

    fn run(&self, x: &Matrix, mut tape: Option<&mut Tape>) -> Result<Matrix, NnError> {
        if x.cols != self.spec.input {
            return Err(mismatch(
                format!("{} input columns", self.spec.input),
                format!("{} columns", x.cols),
            ));
        }
        let n_trunk = self.spec.trunk.len();
        let mut record = |input: &Matrix, pre: Option<&Matrix>| {
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(input.clone());
                t.pre.push(pre.cloned().unwrap_or_else(|| Matrix::zeros(0, 0)));
            }
        };
        let mut a = x.clone();
        for &layer in &self.layers[..n_trunk] {
            let z = self.dense(layer, &a);
            record(&a, Some(&z));
            a = z.clone();
            a.data.iter_mut().for_each(|v| *v = leaky(*v));
        }
        let heads = &self.layers[n_trunk..];
        let head = |hidden: Layer, out: Layer| {
            let z = self.dense(hidden, &a);
            let mut h = z.clone();
            h.data.iter_mut().for_each(|v| *v = leaky(*v));
            let y = self.dense(out, &h);
            (z, h, y)
        };
        let (za, ha, adv) = head(heads[0], heads[1]);
        let (zv, hv, val) = head(heads[2], heads[3]);
        record(&a, Some(&za));
        record(&ha, None);
        record(&a, Some(&zv));
        record(&hv, None);

        let mut q = adv.clone();
        for r in 0..q.rows {
            let v = val.data[r];
            let shift = if self.spec.mean_centered {
                adv.row(r).iter().sum::<f64>() / adv.cols as f64
            } else {
                0.0
            };
            q.row_mut(r).iter_mut().for_each(|x| *x += v - shift);
        }
        if let Some(t) = tape {
            t.batch = x.rows;
            t.advantage = Some(adv);
        }
        Ok(q)
    }

    /// Q-values for a batch of stacked observations (`batch × input`).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NnError> {
        self.run(x, None)
    }

    /// Forward pass that records the activations needed by [`backward`].
    ///
    /// [`backward`]: QNetwork::backward
    pub fn forward_recorded(&self, x: &Matrix) -> Result<(Matrix, Tape), NnError> {
        let mut tape = Tape::default();
        let q = self.run(x, Some(&mut tape))?;
        Ok((q, tape))
    }

    /// Q-values of a single stacked observation.
    pub fn q_values(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec());
        Ok(self.forward(&x)?.data)
    }

    /// Parameter gradient of a scalar loss given its gradient with respect
    /// to the Q-value matrix.
    pub fn backward(&self, tape: &Tape, dq: &Matrix) -> Result<Vec<f64>, NnError> {
        if !tape.is_recorded() {
            return Err(NnError::NoForwardRecorded);
        }
        if (dq.rows, dq.cols) != (tape.batch, self.spec.actions) {
            return Err(mismatch(
                format!("{}x{}", tape.batch, self.spec.actions),
                format!("{}x{}", dq.rows, dq.cols),
            ));
        }
        let mut grad = vec![0.0; self.params.len()];
        let n_trunk = self.spec.trunk.len();
        let batch = dq.rows;

        let mut d_adv = dq.clone();
        let mut d_val = Matrix::zeros(batch, 1);
        for r in 0..batch {
            let row_sum: f64 = dq.row(r).iter().sum();
            d_val.data[r] = row_sum;
            if self.spec.mean_centered {
                let mean = row_sum / dq.cols as f64;
                d_adv.row_mut(r).iter_mut().for_each(|v| *v -= mean);
            }
        }

        let trunk_width = self.layers[n_trunk].inputs;
        let mut d_trunk = Matrix::zeros(batch, trunk_width);
        for (hidden_idx, d_out) in [(n_trunk, d_adv), (n_trunk + 2, d_val)] {
            let out_idx = hidden_idx + 1;
            let d_h = self.layer_backward(out_idx, &tape.inputs[out_idx], &d_out, &mut grad, true);
            let d_z = activation_backward(d_h, &tape.pre[hidden_idx]);
            let d_in = self.layer_backward(hidden_idx, &tape.inputs[hidden_idx], &d_z, &mut grad, true);
            d_trunk.data.iter_mut().zip(&d_in.data).for_each(|(a, b)| *a += b);
        }

        let mut d_a = d_trunk;
        for idx in (0..n_trunk).rev() {
            let d_z = activation_backward(d_a, &tape.pre[idx]);
            d_a = self.layer_backward(idx, &tape.inputs[idx], &d_z, &mut grad, idx > 0);
        }
        Ok(grad)
    }

    /// Accumulates weight and bias gradients of one layer and returns the
    /// gradient with respect to its input when `need_input` is set.
    fn layer_backward(&self, idx: usize, input: &Matrix, d_out: &Matrix, grad: &mut [f64], need_input: bool) -> Matrix {
        let layer = self.layers[idx];
        let batch = input.rows;
        gemm_slices(
            1.0,
            MatRef::new(&input.data, batch, layer.inputs, true),
            MatRef::new(&d_out.data, batch, layer.outputs, false),
            1.0,
            &mut grad[layer.w..layer.w + layer.inputs * layer.outputs],
            layer.inputs,
            layer.outputs,
        );
        let gb = &mut grad[layer.b..layer.b + layer.outputs];
        for r in 0..batch {
            gb.iter_mut().zip(d_out.row(r)).for_each(|(g, d)| *g += d);
        }
        if !need_input {
            return Matrix::zeros(0, 0);
        }
        let mut d_in = Matrix::zeros(batch, layer.inputs);
        gemm_slices(
            1.0,
            MatRef::new(&d_out.data, batch, layer.outputs, false),
            MatRef::new(layer.weights(&self.params), layer.inputs, layer.outputs, true),
            0.0,
            &mut d_in.data,
            batch,
            layer.inputs,
        );
        d_in
    }
}

fn activation_backward(mut d: Matrix, pre: &Matrix) -> Matrix {
    d.data.iter_mut().zip(&pre.data).for_each(|(g, z)| *g *= leaky_grad(*z));
    d
}
