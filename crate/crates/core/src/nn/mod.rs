//! Residual feedforward network with hand-written backpropagation.
//!
//! Hidden layers share one width and one activation; the output layer is
//! linear. With `residual` set, a fixed selection of input features
//! (`identity_slice`) is added to the network output, so the layers only
//! have to model the departure from identity.

mod adam;
mod checkpoint;
mod grid;
mod train;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WdpdError};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use grid::{evaluate_candidates, grid_search, select_best, CandidateResult, GridOutcome, SearchSpace};
pub use train::{
    evaluate, split_rows, train, train_from, train_on, train_partitions, Dataset, Partitions, Split, TrainConfig,
    TrainOutcome, TrainingHistory, MIN_ROWS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Multiply `delta` by the derivative, expressed through the activation output.
    fn backprop(self, delta: &mut Array2<f64>, activated: &Array2<f64>) {
        match self {
            Activation::Tanh => Zip::from(delta)
                .and(activated)
                .for_each(|d, &a| *d *= 1.0 - a * a),
            Activation::Relu => Zip::from(delta)
                .and(activated)
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                }),
        }
    }
}

/// Network shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    #[serde(rename = "I")]
    pub input_size: usize,
    #[serde(rename = "O")]
    pub output_size: usize,
    #[serde(rename = "k")]
    pub hidden_layers: usize,
    #[serde(rename = "n")]
    pub hidden_width: usize,
    pub activation: Activation,
    pub residual: bool,
    /// Input feature added to each output when `residual` is on.
    pub identity_slice: Vec<usize>,
}

impl MlpSpec {
    /// Tanh network with a residual connection from the first `outputs` inputs.
    pub fn new(inputs: usize, outputs: usize, hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_size: inputs,
            output_size: outputs,
            hidden_layers,
            hidden_width,
            activation: Activation::Tanh,
            residual: true,
            identity_slice: (0..outputs).collect(),
        }
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        if !residual {
            self.identity_slice.clear();
        } else if self.identity_slice.is_empty() {
            self.identity_slice = (0..self.output_size).collect();
        }
        self
    }

    pub fn with_identity_slice(mut self, slice: Vec<usize>) -> Self {
        self.identity_slice = slice;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// Same family, different depth and width.
    pub fn resized(&self, hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            hidden_layers,
            hidden_width,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(WdpdError::Config(msg));
        if self.input_size == 0 || self.output_size == 0 {
            return bad("network needs at least one input and one output".into());
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad(format!(
                "need k >= 1 and n >= 1, got k = {}, n = {}",
                self.hidden_layers, self.hidden_width
            ));
        }
        if self.residual {
            if self.identity_slice.len() != self.output_size {
                return bad(format!(
                    "identity slice has {} entries for {} outputs",
                    self.identity_slice.len(),
                    self.output_size
                ));
            }
            if let Some(&i) = self.identity_slice.iter().find(|&&i| i >= self.input_size) {
                return bad(format!("identity slice index {i} exceeds {} inputs", self.input_size));
            }
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.hidden_width, self.input_size)];
        shapes.extend((1..self.hidden_layers).map(|_| (self.hidden_width, self.hidden_width)));
        shapes.push((self.output_size, self.hidden_width));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `rows = fan_out`, `cols = fan_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer; also used as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| Layer {
                weights: Array2::zeros((r, c)),
                bias: Array1::zeros(r),
            })
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// Every parameter, layer by layer, weights (row-major) before bias.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> Result<MlpParams> {
    spec.validate()?;
    let mut rng = crate::seed::rng(seed);
    let mut params = MlpParams::zeros(spec);
    for l in &mut params.layers {
        let (fan_out, fan_in) = l.weights.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        l.weights.iter_mut().for_each(|w| *w = rng.gen_range(-limit..limit));
    }
    Ok(params)
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// Outputs of each hidden layer.
    hidden: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward_trace(params: &MlpParams, inputs: ArrayView2<f64>) -> Trace {
    let spec = &params.spec;
    let (hidden_layers, out_layer) = params.layers.split_at(params.layers.len() - 1);
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(hidden_layers.len());
    for l in hidden_layers {
        let mut z = match hidden.last() {
            Some(h) => h.dot(&l.weights.t()),
            None => inputs.dot(&l.weights.t()),
        };
        z += &l.bias;
        spec.activation.apply(&mut z);
        hidden.push(z);
    }
    let last = &out_layer[0];
    let mut output = hidden.last().expect("k >= 1").dot(&last.weights.t());
    output += &last.bias;
    if spec.residual {
        for (o, &i) in spec.identity_slice.iter().enumerate() {
            let mut col = output.column_mut(o);
            col += &inputs.column(i);
        }
    }
    Trace { hidden, output }
}

fn check_batch(spec: &MlpSpec, inputs: &ArrayView2<f64>) -> Result<()> {
    crate::error::dim_check(spec.input_size, inputs.ncols())
}

/// Network output for a batch of rows.
pub fn forward_batch(params: &MlpParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_batch(&params.spec, &inputs)?;
    Ok(forward_trace(params, inputs).output)
}

/// Network output for one input row.
pub fn forward_mlp(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    let row = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|e| WdpdError::Config(e.to_string()))?;
    Ok(forward_batch(params, row)?.into_raw_vec())
}

/// Batch NMSE `Σ‖ŷ-y‖² / Σ‖y‖²` and its gradient with respect to `ŷ`.
pub fn nmse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(WdpdError::Dimension {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    let reference: f64 = target.iter().map(|v| v * v).sum();
    if reference <= 0.0 {
        return Err(WdpdError::UndefinedReference);
    }
    let diff = &pred - &target;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / reference;
    Ok((loss, diff * (2.0 / reference)))
}

/// Loss and exact parameter gradients of [`nmse_loss`] for one batch.
pub fn backward_mlp(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, MlpParams)> {
    check_batch(&params.spec, &inputs)?;
    crate::error::dim_check(params.spec.output_size, targets.ncols())?;
    let trace = forward_trace(params, inputs);
    let (loss, mut delta) = nmse_loss(trace.output.view(), targets)?;
    let spec = &params.spec;
    let mut grads = MlpParams::zeros(spec);
    for li in (0..params.layers.len()).rev() {
        grads.layers[li].weights = if li == 0 {
            delta.t().dot(&inputs)
        } else {
            delta.t().dot(&trace.hidden[li - 1])
        };
        grads.layers[li].bias = delta.sum_axis(Axis(0));
        if li > 0 {
            let mut back = delta.dot(&params.layers[li].weights);
            spec.activation.backprop(&mut back, &trace.hidden[li - 1]);
            delta = back;
        }
    }
    Ok((loss, grads))
}

/// Rows `range` of a matrix as an owned copy.
pub(crate) fn rows(m: &Array2<f64>, range: std::ops::Range<usize>) -> Array2<f64> {
    m.slice(s![range, ..]).to_owned()
}
