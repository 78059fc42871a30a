//! From-scratch differentiable recurrent networks.
//!
//! Three cell kinds — simple recurrent (SRN), GRU, and LSTM — stacked into
//! layers with inverted dropout on each layer's output sequence and a linear
//! single-neuron head on the final top-layer hidden state. The forward pass
//! records a tape of per-step activations; [`backward`] replays it for exact
//! backpropagation through time. All arithmetic is 64-bit.
//!
//! Gate weights are stored concatenated: `w` is (gates·H × I), `u` is
//! (gates·H × H), `b` is (gates·H), with gate blocks in the order
//! i, f, g, o for LSTM and z, r, candidate for GRU.

mod backward;
mod checkpoint;
mod forward;

pub use backward::backward;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use forward::{cell_forward, forward_eval, forward_train, StepCache, Tape};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Recurrent cell kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Srn,
    Gru,
    Lstm,
}

impl CellKind {
    /// Number of concatenated gate blocks in the parameter matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Srn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Srn => "srn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "srn" => Ok(CellKind::Srn),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Config(format!("unknown cell kind '{other}'"))),
        }
    }
}

/// One stacked layer: cell kind, width, and dropout rate on its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: CellKind,
    pub hidden: usize,
    pub dropout: f64,
}

/// Architecture of a network: input width and the ordered layer stack. The
/// head is always a linear single-output neuron on the last layer's final
/// hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Uniform-kind stack, the common case.
    pub fn stacked(kind: CellKind, input_size: usize, hidden: &[usize], dropout: &[f64]) -> Result<Self> {
        if hidden.len() != dropout.len() {
            return Err(Error::Config(format!(
                "{} layer sizes but {} dropout rates",
                hidden.len(),
                dropout.len()
            )));
        }
        let spec = NetworkSpec {
            input_size,
            layers: hidden
                .iter()
                .zip(dropout)
                .map(|(h, d)| LayerSpec {
                    kind,
                    hidden: *h,
                    dropout: *d,
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("input size must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.hidden == 0 {
                return Err(Error::Config(format!("layer {l} has hidden size 0")));
            }
            if !(0.0..1.0).contains(&layer.dropout) {
                return Err(Error::Config(format!(
                    "layer {l} dropout {} outside [0, 1)",
                    layer.dropout
                )));
            }
        }
        Ok(())
    }

    /// Input width of layer `l`: the raw input for layer 0, otherwise the
    /// previous layer's hidden size.
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_size
        } else {
            self.layers[l - 1].hidden
        }
    }
}

/// Parameters of one layer, gate blocks concatenated row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub spec: LayerSpec,
    pub input_size: usize,
    /// Input-to-hidden weights, (gates·H, I).
    pub w: Array2<f64>,
    /// Hidden-to-hidden weights, (gates·H, H).
    pub u: Array2<f64>,
    /// Biases, (gates·H).
    pub b: Array1<f64>,
}

/// Full model: layer stack plus linear head. `head_b` is a length-1 array so
/// every parameter lives in an ndarray tensor (uniform optimizer plumbing).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams>,
    pub head_w: Array1<f64>,
    pub head_b: Array1<f64>,
}

impl ModelParams {
    pub fn head_bias(&self) -> f64 {
        self.head_b[0]
    }

    /// Same shapes, all zeros — gradient and optimizer-state buffers.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    spec: l.spec.clone(),
                    input_size: l.input_size,
                    w: Array2::zeros(l.w.dim()),
                    u: Array2::zeros(l.u.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
            head_w: Array1::zeros(self.head_w.len()),
            head_b: Array1::zeros(1),
        }
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Every parameter tensor as a flat slice, in a fixed declaration order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &self.layers {
            out.push(layer.w.as_slice().expect("standard layout"));
            out.push(layer.u.as_slice().expect("standard layout"));
            out.push(layer.b.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(self.head_b.as_slice().expect("standard layout"));
        out
    }

    /// Mutable twin of [`slices`], same order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.u.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(self.head_b.as_slice_mut().expect("standard layout"));
        out
    }

    /// `self += alpha * other`, tensor-wise. Shapes must match.
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        let theirs = other.slices();
        for (mine, their) in self.slices_mut().into_iter().zip(theirs) {
            debug_assert_eq!(mine.len(), their.len());
            for (m, t) in mine.iter_mut().zip(their) {
                *m += alpha * t;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for slice in self.slices_mut() {
            for v in slice {
                *v *= alpha;
            }
        }
    }

    /// Euclidean norm over all parameters (used for gradient clipping).
    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// True if every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Deterministic Xavier-uniform initialization: each weight block is drawn
/// uniform in ±√(6/(fan_in+fan_out)); biases are zero except the LSTM
/// forget-gate block, which starts at 1.0.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let input = spec.layer_input(l);
        let hidden = layer.hidden;
        let gates = layer.kind.gates();
        let mut rng = stream_rng(seed, Stream::Init, l as u64, 0);
        let w_bound = (6.0 / (input + hidden) as f64).sqrt();
        let w = Array2::from_shape_fn((gates * hidden, input), |_| {
            rng.gen_range(-w_bound..w_bound)
        });
        let u_bound = (6.0 / (hidden + hidden) as f64).sqrt();
        let u = Array2::from_shape_fn((gates * hidden, hidden), |_| {
            rng.gen_range(-u_bound..u_bound)
        });
        let mut b = Array1::zeros(gates * hidden);
        if layer.kind == CellKind::Lstm {
            // Forget-gate block is the second: rows H..2H.
            b.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
        }
        layers.push(LayerParams {
            spec: layer.clone(),
            input_size: input,
            w,
            u,
            b,
        });
    }
    let last_hidden = spec.layers.last().unwrap().hidden;
    let mut rng = stream_rng(seed, Stream::Init, spec.layers.len() as u64, 0);
    let head_bound = (6.0 / (last_hidden + 1) as f64).sqrt();
    let head_w = Array1::from_shape_fn(last_hidden, |_| rng.gen_range(-head_bound..head_bound));
    Ok(ModelParams {
        spec: spec.clone(),
        layers,
        head_w,
        head_b: Array1::zeros(1),
    })
}
