//! Per-dimension policy/value network.
//!
//! Stacked LSTM layers read the `L × 6` RSSI matrix one row per timestep;
//! the final hidden state of the top layer goes through ReLU dense layers
//! into a 5-way softmax policy head and a scalar value head. Weights are
//! generic over [`Real`] so the same code runs in `f32` for training and in
//! `f64` for finite-difference gradient checks.

mod adam;
mod linalg;
mod model;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use adam::{clip_global_norm, AdamConfig, OptimizerState};
pub use model::{backward, backward_into, forward, forward_inputs, standardize, ForwardTrace, Output};

pub trait Real:
    Float + FromPrimitive + Default + Debug + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + Sum
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetShape {
    pub input: usize,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub dense_layers: usize,
    pub dense_width: usize,
    pub actions: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            input: 6,
            lstm_layers: 3,
            hidden: 128,
            dense_layers: 2,
            dense_width: 128,
            actions: 5,
        }
    }
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.lstm_layers == 0 || self.hidden == 0 || self.actions == 0 {
            return Err(Error::Shape(format!("degenerate network shape {self:?}")));
        }
        if self.dense_layers > 0 && self.dense_width == 0 {
            return Err(Error::Shape("dense layers need a non-zero width".into()));
        }
        Ok(())
    }

    pub fn lstm_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    pub fn dense_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.hidden
        } else {
            self.dense_width
        }
    }

    /// Width of the feature vector entering both heads.
    pub fn head_input(&self) -> usize {
        if self.dense_layers == 0 {
            self.hidden
        } else {
            self.dense_width
        }
    }

    pub fn layout(&self) -> Layout {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, dims: Vec<usize>| {
            let len = dims.iter().product::<usize>();
            tensors.push(TensorSpec { name, dims, offset });
            offset += len;
        };
        for l in 0..self.lstm_layers {
            let cols = self.lstm_input(l) + self.hidden;
            push(format!("lstm{l}.weight"), vec![4 * self.hidden, cols]);
            push(format!("lstm{l}.bias"), vec![4 * self.hidden]);
        }
        for k in 0..self.dense_layers {
            push(format!("dense{k}.weight"), vec![self.dense_width, self.dense_input(k)]);
            push(format!("dense{k}.bias"), vec![self.dense_width]);
        }
        push("policy.weight".into(), vec![self.actions, self.head_input()]);
        push("policy.bias".into(), vec![self.actions]);
        push("value.weight".into(), vec![1, self.head_input()]);
        push("value.bias".into(), vec![1]);
        Layout { tensors, len: offset }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter order shared by parameters, gradients and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub len: usize,
}

impl Layout {
    pub fn lstm_weight(&self, l: usize) -> &TensorSpec {
        &self.tensors[2 * l]
    }

    pub fn lstm_bias(&self, l: usize) -> &TensorSpec {
        &self.tensors[2 * l + 1]
    }

    fn after_lstm(&self, shape: &NetShape) -> usize {
        2 * shape.lstm_layers
    }

    pub fn dense_weight(&self, shape: &NetShape, k: usize) -> &TensorSpec {
        &self.tensors[self.after_lstm(shape) + 2 * k]
    }

    pub fn dense_bias(&self, shape: &NetShape, k: usize) -> &TensorSpec {
        &self.tensors[self.after_lstm(shape) + 2 * k + 1]
    }

    fn heads(&self) -> usize {
        self.tensors.len() - 4
    }

    pub fn policy_weight(&self) -> &TensorSpec {
        &self.tensors[self.heads()]
    }

    pub fn policy_bias(&self) -> &TensorSpec {
        &self.tensors[self.heads() + 1]
    }

    pub fn value_weight(&self) -> &TensorSpec {
        &self.tensors[self.heads() + 2]
    }

    pub fn value_bias(&self) -> &TensorSpec {
        &self.tensors[self.heads() + 3]
    }
}

/// Network weights (or a gradient with the same layout) stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    shape: NetShape,
    layout: Layout,
    data: Vec<F>,
}

pub type Gradients<F> = Params<F>;

impl<F: Real> Params<F> {
    pub fn zeros(shape: NetShape) -> Self {
        let layout = shape.layout();
        let data = vec![F::zero(); layout.len];
        Self { shape, layout, data }
    }

    /// Uniform `±1/sqrt(fan_in)` weights and biases; LSTM forget-gate biases
    /// start at 1.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut p = Self::zeros(shape);
        let mut rng = seed::rng(seed, "net-init", 0);
        let h = shape.hidden;
        for t in 0..p.layout.tensors.len() {
            let spec = p.layout.tensors[t].clone();
            let fan_in = if spec.dims.len() == 2 {
                spec.dims[1]
            } else {
                // biases share the fan-in of the weight just before them
                p.layout.tensors[t - 1].dims[1]
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in &mut p.data[spec.range()] {
                *x = F::of(rng.random_range(-bound..bound));
            }
        }
        for l in 0..shape.lstm_layers {
            let r = p.layout.lstm_bias(l).range();
            for x in &mut p.data[r][h..2 * h] {
                *x = F::one();
            }
        }
        Ok(p)
    }

    pub fn from_vec(shape: NetShape, data: Vec<F>) -> Result<Self> {
        let layout = shape.layout();
        if data.len() != layout.len {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.len,
                data.len()
            )));
        }
        Ok(Self { shape, layout, data })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, spec: &TensorSpec) -> &[F] {
        &self.data[spec.range()]
    }

    pub fn tensor_mut(&mut self, spec: &TensorSpec) -> &mut [F] {
        &mut self.data[spec.range()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape || self.data.len() != other.data.len() {
            return Err(Error::Shape(format!(
                "parameter shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = F::zero());
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
    }

    pub fn cast<G: Real>(&self) -> Params<G> {
        Params {
            shape: self.shape,
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| G::of(x.f64())).collect(),
        }
    }
}

/// Softmax entropy `-Σ p ln p`, with `0 ln 0 = 0`.
pub fn entropy<F: Real>(probs: &[F]) -> F {
    -probs
        .iter()
        .filter(|p| **p > F::zero())
        .map(|&p| p * p.ln())
        .sum::<F>()
}

/// Draws an index from `policy`, or its argmax (lowest index on ties) when
/// `greedy` is set.
pub fn sample_action<F: Real>(policy: &[F], rng: &mut seed::Rng, greedy: bool) -> Result<usize> {
    if policy.is_empty() {
        return Err(Error::Empty("policy".into()));
    }
    if policy.iter().any(|p| !p.is_finite() || *p < F::zero()) {
        return Err(Error::Contract("policy has negative or non-finite entries".into()));
    }
    let total: f64 = policy.iter().map(|p| p.f64()).sum();
    if (total - 1.0).abs() > 1e-5 {
        return Err(Error::Contract(format!("policy sums to {total}, not 1")));
    }
    if greedy {
        let mut best = 0;
        for (i, p) in policy.iter().enumerate() {
            if *p > policy[best] {
                best = i;
            }
        }
        return Ok(best);
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in policy.iter().enumerate() {
        let p = p.f64();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}
