//! Actor-critic losses and their logit/value gradients.
//!
//! Per network, over a segment of `len` steps:
//!
//! ```text
//! L_P = -(1/len) Σ ADV_k · ln π(A_k | S_k)       (ADV held constant)
//! L_V =  (1/len) Σ |ADV_k|                        (or the one-step TD form)
//! H   =  (1/len) Σ -Σ_a π ln π
//! L   =  L_P + L_V - β H
//! ```

use serde::{Deserialize, Serialize};

use super::returns::{advantage, nstep_returns};
use crate::error::{Error, Result};
use crate::net::{backward_into, forward, ForwardTrace, Gradients, Params, Real};
use crate::world::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueLoss {
    /// `|G_k - V(S_k)|` with the n-step return.
    #[default]
    Advantage,
    /// `|R_{k+1} + γ V(S_{k+1}) - V(S_k)|`.
    Td0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub gamma: f64,
    pub beta: f64,
    pub value_loss: ValueLoss,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub observation: Observation,
    /// Action indices in `d, x, y, z` order.
    pub actions: [usize; 4],
    pub rewards: [f64; 4],
}

/// Up to `T` consecutive transitions plus the state that follows them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub next_observation: Observation,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Loss terms for the four networks of one gradient batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub nets: [LossTerms; 4],
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss terms and accumulated gradients for one network from cached forward
/// traces of `S_0 .. S_{len-1}`. `next_value` is `V(S_len)`, already zeroed
/// for terminal segments.
pub fn loss_from_traces<F: Real>(
    params: &Params<F>,
    traces: &[ForwardTrace<F>],
    actions: &[usize],
    rewards: &[f64],
    next_value: f64,
    settings: &LossSettings,
    grads: &mut Gradients<F>,
) -> Result<LossTerms> {
    let len = traces.len();
    if len == 0 {
        return Err(Error::Empty("trajectory".into()));
    }
    if actions.len() != len || rewards.len() != len {
        return Err(Error::Shape(format!(
            "{len} states but {} actions and {} rewards",
            actions.len(),
            rewards.len()
        )));
    }
    let returns = nstep_returns(rewards, next_value, settings.gamma)?;
    let values: Vec<f64> = traces.iter().map(|t| t.output().value.f64()).collect();
    let scale = 1.0 / len as f64;
    let mut terms = LossTerms::default();
    for k in 0..len {
        let out = traces[k].output();
        let logits: Vec<f64> = out.logits.iter().map(|z| z.f64()).collect();
        let logp = log_softmax(&logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = actions[k];
        if a >= probs.len() {
            return Err(Error::Contract(format!("action index {a} out of range")));
        }
        let adv = advantage(returns[k], values[k]);
        let h: f64 = -probs.iter().zip(&logp).filter(|(p, _)| **p > 0.0).map(|(p, l)| p * l).sum::<f64>();
        let value_err = match settings.value_loss {
            ValueLoss::Advantage => adv,
            ValueLoss::Td0 => {
                let v_next = if k + 1 < len { values[k + 1] } else { next_value };
                rewards[k] + settings.gamma * v_next - values[k]
            }
        };
        terms.policy -= adv * logp[a];
        terms.value += value_err.abs();
        terms.entropy += h;

        let d_logits: Vec<F> = (0..probs.len())
            .map(|j| {
                let p = probs[j];
                let onehot = if j == a { 1.0 } else { 0.0 };
                let entropy_term = if p > 0.0 { settings.beta * p * (logp[j] + h) } else { 0.0 };
                F::of((-adv * (onehot - p) + entropy_term) * scale)
            })
            .collect();
        // d|e|/dV = -sign(e); subgradient 0 at e = 0
        let d_value = F::of(-sign(value_err) * scale);
        backward_into(params, &traces[k], &d_logits, d_value, grads)?;
    }
    terms.policy *= scale;
    terms.value *= scale;
    terms.entropy *= scale;
    terms.total = terms.policy + terms.value - settings.beta * terms.entropy;
    Ok(terms)
}

/// Runs the forward passes for network `net` over `trajectory` and returns
/// its loss terms and gradient.
pub fn losses<F: Real>(
    trajectory: &Trajectory,
    net: usize,
    params: &Params<F>,
    settings: &LossSettings,
) -> Result<(LossTerms, Gradients<F>)> {
    if net >= 4 {
        return Err(Error::Contract(format!("network index {net} out of range")));
    }
    let traces = trajectory
        .steps
        .iter()
        .map(|s| forward(params, &s.observation).map(|(_, t)| t))
        .collect::<Result<Vec<_>>>()?;
    let next_value = if trajectory.terminal {
        0.0
    } else {
        forward(params, &trajectory.next_observation)?.0.value.f64()
    };
    let actions: Vec<usize> = trajectory.steps.iter().map(|s| s.actions[net]).collect();
    let rewards: Vec<f64> = trajectory.steps.iter().map(|s| s.rewards[net]).collect();
    let mut grads = Params::zeros(*params.shape());
    let terms = loss_from_traces(params, &traces, &actions, &rewards, next_value, settings, &mut grads)?;
    Ok((terms, grads))
}
