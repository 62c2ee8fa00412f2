//! Forward pass with cached activations and exact backpropagation through time.

use super::linalg::{affine, affine_backward};
use super::{Gradients, NetShape, Params, Real};
use crate::error::{Error, Result};
use crate::world::Observation;

/// Affine map applied to raw dBm before the recurrent stack.
pub fn standardize(dbm: f64) -> f64 {
    (dbm + 60.0) / 20.0
}

#[derive(Debug, Clone)]
pub struct Output<F> {
    pub logits: Vec<F>,
    pub policy: Vec<F>,
    pub value: F,
}

#[derive(Debug, Clone)]
struct LayerTrace<F> {
    /// `[x_t, h_{t-1}]` per step.
    concat: Vec<F>,
    /// Activated gates `i, f, g, o` per step.
    gates: Vec<F>,
    cell: Vec<F>,
    tanh_cell: Vec<F>,
    hidden: Vec<F>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    shape: NetShape,
    steps: usize,
    layers: Vec<LayerTrace<F>>,
    /// Input to each dense layer followed by the head input.
    activations: Vec<Vec<F>>,
    output: Output<F>,
}

impl<F: Real> ForwardTrace<F> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn output(&self) -> &Output<F> {
        &self.output
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Evaluates the network on an RSSI observation (standardized internally).
pub fn forward<F: Real>(params: &Params<F>, obs: &Observation) -> Result<(Output<F>, ForwardTrace<F>)> {
    if params.shape().input != crate::channel::RX_COUNT {
        return Err(Error::Shape(format!(
            "network expects {} inputs per row, observation has {}",
            params.shape().input,
            crate::channel::RX_COUNT
        )));
    }
    let inputs: Vec<F> = obs.as_slice().iter().map(|&x| F::of(standardize(x))).collect();
    forward_inputs(params, obs.rows(), &inputs)
}

/// Evaluates the network on an already standardized `steps × input` matrix.
pub fn forward_inputs<F: Real>(
    params: &Params<F>,
    steps: usize,
    inputs: &[F],
) -> Result<(Output<F>, ForwardTrace<F>)> {
    let shape = *params.shape();
    if steps == 0 {
        return Err(Error::Empty("observation has no rows".into()));
    }
    if inputs.len() != steps * shape.input {
        return Err(Error::Shape(format!(
            "expected {} inputs, got {}",
            steps * shape.input,
            inputs.len()
        )));
    }
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    let layout = params.layout();
    let h = shape.hidden;
    let mut layers: Vec<LayerTrace<F>> = Vec::with_capacity(shape.lstm_layers);
    let mut z = vec![F::zero(); 4 * h];
    for l in 0..shape.lstm_layers {
        let n_in = shape.lstm_input(l);
        let cols = n_in + h;
        let w = params.tensor(layout.lstm_weight(l));
        let b = params.tensor(layout.lstm_bias(l));
        let below: &[F] = if l == 0 { inputs } else { &layers[l - 1].hidden };
        let mut tr = LayerTrace {
            concat: vec![F::zero(); steps * cols],
            gates: vec![F::zero(); steps * 4 * h],
            cell: vec![F::zero(); steps * h],
            tanh_cell: vec![F::zero(); steps * h],
            hidden: vec![F::zero(); steps * h],
        };
        for t in 0..steps {
            let concat = &mut tr.concat[t * cols..(t + 1) * cols];
            concat[..n_in].copy_from_slice(&below[t * n_in..(t + 1) * n_in]);
            if t > 0 {
                concat[n_in..].copy_from_slice(&tr.hidden[(t - 1) * h..t * h]);
            }
            affine(w, b, concat, &mut z);
            let gates = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let g_g = z[2 * h + j].tanh();
                let o_g = sigmoid(z[3 * h + j]);
                gates[j] = i_g;
                gates[h + j] = f_g;
                gates[2 * h + j] = g_g;
                gates[3 * h + j] = o_g;
                let c_prev = if t > 0 { tr.cell[(t - 1) * h + j] } else { F::zero() };
                let c = f_g * c_prev + i_g * g_g;
                let tc = c.tanh();
                tr.cell[t * h + j] = c;
                tr.tanh_cell[t * h + j] = tc;
                tr.hidden[t * h + j] = o_g * tc;
            }
        }
        layers.push(tr);
    }

    let top = layers.last().expect("at least one layer");
    let mut activations = vec![top.hidden[(steps - 1) * h..steps * h].to_vec()];
    for k in 0..shape.dense_layers {
        let w = params.tensor(layout.dense_weight(&shape, k));
        let b = params.tensor(layout.dense_bias(&shape, k));
        let mut out = vec![F::zero(); shape.dense_width];
        affine(w, b, activations.last().unwrap(), &mut out);
        for v in &mut out {
            *v = v.max(F::zero());
        }
        activations.push(out);
    }
    let feat = activations.last().unwrap();
    let mut logits = vec![F::zero(); shape.actions];
    affine(
        params.tensor(layout.policy_weight()),
        params.tensor(layout.policy_bias()),
        feat,
        &mut logits,
    );
    let mut value = [F::zero()];
    affine(
        params.tensor(layout.value_weight()),
        params.tensor(layout.value_bias()),
        feat,
        &mut value,
    );
    let output = Output {
        policy: softmax(&logits),
        logits,
        value: value[0],
    };
    if !output.value.is_finite() || output.logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("network output".into()));
    }
    let trace = ForwardTrace {
        shape,
        steps,
        layers,
        activations,
        output: output.clone(),
    };
    Ok((output, trace))
}

/// Gradient of `d_logits · logits + d_value · value` with respect to all
/// parameters.
pub fn backward<F: Real>(
    params: &Params<F>,
    trace: &ForwardTrace<F>,
    d_logits: &[F],
    d_value: F,
) -> Result<Gradients<F>> {
    let mut grads = Params::zeros(*params.shape());
    backward_into(params, trace, d_logits, d_value, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into `grads`.
pub fn backward_into<F: Real>(
    params: &Params<F>,
    trace: &ForwardTrace<F>,
    d_logits: &[F],
    d_value: F,
    grads: &mut Gradients<F>,
) -> Result<()> {
    let shape = *params.shape();
    if trace.shape != shape || grads.shape() != &shape {
        return Err(Error::Shape("trace, parameters and gradients disagree".into()));
    }
    if d_logits.len() != shape.actions {
        return Err(Error::Shape(format!(
            "expected {} logit gradients, got {}",
            shape.actions,
            d_logits.len()
        )));
    }
    let layout = params.layout().clone();
    let steps = trace.steps;
    let h = shape.hidden;

    // heads
    let feat = trace.activations.last().unwrap();
    let mut d_feat = vec![F::zero(); feat.len()];
    {
        let (pw, pb) = (layout.policy_weight(), layout.policy_bias());
        let w = params.tensor(pw);
        let gw = grads.as_mut_slice();
        let (dw_all, db_all) = split_two(gw, pw.range(), pb.range());
        affine_backward(w, feat, d_logits, dw_all, db_all, Some(&mut d_feat));
    }
    {
        let (vw, vb) = (layout.value_weight(), layout.value_bias());
        let w = params.tensor(vw);
        let (dw, db) = split_two(grads.as_mut_slice(), vw.range(), vb.range());
        affine_backward(w, feat, &[d_value], dw, db, Some(&mut d_feat));
    }

    // dense stack
    let mut d_act = d_feat;
    for k in (0..shape.dense_layers).rev() {
        let out = &trace.activations[k + 1];
        for (g, a) in d_act.iter_mut().zip(out) {
            if *a <= F::zero() {
                *g = F::zero();
            }
        }
        let input = &trace.activations[k];
        let (sw, sb) = (layout.dense_weight(&shape, k), layout.dense_bias(&shape, k));
        let w = params.tensor(sw);
        let mut d_in = vec![F::zero(); input.len()];
        let (dw, db) = split_two(grads.as_mut_slice(), sw.range(), sb.range());
        affine_backward(w, input, &d_act, dw, db, Some(&mut d_in));
        d_act = d_in;
    }

    // recurrent stack, top layer first
    let mut d_hidden = vec![F::zero(); steps * h];
    d_hidden[(steps - 1) * h..].copy_from_slice(&d_act);
    let mut dz = vec![F::zero(); 4 * h];
    for l in (0..shape.lstm_layers).rev() {
        let tr = &trace.layers[l];
        let n_in = shape.lstm_input(l);
        let cols = n_in + h;
        let (sw, sb) = (layout.lstm_weight(l), layout.lstm_bias(l));
        let w = params.tensor(sw);
        let mut d_below = if l > 0 { vec![F::zero(); steps * n_in] } else { Vec::new() };
        let mut dh_next = vec![F::zero(); h];
        let mut dc_next = vec![F::zero(); h];
        let mut d_concat = vec![F::zero(); cols];
        for t in (0..steps).rev() {
            let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = tr.tanh_cell[t * h + j];
                let c_prev = if t > 0 { tr.cell[(t - 1) * h + j] } else { F::zero() };
                let dh = d_hidden[t * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o_g * (F::one() - tc * tc) + dc_next[j];
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * c_prev;
                dc_next[j] = dc * f_g;
                dz[j] = d_i * i_g * (F::one() - i_g);
                dz[h + j] = d_f * f_g * (F::one() - f_g);
                dz[2 * h + j] = d_g * (F::one() - g_g * g_g);
                dz[3 * h + j] = d_o * o_g * (F::one() - o_g);
            }
            d_concat.iter_mut().for_each(|x| *x = F::zero());
            let concat = &tr.concat[t * cols..(t + 1) * cols];
            let (dw, db) = split_two(grads.as_mut_slice(), sw.range(), sb.range());
            affine_backward(w, concat, &dz, dw, db, Some(&mut d_concat));
            dh_next.copy_from_slice(&d_concat[n_in..]);
            if l > 0 {
                d_below[t * n_in..(t + 1) * n_in].copy_from_slice(&d_concat[..n_in]);
            }
        }
        d_hidden = d_below;
    }
    Ok(())
}

/// Two disjoint mutable windows of a flat buffer; `a` must precede `b`.
fn split_two<F>(
    buf: &mut [F],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [F], &mut [F]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Params;

    fn reduced() -> NetShape {
        NetShape {
            input: 6,
            lstm_layers: 2,
            hidden: 5,
            dense_layers: 2,
            dense_width: 4,
            actions: 5,
        }
    }

    fn obs(rows: usize, seed: u64) -> Observation {
        let data = (0..rows * 6)
            .map(|i| -60.0 + 15.0 * ((i as f64 + seed as f64) * 0.73).sin())
            .collect();
        Observation::new(rows, data, 1.0).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = Params::<f32>::zeros(NetShape::default());
        let (out, trace) = forward(&p, &obs(50, 0)).unwrap();
        assert!(out.policy.iter().all(|&x| (x - 0.2).abs() < 1e-7));
        assert_eq!(out.value, 0.0);
        assert_eq!(trace.steps(), 50);
    }

    #[test]
    fn value_head_is_linear() {
        let mut p = Params::<f64>::init(reduced(), 3).unwrap();
        let vb = p.layout().value_bias().clone();
        p.tensor_mut(&vb)[0] = 0.0;
        let o = obs(7, 1);
        let (a, _) = forward(&p, &o).unwrap();
        let vw = p.layout().value_weight().clone();
        p.tensor_mut(&vw).iter_mut().for_each(|x| *x *= 2.0);
        let (b, _) = forward(&p, &o).unwrap();
        assert!((b.value - 2.0 * a.value).abs() < 1e-12);
    }

    #[test]
    fn policy_normalized() {
        for seed in 0..20 {
            let p = Params::<f32>::init(reduced(), seed).unwrap();
            let (out, _) = forward(&p, &obs(9, seed)).unwrap();
            let s: f32 = out.policy.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(out.policy.iter().all(|&x| x > 0.0 && x < 1.0));
            let h = crate::net::entropy(&out.policy);
            assert!(h >= 0.0 && h <= 5f32.ln() + 1e-6);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = Params::<f64>::init(reduced(), 4).unwrap();
        let (_, tr) = forward(&p, &obs(6, 2)).unwrap();
        let g = backward(&p, &tr, &[0.0; 5], 0.0).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn value_bias_gradient_is_one() {
        let p = Params::<f64>::init(reduced(), 4).unwrap();
        let (_, tr) = forward(&p, &obs(6, 2)).unwrap();
        let g = backward(&p, &tr, &[0.0; 5], 1.0).unwrap();
        assert_eq!(g.tensor(g.layout().value_bias())[0], 1.0);
    }

    #[test]
    fn mismatched_trace_rejected() {
        let p = Params::<f64>::init(reduced(), 4).unwrap();
        let q = Params::<f64>::init(NetShape { hidden: 6, ..reduced() }, 4).unwrap();
        let (_, tr) = forward(&p, &obs(6, 2)).unwrap();
        assert!(backward(&q, &tr, &[0.0; 5], 1.0).is_err());
        assert!(backward(&p, &tr, &[0.0; 4], 1.0).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = Params::<f64>::init(reduced(), 4).unwrap();
        let mut data = vec![-50.0; 12];
        data[3] = f64::NAN;
        let o = Observation::new(2, data, 1.0).unwrap();
        assert!(matches!(forward(&p, &o), Err(Error::NonFinite(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = Params::<f32>::init(NetShape::default(), 8).unwrap();
        let o = obs(50, 3);
        let (a, _) = forward(&p, &o).unwrap();
        let (b, _) = forward(&p, &o).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn finite_differences_agree() {
        let mut p = Params::<f64>::init(reduced(), 21).unwrap();
        // push some pre-activations away from zero so ReLU kinks stay far away
        let o = obs(4, 5);
        let d_logits = [0.3, -1.2, 0.5, 0.9, -0.4];
        let d_value = 0.7;
        let f = |p: &Params<f64>| {
            let (out, _) = forward(p, &o).unwrap();
            out.logits.iter().zip(&d_logits).map(|(a, b)| a * b).sum::<f64>() + d_value * out.value
        };
        let (_, tr) = forward(&p, &o).unwrap();
        let g = backward(&p, &tr, &d_logits, d_value).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let x = p.as_slice()[i];
            p.as_mut_slice()[i] = x + h;
            let up = f(&p);
            p.as_mut_slice()[i] = x - h;
            let down = f(&p);
            p.as_mut_slice()[i] = x;
            let num = (up - down) / (2.0 * h);
            let ana = g.as_slice()[i];
            worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-3));
        }
        assert!(worst < 1e-5, "{worst}");
    }
}
