use serde::{Deserialize, Serialize};

use super::{Gradients, Params, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators mirroring one parameter set.
#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
    config: AdamConfig,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &Params<F>, config: AdamConfig) -> Self {
        Self {
            m: vec![F::zero(); params.len()],
            v: vec![F::zero(); params.len()],
            step: 0,
            config,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected Adam step `θ ← θ - lr · m̂ / (sqrt(v̂) + ε)`.
    pub fn apply(&mut self, params: &mut Params<F>, grads: &Gradients<F>, lr: f64) -> Result<()> {
        params.check_same_shape(grads)?;
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bc1 = 1.0 - c.beta1.powf(self.step as f64);
        let bc2 = 1.0 - c.beta2.powf(self.step as f64);
        let step_size = F::of(lr / bc1);
        let bc2_sqrt = F::of(bc2.sqrt());
        let eps = F::of(c.eps);
        for (((p, &g), m), v) in params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            *p -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Real>(grads: &mut Gradients<F>, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        let s = F::of(max_norm / norm);
        grads.as_mut_slice().iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetShape;

    fn shape() -> NetShape {
        NetShape {
            input: 6,
            lstm_layers: 1,
            hidden: 2,
            dense_layers: 1,
            dense_width: 2,
            actions: 5,
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Params::<f64>::init(shape(), 1).unwrap();
        let before = p.clone();
        let mut opt = OptimizerState::new(&p, AdamConfig::default());
        opt.apply(&mut p, &Params::zeros(shape()), 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = Params::<f64>::init(shape(), 1).unwrap();
        let before = p.clone();
        let mut g = Params::<f64>::zeros(shape());
        for (i, x) in g.as_mut_slice().iter_mut().enumerate() {
            *x = (i as f64 * 0.37).sin() * 3.0;
        }
        let lr = 1e-3;
        let eps = AdamConfig::default().eps;
        let mut opt = OptimizerState::new(&p, AdamConfig::default());
        opt.apply(&mut p, &g, lr).unwrap();
        for ((a, b), gi) in p.as_slice().iter().zip(before.as_slice()).zip(g.as_slice()) {
            // m̂ = g, v̂ = g², so Δθ = -lr g / (|g| + ε)
            let want = -lr * gi / (gi.abs() + eps);
            assert!((a - b - want).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_is_not_additive() {
        let base = Params::<f64>::init(shape(), 2).unwrap();
        let mut g = Params::<f64>::zeros(shape());
        g.as_mut_slice().iter_mut().enumerate().for_each(|(i, x)| *x = 0.1 + i as f64 * 0.01);
        let mut twice = base.clone();
        let mut o1 = OptimizerState::new(&twice, AdamConfig::default());
        o1.apply(&mut twice, &g, 1e-2).unwrap();
        o1.apply(&mut twice, &g, 1e-2).unwrap();
        let mut doubled = base.clone();
        let mut g2 = g.clone();
        g2.as_mut_slice().iter_mut().for_each(|x| *x *= 2.0);
        let mut o2 = OptimizerState::new(&doubled, AdamConfig::default());
        o2.apply(&mut doubled, &g2, 1e-2).unwrap();
        assert_ne!(twice, doubled);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Params::<f64>::init(shape(), 1).unwrap();
        let g = Params::<f64>::zeros(NetShape { hidden: 3, ..shape() });
        let mut opt = OptimizerState::new(&p, AdamConfig::default());
        assert!(opt.apply(&mut p, &g, 1e-3).is_err());
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = Params::<f64>::zeros(shape());
        g.as_mut_slice().iter_mut().for_each(|x| *x = 10.0);
        let before = clip_global_norm(&mut g, 40.0);
        assert!(before > 40.0);
        assert!((g.norm() - 40.0).abs() < 1e-9);
        let mut small = Params::<f64>::zeros(shape());
        small.as_mut_slice()[0] = 1.0;
        clip_global_norm(&mut small, 40.0);
        assert_eq!(small.as_slice()[0], 1.0);
    }
}
