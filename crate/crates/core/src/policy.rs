//! Controllers that turn an observation into an [`ActionVector`].

use std::sync::Arc;

use rand::Rng as _;

use crate::error::Result;
use crate::net::{forward, sample_action, Params};
use crate::seed::Rng;
use crate::world::{ActionVector, Observation, SwarmState, Target, MOVE_ACTIONS};

/// What a controller may look at. Learned policies only read
/// `observation`; scripted baselines may also peek at the ground truth.
pub struct DecisionContext<'a> {
    pub observation: &'a Observation,
    pub swarm: &'a SwarmState,
    pub target: &'a Target,
}

pub trait Policy: Send + Sync {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut Rng) -> Result<ActionVector>;
}

/// The four trained networks (`d, x, y, z`).
#[derive(Clone)]
pub struct NetworkPolicy {
    nets: Arc<[Params<f32>; 4]>,
    greedy: bool,
}

impl NetworkPolicy {
    pub fn new(nets: Arc<[Params<f32>; 4]>, greedy: bool) -> Self {
        Self { nets, greedy }
    }
}

impl Policy for NetworkPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut Rng) -> Result<ActionVector> {
        let mut idx = [0usize; 4];
        for (n, net) in self.nets.iter().enumerate() {
            let (out, _) = forward(net, ctx.observation)?;
            idx[n] = sample_action(&out.policy, rng, self.greedy)?;
        }
        ActionVector::from_indices(idx)
    }
}

/// Uniform over every action space.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandomPolicy;

impl Policy for UniformRandomPolicy {
    fn decide(&self, _ctx: &DecisionContext<'_>, rng: &mut Rng) -> Result<ActionVector> {
        ActionVector::from_indices(std::array::from_fn(|_| rng.random_range(0..5)))
    }
}

/// Scripted baseline with target knowledge: per axis, the move that lands
/// closest to the target coordinate (4 m toward it when far away).
#[derive(Debug, Clone, Copy)]
pub struct OracleChaser {
    pub spacing: f64,
}

impl Default for OracleChaser {
    fn default() -> Self {
        Self { spacing: 3.0 }
    }
}

impl OracleChaser {
    pub fn axis_move(gap: f64) -> f64 {
        MOVE_ACTIONS
            .iter()
            .copied()
            .min_by(|a, b| (gap - a).abs().total_cmp(&(gap - b).abs()))
            .unwrap()
    }
}

impl Policy for OracleChaser {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut Rng) -> Result<ActionVector> {
        let gap: [f64; 3] = std::array::from_fn(|n| ctx.target.position[n] - ctx.swarm.center[n]);
        let a = ActionVector {
            spacing: self.spacing,
            dx: Self::axis_move(gap[0]),
            dy: Self::axis_move(gap[1]),
            dz: Self::axis_move(gap[2]),
        };
        a.validate()?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_axis_moves() {
        assert_eq!(OracleChaser::axis_move(30.0), 4.0);
        assert_eq!(OracleChaser::axis_move(-30.0), -4.0);
        assert_eq!(OracleChaser::axis_move(2.4), 2.0);
        assert_eq!(OracleChaser::axis_move(0.3), 0.0);
    }
}
