//! Asynchronous actor-critic training.
//!
//! `N` worker threads roll out episodes against their own environments,
//! compute gradients for the four networks every `T` steps and push them to
//! a shared [`GlobalStore`]. An evaluator thread periodically scores the
//! latest snapshot with greedy episodes and can stop training early.

mod checkpoint;
mod evaluator;
mod loss;
mod returns;
mod store;
mod worker;

use std::sync::atomic::{AtomicBool, AtomicUsize};
use std::sync::{mpsc, Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode, encode, load, save, FORMAT_VERSION, MAGIC};
pub use evaluator::{EvalPoint, EvalRequest};
pub use loss::{
    loss_from_traces, losses, LossBreakdown, LossSettings, LossTerms, Trajectory, Transition, ValueLoss,
};
pub use returns::{advantage, nstep_returns};
pub use store::{GlobalStore, Snapshot, UpdateRecord};
pub use worker::EpisodeStats;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::net::{AdamConfig, NetShape, Params};
use crate::policy::{NetworkPolicy, Policy};
use crate::seed;
use crate::world::WorldParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub workers: usize,
    /// Update interval T (steps per gradient batch).
    pub update_interval: usize,
    pub gamma: f64,
    /// Entropy coefficient β.
    pub beta: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global-norm clip per network; `0` disables.
    pub grad_clip: f64,
    /// Episode budget shared by all workers.
    pub episodes: usize,
    pub value_loss: ValueLoss,
    /// Completed episodes between evaluations; `0` disables the evaluator.
    pub eval_period: usize,
    pub eval_window: usize,
    pub eval_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            update_interval: 5,
            gamma: 0.99,
            beta: 0.01,
            lr: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 40.0,
            episodes: 10_000,
            value_loss: ValueLoss::Advantage,
            eval_period: 200,
            eval_window: 100,
            eval_threshold: 0.95,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::Config { key: format!("train.{key}"), reason });
        if self.workers == 0 {
            return bad("workers", "must be >= 1".into());
        }
        if self.update_interval == 0 {
            return bad("update_interval", "must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must be in (0, 1], got {}", self.gamma));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta", format!("must be finite and >= 0, got {}", self.beta));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr", format!("must be finite and > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1", "must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2", "must be in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be > 0".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip", "must be >= 0".into());
        }
        if self.eval_period > 0 && self.eval_window == 0 {
            return bad("eval_window", "must be >= 1 when evaluation is enabled".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            gamma: self.gamma,
            beta: self.beta,
            value_loss: self.value_loss,
        }
    }
}

/// Everything a training run depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSetup {
    pub channel: ChannelParams,
    pub world: WorldParams,
    pub shape: NetShape,
    pub train: TrainConfig,
    pub seed: u64,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.world.validate()?;
        self.shape.validate()?;
        self.train.validate()
    }

    /// Deterministic initial parameters for the four networks.
    pub fn initial_nets(&self) -> Result<[Params<f32>; 4]> {
        let nets = (0..4)
            .map(|n| Params::init(self.shape, seed::substream(self.seed, "net", n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(nets.try_into().expect("four networks"))
    }
}

/// Builds the evaluator's policy from a snapshot.
pub type PolicyFactory = Arc<dyn Fn(Arc<[Params<f32>; 4]>) -> Box<dyn Policy> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshot: Arc<Snapshot>,
    pub episodes: usize,
    pub stopped_early: bool,
    pub evaluations: Vec<EvalPoint>,
    pub accepted: u64,
    pub rejected: u64,
}

pub struct Trainer {
    setup: TrainSetup,
    initial: Option<[Params<f32>; 4]>,
    eval_policy: PolicyFactory,
}

impl Trainer {
    pub fn new(setup: TrainSetup) -> Result<Self> {
        setup.validate()?;
        Ok(Self {
            setup,
            initial: None,
            eval_policy: Arc::new(|nets| Box::new(NetworkPolicy::new(nets, true))),
        })
    }

    /// Replaces the evaluator's greedy network policy (scripted baselines in tests).
    pub fn with_eval_policy(mut self, factory: PolicyFactory) -> Self {
        self.eval_policy = factory;
        self
    }

    /// Starts from the given parameters instead of a fresh initialization.
    pub fn with_initial_nets(mut self, nets: [Params<f32>; 4]) -> Result<Self> {
        for n in &nets {
            if *n.shape() != self.setup.shape {
                return Err(Error::Shape("initial networks do not match the configured shape".into()));
            }
        }
        self.initial = Some(nets);
        Ok(self)
    }

    pub fn setup(&self) -> &TrainSetup {
        &self.setup
    }

    /// Trains until the episode budget is spent or the evaluator signals a
    /// stop. `sink` sees every finished episode on the calling thread.
    pub fn run(self, mut sink: impl FnMut(&EpisodeStats) -> Result<()>) -> Result<TrainOutcome> {
        let setup = self.setup;
        let nets = match self.initial {
            Some(n) => n,
            None => setup.initial_nets()?,
        };
        let store = GlobalStore::new(nets, setup.train.adam(), setup.train.grad_clip);
        let next_episode = AtomicUsize::new(0);
        let completed = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let points = Mutex::new(Vec::new());
        let started = std::time::Instant::now();
        let (stats_tx, stats_rx) = mpsc::channel::<EpisodeStats>();
        let evaluating = setup.train.eval_period > 0;
        let (eval_tx, eval_rx) = mpsc::channel::<EvalRequest>();

        let mut sink_result = Ok(());
        let results: Vec<Result<()>> = std::thread::scope(|s| {
            let eval_handle = evaluating.then(|| {
                let ctx = evaluator::EvaluatorCtx {
                    setup: &setup,
                    store: &store,
                    stop: &stop,
                    points: &points,
                    policy: self.eval_policy.clone(),
                };
                s.spawn(move || ctx.run(eval_rx))
            });
            let handles: Vec<_> = (0..setup.train.workers)
                .map(|id| {
                    let ctx = worker::WorkerCtx {
                        id,
                        setup: &setup,
                        store: &store,
                        next_episode: &next_episode,
                        completed: &completed,
                        stop: &stop,
                        started,
                        stats: stats_tx.clone(),
                        eval: evaluating.then(|| eval_tx.clone()),
                    };
                    s.spawn(move || {
                        let r = ctx.run();
                        if r.is_err() {
                            ctx.store.shutdown();
                        }
                        r
                    })
                })
                .collect();
            drop(stats_tx);
            drop(eval_tx);
            for stats in stats_rx {
                if sink_result.is_ok() {
                    sink_result = sink(&stats);
                    if sink_result.is_err() {
                        store.shutdown();
                    }
                }
            }
            let mut out: Vec<Result<()>> = handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("worker panicked".into()))))
                .collect();
            if let Some(h) = eval_handle {
                out.push(h.join().unwrap_or_else(|_| Err(Error::Contract("evaluator panicked".into()))));
            }
            out
        });
        sink_result?;
        for r in results {
            match r {
                Ok(()) | Err(Error::Shutdown) => {}
                Err(e) => return Err(e),
            }
        }
        let evaluations = points.into_inner().expect("evaluation log poisoned");
        Ok(TrainOutcome {
            snapshot: store.snapshot(),
            episodes: completed.into_inner(),
            stopped_early: stop.into_inner(),
            evaluations,
            accepted: store.version(),
            rejected: store.rejected(),
        })
    }
}
