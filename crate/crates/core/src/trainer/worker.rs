use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Sender};
use std::time::Instant;

use serde::Serialize;

use super::evaluator::EvalRequest;
use super::loss::{loss_from_traces, LossBreakdown, LossTerms};
use super::store::GlobalStore;
use super::TrainSetup;
use crate::error::{Error, Result};
use crate::net::{forward, sample_action, ForwardTrace, Params};
use crate::seed;
use crate::world::{ActionVector, Env};

/// One finished training episode of one worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub wall_s: f64,
    pub episode: usize,
    pub worker: usize,
    pub movements: usize,
    pub success: bool,
    /// Summed rewards in `d, x, y, z` order.
    pub rewards: [f64; 4],
    /// Per-network losses averaged over the episode's batches.
    pub losses: [LossTerms; 4],
    pub batches: Vec<LossBreakdown>,
    /// Store version after the episode's last accepted batch.
    pub version: u64,
}

pub(crate) struct WorkerCtx<'a> {
    pub id: usize,
    pub setup: &'a TrainSetup,
    pub store: &'a GlobalStore,
    pub next_episode: &'a AtomicUsize,
    pub completed: &'a AtomicUsize,
    pub stop: &'a AtomicBool,
    pub started: Instant,
    pub stats: Sender<EpisodeStats>,
    pub eval: Option<Sender<EvalRequest>>,
}

impl WorkerCtx<'_> {
    pub fn run(&self) -> Result<()> {
        let cfg = &self.setup.train;
        let mut rng = seed::rng(self.setup.seed, "worker", self.id as u64);
        loop {
            if self.stop.load(Ordering::SeqCst) || self.store.is_shutdown() {
                return Ok(());
            }
            let episode = self.next_episode.fetch_add(1, Ordering::SeqCst);
            if episode >= cfg.episodes {
                return Ok(());
            }
            let stats = match self.episode(episode, &mut rng) {
                Ok(s) => s,
                Err(Error::Shutdown) => return Ok(()),
                Err(e) => return Err(e),
            };
            let done = self.completed.fetch_add(1, Ordering::SeqCst) + 1;
            if self.stats.send(stats).is_err() {
                return Ok(());
            }
            if let Some(eval) = &self.eval {
                if done.is_multiple_of(cfg.eval_period) {
                    self.request_eval(eval, done)?;
                }
            }
        }
    }

    fn request_eval(&self, eval: &Sender<EvalRequest>, episode: usize) -> Result<()> {
        // A single worker waits for the verdict so the run stays reproducible.
        let (reply_tx, reply_rx) = mpsc::channel();
        let sync = self.setup.train.workers == 1;
        let req = EvalRequest {
            episode,
            snapshot: self.store.snapshot(),
            reply: sync.then_some(reply_tx),
        };
        if eval.send(req).is_err() {
            return Ok(());
        }
        if sync {
            let _ = reply_rx.recv();
        }
        Ok(())
    }

    fn episode(&self, episode: usize, rng: &mut seed::Rng) -> Result<EpisodeStats> {
        let setup = self.setup;
        let settings = setup.train.loss_settings();
        let env_seed = seed::substream(setup.seed, "train-episode", episode as u64);
        let (mut env, mut obs) = Env::new(setup.channel, setup.world, env_seed)?;
        let mut totals = [0.0; 4];
        let mut movements = 0;
        let mut success = false;
        let mut batches = Vec::new();
        let mut version = self.store.version();
        loop {
            let snap = self.store.snapshot();
            let nets = &snap.nets;
            let mut traces: [Vec<ForwardTrace<f32>>; 4] = Default::default();
            let mut actions: [Vec<usize>; 4] = Default::default();
            let mut rewards: [Vec<f64>; 4] = Default::default();
            let mut done = false;
            for _ in 0..setup.train.update_interval {
                let mut idx = [0usize; 4];
                for n in 0..4 {
                    let (out, trace) = forward(&nets[n], &obs)?;
                    idx[n] = sample_action(&out.policy, rng, false)?;
                    traces[n].push(trace);
                    actions[n].push(idx[n]);
                }
                let step = env.step(&ActionVector::from_indices(idx)?)?;
                movements += 1;
                for n in 0..4 {
                    rewards[n].push(step.rewards[n]);
                    totals[n] += step.rewards[n];
                }
                obs = step.observation;
                if step.done {
                    done = true;
                    success = step.success;
                    break;
                }
            }
            let mut grads: [Params<f32>; 4] = std::array::from_fn(|n| Params::zeros(*nets[n].shape()));
            let mut breakdown = LossBreakdown::default();
            for n in 0..4 {
                // Terminal covers both success and the step limit.
                let next_value = if done { 0.0 } else { forward(&nets[n], &obs)?.0.value as f64 };
                breakdown.nets[n] = loss_from_traces(
                    &nets[n],
                    &traces[n],
                    &actions[n],
                    &rewards[n],
                    next_value,
                    &settings,
                    &mut grads[n],
                )?;
            }
            match self.store.apply(self.id, grads) {
                Ok(v) => version = v,
                Err(Error::NonFinite(_)) => {}
                Err(e) => return Err(e),
            }
            batches.push(breakdown);
            if done {
                break;
            }
        }
        Ok(EpisodeStats {
            wall_s: self.started.elapsed().as_secs_f64(),
            episode,
            worker: self.id,
            movements,
            success,
            rewards: totals,
            losses: mean_losses(&batches),
            batches,
            version,
        })
    }
}

fn mean_losses(batches: &[LossBreakdown]) -> [LossTerms; 4] {
    let mut out = [LossTerms::default(); 4];
    if batches.is_empty() {
        return out;
    }
    let k = batches.len() as f64;
    for b in batches {
        for (o, t) in out.iter_mut().zip(&b.nets) {
            o.policy += t.policy / k;
            o.value += t.value / k;
            o.entropy += t.entropy / k;
            o.total += t.total / k;
        }
    }
    out
}
