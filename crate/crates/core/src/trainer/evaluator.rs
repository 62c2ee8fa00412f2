use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::store::{GlobalStore, Snapshot};
use super::{PolicyFactory, TrainSetup};
use crate::error::Result;
use crate::eval::run_episodes;
use crate::par::ExecMode;
use crate::seed;

pub struct EvalRequest {
    /// Completed training episodes when the request was made.
    pub episode: usize,
    pub snapshot: Arc<Snapshot>,
    pub reply: Option<Sender<EvalPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalPoint {
    pub episode: usize,
    pub version: u64,
    pub success_rate: f64,
    pub stop: bool,
}

pub(crate) struct EvaluatorCtx<'a> {
    pub setup: &'a TrainSetup,
    pub store: &'a GlobalStore,
    pub stop: &'a AtomicBool,
    pub points: &'a Mutex<Vec<EvalPoint>>,
    pub policy: PolicyFactory,
}

impl EvaluatorCtx<'_> {
    pub fn run(&self, requests: Receiver<EvalRequest>) -> Result<()> {
        let cfg = &self.setup.train;
        for req in requests {
            if self.stop.load(Ordering::SeqCst) || self.store.is_shutdown() {
                if let Some(reply) = req.reply {
                    let _ = reply.send(EvalPoint {
                        episode: req.episode,
                        version: req.snapshot.version,
                        success_rate: f64::NAN,
                        stop: true,
                    });
                }
                continue;
            }
            let policy = (self.policy)(req.snapshot.nets.clone());
            let records = run_episodes(
                policy.as_ref(),
                &self.setup.channel,
                &self.setup.world,
                cfg.eval_window,
                seed::substream(self.setup.seed, "eval", req.episode as u64),
                ExecMode::default(),
            )?;
            let wins = records.iter().filter(|r| r.success).count();
            let success_rate = wins as f64 / records.len() as f64;
            let stop = success_rate >= cfg.eval_threshold;
            let point = EvalPoint {
                episode: req.episode,
                version: req.snapshot.version,
                success_rate,
                stop,
            };
            log::info!(
                "evaluation after {} episodes (version {}): success rate {:.3}",
                point.episode,
                point.version,
                success_rate
            );
            self.points.lock().expect("evaluation log poisoned").push(point);
            if stop {
                self.stop.store(true, Ordering::SeqCst);
            }
            if let Some(reply) = req.reply {
                let _ = reply.send(point);
            }
        }
        Ok(())
    }
}
