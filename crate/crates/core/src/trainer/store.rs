//! The global agent: published parameter snapshots plus serialized Adam
//! application of worker gradients.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::net::{clip_global_norm, AdamConfig, Gradients, OptimizerState, Params};

/// An immutable, fully applied parameter version.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub nets: Arc<[Params<f32>; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub version: u64,
    pub worker: usize,
    /// Pre-clipping gradient norms per network.
    pub grad_norms: [f64; 4],
}

struct ApplyState {
    nets: [Params<f32>; 4],
    opts: [OptimizerState<f32>; 4],
    log: Vec<UpdateRecord>,
}

pub struct GlobalStore {
    current: RwLock<Arc<Snapshot>>,
    apply: Mutex<ApplyState>,
    adam: AdamConfig,
    grad_clip: f64,
    shutdown: AtomicBool,
    rejected: AtomicU64,
}

impl GlobalStore {
    /// `grad_clip <= 0` disables clipping.
    pub fn new(nets: [Params<f32>; 4], adam: AdamConfig, grad_clip: f64) -> Self {
        let opts = std::array::from_fn(|n| OptimizerState::new(&nets[n], adam));
        let snapshot = Snapshot {
            version: 0,
            nets: Arc::new(nets.clone()),
        };
        Self {
            current: RwLock::new(Arc::new(snapshot)),
            apply: Mutex::new(ApplyState {
                nets,
                opts,
                log: Vec::new(),
            }),
            adam,
            grad_clip,
            shutdown: AtomicBool::new(false),
            rejected: AtomicU64::new(0),
        }
    }

    /// Latest published version; never a partially applied one.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }

    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::SeqCst)
    }

    pub fn update_log(&self) -> Vec<UpdateRecord> {
        self.apply.lock().expect("apply lock poisoned").log.clone()
    }

    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    pub fn is_shutdown(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }

    /// Applies one gradient batch (one Adam step per network) and publishes
    /// the result. Batches computed against stale snapshots are accepted.
    /// Non-finite batches are rejected and leave the version unchanged.
    pub fn apply(&self, worker: usize, mut grads: [Gradients<f32>; 4]) -> Result<u64> {
        if self.is_shutdown() {
            return Err(Error::Shutdown);
        }
        let mut state = self.apply.lock().expect("apply lock poisoned");
        for (g, p) in grads.iter().zip(&state.nets) {
            p.check_same_shape(g)?;
        }
        if let Some(n) = grads.iter().position(|g| !g.is_finite()) {
            self.rejected.fetch_add(1, Ordering::SeqCst);
            log::warn!("worker {worker}: rejected gradient batch with non-finite values in network {n}");
            return Err(Error::NonFinite(format!("gradient of network {n}")));
        }
        let mut grad_norms = [0.0; 4];
        for (n, g) in grads.iter_mut().enumerate() {
            grad_norms[n] = if self.grad_clip > 0.0 {
                clip_global_norm(g, self.grad_clip)
            } else {
                g.norm()
            };
        }
        let ApplyState { nets, opts, log } = &mut *state;
        for n in 0..4 {
            opts[n].apply(&mut nets[n], &grads[n], self.adam.lr)?;
        }
        if nets.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        let version = log.len() as u64 + 1;
        log.push(UpdateRecord {
            version,
            worker,
            grad_norms,
        });
        let snapshot = Arc::new(Snapshot {
            version,
            nets: Arc::new(nets.clone()),
        });
        *self.current.write().expect("snapshot lock poisoned") = snapshot;
        Ok(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetShape;

    fn shape() -> NetShape {
        NetShape {
            input: 6,
            lstm_layers: 1,
            hidden: 3,
            dense_layers: 1,
            dense_width: 3,
            actions: 5,
        }
    }

    fn store() -> GlobalStore {
        let nets = std::array::from_fn(|n| Params::init(shape(), n as u64).unwrap());
        GlobalStore::new(nets, AdamConfig { lr: 1e-3, ..AdamConfig::default() }, 40.0)
    }

    fn zero_grads() -> [Gradients<f32>; 4] {
        std::array::from_fn(|_| Params::zeros(shape()))
    }

    #[test]
    fn zero_gradients_bump_version_only() {
        let s = store();
        let before = s.snapshot();
        assert_eq!(s.apply(0, zero_grads()).unwrap(), 1);
        let after = s.snapshot();
        assert_eq!(after.version, 1);
        assert_eq!(before.nets, after.nets);
    }

    #[test]
    fn nan_batch_rejected() {
        let s = store();
        let mut g = zero_grads();
        g[2].as_mut_slice()[0] = f32::NAN;
        assert!(matches!(s.apply(0, g), Err(Error::NonFinite(_))));
        assert_eq!(s.version(), 0);
        assert_eq!(s.rejected(), 1);
    }

    #[test]
    fn concurrent_submissions_serialize() {
        let s = store();
        std::thread::scope(|scope| {
            for w in 0..2 {
                let s = &s;
                scope.spawn(move || {
                    let mut g = zero_grads();
                    g[0].as_mut_slice()[0] = 1.0;
                    s.apply(w, g).unwrap();
                });
            }
        });
        assert_eq!(s.version(), 2);
        let log = s.update_log();
        assert_eq!(log.iter().map(|r| r.version).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn shutdown_refuses_updates() {
        let s = store();
        s.shutdown();
        assert!(matches!(s.apply(0, zero_grads()), Err(Error::Shutdown)));
    }
}
