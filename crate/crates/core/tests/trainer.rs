use std::sync::Arc;

use uavchase_core::channel::ChannelParams;
use uavchase_core::net::{forward_inputs, AdamConfig, NetShape, Params};
use uavchase_core::policy::OracleChaser;
use uavchase_core::trainer::{
    decode, encode, loss_from_traces, EpisodeStats, GlobalStore, LossSettings, TrainConfig, TrainSetup, Trainer,
    ValueLoss,
};
use uavchase_core::world::WorldParams;

fn tiny_shape() -> NetShape {
    NetShape {
        input: 6,
        lstm_layers: 1,
        hidden: 8,
        dense_layers: 1,
        dense_width: 8,
        actions: 5,
    }
}

fn setup(workers: usize, episodes: usize) -> TrainSetup {
    TrainSetup {
        channel: ChannelParams::default(),
        world: WorldParams {
            obs_len: 5,
            initial_radius_m: 10.0,
            max_steps: 40,
            ..WorldParams::default()
        },
        shape: tiny_shape(),
        train: TrainConfig {
            workers,
            episodes,
            lr: 1e-3,
            eval_period: 0,
            ..TrainConfig::default()
        },
        seed: 11,
    }
}

fn collect(setup: TrainSetup) -> (Vec<EpisodeStats>, uavchase_core::trainer::TrainOutcome) {
    let mut stats = Vec::new();
    let out = Trainer::new(setup)
        .unwrap()
        .run(|s| {
            stats.push(s.clone());
            Ok(())
        })
        .unwrap();
    (stats, out)
}

#[test]
fn single_worker_is_reproducible() {
    let (a, oa) = collect(setup(1, 6));
    let (b, ob) = collect(setup(1, 6));
    let strip = |v: &[EpisodeStats]| v.iter().map(|s| (s.episode, s.movements, s.rewards, s.losses)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(encode(&oa.snapshot.nets), encode(&ob.snapshot.nets));
}

#[test]
fn version_counts_accepted_batches() {
    let (stats, out) = collect(setup(3, 9));
    assert_eq!(stats.len(), 9);
    assert_eq!(out.episodes, 9);
    let batches: usize = stats.iter().map(|s| s.batches.len()).sum();
    assert_eq!(out.accepted as usize + out.rejected as usize, batches);
    assert_eq!(out.snapshot.version, out.accepted);
    assert!(out.snapshot.nets.iter().all(|n| n.is_finite()));
    let mut eps: Vec<usize> = stats.iter().map(|s| s.episode).collect();
    eps.sort_unstable();
    assert_eq!(eps, (0..9).collect::<Vec<_>>());
}

#[test]
fn loss_identity_holds_for_every_batch() {
    let s = setup(2, 4);
    let beta = s.train.beta;
    let (stats, _) = collect(s);
    for st in &stats {
        for b in &st.batches {
            for t in &b.nets {
                assert!((t.total - (t.policy + t.value - beta * t.entropy)).abs() < 1e-6);
                assert!(t.entropy >= 0.0 && t.entropy <= 5f64.ln() + 1e-9);
            }
        }
    }
}

#[test]
fn unreachable_threshold_never_stops() {
    let mut s = setup(1, 4);
    s.train.eval_period = 2;
    s.train.eval_window = 3;
    s.train.eval_threshold = 1.01;
    let (stats, out) = collect(s);
    assert_eq!(stats.len(), 4);
    assert!(!out.stopped_early);
    assert_eq!(out.evaluations.len(), 2);
}

#[test]
fn zero_threshold_stops_at_first_evaluation() {
    let mut s = setup(1, 10);
    s.train.eval_period = 2;
    s.train.eval_window = 2;
    s.train.eval_threshold = 0.0;
    let (stats, out) = collect(s);
    assert!(out.stopped_early);
    assert_eq!(stats.len(), 2);
    assert_eq!(out.evaluations.len(), 1);
}

#[test]
fn oracle_evaluator_stops_immediately() {
    let mut s = setup(1, 10);
    s.world.max_steps = 500;
    s.train.eval_period = 1;
    s.train.eval_window = 20;
    let trainer = Trainer::new(s)
        .unwrap()
        .with_eval_policy(Arc::new(|_| Box::new(OracleChaser::default())));
    let out = trainer.run(|_| Ok(())).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.evaluations[0].success_rate, 1.0);
    assert_eq!(out.episodes, 1);
}

#[test]
fn invalid_config_is_rejected() {
    let mut s = setup(0, 1);
    assert!(Trainer::new(s).is_err());
    s.train.workers = 1;
    s.train.gamma = 0.0;
    assert!(Trainer::new(s).is_err());
}

#[test]
fn checkpoint_of_trained_nets_round_trips() {
    let (_, out) = collect(setup(1, 2));
    let bytes = encode(&out.snapshot.nets);
    let back = decode(&bytes, &tiny_shape()).unwrap();
    assert_eq!(encode(&back), bytes);
}

/// β = 0, one repeated state, one action and a return pinned to keep the
/// advantage positive: the chosen action's probability climbs every update.
#[test]
fn bandit_policy_gradient_increases_chosen_action() {
    let shape = tiny_shape();
    let nets: [Params<f32>; 4] = std::array::from_fn(|n| Params::init(shape, n as u64).unwrap());
    let store = GlobalStore::new(
        nets,
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        40.0,
    );
    let settings = LossSettings {
        gamma: 0.99,
        beta: 0.0,
        value_loss: ValueLoss::Advantage,
    };
    let input = vec![-70.0f32; 6];
    let std_input: Vec<f32> = input.iter().map(|x| (x + 60.0) / 20.0).collect();
    let mut prev = 0.0;
    for it in 0..50 {
        let snap = store.snapshot();
        let mut grads: [Params<f32>; 4] = std::array::from_fn(|_| Params::zeros(shape));
        let mut p_action = 0.0;
        for n in 0..4 {
            let (out, trace) = forward_inputs(&snap.nets[n], 1, &std_input).unwrap();
            if n == 0 {
                p_action = out.policy[2] as f64;
            }
            // reward = V + 1 makes ADV = +1 exactly
            let reward = out.value as f64 + 1.0;
            loss_from_traces(&snap.nets[n], &[trace], &[2], &[reward], 0.0, &settings, &mut grads[n]).unwrap();
        }
        if it > 0 {
            assert!(p_action > prev, "iteration {it}: {p_action} <= {prev}");
        }
        if p_action > 0.999 {
            break;
        }
        prev = p_action;
        store.apply(0, grads).unwrap();
    }
}
