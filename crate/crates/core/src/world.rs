//! The pursuit environment.
//!
//! Six tracker UAVs sit at `O ± d·e_axis` around the swarm center `O`. Each
//! movement the controller observes `L` synchronized RSSI rows, then picks a
//! spacing `d ∈ {1..5}` m and a center translation in `{-4,-2,0,2,4}` m per
//! axis. Axis rewards are the reduction of `|O[n] - U[n]|`; the spacing
//! network is rewarded with the reduction of the Euclidean distance.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, FadingProcess, RX_COUNT};
use crate::error::{Error, Result};
use crate::seed;

pub type Vec3 = [f64; 3];

pub const SPACING_ACTIONS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
pub const MOVE_ACTIONS: [f64; 5] = [-4.0, -2.0, 0.0, 2.0, 4.0];

/// Network/reward index order: spacing, x, y, z.
pub const DIMENSIONS: [char; 4] = ['d', 'x', 'y', 'z'];

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Rows per observation (L).
    pub obs_len: usize,
    /// Success threshold th (m).
    pub success_radius_m: f64,
    pub max_steps: usize,
    pub initial_radius_m: f64,
    pub initial_spacing_m: f64,
    /// Tracker speed used to advance the channel during travel (m/s).
    pub speed_mps: f64,
    pub freeze_during_travel: bool,
    /// Per-UAV distances below this are clamped before path loss.
    pub min_distance_m: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            obs_len: 50,
            success_radius_m: 2.0,
            max_steps: 500,
            initial_radius_m: 100.0,
            initial_spacing_m: 3.0,
            speed_mps: 2.0,
            freeze_during_travel: false,
            min_distance_m: 0.1,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        if self.obs_len == 0 {
            return Err(Error::domain("obs_len must be >= 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps must be >= 1"));
        }
        if !(self.success_radius_m >= 0.0) {
            return Err(Error::domain("success radius must be >= 0"));
        }
        if !(self.initial_radius_m >= 0.0) || !self.initial_radius_m.is_finite() {
            return Err(Error::domain("initial radius must be finite and >= 0"));
        }
        if !SPACING_ACTIONS.contains(&self.initial_spacing_m) {
            return Err(Error::domain("initial spacing must be one of 1..=5 m"));
        }
        if !(self.speed_mps > 0.0) || !self.speed_mps.is_finite() {
            return Err(Error::domain("speed must be > 0"));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::domain("min distance must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmState {
    pub center: Vec3,
    pub spacing: f64,
    pub steps: usize,
}

impl SwarmState {
    /// Tracker positions in receiver order `+x, -x, +y, -y, +z, -z`.
    pub fn positions(&self) -> [Vec3; RX_COUNT] {
        std::array::from_fn(|u| {
            let mut p = self.center;
            let sign = if u % 2 == 0 { 1.0 } else { -1.0 };
            p[u / 2] += sign * self.spacing;
            p
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub position: Vec3,
}

/// `L × 6` RSSI matrix; row `i` holds the six receivers at sample instant `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    rows: usize,
    data: Vec<f64>,
    duration_s: f64,
}

impl Observation {
    pub fn new(rows: usize, data: Vec<f64>, duration_s: f64) -> Result<Self> {
        if data.len() != rows * RX_COUNT {
            return Err(Error::Shape(format!(
                "observation of {rows} rows needs {} values, got {}",
                rows * RX_COUNT,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            data,
            duration_s,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * RX_COUNT..(i + 1) * RX_COUNT]
    }

    pub fn get(&self, i: usize, u: usize) -> f64 {
        self.data[i * RX_COUNT + u]
    }

    pub fn column(&self, u: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(u).step_by(RX_COUNT).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Capture time `L / F` (s).
    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

/// One value per action space, in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVector {
    pub spacing: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl ActionVector {
    pub fn from_indices(idx: [usize; 4]) -> Result<Self> {
        let pick = |table: &[f64; 5], i: usize| {
            table
                .get(i)
                .copied()
                .ok_or_else(|| Error::Contract(format!("action index {i} out of range")))
        };
        Ok(Self {
            spacing: pick(&SPACING_ACTIONS, idx[0])?,
            dx: pick(&MOVE_ACTIONS, idx[1])?,
            dy: pick(&MOVE_ACTIONS, idx[2])?,
            dz: pick(&MOVE_ACTIONS, idx[3])?,
        })
    }

    pub fn indices(&self) -> Result<[usize; 4]> {
        self.validate()?;
        let find = |table: &[f64; 5], v: f64| table.iter().position(|&a| a == v).unwrap();
        Ok([
            find(&SPACING_ACTIONS, self.spacing),
            find(&MOVE_ACTIONS, self.dx),
            find(&MOVE_ACTIONS, self.dy),
            find(&MOVE_ACTIONS, self.dz),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if !SPACING_ACTIONS.contains(&self.spacing) {
            return Err(Error::Contract(format!(
                "spacing action {} not in {{1,2,3,4,5}}",
                self.spacing
            )));
        }
        for (name, v) in [("x", self.dx), ("y", self.dy), ("z", self.dz)] {
            if !MOVE_ACTIONS.contains(&v) {
                return Err(Error::Contract(format!(
                    "{name} action {v} not in {{-4,-2,0,2,4}}"
                )));
            }
        }
        Ok(())
    }

    pub fn translation(&self) -> Vec3 {
        [self.dx, self.dy, self.dz]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Rewards in `d, x, y, z` order (m).
    pub rewards: [f64; 4],
    pub observation: Observation,
    pub done: bool,
    pub success: bool,
    /// Center displacement `|O_{t+1} - O_t|` (m).
    pub travel_m: f64,
}

/// Distance reward followed by the three axis rewards.
pub fn rewards(before: Vec3, after: Vec3, target: Vec3) -> [f64; 4] {
    let mut r = [0.0; 4];
    r[0] = distance(before, target) - distance(after, target);
    for n in 0..3 {
        r[n + 1] = (before[n] - target[n]).abs() - (after[n] - target[n]).abs();
    }
    r
}

/// A uniformly random point on the sphere of `radius` around the origin.
pub fn sample_on_sphere(rng: &mut seed::Rng, radius: f64) -> Vec3 {
    loop {
        let v: Vec3 = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = norm(v);
        if n > 1e-12 {
            return v.map(|x| x / n * radius);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    channel: ChannelParams,
    params: WorldParams,
    swarm: SwarmState,
    target: Target,
    fading: FadingProcess,
    done: bool,
}

impl Env {
    /// Builds an environment and performs the first reset.
    pub fn new(channel: ChannelParams, params: WorldParams, seed: u64) -> Result<(Self, Observation)> {
        channel.validate()?;
        params.validate()?;
        let fading = FadingProcess::new(&channel, seed::substream(seed, "channel", 0))?;
        let mut env = Self {
            channel,
            params,
            swarm: SwarmState {
                center: [0.0; 3],
                spacing: params.initial_spacing_m,
                steps: 0,
            },
            target: Target { position: [0.0; 3] },
            fading,
            done: false,
        };
        let obs = env.reset(seed)?;
        Ok((env, obs))
    }

    /// New episode: center at the origin, target uniform on the sphere,
    /// fresh fading process, first observation.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = seed::rng(seed, "target", 0);
        self.target = Target {
            position: sample_on_sphere(&mut rng, self.params.initial_radius_m),
        };
        self.swarm = SwarmState {
            center: [0.0; 3],
            spacing: self.params.initial_spacing_m,
            steps: 0,
        };
        self.fading = FadingProcess::new(&self.channel, seed::substream(seed, "channel", 0))?;
        self.done = false;
        self.observe()
    }

    /// Captures `L` samples, advancing channel time by `L / F`.
    pub fn observe(&mut self) -> Result<Observation> {
        let rows = self.params.obs_len;
        let dt = 1.0 / self.channel.sample_hz;
        let distances = self.receiver_distances();
        let mut data = Vec::with_capacity(rows * RX_COUNT);
        let series = self.fading.gains_series(self.fading.time() + dt, dt, rows);
        for gains in series {
            self.fading.skip(dt)?;
            for u in 0..RX_COUNT {
                data.push(self.channel.rssi_with_gain(distances[u], gains[u])?);
            }
        }
        Observation::new(rows, data, rows as f64 * dt)
    }

    fn receiver_distances(&self) -> [f64; RX_COUNT] {
        let target = self.target.position;
        let min = self.params.min_distance_m;
        self.swarm.positions().map(|p| {
            let d = distance(p, target);
            if d < min {
                log::warn!("tracker within {d:.3} m of target; clamping to {min} m");
                min
            } else {
                d
            }
        })
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        action.validate()?;
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        let before = self.swarm.center;
        let t = action.translation();
        let after = [before[0] + t[0], before[1] + t[1], before[2] + t[2]];
        self.swarm.spacing = action.spacing;
        self.swarm.center = after;
        self.swarm.steps += 1;

        let travel_m = distance(before, after);
        let rewards = rewards(before, after, self.target.position);
        let success = distance(after, self.target.position) <= self.params.success_radius_m;
        let done = success || self.swarm.steps >= self.params.max_steps;
        self.done = done;

        if !self.params.freeze_during_travel {
            self.fading.skip(travel_m / self.params.speed_mps)?;
        }
        let observation = self.observe()?;
        Ok(StepOutcome {
            rewards,
            observation,
            done,
            success,
            travel_m,
        })
    }

    pub fn swarm(&self) -> &SwarmState {
        &self.swarm
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn channel_time(&self) -> f64 {
        self.fading.time()
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Distance from the swarm center to the target.
    pub fn range(&self) -> f64 {
        distance(self.swarm.center, self.target.position)
    }

    /// Test/analysis hook: place swarm and target explicitly.
    pub fn set_state(&mut self, swarm: SwarmState, target: Target) {
        self.swarm = swarm;
        self.target = target;
        self.done = false;
    }
}
