//! Batch evaluation and tracking metrics: movement CDFs, nearest-rank
//! percentiles and total tracking time `τ = M·L/F + Σ d_m / v`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::policy::{DecisionContext, Policy};
use crate::seed;
use crate::world::{Env, StepOutcome, Vec3, WorldParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Episodes per sweep condition.
    pub episodes: usize,
    pub greedy: bool,
    pub sweep_f: Vec<f64>,
    pub sweep_rho: Vec<f64>,
    pub sweep_v: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            greedy: true,
            sweep_f: vec![10.0, 20.0, 50.0, 100.0],
            sweep_rho: vec![0.1, 0.5, 0.9],
            sweep_v: vec![2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub movements: usize,
    pub success: bool,
    /// Center displacement of every movement (m).
    pub travel_m: Vec<f64>,
    pub sample_hz: f64,
    pub rho: f64,
    pub speed_mps: f64,
}

impl EpisodeRecord {
    pub fn total_travel_m(&self) -> f64 {
        self.travel_m.iter().sum()
    }
}

/// One movement of a traced episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub movement: usize,
    /// Swarm center after the movement.
    pub center: Vec3,
    pub spacing: f64,
    pub target: Vec3,
    pub rewards: [f64; 4],
    /// Center-to-target distance after the movement.
    pub distance_m: f64,
}

fn play(
    policy: &dyn Policy,
    channel: &ChannelParams,
    world: &WorldParams,
    env_seed: u64,
    rng: &mut seed::Rng,
    mut on_step: impl FnMut(&Env, &StepOutcome),
) -> Result<(usize, bool, Vec<f64>)> {
    let (mut env, mut obs) = Env::new(*channel, *world, env_seed)?;
    let mut travel = Vec::new();
    loop {
        let ctx = DecisionContext {
            observation: &obs,
            swarm: env.swarm(),
            target: env.target(),
        };
        let action = policy.decide(&ctx, rng)?;
        let out = env.step(&action)?;
        on_step(&env, &out);
        travel.push(out.travel_m);
        if out.done {
            return Ok((travel.len(), out.success, travel));
        }
        obs = out.observation;
    }
}

/// Plays one episode to success or the step limit.
pub fn run_episode(
    policy: &dyn Policy,
    channel: &ChannelParams,
    world: &WorldParams,
    env_seed: u64,
    rng: &mut seed::Rng,
) -> Result<(usize, bool, Vec<f64>)> {
    play(policy, channel, world, env_seed, rng, |_, _| {})
}

/// Replays episode `index` of `run_episodes(.., seed, ..)` movement by movement.
pub fn trace_episode(
    policy: &dyn Policy,
    channel: &ChannelParams,
    world: &WorldParams,
    seed: u64,
    index: usize,
) -> Result<Vec<TraceRow>> {
    let env_seed = seed::substream(seed, "eval-episode", index as u64);
    let mut rng = seed::rng(seed, "eval-policy", index as u64);
    let mut rows = Vec::new();
    play(policy, channel, world, env_seed, &mut rng, |env, out| {
        let swarm = env.swarm();
        rows.push(TraceRow {
            movement: rows.len() + 1,
            center: swarm.center,
            spacing: swarm.spacing,
            target: env.target().position,
            rewards: out.rewards,
            distance_m: env.range(),
        });
    })?;
    Ok(rows)
}

/// `count` independent episodes; episode `i` is seeded from `(seed, i)` only,
/// so results do not depend on scheduling.
pub fn run_episodes(
    policy: &dyn Policy,
    channel: &ChannelParams,
    world: &WorldParams,
    count: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Vec<EpisodeRecord>> {
    channel.validate()?;
    world.validate()?;
    par::map_range_with(mode, count, |i| {
        let env_seed = seed::substream(seed, "eval-episode", i as u64);
        let mut rng = seed::rng(seed, "eval-policy", i as u64);
        let (movements, success, travel_m) = run_episode(policy, channel, world, env_seed, &mut rng)?;
        Ok(EpisodeRecord {
            episode: i,
            seed: env_seed,
            movements,
            success,
            travel_m,
            sample_hz: channel.sample_hz,
            rho: channel.rho,
            speed_mps: world.speed_mps,
        })
    })
    .into_iter()
    .collect()
}

fn successful_movements(records: &[EpisodeRecord]) -> Vec<usize> {
    let mut m: Vec<usize> = records.iter().filter(|r| r.success).map(|r| r.movements).collect();
    m.sort_unstable();
    m
}

/// Empirical CDF of movements over successful episodes as
/// `(movements, cumulative fraction)` steps.
pub fn cdf(records: &[EpisodeRecord]) -> Result<Vec<(usize, f64)>> {
    cdf_of(&successful_movements(records))
}

pub fn cdf_of(sorted_or_not: &[usize]) -> Result<Vec<(usize, f64)>> {
    if sorted_or_not.is_empty() {
        return Err(Error::Empty("no successful episodes, CDF is empty".into()));
    }
    let mut v = sorted_or_not.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, m) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *m => last.1 = frac,
            _ => out.push((*m, frac)),
        }
    }
    Ok(out)
}

/// Nearest-rank percentile of successful-episode movements.
pub fn percentile(records: &[EpisodeRecord], p: f64) -> Result<usize> {
    percentile_of(&successful_movements(records), p)
}

/// Smallest value whose empirical CDF reaches `p / 100`.
pub fn percentile_of(values: &[usize], p: f64) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of no values".into()));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::domain(format!("percentile must be in (0, 100], got {p}")));
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Ok(v[rank.clamp(1, v.len()) - 1])
}

/// Total tracking time: `M · L / F` of observation plus `Σ d_m / v` of travel.
pub fn tracking_time(record: &EpisodeRecord, obs_len: usize, sample_hz: f64, speed_mps: f64) -> Result<f64> {
    tracking_time_parts(record.movements, record.total_travel_m(), obs_len, sample_hz, speed_mps)
}

pub fn tracking_time_parts(
    movements: usize,
    total_travel_m: f64,
    obs_len: usize,
    sample_hz: f64,
    speed_mps: f64,
) -> Result<f64> {
    if !(sample_hz > 0.0) {
        return Err(Error::domain(format!("sample rate must be > 0, got {sample_hz}")));
    }
    if !(speed_mps > 0.0) {
        return Err(Error::domain(format!("speed must be > 0, got {speed_mps}")));
    }
    Ok(movements as f64 * obs_len as f64 / sample_hz + total_travel_m / speed_mps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub sample_hz: f64,
    pub rho: f64,
    pub speed_mps: f64,
    pub episodes: usize,
    pub success_rate: f64,
    pub p50: Option<usize>,
    pub p90: Option<usize>,
    /// Mean τ over successful episodes (s).
    pub mean_tau_s: Option<f64>,
}

pub fn summarize(records: &[EpisodeRecord], sample_hz: f64, rho: f64, speed_mps: f64, obs_len: usize) -> Result<MetricsRow> {
    let n = records.len();
    let wins: Vec<&EpisodeRecord> = records.iter().filter(|r| r.success).collect();
    let taus = wins
        .iter()
        .map(|r| tracking_time(r, obs_len, sample_hz, speed_mps))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsRow {
        sample_hz,
        rho,
        speed_mps,
        episodes: n,
        success_rate: if n == 0 { 0.0 } else { wins.len() as f64 / n as f64 },
        p50: percentile(records, 50.0).ok(),
        p90: percentile(records, 90.0).ok(),
        mean_tau_s: if taus.is_empty() {
            None
        } else {
            Some(taus.iter().sum::<f64>() / taus.len() as f64)
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsRow,
}

/// Evaluates `policy` on every `F × ρ × v` combination of `cfg`, reusing the
/// same episode seeds across conditions.
pub fn sweep(
    policy: &dyn Policy,
    base_channel: &ChannelParams,
    base_world: &WorldParams,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<SweepResult>> {
    let mut out = Vec::new();
    for &f in &cfg.sweep_f {
        for &rho in &cfg.sweep_rho {
            for &v in &cfg.sweep_v {
                let channel = ChannelParams {
                    sample_hz: f,
                    rho,
                    ..*base_channel
                };
                let world = WorldParams {
                    speed_mps: v,
                    ..*base_world
                };
                let records = run_episodes(policy, &channel, &world, cfg.episodes, seed, ExecMode::default())?;
                let summary = summarize(&records, f, rho, v, world.obs_len)?;
                out.push(SweepResult { records, summary });
            }
        }
    }
    Ok(out)
}

pub const EVAL_CSV_HEADER: &str = "F,rho,v,episode,success,movements,sum_dist_m,tau_s";
pub const TRACE_CSV_HEADER: &str = "move,Ox,Oy,Oz,d_t,Ux,Uy,Uz,Rd,Rx,Ry,Rz,dist";
pub const SUMMARY_CSV_HEADER: &str = "F,rho,v,n,success_rate,p50,p90,mean_tau_s";

pub fn write_eval_csv<W: Write>(mut w: W, records: &[EpisodeRecord], obs_len: usize, header: bool) -> std::io::Result<()> {
    if header {
        writeln!(w, "{EVAL_CSV_HEADER}")?;
    }
    for r in records {
        let tau = tracking_time(r, obs_len, r.sample_hz, r.speed_mps).map_err(std::io::Error::other)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.sample_hz,
            r.rho,
            r.speed_mps,
            r.episode,
            u8::from(r.success),
            r.movements,
            r.total_travel_m(),
            tau
        )?;
    }
    Ok(())
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.sample_hz,
            r.rho,
            r.speed_mps,
            r.episodes,
            r.success_rate,
            opt(&r.p50),
            opt(&r.p90),
            opt(&r.mean_tau_s)
        )?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in rows {
        let [ox, oy, oz] = r.center;
        let [ux, uy, uz] = r.target;
        let [rd, rx, ry, rz] = r.rewards;
        writeln!(
            w,
            "{},{ox},{oy},{oz},{},{ux},{uy},{uz},{rd},{rx},{ry},{rz},{}",
            r.movement, r.spacing, r.distance_m
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{OracleChaser, UniformRandomPolicy};

    fn rec(movements: usize, success: bool) -> EpisodeRecord {
        EpisodeRecord {
            episode: 0,
            seed: 0,
            movements,
            success,
            travel_m: vec![1.0; movements],
            sample_hz: 10.0,
            rho: 0.5,
            speed_mps: 2.0,
        }
    }

    fn los() -> ChannelParams {
        ChannelParams {
            k_factor: f64::INFINITY,
            ..ChannelParams::default()
        }
    }

    #[test]
    fn cdf_example() {
        let r = [rec(3, true), rec(1, true), rec(2, true)];
        let c = cdf(&r).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], (1, 1.0 / 3.0));
        assert_eq!(c[1], (2, 2.0 / 3.0));
        assert_eq!(c[2], (3, 1.0));
    }

    #[test]
    fn cdf_identical_and_failures() {
        let r = [rec(4, true), rec(4, true), rec(9, false)];
        assert_eq!(cdf(&r).unwrap(), vec![(4, 1.0)]);
        assert!(matches!(cdf(&[rec(5, false)]), Err(Error::Empty(_))));
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<usize> = (1..=10).collect();
        assert_eq!(percentile_of(&v, 90.0).unwrap(), 9);
        assert_eq!(percentile_of(&v, 100.0).unwrap(), 10);
        assert_eq!(percentile_of(&[7], 1.0).unwrap(), 7);
        assert_eq!(percentile_of(&[7], 100.0).unwrap(), 7);
        assert!(percentile_of(&[], 50.0).is_err());
        assert!(percentile_of(&v, 0.0).is_err());
    }

    #[test]
    fn tracking_time_examples() {
        assert_eq!(tracking_time_parts(0, 0.0, 50, 10.0, 2.0).unwrap(), 0.0);
        assert_eq!(tracking_time_parts(10, 100.0, 50, 10.0, 2.0).unwrap(), 100.0);
        let slow = tracking_time_parts(10, 100.0, 50, 10.0, 2.0).unwrap();
        let fast = tracking_time_parts(10, 100.0, 50, 10.0, 4.0).unwrap();
        assert_eq!(slow - fast, 25.0);
        assert!(tracking_time_parts(1, 1.0, 50, 0.0, 2.0).is_err());
        assert!(tracking_time_parts(1, 1.0, 50, 10.0, -1.0).is_err());
    }

    #[test]
    fn zero_episodes_is_empty() {
        let r = run_episodes(&OracleChaser::default(), &los(), &WorldParams::default(), 0, 1, ExecMode::default()).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn episodes_are_reproducible_across_modes() {
        let world = WorldParams {
            initial_radius_m: 10.0,
            max_steps: 30,
            obs_len: 4,
            ..WorldParams::default()
        };
        let ch = ChannelParams::default();
        let a = run_episodes(&UniformRandomPolicy, &ch, &world, 6, 9, ExecMode::Sequential).unwrap();
        let b = run_episodes(&UniformRandomPolicy, &ch, &world, 6, 9, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_and_csv() {
        let r = [rec(10, true), rec(20, true), rec(500, false)];
        let s = summarize(&r, 10.0, 0.5, 2.0, 50).unwrap();
        assert!((s.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.p50, Some(10));
        assert_eq!(s.p90, Some(20));
        // τ = 10·5 + 10/2 = 55 and 20·5 + 20/2 = 110
        assert_eq!(s.mean_tau_s, Some(82.5));
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_CSV_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "10,0.5,2,3,0.6666666666666666,10,20,82.5");
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &r[..1], 50, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{EVAL_CSV_HEADER}\n10,0.5,2,0,1,10,10,55\n"));
    }

    #[test]
    fn trace_matches_record() {
        let world = WorldParams {
            initial_radius_m: 30.0,
            obs_len: 3,
            ..WorldParams::default()
        };
        let oracle = OracleChaser::default();
        let recs = run_episodes(&oracle, &los(), &world, 3, 4, ExecMode::Sequential).unwrap();
        let rows = trace_episode(&oracle, &los(), &world, 4, 2).unwrap();
        assert_eq!(rows.len(), recs[2].movements);
        let last = rows.last().unwrap();
        assert!(last.distance_m <= world.success_radius_m);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rows.len() + 1);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 13);
    }

    #[test]
    fn oracle_always_succeeds_quickly() {
        let recs = run_episodes(&OracleChaser::default(), &los(), &WorldParams::default(), 50, 2, ExecMode::default()).unwrap();
        // 100 m at up to 4 m per axis and step: at most ceil(100 / 4) + 1 moves
        assert!(recs.iter().all(|r| r.success && r.movements <= 26), "{:?}", recs.iter().map(|r| r.movements).max());
    }
}
