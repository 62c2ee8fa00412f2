//! RSSI channel: log-distance path loss plus spatially correlated Rician
//! fading whose diffuse part follows a Clarke sum-of-sinusoids Doppler model.
//!
//! For receiver `u` the complex gain is
//!
//! ```text
//! h_u(t) = sqrt(K/(K+1)) + sqrt(1/(K+1)) * (Λ z(t))_u
//! ```
//!
//! where each `z_k` is an independent unit-power sum of 64 sinusoids with
//! Doppler frequencies `f_d cos α_n`, and `Λ` is the Cholesky factor of the
//! uniform correlation matrix `C(ρ)` (ones on the diagonal, ρ elsewhere).
//! The mean of `|h_u|²` is one, so the measured RSSI is
//! `P_tx - L(d) + 20 log10 |h_u|`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Receivers in the swarm: two per axis.
pub const RX_COUNT: usize = 6;

/// Sinusoids per receiver in the diffuse generator.
pub const SINUSOIDS: usize = 64;

/// Lower bound on `|h|` when converting to dB; keeps RSSI finite in deep fades.
const MIN_GAIN: f64 = 1e-6;

/// Samples between exact phase recomputations in the series generators.
pub const REANCHOR: usize = 256;

pub type Matrix6 = [[f64; RX_COUNT]; RX_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Transmit power (dBm).
    pub p_tx_dbm: f64,
    /// Path-loss reference distance (m).
    pub d0_m: f64,
    /// Path loss at the reference distance (dB).
    pub l0_db: f64,
    pub path_exp: f64,
    /// Rician K (linear). `f64::INFINITY` gives a pure line-of-sight channel.
    pub k_factor: f64,
    /// Maximum Doppler frequency (Hz).
    pub doppler_hz: f64,
    /// Uniform spatial correlation between receivers, in `[0, 1)`.
    pub rho: f64,
    /// Channel sampling frequency F (samples/s).
    pub sample_hz: f64,
    pub carrier_hz: f64,
    /// Drops the diffuse component, same as an infinite K.
    pub frozen: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            p_tx_dbm: 23.0,
            d0_m: 1.0,
            l0_db: 30.0,
            path_exp: 2.6,
            k_factor: 3.0,
            doppler_hz: 1.0,
            rho: 0.5,
            sample_hz: 10.0,
            carrier_hz: 3.0e9,
            frozen: false,
        }
    }
}

impl ChannelParams {
    /// Pure line of sight: no diffuse fading at all.
    pub fn is_frozen(&self) -> bool {
        self.frozen || self.k_factor.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::domain(what.to_string()))
            }
        };
        check(self.p_tx_dbm.is_finite(), "p_tx must be finite")?;
        check(self.l0_db.is_finite(), "l0 must be finite")?;
        check(self.d0_m.is_finite() && self.d0_m > 0.0, "d0 must be > 0")?;
        check(self.sample_hz.is_finite() && self.sample_hz > 0.0, "sample_hz must be > 0")?;
        check(self.k_factor >= 0.0, "k_factor must be >= 0")?;
        check(self.path_exp.is_finite() && self.path_exp > 0.0, "path_exp must be > 0")?;
        check(self.doppler_hz.is_finite() && self.doppler_hz >= 0.0, "doppler_hz must be >= 0")?;
        check(self.carrier_hz.is_finite() && self.carrier_hz > 0.0, "carrier_hz must be > 0")?;
        check_rho(self.rho)
    }

    /// Log-distance path loss `L0 + 10 n log10(d / d0)` in dB.
    pub fn path_loss(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::domain(format!("path loss distance must be > 0, got {d}")));
        }
        Ok(self.l0_db + 10.0 * self.path_exp * (d / self.d0_m).log10())
    }

    /// RSSI (dBm) at distance `d` for a given complex fading gain.
    pub fn rssi_with_gain(&self, d: f64, gain: Complex64) -> Result<f64> {
        let xi = 20.0 * gain.norm().max(MIN_GAIN).log10();
        Ok(self.p_tx_dbm - self.path_loss(d)? + xi)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::domain(format!("rho must lie in [0, 1), got {rho}")))
    }
}

/// Maximum Doppler shift `v / c * f_c` for a receiver moving at `v` m/s.
pub fn doppler_from_velocity(v: f64, carrier_hz: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("velocity must be >= 0, got {v}")));
    }
    if !(carrier_hz > 0.0) || !carrier_hz.is_finite() {
        return Err(Error::domain(format!("carrier must be > 0, got {carrier_hz}")));
    }
    Ok(v / SPEED_OF_LIGHT * carrier_hz)
}

/// The uniform correlation matrix `C(ρ)`.
pub fn correlation_matrix(rho: f64) -> Matrix6 {
    let mut c = [[rho; RX_COUNT]; RX_COUNT];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    c
}

/// Lower-triangular `Λ` with `Λ Λᵀ = C(ρ)`.
pub fn spatial_factor(rho: f64) -> Result<Matrix6> {
    check_rho(rho)?;
    let c = correlation_matrix(rho);
    let mut l = [[0.0; RX_COUNT]; RX_COUNT];
    for i in 0..RX_COUNT {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = c[i][i] - s;
                if d <= 0.0 {
                    return Err(Error::domain(format!("C({rho}) is not positive definite")));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (c[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy)]
struct Oscillator {
    /// `2π f_d cos α` (rad/s).
    omega: f64,
    phase: f64,
}

/// Time-evolving correlated fading for the six receivers.
///
/// Not `Sync`-shared: each episode or worker owns its own process.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    oscillators: Vec<[Oscillator; SINUSOIDS]>,
    mixing: Matrix6,
    los_weight: f64,
    diffuse_weight: f64,
    time: f64,
    stream: u64,
}

impl FadingProcess {
    /// Draws arrival angles and phases once from the stream `seed`.
    ///
    /// Angles are stratified, `α_n = (2πn + θ_n) / N` with `θ_n` uniform in
    /// `[-π, π)`, which keeps the per-realization autocorrelation close to
    /// `J0(2π f_d τ)` even with 64 sinusoids.
    pub fn new(params: &ChannelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mixing = spatial_factor(params.rho)?;
        let mut rng = seed::rng(seed, "fading", 0);
        let n = SINUSOIDS as f64;
        let oscillators = (0..RX_COUNT)
            .map(|_| {
                std::array::from_fn(|i| {
                    let theta: f64 = rng.random_range(-PI..PI);
                    let alpha = (2.0 * PI * i as f64 + theta) / n;
                    Oscillator {
                        omega: 2.0 * PI * params.doppler_hz * alpha.cos(),
                        phase: rng.random_range(0.0..2.0 * PI),
                    }
                })
            })
            .collect();
        let (los_weight, diffuse_weight) = if params.is_frozen() {
            (1.0, 0.0)
        } else {
            let k = params.k_factor;
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        };
        Ok(Self {
            oscillators,
            mixing,
            los_weight,
            diffuse_weight,
            time: 0.0,
            stream: seed,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Moves channel time forward by `dt` seconds and returns the gains there.
    pub fn advance(&mut self, dt: f64) -> Result<[Complex64; RX_COUNT]> {
        self.skip(dt)?;
        Ok(self.gains_at(self.time))
    }

    /// Moves channel time forward without evaluating the gains.
    pub fn skip(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("dt must be >= 0, got {dt}")));
        }
        self.time += dt;
        Ok(())
    }

    /// Unit-power uncorrelated diffuse sums `z_k(t)`.
    pub fn scattered_at(&self, t: f64) -> [Complex64; RX_COUNT] {
        let scale = (1.0 / SINUSOIDS as f64).sqrt();
        std::array::from_fn(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for osc in &self.oscillators[k] {
                let (s, c) = (osc.omega * t + osc.phase).sin_cos();
                re += c;
                im += s;
            }
            Complex64::new(re * scale, im * scale)
        })
    }

    /// Spatially mixed diffuse components `(Λ z(t))_u`, unit power each.
    pub fn diffuse_at(&self, t: f64) -> [Complex64; RX_COUNT] {
        let z = self.scattered_at(t);
        std::array::from_fn(|u| {
            (0..=u)
                .map(|k| z[k] * self.mixing[u][k])
                .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
        })
    }

    /// `diffuse_at` on the grid `t0 + i dt`, `i < n`. Each sinusoid's phasor
    /// is rotated by `e^{jω dt}` per sample and re-anchored every
    /// [`REANCHOR`] samples, so results match `diffuse_at` to rounding.
    pub fn diffuse_series(&self, t0: f64, dt: f64, n: usize) -> Vec<[Complex64; RX_COUNT]> {
        let scale = (1.0 / SINUSOIDS as f64).sqrt();
        let mut z = vec![[Complex64::new(0.0, 0.0); RX_COUNT]; n];
        for (k, oscs) in self.oscillators.iter().enumerate() {
            for osc in oscs {
                let step = Complex64::from_polar(1.0, osc.omega * dt);
                let mut ph = Complex64::new(0.0, 0.0);
                for (i, zi) in z.iter_mut().enumerate() {
                    if i % REANCHOR == 0 {
                        ph = Complex64::from_polar(1.0, osc.omega * (t0 + i as f64 * dt) + osc.phase);
                    }
                    zi[k] += ph;
                    ph *= step;
                }
            }
        }
        z.iter()
            .map(|zi| {
                std::array::from_fn(|u| {
                    (0..=u)
                        .map(|k| zi[k] * (self.mixing[u][k] * scale))
                        .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
                })
            })
            .collect()
    }

    /// `gains_at` on the grid `t0 + i dt`, `i < n`.
    pub fn gains_series(&self, t0: f64, dt: f64, n: usize) -> Vec<[Complex64; RX_COUNT]> {
        let los = Complex64::new(self.los_weight, 0.0);
        if self.diffuse_weight == 0.0 {
            return vec![[los; RX_COUNT]; n];
        }
        self.diffuse_series(t0, dt, n)
            .into_iter()
            .map(|w| std::array::from_fn(|u| los + w[u] * self.diffuse_weight))
            .collect()
    }

    /// Complex gains at absolute channel time `t` (pure).
    pub fn gains_at(&self, t: f64) -> [Complex64; RX_COUNT] {
        let los = Complex64::new(self.los_weight, 0.0);
        if self.diffuse_weight == 0.0 {
            return [los; RX_COUNT];
        }
        let w = self.diffuse_at(t);
        std::array::from_fn(|u| los + w[u] * self.diffuse_weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RssiSample {
    pub value_dbm: f64,
    pub rx: usize,
    pub time_s: f64,
    pub gain: (f64, f64),
}

/// Advances `process` by `dt` and measures the six receivers at `distances`.
pub fn rssi(
    params: &ChannelParams,
    process: &mut FadingProcess,
    distances: &[f64; RX_COUNT],
    dt: f64,
) -> Result<[RssiSample; RX_COUNT]> {
    for &d in distances {
        params.path_loss(d)?;
    }
    let gains = process.advance(dt)?;
    let time_s = process.time();
    let mut out = [RssiSample {
        value_dbm: 0.0,
        rx: 0,
        time_s,
        gain: (0.0, 0.0),
    }; RX_COUNT];
    for (u, sample) in out.iter_mut().enumerate() {
        sample.rx = u;
        sample.value_dbm = params.rssi_with_gain(distances[u], gains[u])?;
        sample.gain = (gains[u].re, gains[u].im);
    }
    Ok(out)
}
