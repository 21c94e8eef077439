//! Seeded stand-in data: kinematic interest trajectories and the watch-event
//! logs that rebuild them.
//!
//! Each user follows `X_{k+1} = A X_k + w_k` with `w_k ~ N(0, q·G)` and is
//! observed as `Z_k = H X_k + v_k`, `v_k ~ N(0, r·I)`. Positions and
//! observations are floored at zero because interest scores are never
//! negative; when a position hits the floor, its negative velocity and
//! acceleration are zeroed too. Generation is per user on its own ChaCha
//! stream, so the output does not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::profile::{ProfileSeries, WatchEvent};
use crate::space::{ConceptSpace, InterestVector};
use crate::tracker::model::{transition_block, StateVector};

/// 2008-09-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_220_227_200;
pub const DAY: i64 = 86_400;

/// Std-dev of the one-off velocity jump in [`Regime::RegimeChange`].
pub const JUMP_SIGMA: f64 = 0.05;
/// Per-entry spike probability in [`Regime::Bursty`].
pub const BURST_PROBABILITY: f64 = 0.05;
/// Spike magnitude in units of the observation noise std-dev.
pub const BURST_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regime {
    #[default]
    SmoothDrift,
    /// One velocity jump per axis at `K/2`.
    RegimeChange,
    /// Occasional heavy-tailed upward observation spikes.
    Bursty,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SmoothDrift => "smooth_drift",
            Regime::RegimeChange => "regime_change",
            Regime::Bursty => "bursty",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth_drift" => Ok(Regime::SmoothDrift),
            "regime_change" => Ok(Regime::RegimeChange),
            "bursty" => Ok(Regime::Bursty),
            other => Err(Error::invalid(
                "regime",
                format!("{other:?} is not one of smooth_drift, regime_change, bursty"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub d: usize,
    pub k: usize,
    pub n_users: usize,
    pub q_true: f64,
    pub r_true: f64,
    pub regime: Regime,
    pub seed: u64,
    /// Epoch seconds of the start of day 0.
    pub start: i64,
    /// Seconds between snapshots.
    pub spacing: i64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d: 44,
            k: 35,
            n_users: 50,
            q_true: 0.001,
            r_true: 0.01,
            regime: Regime::SmoothDrift,
            seed: 7,
            start: DEFAULT_START,
            spacing: DAY,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("k", "must be at least 2"));
        }
        if self.n_users == 0 {
            return Err(Error::invalid("users", "must be at least 1"));
        }
        for (name, v) in [("q_true", self.q_true), ("r_true", self.r_true)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        if self.spacing <= 0 {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        Ok(())
    }

    /// Snapshot instants: the last second of each day.
    pub fn instants(&self) -> Vec<i64> {
        (0..self.k as i64)
            .map(|i| self.start + (i + 1) * self.spacing - 1)
            .collect()
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "d={}\nk={}\nusers={}\nq_true={}\nr_true={}\nregime={}\nseed={}\nstart={}\nspacing={}\n",
            self.d,
            self.k,
            self.n_users,
            self.q_true,
            self.r_true,
            self.regime,
            self.seed,
            self.start,
            self.spacing
        )
    }

    /// Parses `key=value` lines; unknown keys are rejected, missing keys keep
    /// their defaults. `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Parse {
                path: "scenario".into(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            macro_rules! num {
                () => {
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad value {value:?} for {key}")))?
                };
            }
            match key {
                "d" => cfg.d = num!(),
                "k" => cfg.k = num!(),
                "users" => cfg.n_users = num!(),
                "q_true" => cfg.q_true = num!(),
                "r_true" => cfg.r_true = num!(),
                "regime" => cfg.regime = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                "seed" => cfg.seed = num!(),
                "start" => cfg.start = num!(),
                "spacing" => cfg.spacing = num!(),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// Vocabulary used for synthetic spaces: `genre_00`, `genre_01`, ...
pub fn synthetic_vocabulary(d: usize) -> ConceptSpace {
    ConceptSpace::new((0..d).map(|i| format!("genre_{i:02}"))).expect("distinct labels")
}

pub fn user_id(index: usize) -> String {
    format!("u{index:04}")
}

/// One generated user with the latent state it started from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub user_id: String,
    pub initial_state: StateVector,
    pub series: ProfileSeries,
    /// Position updates that hit the zero floor.
    pub clamped: usize,
}

fn user_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn simulate_user(cfg: &ScenarioConfig, index: usize, instants: &[i64]) -> SimulatedUser {
    let mut rng = user_rng(cfg.seed, index as u64);
    let (d, k) = (cfg.d, cfg.k);
    let a = transition_block(1.0, 1.0);
    let g = Vector3::new(0.5, 1.0, 1.0);
    let q_sd = cfg.q_true.sqrt();
    let r_sd = cfg.r_true.sqrt();
    let init_sd = 0.01 * q_sd;

    let mut axes: Vec<Vector3<f64>> = (0..d)
        .map(|_| {
            let x = rng.random_range(0.0..1.0);
            Vector3::new(x, init_sd * normal(&mut rng), init_sd * normal(&mut rng))
        })
        .collect();
    let initial_state = StateVector::from_blocks(
        &axes.iter().map(|s| s[0]).collect::<Vec<_>>(),
        &axes.iter().map(|s| s[1]).collect::<Vec<_>>(),
        &axes.iter().map(|s| s[2]).collect::<Vec<_>>(),
    )
    .expect("finite initial state");

    let mut clamped = 0;
    let mut profiles = Vec::with_capacity(k);
    for step in 0..k {
        if cfg.regime == Regime::RegimeChange && step == k / 2 {
            for s in &mut axes {
                s[1] += JUMP_SIGMA * normal(&mut rng);
            }
        }
        let z: Vec<f64> = axes
            .iter()
            .map(|s| {
                let mut z = s[0] + r_sd * normal(&mut rng);
                if cfg.regime == Regime::Bursty {
                    let u: f64 = rng.random();
                    let spike: f64 = Exp1.sample(&mut rng);
                    if u < BURST_PROBABILITY {
                        z += BURST_SCALE * r_sd * spike;
                    }
                }
                z.max(0.0)
            })
            .collect();
        profiles.push(InterestVector::new(z).expect("finite observation"));
        for s in &mut axes {
            *s = a * *s + g * (q_sd * normal(&mut rng));
            if s[0] < 0.0 {
                s[0] = 0.0;
                s[1] = s[1].max(0.0);
                s[2] = s[2].max(0.0);
                clamped += 1;
            }
        }
    }
    let id = user_id(index);
    SimulatedUser {
        series: ProfileSeries::new(id.clone(), instants.to_vec(), profiles)
            .expect("instants are increasing"),
        user_id: id,
        initial_state,
        clamped,
    }
}

/// Generates every user of the scenario, in user order.
pub fn simulate(cfg: &ScenarioConfig, exec: Execution) -> Result<Vec<SimulatedUser>> {
    cfg.validate()?;
    let instants = cfg.instants();
    let indices: Vec<usize> = (0..cfg.n_users).collect();
    Ok(exec.map(&indices, |&i| simulate_user(cfg, i, &instants)))
}

pub fn generate_trajectories(cfg: &ScenarioConfig) -> Result<BTreeMap<String, ProfileSeries>> {
    Ok(simulate(cfg, Execution::default())?
        .into_iter()
        .map(|u| (u.user_id, u.series))
        .collect())
}

/// Emits watch events whose replay through the profile builder (decay 1)
/// follows the upward movement of each trajectory.
///
/// For each snapshot the positive part of the per-genre increment is spread
/// over `max(programs_per_day, ⌈mass⌉)` single-genre events of equal watched
/// fraction, with genres drawn by systematic sampling proportional to the
/// increments. Timestamps fall inside the interval ending at the snapshot.
pub fn generate_events(
    trajectories: &BTreeMap<String, ProfileSeries>,
    space: &ConceptSpace,
    programs_per_day: usize,
    seed: u64,
) -> Result<Vec<WatchEvent>> {
    generate_events_with(
        Execution::default(),
        trajectories,
        space,
        programs_per_day,
        seed,
    )
}

pub fn generate_events_with(
    exec: Execution,
    trajectories: &BTreeMap<String, ProfileSeries>,
    space: &ConceptSpace,
    programs_per_day: usize,
    seed: u64,
) -> Result<Vec<WatchEvent>> {
    if programs_per_day == 0 {
        return Err(Error::invalid("programs_per_day", "must be at least 1"));
    }
    let users: Vec<&ProfileSeries> = trajectories.values().collect();
    for s in &users {
        if s.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: s.dim(),
            });
        }
        if s.profiles()
            .iter()
            .flat_map(|p| p.as_slice())
            .any(|&x| x < 0.0)
        {
            return Err(Error::invalid(
                "trajectories",
                format!("user {:?} has negative interest", s.user_id()),
            ));
        }
    }
    let indexed: Vec<(usize, &ProfileSeries)> = users.into_iter().enumerate().collect();
    let per_user = exec.map(&indexed, |&(i, s)| {
        user_events(s, space, programs_per_day, &mut user_rng(seed, i as u64))
    });
    Ok(per_user.into_iter().flatten().collect())
}

fn user_events(
    series: &ProfileSeries,
    space: &ConceptSpace,
    programs_per_day: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<WatchEvent> {
    let instants = series.instants();
    let default_span = if instants.len() > 1 {
        instants[1] - instants[0]
    } else {
        DAY
    };
    let mut prev = vec![0.0; series.dim()];
    let mut out = Vec::new();
    for (k, z) in series.profiles().iter().enumerate() {
        let inc: Vec<f64> = z
            .as_slice()
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).max(0.0))
            .collect();
        prev = z.as_slice().to_vec();
        let mass: f64 = inc.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        let n = programs_per_day.max(mass.ceil() as usize);
        let fraction = (mass / n as f64).min(1.0);
        let (day_start, span) = if k == 0 {
            (instants[0] - default_span + 1, default_span)
        } else {
            (instants[k - 1] + 1, instants[k] - instants[k - 1])
        };
        let picks = systematic(&inc, mass, n, rng);
        let mut times: Vec<i64> = (0..n)
            .map(|_| day_start + rng.random_range(0..span))
            .collect();
        times.sort_unstable();
        for (axis, t) in picks.into_iter().zip(times) {
            out.push(WatchEvent {
                user_id: series.user_id().to_string(),
                timestamp: t,
                genres: vec![space.label(axis).to_string()],
                watched_fraction: fraction,
            });
        }
    }
    out
}

/// `n` draws with probabilities `weights / total`, one uniform offset shared
/// across evenly spaced points; each axis gets within one of its expected
/// count.
fn systematic(weights: &[f64], total: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let offset: f64 = rng.random();
    let mut picks = Vec::with_capacity(n);
    let mut axis = 0;
    let mut cum = weights[0];
    for j in 0..n {
        let target = (offset + j as f64) / n as f64 * total;
        while (cum <= target || weights[axis] == 0.0) && axis < last_positive {
            axis += 1;
            cum += weights[axis];
        }
        picks.push(axis);
    }
    picks
}
