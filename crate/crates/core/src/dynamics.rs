//! Exact continuous-time simulation of `L_N = N²(L_ex + L_c)` by uniformization.
//!
//! Proposals arrive at the constant rate
//! `R = N² N^d [2d |𝒱| (1 + v_max N^{a−1}) + |Q|]`. An exchange proposal picks a
//! site, direction and species uniformly and is accepted with probability
//! `rate / (N²(1 + v_max N^{a−1}))`; a collision proposal picks a site and a
//! quadruple uniformly and is accepted when the collision indicator is one.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::lattice::{direction_step, Configuration, Torus};
use crate::measure::FourierField;
use crate::velocity::{Quadruple, VelocitySet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("side N = {0} is too small (need N ≥ 2)")]
    SideTooSmall(usize),
    #[error("scaling exponent a = {0} is outside (0, 1)")]
    InvalidExponent(f64),
    #[error("v_max = {v_max} exceeds N^(1−a) = {limit}; jump probabilities would be negative")]
    NegativeRate { v_max: f64, limit: f64 },
    #[error("snapshot times must be sorted and lie in [0, T]")]
    BadSnapshots,
    #[error("horizon T = {0} must be finite and nonnegative")]
    BadHorizon(f64),
    #[error("sites {x} and {y} are not nearest neighbours")]
    NotNeighbors { x: usize, y: usize },
    #[error("configuration does not match the simulation parameters")]
    ShapeMismatch,
}

/// Validated parameters plus the lookup tables of the hot loop.
#[derive(Debug, Clone)]
pub struct SimParams {
    n: usize,
    a: f64,
    horizon: f64,
    snapshots: Vec<f64>,
    torus: Torus,
    species: usize,
    /// `velocities[v·d + j]`.
    velocities: Vec<f64>,
    collisions: Vec<Quadruple>,
    drift: f64,
    v_max: f64,
    n2: f64,
    exchange_weight: f64,
    collision_weight: f64,
}

impl SimParams {
    pub fn new(vs: &VelocitySet, n: usize, a: f64, horizon: f64, snapshots: Vec<f64>) -> Result<Self, DynamicsError> {
        if n < 2 {
            return Err(DynamicsError::SideTooSmall(n));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(DynamicsError::InvalidExponent(a));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(DynamicsError::BadHorizon(horizon));
        }
        if snapshots.windows(2).any(|w| w[0] > w[1]) || snapshots.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
            return Err(DynamicsError::BadSnapshots);
        }
        let limit = (n as f64).powf(1.0 - a);
        let v_max = vs.v_max();
        if v_max > limit {
            return Err(DynamicsError::NegativeRate { v_max, limit });
        }
        let d = vs.dim();
        let torus = Torus::new(d, n).map_err(|_| DynamicsError::SideTooSmall(n))?;
        let drift = (n as f64).powf(a - 1.0);
        let sites = torus.sites() as f64;
        let n2 = (n * n) as f64;
        let exchange_weight = n2 * sites * (2 * d * vs.len()) as f64 * (1.0 + v_max * drift);
        let collision_weight = n2 * sites * vs.collision_set().len() as f64;
        Ok(Self {
            n,
            a,
            horizon,
            snapshots,
            torus,
            species: vs.len(),
            velocities: (0..vs.len()).flat_map(|v| vs.velocity(v).to_vec()).collect(),
            collisions: vs.collision_set().to_vec(),
            drift,
            v_max,
            n2,
            exchange_weight,
            collision_weight,
        })
    }

    /// Copy with the collision channel removed.
    pub fn without_collisions(mut self) -> Self {
        self.collisions.clear();
        self.collision_weight = 0.0;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn snapshots(&self) -> &[f64] {
        &self.snapshots
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    /// `N^{a−1}`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Dominating proposal rate `R`.
    pub fn dominating_rate(&self) -> f64 {
        self.exchange_weight + self.collision_weight
    }

    pub fn collisions(&self) -> &[Quadruple] {
        &self.collisions
    }

    /// Rate of the jump `x → x + z` (direction `dir`) of species `v`.
    #[inline]
    pub fn exchange_rate_dir(&self, cfg: &Configuration, x: usize, dir: usize, v: usize) -> f64 {
        let y = self.torus.neighbor(x, dir);
        if !cfg.get(x, v) || cfg.get(y, v) {
            return 0.0;
        }
        let (axis, z) = direction_step(dir);
        self.n2 * (1.0 + z * self.velocities[v * self.torus.dim() + axis] * self.drift)
    }

    fn check_shape(&self, cfg: &Configuration) -> Result<(), DynamicsError> {
        if cfg.torus() != &self.torus || cfg.species() != self.species {
            return Err(DynamicsError::ShapeMismatch);
        }
        Ok(())
    }
}

/// `N² η_x(v)(1 − η_y(v))(1 + (y − x)·v N^{a−1})`, summed over both directions when
/// they coincide (`N = 2`).
pub fn exchange_rate(params: &SimParams, cfg: &Configuration, x: usize, y: usize, v: usize) -> Result<f64, DynamicsError> {
    let dirs = params.torus.directions(x, y);
    if x == y || dirs.is_empty() {
        return Err(DynamicsError::NotNeighbors { x, y });
    }
    let rate: f64 = dirs.iter().map(|&dir| params.exchange_rate_dir(cfg, x, dir, v)).sum();
    if rate < 0.0 {
        return Err(DynamicsError::NegativeRate { v_max: params.v_max, limit: (params.n as f64).powf(1.0 - params.a) });
    }
    Ok(rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Exchange { x: usize, y: usize, v: usize },
    Collision { x: usize, q: Quadruple },
    Rejected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounters {
    pub exchange_attempts: u64,
    pub exchange_accepts: u64,
    pub collision_attempts: u64,
    pub collision_accepts: u64,
}

/// Propose and possibly apply one event; does not draw the waiting time.
#[inline]
fn propose<R: Rng + ?Sized>(p: &SimParams, cfg: &mut Configuration, rng: &mut R, counters: &mut EventCounters) -> Event {
    let total = p.exchange_weight + p.collision_weight;
    let sites = p.torus.sites();
    if p.collision_weight == 0.0 || rng.random::<f64>() * total < p.exchange_weight {
        counters.exchange_attempts += 1;
        let x = rng.random_range(0..sites);
        let dir = rng.random_range(0..2 * p.torus.dim());
        let v = rng.random_range(0..p.species);
        let y = p.torus.neighbor(x, dir);
        if !cfg.get(x, v) || cfg.get(y, v) {
            return Event::Rejected;
        }
        let (axis, z) = direction_step(dir);
        let bias = z * p.velocities[v * p.torus.dim() + axis] * p.drift;
        let accept = (1.0 + bias) / (1.0 + p.v_max * p.drift);
        if accept >= 1.0 || rng.random::<f64>() < accept {
            counters.exchange_accepts += 1;
            cfg.swap_unchecked(x, y, v);
            return Event::Exchange { x, y, v };
        }
        Event::Rejected
    } else {
        counters.collision_attempts += 1;
        let x = rng.random_range(0..sites);
        let q = p.collisions[rng.random_range(0..p.collisions.len())];
        if cfg.collision_indicator(x, q) {
            counters.collision_accepts += 1;
            cfg.collide_unchecked(x, q);
            return Event::Collision { x, q };
        }
        Event::Rejected
    }
}

/// One uniformized step: exponential waiting time with rate `R`, then a proposal.
pub fn step<R: Rng + ?Sized>(params: &SimParams, cfg: &mut Configuration, rng: &mut R, counters: &mut EventCounters) -> (f64, Event) {
    let dt: f64 = rng.sample::<f64, _>(Exp1) / params.dominating_rate();
    (dt, propose(params, cfg, rng, counters))
}

/// Configurations recorded at the requested snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, Configuration)>,
    pub counters: EventCounters,
}

/// Run from `initial` until the horizon, recording snapshots.
pub fn simulate<R: Rng + ?Sized>(params: &SimParams, initial: &Configuration, rng: &mut R) -> Result<Trajectory, DynamicsError> {
    let mut out = Vec::with_capacity(params.snapshots.len());
    let counters = run(params, initial, rng, |t, cfg| out.push((t, cfg.clone())))?;
    Ok(Trajectory { snapshots: out, counters })
}

/// Like [`simulate`] but hands each snapshot to `observe` instead of storing it.
pub fn run<R: Rng + ?Sized, F: FnMut(f64, &Configuration)>(
    params: &SimParams,
    initial: &Configuration,
    rng: &mut R,
    mut observe: F,
) -> Result<EventCounters, DynamicsError> {
    params.check_shape(initial)?;
    let mut cfg = initial.clone();
    let mut counters = EventCounters::default();
    let rate = params.dominating_rate();
    if rate == 0.0 {
        params.snapshots.iter().for_each(|&s| observe(s, &cfg));
        return Ok(counters);
    }
    let mut next = rng.sample::<f64, _>(Exp1) / rate;
    let mut marks = params.snapshots.iter().copied().chain(std::iter::once(params.horizon)).peekable();
    let mut pending = params.snapshots.len();
    while let Some(mark) = marks.next() {
        while next <= mark {
            propose(params, &mut cfg, rng, &mut counters);
            next += rng.sample::<f64, _>(Exp1) / rate;
        }
        if pending > 0 {
            observe(mark, &cfg);
            pending -= 1;
        }
        if marks.peek().is_none() {
            break;
        }
    }
    Ok(counters)
}

/// Precomputed weights for `N^{a−d} Σ_x F(x/N)·[𝐈(η_x) − p_*]`.
#[derive(Debug, Clone)]
pub struct FieldProbe {
    sites: usize,
    /// `weights[v·N^d + x] = N^{a−d} F(x/N)·𝐯`.
    weights: Vec<f64>,
    offset: f64,
}

impl FieldProbe {
    pub fn new(vs: &VelocitySet, torus: &Torus, a: f64, f: &FourierField) -> Self {
        let n = torus.side() as f64;
        let d = torus.dim() as i32;
        let scale = n.powf(a) / n.powi(d);
        let e = vs.dim() + 1;
        let sites = torus.sites();
        let mut weights = vec![0.0; sites * vs.len()];
        let mut offset = 0.0;
        for x in 0..sites {
            let u: Vec<f64> = torus.coord(x).iter().map(|&c| c as f64 / n).collect();
            let fx = f.eval(&u, e);
            offset -= scale * fx.iter().zip(vs.p_star()).map(|(a, b)| a * b).sum::<f64>();
            for v in 0..vs.len() {
                weights[v * sites + x] = scale * fx.iter().zip(vs.lifted(v)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Self { sites, weights, offset }
    }

    pub fn eval(&self, cfg: &Configuration) -> f64 {
        let species = self.weights.len() / self.sites;
        let mut s = 0.0;
        for v in 0..species {
            for x in 0..self.sites {
                if cfg.get(x, v) {
                    s += self.weights[v * self.sites + x];
                }
            }
        }
        s + self.offset
    }
}

/// `N^{a−d} Σ_x F(x/N)·[𝐈(η_x) − p_*]`.
pub fn empirical_field(cfg: &Configuration, vs: &VelocitySet, a: f64, f: &FourierField) -> f64 {
    FieldProbe::new(vs, cfg.torus(), a, f).eval(cfg)
}
