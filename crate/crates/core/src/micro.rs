//! First-order follow-the-leader dynamics on a periodic ring.
//!
//! Agent `i` follows agent `i + 1 (mod N)`. Positions are kept unwrapped:
//! `x[0] <= x[1] <= ... <= x[N-1] <= x[0] + L`, so every spacing is a plain
//! difference and the last one closes the ring through `x[0] + L`.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::sig15;
use crate::ov::{delayed_speed, FundamentalDiagram, TriangularOV};
use crate::rng::ScenarioRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionPolicy {
    /// Stop the run and report the first offending agent.
    #[default]
    Abort,
    /// Pull offending followers back to spacing `ell` and keep going.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Homogeneous,
    Jam,
    Random,
    Perturbed,
}

impl std::str::FromStr for InitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(Self::Homogeneous),
            "jam" => Ok(Self::Jam),
            "random" => Ok(Self::Random),
            "perturbed" => Ok(Self::Perturbed),
            other => Err(Error::InvalidParameter(format!("unknown initial condition '{other}'"))),
        }
    }
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Homogeneous => "homogeneous",
            Self::Jam => "jam",
            Self::Random => "random",
            Self::Perturbed => "perturbed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingConfig {
    pub ring_length: f64,
    pub n_agents: usize,
    /// Reaction time when positive, anticipation when negative.
    pub tau: f64,
    pub dt: f64,
    pub ov: TriangularOV,
    pub seed: u64,
    /// Spacing excess `delta` of the packed block in the jam start.
    pub jam_gap: f64,
    /// Backward displacement of agent 1 in the perturbed start.
    pub perturbation: f64,
    pub collision: CollisionPolicy,
}

impl RingConfig {
    /// Ring of length 101 with 50 agents, `tau = 1`, `dt = 0.01`.
    pub fn reference() -> Self {
        Self {
            ring_length: 101.0,
            n_agents: 50,
            tau: 1.0,
            dt: 0.01,
            ov: TriangularOV::reference(),
            seed: 1,
            jam_gap: 0.05,
            perturbation: 0.1,
            collision: CollisionPolicy::Abort,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn mean_spacing(&self) -> f64 {
        self.ring_length / self.n_agents as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ov = TriangularOV::new(self.ov.v0, self.ov.ell, self.ov.t_gap)?;
        if self.n_agents < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 agents, got {}",
                self.n_agents
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be finite".into()));
        }
        if !(self.ring_length.is_finite() && self.ring_length > self.n_agents as f64 * ov.ell) {
            return Err(Error::Configuration(format!(
                "ring length {} leaves no room for {} agents of size {}",
                self.ring_length, self.n_agents, ov.ell
            )));
        }
        if self.jam_gap < 0.0 || self.perturbation < 0.0 {
            return Err(Error::InvalidParameter(
                "jam_gap and perturbation must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub t: f64,
    pub ring_length: f64,
    pub x: Vec<f64>,
}

impl MicroState {
    pub fn from_spacings(t: f64, ring_length: f64, spacings: &[f64]) -> Self {
        let mut x = Vec::with_capacity(spacings.len());
        let mut pos = 0.0;
        for s in spacings {
            x.push(pos);
            pos += s;
        }
        Self { t, ring_length, x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Distance from agent `i` to its predecessor `i + 1`.
    pub fn spacing(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i + 1 < n {
            self.x[i + 1] - self.x[i]
        } else {
            self.x[0] + self.ring_length - self.x[n - 1]
        }
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.x.len()).map(|i| self.spacing(i)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.x.len()).map(|i| self.spacing(i)).fold(f64::INFINITY, f64::min)
    }

    /// `sum_i (spacing_i - L/N)^2`.
    pub fn perturbation_energy(&self) -> f64 {
        let mean = self.ring_length / self.x.len() as f64;
        (0..self.x.len()).map(|i| (self.spacing(i) - mean).powi(2)).sum()
    }

    pub fn spacing_variance(&self) -> f64 {
        self.perturbation_energy() / self.x.len() as f64
    }

    /// Position of agent `i` folded into `[0, L)`.
    pub fn wrapped(&self, i: usize) -> f64 {
        self.x[i].rem_euclid(self.ring_length)
    }
}

pub fn init_homogeneous(cfg: &RingConfig) -> Result<MicroState> {
    cfg.validate()?;
    let s = cfg.mean_spacing();
    let x = (0..cfg.n_agents).map(|i| i as f64 * s).collect();
    Ok(MicroState { t: 0.0, ring_length: cfg.ring_length, x })
}

/// Packed block at spacing `ell + jam_gap`; the head (last agent) gets the
/// remaining gap.
pub fn init_jam(cfg: &RingConfig) -> Result<MicroState> {
    cfg.validate()?;
    let packed = cfg.ov.ell + cfg.jam_gap;
    let block = (cfg.n_agents - 1) as f64 * packed;
    if cfg.ring_length - block < cfg.ov.ell {
        return Err(Error::Configuration(format!(
            "jam block of length {block} does not fit the ring of length {}",
            cfg.ring_length
        )));
    }
    let x = (0..cfg.n_agents).map(|i| i as f64 * packed).collect();
    Ok(MicroState { t: 0.0, ring_length: cfg.ring_length, x })
}

/// Spacings i.i.d. uniform on `[ell, 2L/N - ell]`, rescaled to sum `L`,
/// then clipped at `ell` with the deficit taken from the largest gap.
pub fn init_random(cfg: &RingConfig) -> Result<MicroState> {
    cfg.validate()?;
    let ell = cfg.ov.ell;
    let hi = 2.0 * cfg.mean_spacing() - ell;
    let mut rng = ScenarioRng::new(cfg.seed);
    let mut s: Vec<f64> = (0..cfg.n_agents).map(|_| rng.uniform_in(ell, hi)).collect();
    let total: f64 = s.iter().sum();
    let scale = cfg.ring_length / total;
    s.iter_mut().for_each(|v| *v *= scale);
    let mut deficit = 0.0;
    for v in s.iter_mut() {
        if *v < ell {
            deficit += ell - *v;
            *v = ell;
        }
    }
    if deficit > 0.0 {
        let (imax, _) = s
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if s[imax] - deficit < ell {
            return Err(Error::Configuration(
                "random start cannot keep every spacing above ell".into(),
            ));
        }
        s[imax] -= deficit;
    }
    Ok(MicroState::from_spacings(0.0, cfg.ring_length, &s))
}

/// Homogeneous start with agent 1 moved back by `perturbation`.
pub fn init_perturbed(cfg: &RingConfig) -> Result<MicroState> {
    let mut st = init_homogeneous(cfg)?;
    let s = cfg.mean_spacing();
    if cfg.perturbation >= s - cfg.ov.ell {
        return Err(Error::Configuration(format!(
            "perturbation {} would push agent 1 within ell of agent 0",
            cfg.perturbation
        )));
    }
    st.x[1] -= cfg.perturbation;
    Ok(st)
}

pub fn init_state(cfg: &RingConfig, kind: InitKind) -> Result<MicroState> {
    match kind {
        InitKind::Homogeneous => init_homogeneous(cfg),
        InitKind::Jam => init_jam(cfg),
        InitKind::Random => init_random(cfg),
        InitKind::Perturbed => init_perturbed(cfg),
    }
}

/// `W(s_i - tau [W(s_{i+1}) - W(s_i)])` for every agent, from one state.
pub fn euler_speeds(state: &MicroState, cfg: &RingConfig) -> Vec<f64> {
    let n = state.len();
    let w: Vec<f64> = (0..n).map(|i| cfg.ov.w(state.spacing(i))).collect();
    (0..n)
        .map(|i| {
            let s = state.spacing(i);
            cfg.ov.w(s - cfg.tau * (w[(i + 1) % n] - w[i]))
        })
        .collect()
}

fn advance(state: &MicroState, speeds: &[f64], cfg: &RingConfig) -> Result<MicroState> {
    let x: Vec<f64> = state.x.iter().zip(speeds).map(|(x, v)| x + cfg.dt * v).collect();
    let mut next = MicroState { t: state.t + cfg.dt, ring_length: state.ring_length, x };
    enforce_spacing(&mut next, cfg)?;
    Ok(next)
}

fn enforce_spacing(state: &mut MicroState, cfg: &RingConfig) -> Result<()> {
    let ell = cfg.ov.ell;
    let n = state.len();
    match cfg.collision {
        CollisionPolicy::Abort => {
            for i in 0..n {
                let s = state.spacing(i);
                if s < ell {
                    return Err(Error::Collision { agent: i, time: state.t, spacing: s, ell });
                }
            }
        }
        CollisionPolicy::Clamp => {
            // a pull-back can only shrink the spacing behind, so sweep
            // backwards until the ring settles
            for _ in 0..n {
                let mut touched = false;
                for i in (0..n).rev() {
                    if state.spacing(i) < ell {
                        state.x[i] = if i + 1 < n {
                            state.x[i + 1] - ell
                        } else {
                            state.x[0] + state.ring_length - ell
                        };
                        touched = true;
                    }
                }
                if !touched {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// One explicit Euler step of the first-order model with reaction time.
pub fn step_euler(state: &MicroState, cfg: &RingConfig) -> Result<MicroState> {
    let v = euler_speeds(state, cfg);
    advance(state, &v, cfg)
}

/// Past positions for the delayed model.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    snaps: VecDeque<(f64, Vec<f64>)>,
    ring_length: f64,
    extra: usize,
}

impl HistoryBuffer {
    /// Empty buffer. `extra` snapshots beyond the delay window are retained,
    /// which never changes results.
    pub fn new(ring_length: f64, extra: usize) -> Self {
        Self { snaps: VecDeque::new(), ring_length, extra }
    }

    /// Constant history: `state` held frozen on `[t - tau, t]`.
    pub fn constant(state: &MicroState, tau: f64, dt: f64) -> Self {
        let mut h = Self::new(state.ring_length, 0);
        let back = (tau / dt).ceil() as usize + 1;
        for k in (1..=back).rev() {
            h.snaps.push_back((state.t - k as f64 * dt, state.x.clone()));
        }
        h.snaps.push_back((state.t, state.x.clone()));
        h
    }

    pub fn with_extra(mut self, extra: usize) -> Self {
        self.extra = extra;
        self
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn push(&mut self, state: &MicroState) -> Result<()> {
        if let Some((t_last, _)) = self.snaps.back() {
            if state.t <= *t_last {
                return Err(Error::InvalidParameter(format!(
                    "history snapshot at t={} is not after t={t_last}",
                    state.t
                )));
            }
        }
        self.snaps.push_back((state.t, state.x.clone()));
        Ok(())
    }

    /// Drops snapshots that can no longer bracket `t_oldest_needed`.
    pub fn trim(&mut self, t_oldest_needed: f64) {
        let mut keep_from = 0;
        for (k, (t, _)) in self.snaps.iter().enumerate() {
            if *t <= t_oldest_needed {
                keep_from = k;
            } else {
                break;
            }
        }
        let drop = keep_from.saturating_sub(self.extra);
        self.snaps.drain(..drop);
    }

    /// Spacings at time `t`, linearly interpolated between snapshots.
    pub fn spacings_at(&self, t: f64) -> Result<Vec<f64>> {
        const SNAP: f64 = 1e-9;
        let oldest = self.snaps.front().map(|s| s.0).unwrap_or(f64::NAN);
        let newest = self.snaps.back().map(|s| s.0).unwrap_or(f64::NAN);
        if self.snaps.is_empty() || t < oldest - SNAP || t > newest + SNAP {
            return Err(Error::InsufficientHistory { needed: t, oldest });
        }
        let k = self.snaps.iter().rposition(|(ts, _)| *ts <= t + SNAP).unwrap_or(0);
        let (t0, x0) = &self.snaps[k];
        let sp = |x: &[f64]| -> Vec<f64> {
            let n = x.len();
            (0..n)
                .map(|i| if i + 1 < n { x[i + 1] - x[i] } else { x[0] + self.ring_length - x[n - 1] })
                .collect()
        };
        if k + 1 == self.snaps.len() || (t - t0).abs() <= SNAP {
            return Ok(sp(x0));
        }
        let (t1, x1) = &self.snaps[k + 1];
        let w = (t - t0) / (t1 - t0);
        if (1.0 - w).abs() <= SNAP {
            return Ok(sp(x1));
        }
        let (s0, s1) = (sp(x0), sp(x1));
        Ok(s0.iter().zip(&s1).map(|(a, b)| a + w * (b - a)).collect())
    }
}

/// One Euler step of the delayed model `x_i'(t) = W(Δx_i(t - tau))`.
/// The new state is appended to `history`.
pub fn step_newell_delayed(
    state: &MicroState,
    history: &mut HistoryBuffer,
    cfg: &RingConfig,
) -> Result<MicroState> {
    if cfg.tau <= 0.0 {
        return Err(Error::UnsupportedMode(format!(
            "delayed model needs a positive reaction time, got {}",
            cfg.tau
        )));
    }
    let past = history.spacings_at(state.t - cfg.tau)?;
    let v: Vec<f64> = past.iter().map(|&s| cfg.ov.w(s)).collect();
    let next = advance(state, &v, cfg)?;
    history.push(&next)?;
    history.trim(next.t - cfg.tau);
    Ok(next)
}

/// One Euler step of the spacing form, agent densities `rho_i = 1/Δx_i`.
///
/// `Δx_i <- Δx_i + dt [Ṽ(rho_{i+2}, rho_{i+1}) - Ṽ(rho_{i+1}, rho_i)]` with
/// `Ṽ(k1, k2) = V(k2 / (1 - k2 tau [V(k1) - V(k2)]))`.
pub fn step_lagrangian_spacing(densities: &[f64], cfg: &RingConfig) -> Result<Vec<f64>> {
    let n = densities.len();
    if let Some((i, &r)) = densities.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
        return Err(Error::Domain(format!("agent {i} has non-positive density {r}")));
    }
    let speeds: Vec<f64> = (0..n)
        .map(|i| tilde_v(&cfg.ov, cfg.tau, densities[(i + 1) % n], densities[i]))
        .collect();
    Ok((0..n)
        .map(|i| 1.0 / (1.0 / densities[i] + cfg.dt * (speeds[(i + 1) % n] - speeds[i])))
        .collect())
}

/// `Ṽ(k1, k2)`: speed at density `k2` behind a predecessor at density `k1`.
pub fn tilde_v<F: FundamentalDiagram + ?Sized>(fd: &F, tau: f64, k1: f64, k2: f64) -> f64 {
    delayed_speed(fd, tau, k2, fd.speed(k1))
}

/// Linear stability of the homogeneous ring at spacing `s`:
/// `|tau| W'(s) < 1/2`.
pub fn micro_stable(cfg: &RingConfig, s: f64) -> bool {
    cfg.tau.abs() * cfg.ov.w_prime(s) < 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit Euler on the first-order model with reaction time.
    #[default]
    FirstOrder,
    /// Explicit Euler on the delayed model with constant initial history.
    Delayed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub spacing: Vec<f64>,
    pub speed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub ring_length: f64,
    pub dt: f64,
    pub samples: Vec<MicroSample>,
}

impl TrajectoryRecord {
    /// `t,agent,x,spacing,speed` with positions folded into `[0, L)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,agent,x,spacing,speed")?;
        for s in &self.samples {
            let t = sig15(s.t);
            for (i, x) in s.x.iter().enumerate() {
                writeln!(
                    out,
                    "{t},{i},{},{},{}",
                    sig15(x.rem_euclid(self.ring_length)),
                    sig15(s.spacing[i]),
                    sig15(s.speed[i])
                )?;
            }
        }
        Ok(())
    }

    pub fn last(&self) -> &MicroSample {
        self.samples.last().expect("record holds at least the initial sample")
    }

    pub fn state_at(&self, k: usize) -> MicroState {
        MicroState { t: self.samples[k].t, ring_length: self.ring_length, x: self.samples[k].x.clone() }
    }
}

/// Number of `dt` steps that make up `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    (t_end / dt).round().max(0.0) as usize
}

pub fn run(cfg: &RingConfig, init: InitKind, t_end: f64, record_stride: usize) -> Result<TrajectoryRecord> {
    run_with(cfg, init, t_end, record_stride, Integrator::FirstOrder)
}

/// Runs from a named start, sampling every `record_stride` steps (and the
/// final state).
pub fn run_with(
    cfg: &RingConfig,
    init: InitKind,
    t_end: f64,
    record_stride: usize,
    integrator: Integrator,
) -> Result<TrajectoryRecord> {
    let state = init_state(cfg, init)?;
    run_from(cfg, state, t_end, record_stride, integrator)
}

pub fn run_from(
    cfg: &RingConfig,
    mut state: MicroState,
    t_end: f64,
    record_stride: usize,
    integrator: Integrator,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    let stride = record_stride.max(1);
    let steps = step_count(t_end, cfg.dt);
    let mut history = match integrator {
        Integrator::Delayed => Some(HistoryBuffer::constant(&state, cfg.tau, cfg.dt)),
        Integrator::FirstOrder => None,
    };
    let sample = |st: &MicroState, speeds: Vec<f64>| MicroSample {
        t: st.t,
        x: st.x.clone(),
        spacing: st.spacings(),
        speed: speeds,
    };
    let mut samples = Vec::with_capacity(steps / stride + 2);
    for k in 0..steps {
        let speeds = match &history {
            None => euler_speeds(&state, cfg),
            Some(h) => h.spacings_at(state.t - cfg.tau)?.iter().map(|&s| cfg.ov.w(s)).collect(),
        };
        if k % stride == 0 {
            samples.push(sample(&state, speeds.clone()));
        }
        state = match history.as_mut() {
            None => advance(&state, &speeds, cfg)?,
            Some(h) => step_newell_delayed(&state, h, cfg)?,
        };
        // keep sample times on the dt lattice
        state.t = (k + 1) as f64 * cfg.dt;
    }
    let speeds = match &history {
        None => euler_speeds(&state, cfg),
        Some(h) => h.spacings_at(state.t - cfg.tau)?.iter().map(|&s| cfg.ov.w(s)).collect(),
    };
    samples.push(sample(&state, speeds));
    Ok(TrajectoryRecord { ring_length: cfg.ring_length, dt: cfg.dt, samples })
}

/// Largest spacing gap between the first-order and delayed integrators
/// at each common sample.
pub fn integrator_divergence(
    cfg: &RingConfig,
    init: InitKind,
    t_end: f64,
    record_stride: usize,
) -> Result<Vec<(f64, f64)>> {
    let a = run_with(cfg, init, t_end, record_stride, Integrator::FirstOrder)?;
    let b = run_with(cfg, init, t_end, record_stride, Integrator::Delayed)?;
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(sa, sb)| {
            let d = sa.spacing.iter().zip(&sb.spacing).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            (sa.t, d)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> RingConfig {
        RingConfig::reference()
    }

    #[test]
    fn homogeneous_spacing() {
        let st = init_homogeneous(&cfg()).unwrap();
        for s in st.spacings() {
            assert_abs_diff_eq!(s, 2.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn jam_construction() {
        let st = init_jam(&cfg()).unwrap();
        let s = st.spacings();
        for v in &s[..49] {
            assert_abs_diff_eq!(*v, 1.05, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s[49], 101.0 - 49.0 * 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(s.iter().sum::<f64>(), 101.0, epsilon = 1e-12);
    }

    #[test]
    fn perturbed_construction() {
        let s = init_perturbed(&cfg()).unwrap().spacings();
        assert_abs_diff_eq!(s[0], 1.92, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 2.12, epsilon = 1e-12);
        for v in &s[2..] {
            assert_abs_diff_eq!(*v, 2.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn random_start_is_feasible_and_seeded() {
        let c = cfg();
        let a = init_random(&c).unwrap();
        let b = init_random(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.min_spacing() >= c.ov.ell);
        assert_abs_diff_eq!(a.spacings().iter().sum::<f64>(), c.ring_length, epsilon = 1e-10);
        let other = init_random(&RingConfig { seed: 2, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn overfull_ring_is_rejected() {
        let c = RingConfig { ring_length: 50.0, ..cfg() };
        assert!(matches!(init_homogeneous(&c), Err(Error::Configuration(_))));
        let c = RingConfig { jam_gap: 2.0, ..cfg() };
        assert!(matches!(init_jam(&c), Err(Error::Configuration(_))));
    }

    #[test]
    fn homogeneous_is_a_fixed_point_of_spacing() {
        let c = cfg();
        let st = init_homogeneous(&c).unwrap();
        let next = step_euler(&st, &c).unwrap();
        let w = c.ov.w(2.02);
        for i in 0..c.n_agents {
            assert_abs_diff_eq!(next.x[i] - st.x[i], c.dt * w, epsilon = 1e-12);
            assert_abs_diff_eq!(next.spacing(i), st.spacing(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_reaction_time_is_pipes_model() {
        let c = cfg().with_tau(0.0);
        let st = init_random(&c).unwrap();
        let v = euler_speeds(&st, &c);
        for i in 0..c.n_agents {
            assert_eq!(v[i], c.ov.w(st.spacing(i)));
        }
    }

    #[test]
    fn hand_evaluated_speed() {
        let c = cfg();
        let st = init_perturbed(&c).unwrap();
        let v = euler_speeds(&st, &c);
        // scalar re-evaluation of the reaction-time speed law
        let w = |s: f64| f64::max(0.0, f64::min(2.0, s - 1.0));
        let arg = 1.92 - 1.0 * (w(2.12) - w(1.92));
        assert_abs_diff_eq!(arg, 1.72, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], 0.72, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], w(arg), epsilon = 1e-12);
    }

    #[test]
    fn speeds_stay_bounded() {
        let c = cfg();
        let st = init_random(&c).unwrap();
        for v in euler_speeds(&st, &c) {
            assert!((0.0..=c.ov.v0).contains(&v));
        }
    }

    #[test]
    fn collision_is_reported_and_clamp_recovers() {
        let mut c = cfg().with_tau(-3.0);
        c.dt = 0.4;
        c.n_agents = 4;
        c.ring_length = 1.05 + 3.0 + 1.05 + 4.0;
        // anticipating agent 0 runs at V0 while its leader is held at rest
        let st = MicroState::from_spacings(0.0, c.ring_length, &[1.05, 3.0, 1.05, 4.0]);
        let err = step_euler(&st, &c).unwrap_err();
        assert!(matches!(err, Error::Collision { .. }), "{err:?}");
        c.collision = CollisionPolicy::Clamp;
        let next = step_euler(&st, &c).unwrap();
        assert!(next.min_spacing() >= c.ov.ell - 1e-12);
        assert_abs_diff_eq!(next.spacings().iter().sum::<f64>(), c.ring_length, epsilon = 1e-9);
    }

    #[test]
    fn delayed_model_rejects_non_positive_tau() {
        let c = cfg().with_tau(0.0);
        let st = init_homogeneous(&c).unwrap();
        let mut h = HistoryBuffer::constant(&st, 1.0, c.dt);
        assert!(matches!(step_newell_delayed(&st, &mut h, &c), Err(Error::UnsupportedMode(_))));
    }

    #[test]
    fn delayed_model_needs_history() {
        let c = cfg();
        let st = init_homogeneous(&c).unwrap();
        let mut h = HistoryBuffer::new(c.ring_length, 0);
        h.push(&st).unwrap();
        assert!(matches!(
            step_newell_delayed(&st, &mut h, &c),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn delayed_homogeneous_matches_first_order() {
        let c = cfg();
        let st = init_homogeneous(&c).unwrap();
        let mut h = HistoryBuffer::constant(&st, c.tau, c.dt);
        let a = step_newell_delayed(&st, &mut h, &c).unwrap();
        let b = step_euler(&st, &c).unwrap();
        for i in 0..c.n_agents {
            assert_abs_diff_eq!(a.x[i], b.x[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn delayed_result_independent_of_buffer_capacity() {
        let c = cfg();
        let st0 = init_perturbed(&c).unwrap();
        let mut h1 = HistoryBuffer::constant(&st0, c.tau, c.dt);
        let mut h2 = HistoryBuffer::constant(&st0, c.tau, c.dt).with_extra(500);
        let (mut a, mut b) = (st0.clone(), st0);
        for k in 0..400 {
            a = step_newell_delayed(&a, &mut h1, &c).unwrap();
            b = step_newell_delayed(&b, &mut h2, &c).unwrap();
            a.t = (k + 1) as f64 * c.dt;
            b.t = a.t;
        }
        assert_eq!(a.x, b.x);
        assert!(h2.len() > h1.len());
    }

    #[test]
    fn steady_history_gives_equilibrium_speeds() {
        let c = cfg().with_tau(0.37);
        let st = init_homogeneous(&c).unwrap();
        let speed = c.ov.w(c.mean_spacing());
        // history of the ring translating at constant speed
        let mut h = HistoryBuffer::new(c.ring_length, 0);
        for k in (0..=60).rev() {
            let t = -(k as f64) * c.dt;
            let moved = MicroState { t, ring_length: c.ring_length, x: st.x.iter().map(|x| x + speed * t).collect() };
            h.push(&moved).unwrap();
        }
        let next = step_newell_delayed(&st, &mut h, &c).unwrap();
        for i in 0..c.n_agents {
            assert_abs_diff_eq!(next.x[i] - st.x[i], c.dt * speed, epsilon = 1e-13);
        }
    }

    #[test]
    fn lagrangian_homogeneous_unchanged() {
        let c = cfg();
        let rho = vec![1.0 / 2.02; c.n_agents];
        let next = step_lagrangian_spacing(&rho, &c).unwrap();
        for r in next {
            assert_abs_diff_eq!(r, 1.0 / 2.02, epsilon = 1e-15);
        }
    }

    #[test]
    fn lagrangian_zero_tau_is_upwind() {
        let c = cfg().with_tau(0.0);
        for (k1, k2) in [(0.3, 0.6), (0.9, 0.4), (0.5, 0.5)] {
            assert_eq!(tilde_v(&c.ov, 0.0, k1, k2), c.ov.v(k2));
        }
    }

    #[test]
    fn lagrangian_matches_positions() {
        let c = cfg();
        let mut st = init_random(&c).unwrap();
        for _ in 0..200 {
            let rho: Vec<f64> = st.spacings().iter().map(|s| 1.0 / s).collect();
            let lag = step_lagrangian_spacing(&rho, &c).unwrap();
            st = step_euler(&st, &c).unwrap();
            for (i, r) in lag.iter().enumerate() {
                assert!((1.0 / r - st.spacing(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrangian_rejects_bad_density() {
        assert!(step_lagrangian_spacing(&[0.5, 0.0, 0.4], &cfg()).is_err());
    }

    #[test]
    fn micro_stability_threshold() {
        let c = cfg();
        assert!(micro_stable(&c.clone().with_tau(0.4), 2.02));
        assert!(!micro_stable(&c.clone().with_tau(1.0), 2.02));
        assert!(micro_stable(&c.clone().with_tau(0.0), 2.02));
        assert!(micro_stable(&c.with_tau(-0.49), 2.02));
    }

    #[test]
    fn run_zero_horizon_and_determinism() {
        let c = cfg();
        let r = run(&c, InitKind::Random, 0.0, 10).unwrap();
        assert_eq!(r.samples.len(), 1);
        let a = run(&c, InitKind::Random, 5.0, 10).unwrap();
        let b = run(&c, InitKind::Random, 5.0, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 51);
    }

    #[test]
    fn csv_layout() {
        let r = run(&cfg(), InitKind::Homogeneous, 0.0, 1).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,agent,x,spacing,speed"));
        assert_eq!(lines.next(), Some("0,0,0,2.02,1.02"));
        assert_eq!(text.lines().count(), 51);
    }

    #[test]
    fn integrators_coincide_on_steady_ring() {
        let c = cfg();
        let d = integrator_divergence(&c, InitKind::Homogeneous, 2.0, 50).unwrap();
        assert!(d.iter().all(|(_, v)| *v < 1e-12));
        let d = integrator_divergence(&c, InitKind::Perturbed, 5.0, 100).unwrap();
        assert!(d.last().unwrap().1 > 0.0);
    }
}
