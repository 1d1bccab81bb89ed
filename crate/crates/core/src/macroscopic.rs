//! Finite-volume schemes for the Eulerian convection-diffusion models.
//!
//! Every scheme shares the conservative cell update
//! `rho_i <- rho_i + dt/dx (f_{i-1} - f_i)` on a periodic grid and differs
//! only in the boundary flow `f_i` between cells `i` and `i + 1`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::sig15;
use crate::measure::cell_speed;
use crate::micro::step_count;
use crate::ov::{FundamentalDiagram, TriangularOV};

/// Relative slack on `[0, 1/ell]` before a density counts as out of bounds.
pub const BOUNDS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Godunov convection, explicit Euler diffusion.
    GodunovEuler,
    /// Godunov convection, Godunov diffusion.
    GodunovGodunov,
    /// Godunov flux of the effective densities of the exact model.
    GodunovExact,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::GodunovEuler, Scheme::GodunovGodunov, Scheme::GodunovExact];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::GodunovEuler => "godunov-euler",
            Scheme::GodunovGodunov => "godunov-godunov",
            Scheme::GodunovExact => "godunov",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "godunov-euler" | "f1" => Ok(Scheme::GodunovEuler),
            "godunov-godunov" | "f2" => Ok(Scheme::GodunovGodunov),
            "godunov" | "godunov-exact" | "f3" => Ok(Scheme::GodunovExact),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundsPolicy {
    /// Fail the step on the first density outside `[0, 1/ell]`.
    #[default]
    Abort,
    /// Clamp into `[0, 1/ell]` and count the event. Breaks mass conservation.
    ClampAndFlag,
    /// Count the event and keep the raw value.
    Flag,
}

impl std::str::FromStr for BoundsPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abort" => Ok(Self::Abort),
            "clamp-and-flag" | "clamp" => Ok(Self::ClampAndFlag),
            "flag" => Ok(Self::Flag),
            other => Err(Error::InvalidParameter(format!("unknown bounds policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsEvent {
    pub cell: usize,
    pub time: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroGrid<F = TriangularOV> {
    pub t: f64,
    pub dx: f64,
    pub rho: Vec<f64>,
    pub fd: F,
    pub tau: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub bounds: BoundsPolicy,
    /// Out-of-bounds densities seen so far under a flagging policy.
    pub flagged: u64,
    pub first_flag: Option<BoundsEvent>,
}

impl<F: FundamentalDiagram + Clone> MacroGrid<F> {
    pub fn new(rho: Vec<f64>, dx: f64, fd: F, tau: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        if rho.len() < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 cells, got {}", rho.len())));
        }
        if !(dx > 0.0 && dt > 0.0 && dx.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dx and dt must be positive, got dx={dx}, dt={dt}")));
        }
        if !tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be finite".into()));
        }
        let rho_max = fd.jam_density();
        if let Some((i, r)) = rho
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r >= 0.0 && **r <= rho_max * (1.0 + BOUNDS_TOL)))
        {
            return Err(Error::BoundsViolation { cell: i, time: 0.0, rho: *r, rho_max });
        }
        Ok(Self {
            t: 0.0,
            dx,
            rho,
            fd,
            tau,
            dt,
            scheme,
            bounds: BoundsPolicy::Abort,
            flagged: 0,
            first_flag: None,
        })
    }

    pub fn with_bounds(mut self, policy: BoundsPolicy) -> Self {
        self.bounds = policy;
        self
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn at(&self, i: usize) -> f64 {
        self.rho[i % self.rho.len()]
    }

    /// `Σ rho_i dx`.
    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.dx
    }

    /// `G(rho_i, rho_{i+1}) + tau/dx (rho_i V'(rho_i))^2 (rho_{i+1} - rho_i)`.
    pub fn flux_f1(&self, i: usize) -> f64 {
        let (r0, r1) = (self.at(i), self.at(i + 1));
        let g = self.fd.godunov_flux(r0, r1);
        let c = r0 * self.fd.speed_slope(r0);
        g + self.tau / self.dx * c * c * (r1 - r0)
    }

    /// `G(rho_i, rho_{i+1}) + tau/dx rho_i V'(rho_i) [G(rho_{i+1}, rho_{i+2}) - G(rho_i, rho_{i+1})]`.
    pub fn flux_f2(&self, i: usize) -> f64 {
        let (r0, r1, r2) = (self.at(i), self.at(i + 1), self.at(i + 2));
        let g0 = self.fd.godunov_flux(r0, r1);
        let g1 = self.fd.godunov_flux(r1, r2);
        g0 + self.tau / self.dx * r0 * self.fd.speed_slope(r0) * (g1 - g0)
    }

    /// Effective density `rho_i / (1 - tau/dx (V(rho_{i+1}) - V(rho_i)))`,
    /// clamped into `[0, 1/ell]`.
    pub fn effective_density(&self, i: usize) -> Result<f64> {
        let (r0, r1) = (self.at(i), self.at(i + 1));
        let den = 1.0 - self.tau / self.dx * (self.fd.speed(r1) - self.fd.speed(r0));
        if !(den > 0.0) {
            return Err(Error::CflViolation { cell: i % self.rho.len(), denominator: den });
        }
        Ok((r0 / den).clamp(0.0, self.fd.jam_density()))
    }

    /// Godunov flux between the effective densities of cells `i` and `i+1`.
    pub fn flux_f3(&self, i: usize) -> Result<f64> {
        let a = self.effective_density(i)?;
        let b = self.effective_density(i + 1)?;
        Ok(self.fd.godunov_flux(a, b))
    }

    pub fn flux(&self, i: usize) -> Result<f64> {
        match self.scheme {
            Scheme::GodunovEuler => Ok(self.flux_f1(i)),
            Scheme::GodunovGodunov => Ok(self.flux_f2(i)),
            Scheme::GodunovExact => self.flux_f3(i),
        }
    }

    /// Boundary flows `f_0 .. f_{M-1}`, `f_i` sitting between cells `i` and `i+1`.
    pub fn fluxes(&self) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.flux(i)).collect()
    }

    pub fn step(&self) -> Result<Self> {
        let f = self.fluxes()?;
        let m = self.len();
        let ratio = self.dt / self.dx;
        let mut next = self.clone();
        next.t = self.t + self.dt;
        for i in 0..m {
            next.rho[i] = self.rho[i] + ratio * (f[(i + m - 1) % m] - f[i]);
        }
        next.check_bounds()?;
        Ok(next)
    }

    fn check_bounds(&mut self) -> Result<()> {
        let rho_max = self.fd.jam_density();
        let hi = rho_max * (1.0 + BOUNDS_TOL);
        let lo = -BOUNDS_TOL * rho_max.min(1e300);
        for i in 0..self.rho.len() {
            let r = self.rho[i];
            if r >= lo && r <= hi {
                continue;
            }
            match self.bounds {
                BoundsPolicy::Abort => {
                    return Err(Error::BoundsViolation { cell: i, time: self.t, rho: r, rho_max });
                }
                BoundsPolicy::ClampAndFlag | BoundsPolicy::Flag => {
                    self.flagged += 1;
                    if self.first_flag.is_none() {
                        self.first_flag = Some(BoundsEvent { cell: i, time: self.t, rho: r });
                    }
                    if self.bounds == BoundsPolicy::ClampAndFlag {
                        self.rho[i] = if r.is_nan() { rho_max } else { r.clamp(0.0, rho_max) };
                    }
                }
            }
        }
        Ok(())
    }

    /// Advances to `t_end`, sampling every `record_stride` steps and at the end.
    pub fn run(mut self, t_end: f64, record_stride: usize) -> Result<(MacroRecord, Self)> {
        if !(t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
        }
        let stride = record_stride.max(1);
        let steps = step_count(t_end, self.dt);
        let mut samples = Vec::with_capacity(steps / stride + 2);
        let t0 = self.t;
        for k in 0..steps {
            if k % stride == 0 {
                samples.push(MacroSample { t: self.t, rho: self.rho.clone() });
            }
            self = self.step()?;
            self.t = t0 + (k + 1) as f64 * self.dt;
        }
        samples.push(MacroSample { t: self.t, rho: self.rho.clone() });
        Ok((MacroRecord { dx: self.dx, tau: self.tau, samples }, self))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSample {
    pub t: f64,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroRecord {
    pub dx: f64,
    pub tau: f64,
    pub samples: Vec<MacroSample>,
}

impl MacroRecord {
    /// `t,cell,rho,speed,flow` with the speed measured by [`cell_speed`].
    pub fn write_csv<W: Write, F: FundamentalDiagram>(&self, fd: &F, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,cell,rho,speed,flow")?;
        for s in &self.samples {
            let t = sig15(s.t);
            let m = s.rho.len();
            for i in 0..m {
                let rho = s.rho[i];
                let v = cell_speed(fd, self.tau, rho, s.rho[(i + 1) % m]);
                writeln!(out, "{t},{i},{},{},{}", sig15(rho), sig15(v), sig15(rho * v))?;
            }
        }
        Ok(())
    }

    /// Density matrix, one row per sample, one column per cell.
    pub fn write_heatmap<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            let row: Vec<String> = s.rho.iter().map(|r| sig15(*r)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsVerdict {
    pub guaranteed: bool,
    pub condition: String,
}

/// Whether `F(0, ...) >= 0` and `F(rho_M, ...) <= rho_M` hold for every
/// neighbour triple, following the per-scheme conditions. The Godunov
/// transport CFL `dt V0 <= dx` is required in addition when `V0` is finite.
pub fn check_bounds_map<F: FundamentalDiagram>(
    scheme: Scheme,
    fd: &F,
    tau: f64,
    dx: f64,
    dt: f64,
    rho_e: f64,
) -> BoundsVerdict {
    let transport = match fd.max_speed() {
        Some(v0) => dt * v0 <= dx,
        None => true,
    };
    let (ok, condition) = match scheme {
        Scheme::GodunovEuler => (tau <= 0.0, "tau <= 0".to_string()),
        Scheme::GodunovGodunov => {
            // W' read at the equilibrium spacing 1/rho_e
            let w1 = fd.spacing_speed_slope(1.0 / rho_e);
            if w1 > 0.0 {
                let lim = -dx * rho_e / w1;
                (tau >= lim, format!("tau >= {lim}"))
            } else {
                (true, "W'(1/rho_e) = 0, no constraint".to_string())
            }
        }
        Scheme::GodunovExact => match fd.max_speed() {
            Some(v0) => (tau < dx / v0, format!("tau < {}", dx / v0)),
            None => (true, "unbounded V, check skipped".to_string()),
        },
    };
    let condition = if transport {
        condition
    } else {
        format!("{condition}; dt V0 <= dx violated")
    };
    BoundsVerdict { guaranteed: (ok || tau == 0.0) && transport, condition }
}
