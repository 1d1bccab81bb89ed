//! Linear stability of the homogeneous state.
//!
//! The discrete schemes linearize to a circulant update with stencil
//! `(ξ, α, β, γ)` on cells `(i-1, i, i+1, i+2)`. Mode `l` then has the
//! eigenvalue `α + β ω + γ ω² + ξ / ω`, `ω = exp(2πi l / N)`.
//!
//! For both stencil families `|λ(c)|² - 1 = 2 (c - 1) h(c)` with `h` affine in
//! `c = cos(2πl/N)`, so the closed forms only need `h > 0` at the two extreme
//! values of `c` present on the ring. As `N → ∞` the thresholds reduce to the
//! Δt conditions of the lemmas.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::sig15;
use crate::ov::FundamentalDiagram;

pub const TOL_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Stable,
    /// Within [`TOL_MARGIN`] of the boundary.
    Marginal,
    Unstable,
    /// Scheme undefined at these parameters.
    Infeasible,
}

impl Verdict {
    pub fn is_stable(self) -> bool {
        self == Verdict::Stable
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Marginal => "marginal",
            Verdict::Unstable => "unstable",
            Verdict::Infeasible => "infeasible",
        }
    }

    /// `value < 1` with the margin applied symmetrically.
    fn below_one(value: f64) -> Self {
        if value < 1.0 - TOL_MARGIN {
            Verdict::Stable
        } else if value <= 1.0 + TOL_MARGIN {
            Verdict::Marginal
        } else {
            Verdict::Unstable
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub xi: f64,
}

impl LinearizationCoeffs {
    pub fn row_sum(&self) -> f64 {
        self.alpha + self.beta + self.gamma + self.xi
    }

    /// Direct evaluation of the circulant symbol.
    pub fn symbol(&self, l: usize, n: usize) -> Complex64 {
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / n as f64);
        self.alpha + self.beta * w + self.gamma * w * w + self.xi / w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StabilityScheme {
    Micro,
    Continuous,
    GodunovEuler,
    GodunovGodunov,
    GodunovExact,
}

impl std::str::FromStr for StabilityScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Self::Micro),
            "continuous" => Ok(Self::Continuous),
            "f1" | "godunov-euler" => Ok(Self::GodunovEuler),
            "f2" | "godunov-godunov" => Ok(Self::GodunovGodunov),
            "f3" | "godunov" | "godunov-exact" => Ok(Self::GodunovExact),
            other => Err(Error::InvalidParameter(format!("unknown stability scheme '{other}'"))),
        }
    }
}

impl From<crate::macroscopic::Scheme> for StabilityScheme {
    fn from(s: crate::macroscopic::Scheme) -> Self {
        use crate::macroscopic::Scheme;
        match s {
            Scheme::GodunovEuler => Self::GodunovEuler,
            Scheme::GodunovGodunov => Self::GodunovGodunov,
            Scheme::GodunovExact => Self::GodunovExact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityQuery {
    pub scheme: StabilityScheme,
    pub rho_e: f64,
    pub tau: f64,
    pub t_gap: f64,
    pub ell: f64,
    pub dx: f64,
    pub dt: f64,
    pub n_cells: usize,
    /// Free-flow speed, used only for the exact-scheme feasibility check.
    pub v0: Option<f64>,
}

impl StabilityQuery {
    /// Ring of `n` cells of the reference ring size with `dx = 1/rho_e`.
    pub fn reference(scheme: StabilityScheme) -> Self {
        Self {
            scheme,
            rho_e: 1.0 / 2.02,
            tau: 1.0,
            t_gap: 1.0,
            ell: 1.0,
            dx: 2.02,
            dt: 0.01,
            n_cells: 50,
            v0: Some(2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.ell > 0.0 && self.t_gap > 0.0) {
            return bad(format!("ell and t_gap must be positive, got {} and {}", self.ell, self.t_gap));
        }
        if !(self.rho_e > 0.0 && self.rho_e < 1.0 / self.ell) {
            return bad(format!("rho_e = {} outside (0, 1/ell)", self.rho_e));
        }
        if self.n_cells < 2 {
            return bad(format!("need N >= 2, got {}", self.n_cells));
        }
        if !(self.dx > 0.0 && self.dt > 0.0) {
            return bad(format!("dx and dt must be positive, got {} and {}", self.dx, self.dt));
        }
        if !self.tau.is_finite() {
            return bad("tau must be finite".into());
        }
        Ok(())
    }

    fn a(&self) -> f64 {
        self.ell / (self.t_gap * self.dx)
    }

    /// `cos(2πl/N)` for the longest and shortest waves on the ring.
    pub fn extreme_cos(&self) -> (f64, f64) {
        let n = self.n_cells as f64;
        let tp = 2.0 * std::f64::consts::PI;
        ((tp / n).cos(), (tp * (self.n_cells / 2) as f64 / n).cos())
    }

    fn infeasible(&self) -> bool {
        self.scheme == StabilityScheme::GodunovExact
            && matches!(self.v0, Some(v0) if self.tau >= self.dx / v0)
    }
}

/// Godunov/Euler: `A = dt ell/(T dx)`, `B = dt tau/(T dx rho_e)^2`.
pub fn coeffs_f1(q: &StabilityQuery) -> LinearizationCoeffs {
    let a = q.dt * q.a();
    let b = q.dt * q.tau / (q.t_gap * q.dx * q.rho_e).powi(2);
    LinearizationCoeffs { alpha: 1.0 - a + 2.0 * b, beta: a - b, gamma: 0.0, xi: -b }
}

/// Godunov/Godunov and exact Godunov: `A = dt ell/(T dx)`, `B = tau/(T dx rho_e)`.
pub fn coeffs_f23(q: &StabilityQuery) -> LinearizationCoeffs {
    let a = q.dt * q.a();
    let b = q.tau / (q.t_gap * q.dx * q.rho_e);
    LinearizationCoeffs { alpha: 1.0 - a * (1.0 + b), beta: a * (1.0 + 2.0 * b), gamma: -a * b, xi: 0.0 }
}

pub fn coeffs(q: &StabilityQuery) -> Result<LinearizationCoeffs> {
    match q.scheme {
        StabilityScheme::GodunovEuler => Ok(coeffs_f1(q)),
        StabilityScheme::GodunovGodunov | StabilityScheme::GodunovExact => Ok(coeffs_f23(q)),
        other => Err(Error::UnsupportedMode(format!("{other:?} has no discrete linearization"))),
    }
}

/// `|λ_l|²` through its polynomial in `c = cos(2πl/N)`. Mode 0 is the
/// conserved mass and returns 1.
pub fn eigen_modulus_sq(k: &LinearizationCoeffs, l: usize, n: usize) -> f64 {
    if l % n == 0 {
        return 1.0;
    }
    let c = (2.0 * std::f64::consts::PI * l as f64 / n as f64).cos();
    let LinearizationCoeffs { alpha: a, beta: b, gamma: g, xi: x } = *k;
    let f = (a * b + a * x + b * g - 3.0 * g * x) * c + 2.0 * (a * g + b * x) * c * c + 4.0 * g * x * c * c * c;
    a * a + b * b + g * g + x * x - 2.0 * a * g - 2.0 * b * x + 2.0 * f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// f1, `tau < 0`: Δt bound set by the shortest wave.
    F1NegativeTau,
    /// f1, `0 <= tau < T ell dx rho_e^2 / 2`: Δt bound set by the longest wave.
    F1LongWaveBound,
    /// f1, `T ell dx rho_e^2 / 2 <= tau < T ell dx rho_e^2`: long waves grow for every Δt.
    F1LongWaveUnstable,
    /// f1, `tau >= T ell dx rho_e^2`: short waves grow for every Δt.
    F1ShortWaveUnstable,
    /// f2/f3, `tau >= 0` inside the delay window.
    F23PositiveTau,
    /// f2/f3, `tau < 0` inside the delay window. The long-wave bound
    /// `T dx/ell - 2 tau/(ell rho_e)` is tighter than the short-wave one.
    F23NegativeTau,
    /// f2/f3, `2|tau| >= T dx rho_e`: unstable for every Δt.
    F23DelayTooLarge,
    /// Exact Godunov with `tau >= dx/V0`.
    Infeasible,
}

impl Branch {
    pub fn describe(self) -> &'static str {
        match self {
            Branch::F1NegativeTau => "f1 tau<0: short-wave dt bound",
            Branch::F1LongWaveBound => "f1 0<=tau<T ell dx rho_e^2/2: long-wave dt bound",
            Branch::F1LongWaveUnstable => "f1 tau>=T ell dx rho_e^2/2: long-wave unstable for all dt",
            Branch::F1ShortWaveUnstable => "f1 tau>=T ell dx rho_e^2: short-wave unstable for all dt",
            Branch::F23PositiveTau => "f23 tau>=0: long-wave dt bound",
            Branch::F23NegativeTau => "f23 tau<0: dt bound min of long- and short-wave conditions",
            Branch::F23DelayTooLarge => "f23 2|tau|>=T dx rho_e: unstable for all dt",
            Branch::Infeasible => "exact scheme needs tau < dx/V0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub verdict: Verdict,
    pub branch: Branch,
    /// Largest stable Δt on this ring, `None` when no Δt is stable.
    pub dt_limit: Option<f64>,
    /// Open τ window outside which no Δt is stable.
    pub tau_window: (f64, f64),
    /// Fastest-growing position `x0 = -β(1-β)/(4αγ)` for the f2/f3 stencil with `tau > 0`.
    pub x0: Option<f64>,
    /// Lemma 1's wavelength-classifying Δt value for the unstable f1 branches.
    pub wavelength_dt: Option<f64>,
}

fn dt_verdict(dt: f64, limit: Option<f64>) -> Verdict {
    match limit {
        Some(lim) if lim > 0.0 => Verdict::below_one(dt / lim),
        _ => Verdict::Unstable,
    }
}

/// Stability of the Godunov/Euler scheme on `N` cells.
///
/// With `a = ell/(T dx)`, `b = tau/(T dx rho_e)^2`, `p = a - 2b` and
/// `q(c) = p² + 2b(a-b)(1+c) >= 0`, mode `c` is damped iff `dt q(c) < p`.
pub fn closed_form_f1(q: &StabilityQuery) -> ClosedForm {
    let a = q.a();
    let b = q.tau / (q.t_gap * q.dx * q.rho_e).powi(2);
    let p = a - 2.0 * b;
    let scale = q.t_gap * q.ell * q.dx * q.rho_e * q.rho_e;
    let tau_window = (f64::NEG_INFINITY, 0.5 * scale);
    let wavelength_dt = (q.tau >= 0.5 * scale)
        .then(|| (q.tau - 0.5 * scale) * (2.0 * q.tau / (q.t_gap * q.dx * q.rho_e)).powi(-2));
    if p <= 0.0 {
        let branch = if q.tau >= scale { Branch::F1ShortWaveUnstable } else { Branch::F1LongWaveUnstable };
        return ClosedForm { verdict: Verdict::Unstable, branch, dt_limit: None, tau_window, x0: None, wavelength_dt };
    }
    let (c_hi, c_lo) = q.extreme_cos();
    let lim = |c: f64| {
        let qc = p * p + 2.0 * b * (a - b) * (1.0 + c);
        if qc > 0.0 {
            p / qc
        } else {
            f64::INFINITY
        }
    };
    let dt_limit = lim(c_hi).min(lim(c_lo));
    let branch = if q.tau < 0.0 { Branch::F1NegativeTau } else { Branch::F1LongWaveBound };
    ClosedForm {
        verdict: dt_verdict(q.dt, Some(dt_limit)),
        branch,
        dt_limit: Some(dt_limit),
        tau_window,
        x0: None,
        wavelength_dt,
    }
}

/// Stability of the Godunov/Godunov and exact Godunov schemes on `N` cells.
///
/// With `B = tau/(T dx rho_e)`, `N(c) = 1 - 2Bc` and
/// `D(c) = (1+2B)² - 2B(1+B)(1+c) >= 0`, mode `c` is damped iff
/// `dt ell/(T dx) D(c) < N(c)`.
pub fn closed_form_f23(q: &StabilityQuery) -> ClosedForm {
    let a = q.a();
    let big_b = q.tau / (q.t_gap * q.dx * q.rho_e);
    let (c_hi, c_lo) = q.extreme_cos();
    let to_tau = |bb: f64| bb * q.t_gap * q.dx * q.rho_e;
    let tau_window = (to_tau(0.5 / c_lo.min(-f64::MIN_POSITIVE)), to_tau(0.5 / c_hi.max(f64::MIN_POSITIVE)));
    if q.infeasible() {
        return ClosedForm {
            verdict: Verdict::Infeasible,
            branch: Branch::Infeasible,
            dt_limit: None,
            tau_window,
            x0: None,
            wavelength_dt: None,
        };
    }
    let k = coeffs_f23(q);
    let x0 = (q.tau > 0.0 && k.gamma != 0.0)
        .then(|| -k.beta * (1.0 - k.beta) / (4.0 * k.alpha * k.gamma));
    let num = |c: f64| 1.0 - 2.0 * big_b * c;
    let den = |c: f64| (1.0 + 2.0 * big_b).powi(2) - 2.0 * big_b * (1.0 + big_b) * (1.0 + c);
    if num(c_hi) <= 0.0 || num(c_lo) <= 0.0 {
        return ClosedForm {
            verdict: Verdict::Unstable,
            branch: Branch::F23DelayTooLarge,
            dt_limit: None,
            tau_window,
            x0,
            wavelength_dt: None,
        };
    }
    let lim = |c: f64| {
        let d = den(c);
        if d > 0.0 {
            num(c) / (a * d)
        } else {
            f64::INFINITY
        }
    };
    let dt_limit = lim(c_hi).min(lim(c_lo));
    let branch = if q.tau < 0.0 { Branch::F23NegativeTau } else { Branch::F23PositiveTau };
    ClosedForm {
        verdict: dt_verdict(q.dt, Some(dt_limit)),
        branch,
        dt_limit: Some(dt_limit),
        tau_window,
        x0,
        wavelength_dt: None,
    }
}

pub fn closed_form(q: &StabilityQuery) -> Result<ClosedForm> {
    match q.scheme {
        StabilityScheme::GodunovEuler => Ok(closed_form_f1(q)),
        StabilityScheme::GodunovGodunov | StabilityScheme::GodunovExact => Ok(closed_form_f23(q)),
        other => Err(Error::UnsupportedMode(format!("{other:?} has no discrete closed form"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigen_verdict: Verdict,
    pub max_modulus_sq: f64,
    /// First mode attaining the maximum, in `[1, N-1]`.
    pub argmax_mode: usize,
    pub closed_form_verdict: Verdict,
    pub closed_form: ClosedForm,
    pub notes: String,
}

pub fn scan_stability(q: &StabilityQuery) -> Result<StabilityReport> {
    q.validate()?;
    let k = coeffs(q)?;
    let n = q.n_cells;
    let (mut best, mut arg) = (f64::NEG_INFINITY, 1);
    for l in 1..n {
        let m = eigen_modulus_sq(&k, l, n);
        if m > best {
            best = m;
            arg = l;
        }
    }
    let cf = closed_form(q)?;
    let mut notes = cf.branch.describe().to_string();
    if let Some(lim) = cf.dt_limit {
        notes.push_str(&format!("; dt < {}", sig15(lim)));
    }
    let eigen_verdict = if q.infeasible() { Verdict::Infeasible } else { Verdict::below_one(best) };
    Ok(StabilityReport {
        eigen_verdict,
        max_modulus_sq: best,
        argmax_mode: arg,
        closed_form_verdict: cf.verdict,
        closed_form: cf,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStability {
    pub verdict: Verdict,
    pub note: Option<String>,
    v: f64,
    v_prime: f64,
    rho_e: f64,
    tau: f64,
}

impl ContinuousStability {
    /// Characteristic root of mode `l`: `tau (l rho_e V')² + i l (V + rho_e V')`.
    pub fn root(&self, l: f64) -> Complex64 {
        let d = l * self.rho_e * self.v_prime;
        Complex64::new(self.tau * d * d, l * (self.v + self.rho_e * self.v_prime))
    }
}

pub fn continuous_stability<F: FundamentalDiagram + ?Sized>(fd: &F, rho_e: f64, tau: f64) -> Result<ContinuousStability> {
    if !(rho_e > 0.0 && rho_e <= fd.jam_density()) {
        return Err(Error::Domain(format!("rho_e = {rho_e} outside (0, 1/ell]")));
    }
    let v_prime = fd.speed_slope(rho_e);
    let (verdict, note) = if v_prime == 0.0 {
        (Verdict::Marginal, Some("V'(rho_e) = 0: perturbations neutral at linear order".to_string()))
    } else if tau < 0.0 {
        (Verdict::Stable, None)
    } else if tau == 0.0 {
        (Verdict::Marginal, None)
    } else {
        (Verdict::Unstable, None)
    };
    Ok(ContinuousStability { verdict, note, v: fd.speed(rho_e), v_prime, rho_e, tau })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapAxis {
    Dt,
    RhoE,
}

impl MapAxis {
    pub fn name(self) -> &'static str {
        match self {
            MapAxis::Dt => "dt",
            MapAxis::RhoE => "rho_e",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapCell {
    pub tau: f64,
    pub y: f64,
    pub eigen: Verdict,
    pub closed: Verdict,
    pub max_modulus_sq: f64,
    pub argmax_mode: usize,
    pub dt_limit: Option<f64>,
    pub tau_window: (f64, f64),
    pub branch: Branch,
}

impl MapCell {
    pub fn disagrees(&self) -> bool {
        self.eigen.is_stable() != self.closed.is_stable()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    pub axis: MapAxis,
    pub tau_len: usize,
    pub y_len: usize,
    /// Row-major, `tau` outer.
    pub cells: Vec<MapCell>,
}

/// `n` evenly spaced points over `[lo, hi]`; a single point when `lo == hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter("range bounds must be finite".into()));
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be >= 2, got {n}")));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

/// Verdicts over `tau_range × y_range`, `y` being Δt or `rho_e` per `axis`.
pub fn stability_map(
    base: &StabilityQuery,
    tau_range: (f64, f64),
    y_range: (f64, f64),
    axis: MapAxis,
    resolution: usize,
) -> Result<StabilityMap> {
    let taus = linspace(tau_range.0, tau_range.1, resolution)?;
    let ys = linspace(y_range.0, y_range.1, resolution)?;
    coeffs(base)?;
    let points: Vec<(f64, f64)> = taus.iter().flat_map(|&t| ys.iter().map(move |&y| (t, y))).collect();
    let cells = points
        .par_iter()
        .map(|&(tau, y)| {
            let mut q = StabilityQuery { tau, ..*base };
            match axis {
                MapAxis::Dt => q.dt = y,
                MapAxis::RhoE => q.rho_e = y,
            }
            let r = scan_stability(&q)?;
            Ok(MapCell {
                tau,
                y,
                eigen: r.eigen_verdict,
                closed: r.closed_form_verdict,
                max_modulus_sq: r.max_modulus_sq,
                argmax_mode: r.argmax_mode,
                dt_limit: r.closed_form.dt_limit,
                tau_window: r.closed_form.tau_window,
                branch: r.closed_form.branch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityMap { axis, tau_len: taus.len(), y_len: ys.len(), cells })
}

impl StabilityMap {
    pub fn disagreements(&self) -> usize {
        self.cells.iter().filter(|c| c.disagrees()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "tau,{},eigen_verdict,closed_form_verdict,max_modulus_sq,argmax_mode",
            self.axis.name()
        )?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                sig15(c.tau),
                sig15(c.y),
                c.eigen,
                c.closed,
                sig15(c.max_modulus_sq),
                c.argmax_mode
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macroscopic::{BoundsPolicy, MacroGrid, Scheme};
    use crate::ov::{AffineOV, TriangularOV};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn f1_query(tau: f64, dt: f64) -> StabilityQuery {
        StabilityQuery {
            scheme: StabilityScheme::GodunovEuler,
            rho_e: 0.5,
            tau,
            t_gap: 1.0,
            ell: 1.0,
            dx: 2.0,
            dt,
            n_cells: 50,
            v0: None,
        }
    }

    fn f23_query(tau: f64, dt: f64) -> StabilityQuery {
        StabilityQuery { tau, dt, ..StabilityQuery::reference(StabilityScheme::GodunovGodunov) }
    }

    fn close(a: LinearizationCoeffs, b: (f64, f64, f64, f64), eps: f64) {
        assert_abs_diff_eq!(a.alpha, b.0, epsilon = eps);
        assert_abs_diff_eq!(a.beta, b.1, epsilon = eps);
        assert_abs_diff_eq!(a.gamma, b.2, epsilon = eps);
        assert_abs_diff_eq!(a.xi, b.3, epsilon = eps);
    }

    #[test]
    fn f1_coefficient_examples() {
        close(coeffs_f1(&f1_query(1.0, 0.01)), (1.015, -0.005, 0.0, -0.01), 1e-15);
        let a = 0.01 / 2.0;
        close(coeffs_f1(&f1_query(0.0, 0.01)), (1.0 - a, a, 0.0, 0.0), 1e-15);
    }

    #[test]
    fn f23_coefficient_example() {
        let a = 0.01 / 2.02;
        close(coeffs_f23(&f23_query(1.0, 0.01)), (1.0 - 2.0 * a, 3.0 * a, -a, 0.0), 1e-15);
    }

    /// Centered differences of one real step of the scheme on the affine diagram.
    fn numerical_coeffs(scheme: Scheme, q: &StabilityQuery) -> LinearizationCoeffs {
        let fd = AffineOV::new(q.ell, q.t_gap).unwrap();
        let n = 8;
        let j = 4;
        let h = 1e-6 * q.rho_e;
        let run = |delta: f64| {
            let mut rho = vec![q.rho_e; n];
            rho[j] += delta;
            MacroGrid::new(rho, q.dx, fd, q.tau, q.dt, scheme)
                .unwrap()
                .with_bounds(BoundsPolicy::Flag)
                .step()
                .unwrap()
                .rho
        };
        let (p, m) = (run(h), run(-h));
        let d = |i: usize| (p[i] - m[i]) / (2.0 * h);
        LinearizationCoeffs { alpha: d(j), beta: d(j - 1), gamma: d(j - 2), xi: d(j + 1) }
    }

    #[test]
    fn coefficients_match_finite_differences() {
        for &(tau, dt) in &[(1.0, 0.01), (-0.7, 0.3), (0.3, 1.2)] {
            let q = f1_query(tau, dt);
            let k = coeffs_f1(&q);
            close(numerical_coeffs(Scheme::GodunovEuler, &q), (k.alpha, k.beta, k.gamma, k.xi), 1e-6);
            let q = f23_query(tau, dt);
            let k = coeffs_f23(&q);
            let t = (k.alpha, k.beta, k.gamma, k.xi);
            close(numerical_coeffs(Scheme::GodunovGodunov, &q), t, 1e-6);
            close(numerical_coeffs(Scheme::GodunovExact, &q), t, 1e-6);
        }
    }

    #[test]
    fn row_sum_and_mode_zero() {
        for &(tau, dt) in &[(1.0, 0.01), (-0.3, 2.0), (0.0, 0.5)] {
            for k in [coeffs_f1(&f1_query(tau, dt)), coeffs_f23(&f23_query(tau, dt))] {
                assert_abs_diff_eq!(k.row_sum(), 1.0, epsilon = 4.0 * f64::EPSILON);
                assert_eq!(eigen_modulus_sq(&k, 0, 50), 1.0);
            }
        }
        let id = LinearizationCoeffs { alpha: 1.0, beta: 0.0, gamma: 0.0, xi: 0.0 };
        for l in 0..7 {
            assert_abs_diff_eq!(eigen_modulus_sq(&id, l, 7), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn reference_setup_is_unstable() {
        let q = StabilityQuery::reference(StabilityScheme::GodunovExact);
        let r = scan_stability(&q).unwrap();
        assert_eq!(r.eigen_verdict, Verdict::Unstable);
        assert_eq!(r.closed_form_verdict, Verdict::Unstable);
        assert_eq!(r.closed_form.branch, Branch::F23DelayTooLarge);
        assert!((1..50).contains(&r.argmax_mode));
    }

    #[test]
    fn zero_delay_small_step_is_stable() {
        for dt in [0.01, 0.5, 1.9] {
            let r = scan_stability(&f1_query(0.0, dt)).unwrap();
            assert_eq!(r.eigen_verdict, Verdict::Stable);
            assert_eq!(r.closed_form_verdict, Verdict::Stable);
            assert_abs_diff_eq!(r.closed_form.dt_limit.unwrap(), 2.0, epsilon = 1e-14);
        }
        let r = scan_stability(&f1_query(0.0, 2.1)).unwrap();
        assert_eq!(r.eigen_verdict, Verdict::Unstable);
        assert_eq!(r.closed_form_verdict, Verdict::Unstable);
    }

    #[test]
    fn smallest_ring() {
        let q = StabilityQuery { n_cells: 2, ..f1_query(0.0, 0.5) };
        let r = scan_stability(&q).unwrap();
        assert_eq!(r.argmax_mode, 1);
        let k = coeffs_f1(&q);
        assert_abs_diff_eq!(r.max_modulus_sq, (k.alpha - k.beta).powi(2), epsilon = 1e-15);
        assert!(scan_stability(&StabilityQuery { n_cells: 1, ..q }).is_err());
    }

    #[test]
    fn f1_branches() {
        let r = closed_form_f1(&f1_query(-0.1, 0.01));
        assert_eq!((r.verdict, r.branch), (Verdict::Stable, Branch::F1NegativeTau));
        // T ell dx rho_e^2 = 0.5
        let r = closed_form_f1(&f1_query(0.6, 0.001));
        assert_eq!((r.verdict, r.branch), (Verdict::Unstable, Branch::F1ShortWaveUnstable));
        let r = closed_form_f1(&f1_query(0.3, 0.001));
        assert_eq!((r.verdict, r.branch), (Verdict::Unstable, Branch::F1LongWaveUnstable));
        assert!(r.wavelength_dt.is_some());
        let r = closed_form_f1(&f1_query(0.1, 0.001));
        assert_eq!((r.verdict, r.branch), (Verdict::Stable, Branch::F1LongWaveBound));
    }

    #[test]
    fn f1_long_wave_limit() {
        // as N grows the bound tends to T dx/ell - 2 tau/(ell rho_e)^2
        let q = StabilityQuery { n_cells: 100_000, ..f1_query(0.1, 0.01) };
        let lim = closed_form_f1(&q).dt_limit.unwrap();
        assert_abs_diff_eq!(lim, 2.0 - 0.8, epsilon = 1e-6);
    }

    #[test]
    fn f23_branches() {
        let r = closed_form_f23(&f23_query(-0.6 * 1.0, 0.001));
        assert_eq!((r.verdict, r.branch), (Verdict::Unstable, Branch::F23DelayTooLarge));
        let q = StabilityQuery { n_cells: 100_000, ..f23_query(0.2, 0.01) };
        let r = closed_form_f23(&q);
        assert_eq!(r.branch, Branch::F23PositiveTau);
        assert_abs_diff_eq!(r.dt_limit.unwrap(), 2.02 - 2.0 * 0.2 * 2.02, epsilon = 1e-6);
        assert!(r.x0.is_some());
        let q = StabilityQuery { n_cells: 100_000, ..f23_query(-0.2, 0.01) };
        let r = closed_form_f23(&q);
        assert_eq!(r.branch, Branch::F23NegativeTau);
        assert_abs_diff_eq!(r.dt_limit.unwrap(), 2.02 + 2.0 * 0.2 * 2.02, epsilon = 1e-6);
        // the short-wave condition T dx/(ell + 2 ell tau/(T dx rho_e)) is looser
        assert!(r.dt_limit.unwrap() < 2.02 / (1.0 - 2.0 * 0.2));
        let just_above = StabilityQuery { dt: 2.9, ..q };
        assert_eq!(scan_stability(&just_above).unwrap().eigen_verdict, Verdict::Unstable);
    }

    #[test]
    fn exact_scheme_feasibility() {
        let q = StabilityQuery { tau: 1.02, ..StabilityQuery::reference(StabilityScheme::GodunovExact) };
        assert_eq!(closed_form_f23(&q).verdict, Verdict::Infeasible);
        let q = StabilityQuery { scheme: StabilityScheme::GodunovGodunov, ..q };
        assert_ne!(closed_form_f23(&q).verdict, Verdict::Infeasible);
    }

    #[test]
    fn micro_threshold_recovered_at_mean_spacing() {
        let (c_hi, _) = f23_query(0.0, 0.01).extreme_cos();
        for dt in [1e-2, 1e-3, 1e-4] {
            let q = f23_query(0.0, dt);
            let (_, hi) = closed_form_f23(&q).tau_window;
            assert_abs_diff_eq!(hi, 0.5 / c_hi, epsilon = 1e-12);
            assert!((hi - 0.5).abs() / 0.5 < 0.01);
        }
    }

    #[test]
    fn continuous_examples() {
        let ov = TriangularOV::reference();
        let r = continuous_stability(&ov, 0.5, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable);
        for l in 1..5 {
            assert_abs_diff_eq!(r.root(l as f64).re, 4.0 * (l * l) as f64, epsilon = 1e-12);
        }
        let r = continuous_stability(&ov, 0.5, -0.5).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        assert!((1..10).all(|l| r.root(l as f64).re < 0.0));
        let r = continuous_stability(&ov, 0.5, 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::Marginal);
        assert_eq!(r.root(3.0).re, 0.0);
        // free-flow branch: V' = 0
        let r = continuous_stability(&ov, 0.2, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Marginal);
        assert!(r.note.is_some());
    }

    #[test]
    fn map_shapes_and_csv() {
        let base = f1_query(0.0, 0.5);
        let m = stability_map(&base, (0.1, 0.1), (0.5, 0.5), MapAxis::Dt, 2).unwrap();
        assert_eq!(m.cells.len(), 1);
        let m = stability_map(&base, (-0.5, 0.75), (0.01, 3.0), MapAxis::Dt, 5).unwrap();
        assert_eq!(m.cells.len(), 25);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next(),
            Some("tau,dt,eigen_verdict,closed_form_verdict,max_modulus_sq,argmax_mode")
        );
        assert_eq!(text.lines().count(), 26);
        assert!(stability_map(&base, (0.0, 1.0), (0.1, 1.0), MapAxis::Dt, 1).is_err());
    }

    #[test]
    fn f23_small_dt_boundary_within_one_cell() {
        let base = f23_query(0.0, 1e-4);
        let m = stability_map(&base, (-1.0, 1.0), (1e-4, 1e-4), MapAxis::Dt, 201).unwrap();
        let step = 2.0 / 200.0;
        // 2|tau| = T dx rho_e = 1
        for c in &m.cells {
            if (c.tau.abs() - 0.5).abs() > step {
                assert_eq!(c.closed.is_stable(), c.tau.abs() < 0.5, "tau {}", c.tau);
                assert_eq!(c.eigen.is_stable(), c.tau.abs() < 0.5, "tau {}", c.tau);
            }
        }
    }

    proptest! {
        #[test]
        fn polynomial_matches_complex(
            a in -3.0f64..3.0, b in -3.0f64..3.0, g in -3.0f64..3.0, x in -3.0f64..3.0,
            n in 2usize..80, l in 0usize..80,
        ) {
            let l = l % n;
            let raw = LinearizationCoeffs { alpha: a, beta: b, gamma: g, xi: x };
            // the l = 0 shortcut assumes a unit row sum
            let k = LinearizationCoeffs { alpha: 1.0 - b - g - x, ..raw };
            let direct = k.symbol(l, n).norm_sqr();
            prop_assert!((eigen_modulus_sq(&k, l, n) - direct).abs() <= 1e-12 * direct.max(1.0));
            if l != 0 {
                let direct = raw.symbol(l, n).norm_sqr();
                prop_assert!((eigen_modulus_sq(&raw, l, n) - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }

        #[test]
        fn closed_forms_agree_with_scan(tau in -1.0f64..1.0, dt in 0.01f64..3.0, n in 2usize..60) {
            for q in [StabilityQuery { n_cells: n, ..f1_query(tau, dt) }, StabilityQuery { n_cells: n, ..f23_query(tau, dt) }] {
                let r = scan_stability(&q).unwrap();
                let cf = &r.closed_form;
                let near_dt = cf.dt_limit.is_some_and(|lim| (dt / lim - 1.0).abs() < 1e-6);
                let near_tau = [cf.tau_window.0, cf.tau_window.1]
                    .iter()
                    .any(|t| t.is_finite() && (tau - t).abs() < 1e-6 * t.abs().max(1e-3));
                if !near_dt && !near_tau {
                    prop_assert_eq!(r.eigen_verdict.is_stable(), r.closed_form_verdict.is_stable());
                }
            }
        }
    }
}
