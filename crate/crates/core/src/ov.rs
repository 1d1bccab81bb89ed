//! Optimal-velocity functions and the flux machinery built on them.
//!
//! Two speed functions are provided. [`TriangularOV`] is the bounded
//! three-parameter diagram used by the simulations; [`AffineOV`] is its
//! unbounded congested branch, which makes the discrete schemes polynomial
//! and is what the linearized update maps are written against.

use crate::error::{Error, Result};

/// A speed/density relation together with its Godunov flux.
///
/// Demand and supply are derived from the critical density, so the flow
/// must be unimodal on `[0, jam_density]`. Implementors with a closed-form
/// crest should override [`FundamentalDiagram::critical_density`].
pub trait FundamentalDiagram {
    /// Equilibrium speed `W(s)` as a function of spacing.
    fn spacing_speed(&self, s: f64) -> f64;

    /// Slope `W'(s)`. Zero at kinks, see [`TriangularOV::w_prime`].
    fn spacing_speed_slope(&self, s: f64) -> f64;

    /// `V(rho) = W(1/rho)`.
    fn speed(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return self.max_speed().unwrap_or(f64::INFINITY);
        }
        self.spacing_speed(1.0 / rho)
    }

    /// `V'(rho) = -W'(1/rho) / rho^2`.
    fn speed_slope(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        -self.spacing_speed_slope(1.0 / rho) / (rho * rho)
    }

    /// `sup V`, `None` when the speed is unbounded.
    fn max_speed(&self) -> Option<f64>;

    /// `1/ell`, infinite for point-like agents.
    fn jam_density(&self) -> f64;

    fn flow(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        rho * self.speed(rho)
    }

    /// Density of maximal flow. The default runs a golden-section search;
    /// wrap the diagram in [`CachedCrest`] to pay for it only once.
    fn critical_density(&self) -> f64 {
        golden_section_crest(|r| self.flow(r), 0.0, self.jam_density().min(1e6))
    }

    /// `Δ(rho) = max_{k <= rho} f(k)`.
    fn demand(&self, rho: f64) -> f64 {
        let rc = self.critical_density();
        if rho <= rc {
            self.flow(rho)
        } else {
            self.flow(rc)
        }
    }

    /// `Σ(rho) = max_{k >= rho} f(k)`.
    fn supply(&self, rho: f64) -> f64 {
        let rc = self.critical_density();
        if rho >= rc {
            self.flow(rho)
        } else {
            self.flow(rc)
        }
    }

    /// `G(x, y) = min(Δ(x), Σ(y))`.
    fn godunov_flux(&self, x: f64, y: f64) -> f64 {
        self.demand(x).min(self.supply(y))
    }
}

fn golden_section_crest(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Triangular fundamental diagram `W(s) = max(0, min((s - ell)/T, V0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularOV {
    pub v0: f64,
    pub ell: f64,
    pub t_gap: f64,
}

impl TriangularOV {
    pub fn new(v0: f64, ell: f64, t_gap: f64) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::InvalidParameter(format!("v0 must be positive, got {v0}")));
        }
        if !(ell >= 0.0 && ell.is_finite()) {
            return Err(Error::InvalidParameter(format!("ell must be non-negative, got {ell}")));
        }
        if !(t_gap > 0.0 && t_gap.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_gap must be positive, got {t_gap}")));
        }
        Ok(Self { v0, ell, t_gap })
    }

    /// `V0 = 2, ell = 1, T = 1`, the ring experiments' diagram.
    pub fn reference() -> Self {
        Self { v0: 2.0, ell: 1.0, t_gap: 1.0 }
    }

    /// Pedestrian fit: 0.9 m/s, 0.3 m, 1 s.
    pub fn pedestrian() -> Self {
        Self { v0: 0.9, ell: 0.3, t_gap: 1.0 }
    }

    /// Vehicle fit: 15 m/s, 5 m, 2 s.
    pub fn vehicle() -> Self {
        Self { v0: 15.0, ell: 5.0, t_gap: 2.0 }
    }

    pub fn w(&self, s: f64) -> f64 {
        ((s - self.ell) / self.t_gap).min(self.v0).max(0.0)
    }

    /// `1/T` strictly inside the rising branch `(ell, ell + V0 T)`, zero
    /// elsewhere including both kinks.
    pub fn w_prime(&self, s: f64) -> f64 {
        if s > self.ell && s < self.ell + self.v0 * self.t_gap {
            1.0 / self.t_gap
        } else {
            0.0
        }
    }

    pub fn v(&self, rho: f64) -> f64 {
        self.speed(rho)
    }

    /// `rho_c = 1 / (ell + V0 T)`.
    pub fn rho_critical(&self) -> f64 {
        1.0 / (self.ell + self.v0 * self.t_gap)
    }

    /// `V0 / (ell + V0 T)`, the flow at the crest.
    pub fn capacity(&self) -> f64 {
        self.v0 * self.rho_critical()
    }

    /// Speed of the diagram seen through a constant inhomogeneity,
    /// `V(rho / (1 - inhom))`.
    pub fn modified_fd(&self, rho: f64, inhom: f64) -> Result<f64> {
        if inhom >= 1.0 || inhom.is_nan() {
            return Err(Error::Domain(format!(
                "inhomogeneity must be below 1, got {inhom}"
            )));
        }
        Ok(self.v(rho / (1.0 - inhom)))
    }

    /// Speed behind a stopped predecessor, `V(rho / (1 + tau rho V(rho)))`.
    pub fn bound_upper(&self, tau: f64, rho: f64) -> f64 {
        delayed_speed(self, tau, rho, 0.0)
    }

    /// Speed behind a predecessor at `V0`. Zero once the effective
    /// density pole is reached.
    pub fn bound_lower(&self, tau: f64, rho: f64) -> f64 {
        delayed_speed(self, tau, rho, self.v0)
    }
}

impl FundamentalDiagram for TriangularOV {
    fn spacing_speed(&self, s: f64) -> f64 {
        self.w(s)
    }

    fn spacing_speed_slope(&self, s: f64) -> f64 {
        self.w_prime(s)
    }

    fn max_speed(&self) -> Option<f64> {
        Some(self.v0)
    }

    fn jam_density(&self) -> f64 {
        if self.ell > 0.0 {
            1.0 / self.ell
        } else {
            f64::INFINITY
        }
    }

    fn critical_density(&self) -> f64 {
        self.rho_critical()
    }

    fn demand(&self, rho: f64) -> f64 {
        if rho <= self.rho_critical() {
            self.flow(rho)
        } else {
            self.capacity()
        }
    }

    fn supply(&self, rho: f64) -> f64 {
        if rho >= self.rho_critical() {
            self.flow(rho)
        } else {
            self.capacity()
        }
    }
}

/// Unbounded congested branch `V(rho) = (1/rho - ell) / T`.
///
/// Its flow `(1 - rho ell)/T` is decreasing, so the crest sits at zero
/// density and the Godunov flux reduces to `G(x, y) = (1 - y ell) / T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineOV {
    pub ell: f64,
    pub t_gap: f64,
}

impl AffineOV {
    pub fn new(ell: f64, t_gap: f64) -> Result<Self> {
        if !(ell >= 0.0 && t_gap > 0.0 && ell.is_finite() && t_gap.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "affine diagram needs ell >= 0 and t_gap > 0, got ell={ell}, t_gap={t_gap}"
            )));
        }
        Ok(Self { ell, t_gap })
    }
}

impl FundamentalDiagram for AffineOV {
    fn spacing_speed(&self, s: f64) -> f64 {
        (s - self.ell) / self.t_gap
    }

    fn spacing_speed_slope(&self, _s: f64) -> f64 {
        1.0 / self.t_gap
    }

    fn max_speed(&self) -> Option<f64> {
        None
    }

    fn jam_density(&self) -> f64 {
        if self.ell > 0.0 {
            1.0 / self.ell
        } else {
            f64::INFINITY
        }
    }

    fn flow(&self, rho: f64) -> f64 {
        (1.0 - rho.max(0.0) * self.ell) / self.t_gap
    }

    fn critical_density(&self) -> f64 {
        0.0
    }

    fn demand(&self, _rho: f64) -> f64 {
        1.0 / self.t_gap
    }

    fn supply(&self, rho: f64) -> f64 {
        self.flow(rho)
    }
}

/// Caches the numerically located crest of an arbitrary unimodal diagram.
#[derive(Debug, Clone)]
pub struct CachedCrest<F> {
    inner: F,
    rho_c: f64,
}

impl<F: FundamentalDiagram> CachedCrest<F> {
    pub fn new(inner: F) -> Self {
        let rho_c = golden_section_crest(|r| inner.flow(r), 0.0, inner.jam_density().min(1e6));
        Self { inner, rho_c }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: FundamentalDiagram> FundamentalDiagram for CachedCrest<F> {
    fn spacing_speed(&self, s: f64) -> f64 {
        self.inner.spacing_speed(s)
    }
    fn spacing_speed_slope(&self, s: f64) -> f64 {
        self.inner.spacing_speed_slope(s)
    }
    fn speed(&self, rho: f64) -> f64 {
        self.inner.speed(rho)
    }
    fn speed_slope(&self, rho: f64) -> f64 {
        self.inner.speed_slope(rho)
    }
    fn max_speed(&self) -> Option<f64> {
        self.inner.max_speed()
    }
    fn jam_density(&self) -> f64 {
        self.inner.jam_density()
    }
    fn flow(&self, rho: f64) -> f64 {
        self.inner.flow(rho)
    }
    fn critical_density(&self) -> f64 {
        self.rho_c
    }
}

/// Speed of an agent at density `rho` whose predecessor moves at
/// `v_ahead`: `V(rho / (1 - tau rho (v_ahead - V(rho))))`.
///
/// A non-positive denominator means the effective spacing is non-positive,
/// so the agent is held at zero speed.
pub fn delayed_speed<F: FundamentalDiagram + ?Sized>(fd: &F, tau: f64, rho: f64, v_ahead: f64) -> f64 {
    let v_own = fd.speed(rho);
    let den = 1.0 - tau * rho * (v_ahead - v_own);
    if den <= 0.0 {
        return 0.0;
    }
    fd.speed(rho / den)
}
