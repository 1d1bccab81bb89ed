//! Observables: agent and cell speeds, instantaneous fundamental-diagram
//! samples, micro/macro density-field comparison and empirical overlays.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fmt::sig15;
use crate::macroscopic::MacroRecord;
use crate::micro::{MicroState, TrajectoryRecord};
use crate::ov::{delayed_speed, FundamentalDiagram, TriangularOV};

/// `1 / spacing(i)`.
pub fn agent_density(state: &MicroState, i: usize) -> Result<f64> {
    let s = state.spacing(i);
    if !(s > 0.0) {
        return Err(Error::ZeroSpacing(i));
    }
    Ok(1.0 / s)
}

/// Speed of cell `i` behind cell `i + 1`:
/// `V(rho_i / (1 - tau rho_i (V(rho_{i+1}) - V(rho_i))))`, zero past the pole.
pub fn cell_speed<F: FundamentalDiagram + ?Sized>(fd: &F, tau: f64, rho_i: f64, rho_ip1: f64) -> f64 {
    delayed_speed(fd, tau, rho_i, fd.speed(rho_ip1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDSample {
    pub t: f64,
    pub subject: usize,
    pub density: f64,
    pub speed: f64,
    pub flow: f64,
}

impl FDSample {
    pub fn new(t: f64, subject: usize, density: f64, speed: f64) -> Self {
        Self { t, subject, density, speed, flow: density * speed }
    }
}

/// Density `1/spacing` and the realized speed of one agent at every sample.
pub fn fd_series_micro(record: &TrajectoryRecord, agent: usize) -> Result<Vec<FDSample>> {
    let n = record.samples.first().map_or(0, |s| s.x.len());
    if agent >= n {
        return Err(Error::InvalidParameter(format!("agent {agent} out of range 0..{n}")));
    }
    record
        .samples
        .iter()
        .map(|s| {
            let sp = s.spacing[agent];
            if !(sp > 0.0) {
                return Err(Error::ZeroSpacing(agent));
            }
            Ok(FDSample::new(s.t, agent, 1.0 / sp, s.speed[agent]))
        })
        .collect()
}

/// Density and [`cell_speed`] of one cell at every sample.
pub fn fd_series_macro<F: FundamentalDiagram + ?Sized>(
    record: &MacroRecord,
    fd: &F,
    cell: usize,
) -> Result<Vec<FDSample>> {
    let m = record.samples.first().map_or(0, |s| s.rho.len());
    if cell >= m {
        return Err(Error::InvalidParameter(format!("cell {cell} out of range 0..{m}")));
    }
    Ok(record
        .samples
        .iter()
        .map(|s| {
            let (r, r1) = (s.rho[cell], s.rho[(cell + 1) % m]);
            FDSample::new(s.t, cell, r, cell_speed(fd, record.tau, r, r1))
        })
        .collect())
}

pub fn write_fd_csv<W: Write>(samples: &[FDSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,subject,density,speed,flow")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            sig15(s.t),
            s.subject,
            sig15(s.density),
            sig15(s.speed),
            sig15(s.flow)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellAttribution {
    /// Each agent's unit mass spread evenly over `[x_i, x_{i+1})`.
    #[default]
    Spacing,
    /// Each agent's unit mass placed in the cell holding `x_i`.
    Count,
}

/// Cell densities on `m` cells of width `dx`, `m dx = L`. Total mass is `N`.
pub fn micro_to_cells(state: &MicroState, dx: f64, m: usize, how: CellAttribution) -> Result<Vec<f64>> {
    let l = state.ring_length;
    if m == 0 || !(dx > 0.0) || ((m as f64 * dx) - l).abs() > 1e-9 * l {
        return Err(Error::InvalidParameter(format!("M dx = {} must equal L = {l}", m as f64 * dx)));
    }
    let mut mass = vec![0.0; m];
    for i in 0..state.len() {
        let start = state.wrapped(i);
        match how {
            CellAttribution::Count => mass[((start / dx) as usize).min(m - 1)] += 1.0,
            CellAttribution::Spacing => {
                let s = state.spacing(i);
                if !(s > 0.0) {
                    return Err(Error::ZeroSpacing(i));
                }
                spread(&mut mass, dx, start, s, 1.0 / s);
            }
        }
    }
    Ok(mass.into_iter().map(|q| q / dx).collect())
}

/// Adds `density * overlap` to every cell meeting `[start, start + len)` on the ring.
fn spread(mass: &mut [f64], dx: f64, start: f64, len: f64, density: f64) {
    let m = mass.len();
    let mut pos = start;
    let mut left = len;
    let mut cell = ((start / dx) as usize).min(m - 1);
    while left > 0.0 {
        let edge = (cell + 1) as f64 * dx;
        let take = (edge - pos).min(left).max(0.0);
        mass[cell] += density * take;
        left -= take;
        cell += 1;
        pos = edge;
        if cell == m {
            cell = 0;
            pos = 0.0;
        }
        if take == 0.0 && left <= 1e-15 * len {
            break;
        }
    }
}

/// Density samples on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub dx: f64,
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl DensityField {
    pub fn from_micro(record: &TrajectoryRecord, dx: f64, m: usize) -> Result<Self> {
        let rho = (0..record.samples.len())
            .map(|k| micro_to_cells(&record.state_at(k), dx, m, CellAttribution::Spacing))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dx, times: record.samples.iter().map(|s| s.t).collect(), rho })
    }

    pub fn from_macro(record: &MacroRecord) -> Self {
        Self {
            dx: record.dx,
            times: record.samples.iter().map(|s| s.t).collect(),
            rho: record.samples.iter().map(|s| s.rho.clone()).collect(),
        }
    }

    pub fn cells(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.rho[k].iter().sum::<f64>() * self.dx
    }

    /// Median propagation speed of the density pattern between samples `lag`
    /// time apart, from the circular cross-correlation peak. `None` when the
    /// field carries no pattern.
    pub fn wave_speed(&self, lag: f64) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let step = self.times[1] - self.times[0];
        let off = (lag / step).round() as usize;
        if off == 0 || off >= self.times.len() {
            return None;
        }
        let real_lag = off as f64 * step;
        let mut speeds: Vec<f64> = (0..self.times.len() - off)
            .filter_map(|k| correlation_shift(&self.rho[k], &self.rho[k + off]))
            .map(|s| s * self.dx / real_lag)
            .collect();
        if speeds.is_empty() {
            return None;
        }
        speeds.sort_by(f64::total_cmp);
        let n = speeds.len();
        Some(if n % 2 == 1 { speeds[n / 2] } else { 0.5 * (speeds[n / 2 - 1] + speeds[n / 2]) })
    }
}

/// Shift `s` (cells, sub-cell refined) maximizing `Σ a_i b_{i+s}` on the ring.
fn correlation_shift(a: &[f64], b: &[f64]) -> Option<f64> {
    let m = a.len();
    let centred = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter().map(|x| x - mean).collect::<Vec<_>>()
    };
    let (a, b) = (centred(a), centred(b));
    let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if energy(&a) < 1e-12 || energy(&b) < 1e-12 {
        return None;
    }
    let corr: Vec<f64> = (0..m)
        .map(|s| (0..m).map(|i| a[i] * b[(i + s) % m]).sum())
        .collect();
    let best = (0..m).max_by(|&i, &j| corr[i].total_cmp(&corr[j]))?;
    let (cm, c0, cp) = (corr[(best + m - 1) % m], corr[best], corr[(best + 1) % m]);
    let den = cm - 2.0 * c0 + cp;
    let frac = if den < 0.0 { 0.5 * (cm - cp) / den } else { 0.0 };
    let mut s = best as f64 + frac;
    if s > m as f64 / 2.0 {
        s -= m as f64;
    }
    Some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldComparison {
    pub wave_speed_a: Option<f64>,
    pub wave_speed_b: Option<f64>,
    /// `(t, Σ|a - b| dx / mean mass)` per sample.
    pub l1: Vec<(f64, f64)>,
}

impl FieldComparison {
    pub fn max_l1(&self) -> f64 {
        self.l1.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn mean_l1(&self) -> f64 {
        if self.l1.is_empty() {
            return 0.0;
        }
        self.l1.iter().map(|p| p.1).sum::<f64>() / self.l1.len() as f64
    }
}

pub const DEFAULT_WAVE_LAG: f64 = 10.0;

pub fn compare_fields(a: &DensityField, b: &DensityField, lag: f64) -> Result<FieldComparison> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(p, q)| (p - q).abs() > 1e-9 * p.abs().max(1.0))
    {
        return Err(Error::RecordMismatch(format!(
            "sample times differ ({} vs {} samples)",
            a.times.len(),
            b.times.len()
        )));
    }
    if a.cells() != b.cells() || (a.dx - b.dx).abs() > 1e-12 * a.dx {
        return Err(Error::RecordMismatch(format!(
            "grids differ: {} cells of {} vs {} cells of {}",
            a.cells(),
            a.dx,
            b.cells(),
            b.dx
        )));
    }
    let l1 = (0..a.times.len())
        .map(|k| {
            let diff: f64 = a.rho[k].iter().zip(&b.rho[k]).map(|(p, q)| (p - q).abs()).sum::<f64>() * a.dx;
            let mass = 0.5 * (a.mass(k) + b.mass(k));
            (a.times[k], if mass > 0.0 { diff / mass } else { 0.0 })
        })
        .collect();
    Ok(FieldComparison { wave_speed_a: a.wave_speed(lag), wave_speed_b: b.wave_speed(lag), l1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub line: u64,
    pub message: String,
}

/// Measured `(density, speed)` pairs in the units of the diagram they are
/// compared against. Unit conversion is up to the caller.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalSet {
    pub rows: Vec<(f64, f64)>,
    pub issues: Vec<ParseIssue>,
}

impl EmpiricalSet {
    /// Reads a `density,speed` CSV, skipping `#` comments. Bad rows are
    /// listed in `issues` and left out.
    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::InvalidParameter(format!("unreadable data: {e}")))?;
        let split = |line: &str| -> std::result::Result<csv::StringRecord, String> {
            csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(line.as_bytes())
                .records()
                .next()
                .unwrap_or_else(|| Ok(csv::StringRecord::new()))
                .map_err(|e| e.to_string())
        };
        // Line numbers are physical and 1-based; blank and '#' lines are skipped.
        let mut rows = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = match rows.next() {
            Some((_, l)) => split(l).map_err(|e| Error::InvalidParameter(format!("unreadable header: {e}")))?,
            None => return Err(Error::InvalidParameter("empty data file".into())),
        };
        if header.len() != 2 || &header[0] != "density" || &header[1] != "speed" {
            return Err(Error::InvalidParameter(format!(
                "expected header 'density,speed', got '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut set = EmpiricalSet::default();
        for (line, raw) in rows {
            let rec = match split(raw) {
                Ok(r) => r,
                Err(message) => {
                    set.issues.push(ParseIssue { line, message });
                    continue;
                }
            };
            if rec.len() != 2 {
                set.issues.push(ParseIssue { line, message: format!("expected 2 fields, got {}", rec.len()) });
                continue;
            }
            let parse = |k: usize| -> std::result::Result<f64, String> {
                let v: f64 = rec[k].parse().map_err(|_| format!("'{}' is not a number", &rec[k]))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("'{}' must be finite and non-negative", &rec[k]));
                }
                Ok(v)
            };
            match (parse(0), parse(1)) {
                (Ok(d), Ok(v)) => set.rows.push((d, v)),
                (Err(m), _) | (_, Err(m)) => set.issues.push(ParseIssue { line, message: m }),
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayReport {
    /// Fraction of points inside the slackened envelope, `None` for an empty set.
    pub coverage: Option<f64>,
    pub inside: Vec<bool>,
    pub slack: f64,
}

/// Default slack, as a fraction of `V0`.
pub const DEFAULT_SLACK_FRACTION: f64 = 0.05;

/// Checks `V⁻(rho) - eps <= v <= V⁺(rho) + eps` for every point.
pub fn envelope_overlay(set: &EmpiricalSet, ov: &TriangularOV, tau: f64, slack: Option<f64>) -> OverlayReport {
    let eps = slack.unwrap_or(DEFAULT_SLACK_FRACTION * ov.v0);
    let inside: Vec<bool> = set
        .rows
        .iter()
        .map(|&(rho, v)| v >= ov.bound_lower(tau, rho) - eps && v <= ov.bound_upper(tau, rho) + eps)
        .collect();
    let coverage = (!inside.is_empty()).then(|| inside.iter().filter(|b| **b).count() as f64 / inside.len() as f64);
    OverlayReport { coverage, inside, slack: eps }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub rho: f64,
    pub lower: f64,
    pub equilibrium: f64,
    pub upper: f64,
}

/// `V⁻`, `V` and `V⁺` on `n` evenly spaced densities in `(0, 1/ell]`.
pub fn envelope_curves(ov: &TriangularOV, tau: f64, n: usize) -> Vec<EnvelopePoint> {
    let rho_max = 1.0 / ov.ell;
    (1..=n.max(1))
        .map(|k| {
            let rho = rho_max * k as f64 / n.max(1) as f64;
            EnvelopePoint {
                rho,
                lower: ov.bound_lower(tau, rho),
                equilibrium: ov.v(rho),
                upper: ov.bound_upper(tau, rho),
            }
        })
        .collect()
}
