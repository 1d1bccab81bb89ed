//! The `run`, `stability` and `fd` subcommands.

use std::path::Path;

use ftlflow_core::fmt::sig15;
use ftlflow_core::macroscopic::{MacroGrid, MacroRecord};
use ftlflow_core::measure::{
    compare_fields, envelope_curves, envelope_overlay, fd_series_macro, fd_series_micro, micro_to_cells, write_fd_csv,
    CellAttribution, DensityField, EmpiricalSet, FDSample,
};
use ftlflow_core::micro::{init_state, run_from, TrajectoryRecord};
use ftlflow_core::stability::{stability_map, Branch, StabilityMap, Verdict};
use ftlflow_core::TriangularOV;
use serde::Serialize;

use crate::config::{FdParams, MapSpec, ScenarioConfig};
use crate::emit::{Emitter, RunManifest};
use crate::svg::{Frame, Svg};
use crate::{CliError, Format};

pub const RUN_ARTIFACTS: &[&str] = &[
    "trajectory.csv",
    "fd_micro.csv",
    "trajectories.svg",
    "fd_micro.svg",
    "density.csv",
    "heatmap.csv",
    "fd_macro.csv",
    "heatmap.svg",
    "fd_macro.svg",
    "compare.json",
];
pub const MAP_ARTIFACTS: &[&str] = &["stability_map.csv", "stability_map.svg"];
pub const FD_ARTIFACTS: &[&str] = &["fd_curves.csv", "fd_speed.svg", "fd_flow.svg", "overlay.csv"];

#[derive(Debug)]
pub struct Report {
    pub manifest: RunManifest,
    /// Summary for stdout.
    pub lines: Vec<String>,
    /// Non-fatal problems for stderr.
    pub warnings: Vec<String>,
}

fn runtime(ctx: &str) -> impl Fn(ftlflow_core::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{ctx}: {e}"))
}

fn bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    f(&mut out)?;
    Ok(out)
}

#[derive(Serialize)]
struct CompareReport {
    wave_speed_micro: Option<f64>,
    wave_speed_macro: Option<f64>,
    max_l1: f64,
    mean_l1: f64,
    l1: Vec<[f64; 2]>,
}

pub fn cmd_run(cfg: &ScenarioConfig, format: Format) -> Result<Report, CliError> {
    let mut em = Emitter::new(&cfg.out, RUN_ARTIFACTS)?;
    let ring = cfg.ring();
    let ov = cfg.ov();
    let start = init_state(&ring, cfg.init).map_err(runtime("initial state"))?;
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    let mut micro_rec: Option<TrajectoryRecord> = None;
    let mut macro_rec: Option<MacroRecord> = None;

    if cfg.model.micro() {
        let rec = run_from(&ring, start.clone(), cfg.t_end, cfg.record_stride, cfg.integrator)
            .map_err(runtime("micro run"))?;
        em.emit("trajectory.csv", &bytes(|o| rec.write_csv(o))?)?;
        let fd = fd_series_micro(&rec, cfg.fd_subject).map_err(runtime("micro FD series"))?;
        em.emit("fd_micro.csv", &bytes(|o| write_fd_csv(&fd, o))?)?;
        if format.svg() {
            em.emit("trajectories.svg", trajectories_svg(&rec).as_bytes())?;
            em.emit("fd_micro.svg", fd_svg(&fd, &ov, cfg.tau, "agent").as_bytes())?;
        }
        let min = rec.samples.iter().flat_map(|s| s.spacing.iter().copied()).fold(f64::INFINITY, f64::min);
        lines.push(format!("micro: {} samples, min sampled spacing {}", rec.samples.len(), sig15(min)));
        micro_rec = Some(rec);
    }

    if cfg.model.macro_() {
        let m = cfg.cells().expect("validated grid");
        let rho = micro_to_cells(&start, cfg.dx, m, CellAttribution::Spacing).map_err(runtime("initial cells"))?;
        let grid = MacroGrid::new(rho, cfg.dx, ov, cfg.tau, cfg.dt, cfg.scheme)
            .map_err(runtime("macro grid"))?
            .with_bounds(cfg.bounds);
        let (rec, last) = grid.run(cfg.t_end, cfg.record_stride).map_err(runtime("macro run"))?;
        em.emit("density.csv", &bytes(|o| rec.write_csv(&ov, o))?)?;
        em.emit("heatmap.csv", &bytes(|o| rec.write_heatmap(o))?)?;
        let fd = fd_series_macro(&rec, &ov, cfg.fd_subject).map_err(runtime("macro FD series"))?;
        em.emit("fd_macro.csv", &bytes(|o| write_fd_csv(&fd, o))?)?;
        if format.svg() {
            em.emit("heatmap.svg", heatmap_svg(&DensityField::from_macro(&rec), 1.0 / ov.ell).as_bytes())?;
            em.emit("fd_macro.svg", fd_svg(&fd, &ov, cfg.tau, "cell").as_bytes())?;
        }
        lines.push(format!("macro ({}): {} samples, {m} cells", cfg.scheme, rec.samples.len()));
        if let Some(ev) = last.first_flag {
            warnings.push(format!(
                "{} out-of-bounds densities, first in cell {} at t={} (rho={})",
                last.flagged,
                ev.cell,
                sig15(ev.time),
                sig15(ev.rho)
            ));
        }
        macro_rec = Some(rec);
    }

    if let (Some(a), Some(b)) = (&micro_rec, &macro_rec) {
        let m = cfg.cells().expect("validated grid");
        let fa = DensityField::from_micro(a, cfg.dx, m).map_err(runtime("micro density field"))?;
        let fb = DensityField::from_macro(b);
        let cmp = compare_fields(&fa, &fb, cfg.wave_lag).map_err(runtime("field comparison"))?;
        let report = CompareReport {
            wave_speed_micro: cmp.wave_speed_a,
            wave_speed_macro: cmp.wave_speed_b,
            max_l1: cmp.max_l1(),
            mean_l1: cmp.mean_l1(),
            l1: cmp.l1.iter().map(|&(t, d)| [t, d]).collect(),
        };
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        em.emit("compare.json", json.as_bytes())?;
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), sig15);
        lines.push(format!(
            "compare: wave speed micro {} macro {}, L1 max {} mean {}",
            show(cmp.wave_speed_a),
            show(cmp.wave_speed_b),
            sig15(report.max_l1),
            sig15(report.mean_l1)
        ));
    }

    let manifest = em.finish("run", cfg.echo())?;
    lines.push(format!("wrote {} files to {}", manifest.files.len() + 1, cfg.out.display()));
    Ok(Report { manifest, lines, warnings })
}

pub fn cmd_stability(spec: &MapSpec, format: Format) -> Result<Report, CliError> {
    let mut em = Emitter::new(&spec.out, MAP_ARTIFACTS)?;
    let map = stability_map(&spec.base, spec.tau_range, spec.y_range, spec.axis, spec.resolution)
        .map_err(runtime("stability map"))?;
    em.emit("stability_map.csv", &bytes(|o| map.write_csv(o))?)?;
    if format.svg() {
        em.emit("stability_map.svg", map_svg(&map, spec.mark).as_bytes())?;
    }
    let count = |v: Verdict| map.cells.iter().filter(|c| c.closed == v).count();
    let mut lines = vec![format!(
        "{} cells: {} stable, {} marginal, {} unstable, {} infeasible; {} eigen/closed-form disagreements",
        map.cells.len(),
        count(Verdict::Stable),
        count(Verdict::Marginal),
        count(Verdict::Unstable),
        count(Verdict::Infeasible),
        map.disagreements()
    )];
    if let Some((tau, y)) = spec.mark {
        let mut q = spec.base;
        q.tau = tau;
        match spec.axis {
            ftlflow_core::stability::MapAxis::Dt => q.dt = y,
            ftlflow_core::stability::MapAxis::RhoE => q.rho_e = y,
        }
        let r = ftlflow_core::stability::scan_stability(&q).map_err(runtime("marked point"))?;
        lines.push(format!(
            "mark tau={} {}={}: {} ({})",
            sig15(tau),
            spec.axis.name(),
            sig15(y),
            r.closed_form_verdict,
            r.notes
        ));
    }
    let manifest = em.finish("stability", spec.echo())?;
    lines.push(format!("wrote {} files to {}", manifest.files.len() + 1, spec.out.display()));
    Ok(Report { manifest, lines, warnings: Vec::new() })
}

pub fn cmd_fd(p: &FdParams, data: Option<&Path>, format: Format) -> Result<Report, CliError> {
    let set = match data {
        Some(path) => {
            let f = std::fs::File::open(path)
                .map_err(|e| CliError::Config(vec![format!("cannot open {}: {e}", path.display())]))?;
            Some(EmpiricalSet::from_reader(f).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?)
        }
        None => None,
    };
    let mut em = Emitter::new(&p.out, FD_ARTIFACTS)?;
    let curves = envelope_curves(&p.ov, p.tau, p.points);
    let csv = bytes(|o| {
        use std::io::Write;
        writeln!(o, "rho,v_lower,v,v_upper,flow_lower,flow,flow_upper")?;
        for c in &curves {
            writeln!(
                o,
                "{},{},{},{},{},{},{}",
                sig15(c.rho),
                sig15(c.lower),
                sig15(c.equilibrium),
                sig15(c.upper),
                sig15(c.rho * c.lower),
                sig15(c.rho * c.equilibrium),
                sig15(c.rho * c.upper)
            )?;
        }
        Ok(())
    })?;
    em.emit("fd_curves.csv", &csv)?;
    let mut lines = vec![format!(
        "diagram v0={} ell={} T={} tau={}: {} density points",
        sig15(p.ov.v0),
        sig15(p.ov.ell),
        sig15(p.ov.t_gap),
        sig15(p.tau),
        curves.len()
    )];
    let mut warnings = Vec::new();
    let mut overlay = None;
    if let Some(set) = &set {
        for issue in &set.issues {
            warnings.push(format!("data line {}: {}", issue.line, issue.message));
        }
        let r = envelope_overlay(set, &p.ov, p.tau, p.slack);
        let csv = bytes(|o| {
            use std::io::Write;
            writeln!(o, "density,speed,inside")?;
            for ((d, v), inside) in set.rows.iter().zip(&r.inside) {
                writeln!(o, "{},{},{}", sig15(*d), sig15(*v), u8::from(*inside))?;
            }
            Ok(())
        })?;
        em.emit("overlay.csv", &csv)?;
        lines.push(match r.coverage {
            Some(c) => format!(
                "coverage {}: {} of {} points inside the bounds (slack {})",
                sig15(c),
                r.inside.iter().filter(|&&i| i).count(),
                set.rows.len(),
                sig15(r.slack)
            ),
            None => "coverage undefined: no data points".to_string(),
        });
        overlay = Some((set, r));
    }
    if format.svg() {
        let pts: Vec<(f64, f64, bool)> = overlay
            .as_ref()
            .map(|(s, r)| s.rows.iter().zip(&r.inside).map(|(&(d, v), &i)| (d, v, i)).collect())
            .unwrap_or_default();
        em.emit("fd_speed.svg", curves_svg(&curves, &pts, false, &p.ov).as_bytes())?;
        em.emit("fd_flow.svg", curves_svg(&curves, &pts, true, &p.ov).as_bytes())?;
    }
    let mut config = p.echo();
    if let Some(path) = data {
        config.push_str(&format!("# data = {}\n", path.display()));
    }
    let manifest = em.finish("fd", config)?;
    lines.push(format!("wrote {} files to {}", manifest.files.len() + 1, p.out.display()));
    Ok(Report { manifest, lines, warnings })
}

fn every<T>(v: &[T], max: usize) -> impl Iterator<Item = &T> {
    let step = v.len().div_ceil(max.max(1)).max(1);
    v.iter().step_by(step)
}

fn gray(level: f64) -> String {
    let g = (255.0 * (1.0 - level.clamp(0.0, 1.0))).round() as u8;
    format!("rgb({g},{g},{g})")
}

fn heatmap_svg(f: &DensityField, rho_max: f64) -> String {
    let (w, h) = (720.0, 520.0);
    let l = f.dx * f.cells() as f64;
    let t0 = f.times.first().copied().unwrap_or(0.0);
    let t1 = f.times.last().copied().unwrap_or(0.0);
    let fr = Frame::new((0.0, l), (t0, t1), w, h);
    let mut svg = Svg::new(w, h);
    let rows: Vec<usize> = every(&(0..f.times.len()).collect::<Vec<_>>(), 300).copied().collect();
    let row_h = fr.height / rows.len().max(1) as f64;
    let col_w = fr.width / f.cells().max(1) as f64;
    for (r, &k) in rows.iter().enumerate() {
        let y = fr.top + fr.height - (r + 1) as f64 * row_h;
        for (i, rho) in f.rho[k].iter().enumerate() {
            svg.rect(fr.left + i as f64 * col_w, y, col_w + 0.3, row_h + 0.3, &gray(rho / rho_max));
        }
    }
    fr.axes(&mut svg, "density (black = jam density)", "position", "time");
    svg.finish()
}

fn trajectories_svg(rec: &TrajectoryRecord) -> String {
    let (w, h) = (720.0, 520.0);
    let t0 = rec.samples.first().map_or(0.0, |s| s.t);
    let t1 = rec.samples.last().map_or(0.0, |s| s.t);
    let fr = Frame::new((0.0, rec.ring_length), (t0, t1), w, h);
    let mut svg = Svg::new(w, h);
    let picked: Vec<_> = every(&rec.samples, 600).collect();
    let n = rec.samples.first().map_or(0, |s| s.x.len());
    for i in 0..n {
        let mut seg: Vec<(f64, f64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for s in &picked {
            let x = s.x[i].rem_euclid(rec.ring_length);
            if prev.is_some_and(|p| (x - p).abs() > rec.ring_length / 2.0) {
                svg.polyline(&seg, "steelblue", 0.7);
                seg.clear();
            }
            seg.push((fr.px(x), fr.py(s.t)));
            prev = Some(x);
        }
        svg.polyline(&seg, "steelblue", 0.7);
    }
    fr.axes(&mut svg, "agent trajectories", "position", "time");
    svg.finish()
}

fn fd_svg(samples: &[FDSample], ov: &TriangularOV, tau: f64, subject: &str) -> String {
    let curves = envelope_curves(ov, tau, 200);
    let pts: Vec<(f64, f64, bool)> = every(samples, 3000).map(|s| (s.density, s.speed, true)).collect();
    let title = samples.first().map_or(String::new(), |s| format!("{subject} {} speed vs density", s.subject));
    plot_curves(&curves, &pts, false, ov, &title)
}

fn curves_svg(
    curves: &[ftlflow_core::measure::EnvelopePoint],
    pts: &[(f64, f64, bool)],
    flow: bool,
    ov: &TriangularOV,
) -> String {
    let title = if flow { "flow vs density" } else { "speed vs density" };
    plot_curves(curves, pts, flow, ov, title)
}

fn plot_curves(
    curves: &[ftlflow_core::measure::EnvelopePoint],
    pts: &[(f64, f64, bool)],
    flow: bool,
    ov: &TriangularOV,
    title: &str,
) -> String {
    let (w, h) = (640.0, 480.0);
    let scale = |rho: f64, v: f64| if flow { rho * v } else { v };
    let xmax = pts.iter().map(|p| p.0).fold(1.0 / ov.ell, f64::max);
    let ymax = pts.iter().map(|p| scale(p.0, p.1)).fold(if flow { ov.capacity() } else { ov.v0 }, f64::max);
    let fr = Frame::new((0.0, xmax), (0.0, ymax * 1.05), w, h);
    let mut svg = Svg::new(w, h);
    for &(d, v, inside) in pts {
        svg.circle(fr.px(d), fr.py(scale(d, v)), 1.5, if inside { "gray" } else { "crimson" });
    }
    let line = |get: fn(&ftlflow_core::measure::EnvelopePoint) -> f64| -> Vec<(f64, f64)> {
        curves.iter().map(|c| (fr.px(c.rho), fr.py(scale(c.rho, get(c))))).collect()
    };
    svg.polyline(&line(|c| c.lower), "royalblue", 1.5);
    svg.polyline(&line(|c| c.equilibrium), "black", 1.5);
    svg.polyline(&line(|c| c.upper), "darkorange", 1.5);
    let ylabel = if flow { "flow" } else { "speed" };
    fr.axes(&mut svg, title, "density", ylabel);
    let x = fr.left + fr.width - 150.0;
    for (k, (name, color)) in [("lower bound", "royalblue"), ("equilibrium", "black"), ("upper bound", "darkorange")]
        .iter()
        .enumerate()
    {
        let y = fr.top + 16.0 + 16.0 * k as f64;
        svg.polyline(&[(x, y - 4.0), (x + 20.0, y - 4.0)], color, 2.0);
        svg.text(x + 26.0, y, 11.0, "start", name);
    }
    svg.finish()
}

fn verdict_color(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "#8fd18f",
        Verdict::Marginal => "#f2d45c",
        Verdict::Unstable => "#e58a8a",
        Verdict::Infeasible => "#bbbbbb",
    }
}

fn map_svg(map: &StabilityMap, mark: Option<(f64, f64)>) -> String {
    let (w, h) = (760.0, 560.0);
    let first = &map.cells[0];
    let last = &map.cells[map.cells.len() - 1];
    let fr = Frame::new((first.tau, last.tau), (first.y, last.y), w, h);
    let mut svg = Svg::new(w, h);
    let cw = fr.width / map.tau_len as f64;
    let ch = fr.height / map.y_len as f64;
    for (k, c) in map.cells.iter().enumerate() {
        let (i, j) = (k / map.y_len, k % map.y_len);
        let x = fr.left + i as f64 * cw;
        let y = fr.top + fr.height - (j + 1) as f64 * ch;
        svg.rect(x, y, cw + 0.3, ch + 0.3, verdict_color(c.eigen));
        if c.disagrees() {
            svg.outline(x, y, cw, ch, "black");
        }
    }
    // one label per closed-form branch, at the centre of its cells
    let mut branches: Vec<(Branch, f64, f64, usize)> = Vec::new();
    for c in &map.cells {
        match branches.iter_mut().find(|b| b.0 == c.branch) {
            Some(b) => {
                b.1 += c.tau;
                b.2 += c.y;
                b.3 += 1;
            }
            None => branches.push((c.branch, c.tau, c.y, 1)),
        }
    }
    for (b, st, sy, n) in &branches {
        svg.text(fr.px(st / *n as f64), fr.py(sy / *n as f64), 11.0, "middle", b.describe());
    }
    if let Some((t, y)) = mark {
        svg.circle(fr.px(t), fr.py(y), 5.0, "black");
        svg.text(fr.px(t) + 8.0, fr.py(y) - 6.0, 12.0, "start", "run");
    }
    fr.axes(&mut svg, "linear stability (green stable, red unstable, gray infeasible)", "tau", map.axis.name());
    svg.finish()
}
