//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ftlflow_core::macroscopic::{BoundsPolicy, Scheme};
use ftlflow_core::micro::{CollisionPolicy, InitKind, Integrator, RingConfig};
use ftlflow_core::stability::{MapAxis, StabilityQuery, StabilityScheme};
use ftlflow_core::TriangularOV;

use crate::CliError;

const BUILTINS: &[(&str, &str)] = &[
    ("ring-jam", include_str!("../scenarios/ring-jam.cfg")),
    ("ring-random", include_str!("../scenarios/ring-random.cfg")),
    ("ring-perturbed", include_str!("../scenarios/ring-perturbed.cfg")),
    ("ring-f1", include_str!("../scenarios/ring-f1.cfg")),
    ("ring-f23", include_str!("../scenarios/ring-f23.cfg")),
    ("ring-fd", include_str!("../scenarios/ring-fd.cfg")),
    ("pedestrian", include_str!("../scenarios/pedestrian.cfg")),
    ("vehicle", include_str!("../scenarios/vehicle.cfg")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Reads `arg` as a file path, falling back to a built-in scenario name.
pub fn load_text(arg: &str) -> Result<String, CliError> {
    let path = std::path::Path::new(arg);
    if path.is_file() {
        return std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("cannot read {arg}: {e}")]));
    }
    BUILTINS.iter().find(|(n, _)| *n == arg).map(|(_, t)| t.to_string()).ok_or_else(|| {
        let names: Vec<_> = builtin_names().collect();
        CliError::Config(vec![format!("'{arg}' is neither a file nor a built-in ({})", names.join(", "))])
    })
}

/// Parsed pairs plus the problems found so far.
pub struct KeyValues {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Self {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    let k = k.trim().to_string();
                    if map.insert(k.clone(), (n + 1, v.trim().to_string())).is_some() {
                        errors.push(format!("line {}: duplicate key '{k}'", n + 1));
                    }
                }
                _ => errors.push(format!("line {}: expected 'key = value', got '{line}'", n + 1)),
            }
        }
        Self { map, errors }
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let (line, v) = self.take(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(e) => {
                self.errors.push(format!("line {line}: {key} = '{v}': {e}"));
                None
            }
        }
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key).unwrap_or(default)
    }

    /// Like [`KeyValues::opt`] but a missing key is an error; `fallback` keeps parsing going.
    pub fn req<T: FromStr>(&mut self, key: &str, fallback: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        if !self.map.contains_key(key) {
            self.errors.push(format!("missing required key '{key}'"));
            return fallback;
        }
        self.opt(key).unwrap_or(fallback)
    }

    pub fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    /// Fails on any problem so far, including keys nobody asked for.
    pub fn finish(mut self) -> Result<(), CliError> {
        for (k, (line, _)) in std::mem::take(&mut self.map) {
            self.errors.push(format!("line {line}: unknown key '{k}'"));
        }
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(self.errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Micro,
    Macro,
    Both,
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "micro" => Ok(Model::Micro),
            "macro" => Ok(Model::Macro),
            "both" => Ok(Model::Both),
            _ => Err("expected micro, macro or both".into()),
        }
    }
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Micro => "micro",
            Model::Macro => "macro",
            Model::Both => "both",
        }
    }

    pub fn micro(self) -> bool {
        self != Model::Macro
    }

    pub fn macro_(self) -> bool {
        self != Model::Micro
    }
}

struct Named<T>(T);

macro_rules! named_enum {
    ($t:ty, $($name:literal => $v:expr),+) => {
        impl FromStr for Named<$t> {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok(Named($v)),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl Named<$t> {
            fn name(v: $t) -> &'static str {
                $(if v == $v { return $name; })+
                unreachable!()
            }
        }
    };
}

named_enum!(Integrator, "first-order" => Integrator::FirstOrder, "delayed" => Integrator::Delayed);
named_enum!(CollisionPolicy, "abort" => CollisionPolicy::Abort, "clamp" => CollisionPolicy::Clamp);
named_enum!(BoundsPolicy, "abort" => BoundsPolicy::Abort, "clamp-and-flag" => BoundsPolicy::ClampAndFlag, "flag" => BoundsPolicy::Flag);
named_enum!(MapAxis, "dt" => MapAxis::Dt, "rho_e" => MapAxis::RhoE);

fn scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: ftlflow_core::Error| e.to_string())
}

struct SchemeArg(Scheme);

impl FromStr for SchemeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        scheme(s).map(SchemeArg)
    }
}

struct InitArg(InitKind);

impl FromStr for InitArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse().map(InitArg).map_err(|e: ftlflow_core::Error| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: Model,
    pub scheme: Scheme,
    pub v0: f64,
    pub ell: f64,
    pub t_gap: f64,
    pub ring_length: f64,
    pub n_agents: usize,
    pub tau: f64,
    pub dt: f64,
    pub dx: f64,
    pub t_end: f64,
    pub init: InitKind,
    pub seed: u64,
    pub record_stride: usize,
    pub out: PathBuf,
    pub integrator: Integrator,
    pub collision: CollisionPolicy,
    pub bounds: BoundsPolicy,
    pub jam_gap: f64,
    pub perturbation: f64,
    pub fd_subject: usize,
    pub wave_lag: f64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = KeyValues::parse(text);
        let p = RingConfig::reference();
        let ring_length = kv.or("ring_length", p.ring_length);
        let n_agents = kv.or("n_agents", p.n_agents);
        let cfg = Self {
            model: kv.or("model", Model::Both),
            scheme: kv.or("scheme", SchemeArg(Scheme::GodunovExact)).0,
            v0: kv.or("v0", p.ov.v0),
            ell: kv.or("ell", p.ov.ell),
            t_gap: kv.or("t_gap", p.ov.t_gap),
            ring_length,
            n_agents,
            tau: kv.or("tau", p.tau),
            dt: kv.or("dt", p.dt),
            dx: kv.or("dx", ring_length / n_agents.max(1) as f64),
            t_end: kv.req("t_end", 0.0),
            init: kv.req("init", InitArg(InitKind::Homogeneous)).0,
            seed: kv.or("seed", p.seed),
            record_stride: kv.or("record_stride", 100),
            out: kv.or("out", PathBuf::from("out")),
            integrator: kv.or("integrator", Named(Integrator::FirstOrder)).0,
            collision: kv.or("collision", Named(CollisionPolicy::Abort)).0,
            bounds: kv.or("bounds", Named(BoundsPolicy::Abort)).0,
            jam_gap: kv.or("jam_gap", p.jam_gap),
            perturbation: kv.or("perturbation", p.perturbation),
            fd_subject: kv.or("fd_subject", 0),
            wave_lag: kv.or("wave_lag", 10.0),
        };
        cfg.check(&mut kv);
        kv.finish()?;
        Ok(cfg)
    }

    fn check(&self, kv: &mut KeyValues) {
        if let Err(e) = self.ring().validate() {
            kv.error(e.to_string());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            kv.error(format!("t_end must be a non-negative number, got {}", self.t_end));
        }
        if self.record_stride == 0 {
            kv.error("record_stride must be at least 1");
        }
        if !(self.wave_lag > 0.0) {
            kv.error(format!("wave_lag must be positive, got {}", self.wave_lag));
        }
        if self.model.micro() && self.fd_subject >= self.n_agents {
            kv.error(format!("fd_subject {} exceeds the {} agents", self.fd_subject, self.n_agents));
        }
        if self.model.macro_() {
            match self.cells() {
                Some(m) if self.fd_subject >= m => {
                    kv.error(format!("fd_subject {} exceeds the {m} cells", self.fd_subject))
                }
                Some(_) => {}
                None => kv.error(format!("dx = {} does not divide ring_length = {}", self.dx, self.ring_length)),
            }
            if self.scheme == Scheme::GodunovExact && self.tau >= self.dx / self.v0 {
                kv.error(format!(
                    "exact Godunov needs tau < dx/v0 = {}, got tau = {}",
                    self.dx / self.v0,
                    self.tau
                ));
            }
        }
    }

    pub fn ring(&self) -> RingConfig {
        RingConfig {
            ring_length: self.ring_length,
            n_agents: self.n_agents,
            tau: self.tau,
            dt: self.dt,
            ov: self.ov(),
            seed: self.seed,
            jam_gap: self.jam_gap,
            perturbation: self.perturbation,
            collision: self.collision,
        }
    }

    pub fn ov(&self) -> TriangularOV {
        TriangularOV { v0: self.v0, ell: self.ell, t_gap: self.t_gap }
    }

    /// Number of cells `M` with `M dx = L`, if integral.
    pub fn cells(&self) -> Option<usize> {
        if !(self.dx > 0.0) {
            return None;
        }
        let m = (self.ring_length / self.dx).round();
        (m >= 3.0 && (m * self.dx - self.ring_length).abs() <= 1e-9 * self.ring_length).then_some(m as usize)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("model", self.model.name().into());
        put("scheme", self.scheme.name().into());
        put("v0", self.v0.to_string());
        put("ell", self.ell.to_string());
        put("t_gap", self.t_gap.to_string());
        put("ring_length", self.ring_length.to_string());
        put("n_agents", self.n_agents.to_string());
        put("tau", self.tau.to_string());
        put("dt", self.dt.to_string());
        put("dx", self.dx.to_string());
        put("t_end", self.t_end.to_string());
        put("init", self.init.to_string());
        put("seed", self.seed.to_string());
        put("record_stride", self.record_stride.to_string());
        put("out", self.out.display().to_string());
        put("integrator", Named::<Integrator>::name(self.integrator).into());
        put("collision", Named::<CollisionPolicy>::name(self.collision).into());
        put("bounds", Named::<BoundsPolicy>::name(self.bounds).into());
        put("jam_gap", self.jam_gap.to_string());
        put("perturbation", self.perturbation.to_string());
        put("fd_subject", self.fd_subject.to_string());
        put("wave_lag", self.wave_lag.to_string());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub base: StabilityQuery,
    pub tau_range: (f64, f64),
    pub axis: MapAxis,
    pub y_range: (f64, f64),
    pub resolution: usize,
    pub mark: Option<(f64, f64)>,
    pub out: PathBuf,
}

impl MapSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = KeyValues::parse(text);
        let scheme = kv.req("scheme", SchemeArg(Scheme::GodunovExact)).0;
        let base = StabilityQuery {
            scheme: StabilityScheme::from(scheme),
            rho_e: kv.or("rho_e", 0.5),
            tau: 0.0,
            t_gap: kv.or("t_gap", 1.0),
            ell: kv.or("ell", 1.0),
            dx: kv.req("dx", 1.0),
            dt: kv.or("dt", 0.01),
            n_cells: kv.or("n_cells", 50),
            v0: kv.opt("v0"),
        };
        let spec = Self {
            base,
            tau_range: (kv.req("tau_min", 0.0), kv.req("tau_max", 0.0)),
            axis: kv.or("axis", Named(MapAxis::Dt)).0,
            y_range: (kv.req("y_min", 0.01), kv.req("y_max", 0.01)),
            resolution: kv.or("resolution", 200),
            mark: match (kv.opt("mark_tau"), kv.opt("mark_y")) {
                (Some(t), Some(y)) => Some((t, y)),
                (None, None) => None,
                _ => {
                    kv.error("mark_tau and mark_y go together");
                    None
                }
            },
            out: kv.or("out", PathBuf::from("out")),
        };
        if let Err(e) = base.validate() {
            kv.error(e.to_string());
        }
        let (lo, hi) = spec.tau_range;
        if !(lo <= hi) || !(spec.y_range.0 <= spec.y_range.1) {
            kv.error("ranges must satisfy min <= max");
        }
        if spec.axis == MapAxis::RhoE && !(spec.y_range.0 > 0.0 && spec.y_range.1 < 1.0 / base.ell) {
            kv.error("rho_e range must lie inside (0, 1/ell)");
        }
        if spec.axis == MapAxis::Dt && !(spec.y_range.0 > 0.0) {
            kv.error("dt range must be positive");
        }
        if spec.resolution < 2 && (lo != hi || spec.y_range.0 != spec.y_range.1) {
            kv.error("resolution must be at least 2");
        }
        kv.finish()?;
        Ok(spec)
    }

    pub fn echo(&self) -> String {
        let b = &self.base;
        let scheme = match b.scheme {
            StabilityScheme::GodunovEuler => "godunov-euler",
            StabilityScheme::GodunovGodunov => "godunov-godunov",
            _ => "godunov",
        };
        let mut s = format!(
            "scheme = {scheme}\nrho_e = {}\nt_gap = {}\nell = {}\ndx = {}\ndt = {}\nn_cells = {}\n",
            b.rho_e, b.t_gap, b.ell, b.dx, b.dt, b.n_cells
        );
        if let Some(v0) = b.v0 {
            let _ = writeln!(s, "v0 = {v0}");
        }
        let _ = write!(
            s,
            "tau_min = {}\ntau_max = {}\naxis = {}\ny_min = {}\ny_max = {}\nresolution = {}\n",
            self.tau_range.0,
            self.tau_range.1,
            Named::<MapAxis>::name(self.axis),
            self.y_range.0,
            self.y_range.1,
            self.resolution
        );
        if let Some((t, y)) = self.mark {
            let _ = write!(s, "mark_tau = {t}\nmark_y = {y}\n");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdParams {
    pub ov: TriangularOV,
    pub tau: f64,
    pub points: usize,
    pub slack: Option<f64>,
    pub out: PathBuf,
}

impl FdParams {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = KeyValues::parse(text);
        let (v0, ell, t_gap) = (kv.req("v0", 1.0), kv.req("ell", 1.0), kv.req("t_gap", 1.0));
        let ov = match TriangularOV::new(v0, ell, t_gap) {
            Ok(ov) => ov,
            Err(e) => {
                kv.error(e.to_string());
                TriangularOV::reference()
            }
        };
        let p = Self {
            ov,
            tau: kv.req("tau", 0.0),
            points: kv.or("points", 500),
            slack: kv.opt("slack"),
            out: kv.or("out", PathBuf::from("out")),
        };
        if !p.tau.is_finite() {
            kv.error("tau must be finite");
        }
        if p.points < 2 {
            kv.error("points must be at least 2");
        }
        if p.slack.is_some_and(|s| !(s >= 0.0)) {
            kv.error("slack must be non-negative");
        }
        kv.finish()?;
        Ok(p)
    }

    pub fn echo(&self) -> String {
        let mut s = format!(
            "v0 = {}\nell = {}\nt_gap = {}\ntau = {}\npoints = {}\n",
            self.ov.v0, self.ov.ell, self.ov.t_gap, self.tau, self.points
        );
        if let Some(e) = self.slack {
            let _ = writeln!(s, "slack = {e}");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in ["ring-jam", "ring-random", "ring-perturbed"] {
            let cfg = ScenarioConfig::parse(&load_text(name).unwrap()).unwrap();
            assert_eq!(cfg.cells(), Some(50));
        }
        for name in ["ring-f1", "ring-f23"] {
            MapSpec::parse(&load_text(name).unwrap()).unwrap();
        }
        for name in ["ring-fd", "pedestrian", "vehicle"] {
            FdParams::parse(&load_text(name).unwrap()).unwrap();
        }
        assert!(load_text("no-such-scenario").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ScenarioConfig::parse(&load_text("ring-jam").unwrap()).unwrap();
        assert_eq!(ScenarioConfig::parse(&cfg.echo()).unwrap(), cfg);
        let spec = MapSpec::parse(&load_text("ring-f23").unwrap()).unwrap();
        assert_eq!(MapSpec::parse(&spec.echo()).unwrap(), spec);
        let fd = FdParams::parse(&load_text("vehicle").unwrap()).unwrap();
        assert_eq!(FdParams::parse(&fd.echo()).unwrap(), fd);
    }

    #[test]
    fn errors_are_itemized() {
        let text = "t_end = abc\ninit = jam\nbogus = 1\nscheme = nope\nno equals sign\n";
        match ScenarioConfig::parse(text) {
            Err(CliError::Config(errs)) => {
                assert!(errs.len() >= 4, "{errs:?}");
                assert!(errs.iter().any(|e| e.contains("unknown key 'bogus'")));
                assert!(errs.iter().any(|e| e.contains("t_end")));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_inconsistent_grid_and_cfl() {
        let base = load_text("ring-jam").unwrap();
        assert!(ScenarioConfig::parse(&base.replace("dx = 2.02", "dx = 2.5")).is_err());
        assert!(ScenarioConfig::parse(&base.replace("tau = 1\n", "tau = 1.2\n")).is_err());
        assert!(ScenarioConfig::parse(&base.replace("n_agents = 50", "n_agents = 120")).is_err());
    }
}
