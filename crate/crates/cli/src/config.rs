//! Experiment configs: flat `key=value` text with dotted keys.
//!
//! ```text
//! # fig3
//! name=fig3
//! mode=pde
//! defect.kind=gaussian
//! defect.s0=0.3
//! defect.s1=7
//! defect.d=0.3
//! ```
//!
//! Keys of the form `panel.<name>.<key>` describe one panel of a multi-panel
//! figure: each panel is the base config with its own keys overriding.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use frontlab::cv::CvModelKind;
use frontlab::pde::homogeneous_width;
use frontlab::{DefectSpec, Execution, Grid, KinkState, ReactionParams, SolverConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Parse { line: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::Invalid(v) => write!(f, "{}", v.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

/// The parsed text, before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Parse { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.split('.').any(str::is_empty) {
                return Err(err(format!("malformed key {k:?}")));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("duplicate key {k:?}")));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Panel names in key order, and the merged config of each.
    pub fn panels(&self) -> Vec<(String, RawConfig)> {
        let mut base = BTreeMap::new();
        let mut panels: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (k, v) in &self.entries {
            match k.strip_prefix("panel.").and_then(|rest| rest.split_once('.')) {
                Some((p, key)) => {
                    panels.entry(p.to_string()).or_default().insert(key.to_string(), v.clone());
                }
                None => {
                    base.insert(k.clone(), v.clone());
                }
            }
        }
        panels
            .into_iter()
            .map(|(p, over)| {
                let mut merged = base.clone();
                merged.extend(over);
                (p, RawConfig { entries: merged })
            })
            .collect()
    }

    pub fn has_panels(&self) -> bool {
        self.entries.keys().any(|k| k.starts_with("panel."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pde,
    Cv,
    Compare,
    PinningThreshold,
    Invert,
    Sweep,
    Sources,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pde => "pde",
            Mode::Cv => "cv",
            Mode::Compare => "compare",
            Mode::PinningThreshold => "pinning-threshold",
            Mode::Invert => "invert",
            Mode::Sweep => "sweep",
            Mode::Sources => "sources",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        [Mode::Pde, Mode::Cv, Mode::Compare, Mode::PinningThreshold, Mode::Invert, Mode::Sweep, Mode::Sources]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// Which model a sweep point or threshold probe runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Runner {
    Pde,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitWidth {
    /// `sqrt(2 / s(x0_init))`, the homogeneous width at the starting point.
    Equilibrium,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub run: Runner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Dirac,
    Heaviside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourcesSpec {
    pub kind: SourceKind,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub params: ReactionParams,
    pub defect: Option<DefectSpec>,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub cv_solver: SolverConfig,
    pub cv_model: Option<String>,
    pub x0_init: f64,
    pub w_init: InitWidth,
    pub stop_when_decided: bool,
    pub snapshots: bool,
    pub execution: Execution,
    pub out_dir: Option<PathBuf>,
    pub sweep: Option<(ParamRange, usize)>,
    pub threshold: Option<ParamRange>,
    pub invert_window: usize,
    pub invert_trajectory: Option<PathBuf>,
    pub sources: Option<SourcesSpec>,
    /// The text this was built from; probes and sweep points re-parse a modified copy.
    pub raw: RawConfig,
}

const KNOWN: &[&str] = &[
    "name",
    "mode",
    "description",
    "reaction.a",
    "defect.kind",
    "defect.s",
    "defect.s0",
    "defect.s1",
    "defect.d",
    "defect.s_l",
    "defect.s_r",
    "defect.alpha",
    "defect.beta",
    "grid.x_min",
    "grid.x_max",
    "grid.n",
    "solver.rtol",
    "solver.atol",
    "solver.t_max",
    "solver.dt_out",
    "solver.dt_init",
    "cv.model",
    "cv.rtol",
    "cv.atol",
    "init.x0",
    "init.w",
    "run.stop_when_decided",
    "run.execution",
    "output.dir",
    "output.snapshots",
    "sweep.param",
    "sweep.lo",
    "sweep.hi",
    "sweep.steps",
    "sweep.run",
    "threshold.param",
    "threshold.lo",
    "threshold.hi",
    "threshold.run",
    "invert.window",
    "invert.trajectory",
    "sources.kind",
    "sources.lo",
    "sources.hi",
    "sources.points",
];

/// Keys a sweep or threshold search may vary.
pub const NUMERIC_PARAMS: &[&str] = &[
    "reaction.a",
    "defect.s",
    "defect.s0",
    "defect.s1",
    "defect.d",
    "defect.s_l",
    "defect.s_r",
    "defect.alpha",
    "defect.beta",
    "init.x0",
];

/// Collects violations instead of stopping at the first one.
struct Reader<'a> {
    raw: &'a RawConfig,
    violations: Vec<String>,
}

impl Reader<'_> {
    fn num(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        match self.raw.get(key) {
            None => {
                if default.is_none() {
                    self.violations.push(format!("missing key {key}"));
                }
                default
            }
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Some(x),
                _ => {
                    let hint = if v.contains(',') { " (use '.' as the decimal separator)" } else { "" };
                    self.violations.push(format!("{key}: not a finite number: {v:?}{hint}"));
                    None
                }
            },
        }
    }

    fn count(&mut self, key: &str, default: Option<usize>) -> Option<usize> {
        match self.raw.get(key) {
            None => {
                if default.is_none() {
                    self.violations.push(format!("missing key {key}"));
                }
                default
            }
            Some(v) => match v.parse::<usize>() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.violations.push(format!("{key}: not a non-negative integer: {v:?}"));
                    None
                }
            },
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        match self.raw.get(key) {
            None | Some("false") => false,
            Some("true") => true,
            Some(v) => {
                self.violations.push(format!("{key}: expected true or false, got {v:?}"));
                false
            }
        }
    }

    fn text(&mut self, key: &str) -> Option<String> {
        let v = self.raw.get(key).map(str::to_string);
        if v.is_none() {
            self.violations.push(format!("missing key {key}"));
        }
        v
    }

    fn runner(&mut self, key: &str) -> Runner {
        match self.raw.get(key) {
            None | Some("pde") => Runner::Pde,
            Some("cv") => Runner::Cv,
            Some(v) => {
                self.violations.push(format!("{key}: expected pde or cv, got {v:?}"));
                Runner::Pde
            }
        }
    }

    fn defect(&mut self) -> Option<DefectSpec> {
        let kind = self.raw.get("defect.kind")?.to_string();
        let spec = match kind.as_str() {
            "constant" => DefectSpec::Constant { s: self.num("defect.s", None)? },
            "gaussian" => {
                let s0 = self.num("defect.s0", None);
                let s1 = self.num("defect.s1", None);
                let d = self.num("defect.d", None);
                DefectSpec::Gaussian { s0: s0?, s1: s1?, d: d? }
            }
            "tanh" => {
                let s_l = self.num("defect.s_l", None);
                let s_r = self.num("defect.s_r", None);
                let d = self.num("defect.d", None);
                DefectSpec::Tanh { s_l: s_l?, s_r: s_r?, d: d? }
            }
            "dirac" | "heaviside" => {
                let alpha = self.num("defect.alpha", None);
                let beta = self.num("defect.beta", None);
                let (alpha, beta) = (alpha?, beta?);
                if kind == "dirac" {
                    DefectSpec::Dirac { alpha, beta }
                } else {
                    DefectSpec::Heaviside { alpha, beta }
                }
            }
            other => {
                self.violations.push(format!("defect.kind: unknown defect {other:?}"));
                return None;
            }
        };
        if let Err(e) = spec.validate() {
            self.violations.push(format!("defect: {e}"));
            return None;
        }
        Some(spec)
    }

    fn range(&mut self, prefix: &str) -> Option<ParamRange> {
        let param = self.text(&format!("{prefix}.param"));
        let lo = self.num(&format!("{prefix}.lo"), None);
        let hi = self.num(&format!("{prefix}.hi"), None);
        let run = self.runner(&format!("{prefix}.run"));
        let param = param?;
        if !NUMERIC_PARAMS.contains(&param.as_str()) {
            self.violations.push(format!("{prefix}.param: {param:?} cannot be varied"));
        } else if self.raw.get(&param).is_none() {
            self.violations.push(format!("{prefix}.param: {param} has no base value in the config"));
        }
        let (lo, hi) = (lo?, hi?);
        if lo >= hi {
            self.violations.push(format!("{prefix}: need lo < hi, got [{lo}, {hi}]"));
        }
        Some(ParamRange { param, lo, hi, run })
    }
}

impl ExperimentConfig {
    /// Parses and validates a single-panel config.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut r = Reader { raw: &raw, violations: Vec::new() };
        for k in raw.keys() {
            if !KNOWN.contains(&k) && !k.starts_with("panel.") {
                r.violations.push(format!("unknown key {k}"));
            }
        }
        let name = r.text("name").unwrap_or_default();
        let mode = match r.raw.get("mode") {
            None => {
                r.violations.push("missing key mode".into());
                None
            }
            Some(m) => {
                let parsed = Mode::parse(m);
                if parsed.is_none() {
                    r.violations.push(format!("mode: unknown mode {m:?}"));
                }
                parsed
            }
        };

        let a = r.num("reaction.a", Some(ReactionParams::default().a)).unwrap_or(0.3);
        let params = match ReactionParams::new(a) {
            Ok(p) => p,
            Err(e) => {
                r.violations.push(format!("reaction.a: {e}"));
                ReactionParams::default()
            }
        };

        let x_min = r.num("grid.x_min", Some(-100.0));
        let x_max = r.num("grid.x_max", Some(100.0));
        let n = r.count("grid.n", Some(4000));
        let grid = match (x_min, x_max, n) {
            (_, _, Some(n)) if n < 3 => {
                r.violations.push(format!("grid too small: n = {n}, need at least 3 cells"));
                None
            }
            (Some(lo), Some(hi), Some(n)) => match Grid::new(lo, hi, n) {
                Ok(g) => Some(g),
                Err(e) => {
                    r.violations.push(format!("grid: {e}"));
                    None
                }
            },
            _ => None,
        };

        let base = SolverConfig::default();
        let solver = SolverConfig {
            rtol: r.num("solver.rtol", Some(base.rtol)).unwrap_or(base.rtol),
            atol: r.num("solver.atol", Some(base.atol)).unwrap_or(base.atol),
            t_max: r.num("solver.t_max", Some(base.t_max)).unwrap_or(base.t_max),
            dt_out: r.num("solver.dt_out", Some(base.dt_out)).unwrap_or(base.dt_out),
            dt_init: r.num("solver.dt_init", Some(base.dt_init)).unwrap_or(base.dt_init),
        };
        if let Err(e) = solver.validate() {
            r.violations.push(format!("solver: {e}"));
        }
        let cv_base = frontlab::cv::cv_solver_config(solver.t_max, solver.dt_out);
        let cv_solver = SolverConfig {
            rtol: r.num("cv.rtol", Some(cv_base.rtol)).unwrap_or(cv_base.rtol),
            atol: r.num("cv.atol", Some(cv_base.atol)).unwrap_or(cv_base.atol),
            ..cv_base
        };

        let defect = r.defect();
        let x0_init = r.num("init.x0", Some(-20.0)).unwrap_or(-20.0);
        let w_init = match r.raw.get("init.w") {
            None | Some("equilibrium") => InitWidth::Equilibrium,
            Some(_) => match r.num("init.w", None) {
                Some(w) if w > 0.0 => InitWidth::Value(w),
                Some(w) => {
                    r.violations.push(format!("init.w must be positive, got {w}"));
                    InitWidth::Equilibrium
                }
                None => InitWidth::Equilibrium,
            },
        };
        let stop_when_decided = r.flag("run.stop_when_decided");
        let snapshots = r.flag("output.snapshots");
        let execution = match r.raw.get("run.execution") {
            None | Some("parallel") => Execution::Parallel,
            Some("sequential") => Execution::Sequential,
            Some(v) => {
                r.violations.push(format!("run.execution: expected parallel or sequential, got {v:?}"));
                Execution::Parallel
            }
        };
        let out_dir = r.raw.get("output.dir").map(PathBuf::from);
        let cv_model = r.raw.get("cv.model").map(str::to_string);
        let invert_window = r.count("invert.window", Some(1)).unwrap_or(1);
        let invert_trajectory = r.raw.get("invert.trajectory").map(PathBuf::from);

        let mut sweep = None;
        let mut threshold = None;
        let mut sources = None;
        if let Some(mode) = mode {
            let needs_defect = !matches!(mode, Mode::Sources);
            if needs_defect && r.raw.get("defect.kind").is_none() {
                r.violations.push("missing key defect.kind".into());
            }
            match mode {
                Mode::Cv | Mode::Compare => {
                    check_model(&mut r.violations, cv_model.as_deref(), defect.as_ref(), true);
                }
                Mode::Sweep => {
                    let range = r.range("sweep");
                    let steps = r.count("sweep.steps", None);
                    if let Some(s) = steps {
                        if s < 2 {
                            r.violations.push(format!("sweep.steps must be at least 2, got {s}"));
                        }
                    }
                    if let Some(range) = &range {
                        check_model(&mut r.violations, cv_model.as_deref(), defect.as_ref(), range.run == Runner::Cv);
                    }
                    sweep = range.zip(steps);
                }
                Mode::PinningThreshold => {
                    threshold = r.range("threshold");
                    if let Some(t) = &threshold {
                        check_model(&mut r.violations, cv_model.as_deref(), defect.as_ref(), t.run == Runner::Cv);
                    }
                }
                Mode::Invert => {
                    if invert_window % 2 == 0 {
                        r.violations.push(format!("invert.window must be odd, got {invert_window}"));
                    }
                    if let Some(d) = &defect {
                        if !d.is_pointwise() {
                            r.violations.push("invert needs a pointwise truth profile, not a Dirac defect".into());
                        }
                    }
                }
                Mode::Sources => {
                    let kind = match r.raw.get("sources.kind") {
                        Some("dirac") => Some(SourceKind::Dirac),
                        Some("heaviside") => Some(SourceKind::Heaviside),
                        Some(v) => {
                            r.violations.push(format!("sources.kind: expected dirac or heaviside, got {v:?}"));
                            None
                        }
                        None => {
                            r.violations.push("missing key sources.kind".into());
                            None
                        }
                    };
                    let lo = r.num("sources.lo", Some(-10.0));
                    let hi = r.num("sources.hi", Some(10.0));
                    let points = r.count("sources.points", Some(401));
                    if let (Some(kind), Some(lo), Some(hi), Some(points)) = (kind, lo, hi, points) {
                        if lo >= hi || points < 2 {
                            r.violations.push(format!("sources: need lo < hi and points >= 2, got [{lo}, {hi}] x {points}"));
                        }
                        sources = Some(SourcesSpec { kind, lo, hi, points });
                    }
                }
                Mode::Pde => {}
            }
            if matches!(mode, Mode::Pde | Mode::Compare | Mode::Invert)
                || sweep.as_ref().is_some_and(|s| s.0.run == Runner::Pde)
                || threshold.as_ref().is_some_and(|t| t.run == Runner::Pde)
            {
                if let Some(d) = &defect {
                    if !d.is_pointwise() {
                        r.violations.push("the PDE needs a pointwise defect; Dirac defects only exist in the cv model".into());
                    }
                }
                if let Some(g) = &grid {
                    if !(x0_init > g.x_min() && x0_init < g.x_max()) {
                        r.violations.push(format!("init.x0 = {x0_init} lies outside the grid"));
                    }
                }
            }
        }

        let violations = r.violations;
        if !violations.is_empty() {
            return Err(ConfigError::Invalid(violations));
        }
        Ok(ExperimentConfig {
            name,
            mode: mode.expect("checked"),
            params,
            defect,
            grid: grid.expect("checked"),
            solver,
            cv_solver,
            cv_model,
            x0_init,
            w_init,
            stop_when_decided,
            snapshots,
            execution,
            out_dir,
            sweep,
            threshold,
            invert_window,
            invert_trajectory,
            sources,
            raw,
        })
    }

    /// The defect, which every mode but `sources` requires.
    pub fn defect(&self) -> DefectSpec {
        self.defect.expect("validated config has a defect")
    }

    /// Starting kink; the equilibrium width uses the local rate at `x0_init`.
    pub fn initial_kink(&self) -> frontlab::Result<KinkState> {
        let w = match self.w_init {
            InitWidth::Value(w) => w,
            InitWidth::Equilibrium => {
                let d = self.defect();
                let s = if d.is_pointwise() { d.eval(self.x0_init)? } else { d.left_level() };
                homogeneous_width(s)?
            }
        };
        KinkState::new(self.x0_init, w)
    }

    pub fn cv_kind(&self) -> frontlab::Result<CvModelKind> {
        CvModelKind::for_defect(self.cv_model.as_deref().unwrap_or("general"), &self.defect())
    }

    /// A copy with one numeric key replaced, re-validated.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self, ConfigError> {
        let mut raw = self.raw.clone();
        raw.set(key, format!("{value:?}"));
        Self::from_raw(raw)
    }
}

fn check_model(violations: &mut Vec<String>, model: Option<&str>, defect: Option<&DefectSpec>, required: bool) {
    let Some(model) = model else {
        if required {
            violations.push("missing key cv.model".into());
        }
        return;
    };
    let Some(defect) = defect else { return };
    match (model, defect) {
        ("general" | "adiabatic" | "taylor", DefectSpec::Dirac { .. }) => {
            let shown = match model {
                "general" => "General",
                "adiabatic" => "Adiabatic",
                _ => "Taylor",
            };
            violations.push(format!("{shown} model rejects Dirac defects (use cv.model=dirac)"));
        }
        _ => {
            if let Err(e) = CvModelKind::for_defect(model, defect) {
                violations.push(format!("cv.model: {e}"));
            }
        }
    }
}

/// A config file: either a single experiment or a set of named panels.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSet {
    Single(ExperimentConfig),
    Panels(Vec<(String, ExperimentConfig)>),
}

impl ConfigSet {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        if !raw.has_panels() {
            return ExperimentConfig::from_raw(raw).map(ConfigSet::Single);
        }
        let mut out = Vec::new();
        let mut violations = Vec::new();
        for (p, merged) in raw.panels() {
            match ExperimentConfig::from_raw(merged) {
                Ok(c) => out.push((p, c)),
                Err(ConfigError::Invalid(v)) => violations.extend(v.into_iter().map(|m| format!("panel {p}: {m}"))),
                Err(e) => return Err(e),
            }
        }
        if violations.is_empty() {
            Ok(ConfigSet::Panels(out))
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    /// `(panel name or None, config)` in run order.
    pub fn configs(&self) -> Vec<(Option<&str>, &ExperimentConfig)> {
        match self {
            ConfigSet::Single(c) => vec![(None, c)],
            ConfigSet::Panels(v) => v.iter().map(|(p, c)| (Some(p.as_str()), c)).collect(),
        }
    }
}

/// Command-line overrides applied to the raw text before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub t_max: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, raw: &mut RawConfig) {
        if let Some(n) = self.n {
            raw.set("grid.n", n.to_string());
        }
        if let Some(t) = self.t_max {
            raw.set("solver.t_max", format!("{t:?}"));
        }
    }
}
