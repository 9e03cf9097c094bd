//! Dispatches a validated config to the PDE / reduced-model / pinning /
//! inversion pipelines and writes the CSV artifacts plus a summary file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use frontlab::cv::{heaviside_source_1, heaviside_source_2, source_r, source_r2, CvSimulation};
use frontlab::inverse::{reconstruct_smoothed, residual, TopographyEstimate};
use frontlab::kinkfit::FrontTracker;
use frontlab::output::{csv, num, write_atomic};
use frontlab::pde::{homogeneous_speed, FieldState, Simulation};
use frontlab::pinning::{detect_pinning, find_threshold, PinningVerdict, ThresholdSearch};
use frontlab::{DefectSpec, Error, FrontTrajectory, KinkState};

use crate::config::{ConfigError, ConfigSet, ExperimentConfig, Mode, Runner, SourceKind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Error,
    },
}

fn at(stage: impl Into<String>) -> impl FnOnce(Error) -> RunError {
    let stage = stage.into();
    move |source| RunError::Stage { stage, source }
}

/// Ordered `key=value` record written next to the CSVs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// One row of the PDE-vs-reduced-model table, matched on front position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedRow {
    pub x0: f64,
    pub w_pde: f64,
    pub w_cv: f64,
    pub speed_pde: f64,
    pub speed_cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// `Err` carries the failure message of this point.
    pub result: Result<PointResult, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResult {
    pub verdict: Option<PinningVerdict>,
    pub x0_final: f64,
    pub w_final: f64,
    pub t_end: f64,
    pub max_fit_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Trajectory { traj: FrontTrajectory, verdict: Option<PinningVerdict> },
    Compare { pde: FrontTrajectory, cv: FrontTrajectory, rows: Vec<AlignedRow>, max_width_deviation: f64 },
    Threshold { search: ThresholdSearch, beta: Option<f64> },
    Invert { estimate: TopographyEstimate, residual: (f64, f64) },
    Sweep(Vec<SweepRow>),
    Sources(Vec<[f64; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub panel: Option<String>,
    pub outcome: Outcome,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Runs every panel of a config set in order.
pub fn run_set(set: &ConfigSet, out: &Path) -> Result<Vec<Report>, RunError> {
    set.configs().into_iter().map(|(panel, cfg)| run(cfg, panel, out)).collect()
}

pub fn run(cfg: &ExperimentConfig, panel: Option<&str>, out: &Path) -> Result<Report, RunError> {
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| at("output directory")(e.into()))?;
    let prefix = panel.map(|p| format!("{p}_")).unwrap_or_default();
    let path = |file: &str| out.join(format!("{prefix}{file}"));
    let mut files = Vec::new();
    let mut summary = Summary::default();
    summary.push("name", &cfg.name);
    if let Some(p) = panel {
        summary.push("panel", p);
    }
    summary.push("mode", cfg.mode.name());
    if let Some(d) = cfg.defect {
        summary.push("defect", format!("{d:?}"));
    }
    summary.push("a", num(cfg.params.a));

    let outcome = match cfg.mode {
        Mode::Pde => {
            let snaps = cfg.snapshots.then(|| path("snapshots"));
            let (traj, verdict) = pde_trajectory(cfg, snaps.as_deref())?;
            write(&path("trajectory.csv"), &traj.to_csv(), &mut files)?;
            describe_trajectory(&mut summary, "", &traj, verdict.as_ref());
            Outcome::Trajectory { traj, verdict }
        }
        Mode::Cv => {
            let init = cfg.initial_kink().map_err(at("initial state"))?;
            let (traj, verdict) = cv_trajectory(cfg, init, cfg.solver.t_max)?;
            write(&path("trajectory.csv"), &traj.to_csv(), &mut files)?;
            summary.push("cv_model", cfg.cv_kind().map_err(at("cv model"))?.name());
            describe_trajectory(&mut summary, "", &traj, verdict.as_ref());
            Outcome::Trajectory { traj, verdict }
        }
        Mode::Compare => {
            let (pde, pde_verdict) = pde_trajectory(cfg, None)?;
            // the reduced model starts from the first fitted PDE snapshot and covers the same time span
            let first = pde.samples()[0];
            let last_t = pde.last().map_or(0.0, |s| s.t);
            let (cv, cv_verdict) = cv_trajectory(cfg, KinkState { x0: first.x0, w: first.w }, last_t - first.t)?;
            let rows = align(&pde, &cv);
            let max_width_deviation = rows.iter().map(|r| ((r.w_cv - r.w_pde) / r.w_pde).abs()).fold(0.0, f64::max);
            write(&path("pde_trajectory.csv"), &pde.to_csv(), &mut files)?;
            write(&path("cv_trajectory.csv"), &cv.to_csv(), &mut files)?;
            let table = csv(
                "x0,w_pde,w_cv,speed_pde,speed_cv",
                rows.iter().map(|r| [num(r.x0), num(r.w_pde), num(r.w_cv), num(r.speed_pde), num(r.speed_cv)]),
            );
            write(&path("compare.csv"), &table, &mut files)?;
            summary.push("cv_model", cfg.cv_kind().map_err(at("cv model"))?.name());
            describe_trajectory(&mut summary, "pde_", &pde, pde_verdict.as_ref());
            describe_trajectory(&mut summary, "cv_", &cv, cv_verdict.as_ref());
            summary.push("aligned_rows", rows.len());
            summary.push("max_width_deviation", num(max_width_deviation));
            Outcome::Compare { pde, cv, rows, max_width_deviation }
        }
        Mode::PinningThreshold => {
            let range = cfg.threshold.clone().expect("validated");
            let search = find_threshold(|v| probe(cfg, &range.param, v, range.run), range.lo, range.hi)
                .map_err(at("threshold search"))?;
            let beta_of = |v: f64| mass_equivalent(cfg, &range.param, v);
            let log = csv(
                "probe,value,beta,pinned,x0_final,w_final,t_decided",
                search.probes.iter().enumerate().map(|(i, (v, verdict))| {
                    [
                        i.to_string(),
                        num(*v),
                        beta_of(*v).map(num).unwrap_or_default(),
                        verdict.pinned.to_string(),
                        num(verdict.x0_final),
                        num(verdict.w_final),
                        num(verdict.t_decided),
                    ]
                }),
            );
            write(&path("threshold.csv"), &log, &mut files)?;
            let beta = beta_of(search.threshold);
            summary.push("param", &range.param);
            summary.push("threshold", num(search.threshold));
            summary.push("bracket", format!("{} {}", num(search.lo), num(search.hi)));
            if let Some(b) = beta {
                summary.push("beta_c", num(b));
            }
            summary.push("probes", search.probes.len());
            Outcome::Threshold { search, beta }
        }
        Mode::Invert => {
            let traj = match &cfg.invert_trajectory {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| at("reading trajectory")(e.into()))?;
                    FrontTrajectory::from_csv(&text).map_err(at("reading trajectory"))?
                }
                None => {
                    let (traj, _) = pde_trajectory(cfg, None)?;
                    write(&path("trajectory.csv"), &traj.to_csv(), &mut files)?;
                    traj
                }
            };
            let truth = cfg.defect();
            let mut estimate = reconstruct_smoothed(&traj, cfg.params.a, cfg.invert_window).map_err(at("inversion"))?;
            estimate.source = cfg.invert_trajectory.as_ref().map_or("pde".into(), |p| p.display().to_string());
            let res = residual(&estimate, &truth).map_err(at("residual"))?;
            write(&path("topography.csv"), &estimate.to_csv(Some(&truth)).map_err(at("inversion"))?, &mut files)?;
            summary.push("scheme", &estimate.scheme);
            summary.push("monotone", estimate.monotone);
            summary.push("points", estimate.points.len());
            summary.push("residual_sup", num(res.0));
            summary.push("residual_l2", num(res.1));
            summary.push("max_fit_error", num(traj.max_fit_error()));
            Outcome::Invert { estimate, residual: res }
        }
        Mode::Sweep => {
            let (range, steps) = cfg.sweep.clone().expect("validated");
            let values: Vec<f64> =
                (0..steps).map(|i| range.lo + (range.hi - range.lo) * i as f64 / (steps - 1) as f64).collect();
            let rows = cfg.execution.map(&values, |&v| SweepRow {
                value: v,
                result: sweep_point(cfg, &range.param, v, range.run).map_err(|e| e.to_string()),
            });
            let table = csv(
                "value,status,pinned,x0_final,w_final,t_end,max_fit_error",
                rows.iter().map(|r| match &r.result {
                    Ok(p) => [
                        num(r.value),
                        "ok".into(),
                        p.verdict.map_or("undecided".into(), |v| v.pinned.to_string()),
                        num(p.x0_final),
                        num(p.w_final),
                        num(p.t_end),
                        num(p.max_fit_error),
                    ],
                    Err(msg) => [
                        num(r.value),
                        format!("\"error: {}\"", msg.replace('"', "'")),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ],
                }),
            );
            write(&path("sweep.csv"), &table, &mut files)?;
            summary.push("param", &range.param);
            summary.push("points", rows.len());
            summary.push("failed", rows.iter().filter(|r| r.result.is_err()).count());
            summary.push("pinned", rows.iter().filter(|r| matches!(&r.result, Ok(p) if p.verdict.is_some_and(|v| v.pinned))).count());
            Outcome::Sweep(rows)
        }
        Mode::Sources => {
            let spec = cfg.sources.clone().expect("validated");
            let a = cfg.params.a;
            let rows: Vec<[f64; 3]> = (0..spec.points)
                .map(|i| {
                    let z = spec.lo + (spec.hi - spec.lo) * i as f64 / (spec.points - 1) as f64;
                    match spec.kind {
                        SourceKind::Dirac => [z, source_r(-z, a), source_r2(-z, a)],
                        SourceKind::Heaviside => [z, heaviside_source_1(-z, a), heaviside_source_2(-z, a)],
                    }
                })
                .collect();
            let header = match spec.kind {
                SourceKind::Dirac => "z,r,r2",
                SourceKind::Heaviside => "y,int_r,int_r2",
            };
            write(&path("sources.csv"), &csv(header, rows.iter().map(|r| r.map(num))), &mut files)?;
            summary.push("points", rows.len());
            Outcome::Sources(rows)
        }
    };

    summary.push("status", "ok");
    summary.push("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    write(&path("summary.txt"), &summary.to_text(), &mut files)?;
    Ok(Report { name: cfg.name.clone(), panel: panel.map(str::to_string), outcome, summary, files })
}

fn write(path: &Path, body: &str, files: &mut Vec<PathBuf>) -> Result<(), RunError> {
    write_atomic(path, body).map_err(at(format!("writing {}", path.display())))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn describe_trajectory(s: &mut Summary, prefix: &str, traj: &FrontTrajectory, verdict: Option<&PinningVerdict>) {
    if let Some(last) = traj.last() {
        s.push(&format!("{prefix}t_end"), num(last.t));
        s.push(&format!("{prefix}x0_final"), num(last.x0));
        s.push(&format!("{prefix}w_final"), num(last.w));
    }
    s.push(&format!("{prefix}max_fit_error"), num(traj.max_fit_error()));
    s.push(&format!("{prefix}pinned"), verdict.map_or("undecided".into(), |v| v.pinned.to_string()));
}

fn free_speed_and_extent(cfg: &ExperimentConfig, defect: &DefectSpec) -> frontlab::Result<(f64, f64)> {
    Ok((homogeneous_speed(defect.left_level(), cfg.params.a)?, defect.extent()))
}

/// Integrates the PDE from the configured kink and fits every sample.
/// Stops at the pinning verdict when `run.stop_when_decided` is set.
pub fn pde_trajectory(
    cfg: &ExperimentConfig,
    snapshots: Option<&Path>,
) -> Result<(FrontTrajectory, Option<PinningVerdict>), RunError> {
    let defect = cfg.defect();
    let init = cfg.initial_kink().map_err(at("initial state"))?;
    let u0 = FieldState::kink(cfg.grid, init.x0, init.w);
    let (free, extent) = free_speed_and_extent(cfg, &defect).map_err(at("pinning setup"))?;
    if let Some(dir) = snapshots {
        std::fs::create_dir_all(dir).map_err(|e| at("snapshot directory")(e.into()))?;
    }
    let sim = Simulation::new(&u0, &defect, &cfg.params, &cfg.solver).map_err(at("pde setup"))?;
    let mut tracker = FrontTracker::new();
    for (index, state) in sim.enumerate() {
        let state = state.map_err(at("pde integration"))?;
        if let Some(dir) = snapshots {
            state.write_snapshot(dir).map_err(at("snapshot"))?;
        }
        tracker
            .push(&state)
            .map_err(|e| Error::Snapshot { index, source: Box::new(e) })
            .map_err(at("kink fit"))?;
        if cfg.stop_when_decided && detect_pinning(tracker.trajectory(), free, extent).is_ok() {
            break;
        }
    }
    let traj = tracker.into_trajectory();
    let verdict = detect_pinning(&traj, free, extent).ok();
    Ok((traj, verdict))
}

/// Integrates the configured reduced model over `t_span` from `init`.
pub fn cv_trajectory(
    cfg: &ExperimentConfig,
    init: KinkState,
    t_span: f64,
) -> Result<(FrontTrajectory, Option<PinningVerdict>), RunError> {
    let kind = cfg.cv_kind().map_err(at("cv model"))?;
    let free = homogeneous_speed(kind.left_level(), cfg.params.a).map_err(at("pinning setup"))?;
    let extent = cfg.defect().extent();
    let solver = frontlab::SolverConfig { t_max: t_span, ..cfg.cv_solver };
    let mut traj = FrontTrajectory::new();
    for sample in CvSimulation::new(&kind, init, cfg.params.a, &solver).map_err(at("cv setup"))? {
        traj.push(sample.map_err(at("cv integration"))?).map_err(at("cv integration"))?;
        if cfg.stop_when_decided && detect_pinning(&traj, free, extent).is_ok() {
            break;
        }
    }
    let verdict = detect_pinning(&traj, free, extent).ok();
    Ok((traj, verdict))
}

fn point_config(cfg: &ExperimentConfig, param: &str, value: f64) -> frontlab::Result<ExperimentConfig> {
    cfg.with_value(param, value).map_err(|e| Error::InvalidParameter(format!("{param} = {value}: {e}")))
}

/// One bisection probe: runs until the verdict is decided.
fn probe(cfg: &ExperimentConfig, param: &str, value: f64, run: Runner) -> frontlab::Result<PinningVerdict> {
    let mut point = point_config(cfg, param, value)?;
    point.stop_when_decided = true;
    let (traj, verdict) = match run {
        Runner::Pde => pde_trajectory(&point, None),
        Runner::Cv => point.initial_kink().map_err(at("initial state")).and_then(|k| cv_trajectory(&point, k, point.solver.t_max)),
    }
    .map_err(|e| Error::InvalidParameter(format!("probe {param} = {value}: {e}")))?;
    verdict.ok_or_else(|| {
        let last = traj.last().copied();
        Error::Undecided { t: last.map_or(0.0, |s| s.t), x0: last.map_or(f64::NAN, |s| s.x0) }
    })
}

fn sweep_point(cfg: &ExperimentConfig, param: &str, value: f64, run: Runner) -> Result<PointResult, RunError> {
    let point = point_config(cfg, param, value).map_err(at("sweep point"))?;
    let (traj, verdict) = match run {
        Runner::Pde => pde_trajectory(&point, None)?,
        Runner::Cv => {
            let k = point.initial_kink().map_err(at("initial state"))?;
            cv_trajectory(&point, k, point.solver.t_max)?
        }
    };
    let last = *traj.last().expect("at least the initial sample");
    Ok(PointResult { verdict, x0_final: last.x0, w_final: last.w, t_end: last.t, max_fit_error: traj.max_fit_error() })
}

/// Point-mass equivalent of the varied amplitude, when it has one.
fn mass_equivalent(cfg: &ExperimentConfig, param: &str, value: f64) -> Option<f64> {
    match (cfg.defect(), param) {
        (DefectSpec::Gaussian { d, .. }, "defect.s1") => Some(value * (2.0 * std::f64::consts::PI * d).sqrt()),
        (DefectSpec::Tanh { s_l, .. }, "defect.s_r") => Some(value - s_l),
        (DefectSpec::Dirac { .. } | DefectSpec::Heaviside { .. }, "defect.beta") => Some(value),
        _ => None,
    }
}

/// Matches each interior PDE sample to the reduced-model curve at the same
/// position, by linear interpolation along the monotone part of the latter.
pub fn align(pde: &FrontTrajectory, cv: &FrontTrajectory) -> Vec<AlignedRow> {
    let mut curve: Vec<(f64, f64, f64)> = Vec::new();
    let cs = cv.samples();
    for i in 1..cs.len().saturating_sub(1) {
        let v = cv.speed_at(i).expect("interior");
        if curve.last().is_none_or(|p| cs[i].x0 > p.0) {
            curve.push((cs[i].x0, cs[i].w, v));
        }
    }
    if curve.len() < 2 {
        return Vec::new();
    }
    let (lo, hi) = (curve[0].0, curve[curve.len() - 1].0);
    let ps = pde.samples();
    (1..ps.len().saturating_sub(1))
        .filter(|&i| ps[i].x0 >= lo && ps[i].x0 <= hi)
        .map(|i| {
            let x = ps[i].x0;
            let j = curve.partition_point(|p| p.0 <= x).clamp(1, curve.len() - 1);
            let (p, q) = (curve[j - 1], curve[j]);
            let f = (x - p.0) / (q.0 - p.0);
            AlignedRow {
                x0: x,
                w_pde: ps[i].w,
                w_cv: p.1 + f * (q.1 - p.1),
                speed_pde: pde.speed_at(i).expect("interior"),
                speed_cv: p.2 + f * (q.2 - p.2),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use frontlab::TrajectorySample;

    fn line(x0: f64, c: f64, w: impl Fn(f64) -> f64, n: usize) -> FrontTrajectory {
        FrontTrajectory::from_samples(
            (0..n)
                .map(|i| {
                    let t = i as f64;
                    let x = x0 + c * t;
                    TrajectorySample { t, x0: x, w: w(x), fit_error: 0.0 }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn aligning_a_curve_with_itself_is_exact() {
        let a = line(-5.0, 0.5, |x| 2.0 + 0.1 * x, 21);
        let b = line(-5.0, 0.25, |x| 2.0 + 0.1 * x, 41);
        let rows = align(&a, &b);
        assert_eq!(rows.len(), 19);
        for r in rows {
            assert!((r.w_pde - r.w_cv).abs() < 1e-12);
            assert!((r.speed_pde - 0.5).abs() < 1e-12 && (r.speed_cv - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_outside_the_reduced_range_are_dropped() {
        let a = line(-5.0, 1.0, |_| 2.0, 11);
        let b = line(-2.0, 0.5, |_| 2.0, 5);
        let rows = align(&a, &b);
        assert!(rows.iter().all(|r| r.x0 >= -1.5 && r.x0 <= -0.5));
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn summary_text_is_ordered_key_value() {
        let mut s = Summary::default();
        s.push("b", 1);
        s.push("a", "x");
        assert_eq!(s.to_text(), "b=1\na=x\n");
        assert_eq!(s.get("a"), Some("x"));
    }
}
