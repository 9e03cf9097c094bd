//! Least-squares extraction of the collective coordinates `(x0, w)` from a
//! field snapshot, and the resulting front trajectories.
//!
//! The misfit is the mean squared residual against the logistic kink over
//! the cells where the *model* lies in `(0.01, 0.99)`; the mask moves with
//! the parameters. Minimization is Polak–Ribière conjugate gradient with an
//! exact line search on the directional derivative.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::output::{csv, num, write_atomic};
use crate::pde::{exact_kink, FieldState, Grid};

const WINDOW_LO: f64 = 0.01;
const WINDOW_HI: f64 = 0.99;
const MAX_ITERATIONS: usize = 200;
const E_TOL: f64 = 1e-14;
const GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkState {
    pub x0: f64,
    pub w: f64,
}

impl KinkState {
    pub fn new(x0: f64, w: f64) -> Result<Self> {
        if !(x0.is_finite() && w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!("kink state needs finite x0 and w > 0, got ({x0}, {w})")));
        }
        Ok(KinkState { x0, w })
    }
}

/// Misfit and its gradient with respect to `(x0, w)`; `None` when the window is empty.
fn misfit(grid: &Grid, u: &[f64], x0: f64, w: f64) -> Option<(f64, [f64; 2])> {
    if !(w > 0.0 && w.is_finite() && x0.is_finite()) {
        return None;
    }
    // model window in x is (x0 - w ln 99, x0 + w ln 99); widen by one cell and test exactly
    let half = w * (WINDOW_HI / WINDOW_LO).ln();
    let h = grid.h();
    let n = grid.n();
    let k_of = |x: f64| ((x - grid.x_min()) / h - 0.5).floor();
    let lo = k_of(x0 - half) - 1.0;
    let hi = k_of(x0 + half) + 2.0;
    if hi < 0.0 || lo > (n - 1) as f64 {
        return None;
    }
    let lo = lo.max(0.0) as usize;
    let hi = (hi.min((n - 1) as f64)) as usize;

    let mut count = 0usize;
    let (mut e, mut g0, mut g1) = (0.0, 0.0, 0.0);
    for k in lo..=hi {
        let x = grid.x(k);
        let uk = exact_kink(x, x0, w);
        if !(uk > WINDOW_LO && uk < WINDOW_HI) {
            continue;
        }
        let xi = (x - x0) / w;
        let r = u[k] - uk;
        let slope = uk * (1.0 - uk) / w; // d u_k / d x0
        e += r * r;
        g0 += r * slope;
        g1 += r * slope * xi;
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let m = count as f64;
    Some((e / m, [-2.0 * g0 / m, -2.0 * g1 / m]))
}

/// Mean squared residual over the model's 0.01–0.99 window.
pub fn fit_error(state: &FieldState, k: &KinkState) -> Result<f64> {
    if !(k.w > 0.0) {
        return Err(Error::Domain(format!("width must be positive, got {}", k.w)));
    }
    misfit(&state.grid, &state.u, k.x0, k.w)
        .map(|(e, _)| e)
        .ok_or_else(|| Error::FrontNotVisible(format!("no cell of the model kink at x0 = {} lies in the grid", k.x0)))
}

/// Analytic gradient of [`fit_error`] (mask held fixed).
pub fn fit_gradient(state: &FieldState, k: &KinkState) -> Result<[f64; 2]> {
    misfit(&state.grid, &state.u, k.x0, k.w)
        .map(|(_, g)| g)
        .ok_or_else(|| Error::FrontNotVisible("empty fit window".into()))
}

fn first_crossing(grid: &Grid, u: &[f64], level: f64) -> Option<f64> {
    u.windows(2).enumerate().find_map(|(k, pair)| {
        let (a, b) = (pair[0], pair[1]);
        (a >= level && b < level).then(|| {
            let frac = (a - level) / (a - b);
            grid.x(k) + frac * grid.h()
        })
    })
}

/// Kink estimate from the 0.75 and 0.25 level crossings.
pub fn initial_guess(state: &FieldState) -> Result<KinkState> {
    let x75 = first_crossing(&state.grid, &state.u, 0.75)
        .ok_or_else(|| Error::FrontNotVisible("field never crosses 0.75 downward".into()))?;
    let x25 = first_crossing(&state.grid, &state.u, 0.25)
        .ok_or_else(|| Error::FrontNotVisible("field never crosses 0.25 downward".into()))?;
    let w = (x25 - x75) / (2.0 * 3f64.ln());
    if !(w > 0.0) {
        return Err(Error::FrontNotVisible(format!(
            "0.25 crossing at {x25} is not right of the 0.75 crossing at {x75}"
        )));
    }
    Ok(KinkState { x0: 0.5 * (x75 + x25), w })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub kink: KinkState,
    pub error: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct LinePoint {
    t: f64,
    e: f64,
    slope: f64,
    grad: [f64; 2],
}

/// Minimizes `phi(t) = E(p + t d)` by bracketing a sign change of `phi'` and
/// refining with a safeguarded secant. Returns the best point found.
fn line_minimize(grid: &Grid, u: &[f64], p: [f64; 2], d: [f64; 2], e0: f64, slope0: f64, step0: f64) -> Option<LinePoint> {
    let eval = |t: f64| -> Option<LinePoint> {
        let (e, g) = misfit(grid, u, p[0] + t * d[0], p[1] + t * d[1])?;
        Some(LinePoint { t, e, slope: g[0] * d[0] + g[1] * d[1], grad: g })
    };
    let mut lo = LinePoint { t: 0.0, e: e0, slope: slope0, grad: [0.0; 2] };
    let mut best: Option<LinePoint> = None;
    let mut t = step0;
    let mut hi = None;
    for _ in 0..60 {
        match eval(t) {
            Some(pt) if pt.slope < 0.0 && pt.e <= lo.e => {
                t *= 2.0;
                lo = pt;
                best = Some(pt);
            }
            Some(pt) => {
                hi = Some(pt);
                break;
            }
            None => t = lo.t + 0.5 * (t - lo.t),
        }
    }
    let mut hi = match hi {
        Some(h) => h,
        None => return best,
    };
    // refine on [lo.t, hi.t], where slope(lo) < 0 and the right end has turned up
    for _ in 0..100 {
        let width = hi.t - lo.t;
        if width <= 1e-15 * hi.t.abs().max(1e-300) {
            break;
        }
        let mut t = if hi.slope > 0.0 {
            lo.t - lo.slope * width / (hi.slope - lo.slope)
        } else {
            lo.t + 0.5 * width
        };
        if !(t > lo.t + 0.01 * width && t < hi.t - 0.01 * width) {
            t = lo.t + 0.5 * width;
        }
        let pt = match eval(t) {
            Some(pt) => pt,
            None => {
                hi = LinePoint { t, e: f64::INFINITY, slope: f64::INFINITY, grad: [0.0; 2] };
                continue;
            }
        };
        if pt.slope == 0.0 {
            return Some(pt);
        }
        if pt.slope < 0.0 && pt.e <= lo.e {
            lo = pt;
        } else {
            hi = pt;
        }
    }
    let candidates = [Some(lo), Some(hi), best];
    candidates
        .into_iter()
        .flatten()
        .filter(|pt| pt.t > 0.0 && pt.e.is_finite())
        .min_by(|a, b| a.e.total_cmp(&b.e))
}

/// Polak–Ribière fit of the kink profile starting from `guess`.
pub fn fit(state: &FieldState, guess: KinkState) -> Result<FitOutcome> {
    let grid = &state.grid;
    let u = &state.u[..];
    let not_visible = || Error::FrontNotVisible(format!("empty fit window at x0 = {}", guess.x0));
    let mut p = [guess.x0, guess.w];
    let (mut e, mut g) = misfit(grid, u, p[0], p[1]).ok_or_else(not_visible)?;
    let mut d = [-g[0], -g[1]];
    let mut step_len = 0.1 * guess.w;

    for iteration in 1..=MAX_ITERATIONS {
        let gnorm = g[0].hypot(g[1]);
        if gnorm < GRAD_TOL {
            return Ok(FitOutcome { kink: KinkState { x0: p[0], w: p[1] }, error: e, iterations: iteration - 1 });
        }
        let mut slope = g[0] * d[0] + g[1] * d[1];
        if slope >= 0.0 {
            d = [-g[0], -g[1]];
            slope = -gnorm * gnorm;
        }
        let dnorm = d[0].hypot(d[1]);
        let pt = line_minimize(grid, u, p, d, e, slope, step_len / dnorm);
        let pt = match pt {
            Some(pt) if pt.e <= e => pt,
            // no descent along d: we are at the numerical floor of E
            _ => {
                return Ok(FitOutcome { kink: KinkState { x0: p[0], w: p[1] }, error: e, iterations: iteration });
            }
        };
        let p_new = [p[0] + pt.t * d[0], p[1] + pt.t * d[1]];
        step_len = (pt.t * dnorm).max(1e-12);
        let converged = 2.0 * (e - pt.e).abs() <= E_TOL * (e.abs() + pt.e.abs() + 1e-300);
        let g_new = pt.grad;
        let gg = g[0] * g[0] + g[1] * g[1];
        let beta = ((g_new[0] * (g_new[0] - g[0]) + g_new[1] * (g_new[1] - g[1])) / gg).max(0.0);
        d = [-g_new[0] + beta * d[0], -g_new[1] + beta * d[1]];
        p = p_new;
        e = pt.e;
        g = g_new;
        if converged {
            return Ok(FitOutcome { kink: KinkState { x0: p[0], w: p[1] }, error: e, iterations: iteration });
        }
    }
    Err(Error::FitNotConverged {
        iterations: MAX_ITERATIONS,
        best: KinkState { x0: p[0], w: p[1] },
        error: e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x0: f64,
    pub w: f64,
    pub fit_error: f64,
}

/// Time series of collective coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontTrajectory {
    samples: Vec<TrajectorySample>,
}

impl FrontTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<TrajectorySample>) -> Result<Self> {
        let mut traj = Self::new();
        for s in samples {
            traj.push(s)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, s: TrajectorySample) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(s.t > last.t) {
                return Err(Error::InvalidParameter(format!("times must increase: {} after {}", s.t, last.t)));
            }
        }
        if !(s.fit_error >= 0.0) || !(s.w > 0.0) || !s.x0.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid trajectory sample {s:?}")));
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Centered-difference speed at interior sample `i` (1 ≤ i ≤ len−2).
    pub fn speed_at(&self, i: usize) -> Option<f64> {
        if i == 0 || i + 1 >= self.samples.len() {
            return None;
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i + 1]);
        Some((b.x0 - a.x0) / (b.t - a.t))
    }

    /// Speeds at samples `1..len-1`; length `len - 2`.
    pub fn speeds(&self) -> Vec<f64> {
        (1..self.samples.len().saturating_sub(1)).filter_map(|i| self.speed_at(i)).collect()
    }

    pub fn max_fit_error(&self) -> f64 {
        self.samples.iter().map(|s| s.fit_error).fold(0.0, f64::max)
    }

    /// CSV with header `t,x0,w,speed,fit_error`; speed is empty at both ends.
    pub fn to_csv(&self) -> String {
        csv(
            "t,x0,w,speed,fit_error",
            self.samples.iter().enumerate().map(|(i, s)| {
                [
                    num(s.t),
                    num(s.x0),
                    num(s.w),
                    self.speed_at(i).map(num).unwrap_or_default(),
                    num(s.fit_error),
                ]
            }),
        )
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        write_atomic(path, &self.to_csv())
    }

    /// Reads the schema written by [`FrontTrajectory::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "t,x0,w,speed,fit_error" {
            return Err(Error::InvalidParameter(format!("unexpected trajectory header {header:?}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad number {s:?}")))
        };
        let mut traj = Self::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::InvalidParameter(format!("expected 5 columns in {line:?}")));
            }
            traj.push(TrajectorySample {
                t: parse(cols[0])?,
                x0: parse(cols[1])?,
                w: parse(cols[2])?,
                fit_error: parse(cols[4])?,
            })?;
        }
        Ok(traj)
    }
}

/// Incremental, warm-started fitter: the first snapshot uses [`initial_guess`],
/// every later one starts from the previous fit.
#[derive(Debug, Clone, Default)]
pub struct FrontTracker {
    trajectory: FrontTrajectory,
    last: Option<KinkState>,
}

impl FrontTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: &FieldState) -> Result<TrajectorySample> {
        let guess = match self.last {
            Some(k) => k,
            None => initial_guess(state)?,
        };
        let out = fit(state, guess)?;
        let sample = TrajectorySample { t: state.t, x0: out.kink.x0, w: out.kink.w, fit_error: out.error };
        self.trajectory.push(sample)?;
        self.last = Some(out.kink);
        Ok(sample)
    }

    pub fn trajectory(&self) -> &FrontTrajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> FrontTrajectory {
        self.trajectory
    }
}

/// Fits every snapshot, warm-starting along the sequence.
pub fn trajectory(states: &[FieldState]) -> Result<FrontTrajectory> {
    if states.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 snapshots, got {}", states.len())));
    }
    let mut tracker = FrontTracker::new();
    for (index, st) in states.iter().enumerate() {
        tracker.push(st).map_err(|e| Error::Snapshot { index, source: Box::new(e) })?;
    }
    Ok(tracker.into_trajectory())
}

/// Fits every snapshot from its own [`initial_guess`]; snapshots are independent,
/// so `exec` may fan them out.
pub fn trajectory_independent(states: &[FieldState], exec: Execution) -> Result<FrontTrajectory> {
    if states.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 snapshots, got {}", states.len())));
    }
    let indexed: Vec<(usize, &FieldState)> = states.iter().enumerate().collect();
    let samples = exec.try_map(&indexed, |&(index, st)| {
        initial_guess(st)
            .and_then(|g| fit(st, g))
            .map(|o| TrajectorySample { t: st.t, x0: o.kink.x0, w: o.kink.w, fit_error: o.error })
            .map_err(|e| Error::Snapshot { index, source: Box::new(e) })
    })?;
    FrontTrajectory::from_samples(samples)
}
