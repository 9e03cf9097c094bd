//! Pinning of the front on a defect: the closed-form threshold of the Dirac
//! reduction, a trajectory-based pinning detector, and a bisection driver
//! that locates the critical amplitude for any family of runs.

use crate::cv::{CvModelKind, CvSimulation};
use crate::defects::DefectSpec;
use crate::error::{Error, Result};
use crate::kinkfit::{FrontTracker, FrontTrajectory};
use crate::pde::{homogeneous_speed, FieldState, ReactionParams, Simulation, SolverConfig};

/// Stall threshold relative to the free speed.
pub const STALL_FRACTION: f64 = 1e-4;
/// Length of the trailing window over which the front must stay stalled.
pub const STALL_WINDOW: f64 = 50.0;
/// Distances are measured in units of `max(w, defect extent)`.
pub const PASS_DISTANCE: f64 = 10.0;
pub const BISECTION_RTOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinningAnalysis {
    pub a: f64,
    pub alpha: f64,
    pub r: f64,
    pub z_min: f64,
    pub min_r: f64,
    pub beta_c: f64,
    pub x0_pin: f64,
    pub w_pin: f64,
}

/// Critical Dirac strength and the stall state of the front for `0 < a < 1/2`.
pub fn analyze(a: f64, alpha: f64) -> Result<PinningAnalysis> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::FrontNotRightward(a));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let r = (1.0 - a + a * a).sqrt();
    let z_min = ((1.0 + r) / a).ln();
    let min_r = -a * a * (1.0 + r) * (a + r) / (1.0 + a + r).powi(3);
    let shape = (1.0 + 3.0 * (1.0 - 2.0 * a) * (1.0 - a + r) / (1.0 + a + r)).sqrt();
    let w_pin = (2.0 / alpha).sqrt() / shape;
    let x0_pin = -w_pin * z_min;
    let beta_c =
        (alpha / 2.0).sqrt() * (1.0 - 2.0 * a) * (1.0 + a + r).powi(3) / (a * a * (1.0 + r) * (a + r) * shape);
    Ok(PinningAnalysis { a, alpha, r, z_min, min_r, beta_c, x0_pin, w_pin })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinningVerdict {
    pub pinned: bool,
    pub x0_final: f64,
    pub w_final: f64,
    pub t_decided: f64,
}

/// Decides whether the front in `traj` has pinned on a defect centered at 0.
///
/// Pinned: `|x0'| < 1e-4 · free_speed` at every interior sample of the last
/// 50 time units, with the front within 10 widths of the defect. Not pinned:
/// the front is more than `10 · max(w, defect_extent)` past the defect.
pub fn detect_pinning(traj: &FrontTrajectory, free_speed: f64, defect_extent: f64) -> Result<PinningVerdict> {
    let samples = traj.samples();
    let last = samples.last().ok_or_else(|| Error::Undecided { t: 0.0, x0: f64::NAN })?;
    let verdict = |pinned| PinningVerdict { pinned, x0_final: last.x0, w_final: last.w, t_decided: last.t };

    if last.x0 > PASS_DISTANCE * last.w.max(defect_extent) {
        return Ok(verdict(false));
    }
    let n = samples.len();
    if n >= 3 && last.x0.abs() <= PASS_DISTANCE * last.w {
        let t_end = samples[n - 2].t;
        let first_interior = samples[1].t;
        if t_end - first_interior >= STALL_WINDOW {
            let limit = STALL_FRACTION * free_speed.abs();
            let stalled = (1..n - 1)
                .rev()
                .take_while(|&i| samples[i].t >= t_end - STALL_WINDOW)
                .all(|i| traj.speed_at(i).is_some_and(|v| v.abs() < limit));
            if stalled {
                return Ok(verdict(true));
            }
        }
    }
    Err(Error::Undecided { t: last.t, x0: last.x0 })
}

fn free_speed_for(left_level: f64, a: f64) -> Result<f64> {
    homogeneous_speed(left_level, a)
}

/// Integrates the PDE, fitting every snapshot, until the pinning verdict is
/// decided or `cfg.t_max` is reached.
pub fn decide_pde(
    u0: &FieldState,
    defect: &DefectSpec,
    params: &ReactionParams,
    cfg: &SolverConfig,
) -> Result<(PinningVerdict, FrontTrajectory)> {
    let free = free_speed_for(defect.left_level(), params.a)?;
    let extent = defect.extent();
    let mut tracker = FrontTracker::new();
    for (index, state) in Simulation::new(u0, defect, params, cfg)?.enumerate() {
        let state = state?;
        tracker.push(&state).map_err(|e| Error::Snapshot { index, source: Box::new(e) })?;
        if let Ok(v) = detect_pinning(tracker.trajectory(), free, extent) {
            return Ok((v, tracker.into_trajectory()));
        }
    }
    let traj = tracker.into_trajectory();
    let v = detect_pinning(&traj, free, extent)?;
    Ok((v, traj))
}

/// Same as [`decide_pde`] for a reduced model.
pub fn decide_cv(
    kind: &CvModelKind,
    init: crate::kinkfit::KinkState,
    a: f64,
    cfg: &SolverConfig,
) -> Result<(PinningVerdict, FrontTrajectory)> {
    let free = free_speed_for(kind.left_level(), a)?;
    let extent = match kind {
        CvModelKind::General(d) | CvModelKind::Adiabatic(d) | CvModelKind::AdiabaticTaylor(d) => d.extent(),
        _ => 0.0,
    };
    let mut traj = FrontTrajectory::new();
    for sample in CvSimulation::new(kind, init, a, cfg)? {
        traj.push(sample?)?;
        if let Ok(v) = detect_pinning(&traj, free, extent) {
            return Ok((v, traj));
        }
    }
    let v = detect_pinning(&traj, free, extent)?;
    Ok((v, traj))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    /// Midpoint of the final bracket.
    pub threshold: f64,
    pub lo: f64,
    pub hi: f64,
    /// Every probe in evaluation order.
    pub probes: Vec<(f64, PinningVerdict)>,
}

/// Bisection on the amplitude until the bracket is narrower than 1% of its midpoint.
///
/// `run` maps an amplitude to a verdict; the two ends must disagree.
pub fn find_threshold<F>(mut run: F, lo: f64, hi: f64) -> Result<ThresholdSearch>
where
    F: FnMut(f64) -> Result<PinningVerdict>,
{
    let mut probes = Vec::new();
    let v_lo = run(lo)?;
    probes.push((lo, v_lo));
    let v_hi = run(hi)?;
    probes.push((hi, v_hi));
    if v_lo.pinned == v_hi.pinned {
        return Err(Error::NoSignChange { pinned: v_lo.pinned });
    }
    let lo_pinned = v_lo.pinned;
    let (mut lo, mut hi) = (lo, hi);
    while (hi - lo).abs() > BISECTION_RTOL * (0.5 * (lo + hi)).abs() {
        let mid = 0.5 * (lo + hi);
        let v = run(mid)?;
        probes.push((mid, v));
        if v.pinned == lo_pinned {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdSearch { threshold: 0.5 * (lo + hi), lo, hi, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::{cv_rhs, cv_solver_config, source_r};
    use crate::kinkfit::{KinkState, TrajectorySample};
    use crate::pde::homogeneous_width;
    use approx::assert_relative_eq;

    /// Golden-section search, independent of the closed forms.
    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while (b - a).abs() > 1e-13 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        let x = 0.5 * (a + b);
        (x, f(x))
    }

    #[test]
    fn published_threshold_values() {
        let p = analyze(0.3, 0.3).unwrap();
        assert!((p.beta_c - 5.88).abs() < 0.01, "{p:?}");
        assert!((p.x0_pin + 3.47).abs() < 0.01, "{p:?}");
        assert!((p.w_pin - 1.89).abs() < 0.01, "{p:?}");
        assert_relative_eq!(p.min_r, -0.019272, epsilon = 1e-6);
        assert_relative_eq!(p.z_min, 1.8400, epsilon = 1e-4);
    }

    #[test]
    fn closed_forms_match_numerical_minimum() {
        for &a in &[0.1, 0.2, 0.3, 0.4, 0.45] {
            let p = analyze(a, 0.3).unwrap();
            let (z, v) = golden_min(|z| source_r(z, a), 0.0, 10.0);
            assert!((v - p.min_r).abs() < 1e-10, "a = {a}: {v} vs {}", p.min_r);
            // the minimum is flat, so the argmin is only determined to ~sqrt(eps)
            assert!((z - p.z_min).abs() < 1e-6, "a = {a}: {z} vs {}", p.z_min);
        }
    }

    #[test]
    fn balance_identity_and_invariants() {
        for &a in &[0.05, 0.2, 0.3, 0.49] {
            for &alpha in &[0.1, 0.3, 2.0] {
                let p = analyze(a, alpha).unwrap();
                let balance = alpha * p.w_pin * (1.0 - 2.0 * a) / 2.0 + p.beta_c * p.min_r;
                assert!(balance.abs() < 1e-12);
                assert!(p.r > 3f64.sqrt() / 2.0 && p.r < 1.0);
                assert!(p.min_r < 0.0 && p.w_pin > 0.0 && p.x0_pin < 0.0 && p.beta_c > 0.0);
                let scaled = analyze(a, 4.0 * alpha).unwrap();
                assert!((scaled.beta_c - 2.0 * p.beta_c).abs() < 1e-12 * p.beta_c);
            }
        }
        assert!(matches!(analyze(0.5, 0.3), Err(Error::FrontNotRightward(_))));
        assert!(analyze(0.3, 0.0).is_err());
    }

    #[test]
    fn analytic_stall_point_balances_position_equation() {
        let p = analyze(0.3, 0.3).unwrap();
        let kind = CvModelKind::DiracModel { alpha: 0.3, beta: p.beta_c };
        let (dx, dw) = cv_rhs(&kind, &KinkState { x0: p.x0_pin, w: p.w_pin }, 0.3).unwrap();
        assert!(dx.abs() < 1e-12, "x0' = {dx}");
        // reported only: the width equation is not exactly balanced there
        eprintln!("w' at analytic pinning state: {dw:e}");
    }

    fn synthetic(points: impl Fn(f64) -> (f64, f64), t_end: f64) -> FrontTrajectory {
        FrontTrajectory::from_samples(
            (0..=(t_end as usize))
                .map(|i| {
                    let t = i as f64;
                    let (x0, w) = points(t);
                    TrajectorySample { t, x0, w, fit_error: 0.0 }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn detector_rules() {
        let c = 0.155;
        let moving = synthetic(|t| (-20.0 + c * t, 2.58), 300.0);
        let v = detect_pinning(&moving, c, 0.5).unwrap();
        assert!(!v.pinned);
        let stopped = synthetic(|t| (-2.7 + 1e-3 * (-t).exp(), 1.8), 120.0);
        let v = detect_pinning(&stopped, c, 0.5).unwrap();
        assert!(v.pinned && (v.x0_final + 2.7).abs() < 1e-9);
        let short = synthetic(|_| (-2.7, 1.8), 30.0);
        assert!(matches!(detect_pinning(&short, c, 0.5), Err(Error::Undecided { .. })));
        let far_stall = synthetic(|_| (-60.0, 1.8), 120.0);
        assert!(detect_pinning(&far_stall, c, 0.5).is_err());
    }

    #[test]
    fn dirac_without_mass_is_not_pinned() {
        let init = KinkState { x0: -20.0, w: homogeneous_width(0.3).unwrap() };
        let (v, _) = decide_cv(&CvModelKind::DiracModel { alpha: 0.3, beta: 0.0 }, init, 0.3, &cv_solver_config(1000.0, 0.5)).unwrap();
        assert!(!v.pinned);
    }

    #[test]
    fn strong_dirac_pins() {
        let init = KinkState { x0: -20.0, w: homogeneous_width(0.3).unwrap() };
        let kind = CvModelKind::DiracModel { alpha: 0.3, beta: 6.18 * 1.05 };
        let (v, traj) = decide_cv(&kind, init, 0.3, &cv_solver_config(2000.0, 0.5)).unwrap();
        assert!(v.pinned, "{v:?}");
        assert!(traj.speeds().last().unwrap().abs() < STALL_FRACTION * 0.155);
        // the verdict state is a genuine rest point: continuing for much longer barely moves it
        let from = KinkState { x0: v.x0_final, w: v.w_final };
        let rest = crate::cv::integrate_cv(&kind, from, 0.3, &cv_solver_config(2000.0, 10.0)).unwrap();
        let end = rest.last().unwrap();
        assert!((end.x0 - v.x0_final).abs() < 0.05, "{end:?} vs {v:?}");
        assert!(rest.speeds().last().unwrap().abs() < 1e-8);
        assert!(end.x0 < 0.0);
    }

    #[test]
    fn bisection_on_a_step_function() {
        let verdict = |pinned| PinningVerdict { pinned, x0_final: 0.0, w_final: 1.0, t_decided: 0.0 };
        let s = find_threshold(|amp| Ok(verdict(amp >= 6.2)), 1.0, 12.0).unwrap();
        assert!((s.threshold - 6.2).abs() <= 0.01 * 6.2);
        assert!(s.hi - s.lo <= 0.01 * s.threshold);
        let err = find_threshold(|_| Ok(verdict(true)), 1.0, 2.0).unwrap_err();
        assert_eq!(err, Error::NoSignChange { pinned: true });
    }
}
