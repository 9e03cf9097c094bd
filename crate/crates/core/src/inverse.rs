//! Defect topography from an observed front trajectory, by inverting the
//! adiabatic position law `x0' = ((1 - 2a)/2) w s(x0)`.

use crate::defects::DefectSpec;
use crate::error::{Error, Result};
use crate::kinkfit::FrontTrajectory;
use crate::output::{csv, num, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct TopographyEstimate {
    /// `(x0, s_est)` sorted by `x0`.
    pub points: Vec<(f64, f64)>,
    pub a: f64,
    pub scheme: String,
    pub source: String,
    /// False when `x0(t)` was not strictly monotone: the adiabatic picture does not apply.
    pub monotone: bool,
}

impl TopographyEstimate {
    /// `x0,s_est` or `x0,s_est,s_true` when a truth profile is given.
    pub fn to_csv(&self, truth: Option<&DefectSpec>) -> Result<String> {
        match truth {
            None => Ok(csv("x0,s_est", self.points.iter().map(|&(x, s)| [num(x), num(s)]))),
            Some(t) => {
                let rows = self
                    .points
                    .iter()
                    .map(|&(x, s)| Ok([num(x), num(s), num(t.eval(x)?)]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(csv("x0,s_est,s_true", rows))
            }
        }
    }

    pub fn write_csv(&self, path: &std::path::Path, truth: Option<&DefectSpec>) -> Result<()> {
        write_atomic(path, &self.to_csv(truth)?)
    }
}

/// Pointwise estimate `s(x0_i) = 2/(1 - 2a) · x0'(t_i) / w(t_i)` with a
/// centered-difference speed; both trajectory ends are dropped.
pub fn reconstruct(traj: &FrontTrajectory, a: f64) -> Result<TopographyEstimate> {
    reconstruct_smoothed(traj, a, 1)
}

/// As [`reconstruct`], followed by a centered moving average of odd length
/// `window` over the estimates in time order (`window = 1` disables it).
pub fn reconstruct_smoothed(traj: &FrontTrajectory, a: f64, window: usize) -> Result<TopographyEstimate> {
    if (1.0 - 2.0 * a).abs() < 1e-12 {
        return Err(Error::Degenerate(format!("a = {a}: the free front is stationary")));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!("smoothing window must be odd, got {window}")));
    }
    let samples = traj.samples();
    if samples.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.w > 0.0)) {
        return Err(Error::Domain("trajectory contains non-positive widths".into()));
    }
    let factor = 2.0 / (1.0 - 2.0 * a);
    let mut pts: Vec<(f64, f64)> = (1..samples.len() - 1)
        .map(|i| (samples[i].x0, factor * traj.speed_at(i).expect("interior index") / samples[i].w))
        .collect();
    if window > 1 {
        let half = window / 2;
        let raw: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for (i, p) in pts.iter_mut().enumerate() {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(raw.len() - 1);
            p.1 = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        }
    }
    let increasing = samples.windows(2).all(|p| p[1].x0 > p[0].x0);
    let decreasing = samples.windows(2).all(|p| p[1].x0 < p[0].x0);
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(TopographyEstimate {
        points: pts,
        a,
        scheme: if window > 1 {
            format!("centered-difference+moving-average({window})")
        } else {
            "centered-difference".to_string()
        },
        source: String::new(),
        monotone: increasing || decreasing,
    })
}

/// Relative errors `(‖e‖∞ / ‖s‖∞, ‖e‖₂ / ‖s‖₂)` of the estimate against the true profile.
pub fn residual(est: &TopographyEstimate, truth: &DefectSpec) -> Result<(f64, f64)> {
    if !truth.is_pointwise() {
        return Err(Error::NotPointwiseEvaluable);
    }
    if est.points.is_empty() {
        return Err(Error::InvalidParameter("empty topography estimate".into()));
    }
    let (mut e_sup, mut s_sup, mut e2, mut s2) = (0.0f64, 0.0f64, 0.0, 0.0);
    for &(x, s_est) in &est.points {
        let s = truth.eval(x)?;
        let e = s_est - s;
        e_sup = e_sup.max(e.abs());
        s_sup = s_sup.max(s.abs());
        e2 += e * e;
        s2 += s * s;
    }
    Ok((e_sup / s_sup, (e2 / s2).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::{cv_solver_config, integrate_cv, CvModelKind};
    use crate::kinkfit::{KinkState, TrajectorySample};
    use crate::pde::{homogeneous_speed, homogeneous_width};

    fn homogeneous(s: f64, a: f64, n: usize) -> FrontTrajectory {
        let c = homogeneous_speed(s, a).unwrap();
        let w = homogeneous_width(s).unwrap();
        FrontTrajectory::from_samples(
            (0..n).map(|i| TrajectorySample { t: i as f64, x0: c * i as f64, w, fit_error: 0.0 }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_round_trip_is_exact() {
        let est = reconstruct(&homogeneous(0.3, 0.3, 50), 0.3).unwrap();
        assert_eq!(est.points.len(), 48);
        assert!(est.monotone);
        let (sup, l2) = residual(&est, &DefectSpec::Constant { s: 0.3 }).unwrap();
        assert!(sup < 1e-10 && l2 < 1e-10, "{sup} {l2}");
    }

    #[test]
    fn self_comparison_is_zero() {
        let truth = DefectSpec::Gaussian { s0: 0.6, s1: 0.3, d: 10.0 };
        let points = (-20..=20).map(|i| (i as f64, truth.eval(i as f64).unwrap())).collect();
        let est = TopographyEstimate { points, a: 0.3, scheme: "exact".into(), source: String::new(), monotone: true };
        assert_eq!(residual(&est, &truth).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn stalled_front_is_flagged() {
        let traj = FrontTrajectory::from_samples(
            (0..10)
                .map(|i| TrajectorySample { t: i as f64, x0: -2.7 + if i > 5 { 0.0 } else { 0.01 * i as f64 }, w: 1.8, fit_error: 0.0 })
                .collect(),
        )
        .unwrap();
        assert!(!reconstruct(&traj, 0.3).unwrap().monotone);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let traj = homogeneous(0.3, 0.3, 10);
        assert!(matches!(reconstruct(&traj, 0.5), Err(Error::Degenerate(_))));
        assert!(reconstruct_smoothed(&traj, 0.3, 2).is_err());
        let est = reconstruct(&traj, 0.3).unwrap();
        assert!(residual(&est, &DefectSpec::Dirac { alpha: 0.3, beta: 1.0 }).is_err());
    }

    #[test]
    fn inverts_the_adiabatic_model() {
        let truth = DefectSpec::Gaussian { s0: 0.6, s1: 0.3, d: 10.0 };
        let init = KinkState { x0: -20.0, w: homogeneous_width(0.6).unwrap() };
        let mut errs = Vec::new();
        for &dt in &[0.4, 0.2, 0.1] {
            let traj = integrate_cv(&CvModelKind::Adiabatic(truth), init, 0.3, &cv_solver_config(150.0, dt)).unwrap();
            let est = reconstruct(&traj, 0.3).unwrap();
            errs.push(residual(&est, &truth).unwrap().0);
        }
        // centered differences: error falls ~4x per halving of the sampling step
        assert!(errs[2] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn csv_with_truth_column() {
        let est = reconstruct(&homogeneous(0.3, 0.3, 4), 0.3).unwrap();
        let body = est.to_csv(Some(&DefectSpec::Constant { s: 0.3 })).unwrap();
        assert!(body.starts_with("x0,s_est,s_true\n"));
        assert_eq!(body.lines().count(), 3);
    }
}
