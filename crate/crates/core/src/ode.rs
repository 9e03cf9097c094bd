//! Dormand–Prince 5(4) with FSAL, PI step-size control and the classic
//! 4th-order continuous extension used for output at sampling times.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// step-size controller (Hairer & Wanner defaults)
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// A Dormand–Prince integrator holding the current state and the dense
/// output of the last accepted step.
pub struct Dopri5<F> {
    f: F,
    tol: Tolerances,
    h_min: f64,
    t: f64,
    h: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    y_new: Vec<f64>,
    y_stage: Vec<f64>,
    // last accepted step spans [t_old, t]; until the next step, y_new holds its
    // start value and k[6] its first stage, which is all the dense output needs
    t_old: f64,
    h_old: f64,
    fac_old: f64,
    last_rejected: bool,
    stats: StepStats,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    /// `h_min` is the step below which the integration is declared stiff.
    pub fn new(mut f: F, t0: f64, y0: Vec<f64>, h0: f64, h_min: f64, tol: Tolerances) -> Result<Self> {
        if !(tol.rtol > 0.0 && tol.atol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial step must be positive, got {h0}")));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t0 });
        }
        let n = y0.len();
        let zeros = || vec![0.0; n];
        let mut k = [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()];
        f(t0, &y0, &mut k[0]);
        Ok(Dopri5 {
            f,
            tol,
            h_min,
            t: t0,
            h: h0,
            y: y0,
            k,
            y_new: zeros(),
            y_stage: zeros(),
            t_old: t0,
            h_old: 0.0,
            fac_old: 1e-4,
            last_rejected: false,
            stats: StepStats { evaluations: 1, ..Default::default() },
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// `y_stage = y + h Σ a_j k_j` in a single pass.
    fn stage<const M: usize>(&mut self, coeffs: [(usize, f64); M], h: f64) {
        let n = self.y.len();
        let ks: [&[f64]; M] = coeffs.map(|(j, _)| &self.k[j][..n]);
        let ha: [f64; M] = coeffs.map(|(_, a)| h * a);
        let (y, out) = (&self.y[..n], &mut self.y_stage[..n]);
        for i in 0..n {
            let mut acc = 0.0;
            for m in 0..M {
                acc += ha[m] * ks[m][i];
            }
            out[i] = y[i] + acc;
        }
    }

    /// Attempts steps until one is accepted. Returns the scaled error norm of the accepted step.
    pub fn step(&mut self) -> Result<f64> {
        loop {
            let h = self.h;
            let t = self.t;
            if h < self.h_min {
                return Err(Error::StiffFailure { t, h });
            }

            self.stage([(0, A21)], h);
            (self.f)(t + C2 * h, &self.y_stage, &mut self.k[1]);
            self.stage([(0, A31), (1, A32)], h);
            (self.f)(t + C3 * h, &self.y_stage, &mut self.k[2]);
            self.stage([(0, A41), (1, A42), (2, A43)], h);
            (self.f)(t + C4 * h, &self.y_stage, &mut self.k[3]);
            self.stage([(0, A51), (1, A52), (2, A53), (3, A54)], h);
            (self.f)(t + C5 * h, &self.y_stage, &mut self.k[4]);
            self.stage([(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
            (self.f)(t + h, &self.y_stage, &mut self.k[5]);
            self.stage([(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], h);
            std::mem::swap(&mut self.y_new, &mut self.y_stage);
            (self.f)(t + h, &self.y_new, &mut self.k[6]);
            self.stats.evaluations += 6;

            let n = self.y.len();
            let (k1, k3, k4, k5, k6, k7) =
                (&self.k[0][..n], &self.k[2][..n], &self.k[3][..n], &self.k[4][..n], &self.k[5][..n], &self.k[6][..n]);
            let (y, y_new) = (&self.y[..n], &self.y_new[..n]);
            let (atol, rtol) = (self.tol.atol, self.tol.rtol);
            let mut acc = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let r = e / (atol + rtol * y[i].abs().max(y_new[i].abs()));
                acc += r * r;
            }
            // a non-finite state always yields a non-finite norm
            let finite = acc.is_finite();
            if !finite {
                // a blown-up stage may still be an over-long step; retry smaller first
                if h * 0.1 >= self.h_min {
                    self.h = h * 0.1;
                    self.last_rejected = true;
                    self.stats.rejected += 1;
                    continue;
                }
                return Err(Error::Divergence { t });
            }
            let err = (acc / n.max(1) as f64).sqrt();

            let fac11 = err.powf(0.2 - BETA * 0.75);
            if err <= 1.0 {
                let mut fac = fac11 / self.fac_old.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.fac_old = err.max(1e-4);
                self.t_old = t;
                self.h_old = h;
                self.t = t + h;
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.h = h_new;
                self.last_rejected = false;
                self.stats.accepted += 1;
                return Ok(err);
            }
            self.h = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            self.last_rejected = true;
            self.stats.rejected += 1;
        }
    }

    /// Dense output inside the last accepted step.
    fn interpolate(&self, t: f64, out: &mut [f64]) {
        if self.h_old == 0.0 || t == self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        let h = self.h_old;
        let theta = (t - self.t_old) / h;
        let theta1 = 1.0 - theta;
        let k = &self.k;
        // after an accepted step k[6] is its first stage and k[0] its last
        for i in 0..out.len() {
            let y0 = self.y_new[i];
            let ydiff = self.y[i] - y0;
            let bspl = h * k[6][i] - ydiff;
            let c3 = ydiff - h * k[0][i] - bspl;
            let c4 = h * (D1 * k[6][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[0][i]);
            out[i] = y0 + theta * (ydiff + theta1 * (bspl + theta * (c3 + theta1 * c4)));
        }
    }

    /// Integrates until the solution at `t_target` is available and writes it into `out`.
    pub fn advance_to(&mut self, t_target: f64, out: &mut [f64]) -> Result<()> {
        while self.t < t_target {
            self.step()?;
        }
        if t_target < self.t_old && self.h_old > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "output time {t_target} precedes the current step [{}, {}]",
                self.t_old, self.t
            )));
        }
        self.interpolate(t_target, out);
        Ok(())
    }
}

/// Sampling times `0, dt, 2 dt, ...` up to and including `t_max` (within rounding).
pub fn output_times(t0: f64, t_max: f64, dt_out: f64) -> Vec<f64> {
    let steps = ((t_max - t0) / dt_out + 1e-9).floor() as usize;
    (0..=steps).map(|i| t0 + i as f64 * dt_out).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol(v: f64) -> Tolerances {
        Tolerances { rtol: v, atol: v }
    }

    #[test]
    fn exponential_decay_at_sampling_times() {
        let mut s = Dopri5::new(|_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0], 0.0, vec![1.0], 1e-3, 1e-14, tol(1e-10)).unwrap();
        let mut out = [0.0];
        for &t in &output_times(0.0, 5.0, 0.25) {
            s.advance_to(t, &mut out).unwrap();
            assert_relative_eq!(out[0], (-t).exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_keeps_phase() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut s = Dopri5::new(f, 0.0, vec![1.0, 0.0], 1e-2, 1e-14, tol(1e-11)).unwrap();
        let mut out = [0.0; 2];
        s.advance_to(20.0, &mut out).unwrap();
        assert!((out[0] - 20f64.cos()).abs() < 1e-8);
        assert!((out[1] + 20f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn accepted_error_never_exceeds_one() {
        let f = |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = (3.0 * t).cos() * y[0];
        let mut s = Dopri5::new(f, 0.0, vec![1.0], 0.5, 1e-14, tol(1e-7)).unwrap();
        while s.t() < 10.0 {
            let err = s.step().unwrap();
            assert!(err <= 1.0);
        }
        assert!(s.stats().rejected > 0 || s.stats().accepted > 10);
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        // y' = y on a single long step; interpolate inside it
        let mut s = Dopri5::new(|_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0], 0.0, vec![1.0], 0.05, 1e-14, tol(1e-3)).unwrap();
        s.step().unwrap();
        let t_end = s.t();
        let mut out = [0.0];
        s.advance_to(0.5 * t_end, &mut out).unwrap();
        assert!((out[0] - (0.5 * t_end).exp()).abs() < 1e-7);
    }

    #[test]
    fn blowup_is_reported_as_stiff_or_divergent() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let mut s = Dopri5::new(f, 0.0, vec![1.0], 1e-3, 1e-10, tol(1e-8)).unwrap();
        let mut out = [0.0];
        let err = s.advance_to(2.0, &mut out).unwrap_err();
        assert!(matches!(err, Error::StiffFailure { .. } | Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn output_grid_includes_endpoint() {
        let ts = output_times(0.0, 1.0, 0.1);
        assert_eq!(ts.len(), 11);
        assert!((ts[10] - 1.0).abs() < 1e-12);
    }
}
