//! Method-of-lines solver for `u_t = u_xx + s(x) u (1 - u) (u - a)`.
//!
//! Space is split into `n` cells of width `h` with centers
//! `x_k = x_min + h/2 + k h`; the 3-point Laplacian is used in the interior
//! and one-sided zero-flux stencils in the two boundary cells. Time is
//! advanced by [`crate::ode::Dopri5`].

use std::path::Path;

use crate::defects::DefectSpec;
use crate::error::{Error, Result};
use crate::ode::{output_times, Dopri5, Tolerances};
use crate::output::{csv, format_sig, num, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidParameter(format!(
                "grid needs x_max > x_min, got [{x_min}, {x_max}]"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("grid too small: n = {n} < 3")));
        }
        Ok(Grid { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    /// Center of cell `k` (zero-based).
    pub fn x(&self, k: usize) -> f64 {
        let h = self.h();
        self.x_min + 0.5 * h + k as f64 * h
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { x_min: -100.0, x_max: 100.0, n: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionParams {
    pub a: f64,
}

impl ReactionParams {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("a must lie in (0, 1), got {a}")));
        }
        Ok(ReactionParams { a })
    }
}

impl Default for ReactionParams {
    fn default() -> Self {
        ReactionParams { a: 0.3 }
    }
}

/// Bistable cubic `u (1 - u) (u - a)`.
#[inline]
pub fn reaction(u: f64, a: f64) -> f64 {
    u * (1.0 - u) * (u - a)
}

/// Decreasing logistic front `1 / (1 + exp((x - x0)/w))`.
#[inline]
pub fn exact_kink(x: f64, x0: f64, w: f64) -> f64 {
    let z = ((x - x0) / w).clamp(-700.0, 700.0);
    1.0 / (1.0 + z.exp())
}

/// Free speed of the decreasing kink in a homogeneous medium (positive = rightward).
pub fn homogeneous_speed(s: f64, a: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("rate scale must be positive, got {s}")));
    }
    Ok((s / 2.0).sqrt() * (1.0 - 2.0 * a))
}

pub fn homogeneous_width(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("rate scale must be positive, got {s}")));
    }
    Ok((2.0 / s).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    pub t: f64,
    pub u: Vec<f64>,
}

impl FieldState {
    pub fn new(grid: Grid, t: f64, u: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for {} cells",
                u.len(),
                grid.n()
            )));
        }
        Ok(FieldState { grid, t, u })
    }

    pub fn kink(grid: Grid, x0: f64, w: f64) -> Self {
        let u = (0..grid.n()).map(|k| exact_kink(grid.x(k), x0, w)).collect();
        FieldState { grid, t: 0.0, u }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        FieldState { grid, t: 0.0, u: vec![value; grid.n()] }
    }

    /// CSV body with header `x,u`.
    pub fn to_csv(&self) -> String {
        csv(
            "x,u",
            self.u
                .iter()
                .enumerate()
                .map(|(k, &u)| [num(self.grid.x(k)), num(u)]),
        )
    }

    /// Writes `field_t<time>.csv` into `dir` and returns its path.
    pub fn write_snapshot(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(snapshot_file_name(self.t));
        write_atomic(&path, &self.to_csv())?;
        Ok(path)
    }
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("field_t{}.csv", format_sig(t, 6))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub dt_out: f64,
    pub dt_init: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.rtol, self.atol, self.t_max, self.dt_out, self.dt_init]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::InvalidParameter(format!("solver settings must be positive: {self:?}")));
        }
        if self.dt_out > self.t_max {
            return Err(Error::InvalidParameter(format!(
                "dt_out = {} exceeds t_max = {}",
                self.dt_out, self.t_max
            )));
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rtol: 1e-8, atol: 1e-8, t_max: 200.0, dt_out: 1.0, dt_init: 1e-4 }
    }
}

/// Semi-discrete operator with the defect sampled at cell centers.
#[derive(Debug, Clone)]
pub struct Discretization {
    inv_h2: f64,
    a: f64,
    s: Vec<f64>,
}

impl Discretization {
    pub fn new(grid: &Grid, defect: &DefectSpec, params: &ReactionParams) -> Result<Self> {
        if !defect.is_pointwise() {
            return Err(Error::NotPointwiseEvaluable);
        }
        let s = (0..grid.n()).map(|k| defect.eval(grid.x(k))).collect::<Result<Vec<_>>>()?;
        let h = grid.h();
        Ok(Discretization { inv_h2: 1.0 / (h * h), a: params.a, s })
    }

    pub fn apply(&self, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        let (c, a, s) = (self.inv_h2, self.a, &self.s[..]);
        du[0] = c * (u[1] - u[0]) + s[0] * reaction(u[0], a);
        let (u, du, s) = (&u[..n], &mut du[..n], &s[..n]);
        for k in 1..n - 1 {
            du[k] = c * (u[k - 1] + u[k + 1] - 2.0 * u[k]) + s[k] * reaction(u[k], a);
        }
        du[n - 1] = c * (u[n - 2] - u[n - 1]) + s[n - 1] * reaction(u[n - 1], a);
    }
}

/// Time derivative of every cell.
pub fn rhs(state: &FieldState, defect: &DefectSpec, params: &ReactionParams) -> Result<Vec<f64>> {
    let disc = Discretization::new(&state.grid, defect, params)?;
    let mut du = vec![0.0; state.u.len()];
    disc.apply(&state.u, &mut du);
    Ok(du)
}

type BoxedRhs = Box<dyn FnMut(f64, &[f64], &mut [f64]) + Send>;

/// Streaming integration: yields the field at `t0, t0 + dt_out, ...` up to `t_max`.
pub struct Simulation {
    grid: Grid,
    solver: Dopri5<BoxedRhs>,
    times: Vec<f64>,
    next: usize,
}

impl Simulation {
    pub fn new(u0: &FieldState, defect: &DefectSpec, params: &ReactionParams, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let disc = Discretization::new(&u0.grid, defect, params)?;
        let f: BoxedRhs = Box::new(move |_t, u, du| disc.apply(u, du));
        let t_end = u0.t + cfg.t_max;
        let solver = Dopri5::new(f, u0.t, u0.u.clone(), cfg.dt_init, 1e-14 * cfg.t_max, cfg.tolerances())?;
        Ok(Simulation {
            grid: u0.grid,
            solver,
            times: output_times(u0.t, t_end, cfg.dt_out),
            next: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn stats(&self) -> crate::ode::StepStats {
        self.solver.stats()
    }
}

impl Iterator for Simulation {
    type Item = Result<FieldState>;

    fn next(&mut self) -> Option<Self::Item> {
        let &t = self.times.get(self.next)?;
        self.next += 1;
        let mut u = vec![0.0; self.grid.n()];
        Some(match self.solver.advance_to(t, &mut u) {
            Ok(()) => Ok(FieldState { grid: self.grid, t, u }),
            Err(e) => {
                self.next = self.times.len();
                Err(e)
            }
        })
    }
}

/// Full integration collecting every sampled state.
pub fn integrate(
    u0: &FieldState,
    defect: &DefectSpec,
    params: &ReactionParams,
    cfg: &SolverConfig,
) -> Result<Vec<FieldState>> {
    Simulation::new(u0, defect, params, cfg)?.collect()
}

/// Trapezoidal quadrature of `s(x_k) R(u_k)` over the cell centers, without orientation checks.
pub fn speed_quadrature(state: &FieldState, defect: &DefectSpec, params: &ReactionParams) -> Result<f64> {
    let g = &state.grid;
    let n = g.n();
    let mut acc = 0.0;
    for k in 0..n {
        let v = defect.eval(g.x(k))? * reaction(state.u[k], params.a);
        acc += if k == 0 || k == n - 1 { 0.5 * v } else { v };
    }
    Ok(acc * g.h())
}

/// Front speed `c = ∫ s(x) R(u) dx` for a front going from 1 (left) to 0 (right).
pub fn speed_functional(state: &FieldState, defect: &DefectSpec, params: &ReactionParams) -> Result<f64> {
    let (first, last) = (state.u[0], state.u[state.u.len() - 1]);
    if (first - 1.0).abs() > 0.1 || last.abs() > 0.1 {
        return Err(Error::FrontNotContained(format!(
            "boundary values u_1 = {first}, u_n = {last}"
        )));
    }
    speed_quadrature(state, defect, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reaction_values() {
        assert_eq!(reaction(0.0, 0.3), 0.0);
        assert_eq!(reaction(1.0, 0.3), 0.0);
        assert_eq!(reaction(0.3, 0.3), 0.0);
        assert_relative_eq!(reaction(0.5, 0.3), 0.05, epsilon = 1e-16);
        assert_relative_eq!(reaction(0.1, 0.3), -0.018, epsilon = 1e-16);
    }

    #[test]
    fn kink_values() {
        assert_eq!(exact_kink(3.0, 3.0, 2.0), 0.5);
        assert_relative_eq!(exact_kink(1.5 * 3f64.ln(), 0.0, 1.5), 0.25, epsilon = 1e-15);
        assert_eq!(exact_kink(1e6, 0.0, 1.0), 1.0 / (1.0 + 700f64.exp()));
        assert!(exact_kink(1e6, 0.0, 1.0) < 1e-300);
        assert_eq!(exact_kink(-1e6, 0.0, 1.0), 1.0);
    }

    #[test]
    fn homogeneous_front_constants() {
        assert_relative_eq!(homogeneous_speed(2.0, 0.3).unwrap(), 0.4, epsilon = 1e-15);
        assert_relative_eq!(homogeneous_width(2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(homogeneous_speed(0.3, 0.5).unwrap(), 0.0);
        assert_relative_eq!(homogeneous_speed(0.3, 0.3).unwrap(), 0.154919333848, epsilon = 1e-11);
        assert_relative_eq!(homogeneous_width(0.3).unwrap(), 2.581988897472, epsilon = 1e-11);
        assert!(homogeneous_speed(0.0, 0.3).is_err());
        assert!(homogeneous_width(-1.0).is_err());
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.centers(), vec![-0.75, -0.25, 0.25, 0.75]);
        assert!(Grid::new(0.0, 1.0, 2).is_err());
        assert!(Grid::new(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let grid = Grid::new(-10.0, 10.0, 200).unwrap();
        let p = ReactionParams::default();
        let defects = [
            DefectSpec::Constant { s: 0.3 },
            DefectSpec::Gaussian { s0: 0.3, s1: 7.0, d: 0.3 },
            DefectSpec::Tanh { s_l: 0.3, s_r: 8.0, d: 0.1 },
        ];
        for d in defects {
            for v in [0.0, 1.0, p.a] {
                let du = rhs(&FieldState::constant(grid, v), &d, &p).unwrap();
                assert!(du.iter().all(|x| x.abs() < 1e-15), "{d:?} at {v}");
            }
        }
    }

    #[test]
    fn rhs_rejects_dirac() {
        let grid = Grid::new(-1.0, 1.0, 10).unwrap();
        let r = rhs(&FieldState::constant(grid, 0.0), &DefectSpec::Dirac { alpha: 0.3, beta: 1.0 }, &ReactionParams::default());
        assert_eq!(r, Err(Error::NotPointwiseEvaluable));
    }

    #[test]
    fn boundary_stencils_are_zero_flux() {
        let grid = Grid::new(0.0, 1.0, 4).unwrap();
        let st = FieldState::new(grid, 0.0, vec![0.0, 1.0, 3.0, 6.0]).unwrap();
        // a = 0.5 with s = 0 isolates the Laplacian; Constant requires s > 0, so use a tiny one
        let du = rhs(&st, &DefectSpec::Constant { s: 1e-300 }, &ReactionParams { a: 0.5 }).unwrap();
        let inv_h2 = 16.0;
        assert_relative_eq!(du[0], inv_h2 * 1.0);
        assert_relative_eq!(du[1], inv_h2 * 1.0);
        assert_relative_eq!(du[2], inv_h2 * 1.0);
        assert_relative_eq!(du[3], -inv_h2 * 3.0);
        // conservation of the discrete Laplacian part
        assert!(du.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn kink_rhs_is_a_translation() {
        // for the exact traveling wave, u_t = -c u_x with u_x = -u(1-u)/w
        let (s, a) = (0.3, 0.3);
        let w = homogeneous_width(s).unwrap();
        let c = homogeneous_speed(s, a).unwrap();
        let mut errs = Vec::new();
        for &n in &[400usize, 800, 1600] {
            let grid = Grid::new(-20.0, 20.0, n).unwrap();
            let st = FieldState::kink(grid, 0.0, w);
            let du = rhs(&st, &DefectSpec::Constant { s }, &ReactionParams { a }).unwrap();
            let err = (1..n - 1)
                .map(|k| {
                    let u = st.u[k];
                    let expected = c * u * (1.0 - u) / w;
                    (du[k] - expected).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // second order: each halving of h divides the error by ~4
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((3.6..4.4).contains(&ratio), "ratio {ratio}, errs {errs:?}");
        }
    }

    #[test]
    fn zero_field_stays_zero() {
        let grid = Grid::new(-10.0, 10.0, 100).unwrap();
        let cfg = SolverConfig { t_max: 5.0, dt_out: 1.0, ..Default::default() };
        let out = integrate(&FieldState::constant(grid, 0.0), &DefectSpec::Gaussian { s0: 0.3, s1: 7.0, d: 0.3 }, &ReactionParams::default(), &cfg).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|s| s.u.iter().all(|&v| v == 0.0)));
        assert_eq!(out[5].t, 5.0);
    }

    #[test]
    fn speed_functional_of_equilibrium_kink() {
        let (s, a) = (0.3, 0.3);
        let w = homogeneous_width(s).unwrap();
        let grid = Grid::new(-60.0, 60.0, 4800).unwrap();
        let st = FieldState::kink(grid, 0.0, w);
        let c = speed_functional(&st, &DefectSpec::Constant { s }, &ReactionParams { a }).unwrap();
        assert_relative_eq!(c, homogeneous_speed(s, a).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn speed_functional_zero_field_and_orientation() {
        let grid = Grid::new(-10.0, 10.0, 100).unwrap();
        let zero = FieldState::constant(grid, 0.0);
        let d = DefectSpec::Constant { s: 0.3 };
        let p = ReactionParams::default();
        assert_eq!(speed_quadrature(&zero, &d, &p).unwrap(), 0.0);
        assert!(matches!(speed_functional(&zero, &d, &p), Err(Error::FrontNotContained(_))));
    }

    #[test]
    fn snapshot_csv_layout() {
        let grid = Grid::new(0.0, 1.0, 4).unwrap();
        let mut st = FieldState::constant(grid, 0.5);
        st.t = 12.5;
        assert_eq!(snapshot_file_name(st.t), "field_t12.5.csv");
        let body = st.to_csv();
        assert!(body.starts_with("x,u\n0.125,0.5\n"));
        assert_eq!(body.lines().count(), 5);
    }
}
