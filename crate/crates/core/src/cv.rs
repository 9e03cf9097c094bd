//! Collective-variable models for the front position `x0` and width `w`.
//!
//! With the logistic ansatz `U(z) = 1/(1 + e^z)`, `z = (x - x0)/w`, the two
//! balance laws (the equation itself and the equation multiplied by `u`)
//! give
//!
//! ```text
//! x0' = w ∫ s(wz + x0) R(U) dz
//! w'  = 1/(3w) + w ∫ s(wz + x0) (1 - 2U) R(U) dz
//! ```
//!
//! which is evaluated by quadrature for smooth defects and in closed form for
//! the adiabatic, Dirac and Heaviside reductions.

use crate::defects::DefectSpec;
use crate::error::{Error, Result};
use crate::kinkfit::{FrontTrajectory, KinkState, TrajectorySample};
use crate::ode::{output_times, Dopri5};
use crate::pde::{exact_kink, SolverConfig};
use crate::quad;

/// Truncation of the `z` integrals; the integrands decay like `e^{-|z|}`.
pub const Z_CUTOFF: f64 = 40.0;
pub const QUAD_ABS_TOL: f64 = 1e-10;

/// Integrals of the logistic profile that enter the reduced equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentConstants {
    /// ∫ U' dz
    pub u_prime: f64,
    /// ∫ z U' dz
    pub z_u_prime: f64,
    /// ∫ U U' dz
    pub u_u_prime: f64,
    /// ∫ z U U' dz
    pub z_u_u_prime: f64,
    /// ∫ U'^2 dz
    pub u_prime_sq: f64,
}

impl MomentConstants {
    pub const LOGISTIC: MomentConstants = MomentConstants {
        u_prime: -1.0,
        z_u_prime: 0.0,
        u_u_prime: -0.5,
        z_u_u_prime: 0.5,
        u_prime_sq: 1.0 / 6.0,
    };
}

/// Logistic profile `U(z)`.
#[inline]
pub fn profile(z: f64) -> f64 {
    exact_kink(z, 0.0, 1.0)
}

/// `R(U(z)) = -e^z (-1 + a + a e^z) / (1 + e^z)^3`, evaluated without overflow.
pub fn source_r(z: f64, a: f64) -> f64 {
    let z = z.clamp(-700.0, 700.0);
    if z <= 0.0 {
        let e = z.exp();
        -e * (-1.0 + a + a * e) / (1.0 + e).powi(3)
    } else {
        let m = (-z).exp();
        -m * ((-1.0 + a) * m + a) / (1.0 + m).powi(3)
    }
}

/// `(1 - 2U(z)) R(U(z)) = e^z (1 - e^z)(-1 + a + a e^z) / (1 + e^z)^4`, evaluated without overflow.
pub fn source_r2(z: f64, a: f64) -> f64 {
    let z = z.clamp(-700.0, 700.0);
    if z <= 0.0 {
        let e = z.exp();
        e * (1.0 - e) * (-1.0 + a + a * e) / (1.0 + e).powi(4)
    } else {
        let m = (-z).exp();
        m * (m - 1.0) * ((-1.0 + a) * m + a) / (1.0 + m).powi(4)
    }
}

/// `∫_y^∞ R(U(z)) dz = 1/(2(1+e^y)^2) - a/(1+e^y)`.
pub fn heaviside_source_1(y: f64, a: f64) -> f64 {
    let q = profile(y);
    0.5 * q * q - a * q
}

/// `∫_y^∞ (1 - 2U) R(U) dz = -2/(3(1+e^y)^3) + (1+2a)/(2(1+e^y)^2) - a/(1+e^y)`.
pub fn heaviside_source_2(y: f64, a: f64) -> f64 {
    let q = profile(y);
    -2.0 / 3.0 * q * q * q + 0.5 * (1.0 + 2.0 * a) * q * q - a * q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvModelKind {
    /// Full quadrature of the source integrals.
    General(DefectSpec),
    /// `s(wz + x0) ≈ s(x0)`.
    Adiabatic(DefectSpec),
    /// `s(wz + x0) ≈ s(x0) + wz s'(x0)`.
    AdiabaticTaylor(DefectSpec),
    DiracModel { alpha: f64, beta: f64 },
    HeavisideModel { alpha: f64, beta: f64 },
}

impl CvModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            CvModelKind::General(_) => "general",
            CvModelKind::Adiabatic(_) => "adiabatic",
            CvModelKind::AdiabaticTaylor(_) => "taylor",
            CvModelKind::DiracModel { .. } => "dirac",
            CvModelKind::HeavisideModel { .. } => "heaviside",
        }
    }

    /// Builds the model of the given name for a defect; the sharp models take
    /// their `(alpha, beta)` from a Dirac/Heaviside spec or its smooth equivalent.
    pub fn for_defect(name: &str, defect: &DefectSpec) -> Result<Self> {
        let kind = match name {
            "general" => CvModelKind::General(*defect),
            "adiabatic" => CvModelKind::Adiabatic(*defect),
            "taylor" => CvModelKind::AdiabaticTaylor(*defect),
            "dirac" => match *defect {
                DefectSpec::Dirac { alpha, beta } => CvModelKind::DiracModel { alpha, beta },
                DefectSpec::Gaussian { .. } => match crate::defects::dirac_equivalent(defect)? {
                    DefectSpec::Dirac { alpha, beta } => CvModelKind::DiracModel { alpha, beta },
                    _ => unreachable!(),
                },
                other => {
                    return Err(Error::WrongDefectKind { expected: "dirac or gaussian", found: other.kind_name() })
                }
            },
            "heaviside" => match *defect {
                DefectSpec::Heaviside { alpha, beta } => CvModelKind::HeavisideModel { alpha, beta },
                DefectSpec::Tanh { .. } => match crate::defects::heaviside_equivalent(defect)? {
                    DefectSpec::Heaviside { alpha, beta } => CvModelKind::HeavisideModel { alpha, beta },
                    _ => unreachable!(),
                },
                other => {
                    return Err(Error::WrongDefectKind { expected: "heaviside or tanh", found: other.kind_name() })
                }
            },
            other => return Err(Error::InvalidParameter(format!("unknown collective-variable model {other:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CvModelKind::General(d) | CvModelKind::Adiabatic(d) => {
                if !d.is_pointwise() {
                    return Err(Error::InvalidParameter(format!(
                        "{} model rejects Dirac defects (use the dirac model)",
                        self.name()
                    )));
                }
                d.validate()
            }
            CvModelKind::AdiabaticTaylor(d) => {
                if !matches!(d, DefectSpec::Constant { .. } | DefectSpec::Gaussian { .. } | DefectSpec::Tanh { .. }) {
                    return Err(Error::InvalidParameter(format!(
                        "taylor model needs a closed-form derivative; {} has none",
                        d.kind_name()
                    )));
                }
                d.validate()
            }
            CvModelKind::DiracModel { alpha, beta } => DefectSpec::Dirac { alpha: *alpha, beta: *beta }.validate(),
            CvModelKind::HeavisideModel { alpha, beta } => {
                DefectSpec::Heaviside { alpha: *alpha, beta: *beta }.validate()
            }
        }
    }

    /// Baseline rate scale felt by the front far to the left.
    pub fn left_level(&self) -> f64 {
        match self {
            CvModelKind::General(d) | CvModelKind::Adiabatic(d) | CvModelKind::AdiabaticTaylor(d) => d.left_level(),
            CvModelKind::DiracModel { alpha, .. } | CvModelKind::HeavisideModel { alpha, .. } => *alpha,
        }
    }
}

/// The two source integrals `∫ s(wz+x0) R dz` and `∫ s(wz+x0) (1-2U) R dz`.
pub fn source_integrals(defect: &DefectSpec, state: &KinkState, a: f64) -> Result<(f64, f64)> {
    if !defect.is_pointwise() {
        return Err(Error::NotPointwiseEvaluable);
    }
    let (x0, w) = (state.x0, state.w);
    // evaluation cannot fail for pointwise variants
    let s = |z: f64| defect.eval(w * z + x0).unwrap_or(f64::NAN);
    let first = quad::integrate(|z| s(z) * source_r(z, a), -Z_CUTOFF, Z_CUTOFF, QUAD_ABS_TOL, 0.0);
    let second = quad::integrate(|z| s(z) * source_r2(z, a), -Z_CUTOFF, Z_CUTOFF, QUAD_ABS_TOL, 0.0);
    Ok((first.value, second.value))
}

fn check_width(state: &KinkState) -> Result<()> {
    if !(state.w > 0.0 && state.w.is_finite()) {
        return Err(Error::Domain(format!("width must be positive, got {}", state.w)));
    }
    Ok(())
}

/// Time derivatives `(x0', w')` of the reduced model.
pub fn cv_rhs(kind: &CvModelKind, state: &KinkState, a: f64) -> Result<(f64, f64)> {
    check_width(state)?;
    let (x0, w) = (state.x0, state.w);
    let half_gap = 0.5 * (1.0 - 2.0 * a);
    let relax = 1.0 / (3.0 * w);
    match kind {
        CvModelKind::General(defect) => {
            if !defect.is_pointwise() {
                return Err(Error::InvalidParameter("general model rejects Dirac defects (use the dirac model)".into()));
            }
            let (i1, i2) = source_integrals(defect, state, a)?;
            Ok((w * i1, relax + w * i2))
        }
        CvModelKind::Adiabatic(defect) => {
            let s = defect.eval(x0)?;
            Ok((half_gap * w * s, relax - w / 6.0 * s))
        }
        CvModelKind::AdiabaticTaylor(defect) => {
            let s = defect.eval(x0)?;
            let ds = defect.derivative(x0)?;
            let w2 = w * w;
            Ok((
                half_gap * w * s - 0.5 * w2 * ds,
                relax - w / 6.0 * s + (1.0 - 2.0 * a) * 0.5 * w2 * ds,
            ))
        }
        CvModelKind::DiracModel { alpha, beta } => {
            let y = -x0 / w;
            Ok((
                alpha * w * half_gap + beta * source_r(y, a),
                relax - alpha * w / 6.0 + beta * source_r2(y, a),
            ))
        }
        CvModelKind::HeavisideModel { alpha, beta } => {
            let y = -x0 / w;
            Ok((
                alpha * w * half_gap + beta * w * heaviside_source_1(y, a),
                relax - alpha * w / 6.0 + beta * w * heaviside_source_2(y, a),
            ))
        }
    }
}

/// The general model assembled from the two moment balances and solved as a
/// 2×2 linear system, keeping `∫ s U R dz` rather than `∫ s (1-2U) R dz`.
pub fn general_rhs_from_moments(defect: &DefectSpec, state: &KinkState, a: f64, m: &MomentConstants) -> Result<(f64, f64)> {
    check_width(state)?;
    if !defect.is_pointwise() {
        return Err(Error::NotPointwiseEvaluable);
    }
    let (x0, w) = (state.x0, state.w);
    let s = |z: f64| defect.eval(w * z + x0).unwrap_or(f64::NAN);
    let i_r = quad::integrate(|z| s(z) * source_r(z, a), -Z_CUTOFF, Z_CUTOFF, QUAD_ABS_TOL, 0.0).value;
    let i_ur = quad::integrate(|z| s(z) * profile(z) * source_r(z, a), -Z_CUTOFF, Z_CUTOFF, QUAD_ABS_TOL, 0.0).value;
    // [m.u_prime      m.z_u_prime  ] [x0']   [-w i_r                  ]
    // [m.u_u_prime    m.z_u_u_prime] [w' ] = [m.u_prime_sq / w - w i_ur]
    let (a11, a12, a21, a22) = (m.u_prime, m.z_u_prime, m.u_u_prime, m.z_u_u_prime);
    let (b1, b2) = (-w * i_r, m.u_prime_sq / w - w * i_ur);
    let det = a11 * a22 - a12 * a21;
    if det == 0.0 {
        return Err(Error::Degenerate("singular moment system".into()));
    }
    Ok(((b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det))
}

type BoxedRhs = Box<dyn FnMut(f64, &[f64], &mut [f64]) + Send>;

/// Default settings for the reduced models: tighter than the PDE.
pub fn cv_solver_config(t_max: f64, dt_out: f64) -> SolverConfig {
    SolverConfig { rtol: 1e-10, atol: 1e-10, t_max, dt_out, dt_init: 1e-3 }
}

/// Streaming integration of a reduced model, yielding samples at `dt_out` spacing.
pub struct CvSimulation {
    solver: Dopri5<BoxedRhs>,
    times: Vec<f64>,
    next: usize,
}

impl CvSimulation {
    pub fn new(kind: &CvModelKind, init: KinkState, a: f64, cfg: &SolverConfig) -> Result<Self> {
        Self::starting_at(kind, init, 0.0, a, cfg)
    }

    pub fn starting_at(kind: &CvModelKind, init: KinkState, t0: f64, a: f64, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        kind.validate()?;
        check_width(&init)?;
        let kind = *kind;
        let f: BoxedRhs = Box::new(move |_t, y, dy| {
            match cv_rhs(&kind, &KinkState { x0: y[0], w: y[1] }, a) {
                Ok((dx, dw)) => {
                    dy[0] = dx;
                    dy[1] = dw;
                }
                // collapse of the width: poison the step so the integrator reports it
                Err(_) => {
                    dy[0] = f64::NAN;
                    dy[1] = f64::NAN;
                }
            }
        });
        let solver = Dopri5::new(f, t0, vec![init.x0, init.w], cfg.dt_init, 1e-14 * cfg.t_max, cfg.tolerances())?;
        Ok(CvSimulation { solver, times: output_times(t0, t0 + cfg.t_max, cfg.dt_out), next: 0 })
    }
}

impl Iterator for CvSimulation {
    type Item = Result<TrajectorySample>;

    fn next(&mut self) -> Option<Self::Item> {
        let &t = self.times.get(self.next)?;
        self.next += 1;
        let mut y = [0.0; 2];
        Some(match self.solver.advance_to(t, &mut y) {
            Ok(()) => Ok(TrajectorySample { t, x0: y[0], w: y[1], fit_error: 0.0 }),
            Err(e) => {
                self.next = self.times.len();
                Err(e)
            }
        })
    }
}

/// Integrates a reduced model; the `fit_error` column is zero.
pub fn integrate_cv(kind: &CvModelKind, init: KinkState, a: f64, cfg: &SolverConfig) -> Result<FrontTrajectory> {
    let samples = CvSimulation::new(kind, init, a, cfg)?.collect::<Result<Vec<_>>>()?;
    FrontTrajectory::from_samples(samples)
}
