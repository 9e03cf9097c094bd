//! Localized defect profiles `s(x)` multiplying the reaction term.
//!
//! All smooth variants are centered at `x = 0`. The Gaussian keeps the
//! `exp(-x^2 / (2d))` parametrization, so `d` has units of length squared.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefectSpec {
    Constant { s: f64 },
    Gaussian { s0: f64, s1: f64, d: f64 },
    Tanh { s_l: f64, s_r: f64, d: f64 },
    /// `alpha + beta * delta(x)`.
    Dirac { alpha: f64, beta: f64 },
    /// `alpha + beta * H(x)`.
    Heaviside { alpha: f64, beta: f64 },
}

/// `H(0) = 1/2`.
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

impl DefectSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DefectSpec::Constant { .. } => "constant",
            DefectSpec::Gaussian { .. } => "gaussian",
            DefectSpec::Tanh { .. } => "tanh",
            DefectSpec::Dirac { .. } => "dirac",
            DefectSpec::Heaviside { .. } => "heaviside",
        }
    }

    pub fn is_pointwise(&self) -> bool {
        !matches!(self, DefectSpec::Dirac { .. })
    }

    /// Checks the parameter ranges of the variant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let finite = |v: f64| v.is_finite();
        match *self {
            DefectSpec::Constant { s } => {
                if !(finite(s) && s > 0.0) {
                    return bad(format!("constant defect needs s > 0, got {s}"));
                }
            }
            DefectSpec::Gaussian { s0, s1, d } => {
                if !(finite(s0) && s0 > 0.0) {
                    return bad(format!("gaussian defect needs s0 > 0, got {s0}"));
                }
                if !finite(s1) {
                    return bad("gaussian amplitude s1 must be finite".into());
                }
                if !(finite(d) && d > 0.0) {
                    return bad(format!("gaussian defect needs d > 0, got {d}"));
                }
            }
            DefectSpec::Tanh { s_l, s_r, d } => {
                if !(finite(s_l) && s_l > 0.0 && finite(s_r) && s_r > 0.0) {
                    return bad(format!("tanh levels must be positive, got {s_l}, {s_r}"));
                }
                if !(finite(d) && d > 0.0) {
                    return bad(format!("tanh defect needs d > 0, got {d}"));
                }
            }
            DefectSpec::Dirac { alpha, beta } => {
                if !(finite(alpha) && alpha > 0.0 && finite(beta)) {
                    return bad(format!("dirac defect needs alpha > 0, got {alpha}"));
                }
            }
            DefectSpec::Heaviside { alpha, beta } => {
                if !(finite(alpha) && alpha > 0.0 && finite(beta) && alpha + beta > 0.0) {
                    return bad(format!(
                        "heaviside defect needs alpha > 0 and alpha + beta > 0, got {alpha}, {beta}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Pointwise value `s(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            DefectSpec::Constant { s } => s,
            DefectSpec::Gaussian { s0, s1, d } => s0 + s1 * (-x * x / (2.0 * d)).exp(),
            DefectSpec::Tanh { s_l, s_r, d } => s_l + 0.5 * (s_r - s_l) * (1.0 + (x / d).tanh()),
            DefectSpec::Heaviside { alpha, beta } => alpha + beta * heaviside(x),
            DefectSpec::Dirac { .. } => return Err(Error::NotPointwiseEvaluable),
        })
    }

    /// Closed-form `s'(x)` for the smooth variants.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        match *self {
            DefectSpec::Constant { .. } => Ok(0.0),
            DefectSpec::Gaussian { s1, d, .. } => Ok(-s1 * x / d * (-x * x / (2.0 * d)).exp()),
            DefectSpec::Tanh { s_l, s_r, d } => {
                let sech = 1.0 / (x / d).cosh();
                Ok((s_r - s_l) / (2.0 * d) * sech * sech)
            }
            DefectSpec::Dirac { .. } => Err(Error::NotPointwiseEvaluable),
            DefectSpec::Heaviside { .. } => Err(Error::Domain(
                "heaviside defect has no pointwise derivative".into(),
            )),
        }
    }

    /// Far-field value to the left of the defect.
    pub fn left_level(&self) -> f64 {
        match *self {
            DefectSpec::Constant { s } => s,
            DefectSpec::Gaussian { s0, .. } => s0,
            DefectSpec::Tanh { s_l, .. } => s_l,
            DefectSpec::Dirac { alpha, .. } | DefectSpec::Heaviside { alpha, .. } => alpha,
        }
    }

    /// Characteristic length of the inhomogeneity (zero for sharp or absent defects).
    pub fn extent(&self) -> f64 {
        match *self {
            DefectSpec::Gaussian { d, .. } => d.sqrt(),
            DefectSpec::Tanh { d, .. } => d,
            _ => 0.0,
        }
    }
}

/// Replaces a Gaussian bump by a point mass of equal integral.
pub fn dirac_equivalent(g: &DefectSpec) -> Result<DefectSpec> {
    match *g {
        DefectSpec::Gaussian { s0, s1, d } => Ok(DefectSpec::Dirac {
            alpha: s0,
            beta: s1 * (2.0 * PI * d).sqrt(),
        }),
        other => Err(Error::WrongDefectKind {
            expected: "gaussian",
            found: other.kind_name(),
        }),
    }
}

/// Inverse of [`dirac_equivalent`]: the Gaussian amplitude carrying mass `beta` at scale `d`.
pub fn gaussian_amplitude_for_mass(beta: f64, d: f64) -> f64 {
    beta / (2.0 * PI * d).sqrt()
}

/// Replaces a tanh transition by a sharp step between the same levels.
pub fn heaviside_equivalent(t: &DefectSpec) -> Result<DefectSpec> {
    match *t {
        DefectSpec::Tanh { s_l, s_r, .. } => Ok(DefectSpec::Heaviside {
            alpha: s_l,
            beta: s_r - s_l,
        }),
        other => Err(Error::WrongDefectKind {
            expected: "tanh",
            found: other.kind_name(),
        }),
    }
}
