//! Finite-sample values of the quantities that the flat-spectrum quasiconvexity
//! argument is built on.
//!
//! The asymptotic hypotheses (bounded mean squared residual, bounded `||theta_hat||`,
//! `nu_max = O(N^-p)` with `p > 1/2`, and a positive leading coefficient) cannot be
//! decided from one problem. [`assumption_report`] returns the numbers; a decay rate
//! is only available from a family of problems indexed by `N` ([`family_slope`]).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loocv::{xi_coefficients, LoocvEvaluator, XiTerms, FLAT_SPECTRUM_TOL};
use crate::model::{LeastSquaresFit, SvdForm};
use crate::stats::{loglog_fit, LineFit};
use crate::util::lin_space;

pub const SINGLE_INSTANCE_NOTE: &str = "single problem instance: asymptotic conditions \
(growth or decay in N) cannot be assessed; values are finite-sample numbers only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub n: usize,
    pub d: usize,
    /// `(1/N) sum e_n^2`.
    pub a1_value: f64,
    /// `||theta_hat||`.
    pub a2_value: f64,
    pub a3_numax: f64,
    /// `||theta_hat||^2 - sum nu_n ((u_n^T theta_hat)^2 + 2 e_n^2)`.
    pub a4_value: f64,
    /// `sum (1 - nu_n) e_n u_n^T theta_hat`.
    pub cross_term: f64,
    /// `sum e_n u_n^T theta_hat`, zero up to rounding.
    pub residual_projection_sum: f64,
    /// `-sum (1/(1-nu_n)^3 - 1) nu_n e_n^2`.
    pub delta0: f64,
    /// `-(1/(1-nu_max)^3 - 1) nu_max sum e_n^2`, never above `delta0`.
    pub delta0_bound: f64,
    pub flat_spectrum: bool,
    /// Summed quadratic coefficients; only for a flat spectrum.
    pub xi_sums: Option<XiTerms>,
    pub lambda_q: Option<f64>,
    pub lambda_q2: Option<f64>,
    pub note: String,
}

pub fn assumption_report(svd: &SvdForm, y: &DVector<f64>) -> AssumptionReport {
    let fit = LeastSquaresFit::compute(svd, y);
    let n = svd.n();
    let e = &fit.residuals;
    let m = &fit.projections;
    let nu = &svd.nu;
    let nu_max = svd.nu_max();
    let theta2 = m.norm_squared();

    let mut a4 = theta2;
    let mut cross = 0.0;
    let mut proj_sum = 0.0;
    let mut delta0 = 0.0;
    for i in 0..n {
        a4 -= nu[i] * (m[i] * m[i] + 2.0 * e[i] * e[i]);
        cross += (1.0 - nu[i]) * e[i] * m[i];
        proj_sum += e[i] * m[i];
        delta0 -= ((1.0 - nu[i]).powi(-3) - 1.0) * nu[i] * e[i] * e[i];
    }
    let delta0_bound = -((1.0 - nu_max).powi(-3) - 1.0) * nu_max * e.norm_squared();

    let flat = svd.flatness_deviation() <= FLAT_SPECTRUM_TOL;
    let xi_sums = xi_coefficients(svd, y).ok().map(|x| x.sums);
    AssumptionReport {
        n,
        d: svd.d(),
        a1_value: e.norm_squared() / n as f64,
        a2_value: theta2.sqrt(),
        a3_numax: nu_max,
        a4_value: a4,
        cross_term: cross,
        residual_projection_sum: proj_sum,
        delta0,
        delta0_bound,
        flat_spectrum: flat,
        lambda_q: xi_sums.as_ref().and_then(|s| lambda_q(s).ok()),
        lambda_q2: xi_sums.as_ref().and_then(|s| lambda_q2(s).ok()),
        xi_sums,
        note: SINGLE_INSTANCE_NOTE.to_string(),
    }
}

/// Largest positive root of `a x^2 + b x + c`.
fn largest_positive_root(a: f64, b: f64, c: f64) -> Result<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Err(Error::NoPositiveRoot);
    }
    let roots: Vec<f64> = if a.abs() <= 1e-14 * scale {
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(Error::NoPositiveRoot);
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            vec![0.0]
        } else {
            vec![q / a, c / q]
        }
    };
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r > 0.0)
        .max_by(f64::total_cmp)
        .ok_or(Error::NoPositiveRoot)
}

/// Positive root of the summed first-derivative quadratic `xi1 l^2 + xi2 l + xi3`.
pub fn lambda_q(sums: &XiTerms) -> Result<f64> {
    largest_positive_root(sums.xi1, sums.xi2, sums.xi3)
}

/// Positive root of the summed second-derivative quadratic `a l^2 + b l + c`.
pub fn lambda_q2(sums: &XiTerms) -> Result<f64> {
    largest_positive_root(sums.a, sums.b, sums.c)
}

/// Extra room past `lambda_Q` checked by default. The second-derivative quadratic's
/// root sits near `1/2` when residuals and leverages are small, so a margin of 1
/// would step past it even on well-behaved problems.
pub const CERTIFICATE_MARGIN: f64 = 0.25;
/// Range used when there is no positive `lambda_Q`.
pub const CERTIFICATE_FALLBACK_RANGE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `L'' > 0` at every checked point.
    pub holds: bool,
    /// Minimum of `L''` over the checked points.
    pub margin: f64,
    pub argmin_lambda: f64,
    pub lambda_range: f64,
    pub lambda_q: Option<f64>,
    pub points: usize,
}

/// Checks `L'' > 0` on `points` evenly spaced values in `[0, lambda_range]`. Without
/// a range, `lambda_Q + 0.25` is used (or `1` if `lambda_Q` does not exist).
pub fn second_deriv_certificate(
    svd: &SvdForm,
    y: &DVector<f64>,
    lambda_range: Option<f64>,
    points: usize,
) -> Result<Certificate> {
    let xi = xi_coefficients(svd, y)?;
    let lq = lambda_q(&xi.sums).ok();
    let range = lambda_range.unwrap_or(match lq {
        Some(l) => l + CERTIFICATE_MARGIN,
        None => CERTIFICATE_FALLBACK_RANGE,
    });
    if !(range > 0.0) || points < 2 {
        return Err(Error::invalid(
            "certificate needs a positive range and two points",
        ));
    }
    let eval = LoocvEvaluator::new(svd, y);
    let mut margin = f64::INFINITY;
    let mut argmin = 0.0;
    for l in lin_space(0.0, range, points) {
        let h = eval.eval(l)?.hess;
        if h < margin {
            margin = h;
            argmin = l;
        }
    }
    Ok(Certificate {
        holds: margin > 0.0,
        margin,
        argmin_lambda: argmin,
        lambda_range: range,
        lambda_q: lq,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySlope {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub fit: LineFit,
}

/// Log-log decay fit of a per-`N` statistic such as `nu_max`.
pub fn family_slope(ns: &[usize], values: &[f64]) -> FamilySlope {
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    FamilySlope {
        ns: ns.to_vec(),
        values: values.to_vec(),
        fit: loglog_fit(&x, values),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_root_examples() {
        let s = XiTerms {
            xi1: 1.0,
            xi2: 0.0,
            xi3: -1.0,
            ..XiTerms::default()
        };
        assert!((lambda_q(&s).unwrap() - 1.0).abs() < 1e-15);
        let none = XiTerms {
            xi1: 1.0,
            xi2: 2.0,
            xi3: 0.0,
            ..XiTerms::default()
        };
        assert!(matches!(lambda_q(&none), Err(Error::NoPositiveRoot)));
    }

    #[test]
    fn bowl_down_quadratic_has_one_positive_root() {
        // -2 x^2 + x + 1 = -(2x + 1)(x - 1)
        assert!((largest_positive_root(-2.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_case() {
        assert!((largest_positive_root(0.0, 2.0, -1.0).unwrap() - 0.5).abs() < 1e-15);
    }
}
