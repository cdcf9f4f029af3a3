//! Closed-form leave-one-out loss of ridge regression along the regularization path.
//!
//! With `X = U diag(S) V^T` the hat values and in-sample predictions are
//! `Q_n(l) = sum_d u_nd^2 s_d^2/(s_d^2 + l)` and `p_n(l) = sum_d u_nd s_d^2/(s_d^2 + l) (U^T Y)_d`,
//! and the loss is `L(l) = sum_n (p_n - y_n)^2 / (1 - Q_n)^2`. The estimator is
//! `theta_l = (X^T X + l I)^{-1} X^T Y`. Nothing here depends on `V`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StandardizedDataset, SvdForm};
use crate::util::{hex, log_space};

/// `1 - Q_n` at or below this value makes the leave-one-out loss undefined.
pub const LEVERAGE_ONE_THRESHOLD: f64 = 1e-12;

/// Tolerance on `|S_d - 1|` for the flat-spectrum closed forms.
pub const FLAT_SPECTRUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDerivs {
    pub loss: f64,
    pub grad: f64,
    pub hess: f64,
}

/// Precomputed per-problem data for fast evaluation of `L`, `L'` and `L''`.
///
/// Columns of `U` that share a singular value are merged: only the per-row sums of
/// `u_nd^2` and `u_nd z_d` over each group enter the loss.
#[derive(Debug, Clone)]
pub struct LoocvEvaluator {
    n: usize,
    /// Number of distinct singular values.
    k: usize,
    s2: Vec<f64>,
    // row-major n x k, pre-multiplied by the group's s^2
    a: Vec<f64>,
    b: Vec<f64>,
    y: Vec<f64>,
    tail: f64,
    mean_s2: f64,
}

const STACK_GROUPS: usize = 32;

impl LoocvEvaluator {
    pub fn new(svd: &SvdForm, y: &DVector<f64>) -> Self {
        let (n, d) = (svd.n(), svd.d());
        assert_eq!(y.len(), n, "response length must match U rows");
        let z = svd.u.transpose() * y;
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for j in 0..d {
            let s2 = svd.s[j] * svd.s[j];
            match groups.iter_mut().find(|(g, _)| *g == s2) {
                Some((_, cols)) => cols.push(j),
                None => groups.push((s2, vec![j])),
            }
        }
        let k = groups.len();
        let mut a = Vec::with_capacity(n * k);
        let mut b = Vec::with_capacity(n * k);
        for i in 0..n {
            for (s2, cols) in &groups {
                let (mut sa, mut sb) = (0.0, 0.0);
                for &j in cols {
                    let u = svd.u[(i, j)];
                    sa += u * u;
                    sb += u * z[j];
                }
                a.push(s2 * sa);
                b.push(s2 * sb);
            }
        }
        let s2: Vec<f64> = svd.s.iter().map(|s| s * s).collect();
        Self {
            n,
            k,
            mean_s2: s2.iter().sum::<f64>() / d as f64,
            s2: groups.iter().map(|g| g.0).collect(),
            a,
            b,
            y: y.iter().copied().collect(),
            tail: y.norm_squared(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `lim_{l -> inf} L(l) = ||Y||^2`.
    pub fn tail_limit(&self) -> f64 {
        self.tail
    }

    pub fn mean_sq_singular(&self) -> f64 {
        self.mean_s2
    }

    fn with_inverses<T>(&self, lambda: f64, f: impl FnOnce(&[f64]) -> T) -> T {
        let mut stack = [0.0; STACK_GROUPS];
        let mut heap = Vec::new();
        let inv: &mut [f64] = if self.k <= STACK_GROUPS {
            &mut stack[..self.k]
        } else {
            heap.resize(self.k, 0.0);
            &mut heap
        };
        for (v, s2) in inv.iter_mut().zip(&self.s2) {
            *v = 1.0 / (s2 + lambda);
        }
        f(inv)
    }

    fn row_dot(&self, data: &[f64], lambda: f64) -> Vec<f64> {
        self.with_inverses(lambda, |inv| {
            data.chunks_exact(self.k)
                .map(|row| row.iter().zip(inv).map(|(a, w)| a * w).sum())
                .collect()
        })
    }

    pub fn hat_values(&self, lambda: f64) -> Vec<f64> {
        self.row_dot(&self.a, lambda)
    }

    pub fn predictions(&self, lambda: f64) -> Vec<f64> {
        self.row_dot(&self.b, lambda)
    }

    pub fn loss(&self, lambda: f64) -> Result<f64> {
        self.with_inverses(lambda, |inv| {
            let mut total = 0.0;
            for (i, (ra, rb)) in self
                .a
                .chunks_exact(self.k)
                .zip(self.b.chunks_exact(self.k))
                .enumerate()
            {
                let (mut q, mut p) = (0.0, 0.0);
                for ((a, b), w) in ra.iter().zip(rb).zip(inv) {
                    q += a * w;
                    p += b * w;
                }
                let m = 1.0 - q;
                if m <= LEVERAGE_ONE_THRESHOLD {
                    return Err(Error::LeverageOne { index: i, lambda });
                }
                let g = (p - self.y[i]) / m;
                total += g * g;
            }
            Ok(total)
        })
    }

    /// `L`, `L'` and `L''` at `lambda`, assembled analytically by the chain rule.
    pub fn eval(&self, lambda: f64) -> Result<LossDerivs> {
        self.with_inverses(lambda, |inv| {
            let (mut loss, mut grad, mut hess) = (0.0, 0.0, 0.0);
            for (i, (ra, rb)) in self
                .a
                .chunks_exact(self.k)
                .zip(self.b.chunks_exact(self.k))
                .enumerate()
            {
                // with w = s^2/(s^2+l): dw/dl = -w/(s^2+l), d2w/dl2 = 2w/(s^2+l)^2
                let (mut q, mut q1, mut q2) = (0.0, 0.0, 0.0);
                let (mut p, mut p1, mut p2) = (0.0, 0.0, 0.0);
                for ((a, b), w) in ra.iter().zip(rb).zip(inv) {
                    let (a1, b1) = (a * w, b * w);
                    let (a2, b2) = (a1 * w, b1 * w);
                    q += a1;
                    p += b1;
                    q1 -= a2;
                    p1 -= b2;
                    q2 += 2.0 * a2 * w;
                    p2 += 2.0 * b2 * w;
                }
                let m = 1.0 - q;
                if m <= LEVERAGE_ONE_THRESHOLD {
                    return Err(Error::LeverageOne { index: i, lambda });
                }
                let r = p - self.y[i];
                let inv_m = 1.0 / m;
                let g = r * inv_m;
                let g1 = p1 * inv_m + r * q1 * inv_m * inv_m;
                let g2 = p2 * inv_m
                    + 2.0 * p1 * q1 * inv_m * inv_m
                    + r * q2 * inv_m * inv_m
                    + 2.0 * r * q1 * q1 * inv_m * inv_m * inv_m;
                loss += g * g;
                grad += 2.0 * g * g1;
                hess += 2.0 * (g1 * g1 + g * g2);
            }
            Ok(LossDerivs { loss, grad, hess })
        })
    }
}

/// Ridge hat values `Q_n(l) = x_n^T (X^T X + l I)^{-1} x_n`.
pub fn hat_values(svd: &SvdForm, lambda: f64) -> DVector<f64> {
    let w: Vec<f64> = svd.s.iter().map(|s| s * s / (s * s + lambda)).collect();
    DVector::from_fn(svd.n(), |i, _| {
        (0..svd.d()).map(|j| svd.u[(i, j)].powi(2) * w[j]).sum()
    })
}

/// In-sample ridge predictions `x_n^T theta_l`.
pub fn ridge_predictions(svd: &SvdForm, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    DVector::from_vec(LoocvEvaluator::new(svd, y).predictions(lambda))
}

pub fn loocv_loss(svd: &SvdForm, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    LoocvEvaluator::new(svd, y).loss(lambda)
}

pub fn loocv_grad(svd: &SvdForm, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    Ok(LoocvEvaluator::new(svd, y).eval(lambda)?.grad)
}

pub fn loocv_hess(svd: &SvdForm, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    Ok(LoocvEvaluator::new(svd, y).eval(lambda)?.hess)
}

/// Leave-one-out loss by `N` explicit refits of the `(N-1)`-point ridge problem.
pub fn brute_force_loocv(ds: &StandardizedDataset, lambda: f64) -> Result<f64> {
    brute_force_loocv_xy(&ds.x, &ds.y, lambda)
}

pub fn brute_force_loocv_xy(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    let (n, d) = x.shape();
    let mut total = 0.0;
    for held in 0..n {
        let mut gram = DMatrix::<f64>::identity(d, d) * lambda;
        let mut rhs = DVector::<f64>::zeros(d);
        for i in (0..n).filter(|&i| i != held) {
            let row = x.row(i);
            for a in 0..d {
                rhs[a] += row[a] * y[i];
                for b in 0..d {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        let chol = gram.cholesky().ok_or(Error::RankDeficient { ratio: 0.0 })?;
        let theta = chol.solve(&rhs);
        let err = x.row(held).transpose().dot(&theta) - y[held];
        total += err * err;
    }
    Ok(total)
}

/// Flat-spectrum quadratic coefficients of one observation.
///
/// With `m = u_n^T theta_hat`, `e = e_hat_n`:
/// `L'(l) = 2/(1+l)^4 sum_n (1+l)^3/(1+l-nu_n)^3 (xi1 l^2 + xi2 l + xi3)` and
/// `L''(l) = 2/(1+l)^5 sum_n (1+l)^4/(1+l-nu_n)^4 (a l^2 + b l + c)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct XiTerms {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl XiTerms {
    fn of(nu: f64, m: f64, e: f64) -> Self {
        let xi1 = (1.0 - nu) * m * m - nu * e * e + (1.0 - 2.0 * nu) * e * m;
        let xi2 = (1.0 - nu) * m * m - 2.0 * nu * e * e + (2.0 - 3.0 * nu) * e * m;
        let xi3 = -nu * e * e + (1.0 - nu) * e * m;
        Self {
            xi1,
            xi2,
            xi3,
            a: -2.0 * xi1,
            b: -(1.0 + nu) * xi1 - 3.0 * xi3,
            c: (1.0 - nu) * xi1 - 3.0 * xi3,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            xi1: self.xi1 + o.xi1,
            xi2: self.xi2 + o.xi2,
            xi3: self.xi3 + o.xi3,
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
        }
    }

    pub fn first_quadratic(&self, lambda: f64) -> f64 {
        (self.xi1 * lambda + self.xi2) * lambda + self.xi3
    }

    pub fn second_quadratic(&self, lambda: f64) -> f64 {
        (self.a * lambda + self.b) * lambda + self.c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiCoefficients {
    pub per_obs: Vec<XiTerms>,
    pub sums: XiTerms,
    pub nu: Vec<f64>,
}

impl XiCoefficients {
    /// `L'` reassembled from the per-observation quadratics.
    pub fn grad_from_xi(&self, lambda: f64) -> f64 {
        let t = 1.0 + lambda;
        let s: f64 = self
            .per_obs
            .iter()
            .zip(&self.nu)
            .map(|(c, nu)| (t / (t - nu)).powi(3) * c.first_quadratic(lambda))
            .sum();
        2.0 / t.powi(4) * s
    }

    /// `L''` reassembled from the per-observation `(a, b, c)` quadratics.
    pub fn hess_from_abc(&self, lambda: f64) -> f64 {
        let t = 1.0 + lambda;
        let s: f64 = self
            .per_obs
            .iter()
            .zip(&self.nu)
            .map(|(c, nu)| (t / (t - nu)).powi(4) * c.second_quadratic(lambda))
            .sum();
        2.0 / t.powi(5) * s
    }
}

pub fn xi_coefficients(svd: &SvdForm, y: &DVector<f64>) -> Result<XiCoefficients> {
    let deviation = svd.flatness_deviation();
    if deviation > FLAT_SPECTRUM_TOL {
        return Err(Error::FlatSpectrumRequired { deviation });
    }
    let fit = crate::model::LeastSquaresFit::compute(svd, y);
    let per_obs: Vec<XiTerms> = (0..svd.n())
        .map(|i| XiTerms::of(svd.nu[i], fit.projections[i], fit.residuals[i]))
        .collect();
    let sums = per_obs
        .iter()
        .fold(XiTerms::default(), |acc, t| acc.add(*t));
    Ok(XiCoefficients {
        per_obs,
        sums,
        nu: svd.nu.iter().copied().collect(),
    })
}

/// Log-spaced regularization grid. Unset bounds default to `1e-6` and `1e6` times
/// the mean squared singular value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambda_min: None,
            lambda_max: None,
            points: 400,
        }
    }
}

pub const DEFAULT_MIN_FACTOR: f64 = 1e-6;
pub const DEFAULT_MAX_FACTOR: f64 = 1e6;

impl GridSpec {
    pub fn with_points(points: usize) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    pub fn bounds(&self, mean_sq_singular: f64) -> (f64, f64) {
        (
            self.lambda_min
                .unwrap_or(DEFAULT_MIN_FACTOR * mean_sq_singular),
            self.lambda_max
                .unwrap_or(DEFAULT_MAX_FACTOR * mean_sq_singular),
        )
    }

    pub fn resolve(&self, mean_sq_singular: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.bounds(mean_sq_singular);
        if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("bad lambda range [{lo}, {hi}]")));
        }
        if self.points < 2 {
            return Err(Error::invalid("lambda grid needs at least 2 points"));
        }
        Ok(log_space(lo, hi, self.points))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvCurve {
    pub lambdas: Vec<f64>,
    pub loss: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub tail_limit: f64,
}

impl LoocvCurve {
    /// Evaluates the curve on `grid`. Each point is computed independently, so the
    /// result does not depend on how the grid is split across workers.
    pub fn compute(svd: &SvdForm, y: &DVector<f64>, grid: &GridSpec) -> Result<Self> {
        let eval = LoocvEvaluator::new(svd, y);
        let lambdas = grid.resolve(eval.mean_sq_singular())?;
        let points: Vec<LossDerivs> = lambdas
            .par_iter()
            .map(|&l| eval.eval(l))
            .collect::<Result<_>>()?;
        Ok(Self {
            loss: points.iter().map(|p| p.loss).collect(),
            grad: points.iter().map(|p| p.grad).collect(),
            hess: points.iter().map(|p| p.hess).collect(),
            lambdas,
            tail_limit: eval.tail_limit(),
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Writes `lambda,loss,grad,hess` rows after `#`-prefixed metadata lines.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, problem_hash: &str) -> Result<()> {
        writeln!(w, "# tail_limit={}", self.tail_limit)?;
        writeln!(w, "# problem_hash={problem_hash}")?;
        if let (Some(lo), Some(hi)) = (self.lambdas.first(), self.lambdas.last()) {
            writeln!(w, "# grid={lo},{hi},{}", self.len())?;
        }
        writeln!(w, "lambda,loss,grad,hess")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.lambdas[i], self.loss[i], self.grad[i], self.hess[i]
            )?;
        }
        Ok(())
    }

    /// Parses the output of [`LoocvCurve::write_csv`]; returns the curve and the problem hash.
    pub fn read_csv(text: &str) -> Result<(Self, String)> {
        let mut tail = None;
        let mut hash = String::new();
        let mut curve = Self {
            lambdas: vec![],
            loss: vec![],
            grad: vec![],
            hess: vec![],
            tail_limit: f64::NAN,
        };
        let mut seen_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let bad = |msg: &str| Error::Data {
                row: lineno + 1,
                column: "-".into(),
                message: msg.to_string(),
            };
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("tail_limit=") {
                    tail = Some(v.parse::<f64>().map_err(|_| bad("bad tail_limit"))?);
                } else if let Some(v) = meta.strip_prefix("problem_hash=") {
                    hash = v.to_string();
                }
                continue;
            }
            if !seen_header {
                if line.trim() != "lambda,loss,grad,hess" {
                    return Err(bad("expected header lambda,loss,grad,hess"));
                }
                seen_header = true;
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric field"))?;
            if vals.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            curve.lambdas.push(vals[0]);
            curve.loss.push(vals[1]);
            curve.grad.push(vals[2]);
            curve.hess.push(vals[3]);
        }
        curve.tail_limit = tail.ok_or_else(|| Error::invalid("missing tail_limit metadata"))?;
        Ok((curve, hash))
    }
}

/// Content hash of a problem `(U, S, Y)`.
pub fn problem_hash(svd: &SvdForm, y: &DVector<f64>) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update((svd.n() as u64).to_le_bytes());
    h.update((svd.d() as u64).to_le_bytes());
    for v in svd.s.iter().chain(svd.u.iter()).chain(y.iter()) {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize()[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_problem() -> (SvdForm, DVector<f64>) {
        // columns orthonormal and orthogonal to 1 in R^4
        let u = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, -0.5, 0.5, 0.5, -0.5, -0.5, -0.5]);
        let svd = SvdForm::reduced(u, DVector::from_element(2, 1.0)).unwrap();
        (svd, DVector::from_vec(vec![1.0, -0.5, 0.25, -0.75]))
    }

    #[test]
    fn hat_values_at_zero_are_leverages() {
        let (svd, _) = flat_problem();
        let q = hat_values(&svd, 0.0);
        for i in 0..4 {
            assert!((q[i] - svd.nu[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_hat_values_shrink_as_one_over_one_plus_lambda() {
        let (svd, _) = flat_problem();
        let q = hat_values(&svd, 2.5);
        for i in 0..4 {
            assert!((q[i] - svd.nu[i] / 3.5).abs() < 1e-15);
        }
    }

    #[test]
    fn hat_values_vanish_for_huge_lambda() {
        let (svd, _) = flat_problem();
        let q = hat_values(&svd, 1e12);
        assert!(q.iter().all(|&v| v <= 1e-10));
    }

    #[test]
    fn predictions_at_zero_are_least_squares_fit() {
        let (svd, y) = flat_problem();
        let p = ridge_predictions(&svd, &y, 0.0);
        let fit = crate::model::LeastSquaresFit::compute(&svd, &y);
        assert!((p - fit.fitted).amax() < 1e-15);
    }

    #[test]
    fn tail_limit() {
        let (svd, y) = flat_problem();
        let l = loocv_loss(&svd, &y, 1e12).unwrap();
        let tail = y.norm_squared();
        assert!(((l - tail) / tail).abs() < 1e-3);
    }

    #[test]
    fn leverage_one_is_reported() {
        // first row carries the whole of column 1
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let svd = SvdForm::reduced(u, DVector::from_element(1, 1.0)).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            loocv_loss(&svd, &y, 0.0),
            Err(Error::LeverageOne { index: 0, .. })
        ));
        assert!(loocv_loss(&svd, &y, 0.1).is_ok());
    }

    #[test]
    fn xi3_vanishes_without_residuals() {
        let (svd, _) = flat_problem();
        let y = &svd.u * DVector::from_vec(vec![0.3, -1.2]);
        let xi = xi_coefficients(&svd, &y).unwrap();
        assert!(xi.per_obs.iter().all(|t| t.xi3.abs() < 1e-15));
    }

    #[test]
    fn xi_requires_flat_spectrum() {
        let (svd, y) = flat_problem();
        let svd = SvdForm::reduced(svd.u, DVector::from_vec(vec![1.0, 0.5])).unwrap();
        assert!(matches!(
            xi_coefficients(&svd, &y),
            Err(Error::FlatSpectrumRequired { .. })
        ));
    }

    // `a = -xi1`, `b = 2(1-nu) xi1 - 2 xi2`, `c = (1-nu) xi2 - 3 xi3` looks similar
    // but does not reproduce `L''`.
    #[test]
    fn alternative_second_derivative_coefficients_disagree() {
        let (svd, y) = flat_problem();
        let xi = xi_coefficients(&svd, &y).unwrap();
        let eval = LoocvEvaluator::new(&svd, &y);
        let lambda = 0.3;
        let t: f64 = 1.0 + lambda;
        let printed: f64 = xi
            .per_obs
            .iter()
            .zip(&xi.nu)
            .map(|(c, nu)| {
                let a = -c.xi1;
                let b = 2.0 * (1.0 - nu) * c.xi1 - 2.0 * c.xi2;
                let cc = (1.0 - nu) * c.xi2 - 3.0 * c.xi3;
                (t / (t - nu)).powi(4) * ((a * lambda + b) * lambda + cc)
            })
            .sum::<f64>()
            * 2.0
            / t.powi(5);
        let exact = eval.eval(lambda).unwrap().hess;
        assert!(((xi.hess_from_abc(lambda) - exact) / exact).abs() < 1e-12);
        assert!(((printed - exact) / exact).abs() > 1e-3);
    }

    #[test]
    fn curve_csv_round_trip() {
        let (svd, y) = flat_problem();
        let curve = LoocvCurve::compute(&svd, &y, &GridSpec::with_points(25)).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf, &problem_hash(&svd, &y)).unwrap();
        let (back, hash) = LoocvCurve::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, curve);
        assert_eq!(hash, problem_hash(&svd, &y));
    }

    #[test]
    fn grid_rejects_bad_ranges() {
        let g = GridSpec {
            lambda_min: Some(1.0),
            lambda_max: Some(0.5),
            points: 10,
        };
        assert!(g.resolve(1.0).is_err());
        assert!(GridSpec::with_points(1).resolve(1.0).is_err());
    }
}
