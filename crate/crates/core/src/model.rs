//! Regression problem representation: centering/scaling preprocessing, the
//! cached thin SVD, the `V = I` reduced frame and PCR truncation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RawDataset;
use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which `X` is treated as rank deficient.
pub const RANK_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
        }
    }
}

/// Thin SVD `X = U diag(S) V^T` with singular values sorted nonincreasing, plus
/// the row leverages `nu_n = ||u_n||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdForm {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
    pub nu: DVector<f64>,
}

fn row_norms_sq(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(u.nrows(), |n, _| u.row(n).norm_squared())
}

impl SvdForm {
    pub fn decompose(x: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 || d >= n {
            return Err(Error::invalid(format!(
                "need 1 <= D < N, got N = {n}, D = {d}"
            )));
        }
        let svd = x.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v = svd
            .v_t
            .expect("right singular vectors requested")
            .transpose();
        Self::from_parts(u, svd.singular_values, v)
    }

    /// Assembles an SVD from its factors, reordering so that `S` is nonincreasing.
    pub fn from_parts(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let d = s.len();
        if u.ncols() != d || v.nrows() != d || v.ncols() != d {
            return Err(Error::invalid(format!(
                "inconsistent SVD shapes: U {:?}, S {}, V {:?}",
                u.shape(),
                d,
                v.shape()
            )));
        }
        if d == 0 || d >= u.nrows() {
            return Err(Error::invalid(format!(
                "need 1 <= D < N, got N = {}, D = {d}",
                u.nrows()
            )));
        }
        if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(
                "singular values must be finite and nonnegative",
            ));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let (u, s, v) = if order.iter().enumerate().all(|(i, &o)| i == o) {
            (u, s, v)
        } else {
            (
                u.select_columns(&order),
                DVector::from_iterator(d, order.iter().map(|&i| s[i])),
                v.select_columns(&order),
            )
        };
        let ratio = s[d - 1] / s[0];
        if !(s[0] > 0.0) || ratio <= RANK_RATIO {
            return Err(Error::RankDeficient { ratio });
        }
        let nu = row_norms_sq(&u);
        Ok(Self { u, s, v, nu })
    }

    /// SVD form of the problem whose covariates are `U diag(S)` (right singular vectors `V = I`).
    pub fn reduced(u: DMatrix<f64>, s: DVector<f64>) -> Result<Self> {
        let d = s.len();
        Self::from_parts(u, s, DMatrix::identity(d, d))
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.s.len()
    }

    pub fn nu_max(&self) -> f64 {
        self.nu.max()
    }

    /// Mean squared singular value, the natural scale of the regularization parameter.
    pub fn mean_sq_singular(&self) -> f64 {
        self.s.norm_squared() / self.d() as f64
    }

    /// Largest |S_d - 1|.
    pub fn flatness_deviation(&self) -> f64 {
        self.s.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }

    /// `U diag(S)`, the covariates in the `V = I` frame.
    pub fn reduced_covariates(&self) -> DMatrix<f64> {
        let mut x = self.u.clone();
        for (d, mut col) in x.column_iter_mut().enumerate() {
            col *= self.s[d];
        }
        x
    }

    /// Checks orthonormality, reconstruction and the leverage identities against `x`.
    pub fn validate(&self, x: &DMatrix<f64>, tol: &Tolerances) -> Result<()> {
        let d = self.d();
        let eye = DMatrix::<f64>::identity(d, d);
        let utu = (self.u.transpose() * &self.u - &eye).amax();
        if utu > tol.abs {
            return Err(Error::invalid(format!("U^T U deviates from I by {utu:e}")));
        }
        let vtv = (self.v.transpose() * &self.v - &eye).amax();
        if vtv > tol.abs {
            return Err(Error::invalid(format!("V^T V deviates from I by {vtv:e}")));
        }
        let rec = (self.reconstruct() - x).norm() / x.norm().max(f64::MIN_POSITIVE);
        if rec > tol.rel {
            return Err(Error::invalid(format!("reconstruction error {rec:e}")));
        }
        let nu_sum = (self.nu.sum() - d as f64).abs();
        if nu_sum > tol.abs * d as f64 {
            return Err(Error::invalid(format!(
                "sum of leverages off by {nu_sum:e}"
            )));
        }
        Ok(())
    }
}

/// Preprocessed regression problem with its SVD cached.
///
/// Centering (`1^T Y = 0`, `X^T 1 = 0`) is preserved by [`reduce_frame`] and
/// [`pcr_truncate`]; the unit column scale `sum_n x_nd^2 = N` only holds for the
/// output of [`standardize`].
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub svd: SvdForm,
    pub feature_names: Vec<String>,
}

impl StandardizedDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Verifies zero-mean responses and columns, unit column variance and the SVD.
    pub fn check_condition(&self, tol: &Tolerances) -> Result<()> {
        self.check_centered(tol)?;
        let n = self.n() as f64;
        for (d, col) in self.x.column_iter().enumerate() {
            let ss = col.norm_squared();
            if ((ss - n) / n).abs() > tol.rel {
                return Err(Error::invalid(format!(
                    "column {d}: sum of squares {ss} != N = {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn check_centered(&self, tol: &Tolerances) -> Result<()> {
        let ysum = self.y.sum();
        if ysum.abs() > tol.abs * self.y.lp_norm(1).max(1.0) {
            return Err(Error::invalid(format!("1^T Y = {ysum:e}")));
        }
        for (d, col) in self.x.column_iter().enumerate() {
            let s = col.sum();
            if s.abs() > tol.abs * col.lp_norm(1).max(1.0) {
                return Err(Error::invalid(format!("column {d} sums to {s:e}")));
            }
        }
        self.svd.validate(&self.x, tol)
    }
}

/// Centers `Y`, centers every column of `X` and scales it to `sum_n x_nd^2 = N`
/// (population variance), then caches the SVD.
pub fn standardize(raw: &RawDataset) -> Result<StandardizedDataset> {
    let (n, d) = raw.x.shape();
    let nf = n as f64;
    let mut x = raw.x.clone();
    for j in 0..d {
        let mut col = x.column_mut(j);
        let mean = col.sum() / nf;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / nf;
        let scale = raw.x.column(j).amax();
        if !(var > 0.0) || var.sqrt() <= 1e-14 * scale {
            return Err(Error::ConstantColumn {
                index: j,
                name: raw.feature_names[j].clone(),
            });
        }
        col /= var.sqrt();
    }
    let mean_y = raw.y.sum() / nf;
    let y = raw.y.add_scalar(-mean_y);
    let svd = SvdForm::decompose(&x)?;
    Ok(StandardizedDataset {
        x,
        y,
        svd,
        feature_names: raw.feature_names.clone(),
    })
}

/// Equivalent problem with `V = I` (covariates `U diag(S)`) and unit-norm responses.
pub fn reduce_frame(ds: &StandardizedDataset) -> Result<StandardizedDataset> {
    let norm = ds.y.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroResponse);
    }
    let d = ds.d();
    let svd = SvdForm {
        u: ds.svd.u.clone(),
        s: ds.svd.s.clone(),
        v: DMatrix::identity(d, d),
        nu: ds.svd.nu.clone(),
    };
    Ok(StandardizedDataset {
        x: svd.reduced_covariates(),
        y: &ds.y / norm,
        svd,
        feature_names: (0..d).map(|i| format!("pc{}", i + 1)).collect(),
    })
}

/// Principal component regression: keep the top `rank` directions, `X' = U[:, :R] diag(S[:R])`.
/// The retained columns are not re-standardized.
pub fn pcr_truncate(ds: &StandardizedDataset, rank: usize) -> Result<StandardizedDataset> {
    let d = ds.d();
    if rank == 0 || rank > d {
        return Err(Error::BadRank { rank, dim: d });
    }
    let u = ds.svd.u.columns(0, rank).into_owned();
    let s = ds.svd.s.rows(0, rank).into_owned();
    let svd = SvdForm {
        nu: row_norms_sq(&u),
        u,
        s,
        v: DMatrix::identity(rank, rank),
    };
    Ok(StandardizedDataset {
        x: svd.reduced_covariates(),
        y: ds.y.clone(),
        svd,
        feature_names: (0..rank).map(|i| format!("pc{}", i + 1)).collect(),
    })
}

/// Unregularized least-squares fit `theta_hat = (X^T X)^{-1} X^T Y`.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    /// Coefficients in the original covariate frame.
    pub theta_hat: DVector<f64>,
    /// `E_hat = Y - X theta_hat`.
    pub residuals: DVector<f64>,
    /// `u_n^T theta_hat` with `theta_hat` expressed in the `V = I` frame.
    pub projections: DVector<f64>,
    /// `X theta_hat = U U^T Y`.
    pub fitted: DVector<f64>,
}

impl LeastSquaresFit {
    pub fn compute(svd: &SvdForm, y: &DVector<f64>) -> Self {
        let z = svd.u.transpose() * y;
        let theta_reduced = z.component_div(&svd.s);
        let fitted = &svd.u * &z;
        Self {
            theta_hat: &svd.v * &theta_reduced,
            residuals: y - &fitted,
            projections: &svd.u * &theta_reduced,
            fitted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(x: &[f64], n: usize, d: usize, y: &[f64]) -> RawDataset {
        RawDataset::from_matrix(DMatrix::from_row_slice(n, d, x), DVector::from_row_slice(y))
            .unwrap()
    }

    #[test]
    fn centers_responses() {
        let ds = standardize(&raw(&[0.0, 1.0, 3.0], 3, 1, &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(ds.y.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn scales_column_to_population_variance() {
        let ds = standardize(&raw(&[0.0, 2.0, 4.0], 3, 1, &[1.0, 2.0, 4.0])).unwrap();
        // mean 2, population variance 8/3
        let s = (8.0f64 / 3.0).sqrt();
        let expect = [-2.0 / s, 0.0, 2.0 / s];
        for (a, b) in ds.x.column(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((ds.x.column(0).norm_squared() - 3.0).abs() < 1e-12);
        ds.check_condition(&Tolerances::default()).unwrap();
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = standardize(&raw(
            &[5.0, 1.0, 5.0, 2.0, 5.0, 7.0],
            3,
            2,
            &[1.0, 2.0, 3.0],
        ))
        .unwrap_err();
        assert!(matches!(err, Error::ConstantColumn { index: 0, .. }));
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = [1.0, 1.0, 2.0, 2.0, 4.0, 4.0, 3.0, 3.0];
        let err = standardize(&raw(&x, 4, 2, &[1.0, 0.0, 3.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    }

    #[test]
    fn pcr_rank_bounds() {
        let ds = standardize(&raw(
            &[1.0, 0.3, 2.0, -1.0, 4.0, 0.5, 3.0, 2.0, 0.0, 1.0],
            5,
            2,
            &[1.0, 2.0, 0.0, 5.0, 1.0],
        ))
        .unwrap();
        assert!(matches!(pcr_truncate(&ds, 0), Err(Error::BadRank { .. })));
        assert!(matches!(pcr_truncate(&ds, 3), Err(Error::BadRank { .. })));
        let one = pcr_truncate(&ds, 1).unwrap();
        assert_eq!(one.d(), 1);
        assert!((one.x.column(0).norm() - ds.svd.s[0]).abs() < 1e-12);
        let full = pcr_truncate(&ds, 2).unwrap();
        let xv = &ds.x * &ds.svd.v;
        assert!((full.x - xv).amax() < 1e-12);
    }

    #[test]
    fn zero_response_cannot_be_reduced() {
        let ds = standardize(&raw(&[1.0, 2.0, 4.0], 3, 1, &[2.0, 2.0, 2.0])).unwrap();
        assert!(matches!(reduce_frame(&ds), Err(Error::ZeroResponse)));
    }

    #[test]
    fn least_squares_residuals_are_orthogonal() {
        let ds = standardize(&raw(
            &[1.0, 0.3, 2.0, -1.0, 4.0, 0.5, 3.0, 2.0, 0.0, 1.0, 2.0, 2.0],
            6,
            2,
            &[1.0, 2.0, 0.0, 5.0, 1.0, 3.0],
        ))
        .unwrap();
        let fit = LeastSquaresFit::compute(&ds.svd, &ds.y);
        assert!((ds.svd.u.transpose() * &fit.residuals).amax() < 1e-12);
        let lhs = ds.y.norm_squared();
        let rhs = (&ds.x * &fit.theta_hat).norm_squared() + fit.residuals.norm_squared();
        assert!(((lhs - rhs) / lhs).abs() < 1e-12);
    }
}
