//! Random problem generators.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 16;
const GS_DEGENERATE: f64 = 1e-8;

/// A deterministic random stream identified by a master seed and a path of ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn child(&self, id: u64) -> Self {
        let mut path = self.path.clone();
        path.push(id);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn at(&self, ids: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(ids);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update((self.path.len() as u64).to_le_bytes());
        for id in &self.path {
            h.update(id.to_le_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Orthonormalizes the columns of `a` in place with two passes of modified
/// Gram-Schmidt per column. Returns `false` if a column became negligible.
fn gram_schmidt(a: &mut DMatrix<f64>) -> bool {
    for j in 0..a.ncols() {
        let original = a.column(j).norm();
        for _ in 0..2 {
            for k in 0..j {
                let proj = a.column(k).dot(&a.column(j));
                let qk = a.column(k).clone_owned();
                a.column_mut(j).axpy(-proj, &qk, 1.0);
            }
        }
        let norm = a.column(j).norm();
        if norm < GS_DEGENERATE * original.max(1.0) {
            return false;
        }
        a.column_mut(j).unscale_mut(norm);
    }
    true
}

/// `N x D` matrix with orthonormal columns orthogonal to the all-ones vector, from
/// Gram-Schmidt on `{1, a_1, ..., a_D}` with Gaussian `a_d`.
pub fn sample_zero_mean_orthonormal<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if d == 0 || d + 1 >= n {
        return Err(Error::invalid(format!(
            "zero-mean orthonormal sampling needs 1 <= D < N - 1 (N = {n}, D = {d})"
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut a = DMatrix::from_element(n, d + 1, 1.0);
        a.columns_mut(1, d).copy_from(&gaussian_matrix(n, d, rng));
        if gram_schmidt(&mut a) {
            return Ok(a.columns(1, d).clone_owned());
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_ATTEMPTS,
    })
}

/// As [`sample_zero_mean_orthonormal`] without the all-ones constraint.
pub fn sample_unconstrained_orthonormal<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if d == 0 || d > n {
        return Err(Error::invalid(format!(
            "orthonormal sampling needs 1 <= D <= N (N = {n}, D = {d})"
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut a = gaussian_matrix(n, d, rng);
        if gram_schmidt(&mut a) {
            return Ok(a);
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_ATTEMPTS,
    })
}

/// Unit vector `R` with `U^T R = 0`, uniform on the sphere of that null space. With
/// `orthogonal_to_ones` the all-ones direction is projected out as well.
pub fn sample_null_residual<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    orthogonal_to_ones: bool,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = u.nrows();
    let mut basis = u.clone();
    if orthogonal_to_ones {
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut ones = &ones - u * (u.transpose() * &ones);
        let norm = ones.norm();
        if norm > GS_DEGENERATE {
            ones.unscale_mut(norm);
            let k = basis.ncols();
            basis = basis.insert_column(k, 0.0);
            basis.column_mut(k).copy_from(&ones);
        }
    }
    if basis.ncols() >= n {
        return Err(Error::invalid("null space is empty"));
    }
    for _ in 0..MAX_ATTEMPTS {
        let a = gaussian_vector(n, rng);
        let mut b = &a - &basis * (basis.transpose() * &a);
        // second pass keeps the projection accurate to rounding
        b -= &basis * (basis.transpose() * &b);
        let norm = b.norm();
        if norm >= GS_DEGENERATE {
            return Ok(b / norm);
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_ATTEMPTS,
    })
}

/// Stacks `n - top.nrows()` zero rows under `top`.
pub fn pad_with_zero_rows(top: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    assert!(n >= top.nrows());
    let mut out = DMatrix::zeros(n, top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out
}

/// A zero-mean orthonormal `N0 x D` block followed by `N - N0` zero rows, so the
/// maximum leverage does not decay with `N`.
pub fn degenerate_u<R: Rng + ?Sized>(
    n: usize,
    n0: usize,
    d: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n0 > n {
        return Err(Error::invalid(format!("N0 = {n0} exceeds N = {n}")));
    }
    Ok(pad_with_zero_rows(
        &sample_zero_mean_orthonormal(n0, d, rng)?,
        n,
    ))
}

/// `S_d = exp(alpha (d - D))` for `d = 1..D`.
pub fn spectrum_family(alpha: f64, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |i, _| (alpha * (i as f64 + 1.0 - d as f64)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelSpec {
    pub theta_star: DVector<f64>,
    pub sigma2: f64,
    pub spectrum: DVector<f64>,
}

impl LinearModelSpec {
    pub fn new(theta_star: DVector<f64>, sigma2: f64, spectrum: DVector<f64>) -> Result<Self> {
        if theta_star.len() != spectrum.len() {
            return Err(Error::invalid("theta_star and spectrum lengths differ"));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::invalid(format!(
                "noise variance {sigma2} is negative"
            )));
        }
        let norm = theta_star.norm();
        if !(norm > 0.0) {
            return Err(Error::invalid("theta_star is zero"));
        }
        Ok(Self {
            theta_star: theta_star / norm,
            sigma2,
            spectrum,
        })
    }

    /// Uniformly random unit `theta_star`.
    pub fn random<R: Rng + ?Sized>(
        spectrum: DVector<f64>,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = spectrum.len();
        loop {
            let t = gaussian_vector(d, rng);
            if t.norm() > 1e-8 {
                return Self::new(t, sigma2, spectrum);
            }
        }
    }

    pub fn d(&self) -> usize {
        self.theta_star.len()
    }
}

#[derive(Debug, Clone)]
pub struct Responses {
    pub y: DVector<f64>,
    /// Noise as added, after recentering when requested.
    pub noise: DVector<f64>,
}

/// `Y = U diag(S) theta_star + E` with `E ~ N(0, sigma2 I)`; `recenter` subtracts the
/// sample mean of `E` so that `1^T Y = 0` when `U` has zero-mean columns.
pub fn generate_responses<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    spec: &LinearModelSpec,
    recenter: bool,
    rng: &mut R,
) -> Responses {
    let n = u.nrows();
    let signal = u * spec.spectrum.component_mul(&spec.theta_star);
    let mut noise = gaussian_vector(n, rng) * spec.sigma2.sqrt();
    if recenter {
        let mean = noise.mean();
        noise.add_scalar_mut(-mean);
    }
    Responses {
        y: signal + &noise,
        noise,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubGaussian {
    Gaussian,
    Rademacher,
    Uniform,
}

impl SubGaussian {
    pub const ALL: [SubGaussian; 3] = [Self::Gaussian, Self::Rademacher, Self::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::Uniform => "uniform",
        }
    }

    /// One unit-variance draw.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => StandardNormal.sample(rng),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Uniform => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
        }
    }
}

impl FromStr for SubGaussian {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::invalid(format!("unknown sub-Gaussian family {s:?}"))),
        }
    }
}

impl std::fmt::Display for SubGaussian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `N x D` matrix of i.i.d. unit-variance draws.
pub fn sample_subgaussian_x<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    family: SubGaussian,
    rng: &mut R,
) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| family.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(7).at(&[1, 2]);
        let a: u64 = s.rng().random();
        let b: u64 = s.rng().random();
        let c: u64 = RngStream::new(7).at(&[1, 3]).rng().random();
        let d: u64 = RngStream::new(7).at(&[12]).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn spectrum_endpoints() {
        let s = spectrum_family(1.0, 5);
        assert_eq!(s[4], 1.0);
        assert!((s[0] - (-4f64).exp()).abs() < 1e-15);
        assert!(spectrum_family(0.0, 3).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rademacher_entries() {
        let mut rng = RngStream::new(1).rng();
        let x = sample_subgaussian_x(50, 4, SubGaussian::Rademacher, &mut rng);
        assert!(x.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn family_parses() {
        assert_eq!(
            "Uniform".parse::<SubGaussian>().unwrap(),
            SubGaussian::Uniform
        );
        assert!("cauchy".parse::<SubGaussian>().is_err());
    }

    #[test]
    fn bad_shapes_rejected() {
        let mut rng = RngStream::new(1).rng();
        assert!(sample_zero_mean_orthonormal(5, 4, &mut rng).is_err());
        assert!(degenerate_u(5, 8, 2, &mut rng).is_err());
    }
}
