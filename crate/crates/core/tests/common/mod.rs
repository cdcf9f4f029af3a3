#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal columns from a QR factorization (independent of the library samplers).
pub fn qr_orthonormal(rng: &mut impl Rng, n: usize, d: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, d)
        .qr()
        .q()
        .columns(0, d)
        .into_owned()
}

/// Random orthogonal `d x d` matrix.
pub fn orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    qr_orthonormal(rng, d, d)
}

/// Covariates with unequal column scales and a noisy linear response.
pub fn random_xy(rng: &mut impl Rng, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut x = gaussian_matrix(rng, n, d);
    for j in 0..d {
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        x.column_mut(j).scale_mut(scale);
    }
    let theta = gaussian_vector(rng, d);
    let noise = gaussian_vector(rng, n) * rng.random_range(0.1..2.0);
    let y = &x * theta + noise;
    (x, y)
}

/// Relative error with a floor on the denominator.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

pub fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "{}", header.join(",")).unwrap();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
}

/// The red wine quality table (1599 x 11 plus the `quality` target) as a CSV file.
pub fn write_wine_csv(path: &Path) {
    let ds = linfa_datasets::winequality();
    let mut header: Vec<String> = ds.feature_names().iter().map(|s| s.to_string()).collect();
    header.push("quality".into());
    let (n, d) = (ds.records.nrows(), ds.records.ncols());
    write_csv(
        path,
        &header,
        (0..n).map(|i| {
            let mut row: Vec<f64> = (0..d).map(|j| ds.records[[i, j]]).collect();
            row.push(ds.targets[i] as f64);
            row
        }),
    );
}
