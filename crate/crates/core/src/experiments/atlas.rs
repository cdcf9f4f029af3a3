use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use super::{classify_config, judge, metadata, Cell, ExperimentConfig, ExperimentResult, Outcome};
use crate::error::Result;
use crate::model::SvdForm;

/// Orthonormal basis of the zero-sum plane in `R^3`.
pub fn zero_sum_basis() -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(1.0, -1.0, 0.0) / 2f64.sqrt(),
        Vector3::new(1.0, 1.0, -2.0) / 6f64.sqrt(),
    )
}

/// `U(psi)` with columns `cos psi b1 + sin psi b2` and `-sin psi b1 + cos psi b2`,
/// and `Y(phi) = cos phi b1 + sin phi b2`.
pub fn atlas_problem(psi: f64, phi: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (b1, b2) = zero_sum_basis();
    let c1 = b1 * psi.cos() + b2 * psi.sin();
    let c2 = -b1 * psi.sin() + b2 * psi.cos();
    let y = b1 * phi.cos() + b2 * phi.sin();
    let u = DMatrix::from_fn(3, 2, |i, j| if j == 0 { c1[i] } else { c2[i] });
    (u, DVector::from_column_slice(y.as_slice()))
}

/// Quasiconvexity over a grid of `U` and `Y` angles for `N = 3`, `D = 2`, one panel
/// per spectrum `(1, s2)`.
pub fn run_atlas(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let p = config.atlas_points;
    let ccfg = classify_config(config);
    let cols = [
        "s2",
        "psi_index",
        "phi_index",
        "psi",
        "phi",
        "is_qvx",
        "failed",
        "seed",
    ];
    let mut out = ExperimentResult::new(metadata(config), &cols, 3);
    let angle = |i: usize| 2.0 * PI * i as f64 / p as f64;

    for &s2 in &config.atlas_s2 {
        let s = DVector::from_vec(vec![1.0, s2]);
        let cells: Vec<Outcome> = (0..p * p)
            .into_par_iter()
            .map(|k| {
                let (u, y) = atlas_problem(angle(k / p), angle(k % p));
                match SvdForm::reduced(u, s.clone()) {
                    Ok(svd) => judge(&svd, &y, &ccfg),
                    Err(_) => Outcome::Failed,
                }
            })
            .collect();
        let mut non_qvx = 0usize;
        let mut classified = 0usize;
        for (k, o) in cells.iter().enumerate() {
            let (i, j) = (k / p, k % p);
            if *o != Outcome::Failed {
                classified += 1;
            }
            if *o == Outcome::NonQvx {
                non_qvx += 1;
            }
            let row: Vec<Cell> = vec![
                s2.into(),
                i.into(),
                j.into(),
                angle(i).into(),
                angle(j).into(),
                (*o == Outcome::Qvx).into(),
                (*o == Outcome::Failed).into(),
                config.master_seed.into(),
            ];
            out.push(row);
        }
        out.add_summary(
            format!("fraction_non_qvx_s2_{s2}"),
            non_qvx as f64 / classified as f64,
        );
    }
    Ok(out)
}
