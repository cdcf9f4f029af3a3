use nalgebra::DVector;
use rayon::prelude::*;

use super::{
    classify_config, columns, judge, metadata, root_stream, Cell, ExperimentConfig,
    ExperimentResult, Outcome, Tally, TALLY_COLUMNS,
};
use crate::error::Result;
use crate::model::SvdForm;
use crate::samplers::{sample_null_residual, sample_zero_mean_orthonormal, LinearModelSpec};

/// Flat-spectrum problems `Y = U theta_star + nu R` with a unit residual direction
/// `R` orthogonal to the columns of `U`; every `(U, R)` pair is reused across `nu`.
///
/// The boundary for each `N` is the smallest `nu` in the grid with a non-quasiconvex
/// problem. When none is found the boundary is the largest `nu` tested and is
/// flagged as censored.
pub fn run_residual_norm(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let d = config.d;
    let root = root_stream(config);
    let ccfg = classify_config(config);
    let flat = DVector::from_element(d, 1.0);
    let theta = LinearModelSpec::random(flat.clone(), 0.0, &mut root.child(0).rng())?.theta_star;
    let k = config.nus.len();

    let mut cols = columns(&["n", "nu"], &TALLY_COLUMNS);
    cols.push("seed");
    let mut out = ExperimentResult::new(metadata(config), &cols, 2);
    let mut boundaries = Vec::new();

    for &n in &config.n_list {
        let units: Vec<Vec<Outcome>> = (0..config.u_reps)
            .into_par_iter()
            .map(|u| {
                let trials = config.y_reps * k;
                let mut rng = root.at(&[1, n as u64, u as u64]).rng();
                let Ok(um) = sample_zero_mean_orthonormal(n, d, &mut rng) else {
                    return vec![Outcome::Failed; trials];
                };
                let Ok(svd) = SvdForm::reduced(um.clone(), flat.clone()) else {
                    return vec![Outcome::Failed; trials];
                };
                let signal = &um * &theta;
                let mut res = Vec::with_capacity(trials);
                for r in 0..config.y_reps {
                    let mut rng = root.at(&[2, n as u64, u as u64, r as u64]).rng();
                    match sample_null_residual(&um, config.residual_zero_mean, &mut rng) {
                        Ok(dir) => {
                            for &nu in &config.nus {
                                res.push(judge(&svd, &(&signal + &dir * nu), &ccfg));
                            }
                        }
                        Err(_) => res.extend(std::iter::repeat_n(Outcome::Failed, k)),
                    }
                }
                res
            })
            .collect();

        let mut tallies = vec![Tally::default(); k];
        for unit in &units {
            for (i, o) in unit.iter().enumerate() {
                tallies[i % k].record(*o);
            }
        }
        let first_bad = tallies.iter().position(|t| t.non_qvx > 0);
        let boundary = match first_bad {
            Some(i) => config.nus[i],
            None => config.nus[k - 1],
        };
        boundaries.push((n, boundary, first_bad.is_none()));
        for (nu, t) in config.nus.iter().zip(&tallies) {
            let mut row: Vec<Cell> = vec![n.into(), (*nu).into()];
            row.extend(t.cells());
            row.push(config.master_seed.into());
            out.push(row);
        }
    }
    for (n, b, censored) in boundaries {
        out.add_summary(format!("boundary_nu_max_n{n}"), b);
        out.add_summary(
            format!("boundary_censored_n{n}"),
            if censored { 1.0 } else { 0.0 },
        );
    }
    Ok(out)
}
