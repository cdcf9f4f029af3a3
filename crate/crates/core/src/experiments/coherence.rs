use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    classify_config, columns, judge, metadata, root_stream, Cell, ExperimentConfig,
    ExperimentResult, Outcome, Tally, TALLY_COLUMNS,
};
use crate::error::Result;
use crate::model::SvdForm;
use crate::samplers::{
    generate_responses, pad_with_zero_rows, sample_zero_mean_orthonormal, LinearModelSpec,
};
use crate::stats::loglog_fit;

const FAMILIES: [&str; 2] = ["satisfying", "violating"];

/// Fraction of non-quasiconvex problems against `N` for a family whose maximum
/// leverage decays and one whose `N0 x D` nonzero block is padded with zero rows.
///
/// The violating family reuses the same `nu_reps` small blocks at every `N`. The
/// first `u_reps` covariate draws of each family are also used for classification.
pub fn run_coherence(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let d = config.d;
    let root = root_stream(config);
    let ccfg = classify_config(config);
    let flat = DVector::from_element(d, 1.0);
    let spec = LinearModelSpec::random(flat.clone(), config.sigma2, &mut root.child(0).rng())?;
    let draws = config.u_reps.max(config.nu_reps);

    let mut cols = columns(&["n", "family"], &TALLY_COLUMNS);
    cols.extend(["nu_max_max", "nu_max_min", "nu_max_mean", "seed"]);
    let mut out = ExperimentResult::new(metadata(config), &cols, 2);
    let mut stats: [Vec<(f64, f64)>; 2] = [vec![], vec![]];

    for &n in &config.n_list {
        for (f, family) in FAMILIES.iter().enumerate() {
            let units: Vec<(f64, Vec<Outcome>)> = (0..draws)
                .into_par_iter()
                .map(|u| {
                    let classify = u < config.u_reps;
                    let trials = if classify { config.y_reps } else { 0 };
                    let drawn: Result<DMatrix<f64>> = if f == 0 {
                        let mut rng = root.at(&[1, n as u64, 0, u as u64]).rng();
                        sample_zero_mean_orthonormal(n, d, &mut rng)
                    } else {
                        let mut rng = root.at(&[1, 0, 1, u as u64]).rng();
                        sample_zero_mean_orthonormal(config.n0, d, &mut rng).and_then(|top| {
                            if config.n0 > n {
                                Err(crate::Error::invalid("N0 exceeds N"))
                            } else {
                                Ok(pad_with_zero_rows(&top, n))
                            }
                        })
                    };
                    let Ok(um) = drawn else {
                        return (f64::NAN, vec![Outcome::Failed; trials]);
                    };
                    let nu_max = um.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
                    let Ok(svd) = SvdForm::reduced(um.clone(), flat.clone()) else {
                        return (nu_max, vec![Outcome::Failed; trials]);
                    };
                    let outcomes = (0..trials)
                        .map(|y| {
                            let mut rng =
                                root.at(&[2, n as u64, f as u64, u as u64, y as u64]).rng();
                            let r = generate_responses(&um, &spec, config.recenter, &mut rng);
                            judge(&svd, &r.y, &ccfg)
                        })
                        .collect();
                    (nu_max, outcomes)
                })
                .collect();

            let mut t = Tally::default();
            units.iter().flat_map(|(_, o)| o).for_each(|o| t.record(*o));
            let nus: Vec<f64> = units
                .iter()
                .map(|(v, _)| *v)
                .filter(|v| v.is_finite())
                .collect();
            let max = nus.iter().copied().fold(f64::NAN, f64::max);
            let min = nus.iter().copied().fold(f64::NAN, f64::min);
            let mean = nus.iter().sum::<f64>() / nus.len() as f64;
            stats[f].push((max, min));

            let mut row: Vec<Cell> = vec![n.into(), (*family).into()];
            row.extend(t.cells());
            row.extend([
                max.into(),
                min.into(),
                mean.into(),
                config.master_seed.into(),
            ]);
            out.push(row);
        }
    }

    if config.n_list.len() >= 2 {
        let ns: Vec<f64> = config.n_list.iter().map(|&n| n as f64).collect();
        let sat_max: Vec<f64> = stats[0].iter().map(|s| s.0).collect();
        let viol_min: Vec<f64> = stats[1].iter().map(|s| s.1).collect();
        out.add_summary(
            "slope_max_nu_max_satisfying",
            loglog_fit(&ns, &sat_max).slope,
        );
        out.add_summary(
            "slope_min_nu_max_violating",
            loglog_fit(&ns, &viol_min).slope,
        );
    }
    Ok(out)
}
