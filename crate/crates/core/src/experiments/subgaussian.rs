use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    classify_config, columns, judge, metadata, root_stream, Cell, ExperimentConfig,
    ExperimentResult, Outcome, Tally, TALLY_COLUMNS,
};
use crate::data::RawDataset;
use crate::error::Result;
use crate::model::standardize;
use crate::samplers::{sample_subgaussian_x, LinearModelSpec};

/// Well-specified problems with i.i.d. unit-variance covariates, standardized
/// before classification.
pub fn run_subgaussian(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let d = config.d;
    let root = root_stream(config);
    let ccfg = classify_config(config);
    let flat = DVector::from_element(d, 1.0);
    let theta = LinearModelSpec::random(flat, config.sigma2, &mut root.child(0).rng())?.theta_star;
    let sigma = config.sigma2.sqrt();

    let mut cols = columns(&["n", "family", "sigma2"], &TALLY_COLUMNS);
    cols.extend(["mean_spectral_ratio", "seed"]);
    let mut out = ExperimentResult::new(metadata(config), &cols, 3);

    for &n in &config.n_list {
        for (f, family) in config.families.iter().enumerate() {
            let units: Vec<(f64, Vec<Outcome>)> = (0..config.u_reps)
                .into_par_iter()
                .map(|t| {
                    let mut rng = root.at(&[1, n as u64, f as u64, t as u64]).rng();
                    let x = sample_subgaussian_x(n, d, *family, &mut rng);
                    let signal = &x * &theta;
                    let mut ratio = f64::NAN;
                    let outcomes = (0..config.y_reps)
                        .map(|y| {
                            let mut rng =
                                root.at(&[2, n as u64, f as u64, t as u64, y as u64]).rng();
                            let noise = DVector::from_fn(n, |_, _| {
                                sigma * rng.sample::<f64, _>(StandardNormal)
                            });
                            let ds = RawDataset::from_matrix(x.clone(), &signal + noise)
                                .and_then(|raw| standardize(&raw));
                            match ds {
                                Ok(ds) => {
                                    ratio = ds.svd.s[0] / ds.svd.s[d - 1];
                                    judge(&ds.svd, &ds.y, &ccfg)
                                }
                                Err(_) => Outcome::Failed,
                            }
                        })
                        .collect();
                    (ratio, outcomes)
                })
                .collect();
            let mut t = Tally::default();
            units.iter().flat_map(|(_, o)| o).for_each(|o| t.record(*o));
            let ratios: Vec<f64> = units
                .iter()
                .map(|u| u.0)
                .filter(|r| r.is_finite())
                .collect();
            let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let mut row: Vec<Cell> = vec![n.into(), family.name().into(), config.sigma2.into()];
            row.extend(t.cells());
            row.extend([mean_ratio.into(), config.master_seed.into()]);
            out.push(row);
        }
    }
    Ok(out)
}
