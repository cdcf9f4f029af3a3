use nalgebra::DVector;
use rayon::prelude::*;

use super::{
    classify_config, columns, judge, metadata, root_stream, Cell, ExperimentConfig,
    ExperimentResult, Outcome, Tally, TALLY_COLUMNS,
};
use crate::error::Result;
use crate::model::SvdForm;
use crate::samplers::{
    generate_responses, sample_zero_mean_orthonormal, spectrum_family, LinearModelSpec,
};

/// Fraction of non-quasiconvex problems against distance of the spectrum from flat.
///
/// The same `U` and noise draws are reused across all `alpha` values of a given `N`.
pub fn run_delta_sweep(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let d = config.d;
    let root = root_stream(config);
    let ccfg = classify_config(config);
    let flat = DVector::from_element(d, 1.0);
    let spec = LinearModelSpec::random(flat, config.sigma2, &mut root.child(0).rng())?;
    let spectra: Vec<DVector<f64>> = config
        .alphas
        .iter()
        .map(|&a| spectrum_family(a, d))
        .collect();

    let mut cols = columns(&["n", "alpha", "s_dist_l1"], &TALLY_COLUMNS);
    cols.push("seed");
    let mut out = ExperimentResult::new(metadata(config), &cols, 3);

    for &n in &config.n_list {
        let units: Vec<Vec<Outcome>> = (0..config.u_reps)
            .into_par_iter()
            .map(|u| {
                let cells = spectra.len() * config.y_reps;
                let Ok(um) = sample_zero_mean_orthonormal(
                    n,
                    d,
                    &mut root.at(&[1, n as u64, u as u64]).rng(),
                ) else {
                    return vec![Outcome::Failed; cells];
                };
                let noises: Vec<DVector<f64>> = (0..config.y_reps)
                    .map(|y| {
                        let mut rng = root.at(&[2, n as u64, u as u64, y as u64]).rng();
                        generate_responses(&um, &spec, config.recenter, &mut rng).noise
                    })
                    .collect();
                let mut res = Vec::with_capacity(cells);
                for s in &spectra {
                    let signal = &um * s.component_mul(&spec.theta_star);
                    let svd = SvdForm::reduced(um.clone(), s.clone());
                    for e in &noises {
                        res.push(match &svd {
                            Ok(svd) => judge(svd, &(&signal + e), &ccfg),
                            Err(_) => Outcome::Failed,
                        });
                    }
                }
                res
            })
            .collect();
        for (k, (alpha, s)) in config.alphas.iter().zip(&spectra).enumerate() {
            let mut t = Tally::default();
            for unit in &units {
                for o in &unit[k * config.y_reps..(k + 1) * config.y_reps] {
                    t.record(*o);
                }
            }
            let dist: f64 = s.iter().map(|v| (v - 1.0).abs()).sum();
            let mut row: Vec<Cell> = vec![n.into(), (*alpha).into(), dist.into()];
            row.extend(t.cells());
            row.push(config.master_seed.into());
            out.push(row);
        }
    }
    Ok(out)
}
