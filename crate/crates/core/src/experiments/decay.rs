use rayon::prelude::*;

use super::{metadata, root_stream, Cell, ExperimentConfig, ExperimentResult};
use crate::error::Result;
use crate::samplers::{sample_unconstrained_orthonormal, sample_zero_mean_orthonormal};
use crate::stats::{loglog_fit, mean, std_error};

const FAMILIES: [&str; 2] = ["zero_mean", "unconstrained"];

/// Mean maximum leverage of zero-mean and unconstrained orthonormal draws against `N`.
pub fn run_coherence_decay(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let d = config.d;
    let root = root_stream(config);
    let cols = [
        "n",
        "family",
        "reps",
        "failures",
        "mean_nu_max",
        "se_nu_max",
        "max_nu_max",
        "seed",
    ];
    let mut out = ExperimentResult::new(metadata(config), &cols, 2);
    let mut means: [Vec<f64>; 2] = [vec![], vec![]];

    for &n in &config.n_list {
        for (f, family) in FAMILIES.iter().enumerate() {
            let draws: Vec<Option<f64>> = (0..config.nu_reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = root.at(&[1, n as u64, f as u64, r as u64]).rng();
                    let u = if f == 0 {
                        sample_zero_mean_orthonormal(n, d, &mut rng)
                    } else {
                        sample_unconstrained_orthonormal(n, d, &mut rng)
                    };
                    u.ok().map(|u| {
                        u.row_iter()
                            .map(|row| row.norm_squared())
                            .fold(0.0, f64::max)
                    })
                })
                .collect();
            let vals: Vec<f64> = draws.iter().flatten().copied().collect();
            let failures = draws.len() - vals.len();
            let m = mean(&vals);
            means[f].push(m);
            let row: Vec<Cell> = vec![
                n.into(),
                (*family).into(),
                config.nu_reps.into(),
                failures.into(),
                m.into(),
                std_error(&vals).into(),
                vals.iter().copied().fold(f64::NAN, f64::max).into(),
                config.master_seed.into(),
            ];
            out.push(row);
        }
    }
    if config.n_list.len() >= 2 {
        let ns: Vec<f64> = config.n_list.iter().map(|&n| n as f64).collect();
        for (f, family) in FAMILIES.iter().enumerate() {
            out.add_summary(
                format!("slope_mean_nu_max_{family}"),
                loglog_fit(&ns, &means[f]).slope,
            );
        }
    }
    Ok(out)
}
