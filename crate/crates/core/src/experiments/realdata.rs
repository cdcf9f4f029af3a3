use rand::seq::index::sample;
use rayon::prelude::*;

use super::{
    classify_config, metadata, root_stream, Cell, ExperimentConfig, ExperimentResult, LabeledCurve,
};
use crate::data::{load_csv, CsvOptions, RawDataset};
use crate::error::{Error, Result};
use crate::loocv::{problem_hash, GridSpec, LoocvCurve};
use crate::model::{pcr_truncate, standardize, StandardizedDataset};
use crate::qvx::{classify, ClassifyConfig};

struct Verdict {
    is_qvx: bool,
    n_minima: usize,
}

fn verdict(ds: &StandardizedDataset, cfg: &ClassifyConfig) -> Option<Verdict> {
    classify(&ds.svd, &ds.y, cfg).ok().map(|v| Verdict {
        is_qvx: v.is_quasiconvex,
        n_minima: v.n_minima(),
    })
}

fn curve_of(label: String, ds: &StandardizedDataset, points: usize) -> Result<LabeledCurve> {
    Ok(LabeledCurve {
        label,
        problem_hash: problem_hash(&ds.svd, &ds.y),
        curve: LoocvCurve::compute(&ds.svd, &ds.y, &GridSpec::with_points(points))?,
    })
}

/// Verdicts for the full dataset, each principal-component truncation, and random
/// row subsets. Curves of flagged non-quasiconvex instances are attached.
pub fn run_realdata(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let path = config
        .data_path
        .as_ref()
        .ok_or_else(|| Error::invalid("realdata needs data_path"))?;
    let target = config
        .target
        .as_ref()
        .ok_or_else(|| Error::invalid("realdata needs a target column"))?;
    let raw = load_csv(path, &CsvOptions::new(target.clone()))?;
    run_realdata_on(config, &raw)
}

/// As [`run_realdata`] on an already loaded dataset.
pub fn run_realdata_on(config: &ExperimentConfig, raw: &RawDataset) -> Result<ExperimentResult> {
    let ccfg = classify_config(config);
    let root = root_stream(config);
    let cols = [
        "scope", "index", "rank", "n", "is_qvx", "n_minima", "failed", "seed",
    ];
    let mut out = ExperimentResult::new(metadata(config), &cols, 3);
    let seed: Cell = config.master_seed.into();
    let row =
        |scope: &str, index: usize, rank: usize, n: usize, v: &Option<Verdict>| -> Vec<Cell> {
            vec![
                scope.into(),
                index.into(),
                rank.into(),
                n.into(),
                v.as_ref().is_some_and(|v| v.is_qvx).into(),
                v.as_ref().map_or(0, |v| v.n_minima).into(),
                v.is_none().into(),
                seed.clone(),
            ]
        };

    let full = standardize(raw)?;
    let d = full.d();
    let full_v = verdict(&full, &ccfg);
    out.push(row("full", 0, d, full.n(), &full_v));
    if full_v.as_ref().is_some_and(|v| !v.is_qvx) {
        out.curves
            .push(curve_of("full".into(), &full, config.grid_points)?);
    }

    let ranks: Vec<usize> = if config.pcr_ranks.is_empty() {
        (1..=d).collect()
    } else {
        config.pcr_ranks.clone()
    };
    let mut pcr_non_qvx = 0;
    for &r in &ranks {
        let ds = pcr_truncate(&full, r)?;
        let v = verdict(&ds, &ccfg);
        if v.as_ref().is_some_and(|v| !v.is_qvx) {
            pcr_non_qvx += 1;
            out.curves.push(curve_of(
                format!("pcr_rank_{r:02}"),
                &ds,
                config.grid_points,
            )?);
        }
        out.push(row("pcr", r, r, ds.n(), &v));
    }

    if config.subset_size > raw.n() {
        return Err(Error::invalid(format!(
            "subset size {} exceeds dataset size {}",
            config.subset_size,
            raw.n()
        )));
    }
    let subsets: Vec<(Option<StandardizedDataset>, Option<Verdict>)> = (0..config.subset_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.at(&[1, i as u64]).rng();
            let mut idx = sample(&mut rng, raw.n(), config.subset_size).into_vec();
            idx.sort_unstable();
            let ds = raw.select_rows(&idx).and_then(|s| standardize(&s)).ok();
            let v = ds.as_ref().and_then(|ds| verdict(ds, &ccfg));
            (ds, v)
        })
        .collect();
    let mut flagged = 0;
    let mut failed = 0;
    for (i, (ds, v)) in subsets.iter().enumerate() {
        match (ds, v) {
            (Some(ds), Some(v)) if !v.is_qvx => {
                flagged += 1;
                out.curves
                    .push(curve_of(format!("subset_{i:04}"), ds, config.grid_points)?);
            }
            (_, None) => failed += 1,
            _ => {}
        }
        out.push(row("subset", i, d, config.subset_size, v));
    }

    out.add_summary(
        "full_is_qvx",
        if full_v.is_some_and(|v| v.is_qvx) {
            1.0
        } else {
            0.0
        },
    );
    out.add_summary("pcr_non_qvx", pcr_non_qvx as f64);
    out.add_summary("subsets_non_qvx", flagged as f64);
    out.add_summary("subsets_failed", failed as f64);
    Ok(out)
}
