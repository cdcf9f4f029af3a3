//! Seeded simulation studies and the real-data search.
//!
//! Every run is a pure function of its [`ExperimentConfig`]. Trials draw from
//! streams derived from `(master_seed, kind, cell, trial)` and are collected in
//! config order, so the output does not depend on the worker count.

mod atlas;
mod coherence;
mod config;
mod decay;
mod delta_sweep;
mod realdata;
mod residual;
mod result;
mod subgaussian;

use nalgebra::DVector;

pub use atlas::{atlas_problem, run_atlas, zero_sum_basis};
pub use coherence::run_coherence;
pub use config::{ExperimentConfig, ExperimentKind, Scale};
pub use decay::run_coherence_decay;
pub use delta_sweep::run_delta_sweep;
pub use realdata::{run_realdata, run_realdata_on};
pub use residual::run_residual_norm;
pub use result::{Cell, ExperimentResult, LabeledCurve, Metadata};
pub use subgaussian::run_subgaussian;

use crate::error::{Error, Result};
use crate::loocv::{GridSpec, LoocvEvaluator};
use crate::model::SvdForm;
use crate::qvx::{classify_evaluator, ClassifyConfig};
use crate::samplers::RngStream;
use crate::stats::{mean, proportion_se, sample_std};

pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    match config.kind {
        ExperimentKind::Atlas => run_atlas(config),
        ExperimentKind::DeltaSweep => run_delta_sweep(config),
        ExperimentKind::Coherence => run_coherence(config),
        ExperimentKind::ResidualNorm => run_residual_norm(config),
        ExperimentKind::CoherenceDecay => run_coherence_decay(config),
        ExperimentKind::Subgaussian => run_subgaussian(config),
        ExperimentKind::Realdata => run_realdata(config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Qvx,
    NonQvx,
    Failed,
}

/// Per-cell outcome counts. `fraction` is taken over classified trials; failures
/// are reported separately.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub qvx: usize,
    pub non_qvx: usize,
    pub failures: usize,
}

impl Tally {
    pub fn record(&mut self, o: Outcome) {
        match o {
            Outcome::Qvx => self.qvx += 1,
            Outcome::NonQvx => self.non_qvx += 1,
            Outcome::Failed => self.failures += 1,
        }
    }

    pub fn trials(&self) -> usize {
        self.qvx + self.non_qvx + self.failures
    }

    pub fn fraction(&self) -> f64 {
        let n = self.qvx + self.non_qvx;
        if n == 0 {
            f64::NAN
        } else {
            self.non_qvx as f64 / n as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        proportion_se(self.non_qvx, self.qvx + self.non_qvx)
    }

    /// `trials, qvx, non_qvx, failures, fraction_non_qvx, stderr`.
    pub(crate) fn cells(&self) -> Vec<Cell> {
        vec![
            self.trials().into(),
            self.qvx.into(),
            self.non_qvx.into(),
            self.failures.into(),
            self.fraction().into(),
            self.stderr().into(),
        ]
    }
}

pub(crate) const TALLY_COLUMNS: [&str; 6] = [
    "trials",
    "qvx",
    "non_qvx",
    "failures",
    "fraction_non_qvx",
    "stderr",
];

pub(crate) fn columns(keys: &[&'static str], values: &[&'static str]) -> Vec<&'static str> {
    keys.iter().chain(values).copied().collect()
}

pub(crate) fn classify_config(config: &ExperimentConfig) -> ClassifyConfig {
    ClassifyConfig::with_grid(GridSpec::with_points(config.grid_points))
}

pub(crate) fn judge(svd: &SvdForm, y: &DVector<f64>, cfg: &ClassifyConfig) -> Outcome {
    match classify_evaluator(&LoocvEvaluator::new(svd, y), cfg) {
        Ok(v) if v.is_quasiconvex => Outcome::Qvx,
        Ok(_) => Outcome::NonQvx,
        Err(_) => Outcome::Failed,
    }
}

pub(crate) fn root_stream(config: &ExperimentConfig) -> RngStream {
    let tag = ExperimentKind::ALL
        .iter()
        .position(|k| *k == config.kind)
        .expect("known kind") as u64;
    RngStream::new(config.master_seed).child(tag)
}

pub(crate) fn metadata(config: &ExperimentConfig) -> Metadata {
    Metadata {
        kind: config.kind,
        scale: config.scale,
        master_seed: config.master_seed,
        config_hash: config.config_hash(),
    }
}

/// Seed for replication `rep` of a run seeded with `master_seed`.
pub fn replication_seed(master_seed: u64, rep: usize) -> u64 {
    use rand::RngCore;
    RngStream::new(master_seed)
        .at(&[u64::MAX, rep as u64])
        .rng()
        .next_u64()
}

/// Runs `config` once per seed and reports, for every numeric value column, the
/// mean and twice the sample standard deviation across runs.
pub fn replicate_with_seeds(config: &ExperimentConfig, seeds: &[u64]) -> Result<ExperimentResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("replication needs at least one seed"));
    }
    let runs: Vec<ExperimentResult> = seeds
        .iter()
        .map(|&s| {
            let mut c = config.clone();
            c.master_seed = s;
            run(&c)
        })
        .collect::<Result<_>>()?;
    let first = &runs[0];
    let key_cols = &first.columns[..first.n_keys];
    let value_cols: Vec<usize> = (first.n_keys..first.columns.len())
        .filter(|&j| first.columns[j] != "seed")
        .filter(|&j| first.rows.iter().all(|r| r[j].as_f64().is_some()))
        .collect();

    let mut names: Vec<String> = key_cols.to_vec();
    for &j in &value_cols {
        names.push(format!("{}_mean", first.columns[j]));
        names.push(format!("{}_err", first.columns[j]));
    }
    names.push("reps".into());
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut out = ExperimentResult::new(metadata(config), &name_refs, first.n_keys);

    for (i, row) in first.rows.iter().enumerate() {
        let mut cells: Vec<Cell> = row[..first.n_keys].to_vec();
        for r in &runs {
            if r.rows.len() != first.rows.len() || r.rows[i][..first.n_keys] != row[..first.n_keys]
            {
                return Err(Error::invalid("replications produced misaligned rows"));
            }
        }
        for &j in &value_cols {
            let vals: Vec<f64> = runs
                .iter()
                .map(|r| r.rows[i][j].as_f64().unwrap_or(f64::NAN))
                .collect();
            cells.push(mean(&vals).into());
            cells.push((2.0 * sample_std(&vals)).into());
        }
        cells.push(runs.len().into());
        out.push(cells);
    }
    let keys: Vec<String> = first.summary.iter().map(|(k, _)| k.clone()).collect();
    for key in keys {
        let vals: Vec<f64> = runs.iter().filter_map(|r| r.summary_value(&key)).collect();
        out.add_summary(format!("{key}_mean"), mean(&vals));
        out.add_summary(format!("{key}_err"), 2.0 * sample_std(&vals));
    }
    out.add_summary("replications", seeds.len() as f64);
    Ok(out)
}

/// [`replicate_with_seeds`] with `reps` seeds derived from the config's master seed.
pub fn replicate_with_errorbars(
    config: &ExperimentConfig,
    reps: usize,
) -> Result<ExperimentResult> {
    let seeds: Vec<u64> = (0..reps)
        .map(|r| replication_seed(config.master_seed, r))
        .collect();
    replicate_with_seeds(config, &seeds)
}
