use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::SubGaussian;
use crate::util::{lin_space, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Atlas,
    DeltaSweep,
    Coherence,
    ResidualNorm,
    CoherenceDecay,
    Subgaussian,
    Realdata,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Atlas,
        Self::DeltaSweep,
        Self::Coherence,
        Self::ResidualNorm,
        Self::CoherenceDecay,
        Self::Subgaussian,
        Self::Realdata,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Atlas => "atlas",
            Self::DeltaSweep => "delta_sweep",
            Self::Coherence => "coherence",
            Self::ResidualNorm => "residual_norm",
            Self::CoherenceDecay => "coherence_decay",
            Self::Subgaussian => "subgaussian",
            Self::Realdata => "realdata",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown experiment kind {s:?}")))
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Counts reduced for minutes-long runs.
    Desk,
    Paper,
}

/// Parameters of one experiment. Fields not used by `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scale: Scale,
    pub master_seed: u64,
    pub n_list: Vec<usize>,
    pub d: usize,
    /// Rows of the nonzero block of the coherence-violating family.
    pub n0: usize,
    /// Covariate draws per cell.
    pub u_reps: usize,
    /// Response (noise or residual direction) draws per covariate draw.
    pub y_reps: usize,
    /// Covariate draws used for leverage statistics.
    pub nu_reps: usize,
    pub grid_points: usize,
    pub sigma2: f64,
    pub alphas: Vec<f64>,
    pub nus: Vec<f64>,
    pub atlas_points: usize,
    /// Second singular value in each atlas panel; the first is 1.
    pub atlas_s2: Vec<f64>,
    pub families: Vec<SubGaussian>,
    pub recenter: bool,
    /// Residual directions are also made orthogonal to the all-ones vector.
    pub residual_zero_mean: bool,
    pub data_path: Option<PathBuf>,
    pub target: Option<String>,
    pub subset_size: usize,
    pub subset_count: usize,
    /// Principal-component ranks to test; empty means `1..=D`.
    pub pcr_ranks: Vec<usize>,
    pub replications: usize,
}

impl ExperimentConfig {
    fn base(kind: ExperimentKind) -> Self {
        Self {
            kind,
            scale: Scale::Desk,
            master_seed: 0,
            n_list: vec![20],
            d: 5,
            n0: 8,
            u_reps: 20,
            y_reps: 20,
            nu_reps: 50,
            grid_points: 400,
            sigma2: 0.5,
            alphas: lin_space(0.0, 1.0, 11),
            nus: lin_space(0.0, 2.0, 60),
            atlas_points: 100,
            atlas_s2: vec![0.2, 0.5, 0.9],
            families: SubGaussian::ALL.to_vec(),
            recenter: true,
            residual_zero_mean: true,
            data_path: None,
            target: None,
            subset_size: 50,
            subset_count: 400,
            pcr_ranks: vec![],
            replications: 5,
        }
    }

    /// Reduced-count defaults.
    pub fn desk(kind: ExperimentKind) -> Self {
        let mut c = Self::base(kind);
        match kind {
            ExperimentKind::Atlas => {
                c.n_list = vec![3];
                c.d = 2;
            }
            ExperimentKind::DeltaSweep => {}
            ExperimentKind::Coherence => {
                c.n_list = vec![10, 20, 30, 50, 75, 100, 150, 200, 250, 300];
            }
            ExperimentKind::ResidualNorm => {
                c.n_list = vec![10, 20, 30];
                c.u_reps = 100;
                c.y_reps = 100;
            }
            ExperimentKind::CoherenceDecay => {
                c.n_list = (0..10).map(|i| 2500 + 2000 * i).collect();
            }
            ExperimentKind::Subgaussian => {
                c.n_list = vec![50, 100, 200, 500, 1000, 2000];
                c.sigma2 = 0.1;
                c.u_reps = 100;
                c.y_reps = 1;
            }
            ExperimentKind::Realdata => {
                c.target = Some("quality".into());
            }
        }
        c
    }

    /// Full trial counts.
    pub fn paper(kind: ExperimentKind) -> Self {
        let mut c = Self::desk(kind);
        c.scale = Scale::Paper;
        match kind {
            ExperimentKind::Atlas | ExperimentKind::Realdata => {}
            ExperimentKind::DeltaSweep => {
                c.u_reps = 100;
                c.y_reps = 100;
            }
            ExperimentKind::Coherence => {
                c.u_reps = 100;
                c.y_reps = 100;
                c.nu_reps = 500;
            }
            ExperimentKind::ResidualNorm => {
                c.n_list = (10..=30).step_by(5).collect();
                c.u_reps = 4000;
                c.y_reps = 250;
            }
            ExperimentKind::CoherenceDecay => {
                c.n_list = (0..50).map(|i| 2500 + 367 * i).collect();
                *c.n_list.last_mut().expect("nonempty") = 20500;
                c.nu_reps = 750;
            }
            ExperimentKind::Subgaussian => {
                c.u_reps = 1000;
            }
        }
        c
    }

    pub fn defaults(kind: ExperimentKind, scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(kind),
            Scale::Paper => Self::paper(kind),
        }
    }

    /// Parses a JSON object with a `kind` field; unspecified fields take the
    /// defaults of that kind at `scale` (or at the `scale` given in the object).
    pub fn from_json(text: &str, scale: Scale) -> Result<Self> {
        let overrides: serde_json::Value = serde_json::from_str(text)?;
        let obj = overrides
            .as_object()
            .ok_or_else(|| Error::invalid("experiment config must be a JSON object"))?;
        let kind: ExperimentKind = serde_json::from_value(
            obj.get("kind")
                .cloned()
                .ok_or_else(|| Error::invalid("experiment config needs a \"kind\""))?,
        )?;
        let scale = match obj.get("scale") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => scale,
        };
        let mut merged = serde_json::to_value(Self::defaults(kind, scale))?;
        let target = merged.as_object_mut().expect("struct serializes to object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d", self.d),
            ("u_reps", self.u_reps),
            ("y_reps", self.y_reps),
            ("nu_reps", self.nu_reps),
            ("atlas_points", self.atlas_points),
            ("subset_count", self.subset_count),
            ("replications", self.replications),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid_points must be at least 2"));
        }
        if self.n_list.is_empty() {
            return Err(Error::invalid("n_list is empty"));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::invalid("sigma2 must be non-negative"));
        }
        match self.kind {
            ExperimentKind::DeltaSweep if self.alphas.is_empty() => {
                Err(Error::invalid("alphas is empty"))
            }
            ExperimentKind::ResidualNorm if self.nus.is_empty() => {
                Err(Error::invalid("nus is empty"))
            }
            ExperimentKind::Atlas if self.atlas_s2.is_empty() => {
                Err(Error::invalid("atlas_s2 is empty"))
            }
            ExperimentKind::Subgaussian if self.families.is_empty() => {
                Err(Error::invalid("families is empty"))
            }
            _ => Ok(()),
        }
    }

    /// Hash of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_names() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert_eq!(
            "delta-sweep".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::DeltaSweep
        );
    }

    #[test]
    fn json_overrides_defaults() {
        let c = ExperimentConfig::from_json(r#"{"kind": "coherence", "u_reps": 3}"#, Scale::Desk)
            .unwrap();
        assert_eq!(c.u_reps, 3);
        assert_eq!(c.n0, 8);
        assert_eq!(c.n_list.len(), 10);
    }

    #[test]
    fn json_rejects_unknown_fields_and_zero_counts() {
        assert!(
            ExperimentConfig::from_json(r#"{"kind": "atlas", "bogus": 1}"#, Scale::Desk).is_err()
        );
        assert!(
            ExperimentConfig::from_json(r#"{"kind": "atlas", "u_reps": 0}"#, Scale::Desk).is_err()
        );
        assert!(ExperimentConfig::from_json(r#"{"u_reps": 1}"#, Scale::Desk).is_err());
    }

    #[test]
    fn paper_scale_counts() {
        let c = ExperimentConfig::paper(ExperimentKind::ResidualNorm);
        assert_eq!(c.u_reps * c.y_reps, 1_000_000);
        assert_eq!(c.nus.len(), 60);
        let c = ExperimentConfig::paper(ExperimentKind::CoherenceDecay);
        assert_eq!(c.n_list.len(), 50);
        assert_eq!(c.n_list[0], 2500);
        assert_eq!(c.n_list[49], 20500);
    }
}
