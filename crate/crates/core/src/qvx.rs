//! Quasiconvexity classification of a leave-one-out curve over `[grid_min, inf]`.
//!
//! Stationary points are located from sign changes of `L'` on a log grid and refined
//! by bisection. The two ends of the range are boundary candidates: the left end is a
//! minimum when the curve rises away from it, and `lambda = inf` (value `||Y||^2`) is a
//! minimum when the curve is still falling at the right end of the grid. A minimum
//! counts only if the loss rises by more than `1e-9 * tail_limit` on both sides before
//! the next stationary point; shallower min/max pairs are cancelled.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loocv::{GridSpec, LoocvEvaluator, LossDerivs};
use crate::model::SvdForm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub grid: GridSpec,
    /// Bisection stops when `hi / lo - 1` falls below this.
    pub root_rel_tol: f64,
    /// Persistence threshold as a fraction of the tail limit.
    pub persistence_rel: f64,
    pub densify_factor: usize,
    pub max_retries: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            root_rel_tol: 1e-10,
            persistence_rel: 1e-9,
            densify_factor: 4,
            max_retries: 2,
        }
    }
}

impl ClassifyConfig {
    pub fn with_grid(grid: GridSpec) -> Self {
        Self {
            grid,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

/// A point on the curve. `lambda` may be infinite for the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(with = "lambda_serde")]
    pub lambda: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub lambda: f64,
    pub loss: f64,
    pub hess: f64,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvxVerdict {
    #[serde(rename = "is_qvx")]
    pub is_quasiconvex: bool,
    /// Strict local minima over `[grid_min, inf]`, sorted by `lambda`.
    pub minima: Vec<CurvePoint>,
    pub tail_limit: f64,
    pub grid: GridInfo,
    /// Run-length compressed signs of `L'` over the grid, e.g. `"-+-"`.
    pub sign_pattern: String,
    /// Whether `lambda = inf` is the global minimum.
    pub includes_tail: bool,
    /// Refined interior roots of `L'`, before persistence filtering.
    pub stationary: Vec<Stationary>,
    /// Some raw min/max gap lies within three decades of the persistence threshold.
    pub near_threshold: bool,
}

impl QvxVerdict {
    pub fn n_minima(&self) -> usize {
        self.minima.len()
    }
}

pub fn classify(svd: &SvdForm, y: &DVector<f64>, cfg: &ClassifyConfig) -> Result<QvxVerdict> {
    classify_evaluator(&LoocvEvaluator::new(svd, y), cfg)
}

/// As [`classify`], with automatic grid densification on [`Error::GridTooCoarse`].
pub fn classify_evaluator(eval: &LoocvEvaluator, cfg: &ClassifyConfig) -> Result<QvxVerdict> {
    let mut grid = cfg.grid;
    let mut last = None;
    for _ in 0..=cfg.max_retries {
        match classify_once(eval, cfg, &grid) {
            Err(e @ Error::GridTooCoarse { .. }) => {
                last = Some(e);
                grid.points = (grid.points - 1) * cfg.densify_factor + 1;
            }
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

fn sign_char(g: f64) -> char {
    if g < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn bisect_log(
    lo: f64,
    hi: f64,
    rel_tol: f64,
    positive_at_lo: bool,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    while b / a - 1.0 > rel_tol {
        let mid = (a * b).sqrt();
        if mid <= a || mid >= b {
            break;
        }
        if (f(mid)? >= 0.0) == positive_at_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a * b).sqrt())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lambda: f64,
    loss: f64,
    kind: ExtremumKind,
}

fn classify_once(
    eval: &LoocvEvaluator,
    cfg: &ClassifyConfig,
    grid: &GridSpec,
) -> Result<QvxVerdict> {
    let lambdas = grid.resolve(eval.mean_sq_singular())?;
    let pts: Vec<LossDerivs> = lambdas
        .iter()
        .map(|&l| eval.eval(l))
        .collect::<Result<_>>()?;
    let tail = eval.tail_limit();
    let grad = |l: f64| eval.eval(l).map(|p| p.grad);
    let hess = |l: f64| eval.eval(l).map(|p| p.hess);

    let mut sign_pattern = String::new();
    for p in &pts {
        let c = sign_char(p.grad);
        if !sign_pattern.ends_with(c) {
            sign_pattern.push(c);
        }
    }

    let mut stationary = Vec::new();
    for i in 0..pts.len() - 1 {
        let (l0, l1) = (lambdas[i], lambdas[i + 1]);
        let (p0, p1) = (pts[i], pts[i + 1]);
        let g_pos = p0.grad >= 0.0;
        if g_pos != (p1.grad >= 0.0) {
            let root = bisect_log(l0, l1, cfg.root_rel_tol, g_pos, grad)?;
            let at = eval.eval(root)?;
            let scale = 1e-12 * tail / (root * root);
            let kind = if at.hess.abs() >= scale {
                if at.hess > 0.0 {
                    ExtremumKind::Min
                } else {
                    ExtremumKind::Max
                }
            } else if at.loss <= p0.loss.min(p1.loss) {
                ExtremumKind::Min
            } else {
                ExtremumKind::Max
            };
            stationary.push(Stationary {
                lambda: root,
                loss: at.loss,
                hess: at.hess,
                kind,
            });
        } else if (p0.hess >= 0.0) != (p1.hess >= 0.0) {
            // L' has an interior extremum here; if it crosses zero there are two hidden roots
            let h = bisect_log(l0, l1, cfg.root_rel_tol, p0.hess >= 0.0, hess)?;
            if (grad(h)? >= 0.0) != g_pos {
                return Err(Error::GridTooCoarse { lambda: l0 });
            }
        }
    }

    let first = pts[0];
    let last = pts[pts.len() - 1];
    let boundary_kind = |rising: bool| {
        if rising {
            ExtremumKind::Min
        } else {
            ExtremumKind::Max
        }
    };
    let mut seq = vec![Candidate {
        lambda: lambdas[0],
        loss: first.loss,
        kind: boundary_kind(first.grad > 0.0),
    }];
    seq.extend(stationary.iter().map(|s| Candidate {
        lambda: s.lambda,
        loss: s.loss,
        kind: s.kind,
    }));
    seq.push(Candidate {
        lambda: f64::INFINITY,
        loss: tail,
        kind: boundary_kind(last.grad < 0.0),
    });

    let thr = cfg.persistence_rel * tail;
    let seq = alternate(seq);
    let near_threshold = seq
        .windows(2)
        .map(|w| (w[0].loss - w[1].loss).abs())
        .any(|gap| gap >= thr * 1e-3 && gap <= thr * 1e3);
    let kept = cancel_shallow_pairs(seq, thr);

    let minima: Vec<CurvePoint> = kept
        .iter()
        .filter(|c| c.kind == ExtremumKind::Min)
        .map(|c| CurvePoint {
            lambda: c.lambda,
            loss: c.loss,
        })
        .collect();
    let best = minima
        .iter()
        .copied()
        .min_by(|a, b| a.loss.total_cmp(&b.loss));
    let includes_tail = best.is_some_and(|b| b.lambda.is_infinite());

    Ok(QvxVerdict {
        is_quasiconvex: minima.len() <= 1,
        minima,
        tail_limit: tail,
        grid: GridInfo {
            min: lambdas[0],
            max: lambdas[lambdas.len() - 1],
            points: lambdas.len(),
        },
        sign_pattern,
        includes_tail,
        stationary,
        near_threshold,
    })
}

/// Merges consecutive candidates of the same kind, keeping the more extreme one.
fn alternate(seq: Vec<Candidate>) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::with_capacity(seq.len());
    for c in seq {
        match out.last_mut() {
            Some(prev) if prev.kind == c.kind => {
                let replace = match c.kind {
                    ExtremumKind::Min => c.loss < prev.loss,
                    ExtremumKind::Max => c.loss > prev.loss,
                };
                if replace {
                    *prev = c;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Repeatedly removes the adjacent min/max pair with the smallest loss difference
/// while that difference is at most `thr`.
fn cancel_shallow_pairs(mut seq: Vec<Candidate>, thr: f64) -> Vec<Candidate> {
    while seq.len() > 1 {
        let (i, gap) = seq
            .windows(2)
            .map(|w| (w[0].loss - w[1].loss).abs())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("len > 1");
        if gap > thr {
            break;
        }
        seq.drain(i..i + 2);
        if seq.iter().all(|c| c.kind == ExtremumKind::Max) {
            break;
        }
    }
    seq
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaCensus {
    pub count: usize,
    pub locations: Vec<f64>,
    pub values: Vec<f64>,
    /// `max / min - 1` over the minimum values; zero for a single minimum.
    pub gap: f64,
}

pub fn minima_census(verdict: &QvxVerdict) -> MinimaCensus {
    let values: Vec<f64> = verdict.minima.iter().map(|m| m.loss).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    MinimaCensus {
        count: values.len(),
        locations: verdict.minima.iter().map(|m| m.lambda).collect(),
        gap: if values.len() > 1 { hi / lo - 1.0 } else { 0.0 },
        values,
    }
}

/// Finite numbers as JSON numbers, infinity as the string `"inf"`.
pub mod lambda_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("bad lambda {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(loss: f64, kind: ExtremumKind) -> Candidate {
        Candidate {
            lambda: 1.0,
            loss,
            kind,
        }
    }

    #[test]
    fn shallow_pairs_cancel() {
        use ExtremumKind::*;
        let seq = vec![
            cand(1.0, Min),
            cand(1.0 + 1e-12, Max),
            cand(1.0 - 1e-12, Min),
            cand(2.0, Max),
            cand(0.5, Min),
        ];
        let kept = cancel_shallow_pairs(seq, 1e-9);
        let mins: Vec<f64> = kept
            .iter()
            .filter(|c| c.kind == Min)
            .map(|c| c.loss)
            .collect();
        assert_eq!(mins.len(), 2);
        assert_eq!(mins[1], 0.5);
    }

    #[test]
    fn deep_pairs_survive() {
        use ExtremumKind::*;
        let seq = vec![cand(1.0, Min), cand(2.0, Max), cand(1.5, Min)];
        assert_eq!(cancel_shallow_pairs(seq, 1e-9).len(), 3);
    }

    #[test]
    fn alternate_keeps_extremes() {
        use ExtremumKind::*;
        let seq = alternate(vec![
            cand(1.0, Min),
            cand(0.5, Min),
            cand(3.0, Max),
            cand(4.0, Max),
        ]);
        assert_eq!(seq.len(), 2);
        assert_eq!(seq[0].loss, 0.5);
        assert_eq!(seq[1].loss, 4.0);
    }

    #[test]
    fn census_of_single_minimum() {
        let v = QvxVerdict {
            is_quasiconvex: true,
            minima: vec![CurvePoint {
                lambda: 2.0,
                loss: 3.0,
            }],
            tail_limit: 10.0,
            grid: GridInfo {
                min: 1e-6,
                max: 1e6,
                points: 400,
            },
            sign_pattern: "-+".into(),
            includes_tail: false,
            stationary: vec![],
            near_threshold: false,
        };
        let c = minima_census(&v);
        assert_eq!(c.count, 1);
        assert_eq!(c.gap, 0.0);
    }

    #[test]
    fn infinite_lambda_serializes_as_inf() {
        let p = CurvePoint {
            lambda: f64::INFINITY,
            loss: 1.0,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"lambda":"inf","loss":1.0}"#);
        let back: CurvePoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
