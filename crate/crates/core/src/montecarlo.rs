//! Replicated policy evaluation.
//!
//! All policies handed to one evaluation run on the same simulated paths
//! (common random numbers). Paths are independent tasks keyed by their
//! index; per-path results are gathered in index order and reduced
//! sequentially, so estimates do not depend on the thread count.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::policy::{Discount, DualCost, Policy, PolicyKind};
use crate::simulate::{PathStream, SimConfig};

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub ci95: [f64; 2],
    pub tail_bound: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl CostEstimate {
    pub fn from_samples(samples: &[f64], tail_bound: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidParameter {
                key: "n_paths",
                reason: format!("need at least 2 replications, got {n}"),
            });
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let stderr = (variance / n as f64).sqrt();
        Ok(Self {
            mean,
            stderr,
            n,
            ci95: [mean - Z95 * stderr, mean + Z95 * stderr],
            tail_bound,
            variance,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci95[0] <= value && value <= self.ci95[1]
    }

    pub fn overlaps(&self, other: &CostEstimate) -> bool {
        self.ci95[0] <= other.ci95[1] && other.ci95[0] <= self.ci95[1]
    }
}

/// Estimate of `E[a - b]` from paired samples.
pub fn paired_difference(a: &[f64], b: &[f64], tail_bound: f64) -> Result<CostEstimate> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    CostEstimate::from_samples(&d, tail_bound)
}

/// Both cost forms of one policy, with the per-path samples kept for paired
/// comparisons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    pub theta_form: CostEstimate,
    pub m_form: CostEstimate,
    pub mean_switches: f64,
    #[serde(skip)]
    pub theta_samples: Vec<f64>,
    #[serde(skip)]
    pub m_samples: Vec<f64>,
}

fn run_one(
    params: &ModelParams,
    policies: &[Policy],
    config: &SimConfig,
    path: u64,
) -> Result<Vec<DualCost>> {
    let n = config.steps();
    let mut controllers: Vec<_> = policies.iter().map(Policy::start).collect();
    let mut costs = vec![DualCost::default(); policies.len()];
    let mut disc = Discount::new(params.alpha(), config.dt);
    for step in PathStream::new(params, config, path)? {
        if step.k == n {
            break;
        }
        for (ctl, cost) in controllers.iter_mut().zip(costs.iter_mut()) {
            let (a, switched) = ctl.decide(step.k, step.m, step.x);
            cost.step(params, &disc, a, switched, step.theta, step.m);
        }
        disc.advance();
    }
    Ok(costs)
}

#[cfg(feature = "parallel")]
fn per_path(
    params: &ModelParams,
    policies: &[Policy],
    config: &SimConfig,
    n_paths: usize,
) -> Result<Vec<Vec<DualCost>>> {
    use rayon::prelude::*;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|p| run_one(params, policies, config, p))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn per_path(
    params: &ModelParams,
    policies: &[Policy],
    config: &SimConfig,
    n_paths: usize,
) -> Result<Vec<Vec<DualCost>>> {
    (0..n_paths as u64)
        .map(|p| run_one(params, policies, config, p))
        .collect()
}

/// Evaluates every policy on the same `n_paths` replications.
pub fn evaluate_policies(
    params: &ModelParams,
    policies: &[Policy],
    config: &SimConfig,
    n_paths: usize,
) -> Result<Vec<PolicyEvaluation>> {
    config.validate()?;
    if n_paths < 2 {
        return Err(Error::InvalidParameter {
            key: "n_paths",
            reason: format!("need at least 2 replications, got {n_paths}"),
        });
    }
    let results = per_path(params, policies, config, n_paths)?;
    let horizon = config.steps() as f64 * config.dt;
    let tail = (-params.alpha() * horizon).exp() / params.alpha();
    policies
        .iter()
        .enumerate()
        .map(|(i, policy)| {
            let theta: Vec<f64> = results.iter().map(|r| r[i].theta_total()).collect();
            let m: Vec<f64> = results.iter().map(|r| r[i].m_total()).collect();
            let switches =
                results.iter().map(|r| r[i].switches as f64).sum::<f64>() / n_paths as f64;
            Ok(PolicyEvaluation {
                policy: *policy,
                theta_form: CostEstimate::from_samples(&theta, tail)?,
                m_form: CostEstimate::from_samples(&m, tail)?,
                mean_switches: switches,
                theta_samples: theta,
                m_samples: m,
            })
        })
        .collect()
}

pub fn estimate_cost(
    params: &ModelParams,
    policy: &Policy,
    config: &SimConfig,
    n_paths: usize,
) -> Result<PolicyEvaluation> {
    let mut out = evaluate_policies(params, std::slice::from_ref(policy), config, n_paths)?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "B")]
    pub b: f64,
    pub estimate: CostEstimate,
    pub theta_form: CostEstimate,
    pub mean_switches: f64,
    /// Paired estimate of `cost(threshold) - cost(never switch)`.
    pub vs_never: CostEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub never_switch: Option<CostEstimate>,
    /// Grid value with the smallest estimated cost.
    pub argmin: Option<f64>,
    /// Grid values whose 95% interval overlaps the one at the argmin.
    pub overlap_set: Vec<f64>,
    /// Grid values not separated from the argmin by a paired 95% test.
    pub paired_set: Vec<f64>,
}

/// Evaluates `Threshold(B)` for every `B` in the grid plus the never-switch
/// rule, all on common random numbers. Estimates use the conditional
/// (`M`) cost form.
pub fn threshold_sweep(
    params: &ModelParams,
    config: &SimConfig,
    grid: &[f64],
    n_paths: usize,
    a_init: i8,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Ok(SweepReport {
            rows: Vec::new(),
            never_switch: None,
            argmin: None,
            overlap_set: Vec::new(),
            paired_set: Vec::new(),
        });
    }
    let mut policies = grid
        .iter()
        .map(|&b| Policy::threshold(b, a_init))
        .collect::<Result<Vec<_>>>()?;
    policies.push(Policy::never_switch(a_init)?);
    let evals = evaluate_policies(params, &policies, config, n_paths)?;
    let (never, thresholds) = evals.split_last().expect("non-empty");
    let tail = never.m_form.tail_bound;

    let mut rows = Vec::with_capacity(grid.len());
    for e in thresholds {
        let b = match e.policy.kind {
            PolicyKind::Threshold { b } => b,
            _ => unreachable!("sweep only builds threshold policies"),
        };
        rows.push(SweepRow {
            b,
            estimate: e.m_form,
            theta_form: e.theta_form,
            mean_switches: e.mean_switches,
            vs_never: paired_difference(&e.m_samples, &never.m_samples, tail)?,
        });
    }
    let best = (0..rows.len())
        .min_by(|&i, &j| rows[i].estimate.mean.total_cmp(&rows[j].estimate.mean))
        .expect("non-empty");
    let overlap_set = rows
        .iter()
        .filter(|r| r.estimate.overlaps(&rows[best].estimate))
        .map(|r| r.b)
        .collect();
    let mut paired_set = Vec::new();
    for (i, e) in thresholds.iter().enumerate() {
        let d = paired_difference(&e.m_samples, &thresholds[best].m_samples, tail)?;
        if i == best || d.ci95[0] <= 0.0 {
            paired_set.push(rows[i].b);
        }
    }
    Ok(SweepReport {
        argmin: Some(rows[best].b),
        rows,
        never_switch: Some(never.m_form),
        overlap_set,
        paired_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn reference() -> ModelParams {
        ModelParams::try_from(RawParams::default()).unwrap()
    }

    fn short() -> SimConfig {
        SimConfig {
            dt: 1e-2,
            horizon: 10.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn estimate_invariants() {
        let e = CostEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        assert_eq!(e.mean, 2.5);
        assert!((e.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((e.ci95[1] - e.mean - Z95 * e.stderr).abs() < 1e-15);
        assert!(CostEstimate::from_samples(&[1.0], 0.0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let p = reference();
        let pol = [
            Policy::threshold(0.64, 1).unwrap(),
            Policy::never_switch(1).unwrap(),
        ];
        let a = evaluate_policies(&p, &pol, &short(), 40).unwrap();
        let b = evaluate_policies(&p, &pol, &short(), 40).unwrap();
        assert_eq!(a, b);
        let other = SimConfig { seed: 7, ..short() };
        let c = evaluate_policies(&p, &pol, &other, 40).unwrap();
        assert_ne!(a[0].m_form.mean, c[0].m_form.mean);
    }

    #[test]
    fn single_policy_matches_joint_run() {
        let p = reference();
        let pol = [
            Policy::threshold(0.5, -1).unwrap(),
            Policy::fixed_lag_sign(50, 1).unwrap(),
        ];
        let joint = evaluate_policies(&p, &pol, &short(), 20).unwrap();
        let alone = estimate_cost(&p, &pol[1], &short(), 20).unwrap();
        assert_eq!(joint[1], alone);
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        let r = threshold_sweep(&reference(), &short(), &[], 10, 1).unwrap();
        assert!(r.rows.is_empty() && r.argmin.is_none());
    }

    #[test]
    fn sweep_rejects_out_of_range_grid() {
        assert!(threshold_sweep(&reference(), &short(), &[0.5, 1.2], 10, 1).is_err());
    }

    #[test]
    fn paired_difference_of_identical_samples_is_zero() {
        let s = [0.3, 0.9, 1.4];
        let d = paired_difference(&s, &s, 0.0).unwrap();
        assert_eq!((d.mean, d.stderr), (0.0, 0.0));
        assert!(paired_difference(&s, &s[..2], 0.0).is_err());
    }
}
