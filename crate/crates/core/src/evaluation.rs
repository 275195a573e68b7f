//! Exact accuracy audits and error-versus-`n` sweeps.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::engine::{run_engine, EngineKind, EngineParams};
use crate::error::{check_dims, invalid, Result};
use crate::histogram::Histogram;
use crate::query::{LinearQuery, QueryFamily};
use crate::workload::{zipf_histogram, WorkloadSpec};

/// Smallest `α` for which estimates are `(ζ, α)`-accurate, with the
/// one-sided slacks kept per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyAudit {
    pub zeta: f64,
    pub measured_alpha: f64,
    /// `None` when every query is within relative slack.
    pub worst_query_id: Option<usize>,
    /// `f(ĥ) − (1 + ζ)f(h*)`.
    pub upper_slacks: Vec<f64>,
    /// `(1 − ζ)f(h*) − f(ĥ)`.
    pub lower_slacks: Vec<f64>,
}

impl AccuracyAudit {
    /// `max{upper, lower, 0}` per query.
    pub fn per_query_slacks(&self) -> Vec<f64> {
        self.upper_slacks.iter().zip(&self.lower_slacks).map(|(u, l)| u.max(*l).max(0.0)).collect()
    }
}

pub fn audit<Q: LinearQuery>(
    h_hat: &Histogram,
    h_star: &Histogram,
    family: &QueryFamily<Q>,
    zeta: f64,
) -> Result<AccuracyAudit> {
    check_dims(h_star.domain_size(), h_hat.domain_size())?;
    audit_estimates(&family.evaluate_all(h_hat)?, &family.evaluate_all(h_star)?, zeta)
}

/// Audit of released answers against exact answers.
pub fn audit_estimates(estimates: &[f64], truth: &[f64], zeta: f64) -> Result<AccuracyAudit> {
    check_dims(truth.len(), estimates.len())?;
    if !(0.0..1.0).contains(&zeta) {
        return Err(invalid("zeta", format!("must lie in [0, 1), got {zeta}")));
    }
    let upper: Vec<f64> = estimates.iter().zip(truth).map(|(e, t)| e - (1.0 + zeta) * t).collect();
    let lower: Vec<f64> = estimates.iter().zip(truth).map(|(e, t)| (1.0 - zeta) * t - e).collect();
    let mut measured = 0.0;
    let mut worst = None;
    for (i, (u, l)) in upper.iter().zip(&lower).enumerate() {
        let s = u.max(*l);
        if s > measured {
            measured = s;
            worst = Some(i);
        }
    }
    Ok(AccuracyAudit { zeta, measured_alpha: measured, worst_query_id: worst, upper_slacks: upper, lower_slacks: lower })
}

/// `|estimate − truth| / truth` at the query with the smallest positive true answer.
pub fn relative_error_at_smallest(estimates: &[f64], truth: &[f64]) -> Option<f64> {
    truth
        .iter()
        .enumerate()
        .filter(|(_, t)| **t > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, t)| (estimates[i] - t).abs() / t)
}

/// Linear-interpolation quantile of unsorted values; `NaN` when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub engine: EngineKind,
    pub params: EngineParams,
    pub workload: WorkloadSpec,
    pub domain_size: usize,
    pub n_grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Exponent of the data-generating power law.
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
}

fn default_zipf() -> f64 {
    1.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub measured_alpha: f64,
    /// Relative error at the smallest-count query, when defined.
    pub smallest_count_relative_error: Option<f64>,
    pub runtime_ms: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: u64,
    pub trials: Vec<TrialRecord>,
    pub median_alpha: f64,
    pub p90_alpha: f64,
    pub median_smallest_count_relative_error: f64,
    pub median_runtime_ms: f64,
    pub derived_alpha: Option<f64>,
    pub failure_rate: f64,
    /// More than half of the trials failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub engine: EngineKind,
    pub params: SweepConfig,
    pub grid: Vec<GridPoint>,
}

/// Trial seed for grid point `g` and trial `t`.
fn trial_seed(base: u64, g: usize, t: usize) -> u64 {
    base ^ ((g as u64) << 32 | t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs `trials` seeded repetitions per grid point in parallel; results are
/// gathered in trial order, so the report does not depend on scheduling.
pub fn scaling_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.trials == 0 || config.n_grid.is_empty() {
        return Err(invalid("sweep", "needs at least one trial and one grid point"));
    }
    let domain = Domain::new(config.domain_size)?;
    let workload = config.workload.generate(&domain, config.seed)?;
    let mut grid = Vec::with_capacity(config.n_grid.len());
    for (g, &n) in config.n_grid.iter().enumerate() {
        let outcomes: Vec<Result<(TrialRecord, Option<f64>)>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(config.seed, g, t);
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let h_star = zipf_histogram(config.domain_size, n as usize, config.zipf_exponent, &mut rng)?;
                let start = Instant::now();
                let run = run_engine(config.engine, &h_star, &workload, &config.params, &mut rng)?;
                let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                let truth = workload.evaluate_all(&h_star)?;
                let answers = run.answers(&workload)?;
                let a = audit_estimates(&answers, &truth, config.params.zeta)?;
                Ok((
                    TrialRecord {
                        seed,
                        measured_alpha: a.measured_alpha,
                        smallest_count_relative_error: relative_error_at_smallest(&answers, &truth),
                        runtime_ms,
                        failed: run.failed,
                    },
                    run.certified_alpha,
                ))
            })
            .collect();
        let mut trials = Vec::with_capacity(outcomes.len());
        let mut derived_alpha = None;
        for o in outcomes {
            let (rec, alpha) = o?;
            derived_alpha = derived_alpha.or(alpha);
            trials.push(rec);
        }
        let alphas: Vec<f64> = trials.iter().map(|t| t.measured_alpha).collect();
        let rel: Vec<f64> = trials.iter().filter_map(|t| t.smallest_count_relative_error).collect();
        let times: Vec<f64> = trials.iter().map(|t| t.runtime_ms).collect();
        let failure_rate = trials.iter().filter(|t| t.failed).count() as f64 / trials.len() as f64;
        if failure_rate > 0.5 {
            log::warn!("engine {} failed in {:.0}% of trials at n = {n}", config.engine, 100.0 * failure_rate);
        }
        grid.push(GridPoint {
            n,
            median_alpha: quantile(&alphas, 0.5),
            p90_alpha: quantile(&alphas, 0.9),
            median_smallest_count_relative_error: quantile(&rel, 0.5),
            median_runtime_ms: quantile(&times, 0.5),
            derived_alpha,
            failure_rate,
            flagged: failure_rate > 0.5,
            trials,
        });
    }
    Ok(SweepReport { engine: config.engine, params: config.clone(), grid })
}

/// One row per trial: `n,seed,measured_alpha,smallest_count_relative_error,runtime_ms,failed`.
pub fn report_to_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["engine", "n", "seed", "measured_alpha", "smallest_count_relative_error", "runtime_ms", "failed"])?;
    for p in &report.grid {
        for t in &p.trials {
            w.write_record([
                report.engine.name().to_string(),
                p.n.to_string(),
                t.seed.to_string(),
                t.measured_alpha.to_string(),
                t.smallest_count_relative_error.map_or(String::new(), |v| v.to_string()),
                t.runtime_ms.to_string(),
                t.failed.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
