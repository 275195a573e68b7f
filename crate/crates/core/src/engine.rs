//! Uniform front end over the release mechanisms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{laplace_per_query, ExponentialMechanism, DEFAULT_ENUMERATION_CAP};
use crate::error::{invalid, Result};
use crate::histogram::Histogram;
use crate::prem::{run_prem, PremConfig, PremResult};
use crate::privacy::{AccountingConstants, Composition, LedgerEntry, PrivacyBudget, PrivacyLedger};
use crate::reductions::{run_prem_real, RealPremResult};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    /// Approximate-DP release.
    Prem,
    /// Pure-DP release.
    PremPure,
    /// Exponential mechanism over sparse histograms; small domains only.
    Expmech,
    /// Independent Laplace noise on each query answer.
    Laplace,
}

impl EngineKind {
    pub const ALL: [EngineKind; 4] = [EngineKind::Prem, EngineKind::PremPure, EngineKind::Expmech, EngineKind::Laplace];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Prem => "prem",
            EngineKind::PremPure => "prem-pure",
            EngineKind::Expmech => "expmech",
            EngineKind::Laplace => "laplace",
        }
    }

    /// Whether the engine releases a histogram rather than query answers.
    pub fn is_synthetic(self) -> bool {
        !matches!(self, EngineKind::Laplace)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("engine", format!("unknown engine {s:?}; expected prem, prem-pure, expmech or laplace")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineParams {
    pub epsilon: f64,
    /// Ignored by the pure engines.
    pub delta: f64,
    pub beta: f64,
    pub zeta: f64,
    pub accounting: AccountingConstants,
    pub c_pure: f64,
    /// Exponential-mechanism support size; defaults to the largest `k` with `|X|^k` under the cap.
    pub support_size: Option<usize>,
}

impl Default for EngineParams {
    fn default() -> Self {
        let p = PremConfig::default();
        EngineParams {
            epsilon: p.epsilon,
            delta: p.delta,
            beta: p.beta,
            zeta: p.zeta,
            accounting: p.accounting,
            c_pure: p.c_pure,
            support_size: None,
        }
    }
}

impl EngineParams {
    /// The budget the engine is asked to respect.
    pub fn budget(&self, kind: EngineKind) -> PrivacyBudget {
        match kind {
            EngineKind::Prem => PrivacyBudget { epsilon: self.epsilon, delta: self.delta },
            _ => PrivacyBudget { epsilon: self.epsilon, delta: 0.0 },
        }
    }

    fn prem_config(&self, kind: EngineKind) -> PremConfig {
        let mut c = PremConfig::default();
        c.epsilon = self.epsilon;
        c.delta = if kind == EngineKind::Prem { self.delta } else { 0.0 };
        c.beta = self.beta;
        c.zeta = self.zeta;
        c.accounting = self.accounting;
        c.c_pure = self.c_pure;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Release {
    Histogram(Histogram),
    Estimates(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trace {
    Binary(PremResult),
    Real(RealPremResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRun {
    pub engine: EngineKind,
    pub release: Release,
    /// Additive slack the engine certifies, when it has one.
    pub certified_alpha: Option<f64>,
    pub failed: bool,
    pub ledger: PrivacyLedger,
    pub trace: Option<Trace>,
}

impl EngineRun {
    /// Answers to `workload`, either evaluated on the released histogram or released directly.
    pub fn answers(&self, workload: &Workload) -> Result<Vec<f64>> {
        match &self.release {
            Release::Histogram(h) => workload.evaluate_all(h),
            Release::Estimates(v) => Ok(v.clone()),
        }
    }
}

fn single_entry(label: &str, per_step: PrivacyBudget, steps: u64) -> PrivacyLedger {
    let mut ledger = PrivacyLedger::default();
    ledger.push(LedgerEntry {
        label: label.into(),
        per_step,
        planned_steps: steps,
        used_steps: steps,
        composition: Composition::Basic,
    });
    ledger
}

fn default_support_size(domain_size: usize) -> usize {
    let mut k = 0usize;
    while (domain_size as f64).powi(k as i32 + 1) <= DEFAULT_ENUMERATION_CAP as f64 {
        k += 1;
        if k >= 64 {
            break;
        }
    }
    k
}

pub fn run_engine<R: Rng + ?Sized>(
    kind: EngineKind,
    h_star: &Histogram,
    workload: &Workload,
    params: &EngineParams,
    rng: &mut R,
) -> Result<EngineRun> {
    crate::workload::check_workload(h_star, workload)?;
    match kind {
        EngineKind::Prem | EngineKind::PremPure => {
            let config = params.prem_config(kind);
            match workload {
                Workload::Binary(f) => {
                    let r = run_prem(h_star, f, &config, rng)?;
                    Ok(EngineRun {
                        engine: kind,
                        release: Release::Histogram(r.synthetic.clone()),
                        certified_alpha: Some(r.certified_alpha),
                        failed: r.failed,
                        ledger: r.ledger.clone(),
                        trace: Some(Trace::Binary(r)),
                    })
                }
                Workload::Real(f) => {
                    let r = run_prem_real(h_star, f, &config, rng)?;
                    Ok(EngineRun {
                        engine: kind,
                        release: Release::Histogram(r.synthetic().clone()),
                        certified_alpha: Some(r.certified_alpha),
                        failed: r.failed(),
                        ledger: r.binary.ledger.clone(),
                        trace: Some(Trace::Real(r)),
                    })
                }
            }
        }
        EngineKind::Expmech => {
            let Workload::Binary(f) = workload else {
                return Err(invalid("engine", "expmech supports binary query families only"));
            };
            let k = params.support_size.unwrap_or_else(|| default_support_size(h_star.domain_size()));
            if k == 0 {
                return Err(invalid("support size", "domain too large for exponential-mechanism enumeration"));
            }
            let mech = ExponentialMechanism::new(h_star, f, params.epsilon, params.zeta, k, DEFAULT_ENUMERATION_CAP)?;
            Ok(EngineRun {
                engine: kind,
                release: Release::Histogram(mech.sample(rng)),
                certified_alpha: None,
                failed: false,
                ledger: single_entry("exponential mechanism", PrivacyBudget::pure(params.epsilon)?, 1),
                trace: None,
            })
        }
        EngineKind::Laplace => {
            let m = workload.len();
            let values = match workload {
                Workload::Binary(f) => laplace_per_query(h_star, f, params.epsilon, rng)?,
                Workload::Real(f) => laplace_per_query(h_star, f, params.epsilon, rng)?,
            };
            Ok(EngineRun {
                engine: kind,
                release: Release::Estimates(values),
                certified_alpha: None,
                failed: false,
                ledger: single_entry("per-query laplace", PrivacyBudget::pure(params.epsilon / m as f64)?, m as u64),
                trace: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in EngineKind::ALL {
            assert_eq!(k.name().parse::<EngineKind>().unwrap(), k);
        }
        assert!("mwem".parse::<EngineKind>().is_err());
    }

    #[test]
    fn support_size_default_respects_cap() {
        assert_eq!(default_support_size(4), 9);
        assert_eq!(default_support_size(256), 2);
        assert_eq!(default_support_size(2_000_000), 0);
    }
}
