//! Noise primitives and privacy-budget arithmetic.
//!
//! Besides Laplace sampling and the basic/advanced composition bounds, this
//! module calibrates the approximate-DP range monitor. Its guarantee comes from
//! target charging: with `τ` target hits and per-step Laplace parameter `a ≤ 1`
//! the transcript is `(4τ(1 + e^a)·a, 2e^{-τ/4})`-DP under replace-one
//! adjacency. `AccountingConstants::c_tct` folds that into the single-constant
//! form `ε = c_tct · a · ln(1/δ)`; the default of 64 covers the target-charging
//! bound whenever `ln(1/δ) ≥ 12.4`, which PREM's per-monitor `δ′` always
//! satisfies in practice. Treat the constant as a heuristic calibration and
//! tighten it only with care.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative slack used when comparing composed budgets to a target.
const BUDGET_FLOAT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be a positive finite real, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        PrivacyBudget::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Whether `self` is no larger than `target` in both coordinates.
    pub fn fits_within(&self, target: &PrivacyBudget) -> bool {
        self.epsilon <= target.epsilon * (1.0 + BUDGET_FLOAT_SLACK)
            && self.delta <= target.delta * (1.0 + BUDGET_FLOAT_SLACK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccountingConstants {
    /// Constant in `ε = c_tct · a · ln(1/δ)` for the approximate range monitor.
    pub c_tct: f64,
    /// Minimum target-hit cap used by the target-charging bound.
    pub tau_hits: u32,
    /// Relative residual accepted by the per-round budget solver.
    pub bisection_tol: f64,
}

impl Default for AccountingConstants {
    fn default() -> Self {
        AccountingConstants { c_tct: 64.0, tau_hits: 1, bisection_tol: 1e-9 }
    }
}

impl AccountingConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_tct >= 1.0 && self.c_tct.is_finite()) {
            return Err(invalid("c_tct", format!("must be a finite real >= 1, got {}", self.c_tct)));
        }
        if self.tau_hits < 1 {
            return Err(invalid("tau_hits", "must be at least 1"));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol <= 1e-6) {
            return Err(invalid(
                "bisection_tol",
                format!("must lie in (0, 1e-6], got {}", self.bisection_tol),
            ));
        }
        Ok(())
    }
}

/// Where noise comes from. `DisabledUnsafe` injects zeros and exists only for
/// deterministic branch coverage; it provides no privacy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseMode {
    #[default]
    Laplace,
    DisabledUnsafe,
}

impl NoiseMode {
    pub fn laplace<R: Rng + ?Sized>(self, scale: f64, rng: &mut R) -> Result<f64> {
        match self {
            NoiseMode::Laplace => laplace_sample(scale, rng),
            NoiseMode::DisabledUnsafe => {
                check_scale(scale)?;
                Ok(0.0)
            }
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && !scale.is_nan() {
        Ok(())
    } else {
        Err(invalid("laplace scale", format!("must be positive, got {scale}")))
    }
}

/// One draw from `Lap(b)` by inverting the CDF of a single uniform.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    check_scale(scale)?;
    let u = loop {
        let u: f64 = rng.gen();
        if u != 0.0 {
            break u;
        }
    };
    let centered = u - 0.5;
    let magnitude = -scale * (1.0 - 2.0 * centered.abs()).ln();
    Ok(if centered < 0.0 { -magnitude } else { magnitude })
}

/// `(kε, kδ)`.
pub fn basic_composition(k: u64, budget: PrivacyBudget) -> PrivacyBudget {
    let k = k as f64;
    PrivacyBudget { epsilon: k * budget.epsilon, delta: k * budget.delta }
}

/// `ε[√(2k ln(1/δ′)) + k(e^ε − 1)/(e^ε + 1)]`; the matching δ is `kδ + δ′`.
pub fn advanced_composition(k: u64, per_step_epsilon: f64, delta_prime: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if !(per_step_epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {per_step_epsilon}")));
    }
    if !(delta_prime > 0.0 && delta_prime <= 1.0) {
        return Err(invalid("delta_prime", format!("must lie in (0, 1], got {delta_prime}")));
    }
    let k = k as f64;
    Ok(advanced_composition_unchecked(k, per_step_epsilon, delta_prime))
}

#[inline]
fn advanced_composition_unchecked(k: f64, eps: f64, delta_prime: f64) -> f64 {
    // (e^ε − 1)/(e^ε + 1) = tanh(ε/2), which stays finite for large ε
    eps * ((2.0 * k * (1.0 / delta_prime).ln()).sqrt() + k * (eps / 2.0).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub a: f64,
    /// The unclamped value exceeded 1 and was cut back.
    pub clamped: bool,
}

/// `a = ε / (c_tct · ln(1/δ))`, clamped to at most 1.
pub fn range_monitor_noise_scale(
    epsilon: f64,
    delta: f64,
    constants: &AccountingConstants,
) -> Result<NoiseScale> {
    constants.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let a = epsilon / (constants.c_tct * (1.0 / delta).ln());
    if a > 1.0 {
        log::warn!("range monitor noise scale {a} exceeds 1; clamping to 1");
        Ok(NoiseScale { a: 1.0, clamped: true })
    } else {
        Ok(NoiseScale { a, clamped: false })
    }
}

/// Target-hit cap `τ = max(tau_hits, ⌈4 ln(2/δ)⌉)`.
pub fn target_hits_for(delta: f64, constants: &AccountingConstants) -> u64 {
    let needed = (4.0 * (2.0 / delta).ln()).ceil().max(1.0) as u64;
    needed.max(constants.tau_hits as u64)
}

/// Replace-one guarantee of an approximate range monitor run with noise
/// parameter `a ≤ 1`, from target charging: `(4τ(1 + e^a)a, 2e^{-τ/4})`.
pub fn target_charging_budget(a: f64, delta: f64, constants: &AccountingConstants) -> Result<PrivacyBudget> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(invalid("a", format!("must lie in (0, 1], got {a}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let tau = target_hits_for(delta, constants) as f64;
    Ok(PrivacyBudget {
        epsilon: 4.0 * tau * (1.0 + a.exp()) * a,
        delta: 2.0 * (-tau / 4.0).exp(),
    })
}

/// Right-hand side of the per-round budget equation,
/// `ε′ · c_tct · ln(1/δ′) · (√(2k ln(1/δ′)) + k(e^{ε′} − 1)/(e^{ε′} + 1))`.
pub fn per_round_budget_rhs(eps_prime: f64, delta_prime: f64, k: u64, c_tct: f64) -> f64 {
    let log_inv = (1.0 / delta_prime).ln();
    c_tct * log_inv * advanced_composition_unchecked(k as f64, eps_prime, delta_prime)
}

/// Solves `ε/2 = RHS(ε′)` for the per-round budget by bisection on `(0, ε]`.
pub fn solve_per_round_epsilon(
    total_epsilon: f64,
    delta_prime: f64,
    rounds: u64,
    constants: &AccountingConstants,
) -> Result<f64> {
    constants.validate()?;
    if !(total_epsilon > 0.0 && total_epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be a positive finite real, got {total_epsilon}")));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(invalid("delta_prime", format!("must lie in (0, 1), got {delta_prime}")));
    }
    if rounds == 0 {
        return Err(invalid("rounds", "must be at least 1"));
    }
    let target = total_epsilon / 2.0;
    let residual = |x: f64| per_round_budget_rhs(x, delta_prime, rounds, constants.c_tct) - target;

    let (mut lo, mut hi) = (0.0f64, total_epsilon);
    if residual(hi) < 0.0 {
        return Err(Error::NoSignChange(format!(
            "RHS({total_epsilon}) is below {target}; no root in (0, ε]"
        )));
    }
    // bisect to machine resolution; the residual check below enforces the tolerance
    for _ in 0..4096 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if residual(lo).abs() <= residual(hi).abs() && lo > 0.0 { lo } else { hi };
    if residual(root).abs() > constants.bisection_tol * total_epsilon {
        return Err(Error::NoSignChange(format!(
            "bisection stalled with residual {} above tolerance",
            residual(root)
        )));
    }
    Ok(root)
}

/// How a ledger entry's repeated steps compose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Composition {
    Basic,
    /// The better of basic composition and advanced composition with slack `delta_slack`.
    BestOf { delta_slack: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub per_step: PrivacyBudget,
    /// Upper bound on the number of steps the mechanism may run.
    pub planned_steps: u64,
    /// Steps actually executed.
    pub used_steps: u64,
    pub composition: Composition,
}

impl LedgerEntry {
    /// Composed cost of all planned steps.
    pub fn composed(&self) -> Result<PrivacyBudget> {
        if self.planned_steps == 0 {
            return Ok(PrivacyBudget { epsilon: 0.0, delta: 0.0 });
        }
        let basic = basic_composition(self.planned_steps, self.per_step);
        match self.composition {
            Composition::Basic => Ok(basic),
            Composition::BestOf { delta_slack } => {
                let eps = advanced_composition(self.planned_steps, self.per_step.epsilon, delta_slack)?;
                if eps < basic.epsilon {
                    Ok(PrivacyBudget {
                        epsilon: eps,
                        delta: self.planned_steps as f64 * self.per_step.delta + delta_slack,
                    })
                } else {
                    Ok(basic)
                }
            }
        }
    }
}

/// Records every private release a mechanism makes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entry(&self, label: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Sequential composition of all entries.
    pub fn total(&self) -> Result<PrivacyBudget> {
        self.entries.iter().try_fold(PrivacyBudget { epsilon: 0.0, delta: 0.0 }, |acc, e| {
            let c = e.composed()?;
            Ok(PrivacyBudget { epsilon: acc.epsilon + c.epsilon, delta: acc.delta + c.delta })
        })
    }

    /// Every entry stays within its plan and the total fits `target`.
    pub fn fits_within(&self, target: &PrivacyBudget) -> Result<bool> {
        let within_plan = self.entries.iter().all(|e| e.used_steps <= e.planned_steps);
        Ok(within_plan && self.total()?.fits_within(target))
    }
}
