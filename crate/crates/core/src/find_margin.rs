//! Search for a large subset on which an estimate is either certified or
//! clearly wrong.
//!
//! Given the private histogram `h*`, a public estimate `ĥ`, and an active set
//! `Y`, a range monitor is asked for every query whether `f(h*|S_act)` lies
//! in the interval implied by `f(ĥ|S_act)` and relative slack `ζ`. Supports
//! of queries that fall above the interval collect into `S⁺`, those below
//! into `S⁻`. The pass repeats until a full pass over the still-active
//! queries is answered `Inside`. Of the three resulting parts of `Y`, the one
//! carrying the most estimate mass is returned, so it always holds at least a
//! third of `1_Y(ĥ)`.
//!
//! Queries are visited in ascending ID order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::error::{check_dims, invalid, Result};
use crate::histogram::Histogram;
use crate::privacy::{range_monitor_noise_scale, AccountingConstants, NoiseMode, NoiseScale};
use crate::query::{BinaryFamily, BinaryQuery};
use crate::range_monitor::{ApproxMonitor, MonitorResponse, PureMonitor, PureResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginVerdict {
    /// The estimate undercounts `S` by a relative margin.
    Plus,
    /// The estimate overcounts `S` by a relative margin.
    Minus,
    /// The estimate is certified on `S`.
    Approx,
}

impl MarginVerdict {
    /// Exponent sign for a multiplicative-weights step; zero for `Approx`.
    pub fn sign(self) -> f64 {
        match self {
            MarginVerdict::Plus => 1.0,
            MarginVerdict::Minus => -1.0,
            MarginVerdict::Approx => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginOutcome {
    pub verdict: MarginVerdict,
    /// Additive slack of the certificate.
    pub alpha0: f64,
    pub queries_consumed: u64,
    /// `S⁺`, `S⁻`, and the final active set; together they partition `Y`.
    pub plus_set: Bitset,
    pub minus_set: Bitset,
    pub active_set: Bitset,
}

impl MarginOutcome {
    /// The returned subset `S`.
    pub fn subset(&self) -> &Bitset {
        match self.verdict {
            MarginVerdict::Plus => &self.plus_set,
            MarginVerdict::Minus => &self.minus_set,
            MarginVerdict::Approx => &self.active_set,
        }
    }

    pub fn into_subset(self) -> Bitset {
        match self.verdict {
            MarginVerdict::Plus => self.plus_set,
            MarginVerdict::Minus => self.minus_set,
            MarginVerdict::Approx => self.active_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PureMarginResult {
    Outcome(MarginOutcome),
    /// The pure monitor reached its out-of-range cap.
    BudgetExhausted { alpha0: f64, queries_consumed: u64 },
}

fn validate_common(epsilon: f64, beta: f64, zeta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be a positive finite real, got {epsilon}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(invalid("zeta", format!("must lie in (0, 1/2), got {zeta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxMarginParams {
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub zeta: f64,
    pub constants: AccountingConstants,
    #[serde(skip)]
    noise: NoiseMode,
}

impl ApproxMarginParams {
    pub fn new(epsilon: f64, delta: f64, beta: f64, zeta: f64, constants: AccountingConstants) -> Result<Self> {
        let p = ApproxMarginParams { epsilon, delta, beta, zeta, constants, noise: NoiseMode::Laplace };
        p.validate()?;
        Ok(p)
    }

    /// Same parameters with zero noise. Not private; for deterministic tests.
    pub fn with_noise_disabled_unsafe(mut self) -> Self {
        self.noise = NoiseMode::DisabledUnsafe;
        self
    }

    pub(crate) fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn noise(&self) -> NoiseMode {
        self.noise
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(self.epsilon, self.beta, self.zeta)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        self.constants.validate()
    }

    pub fn noise_scale(&self) -> Result<NoiseScale> {
        range_monitor_noise_scale(self.epsilon, self.delta, &self.constants)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureMarginParams {
    pub epsilon: f64,
    pub beta: f64,
    pub zeta: f64,
    #[serde(skip)]
    noise: NoiseMode,
}

impl PureMarginParams {
    pub fn new(epsilon: f64, beta: f64, zeta: f64) -> Result<Self> {
        validate_common(epsilon, beta, zeta)?;
        Ok(PureMarginParams { epsilon, beta, zeta, noise: NoiseMode::Laplace })
    }

    /// Same parameters with zero noise. Not private; for deterministic tests.
    pub fn with_noise_disabled_unsafe(mut self) -> Self {
        self.noise = NoiseMode::DisabledUnsafe;
        self
    }

    pub(crate) fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn noise(&self) -> NoiseMode {
        self.noise
    }
}

/// `α₀ = (4(1 + ζ)/a)·ln(|F|/β)` for the approximate variant.
pub fn approx_alpha0(a: f64, zeta: f64, family_size: usize, beta: f64) -> f64 {
    4.0 * (1.0 + zeta) / a * (family_size as f64 / beta).ln()
}

/// Natural log floored at `ln 2`, so that `n = 1` or `|X| = 1` keeps slacks positive.
pub(crate) fn ln_floor2(x: f64) -> f64 {
    x.max(2.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureCalibration {
    pub alpha0: f64,
    pub gamma: u64,
    pub a: f64,
}

/// `Γ = ⌈8n/α₀⌉`, at least 1.
pub fn pure_gamma(n: f64, alpha0: f64) -> u64 {
    ((8.0 * n / alpha0).ceil() as u64).max(1)
}

/// `α₀ = √(48·n·ln n·ln|X|·ln(|F|/β)/(ζ²ε))`, `Γ = ⌈8n/α₀⌉`, `a = ε/Γ`.
/// `ln n` and `ln |X|` are floored at `ln 2`.
pub fn pure_calibration(
    n: f64,
    domain_size: usize,
    family_size: usize,
    epsilon: f64,
    beta: f64,
    zeta: f64,
) -> Result<PureCalibration> {
    validate_common(epsilon, beta, zeta)?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid("n", format!("must be positive, got {n}")));
    }
    let alpha0 = (48.0 * n * ln_floor2(n) * ln_floor2(domain_size as f64) * (family_size as f64 / beta).ln()
        / (zeta * zeta * epsilon))
        .sqrt();
    let gamma = pure_gamma(n, alpha0);
    Ok(PureCalibration { alpha0, gamma, a: epsilon / gamma as f64 })
}

/// Picks the part with the largest estimate mass; ties prefer Approx, then Plus.
pub fn select_verdict(mass_plus: f64, mass_minus: f64, mass_active: f64) -> MarginVerdict {
    if mass_active >= mass_plus && mass_active >= mass_minus {
        MarginVerdict::Approx
    } else if mass_plus >= mass_minus {
        MarginVerdict::Plus
    } else {
        MarginVerdict::Minus
    }
}

trait Monitor {
    /// `None` once the monitor refuses to answer.
    fn ask<R: Rng + ?Sized>(&mut self, f: &BinaryQuery, tau_l: f64, tau_u: f64, rng: &mut R)
        -> Result<Option<MonitorResponse>>;
}

impl Monitor for ApproxMonitor<'_> {
    fn ask<R: Rng + ?Sized>(&mut self, f: &BinaryQuery, tau_l: f64, tau_u: f64, rng: &mut R)
        -> Result<Option<MonitorResponse>> {
        self.query(f, tau_l, tau_u, rng).map(Some)
    }
}

impl Monitor for PureMonitor<'_> {
    fn ask<R: Rng + ?Sized>(&mut self, f: &BinaryQuery, tau_l: f64, tau_u: f64, rng: &mut R)
        -> Result<Option<MonitorResponse>> {
        Ok(match self.query(f, tau_l, tau_u, rng)? {
            PureResponse::Answer(r) => Some(r),
            PureResponse::Halted => None,
        })
    }
}

enum LoopEnd {
    Done(MarginOutcome),
    Halted { queries_consumed: u64 },
}

fn check_inputs(h_star: &Histogram, h_hat: &Histogram, y: &Bitset, family: &BinaryFamily) -> Result<()> {
    check_dims(h_star.domain_size(), h_hat.domain_size())?;
    check_dims(h_star.domain_size(), y.len())?;
    check_dims(h_star.domain_size(), family.domain_size())
}

#[allow(clippy::too_many_arguments)]
fn margin_loop<M: Monitor, R: Rng + ?Sized>(
    monitor: &mut M,
    h_hat: &Histogram,
    y: &Bitset,
    family: &BinaryFamily,
    alpha0: f64,
    zeta: f64,
    rng: &mut R,
) -> Result<LoopEnd> {
    let len = y.len();
    let mut plus = Bitset::empty(len);
    let mut minus = Bitset::empty(len);
    let mut active = y.clone();
    let mut pending: Vec<usize> = (0..family.len()).collect();
    let mut consumed = 0u64;
    loop {
        let mut accurate = true;
        let mut kept = Vec::with_capacity(pending.len());
        for &id in &pending {
            let f = &family.queries()[id];
            let estimate = h_hat.intersection_mass(f.support(), &active)?;
            let tau_u = (estimate + alpha0 / 2.0) / (1.0 - zeta);
            let tau_l = (estimate - alpha0 / 2.0) / (1.0 + zeta);
            consumed += 1;
            let target = match monitor.ask(f, tau_l, tau_u, rng)? {
                None => return Ok(LoopEnd::Halted { queries_consumed: consumed }),
                Some(MonitorResponse::Inside) => {
                    kept.push(id);
                    continue;
                }
                Some(MonitorResponse::Above) => &mut plus,
                Some(MonitorResponse::Below) => &mut minus,
            };
            target.union_with(&active.intersection(f.support())?)?;
            active.difference_with(f.support())?;
            accurate = false;
        }
        pending = kept;
        if accurate {
            break;
        }
    }
    let verdict = select_verdict(
        h_hat.indicator_mass(&plus)?,
        h_hat.indicator_mass(&minus)?,
        h_hat.indicator_mass(&active)?,
    );
    Ok(LoopEnd::Done(MarginOutcome {
        verdict,
        alpha0,
        queries_consumed: consumed,
        plus_set: plus,
        minus_set: minus,
        active_set: active,
    }))
}

/// Approximate-DP variant. The monitor's noise parameter is
/// `a = ε/(c_tct·ln(1/δ))` clamped to 1, and `α₀ = (4(1 + ζ)/a)·ln(|F|/β)`.
pub fn find_margin_approx<R: Rng + ?Sized>(
    h_star: &Histogram,
    h_hat: &Histogram,
    y: &Bitset,
    family: &BinaryFamily,
    params: &ApproxMarginParams,
    rng: &mut R,
) -> Result<MarginOutcome> {
    params.validate()?;
    check_inputs(h_star, h_hat, y, family)?;
    let a = params.noise_scale()?.a;
    let alpha0 = approx_alpha0(a, params.zeta, family.len(), params.beta);
    let mut monitor = ApproxMonitor::with_noise(h_star, a, y.clone(), params.noise)?;
    match margin_loop(&mut monitor, h_hat, y, family, alpha0, params.zeta, rng)? {
        LoopEnd::Done(outcome) => Ok(outcome),
        LoopEnd::Halted { .. } => unreachable!("the approximate monitor never halts"),
    }
}

/// Pure-DP variant over a capped sparse-vector monitor.
pub fn find_margin_pure<R: Rng + ?Sized>(
    h_star: &Histogram,
    h_hat: &Histogram,
    y: &Bitset,
    family: &BinaryFamily,
    params: &PureMarginParams,
    rng: &mut R,
) -> Result<PureMarginResult> {
    check_inputs(h_star, h_hat, y, family)?;
    let n = h_star.total_mass();
    if n <= 0.0 {
        return Err(invalid("h_star", "total mass must be positive"));
    }
    let cal = pure_calibration(n, h_star.domain_size(), family.len(), params.epsilon, params.beta, params.zeta)?;
    find_margin_pure_calibrated(h_star, h_hat, y, family, params, &cal, rng)
}

pub(crate) fn find_margin_pure_calibrated<R: Rng + ?Sized>(
    h_star: &Histogram,
    h_hat: &Histogram,
    y: &Bitset,
    family: &BinaryFamily,
    params: &PureMarginParams,
    cal: &PureCalibration,
    rng: &mut R,
) -> Result<PureMarginResult> {
    let mut monitor = PureMonitor::with_noise(h_star, cal.a, cal.gamma, y.clone(), params.noise, rng)?;
    Ok(match margin_loop(&mut monitor, h_hat, y, family, cal.alpha0, params.zeta, rng)? {
        LoopEnd::Done(outcome) => PureMarginResult::Outcome(outcome),
        LoopEnd::Halted { queries_consumed } => {
            PureMarginResult::BudgetExhausted { alpha0: cal.alpha0, queries_consumed }
        }
    })
}

/// Which guarantees of a margin search hold, evaluated exactly against `h*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginAudit {
    /// `S⁺ ⊎ S⁻ ⊎ S_act = Y`.
    pub partition: bool,
    /// `1_S(ĥ) ≥ 1_Y(ĥ)/3`.
    pub one_third_mass: bool,
    /// The verdict-specific inequality.
    pub verdict_condition: bool,
}

impl MarginAudit {
    pub fn all(&self) -> bool {
        self.partition && self.one_third_mass && self.verdict_condition
    }
}

/// Checks an outcome against its guarantees by direct evaluation.
///
/// Approx: `(1 − ζ)f(h*|S) − α₀ ≤ f(ĥ|S) ≤ (1 + ζ)f(h*|S) + α₀` for all `f`.
/// Plus: `1_S(h*) ≥ (1 + ζ)·1_S(ĥ)`. Minus: `1_S(h*) ≤ (1 − ζ/2)·1_S(ĥ)`.
pub fn audit_margin_outcome(
    h_star: &Histogram,
    h_hat: &Histogram,
    y: &Bitset,
    family: &BinaryFamily,
    zeta: f64,
    outcome: &MarginOutcome,
) -> Result<MarginAudit> {
    check_inputs(h_star, h_hat, y, family)?;
    let (p, m, a) = (&outcome.plus_set, &outcome.minus_set, &outcome.active_set);
    let partition = p.is_disjoint(m)
        && p.is_disjoint(a)
        && m.is_disjoint(a)
        && p.union(m)?.union(a)? == *y;

    let s = outcome.subset();
    let slack = |x: f64| 1e-9 * x.abs().max(1.0);
    let hat_s = h_hat.indicator_mass(s)?;
    let hat_y = h_hat.indicator_mass(y)?;
    let one_third_mass = hat_s + slack(hat_y) >= hat_y / 3.0;

    let star_s = h_star.indicator_mass(s)?;
    let verdict_condition = match outcome.verdict {
        MarginVerdict::Plus => star_s + slack(star_s) >= (1.0 + zeta) * hat_s,
        MarginVerdict::Minus => star_s <= (1.0 - zeta / 2.0) * hat_s + slack(hat_s),
        MarginVerdict::Approx => {
            let mut ok = true;
            for f in family.queries() {
                let t = h_star.intersection_mass(f.support(), s)?;
                let e = h_hat.intersection_mass(f.support(), s)?;
                let tol = slack(t.max(e));
                ok &= (1.0 - zeta) * t - outcome.alpha0 <= e + tol && e <= (1.0 + zeta) * t + outcome.alpha0 + tol;
            }
            ok
        }
    };
    Ok(MarginAudit { partition, one_third_mass, verdict_condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn hist(w: &[f64]) -> Histogram {
        Histogram::new(w.to_vec()).unwrap()
    }

    fn approx_params() -> ApproxMarginParams {
        ApproxMarginParams::new(1.0, 1e-6, 0.1, 0.2, AccountingConstants::default()).unwrap()
    }

    #[test]
    fn select_verdict_examples() {
        assert_eq!(select_verdict(1.0, 2.0, 3.0), MarginVerdict::Approx);
        assert_eq!(select_verdict(2.0, 2.0, 2.0), MarginVerdict::Approx);
        assert_eq!(select_verdict(5.0, 1.0, 1.0), MarginVerdict::Plus);
        assert_eq!(select_verdict(1.0, 5.0, 1.0), MarginVerdict::Minus);
        assert_eq!(select_verdict(3.0, 3.0, 1.0), MarginVerdict::Plus);
    }

    #[test]
    fn gamma_example() {
        assert_eq!(pure_gamma(1e4, 500.0), 160);
    }

    #[test]
    fn exact_estimate_is_certified() {
        let h = hist(&[3.0, 0.0, 7.0, 1.0]);
        let fam = BinaryFamily::new(
            4,
            vec![BinaryQuery::from_indices(4, [0, 1]).unwrap(), BinaryQuery::all_ones(4)],
        )
        .unwrap();
        let y = Bitset::full(4);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p = approx_params().with_noise_disabled_unsafe();
        let out = find_margin_approx(&h, &h, &y, &fam, &p, &mut rng).unwrap();
        assert_eq!(out.verdict, MarginVerdict::Approx);
        assert_eq!(out.subset(), &y);
        assert_eq!(out.queries_consumed, 2);

        let pp = PureMarginParams::new(1.0, 0.1, 0.2).unwrap().with_noise_disabled_unsafe();
        match find_margin_pure(&h, &h, &y, &fam, &pp, &mut rng).unwrap() {
            PureMarginResult::Outcome(o) => {
                assert_eq!(o.verdict, MarginVerdict::Approx);
                assert_eq!(o.subset(), &y);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undercount_gives_plus() {
        // ĥ nearly zero on Y, so τu ≈ α₀/(2(1−ζ)) is far below 1_Y(h*).
        let p = approx_params().with_noise_disabled_unsafe();
        let alpha0 = approx_alpha0(p.noise_scale().unwrap().a, p.zeta, 1, p.beta);
        let n = (10.0 * alpha0).ceil();
        let h_star = hist(&[n, 0.0]);
        let h_hat = hist(&[1e-9, 0.0]);
        let fam = BinaryFamily::new(2, vec![BinaryQuery::all_ones(2)]).unwrap();
        let y = Bitset::from_indices(2, [0]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let out = find_margin_approx(&h_star, &h_hat, &y, &fam, &p, &mut rng).unwrap();
        assert_eq!(out.verdict, MarginVerdict::Plus);
        assert_eq!(out.subset(), &y);
        assert!(audit_margin_outcome(&h_star, &h_hat, &y, &fam, p.zeta, &out).unwrap().all());
    }

    #[test]
    fn overcount_gives_minus_when_dominant() {
        let pp = PureMarginParams::new(1.0, 0.1, 0.2).unwrap().with_noise_disabled_unsafe();
        let h_star = hist(&[1e6, 1e6, 1e6, 1e6]);
        let cal = pure_calibration(4e6, 4, 1, 1.0, 0.1, 0.2).unwrap();
        assert!(cal.alpha0 < 1e6);
        let h_hat = hist(&[3e6, 3e6, 1e6, 1e6]);
        let fam = BinaryFamily::new(4, vec![BinaryQuery::from_indices(4, [0, 1]).unwrap()]).unwrap();
        let y = Bitset::full(4);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let out = match find_margin_pure(&h_star, &h_hat, &y, &fam, &pp, &mut rng).unwrap() {
            PureMarginResult::Outcome(o) => o,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(out.verdict, MarginVerdict::Minus);
        assert!(audit_margin_outcome(&h_star, &h_hat, &y, &fam, 0.2, &out).unwrap().all());
    }

    #[test]
    fn parameter_errors_precede_work() {
        assert!(ApproxMarginParams::new(1.0, 0.0, 0.1, 0.2, AccountingConstants::default()).is_err());
        assert!(ApproxMarginParams::new(1.0, 1e-6, 0.1, 0.5, AccountingConstants::default()).is_err());
        assert!(PureMarginParams::new(0.0, 0.1, 0.2).is_err());
        let h = Histogram::zeros(2);
        let fam = BinaryFamily::new(2, vec![BinaryQuery::all_ones(2)]).unwrap();
        let pp = PureMarginParams::new(1.0, 0.1, 0.2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(find_margin_pure(&h, &h, &Bitset::full(2), &fam, &pp, &mut rng).is_err());
    }

    #[test]
    fn empty_active_set_is_trivially_certified() {
        let h = hist(&[4.0, 4.0]);
        let fam = BinaryFamily::new(2, vec![BinaryQuery::all_ones(2)]).unwrap();
        let y = Bitset::empty(2);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let out = find_margin_approx(&h, &h, &y, &fam, &approx_params(), &mut rng).unwrap();
        assert!(out.subset().is_empty());
        assert!(out.plus_set.is_empty() && out.minus_set.is_empty());
    }
}
