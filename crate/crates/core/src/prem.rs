//! Private relative-error multiplicative weights.
//!
//! The release proceeds in at most `I` rounds. Each round privately counts
//! the mass left in the uncovered part `X^i` of the domain, starts a uniform
//! estimate with that mass, and runs multiplicative-weights steps driven by
//! the margin search until the search certifies the estimate on a subset
//! `S^i`. The certified part is kept and `S^i` leaves the domain. Rounds stop
//! once the noisy remaining mass drops to `α/4`.
//!
//! Budget split: the `I` noisy counts get `(ε/2, δ/2)` and the at most `I·T`
//! margin searches get the other half.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::error::{check_dims, invalid, Result};
use crate::find_margin::{
    approx_alpha0, find_margin_approx, find_margin_pure_calibrated, pure_calibration, ApproxMarginParams,
    MarginVerdict, PureMarginParams, PureMarginResult,
};
use crate::histogram::Histogram;
use crate::privacy::{
    range_monitor_noise_scale, solve_per_round_epsilon, target_charging_budget, AccountingConstants, Composition,
    LedgerEntry, NoiseMode, PrivacyBudget, PrivacyLedger,
};
use crate::query::{BinaryFamily, BinaryQuery};
use crate::streams::{Purpose, StreamFactory};

pub const COUNT_LEDGER_LABEL: &str = "noisy round counts";
pub const MONITOR_LEDGER_LABEL: &str = "margin searches";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PremConfig {
    pub epsilon: f64,
    /// `0` selects the pure-DP variant.
    pub delta: f64,
    pub beta: f64,
    pub zeta: f64,
    pub accounting: AccountingConstants,
    /// Multiplier on the pure-DP slack `α`.
    pub c_pure: f64,
    #[serde(skip)]
    noise: NoiseMode,
}

impl Default for PremConfig {
    fn default() -> Self {
        PremConfig {
            epsilon: 1.0,
            delta: 1e-6,
            beta: 0.05,
            zeta: 0.25,
            accounting: AccountingConstants::default(),
            c_pure: 1.0,
            noise: NoiseMode::Laplace,
        }
    }
}

impl PremConfig {
    pub fn new(epsilon: f64, delta: f64, beta: f64, zeta: f64) -> Result<Self> {
        let c = PremConfig { epsilon, delta, beta, zeta, ..PremConfig::default() };
        c.validate()?;
        Ok(c)
    }

    /// Same configuration with zero noise everywhere. Not private; for tests.
    pub fn with_noise_disabled_unsafe(mut self) -> Self {
        self.noise = NoiseMode::DisabledUnsafe;
        self
    }

    pub fn noise(&self) -> NoiseMode {
        self.noise
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget { epsilon: self.epsilon, delta: self.delta }
    }

    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::new(self.epsilon, self.delta)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.zeta > 0.0 && self.zeta < 0.5) {
            return Err(invalid("zeta", format!("must lie in (0, 1/2), got {}", self.zeta)));
        }
        if !(self.c_pure > 0.0 && self.c_pure.is_finite()) {
            return Err(invalid("c_pure", format!("must be a positive finite real, got {}", self.c_pure)));
        }
        self.accounting.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremDerived {
    /// Outer round cap `I = ⌈ln n / ln 1.2⌉`.
    pub rounds_cap: u64,
    /// Inner iteration cap `T = ⌈128 ln|X| / ζ²⌉`.
    pub iterations_cap: u64,
    pub eta: f64,
    pub beta_prime: f64,
    pub delta_prime: f64,
    /// Budget of one margin search.
    pub eps_prime: f64,
    /// Laplace parameter of the round counts; their noise is `Lap(1/a)`.
    pub count_a: f64,
    /// The count parameter fell back to `ε/(2I)` to stay within half the budget.
    pub count_fallback: bool,
    /// Certified additive slack: the larger of the closed form and the
    /// accuracy proof's requirements on `α`, see [`proof_alpha_floor`].
    pub alpha: f64,
    /// Closed-form slack before the floor is applied.
    pub alpha_closed_form: f64,
    /// Noise parameter of each margin search's monitor.
    pub monitor_a: f64,
    /// Additive slack of one margin search.
    pub alpha0: f64,
    /// Out-of-range cap of the pure monitor.
    pub gamma: Option<u64>,
}

impl PremDerived {
    pub fn total_iterations_cap(&self) -> u64 {
        self.rounds_cap * self.iterations_cap
    }
}

/// `⌈ln n / ln 1.2⌉`, at least 1.
pub fn rounds_cap(n: f64) -> u64 {
    ((n.ln() / 1.2f64.ln()).ceil().max(1.0)) as u64
}

/// `⌈128 ln|X| / ζ²⌉`, at least 1.
pub fn iterations_cap(domain_size: usize, zeta: f64) -> u64 {
    ((128.0 * (domain_size as f64).ln() / (zeta * zeta)).ceil().max(1.0)) as u64
}

/// Smallest `α` the accuracy argument accepts: `I·α₀ ≤ 2α/3`,
/// `11α₀ ≤ α/8`, and round-count noise `ln(1/β′)/a_count ≤ α/12`.
/// The closed forms meet these only for `ε ≤ 1` and an unclamped monitor.
pub fn proof_alpha_floor(rounds: u64, alpha0: f64, count_a: f64, beta_prime: f64) -> f64 {
    (1.5 * rounds as f64 * alpha0).max(88.0 * alpha0).max(12.0 * (1.0 / beta_prime).ln() / count_a)
}

fn count_entry(a: f64, rounds: u64, composition: Composition) -> LedgerEntry {
    LedgerEntry {
        label: COUNT_LEDGER_LABEL.into(),
        per_step: PrivacyBudget { epsilon: a, delta: 0.0 },
        planned_steps: rounds,
        used_steps: 0,
        composition,
    }
}

/// Derives every run parameter from the configuration and the public sizes.
pub fn derive_parameters(config: &PremConfig, n: f64, domain_size: usize, family_size: usize) -> Result<PremDerived> {
    config.validate()?;
    if !(n >= 1.0 && n.is_finite()) {
        return Err(invalid("n", format!("must be at least 1, got {n}")));
    }
    if domain_size == 0 || family_size == 0 {
        return Err(invalid("sizes", "domain and family must be nonempty"));
    }
    let (eps, delta, zeta) = (config.epsilon, config.delta, config.zeta);
    let big_i = rounds_cap(n);
    let big_t = iterations_cap(domain_size, zeta);
    let it = big_i * big_t;
    let fi = big_i as f64;
    let beta_prime = config.beta / (2.0 * it as f64);
    let half = PrivacyBudget { epsilon: eps / 2.0, delta: delta / 2.0 };

    if config.is_pure() {
        let eps_prime = eps / (2.0 * it as f64);
        let cal = pure_calibration(n, domain_size, family_size, eps_prime, beta_prime, zeta)?;
        let closed = config.c_pure * (fi * cal.alpha0).max(24.0 * fi / eps * (fi / beta_prime).ln());
        let count_a = eps / (2.0 * fi);
        return Ok(PremDerived {
            rounds_cap: big_i,
            iterations_cap: big_t,
            eta: zeta / 4.0,
            beta_prime,
            delta_prime: 0.0,
            eps_prime,
            count_a,
            count_fallback: false,
            alpha: closed.max(proof_alpha_floor(big_i, cal.alpha0, count_a, beta_prime)),
            alpha_closed_form: closed,
            monitor_a: cal.a,
            alpha0: cal.alpha0,
            gamma: Some(cal.gamma),
        });
    }

    let delta_prime = delta / (4.0 * it as f64);
    let eps_prime = solve_per_round_epsilon(eps, delta_prime, it, &config.accounting)?;
    let mut count_a = eps / (4.0 * (2.0 * fi * (fi / delta).ln()).sqrt());
    let composed = count_entry(count_a, big_i, Composition::BestOf { delta_slack: delta / 2.0 }).composed()?;
    let count_fallback = !composed.fits_within(&half);
    if count_fallback {
        log::warn!("round-count noise exceeds half the budget; using a = ε/(2I)");
        count_a = eps / (2.0 * fi);
    }
    let monitor_a = range_monitor_noise_scale(eps_prime, delta_prime, &config.accounting)?.a;
    let alpha0 = approx_alpha0(monitor_a, zeta, family_size, beta_prime);
    let closed = 200.0 * fi / eps_prime * (4.0 * family_size as f64 / beta_prime).ln();
    Ok(PremDerived {
        rounds_cap: big_i,
        iterations_cap: big_t,
        eta: zeta / 4.0,
        beta_prime,
        delta_prime,
        eps_prime,
        count_a,
        count_fallback,
        alpha: closed.max(proof_alpha_floor(big_i, alpha0, count_a, beta_prime)),
        alpha_closed_form: closed,
        monitor_a,
        alpha0,
        gamma: None,
    })
}

/// Appends the all-ones query unless present. Existing IDs are unchanged.
pub fn augment_all_ones(family: &BinaryFamily) -> BinaryFamily {
    let mut out = family.clone();
    if !out.contains_all_ones() {
        out.push(BinaryQuery::all_ones(out.domain_size()));
    }
    out
}

/// One multiplicative-weights step: `ñ·(ĥ ⊙ e^{θη·1_S}) / ‖ĥ ⊙ e^{θη·1_S}‖₁`.
pub fn mwu_update(h_hat: &Histogram, theta: f64, s: &Bitset, eta: f64, n_tilde: f64) -> Result<Histogram> {
    check_dims(h_hat.domain_size(), s.len())?;
    if h_hat.total_mass() <= 0.0 {
        return Err(crate::Error::ZeroMass);
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid("eta", format!("must be positive, got {eta}")));
    }
    if !(n_tilde >= 0.0 && n_tilde.is_finite()) {
        return Err(invalid("n_tilde", format!("must be finite and nonnegative, got {n_tilde}")));
    }
    let factor = (theta * eta).exp();
    let mut weights = h_hat.weights().to_vec();
    for x in s.iter() {
        weights[x] *= factor;
    }
    let mass = crate::histogram::sum(&weights);
    let k = n_tilde / mass;
    weights.iter_mut().for_each(|w| *w *= k);
    Histogram::new(weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Noisy remaining mass, before clamping at 0.
    pub n_tilde: f64,
    /// Margin searches run in this round.
    pub iterations: u64,
    pub verdicts: Vec<MarginVerdict>,
    /// Monitor queries across the round's margin searches.
    pub monitor_queries: u64,
    /// Certified subset; `None` when the round broke or failed.
    pub certified: Option<Bitset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremResult {
    pub synthetic: Histogram,
    pub certified_alpha: f64,
    pub rounds: Vec<RoundTrace>,
    /// An inner loop exhausted its `T` iterations, or a pure monitor halted.
    pub failed: bool,
    /// Round index (0-based) whose noisy count triggered the stop, if any.
    pub break_round: Option<usize>,
    pub derived: PremDerived,
    /// Size of the family after appending the all-ones query.
    pub family_size: usize,
    pub ledger: PrivacyLedger,
}

impl PremResult {
    /// Union of all certified subsets.
    pub fn covered(&self) -> Bitset {
        let mut all = Bitset::empty(self.synthetic.domain_size());
        for s in self.rounds.iter().filter_map(|r| r.certified.as_ref()) {
            all.union_with(s).expect("traces share the domain");
        }
        all
    }

    /// The synthetic histogram rescaled to the first released count. Pure postprocessing.
    pub fn rescaled_to_noisy_total(&self) -> Result<Histogram> {
        match self.rounds.first() {
            Some(r) => self.synthetic.rescaled_to(r.n_tilde.max(0.0)),
            None => Ok(self.synthetic.clone()),
        }
    }
}

enum SearchStep {
    Verdict(MarginVerdict, Bitset, u64),
    Halted(u64),
}

/// Releases a synthetic histogram for `family` under `config`.
pub fn run_prem<R: Rng + ?Sized>(
    h_star: &Histogram,
    family: &BinaryFamily,
    config: &PremConfig,
    rng: &mut R,
) -> Result<PremResult> {
    config.validate()?;
    check_dims(h_star.domain_size(), family.domain_size())?;
    h_star.require_integral()?;
    let n = h_star.total_mass();
    if n < 1.0 {
        return Err(invalid("h_star", "total mass must be at least 1"));
    }
    let family = augment_all_ones(family);
    let domain_size = h_star.domain_size();
    let derived = derive_parameters(config, n, domain_size, family.len())?;
    let noise = config.noise;
    let streams = StreamFactory::from_rng(rng);

    let approx_params = if config.is_pure() {
        None
    } else {
        Some(
            ApproxMarginParams::new(derived.eps_prime, derived.delta_prime, derived.beta_prime, config.zeta, config.accounting)?
                .with_noise(noise),
        )
    };
    let pure_params = PureMarginParams::new(derived.eps_prime, derived.beta_prime, config.zeta)?.with_noise(noise);
    let pure_cal = derived.gamma.map(|gamma| crate::find_margin::PureCalibration {
        alpha0: derived.alpha0,
        gamma,
        a: derived.monitor_a,
    });

    let mut synthetic = Histogram::zeros(domain_size);
    let mut remaining = Bitset::full(domain_size);
    let mut rounds = Vec::new();
    let mut failed = false;
    let mut break_round = None;
    let mut searches = 0u64;

    'rounds: for i in 0..derived.rounds_cap {
        if remaining.is_empty() {
            break;
        }
        let mut count_rng = streams.child(i, 0, Purpose::Count);
        let n_tilde = h_star.indicator_mass(&remaining)? + noise.laplace(1.0 / derived.count_a, &mut count_rng)?;
        let mut trace = RoundTrace { n_tilde, iterations: 0, verdicts: Vec::new(), monitor_queries: 0, certified: None };
        if n_tilde <= derived.alpha / 4.0 {
            break_round = Some(i as usize);
            rounds.push(trace);
            break;
        }
        let mut estimate = Histogram::uniform_on(&remaining, n_tilde)?;
        for t in 1..=derived.iterations_cap {
            let mut monitor_rng = streams.child(i, t, Purpose::Monitor);
            let step = match (&approx_params, &pure_cal) {
                (Some(p), _) => {
                    let o = find_margin_approx(h_star, &estimate, &remaining, &family, p, &mut monitor_rng)?;
                    SearchStep::Verdict(o.verdict, o.subset().clone(), o.queries_consumed)
                }
                (None, Some(cal)) => {
                    match find_margin_pure_calibrated(h_star, &estimate, &remaining, &family, &pure_params, cal, &mut monitor_rng)? {
                        PureMarginResult::Outcome(o) => {
                            SearchStep::Verdict(o.verdict, o.subset().clone(), o.queries_consumed)
                        }
                        PureMarginResult::BudgetExhausted { queries_consumed, .. } => SearchStep::Halted(queries_consumed),
                    }
                }
                (None, None) => unreachable!("pure runs always carry a calibration"),
            };
            searches += 1;
            trace.iterations += 1;
            match step {
                SearchStep::Halted(q) => {
                    trace.monitor_queries += q;
                    failed = true;
                    rounds.push(trace);
                    break 'rounds;
                }
                SearchStep::Verdict(verdict, s, q) => {
                    trace.monitor_queries += q;
                    trace.verdicts.push(verdict);
                    if verdict == MarginVerdict::Approx {
                        synthetic.add_assign(&estimate.restrict(&s)?)?;
                        remaining.difference_with(&s)?;
                        trace.certified = Some(s);
                        rounds.push(trace);
                        continue 'rounds;
                    }
                    estimate = mwu_update(&estimate, verdict.sign(), &s, derived.eta, n_tilde)?;
                }
            }
        }
        failed = true;
        rounds.push(trace);
        break;
    }

    let ledger = build_ledger(config, &derived, rounds.len() as u64, searches)?;
    Ok(PremResult {
        synthetic,
        certified_alpha: derived.alpha,
        rounds,
        failed,
        break_round,
        derived,
        family_size: family.len(),
        ledger,
    })
}

fn build_ledger(config: &PremConfig, d: &PremDerived, counts_used: u64, searches_used: u64) -> Result<PrivacyLedger> {
    let mut ledger = PrivacyLedger::default();
    let count_composition = if config.is_pure() || d.count_fallback {
        Composition::Basic
    } else {
        Composition::BestOf { delta_slack: config.delta / 2.0 }
    };
    let mut counts = count_entry(d.count_a, d.rounds_cap, count_composition);
    counts.used_steps = counts_used;
    ledger.push(counts);

    let (per_step, composition) = match d.gamma {
        Some(gamma) => (PrivacyBudget { epsilon: gamma as f64 * d.monitor_a, delta: 0.0 }, Composition::Basic),
        None => (
            target_charging_budget(d.monitor_a, d.delta_prime, &config.accounting)?,
            Composition::BestOf { delta_slack: config.delta / 4.0 },
        ),
    };
    ledger.push(LedgerEntry {
        label: MONITOR_LEDGER_LABEL.into(),
        per_step,
        planned_steps: d.total_iterations_cap(),
        used_steps: searches_used,
        composition,
    });
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn caps_for_a_million_records() {
        assert_eq!(rounds_cap(1e6), 76);
        // 128·ln(1024)/0.0625 = 14195.65…
        assert_eq!(iterations_cap(1024, 0.25), 14196);
    }

    #[test]
    fn degenerate_sizes_keep_caps_positive() {
        assert_eq!(rounds_cap(1.0), 1);
        assert_eq!(iterations_cap(1, 0.25), 1);
    }

    #[test]
    fn derived_identities() {
        let c = PremConfig::new(1.0, 1e-6, 0.05, 0.2).unwrap();
        let d = derive_parameters(&c, 1e4, 64, 10).unwrap();
        assert_eq!(d.eta, 0.05);
        let it = (d.rounds_cap * d.iterations_cap) as f64;
        assert!((d.beta_prime * 2.0 * it - 0.05).abs() < 1e-15);
        assert!((d.delta_prime * 4.0 * it - 1e-6).abs() < 1e-20);
        assert!(d.gamma.is_none());
    }

    #[test]
    fn pure_derivation_uses_half_budget_per_part() {
        let c = PremConfig::new(2.0, 0.0, 0.05, 0.2).unwrap();
        let d = derive_parameters(&c, 1e4, 64, 10).unwrap();
        assert!((d.count_a * d.rounds_cap as f64 - 1.0).abs() < 1e-12);
        assert!((d.eps_prime * d.total_iterations_cap() as f64 - 1.0).abs() < 1e-12);
        assert!(d.gamma.is_some());
    }

    #[test]
    fn mwu_examples() {
        let h = Histogram::new(vec![1.0, 1.0]).unwrap();
        let s = Bitset::from_indices(2, [0]).unwrap();
        let out = mwu_update(&h, 1.0, &s, 0.1, 2.0).unwrap();
        let e = 0.1f64.exp();
        assert!((out.weights()[0] - 2.0 * e / (e + 1.0)).abs() < 1e-12);
        assert!((out.weights()[1] - 2.0 / (e + 1.0)).abs() < 1e-12);
        assert!((out.weights()[0] - 1.0500).abs() < 1e-4);

        let h = Histogram::new(vec![1.0, 3.0, 0.0]).unwrap();
        let none = mwu_update(&h, -1.0, &Bitset::empty(3), 0.3, 8.0).unwrap();
        let all = mwu_update(&h, -1.0, &Bitset::full(3), 0.3, 8.0).unwrap();
        assert_eq!(none.weights(), &[2.0, 6.0, 0.0]);
        for (a, b) in all.weights().iter().zip(none.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(mwu_update(&Histogram::zeros(2), 1.0, &s, 0.1, 1.0).is_err());
    }

    #[test]
    fn augment_is_idempotent() {
        let f = BinaryFamily::new(3, vec![BinaryQuery::from_indices(3, [0]).unwrap()]).unwrap();
        let once = augment_all_ones(&f);
        assert_eq!(once.len(), 2);
        assert_eq!(once.get(0), f.get(0));
        assert_eq!(augment_all_ones(&once), once);
    }

    #[test]
    fn noiseless_run_recovers_histogram() {
        let h = Histogram::new(vec![4e5, 0.0, 1e5, 5e5]).unwrap();
        let f = BinaryFamily::new(4, vec![BinaryQuery::from_indices(4, [0, 1]).unwrap()]).unwrap();
        let mut c = PremConfig::new(1.0, 1e-6, 0.05, 0.25).unwrap().with_noise_disabled_unsafe();
        c.epsilon = 1e14;
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let r = run_prem(&h, &f, &c, &mut rng).unwrap();
        assert!(!r.failed);
        let d = r.derived;
        // the monitor parameter is clamped, so the floor decides α
        assert_eq!(d.monitor_a, 1.0);
        assert!(d.alpha > d.alpha_closed_form);
        assert!(d.alpha >= 1.5 * d.rounds_cap as f64 * d.alpha0);
        assert!(d.alpha < 0.05 * 1e6, "alpha {}", d.alpha);
        let got = r.synthetic.total_mass();
        assert!((got - 1e6).abs() <= 0.25 * 1e6 + d.alpha);
        assert!(r.ledger.fits_within(&c.budget()).unwrap());
    }

    #[test]
    fn alpha_floor_binds_each_requirement() {
        assert_eq!(proof_alpha_floor(100, 1.0, 1e9, 0.5), 150.0);
        assert_eq!(proof_alpha_floor(10, 1.0, 1e9, 0.5), 88.0);
        let noise = 12.0 * 2f64.ln() / 1e-3;
        assert!((proof_alpha_floor(10, 1.0, 1e-3, 0.5) - noise).abs() < 1e-9);
    }

    #[test]
    fn rejects_fractional_input() {
        let h = Histogram::new(vec![0.5, 1.0]).unwrap();
        let f = BinaryFamily::new(2, vec![BinaryQuery::all_ones(2)]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(run_prem(&h, &f, &PremConfig::default(), &mut rng).is_err());
    }
}
