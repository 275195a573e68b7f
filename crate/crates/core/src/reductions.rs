//! Real-valued queries through binary thresholding.
//!
//! A query `f: X → [0, 1]` is replaced by its level sets `f_{≥τ}` on the
//! geometric ladder `τ_i = (1 + ζ′)^{-i}`, `i = 0..=L`, plus `τ_{L+1} = 0`.
//! The staircase `f̃ = Σ_{i≤L} (τ_i − τ_{i+1})·f_{≥τ_i}` telescopes to
//! `f̃(x) = τ_{i(x)}` where `i(x)` is the first level with `f(x) ≥ τ_i`, and
//! satisfies `f̃(h) ≤ f(h) ≤ (1 + ζ′)f̃(h) + τ_L‖h‖₁`. Running the binary
//! release on all level sets with relative slack `ζ′ = ζ/10` therefore
//! answers the real family with relative slack `ζ` and additive `3α′ + 1`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::histogram::Histogram;
use crate::prem::{run_prem, PremConfig, PremResult};
use crate::query::{BinaryFamily, BinaryQuery, LinearQuery, RealFamily, RealQuery};
use crate::bitset::Bitset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLadder {
    pub zeta_prime: f64,
    /// Index of the last positive level.
    pub levels: usize,
    /// `τ_0 = 1 > τ_1 > … > τ_L > τ_{L+1} = 0`.
    pub taus: Vec<f64>,
}

impl ThresholdLadder {
    pub fn tau_last_positive(&self) -> f64 {
        self.taus[self.levels]
    }

    /// Number of level sets per real query, `L + 2`.
    pub fn width(&self) -> usize {
        self.levels + 2
    }

    /// First level `i ≤ L` with `v ≥ τ_i`, or `None` when `v < τ_L`.
    pub fn first_level_below(&self, v: f64) -> Option<usize> {
        let i = self.taus[..=self.levels].partition_point(|&t| v < t);
        (i <= self.levels).then_some(i)
    }
}

/// Ladder for relative slack `ζ ∈ (0, 0.5]` and population size `n ≥ 1`.
pub fn build_ladder(zeta: f64, n: f64) -> Result<ThresholdLadder> {
    if !(zeta > 0.0 && zeta <= 0.5) {
        return Err(invalid("zeta", format!("must lie in (0, 0.5], got {zeta}")));
    }
    if !(n >= 1.0 && n.is_finite()) {
        return Err(invalid("n", format!("must be at least 1, got {n}")));
    }
    let zeta_prime = 0.1 * zeta;
    let base = 1.0 + zeta_prime;
    let mut levels = (n.ln() / base.ln()).ceil() as usize + 1;
    // guard τ_L·n ≤ 1 against rounding in the ceiling
    while base.powi(-(levels as i32)) * n > 1.0 {
        levels += 1;
    }
    let mut taus: Vec<f64> = (0..=levels).map(|i| base.powi(-(i as i32))).collect();
    taus.push(0.0);
    Ok(ThresholdLadder { zeta_prime, levels, taus })
}

/// Level set `f_{≥τ}`.
pub fn threshold_query(f: &RealQuery, tau: f64) -> BinaryQuery {
    let support = Bitset::from_predicate(f.domain_size(), |x| f.value_at(x) >= tau);
    BinaryQuery::new(support)
}

/// All level sets; query `j` at level `i` gets ID `j·(L + 2) + i`.
pub fn binarize_family(family: &RealFamily, ladder: &ThresholdLadder) -> BinaryFamily {
    let queries = family
        .queries()
        .iter()
        .flat_map(|f| ladder.taus.iter().map(move |&t| threshold_query(f, t)))
        .collect();
    BinaryFamily::new(family.domain_size(), queries).expect("a nonempty real family yields a nonempty binary one")
}

/// Drops repeated queries, keeping first occurrences in order. Returns the
/// reduced family and, for every input ID, its ID in the reduced family.
pub fn dedup_family(family: &BinaryFamily) -> (BinaryFamily, Vec<usize>) {
    let mut first: HashMap<&BinaryQuery, usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut map = Vec::with_capacity(family.len());
    for q in family.queries() {
        let id = *first.entry(q).or_insert_with(|| {
            kept.push(q.clone());
            kept.len() - 1
        });
        map.push(id);
    }
    let reduced = BinaryFamily::new(family.domain_size(), kept).expect("at least one query survives");
    (reduced, map)
}

/// Staircase surrogate `f̃`, evaluated through its telescoped form.
pub fn staircase_surrogate(f: &RealQuery, ladder: &ThresholdLadder) -> RealQuery {
    let values = f
        .values()
        .iter()
        .map(|&v| ladder.first_level_below(v).map_or(0.0, |i| ladder.taus[i]))
        .collect();
    RealQuery::new(values).expect("ladder levels lie in [0, 1]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealPremResult {
    /// The binary run on the level-set family.
    pub binary: PremResult,
    pub ladder: ThresholdLadder,
    /// `|F|·(L + 2)`, before removing duplicate level sets.
    pub binarized_family_size: usize,
    /// Distinct level sets handed to the binary release.
    pub distinct_family_size: usize,
    /// `3α′ + 1` with `α′` the binary run's certified slack.
    pub certified_alpha: f64,
}

impl RealPremResult {
    pub fn synthetic(&self) -> &Histogram {
        &self.binary.synthetic
    }

    pub fn failed(&self) -> bool {
        self.binary.failed
    }
}

/// Runs the binary release on the level sets of `family`. `config.zeta` is
/// the target slack for the real queries and may be up to `0.5`.
pub fn run_prem_real<R: Rng + ?Sized>(
    h_star: &Histogram,
    family: &RealFamily,
    config: &PremConfig,
    rng: &mut R,
) -> Result<RealPremResult> {
    let n = h_star.total_mass();
    let ladder = build_ladder(config.zeta, n.max(1.0))?;
    let mut binary_config = *config;
    binary_config.zeta = ladder.zeta_prime;
    binary_config.validate()?;
    let binarized = binarize_family(family, &ladder);
    let (distinct, _) = dedup_family(&binarized);
    let binary = run_prem(h_star, &distinct, &binary_config, rng)?;
    Ok(RealPremResult {
        certified_alpha: 3.0 * binary.certified_alpha + 1.0,
        binarized_family_size: binarized.len(),
        distinct_family_size: distinct.len(),
        binary,
        ladder,
    })
}
