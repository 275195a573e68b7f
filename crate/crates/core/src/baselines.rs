//! Comparison mechanisms: an exponential mechanism over sparse histograms,
//! sparse resampling, and independent Laplace answers per query.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, invalid, Error, Result};
use crate::histogram::Histogram;
use crate::privacy::laplace_sample;
use crate::query::{BinaryFamily, LinearQuery, QueryFamily};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// `s(h) = −max_f max{f(h) − (1 + ζ)f(h*), (1 − ζ)f(h*) − f(h)}`.
pub fn relative_score<Q: LinearQuery>(h: &Histogram, h_star: &Histogram, family: &QueryFamily<Q>, zeta: f64) -> Result<f64> {
    check_dims(h_star.domain_size(), h.domain_size())?;
    let est = family.evaluate_all(h)?;
    let truth = family.evaluate_all(h_star)?;
    Ok(-worst_violation(&est, &truth, zeta))
}

fn worst_violation(est: &[f64], truth: &[f64], zeta: f64) -> f64 {
    est.iter()
        .zip(truth)
        .map(|(e, t)| (e - (1.0 + zeta) * t).max((1.0 - zeta) * t - e))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Histograms placing mass `n/k` on each element of a size-`k` multiset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseHistogramSpace {
    pub support_size: usize,
    pub domain_size: usize,
    pub total_mass: f64,
}

impl SparseHistogramSpace {
    pub fn new(support_size: usize, domain_size: usize, total_mass: f64) -> Result<Self> {
        if support_size == 0 || domain_size == 0 {
            return Err(invalid("support size", "support and domain sizes must be at least 1"));
        }
        if !(total_mass >= 0.0 && total_mass.is_finite()) {
            return Err(invalid("total mass", format!("must be finite and nonnegative, got {total_mass}")));
        }
        Ok(SparseHistogramSpace { support_size, domain_size, total_mass })
    }

    /// Multisets in lexicographic order of their sorted element lists.
    pub fn multisets(&self) -> Vec<Vec<usize>> {
        let (k, d) = (self.support_size, self.domain_size);
        let mut out = Vec::new();
        let mut cur = vec![0usize; k];
        loop {
            out.push(cur.clone());
            // advance the rightmost position that can still grow
            let Some(pos) = (0..k).rev().find(|&p| cur[p] + 1 < d) else { break };
            let next = cur[pos] + 1;
            cur[pos..].iter_mut().for_each(|c| *c = next);
        }
        out
    }

    pub fn histogram(&self, multiset: &[usize]) -> Histogram {
        let each = self.total_mass / self.support_size as f64;
        let mut w = vec![0.0; self.domain_size];
        for &x in multiset {
            w[x] += each;
        }
        Histogram::new(w).expect("weights are finite and nonnegative")
    }
}

/// Exponential mechanism over a [`SparseHistogramSpace`], with the full
/// candidate list and normalized probabilities precomputed.
#[derive(Debug, Clone)]
pub struct ExponentialMechanism {
    space: SparseHistogramSpace,
    candidates: Vec<Vec<usize>>,
    scores: Vec<f64>,
    /// `None` in the `ε = ∞` argmax mode.
    sampler: Option<WeightedIndex<f64>>,
    probabilities: Vec<f64>,
}

impl ExponentialMechanism {
    /// Candidate `h` is drawn with probability `∝ exp(s(h)·ε/(2(1 + ζ)))`.
    /// `ε = ∞` deterministically returns the first maximizer.
    pub fn new(
        h_star: &Histogram,
        family: &BinaryFamily,
        epsilon: f64,
        zeta: f64,
        support_size: usize,
        cap: u64,
    ) -> Result<Self> {
        check_dims(h_star.domain_size(), family.domain_size())?;
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&zeta) {
            return Err(invalid("zeta", format!("must lie in [0, 1), got {zeta}")));
        }
        let space = SparseHistogramSpace::new(support_size, h_star.domain_size(), h_star.total_mass())?;
        let bound = (space.domain_size as f64).powi(support_size as i32);
        if bound > cap as f64 {
            return Err(Error::EnumerationCap { size: bound, cap });
        }
        let candidates = space.multisets();
        let truth = family.evaluate_all(h_star)?;
        let each = space.total_mass / support_size as f64;
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|m| {
                let est: Vec<f64> = family
                    .queries()
                    .iter()
                    .map(|q| each * m.iter().filter(|&&x| q.support().contains(x)).count() as f64)
                    .collect();
                -worst_violation(&est, &truth, zeta)
            })
            .collect();

        let (sampler, probabilities) = if epsilon.is_infinite() {
            let best = argmax(&scores);
            let mut p = vec![0.0; scores.len()];
            p[best] = 1.0;
            (None, p)
        } else {
            let temp = epsilon / (2.0 * (1.0 + zeta));
            let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = scores.iter().map(|s| ((s - top) * temp).exp()).collect();
            let z: f64 = w.iter().sum();
            let p = w.iter().map(|x| x / z).collect();
            let sampler = WeightedIndex::new(&w).map_err(|e| invalid("weights", e.to_string()))?;
            (Some(sampler), p)
        };
        Ok(ExponentialMechanism { space, candidates, scores, sampler, probabilities })
    }

    pub fn space(&self) -> &SparseHistogramSpace {
        &self.space
    }

    pub fn candidates(&self) -> &[Vec<usize>] {
        &self.candidates
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.sampler {
            Some(s) => s.sample(rng),
            None => argmax(&self.scores),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Histogram {
        self.space.histogram(&self.candidates[self.sample_index(rng)])
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// One draw of the exponential mechanism with the default enumeration cap.
pub fn exponential_mechanism<R: Rng + ?Sized>(
    h_star: &Histogram,
    family: &BinaryFamily,
    epsilon: f64,
    zeta: f64,
    support_size: usize,
    rng: &mut R,
) -> Result<Histogram> {
    Ok(ExponentialMechanism::new(h_star, family, epsilon, zeta, support_size, DEFAULT_ENUMERATION_CAP)?.sample(rng))
}

/// `⌈(8e/ζ²)(n/α′)·ln(4|F|)⌉`.
pub fn default_support_size(n: f64, alpha_prime: f64, zeta: f64, family_size: usize) -> Result<usize> {
    if !(alpha_prime > 0.0 && zeta > 0.0 && n > 0.0) {
        return Err(invalid("support size", "n, α′ and ζ must be positive"));
    }
    let k = 8.0 * std::f64::consts::E / (zeta * zeta) * (n / alpha_prime) * (4.0 * family_size as f64).ln();
    Ok((k.ceil() as usize).max(1))
}

/// Draws `k` records from `h*/n` and gives each mass `n/k`.
pub fn sparse_sample_histogram<R: Rng + ?Sized>(h_star: &Histogram, k: usize, rng: &mut R) -> Result<Histogram> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let draws = h_star.sample_records(k, rng)?;
    let space = SparseHistogramSpace::new(k, h_star.domain_size(), h_star.total_mass())?;
    Ok(space.histogram(&draws))
}

/// `f(h*) + Lap(|F|/ε)` for every query.
pub fn laplace_per_query<Q: LinearQuery, R: Rng + ?Sized>(
    h_star: &Histogram,
    family: &QueryFamily<Q>,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be a positive finite real, got {epsilon}")));
    }
    let scale = family.len() as f64 / epsilon;
    family
        .evaluate_all(h_star)?
        .into_iter()
        .map(|v| Ok(v + laplace_sample(scale, rng)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::BinaryQuery;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn hist(w: &[f64]) -> Histogram {
        Histogram::new(w.to_vec()).unwrap()
    }

    #[test]
    fn score_examples() {
        let f = BinaryFamily::new(2, vec![BinaryQuery::from_indices(2, [0]).unwrap()]).unwrap();
        assert_eq!(relative_score(&hist(&[0.0, 4.0]), &hist(&[4.0, 0.0]), &f, 0.25).unwrap(), -3.0);
        let h = hist(&[3.0, 5.0]);
        let g = BinaryFamily::new(
            2,
            vec![BinaryQuery::from_indices(2, [0]).unwrap(), BinaryQuery::all_ones(2)],
        )
        .unwrap();
        assert!((relative_score(&h, &h, &g, 0.2).unwrap() - 0.2 * 3.0).abs() < 1e-12);
        assert_eq!(relative_score(&h, &h, &g, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn multisets_are_lexicographic() {
        let s = SparseHistogramSpace::new(2, 3, 2.0).unwrap();
        assert_eq!(
            s.multisets(),
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 1], vec![1, 2], vec![2, 2]]
        );
        assert_eq!(s.histogram(&[1, 1]).weights(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let h = Histogram::new(vec![1.0; 100]).unwrap();
        let f = BinaryFamily::new(100, vec![BinaryQuery::all_ones(100)]).unwrap();
        let err = ExponentialMechanism::new(&h, &f, 1.0, 0.1, 4, DEFAULT_ENUMERATION_CAP).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { .. }));
    }

    #[test]
    fn infinite_epsilon_returns_argmax() {
        let h = hist(&[4.0, 0.0, 0.0]);
        let f = BinaryFamily::new(3, vec![BinaryQuery::from_indices(3, [0]).unwrap()]).unwrap();
        let m = ExponentialMechanism::new(&h, &f, f64::INFINITY, 0.1, 2, 1000).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(m.sample(&mut rng).weights(), &[4.0, 0.0, 0.0]);
    }

    #[test]
    fn default_support_size_example() {
        assert_eq!(default_support_size(100.0, 25.0, 0.5, 4).unwrap(), 965);
    }

    #[test]
    fn sparse_sample_of_point_mass_is_exact() {
        let h = hist(&[0.0, 7.0, 0.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(sparse_sample_histogram(&h, 5, &mut rng).unwrap(), h);
    }

    #[test]
    fn sparse_sample_preserves_mass() {
        let h = hist(&[3.0, 3.0, 3.0, 3.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let s = sparse_sample_histogram(&h, 12, &mut rng).unwrap();
        assert!((s.total_mass() - 12.0).abs() < 1e-12);
        assert!(sparse_sample_histogram(&Histogram::zeros(3), 2, &mut rng).is_err());
    }

    #[test]
    fn laplace_near_noiseless() {
        let h = hist(&[3.0, 5.0, 9.0]);
        let f = BinaryFamily::new(
            3,
            vec![BinaryQuery::from_indices(3, [0]).unwrap(), BinaryQuery::all_ones(3)],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let est = laplace_per_query(&h, &f, 1e6, &mut rng).unwrap();
        assert!((est[0] - 3.0).abs() < 1e-3 && (est[1] - 17.0).abs() < 1e-3);
        let again = laplace_per_query(&h, &f, 1e6, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert_eq!(est, again);
    }
}
