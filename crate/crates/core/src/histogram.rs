//! Dense nonnegative histograms over a finite domain.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::{iter_words, Bitset};
use crate::domain::Domain;
use crate::error::{check_dims, invalid, Error, Result};

/// Above this many cells the cached mass uses compensated summation.
const COMPENSATED_SUM_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct Histogram {
    weights: Vec<f64>,
    total_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    domain_size: usize,
    weights: Vec<f64>,
}

impl TryFrom<HistogramRepr> for Histogram {
    type Error = Error;

    fn try_from(r: HistogramRepr) -> Result<Self> {
        check_dims(r.domain_size, r.weights.len())?;
        Histogram::new(r.weights)
    }
}

impl From<Histogram> for HistogramRepr {
    fn from(h: Histogram) -> Self {
        HistogramRepr { domain_size: h.weights.len(), weights: h.weights }
    }
}

pub(crate) fn sum(values: &[f64]) -> f64 {
    if values.len() > COMPENSATED_SUM_THRESHOLD {
        neumaier_sum(values.iter().copied())
    } else {
        values.iter().sum()
    }
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

impl Histogram {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("histogram", "domain must have at least one element"));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid("histogram", format!("weight {w} at index {i} is not a finite nonnegative number")));
        }
        let total_mass = sum(&weights);
        Ok(Histogram { weights, total_mass })
    }

    pub fn zeros(domain_size: usize) -> Self {
        Histogram { weights: vec![0.0; domain_size], total_mass: 0.0 }
    }

    /// Mass `mass` spread evenly over the members of `support`.
    pub fn uniform_on(support: &Bitset, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(invalid("mass", format!("{mass} is not a finite nonnegative number")));
        }
        let count = support.count();
        let mut weights = vec![0.0; support.len()];
        if count > 0 {
            let each = mass / count as f64;
            for i in support.iter() {
                weights[i] = each;
            }
        }
        Histogram::new(weights)
    }

    pub fn from_records(records: &[usize], domain: &Domain) -> Result<Self> {
        let mut weights = vec![0.0; domain.size()];
        for (row, &x) in records.iter().enumerate() {
            if x >= domain.size() {
                return Err(Error::RecordOutOfRange { row, index: x, size: domain.size() });
            }
            weights[x] += 1.0;
        }
        Ok(Histogram { weights, total_mass: records.len() as f64 })
    }

    #[inline]
    pub fn domain_size(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_integral(&self) -> bool {
        self.weights.iter().all(|w| w.fract() == 0.0)
    }

    pub fn require_integral(&self) -> Result<()> {
        match self.weights.iter().enumerate().find(|(_, w)| w.fract() != 0.0) {
            Some((index, &value)) => Err(Error::NonIntegerHistogram { index, value }),
            None => Ok(()),
        }
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// `h|_S`: zero outside `subset`.
    pub fn restrict(&self, subset: &Bitset) -> Result<Histogram> {
        check_dims(self.domain_size(), subset.len())?;
        let weights: Vec<f64> = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, &w)| if subset.contains(i) { w } else { 0.0 })
            .collect();
        let total_mass = sum(&weights);
        Ok(Histogram { weights, total_mass })
    }

    /// `1_S(h) = Σ_{x∈S} h_x`.
    pub fn indicator_mass(&self, subset: &Bitset) -> Result<f64> {
        check_dims(self.domain_size(), subset.len())?;
        Ok(self.mass_over_words(subset.words().iter().copied()))
    }

    /// `Σ_{x ∈ a ∩ b} h_x` without materializing the intersection.
    pub fn intersection_mass(&self, a: &Bitset, b: &Bitset) -> Result<f64> {
        check_dims(self.domain_size(), a.len())?;
        check_dims(self.domain_size(), b.len())?;
        Ok(self.mass_over_words(a.words().iter().zip(b.words()).map(|(x, y)| x & y)))
    }

    #[inline]
    fn mass_over_words(&self, words: impl Iterator<Item = u64>) -> f64 {
        iter_words(words).map(|i| self.weights[i]).sum()
    }

    pub fn add(&self, other: &Histogram) -> Result<Histogram> {
        check_dims(self.domain_size(), other.domain_size())?;
        let weights: Vec<f64> = self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect();
        Histogram::new(weights)
    }

    pub fn add_assign(&mut self, other: &Histogram) -> Result<()> {
        check_dims(self.domain_size(), other.domain_size())?;
        self.weights.iter_mut().zip(&other.weights).for_each(|(a, b)| *a += b);
        self.total_mass = sum(&self.weights);
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Result<Histogram> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(invalid("factor", format!("{factor} is not a finite nonnegative number")));
        }
        Histogram::new(self.weights.iter().map(|w| w * factor).collect())
    }

    /// Rescales to total mass `target`; the zero histogram stays zero.
    pub fn rescaled_to(&self, target: f64) -> Result<Histogram> {
        if self.total_mass == 0.0 {
            return Ok(self.clone());
        }
        self.scale(target / self.total_mass)
    }

    pub fn l1_distance(&self, other: &Histogram) -> Result<f64> {
        check_dims(self.domain_size(), other.domain_size())?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Support `{x : h_x > 0}`.
    pub fn support(&self) -> Bitset {
        Bitset::from_predicate(self.domain_size(), |i| self.weights[i] > 0.0)
    }

    /// Draws `m` i.i.d. records from the distribution `h / ||h||₁`.
    pub fn sample_records<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.total_mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let dist = WeightedIndex::new(&self.weights).map_err(|e| invalid("histogram", e.to_string()))?;
        Ok((0..m).map(|_| dist.sample(rng)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn h(w: &[f64]) -> Histogram {
        Histogram::new(w.to_vec()).unwrap()
    }

    fn set(len: usize, idx: &[usize]) -> Bitset {
        Bitset::from_indices(len, idx.iter().copied()).unwrap()
    }

    #[test]
    fn restrict_examples() {
        let x = h(&[2.0, 3.0, 4.0]);
        assert_eq!(x.restrict(&set(3, &[1])).unwrap().weights(), &[0.0, 3.0, 0.0]);
        assert_eq!(x.restrict(&Bitset::full(3)).unwrap(), x);
        assert_eq!(x.restrict(&Bitset::empty(3)).unwrap(), Histogram::zeros(3));
    }

    #[test]
    fn indicator_mass_examples() {
        let x = h(&[2.0, 3.0, 4.0]);
        assert_eq!(x.indicator_mass(&set(3, &[0, 2])).unwrap(), 6.0);
        assert_eq!(x.indicator_mass(&Bitset::empty(3)).unwrap(), 0.0);
        assert_eq!(x.indicator_mass(&Bitset::full(3)).unwrap(), x.total_mass());
    }

    #[test]
    fn indicator_mass_dimension_mismatch() {
        assert!(matches!(
            h(&[1.0]).indicator_mass(&Bitset::empty(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_records_examples() {
        let d4 = Domain::new(4).unwrap();
        assert_eq!(Histogram::from_records(&[1, 1, 3], &d4).unwrap().weights(), &[0.0, 2.0, 0.0, 1.0]);
        assert_eq!(Histogram::from_records(&[], &d4).unwrap(), Histogram::zeros(4));
        let ones = Histogram::from_records(&[0, 1, 2, 3], &d4).unwrap();
        assert_eq!(ones.weights(), &[1.0; 4]);
        assert_eq!(ones.total_mass(), 4.0);
    }

    #[test]
    fn from_records_reports_offending_row() {
        let d4 = Domain::new(4).unwrap();
        let err = Histogram::from_records(&[0, 9, 1], &d4).unwrap_err();
        assert!(matches!(err, Error::RecordOutOfRange { row: 1, index: 9, size: 4 }));
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(Histogram::new(vec![1.0, -0.5]).is_err());
        assert!(Histogram::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn sample_degenerate_distribution() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(h(&[0.0, 5.0, 0.0]).sample_records(3, &mut rng).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn sample_balanced_coin_within_three_sigma() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let m = 100_000;
        let draws = h(&[1.0, 1.0]).sample_records(m, &mut rng).unwrap();
        let zeros = draws.iter().filter(|&&x| x == 0).count() as f64;
        let sigma = (0.25 / m as f64).sqrt();
        assert!((zeros / m as f64 - 0.5).abs() <= 3.0 * sigma);
    }

    #[test]
    fn sample_is_reproducible_given_seed() {
        let x = h(&[2.0, 3.0]);
        let a = x.sample_records(100_000, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = x.sample_records(100_000, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_zero_mass_is_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(matches!(Histogram::zeros(3).sample_records(1, &mut rng), Err(Error::ZeroMass)));
    }

    #[test]
    fn compensated_sum_on_large_domains() {
        let n = (1 << 16) + 10;
        let mut w = vec![1e-8; n];
        w[0] = 1e8;
        let hist = Histogram::new(w).unwrap();
        let expected = 1e8 + (n as f64 - 1.0) * 1e-8;
        assert!((hist.total_mass() - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn serde_round_trip_is_lossless() {
        let x = h(&[0.1, 1.0 / 3.0, 2e-300, 12345.678901234567]);
        let json = serde_json::to_string(&x).unwrap();
        let back: Histogram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
    }
}
