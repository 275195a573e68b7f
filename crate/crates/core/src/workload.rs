//! Query workloads and synthetic datasets for experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::domain::{Attribute, Domain, Schema};
use crate::error::{check_dims, invalid, Result};
use crate::histogram::Histogram;
use crate::query::{BinaryFamily, BinaryQuery, RealFamily, RealQuery};

/// A query family of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "family", rename_all = "kebab-case")]
pub enum Workload {
    Binary(BinaryFamily),
    Real(RealFamily),
}

impl Workload {
    pub fn len(&self) -> usize {
        match self {
            Workload::Binary(f) => f.len(),
            Workload::Real(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain_size(&self) -> usize {
        match self {
            Workload::Binary(f) => f.domain_size(),
            Workload::Real(f) => f.domain_size(),
        }
    }

    pub fn evaluate_all(&self, h: &Histogram) -> Result<Vec<f64>> {
        match self {
            Workload::Binary(f) => f.evaluate_all(h),
            Workload::Real(f) => f.evaluate_all(h),
        }
    }
}

/// Parameters of a generated workload. With the domain and seed fixed, the
/// generated family is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WorkloadSpec {
    /// Each element joins each query's support independently with probability `p`.
    RandomBinary { count: usize, p: f64 },
    /// All `arity`-way marginal cells over the schema; `count` keeps a random subset.
    Marginal { arity: usize, count: Option<usize> },
    /// Soft ramps `clamp((s(x) − c)/w, 0, 1)` over the score `s(x) = x/(|X| − 1)`.
    ThresholdReal { count: usize },
}

impl WorkloadSpec {
    pub fn generate(&self, domain: &Domain, seed: u64) -> Result<Workload> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        match *self {
            WorkloadSpec::RandomBinary { count, p } => {
                random_binary_family(domain.size(), count, p, &mut rng).map(Workload::Binary)
            }
            WorkloadSpec::Marginal { arity, count } => {
                let all = marginal_family(domain, arity)?;
                match count {
                    Some(c) if c < all.len() => {
                        let mut ids = sample(&mut rng, all.len(), c).into_vec();
                        ids.sort_unstable();
                        let qs = ids.into_iter().map(|i| all.queries()[i].clone()).collect();
                        BinaryFamily::new(domain.size(), qs).map(Workload::Binary)
                    }
                    _ => Ok(Workload::Binary(all)),
                }
            }
            WorkloadSpec::ThresholdReal { count } => {
                threshold_real_family(domain.size(), count, &mut rng).map(Workload::Real)
            }
        }
    }
}

pub fn random_binary_family<R: Rng + ?Sized>(domain_size: usize, count: usize, p: f64, rng: &mut R) -> Result<BinaryFamily> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    let queries = (0..count)
        .map(|_| BinaryQuery::new(Bitset::from_predicate(domain_size, |_| rng.gen_bool(p))))
        .collect();
    BinaryFamily::new(domain_size, queries)
}

/// Every combination of values over every `arity`-subset of attributes, as
/// conjunction indicators. Subsets in lexicographic order, cells in
/// mixed-radix order within a subset.
pub fn marginal_family(domain: &Domain, arity: usize) -> Result<BinaryFamily> {
    let schema = domain.schema().ok_or_else(|| invalid("workload", "marginals need an attribute schema"))?;
    let d = schema.attributes.len();
    if arity == 0 || arity > d {
        return Err(invalid("arity", format!("must lie in 1..={d}, got {arity}")));
    }
    let radices = schema.radices();
    let mut queries = Vec::new();
    let mut subset: Vec<usize> = (0..arity).collect();
    loop {
        let cells: usize = subset.iter().map(|&a| radices[a]).product();
        let mut supports = vec![Bitset::empty(domain.size()); cells];
        for x in 0..domain.size() {
            let digits = domain.decode(x)?;
            let cell = subset.iter().fold(0, |acc, &a| acc * radices[a] + digits[a]);
            supports[cell].insert(x);
        }
        queries.extend(supports.into_iter().map(BinaryQuery::new));
        // next subset in lexicographic order
        let Some(pos) = (0..arity).rev().find(|&i| subset[i] < d - arity + i) else { break };
        subset[pos] += 1;
        for i in pos + 1..arity {
            subset[i] = subset[i - 1] + 1;
        }
    }
    BinaryFamily::new(domain.size(), queries)
}

pub fn threshold_real_family<R: Rng + ?Sized>(domain_size: usize, count: usize, rng: &mut R) -> Result<RealFamily> {
    let denom = (domain_size.max(2) - 1) as f64;
    let queries = (0..count)
        .map(|_| {
            let center: f64 = rng.gen();
            let width: f64 = rng.gen_range(0.05..0.5);
            let values = (0..domain_size)
                .map(|x| ((x as f64 / denom - center) / width + 0.5).clamp(0.0, 1.0))
                .collect();
            RealQuery::new(values)
        })
        .collect::<Result<Vec<_>>>()?;
    RealFamily::new(domain_size, queries)
}

/// Schema of `attributes` binary attributes `a0, a1, …` with categories `0`, `1`.
pub fn binary_schema(attributes: usize) -> Result<Schema> {
    Schema::new(
        (0..attributes)
            .map(|i| Attribute { name: format!("a{i}"), categories: vec!["0".into(), "1".into()] })
            .collect(),
    )
}

/// `n` records drawn i.i.d. with `P(x) ∝ (x + 1)^{-exponent}` over a random
/// relabeling of the domain.
pub fn zipf_histogram<R: Rng + ?Sized>(domain_size: usize, n: usize, exponent: f64, rng: &mut R) -> Result<Histogram> {
    let mut order: Vec<usize> = (0..domain_size).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut weights = vec![0.0; domain_size];
    for (rank, &x) in order.iter().enumerate() {
        weights[x] = ((rank + 1) as f64).powf(-exponent);
    }
    let shape = Histogram::new(weights)?;
    let records = shape.sample_records(n, rng)?;
    Histogram::from_records(&records, &Domain::new(domain_size)?)
}

/// Checks a workload against a histogram's domain.
pub fn check_workload(h: &Histogram, w: &Workload) -> Result<()> {
    check_dims(h.domain_size(), w.domain_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Domain {
        Domain::with_schema(
            Schema::new(vec![
                Attribute { name: "a".into(), categories: vec!["x".into(), "y".into(), "z".into()] },
                Attribute { name: "b".into(), categories: vec!["0".into(), "1".into()] },
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn one_way_marginal_partitions_domain() {
        let d = schema();
        let f = marginal_family(&d, 1).unwrap();
        assert_eq!(f.len(), 3 + 2);
        let first: Vec<_> = f.queries()[..3].iter().map(|q| q.support().clone()).collect();
        let mut union = Bitset::empty(6);
        for (i, s) in first.iter().enumerate() {
            for t in &first[i + 1..] {
                assert!(s.is_disjoint(t));
            }
            union.union_with(s).unwrap();
        }
        assert!(union.is_full());
    }

    #[test]
    fn full_arity_marginals_are_points() {
        let f = marginal_family(&schema(), 2).unwrap();
        assert_eq!(f.len(), 6);
        assert!(f.queries().iter().all(|q| q.support().count() == 1));
        assert!(marginal_family(&schema(), 3).is_err());
    }

    #[test]
    fn random_binary_extremes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let ones = random_binary_family(10, 3, 1.0, &mut rng).unwrap();
        assert!(ones.queries().iter().all(BinaryQuery::is_all_ones));
        let zeros = random_binary_family(10, 3, 0.0, &mut rng).unwrap();
        assert!(zeros.queries().iter().all(|q| q.support().is_empty()));
    }

    #[test]
    fn generation_is_reproducible() {
        let d = Domain::new(32).unwrap();
        let spec = WorkloadSpec::RandomBinary { count: 5, p: 0.3 };
        assert_eq!(spec.generate(&d, 4).unwrap(), spec.generate(&d, 4).unwrap());
        let real = WorkloadSpec::ThresholdReal { count: 3 };
        assert_eq!(real.generate(&d, 4).unwrap(), real.generate(&d, 4).unwrap());
    }

    #[test]
    fn marginal_count_subsamples() {
        let d = Domain::with_schema(binary_schema(4).unwrap()).unwrap();
        let spec = WorkloadSpec::Marginal { arity: 2, count: Some(5) };
        assert_eq!(spec.generate(&d, 1).unwrap().len(), 5);
    }

    #[test]
    fn zipf_has_requested_mass() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let h = zipf_histogram(64, 1000, 1.1, &mut rng).unwrap();
        assert_eq!(h.total_mass(), 1000.0);
        assert!(h.is_integral());
    }
}
