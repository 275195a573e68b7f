//! Statistical queries and query families.

use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::error::{check_dims, invalid, Result};
use crate::histogram::Histogram;

/// A linear query `f(h) = ⟨h, f⟩` over a fixed domain.
pub trait LinearQuery {
    fn domain_size(&self) -> usize;

    /// `f(x)` for one domain element.
    fn value_at(&self, x: usize) -> f64;

    fn evaluate(&self, h: &Histogram) -> Result<f64>;
}

/// `f: X → {0, 1}`, stored as its support `f⁻¹(1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinaryQuery {
    support: Bitset,
}

impl BinaryQuery {
    pub fn new(support: Bitset) -> Self {
        BinaryQuery { support }
    }

    pub fn from_indices(domain_size: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        Ok(BinaryQuery { support: Bitset::from_indices(domain_size, indices)? })
    }

    pub fn all_ones(domain_size: usize) -> Self {
        BinaryQuery { support: Bitset::full(domain_size) }
    }

    pub fn support(&self) -> &Bitset {
        &self.support
    }

    pub fn is_all_ones(&self) -> bool {
        self.support.is_full()
    }
}

impl LinearQuery for BinaryQuery {
    fn domain_size(&self) -> usize {
        self.support.len()
    }

    fn value_at(&self, x: usize) -> f64 {
        if self.support.contains(x) {
            1.0
        } else {
            0.0
        }
    }

    fn evaluate(&self, h: &Histogram) -> Result<f64> {
        h.indicator_mass(&self.support)
    }
}

/// `f: X → [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealQuery {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for RealQuery {
    type Error = crate::Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        RealQuery::new(values)
    }
}

impl From<RealQuery> for Vec<f64> {
    fn from(q: RealQuery) -> Self {
        q.values
    }
}

impl RealQuery {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("real query", format!("value {v} at index {i} lies outside [0, 1]")));
        }
        Ok(RealQuery { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&BinaryQuery> for RealQuery {
    fn from(q: &BinaryQuery) -> Self {
        RealQuery { values: (0..q.domain_size()).map(|x| q.value_at(x)).collect() }
    }
}

impl LinearQuery for RealQuery {
    fn domain_size(&self) -> usize {
        self.values.len()
    }

    fn value_at(&self, x: usize) -> f64 {
        self.values[x]
    }

    fn evaluate(&self, h: &Histogram) -> Result<f64> {
        check_dims(self.values.len(), h.domain_size())?;
        Ok(h.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum())
    }
}

/// `Σ_x h_x · f(x)`.
pub fn evaluate_query<Q: LinearQuery + ?Sized>(h: &Histogram, f: &Q) -> Result<f64> {
    check_dims(f.domain_size(), h.domain_size())?;
    f.evaluate(h)
}

/// An ordered, nonempty query family. Query IDs are positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFamily<Q> {
    domain_size: usize,
    queries: Vec<Q>,
}

pub type BinaryFamily = QueryFamily<BinaryQuery>;
pub type RealFamily = QueryFamily<RealQuery>;

impl<Q: LinearQuery> QueryFamily<Q> {
    pub fn new(domain_size: usize, queries: Vec<Q>) -> Result<Self> {
        if queries.is_empty() {
            return Err(invalid("query family", "must contain at least one query"));
        }
        for q in &queries {
            check_dims(domain_size, q.domain_size())?;
        }
        Ok(QueryFamily { domain_size, queries })
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Q> {
        self.queries.get(id)
    }

    pub fn queries(&self) -> &[Q] {
        &self.queries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Q)> {
        self.queries.iter().enumerate()
    }

    pub fn evaluate_all(&self, h: &Histogram) -> Result<Vec<f64>> {
        check_dims(self.domain_size, h.domain_size())?;
        self.queries.iter().map(|q| q.evaluate(h)).collect()
    }

    pub(crate) fn push(&mut self, q: Q) {
        self.queries.push(q);
    }
}

impl QueryFamily<BinaryQuery> {
    pub fn contains_all_ones(&self) -> bool {
        self.queries.iter().any(BinaryQuery::is_all_ones)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(w: &[f64]) -> Histogram {
        Histogram::new(w.to_vec()).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let x = h(&[2.0, 3.0, 0.0]);
        let f = BinaryQuery::from_indices(3, [0, 2]).unwrap();
        assert_eq!(evaluate_query(&x, &f).unwrap(), 2.0);
        assert_eq!(evaluate_query(&x, &BinaryQuery::all_ones(3)).unwrap(), 5.0);
        assert_eq!(evaluate_query(&x, &BinaryQuery::from_indices(3, []).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_dimension_mismatch() {
        let x = h(&[2.0, 3.0, 0.0]);
        assert!(evaluate_query(&x, &BinaryQuery::all_ones(4)).is_err());
        assert!(evaluate_query(&x, &RealQuery::new(vec![0.5; 2]).unwrap()).is_err());
    }

    #[test]
    fn real_query_matches_binary_on_indicator_values() {
        let x = h(&[2.0, 3.0, 4.0]);
        let b = BinaryQuery::from_indices(3, [1, 2]).unwrap();
        let r = RealQuery::from(&b);
        assert_eq!(r.evaluate(&x).unwrap(), b.evaluate(&x).unwrap());
    }

    #[test]
    fn real_query_range_checked() {
        assert!(RealQuery::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(RealQuery::new(vec![1.5]).is_err());
        assert!(RealQuery::new(vec![-0.1]).is_err());
    }

    #[test]
    fn empty_family_rejected() {
        assert!(BinaryFamily::new(3, vec![]).is_err());
    }
}
