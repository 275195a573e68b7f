//! The data universe and its optional attribute schema.
//!
//! Domain elements built from a schema use a mixed-radix, row-major
//! encoding: the first attribute is the most significant digit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<Schema>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(invalid("schema", "at least one attribute is required"));
        }
        for a in &attributes {
            if a.categories.is_empty() {
                return Err(invalid("schema", format!("attribute {:?} has no categories", a.name)));
            }
            let mut seen = std::collections::HashSet::new();
            for c in &a.categories {
                if !seen.insert(c) {
                    return Err(invalid(
                        "schema",
                        format!("attribute {:?} repeats category {c:?}", a.name),
                    ));
                }
            }
        }
        Ok(Schema { attributes })
    }

    pub fn radices(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.categories.len()).collect()
    }

    pub fn size(&self) -> Result<usize> {
        self.attributes.iter().try_fold(1usize, |acc, a| {
            acc.checked_mul(a.categories.len())
                .ok_or_else(|| invalid("schema", "domain size overflows usize"))
        })
    }
}

impl Domain {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("domain size", "must be at least 1"));
        }
        Ok(Domain { size, schema: None })
    }

    pub fn with_schema(schema: Schema) -> Result<Self> {
        let size = schema.size()?;
        Ok(Domain { size, schema: Some(schema) })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn schema(&self) -> Option<&Schema> {
        self.schema.as_ref()
    }

    /// Maps per-attribute category positions to a domain index.
    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        let schema = self.require_schema()?;
        if digits.len() != schema.attributes.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.attributes.len(),
                found: digits.len(),
            });
        }
        let mut index = 0usize;
        for (d, a) in digits.iter().zip(&schema.attributes) {
            let radix = a.categories.len();
            if *d >= radix {
                return Err(invalid(
                    "record",
                    format!("category position {d} out of range for attribute {:?}", a.name),
                ));
            }
            index = index * radix + d;
        }
        Ok(index)
    }

    pub fn decode(&self, mut index: usize) -> Result<Vec<usize>> {
        let schema = self.require_schema()?;
        if index >= self.size {
            return Err(Error::RecordOutOfRange { row: 0, index, size: self.size });
        }
        let mut digits = vec![0; schema.attributes.len()];
        for (slot, a) in digits.iter_mut().zip(&schema.attributes).rev() {
            let radix = a.categories.len();
            *slot = index % radix;
            index /= radix;
        }
        Ok(digits)
    }

    pub fn encode_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        let schema = self.require_schema()?;
        if labels.len() != schema.attributes.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.attributes.len(),
                found: labels.len(),
            });
        }
        let digits = labels
            .iter()
            .zip(&schema.attributes)
            .map(|(l, a)| {
                a.categories.iter().position(|c| c == l.as_ref()).ok_or_else(|| {
                    Error::UnknownLabel {
                        row: 0,
                        column: a.name.clone(),
                        label: l.as_ref().to_string(),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.encode(&digits)
    }

    pub fn decode_labels(&self, index: usize) -> Result<Vec<&str>> {
        let schema = self.require_schema()?;
        let digits = self.decode(index)?;
        Ok(digits
            .iter()
            .zip(&schema.attributes)
            .map(|(d, a)| a.categories[*d].as_str())
            .collect())
    }

    fn require_schema(&self) -> Result<&Schema> {
        self.schema.as_ref().ok_or_else(|| invalid("domain", "no attribute schema attached"))
    }
}
