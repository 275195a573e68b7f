//! Differentially private synthetic histograms with relative-error guarantees.
//!
//! The main entry point is [`prem::run_prem`], which releases a synthetic
//! histogram `ĥ` such that every query `f` in a family satisfies
//! `(1 − ζ)f(h*) − α ≤ f(ĥ) ≤ (1 + ζ)f(h*) + α` with high probability.
//! Real-valued queries go through [`reductions`]; [`baselines`] holds the
//! comparison mechanisms and [`evaluation`] the accuracy audits.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bitset;
pub mod cli;
pub mod domain;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod find_margin;
pub mod histogram;
pub mod io;
pub mod prem;
pub mod privacy;
pub mod query;
pub mod range_monitor;
pub mod reductions;
pub(crate) mod streams;
pub mod workload;

pub use bitset::Bitset;
pub use domain::{Attribute, Domain, Schema};
pub use error::{Error, Result};
pub use histogram::Histogram;
pub use query::{evaluate_query, BinaryFamily, BinaryQuery, LinearQuery, QueryFamily, RealFamily, RealQuery};
