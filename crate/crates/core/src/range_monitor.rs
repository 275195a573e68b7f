//! Interval monitors over a private histogram with a shrinking active set.
//!
//! Both monitors answer "is `f(h|S_act)` inside `(τℓ, τu)`?" and, on any
//! out-of-range answer, permanently drop `f⁻¹(1)` from the active set. The
//! approximate monitor adds fresh `Lap(1/a)` noise per query and is accounted
//! by target charging. The pure monitor is a sparse-vector variant with a
//! shared threshold noise and a hard cap `Γ` on out-of-range answers.
//!
//! Thresholds may be any real number, including infinities. A lower
//! threshold below every attainable value simply makes `Below` rare.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::error::{check_dims, invalid, Result};
use crate::histogram::Histogram;
use crate::privacy::NoiseMode;
use crate::query::{BinaryQuery, LinearQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MonitorResponse {
    Inside,
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PureResponse {
    Answer(MonitorResponse),
    /// The out-of-range cap was reached; no further answers are released.
    Halted,
}

fn check_thresholds(tau_l: f64, tau_u: f64) -> Result<()> {
    if tau_l.is_nan() || tau_u.is_nan() {
        return Err(invalid("threshold", "must not be NaN"));
    }
    Ok(())
}

/// Shared bookkeeping of the active set.
#[derive(Debug, Clone)]
struct ActiveState<'h> {
    h: &'h Histogram,
    active: Bitset,
    queries_answered: u64,
    out_of_range_count: u64,
}

impl<'h> ActiveState<'h> {
    fn new(h: &'h Histogram, active: Bitset) -> Result<Self> {
        h.require_integral()?;
        check_dims(h.domain_size(), active.len())?;
        Ok(ActiveState { h, active, queries_answered: 0, out_of_range_count: 0 })
    }

    fn restricted_value(&self, f: &BinaryQuery) -> Result<f64> {
        check_dims(self.h.domain_size(), f.domain_size())?;
        self.h.intersection_mass(f.support(), &self.active)
    }

    fn remove(&mut self, f: &BinaryQuery) {
        self.active
            .difference_with(f.support())
            .expect("query dimensions were checked before evaluation");
        self.out_of_range_count += 1;
    }
}

/// Approximate-DP monitor: fresh `Lap(1/a)` noise per query.
#[derive(Debug, Clone)]
pub struct ApproxMonitor<'h> {
    state: ActiveState<'h>,
    a: f64,
    noise: NoiseMode,
}

impl<'h> ApproxMonitor<'h> {
    /// Monitor over `h` with noise parameter `a ∈ (0, 1]`, starting from active set `y`.
    pub fn new(h: &'h Histogram, a: f64, y: Bitset) -> Result<Self> {
        Self::with_noise(h, a, y, NoiseMode::Laplace)
    }

    /// Like [`ApproxMonitor::new`] but injects zero noise. Not private.
    pub fn new_noise_disabled_unsafe(h: &'h Histogram, a: f64, y: Bitset) -> Result<Self> {
        Self::with_noise(h, a, y, NoiseMode::DisabledUnsafe)
    }

    pub fn with_noise(h: &'h Histogram, a: f64, y: Bitset, noise: NoiseMode) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(invalid("a", format!("must lie in (0, 1], got {a}")));
        }
        Ok(ApproxMonitor { state: ActiveState::new(h, y)?, a, noise })
    }

    pub fn query<R: Rng + ?Sized>(
        &mut self,
        f: &BinaryQuery,
        tau_l: f64,
        tau_u: f64,
        rng: &mut R,
    ) -> Result<MonitorResponse> {
        check_thresholds(tau_l, tau_u)?;
        let noisy = self.state.restricted_value(f)? + self.noise.laplace(1.0 / self.a, rng)?;
        self.state.queries_answered += 1;
        if tau_l < noisy && noisy < tau_u {
            return Ok(MonitorResponse::Inside);
        }
        self.state.remove(f);
        Ok(if noisy >= tau_u { MonitorResponse::Above } else { MonitorResponse::Below })
    }

    pub fn active_set(&self) -> &Bitset {
        &self.state.active
    }

    pub fn noise_scale(&self) -> f64 {
        self.a
    }

    pub fn queries_answered(&self) -> u64 {
        self.state.queries_answered
    }

    pub fn out_of_range_count(&self) -> u64 {
        self.state.out_of_range_count
    }
}

/// Pure-DP monitor with at most `Γ` out-of-range answers.
#[derive(Debug, Clone)]
pub struct PureMonitor<'h> {
    state: ActiveState<'h>,
    a: f64,
    gamma: u64,
    counter: u64,
    threshold_noise: f64,
    halted: bool,
    noise: NoiseMode,
}

impl<'h> PureMonitor<'h> {
    pub fn new<R: Rng + ?Sized>(h: &'h Histogram, a: f64, gamma: u64, y: Bitset, rng: &mut R) -> Result<Self> {
        Self::with_noise(h, a, gamma, y, NoiseMode::Laplace, rng)
    }

    /// Like [`PureMonitor::new`] but injects zero noise. Not private.
    pub fn new_noise_disabled_unsafe<R: Rng + ?Sized>(
        h: &'h Histogram,
        a: f64,
        gamma: u64,
        y: Bitset,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_noise(h, a, gamma, y, NoiseMode::DisabledUnsafe, rng)
    }

    pub fn with_noise<R: Rng + ?Sized>(
        h: &'h Histogram,
        a: f64,
        gamma: u64,
        y: Bitset,
        noise: NoiseMode,
        rng: &mut R,
    ) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be a positive finite real, got {a}")));
        }
        if gamma < 1 {
            return Err(invalid("gamma", "must be at least 1"));
        }
        let state = ActiveState::new(h, y)?;
        let threshold_noise = noise.laplace(2.0 / a, rng)?;
        Ok(PureMonitor { state, a, gamma, counter: 0, threshold_noise, halted: false, noise })
    }

    pub fn query<R: Rng + ?Sized>(
        &mut self,
        f: &BinaryQuery,
        tau_l: f64,
        tau_u: f64,
        rng: &mut R,
    ) -> Result<PureResponse> {
        check_thresholds(tau_l, tau_u)?;
        if self.halted || self.counter >= self.gamma {
            self.halted = true;
            return Ok(PureResponse::Halted);
        }
        let value = self.state.restricted_value(f)?;
        self.state.queries_answered += 1;
        let scale = 4.0 / self.a;
        let response = if value + self.noise.laplace(scale, rng)? >= tau_u + self.threshold_noise {
            MonitorResponse::Above
        } else if value + self.noise.laplace(scale, rng)? <= tau_l - self.threshold_noise {
            MonitorResponse::Below
        } else {
            return Ok(PureResponse::Answer(MonitorResponse::Inside));
        };
        self.counter += 1;
        self.threshold_noise = self.noise.laplace(2.0 / self.a, rng)?;
        self.state.remove(f);
        Ok(PureResponse::Answer(response))
    }

    pub fn active_set(&self) -> &Bitset {
        &self.state.active
    }

    pub fn noise_scale(&self) -> f64 {
        self.a
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn threshold_noise(&self) -> f64 {
        self.threshold_noise
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn queries_answered(&self) -> u64 {
        self.state.queries_answered
    }

    pub fn out_of_range_count(&self) -> u64 {
        self.state.out_of_range_count
    }
}

fn check_radius_inputs(a: f64, rounds: u64, beta: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(invalid("a", format!("must be positive, got {a}")));
    }
    if rounds < 1 {
        return Err(invalid("rounds", "must be at least 1"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `(1/a)·ln(R/β)`: with probability `1 − β` all of `R` approximate-monitor
/// answers are correct up to this radius.
pub fn approx_accuracy_radius(a: f64, rounds: u64, beta: f64) -> Result<f64> {
    check_radius_inputs(a, rounds, beta)?;
    Ok((rounds as f64 / beta).ln() / a)
}

/// `(6/a)·ln(R/β)`, the pure-monitor counterpart.
pub fn pure_accuracy_radius(a: f64, rounds: u64, beta: f64) -> Result<f64> {
    check_radius_inputs(a, rounds, beta)?;
    Ok(6.0 * (rounds as f64 / beta).ln() / a)
}

/// Whether `response` is consistent with the true restricted value `value`
/// up to radius `c`: Inside needs `τℓ − C ≤ v ≤ τu + C`, Above needs
/// `v ≥ τu − C`, Below needs `v ≤ τℓ + C`.
pub fn response_within_radius(response: MonitorResponse, value: f64, tau_l: f64, tau_u: f64, c: f64) -> bool {
    match response {
        MonitorResponse::Inside => tau_l - c <= value && value <= tau_u + c,
        MonitorResponse::Above => value >= tau_u - c,
        MonitorResponse::Below => value <= tau_l + c,
    }
}
