//! Per-transmitter learning controller.
//!
//! After every packet the transmitter sees one ACK/NACK bit `f`. It nudges its
//! CINR estimate by a stochastic-approximation step
//!
//! ```text
//! mu <- mu + (f - eps(mu, p, r)) / (n^beta * eps'(mu, p, r))
//! ```
//!
//! where `(mu, p, r)` are the values used on packet `n`, picks the next rate
//! by maximizing the Fisher information of the feedback bit, and transmits at
//! the best response `target / mu`.
//!
//! Rate candidates are restricted to those whose predicted error probability
//! stays below a ceiling, and by default they are scored at the power the
//! next packet is actually sent with. See [`select_rate_at`] and
//! [`ProbePower`] for why.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{CodingModel, Feedback};

/// Default `mu_floor` relative to the initial estimate.
pub const DEFAULT_MU_FLOOR_FRACTION: f64 = 1e-9;

/// Default cap on the predicted error probability of a candidate rate.
pub const DEFAULT_PROBE_EPS_CEILING: f64 = 0.3;

/// Which transmit power the rate candidates are scored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbePower {
    /// The power the next packet is sent with, `target / mu_hat`.
    #[default]
    Current,
    /// The power of the previous packet.
    Previous,
}

impl std::str::FromStr for ProbePower {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current" => Ok(Self::Current),
            "previous" => Ok(Self::Previous),
            other => Err(Error::InvalidArgument(format!("unknown probe power `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Linear SINR target.
    pub target: f64,
    pub beta: f64,
    /// Lower clamp on the estimate as a fraction of the initial estimate.
    pub mu_floor_fraction: f64,
    /// Optional transmit power cap in watts.
    pub p_max: Option<f64>,
    pub probe_eps_ceiling: f64,
    pub probe_power: ProbePower,
}

impl AgentParams {
    pub fn new(target: f64, beta: f64) -> Self {
        Self {
            target,
            beta,
            mu_floor_fraction: DEFAULT_MU_FLOOR_FRACTION,
            p_max: None,
            probe_eps_ceiling: DEFAULT_PROBE_EPS_CEILING,
            probe_power: ProbePower::Current,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    mu_hat: f64,
    power: f64,
    rate: f64,
    /// Index of the packet that `(mu_hat, power, rate)` were used on.
    packet_index: u64,
    mu_floor: f64,
    capped: bool,
    params: AgentParams,
    model: Arc<CodingModel>,
}

impl AgentState {
    pub fn new(params: AgentParams, model: Arc<CodingModel>, mu_init: f64, r_init: f64) -> Result<Self> {
        if !(params.target > 0.0 && params.target.is_finite()) {
            return Err(Error::InvalidArgument(format!("target must be positive, got {}", params.target)));
        }
        if !(params.beta > 0.0 && params.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {}", params.beta)));
        }
        if !(mu_init > 0.0 && mu_init.is_finite()) {
            return Err(Error::InvalidArgument(format!("initial estimate must be positive, got {mu_init}")));
        }
        if !(params.mu_floor_fraction > 0.0 && params.mu_floor_fraction <= 1.0) {
            return Err(Error::InvalidArgument("mu floor fraction must lie in (0, 1]".into()));
        }
        if let Some(cap) = params.p_max {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument("power cap must be positive".into()));
            }
        }
        if !(params.probe_eps_ceiling > 0.0 && params.probe_eps_ceiling <= 1.0) {
            return Err(Error::InvalidArgument("probe error ceiling must lie in (0, 1]".into()));
        }
        if !model.contains_rate(r_init) {
            return Err(Error::RateNotInSet(r_init));
        }
        let mut state = Self {
            mu_hat: mu_init,
            power: 0.0,
            rate: r_init,
            packet_index: 1,
            mu_floor: params.mu_floor_fraction * mu_init,
            capped: false,
            params,
            model,
        };
        state.apply_power();
        Ok(state)
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn target(&self) -> f64 {
        self.params.target
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn packet_index(&self) -> u64 {
        self.packet_index
    }

    pub fn mu_floor(&self) -> f64 {
        self.mu_floor
    }

    /// Whether the power cap bound on the most recent power update.
    pub fn capped(&self) -> bool {
        self.capped
    }

    pub fn model(&self) -> &CodingModel {
        &self.model
    }

    /// `(n)^beta` for the packet whose feedback is being consumed.
    fn step_scale(&self) -> f64 {
        (self.packet_index as f64).powf(self.params.beta)
    }

    /// Raw increment of the estimate for a feedback value `f` in `[0, 1]`.
    pub fn estimate_increment(&self, f: f64) -> f64 {
        let m = &self.model;
        let eps = m.error_prob(self.mu_hat, self.power, self.rate);
        let d = m.error_prob_derivative(self.mu_hat, self.power, self.rate);
        (f - eps) / (self.step_scale() * d)
    }

    /// Updated estimate after the feedback of the stored packet.
    pub fn update_estimate(&self, feedback: Feedback) -> f64 {
        self.update_estimate_with(feedback.value())
    }

    /// As [`update_estimate`](Self::update_estimate) with a real-valued
    /// feedback; `f = eps(true mu)` gives the noiseless mean update.
    pub fn update_estimate_with(&self, f: f64) -> f64 {
        (self.mu_hat + self.estimate_increment(f)).max(self.mu_floor)
    }

    /// Power at which the rate candidates are scored.
    pub fn probe_power(&self) -> f64 {
        match self.params.probe_power {
            ProbePower::Current => self.update_power(),
            ProbePower::Previous => self.power,
        }
    }

    /// Fisher-optimal rate for the current estimate, see [`select_rate_at`].
    pub fn select_rate(&self) -> f64 {
        select_rate_at(&self.model, self.mu_hat, self.probe_power(), self.params.probe_eps_ceiling)
    }

    /// Best response to the current estimate, subject to the cap.
    pub fn update_power(&self) -> f64 {
        let p = self.params.target / self.mu_hat;
        match self.params.p_max {
            Some(cap) if p > cap => cap,
            _ => p,
        }
    }

    fn apply_power(&mut self) {
        let p = self.update_power();
        self.capped = p != self.params.target / self.mu_hat;
        self.power = p;
    }

    fn advance(&mut self, mu_hat: f64) {
        self.mu_hat = mu_hat;
        self.rate = self.select_rate();
        self.apply_power();
        self.packet_index += 1;
    }

    /// Consumes the feedback of the stored packet and prepares the next one.
    pub fn step(&mut self, feedback: Feedback) {
        self.step_with(feedback.value());
    }

    pub fn step_with(&mut self, f: f64) {
        let mu = self.update_estimate_with(f);
        self.advance(mu);
    }

    /// Replaces the estimate with a known CINR (perfect-CSI operation).
    pub fn step_with_known_cinr(&mut self, mu: f64) {
        self.advance(mu.max(self.mu_floor));
    }
}

/// Rate maximizing `fisher_info(mu, p, r)` among the rates whose predicted
/// error probability is at most `eps_ceiling`. Falls back to the smallest
/// rate when no rate qualifies. Ties go to the smallest rate.
///
/// Under the Gallager approximation `Phi` grows with `eps`, so the
/// unconstrained argmax sits on a saturated rate whose feedback says nothing
/// about `mu`. A ceiling at or above `1 - eps_floor` gives the unconstrained
/// rule.
pub fn select_rate_at(model: &CodingModel, mu: f64, p: f64, eps_ceiling: f64) -> f64 {
    let rates = model.rate_set();
    let admissible = |r: f64| model.error_prob(mu, p, r) <= eps_ceiling;
    if !rates.iter().any(|&r| admissible(r)) {
        return rates[0];
    }
    select_rate_by(rates, |r| if admissible(r) { model.fisher_info(mu, p, r) } else { f64::NEG_INFINITY })
}

/// Argmax of `score` over `rates`, first (smallest) rate on ties.
pub fn select_rate_by(rates: &[f64], mut score: impl FnMut(f64) -> f64) -> f64 {
    let mut best = rates[0];
    let mut best_score = score(best);
    for &r in &rates[1..] {
        let s = score(r);
        if s > best_score {
            best = r;
            best_score = s;
        }
    }
    best
}
