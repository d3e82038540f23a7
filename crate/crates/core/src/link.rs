//! ACK/NACK observation model.
//!
//! The decoding-error probability of a packet of `M` Gaussian random-code
//! symbols sent at rate `r` with received SINR `gamma` is approximated by the
//! random-coding exponent
//!
//! ```text
//! eps = exp( M * rho * [ r * ln 2 - 0.5 * ln(1 + gamma / (1 + rho)) ] )
//! ```
//!
//! clamped to `[eps_floor, 1 - eps_floor]`. The controller only knows its
//! transmit power `p` and an estimate of the CINR `mu`, so every function here
//! takes `(mu, p, r)` and forms `gamma = mu * p`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingModel {
    symbols_per_packet: u32,
    union_bound_rho: f64,
    rate_set: Vec<f64>,
    eps_floor: f64,
}

impl CodingModel {
    pub fn new(
        symbols_per_packet: u32,
        union_bound_rho: f64,
        rate_set: Vec<f64>,
        eps_floor: f64,
    ) -> Result<Self> {
        if symbols_per_packet == 0 {
            return Err(Error::InvalidArgument("packets need at least one symbol".into()));
        }
        if !(0.0..=1.0).contains(&union_bound_rho) {
            return Err(Error::InvalidArgument(format!(
                "union bound parameter must lie in [0, 1], got {union_bound_rho}"
            )));
        }
        if rate_set.is_empty() {
            return Err(Error::InvalidArgument("rate set is empty".into()));
        }
        if rate_set.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("rates must be positive and finite".into()));
        }
        if rate_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("rate set must be strictly ascending".into()));
        }
        if !(eps_floor > 0.0 && eps_floor < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "eps_floor must lie in (0, 0.5), got {eps_floor}"
            )));
        }
        Ok(Self {
            symbols_per_packet,
            union_bound_rho,
            rate_set,
            eps_floor,
        })
    }

    pub fn symbols_per_packet(&self) -> u32 {
        self.symbols_per_packet
    }

    pub fn union_bound_rho(&self) -> f64 {
        self.union_bound_rho
    }

    pub fn rate_set(&self) -> &[f64] {
        &self.rate_set
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    pub fn contains_rate(&self, r: f64) -> bool {
        self.rate_set.contains(&r)
    }

    /// `M * rho`, the slope of the exponent.
    fn scale(&self) -> f64 {
        f64::from(self.symbols_per_packet) * self.union_bound_rho
    }

    /// Exponent of the error-probability approximation.
    pub fn exponent(&self, mu: f64, p: f64, r: f64) -> f64 {
        let rho = self.union_bound_rho;
        let gamma = mu * p;
        self.scale() * (r * std::f64::consts::LN_2 - 0.5 * (gamma / (1.0 + rho)).ln_1p())
    }

    /// Unclamped approximation; may exceed one above the exponent's zero crossing.
    pub fn error_prob_raw(&self, mu: f64, p: f64, r: f64) -> f64 {
        self.exponent(mu, p, r).exp()
    }

    pub fn error_prob(&self, mu: f64, p: f64, r: f64) -> f64 {
        self.error_prob_raw(mu, p, r)
            .clamp(self.eps_floor, 1.0 - self.eps_floor)
    }

    /// True when the raw approximation lies outside `(eps_floor, 1 - eps_floor)`.
    pub fn is_saturated(&self, mu: f64, p: f64, r: f64) -> bool {
        let raw = self.error_prob_raw(mu, p, r);
        raw <= self.eps_floor || raw >= 1.0 - self.eps_floor
    }

    /// `d eps / d mu = -M rho p / (2 (1 + rho + mu p)) * eps`, using the clamped `eps`.
    pub fn error_prob_derivative(&self, mu: f64, p: f64, r: f64) -> f64 {
        let rho = self.union_bound_rho;
        -self.scale() * p / (2.0 * (1.0 + rho + mu * p)) * self.error_prob(mu, p, r)
    }

    /// Fisher information about `mu` carried by one feedback bit.
    pub fn fisher_info(&self, mu: f64, p: f64, r: f64) -> f64 {
        let eps = self.error_prob(mu, p, r);
        let d = self.error_prob_derivative(mu, p, r);
        d * d / (eps * (1.0 - eps))
    }

    /// Rate at which the raw approximation equals `eps` for SINR `mu * p`.
    /// Useful for placing rates inside the informative region.
    pub fn rate_for_error_prob(&self, mu: f64, p: f64, eps: f64) -> f64 {
        let rho = self.union_bound_rho;
        (eps.ln() / self.scale() + 0.5 * (mu * p / (1.0 + rho)).ln_1p()) / std::f64::consts::LN_2
    }
}

/// Link-layer feedback for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feedback {
    Ack,
    Nack,
}

impl Feedback {
    /// `f = 0` for ACK, `f = 1` for NACK.
    pub fn bit(self) -> u8 {
        match self {
            Feedback::Ack => 0,
            Feedback::Nack => 1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.bit())
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Feedback::Ack),
            1 => Ok(Feedback::Nack),
            other => Err(Error::InvalidArgument(format!("feedback bit must be 0 or 1, got {other}"))),
        }
    }
}

/// Samples the feedback of one packet: NACK with probability `eps(mu, p, r)`.
/// Consumes exactly one uniform draw.
pub fn sample_feedback<R: Rng + ?Sized>(
    model: &CodingModel,
    true_mu: f64,
    p: f64,
    r: f64,
    rng: &mut R,
) -> Feedback {
    let u: f64 = rng.random();
    if u < model.error_prob(true_mu, p, r) {
        Feedback::Nack
    } else {
        Feedback::Ack
    }
}
