//! Complete-information power-minimization game.
//!
//! Player `k` minimizes its power subject to `sinr_k >= target_k`. When the
//! target-weighted gain-ratio matrix `G` has spectral radius below one the
//! game has a unique generalized Nash equilibrium, the fixed point of the
//! best-response map `p_k = target_k / cinr_k(p)`, which is also the
//! solution of the linear system `(I - G) p = b` with
//! `b_k = target_k * noise / g_kk`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel;
use crate::error::{Error, Result};

/// Default ceiling, as a multiple of `max(b)`, above which best-response
/// iteration is declared divergent.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    power_gains: DMatrix<f64>,
    noise: f64,
    targets: Vec<f64>,
}

impl GameSpec {
    pub fn new(power_gains: DMatrix<f64>, noise: f64, targets: Vec<f64>) -> Result<Self> {
        let k = power_gains.nrows();
        if k == 0 || !power_gains.is_square() {
            return Err(Error::InvalidArgument("power gains must be a non-empty square matrix".into()));
        }
        if targets.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{} targets for {k} pairs",
                targets.len()
            )));
        }
        if power_gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("power gains must be finite and non-negative".into()));
        }
        if (0..k).any(|i| !(power_gains[(i, i)] > 0.0)) {
            return Err(Error::InvalidArgument("direct gains must be positive".into()));
        }
        if targets.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument("targets must be positive and finite".into()));
        }
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument("noise power must be positive".into()));
        }
        Ok(Self {
            power_gains,
            noise,
            targets,
        })
    }

    pub fn pairs(&self) -> usize {
        self.targets.len()
    }

    pub fn power_gains(&self) -> &DMatrix<f64> {
        &self.power_gains
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Same gains and noise with every target multiplied by `factor`.
    pub fn with_scaled_targets(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.power_gains.clone(),
            self.noise,
            self.targets.iter().map(|t| t * factor).collect(),
        )
    }

    /// Restriction of the game to a subset of pairs, in the given order.
    pub fn subgame(&self, pairs: &[usize]) -> Result<Self> {
        let n = self.pairs();
        if let Some(&bad) = pairs.iter().find(|&&k| k >= n) {
            return Err(Error::PairOutOfRange { index: bad, pairs: n });
        }
        let gains = DMatrix::from_fn(pairs.len(), pairs.len(), |a, b| {
            self.power_gains[(pairs[a], pairs[b])]
        });
        Self::new(gains, self.noise, pairs.iter().map(|&k| self.targets[k]).collect())
    }

    /// Interference-free powers `b_k = target_k * noise / g_kk`.
    pub fn noise_powers(&self) -> Vec<f64> {
        (0..self.pairs())
            .map(|k| self.targets[k] * self.noise / self.power_gains[(k, k)])
            .collect()
    }

    pub fn sinr(&self, k: usize, powers: &[f64]) -> f64 {
        channel::sinr(k, powers, &self.power_gains, self.noise)
    }

    pub fn cinr(&self, k: usize, powers: &[f64]) -> f64 {
        channel::cinr(k, powers, &self.power_gains, self.noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub spectral_radius: f64,
    pub feasible: bool,
    /// Row-major `G`.
    pub g_matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub powers: Vec<f64>,
    /// Best-response updates performed; 0 for the direct solve.
    pub iterations: usize,
    /// `max_k |p_k - BR_k(p)| / p_k`.
    pub residual: f64,
}

/// `[G]_{k,i} = target_k * g_ki / g_kk` off the diagonal, zero on it.
pub fn build_g_matrix(spec: &GameSpec) -> DMatrix<f64> {
    let g = spec.power_gains();
    let t = spec.targets();
    DMatrix::from_fn(spec.pairs(), spec.pairs(), |k, i| {
        if k == i {
            0.0
        } else {
            t[k] * g[(k, i)] / g[(k, k)]
        }
    })
}

/// Options for [`spectral_radius`].
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

/// Spectral radius of a non-negative square matrix.
///
/// Shifted power iteration: each step multiplies by `M + s I`, where `s` is
/// the current upper bound on `rho`. On a non-negative matrix the shift keeps
/// the Perron root `rho + s` strictly dominant, and `s` close to `rho` leaves
/// the other eigenvalues as small as possible relative to it. The estimate is
/// bracketed by the Collatz-Wielandt bounds
/// `min_i (Mx)_i / x_i <= rho <= max_i (Mx)_i / x_i` for positive `x`, and
/// iteration stops once the bracket is narrower than `tol * rho`.
pub fn spectral_radius(m: &DMatrix<f64>, opts: SpectralOptions) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return Err(Error::InvalidArgument("spectral radius needs a non-empty square matrix".into()));
    }
    if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("spectral radius needs a finite non-negative matrix".into()));
    }
    let mut upper = (0..n).map(|i| m.row(i).sum()).fold(0.0, f64::max);
    if upper == 0.0 {
        return Ok(0.0);
    }
    let mut lower = 0.0f64;
    let mut x = DVector::from_element(n, 1.0);
    for _ in 0..opts.max_iter {
        let mx = m * &x;
        let (lo, hi) = x
            .iter()
            .zip(mx.iter())
            .map(|(xi, yi)| yi / xi)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q), hi.max(q)));
        lower = lower.max(lo);
        upper = upper.min(hi);
        if upper - lower <= opts.tol * upper {
            return Ok(0.5 * (lower + upper));
        }
        let y = mx + &x * upper;
        let norm = y.amax();
        x = y / norm;
        // Components can underflow on badly scaled matrices; keep x positive.
        x.apply(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    Err(Error::SpectralRadiusNonConvergence {
        iterations: opts.max_iter,
        lower,
        upper,
    })
}

pub fn check_feasibility(spec: &GameSpec) -> Result<FeasibilityReport> {
    let g = build_g_matrix(spec);
    let rho = spectral_radius(&g, SpectralOptions::default())?;
    Ok(FeasibilityReport {
        spectral_radius: rho,
        feasible: rho < 1.0,
        g_matrix: g.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

/// Best response of every player to the joint vector `powers`.
pub fn best_response(spec: &GameSpec, powers: &[f64]) -> Vec<f64> {
    (0..spec.pairs())
        .map(|k| spec.targets[k] / spec.cinr(k, powers))
        .collect()
}

pub fn residual(spec: &GameSpec, powers: &[f64]) -> f64 {
    best_response(spec, powers)
        .iter()
        .zip(powers)
        .map(|(br, p)| (p - br).abs() / p)
        .fold(0.0, f64::max)
}

/// Solves `(I - G) p = b` directly.
pub fn solve_gne_direct(spec: &GameSpec) -> Result<EquilibriumResult> {
    let report = check_feasibility(spec)?;
    if !report.feasible {
        return Err(Error::InfeasibleGame {
            spectral_radius: report.spectral_radius,
        });
    }
    let n = spec.pairs();
    let a = DMatrix::identity(n, n) - build_g_matrix(spec);
    let b = DVector::from_vec(spec.noise_powers());
    let p = a.lu().solve(&b).ok_or(Error::Singular)?;
    let powers: Vec<f64> = p.iter().copied().collect();
    if powers.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Singular);
    }
    Ok(EquilibriumResult {
        residual: residual(spec, &powers),
        powers,
        iterations: 0,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct IterateOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Divergence ceiling as a multiple of `max(b)`.
    pub divergence_factor: f64,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
        }
    }
}

/// Synchronous best-response dynamics from `p0`.
///
/// Stops after the first update whose largest relative change is below
/// `tol`. Returns [`Error::NoConvergence`] with the last iterate if
/// `max_iter` updates pass or a power exceeds the divergence ceiling.
pub fn best_response_iterate(
    spec: &GameSpec,
    p0: &[f64],
    opts: IterateOptions,
) -> Result<EquilibriumResult> {
    if p0.len() != spec.pairs() || p0.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidArgument("initial powers must be positive, one per pair".into()));
    }
    let ceiling = opts.divergence_factor * spec.noise_powers().iter().copied().fold(0.0, f64::max);
    let mut p = p0.to_vec();
    for it in 1..=opts.max_iter {
        let next = best_response(spec, &p);
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0, f64::max);
        p = next;
        if change < opts.tol || (change == 0.0 && opts.tol == 0.0) {
            return Ok(EquilibriumResult {
                residual: residual(spec, &p),
                powers: p,
                iterations: it,
            });
        }
        if p.iter().any(|v| *v > ceiling || !v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: it,
                last_iterate: p,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_iterate: p,
    })
}

/// The first `steps` iterates of synchronous best-response dynamics,
/// starting with `p0` itself.
pub fn best_response_trajectory(spec: &GameSpec, p0: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(steps);
    let mut p = p0.to_vec();
    for _ in 0..steps {
        let next = best_response(spec, &p);
        out.push(std::mem::replace(&mut p, next));
    }
    out
}
