//! Topologies, channel realizations and the SINR/CINR expressions.
//!
//! Matrices are indexed `[(receiver, transmitter)]`, so row `k` collects
//! everything heard by receiver `k`.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement attempts before giving up on a topology.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of `K` transmitter/receiver pairs. Pair `k` is a user
/// (transmitter) attached to the small-cell access point (receiver) `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tx_positions: Vec<Point>,
    pub rx_positions: Vec<Point>,
    pub area: (f64, f64),
    pub cell_radius: f64,
    pub min_distance: f64,
}

impl Topology {
    pub fn new(
        tx_positions: Vec<Point>,
        rx_positions: Vec<Point>,
        area: (f64, f64),
        cell_radius: f64,
        min_distance: f64,
    ) -> Result<Self> {
        let topo = Self {
            tx_positions,
            rx_positions,
            area,
            cell_radius,
            min_distance,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn pairs(&self) -> usize {
        self.tx_positions.len()
    }

    /// Distance from transmitter `i` to receiver `k`.
    pub fn distance(&self, k: usize, i: usize) -> f64 {
        self.tx_positions[i].distance(&self.rx_positions[k])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.pairs();
        if k == 0 || self.rx_positions.len() != k {
            return Err(Error::InvalidArgument(format!(
                "topology needs matching non-empty position lists (tx {}, rx {})",
                k,
                self.rx_positions.len()
            )));
        }
        if !(self.min_distance > 0.0 && self.cell_radius >= self.min_distance) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < min_distance <= cell_radius, got {} and {}",
                self.min_distance, self.cell_radius
            )));
        }
        let (w, h) = self.area;
        let inside = |p: &Point| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h;
        for (idx, p) in self.tx_positions.iter().chain(&self.rx_positions).enumerate() {
            if !inside(p) {
                return Err(Error::InvalidArgument(format!(
                    "position #{idx} ({}, {}) outside the {w} x {h} area",
                    p.x, p.y
                )));
            }
        }
        for rx in 0..k {
            for tx in 0..k {
                let d = self.distance(rx, tx);
                if d < self.min_distance {
                    return Err(Error::InvalidArgument(format!(
                        "tx {tx} is {d:.3} m from rx {rx}, below the {} m minimum",
                        self.min_distance
                    )));
                }
            }
            if self.distance(rx, rx) > self.cell_radius {
                return Err(Error::InvalidArgument(format!(
                    "user {rx} lies outside its cell radius {}",
                    self.cell_radius
                )));
            }
        }
        Ok(())
    }
}

/// Distance-based attenuation `d_bar / d^alpha` plus the receiver noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    pub d_bar: f64,
    pub alpha: f64,
    pub noise_power: f64,
}

impl FadingModel {
    pub fn new(d_bar: f64, alpha: f64, noise_power: f64) -> Result<Self> {
        if !(d_bar > 0.0 && alpha >= 2.0 && noise_power > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fading model needs d_bar > 0, alpha >= 2, noise > 0 (got {d_bar}, {alpha}, {noise_power})"
            )));
        }
        Ok(Self {
            d_bar,
            alpha,
            noise_power,
        })
    }

    /// Large-scale amplitude scale at distance `d`, clamped below at `min_distance`.
    pub fn amplitude_scale(&self, d: f64, min_distance: f64) -> f64 {
        self.d_bar / d.max(min_distance).powf(self.alpha)
    }
}

/// Complex amplitudes `h[(k, i)]` with the squared magnitudes cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    amplitudes: DMatrix<Complex<f64>>,
    power_gains: DMatrix<f64>,
}

impl GainMatrix {
    pub fn from_amplitudes(amplitudes: DMatrix<Complex<f64>>) -> Result<Self> {
        if !amplitudes.is_square() || amplitudes.nrows() == 0 {
            return Err(Error::InvalidArgument("gain matrix must be square and non-empty".into()));
        }
        let power_gains = amplitudes.map(|h| h.norm_sqr());
        check_diagonal(&power_gains)?;
        Ok(Self {
            amplitudes,
            power_gains,
        })
    }

    /// Builds a matrix with real, non-negative amplitudes `sqrt(g)`.
    pub fn from_power_gains(power_gains: DMatrix<f64>) -> Result<Self> {
        if !power_gains.is_square() || power_gains.nrows() == 0 {
            return Err(Error::InvalidArgument("gain matrix must be square and non-empty".into()));
        }
        if power_gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("power gains must be finite and non-negative".into()));
        }
        check_diagonal(&power_gains)?;
        let amplitudes = power_gains.map(|g| Complex::new(g.sqrt(), 0.0));
        Ok(Self {
            amplitudes,
            power_gains,
        })
    }

    pub fn pairs(&self) -> usize {
        self.power_gains.nrows()
    }

    pub fn amplitudes(&self) -> &DMatrix<Complex<f64>> {
        &self.amplitudes
    }

    pub fn power_gains(&self) -> &DMatrix<f64> {
        &self.power_gains
    }
}

fn check_diagonal(power_gains: &DMatrix<f64>) -> Result<()> {
    if let Some(k) = (0..power_gains.nrows()).find(|&k| !(power_gains[(k, k)] > 0.0)) {
        return Err(Error::InvalidArgument(format!("direct gain of pair {k} is not positive")));
    }
    Ok(())
}

/// Places `pairs` cells at random inside `area`.
///
/// Access points are uniform in the area; each user is uniform over the
/// annulus `[min_distance, cell_radius]` around its access point. A draw is
/// rejected when a user falls outside the area or any user comes closer than
/// `min_distance` to any access point.
pub fn generate_topology<R: Rng + ?Sized>(
    rng: &mut R,
    pairs: usize,
    cell_radius: f64,
    min_distance: f64,
    area: (f64, f64),
) -> Result<Topology> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    if !(min_distance > 0.0 && cell_radius >= min_distance) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < min_distance <= cell_radius, got {min_distance} and {cell_radius}"
        )));
    }
    let (w, h) = area;
    if !(w > 0.0 && h > 0.0) || w * h < 100.0 * pairs as f64 * min_distance * min_distance {
        return Err(Error::InvalidArgument(format!(
            "area {w} x {h} too small for {pairs} pairs at min distance {min_distance}"
        )));
    }

    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let rx: Vec<Point> = (0..pairs)
            .map(|_| Point::new(rng.random_range(0.0..=w), rng.random_range(0.0..=h)))
            .collect();
        let tx: Option<Vec<Point>> = rx
            .iter()
            .map(|ap| place_user(rng, ap, cell_radius, min_distance, area))
            .collect();
        let Some(tx) = tx else { continue };
        let clear = rx
            .iter()
            .all(|ap| tx.iter().all(|u| u.distance(ap) >= min_distance));
        if clear {
            return Ok(Topology {
                tx_positions: tx,
                rx_positions: rx,
                area,
                cell_radius,
                min_distance,
            });
        }
    }
    Err(Error::TopologyInfeasible {
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })
}

fn place_user<R: Rng + ?Sized>(
    rng: &mut R,
    ap: &Point,
    cell_radius: f64,
    min_distance: f64,
    (w, h): (f64, f64),
) -> Option<Point> {
    // A handful of tries per user; a cell near a corner can miss the area often.
    for _ in 0..64 {
        let r2 = rng.random_range(min_distance * min_distance..=cell_radius * cell_radius);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let r = r2.sqrt();
        let p = Point::new(ap.x + r * theta.cos(), ap.y + r * theta.sin());
        if p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h && p.distance(ap) >= min_distance {
            return Some(p);
        }
    }
    None
}

/// Draws unit-variance circularly-symmetric complex Gaussian fading.
pub fn draw_small_scale<R: Rng + ?Sized>(rng: &mut R, pairs: usize) -> DMatrix<Complex<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major fill order is part of the reproducibility contract.
    DMatrix::from_fn(pairs, pairs, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(s * re, s * im)
    })
}

/// Combines path loss with the given small-scale fading coefficients.
pub fn channels_from_fading(
    topology: &Topology,
    fading: &FadingModel,
    small_scale: &DMatrix<Complex<f64>>,
) -> Result<GainMatrix> {
    let k = topology.pairs();
    if small_scale.shape() != (k, k) {
        return Err(Error::InvalidArgument(format!(
            "fading matrix is {:?}, topology has {k} pairs",
            small_scale.shape()
        )));
    }
    let amplitudes = DMatrix::from_fn(k, k, |rx, tx| {
        small_scale[(rx, tx)] * fading.amplitude_scale(topology.distance(rx, tx), topology.min_distance)
    });
    GainMatrix::from_amplitudes(amplitudes)
}

pub fn draw_channels<R: Rng + ?Sized>(
    topology: &Topology,
    fading: &FadingModel,
    rng: &mut R,
) -> Result<GainMatrix> {
    let small_scale = draw_small_scale(rng, topology.pairs());
    channels_from_fading(topology, fading, &small_scale)
}

fn interference_plus_noise(k: usize, powers: &[f64], gains: &DMatrix<f64>, noise: f64) -> f64 {
    let mut acc = noise;
    for (i, p) in powers.iter().enumerate() {
        if i != k {
            acc += gains[(k, i)] * p;
        }
    }
    acc
}

/// Channel-to-interference-plus-noise ratio of pair `k`. `powers` is the full
/// joint power vector; entry `k` is ignored.
pub fn cinr(k: usize, powers: &[f64], gains: &DMatrix<f64>, noise: f64) -> f64 {
    debug_assert_eq!(powers.len(), gains.ncols());
    gains[(k, k)] / interference_plus_noise(k, powers, gains, noise)
}

/// SINR of pair `k`, computed as `p_k * cinr` so the two stay bit-identical.
pub fn sinr(k: usize, powers: &[f64], gains: &DMatrix<f64>, noise: f64) -> f64 {
    powers[k] * cinr(k, powers, gains, noise)
}

pub fn all_cinr(powers: &[f64], gains: &DMatrix<f64>, noise: f64) -> Vec<f64> {
    (0..powers.len()).map(|k| cinr(k, powers, gains, noise)).collect()
}

pub fn all_sinr(powers: &[f64], gains: &DMatrix<f64>, noise: f64) -> Vec<f64> {
    (0..powers.len()).map(|k| sinr(k, powers, gains, noise)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn g2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
    }

    #[test]
    fn single_pair_sinr_and_cinr() {
        let g = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(sinr(0, &[2.0], &g, 1.0), 6.0);
        assert_eq!(cinr(0, &[2.0], &g, 1.0), 3.0);
    }

    #[test]
    fn two_pair_sinr_and_cinr() {
        let p = [1.0, 2.0];
        assert!((sinr(0, &p, &g2(), 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cinr(0, &p, &g2(), 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn silent_interferers_give_snr() {
        let p = [1.5, 0.0];
        assert_eq!(sinr(0, &p, &g2(), 0.5), 1.5 * 2.0 / 0.5);
    }

    #[test]
    fn topology_four_cells() {
        let mut r = rng::stream(11, rng::TOPOLOGY);
        let t = generate_topology(&mut r, 4, 50.0, 5.0, (200.0, 200.0)).unwrap();
        assert_eq!(t.pairs(), 4);
        t.validate().unwrap();
        for k in 0..4 {
            for i in 0..4 {
                assert!(t.distance(k, i) >= 5.0);
            }
        }
    }

    #[test]
    fn topology_single_cell() {
        let mut r = rng::stream(3, rng::TOPOLOGY);
        let t = generate_topology(&mut r, 1, 50.0, 5.0, (200.0, 50.0)).unwrap();
        let d = t.distance(0, 0);
        assert!((5.0..=50.0).contains(&d), "{d}");
    }

    #[test]
    fn topology_is_deterministic() {
        let a = generate_topology(&mut rng::stream(5, rng::TOPOLOGY), 6, 50.0, 5.0, (200.0, 300.0)).unwrap();
        let b = generate_topology(&mut rng::stream(5, rng::TOPOLOGY), 6, 50.0, 5.0, (200.0, 300.0)).unwrap();
        assert_eq!(a, b);
        let fm = FadingModel::new(1e-3, 3.0, 1e-13).unwrap();
        let ga = draw_channels(&a, &fm, &mut rng::stream(5, rng::FADING)).unwrap();
        let gb = draw_channels(&b, &fm, &mut rng::stream(5, rng::FADING)).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn tiny_area_rejected() {
        let err = generate_topology(&mut rng::stream(1, rng::TOPOLOGY), 4, 50.0, 5.0, (10.0, 10.0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn crowded_area_reports_infeasible() {
        // Nominally large enough, but a 10 cm strip leaves almost no room for users.
        let err = generate_topology(&mut rng::stream(1, rng::TOPOLOGY), 10, 50.0, 5.0, (250_000.0, 0.1));
        assert!(matches!(err, Err(Error::TopologyInfeasible { .. })), "{err:?}");
    }

    fn line_topology(d: f64) -> Topology {
        Topology::new(
            vec![Point::new(0.0, 0.0)],
            vec![Point::new(d, 0.0)],
            (100.0, 100.0),
            50.0,
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn unit_fading_at_min_distance() {
        let fm = FadingModel::new(10f64.powf(-3.53), 3.76, 1e-13).unwrap();
        let ones = DMatrix::from_element(1, 1, Complex::new(1.0, 0.0));
        let g = channels_from_fading(&line_topology(5.0), &fm, &ones).unwrap();
        let expected = 10f64.powf(-3.53) / 5f64.powf(3.76);
        assert!((g.amplitudes()[(0, 0)].re - expected).abs() <= 1e-15 * expected);
        assert!((g.power_gains()[(0, 0)] - expected * expected).abs() <= 1e-14 * expected * expected);
    }

    #[test]
    fn clamp_below_min_distance() {
        let fm = FadingModel::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(fm.amplitude_scale(1.0, 5.0), fm.amplitude_scale(5.0, 5.0));
    }

    #[test]
    fn doubling_distance_quarters_amplitude() {
        let fm = FadingModel::new(1.0, 2.0, 1.0).unwrap();
        let a = fm.amplitude_scale(10.0, 5.0);
        let b = fm.amplitude_scale(20.0, 5.0);
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_power_gain_matches_path_loss() {
        let fm = FadingModel::new(10f64.powf(-3.53), 3.76, 1e-13).unwrap();
        let topo = line_topology(20.0);
        let mut r = rng::stream(99, rng::FADING);
        let n = 200_000;
        let mean = (0..n)
            .map(|_| draw_channels(&topo, &fm, &mut r).unwrap().power_gains()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        let expected = fm.amplitude_scale(20.0, 5.0).powi(2);
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn invalid_fading_model() {
        assert!(FadingModel::new(0.0, 3.0, 1.0).is_err());
        assert!(FadingModel::new(1.0, 1.5, 1.0).is_err());
        assert!(FadingModel::new(1.0, 3.0, 0.0).is_err());
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, f64)> {
        (1usize..6).prop_flat_map(|k| {
            (
                prop::collection::vec(0.01f64..5.0, k * k),
                prop::collection::vec(0.0f64..10.0, k),
                0.01f64..2.0,
            )
                .prop_map(move |(g, p, n)| (DMatrix::from_vec(k, k, g), p, n))
        })
    }

    proptest! {
        #[test]
        fn sinr_is_power_times_cinr((g, p, noise) in instance()) {
            for k in 0..p.len() {
                prop_assert_eq!(sinr(k, &p, &g, noise), p[k] * cinr(k, &p, &g, noise));
            }
        }

        #[test]
        fn sinr_monotone_in_powers((g, p, noise) in instance(), bump in 0.01f64..1.0) {
            let k = 0;
            let mut up = p.clone();
            up[k] += bump;
            prop_assert!(sinr(k, &up, &g, noise) > sinr(k, &p, &g, noise));
            for i in 1..p.len() {
                let mut q = p.clone();
                q[i] += bump;
                prop_assert!(sinr(k, &q, &g, noise) <= sinr(k, &p, &g, noise));
            }
        }
    }
}
