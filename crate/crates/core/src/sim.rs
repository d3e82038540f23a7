//! Packet-level simulation of all pairs running the learning controller.
//!
//! Per packet `n`:
//! 1. events scheduled for `n` are applied, so an event at `n` is in force
//!    for packet `n` itself;
//! 2. every active pair transmits with its current power and rate;
//! 3. true SINR and CINR follow from the joint power vector;
//! 4. the ACK/NACK bit is sampled from the error probability at the true CINR;
//! 5. each agent consumes its observation (the bit, the true CINR, or the
//!    exact error probability, depending on [`Mode`]).

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentParams, AgentState, ProbePower, DEFAULT_MU_FLOOR_FRACTION, DEFAULT_PROBE_EPS_CEILING};
use crate::channel::{self, FadingModel, GainMatrix, Topology};
use crate::error::{Error, Result};
use crate::game::{self, GameSpec};
use crate::link::{self, CodingModel, Feedback};
use crate::rng;
use crate::units;

pub const CSV_HEADER: &str = "n,k,power_w,sinr_lin,cinr_lin,mu_hat,rate,feedback,cum_fisher";

/// Redraws allowed when a feasible instance is requested.
pub const MAX_FEASIBLE_ATTEMPTS: u64 = 1000;

pub const DEFAULT_CONVERGENCE_TOL: f64 = 0.1;
pub const DEFAULT_CONVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Agents learn from sampled ACK/NACK bits.
    Ack,
    /// Agents are told their true CINR; reproduces best-response dynamics.
    Perfect,
    /// The feedback bit is replaced by its exact mean at the true CINR.
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ack" | "ack-feedback" => Ok(Mode::Ack),
            "perfect" | "perfect-csi" => Ok(Mode::Perfect),
            "oracle" | "oracle-feedback" => Ok(Mode::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAction {
    Activate,
    Deactivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub packet: u64,
    pub action: EventAction,
    pub pair: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MuInit {
    /// `g_kk / noise`, the interference-free CINR.
    OwnGainOverNoise,
    Explicit(Vec<f64>),
}

/// Where the channel comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    /// Random placement, then path loss and small-scale fading.
    Random {
        cell_radius: f64,
        min_distance: f64,
        area: (f64, f64),
    },
    /// Given positions, random small-scale fading.
    Positions(Topology),
    /// Given power gains `g[k][i]`; no geometry, no fading draws.
    PowerGains(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub pairs: usize,
    pub channel: ChannelSource,
    pub fading: FadingModel,
    pub targets_db: Vec<f64>,
    pub beta: f64,
    pub coding: Arc<CodingModel>,
    pub r_init: f64,
    pub packets: u64,
    pub mode: Mode,
    pub events: Vec<Event>,
    pub initially_inactive: Vec<usize>,
    pub master_seed: u64,
    pub mu_init: MuInit,
    pub mu_floor_fraction: f64,
    pub p_max: Option<f64>,
    /// Cap on the predicted error probability of a candidate rate.
    pub probe_eps_ceiling: f64,
    pub probe_power: ProbePower,
    /// Redraw small-scale fading every this many packets.
    pub block_fading_frame: Option<u64>,
    /// Redraw topology and fading until the full game is feasible.
    pub require_feasible: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::InvalidArgument("scenario needs at least one pair".into()));
        }
        if self.targets_db.len() < self.pairs {
            return Err(Error::InvalidArgument(format!(
                "{} targets for {} pairs",
                self.targets_db.len(),
                self.pairs
            )));
        }
        if self.targets_db.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("targets must be finite".into()));
        }
        if self.packets == 0 {
            return Err(Error::InvalidArgument("need at least one packet".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !self.coding.contains_rate(self.r_init) {
            return Err(Error::RateNotInSet(self.r_init));
        }
        for e in &self.events {
            if e.packet == 0 || e.packet > self.packets {
                return Err(Error::InvalidArgument(format!(
                    "event at packet {} outside [1, {}]",
                    e.packet, self.packets
                )));
            }
            if e.pair >= self.pairs {
                return Err(Error::PairOutOfRange { index: e.pair, pairs: self.pairs });
            }
        }
        if let Some(&k) = self.initially_inactive.iter().find(|&&k| k >= self.pairs) {
            return Err(Error::PairOutOfRange { index: k, pairs: self.pairs });
        }
        if let MuInit::Explicit(v) = &self.mu_init {
            if v.len() != self.pairs || v.iter().any(|m| !(*m > 0.0)) {
                return Err(Error::InvalidArgument("explicit mu_init needs one positive value per pair".into()));
            }
        }
        match &self.channel {
            ChannelSource::Positions(t) => {
                t.validate()?;
                if t.pairs() != self.pairs {
                    return Err(Error::InvalidArgument("topology size differs from pair count".into()));
                }
            }
            ChannelSource::PowerGains(g) => {
                if g.nrows() != self.pairs || g.ncols() != self.pairs {
                    return Err(Error::InvalidArgument("gain matrix size differs from pair count".into()));
                }
                if self.block_fading_frame.is_some() {
                    return Err(Error::InvalidArgument("block fading needs positions, not a gain matrix".into()));
                }
            }
            ChannelSource::Random { .. } => {}
        }
        if self.block_fading_frame == Some(0) {
            return Err(Error::InvalidArgument("block fading frame must be positive".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<f64> {
        self.targets_db[..self.pairs].iter().map(|&t| units::db_to_linear(t)).collect()
    }

    /// Topology and initial channel for this scenario's master seed.
    pub fn realize(&self) -> Result<Realization> {
        self.validate()?;
        let attempts = if self.require_feasible { MAX_FEASIBLE_ATTEMPTS } else { 1 };
        let targets = self.targets();
        if let ChannelSource::PowerGains(g) = &self.channel {
            let gains = GainMatrix::from_power_gains(g.clone())?;
            if self.require_feasible {
                let spec = GameSpec::new(gains.power_gains().clone(), self.fading.noise_power, targets)?;
                let report = game::check_feasibility(&spec)?;
                if !report.feasible {
                    return Err(Error::InfeasibleGame { spectral_radius: report.spectral_radius });
                }
            }
            return Ok(Realization {
                topology: None,
                gains,
                attempt: 0,
                fading_rng: rng::stream(self.master_seed, rng::FADING),
            });
        }
        let mut last_rho = f64::NAN;
        for attempt in 0..attempts {
            let topology = match &self.channel {
                ChannelSource::Positions(t) => t.clone(),
                ChannelSource::Random { cell_radius, min_distance, area } => {
                    let mut r = rng::stream(self.master_seed, rng::TOPOLOGY + attempt);
                    channel::generate_topology(&mut r, self.pairs, *cell_radius, *min_distance, *area)?
                }
                ChannelSource::PowerGains(_) => unreachable!("handled above"),
            };
            let mut fading_rng = rng::stream(self.master_seed, rng::FADING + attempt);
            let gains = channel::draw_channels(&topology, &self.fading, &mut fading_rng)?;
            if self.require_feasible {
                let spec = GameSpec::new(gains.power_gains().clone(), self.fading.noise_power, targets.clone())?;
                let report = game::check_feasibility(&spec)?;
                if !report.feasible {
                    last_rho = report.spectral_radius;
                    continue;
                }
            }
            return Ok(Realization {
                topology: Some(topology),
                gains,
                attempt,
                fading_rng,
            });
        }
        Err(Error::NoFeasibleDraw {
            attempts,
            last_spectral_radius: last_rho,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    /// Absent when the channel was given as a gain matrix.
    pub topology: Option<Topology>,
    pub gains: GainMatrix,
    /// Which redraw produced this instance.
    pub attempt: u64,
    fading_rng: ChaCha8Rng,
}

impl Realization {
    /// Wraps a given channel. Block-fading redraws use the scenario's
    /// fading stream of attempt 0.
    pub fn fixed(scenario: &Scenario, topology: Topology, gains: GainMatrix) -> Result<Self> {
        if gains.pairs() != scenario.pairs || topology.pairs() != scenario.pairs {
            return Err(Error::InvalidArgument("realization size differs from pair count".into()));
        }
        Ok(Self {
            topology: Some(topology),
            gains,
            attempt: 0,
            fading_rng: rng::stream(scenario.master_seed, rng::FADING),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub packet: u64,
    pub pair: usize,
    pub power: f64,
    pub true_sinr: f64,
    pub true_cinr: f64,
    pub mu_hat: f64,
    pub rate: f64,
    pub feedback: Feedback,
    pub cumulative_fisher: f64,
    /// Power cap bound on this packet.
    pub capped: bool,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub pairs: usize,
    pub packets: u64,
    pub targets: Vec<f64>,
    pub noise: f64,
    /// Gains in force on the last packet.
    pub final_gains: GainMatrix,
    pub final_active: Vec<bool>,
    pub initial_gains: GainMatrix,
    pub topology: Option<Topology>,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn pair_records(&self, k: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.pair == k)
    }

    /// Joint power vector of every packet, zero for inactive pairs.
    pub fn power_matrix(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.pairs]; self.packets as usize];
        for r in &self.records {
            out[(r.packet - 1) as usize][r.pair] = r.power;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.packet,
                r.pair,
                r.power,
                r.true_sinr,
                r.true_cinr,
                r.mu_hat,
                r.rate,
                r.feedback.bit(),
                r.cumulative_fisher
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Applies one activation change. Repeated activations are idempotent.
pub fn apply_event(active: &mut [bool], event: &Event) -> Result<()> {
    let n = active.len();
    let slot = active
        .get_mut(event.pair)
        .ok_or(Error::PairOutOfRange { index: event.pair, pairs: n })?;
    *slot = event.action == EventAction::Activate;
    Ok(())
}

fn fresh_agent(scenario: &Scenario, k: usize, gains: &GainMatrix, target: f64) -> Result<AgentState> {
    let mu_init = match &scenario.mu_init {
        MuInit::OwnGainOverNoise => gains.power_gains()[(k, k)] / scenario.fading.noise_power,
        MuInit::Explicit(v) => v[k],
    };
    let params = AgentParams {
        target,
        beta: scenario.beta,
        mu_floor_fraction: scenario.mu_floor_fraction,
        p_max: scenario.p_max,
        probe_eps_ceiling: scenario.probe_eps_ceiling,
        probe_power: scenario.probe_power,
    };
    AgentState::new(params, scenario.coding.clone(), mu_init, scenario.r_init)
}

/// Runs the whole scenario.
pub fn run(scenario: &Scenario) -> Result<Trace> {
    let realization = scenario.realize()?;
    run_on(scenario, realization)
}

pub fn run_on(scenario: &Scenario, realization: Realization) -> Result<Trace> {
    scenario.validate()?;
    let k_total = scenario.pairs;
    let targets = scenario.targets();
    let noise = scenario.fading.noise_power;
    let coding = scenario.coding.clone();
    let Realization {
        topology,
        gains: initial_gains,
        mut fading_rng,
        ..
    } = realization;
    let mut gains = initial_gains.clone();

    let mut active = vec![true; k_total];
    for &k in &scenario.initially_inactive {
        active[k] = false;
    }
    let mut agents: Vec<Option<AgentState>> = (0..k_total)
        .map(|k| {
            if active[k] {
                fresh_agent(scenario, k, &gains, targets[k]).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let mut feedback_rngs: Vec<ChaCha8Rng> = (0..k_total)
        .map(|k| rng::stream(scenario.master_seed, rng::FEEDBACK + k as u64))
        .collect();
    let mut cum_fisher = vec![0.0; k_total];

    let mut events = scenario.events.clone();
    events.sort_by_key(|e| e.packet);
    let mut next_event = 0;

    let mut records = Vec::with_capacity(scenario.packets as usize * k_total);
    let mut powers = vec![0.0; k_total];

    for n in 1..=scenario.packets {
        if let Some(frame) = scenario.block_fading_frame {
            if n > 1 && (n - 1) % frame == 0 {
                let t = topology
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("block fading needs positions".into()))?;
                gains = channel::draw_channels(t, &scenario.fading, &mut fading_rng)?;
            }
        }
        while next_event < events.len() && events[next_event].packet == n {
            let e = events[next_event];
            let was_active = active[e.pair];
            apply_event(&mut active, &e)?;
            match (was_active, active[e.pair]) {
                (false, true) => agents[e.pair] = Some(fresh_agent(scenario, e.pair, &gains, targets[e.pair])?),
                (true, false) => agents[e.pair] = None,
                _ => {}
            }
            next_event += 1;
        }

        for k in 0..k_total {
            powers[k] = agents[k].as_ref().map_or(0.0, |a| a.power());
        }

        let g = gains.power_gains();
        for k in 0..k_total {
            let Some(agent) = agents[k].as_mut() else { continue };
            let (p, r) = (agent.power(), agent.rate());
            let mu = channel::cinr(k, &powers, g, noise);
            let gamma = channel::sinr(k, &powers, g, noise);
            let feedback = link::sample_feedback(&coding, mu, p, r, &mut feedback_rngs[k]);
            cum_fisher[k] += coding.fisher_info(mu, p, r);
            records.push(TraceRecord {
                packet: n,
                pair: k,
                power: p,
                true_sinr: gamma,
                true_cinr: mu,
                mu_hat: agent.mu_hat(),
                rate: r,
                feedback,
                cumulative_fisher: cum_fisher[k],
                capped: agent.capped(),
            });
            match scenario.mode {
                Mode::Ack => agent.step(feedback),
                Mode::Perfect => agent.step_with_known_cinr(mu),
                Mode::Oracle => agent.step_with(coding.error_prob(mu, p, r)),
            }
        }
    }

    Ok(Trace {
        records,
        pairs: k_total,
        packets: scenario.packets,
        targets,
        noise,
        final_gains: gains,
        final_active: active,
        initial_gains,
        topology,
        events,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub tol: f64,
    pub window: usize,
    /// Pair transmitted at least once in the evaluated range.
    pub present: Vec<bool>,
    pub converged: Vec<bool>,
    /// First packet of the first full window inside the tolerance.
    pub convergence_packet: Vec<Option<u64>>,
    /// `|p_final - p*| / p*` against the equilibrium of the final active set.
    pub final_power_gap: Vec<Option<f64>>,
    /// Standard deviation of `sinr / target - 1` from the convergence packet on.
    pub post_convergence_std: Vec<Option<f64>>,
    pub gne_powers: Option<Vec<f64>>,
}

impl ConvergenceMetrics {
    /// `key: value` summary.
    pub fn summary(&self) -> String {
        let fmt_opt = |v: &Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "tol: {}", self.tol);
        let _ = writeln!(s, "window: {}", self.window);
        let _ = writeln!(s, "pairs: {}", self.present.iter().filter(|p| **p).count());
        let _ = writeln!(s, "converged_pairs: {}", self.converged.iter().filter(|c| **c).count());
        for k in (0..self.converged.len()).filter(|&k| self.present[k]) {
            let _ = writeln!(s, "pair.{k}.converged: {}", self.converged[k]);
            let _ = writeln!(
                s,
                "pair.{k}.convergence_packet: {}",
                self.convergence_packet[k].map_or("none".to_string(), |n| n.to_string())
            );
            let _ = writeln!(s, "pair.{k}.final_power_gap: {}", fmt_opt(&self.final_power_gap[k]));
            let _ = writeln!(s, "pair.{k}.post_convergence_std: {}", fmt_opt(&self.post_convergence_std[k]));
        }
        match &self.gne_powers {
            Some(p) => {
                let joined: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "gne_powers_w: {}", joined.join(","));
            }
            None => {
                let _ = writeln!(s, "gne_powers_w: none");
            }
        }
        s
    }

    /// Convergence packet of each present pair, unconverged pairs counted
    /// as `packets + 1`.
    pub fn penalized_packets(&self, packets: u64) -> Vec<f64> {
        (0..self.converged.len())
            .filter(|&k| self.present[k])
            .map(|k| match self.convergence_packet[k] {
                Some(n) if self.converged[k] => n as f64,
                _ => (packets + 1) as f64,
            })
            .collect()
    }

    /// Median over present pairs, see [`penalized_packets`](Self::penalized_packets).
    pub fn median_convergence_packet(&self, packets: u64) -> Option<f64> {
        median(&self.penalized_packets(packets))
    }

    /// Packet by which every present pair has converged.
    pub fn network_convergence_packet(&self, packets: u64) -> Option<f64> {
        self.penalized_packets(packets).into_iter().reduce(f64::max)
    }

    /// Median over converged pairs of the post-convergence SINR spread.
    pub fn median_post_convergence_std(&self) -> Option<f64> {
        let v: Vec<f64> = self.post_convergence_std.iter().flatten().copied().collect();
        median(&v)
    }
}

/// Scalar summary of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Median over pairs, unconverged pairs counted as `packets + 1`.
    pub median_convergence_packet: f64,
    /// Packet by which every pair has converged, same convention.
    pub network_convergence_packet: f64,
    /// Median over converged pairs; NaN when none converged.
    pub median_post_convergence_std: f64,
    pub converged_pairs: usize,
    pub pairs: usize,
}

impl RunStats {
    pub fn from_metrics(m: &ConvergenceMetrics, packets: u64) -> Self {
        Self {
            median_convergence_packet: m.median_convergence_packet(packets).unwrap_or(f64::NAN),
            network_convergence_packet: m.network_convergence_packet(packets).unwrap_or(f64::NAN),
            median_post_convergence_std: m.median_post_convergence_std().unwrap_or(f64::NAN),
            converged_pairs: (0..m.present.len()).filter(|&k| m.present[k] && m.converged[k]).count(),
            pairs: m.present.iter().filter(|p| **p).count(),
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "median_convergence_packet: {}\nnetwork_convergence_packet: {}\nmedian_post_convergence_std: {}\n",
            self.median_convergence_packet, self.network_convergence_packet, self.median_post_convergence_std
        )
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// First packet `n` in `[from, to]` such that pair `k` is within `tol` of its
/// target on every packet of `[n, n + window)`, which must lie in the range.
pub fn first_settled_packet(trace: &Trace, k: usize, from: u64, to: u64, tol: f64, window: usize) -> Option<u64> {
    let target = trace.targets[k];
    let mut run_start: Option<u64> = None;
    let mut run_len = 0usize;
    let mut prev: Option<u64> = None;
    for r in trace.pair_records(k).filter(|r| r.packet >= from && r.packet <= to) {
        let ok = ((r.true_sinr - target) / target).abs() <= tol;
        let contiguous = prev.is_some_and(|p| p + 1 == r.packet);
        prev = Some(r.packet);
        if ok {
            if run_start.is_none() || !contiguous {
                run_start = Some(r.packet);
                run_len = 0;
            }
            run_len += 1;
            if run_len >= window {
                return run_start;
            }
        } else {
            run_start = None;
            run_len = 0;
        }
    }
    None
}

/// Convergence metrics over the whole trace.
pub fn convergence_time(trace: &Trace, tol: f64, window: usize) -> Result<ConvergenceMetrics> {
    convergence_in_range(trace, 1, trace.packets, tol, window)
}

/// Convergence metrics restricted to packets `[from, to]`. The power gap is
/// always measured at the last packet of the trace.
pub fn convergence_in_range(trace: &Trace, from: u64, to: u64, tol: f64, window: usize) -> Result<ConvergenceMetrics> {
    if trace.records.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let k_total = trace.pairs;
    let mut converged = vec![false; k_total];
    let mut packet = vec![None; k_total];
    let mut spread = vec![None; k_total];
    let present: Vec<bool> = (0..k_total)
        .map(|k| trace.pair_records(k).any(|r| r.packet >= from && r.packet <= to))
        .collect();
    for k in 0..k_total {
        if let Some(n) = first_settled_packet(trace, k, from, to, tol, window) {
            converged[k] = true;
            packet[k] = Some(n);
            let target = trace.targets[k];
            let errs: Vec<f64> = trace
                .pair_records(k)
                .filter(|r| r.packet >= n && r.packet <= to)
                .map(|r| r.true_sinr / target - 1.0)
                .collect();
            spread[k] = Some(std_dev(&errs));
        }
    }

    let active: Vec<usize> = (0..k_total).filter(|&k| trace.final_active[k]).collect();
    let mut gap = vec![None; k_total];
    let mut gne_powers = None;
    if !active.is_empty() {
        let full = GameSpec::new(trace.final_gains.power_gains().clone(), trace.noise, trace.targets.clone())?;
        let sub = full.subgame(&active)?;
        if let Ok(eq) = game::solve_gne_direct(&sub) {
            let last = trace.records.last().map(|r| r.packet).unwrap_or(0);
            let mut full_p = vec![0.0; k_total];
            for (idx, &k) in active.iter().enumerate() {
                full_p[k] = eq.powers[idx];
                if let Some(rec) = trace.pair_records(k).filter(|r| r.packet == last).last() {
                    gap[k] = Some((rec.power - eq.powers[idx]).abs() / eq.powers[idx]);
                }
            }
            gne_powers = Some(full_p);
        }
    }

    Ok(ConvergenceMetrics {
        tol,
        window,
        present,
        converged,
        convergence_packet: packet,
        final_power_gap: gap,
        post_convergence_std: spread,
        gne_powers,
    })
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Scenario with the small-cell uplink defaults for `pairs` cells.
pub fn default_scenario(pairs: usize, master_seed: u64) -> Scenario {
    Scenario {
        pairs,
        channel: ChannelSource::Random {
            cell_radius: 50.0,
            min_distance: 5.0,
            area: (200.0, 50.0 * pairs as f64),
        },
        fading: FadingModel::new(10f64.powf(-3.53), 3.76, units::dbm_to_watts(-100.0)).expect("valid defaults"),
        targets_db: DEFAULT_TARGETS_DB.to_vec(),
        beta: 0.9,
        coding: Arc::new(default_coding_model()),
        r_init: 1.0,
        packets: 1000,
        mode: Mode::Ack,
        events: Vec::new(),
        initially_inactive: Vec::new(),
        master_seed,
        mu_init: MuInit::OwnGainOverNoise,
        mu_floor_fraction: DEFAULT_MU_FLOOR_FRACTION,
        p_max: None,
        probe_eps_ceiling: DEFAULT_PROBE_EPS_CEILING,
        probe_power: ProbePower::Current,
        block_fading_frame: None,
        require_feasible: true,
    }
}

pub const DEFAULT_TARGETS_DB: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

/// 0.005 to 6 bits/symbol in steps of 0.005. Exact multiples, so 1.0 is a
/// member.
pub fn default_rate_set() -> Vec<f64> {
    (1..=1200).map(|i| i as f64 / 200.0).collect()
}

pub fn default_coding_model() -> CodingModel {
    CodingModel::new(500, 1.0, default_rate_set(), link::DEFAULT_EPS_FLOOR).expect("valid defaults")
}

/// Matrix of complex ones, handy for deterministic channels in tests.
pub fn unit_fading(pairs: usize) -> DMatrix<Complex<f64>> {
    DMatrix::from_element(pairs, pairs, Complex::new(1.0, 0.0))
}
