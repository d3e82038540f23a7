//! Scenario files.
//!
//! A scenario is a flat TOML table. Keys carry their unit as a suffix
//! (`_m`, `_dbm`, `_db`, `_w`, `_lin`, `_bps_hz`). Every key is optional and
//! defaults to the small-cell uplink setup, so an empty file is a valid
//! four-pair scenario. Unknown keys are rejected.
//!
//! ```toml
//! pairs = 6
//! beta = 0.5
//! initially_inactive = [4, 5]
//!
//! [[events]]
//! packet = 300
//! action = "activate"
//! pair = 4
//! ```
//!
//! Errors carry `origin:line:col` of the offending key when it can be found.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agent::{ProbePower, DEFAULT_MU_FLOOR_FRACTION, DEFAULT_PROBE_EPS_CEILING};
use crate::channel::{FadingModel, Point, Topology};
use crate::error::{Error, Result};
use crate::link::{CodingModel, DEFAULT_EPS_FLOOR};
use crate::sim::{
    self, ChannelSource, Event, EventAction, Mode, MuInit, Scenario, DEFAULT_CONVERGENCE_TOL,
    DEFAULT_CONVERGENCE_WINDOW, DEFAULT_TARGETS_DB,
};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub pairs: usize,
    pub seed: u64,
    pub packets: u64,
    pub beta: f64,
    pub mode: Mode,
    /// First `pairs` entries are used. Defaults to 0.5, 1.0, ..., 3.0 dB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets_db: Option<Vec<f64>>,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    /// Width and height. Defaults to 200 by 50 per pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_m: Option<[f64; 2]>,
    /// `log10` of the attenuation constant `d_bar`.
    pub attenuation_log10: f64,
    pub path_loss_exponent: f64,
    pub noise_dbm: f64,
    pub symbols_per_packet: u32,
    pub union_bound_rho: f64,
    pub eps_floor: f64,
    /// Ascending. Defaults to 0.005 to 6 in steps of 0.005.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_set_bps_hz: Option<Vec<f64>>,
    pub r_init_bps_hz: f64,
    pub probe_eps_ceiling: f64,
    pub probe_power: ProbePower,
    /// Initial CINR estimates. Defaults to `g_kk / noise`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_init_lin: Option<Vec<f64>>,
    pub mu_floor_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max_w: Option<f64>,
    /// Redraw small-scale fading every this many packets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_fading_packets: Option<u64>,
    pub require_feasible: bool,
    pub initially_inactive: Vec<usize>,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Fixed positions, `[x, y]` per pair. Give both or neither.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_positions_m: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx_positions_m: Option<Vec<[f64; 2]>>,
    /// Fixed power gains, row `k` holds `g[k][i]`. Overrides placement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_gains_lin: Option<Vec<Vec<f64>>>,
    pub events: Vec<EventConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub packet: u64,
    pub action: EventAction,
    pub pair: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pairs: 4,
            seed: 0,
            packets: 1000,
            beta: 0.9,
            mode: Mode::Ack,
            targets_db: None,
            cell_radius_m: 50.0,
            min_distance_m: 5.0,
            area_m: None,
            attenuation_log10: -3.53,
            path_loss_exponent: 3.76,
            noise_dbm: -100.0,
            symbols_per_packet: 500,
            union_bound_rho: 1.0,
            eps_floor: DEFAULT_EPS_FLOOR,
            rate_set_bps_hz: None,
            r_init_bps_hz: 1.0,
            probe_eps_ceiling: DEFAULT_PROBE_EPS_CEILING,
            probe_power: ProbePower::Current,
            mu_init_lin: None,
            mu_floor_fraction: DEFAULT_MU_FLOOR_FRACTION,
            p_max_w: None,
            block_fading_packets: None,
            require_feasible: true,
            initially_inactive: Vec::new(),
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            convergence_window: DEFAULT_CONVERGENCE_WINDOW,
            tx_positions_m: None,
            rx_positions_m: None,
            power_gains_lin: None,
            events: Vec::new(),
        }
    }
}

/// A validation failure tied to a key.
struct KeyError {
    key: &'static str,
    message: String,
}

fn key_err(key: &'static str, message: impl Into<String>) -> KeyError {
    KeyError {
        key,
        message: message.into(),
    }
}

impl ScenarioConfig {
    /// Parses and validates. `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Config(format!("{origin}:{line}:{col}: {}", e.message()))
        })?;
        if let Err(e) = cfg.build() {
            let (line, col) = locate_key(text, e.key).unwrap_or((1, 1));
            return Err(Error::Config(format!("{origin}:{line}:{col}: {}: {}", e.key, e.message)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.to_scenario().map(|_| ())
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        self.build()
            .map_err(|e| Error::Config(format!("{}: {}", e.key, e.message)))
    }

    pub fn noise_power_w(&self) -> f64 {
        units::dbm_to_watts(self.noise_dbm)
    }

    fn build(&self) -> std::result::Result<Scenario, KeyError> {
        let k = self.pairs;
        if k == 0 {
            return Err(key_err("pairs", "need at least one pair"));
        }
        let targets_db = match &self.targets_db {
            Some(t) => {
                if t.len() < k {
                    return Err(key_err("targets_db", format!("{} targets for {k} pairs", t.len())));
                }
                t.clone()
            }
            None => {
                if k > DEFAULT_TARGETS_DB.len() {
                    return Err(key_err(
                        "targets_db",
                        format!("defaults cover {} pairs, give targets for {k}", DEFAULT_TARGETS_DB.len()),
                    ));
                }
                DEFAULT_TARGETS_DB.to_vec()
            }
        };
        let fading = FadingModel::new(10f64.powf(self.attenuation_log10), self.path_loss_exponent, self.noise_power_w())
            .map_err(|e| key_err("path_loss_exponent", e.to_string()))?;
        let rates = self.rate_set_bps_hz.clone().unwrap_or_else(sim::default_rate_set);
        let coding = CodingModel::new(self.symbols_per_packet, self.union_bound_rho, rates, self.eps_floor)
            .map_err(|e| key_err("rate_set_bps_hz", e.to_string()))?;
        if !coding.contains_rate(self.r_init_bps_hz) {
            return Err(key_err("r_init_bps_hz", format!("{} is not in the rate set", self.r_init_bps_hz)));
        }
        if !(self.probe_eps_ceiling > 0.0 && self.probe_eps_ceiling <= 1.0) {
            return Err(key_err("probe_eps_ceiling", "must lie in (0, 1]"));
        }
        if !(self.mu_floor_fraction > 0.0 && self.mu_floor_fraction < 1.0) {
            return Err(key_err("mu_floor_fraction", "must lie in (0, 1)"));
        }
        if self.p_max_w.is_some_and(|p| !(p > 0.0)) {
            return Err(key_err("p_max_w", "must be positive"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(key_err("convergence_tol", "must be positive"));
        }
        if self.convergence_window == 0 {
            return Err(key_err("convergence_window", "must be positive"));
        }
        let area = match self.area_m {
            Some([w, h]) => (w, h),
            None => (200.0, 50.0 * k as f64),
        };
        let channel = if let Some(rows) = &self.power_gains_lin {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(key_err("power_gains_lin", format!("need a {k} by {k} matrix")));
            }
            ChannelSource::PowerGains(DMatrix::from_fn(k, k, |r, c| rows[r][c]))
        } else {
            match (&self.tx_positions_m, &self.rx_positions_m) {
                (Some(tx), Some(rx)) => {
                    if tx.len() != k || rx.len() != k {
                        return Err(key_err("tx_positions_m", format!("need {k} positions each")));
                    }
                    let pts = |v: &[[f64; 2]]| v.iter().map(|p| Point::new(p[0], p[1])).collect();
                    let t = Topology::new(pts(tx), pts(rx), area, self.cell_radius_m, self.min_distance_m)
                        .map_err(|e| key_err("tx_positions_m", e.to_string()))?;
                    ChannelSource::Positions(t)
                }
                (None, None) => ChannelSource::Random {
                    cell_radius: self.cell_radius_m,
                    min_distance: self.min_distance_m,
                    area,
                },
                _ => return Err(key_err("tx_positions_m", "give tx_positions_m and rx_positions_m together")),
            }
        };
        let scenario = Scenario {
            pairs: k,
            channel,
            fading,
            targets_db,
            beta: self.beta,
            coding: Arc::new(coding),
            r_init: self.r_init_bps_hz,
            packets: self.packets,
            mode: self.mode,
            events: self
                .events
                .iter()
                .map(|e| Event {
                    packet: e.packet,
                    action: e.action,
                    pair: e.pair,
                })
                .collect(),
            initially_inactive: self.initially_inactive.clone(),
            master_seed: self.seed,
            mu_init: self.mu_init_lin.clone().map_or(MuInit::OwnGainOverNoise, MuInit::Explicit),
            mu_floor_fraction: self.mu_floor_fraction,
            p_max: self.p_max_w,
            probe_eps_ceiling: self.probe_eps_ceiling,
            probe_power: self.probe_power,
            block_fading_frame: self.block_fading_packets,
            require_feasible: self.require_feasible,
        };
        scenario.validate().map_err(|e| {
            let key = match &e {
                Error::RateNotInSet(_) => "r_init_bps_hz",
                Error::PairOutOfRange { .. } if !self.events.is_empty() => "events",
                Error::PairOutOfRange { .. } => "initially_inactive",
                Error::InvalidArgument(m) if m.contains("beta") => "beta",
                Error::InvalidArgument(m) if m.contains("event") => "events",
                Error::InvalidArgument(m) if m.contains("packet") => "packets",
                Error::InvalidArgument(m) if m.contains("mu_init") => "mu_init_lin",
                Error::InvalidArgument(m) if m.contains("block fading") => "block_fading_packets",
                Error::InvalidArgument(m) if m.contains("target") => "targets_db",
                _ => "pairs",
            };
            key_err(key, e.to_string())
        })?;
        Ok(scenario)
    }
}

/// 1-based line and column of byte offset `pos`.
fn line_col(text: &str, pos: usize) -> (usize, usize) {
    let before = &text[..pos.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

/// Line of the first assignment to `key`, or of its `[[key]]` header.
fn locate_key(text: &str, key: &str) -> Option<(usize, usize)> {
    text.lines().enumerate().find_map(|(i, line)| {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        let assigns = trimmed
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        let header = trimmed.starts_with(&format!("[[{key}]]"));
        (assigns || header).then_some((i + 1, indent + 1))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_default_scenario() {
        let cfg = ScenarioConfig::from_toml_str("", "empty").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let s = cfg.to_scenario().unwrap();
        let d = sim::default_scenario(4, 0);
        assert_eq!(s.channel, d.channel);
        assert_eq!(s.targets_db, d.targets_db);
        assert_eq!(s.coding, d.coding);
        assert_eq!(s.fading.noise_power, units::dbm_to_watts(-100.0));
        assert_eq!(s.fading.d_bar, 10f64.powf(-3.53));
        assert_eq!(s.fading.alpha, 3.76);
        assert_eq!(s.r_init, 1.0);
        assert_eq!(s.mu_init, MuInit::OwnGainOverNoise);
        assert_eq!(s.coding.symbols_per_packet(), 500);
        assert_eq!(s.channel, ChannelSource::Random { cell_radius: 50.0, min_distance: 5.0, area: (200.0, 200.0) });
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = r#"
pairs = 2
seed = 9
mode = "oracle"
targets_db = [1.0, 2.0]
p_max_w = 0.5
rate_set_bps_hz = [0.5, 1.0, 2.0]
power_gains_lin = [[1.0, 0.1], [0.2, 0.9]]
probe_power = "previous"

[[events]]
packet = 10
action = "deactivate"
pair = 1
"#;
        let cfg = ScenarioConfig::from_toml_str(text, "t").unwrap();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string(), "t2").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(ScenarioConfig::from_toml_str(&ScenarioConfig::default().to_toml_string(), "d").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let err = ScenarioConfig::from_toml_str("pairs = 2\nbetta = 0.5\n", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml:2:1"), "{err}");
        assert!(err.contains("betta"), "{err}");
    }

    #[test]
    fn syntax_errors_are_line_anchored() {
        let err = ScenarioConfig::from_toml_str("pairs = 2\n\nbeta = = 3\n", "x").unwrap_err().to_string();
        assert!(err.contains("x:3:"), "{err}");
    }

    #[test]
    fn validation_errors_point_at_the_key() {
        let err = ScenarioConfig::from_toml_str("seed = 1\n  beta = 1.5\n", "v").unwrap_err().to_string();
        assert!(err.contains("v:2:3: beta"), "{err}");
        let err = ScenarioConfig::from_toml_str("pairs = 8\n", "v").unwrap_err().to_string();
        assert!(err.contains("v:1:1: targets_db"), "{err}");
        let err = ScenarioConfig::from_toml_str("r_init_bps_hz = 1.2345\n", "v").unwrap_err().to_string();
        assert!(err.contains("v:1:1: r_init_bps_hz"), "{err}");
        let err = ScenarioConfig::from_toml_str("pairs = 2\n[[events]]\npacket = 5\naction = \"activate\"\npair = 7\n", "v")
            .unwrap_err()
            .to_string();
        assert!(err.contains("v:2:1: events"), "{err}");
    }

    #[test]
    fn positions_and_gains_select_the_channel_source() {
        let cfg = ScenarioConfig::from_toml_str(
            "pairs = 1\ntx_positions_m = [[10.0, 10.0]]\nrx_positions_m = [[20.0, 10.0]]\n",
            "p",
        )
        .unwrap();
        assert!(matches!(cfg.to_scenario().unwrap().channel, ChannelSource::Positions(_)));
        let err = ScenarioConfig::from_toml_str("pairs = 1\ntx_positions_m = [[10.0, 10.0]]\n", "p").unwrap_err();
        assert!(err.to_string().contains("p:2:1"));
    }

    #[test]
    fn unit_suffixes_convert_at_the_boundary() {
        let cfg = ScenarioConfig::from_toml_str("noise_dbm = -70.0\ntargets_db = [10.0, 0.0, 3.0, 6.0]\n", "u").unwrap();
        let s = cfg.to_scenario().unwrap();
        assert!((s.fading.noise_power - 1e-10).abs() < 1e-22);
        let t = s.targets();
        assert!((t[0] - 10.0).abs() < 1e-12 && (t[1] - 1.0).abs() < 1e-15);
    }
}
