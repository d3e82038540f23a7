//! Command-line front end. Every number printed comes straight from a
//! library call; this module only formats.
//!
//! Exit codes: 0 success, 1 usage, parse or I/O error, 2 infeasible game.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::game::{self, GameSpec};
use crate::sim::{self, Mode, Realization, RunStats, Scenario};
use crate::units;

/// Overrides the default output directory `out`.
pub const OUT_DIR_ENV: &str = "ACKPC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

pub const SWEEP_HEADER: &str =
    "param,value,seeds,median_convergence_packet,median_network_convergence_packet,median_post_convergence_std,converged_runs";

#[derive(Debug, Parser)]
#[command(name = "ackpc", version, about = "Power control from ACK/NACK feedback over interference channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral radius of the normalized interference matrix.
    Feasibility {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Equilibrium powers under complete information.
    Gne {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Packet-level simulation; writes the trace CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        packets: Option<u64>,
        /// Write a gnuplot script next to the CSV.
        #[arg(long)]
        emit_gnuplot: bool,
    },
    /// Median convergence statistics across seeds for each parameter value.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Seeds `seed, seed + 1, ...`.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl ValueEnum for Mode {
    fn value_variants<'a>() -> &'a [Self] {
        &[Mode::Ack, Mode::Perfect, Mode::Oracle]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        use clap::builder::PossibleValue;
        Some(match self {
            Mode::Ack => PossibleValue::new("ack").alias("ack-feedback"),
            Mode::Perfect => PossibleValue::new("perfect").alias("perfect-csi"),
            Mode::Oracle => PossibleValue::new("oracle").alias("oracle-feedback"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum SweepParam {
    Beta,
    #[value(name = "K", alias = "k", alias = "pairs")]
    K,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::K => "K",
        }
    }
}

/// Output directory from the environment, or `out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// The channel `run` would use. When no feasible draw exists, the first
/// draw is returned instead so it can be reported.
pub fn report_instance(scenario: &Scenario) -> Result<Realization> {
    match scenario.realize() {
        Err(Error::NoFeasibleDraw { .. } | Error::InfeasibleGame { .. }) => {
            let mut s = scenario.clone();
            s.require_feasible = false;
            s.realize()
        }
        other => other,
    }
}

pub fn game_spec(scenario: &Scenario, realization: &Realization) -> Result<GameSpec> {
    GameSpec::new(
        realization.gains.power_gains().clone(),
        scenario.fading.noise_power,
        scenario.targets(),
    )
}

fn with_seed(mut cfg: ScenarioConfig, seed: Option<u64>) -> ScenarioConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

/// `(stdout text, exit code)` of `feasibility`.
pub fn cmd_feasibility(cfg: &ScenarioConfig) -> Result<(String, i32)> {
    let scenario = cfg.to_scenario()?;
    let realization = report_instance(&scenario)?;
    let spec = game_spec(&scenario, &realization)?;
    let report = game::check_feasibility(&spec)?;
    let mut s = String::new();
    let _ = writeln!(s, "pairs: {}", spec.pairs());
    let _ = writeln!(s, "seed: {}", cfg.seed);
    let _ = writeln!(s, "attempt: {}", realization.attempt);
    let _ = writeln!(s, "spectral_radius: {}", report.spectral_radius);
    let _ = writeln!(s, "feasible: {}", report.feasible);
    let _ = writeln!(s, "g_matrix:");
    for row in &report.g_matrix {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "  {}", cells.join(","));
    }
    Ok((s, if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE }))
}

/// Per-pair equilibrium table as CSV.
pub fn gne_csv(spec: &GameSpec, p: &[f64]) -> String {
    let mut s = String::from("pair,power_w,power_dbm,sinr_lin,sinr_db,target_lin\n");
    for k in 0..spec.pairs() {
        let sinr = spec.sinr(k, p);
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{}",
            p[k],
            units::watts_to_dbm(p[k]),
            sinr,
            units::linear_to_db(sinr),
            spec.targets()[k]
        );
    }
    s
}

/// `(stdout text, csv table or None when infeasible, exit code)` of `gne`.
pub fn cmd_gne(cfg: &ScenarioConfig) -> Result<(String, Option<String>, i32)> {
    let scenario = cfg.to_scenario()?;
    let realization = report_instance(&scenario)?;
    let spec = game_spec(&scenario, &realization)?;
    let report = game::check_feasibility(&spec)?;
    match game::solve_gne_direct(&spec) {
        Ok(eq) => {
            let table = gne_csv(&spec, &eq.powers);
            let mut s = format!("spectral_radius: {}\n", report.spectral_radius);
            s.push_str(&table);
            let _ = writeln!(s, "residual: {}", eq.residual);
            Ok((s, Some(table), EXIT_OK))
        }
        Err(Error::InfeasibleGame { spectral_radius }) => Ok((
            format!("spectral_radius: {spectral_radius}\nfeasible: false\n"),
            None,
            EXIT_INFEASIBLE,
        )),
        Err(e) => Err(e),
    }
}

/// The result of `run`: trace CSV, metrics and the summary text.
pub struct RunOutput {
    pub csv: String,
    pub metrics: sim::ConvergenceMetrics,
    pub stats: RunStats,
    pub summary: String,
}

pub fn cmd_run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let scenario = cfg.to_scenario()?;
    let realization = scenario.realize()?;
    let attempt = realization.attempt;
    let trace = sim::run_on(&scenario, realization)?;
    let metrics = sim::convergence_time(&trace, cfg.convergence_tol, cfg.convergence_window)?;
    let stats = RunStats::from_metrics(&metrics, trace.packets);
    let mut summary = format!(
        "seed: {}\nattempt: {attempt}\npackets: {}\nmode: {:?}\n",
        cfg.seed, trace.packets, cfg.mode
    );
    summary.push_str(&metrics.summary());
    summary.push_str(&stats.summary());
    Ok(RunOutput {
        csv: trace.to_csv_string(),
        metrics,
        stats,
        summary,
    })
}

/// SINR per pair against packet index.
pub fn gnuplot_script(csv: &Path, pairs: usize) -> String {
    let name = csv.file_name().map_or_else(|| csv.display().to_string(), |n| n.to_string_lossy().into_owned());
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'packet'\n\
         set ylabel 'SINR (linear)'\n\
         plot for [k=0:{}] '{name}' every ::1 using 1:(column(2) == k ? column(4) : 1/0) with lines title sprintf('pair %d', k)\n",
        pairs.saturating_sub(1)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub seeds: u64,
    /// Medians across seeds of the per-run [`RunStats`] fields.
    pub median_convergence_packet: f64,
    pub median_network_convergence_packet: f64,
    pub median_post_convergence_std: f64,
    /// Runs in which every pair converged.
    pub converged_runs: u64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.param.name(),
            self.value,
            self.seeds,
            self.median_convergence_packet,
            self.median_network_convergence_packet,
            self.median_post_convergence_std,
            self.converged_runs
        )
    }
}

fn apply_param(cfg: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    let mut c = cfg.clone();
    match param {
        SweepParam::Beta => c.beta = value,
        SweepParam::K => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!("K must be a positive integer, got {value}")));
            }
            c.pairs = value as usize;
        }
    }
    Ok(c)
}

/// Runs every `(value, seed)` cell, in parallel. Rows come out sorted by
/// value whatever the completion order.
pub fn cmd_sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64], seeds: u64) -> Result<Vec<SweepRow>> {
    if seeds == 0 || values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sweep needs finite values and at least one seed".into()));
    }
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    let cells: Vec<(usize, u64)> = (0..values.len()).flat_map(|v| (0..seeds).map(move |s| (v, s))).collect();
    let stats: Vec<RunStats> = cells
        .par_iter()
        .map(|&(v, s)| {
            let mut c = apply_param(cfg, param, values[v])?;
            c.seed = cfg.seed + s;
            cmd_run(&c).map(|out| out.stats)
        })
        .collect::<Result<_>>()?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(v, &value)| {
            let runs = &stats[v * seeds as usize..(v + 1) * seeds as usize];
            let col = |f: fn(&RunStats) -> f64| sim::median(&runs.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
            SweepRow {
                param,
                value,
                seeds,
                median_convergence_packet: col(|r| r.median_convergence_packet),
                median_network_convergence_packet: col(|r| r.network_convergence_packet),
                median_post_convergence_std: col(|r| r.median_post_convergence_std),
                converged_runs: runs.iter().filter(|r| r.converged_pairs == r.pairs).count() as u64,
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let io = |source| Error::Io {
        path: "<stdout>".into(),
        source,
    };
    match cli.command {
        Command::Feasibility { config, seed } => {
            let cfg = with_seed(ScenarioConfig::load(&config)?, seed);
            let (text, code) = cmd_feasibility(&cfg)?;
            stdout.write_all(text.as_bytes()).map_err(io)?;
            Ok(code)
        }
        Command::Gne { config, seed, csv } => {
            let cfg = with_seed(ScenarioConfig::load(&config)?, seed);
            let (text, table, code) = cmd_gne(&cfg)?;
            stdout.write_all(text.as_bytes()).map_err(io)?;
            if let (Some(path), Some(table)) = (csv, table) {
                write_file(&path, &table)?;
            }
            Ok(code)
        }
        Command::Run {
            config,
            seed,
            out,
            mode,
            packets,
            emit_gnuplot,
        } => {
            let mut cfg = with_seed(ScenarioConfig::load(&config)?, seed);
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(n) = packets {
                cfg.packets = n;
            }
            let path = out.unwrap_or_else(|| default_out_dir().join(format!("trace_seed{}.csv", cfg.seed)));
            let result = cmd_run(&cfg)?;
            write_file(&path, &result.csv)?;
            if emit_gnuplot {
                write_file(&path.with_extension("gp"), &gnuplot_script(&path, cfg.pairs))?;
            }
            let text = format!("trace: {}\n{}", path.display(), result.summary);
            stdout.write_all(text.as_bytes()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let rows = cmd_sweep(&cfg, param, &values, seeds)?;
            let csv = sweep_csv(&rows);
            let path = out.unwrap_or_else(|| default_out_dir().join(format!("sweep_{}.csv", param.name())));
            write_file(&path, &csv)?;
            stdout.write_all(csv.as_bytes()).map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_from_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::InfeasibleGame { .. } | Error::NoFeasibleDraw { .. } => EXIT_INFEASIBLE,
                _ => EXIT_USAGE,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> ScenarioConfig {
        ScenarioConfig {
            pairs: 1,
            packets: 100,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn single_pair_is_trivially_feasible() {
        let (text, code) = cmd_feasibility(&k1()).unwrap();
        assert_eq!(code, EXIT_OK);
        assert!(text.contains("spectral_radius: 0\n"), "{text}");
        assert!(text.contains("feasible: true"));
    }

    #[test]
    fn single_pair_gne_is_target_over_cinr() {
        let cfg = k1();
        let (_, table, code) = cmd_gne(&cfg).unwrap();
        assert_eq!(code, EXIT_OK);
        let scenario = cfg.to_scenario().unwrap();
        let r = scenario.realize().unwrap();
        let g = r.gains.power_gains()[(0, 0)];
        let expected = scenario.targets()[0] * scenario.fading.noise_power / g;
        let row: Vec<f64> = table.unwrap().lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!((row[1] - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_from_args(["ackpc", "bogus"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run_from_args(["ackpc", "--help"], &mut o, &mut e), EXIT_OK);
        assert_eq!(run_from_args(["ackpc", "run", "/nonexistent/cfg.toml"], &mut o, &mut e), EXIT_USAGE);
        assert!(String::from_utf8_lossy(&e).contains("/nonexistent/cfg.toml"));
    }

    #[test]
    fn gnuplot_script_names_the_csv() {
        let s = gnuplot_script(Path::new("dir/trace.csv"), 4);
        assert!(s.contains("'trace.csv'"));
        assert!(s.contains("[k=0:3]"));
    }

    #[test]
    fn k_sweep_rejects_fractions() {
        assert!(apply_param(&k1(), SweepParam::K, 2.5).is_err());
        assert_eq!(apply_param(&k1(), SweepParam::K, 3.0).unwrap().pairs, 3);
    }
}
