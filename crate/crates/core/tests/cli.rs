use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ackpc::cli::{self, SweepParam};
use ackpc::config::ScenarioConfig;
use ackpc::game::{self, GameSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ackpc"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    let prefix = format!("{key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

const HAND_K2: &str = "pairs = 2\nnoise_dbm = 20.0\ntargets_db = [0.0, 0.0]\npower_gains_lin = [[1.0, 0.2], [0.2, 1.0]]\n";

#[test]
fn example_config_spells_out_the_defaults() {
    let cfg = ScenarioConfig::load(&repo_config("default_k4.toml")).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
    ScenarioConfig::load(&repo_config("dynamics_k6.toml")).unwrap();
}

#[test]
fn single_pair_feasibility_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k1.toml", "pairs = 1\n");
    let o = bin().arg("feasibility").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "spectral_radius"), "0");
}

#[test]
fn default_feasibility_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "k4.toml", "seed = 7\n");
    let o = bin().arg("feasibility").arg(&cfg_path).output().unwrap();
    let text = stdout(&o);

    let scenario = ScenarioConfig::load(&cfg_path).unwrap().to_scenario().unwrap();
    let r = scenario.realize().unwrap();
    let spec = GameSpec::new(r.gains.power_gains().clone(), scenario.fading.noise_power, scenario.targets()).unwrap();
    let report = game::check_feasibility(&spec).unwrap();
    assert_eq!(field(&text, "spectral_radius"), report.spectral_radius.to_string());
    assert_eq!(field(&text, "feasible"), report.feasible.to_string());
    assert_eq!(o.status.code(), Some(if report.feasible { 0 } else { 2 }));
}

#[test]
fn scaling_targets_by_a_thousand_flips_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    // Spectral radius 0.5 at 0 dB targets.
    let gains = "pairs = 2\nnoise_dbm = 0.0\npower_gains_lin = [[1.0, 0.5], [0.5, 1.0]]\n";
    let ok = write_config(dir.path(), "a.toml", &format!("{gains}targets_db = [0.0, 0.0]\n"));
    let hot = write_config(dir.path(), "b.toml", &format!("{gains}targets_db = [30.0, 30.0]\nrequire_feasible = false\n"));
    let o = bin().arg("feasibility").arg(&ok).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "spectral_radius").parse::<f64>().unwrap(), 0.5);
    let o = bin().arg("feasibility").arg(&hot).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&stdout(&o), "feasible"), "false");
    let o = bin().arg("gne").arg(&hot).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gne_solves_the_hand_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k2.toml", HAND_K2);
    let csv = dir.path().join("gne.csv");
    let o = bin().arg("gne").arg(&cfg).arg("--csv").arg(&csv).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(&csv).unwrap();
    for line in table.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - 0.125).abs() < 1e-14, "{line}");
        assert!((v[3] - 1.0).abs() < 1e-10, "{line}");
    }
    assert!(field(&stdout(&o), "residual").parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn perfect_mode_run_lands_on_the_gne() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "k4.toml", "seed = 2\npackets = 300\n");
    let cfg = ScenarioConfig {
        mode: ackpc::Mode::Perfect,
        ..ScenarioConfig::load(&cfg_path).unwrap()
    };
    let (_, table, code) = cli::cmd_gne(&cfg).unwrap();
    assert_eq!(code, 0);
    let gne: Vec<f64> = table
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();

    let out = dir.path().join("trace.csv");
    let o = bin()
        .args(["run", "--mode", "perfect", "--out"])
        .arg(&out)
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let last: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect::<Vec<f64>>())
        .filter(|r| r[0] == 300.0)
        .collect();
    assert_eq!(last.len(), 4);
    for r in last {
        let k = r[1] as usize;
        assert!((r[2] - gne[k]).abs() / gne[k] < 1e-6, "pair {k}: {} vs {}", r[2], gne[k]);
    }
}

#[test]
fn run_is_byte_identical_and_honours_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k2.toml", "pairs = 2\npackets = 200\nseed = 4\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = bin()
            .env(cli::OUT_DIR_ENV, d)
            .args(["run", "--emit-gnuplot"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(d.join("trace_seed4.gp").exists());
    }
    let x = std::fs::read(a.join("trace_seed4.csv")).unwrap();
    let y = std::fs::read(b.join("trace_seed4.csv")).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn parse_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "pairs = 2\nbeta = 0.5\nnoise_dB = -90\n");
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3:1"), "{err}");
    let o = bin().arg("run").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn degenerate_sweep_equals_the_run_summary() {
    let cfg = ScenarioConfig {
        pairs: 2,
        packets: 300,
        seed: 5,
        ..ScenarioConfig::default()
    };
    let rows = cli::cmd_sweep(&cfg, SweepParam::Beta, &[0.9], 1).unwrap();
    let run = cli::cmd_run(&cfg).unwrap();
    let s = &run.summary;
    let row = &rows[0];
    assert_eq!(row.median_convergence_packet.to_string(), field(s, "median_convergence_packet"));
    assert_eq!(row.median_network_convergence_packet.to_string(), field(s, "network_convergence_packet"));
    assert_eq!(row.median_post_convergence_std.to_string(), field(s, "median_post_convergence_std"));
}

#[test]
fn sweep_rows_are_sorted_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", "packets = 150\n");
    let out = dir.path().join("sweep.csv");
    let run = || {
        bin()
            .args(["sweep", "--param", "K", "--values", "3,2,4", "--seeds", "3", "--out"])
            .arg(&out)
            .arg(&cfg)
            .output()
            .unwrap()
    };
    let o = run();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_to_string(&out).unwrap();
    let values: Vec<&str> = first.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["2", "3", "4"]);
    assert_eq!(first.lines().next().unwrap(), cli::SWEEP_HEADER);
    run();
    assert_eq!(first, std::fs::read_to_string(&out).unwrap());
}

#[test]
fn k_sweep_raises_equilibrium_powers_on_shared_geometry() {
    // Pairs 0..3 keep their positions; K = 6 adds two interferers.
    let tx = [[20.0, 20.0], [150.0, 60.0], [60.0, 140.0], [170.0, 180.0], [40.0, 250.0], [160.0, 270.0]];
    let rx = [[35.0, 30.0], [130.0, 70.0], [75.0, 120.0], [150.0, 160.0], [60.0, 240.0], [140.0, 280.0]];
    let gains_for = |k: usize| {
        let cfg = ScenarioConfig {
            pairs: k,
            area_m: Some([200.0, 300.0]),
            tx_positions_m: Some(tx[..k].to_vec()),
            rx_positions_m: Some(rx[..k].to_vec()),
            ..ScenarioConfig::default()
        };
        let scenario = cfg.to_scenario().unwrap();
        let r = scenario.realize().unwrap();
        (r.gains.power_gains().clone(), scenario)
    };
    let (g6, s6) = gains_for(6);
    // The K = 4 game is the leading block of the same channel draw.
    let spec6 = GameSpec::new(g6.clone(), s6.fading.noise_power, s6.targets()).unwrap();
    let spec4 = spec6.subgame(&[0, 1, 2, 3]).unwrap();
    let p4 = game::solve_gne_direct(&spec4).unwrap().powers;
    let p6 = game::solve_gne_direct(&spec6).unwrap().powers;
    for k in 0..4 {
        assert!(p6[k] > p4[k], "pair {k}: {} vs {}", p6[k], p4[k]);
    }
}
