use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use dppln::material::Material;
use dppln_cli::cache::CACHE_FILE;
use dppln_cli::commands::artifact_path;
use dppln_cli::config::PropagationModel;
use dppln_cli::output::sha256_hex;
use dppln_cli::{execute, load_config, parse_config, Command, RunConfig, RunOptions};
use dppln::qpm::{AxisRange, MapAxes};

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/design_point.json")
}

fn config() -> RunConfig {
    load_config(&shipped()).unwrap()
}

fn light() -> RunConfig {
    let mut cfg = config();
    cfg.biphoton.geometry_sweep = None;
    cfg
}

fn bin(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_dppln")).args(args).output().unwrap()
}

fn opts(out: &Path, cache: Option<&Path>) -> RunOptions {
    RunOptions {
        out_dir: Some(out.to_path_buf()),
        cache_dir: cache.map(Path::to_path_buf),
        use_cache: cache.is_some(),
    }
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json" | "txt")))
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_config_is_the_design_point() {
    let cfg = config();
    assert_eq!(cfg.waves.pump_um, 0.7335);
    assert_eq!(cfg.waves.signal_um, 1.6568);
    assert_eq!(cfg.poling.duty, [0.5, 0.5]);
    assert!(cfg.poling.solve && cfg.poling.periods_um.is_none());
    assert_eq!(cfg.poling.length_cm, 5.0);
    assert_eq!(cfg.material, Material::default());
    assert!(!cfg.material.sellmeier.citation.is_empty());
}

#[test]
fn missing_waves_exits_with_schema_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"schema_version": 1}"#).unwrap();
    let out = bin(&["design", "--config", path.to_str().unwrap(), "--no-cache"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("waves"));
}

#[test]
fn periods_and_solve_together_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let text = r#"{"schema_version": 1,
        "waves": {"pump_um": 0.7335, "signal_um": 1.6568, "temperature_c": 25.0},
        "poling": {"periods_um": [25.84, 154.96], "solve": true}}"#;
    fs::write(&path, text).unwrap();
    let out = bin(&["design", "--config", path.to_str().unwrap(), "--no-cache"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("poling"));
}

#[test]
fn unreadable_config_is_an_io_error() {
    let out = bin(&["design", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn zero_width_map_axis_fails_before_computing() {
    let mut cfg = light();
    cfg.sweep.map.axes = MapAxes::SignalPump {
        signal_um: AxisRange { start: 1.6, stop: 1.6, steps: 11 },
        pump_um: AxisRange { start: 0.72, stop: 0.76, steps: 11 },
        temperature_c: 25.0,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let err = execute(Command::Map, &cfg, &opts(&out, None)).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(!out.exists());
}

#[test]
fn fixed_periods_config_parses() {
    let cfg = parse_config(
        r#"{"schema_version": 1,
        "waves": {"pump_um": 0.7335, "signal_um": 1.6568, "temperature_c": 25.0},
        "poling": {"periods_um": [25.84, 154.96]}}"#,
    )
    .unwrap();
    assert_eq!(cfg.poling.periods_um, Some([25.84, 154.96]));
}

#[test]
fn design_manifest_lists_periods_with_digest() {
    let dir = tempfile::tempdir().unwrap();
    let report = execute(Command::Design, &light(), &opts(dir.path(), None)).unwrap();
    let m = &report.manifest;
    assert_eq!(m.command, "design");
    assert_eq!(m.config_sha256.len(), 64);
    let path = artifact_path(&report.manifest_path, "periods", m).unwrap();
    let bytes = fs::read(&path).unwrap();
    let entry = m.artifacts.iter().find(|a| a.name == "periods").unwrap();
    assert_eq!(entry.sha256, sha256_hex(&bytes));
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("period1_um,period2_um"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] - 25.04).abs() < 0.5 && (row[1] - 157.4).abs() < 2.0, "{row:?}");
    assert!(dir.path().join("poling_segments.txt").exists());
    let on_disk: serde_json::Value = serde_json::from_slice(&fs::read(&report.manifest_path).unwrap()).unwrap();
    assert_eq!(on_disk["artifacts"].as_array().unwrap().len(), m.artifacts.len());
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = light();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in [Command::Design, Command::Spectrum, Command::Dip, Command::Eo, Command::Entropy] {
        execute(cmd, &cfg, &opts(a.path(), None)).unwrap();
        execute(cmd, &cfg, &opts(b.path(), None)).unwrap();
    }
    let (fa, fb) = (data_files(a.path()), data_files(b.path()));
    assert!(fa.len() >= 12);
    assert_eq!(fa, fb);
}

#[test]
fn cache_round_trip_and_invalidation() {
    let cfg = light();
    let cache = tempfile::tempdir().unwrap();
    let cold = tempfile::tempdir().unwrap();
    let warm = tempfile::tempdir().unwrap();
    let r1 = execute(Command::Spectrum, &cfg, &opts(cold.path(), Some(cache.path()))).unwrap();
    assert!(r1.mode_solves >= 10, "{}", r1.mode_solves);
    assert!(cache.path().join(CACHE_FILE).exists());
    let r2 = execute(Command::Spectrum, &cfg, &opts(warm.path(), Some(cache.path()))).unwrap();
    assert_eq!(r2.mode_solves, 0);
    assert_eq!(r2.cache_loaded, r1.mode_solves);
    assert_eq!(data_files(cold.path()), data_files(warm.path()));

    let mut tweaked = cfg.clone();
    tweaked.geometry.width_um += 1e-6;
    let r3 = execute(Command::Spectrum, &tweaked, &opts(warm.path(), Some(cache.path()))).unwrap();
    assert!(r3.mode_solves > 0);
    assert_eq!(r3.cache_loaded, 0);

    let file = cache.path().join(CACHE_FILE);
    let text = fs::read(&file).unwrap();
    fs::write(&file, &text[..text.len() / 2]).unwrap();
    execute(Command::Spectrum, &cfg, &opts(warm.path(), Some(cache.path()))).unwrap();
}

#[test]
fn cache_directory_from_environment() {
    let cache = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let status = Process::new(env!("CARGO_BIN_EXE_dppln"))
        .args(["design", "--config", shipped().to_str().unwrap(), "--out", out.path().to_str().unwrap()])
        .env(dppln_cli::CACHE_DIR_ENV, cache.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(cache.path().join(CACHE_FILE).exists());
    assert!(!out.path().join(".cache").exists());
}

#[test]
fn small_waveguide_map() {
    let mut cfg = light();
    cfg.sweep.map.model = PropagationModel::Waveguide;
    cfg.sweep.map.axes = MapAxes::SignalPump {
        signal_um: AxisRange { start: 1.60, stop: 1.70, steps: 5 },
        pump_um: AxisRange { start: 0.725, stop: 0.745, steps: 5 },
        temperature_c: 25.0,
    };
    let dir = tempfile::tempdir().unwrap();
    execute(Command::Map, &cfg, &opts(dir.path(), None)).unwrap();
    let text = fs::read_to_string(dir.path().join("delta_map.csv")).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert!(text.starts_with("axis1,axis2,delta_rad_per_um,valid"));
    let svg = fs::read_to_string(dir.path().join("delta_map.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn validate_command_reports_every_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "validate",
        "--config",
        shipped().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--no-cache",
        "--threads",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let table = fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert_eq!(table.lines().count(), 23);
    assert!(!table.contains(",false,"));
}
