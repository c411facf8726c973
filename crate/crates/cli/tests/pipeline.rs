use std::path::{Path, PathBuf};
use std::process::Command;

use resonance_cli::config::{persist_calibration, RunConfig};
use resonance_cli::pipeline::{emit_plot_data, run_pipeline, RunManifest};
use resonance_core::bs::{Conventions, ResonanceLattice};

fn config(name: &str, out: &Path) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resonances"))
}

fn lattice_at(m: &RunManifest) -> ResonanceLattice {
    ResonanceLattice::read_csv(std::fs::File::open(m.output("bs", "lattice.csv").unwrap()).unwrap()).unwrap()
}

#[test]
fn hyp2_run_has_enough_entries() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&config("hyp2.toml", dir.path())).unwrap();
    assert!(m.complete);
    assert!(lattice_at(&m).len() >= 20);
    let c = m.comparison.unwrap();
    assert_eq!(c.matched, c.lattice_points);
    assert!(c.max_err_over_h < 1e-6);
    for f in ["manifest.json", "orbit.json", "floquet.json", "action.json", "lattice.csv", "oracle.csv", "comparison.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn model_run_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&config("model.toml", dir.path())).unwrap();
    let c = m.comparison.unwrap();
    assert!(c.matched > 0 && c.unmatched_lattice.is_empty() && c.unmatched_oracle.is_empty());
    assert!(c.max_err <= 1e-12, "max_err {}", c.max_err);
    for f in ["plot_lattice.csv", "plot_oracle.csv", "plot_det_scan.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&config("hyp2.toml", a.path())).unwrap();
    run_pipeline(&config("hyp2.toml", b.path())).unwrap();
    for f in ["lattice.csv", "oracle.csv", "oracle_lattice.csv", "plot_lattice.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn lattice_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&config("model.toml", dir.path())).unwrap();
    let l = lattice_at(&m);
    let mut buf = Vec::new();
    l.write_csv(&mut buf, 1).unwrap();
    assert_eq!(ResonanceLattice::read_csv(buf.as_slice()).unwrap(), l);
    let json: ResonanceLattice =
        serde_json::from_reader(std::fs::File::open(m.output("bs", "lattice.json").unwrap()).unwrap()).unwrap();
    assert_eq!(json, l);
    let manifest: RunManifest =
        serde_json::from_reader(std::fs::File::open(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest, m);
}

#[test]
fn window_without_resonances_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("model.toml", dir.path());
    // Between Re z = 0 and h there is nothing
    cfg.window.e0 = 0.005;
    cfg.window.eps0 = 0.001;
    cfg.oracle = None;
    let m = run_pipeline(&cfg).unwrap();
    let text = std::fs::read_to_string(m.output("bs", "lattice.csv").unwrap()).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("m,k1,re_z,im_z"));
}

#[test]
fn plot_data_needs_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&config("model.toml", dir.path())).unwrap();
    let mut broken = m.clone();
    broken.stages.retain(|s| s.name != "bs");
    let err = emit_plot_data(&broken, None).unwrap_err();
    assert!(err.to_string().contains("dependency"));
}

#[test]
fn negative_h_exits_with_schema_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/hyp2.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("h = 0.02", "h = -0.02")).unwrap();
    assert!(RunConfig::load(&bad).is_err());
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = bin().env("RESONANCES_THREADS", "many").args(["circle-model", "--count", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_persists_unique_tuple() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("semihyp3.toml");
    let text = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/semihyp3.toml")).unwrap();
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.calibration = Conventions::default();
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = bin().args(["calibrate", "--write", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back.calibration, Conventions { ee_sign: 1, g_ell_offset: -1, m_offset: -1 });
}

#[test]
fn ambiguous_calibration_is_not_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hyp2.toml");
    std::fs::copy(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/hyp2.toml"), &path).unwrap();
    let before = std::fs::read(&path).unwrap();
    let out = bin().args(["calibrate", "--write", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn persist_keeps_other_tables() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::copy(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/model.toml"), &path).unwrap();
    let conv = Conventions { ee_sign: -1, g_ell_offset: 2, m_offset: 1 };
    persist_calibration(&path, &conv).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back.calibration, conv);
    assert_eq!(back.h, 0.01);
}

#[test]
fn cli_bs_solve_from_saved_action() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/model.toml");
    let action = dir.path().join("action.json");
    let st = bin().args(["action", "--config"]).arg(&cfg).arg("--out").arg(&action).status().unwrap();
    assert!(st.success());
    let lat = dir.path().join("l.csv");
    let st = bin()
        .args(["bs", "solve", "--e0", "0", "--eps0", "0.05", "--action"])
        .arg(&action)
        .arg("--out")
        .arg(&lat)
        .status()
        .unwrap();
    assert!(st.success());
    let spec = dir.path().join("s.csv");
    let st = bin().args(["model", "spectrum", "--h", "0.01", "--e0", "0", "--eps0", "0.05", "--out"]).arg(&spec).status().unwrap();
    assert!(st.success());
    let out = bin().args(["oracle", "compare", "--h", "0.01", "--lattice"]).arg(&lat).arg("--points").arg(&spec).output().unwrap();
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["max_err"].as_f64().unwrap() <= 1e-12);
    assert_eq!(rep["matched"], rep["lattice_points"]);
}
