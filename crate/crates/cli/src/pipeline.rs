use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use num_complex::Complex64;
use resonance_core::bs::{self, diff_points, ResonanceLattice, SemiclassicalAction, SpectralWindow};
use resonance_core::model_quantum::{self, ModelSpec};
use resonance_core::oracle::{self, EigenResult, GridSpec1D};
use resonance_core::orbits::{self, OrbitFamily, ShootingOptions};
use serde::{Deserialize, Serialize};

use crate::config::{OracleConfig, RunConfig};

pub const LATTICE_CSV_VERSION: &str = "lattice-v1: m,k1..kd,re_z,im_z,residual,multiplicity";
pub const POINTS_CSV_VERSION: &str = "points-v1: re_z,im_z";
pub const DET_SCAN_CSV_VERSION: &str = "det-scan-v1: re_z,im_z,abs_det";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub resonances: String,
    pub lattice_csv: String,
    pub points_csv: String,
    pub det_scan_csv: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            resonances: env!("CARGO_PKG_VERSION").into(),
            lattice_csv: LATTICE_CSV_VERSION.into(),
            points_csv: POINTS_CSV_VERSION.into(),
            det_scan_csv: DET_SCAN_CSV_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_time_s: f64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub matched: usize,
    pub lattice_points: usize,
    pub oracle_points: usize,
    pub max_err: f64,
    pub max_err_over_h: f64,
    pub tol: f64,
    pub unmatched_lattice: Vec<Complex64>,
    pub unmatched_oracle: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: Versions,
    pub system: String,
    pub h: f64,
    pub output_dir: PathBuf,
    pub stages: Vec<StageRecord>,
    pub comparison: Option<ComparisonReport>,
    pub failure: Option<StageFailure>,
    pub complete: bool,
}

impl RunManifest {
    pub fn output(&self, stage: &str, name: &str) -> Option<PathBuf> {
        self.stages
            .iter()
            .find(|s| s.name == stage)
            .and_then(|s| s.outputs.iter().find(|o| o.as_str() == name))
            .map(|o| self.output_dir.join(o))
    }

    fn write(&self) -> anyhow::Result<()> {
        write_json(&self.output_dir.join("manifest.json"), self)
    }
}

/// A stage failed; the partial manifest has been written.
#[derive(Debug, thiserror::Error)]
#[error("stage '{stage}' failed: {message}")]
pub struct StageError {
    pub stage: String,
    pub message: String,
    pub code: i32,
}

impl StageError {
    fn new(stage: &str, e: anyhow::Error) -> Self {
        StageError { stage: stage.into(), message: format!("{e:#}"), code: crate::exit_code(&e) }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

pub fn write_lattice(path: &Path, lattice: &ResonanceLattice, d: usize) -> anyhow::Result<()> {
    lattice.write_csv(BufWriter::new(File::create(path)?), d)?;
    Ok(())
}

pub fn write_points(path: &Path, points: &[Complex64]) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["re_z", "im_z"])?;
    for z in points {
        wr.write_record([z.re.to_string(), z.im.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> anyhow::Result<Vec<Complex64>> {
    Ok(EigenResult::read_csv_points(File::open(path)?)?)
}

/// `|det(Id − M(z))|` on a rectangular grid of `z`.
pub fn det_scan(spec: &ModelSpec, k_max: u32, re: (f64, f64), im: (f64, f64), nx: usize, ny: usize) -> Vec<(Complex64, f64)> {
    let lin = |(a, b): (f64, f64), n: usize, i: usize| if n < 2 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let z = Complex64::new(lin(re, nx, i), lin(im, ny, j));
            out.push((z, model_quantum::truncated_monodromy_determinant(spec, z, k_max).norm()));
        }
    }
    out
}

pub fn write_det_scan(path: &Path, scan: &[(Complex64, f64)]) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["re_z", "im_z", "abs_det"])?;
    for (z, v) in scan {
        wr.write_record([z.re.to_string(), z.im.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Orbit family for the configured system.
pub fn family_stage(cfg: &RunConfig) -> anyhow::Result<OrbitFamily> {
    let sys = cfg.system.build()?;
    let o = &cfg.orbit;
    let opts = ShootingOptions::new(cfg.tolerances.shooting, cfg.tolerances.max_iter);
    let guess = o.guess()?;
    let e = sys.energy(&guess.to_flat())?;
    let seed = orbits::find_periodic_orbit_with(&sys, &guess, o.period, Some(e), &opts)?;
    let family = orbits::continue_family_with(&sys, &seed, o.e_min, o.e_max, o.steps, &opts)?;
    if let Some(f) = &family.failure {
        log::warn!("orbit continuation stopped early: {f}");
    }
    if family.orbits.len() < 2 {
        return Err(anyhow!("continuation produced {} orbit(s); need at least two", family.orbits.len()));
    }
    Ok(family)
}

/// Orbit family, Floquet data and the assembled action with the configured conventions.
pub fn action_stage(cfg: &RunConfig) -> anyhow::Result<(OrbitFamily, Vec<resonance_core::floquet::FloquetData>, SemiclassicalAction)> {
    let sys = cfg.system.build()?;
    let family = family_stage(cfg)?;
    let floq = bs::family_floquet(&sys, &family, cfg.tolerances.monodromy)?;
    let action = bs::assemble_action(&family, &floq, &sys, floq[0].g_ell, cfg.h)?.with_conventions(cfg.calibration)?;
    Ok((family, floq, action))
}

pub enum OracleOutput {
    Lattice(ResonanceLattice),
    Eigen(EigenResult),
}

impl OracleOutput {
    pub fn points(&self) -> Vec<Complex64> {
        match self {
            OracleOutput::Lattice(l) => l.points(),
            OracleOutput::Eigen(e) => e.eigenvalues.clone(),
        }
    }
}

pub fn run_oracle(oc: &OracleConfig, h: f64, window: &SpectralWindow) -> anyhow::Result<OracleOutput> {
    Ok(match oc {
        OracleConfig::ModelExact { mu } => {
            OracleOutput::Lattice(model_quantum::model_resonances(&ModelSpec::hyperbolic(*mu, h)?, window)?)
        }
        OracleConfig::ModelOperator { mu, l, n, theta, n_fourier } => {
            let grid = GridSpec1D::new(*l, *n, *theta, h)?;
            let op = oracle::scaled_model_operator(*mu, &grid, *n_fourier)?;
            OracleOutput::Eigen(oracle::eigenvalues_in_window(&op, window)?)
        }
        OracleConfig::Separable { omega, k_max, n_max, l_max } => {
            OracleOutput::Lattice(filter(oracle::separable_reference(h, *omega, *k_max, *n_max, *l_max)?, window))
        }
        OracleConfig::SeparableHyp2 { k_max, n_max } => {
            OracleOutput::Lattice(filter(oracle::separable_reference_hyp2(h, *k_max, *n_max)?, window))
        }
    })
}

fn filter(l: ResonanceLattice, w: &SpectralWindow) -> ResonanceLattice {
    ResonanceLattice { entries: l.entries.into_iter().filter(|e| w.contains(e.z)).collect() }
}

pub fn compare(lattice: &[Complex64], oracle: &[Complex64], h: f64, tol_over_h: f64) -> ComparisonReport {
    let d = diff_points(lattice, oracle, tol_over_h * h);
    ComparisonReport {
        matched: d.matched,
        lattice_points: lattice.len(),
        oracle_points: oracle.len(),
        max_err: d.max_err,
        max_err_over_h: d.max_err / h,
        tol: tol_over_h * h,
        unmatched_lattice: d.unmatched_a,
        unmatched_oracle: d.unmatched_b,
    }
}

/// Scatter CSVs for the lattice and oracle points, and a `|det|` grid for
/// model runs. Fails if the lattice stage output is missing.
pub fn emit_plot_data(manifest: &RunManifest, model_mu: Option<f64>) -> anyhow::Result<Vec<String>> {
    let lattice_path = manifest
        .output("bs", "lattice.csv")
        .ok_or_else(|| anyhow!("dependency error: manifest has no lattice output"))?;
    let lattice = ResonanceLattice::read_csv(File::open(&lattice_path)?)?;
    let dir = &manifest.output_dir;
    let mut files = vec!["plot_lattice.csv".to_string()];
    write_points(&dir.join("plot_lattice.csv"), &lattice.points())?;
    if let Some(p) = manifest.output("oracle", "oracle.csv") {
        write_points(&dir.join("plot_oracle.csv"), &read_points(&p)?)?;
        files.push("plot_oracle.csv".into());
    }
    if let Some(mu) = model_mu {
        let spec = ModelSpec::hyperbolic(mu, manifest.h)?;
        let pts = lattice.points();
        if !pts.is_empty() {
            let pad = manifest.h;
            let (re0, re1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, z| (a.0.min(z.re), a.1.max(z.re)));
            let im0 = pts.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
            let scan = det_scan(&spec, 4, (re0 - pad, re1 + pad), (im0 - pad, pad), 81, 41);
            write_det_scan(&dir.join("plot_det_scan.csv"), &scan)?;
            files.push("plot_det_scan.csv".into());
        }
    }
    Ok(files)
}

struct Runner {
    manifest: RunManifest,
}

impl Runner {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&Path) -> anyhow::Result<(T, Vec<String>)>) -> Result<T, StageError> {
        let t = Instant::now();
        log::info!("stage {name}");
        match f(&self.manifest.output_dir) {
            Ok((v, outputs)) => {
                self.manifest.stages.push(StageRecord { name: name.into(), wall_time_s: t.elapsed().as_secs_f64(), outputs });
                self.manifest.write().map_err(|e| StageError::new(name, e))?;
                Ok(v)
            }
            Err(e) => {
                self.manifest.failure = Some(StageFailure { stage: name.into(), message: format!("{e:#}") });
                if let Err(w) = self.manifest.write() {
                    log::error!("could not write partial manifest: {w:#}");
                }
                Err(StageError::new(name, e))
            }
        }
    }
}

/// orbit → floquet → action → bs, then the oracle comparison if configured,
/// then plot data. The manifest is rewritten after every stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest, StageError> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| StageError::new("setup", e.into()))?;
    let mut r = Runner {
        manifest: RunManifest {
            config_hash: cfg.hash(),
            versions: Versions::default(),
            system: cfg.system.label(),
            h: cfg.h,
            output_dir: dir,
            stages: Vec::new(),
            comparison: None,
            failure: None,
            complete: false,
        },
    };
    let sys = cfg.system.build().map_err(|e| StageError::new("setup", e.into()))?;
    let window = cfg.window().map_err(|e| StageError::new("setup", e.into()))?;

    let family = r.stage("orbit", |d| {
        let fam = family_stage(cfg)?;
        write_json(&d.join("orbit.json"), &fam)?;
        Ok((fam, vec!["orbit.json".into()]))
    })?;
    let floq = r.stage("floquet", |d| {
        let floq = bs::family_floquet(&sys, &family, cfg.tolerances.monodromy)?;
        write_json(&d.join("floquet.json"), &floq)?;
        Ok((floq, vec!["floquet.json".into()]))
    })?;
    let action = r.stage("action", |d| {
        let a = bs::assemble_action(&family, &floq, &sys, floq[0].g_ell, cfg.h)?.with_conventions(cfg.calibration)?;
        write_json(&d.join("action.json"), &a)?;
        Ok((a, vec!["action.json".into()]))
    })?;
    let lattice = r.stage("bs", |d| {
        let l = bs::solve_bs(&action, &window)?;
        write_lattice(&d.join("lattice.csv"), &l, action.d())?;
        write_json(&d.join("lattice.json"), &l)?;
        Ok((l, vec!["lattice.csv".into(), "lattice.json".into()]))
    })?;
    if let Some(oc) = &cfg.oracle {
        let out = r.stage("oracle", |d| {
            let out = run_oracle(oc, cfg.h, &window)?;
            write_points(&d.join("oracle.csv"), &out.points())?;
            let mut files = vec!["oracle.csv".to_string()];
            if let OracleOutput::Lattice(l) = &out {
                write_lattice(&d.join("oracle_lattice.csv"), l, l.dim())?;
                files.push("oracle_lattice.csv".into());
            }
            Ok((out, files))
        })?;
        let report = r.stage("compare", |d| {
            let rep = compare(&lattice.points(), &out.points(), cfg.h, cfg.tolerances.compare);
            write_json(&d.join("comparison.json"), &rep)?;
            Ok((rep, vec!["comparison.json".into()]))
        })?;
        r.manifest.comparison = Some(report);
    }
    let model_mu = match (&cfg.system.builtin, &cfg.oracle) {
        (_, Some(OracleConfig::ModelExact { mu })) => Some(*mu),
        (Some(l), _) if l == "model" => Some(cfg.system.mu.unwrap_or(1.0)),
        _ => None,
    };
    let snapshot = r.manifest.clone();
    r.stage("plot", |_| Ok(((), emit_plot_data(&snapshot, model_mu)?)))?;
    r.manifest.complete = true;
    r.manifest.write().map_err(|e| StageError::new("finish", e))?;
    Ok(r.manifest)
}
