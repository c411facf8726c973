use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use resonance_cli::config::{persist_calibration, OracleConfig, RunConfig, SchemaError, SystemConfig};
use resonance_cli::pipeline::{self, write_det_scan};
use resonance_core::bs::{self, ResonanceLattice, SemiclassicalAction, SpectralWindow};
use resonance_core::circle_model::{self, CircleGrid, Cutoff};
use resonance_core::model_quantum::{self, ModelSpec};
use resonance_core::oracle::{self, ComplexOperator, GridSpec1D};
use resonance_core::orbits::{self, ShootingOptions};
use resonance_core::{floquet, Error};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "resonances", version, about = "Semiclassical resonances near periodic orbits")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic orbits
    #[command(subcommand)]
    Orbit(OrbitCmd),
    /// Floquet data of one periodic orbit
    Floquet(OrbitArgs),
    /// Semiclassical action along the configured family (JSON)
    Action {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bohr–Sommerfeld lattice
    #[command(subcommand)]
    Bs(BsCmd),
    /// Circle model table: det Gram, E₋₊ and Grushin residuals (CSV)
    CircleModel {
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exactly solvable quantum model
    #[command(subcommand)]
    Model(ModelCmd),
    /// Complex-scaled brute-force eigenvalues
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Search the convention tuple against the configured reference
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Matching tolerance in units of h
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        /// Store the tuple in the config's [calibration] table (comments are not preserved)
        #[arg(long)]
        write: bool,
    },
    /// Full pipeline
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Built-in label (hyp2, semihyp3, diabolo2, model, harmonic, inverted)
    #[arg(long)]
    system: String,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
}

impl SystemArgs {
    fn config(&self) -> SystemConfig {
        SystemConfig { builtin: Some(self.system.clone()), omega: self.omega, mu: self.mu, polynomial: None }
    }
}

#[derive(Args, Clone)]
struct OrbitArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p: Vec<f64>,
    #[arg(long, default_value_t = 2.0 * PI)]
    period: f64,
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    #[arg(long, default_value_t = 40)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OrbitCmd {
    /// Shoot for one periodic orbit at the guess energy
    Find(OrbitArgs),
    /// Continue a family over an energy interval
    Continue {
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long, allow_hyphen_values = true)]
        e_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        e_max: f64,
        #[arg(long, default_value_t = 9)]
        steps: usize,
    },
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, allow_hyphen_values = true)]
    e0: f64,
    #[arg(long)]
    eps0: f64,
    /// Defaults to c·h·ln(1/h)
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_const: f64,
}

impl WindowArgs {
    fn window(&self, h: f64) -> anyhow::Result<SpectralWindow> {
        Ok(match self.depth {
            Some(d) => SpectralWindow::new(self.e0, self.eps0, d, self.c_const)?,
            None => SpectralWindow::with_default_depth(self.e0, self.eps0, h, self.c_const)?,
        })
    }
}

#[derive(Subcommand)]
enum BsCmd {
    /// Solve the quantization condition, from a config or a saved action
    Solve {
        #[arg(long, conflicts_with = "action")]
        config: Option<PathBuf>,
        #[arg(long, requires = "e0")]
        action: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        e0: Option<f64>,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        depth: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        c_const: f64,
        /// Emit JSON instead of CSV
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Closed-form lattice of a one-block hyperbolic model (CSV)
    Spectrum {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// |det(Id − M(z))| on a rectangular z grid (CSV)
    DetScan {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        #[arg(long, allow_hyphen_values = true)]
        re_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        re_max: f64,
        #[arg(long, allow_hyphen_values = true)]
        im_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        im_max: f64,
        #[arg(long, default_value_t = 101)]
        nx: usize,
        #[arg(long, default_value_t = 51)]
        ny: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorKind {
    /// Scaled inverted oscillator η² − y²
    Inverted,
    /// Scaled model operator −hD_t + (μ/2)(ξ² − x²)
    Model,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Eigenvalues of a complex-scaled operator in a window (CSV)
    Run {
        #[arg(long, value_enum)]
        kind: OperatorKind,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        l: f64,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = PI / 4.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 10)]
        n_fourier: usize,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match a lattice CSV against a point CSV (JSON report)
    Compare {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        h: f64,
        /// Tolerance in units of h
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, v: &T) -> anyhow::Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

fn orbit_from(a: &OrbitArgs) -> anyhow::Result<(resonance_core::dynamics::HamiltonianSystem, orbits::PeriodicOrbit, ShootingOptions)> {
    let sys = a.sys.config().build()?;
    let guess = resonance_core::dynamics::PhasePoint::new(a.q.clone(), a.p.clone())?;
    let opts = ShootingOptions::new(a.tol, a.max_iter);
    let e = sys.energy(&guess.to_flat())?;
    let orbit = orbits::find_periodic_orbit_with(&sys, &guess, a.period, Some(e), &opts)?;
    Ok((sys, orbit, opts))
}

#[derive(Serialize)]
struct FloquetReport {
    #[serde(flatten)]
    data: floquet::FloquetData,
    period: f64,
    energy: f64,
    action: f64,
}

fn circle_table(h: f64, n: usize, count: usize, out: &Option<PathBuf>) -> anyhow::Result<()> {
    let grid = CircleGrid::new(n, h)?;
    let chi = Cutoff::standard(&grid)?;
    let rhs: Vec<Complex64> = grid.points().iter().map(|&t| Complex64::new(t.cos().exp(), t.sin())).collect();
    let mut wr = csv::Writer::from_writer(sink(out)?);
    wr.write_record([
        "re_z", "im_z", "re_det", "im_det", "re_det_exact", "im_det_exact", "re_emp", "im_emp", "grushin_residual",
        "resolvent_residual",
    ])?;
    for j in 0..count {
        let z = Complex64::new(h * (0.13 + 0.37 * j as f64), -h * 0.9 * j as f64 / count.max(1) as f64);
        let det = circle_model::gram_determinant(&grid, z, &chi)?;
        let exact = -4.0 * (z * PI / h).sin().powi(2);
        let emp = circle_model::effective_hamiltonian(z, h);
        let g = circle_model::verify_grushin_identity(&grid, z, &chi)?;
        let r = circle_model::resolvent_reconstruction(&grid, z, &chi, &rhs)?;
        let row = [z.re, z.im, det.re, det.im, exact.re, exact.im, emp.re, emp.im, g, r];
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

fn reference_for(cfg: &RunConfig, window: &SpectralWindow) -> anyhow::Result<ResonanceLattice> {
    Ok(match &cfg.oracle {
        Some(OracleConfig::ModelExact { mu }) => model_quantum::model_resonances(&ModelSpec::hyperbolic(*mu, cfg.h)?, window)?,
        Some(OracleConfig::Separable { omega, k_max, n_max, l_max }) => {
            oracle::separable_reference(cfg.h, *omega, *k_max, *n_max, *l_max)?
        }
        Some(OracleConfig::SeparableHyp2 { k_max, n_max }) => oracle::separable_reference_hyp2(cfg.h, *k_max, *n_max)?,
        _ => return Err(SchemaError("calibration needs a labelled oracle (model_exact, separable or separable_hyp2)".into()).into()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Command::Orbit(OrbitCmd::Find(a)) => {
            let (_, orbit, _) = orbit_from(&a)?;
            emit_json(&a.out, &orbit)
        }
        Command::Orbit(OrbitCmd::Continue { orbit: a, e_min, e_max, steps }) => {
            let (sys, seed, opts) = orbit_from(&a)?;
            let fam = orbits::continue_family_with(&sys, &seed, e_min, e_max, steps, &opts)?;
            emit_json(&a.out, &fam)
        }
        Command::Floquet(a) => {
            let (sys, orbit, _) = orbit_from(&a)?;
            let mut data = floquet::classify(&floquet::monodromy_matrix(&sys, &orbit, 1e-9)?, floquet::DEFAULT_CLASSIFY_TOL)?;
            data.g_ell = floquet::elliptic_index(&sys, &orbit, &data)?;
            let action = orbits::action_s0(&orbit)?;
            emit_json(&a.out, &FloquetReport { data, period: orbit.period, energy: orbit.energy, action })
        }
        Command::Action { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let (_, _, action) = pipeline::action_stage(&cfg)?;
            emit_json(&out, &action)
        }
        Command::Bs(BsCmd::Solve { config, action, e0, eps0, depth, c_const, json, out }) => {
            let (action, window): (SemiclassicalAction, SpectralWindow) = match (config, action) {
                (Some(c), None) => {
                    let cfg = RunConfig::load(&c)?;
                    (pipeline::action_stage(&cfg)?.2, cfg.window()?)
                }
                (None, Some(a)) => {
                    let action: SemiclassicalAction = serde_json::from_reader(File::open(&a)?)
                        .map_err(|e| SchemaError(format!("{}: {e}", a.display())))?;
                    let w = WindowArgs {
                        e0: e0.ok_or_else(|| SchemaError("--e0 is required with --action".into()))?,
                        eps0: eps0.ok_or_else(|| SchemaError("--eps0 is required with --action".into()))?,
                        depth,
                        c_const,
                    };
                    let window = w.window(action.h())?;
                    (action, window)
                }
                _ => return Err(SchemaError("pass either --config or --action".into()).into()),
            };
            let lattice = bs::solve_bs(&action, &window)?;
            if json {
                emit_json(&out, &lattice)
            } else {
                Ok(lattice.write_csv(sink(&out)?, action.d())?)
            }
        }
        Command::CircleModel { h, n, count, out } => circle_table(h, n, count, &out),
        Command::Model(ModelCmd::Spectrum { mu, h, window, out }) => {
            let spec = ModelSpec::hyperbolic(mu, h)?;
            let lattice = model_quantum::model_resonances(&spec, &window.window(h)?)?;
            Ok(lattice.write_csv(sink(&out)?, 1)?)
        }
        Command::Model(ModelCmd::DetScan { mu, h, k_max, re_min, re_max, im_min, im_max, nx, ny, out }) => {
            let spec = ModelSpec::hyperbolic(mu, h)?;
            let scan = pipeline::det_scan(&spec, k_max, (re_min, re_max), (im_min, im_max), nx, ny);
            match &out {
                Some(p) => write_det_scan(p, &scan),
                None => {
                    let mut wr = csv::Writer::from_writer(io::stdout().lock());
                    wr.write_record(["re_z", "im_z", "abs_det"])?;
                    for (z, v) in &scan {
                        wr.write_record([z.re.to_string(), z.im.to_string(), v.to_string()])?;
                    }
                    Ok(wr.flush()?)
                }
            }
        }
        Command::Oracle(OracleCmd::Run { kind, h, l, n, theta, mu, n_fourier, window, out }) => {
            let grid = GridSpec1D::new(l, n, theta, h)?;
            let op = match kind {
                OperatorKind::Inverted => ComplexOperator::Dense { matrix: oracle::scaled_inverted_oscillator(&grid)?, grid: Some(grid) },
                OperatorKind::Model => oracle::scaled_model_operator(mu, &grid, n_fourier)?,
            };
            let res = oracle::eigenvalues_in_window(&op, &window.window(h)?)?;
            Ok(res.write_csv(sink(&out)?)?)
        }
        Command::Oracle(OracleCmd::Compare { lattice, points, h, tol, out }) => {
            let lat = ResonanceLattice::read_csv(File::open(&lattice).with_context(|| lattice.display().to_string())?)?;
            let pts = pipeline::read_points(&points)?;
            emit_json(&out, &pipeline::compare(&lat.points(), &pts, h, tol))
        }
        Command::Calibrate { config, tol, write } => {
            let cfg = RunConfig::load(&config)?;
            let window = cfg.window()?;
            let reference = reference_for(&cfg, &window)?;
            let (_, _, action) = pipeline::action_stage(&cfg)?;
            let report = oracle::calibrate_conventions(&action, &window, &reference, tol * cfg.h)?;
            emit_json(&None, &report)?;
            if write {
                if !report.unique {
                    return Err(Error::Calibration(format!("{} convention tuples pass; refusing to persist", report.n_passing)).into());
                }
                persist_calibration(&config, &report.conventions())?;
            }
            Ok(())
        }
        Command::Run { config, output_dir } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let manifest = pipeline::run_pipeline(&cfg)?;
            log::info!("wrote {}", manifest.output_dir.join("manifest.json").display());
            if let Some(c) = &manifest.comparison {
                log::info!("comparison: {} matched, max_err/h = {:.3e}", c.matched, c.max_err_over_h);
            }
            emit_json(&None, &manifest)
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RESONANCES_THREADS") {
        let n: usize = v.parse().map_err(|_| SchemaError(format!("RESONANCES_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!(e))?;
    }
    Ok(())
}

// stdout closed early (e.g. piped into `head`)
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()) == Some(io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(|c| matches!(c.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(resonance_cli::exit_code(&e) as u8)
        }
    }
}
