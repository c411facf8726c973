use std::path::{Path, PathBuf};

use resonance_core::bs::{Conventions, SpectralWindow};
use resonance_core::dynamics::builtins::{self, BuiltinParams};
use resonance_core::dynamics::polynomial::PolynomialHamiltonian;
use resonance_core::dynamics::{HamiltonianSystem, PhasePoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid or unreadable configuration (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("schema error: {0}")]
pub struct SchemaError(pub String);

fn schema(msg: impl Into<String>) -> SchemaError {
    SchemaError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub builtin: Option<String>,
    pub omega: Option<f64>,
    pub mu: Option<f64>,
    pub polynomial: Option<PolynomialHamiltonian>,
}

impl SystemConfig {
    pub fn label(&self) -> String {
        self.builtin.clone().unwrap_or_else(|| "polynomial".into())
    }

    pub fn build(&self) -> Result<HamiltonianSystem, SchemaError> {
        match (&self.builtin, &self.polynomial) {
            (Some(label), None) => {
                let d = BuiltinParams::default();
                let params = BuiltinParams { omega: self.omega.unwrap_or(d.omega), mu: self.mu.unwrap_or(d.mu) };
                builtins::by_label(label, params).map_err(|e| schema(e.to_string()))
            }
            (None, Some(p)) => p.clone().into_system("polynomial").map_err(|e| schema(e.to_string())),
            _ => Err(schema("system needs exactly one of `builtin` or `polynomial`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub guess_q: Vec<f64>,
    pub guess_p: Vec<f64>,
    pub period: f64,
    pub e_min: f64,
    pub e_max: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    9
}

impl OrbitConfig {
    pub fn guess(&self) -> Result<PhasePoint, SchemaError> {
        PhasePoint::new(self.guess_q.clone(), self.guess_p.clone()).map_err(|e| schema(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub e0: f64,
    pub eps0: f64,
    /// Defaults to `c·h·ln(1/h)`.
    pub depth: Option<f64>,
    #[serde(default = "one")]
    pub c_const: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "shooting_tol")]
    pub shooting: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "monodromy_tol")]
    pub monodromy: f64,
    /// Matching tolerance in units of `h`.
    #[serde(default = "compare_tol")]
    pub compare: f64,
}

fn shooting_tol() -> f64 {
    1e-11
}
fn max_iter() -> usize {
    40
}
fn monodromy_tol() -> f64 {
    1e-9
}
fn compare_tol() -> f64 {
    1e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { shooting: shooting_tol(), max_iter: max_iter(), monodromy: monodromy_tol(), compare: compare_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    /// Closed-form model lattice.
    ModelExact { mu: f64 },
    /// Complex-scaled model operator.
    ModelOperator { mu: f64, l: f64, n: usize, theta: f64, n_fourier: usize },
    /// Exact separable spectrum of semihyp3.
    Separable { omega: f64, k_max: u32, n_max: u32, l_max: u32 },
    /// Exact separable spectrum of hyp2.
    SeparableHyp2 { k_max: u32, n_max: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub h: f64,
    pub output_dir: PathBuf,
    pub orbit: OrbitConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub calibration: Conventions,
    pub oracle: Option<OracleConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(schema(format!("h must satisfy 0 < h < 1, got {}", self.h)));
        }
        let t = &self.tolerances;
        if !(t.shooting > 0.0 && t.monodromy > 0.0 && t.compare > 0.0) || t.max_iter == 0 {
            return Err(schema("tolerances must be positive"));
        }
        self.calibration.validate().map_err(|e| schema(e.to_string()))?;
        self.window()?;
        let o = &self.orbit;
        if !(o.period > 0.0) || !(o.e_min <= o.e_max) || o.steps < 3 {
            return Err(schema("orbit needs period > 0, e_min ≤ e_max and steps ≥ 3"));
        }
        let sys = self.system.build()?;
        let guess = o.guess()?;
        if guess.dof() != sys.n {
            return Err(schema(format!("orbit guess has {} degrees of freedom, system has {}", guess.dof(), sys.n)));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<SpectralWindow, SchemaError> {
        let w = &self.window;
        let r = match w.depth {
            Some(d) => SpectralWindow::new(w.e0, w.eps0, d, w.c_const),
            None => SpectralWindow::with_default_depth(w.e0, w.eps0, self.h, w.c_const),
        };
        r.map_err(|e| schema(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Replace the `[calibration]` table of a config file.
pub fn persist_calibration(path: &Path, conv: &Conventions) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path)?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| schema(e.to_string()))?;
    table.insert("calibration".into(), toml::Value::try_from(conv)?);
    std::fs::write(path, toml::to_string(&table)?)?;
    Ok(())
}
