use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HamiltonianSystem;
use crate::error::{Error, Result};

/// Axis-aligned sampling box on the flat phase vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn cube(dim: usize, half: f64) -> Self {
        BoundingBox { lo: vec![-half; dim], hi: vec![half; dim] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub min_bracket: f64,
    pub accepted: usize,
    pub pass: bool,
}

const SEED: u64 = 0x5eed_e5ca;

fn central_gradient(g: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let s = 1e-6 * x[i].abs().max(1.0);
            xs[i] = x[i] + s;
            let fp = g(&xs);
            xs[i] = x[i] - s;
            let fm = g(&xs);
            xs[i] = x[i];
            (fp - fm) / (2.0 * s)
        })
        .collect()
}

/// Sample `{H₀, G}` over `region ∩ bbox` by rejection sampling with a fixed
/// seed and compare its minimum with `c`.
pub fn check_escape_function(
    sys: &HamiltonianSystem,
    g: &dyn Fn(&[f64]) -> f64,
    region: &dyn Fn(&[f64]) -> bool,
    bbox: &BoundingBox,
    samples: usize,
    c: f64,
) -> Result<EscapeReport> {
    let m = 2 * sys.n;
    if bbox.lo.len() != m || bbox.hi.len() != m {
        return Err(Error::Arity(format!("bounding box must have dimension {m}")));
    }
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let max_draws = samples.saturating_mul(1000).max(10_000);
    let mut x = vec![0.0; m];
    let mut accepted = 0;
    let mut min_bracket = f64::INFINITY;
    let mut draws = 0;
    while accepted < samples && draws < max_draws {
        draws += 1;
        for i in 0..m {
            x[i] = rng.random_range(bbox.lo[i]..=bbox.hi[i]);
        }
        if !region(&x) {
            continue;
        }
        accepted += 1;
        let dh = sys.gradient(&x)?;
        let dg = central_gradient(g, &x);
        let n = sys.n;
        // {H, G} = Σ ∂_p H ∂_q G − ∂_q H ∂_p G, the derivative of G along X_H
        let bracket: f64 = (0..n).map(|i| dh[n + i] * dg[i] - dh[i] * dg[n + i]).sum();
        min_bracket = min_bracket.min(bracket);
    }
    if accepted == 0 {
        return Err(Error::EmptyRegion { draws });
    }
    Ok(EscapeReport { min_bracket, accepted, pass: min_bracket >= c })
}
