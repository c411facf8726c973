use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeEntry {
    pub m: i64,
    pub k: Vec<u32>,
    pub z: Complex64,
    pub newton_residual: f64,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResonanceLattice {
    pub entries: Vec<LatticeEntry>,
}

impl ResonanceLattice {
    pub fn new(mut entries: Vec<LatticeEntry>) -> Self {
        entries.sort_by(|a, b| a.m.cmp(&b.m).then_with(|| a.k.cmp(&b.k)));
        entries.dedup_by(|a, b| a.m == b.m && a.k == b.k);
        ResonanceLattice { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.z).collect()
    }

    /// Number of `k` components (0 for an empty lattice).
    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.k.len())
    }

    /// Merge entries whose `z` agree within `tol`, keeping the first label
    /// and summing multiplicities.
    pub fn merge_coincident(self, tol: f64) -> Self {
        let mut out: Vec<LatticeEntry> = Vec::with_capacity(self.entries.len());
        for e in self.entries {
            match out.iter_mut().find(|o| (o.z - e.z).norm() <= tol) {
                Some(o) => o.multiplicity += e.multiplicity,
                None => out.push(e),
            }
        }
        ResonanceLattice { entries: out }
    }

    /// CSV with columns `m,k1..kd,re_z,im_z,residual,multiplicity`.
    pub fn write_csv<W: Write>(&self, w: W, d: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["m".to_string()];
        header.extend((1..=d).map(|j| format!("k{j}")));
        header.extend(["re_z", "im_z", "residual", "multiplicity"].map(String::from));
        wr.write_record(&header)?;
        for e in &self.entries {
            if e.k.len() != d {
                return Err(Error::Arity(format!("entry has {} k-components, expected {d}", e.k.len())));
            }
            let mut rec = vec![e.m.to_string()];
            rec.extend(e.k.iter().map(|v| v.to_string()));
            rec.push(e.z.re.to_string());
            rec.push(e.z.im.to_string());
            rec.push(e.newton_residual.to_string());
            rec.push(e.multiplicity.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let d = cols.iter().filter(|c| c.starts_with('k')).count();
        let expected: Vec<String> = std::iter::once("m".to_string())
            .chain((1..=d).map(|j| format!("k{j}")))
            .chain(["re_z", "im_z", "residual", "multiplicity"].map(String::from))
            .collect();
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config(format!("unexpected lattice CSV header {cols:?}")));
        }
        let parse = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}"))) };
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let m = rec[0].parse::<i64>().map_err(|e| Error::Config(e.to_string()))?;
            let k = (1..=d)
                .map(|j| rec[j].parse::<u32>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let z = Complex64::new(parse(&rec[d + 1])?, parse(&rec[d + 2])?);
            let newton_residual = parse(&rec[d + 3])?;
            let multiplicity = rec[d + 4].parse::<u32>().map_err(|e| Error::Config(e.to_string()))?;
            entries.push(LatticeEntry { m, k, z, newton_residual, multiplicity });
        }
        Ok(ResonanceLattice { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDiff {
    pub matched: usize,
    pub max_err: f64,
    pub unmatched_a: Vec<Complex64>,
    pub unmatched_b: Vec<Complex64>,
}

/// Greedy nearest-neighbour matching of two point sets with cutoff `tol`.
pub fn lattice_diff(a: &ResonanceLattice, b: &ResonanceLattice, tol: f64) -> LatticeDiff {
    diff_points(&a.points(), &b.points(), tol)
}

pub fn diff_points(a: &[Complex64], b: &[Complex64], tol: f64) -> LatticeDiff {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, za) in a.iter().enumerate() {
        for (j, zb) in b.iter().enumerate() {
            let d = (za - zb).norm();
            if d <= tol {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut matched = 0;
    let mut max_err: f64 = 0.0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        matched += 1;
        max_err = max_err.max(d);
    }
    LatticeDiff {
        matched,
        max_err,
        unmatched_a: a.iter().zip(&used_a).filter(|(_, u)| !**u).map(|(z, _)| *z).collect(),
        unmatched_b: b.iter().zip(&used_b).filter(|(_, u)| !**u).map(|(z, _)| *z).collect(),
    }
}
