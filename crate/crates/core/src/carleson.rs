//! Atomic measures on the upper half plane (0, oo) x (0, oo): exact
//! Carleson norms, balayage against the Poisson and heat kernels, and the
//! balayage-versus-BMO comparison.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{log_grid, SampledFunction};
use crate::kernels::{self, KernelPoint, PoissonMethod};
use crate::quad::QuadratureSpec;
use crate::spaces::{bmo_o_norm, IntervalFamily};

/// One weighted point mass at (y, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub y: f64,
    pub t: f64,
    pub w: f64,
}

/// A finite atomic measure on the open upper half plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        const CTX: &str = "carleson::DiscreteMeasure";
        for a in &atoms {
            if !(a.y.is_finite() && a.y > 0.0 && a.t.is_finite() && a.t > 0.0) {
                return Err(Error::domain(
                    CTX,
                    format!("atom position ({}, {}) must be finite and positive", a.y, a.t),
                ));
            }
            if !a.w.is_finite() {
                return Err(Error::domain(CTX, format!("atom weight {} must be finite", a.w)));
            }
        }
        Ok(DiscreteMeasure { atoms })
    }

    pub fn empty() -> Self {
        DiscreteMeasure { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.w.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { w: c * a.w, ..*a }).collect();
        DiscreteMeasure { atoms }
    }

    /// Concatenation; the measure mu1 + mu2.
    pub fn merged(&self, other: &DiscreteMeasure) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        DiscreteMeasure { atoms }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "y,t,w")?;
        for a in &self.atoms {
            writeln!(w, "{:.12e},{:.12e},{:.12e}", a.y, a.t, a.w)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        const CTX: &str = "carleson::read_csv";
        let mut atoms = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::usage(CTX, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('y') {
                continue;
            }
            let mut parts = line.split(',').map(|s| s.trim().parse::<f64>());
            let mut next = || {
                parts
                    .next()
                    .and_then(|p| p.ok())
                    .ok_or_else(|| Error::usage(CTX, format!("bad row {line}")))
            };
            atoms.push(Atom { y: next()?, t: next()?, w: next()? });
        }
        DiscreteMeasure::new(atoms)
    }
}

/// Exact Carleson norm of an atomic measure:
/// sup over bounded intervals I of |mu|(I x (0, |I|]) / |I|, with I
/// closed and the box top included.
///
/// For finitely many atoms the supremum is attained with I spanning a
/// run of consecutive atom positions and |I| equal to either the run's
/// y-span or the t of one of the covered atoms (shrinking past either
/// loses weight or is infeasible), so enumerating those candidates is
/// exact. Cost is cubic in the atom count.
pub fn carleson_norm(mu: &DiscreteMeasure) -> f64 {
    let mut pts: Vec<(f64, f64, f64)> = mu
        .atoms
        .iter()
        .filter(|a| a.w != 0.0)
        .map(|a| (a.y, a.t, a.w.abs()))
        .collect();
    pts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let n = pts.len();
    let mut best = 0.0f64;
    // ts holds the t values of the active window in increasing order,
    // cum the matching running weight totals.
    let mut ts: Vec<f64> = Vec::with_capacity(n);
    let mut cum: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        ts.clear();
        cum.clear();
        for j in i..n {
            let (yj, tj, wj) = pts[j];
            let pos = ts.partition_point(|&t| t <= tj);
            ts.insert(pos, tj);
            cum.insert(pos, wj);
            for k in pos..cum.len() {
                if k > 0 && k == pos {
                    cum[k] += cum[k - 1];
                } else if k > pos {
                    cum[k] += wj;
                }
            }
            let span = yj - pts[i].0;
            for k in 0..ts.len() {
                let len = ts[k].max(span);
                best = best.max(cum[k] / len);
            }
        }
    }
    best
}

/// Balayage of mu against the Poisson kernel at x:
/// the sum of w * P_t(x, y) over the atoms.
pub fn balayage_poisson(
    lambda: f64,
    mu: &DiscreteMeasure,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let mut acc = 0.0;
    for a in &mu.atoms {
        if a.w == 0.0 {
            continue;
        }
        let p = KernelPoint::new(lambda, x, a.y, a.t)?;
        acc += a.w * kernels::poisson_kernel(&p, spec, PoissonMethod::ThetaIntegral)?;
    }
    Ok(acc)
}

/// Balayage of mu against the heat kernel at x.
pub fn balayage_heat(
    lambda: f64,
    mu: &DiscreteMeasure,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let _ = spec;
    let mut acc = 0.0;
    for a in &mu.atoms {
        if a.w == 0.0 {
            continue;
        }
        let p = KernelPoint::new(lambda, x, a.y, a.t)?;
        acc += a.w * kernels::heat_kernel(&p)?;
    }
    Ok(acc)
}

/// Samples the Poisson balayage of mu on a log grid spanning the atoms,
/// estimates its oscillation norm, and compares with the Carleson norm.
/// Returns (bmo estimate, carleson norm, their ratio).
pub fn check_balayage_bmo(
    lambda: f64,
    mu: &DiscreteMeasure,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    if mu.atoms.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let y_min = mu.atoms.iter().map(|a| a.y).fold(f64::INFINITY, f64::min);
    let y_max = mu.atoms.iter().map(|a| a.y).fold(0.0f64, f64::max);
    let t_max = mu.atoms.iter().map(|a| a.t).fold(0.0f64, f64::max);
    let lo = (0.02 * y_min).max(1e-6);
    let hi = 4.0 * (y_max + t_max);
    let grid = log_grid(lo, hi, 240);
    let mut values = Vec::with_capacity(grid.len());
    for &x in &grid {
        values.push(balayage_poisson(lambda, mu, x, spec)?);
    }
    let sampled = SampledFunction::new(grid.clone(), values, hi)?;
    let family = IntervalFamily::from_grid(&grid)?;
    let bmo = bmo_o_norm(&sampled, &family)?;
    let cnorm = carleson_norm(mu);
    let ratio = if cnorm == 0.0 { 0.0 } else { bmo / cnorm };
    Ok((bmo, cnorm, ratio))
}
