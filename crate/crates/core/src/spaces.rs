//! Oscillation norms on (0, oo): the two-condition BMO_o estimator, its
//! Poisson-semigroup variant, odd extensions and mean-zero atoms, and the
//! square-function measure whose Carleson norm tracks BMO_o.

use std::io::Write;

use crate::carleson::{Atom, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::grid::{check_out_grid, SampledFunction, Tail};
use crate::quad::QuadratureSpec;
use crate::semigroup::PoissonField;

const CTX: &str = "spaces";

/// Cap on candidate interval pairs when a family is built from a grid.
pub const MAX_PAIRS: usize = 200_000;

/// Candidate intervals and prefixes over which the BMO suprema are taken.
/// The estimators approximate the continuum supremum from below, so a
/// larger family can only raise the reported norm.
#[derive(Debug, Clone)]
pub struct IntervalFamily {
    intervals: Vec<(f64, f64)>,
    prefixes: Vec<f64>,
}

impl IntervalFamily {
    /// Explicit family. Intervals need 0 <= a < b finite; prefixes must be
    /// positive, finite and strictly increasing.
    pub fn new(intervals: Vec<(f64, f64)>, prefixes: Vec<f64>) -> Result<Self> {
        for &(a, b) in &intervals {
            if !(a >= 0.0 && a < b) || !b.is_finite() {
                return Err(Error::usage(CTX, "intervals need 0 <= a < b finite"));
            }
        }
        if !prefixes.iter().all(|p| p.is_finite() && *p > 0.0)
            || !prefixes.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::usage(
                CTX,
                "prefixes must be positive, finite and strictly increasing",
            ));
        }
        Ok(Self { intervals, prefixes })
    }

    /// All pairs of grid points, thinned by a deterministic stride until the
    /// pair count fits the cap. The final grid point always stays a pair
    /// endpoint and every grid point stays a prefix candidate.
    pub fn from_grid(grid: &[f64]) -> Result<Self> {
        check_out_grid(CTX, grid)?;
        // largest m with m(m-1)/2 <= MAX_PAIRS, one slot reserved for the
        // forced final point
        let m = ((1.0 + (1.0 + 8.0 * MAX_PAIRS as f64).sqrt()) / 2.0).floor() as usize;
        let stride = grid.len().div_ceil(m - 1).max(1);
        let mut pts: Vec<f64> = grid.iter().copied().step_by(stride).collect();
        let last = grid[grid.len() - 1];
        if *pts.last().unwrap() != last {
            pts.push(last);
        }
        let mut intervals = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
        for i in 0..pts.len() {
            for &b in &pts[i + 1..] {
                intervals.push((pts[i], b));
            }
        }
        Ok(Self { intervals, prefixes: grid.to_vec() })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn prefixes(&self) -> &[f64] {
        &self.prefixes
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty() && self.prefixes.is_empty()
    }
}

/// Discretized BMO_o norm: the larger of the mean-oscillation supremum over
/// the candidate intervals and the prefix-average supremum over the
/// candidate right endpoints. Both integrals are exact for the piecewise
/// linear interpolant, so the result is the true supremum restricted to the
/// family and a lower bound for the continuum norm.
pub fn bmo_o_norm(f: &SampledFunction, family: &IntervalFamily) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::usage(CTX, "empty candidate family"));
    }
    let mut best = 0.0f64;
    for &(a, b) in family.intervals() {
        let len = b - a;
        let mean = f.integrate_between(a, b) / len;
        best = best.max(f.integrate_abs_dev(a, b, mean) / len);
    }
    let mut run = 0.0;
    let mut prev = 0.0;
    for &a in family.prefixes() {
        run += f.integrate_abs_dev(prev, a, 0.0);
        prev = a;
        best = best.max(run / a);
    }
    Ok(best)
}

/// Strips per candidate interval in the semigroup comparison integral.
const PLAMBDA_STRIPS: usize = 24;

/// Discretized semigroup BMO norm: supremum over the candidate intervals of
/// the mean distance between f and its Poisson extension evaluated at
/// height |I|. Interval integrals use midpoint strips; the prefix
/// candidates of the family play no role here.
pub fn bmo_plambda_norm(
    lambda: f64,
    f: &SampledFunction,
    family: &IntervalFamily,
    spec: QuadratureSpec,
) -> Result<f64> {
    if family.intervals().is_empty() {
        return Err(Error::usage(CTX, "no candidate intervals"));
    }
    check_weighted_integrability(f)?;
    let field = PoissonField::new(lambda, f.clone(), spec)?;
    let mut best = 0.0f64;
    for &(a, b) in family.intervals() {
        let len = b - a;
        let h = len / PLAMBDA_STRIPS as f64;
        let mut acc = 0.0;
        for k in 0..PLAMBDA_STRIPS {
            let x = a + (k as f64 + 0.5) * h;
            acc += (f.value_at(x) - field.eval(x, len)?.value).abs();
        }
        best = best.max(acc / PLAMBDA_STRIPS as f64);
    }
    Ok(best)
}

/// The estimators need f integrable against (1+x)^-2. Sampled values make
/// that automatic on the grid range; a power tail must decay fast enough
/// for the weighted integral to converge.
fn check_weighted_integrability(f: &SampledFunction) -> Result<()> {
    if let Tail::Power { coeff, exponent } = f.tail() {
        if coeff != 0.0 && exponent >= 1.0 {
            return Err(Error::domain(
                CTX,
                "power tail with exponent >= 1 is not integrable against (1+x)^-2",
            ));
        }
    }
    Ok(())
}

/// Odd reflection across the origin, f_o(-x) = -f_o(x).
#[derive(Debug, Clone)]
pub struct OddExtension {
    f: SampledFunction,
}

pub fn odd_extension(f: &SampledFunction) -> OddExtension {
    OddExtension { f: f.clone() }
}

impl OddExtension {
    pub fn value_at(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.f.value_at(x)
        } else if x < 0.0 {
            -self.f.value_at(-x)
        } else {
            0.0
        }
    }

    /// Symmetric grid: negated mirror, the origin, then the original.
    pub fn grid(&self) -> Vec<f64> {
        let g = self.f.grid();
        let mut out = Vec::with_capacity(2 * g.len() + 1);
        out.extend(g.iter().rev().map(|y| -y));
        out.push(0.0);
        out.extend_from_slice(g);
        out
    }

    /// Values of the extension on `grid()`.
    pub fn values(&self) -> Vec<f64> {
        self.grid().iter().map(|&x| self.value_at(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OddAtomKind {
    Step,
    Oscillating,
}

/// Building block for decompositions of odd boundary functions: either the
/// normalized step (1/delta) chi_(0,delta), or a mean-zero piece supported
/// inside an interval with sup norm at most 1/|interval|.
#[derive(Debug, Clone)]
pub struct OddAtom {
    kind: OddAtomKind,
    interval: (f64, f64),
    payload: SampledFunction,
}

impl OddAtom {
    /// The normalized step on (0, delta), sampled on `grid`.
    pub fn step(delta: f64, grid: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::domain(CTX, "step width must be positive and finite"));
        }
        let payload = SampledFunction::indicator(0.0, delta, grid, delta)?.scaled(1.0 / delta);
        let atom = Self { kind: OddAtomKind::Step, interval: (0.0, delta), payload };
        atom.validate()?;
        Ok(atom)
    }

    /// A mean-zero piece supported inside `interval`.
    pub fn oscillating(interval: (f64, f64), payload: SampledFunction) -> Result<Self> {
        if !(interval.0 >= 0.0 && interval.0 < interval.1) || !interval.1.is_finite() {
            return Err(Error::domain(CTX, "interval needs 0 <= a < b finite"));
        }
        let atom = Self { kind: OddAtomKind::Oscillating, interval, payload };
        atom.validate()?;
        Ok(atom)
    }

    pub fn kind(&self) -> OddAtomKind {
        self.kind
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn payload(&self) -> &SampledFunction {
        &self.payload
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.interval;
        let p = &self.payload;
        match self.kind {
            OddAtomKind::Step => {
                let delta = b - a;
                let height = 1.0 / delta;
                if a != 0.0 || p.support_bound() != delta || p.tail() != Tail::Zero {
                    return Err(Error::domain(CTX, "step payload must live on (0, delta)"));
                }
                for (g, v) in p.grid().iter().zip(p.values().iter()) {
                    let want = if *g > 0.0 && *g < delta { height } else { 0.0 };
                    if (*v - want).abs() > 1e-12 * height {
                        return Err(Error::domain(
                            CTX,
                            "step payload must equal (1/delta) chi_(0,delta)",
                        ));
                    }
                }
            }
            OddAtomKind::Oscillating => {
                if p.tail() != Tail::Zero {
                    return Err(Error::domain(CTX, "oscillating payload must have compact support"));
                }
                if p.values()[0] != 0.0 || p.grid()[0] < a || p.support_bound() > b {
                    return Err(Error::domain(CTX, "payload support must lie inside the interval"));
                }
                if p.integrate_between(0.0, b).abs() > 1e-10 {
                    return Err(Error::domain(CTX, "oscillating payload must have zero mean"));
                }
                let sb = p.support_bound();
                let mut sup = 0.0f64;
                for (g, v) in p.grid().iter().zip(p.values().iter()) {
                    if *g <= sb {
                        sup = sup.max(v.abs());
                    } else {
                        // the cell cut at the support bound is still reachable
                        sup = sup.max(p.value_at(sb).abs());
                        break;
                    }
                }
                if sup > (1.0 + 1e-12) / (b - a) {
                    return Err(Error::domain(CTX, "payload sup norm exceeds 1/|interval|"));
                }
            }
        }
        Ok(())
    }
}

/// Cell-center discretization of the square-function measure
/// t |d_t u(y, t)|^2 dy dt attached to f: one atom per cell of the
/// (y, t) mesh, weight taken at the cell center.
pub fn theorem_a_measure(
    lambda: f64,
    f: &SampledFunction,
    y_grid: &[f64],
    t_grid: &[f64],
    spec: QuadratureSpec,
) -> Result<DiscreteMeasure> {
    check_out_grid(CTX, y_grid)?;
    check_out_grid(CTX, t_grid)?;
    check_weighted_integrability(f)?;
    let tail_zero = match f.tail() {
        Tail::Zero => true,
        Tail::Power { coeff, .. } => coeff == 0.0,
    };
    if tail_zero && f.values().iter().all(|v| *v == 0.0) {
        return Ok(DiscreteMeasure::empty());
    }
    let field = PoissonField::new(lambda, f.clone(), spec)?;
    let mut atoms = Vec::with_capacity((y_grid.len() - 1) * (t_grid.len() - 1));
    for wy in y_grid.windows(2) {
        let yc = 0.5 * (wy[0] + wy[1]);
        let dy = wy[1] - wy[0];
        for wt in t_grid.windows(2) {
            let tc = 0.5 * (wt[0] + wt[1]);
            let v = field.eval(yc, tc)?;
            atoms.push(Atom { y: yc, t: tc, w: tc * v.dt * v.dt * dy * (wt[1] - wt[0]) });
        }
    }
    DiscreteMeasure::new(atoms)
}

/// Row of the norm comparison report.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub function_id: String,
    pub bmo_o: f64,
    pub bmo_plambda: f64,
    pub sqrt_carleson_mu_f: f64,
}

/// One CSV row per function with the three norm figures.
pub fn write_norm_reports(w: &mut impl Write, rows: &[NormReport]) -> std::io::Result<()> {
    writeln!(w, "function_id,bmo_o,bmo_plambda,sqrt_carleson_mu_f")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.12e},{:.12e},{:.12e}",
            r.function_id, r.bmo_o, r.bmo_plambda, r.sqrt_carleson_mu_f
        )?;
    }
    Ok(())
}
