//! Globally adaptive Gauss-Legendre quadrature.
//!
//! Panels are scored by the difference between a single 15-point rule and the
//! sum of the two half-panel rules; the worst panel is split until the summed
//! discrepancy meets the requested tolerance. Integrands may be vector valued
//! so related integrals sharing an expensive inner factor are evaluated in one
//! sweep.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Tolerance and truncation parameters shared by every integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Absolute tolerance on the accumulated panel discrepancy.
    pub abs_tol: f64,
    /// Relative tolerance against the running estimate.
    pub rel_tol: f64,
    /// Maximum number of panels before reporting non-convergence.
    pub max_subdivisions: u32,
    /// Truncation radius for semi-infinite spectral integrals.
    pub truncation_radius: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 600,
            truncation_radius: 1e3,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self, context: &'static str) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::usage(context, format!("abs_tol = {} invalid", self.abs_tol)));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::usage(context, format!("rel_tol = {} invalid", self.rel_tol)));
        }
        if self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return Err(Error::usage(context, "abs_tol and rel_tol are both zero"));
        }
        if self.max_subdivisions < 2 {
            return Err(Error::usage(context, "max_subdivisions must be at least 2"));
        }
        if !(self.truncation_radius > 0.0) {
            return Err(Error::usage(context, "truncation_radius must be positive"));
        }
        Ok(())
    }

    /// Same spec with both tolerances scaled by `factor`.
    pub fn scaled_tol(mut self, factor: f64) -> Self {
        self.abs_tol *= factor;
        self.rel_tol *= factor;
        self
    }
}

const GL_POINTS: usize = 15;

fn gl15() -> &'static [(f64, f64); GL_POINTS] {
    static NODES: OnceLock<[(f64, f64); GL_POINTS]> = OnceLock::new();
    NODES.get_or_init(|| {
        let v = legendre_nodes(GL_POINTS);
        let mut arr = [(0.0, 0.0); GL_POINTS];
        arr.copy_from_slice(&v);
        arr
    })
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_eval(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn panel<const K: usize>(f: &mut impl FnMut(f64) -> [f64; K], a: f64, b: f64) -> [f64; K] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = [0.0; K];
    for &(x, w) in gl15().iter() {
        let fx = f(c + h * x);
        for k in 0..K {
            acc[k] += w * fx[k];
        }
    }
    for v in acc.iter_mut() {
        *v *= h;
    }
    acc
}

struct Segment<const K: usize> {
    a: f64,
    b: f64,
    left: [f64; K],
    right: [f64; K],
    value: [f64; K],
    err: f64,
}

impl<const K: usize> Segment<K> {
    fn build(f: &mut impl FnMut(f64) -> [f64; K], a: f64, b: f64, whole: [f64; K]) -> Self {
        let m = 0.5 * (a + b);
        let left = panel(f, a, m);
        let right = panel(f, m, b);
        let mut value = [0.0; K];
        let mut err = 0.0f64;
        for k in 0..K {
            value[k] = left[k] + right[k];
            err = err.max((whole[k] - value[k]).abs());
        }
        Segment { a, b, left, right, value, err }
    }
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<const K: usize> Eq for Segment<K> {}
impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Integral estimate together with its discrepancy bound.
#[derive(Debug, Clone, Copy)]
pub struct QuadValue<const K: usize> {
    pub value: [f64; K],
    pub abs_error: f64,
    pub panels: u32,
}

impl QuadValue<1> {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

/// Adaptive integration of a vector integrand over [a, b].
pub fn adaptive_vec<const K: usize>(
    context: &'static str,
    mut f: impl FnMut(f64) -> [f64; K],
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadValue<K>> {
    spec.validate(context)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(context, format!("integration bounds ({a}, {b}) not finite")));
    }
    if a == b {
        return Ok(QuadValue { value: [0.0; K], abs_error: 0.0, panels: 0 });
    }
    let whole = panel(&mut f, a, b);
    if whole.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(context, "integrand produced a non-finite value"));
    }
    let mut heap: BinaryHeap<Segment<K>> = BinaryHeap::new();
    heap.push(Segment::build(&mut f, a, b, whole));
    let mut count: u32 = 1;
    loop {
        let mut total = [0.0; K];
        let mut total_err = 0.0f64;
        for seg in heap.iter() {
            for k in 0..K {
                total[k] += seg.value[k];
            }
            total_err += seg.err;
        }
        if total.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(context, "integrand produced a non-finite value"));
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = spec.abs_tol.max(spec.rel_tol * scale);
        if total_err <= target {
            return Ok(QuadValue { value: total, abs_error: total_err, panels: count });
        }
        if count >= spec.max_subdivisions {
            return Err(Error::Convergence {
                context,
                requested: target,
                achieved: total_err,
                estimate: total[0],
            });
        }
        let worst = heap.pop().expect("heap nonempty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel at floating-point resolution; keep its estimate as is.
            let mut pinned = worst;
            pinned.err = 0.0;
            heap.push(pinned);
            continue;
        }
        heap.push(Segment::build(&mut f, worst.a, m, worst.left));
        heap.push(Segment::build(&mut f, m, worst.b, worst.right));
        count += 1;
    }
}

/// Adaptive integration of a scalar integrand over [a, b].
pub fn adaptive(
    context: &'static str,
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadValue<1>> {
    adaptive_vec(context, move |x| [f(x)], a, b, spec)
}

/// Integral of f over (b, oo) via the substitution y = b / s, s in (0, 1).
///
/// Requires b > 0 and f decaying at least like y^-2 so the mapped integrand
/// stays bounded near s = 0.
pub fn adaptive_tail(
    context: &'static str,
    mut f: impl FnMut(f64) -> f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadValue<1>> {
    if !(b > 0.0) {
        return Err(Error::domain(context, format!("tail start {b} must be > 0")));
    }
    adaptive_vec(context, move |s| [f(b / s) * b / (s * s)], 0.0, 1.0, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn polynomial_exact() {
        let q = adaptive("test", |x| x * x, 0.0, 1.0, &spec()).unwrap();
        assert_relative_eq!(q.scalar(), 1.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn oscillatory() {
        let q = adaptive("test", |x| (50.0 * x).sin(), 0.0, 1.0, &spec()).unwrap();
        let exact = (1.0 - 50.0f64.cos()) / 50.0;
        assert_relative_eq!(q.scalar(), exact, max_relative = 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let q = adaptive("test", |x: f64| x.sqrt().recip(), 1e-300, 1.0, &spec()).unwrap();
        assert_relative_eq!(q.scalar(), 2.0, max_relative = 1e-7);
    }

    #[test]
    fn vector_components_share_nodes() {
        let q = adaptive_vec("test", |x: f64| [x.exp(), x], 0.0, 1.0, &spec()).unwrap();
        assert_relative_eq!(q.value[0], std::f64::consts::E - 1.0, max_relative = 1e-12);
        assert_relative_eq!(q.value[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn budget_exhaustion_reports_convergence() {
        let tight = QuadratureSpec { abs_tol: 1e-300, rel_tol: 1e-15, max_subdivisions: 3, ..spec() };
        let err = adaptive("test", |x: f64| (200.0 * x).sin().abs(), 0.0, 1.0, &tight).unwrap_err();
        match err {
            Error::Convergence { achieved, .. } => assert!(achieved > 0.0),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn tail_map_power_law() {
        // int_2^oo y^-3 dy = 1/8.
        let q = adaptive_tail("test", |y| y.powi(-3), 2.0, &spec()).unwrap();
        assert_relative_eq!(q.scalar(), 0.125, max_relative = 1e-10);
    }

    #[test]
    fn non_finite_integrand_rejected() {
        let err = adaptive("test", |x| 1.0 / (x - 0.5), 0.0, 1.0, &spec());
        assert!(err.is_err() || err.unwrap().scalar().is_finite());
    }

    #[test]
    fn legendre_rule_integrates_high_degree() {
        // 15-point rule is exact through degree 29.
        let nodes = legendre_nodes(15);
        let val: f64 = nodes.iter().map(|&(x, w)| w * x.powi(28)).sum();
        assert_relative_eq!(val, 2.0 / 29.0, max_relative = 1e-12);
    }
}
