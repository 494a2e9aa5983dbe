//! Poisson and heat semigroups applied to sampled functions, plus the
//! square function, tent functionals, and the identity checks built on them.
//!
//! The workhorse is [`PoissonField`]: the harmonic extension u(y, t) of a
//! sampled boundary function together with du/dt and the twisted space
//! derivative, computed in one kernel pass per quadrature node and cached
//! per evaluation point.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::grid::{self, SampledFunction, Tail};
use crate::kernels::{self, KernelPoint, PoissonMethod};
use crate::quad::{self, QuadratureSpec};

/// Extension values at one point of the upper half plane.
#[derive(Debug, Clone, Copy)]
pub struct FieldValues {
    /// u(y, t)
    pub value: f64,
    /// du/dt
    pub dt: f64,
    /// D_lambda u in the space variable
    pub dlam: f64,
}

const ZERO_FIELD: FieldValues = FieldValues { value: 0.0, dt: 0.0, dlam: 0.0 };

/// Poisson extension of a sampled function, with derivatives.
///
/// Evaluation integrates the kernel triple against the interpolant of `f`
/// with a composite Gauss rule on panels whose width tracks the local
/// kernel scale max(t, |s - y|), then adds the analytic power tail when
/// `f` carries one. Panels live between curvature knots of the input, a
/// simplified subset of the sample grid: densely sampled smooth data
/// collapses to a few knots instead of forcing a panel per sample, while
/// corners and jumps keep their exact positions. Results are cached by
/// evaluation point, so sweeps that revisit (y, t) pairs (tables, nested
/// refinements) pay for each point once.
pub struct PoissonField {
    lambda: f64,
    f: SampledFunction,
    /// Interpolant corners as (position, deviation / significance threshold).
    corners: Vec<(f64, f64)>,
    gl: Vec<(f64, f64)>,
    panel_spec: QuadratureSpec,
    zero: bool,
    cache: Mutex<HashMap<(u64, u64), FieldValues>>,
}

impl PoissonField {
    pub fn new(lambda: f64, f: SampledFunction, spec: QuadratureSpec) -> Result<Self> {
        const CTX: &str = "semigroup::PoissonField";
        spec.validate(CTX)?;
        // Validates lambda through the same gate the kernels use.
        KernelPoint::new(lambda, 1.0, 1.0, 1.0)?;
        let zero = f.values().iter().all(|v| *v == 0.0)
            && match f.tail() {
                Tail::Zero => true,
                Tail::Power { coeff, .. } => coeff == 0.0,
            };
        let b = f.support_bound();
        let g = f.grid();
        let mut corners = corner_knots(&f, 5e-6);
        // The ends of the sample grid switch the extension rule, so they
        // are corners of unknown strength: always align with them.
        corners.push((g[0], f64::INFINITY));
        corners.push((g[g.len() - 1], f64::INFINITY));
        corners.retain(|&(p, _)| p > 0.0 && p < b);
        corners.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        // The inner kernel quadratures cannot usefully resolve below their
        // own round-off, so the tolerances passed down are floored.
        let panel_spec = QuadratureSpec {
            abs_tol: spec.abs_tol.max(1e-11),
            rel_tol: spec.rel_tol.max(1e-8),
            ..spec
        };
        Ok(PoissonField {
            lambda,
            f,
            corners,
            gl: quad::legendre_nodes(7),
            panel_spec,
            zero,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn function(&self) -> &SampledFunction {
        &self.f
    }

    pub fn eval(&self, y: f64, t: f64) -> Result<FieldValues> {
        const CTX: &str = "semigroup::PoissonField";
        for (name, v) in [("y", y), ("t", t)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(CTX, format!("{name} = {v} must be finite and > 0")));
            }
        }
        let key = (y.to_bits(), t.to_bits());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let out = self.eval_uncached(y, t)?;
        self.cache.lock().unwrap().insert(key, out);
        Ok(out)
    }

    fn eval_uncached(&self, y: f64, t: f64) -> Result<FieldValues> {
        if self.zero {
            return Ok(ZERO_FIELD);
        }
        let b = self.f.support_bound();
        let mut edges = scale_panels(0.0, b, y, t)?;
        // Unaligned panels integrate the mean chord deflection of a run of
        // corners exactly, so dense mild-corner sets are ignorable noise.
        // Alignment is bought only for strong corners, discounted by their
        // distance from the kernel peak.
        let mut extra = 0usize;
        for &(p, ratio) in &self.corners {
            if ratio > 100.0 * (1.0 + (p - y).abs() / (3.0 * t)) {
                edges.push(p);
                extra += 1;
            }
        }
        if extra > 0 {
            edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
            edges.dedup_by(|p, q| (*p - *q).abs() <= 1e-13 * b.max(1.0));
        }
        let mut acc = [0.0f64; 3];
        for w in edges.windows(2) {
            self.panel_triple(y, t, w[0], w[1], &mut acc)?;
        }
        if let Tail::Power { coeff, exponent } = self.f.tail() {
            let part = self.tail_triple(y, t, coeff, exponent)?;
            for k in 0..3 {
                acc[k] += part[k];
            }
        }
        Ok(FieldValues { value: acc[0], dt: acc[1], dlam: acc[2] })
    }

    /// Gauss pass over one panel.
    fn panel_triple(&self, y: f64, t: f64, l: f64, r: f64, acc: &mut [f64; 3]) -> Result<()> {
        let half = 0.5 * (r - l);
        let mid = 0.5 * (l + r);
        if half <= 0.0 {
            return Ok(());
        }
        for &(xn, wn) in &self.gl {
            let s = mid + half * xn;
            let fs = self.f.value_at(s);
            if fs == 0.0 {
                continue;
            }
            let p = KernelPoint::new(self.lambda, y, s, t)?;
            let k = kernels::poisson_kernel_triple(&p, &self.panel_spec)?;
            let c = fs * wn * half;
            acc[0] += k.value * c;
            acc[1] += k.dt * c;
            acc[2] += k.dlam_x * c;
        }
        Ok(())
    }

    /// Contribution of the power tail, mapped onto (0, 1) by s = b / w.
    fn tail_triple(&self, y: f64, t: f64, coeff: f64, exponent: f64) -> Result<[f64; 3]> {
        const CTX: &str = "semigroup::PoissonField";
        if coeff == 0.0 {
            return Ok([0.0; 3]);
        }
        let b = self.f.support_bound();
        let mut first_err: Option<Error> = None;
        let out = quad::adaptive_vec::<3>(
            CTX,
            |w| {
                let s = b / w;
                if !s.is_finite() {
                    // Far enough out that the kernel factor has decayed.
                    return [0.0; 3];
                }
                let fs = coeff * s.powf(exponent) * b / (w * w);
                match KernelPoint::new(self.lambda, y, s, t)
                    .and_then(|p| kernels::poisson_kernel_triple(&p, &self.panel_spec))
                {
                    Ok(k) => [k.value * fs, k.dt * fs, k.dlam_x * fs],
                    Err(e) => {
                        first_err.get_or_insert(e);
                        [f64::NAN; 3]
                    }
                }
            },
            0.0,
            1.0,
            &self.panel_spec,
        );
        if let Some(e) = first_err {
            return Err(e);
        }
        Ok(out?.value)
    }
}

/// Grid points where the interpolant has a significant corner: the local
/// deviation from the chord through the neighbours exceeds
/// tol * (|value| + 0.01 sup). Returns (position, deviation / threshold);
/// the ratio lets evaluation weigh a corner against its distance from the
/// kernel peak. Elsewhere the sample kinks perturb any smooth model of
/// the data by less than tol, so unaligned panels lose nothing.
fn corner_knots(f: &SampledFunction, tol: f64) -> Vec<(f64, f64)> {
    let g = f.grid();
    let v = f.values();
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sup == 0.0 {
        return Vec::new();
    }
    let floor = 0.01 * sup;
    let mut out = Vec::new();
    for i in 1..g.len() - 1 {
        let h0 = g[i] - g[i - 1];
        let h1 = g[i + 1] - g[i];
        let chord = (v[i - 1] * h1 + v[i + 1] * h0) / (h0 + h1);
        let base = tol * (v[i].abs() + floor);
        let ratio = (v[i] - chord).abs() / base;
        if ratio > 1.0 {
            out.push((g[i], ratio));
        }
    }
    out
}

/// Panel edges across [l, r] whose width tracks the local Poisson kernel
/// scale max(t, |s - y|): fine near the peak, geometrically coarser away
/// from it, so the count grows like log(range / t).
pub(crate) fn scale_panels(l: f64, r: f64, y: f64, t: f64) -> Result<Vec<f64>> {
    const CTX: &str = "semigroup::PoissonField";
    const REFINE: f64 = 3.0;
    const GUARD: usize = 4000;
    let anchor = y.clamp(l, r);
    let mut down = vec![anchor];
    let mut s = anchor;
    let mut n = 0usize;
    while s > l {
        n += 1;
        if n > GUARD {
            return Err(Error::range(CTX, "panel count overflow: t too small for the span"));
        }
        s = (s - (y - s).abs().max(t) / REFINE).max(l);
        down.push(s);
    }
    down.reverse();
    let mut edges = down;
    s = anchor;
    n = 0;
    while s < r {
        n += 1;
        if n > GUARD {
            return Err(Error::range(CTX, "panel count overflow: t too small for the span"));
        }
        s = (s + (s - y).abs().max(t) / REFINE).min(r);
        edges.push(s);
    }
    Ok(edges)
}

/// Panel edges for integrating a kernel against `f` over (0, support]:
/// the interpolation kinks (thinned when the grid is dense, where the
/// interpolant is smooth anyway) plus the boundary of a kernel peak zone.
fn integration_edges(f: &SampledFunction, zone: Option<(f64, f64)>) -> Vec<f64> {
    const MAX_KINKS: usize = 24;
    let b = f.support_bound();
    let mut edges = vec![0.0, b];
    let interior: Vec<f64> = f.grid().iter().copied().filter(|&p| p < b).collect();
    if interior.len() <= MAX_KINKS {
        edges.extend_from_slice(&interior);
    } else {
        let stride = (interior.len() + MAX_KINKS - 1) / MAX_KINKS;
        edges.extend(interior.iter().copied().step_by(stride));
    }
    if let Some((lo, hi)) = zone {
        let lo = lo.max(0.0);
        let hi = hi.min(b);
        if lo < hi {
            if lo > 0.0 {
                edges.push(lo);
            }
            if hi < b {
                edges.push(hi);
            }
        }
    }
    edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let scale = b.max(1.0);
    edges.dedup_by(|p, q| (*p - *q).abs() <= 1e-12 * scale);
    edges
}

#[derive(Clone, Copy)]
enum FieldComponent {
    Value,
    Dt,
    Dlam,
}

fn apply_poisson_component(
    lambda: f64,
    t: f64,
    f: &SampledFunction,
    out_grid: &[f64],
    spec: &QuadratureSpec,
    comp: FieldComponent,
) -> Result<SampledFunction> {
    const CTX: &str = "semigroup::apply_poisson";
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(CTX, format!("t = {t} must be finite and > 0")));
    }
    grid::check_out_grid(CTX, out_grid)?;
    let field = PoissonField::new(lambda, f.clone(), *spec)?;
    let mut values = Vec::with_capacity(out_grid.len());
    for &x in out_grid {
        let v = field.eval(x, t)?;
        values.push(match comp {
            FieldComponent::Value => v.value,
            FieldComponent::Dt => v.dt,
            FieldComponent::Dlam => v.dlam,
        });
    }
    let support = *out_grid.last().unwrap();
    SampledFunction::new(out_grid.to_vec(), values, support)
}

/// P_t f on `out_grid`. The result is truncated at the last output point;
/// the true extension continues beyond it.
pub fn apply_poisson(
    lambda: f64,
    t: f64,
    f: &SampledFunction,
    out_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<SampledFunction> {
    apply_poisson_component(lambda, t, f, out_grid, spec, FieldComponent::Value)
}

/// d/dt of P_t f on `out_grid`.
pub fn apply_poisson_dt(
    lambda: f64,
    t: f64,
    f: &SampledFunction,
    out_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<SampledFunction> {
    apply_poisson_component(lambda, t, f, out_grid, spec, FieldComponent::Dt)
}

/// Twisted space derivative D_lambda of P_t f on `out_grid`.
pub fn apply_poisson_dlam(
    lambda: f64,
    t: f64,
    f: &SampledFunction,
    out_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<SampledFunction> {
    apply_poisson_component(lambda, t, f, out_grid, spec, FieldComponent::Dlam)
}

fn heat_against_f(
    lambda: f64,
    f: &SampledFunction,
    x: f64,
    t: f64,
    a: f64,
    c: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    const CTX: &str = "semigroup::apply_heat";
    let mut first_err: Option<Error> = None;
    let out = quad::adaptive(
        CTX,
        |s| {
            let fs = f.value_at(s);
            if fs == 0.0 {
                return 0.0;
            }
            match KernelPoint::new(lambda, x, s, t).and_then(|p| kernels::heat_kernel(&p)) {
                Ok(w) => w * fs,
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        a,
        c,
        spec,
    );
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(out?.scalar())
}

fn heat_tail(
    lambda: f64,
    f: &SampledFunction,
    x: f64,
    t: f64,
    coeff: f64,
    exponent: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    const CTX: &str = "semigroup::apply_heat";
    if coeff == 0.0 {
        return Ok(0.0);
    }
    let b = f.support_bound();
    let mut first_err: Option<Error> = None;
    let out = quad::adaptive(
        CTX,
        |w| {
            let s = b / w;
            if !s.is_finite() {
                return 0.0;
            }
            let fs = coeff * s.powf(exponent) * b / (w * w);
            match KernelPoint::new(lambda, x, s, t).and_then(|p| kernels::heat_kernel(&p)) {
                Ok(k) => k * fs,
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        1.0,
        spec,
    );
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(out?.scalar())
}

/// W_t f on `out_grid`, honoring a power tail of `f` analytically.
pub fn apply_heat(
    lambda: f64,
    t: f64,
    f: &SampledFunction,
    out_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<SampledFunction> {
    const CTX: &str = "semigroup::apply_heat";
    spec.validate(CTX)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(CTX, format!("t = {t} must be finite and > 0")));
    }
    grid::check_out_grid(CTX, out_grid)?;
    KernelPoint::new(lambda, 1.0, 1.0, 1.0)?;
    let sigma = t.sqrt();
    let mut values = Vec::with_capacity(out_grid.len());
    for &x in out_grid {
        let edges = integration_edges(f, Some((x - 8.0 * sigma, x + 8.0 * sigma)));
        let mut acc = 0.0;
        for w in edges.windows(2) {
            acc += heat_against_f(lambda, f, x, t, w[0], w[1], spec)?;
        }
        if let Tail::Power { coeff, exponent } = f.tail() {
            acc += heat_tail(lambda, f, x, t, coeff, exponent, spec)?;
        }
        values.push(acc);
    }
    let support = *out_grid.last().unwrap();
    SampledFunction::new(out_grid.to_vec(), values, support)
}

/// The Poisson kernel evaluated directly and through the subordination
/// formula P_t = (2/sqrt pi) int_0^inf e^(-v^2) W_(t^2/(4 v^2)) dv.
/// Returns (direct, subordinated).
pub fn subordination_check(p: &KernelPoint, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    const CTX: &str = "semigroup::subordination_check";
    spec.validate(CTX)?;
    let lhs = kernels::poisson_kernel(p, spec, PoissonMethod::ThetaIntegral)?;
    // e^(-v_max^2) below tolerance; the heat factor is bounded on the range.
    let tol = spec.abs_tol.clamp(1e-16, 1e-6);
    let v_max = (1.0 / tol).ln().sqrt() + 1.0;
    let mut first_err: Option<Error> = None;
    let out = quad::adaptive(
        CTX,
        |v| {
            let th = p.t * p.t / (4.0 * v * v);
            if !th.is_finite() {
                return 0.0;
            }
            match KernelPoint::new(p.lambda, p.x, p.y, th).and_then(|hp| kernels::heat_kernel(&hp)) {
                Ok(w) => (-v * v).exp() * w,
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        v_max,
        spec,
    );
    if let Some(e) = first_err {
        return Err(e);
    }
    let rhs = 2.0 / std::f64::consts::PI.sqrt() * out?.scalar();
    Ok((lhs, rhs))
}

/// Gauss nodes of a log-spaced composite rule on [t_lo, t_hi], returned as
/// (t, weight) with the dt Jacobian folded into the weight.
fn log_time_nodes(t_lo: f64, t_hi: f64, max_width: f64, nodes: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let n = (((b - a) / max_width).ceil() as usize).max(1);
    let h = (b - a) / n as f64;
    let mut out = Vec::with_capacity(n * nodes.len());
    for k in 0..n {
        let c = a + (k as f64 + 0.5) * h;
        for &(xi, w) in nodes {
            let t = (c + 0.5 * h * xi).exp();
            out.push((t, w * 0.5 * h * t));
        }
    }
    out
}

/// Uniform table of (du/dt, D_lambda u) in y at a fixed height, linearly
/// interpolated. Keeps the y-quadrature in `reproducing_check` from
/// re-deriving the field at every output point.
struct GradientTable {
    y0: f64,
    dy: f64,
    y_max: f64,
    dt: Vec<f64>,
    dlam: Vec<f64>,
}

impl GradientTable {
    fn build(field: &PoissonField, y0: f64, y1: f64, dy: f64, t: f64) -> Result<Self> {
        let n = (((y1 - y0) / dy).ceil() as usize).max(1) + 1;
        let dy = (y1 - y0) / (n - 1) as f64;
        let mut dt = Vec::with_capacity(n);
        let mut dlam = Vec::with_capacity(n);
        for i in 0..n {
            let v = field.eval(y0 + i as f64 * dy, t)?;
            dt.push(v.dt);
            dlam.push(v.dlam);
        }
        Ok(GradientTable { y0, dy, y_max: y1, dt, dlam })
    }

    fn at(&self, y: f64) -> (f64, f64) {
        let s = (y - self.y0) / self.dy;
        if s <= 0.0 {
            return (self.dt[0], self.dlam[0]);
        }
        let i = s as usize;
        if i + 1 >= self.dt.len() {
            return (*self.dt.last().unwrap(), *self.dlam.last().unwrap());
        }
        let frac = s - i as f64;
        (
            self.dt[i] + (self.dt[i + 1] - self.dt[i]) * frac,
            self.dlam[i] + (self.dlam[i + 1] - self.dlam[i]) * frac,
        )
    }
}

/// One composite panel strip of the flux integrand
/// dP/dt(x, y) du/dt(y, t) + D_lambda P(x, y) D_lambda u(y, t) over [a, b].
fn flux_segment(
    lambda: f64,
    x: f64,
    t: f64,
    a: f64,
    b: f64,
    n: usize,
    nodes: &[(f64, f64)],
    table: &GradientTable,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(b > a) || n == 0 {
        return Ok(0.0);
    }
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let c = a + (k as f64 + 0.5) * h;
        for &(xi, w) in nodes {
            let yy = c + 0.5 * h * xi;
            let p = KernelPoint::new(lambda, x, yy, t)?;
            let tr = kernels::poisson_kernel_triple(&p, spec)?;
            let (udt, udl) = table.at(yy);
            acc += w * 0.5 * h * (tr.dt * udt + tr.dlam_y * udl);
        }
    }
    Ok(acc)
}

/// Relative L2 defect of the gradient reproducing identity
/// f = 2 int int t grad P_t(x, y) . grad u(y, t) dy dt with the time
/// integral truncated to [eps, 1/eps]. The defect is measured on a window
/// covering where |f| exceeds 1e-3 of its sup, and decreases as eps does.
pub fn reproducing_check(
    lambda: f64,
    f: &SampledFunction,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    const CTX: &str = "semigroup::reproducing_check";
    spec.validate(CTX)?;
    if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
        return Err(Error::usage(CTX, format!("eps = {eps} must lie in (0, 1)")));
    }
    let sup = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return Ok(0.0);
    }
    let gpts = f.grid();
    let mut lo = gpts[gpts.len() - 1];
    let mut hi = gpts[0];
    for (g, v) in gpts.iter().zip(f.values()) {
        if v.abs() >= 1e-3 * sup {
            lo = lo.min(*g);
            hi = hi.max(*g);
        }
    }
    let width = (hi - lo).max(0.05 * hi);
    let x_grid = grid::lin_grid((lo - 0.1 * width).max(0.3 * lo), hi + 0.1 * width, 25);

    let field = PoissonField::new(lambda, f.clone(), *spec)?;
    let gl7 = quad::legendre_nodes(7);
    let gl15 = quad::legendre_nodes(15);
    let t_nodes = log_time_nodes(eps, 1.0 / eps, 0.35, &gl7);

    let y_floor = gpts[0].min(0.02);
    let mut tables = Vec::with_capacity(t_nodes.len());
    for &(t, _) in &t_nodes {
        let y_max = hi + 1.5 + t.min(3.0);
        let dy = (t / 10.0).min(0.25);
        tables.push(GradientTable::build(&field, y_floor, y_max, dy, t)?);
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for &x in &x_grid {
        let mut acc = 0.0;
        for (&(t, wt), table) in t_nodes.iter().zip(&tables) {
            let peak_lo = (x - 6.0 * t).max(y_floor);
            let peak_hi = (x + 6.0 * t).min(table.y_max);
            let step = (3.0 * t).max(0.25);
            let mut j = 0.0;
            if peak_lo > y_floor {
                let n = ((peak_lo - y_floor) / step).ceil() as usize;
                j += flux_segment(lambda, x, t, y_floor, peak_lo, n, &gl7, table, spec)?;
            }
            if peak_hi > peak_lo {
                j += flux_segment(lambda, x, t, peak_lo, peak_hi, 6, &gl15, table, spec)?;
            }
            if table.y_max > peak_hi {
                let n = ((table.y_max - peak_hi) / step).ceil() as usize;
                j += flux_segment(lambda, x, t, peak_hi, table.y_max, n, &gl7, table, spec)?;
            }
            acc += wt * t * j;
        }
        let recon = 2.0 * acc;
        let fx = f.value_at(x);
        // trapezoid accumulation of the squared defect and reference
        if let Some((px, pd, pf)) = prev {
            let d = (fx - recon) * (fx - recon);
            num += 0.5 * (d + pd) * (x - px);
            den += 0.5 * (fx * fx + pf) * (x - px);
        }
        prev = Some((x, (fx - recon) * (fx - recon), fx * fx));
    }
    Ok((num / den).max(0.0).sqrt())
}

/// Heights below this are excluded from the truncated cone in
/// [`square_function_g`]; the integrand there scales like 1/t for rough
/// data, so the cone is kept away from the boundary.
pub const SQUARE_G_T_FLOOR: f64 = 1e-2;

/// Truncated vertical square function
/// g(x)^2 = int_(floor)^(cap) int_(|y-x|<t) (du/dt)^2 dy dt.
pub fn square_function_g(
    lambda: f64,
    f: &SampledFunction,
    x: f64,
    cone_cap: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let field = PoissonField::new(lambda, f.clone(), *spec)?;
    square_function_g_field(&field, x, cone_cap)
}

/// Same as [`square_function_g`] on an existing field, so repeated calls
/// (cap doublings, several x) share the cached evaluations. Panels in log t
/// are anchored at the floor, which keeps the nodes of a shorter cap a
/// subset of a taller one.
pub fn square_function_g_field(field: &PoissonField, x: f64, cone_cap: f64) -> Result<f64> {
    const CTX: &str = "semigroup::square_function_g";
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(CTX, format!("x = {x} must be finite and > 0")));
    }
    if !(cone_cap.is_finite() && cone_cap > SQUARE_G_T_FLOOR) {
        return Err(Error::usage(
            CTX,
            format!("cone_cap = {cone_cap} must exceed the height floor {SQUARE_G_T_FLOOR}"),
        ));
    }
    const TAU_WIDTH: f64 = 0.45;
    const Y_PANELS: usize = 5;
    let gl7 = quad::legendre_nodes(7);
    let a = SQUARE_G_T_FLOOR.ln();
    let b = cone_cap.ln();
    let mut acc = 0.0;
    let mut k = 0usize;
    loop {
        let pa = a + k as f64 * TAU_WIDTH;
        if pa >= b {
            break;
        }
        let pb = (pa + TAU_WIDTH).min(b);
        for &(xi, w) in &gl7 {
            let t = (0.5 * (pa + pb) + 0.5 * (pb - pa) * xi).exp();
            let wt = w * 0.5 * (pb - pa) * t;
            let lo = (x - t).max(0.0);
            let h = (x + t - lo) / Y_PANELS as f64;
            let mut slice = 0.0;
            for m in 0..Y_PANELS {
                let c = lo + (m as f64 + 0.5) * h;
                for &(eta, wy) in &gl7 {
                    let v = field.eval(c + 0.5 * h * eta, t)?;
                    slice += wy * 0.5 * h * v.dt * v.dt;
                }
            }
            acc += wt * slice;
        }
        k += 1;
    }
    Ok(acc.max(0.0).sqrt())
}

/// Discretized sups above this report as infinite in [`tent_functionals`].
pub const TENT_PHI_CEILING: f64 = 1e8;

/// A function on the upper half plane stored as constants on grid cells
/// [y_i, y_(i+1)) x [t_j, t_(j+1)).
#[derive(Debug, Clone, PartialEq)]
pub struct TentFunction {
    y_grid: Vec<f64>,
    t_grid: Vec<f64>,
    values: Vec<f64>,
}

impl TentFunction {
    pub fn new(y_grid: Vec<f64>, t_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        const CTX: &str = "semigroup::TentFunction";
        for (name, g) in [("y_grid", &y_grid), ("t_grid", &t_grid)] {
            if g.len() < 2 {
                return Err(Error::usage(CTX, format!("{name} needs at least 2 points")));
            }
            if !g.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(Error::domain(CTX, format!("{name} must be positive and finite")));
            }
            if !g.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::usage(CTX, format!("{name} must be strictly increasing")));
            }
        }
        let cells = (y_grid.len() - 1) * (t_grid.len() - 1);
        if values.len() != cells {
            return Err(Error::usage(
                CTX,
                format!("{} cell values supplied, grid has {cells} cells", values.len()),
            ));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::domain(CTX, "cell values must be finite"));
        }
        Ok(TentFunction { y_grid, t_grid, values })
    }

    /// Samples g at cell centers.
    pub fn from_fn(
        y_grid: Vec<f64>,
        t_grid: Vec<f64>,
        g: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity((y_grid.len() - 1) * (t_grid.len() - 1));
        for jt in 0..t_grid.len() - 1 {
            let tc = 0.5 * (t_grid[jt] + t_grid[jt + 1]);
            for iy in 0..y_grid.len() - 1 {
                values.push(g(0.5 * (y_grid[iy] + y_grid[iy + 1]), tc));
            }
        }
        TentFunction::new(y_grid, t_grid, values)
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// Value on cell (iy, jt).
    pub fn value(&self, iy: usize, jt: usize) -> f64 {
        self.values[jt * (self.y_grid.len() - 1) + iy]
    }

    /// Rows are (y, t, value) with the cell's lower-left corner; the upper
    /// grid edges travel in the header.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# y_max={:.16e} t_max={:.16e}",
            self.y_grid.last().unwrap(),
            self.t_grid.last().unwrap()
        )?;
        writeln!(w, "y,t,value")?;
        for jt in 0..self.t_grid.len() - 1 {
            for iy in 0..self.y_grid.len() - 1 {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    self.y_grid[iy],
                    self.t_grid[jt],
                    self.value(iy, jt)
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        const CTX: &str = "semigroup::TentFunction::read_csv";
        let mut y_max = None;
        let mut t_max = None;
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::usage(CTX, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with("y,") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    if let Some((key, value)) = token.split_once('=') {
                        let parsed: f64 = value
                            .parse()
                            .map_err(|_| Error::usage(CTX, format!("bad header value {token}")))?;
                        match key {
                            "y_max" => y_max = Some(parsed),
                            "t_max" => t_max = Some(parsed),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::usage(CTX, format!("bad row {line}")))
            };
            rows.push((next()?, next()?, next()?));
        }
        let y_max = y_max.ok_or_else(|| Error::usage(CTX, "missing y_max header"))?;
        let t_max = t_max.ok_or_else(|| Error::usage(CTX, "missing t_max header"))?;
        let mut y_grid: Vec<f64> = rows.iter().map(|r| r.0).collect();
        y_grid.sort_by(|p, q| p.partial_cmp(q).unwrap());
        y_grid.dedup();
        y_grid.push(y_max);
        let mut t_grid: Vec<f64> = rows.iter().map(|r| r.1).collect();
        t_grid.sort_by(|p, q| p.partial_cmp(q).unwrap());
        t_grid.dedup();
        t_grid.push(t_max);
        let cells = (y_grid.len() - 1) * (t_grid.len() - 1);
        if rows.len() != cells {
            return Err(Error::usage(CTX, format!("{} rows for {cells} cells", rows.len())));
        }
        let mut values = vec![f64::NAN; cells];
        for (yv, tv, v) in rows {
            let iy = y_grid[..y_grid.len() - 1]
                .binary_search_by(|p| p.partial_cmp(&yv).unwrap())
                .map_err(|_| Error::usage(CTX, format!("row y = {yv} is not a cell corner")))?;
            let jt = t_grid[..t_grid.len() - 1]
                .binary_search_by(|p| p.partial_cmp(&tv).unwrap())
                .map_err(|_| Error::usage(CTX, format!("row t = {tv} is not a cell corner")))?;
            values[jt * (y_grid.len() - 1) + iy] = v;
        }
        TentFunction::new(y_grid, t_grid, values)
    }
}

/// Integral over [t0, t1] of |(x - t, x + t) ∩ (y0, y1)| dt / t^2. The
/// overlap length is piecewise affine in t, and each affine piece a + b t
/// integrates to a (1/s0 - 1/s1) + b ln(s1/s0).
fn cone_cell_weight(x: f64, y0: f64, y1: f64, t0: f64, t1: f64) -> f64 {
    let width = y1 - y0;
    // (piece start, a, b) with the overlap a + b t until the next start.
    let pieces: [(f64, f64, f64); 3] = if y1 <= x || y0 >= x {
        let near = if y1 <= x { x - y1 } else { y0 - x };
        [(0.0, 0.0, 0.0), (near, -near, 1.0), (near + width, width, 0.0)]
    } else {
        let dmin = (x - y0).min(y1 - x);
        let dmax = (x - y0).max(y1 - x);
        [(0.0, 0.0, 2.0), (dmin, dmin, 1.0), (dmax, width, 0.0)]
    };
    let mut acc = 0.0;
    for (k, &(start, a, b)) in pieces.iter().enumerate() {
        let end = if k + 1 < pieces.len() { pieces[k + 1].0 } else { f64::INFINITY };
        let s0 = start.max(t0);
        let s1 = end.min(t1);
        if s1 > s0 && (a != 0.0 || b != 0.0) {
            acc += a * (1.0 / s0 - 1.0 / s1) + b * (s1 / s0).ln();
        }
    }
    acc.max(0.0)
}

/// The two tent-space functionals of F at x: the Carleson-box average
/// sup over intervals I containing x of
/// sqrt( (1/|I|) int_(I x (0,|I|]) F^2 dy dt / t ), and the cone integral
/// sqrt( int_(|y-x|<t) F^2 dy dt / t^2 ).
///
/// The sup ranges over boxes with grid-point endpoints plus a geometric
/// family of intervals centered at x, so it is a lower estimate of the
/// continuum sup; values above [`TENT_PHI_CEILING`] report as infinite.
/// The cone integral uses exact per-cell weights.
pub fn tent_functionals(f: &TentFunction, x: f64) -> Result<(f64, f64)> {
    const CTX: &str = "semigroup::tent_functionals";
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(CTX, format!("x = {x} must be finite and > 0")));
    }
    let y = &f.y_grid;
    let t = &f.t_grid;
    let (ny, nt) = (y.len(), t.len());
    // per-row prefix sums of F^2 dy
    let mut pre = vec![0.0f64; (nt - 1) * ny];
    for jt in 0..nt - 1 {
        for iy in 0..ny - 1 {
            let v = f.value(iy, jt);
            pre[jt * ny + iy + 1] = pre[jt * ny + iy] + v * v * (y[iy + 1] - y[iy]);
        }
    }

    let mut best = 0.0f64;
    for i0 in 0..ny {
        if y[i0] > x {
            break;
        }
        for i1 in (i0 + 1)..ny {
            if y[i1] < x {
                continue;
            }
            let l = y[i1] - y[i0];
            let mut s = 0.0;
            for jt in 0..nt - 1 {
                let cap = t[jt + 1].min(l);
                if t[jt] < cap {
                    s += (cap / t[jt]).ln() * (pre[jt * ny + i1] - pre[jt * ny + i0]);
                }
            }
            best = best.max(s / l);
        }
    }
    // centered intervals, with fractional overlap on the edge cells
    let min_cell = y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let l_lo = min_cell.max(1e-9);
    let l_hi = 2.0 * y[ny - 1].max(t[nt - 1]).max(x);
    if l_hi > l_lo {
        const STEPS: usize = 48;
        for m in 0..=STEPS {
            let l = l_lo * (l_hi / l_lo).powf(m as f64 / STEPS as f64);
            let alpha = (x - 0.5 * l).max(0.0);
            let beta = alpha + l;
            let mut s = 0.0;
            for jt in 0..nt - 1 {
                let cap = t[jt + 1].min(l);
                if t[jt] >= cap {
                    continue;
                }
                let lnf = (cap / t[jt]).ln();
                let mut mass = 0.0;
                for iy in 0..ny - 1 {
                    let o = (beta.min(y[iy + 1]) - alpha.max(y[iy])).max(0.0);
                    if o > 0.0 {
                        let v = f.value(iy, jt);
                        mass += v * v * o;
                    }
                }
                s += lnf * mass;
            }
            best = best.max(s / l);
        }
    }
    let phi = best.max(0.0).sqrt();
    let phi = if phi > TENT_PHI_CEILING { f64::INFINITY } else { phi };

    let mut psi_sq = 0.0;
    for jt in 0..nt - 1 {
        for iy in 0..ny - 1 {
            let v = f.value(iy, jt);
            if v != 0.0 {
                psi_sq += v * v * cone_cell_weight(x, y[iy], y[iy + 1], t[jt], t[jt + 1]);
            }
        }
    }
    Ok((phi, psi_sq.max(0.0).sqrt()))
}

/// Max over the supplied (y, t) points of t (|du/dt| + |D_lambda u|) for
/// the Poisson extension of `f`.
pub fn gradient_bound_check(
    lambda: f64,
    f: &SampledFunction,
    points: &[(f64, f64)],
    spec: &QuadratureSpec,
) -> Result<f64> {
    const CTX: &str = "semigroup::gradient_bound_check";
    if points.is_empty() {
        return Err(Error::usage(CTX, "no evaluation points supplied"));
    }
    let field = PoissonField::new(lambda, f.clone(), *spec)?;
    let mut best = 0.0f64;
    for &(y, t) in points {
        let v = field.eval(y, t)?;
        best = best.max(t * (v.dt.abs() + v.dlam.abs()));
    }
    Ok(best)
}
