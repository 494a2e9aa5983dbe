//! Poisson and heat kernels for the Bessel operator on (0, oo).
//!
//! The Poisson kernel is evaluated either from its theta integral
//!
//!   P_t(x, y) = (2 lambda / pi) t (xy)^lambda
//!               int_0^pi (sin a)^(2 lambda - 1) / D(a)^(lambda + 1) da,
//!   D(a) = (x - y)^2 + t^2 + 2 x y (1 - cos a),
//!
//! rewritten with u = 1 - cos(a) so the trigonometric weight becomes the
//! algebraic (u (2 - u))^(lambda - 1), or from the spectral representation
//!
//!   P_t(x, y) = int_0^oo e^(-t z) sqrt(xz) J_nu(xz) sqrt(yz) J_nu(yz) dz,
//!   nu = lambda - 1/2,
//!
//! truncated where the exponential kills the bounded oscillatory factor.
//! For lambda < 1 the u-form endpoint weight is removed analytically by the
//! further substitution u = v^(1/lambda) (mirrored at u = 2).
//!
//! Derivatives in t and the twisted derivative
//! D_(lambda,x) = x^lambda d/dx x^(-lambda) come from differentiating the
//! u-integrand; all three integrals share nodes in one vector quadrature.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{self, QuadratureSpec};
use crate::specfun::{self, Order};

/// Evaluation point for the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub lambda: f64,
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Largest supported lambda; orders above this are outside the tested range.
pub const MAX_LAMBDA: f64 = 20.0;

impl KernelPoint {
    pub fn new(lambda: f64, x: f64, y: f64, t: f64) -> Result<Self> {
        const CTX: &str = "kernels::KernelPoint";
        for (name, v) in [("lambda", lambda), ("x", x), ("y", y), ("t", t)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(CTX, format!("{name} = {v} must be finite and > 0")));
            }
        }
        if lambda > MAX_LAMBDA {
            return Err(Error::range(CTX, format!("lambda = {lambda} exceeds supported maximum {MAX_LAMBDA}")));
        }
        Ok(KernelPoint { lambda, x, y, t })
    }

    #[cfg(test)]
    fn swapped(self) -> Self {
        KernelPoint { x: self.y, y: self.x, ..self }
    }
}

/// Route used for the Poisson kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonMethod {
    ThetaIntegral,
    Spectral,
}

/// (d/dt, D_(lambda,x)) of the Poisson kernel at a point.
#[derive(Debug, Clone, Copy)]
pub struct KernelGradient {
    pub dt: f64,
    pub dlam_x: f64,
}

/// Kernel value with both first derivatives, from a single quadrature pass.
#[derive(Debug, Clone, Copy)]
pub struct KernelTriple {
    pub value: f64,
    pub dt: f64,
    pub dlam_x: f64,
    pub dlam_y: f64,
}

fn power_fn(exponent: f64) -> impl Fn(f64) -> f64 + Copy {
    let as_int = if exponent.fract() == 0.0 && exponent.abs() <= 32.0 {
        Some(exponent as i32)
    } else {
        None
    };
    move |base: f64| match as_int {
        Some(n) => base.powi(n),
        None => base.powf(exponent),
    }
}

/// Integrates core(u, weight) du over u in (0, 2) with the endpoint weight
/// (u(2-u))^(lambda-1) folded into `weight`. For lambda < 1 the weight is
/// singular, so u = v^(1/lambda) absorbs the u^(lambda-1) factor and the
/// mirrored substitution at u = 2 handles the other endpoint.
fn theta_integrals<const K: usize>(
    p: &KernelPoint,
    spec: &QuadratureSpec,
    core: impl Fn(f64, f64) -> [f64; K] + Copy,
) -> Result<[f64; K]> {
    const CTX: &str = "kernels::theta_integrals";
    let lambda = p.lambda;
    let inner = QuadratureSpec {
        abs_tol: 1e-280,
        rel_tol: spec.rel_tol.min(1e-9),
        max_subdivisions: spec.max_subdivisions.max(200),
        truncation_radius: spec.truncation_radius,
    };
    if lambda >= 1.0 {
        let q = quad::adaptive_vec(
            CTX,
            |u: f64| {
                let w = if lambda == 1.0 { 1.0 } else { (u * (2.0 - u)).powf(lambda - 1.0) };
                core(u, w)
            },
            0.0,
            2.0,
            &inner,
        )?;
        Ok(q.value)
    } else {
        let inv = 1.0 / lambda;
        let left = quad::adaptive_vec(
            CTX,
            |v: f64| {
                let u = v.powf(inv);
                core(u, (2.0 - u).powf(lambda - 1.0) * inv)
            },
            0.0,
            1.0,
            &inner,
        )?;
        // Mirrored piece: with w = 2 - u the weight splits as
        // w^(lambda-1) (2-w)^(lambda-1); w = s^(1/lambda) absorbs the first
        // factor and the smooth second factor stays in the integrand.
        let right = quad::adaptive_vec(
            CTX,
            |s: f64| {
                let w = s.powf(inv);
                let u = 2.0 - w;
                core(u, (2.0 - w).powf(lambda - 1.0) * inv)
            },
            0.0,
            1.0,
            &inner,
        )?;
        let mut out = [0.0; K];
        for k in 0..K {
            out[k] = left.value[k] + right.value[k];
        }
        Ok(out)
    }
}

/// Integrals [I_(lambda+1), I_(lambda+2), K_(lambda+2)] of the u-form, where
/// I_p = int (u(2-u))^(lambda-1) D^-p du and K_p carries an extra factor u.
fn theta_core(p: &KernelPoint, spec: &QuadratureSpec) -> Result<[f64; 3]> {
    let dx2 = (p.x - p.y) * (p.x - p.y) + p.t * p.t;
    let two_xy = 2.0 * p.x * p.y;
    let pow_p1 = power_fn(p.lambda + 1.0);
    theta_integrals::<3>(p, spec, move |u, weight| {
        let d = dx2 + two_xy * u;
        let c1 = weight / pow_p1(d);
        let c2 = c1 / d;
        [c1, c2, u * c2]
    })
}

/// Kernel value alone; cheaper than the triple when derivatives are unused.
fn theta_value(p: &KernelPoint, spec: &QuadratureSpec) -> Result<f64> {
    let dx2 = (p.x - p.y) * (p.x - p.y) + p.t * p.t;
    let two_xy = 2.0 * p.x * p.y;
    let pow_p1 = power_fn(p.lambda + 1.0);
    let i1 = theta_integrals::<1>(p, spec, move |u, weight| [weight / pow_p1(dx2 + two_xy * u)])?;
    let pow_l = power_fn(p.lambda);
    Ok(2.0 * p.lambda / std::f64::consts::PI * p.t * pow_l(p.x * p.y) * i1[0])
}

/// Poisson kernel with value and first derivatives via the theta route.
pub fn poisson_kernel_triple(p: &KernelPoint, spec: &QuadratureSpec) -> Result<KernelTriple> {
    let [i1, i2, k2] = theta_core(p, spec)?;
    let lambda = p.lambda;
    let pow_l = power_fn(lambda);
    let xyl = pow_l(p.x * p.y);
    let c = 2.0 * lambda / std::f64::consts::PI;
    let value = c * p.t * xyl * i1;
    let dt = c * xyl * (i1 - 2.0 * (lambda + 1.0) * p.t * p.t * i2);
    let cg = -4.0 * lambda * (lambda + 1.0) / std::f64::consts::PI * p.t * xyl;
    let dlam_x = cg * ((p.x - p.y) * i2 + p.y * k2);
    let dlam_y = cg * ((p.y - p.x) * i2 + p.x * k2);
    Ok(KernelTriple { value, dt, dlam_x, dlam_y })
}

/// (d/dt, D_(lambda,x)) of the Poisson kernel.
pub fn poisson_kernel_grad(p: &KernelPoint, spec: &QuadratureSpec) -> Result<KernelGradient> {
    let triple = poisson_kernel_triple(p, spec)?;
    Ok(KernelGradient { dt: triple.dt, dlam_x: triple.dlam_x })
}

fn poisson_spectral(p: &KernelPoint, spec: &QuadratureSpec) -> Result<f64> {
    const CTX: &str = "kernels::poisson_spectral";
    spec.validate(CTX)?;
    let order = Order::from_lambda(p.lambda)?;
    // Oscillatory factors are bounded, so the truncation tail is below
    // 2 e^(-tR) / t; solve for R and check the configured radius.
    let tol = spec.abs_tol.max(1e-300);
    let radius = ((2.0 / (p.t * tol)).ln() / p.t).max(1.0);
    if radius > spec.truncation_radius {
        let achieved = 2.0 * (-p.t * spec.truncation_radius).exp() / p.t;
        return Err(Error::Convergence {
            context: CTX,
            requested: tol,
            achieved,
            estimate: f64::NAN,
        });
    }
    // Panels resolve both the J oscillation (quarter period) and the decay.
    let h = (std::f64::consts::FRAC_PI_4 / p.x.max(p.y)).min(3.0 / p.t).min(radius);
    let panels = (radius / h).ceil() as usize;
    let h = radius / panels as f64;
    let nodes = quad::legendre_nodes(15);
    let mut total = 0.0f64;
    for k in 0..panels {
        let a = k as f64 * h;
        let c = a + 0.5 * h;
        let mut acc = 0.0;
        for &(xi, w) in &nodes {
            let z = c + 0.5 * h * xi;
            let jx = specfun::bessel_j(order, p.x * z)?;
            let jy = specfun::bessel_j(order, p.y * z)?;
            acc += w * (-p.t * z).exp() * (p.x * z).sqrt() * jx * (p.y * z).sqrt() * jy;
        }
        total += 0.5 * h * acc;
    }
    Ok(total)
}

/// Poisson kernel P_t(x, y) by the requested route.
pub fn poisson_kernel(p: &KernelPoint, spec: &QuadratureSpec, method: PoissonMethod) -> Result<f64> {
    match method {
        PoissonMethod::ThetaIntegral => theta_value(p, spec),
        PoissonMethod::Spectral => poisson_spectral(p, spec),
    }
}

/// Heat kernel W_t(x, y) = sqrt(xy)/(2t) I_nu(xy/(2t)) e^(-(x^2+y^2)/(4t)),
/// evaluated through the scaled I so the two exponentials combine into the
/// overflow-safe e^(-(x-y)^2/(4t)).
pub fn heat_kernel(p: &KernelPoint) -> Result<f64> {
    let order = Order::from_lambda(p.lambda)?;
    let z = p.x * p.y / (2.0 * p.t);
    let scaled = specfun::bessel_i_scaled(order, z)?;
    let gauss = (-(p.x - p.y) * (p.x - p.y) / (4.0 * p.t)).exp();
    Ok((p.x * p.y).sqrt() / (2.0 * p.t) * scaled * gauss)
}

/// Classical half-plane Poisson kernel (1/pi) t / (u^2 + t^2) on R.
pub fn classical_poisson(t: f64, u: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain("kernels::classical_poisson", format!("t = {t} must be > 0")));
    }
    if !u.is_finite() {
        return Err(Error::domain("kernels::classical_poisson", format!("u = {u} must be finite")));
    }
    Ok(t / (std::f64::consts::PI * (u * u + t * t)))
}

/// One row of a kernel bound report.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub inequality: &'static str,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub ratio: f64,
}

/// Empirical ratios for the kernel upper bounds and the gradient bound.
///
/// ratio_d2 = P ((x-y)^2 + t^2)^(lambda+1) / (t (xy)^lambda)
/// ratio_d3 = P ((x-y)^2 + t^2) / t
/// ratio_gradient = t (|dP/dt| + |D_(lambda,x) P|) / P
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub lambda: f64,
    pub rows: Vec<BoundRow>,
    pub max_d2: f64,
    pub max_d3: f64,
    pub max_gradient: f64,
    pub min_value: f64,
}

impl BoundReport {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "inequality,grid_point,ratio")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},x={:.6e};y={:.6e};t={:.6e},{:.12e}",
                row.inequality, row.x, row.y, row.t, row.ratio
            )?;
        }
        Ok(())
    }
}

/// Evaluates the bound ratios over the cartesian grid xs x ys x ts.
pub fn verify_kernel_bounds(
    lambda: f64,
    xs: &[f64],
    ys: &[f64],
    ts: &[f64],
    spec: &QuadratureSpec,
) -> Result<BoundReport> {
    const CTX: &str = "kernels::verify_kernel_bounds";
    if xs.is_empty() || ys.is_empty() || ts.is_empty() {
        return Err(Error::usage(CTX, "empty grid axis"));
    }
    let mut points = Vec::with_capacity(xs.len() * ys.len() * ts.len());
    for &x in xs {
        for &y in ys {
            for &t in ts {
                points.push(KernelPoint::new(lambda, x, y, t)?);
            }
        }
    }
    let pow_l = power_fn(lambda);
    let per_point: Vec<Result<[BoundRow; 3]>> = points
        .par_iter()
        .map(|p| {
            let triple = poisson_kernel_triple(p, spec)?;
            let d2 = (p.x - p.y) * (p.x - p.y) + p.t * p.t;
            let pow_d2 = d2.powf(lambda + 1.0);
            let ratio_d2 = triple.value * pow_d2 / (p.t * pow_l(p.x * p.y));
            let ratio_d3 = triple.value * d2 / p.t;
            let ratio_grad = if triple.value > 0.0 {
                p.t * (triple.dt.abs() + triple.dlam_x.abs()) / triple.value
            } else {
                0.0
            };
            Ok([
                BoundRow { inequality: "upper_d2", x: p.x, y: p.y, t: p.t, ratio: ratio_d2 },
                BoundRow { inequality: "upper_d3", x: p.x, y: p.y, t: p.t, ratio: ratio_d3 },
                BoundRow { inequality: "gradient", x: p.x, y: p.y, t: p.t, ratio: ratio_grad },
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(points.len() * 3);
    let mut max_d2 = 0.0f64;
    let mut max_d3 = 0.0f64;
    let mut max_gradient = 0.0f64;
    let mut min_value = f64::INFINITY;
    for (p, item) in points.iter().zip(per_point) {
        let triple_rows = item?;
        max_d2 = max_d2.max(triple_rows[0].ratio);
        max_d3 = max_d3.max(triple_rows[1].ratio);
        max_gradient = max_gradient.max(triple_rows[2].ratio);
        let value = triple_rows[0].ratio * p.t * pow_l(p.x * p.y)
            / ((p.x - p.y) * (p.x - p.y) + p.t * p.t).powf(lambda + 1.0);
        min_value = min_value.min(value);
        rows.extend(triple_rows);
    }
    Ok(BoundReport { lambda, rows, max_d2, max_d3, max_gradient, min_value })
}
