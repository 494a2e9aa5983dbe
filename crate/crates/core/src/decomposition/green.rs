//! Rectangle form of the weighted Green identity behind the boundary
//! extraction: twice the t-weighted gradient pairing over a rectangle
//! equals edge integrals of the two flux densities H and V.

use crate::error::{require_finite, require_positive, Error, Result};
use crate::grid::SampledFunction;
use crate::kernels::{self, KernelPoint};
use crate::quad::{self, QuadratureSpec};
use crate::semigroup::{self, PoissonField};

use super::{grow_panels, CTX};

/// H(x, y, t) = t dP/dt (u - a y^l) + t P du/dt - P (u - a y^l),
/// the density integrated in y along horizontal edges.
fn h_flux(
    field: &PoissonField,
    x: f64,
    y: f64,
    t: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let lambda = field.lambda();
    let k = kernels::poisson_kernel_triple(&KernelPoint::new(lambda, x, y, t)?, spec)?;
    let v = field.eval(y, t)?;
    let dev = v.value - alpha * y.powf(lambda);
    Ok(t * k.dt * dev + t * k.value * v.dt - k.value * dev)
}

/// V(x, y, t) = t (P D_lambda u + (D_lambda P)(u - a y^l)),
/// the density integrated in t along vertical edges.
fn v_flux(
    field: &PoissonField,
    x: f64,
    y: f64,
    t: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let lambda = field.lambda();
    let k = kernels::poisson_kernel_triple(&KernelPoint::new(lambda, x, y, t)?, spec)?;
    let v = field.eval(y, t)?;
    let dev = v.value - alpha * y.powf(lambda);
    Ok(t * (k.value * v.dlam + k.dlam_y * dev))
}

/// Builds the extension of `f` and runs [`green_identity_on`].
pub fn green_identity_check(
    lambda: f64,
    f: &SampledFunction,
    rect: ((f64, f64), (f64, f64)),
    x: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let field = PoissonField::new(lambda, f.clone(), *spec)?;
    green_identity_on(&field, rect, x, alpha, spec)
}

/// Both sides of the identity on rect = (a, b) x (c, d) at observation
/// point x: (interior, boundary) with
/// interior = 2 integral of t grad P(x, .) . grad(u - alpha y^lambda),
/// boundary = the H flux over the top minus the bottom edge plus the V
/// flux over right minus left. The gradients pair d/dt with the twisted
/// space derivative. On y = 0 the V flux vanishes with the kernel.
///
/// The alpha part of the interior gradient is kept as the literally
/// evaluated twisted derivative of y^lambda, which cancels only to
/// rounding; invariance of the interior in alpha is therefore a real
/// check of the quadrature, not an algebraic tautology.
pub fn green_identity_on(
    field: &PoissonField,
    rect: ((f64, f64), (f64, f64)),
    x: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    spec.validate(CTX)?;
    let ((a, b), (c, d)) = rect;
    for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
        require_finite(CTX, name, v)?;
    }
    if !(a >= 0.0 && a < b) {
        return Err(Error::usage(CTX, format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    if !(c > 0.0 && c < d) {
        return Err(Error::usage(CTX, format!("need 0 < c < d, got c = {c}, d = {d}")));
    }
    require_positive(CTX, "x", x)?;
    require_finite(CTX, "alpha", alpha)?;
    let lambda = field.lambda();
    let gl = quad::legendre_nodes(7);

    let mut interior = 0.0;
    for tw in grow_panels(c, d).windows(2) {
        let (th, tm) = (0.5 * (tw[1] - tw[0]), 0.5 * (tw[0] + tw[1]));
        for &(tn, twt) in &gl {
            let t = tm + th * tn;
            let wt = twt * th;
            for yw in semigroup::scale_panels(a, b, x, t)?.windows(2) {
                let (yh, ym) = (0.5 * (yw[1] - yw[0]), 0.5 * (yw[0] + yw[1]));
                for &(yn, ywt) in &gl {
                    let y = ym + yh * yn;
                    let wy = ywt * yh;
                    let k = kernels::poisson_kernel_triple(
                        &KernelPoint::new(lambda, x, y, t)?,
                        spec,
                    )?;
                    let v = field.eval(y, t)?;
                    // The twisted derivative of y^lambda, written out so
                    // alpha stays in the integrand; it cancels to rounding.
                    let pow_dlam = lambda * y.powf(lambda - 1.0) - lambda * y.powf(lambda) / y;
                    interior += 2.0
                        * t
                        * (k.dt * v.dt + k.dlam_y * (v.dlam - alpha * pow_dlam))
                        * wy
                        * wt;
                }
            }
        }
    }

    let mut boundary = 0.0;
    for (t_edge, sgn) in [(d, 1.0), (c, -1.0)] {
        for yw in semigroup::scale_panels(a, b, x, t_edge)?.windows(2) {
            let (yh, ym) = (0.5 * (yw[1] - yw[0]), 0.5 * (yw[0] + yw[1]));
            for &(yn, ywt) in &gl {
                let y = ym + yh * yn;
                boundary += sgn * h_flux(field, x, y, t_edge, alpha, spec)? * ywt * yh;
            }
        }
    }
    for (y_edge, sgn) in [(b, 1.0), (a, -1.0)] {
        if y_edge <= 0.0 {
            continue;
        }
        for tw in grow_panels(c, d).windows(2) {
            let (th, tm) = (0.5 * (tw[1] - tw[0]), 0.5 * (tw[0] + tw[1]));
            for &(tn, twt) in &gl {
                let t = tm + th * tn;
                boundary += sgn * v_flux(field, x, y_edge, t, alpha, spec)? * twt * th;
            }
        }
    }
    Ok((interior, boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lin_grid;

    #[test]
    fn zero_function_gives_zero_on_both_sides() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        let spec = QuadratureSpec::default();
        let (interior, boundary) =
            green_identity_check(1.0, &f, ((0.2, 1.0), (0.3, 0.6)), 0.7, 0.0, &spec).unwrap();
        assert_eq!(interior, 0.0);
        assert_eq!(boundary, 0.0);
    }

    #[test]
    fn rejects_degenerate_rectangles() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        let spec = QuadratureSpec::default();
        assert!(green_identity_check(1.0, &f, ((0.5, 0.5), (0.1, 0.2)), 1.0, 0.0, &spec).is_err());
        assert!(green_identity_check(1.0, &f, ((0.1, 0.5), (0.0, 0.2)), 1.0, 0.0, &spec).is_err());
        assert!(green_identity_check(1.0, &f, ((-0.1, 0.5), (0.1, 0.2)), 1.0, 0.0, &spec).is_err());
        assert!(green_identity_check(1.0, &f, ((0.1, 0.5), (0.1, 0.2)), 0.0, 0.0, &spec).is_err());
    }

    #[test]
    fn interior_is_invariant_in_alpha_and_matches_boundary() {
        let f = SampledFunction::indicator(0.0, 1.0, lin_grid(0.005, 1.005, 201), 1.0).unwrap();
        let spec = QuadratureSpec::default();
        let field = PoissonField::new(1.0, f, spec).unwrap();
        let rect = ((0.6, 1.3), (0.25, 0.55));
        let x = 0.95;
        let (i0, b0) = green_identity_on(&field, rect, x, 0.0, &spec).unwrap();
        let (i1, b1) = green_identity_on(&field, rect, x, 1.0, &spec).unwrap();
        let (i2, _) = green_identity_on(&field, rect, x, -2.0, &spec).unwrap();
        assert!((i1 - i0).abs() <= 1e-10, "alpha=1 shifted interior by {:.3e}", i1 - i0);
        assert!((i2 - i0).abs() <= 1e-10, "alpha=-2 shifted interior by {:.3e}", i2 - i0);
        for (interior, boundary) in [(i0, b0), (i1, b1)] {
            let tol = 1e-5f64.max(1e-4 * interior.abs());
            assert!(
                (interior - boundary).abs() <= tol,
                "interior {interior:.8e} vs boundary {boundary:.8e}"
            );
        }
        assert!(i0.abs() > 1e-4, "rectangle chosen to carry visible energy");
    }
}
