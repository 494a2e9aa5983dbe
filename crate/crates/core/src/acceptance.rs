//! End-to-end acceptance checks. Fifteen numbered criteria cover the
//! closed-form kernel oracles, cross-representation agreement, the
//! subordination and eigenfunction identities, the Hankel transform,
//! the reproducing formula, the Green identity, kernel bound ratios,
//! the Carleson norm against brute force, balayage, the norm family
//! comparison, and the stopping-time decomposition. The `acceptance`
//! test target and the CLI `acceptance` command both run them through
//! [`run_criterion`] and print one PASS/FAIL line per criterion.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::carleson::{
    balayage_poisson, carleson_norm, check_balayage_bmo, Atom, DiscreteMeasure,
};
use crate::decomposition::{
    calibrated_tree, green_identity_on, oscillation_check, packing_check, reconstruct,
    sigma_tiles,
};
use crate::error::Result;
use crate::grid::{
    l2_relative_error, lin_grid, log_grid, piecewise_lin_grid, refine_grid, SampledFunction,
    Tail,
};
use crate::hankel::hankel_transform;
use crate::kernels::{heat_kernel, poisson_kernel, verify_kernel_bounds, KernelPoint, PoissonMethod};
use crate::quad::QuadratureSpec;
use crate::semigroup::{
    apply_poisson, gradient_bound_check, reproducing_check, subordination_check, PoissonField,
};
use crate::spaces::{bmo_o_norm, theorem_a_measure, IntervalFamily};

// Tolerances, one block so nothing hides in a function body.
pub const TOL_CLOSED_FORM_ABS: f64 = 1e-8; // 1
pub const TOL_CROSS_REP_REL: f64 = 1e-6; // 2
pub const TOL_SUBORDINATION_ABS: f64 = 1e-5; // 3
pub const TOL_EIGENFUNCTION_REL: f64 = 1e-3; // 4
pub const TOL_HANKEL_INVOLUTION: f64 = 1e-4; // 5
pub const TOL_HANKEL_ISOMETRY: f64 = 1e-3; // 5
pub const TOL_REPRODUCING_FINEST: f64 = 0.05; // 6, at eps = 0.05
pub const TOL_GREEN_ABS: f64 = 1e-5; // 7
pub const TOL_GREEN_REL: f64 = 1e-4; // 7
pub const TOL_ALPHA_INVARIANCE: f64 = 1e-10; // 7
pub const TOL_BOUND_DRIFT: f64 = 0.05; // 8, under 2x grid refinement
pub const TOL_GRADIENT_RATIO_DRIFT: f64 = 0.10; // 9
pub const TOL_CARLESON_ORACLE: f64 = 1e-9; // 10
pub const TOL_BALAYAGE_DRIFT: f64 = 0.25; // 11
pub const BALAYAGE_RATIO_CAP: f64 = 10.0; // 11
pub const NORM_WINDOW_CAP: f64 = 50.0; // 12
pub const TOL_OSCILLATION_DRIFT: f64 = 0.10; // 14, under sample doubling
pub const RESIDUAL_STEP_SLACK: f64 = 1.05; // 15
pub const RESIDUAL_TOTAL_DROP: f64 = 0.5; // 15

const SEED_SUBORDINATION: u64 = 0xACC3;
const SEED_GREEN: u64 = 0xACC7;
const SEED_CARLESON: u64 = 0xACC10;
const SEED_BALAYAGE: u64 = 0xACC11;

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionReport {
    /// "PASS criterion-07 green-identity: ..." line for terminals and logs.
    pub fn line(&self) -> String {
        format!(
            "{} criterion-{:02} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

type CriterionFn = fn(&QuadratureSpec) -> Result<(bool, String)>;

pub const CRITERIA: [(usize, &str, CriterionFn); 15] = [
    (1, "closed-form-kernels", closed_form_kernels),
    (2, "kernel-representations", kernel_representations),
    (3, "subordination-identity", subordination_identity),
    (4, "power-eigenfunction", power_eigenfunction),
    (5, "hankel-involution-isometry", hankel_involution_isometry),
    (6, "reproducing-formula", reproducing_formula),
    (7, "green-identity", green_identity),
    (8, "kernel-bound-ratios", kernel_bound_ratios),
    (9, "gradient-oscillation-ratio", gradient_oscillation_ratio),
    (10, "carleson-norm-oracle", carleson_norm_oracle),
    (11, "balayage-bmo-ratio", balayage_bmo_ratio),
    (12, "norm-family-ranking", norm_family_ranking),
    (13, "stopping-tree-exactness", stopping_tree_exactness),
    (14, "oscillation-stability", oscillation_stability),
    (15, "reconstruction-residual-trend", reconstruction_residual_trend),
];

/// Runs one criterion by id (1..=15). A computation error counts as a
/// failure and lands in the detail text rather than propagating.
pub fn run_criterion(id: usize, spec: &QuadratureSpec) -> CriterionReport {
    let Some(&(_, name, f)) = CRITERIA.iter().find(|&&(cid, _, _)| cid == id) else {
        return CriterionReport {
            id,
            name: "unknown",
            passed: false,
            detail: format!("no criterion with id {id}"),
        };
    };
    let (passed, detail) = match f(spec) {
        Ok(pair) => pair,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionReport { id, name, passed, detail }
}

/// Runs the whole suite in order, feeding each report to `sink`.
/// Returns true when every criterion passed.
pub fn run_all(spec: &QuadratureSpec, mut sink: impl FnMut(&CriterionReport)) -> bool {
    let mut all = true;
    for &(id, _, _) in CRITERIA.iter() {
        let report = run_criterion(id, spec);
        all &= report.passed;
        sink(&report);
    }
    all
}

/// chi_(0,1), the triangular bump, and truncated log(1/x), sampled on a
/// common grid over (0, 1]. The capped log keeps the value finite at the
/// first grid point without moving it off the log profile elsewhere.
fn test_family(grid: Vec<f64>) -> Result<Vec<(&'static str, SampledFunction)>> {
    let chi = SampledFunction::indicator(0.0, 1.0, grid.clone(), 1.0)?;
    let hat = SampledFunction::from_fn(
        |x| (1.0 - (2.0 * x - 1.0).abs()).max(0.0),
        grid.clone(),
        1.0,
    )?;
    let cap = (1.0 / grid[0]).ln();
    let logf = SampledFunction::from_fn(
        move |x| if x >= 1.0 { 0.0 } else { (1.0 / x).ln().min(cap) },
        grid,
        1.0,
    )?;
    Ok(vec![("chi", chi), ("hat", hat), ("log", logf)])
}

fn family_grid() -> Vec<f64> {
    lin_grid(0.002, 1.002, 201)
}

fn gaussian(a: f64, c: f64, grid: Vec<f64>, support: f64) -> Result<SampledFunction> {
    SampledFunction::from_fn(move |y| (-a * (y - c) * (y - c)).exp(), grid, support)
}

fn closed_form_kernels(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let g = log_grid(0.1, 10.0, 10);
    let mut max_p = 0.0f64;
    let mut max_h = 0.0f64;
    for &x in &g {
        for &y in &g {
            for &t in &g {
                let p = KernelPoint::new(1.0, x, y, t)?;
                let cauchy = |u: f64| t / (u * u + t * t);
                let closed_p = (cauchy(x - y) - cauchy(x + y)) / PI;
                let gauss = |u: f64| (-u * u / (4.0 * t)).exp();
                let closed_h = (gauss(x - y) - gauss(x + y)) / (4.0 * PI * t).sqrt();
                for m in [PoissonMethod::ThetaIntegral, PoissonMethod::Spectral] {
                    max_p = max_p.max((poisson_kernel(&p, spec, m)? - closed_p).abs());
                }
                max_h = max_h.max((heat_kernel(&p)? - closed_h).abs());
            }
        }
    }
    let ok = max_p <= TOL_CLOSED_FORM_ABS && max_h <= TOL_CLOSED_FORM_ABS;
    Ok((
        ok,
        format!(
            "lambda=1 closed forms on [0.1,10]^3: poisson max abs err {max_p:.2e}, heat {max_h:.2e} (tol {TOL_CLOSED_FORM_ABS:.0e})"
        ),
    ))
}

fn kernel_representations(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let g = log_grid(0.1, 10.0, 10);
    let mut max_rel = 0.0f64;
    for &lambda in &[0.5, 1.0, 2.0, 3.5] {
        for &x in &g {
            for &y in &g {
                for &t in &g {
                    let p = KernelPoint::new(lambda, x, y, t)?;
                    let a = poisson_kernel(&p, spec, PoissonMethod::ThetaIntegral)?;
                    let b = poisson_kernel(&p, spec, PoissonMethod::Spectral)?;
                    max_rel = max_rel.max((a - b).abs() / a.abs().max(b.abs()));
                }
            }
        }
    }
    let ok = max_rel <= TOL_CROSS_REP_REL;
    Ok((
        ok,
        format!(
            "theta vs spectral, lambda in {{0.5,1,2,3.5}}: max rel err {max_rel:.2e} (tol {TOL_CROSS_REP_REL:.0e})"
        ),
    ))
}

fn subordination_identity(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_SUBORDINATION);
    let mut max_err = 0.0f64;
    for &lambda in &[1.0, 2.0] {
        for _ in 0..50 {
            let x = rng.gen_range(0.1..4.0);
            let y = rng.gen_range(0.1..4.0);
            let t = rng.gen_range(0.1..3.0);
            let (lhs, rhs) = subordination_check(&KernelPoint::new(lambda, x, y, t)?, spec)?;
            max_err = max_err.max((lhs - rhs).abs());
        }
    }
    let ok = max_err <= TOL_SUBORDINATION_ABS;
    Ok((
        ok,
        format!(
            "poisson vs heat subordination at 50 seeded points per lambda in {{1,2}}: max abs err {max_err:.2e} (tol {TOL_SUBORDINATION_ABS:.0e})"
        ),
    ))
}

fn power_eigenfunction(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let xs = log_grid(0.2, 5.0, 10);
    let mut max_rel = 0.0f64;
    for &lambda in &[1.0, 2.0] {
        let f = SampledFunction::from_fn(|y| y.powf(lambda), log_grid(1e-4, 60.0, 1000), 60.0)?
            .with_tail(Tail::Power { coeff: 1.0, exponent: lambda })?;
        for &t in &[0.5, 2.0] {
            let out = apply_poisson(lambda, t, &f, &xs, spec)?;
            for (&x, &v) in xs.iter().zip(out.values()) {
                max_rel = max_rel.max((v - x.powf(lambda)).abs() / x.powf(lambda));
            }
        }
    }
    let ok = max_rel <= TOL_EIGENFUNCTION_REL;
    Ok((
        ok,
        format!(
            "P_t maps y^lambda to x^lambda, 20 points per lambda in {{1,2}}: max rel err {max_rel:.2e} (tol {TOL_EIGENFUNCTION_REL:.0e})"
        ),
    ))
}

fn hankel_involution_isometry(spec: &QuadratureSpec) -> Result<(bool, String)> {
    // Gaussian bumps clear of the origin; their transforms die off fast
    // enough that the truncated grids hold the full mass.
    let shapes = [(4.5, 2.0), (6.0, 2.5), (9.0, 1.8)];
    let y_fine = piecewise_lin_grid(&[(1e-3, 0.4, 40), (0.4, 3.8, 1250), (3.8, 21.0, 130)]);
    let z_grid = lin_grid(1e-3, 21.0, 1500);
    let coarse = lin_grid(0.05, 6.0, 500);
    let iso_y = piecewise_lin_grid(&[(1e-3, 0.3, 20), (0.3, 4.5, 900), (4.5, 21.0, 100)]);
    let iso_z = lin_grid(1e-3, 21.0, 1100);
    let mut max_inv = 0.0f64;
    let mut max_iso = 0.0f64;
    for &lambda in &[1.0, 2.0] {
        for &(a, c) in &shapes {
            let f = gaussian(a, c, y_fine.clone(), 21.0)?;
            let fwd = hankel_transform(lambda, &f, &z_grid, 0, spec)?;
            let back = hankel_transform(lambda, &fwd, &coarse, 0, spec)?;
            let reference = gaussian(a, c, coarse.clone(), 21.0)?;
            max_inv = max_inv.max(l2_relative_error(&reference, &back)?);

            let fi = gaussian(a, c, iso_y.clone(), 21.0)?;
            let hfi = hankel_transform(lambda, &fi, &iso_z, 0, spec)?;
            max_iso = max_iso.max((hfi.l2_norm() / fi.l2_norm() - 1.0).abs());
        }
    }
    let ok = max_inv <= TOL_HANKEL_INVOLUTION && max_iso <= TOL_HANKEL_ISOMETRY;
    Ok((
        ok,
        format!(
            "3 bumps, lambda in {{1,2}}: involution l2 err {max_inv:.2e} (tol {TOL_HANKEL_INVOLUTION:.0e}), isometry defect {max_iso:.2e} (tol {TOL_HANKEL_ISOMETRY:.0e})"
        ),
    ))
}

fn reproducing_formula(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let bump = gaussian(8.0, 1.0, lin_grid(1e-3, 2.2, 600), 2.2)?;
    let mut residuals = Vec::new();
    for &eps in &[0.2, 0.1, 0.05] {
        residuals.push(reproducing_check(1.0, &bump, eps, spec)?);
    }
    let decreasing = residuals[1] < residuals[0] && residuals[2] < residuals[1];
    let ok = decreasing && residuals[2] <= TOL_REPRODUCING_FINEST;
    Ok((
        ok,
        format!(
            "gaussian bump, lambda=1, eps in {{0.2,0.1,0.05}}: residuals {:.4}, {:.4}, {:.4} (decreasing, last <= {TOL_REPRODUCING_FINEST})",
            residuals[0], residuals[1], residuals[2]
        ),
    ))
}

fn green_identity(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let f = SampledFunction::indicator(0.0, 1.0, family_grid(), 1.0)?;
    let field = PoissonField::new(1.0, f, *spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_GREEN);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..10 {
        let a = rng.gen_range(0.0..1.2);
        let b = a + rng.gen_range(0.15..1.0);
        let c = rng.gen_range(0.05..0.6);
        let d = c + rng.gen_range(0.1..1.0);
        let x = rng.gen_range(0.2..1.8);
        let alpha = rng.gen_range(-1.0..1.0);
        let (i, bd) = green_identity_on(&field, ((a, b), (c, d)), x, alpha, spec)?;
        let tol = TOL_GREEN_ABS.max(TOL_GREEN_REL * i.abs());
        let gap = (i - bd).abs();
        ok &= gap <= tol;
        worst = worst.max(gap / tol);
    }
    // Interior invariance in alpha: the twisted derivative of y^lambda is
    // evaluated literally inside the integrand, so this probes quadrature.
    let rect = ((0.6, 1.3), (0.25, 0.55));
    let (i0, _) = green_identity_on(&field, rect, 0.95, 0.0, spec)?;
    let (i1, _) = green_identity_on(&field, rect, 0.95, 1.0, spec)?;
    let (i2, _) = green_identity_on(&field, rect, 0.95, -2.0, spec)?;
    let shift = (i1 - i0).abs().max((i2 - i0).abs());
    ok &= shift <= TOL_ALPHA_INVARIANCE;
    Ok((
        ok,
        format!(
            "10 seeded rectangles: worst gap {worst:.3} of tolerance; alpha shift {shift:.2e} (tol {TOL_ALPHA_INVARIANCE:.0e})"
        ),
    ))
}

fn kernel_bound_ratios(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let base = log_grid(0.1, 10.0, 10);
    let fine = refine_grid(&base, true);
    let mut ok = true;
    let mut detail = Vec::new();
    for &lambda in &[1.0, 2.0] {
        let r0 = verify_kernel_bounds(lambda, &base, &base, &base, spec)?;
        let r1 = verify_kernel_bounds(lambda, &fine, &fine, &fine, spec)?;
        for (m0, m1, name) in [
            (r0.max_d2, r1.max_d2, "size"),
            (r0.max_d3, r1.max_d3, "comparison"),
            (r0.max_gradient, r1.max_gradient, "gradient"),
        ] {
            let drift = (m1 - m0).abs() / m0;
            ok &= m0.is_finite() && m1.is_finite() && drift <= TOL_BOUND_DRIFT;
            detail.push(format!("{name}(l={lambda}) {m0:.3} drift {:.1}%", 100.0 * drift));
        }
    }
    Ok((ok, format!("ratio maxima stable under 2x refinement: {}", detail.join(", "))))
}

fn gradient_oscillation_ratio(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let side = log_grid(1e-2, 10.0, 10);
    let mut pts = Vec::new();
    for &y in &side {
        for &t in &side {
            pts.push((y, t));
        }
    }
    let coarse = family_grid();
    let fine = refine_grid(&coarse, false);
    let mut ok = true;
    let mut detail = Vec::new();
    for ((name, f), (_, f2)) in test_family(coarse)?.into_iter().zip(test_family(fine)?) {
        let ratio_on = |f: &SampledFunction| -> Result<f64> {
            let gb = gradient_bound_check(1.0, f, &pts, spec)?;
            let bmo = bmo_o_norm(f, &IntervalFamily::from_grid(f.grid())?)?;
            Ok(gb / bmo)
        };
        let r0 = ratio_on(&f)?;
        let r1 = ratio_on(&f2)?;
        let drift = (r1 - r0).abs() / r0;
        ok &= r0.is_finite() && r1.is_finite() && drift <= TOL_GRADIENT_RATIO_DRIFT;
        detail.push(format!("{name} {r0:.3} drift {:.1}%", 100.0 * drift));
    }
    Ok((
        ok,
        format!("t|grad u| sup over bmo_o, stable under grid refinement: {}", detail.join(", ")),
    ))
}

/// Every maximizing interval can be shrunk until its ends sit on atoms or
/// its length equals some atom height, so scanning those candidates is an
/// exhaustive search, not a discretization.
fn brute_force_carleson(atoms: &[Atom]) -> f64 {
    let window = |left: f64, len: f64| -> f64 {
        let right = left + len;
        let mut s = 0.0;
        for a in atoms {
            if a.y >= left && a.y <= right && a.t <= len {
                s += a.w.abs();
            }
        }
        s / len
    };
    let mut best = 0.0f64;
    for i in atoms {
        for j in atoms {
            if j.y > i.y {
                best = best.max(window(i.y, j.y - i.y));
            }
            best = best.max(window(i.y, j.t));
        }
    }
    best
}

fn carleson_norm_oracle(_spec: &QuadratureSpec) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_CARLESON);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=10);
        let atoms: Vec<Atom> = (0..n)
            .map(|_| Atom {
                y: rng.gen_range(0.1..5.0),
                t: rng.gen_range(0.05..3.0),
                w: rng.gen_range(-2.0..2.0),
            })
            .collect();
        let mu = DiscreteMeasure::new(atoms.clone())?;
        worst = worst.max((carleson_norm(&mu) - brute_force_carleson(&atoms)).abs());
    }
    let ok = worst <= TOL_CARLESON_ORACLE;
    Ok((
        ok,
        format!(
            "exact norm vs exhaustive candidate scan on 100 seeded measures: max abs gap {worst:.2e} (tol {TOL_CARLESON_ORACLE:.0e})"
        ),
    ))
}

fn balayage_bmo_ratio(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_BALAYAGE);
    let mut max_ratio = [0.0f64; 2];
    let mut cross = 0.0f64;
    for draw in 0..20 {
        let atoms: Vec<Atom> = (0..50)
            .map(|_| Atom {
                y: rng.gen_range(0.1..2.0),
                t: rng.gen_range(0.05..1.0),
                w: rng.gen_range(0.0..1.0),
            })
            .collect();
        let mu = DiscreteMeasure::new(atoms.clone())?;
        let cn = carleson_norm(&mu);
        let y_min = atoms.iter().map(|a| a.y).fold(f64::INFINITY, f64::min);
        let y_max = atoms.iter().map(|a| a.y).fold(0.0f64, f64::max);
        let t_max = atoms.iter().map(|a| a.t).fold(0.0f64, f64::max);
        let lo = (0.02 * y_min).max(1e-6);
        let hi = 4.0 * (y_max + t_max);
        for (slot, pts) in [(0usize, 240usize), (1, 480)] {
            let grid = log_grid(lo, hi, pts);
            let mut values = Vec::with_capacity(grid.len());
            for &x in &grid {
                values.push(balayage_poisson(1.0, &mu, x, spec)?);
            }
            let s = SampledFunction::new(grid.clone(), values, hi)?;
            let bmo = bmo_o_norm(&s, &IntervalFamily::from_grid(&grid)?)?;
            let ratio = bmo / cn;
            max_ratio[slot] = max_ratio[slot].max(ratio);
            if draw == 0 && slot == 0 {
                // Same construction as the library check; ties the two.
                let (_, _, r) = check_balayage_bmo(1.0, &mu, spec)?;
                cross = (r - ratio).abs() / ratio;
            }
        }
    }
    let drift = (max_ratio[1] - max_ratio[0]).abs() / max_ratio[0];
    let ok = max_ratio[0] <= BALAYAGE_RATIO_CAP
        && drift <= TOL_BALAYAGE_DRIFT
        && cross <= 1e-9;
    Ok((
        ok,
        format!(
            "bmo over carleson on 20 seeded measures: max ratio {:.3} (cap {BALAYAGE_RATIO_CAP}), drift {:.2}% under grid doubling (tol {:.0}%)",
            max_ratio[0],
            100.0 * drift,
            100.0 * TOL_BALAYAGE_DRIFT
        ),
    ))
}

fn norm_family_ranking(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let y_grid = lin_grid(0.01, 1.99, 34);
    let t_grid = log_grid(0.02, 2.0, 17);
    let mut rows = Vec::new();
    for (name, f) in test_family(family_grid())? {
        let bmo = bmo_o_norm(&f, &IntervalFamily::from_grid(f.grid())?)?;
        let mu = theorem_a_measure(1.0, &f, &y_grid, &t_grid, *spec)?;
        rows.push((name, bmo, carleson_norm(&mu).sqrt()));
    }
    let mut by_bmo: Vec<&str> = rows.iter().map(|r| r.0).collect();
    by_bmo.sort_by(|a, b| {
        let fa = rows.iter().find(|r| r.0 == *a).unwrap().1;
        let fb = rows.iter().find(|r| r.0 == *b).unwrap().1;
        fa.partial_cmp(&fb).unwrap()
    });
    let mut by_cn: Vec<&str> = rows.iter().map(|r| r.0).collect();
    by_cn.sort_by(|a, b| {
        let fa = rows.iter().find(|r| r.0 == *a).unwrap().2;
        let fb = rows.iter().find(|r| r.0 == *b).unwrap().2;
        fa.partial_cmp(&fb).unwrap()
    });
    let ratios: Vec<f64> = rows.iter().map(|r| r.2 / r.1).collect();
    let window = ratios.iter().cloned().fold(0.0f64, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = by_bmo == by_cn && window <= NORM_WINDOW_CAP;
    let listed: Vec<String> = rows
        .iter()
        .map(|r| format!("{} bmo {:.3} sqrt-carleson {:.3}", r.0, r.1, r.2))
        .collect();
    Ok((
        ok,
        format!(
            "{}; same ranking, ratio window {window:.2}x (cap {NORM_WINDOW_CAP}x)",
            listed.join("; ")
        ),
    ))
}

fn stopping_tree_exactness(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let f = SampledFunction::indicator(0.0, 1.0, family_grid(), 1.0)?;
    let tree = calibrated_tree(1.0, &f, 6, spec)?;
    let mut ok = packing_check(&tree).iter().all(|r| r.ok);
    for gen in tree.generations() {
        for (i, a) in gen.iter().enumerate() {
            for b in &gen[i + 1..] {
                ok &= a.right() <= b.left() || b.right() <= a.left();
            }
        }
    }
    let mut nodes = 0usize;
    for gen in tree.generations() {
        for &q in gen {
            nodes += 1;
            let (bases, tiles) = sigma_tiles(&tree, q)?;
            for (i, a) in tiles.iter().enumerate() {
                for b in &tiles[i + 1..] {
                    let (al, ar) = a.y_range();
                    let (bl, br) = b.y_range();
                    let (ab, at) = a.t_range();
                    let (bb, bt) = b.t_range();
                    ok &= !(al.max(bl) < ar.min(br) && ab.max(bb) < at.min(bt));
                }
            }
            // All terms are dyadic rationals well inside f64 range, so the
            // area bookkeeping must close exactly, not approximately.
            let tile_area: f64 = tiles.iter().map(|t| t.area()).sum();
            let child_boxes: f64 =
                tree.children_of(q).iter().map(|c| c.length() * c.length()).sum();
            let floor_strip: f64 = bases
                .iter()
                .filter(|j| j.level == tree.max_level())
                .map(|j| 0.5 * j.length() * j.length())
                .sum();
            ok &= tile_area + child_boxes + floor_strip == q.length() * q.length();
        }
    }
    Ok((
        ok,
        format!(
            "calibrated tree ({} nodes): packing, disjointness, and tile-area identity all exact",
            nodes
        ),
    ))
}

fn oscillation_stability(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let f = SampledFunction::indicator(0.0, 1.0, family_grid(), 1.0)?;
    let tree = calibrated_tree(1.0, &f, 6, spec)?;
    let r1 = oscillation_check(&tree, 128, spec)?;
    let r2 = oscillation_check(&tree, 256, spec)?;
    let drift = (r2.max_ratio - r1.max_ratio).abs() / r1.max_ratio;
    let ok = r1.max_ratio.is_finite() && r2.max_ratio.is_finite() && drift <= TOL_OSCILLATION_DRIFT;
    Ok((
        ok,
        format!(
            "sampled deviation ratio {:.4} at 128 samples, drift {:.2}% at 256 (tol {:.0}%)",
            r1.max_ratio,
            100.0 * drift,
            100.0 * TOL_OSCILLATION_DRIFT
        ),
    ))
}

fn reconstruction_residual_trend(spec: &QuadratureSpec) -> Result<(bool, String)> {
    let f = SampledFunction::indicator(0.0, 1.0, family_grid(), 1.0)?;
    let x_grid = lin_grid(0.02, 1.98, 99);
    let mut residuals = Vec::new();
    let mut g_inf = 0.0f64;
    let mut mu_norm = 0.0f64;
    for n in 2..=5u32 {
        let rec = reconstruct(1.0, &f, n, &x_grid, spec)?;
        residuals.push(rec.residual);
        if n == 5 {
            g_inf = rec.g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            mu_norm = carleson_norm(&rec.mu);
        }
    }
    let mut ok = true;
    for w in residuals.windows(2) {
        ok &= w[1] <= w[0] * RESIDUAL_STEP_SLACK;
    }
    ok &= residuals[3] <= RESIDUAL_TOTAL_DROP * residuals[0];
    ok &= g_inf.is_finite() && mu_norm.is_finite();
    Ok((
        ok,
        format!(
            "chi_(0,1), lambda=1: residuals {:.4}, {:.4}, {:.4}, {:.4} over n=2..5; sup|g| {g_inf:.4}, carleson norm {mu_norm:.4}",
            residuals[0], residuals[1], residuals[2], residuals[3]
        ),
    ))
}
