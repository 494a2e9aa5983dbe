//! Boundary bookkeeping of the carved regions at resolution 2^-n.
//!
//! Each region between a node Q and its stopped children is cut off below
//! t = 2^-n and its boundary split into horizontal and vertical segments.
//! First-kind densities (M1 horizontal, L1 vertical) are discretized into
//! measure atoms, bottom-floor segments feed the bounded part g1 through
//! their boundary limit f - c_Q x^lambda, and every segment is also
//! returned with precomputed extension deviations so the second-kind
//! densities (a kernel derivative times u - c_Q y^lambda) can be summed
//! directly per observation point.

use crate::carleson::{Atom, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::quad::{self, QuadratureSpec};
use crate::semigroup::PoissonField;

use super::{grow_panels, DyadicInterval, GenerationTree, CTX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Horizontal,
    Vertical,
}

/// One quadrature node on a boundary segment. `pos` is y on a horizontal
/// segment and t on a vertical one; `dev` is u - c_Q y^lambda there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentNode {
    pub pos: f64,
    pub weight: f64,
    pub dev: f64,
}

/// A signed boundary segment of one carved region, with its quadrature
/// nodes. Horizontal: span is the y-interval, `at` the height t.
/// Vertical: span is the t-interval, `at` the abscissa.
#[derive(Debug, Clone)]
pub struct BoundaryTerm {
    pub kind: SegmentKind,
    pub q: DyadicInterval,
    pub span: (f64, f64),
    pub at: f64,
    pub sign: f64,
    pub nodes: Vec<SegmentNode>,
}

struct RawSegment {
    kind: SegmentKind,
    span: (f64, f64),
    at: f64,
    sign: f64,
    /// First-kind density goes into the measure; false for bottom-floor
    /// segments whose first-kind part is replaced by g1.
    to_measure: bool,
    /// Bottom-floor segment contributing a g1 piece.
    bottom: bool,
}

/// Segments of the boundary of one region, rasterized on columns of
/// width 2^-n. Stopped children at least that wide raise the column
/// bottom to their own height; narrower ones fall below the floor and
/// are ignored here. The outside of Q is treated as height |Q|, which
/// makes the vertical walls telescope exactly against the horizontal
/// runs. Walls on the t-axis are dropped: the kernel vanishes there.
fn segments_for(tree: &GenerationTree, q: DyadicInterval, n: u32) -> Vec<RawSegment> {
    let s = 2.0f64.powi(-(n as i32));
    let shift = n + 1 - q.level;
    let cols = 1usize << shift;
    let base_col = q.index << shift;
    let mut bottom = vec![(s, false); cols];
    for &child in tree.children_of(q) {
        if child.level > n + 1 {
            continue;
        }
        let child_shift = n + 1 - child.level;
        let i0 = ((child.index << child_shift) - base_col) as usize;
        for slot in bottom.iter_mut().skip(i0).take(1usize << child_shift) {
            *slot = (child.length(), true);
        }
    }
    let col_x = |i: usize| (base_col + i as u64) as f64 * s;

    let mut segments = Vec::new();
    segments.push(RawSegment {
        kind: SegmentKind::Horizontal,
        span: (q.left(), q.right()),
        at: q.length(),
        sign: 1.0,
        to_measure: true,
        bottom: false,
    });
    let mut i = 0;
    while i < cols {
        let mut j = i + 1;
        while j < cols && bottom[j] == bottom[i] {
            j += 1;
        }
        let (h, covered) = bottom[i];
        segments.push(RawSegment {
            kind: SegmentKind::Horizontal,
            span: (col_x(i), col_x(j)),
            at: h,
            sign: -1.0,
            to_measure: covered,
            bottom: !covered,
        });
        i = j;
    }
    for w in 0..=cols {
        let h_l = if w == 0 { q.length() } else { bottom[w - 1].0 };
        let h_r = if w == cols { q.length() } else { bottom[w].0 };
        if h_l == h_r {
            continue;
        }
        let x_w = col_x(w);
        if x_w == 0.0 {
            continue;
        }
        segments.push(RawSegment {
            kind: SegmentKind::Vertical,
            span: (h_l.min(h_r), h_l.max(h_r)),
            at: x_w,
            sign: if h_l < h_r { 1.0 } else { -1.0 },
            to_measure: true,
            bottom: false,
        });
    }
    segments
}

/// Gauss nodes over a horizontal segment at height t, panel width <= t/3.
/// Returns the segment nodes and the first-kind atom weights
/// sign * (t du/dt - dev) * w.
fn discretize_horizontal(
    field: &PoissonField,
    c_q: f64,
    seg: &RawSegment,
    gl: &[(f64, f64)],
) -> Result<(Vec<SegmentNode>, Vec<Atom>)> {
    let lambda = field.lambda();
    let t = seg.at;
    let (y0, y1) = seg.span;
    let panels = (((y1 - y0) / (t / 3.0)).ceil() as usize).max(1);
    let width = (y1 - y0) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * gl.len());
    let mut atoms = Vec::with_capacity(panels * gl.len());
    for p in 0..panels {
        let mid = y0 + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for &(xn, wn) in gl {
            let y = mid + half * xn;
            let w = wn * half;
            let v = field.eval(y, t)?;
            let dev = v.value - c_q * y.powf(lambda);
            nodes.push(SegmentNode { pos: y, weight: w, dev });
            atoms.push(Atom { y, t, w: seg.sign * (t * v.dt - dev) * w });
        }
    }
    Ok((nodes, atoms))
}

/// Gauss nodes over a vertical segment at abscissa x_w, geometric panels
/// of width ~ t/3. First-kind atom weights are sign * t D_lambda u * w.
fn discretize_vertical(
    field: &PoissonField,
    c_q: f64,
    seg: &RawSegment,
    gl: &[(f64, f64)],
) -> Result<(Vec<SegmentNode>, Vec<Atom>)> {
    let lambda = field.lambda();
    let x_w = seg.at;
    let xl = x_w.powf(lambda);
    let mut nodes = Vec::new();
    let mut atoms = Vec::new();
    for tw in grow_panels(seg.span.0, seg.span.1).windows(2) {
        let half = 0.5 * (tw[1] - tw[0]);
        let mid = 0.5 * (tw[0] + tw[1]);
        for &(xn, wn) in gl {
            let t = mid + half * xn;
            let w = wn * half;
            let v = field.eval(x_w, t)?;
            let dev = v.value - c_q * xl;
            nodes.push(SegmentNode { pos: t, weight: w, dev });
            atoms.push(Atom { y: x_w, t, w: seg.sign * t * v.dlam * w });
        }
    }
    Ok((nodes, atoms))
}

/// Boundary data of every region at resolution 2^-n: the bounded bottom
/// part g1, the first-kind measure, and all segments with their cached
/// deviations for the second-kind sums.
///
/// g1 carries f - c_Q x^lambda on each bottom-floor run, 0 elsewhere,
/// sampled finely enough to keep the run edges and the kinks of f.
pub fn extract_boundary_measure(
    tree: &GenerationTree,
    n: u32,
    spec: &QuadratureSpec,
) -> Result<(SampledFunction, DiscreteMeasure, Vec<BoundaryTerm>)> {
    spec.validate(CTX)?;
    if n < 1 || n > tree.max_level() {
        return Err(Error::usage(
            CTX,
            format!("resolution n = {n} must lie in 1..=max_level = {}", tree.max_level()),
        ));
    }
    let gl = quad::legendre_nodes(4);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut terms: Vec<BoundaryTerm> = Vec::new();
    let mut runs: Vec<(f64, f64, f64)> = Vec::new();
    for gen in tree.generations() {
        for &q in gen {
            // Regions of nodes at or below the resolution floor are cut
            // away entirely.
            if q.level > n {
                continue;
            }
            let c_q = tree.c_of(q).unwrap();
            for seg in segments_for(tree, q, n) {
                let (nodes, seg_atoms) = match seg.kind {
                    SegmentKind::Horizontal => {
                        discretize_horizontal(tree.field(), c_q, &seg, &gl)?
                    }
                    SegmentKind::Vertical => discretize_vertical(tree.field(), c_q, &seg, &gl)?,
                };
                if seg.to_measure {
                    atoms.extend(seg_atoms.into_iter().filter(|a| a.w != 0.0));
                }
                if seg.bottom {
                    runs.push((seg.span.0, seg.span.1, c_q));
                }
                terms.push(BoundaryTerm {
                    kind: seg.kind,
                    q,
                    span: seg.span,
                    at: seg.at,
                    sign: seg.sign,
                    nodes,
                });
            }
        }
    }
    let g1 = assemble_bottom(tree.function(), tree.lambda(), &runs, 2.0f64.powi(-(n as i32)))?;
    let mu = if atoms.is_empty() { DiscreteMeasure::empty() } else { DiscreteMeasure::new(atoms)? };
    Ok((g1, mu, terms))
}

/// Samples the bottom-run values f - c_Q x^lambda into one function on
/// (0, 2). Each run edge gets a pair of points a hair inside and outside
/// so the jumps survive interpolation; the kinks of f inside a run are
/// kept verbatim.
fn assemble_bottom(
    f: &SampledFunction,
    lambda: f64,
    runs: &[(f64, f64, f64)],
    resolution: f64,
) -> Result<SampledFunction> {
    let delta = resolution * 1e-6;
    let mut pieces: Vec<(f64, f64, f64)> = runs.to_vec();
    pieces.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let mut pts: Vec<f64> = Vec::new();
    for &(x0, x1, _) in &pieces {
        pts.push(x0 - delta);
        pts.push(x0 + delta);
        pts.push(x1 - delta);
        pts.push(x1 + delta);
        let m = (((x1 - x0) / (0.25 * resolution)).round() as usize).max(2);
        for i in 1..m {
            pts.push(x0 + (x1 - x0) * i as f64 / m as f64);
        }
        let g = f.grid();
        let lo = g.partition_point(|&p| p <= x0 + delta);
        let hi = g.partition_point(|&p| p < x1 - delta);
        pts.extend_from_slice(&g[lo..hi]);
    }
    pts.retain(|p| *p > 0.0 && *p < 2.0);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < delta * 1e-3);
    if pts.len() < 2 {
        return SampledFunction::zero(vec![1.0, 2.0], 2.0);
    }
    let values = pts
        .iter()
        .map(|&x| {
            let i = pieces.partition_point(|p| p.0 <= x);
            if i > 0 && x < pieces[i - 1].1 {
                f.value_at(x) - pieces[i - 1].2 * x.powf(lambda)
            } else {
                0.0
            }
        })
        .collect();
    SampledFunction::new(pts, values, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_generations, calibrated_tree};
    use crate::grid::lin_grid;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn chi01() -> SampledFunction {
        SampledFunction::indicator(0.0, 1.0, lin_grid(0.002, 1.002, 201), 1.0).unwrap()
    }

    #[test]
    fn zero_function_extracts_nothing() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        let tree = build_generations(1.0, &f, 0.5, 5, &spec()).unwrap();
        let (g1, mu, terms) = extract_boundary_measure(&tree, 3, &spec()).unwrap();
        assert!(g1.values().iter().all(|v| *v == 0.0));
        assert!(mu.atoms().is_empty());
        assert!(!terms.is_empty());
        for term in &terms {
            assert!(term.nodes.iter().all(|nd| nd.dev == 0.0));
        }
    }

    #[test]
    fn rejects_out_of_range_resolution() {
        let tree = build_generations(1.0, &chi01(), 1e6, 5, &spec()).unwrap();
        assert!(extract_boundary_measure(&tree, 0, &spec()).is_err());
        assert!(extract_boundary_measure(&tree, 6, &spec()).is_err());
    }

    // Around each region the signed segment spans must telescope: the
    // horizontal spans cancel between the top and the bottom profile, and
    // the vertical spans cancel along the height profile except for the
    // dropped wall on the t-axis, whose hole equals |Q| minus the first
    // column's bottom height.
    #[test]
    fn signed_spans_telescope_around_each_region() {
        let f = chi01();
        let n = 3;
        let tree = calibrated_tree(1.0, &f, 5, &spec()).unwrap();
        let (_, _, terms) = extract_boundary_measure(&tree, n, &spec()).unwrap();
        for gen in tree.generations() {
            for &q in gen {
                if q.level > n {
                    continue;
                }
                let mine: Vec<&BoundaryTerm> = terms.iter().filter(|t| t.q == q).collect();
                assert!(!mine.is_empty());
                let h_sum: f64 = mine
                    .iter()
                    .filter(|t| t.kind == SegmentKind::Horizontal)
                    .map(|t| t.sign * (t.span.1 - t.span.0))
                    .sum();
                assert_eq!(h_sum, 0.0, "horizontal closure at level {}", q.level);
                let v_sum: f64 = mine
                    .iter()
                    .filter(|t| t.kind == SegmentKind::Vertical)
                    .map(|t| t.sign * (t.span.1 - t.span.0))
                    .sum();
                let expected = if q.left() == 0.0 {
                    let first_bottom = mine
                        .iter()
                        .find(|t| {
                            t.kind == SegmentKind::Horizontal && t.sign < 0.0 && t.span.0 == 0.0
                        })
                        .map(|t| t.at)
                        .unwrap();
                    q.length() - first_bottom
                } else {
                    0.0
                };
                assert_eq!(v_sum, expected, "vertical closure at level {}", q.level);
            }
        }
    }

    #[test]
    fn segment_nodes_sit_inside_their_spans() {
        let tree = calibrated_tree(1.0, &chi01(), 5, &spec()).unwrap();
        let (_, mu, terms) = extract_boundary_measure(&tree, 3, &spec()).unwrap();
        assert!(!mu.atoms().is_empty());
        for a in mu.atoms() {
            assert!(a.t > 0.0 && a.t <= 2.0 && a.y > 0.0 && a.y <= 2.0);
        }
        for term in &terms {
            assert!(term.sign == 1.0 || term.sign == -1.0);
            assert!(term.span.0 < term.span.1);
            assert!(!term.nodes.is_empty());
            for nd in &term.nodes {
                assert!(nd.pos > term.span.0 && nd.pos < term.span.1);
                assert!(nd.weight > 0.0 && nd.dev.is_finite());
            }
            match term.kind {
                SegmentKind::Horizontal => assert!(term.at > 0.0 && term.at <= 2.0),
                SegmentKind::Vertical => assert!(term.at > 0.0 && term.at <= 2.0),
            }
        }
    }

    // Independent route to the bottom values: walk the generation chain at
    // a point x down to the deepest node wider than the resolution and
    // read off whether its stopped child covers the column.
    fn bottom_value_at(
        tree: &GenerationTree,
        n: u32,
        x: f64,
    ) -> f64 {
        let s = 2.0f64.powi(-(n as i32));
        let mut q = DyadicInterval::root();
        loop {
            let child = tree
                .children_of(q)
                .iter()
                .copied()
                .find(|ch| ch.left() <= x && x < ch.right());
            match child {
                Some(ch) if ch.length() > s => q = ch,
                Some(ch) if ch.length() == s => return 0.0,
                _ => {
                    let c_q = tree.c_of(q).unwrap();
                    let lambda = tree.lambda();
                    return tree.function().value_at(x) - c_q * x.powf(lambda);
                }
            }
        }
    }

    #[test]
    fn bottom_part_matches_the_generation_chain() {
        let f = chi01();
        let n = 3;
        let s = 2.0f64.powi(-(n as i32));
        let tree = calibrated_tree(1.0, &f, 5, &spec()).unwrap();
        let (g1, _, _) = extract_boundary_measure(&tree, n, &spec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 60 {
            let x: f64 = rng.gen_range(0.01..1.99);
            // Stay clear of the run-edge ramps.
            if (x / s - (x / s).round()).abs() * s < 1e-4 {
                continue;
            }
            let expected = bottom_value_at(&tree, n, x);
            let got = g1.value_at(x);
            assert!(
                (got - expected).abs() <= 1e-10,
                "x = {x}: got {got}, chain says {expected}"
            );
            checked += 1;
        }
        let sup = g1.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup > 0.0, "a jump function must leave a visible bottom part");
    }

    #[test]
    fn measure_norm_is_finite_across_resolutions() {
        let tree = calibrated_tree(1.0, &chi01(), 4, &spec()).unwrap();
        let mut previous = 0.0;
        for n in [2u32, 3] {
            let (_, mu, _) = extract_boundary_measure(&tree, n, &spec()).unwrap();
            let tv = mu.total_variation();
            assert!(tv.is_finite() && tv > 0.0);
            assert!(tv > previous, "finer resolution sees more boundary");
            previous = tv;
        }
    }
}
