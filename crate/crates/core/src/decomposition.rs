//! Stopping-time generations on the dyadic tree of [0, 2), the tent tiling
//! of the carved regions between generations, and the Green-identity
//! bookkeeping that splits a function into a bounded part plus the balayage
//! of a discrete measure: boundary extraction and a reconstruction residual.
//!
//! Throughout, u is the Poisson extension of the boundary function f and
//! every dyadic interval Q carries the scalar c_Q = x_Q^{-lambda} u(x_Q, t_Q)
//! read at its center x_Q and height t_Q = |Q|.

mod boundary;
mod green;
mod recon;

pub use boundary::{extract_boundary_measure, BoundaryTerm, SegmentKind, SegmentNode};
pub use green::{green_identity_check, green_identity_on};
pub use recon::{reconstruct, ReconSample, Reconstruction};

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{require_positive, Error, Result};
use crate::grid::{SampledFunction, Tail};
use crate::quad::QuadratureSpec;
use crate::semigroup::PoissonField;
use crate::spaces::{bmo_o_norm, IntervalFamily};

const CTX: &str = "decomposition";

/// Deepest dyadic level the tree construction will visit.
pub const MAX_TREE_LEVEL: u32 = 20;

/// A right-open dyadic subinterval of [0, 2):
/// [2^{1-level} index, 2^{1-level} (index + 1)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level > 60 {
            return Err(Error::usage(CTX, format!("dyadic level {level} too deep")));
        }
        if index >= 1u64 << level {
            return Err(Error::usage(
                CTX,
                format!("dyadic index {index} out of range at level {level}"),
            ));
        }
        Ok(DyadicInterval { level, index })
    }

    pub const fn root() -> Self {
        DyadicInterval { level: 0, index: 0 }
    }

    /// |Q| = 2^{1-level}; exact in floating point.
    pub fn length(&self) -> f64 {
        2.0f64.powi(1 - self.level as i32)
    }

    pub fn left(&self) -> f64 {
        self.length() * self.index as f64
    }

    pub fn right(&self) -> f64 {
        self.length() * (self.index + 1) as f64
    }

    /// x_Q, the midpoint.
    pub fn center(&self) -> f64 {
        self.length() * (self.index as f64 + 0.5)
    }

    pub fn children(&self) -> (DyadicInterval, DyadicInterval) {
        let l = DyadicInterval { level: self.level + 1, index: 2 * self.index };
        let r = DyadicInterval { level: self.level + 1, index: 2 * self.index + 1 };
        (l, r)
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        if self.level == 0 {
            None
        } else {
            Some(DyadicInterval { level: self.level - 1, index: self.index / 2 })
        }
    }

    /// Dyadic containment other subset self, by integer arithmetic.
    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.level >= self.level && (other.index >> (other.level - self.level)) == self.index
    }
}

/// The tent over J: J x [|J|/2, |J|). Tents of distinct intervals are
/// disjoint and the tents of all dyadic subintervals of S tile the
/// Carleson box over S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tile {
    pub base: DyadicInterval,
}

impl Tile {
    pub fn y_range(&self) -> (f64, f64) {
        (self.base.left(), self.base.right())
    }

    pub fn t_range(&self) -> (f64, f64) {
        (0.5 * self.base.length(), self.base.length())
    }

    pub fn area(&self) -> f64 {
        let l = self.base.length();
        0.5 * l * l
    }
}

/// Generations of the stopping-time construction, with the per-node
/// extension values cached at build time. Immutable once built.
pub struct GenerationTree {
    lambda: f64,
    threshold: f64,
    f: SampledFunction,
    max_level: u32,
    generations: Vec<Vec<DyadicInterval>>,
    parent: HashMap<DyadicInterval, DyadicInterval>,
    children: HashMap<DyadicInterval, Vec<DyadicInterval>>,
    gen_of: HashMap<DyadicInterval, usize>,
    c: HashMap<DyadicInterval, f64>,
    field: Arc<PoissonField>,
}

impl GenerationTree {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The stopping threshold the tree was built with.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn function(&self) -> &SampledFunction {
        &self.f
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Generation k holds the members of G_k, sorted by (level, index).
    /// G_0 is always the single root [0, 2).
    pub fn generations(&self) -> &[Vec<DyadicInterval>] {
        &self.generations
    }

    pub fn parent_of(&self, q: DyadicInterval) -> Option<DyadicInterval> {
        self.parent.get(&q).copied()
    }

    /// Next-generation members contained in q, sorted.
    pub fn children_of(&self, q: DyadicInterval) -> &[DyadicInterval] {
        self.children.get(&q).map_or(&[], |v| v.as_slice())
    }

    pub fn generation_of(&self, q: DyadicInterval) -> Option<usize> {
        self.gen_of.get(&q).copied()
    }

    /// c_Q for a tree member.
    pub fn c_of(&self, q: DyadicInterval) -> Option<f64> {
        if self.gen_of.contains_key(&q) {
            self.c.get(&q).copied()
        } else {
            None
        }
    }

    pub fn node_count(&self) -> usize {
        self.gen_of.len()
    }

    pub(crate) fn field(&self) -> &PoissonField {
        &self.field
    }

    /// One node per line: "k level index c_Q".
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (k, gen) in self.generations.iter().enumerate() {
            for q in gen {
                writeln!(w, "{} {} {} {:.12e}", k, q.level, q.index, self.c[q])?;
            }
        }
        Ok(())
    }
}

/// Per-node cache of c_Q shared between the calibration retries, so the
/// doubling search pays for each kernel quadrature once.
struct NodeCache {
    lambda: f64,
    field: Arc<PoissonField>,
    c: HashMap<DyadicInterval, f64>,
}

impl NodeCache {
    fn new(lambda: f64, f: &SampledFunction, spec: &QuadratureSpec) -> Result<Self> {
        let field = Arc::new(PoissonField::new(lambda, f.clone(), *spec)?);
        Ok(NodeCache { lambda, field, c: HashMap::new() })
    }

    fn c_value(&mut self, q: DyadicInterval) -> Result<f64> {
        if let Some(&v) = self.c.get(&q) {
            return Ok(v);
        }
        let x = q.center();
        let u = self.field.eval(x, q.length()).map_err(|e| {
            Error::range(
                CTX,
                format!("extension failed at node level {} index {}: {e}", q.level, q.index),
            )
        })?;
        let v = x.powf(-self.lambda) * u.value;
        self.c.insert(q, v);
        Ok(v)
    }
}

fn check_build_inputs(f: &SampledFunction, max_level: u32) -> Result<()> {
    if max_level > MAX_TREE_LEVEL {
        return Err(Error::usage(
            CTX,
            format!("max_level {max_level} exceeds the cap {MAX_TREE_LEVEL}"),
        ));
    }
    if f.support_bound() > 1.0 {
        return Err(Error::domain(
            CTX,
            format!("f must be supported in (0, 1); support bound is {}", f.support_bound()),
        ));
    }
    if let Tail::Power { coeff, .. } = f.tail() {
        if coeff != 0.0 {
            return Err(Error::domain(CTX, "f must be supported in (0, 1); drop the power tail"));
        }
    }
    Ok(())
}

/// Generations and parent links for one threshold, reusing cached c_Q.
fn descend(
    cache: &mut NodeCache,
    threshold: f64,
    max_level: u32,
) -> Result<(Vec<Vec<DyadicInterval>>, HashMap<DyadicInterval, DyadicInterval>)> {
    let lambda = cache.lambda;
    let root = DyadicInterval::root();
    cache.c_value(root)?;
    let mut generations = vec![vec![root]];
    let mut parent = HashMap::new();
    loop {
        let current = generations.last().unwrap().clone();
        let mut next: Vec<DyadicInterval> = Vec::new();
        for q1 in current {
            let c1 = cache.c_value(q1)?;
            // Breadth-first over strict descendants; a node that triggers
            // the stopping rule joins the next generation and seals its
            // subtree, which is exactly dyadic maximality.
            let mut queue: VecDeque<DyadicInterval> = VecDeque::new();
            if q1.level < max_level {
                let (l, r) = q1.children();
                queue.push_back(l);
                queue.push_back(r);
            }
            while let Some(q) = queue.pop_front() {
                let cq = cache.c_value(q)?;
                if (cq - c1).abs() > threshold * q.center().powf(-lambda) {
                    next.push(q);
                    parent.insert(q, q1);
                } else if q.level < max_level {
                    let (l, r) = q.children();
                    queue.push_back(l);
                    queue.push_back(r);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort();
        generations.push(next);
    }
    Ok((generations, parent))
}

fn assemble(
    cache: &NodeCache,
    f: &SampledFunction,
    threshold: f64,
    max_level: u32,
    generations: Vec<Vec<DyadicInterval>>,
    parent: HashMap<DyadicInterval, DyadicInterval>,
) -> GenerationTree {
    let mut children: HashMap<DyadicInterval, Vec<DyadicInterval>> = HashMap::new();
    for (&q, &p) in &parent {
        children.entry(p).or_default().push(q);
    }
    for v in children.values_mut() {
        v.sort();
    }
    let mut gen_of = HashMap::new();
    let mut c = HashMap::new();
    for (k, gen) in generations.iter().enumerate() {
        for &q in gen {
            gen_of.insert(q, k);
            c.insert(q, cache.c[&q]);
        }
    }
    GenerationTree {
        lambda: cache.lambda,
        threshold,
        f: f.clone(),
        max_level,
        generations,
        parent,
        children,
        gen_of,
        c,
        field: Arc::clone(&cache.field),
    }
}

/// Builds the stopping-time generations for a given threshold.
///
/// Starting from G_0 = {[0, 2)}, a dyadic Q descends from a member Q_1 of
/// the current generation into G_{k+1} when it is maximal with
/// |c_Q - c_{Q_1}| > threshold * x_Q^{-lambda}. Descent stops at
/// `max_level`. f must be supported in (0, 1).
pub fn build_generations(
    lambda: f64,
    f: &SampledFunction,
    threshold: f64,
    max_level: u32,
    spec: &QuadratureSpec,
) -> Result<GenerationTree> {
    spec.validate(CTX)?;
    require_positive(CTX, "threshold", threshold)?;
    check_build_inputs(f, max_level)?;
    let mut cache = NodeCache::new(lambda, f, spec)?;
    let (generations, parent) = descend(&mut cache, threshold, max_level)?;
    Ok(assemble(&cache, f, threshold, max_level, generations, parent))
}

/// Lower end of the calibration search.
pub const CALIBRATION_FLOOR: f64 = 1e-3;
/// The search gives up beyond this threshold.
pub const CALIBRATION_CEILING: f64 = 1099511627776.0; // 2^40

/// Smallest threshold in the doubling sequence starting at
/// [`CALIBRATION_FLOOR`] for which every node passes the packing check.
pub fn calibrate_threshold(
    lambda: f64,
    f: &SampledFunction,
    max_level: u32,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate(CTX)?;
    check_build_inputs(f, max_level)?;
    let mut cache = NodeCache::new(lambda, f, spec)?;
    calibrate_with_cache(&mut cache, max_level).map(|(a, _, _)| a)
}

/// Calibrates the threshold and builds the final tree in one pass, sharing
/// the node evaluations between the retries.
pub fn calibrated_tree(
    lambda: f64,
    f: &SampledFunction,
    max_level: u32,
    spec: &QuadratureSpec,
) -> Result<GenerationTree> {
    spec.validate(CTX)?;
    check_build_inputs(f, max_level)?;
    let mut cache = NodeCache::new(lambda, f, spec)?;
    let (a, generations, parent) = calibrate_with_cache(&mut cache, max_level)?;
    Ok(assemble(&cache, f, a, max_level, generations, parent))
}

type RawTree = (Vec<Vec<DyadicInterval>>, HashMap<DyadicInterval, DyadicInterval>);

fn calibrate_with_cache(
    cache: &mut NodeCache,
    max_level: u32,
) -> Result<(f64, Vec<Vec<DyadicInterval>>, HashMap<DyadicInterval, DyadicInterval>)> {
    let mut a = CALIBRATION_FLOOR;
    loop {
        let (generations, parent): RawTree = descend(cache, a, max_level)?;
        let packed = generations.iter().enumerate().all(|(k, gen)| {
            gen.iter().all(|&q| child_length_sum(&generations, &parent, k, q) <= 0.5 * q.length())
        });
        if packed {
            return Ok((a, generations, parent));
        }
        a *= 2.0;
        if a > CALIBRATION_CEILING {
            return Err(Error::calibration(
                CTX,
                format!("no threshold up to {CALIBRATION_CEILING:.0} satisfies the packing bound"),
            ));
        }
    }
}

fn child_length_sum(
    generations: &[Vec<DyadicInterval>],
    parent: &HashMap<DyadicInterval, DyadicInterval>,
    k: usize,
    q: DyadicInterval,
) -> f64 {
    match generations.get(k + 1) {
        None => 0.0,
        Some(next) => next
            .iter()
            .filter(|j| parent.get(j) == Some(&q))
            .map(|j| j.length())
            .sum(),
    }
}

/// One row of the packing report: the total length of a node's
/// next-generation children against half its own length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackingRow {
    pub q: DyadicInterval,
    pub generation: usize,
    pub child_total: f64,
    pub ratio: f64,
    pub ok: bool,
}

/// Per-node packing ratios sum |children| / |Q|. All lengths are dyadic,
/// so the sums and the 1/2 comparison are exact. An uncalibrated tree may
/// report violations; nothing fails here.
pub fn packing_check(tree: &GenerationTree) -> Vec<PackingRow> {
    let mut rows = Vec::with_capacity(tree.node_count());
    for (k, gen) in tree.generations.iter().enumerate() {
        for &q in gen {
            let child_total: f64 = tree.children_of(q).iter().map(|j| j.length()).sum();
            let ratio = child_total / q.length();
            rows.push(PackingRow { q, generation: k, child_total, ratio, ok: ratio <= 0.5 });
        }
    }
    rows
}

/// The region carved out over Q, as tents: every dyadic J inside Q, down
/// to the tree's max_level, that is not contained in a next-generation
/// member. Returns the interval family and the matching tents.
pub fn sigma_tiles(
    tree: &GenerationTree,
    q: DyadicInterval,
) -> Result<(Vec<DyadicInterval>, Vec<Tile>)> {
    if tree.generation_of(q).is_none() {
        return Err(Error::usage(
            CTX,
            format!("node level {} index {} is not a tree member", q.level, q.index),
        ));
    }
    let stopped = tree.children_of(q);
    let mut bases = Vec::new();
    let mut stack = vec![q];
    while let Some(j) = stack.pop() {
        if stopped.iter().any(|s| s.contains(&j)) {
            continue;
        }
        bases.push(j);
        if j.level < tree.max_level {
            let (l, r) = j.children();
            stack.push(r);
            stack.push(l);
        }
    }
    bases.sort();
    let tiles = bases.iter().map(|&base| Tile { base }).collect();
    Ok((bases, tiles))
}

/// Oscillation of the normalized extension over the carved regions.
#[derive(Debug, Clone)]
pub struct OscillationReport {
    /// threshold + oscillation norm of f; the denominator of every ratio.
    pub denominator: f64,
    pub max_ratio: f64,
    /// Worst sampled ratio per node, in generation order.
    pub per_node: Vec<(DyadicInterval, f64)>,
}

/// Samples each carved region and reports the worst value of
/// |u(x, t) - c_Q x^lambda| / (threshold + osc norm of f).
///
/// Samples are drawn per node from a fixed stream, tents weighted by area,
/// so doubling `sample_count` extends the draw instead of reshuffling it.
pub fn oscillation_check(
    tree: &GenerationTree,
    sample_count: usize,
    spec: &QuadratureSpec,
) -> Result<OscillationReport> {
    spec.validate(CTX)?;
    if sample_count == 0 {
        return Err(Error::usage(CTX, "sample_count must be positive"));
    }
    let family = IntervalFamily::from_grid(tree.f.grid())?;
    let denominator = tree.threshold + bmo_o_norm(&tree.f, &family)?;
    let lambda = tree.lambda;
    let mut per_node = Vec::with_capacity(tree.node_count());
    let mut max_ratio = 0.0f64;
    for gen in &tree.generations {
        for &q in gen {
            let (_, tiles) = sigma_tiles(tree, q)?;
            let mut cum = Vec::with_capacity(tiles.len());
            let mut total = 0.0;
            for tile in &tiles {
                total += tile.area();
                cum.push(total);
            }
            let c_q = tree.c[&q];
            let mut rng =
                ChaCha8Rng::seed_from_u64(0x51_6d4a ^ ((q.level as u64) << 40) ^ q.index);
            let mut worst = 0.0f64;
            for _ in 0..sample_count {
                let r = rng.gen_range(0.0..total);
                let i = cum.partition_point(|&c| c <= r).min(tiles.len() - 1);
                let base = tiles[i].base;
                // Strictly interior in x so the kernel point stays valid.
                let x = base.left() + (0.02 + 0.96 * rng.gen_range(0.0..1.0)) * base.length();
                let t = base.length() * (0.5 + 0.5 * rng.gen_range(0.0..1.0));
                let u = tree.field.eval(x, t)?;
                let dev = (u.value - c_q * x.powf(lambda)).abs();
                worst = worst.max(dev / denominator);
            }
            per_node.push((q, worst));
            max_ratio = max_ratio.max(worst);
        }
    }
    Ok(OscillationReport { denominator, max_ratio, per_node })
}

/// Geometrically growing panel edges from lo to hi, local width ~ t/3:
/// matched to integrands that vary on the scale of t itself.
pub(crate) fn grow_panels(lo: f64, hi: f64) -> Vec<f64> {
    let mut edges = vec![lo];
    let mut s = lo;
    while s < hi {
        s = (s + s / 3.0).min(hi);
        edges.push(s);
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lin_grid;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn chi01(n: usize) -> SampledFunction {
        SampledFunction::indicator(0.0, 1.0, lin_grid(0.002, 1.002, n), 1.0).unwrap()
    }

    #[test]
    fn dyadic_geometry_is_exact() {
        let q = DyadicInterval::new(3, 5).unwrap();
        assert_eq!(q.length(), 0.25);
        assert_eq!(q.left(), 1.25);
        assert_eq!(q.right(), 1.5);
        assert_eq!(q.center(), 1.375);
        let (l, r) = q.children();
        assert_eq!(l.left(), q.left());
        assert_eq!(l.right(), r.left());
        assert_eq!(r.right(), q.right());
        assert_eq!(l.parent(), Some(q));
        assert!(q.contains(&l) && q.contains(&r) && q.contains(&q));
        assert!(!l.contains(&q));
        let other = DyadicInterval::new(3, 4).unwrap();
        assert!(!other.contains(&q) && !q.contains(&other));
        assert!(DyadicInterval::new(3, 8).is_err());
        assert!(DyadicInterval::root().contains(&q));
    }

    #[test]
    fn zero_function_never_stops() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        let tree = build_generations(1.0, &f, 0.5, 6, &spec()).unwrap();
        assert_eq!(tree.generations().len(), 1);
        assert_eq!(tree.generations()[0], vec![DyadicInterval::root()]);
        assert_eq!(tree.c_of(DyadicInterval::root()), Some(0.0));
        let rows = packing_check(&tree);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].ok && rows[0].child_total == 0.0);
        let mut out = Vec::new();
        tree.write_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("0 0 0 "));
    }

    #[test]
    fn huge_threshold_stops_immediately() {
        let tree = build_generations(1.0, &chi01(201), 1e6, 6, &spec()).unwrap();
        assert_eq!(tree.generations().len(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = chi01(51);
        assert!(build_generations(1.0, &f, 0.0, 4, &spec()).is_err());
        assert!(build_generations(1.0, &f, 1.0, MAX_TREE_LEVEL + 1, &spec()).is_err());
        let wide = SampledFunction::indicator(0.0, 1.5, lin_grid(0.01, 1.51, 51), 1.5).unwrap();
        assert!(build_generations(1.0, &wide, 1.0, 4, &spec()).is_err());
        let tailed = chi01(51)
            .with_tail(Tail::Power { coeff: 1.0, exponent: -3.0 })
            .unwrap();
        assert!(build_generations(1.0, &tailed, 1.0, 4, &spec()).is_err());
    }

    #[test]
    fn generations_are_disjoint_nested_and_maximal() {
        let f = chi01(201);
        let threshold = 0.4;
        let tree = build_generations(1.0, &f, threshold, 6, &spec()).unwrap();
        assert!(tree.generations().len() > 1, "threshold chosen to produce a nontrivial tree");
        for gen in tree.generations() {
            for (i, a) in gen.iter().enumerate() {
                for b in &gen[i + 1..] {
                    assert!(!a.contains(b) && !b.contains(a));
                }
            }
        }
        for (k, gen) in tree.generations().iter().enumerate().skip(1) {
            for &q in gen {
                let p = tree.parent_of(q).unwrap();
                assert_eq!(tree.generation_of(p), Some(k - 1));
                assert!(p.contains(&q));
                let cq = tree.c_of(q).unwrap();
                let cp = tree.c_of(p).unwrap();
                assert!((cq - cp).abs() > threshold * q.center().powf(-1.0));
                // No ancestor strictly between q and its stopping parent
                // may trigger; otherwise q was not maximal.
                let mut r = q.parent().unwrap();
                while r != p {
                    let cr = tree.field().eval(r.center(), r.length()).unwrap().value
                        / r.center();
                    assert!(
                        (cr - cp).abs() <= threshold * r.center().powf(-1.0),
                        "intermediate ancestor triggered first"
                    );
                    r = r.parent().unwrap();
                }
            }
        }
    }

    #[test]
    fn packing_flags_tiny_threshold_without_failing() {
        let tree = build_generations(1.0, &chi01(201), 1e-6, 5, &spec()).unwrap();
        let rows = packing_check(&tree);
        assert!(rows.iter().any(|r| !r.ok), "a tiny threshold should overfill some node");
        assert!(rows.iter().any(|r| r.ratio > 0.5));
    }

    #[test]
    fn calibration_reaches_packing_and_is_monotone() {
        let f = chi01(201);
        let a = calibrate_threshold(1.0, &f, 5, &spec()).unwrap();
        assert!(a >= CALIBRATION_FLOOR);
        for factor in [1.0, 2.0] {
            let tree = build_generations(1.0, &f, a * factor, 5, &spec()).unwrap();
            assert!(packing_check(&tree).iter().all(|r| r.ok));
        }
        let tree = calibrated_tree(1.0, &f, 5, &spec()).unwrap();
        assert_eq!(tree.threshold(), a);
    }

    #[test]
    fn zero_function_calibrates_at_the_floor() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        assert_eq!(calibrate_threshold(1.0, &f, 6, &spec()).unwrap(), CALIBRATION_FLOOR);
    }

    #[test]
    fn tiles_of_a_childless_root_form_a_geometric_series() {
        let max_level = 5;
        let tree = build_generations(1.0, &chi01(101), 1e6, max_level, &spec()).unwrap();
        let (bases, tiles) = sigma_tiles(&tree, DyadicInterval::root()).unwrap();
        assert_eq!(bases.len(), (1usize << (max_level + 1)) - 1);
        let total: f64 = tiles.iter().map(|t| t.area()).sum();
        assert_eq!(total, 4.0 * (1.0 - 2.0f64.powi(-(max_level as i32 + 1))));
        for (i, a) in tiles.iter().enumerate() {
            for b in &tiles[i + 1..] {
                let (al, ar) = a.y_range();
                let (bl, br) = b.y_range();
                let (ab, at) = a.t_range();
                let (bb, bt) = b.t_range();
                let overlap = al.max(bl) < ar.min(br) && ab.max(bb) < at.min(bt);
                assert!(!overlap, "tiles must be pairwise disjoint");
            }
        }
    }

    #[test]
    fn tiles_stay_clear_of_stopped_children_and_close_the_area() {
        let f = chi01(201);
        let max_level = 6;
        let tree = calibrated_tree(1.0, &f, max_level, &spec()).unwrap();
        let root = DyadicInterval::root();
        let kids = tree.children_of(root);
        assert!(!kids.is_empty(), "calibrated run expected to stop somewhere below the root");
        let (bases, tiles) = sigma_tiles(&tree, root).unwrap();
        for j in &bases {
            assert!(kids.iter().all(|s| !s.contains(j)));
        }
        let tile_area: f64 = tiles.iter().map(|t| t.area()).sum();
        let child_boxes: f64 = kids.iter().map(|s| s.length() * s.length()).sum();
        let floor_strip: f64 = bases
            .iter()
            .filter(|j| j.level == max_level)
            .map(|j| 0.5 * j.length() * j.length())
            .sum();
        assert_eq!(tile_area + child_boxes + floor_strip, 4.0);
    }

    #[test]
    fn sigma_tiles_rejects_foreign_nodes() {
        let tree = build_generations(1.0, &chi01(101), 1e6, 4, &spec()).unwrap();
        let foreign = DyadicInterval::new(2, 1).unwrap();
        assert!(sigma_tiles(&tree, foreign).is_err());
    }

    #[test]
    fn oscillation_is_zero_for_zero_function_and_at_node_centers() {
        let f = SampledFunction::zero(lin_grid(0.1, 0.9, 5), 0.9).unwrap();
        let tree = build_generations(1.0, &f, 0.5, 5, &spec()).unwrap();
        let report = oscillation_check(&tree, 16, &spec()).unwrap();
        assert_eq!(report.max_ratio, 0.0);
        assert_eq!(report.denominator, 0.5);

        let f = chi01(201);
        let tree = calibrated_tree(1.0, &f, 5, &spec()).unwrap();
        for gen in tree.generations() {
            for &q in gen {
                let u = tree.field().eval(q.center(), q.length()).unwrap().value;
                let dev = (u - tree.c_of(q).unwrap() * q.center()).abs();
                assert!(dev <= 1e-12, "normalized extension must reproduce c_Q at the node");
            }
        }
    }

    #[test]
    fn oscillation_sampling_extends_instead_of_reshuffling() {
        let f = chi01(201);
        let tree = calibrated_tree(1.0, &f, 4, &spec()).unwrap();
        let small = oscillation_check(&tree, 8, &spec()).unwrap();
        let large = oscillation_check(&tree, 16, &spec()).unwrap();
        assert!(large.max_ratio >= small.max_ratio, "doubling extends the sample stream");
        assert!(small.max_ratio > 0.0 && large.max_ratio.is_finite());
    }

    #[test]
    fn tree_text_lists_every_node_once() {
        let tree = build_generations(1.0, &chi01(201), 0.4, 5, &spec()).unwrap();
        let mut out = Vec::new();
        tree.write_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut seen = 0usize;
        for line in text.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(parts.len(), 4);
            let k: usize = parts[0].parse().unwrap();
            let level: u32 = parts[1].parse().unwrap();
            let index: u64 = parts[2].parse().unwrap();
            let c: f64 = parts[3].parse().unwrap();
            let q = DyadicInterval::new(level, index).unwrap();
            assert_eq!(tree.generation_of(q), Some(k));
            assert!(c.is_finite());
            seen += 1;
        }
        assert_eq!(seen, tree.node_count());
    }
}
