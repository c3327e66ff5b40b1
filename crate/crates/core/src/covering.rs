//! Rasterized geometry for the ball-covering argument: largest contained
//! balls, greedy disjoint selection with 5-fold dilation cover, and the
//! sample-based hypothesis/conclusion checker for pairs of nested sets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contact::separable_lower;
use crate::density::{raster_ball, sample_point_in_ball};
use crate::error::{Error, Result};
use crate::grid::{dist, CellSet, GridSpec};

/// Node set with a closed/open reading; membership itself is the raster.
#[derive(Clone, Debug)]
pub struct RasterSet {
    pub cells: CellSet,
    pub closed: bool,
}

impl RasterSet {
    pub fn closed(cells: CellSet) -> Self {
        RasterSet {
            cells,
            closed: true,
        }
    }

    pub fn open(cells: CellSet) -> Self {
        RasterSet {
            cells,
            closed: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Distance from every node to the nearest node outside the set (unmasked
/// nodes and nodes beyond the grid edge count as outside). Squared-distance
/// transform via the separable parabola sweep at unit opening.
pub fn distance_to_complement(spec: &GridSpec, members: &CellSet) -> Vec<f64> {
    let n = spec.total_nodes();
    let mut seed = vec![0.0f64; n];
    for i in 0..n {
        if members.contains(i) {
            seed[i] = f64::INFINITY;
        }
    }
    // min over complement nodes z of |z - c|^2 = lower transform at kappa=2.
    let (d2, _) = separable_lower(spec, &seed, 2.0);
    d2.iter()
        .map(|&v| {
            if v.is_finite() {
                v.max(0.0).sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Largest ball contained in the open set `u` (radius measured to the
/// nearest complement node) that still contains `x` strictly. Ties break
/// toward the smallest node index. Exact to within a cell of the continuum
/// optimum.
pub fn largest_ball(x: usize, u: &RasterSet) -> Result<Ball> {
    let spec = u.cells.spec().clone();
    if !u.cells.contains(x) {
        return Err(Error::InvalidParameter(
            "query point must belong to the set".into(),
        ));
    }
    let d = distance_to_complement(&spec, &u.cells);
    let xc = spec.coord(x);
    let ndim = spec.ndim();
    let mut best: Option<(usize, f64)> = None;
    for c in u.cells.nodes() {
        let r = d[c];
        if dist(&spec.coord(c), &xc, ndim) < r && best.map_or(true, |(_, br)| r > br) {
            best = Some((c, r));
        }
    }
    let (c, r) =
        best.ok_or_else(|| Error::InvalidSet("no candidate ball contains the query point".into()))?;
    Ok(Ball {
        center: spec.coord(c),
        radius: r,
    })
}

/// Greedy selection in decreasing radius order: keep a ball iff it is
/// disjoint from all kept balls. The kept family is pairwise disjoint and
/// every input ball sits inside the 5-fold dilation of some kept ball.
pub fn vitali_select(family: &[Ball]) -> Vec<Ball> {
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&i, &j| {
        family[j]
            .radius
            .partial_cmp(&family[i].radius)
            .unwrap()
            .then_with(|| {
                family[i]
                    .center
                    .partial_cmp(&family[j].center)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut kept: Vec<Ball> = Vec::new();
    for &i in &order {
        let b = family[i];
        let disjoint = kept
            .iter()
            .all(|k| dist(&b.center, &k.center, 3) >= b.radius + k.radius);
        if disjoint {
            kept.push(b);
        }
    }
    kept
}

#[derive(Clone, Debug, Serialize)]
pub struct CoveringVerdict {
    pub hypothesis_ok: bool,
    /// None when the hypothesis failed (the conclusion is not asserted).
    pub conclusion_ok: Option<bool>,
    pub mu: f64,
    pub min_ratio: f64,
    pub worst_ball: Option<Ball>,
    pub balls_tested: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub raster_tol: f64,
}

/// Perimeter-scaled measure tolerance absorbing the rasterization of ball
/// boundaries.
fn raster_tolerance(spec: &GridSpec) -> f64 {
    let h = spec.spacing();
    match spec.ndim() {
        1 => 3.0 * h * 2.0,
        2 => 3.0 * h * (2.0 * std::f64::consts::PI),
        _ => 3.0 * h * (4.0 * std::f64::consts::PI),
    }
}

/// Smallest sampled fraction |B ∩ F| / |B| over balls meeting E, with the
/// sampler mixing uniform balls, balls tangent to E from outside, and
/// slightly enlarged largest empty balls around points of B1 \ E (where
/// violations concentrate).
pub fn hypothesis_min_ratio(
    e: &CellSet,
    f: &CellSet,
    ball_samples: usize,
    seed: u64,
) -> (f64, Option<Ball>, usize) {
    let spec = e.spec().clone();
    let ndim = spec.ndim();
    let h = spec.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let e_nodes: Vec<usize> = e.nodes().collect();
    let complement: Vec<usize> = spec.masked_nodes().filter(|&i| !e.contains(i)).collect();
    let empty_set = RasterSet::open(CellSet::from_pred(&spec, |i| !e.contains(i)));

    let mut balls: Vec<Ball> = Vec::new();
    let n_uniform = ball_samples / 2;
    let n_tangent = ball_samples / 4;
    let n_largest = ball_samples - n_uniform - n_tangent;
    for _ in 0..n_uniform {
        let r = rng.gen_range(2.0 * h..0.9);
        let c = sample_point_in_ball(&mut rng, ndim, (1.0 - r).max(2.0 * h));
        balls.push(Ball {
            center: c,
            radius: r,
        });
    }
    for _ in 0..n_tangent {
        if e_nodes.is_empty() {
            break;
        }
        let anchor = spec.coord(e_nodes[rng.gen_range(0..e_nodes.len())]);
        let mut dir = [0.0; 3];
        let mut n2 = 0.0;
        for d in dir.iter_mut().take(ndim) {
            *d = rng.gen_range(-1.0f64..1.0);
            n2 += *d * *d;
        }
        if n2 == 0.0 {
            dir[0] = 1.0;
            n2 = 1.0;
        }
        let n2 = n2.sqrt();
        let rho = rng.gen_range(2.0 * h..0.5);
        let mut c = [0.0; 3];
        let mut cn = 0.0;
        for k in 0..ndim {
            c[k] = anchor[k] + rho * dir[k] / n2;
            cn += c[k] * c[k];
        }
        // Radius just reaching back to the anchor, clipped inside the ball.
        let radius = (rho + 2.0 * h).min(1.0 - cn.sqrt());
        if radius >= 2.0 * h {
            balls.push(Ball { center: c, radius });
        }
    }
    for _ in 0..n_largest {
        if complement.is_empty() {
            break;
        }
        let x = complement[rng.gen_range(0..complement.len())];
        if let Ok(b) = largest_ball(x, &empty_set) {
            let mut cn = 0.0;
            for k in 0..ndim {
                cn += b.center[k] * b.center[k];
            }
            let radius = (b.radius + 3.0 * h).min(1.0 - cn.sqrt());
            if radius >= 2.0 * h {
                balls.push(Ball {
                    center: b.center,
                    radius,
                });
            }
        }
    }

    let ratios: Vec<Option<(f64, Ball)>> = balls
        .par_iter()
        .map(|&b| {
            let nodes: Vec<usize> = spec
                .masked_nodes()
                .filter(|&i| dist(&spec.coord(i), &b.center, ndim) <= b.radius)
                .collect();
            if nodes.is_empty() || !nodes.iter().any(|&i| e.contains(i)) {
                return None;
            }
            let inside_f = nodes.iter().filter(|&&i| f.contains(i)).count();
            Some((inside_f as f64 / nodes.len() as f64, b))
        })
        .collect();

    let mut min_ratio = f64::INFINITY;
    let mut worst = None;
    let mut tested = 0usize;
    for item in ratios.into_iter().flatten() {
        tested += 1;
        if item.0 < min_ratio {
            min_ratio = item.0;
            worst = Some(item.1);
        }
    }
    (min_ratio, worst, tested)
}

/// Sample-based check of the covering implication: if every ball meeting E
/// keeps at least a mu-fraction inside F, then the complement of F is
/// smaller than the complement of E by the factor (1 - mu/5^n), up to the
/// raster tolerance.
pub fn covering_check(
    e: &CellSet,
    f: &CellSet,
    mu: f64,
    ball_samples: usize,
    seed: u64,
) -> Result<CoveringVerdict> {
    if !(0.0 < mu && mu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} must lie in (0, 1)"
        )));
    }
    if e.is_empty() {
        return Err(Error::InvalidSet("E must be nonempty".into()));
    }
    if !e.is_subset_of(f) {
        return Err(Error::InvalidSet("E must be contained in F".into()));
    }
    let spec = e.spec().clone();
    let (min_ratio, worst, tested) = hypothesis_min_ratio(e, f, ball_samples, seed);
    let hypothesis_ok = tested > 0 && min_ratio >= mu;
    let ball = spec.ball_measure();
    let lhs = ball - f.measure();
    let shrink = 1.0 - mu / 5f64.powi(spec.ndim() as i32);
    let raster_tol = raster_tolerance(&spec);
    let rhs = shrink * (ball - e.measure()) + raster_tol;
    let conclusion_ok = if hypothesis_ok {
        Some(lhs <= rhs)
    } else {
        None
    };
    Ok(CoveringVerdict {
        hypothesis_ok,
        conclusion_ok,
        mu,
        min_ratio,
        worst_ball: worst,
        balls_tested: tested,
        lhs,
        rhs,
        raster_tol,
    })
}

/// Seeded instance generator: E a union of a few random balls, F the
/// rho-dilation of E within the mask. Returns (E, F, rho).
pub fn random_instance(spec: &GridSpec, seed: u64) -> (CellSet, CellSet, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ndim = spec.ndim();
    let n_balls = rng.gen_range(1..=4);
    let mut e = CellSet::empty(spec);
    for _ in 0..n_balls {
        let r = rng.gen_range(0.05..0.3);
        let c = sample_point_in_ball(&mut rng, ndim, 0.6);
        e = e.union(&raster_ball(spec, &c, r));
    }
    if e.is_empty() {
        e.insert(spec.nearest_node(&[0.0, 0.0, 0.0]));
    }
    let rho: f64 = rng.gen_range(0.1..0.35);
    let d = distance_to_complement(spec, &e.complement());
    // dist(x, E) <= rho: nodes whose distance to the complement of the
    // complement of E (that is, to E itself) is within rho.
    let f = CellSet::from_pred(spec, |i| e.contains(i) || d[i] <= rho);
    (e, f, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_ball_grid;

    #[test]
    fn largest_ball_in_full_disk() {
        let g = build_ball_grid(2, 65).unwrap();
        let u = RasterSet::open(CellSet::full(&g));
        let x = g.nearest_node(&[0.3, 0.2, 0.0]);
        let b = largest_ball(x, &u).unwrap();
        assert!(dist(&b.center, &[0.0, 0.0, 0.0], 2) <= 2.0 * g.spacing() + 1e-12);
        assert!(
            (b.radius - 1.0).abs() <= 2.0 * g.spacing(),
            "radius {}",
            b.radius
        );
    }

    #[test]
    fn largest_ball_avoiding_punctured_origin() {
        let g = build_ball_grid(2, 129).unwrap();
        let h = g.spacing();
        let origin = g.nearest_node(&[0.0, 0.0, 0.0]);
        let u = RasterSet::open(CellSet::from_pred(&g, |i| i != origin));
        let x = g.nearest_node(&[0.4, 0.0, 0.0]);
        let b = largest_ball(x, &u).unwrap();
        // The optimal radius is 0.5, attained on the circle of centers at
        // distance 0.5 from both the puncture and the boundary.
        assert!((b.radius - 0.5).abs() <= 2.0 * h, "radius {}", b.radius);
        assert!(
            (dist(&b.center, &[0.0, 0.0, 0.0], 2) - 0.5).abs() <= 2.0 * h,
            "center {:?}",
            b.center
        );
        assert!(dist(&b.center, &g.coord(x), 2) < b.radius);
        assert!(largest_ball(origin, &u).is_err());
    }

    #[test]
    fn largest_ball_exact_small_set() {
        let g = build_ball_grid(2, 129).unwrap();
        let h = g.spacing();
        let c = [0.2, -0.1, 0.0];
        let u = RasterSet::open(raster_ball(&g, &c, 0.2));
        let x = g.nearest_node(&c);
        let b = largest_ball(x, &u).unwrap();
        assert!(dist(&b.center, &c, 2) <= h + 1e-12);
        assert!((b.radius - 0.2).abs() <= 2.0 * h);
    }

    #[test]
    fn largest_ball_monotone_in_set() {
        let g = build_ball_grid(2, 65).unwrap();
        let small = RasterSet::open(raster_ball(&g, &[0.1, 0.0, 0.0], 0.3));
        let big = RasterSet::open(raster_ball(&g, &[0.1, 0.0, 0.0], 0.5));
        let x = g.nearest_node(&[0.15, 0.05, 0.0]);
        let bs = largest_ball(x, &small).unwrap();
        let bb = largest_ball(x, &big).unwrap();
        assert!(bb.radius >= bs.radius - 1e-12);
    }

    #[test]
    fn vitali_selection_basics() {
        let b = Ball {
            center: [0.2, 0.1, 0.0],
            radius: 0.2,
        };
        assert_eq!(vitali_select(&[b]).len(), 1);

        let twin = [b, b];
        let kept = vitali_select(&twin);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn vitali_disjoint_and_dilation_covers() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let g = build_ball_grid(2, 129).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let mut family = Vec::new();
        for _ in 0..100 {
            let r: f64 = rng.gen_range(0.03..0.25);
            let cx: f64 = rng.gen_range(-(1.0 - r)..(1.0 - r));
            let cy_lim = ((1.0 - r) * (1.0 - r) - cx * cx).max(0.0).sqrt();
            let cy: f64 = if cy_lim > 0.0 {
                rng.gen_range(-cy_lim..cy_lim)
            } else {
                0.0
            };
            family.push(Ball {
                center: [cx, cy, 0.0],
                radius: r,
            });
        }
        let kept = vitali_select(&family);
        for (i, a) in kept.iter().enumerate() {
            for b in kept.iter().skip(i + 1) {
                assert!(
                    dist(&a.center, &b.center, 2) >= a.radius + b.radius - 1e-12,
                    "kept balls overlap"
                );
            }
        }
        // Raster check: the union of 5-dilations covers the input union.
        let mut uncovered = 0;
        for i in g.masked_nodes() {
            let x = g.coord(i);
            let in_input = family.iter().any(|b| dist(&x, &b.center, 2) <= b.radius);
            if !in_input {
                continue;
            }
            let in_dilated = kept
                .iter()
                .any(|b| dist(&x, &b.center, 2) <= 5.0 * b.radius + g.spacing());
            if !in_dilated {
                uncovered += 1;
            }
        }
        assert_eq!(uncovered, 0);
    }

    #[test]
    fn covering_trivial_when_f_full() {
        let g = build_ball_grid(2, 65).unwrap();
        let e = raster_ball(&g, &[0.0, 0.0, 0.0], 0.2);
        let f = CellSet::full(&g);
        let v = covering_check(&e, &f, 0.5, 60, 1).unwrap();
        assert!(v.hypothesis_ok);
        assert_eq!(v.conclusion_ok, Some(true));
        assert_eq!(v.lhs, 0.0);
    }

    #[test]
    fn covering_point_seed_with_dilation() {
        // E = {origin}, F = the raster ball of radius 0.3: any sampled ball
        // meeting E contains a quarter-ish of a rho-ball, and the
        // conclusion follows.
        let g = build_ball_grid(2, 129).unwrap();
        let mut e = CellSet::empty(&g);
        e.insert(g.nearest_node(&[0.0, 0.0, 0.0]));
        let f = raster_ball(&g, &[0.0, 0.0, 0.0], 0.3);
        let (min_ratio, _, tested) = hypothesis_min_ratio(&e, &f, 200, 9);
        assert!(tested > 0);
        assert!(min_ratio > 0.0);
        let mu = (0.9 * min_ratio).min(0.9);
        let v = covering_check(&e, &f, mu, 200, 9).unwrap();
        assert!(v.hypothesis_ok);
        assert_eq!(v.conclusion_ok, Some(true), "lhs {} rhs {}", v.lhs, v.rhs);
    }

    #[test]
    fn covering_detects_tangent_violations() {
        // E = F = the half-radius disk with an overclaimed mu: tangent balls
        // intersect E in a sliver, so the sampler must find a violation.
        let g = build_ball_grid(2, 129).unwrap();
        let e = raster_ball(&g, &[0.0, 0.0, 0.0], 0.5);
        let v = covering_check(&e, &e, 0.4, 300, 21).unwrap();
        assert!(!v.hypothesis_ok, "min ratio {}", v.min_ratio);
        assert!(v.conclusion_ok.is_none());
    }

    #[test]
    fn covering_validation_errors() {
        let g = build_ball_grid(2, 33).unwrap();
        let e = raster_ball(&g, &[0.0, 0.0, 0.0], 0.4);
        let f = raster_ball(&g, &[0.0, 0.0, 0.0], 0.2);
        assert!(covering_check(&e, &f, 0.5, 10, 0).is_err()); // E not inside F
        let empty = CellSet::empty(&g);
        assert!(covering_check(&empty, &e, 0.5, 10, 0).is_err());
        assert!(covering_check(&e, &e, 1.5, 10, 0).is_err());
    }

    #[test]
    fn random_instances_pass_conclusion() {
        let g = build_ball_grid(2, 65).unwrap();
        let mut passing = 0;
        for seed in 0..25u64 {
            let (e, f, _) = random_instance(&g, seed);
            let (min_ratio, _, tested) = hypothesis_min_ratio(&e, &f, 80, seed ^ 0xabcd);
            if tested == 0 || min_ratio <= 0.0 {
                continue;
            }
            let mu = (0.75 * min_ratio).min(0.95);
            let v = covering_check(&e, &f, mu, 80, seed ^ 0xabcd).unwrap();
            if v.hypothesis_ok {
                passing += 1;
                assert_eq!(
                    v.conclusion_ok,
                    Some(true),
                    "seed {seed}: lhs {} rhs {}",
                    v.lhs,
                    v.rhs
                );
            }
        }
        assert!(
            passing >= 20,
            "only {passing} instances exercised the conclusion"
        );
    }
}
