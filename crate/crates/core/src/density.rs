//! Executable probes of the density mechanism: the nonemptiness witness,
//! random-ball density scans, the exponential-barrier localization of a
//! touching point, and the vertex-set-to-contact-set measure comparison
//! with its envelope/vertex-map cross-check.
//!
//! These check conclusions on concrete instances. The dimensional constants
//! behind them are not numeric, so everything reported here is an empirical
//! surrogate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{
    contact_set, envelope_derivatives, moreau_envelope, vertex_map, ContactSet, Direction,
    Paraboloid, VertexSet,
};
use crate::error::{Error, Result};
use crate::grid::{dist, CellSet, GridFunction, GridSpec};
use crate::operators::Ellipticity;

/// Parameters of the exponential barrier phi(t) = e^A e^(-A t^2) - 1
/// attached to a touching paraboloid of opening K with vertex y1.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierParams {
    /// Barrier steepness, > 1. The gap bound scales with C0 = e^A.
    pub big_a: f64,
    pub opening: f64,
    pub r: f64,
    pub x0: [f64; 3],
    pub y1: [f64; 3],
}

impl BarrierParams {
    pub fn c0(&self) -> f64 {
        self.big_a.exp()
    }

    fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.big_a <= 1.0 {
            return Err(Error::InvalidParameter(
                "barrier steepness must exceed 1".into(),
            ));
        }
        if self.opening < 1.0 {
            return Err(Error::InvalidParameter(
                "barrier opening must be >= 1".into(),
            ));
        }
        let n = spec.ndim();
        let c = self.x0;
        let reach = (0..n).map(|k| c[k] * c[k]).sum::<f64>().sqrt() + self.r;
        if reach > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(
                "probe ball must sit inside the unit ball".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub node: usize,
    pub coord: [f64; 3],
    pub norm: f64,
    pub in_contact_mask: bool,
}

/// Minimizer of u(x) + K/2 |x|^2 over the mask: the touching point of the
/// opening-K paraboloid with vertex at the origin. Under sup|u| <= 1/16 it
/// lands inside the half ball.
pub fn nonempty_witness(u: &GridFunction, opening: f64) -> Result<WitnessReport> {
    if opening < 1.0 {
        return Err(Error::InvalidParameter("opening must be >= 1".into()));
    }
    let sup = u.sup_norm();
    if sup > 1.0 / 16.0 {
        return Err(Error::Hypothesis(format!(
            "sup|u| = {sup} exceeds 1/16; normalize first"
        )));
    }
    let spec = u.spec();
    let mut best = f64::INFINITY;
    let mut node = usize::MAX;
    for i in spec.masked_nodes() {
        let v = u.value(i) + 0.5 * opening * spec.norm(i) * spec.norm(i);
        if v < best {
            best = v;
            node = i;
        }
    }
    let set = contact_set(u, opening, &VertexSet::full(spec), Direction::Lower, None)?;
    Ok(WitnessReport {
        node,
        coord: spec.coord(node),
        norm: spec.norm(node),
        in_contact_mask: set.cells.contains(node),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityEntry {
    pub m: f64,
    pub min_ratio: f64,
    pub balls_used: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityScanReport {
    pub opening: f64,
    pub entries: Vec<DensityEntry>,
    pub sampled_balls: usize,
    pub balls_meeting_base: usize,
    pub seed: u64,
}

/// Samples random balls inside the unit ball, keeps those meeting the
/// opening-K contact set, and reports per candidate M the minimum fraction
/// of each kept ball covered by the opening-KM contact set: the empirical
/// density constant.
pub fn density_scan(
    u: &GridFunction,
    opening: f64,
    m_candidates: &[f64],
    ball_samples: usize,
    seed: u64,
) -> Result<DensityScanReport> {
    if opening < 1.0 {
        return Err(Error::InvalidParameter("opening must be >= 1".into()));
    }
    for &m in m_candidates {
        if m <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "candidate M = {m} must exceed 1"
            )));
        }
    }
    let spec = u.spec();
    let ndim = spec.ndim();
    let h = spec.spacing();
    let v = VertexSet::full(spec);
    let base = contact_set(u, opening, &v, Direction::Lower, None)?;
    let refined: Vec<ContactSet> = m_candidates
        .par_iter()
        .map(|&m| contact_set(u, opening * m, &v, Direction::Lower, None))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut balls = Vec::with_capacity(ball_samples);
    while balls.len() < ball_samples {
        let r = rng.gen_range(4.0 * h..0.5);
        let c = sample_point_in_ball(&mut rng, ndim, 1.0 - r);
        balls.push((c, r));
    }

    let per_ball: Vec<Option<Vec<f64>>> = balls
        .par_iter()
        .map(|&(c, r)| {
            let nodes: Vec<usize> = spec
                .masked_nodes()
                .filter(|&i| dist(&spec.coord(i), &c, ndim) <= r)
                .collect();
            if nodes.is_empty() || !nodes.iter().any(|&i| base.cells.contains(i)) {
                return None;
            }
            let total = nodes.len() as f64;
            Some(
                refined
                    .iter()
                    .map(|set| {
                        nodes.iter().filter(|&&i| set.cells.contains(i)).count() as f64 / total
                    })
                    .collect(),
            )
        })
        .collect();

    let mut entries: Vec<DensityEntry> = m_candidates
        .iter()
        .map(|&m| DensityEntry {
            m,
            min_ratio: f64::INFINITY,
            balls_used: 0,
        })
        .collect();
    for ratios in per_ball.iter().flatten() {
        for (e, &r) in entries.iter_mut().zip(ratios) {
            e.min_ratio = e.min_ratio.min(r);
            e.balls_used += 1;
        }
    }
    for e in entries.iter_mut() {
        if e.balls_used == 0 {
            e.min_ratio = f64::NAN;
        }
    }
    Ok(DensityScanReport {
        opening,
        entries,
        sampled_balls: balls.len(),
        balls_meeting_base: per_ball.iter().flatten().count(),
        seed,
    })
}

pub(crate) fn sample_point_in_ball(rng: &mut ChaCha8Rng, ndim: usize, radius: f64) -> [f64; 3] {
    loop {
        let mut c = [0.0; 3];
        let mut n2 = 0.0;
        for x in c.iter_mut().take(ndim) {
            *x = rng.gen_range(-radius..radius);
            n2 += *x * *x;
        }
        if n2.sqrt() <= radius {
            return c;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierProbe {
    pub x2_node: usize,
    pub x2: [f64; 3],
    pub gap: f64,
    pub gap_bound: f64,
    pub inside_half: bool,
}

/// Perturbs the touching paraboloid through the supplied contact point x1
/// by the exponential barrier and locates the minimizer x2 of u - psi over
/// the probe ball. The gap u(x2) - P(x2) stays below e^A K r^2 (up to the
/// grid argmin slack), and for steep enough barriers x2 falls in the inner
/// half ball.
pub fn barrier_probe(u: &GridFunction, params: &BarrierParams, x1: usize) -> Result<BarrierProbe> {
    let spec = u.spec();
    params.validate(spec)?;
    let ndim = spec.ndim();
    let x1c = spec.coord(x1);
    if dist(&x1c, &params.x0, ndim) > params.r {
        return Err(Error::InvalidParameter(
            "x1 must lie in the probe ball".into(),
        ));
    }
    let parab = Paraboloid::through(params.opening, params.y1, &x1c, u.value(x1), ndim);
    // Touching check: the paraboloid must stay below u (within tolerance)
    // and meet it at x1.
    let tol = 16.0 * crate::contact::default_tol(params.opening, spec);
    for i in spec.masked_nodes() {
        if parab.eval(&spec.coord(i), ndim) > u.value(i) + tol {
            return Err(Error::Hypothesis(format!(
                "supplied point is not a touching point: paraboloid exceeds u at node {i}"
            )));
        }
    }

    let phi = |t: f64| params.big_a.exp() * (-params.big_a * t * t).exp() - 1.0;
    let mut best = f64::INFINITY;
    let mut node = usize::MAX;
    for i in spec.masked_nodes() {
        let xc = spec.coord(i);
        let d = dist(&xc, &params.x0, ndim);
        if d > params.r {
            continue;
        }
        let psi = parab.eval(&xc, ndim) + params.opening * params.r * params.r * phi(d / params.r);
        let val = u.value(i) - psi;
        if val < best {
            best = val;
            node = i;
        }
    }
    if node == usize::MAX {
        return Err(Error::InvalidParameter(
            "probe ball contains no grid node".into(),
        ));
    }
    let x2 = spec.coord(node);
    let gap = u.value(node) - parab.eval(&x2, ndim);
    Ok(BarrierProbe {
        x2_node: node,
        x2,
        gap,
        gap_bound: params.c0() * params.opening * params.r * params.r,
        inside_half: dist(&x2, &params.x0, ndim) < 0.5 * params.r,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexCompareReport {
    pub v_center: [f64; 3],
    pub v_radius: f64,
    pub v_count: usize,
    pub v_measure: f64,
    pub contact_count: usize,
    pub contact_measure: f64,
    /// |V| / |T(V)|: the empirical measure-comparison constant.
    pub ratio: f64,
    pub containment_ok: bool,
    pub containment_exceptions: usize,
    /// Vertex-map determinant statistics on the envelope contact nodes.
    pub det_checked: usize,
    pub det_in_range: usize,
    pub det_bound: f64,
    pub det_min: f64,
    pub det_max: f64,
    /// Counts over 12 equal bins spanning [-bound/10, bound + bound/10].
    pub det_histogram: Vec<usize>,
}

/// Builds the contracted vertex ball
///   V = closed ball of radius r (M-1)/(8M) at y1/M + (M-1) x2 / M,
/// computes the restricted contact set at opening K M, checks that it stays
/// inside the probe ball intersected with the unrestricted contact set, and
/// compares measures. A second route regularizes u by the inf-convolution
/// envelope and verifies the vertex-map Jacobian bound
///   0 <= det <= ((n hi + 4) / (n lo))^n
/// on the envelope's contact nodes.
#[allow(clippy::too_many_arguments)]
pub fn vertex_measure_compare(
    u: &GridFunction,
    opening: f64,
    m: f64,
    x2: &[f64; 3],
    y1: &[f64; 3],
    r: f64,
    x0: &[f64; 3],
    ell: &Ellipticity,
    envelope_eps: f64,
) -> Result<VertexCompareReport> {
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!("M = {m} must exceed 1")));
    }
    let spec = u.spec();
    let ndim = spec.ndim();
    let km = opening * m;
    let mut center = [0.0; 3];
    for k in 0..ndim {
        center[k] = y1[k] / m + (m - 1.0) / m * x2[k];
    }
    let radius = r * (m - 1.0) / (8.0 * m);
    let vset = VertexSet::ball(spec, &center, radius).map_err(|_| {
        Error::InvalidSet(format!(
            "vertex ball of radius {radius} holds no grid node at this resolution"
        ))
    })?;

    let restricted = contact_set(u, km, &vset, Direction::Lower, None)?;
    let unrestricted = contact_set(u, km, &VertexSet::full(spec), Direction::Lower, None)?;
    let mut exceptions = 0usize;
    for i in restricted.cells.nodes() {
        if spec.is_ring(i) {
            continue;
        }
        let inside_ball = dist(&spec.coord(i), x0, ndim) <= r;
        if !inside_ball || !unrestricted.cells.contains(i) {
            exceptions += 1;
        }
    }
    let contact_count = restricted.cells.count();
    let v_count = vset.cells().count();
    let ratio = if contact_count > 0 {
        v_count as f64 / contact_count as f64
    } else {
        f64::INFINITY
    };

    // Envelope route: vertex-map determinants on the regularized field.
    let u_eps = moreau_envelope(u, envelope_eps)?;
    let eps_contact = contact_set(&u_eps, km, &vset, Direction::Lower, None)?;
    let derivs = envelope_derivatives(&u_eps);
    let nd = ndim as f64;
    let det_bound = ((nd * ell.hi + 4.0) / (nd * ell.lo)).powi(ndim as i32);
    let det_tol = 0.05;
    let mut det_checked = 0usize;
    let mut det_in_range = 0usize;
    let mut det_min = f64::INFINITY;
    let mut det_max = f64::NEG_INFINITY;
    let mut det_histogram = vec![0usize; 12];
    let hist_lo = -det_bound / 10.0;
    let hist_span = det_bound * 1.2;
    for i in eps_contact.cells.nodes() {
        if !derivs.valid[i] {
            continue;
        }
        let vm = vertex_map(&u_eps, &derivs, i, km)?;
        det_checked += 1;
        det_min = det_min.min(vm.det_raw);
        det_max = det_max.max(vm.det_raw);
        if vm.det_raw >= -det_tol && vm.det_raw <= det_bound + det_tol {
            det_in_range += 1;
        }
        let bin = ((vm.det_raw - hist_lo) / hist_span * 12.0).floor();
        det_histogram[(bin.max(0.0) as usize).min(11)] += 1;
    }

    Ok(VertexCompareReport {
        v_center: center,
        v_radius: radius,
        v_count,
        v_measure: vset.cells().measure(),
        contact_count,
        contact_measure: restricted.cells.measure(),
        ratio,
        containment_ok: exceptions == 0,
        containment_exceptions: exceptions,
        det_checked,
        det_in_range,
        det_bound,
        det_min,
        det_max,
        det_histogram,
    })
}

/// Picks the contact node of `set` inside the ball B_r(x0) nearest to x0,
/// together with its witness vertex, as the seed of a barrier probe.
pub fn contact_point_in_ball(set: &ContactSet, x0: &[f64; 3], r: f64) -> Option<(usize, [f64; 3])> {
    let spec = set.cells.spec().clone();
    let ndim = spec.ndim();
    let mut best: Option<(usize, f64)> = None;
    for i in set.cells.nodes() {
        let d = dist(&spec.coord(i), x0, ndim);
        if d <= r && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| {
        let w = set.witness[i];
        let wc = if w == crate::contact::NO_NODE {
            spec.coord(i)
        } else {
            spec.coord(w as usize)
        };
        (i, wc)
    })
}

/// Membership nodes of a Euclidean ball, as a cell set.
pub fn raster_ball(spec: &GridSpec, center: &[f64; 3], r: f64) -> CellSet {
    let ndim = spec.ndim();
    CellSet::from_pred(spec, |i| dist(&spec.coord(i), center, ndim) <= r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{make_case, CaseKind};
    use crate::grid::build_ball_grid;

    #[test]
    fn witness_basics() {
        let g = build_ball_grid(2, 65).unwrap();
        let zero = GridFunction::zeros(&g);
        let w = nonempty_witness(&zero, 1.0).unwrap();
        assert_eq!(w.norm, 0.0);
        assert!(w.in_contact_mask);

        // Small concave dip: the minimum of (K/2 - 1/64) |x|^2 is still the
        // origin.
        let dip = GridFunction::sample(&g, |x| -(x[0] * x[0] + x[1] * x[1]) / 64.0).unwrap();
        let w = nonempty_witness(&dip, 1.0).unwrap();
        assert_eq!(w.norm, 0.0);

        // Linear tilt <l, x>/32: minimizer within a cell of -l/32.
        let l = [1.0, 0.0, 0.0];
        let tilt = GridFunction::sample(&g, |x| (l[0] * x[0] + l[1] * x[1]) / 32.0).unwrap();
        let w = nonempty_witness(&tilt, 1.0).unwrap();
        assert!(
            dist(&w.coord, &[-1.0 / 32.0, 0.0, 0.0], 2) <= g.spacing() + 1e-12,
            "witness at {:?}",
            w.coord
        );

        let big = GridFunction::sample(&g, |x| x[0]).unwrap();
        assert!(nonempty_witness(&big, 1.0).is_err());
    }

    #[test]
    fn witness_stays_in_half_ball_for_normalized_catalog() {
        let g = build_ball_grid(2, 65).unwrap();
        let h = g.spacing();
        for case in crate::catalog::standard_cases(2) {
            let u = case.sample_u(&g).unwrap();
            let a = 1.0 / (16.0 * u.sup_norm() + 1.0);
            let scaled = u.scaled(a);
            for k in [1.0, 2.0, 4.0] {
                let w = nonempty_witness(&scaled, k).unwrap();
                assert!(
                    w.norm <= 0.5 + h,
                    "{}: witness at |x| = {}",
                    case.name,
                    w.norm
                );
                assert!(w.in_contact_mask);
            }
        }
    }

    #[test]
    fn flat_field_density_is_one() {
        let g = build_ball_grid(2, 65).unwrap();
        let zero = GridFunction::zeros(&g);
        let rep = density_scan(&zero, 1.0, &[2.0, 4.0], 40, 7).unwrap();
        for e in &rep.entries {
            assert_eq!(e.min_ratio, 1.0);
            assert!(e.balls_used > 0);
        }
    }

    #[test]
    fn quadratic_density_positive() {
        let g = build_ball_grid(2, 129).unwrap();
        let case = make_case(CaseKind::Quadratic { a: 1.0 }, 2).unwrap();
        let u = case.sample_u(&g).unwrap();
        let rep = density_scan(&u, 1.0, &[4.0], 200, 11).unwrap();
        assert!(rep.balls_meeting_base > 0);
        assert!(
            rep.entries[0].min_ratio > 0.0,
            "ratio {}",
            rep.entries[0].min_ratio
        );
    }

    #[test]
    fn density_ratios_invariant_under_joint_rescaling() {
        let g = build_ball_grid(2, 65).unwrap();
        let case = make_case(CaseKind::Quadratic { a: 1.0 }, 2).unwrap();
        let u = case.sample_u(&g).unwrap();
        let a = 3.0;
        let base = density_scan(&u, 2.0, &[2.0, 4.0], 60, 5).unwrap();
        // Contact masks at openings (2, 4, 8) for u match those at openings
        // (2a, 4a, 8a) for a*u, so the same ball sample gives the same
        // ratios.
        let scaled = density_scan(&u.scaled(a), 2.0 * a, &[2.0, 4.0], 60, 5).unwrap();
        for (x, y) in base.entries.iter().zip(&scaled.entries) {
            assert_eq!(x.balls_used, y.balls_used);
            assert!((x.min_ratio - y.min_ratio).abs() < 1e-15);
        }
    }

    #[test]
    fn barrier_probe_flat_field() {
        let g = build_ball_grid(2, 129).unwrap();
        let zero = GridFunction::zeros(&g);
        let x0 = [0.1, -0.05, 0.0];
        let x1 = g.nearest_node(&x0);
        let params = BarrierParams {
            big_a: 3.0,
            opening: 1.0,
            r: 0.25,
            x0,
            y1: g.coord(x1),
        };
        let probe = barrier_probe(&zero, &params, x1).unwrap();
        assert!(probe.gap <= probe.gap_bound + 10.0 * g.spacing() * params.opening);
        assert!(probe.inside_half);
    }

    #[test]
    fn barrier_probe_quadratic_and_steepness() {
        let g = build_ball_grid(2, 129).unwrap();
        let case = make_case(CaseKind::Quadratic { a: 1.0 }, 2).unwrap();
        let u = case.sample_u(&g).unwrap();
        let opening = 2.0;
        let set = contact_set(&u, opening, &VertexSet::full(&g), Direction::Lower, None).unwrap();
        let x0 = [0.15, 0.1, 0.0];
        let r = 0.25;
        let (x1, y1) = contact_point_in_ball(&set, &x0, r).unwrap();
        let mut inside = Vec::new();
        for big_a in [1.5, 3.0, 4.0] {
            let params = BarrierParams {
                big_a,
                opening,
                r,
                x0,
                y1,
            };
            let probe = barrier_probe(&u, &params, x1).unwrap();
            assert!(
                probe.gap <= probe.gap_bound + 10.0 * g.spacing() * opening,
                "A = {big_a}: gap {} bound {}",
                probe.gap,
                probe.gap_bound
            );
            inside.push(probe.inside_half);
        }
        assert!(
            *inside.last().unwrap(),
            "steepest barrier failed to localize"
        );

        // Rejects a non-touching seed.
        let bad = BarrierParams {
            big_a: 3.0,
            opening,
            r,
            x0,
            y1: [0.9, 0.0, 0.0],
        };
        assert!(barrier_probe(&u, &bad, x1).is_err());
    }

    #[test]
    fn vertex_compare_flat_field() {
        let g = build_ball_grid(2, 129).unwrap();
        let zero = GridFunction::zeros(&g);
        let ell = Ellipticity::new(1.0, 2.0).unwrap();
        // Every vertex of V is its own contact point.
        let rep = vertex_measure_compare(
            &zero,
            1.0,
            4.0,
            &[0.1, 0.0, 0.0],
            &[0.1, 0.0, 0.0],
            0.4,
            &[0.1, 0.0, 0.0],
            &ell,
            0.15,
        )
        .unwrap();
        assert!(rep.ratio <= 1.0 + 1e-12);
        assert!(rep.containment_ok);
        assert_eq!(rep.det_checked, rep.det_in_range);
    }

    #[test]
    fn vertex_compare_quadratic_ratio() {
        // Contact points of the quadratic are the vertices contracted by
        // KM/(KM + a) plus the tolerance ring of width sqrt(2 tol/(KM + a)),
        // so the restricted contact count matches the raster count of that
        // inflated contracted ball.
        let g = build_ball_grid(2, 257).unwrap();
        let case = make_case(CaseKind::Quadratic { a: 1.0 }, 2).unwrap();
        let a = 1.0;
        let u = case.sample_u(&g).unwrap();
        let ell = case.ell;
        let (k, m) = (1.0, 4.0);
        let x0 = [0.15, 0.1, 0.0];
        let r = 0.35;
        let set = contact_set(&u, k, &VertexSet::full(&g), Direction::Lower, None).unwrap();
        let (x1, y1) = contact_point_in_ball(&set, &x0, r).unwrap();
        let probe = barrier_probe(
            &u,
            &BarrierParams {
                big_a: 3.0,
                opening: k,
                r,
                x0,
                y1,
            },
            x1,
        )
        .unwrap();
        let rep = vertex_measure_compare(&u, k, m, &probe.x2, &y1, r, &x0, &ell, 0.15).unwrap();
        assert!(
            rep.containment_ok,
            "{} exceptions",
            rep.containment_exceptions
        );

        let km = k * m;
        let contraction = km / (km + a);
        let tol = crate::contact::default_tol(km, &g);
        let ring = (2.0 * tol / (km + a)).sqrt();
        let mut image_center = [0.0; 3];
        for d in 0..2 {
            image_center[d] = rep.v_center[d] * contraction;
        }
        let predicted = raster_ball(&g, &image_center, rep.v_radius * contraction + ring).count();
        let got = rep.contact_count;
        assert!(
            (got as f64 - predicted as f64).abs() <= 0.25 * predicted as f64,
            "contact count {got} vs ring-corrected prediction {predicted}"
        );
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        assert!(rep.det_checked > 0);
        assert_eq!(rep.det_checked, rep.det_in_range);
        assert!(rep.det_max <= rep.det_bound + 0.05);
    }
}
