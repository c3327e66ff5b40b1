//! The contact engine: slide concave paraboloids of a fixed opening below
//! (or above) a grid function and record where they touch.
//!
//! Everything is built from one primitive, the separable lower-envelope
//! transform m(y) = min_x (u(x) + kappa/2 |x-y|^2), computed per axis in
//! linear time by the lower-envelope-of-parabolas sweep with argmin
//! tracking. A second, mirrored pass produces the paraboloid hull
//! w(x) = max_{y in V} (m(y) - kappa/2 |x-y|^2); the touching nodes are
//! exactly those where w returns to u (within tolerance), because the
//! double transform reproduces u precisely on the contact set.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fd_derivatives, CellSet, Derivatives, GridFunction, GridSpec};
use crate::operators::SymMatrix;

/// Concave paraboloid -kappa/2 |x - vertex|^2 + level.
#[derive(Clone, Copy, Debug)]
pub struct Paraboloid {
    pub opening: f64,
    pub vertex: [f64; 3],
    pub level: f64,
}

impl Paraboloid {
    /// The paraboloid of the given opening and vertex passing through
    /// (x0, value): its level is value + kappa/2 |x0 - vertex|^2.
    pub fn through(opening: f64, vertex: [f64; 3], x0: &[f64; 3], value: f64, ndim: usize) -> Self {
        let d2: f64 = (0..ndim)
            .map(|k| (x0[k] - vertex[k]) * (x0[k] - vertex[k]))
            .sum();
        Paraboloid {
            opening,
            vertex,
            level: value + 0.5 * opening * d2,
        }
    }

    pub fn eval(&self, x: &[f64; 3], ndim: usize) -> f64 {
        let d2: f64 = (0..ndim)
            .map(|k| (x[k] - self.vertex[k]) * (x[k] - self.vertex[k]))
            .sum();
        self.level - 0.5 * self.opening * d2
    }
}

/// Nonempty set of admissible paraboloid vertices inside the ball mask.
#[derive(Clone, Debug)]
pub struct VertexSet {
    cells: CellSet,
}

impl VertexSet {
    pub fn new(cells: CellSet) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyVertexSet);
        }
        Ok(VertexSet { cells })
    }

    /// The whole closed ball.
    pub fn full(spec: &GridSpec) -> Self {
        VertexSet {
            cells: CellSet::full(spec),
        }
    }

    /// Grid nodes of the closed ball of radius `r` around `center`.
    pub fn ball(spec: &GridSpec, center: &[f64; 3], r: f64) -> Result<Self> {
        let ndim = spec.ndim();
        let cells = CellSet::from_pred(spec, |i| {
            crate::grid::dist(&spec.coord(i), center, ndim) <= r
        });
        if cells.is_empty() {
            return Err(Error::EmptyVertexSet);
        }
        Ok(VertexSet { cells })
    }

    pub fn cells(&self) -> &CellSet {
        &self.cells
    }
}

/// Direction of the sliding paraboloids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Lower,
    Upper,
    Both,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Direction::Lower),
            "upper" => Ok(Direction::Upper),
            "both" => Ok(Direction::Both),
            _ => Err(Error::InvalidParameter(format!("unknown direction: {s}"))),
        }
    }
}

/// Result of the double envelope transform.
///
/// `m` holds the slid-paraboloid levels per vertex (sentinel off the vertex
/// set), `argmin` the touching node each vertex's paraboloid lands on, `w`
/// the paraboloid hull over the ball and `witness` the vertex whose
/// paraboloid realizes the hull at each node.
#[derive(Clone, Debug)]
pub struct TransformResult {
    pub m: GridFunction,
    pub argmin: Vec<u32>,
    pub w: GridFunction,
    pub witness: Vec<u32>,
}

pub const NO_NODE: u32 = u32::MAX;

/// One-dimensional lower envelope of the parabolas f[p] + coeff (t - p)^2,
/// evaluated at every integer t, with argmin tracking. Entries equal to
/// +inf never enter the hull.
fn line_lower_envelope(coeff: f64, f: &[f64], out_v: &mut [f64], out_a: &mut [u32]) {
    let n = f.len();
    let mut loc = vec![0usize; n];
    let mut bnd = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut started = false;

    let intersect = |p: usize, q: usize| -> f64 {
        // Abscissa where parabola q overtakes parabola p (q > p).
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] - f[p]) / coeff + (qf * qf - pf * pf)) / (2.0 * (qf - pf))
    };

    for q in 0..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        if !started {
            loc[0] = q;
            bnd[0] = f64::NEG_INFINITY;
            bnd[1] = f64::INFINITY;
            started = true;
            k = 0;
            continue;
        }
        let mut s = intersect(loc[k], q);
        while s <= bnd[k] {
            k -= 1;
            s = intersect(loc[k], q);
        }
        k += 1;
        loc[k] = q;
        bnd[k] = s;
        bnd[k + 1] = f64::INFINITY;
    }

    if !started {
        out_v.fill(f64::INFINITY);
        out_a.fill(NO_NODE);
        return;
    }
    let mut k = 0;
    for t in 0..n {
        while bnd[k + 1] < t as f64 {
            k += 1;
        }
        let p = loc[k];
        let d = t as f64 - p as f64;
        out_v[t] = f[p] + coeff * d * d;
        out_a[t] = p as u32;
    }
}

/// Full separable transform: returns, for every grid node y,
/// min over nodes x of (input[x] + kappa/2 |x - y|^2) together with the flat
/// index of the minimizer. Inputs at +inf are transparent.
pub(crate) fn separable_lower(spec: &GridSpec, input: &[f64], kappa: f64) -> (Vec<f64>, Vec<u32>) {
    let n = spec.total_nodes();
    let coeff = 0.5 * kappa * spec.spacing() * spec.spacing();
    let mut vals = input.to_vec();
    let mut src: Vec<u32> = (0..n as u32).collect();
    for axis in 0..spec.ndim() {
        let cells = spec.cells();
        let stride = spec.stride(axis);
        let bases: Vec<usize> = (0..n).filter(|&i| spec.axis_index(i, axis) == 0).collect();
        let results: Vec<(Vec<f64>, Vec<u32>)> = bases
            .par_iter()
            .map(|&base| {
                let mut f = vec![0.0f64; cells];
                for (t, ft) in f.iter_mut().enumerate() {
                    *ft = vals[base + t * stride];
                }
                let mut ov = vec![0.0f64; cells];
                let mut oa = vec![0u32; cells];
                line_lower_envelope(coeff, &f, &mut ov, &mut oa);
                (ov, oa)
            })
            .collect();
        let mut nv = vec![f64::INFINITY; n];
        let mut ns = vec![NO_NODE; n];
        for (bi, &base) in bases.iter().enumerate() {
            let (ov, oa) = &results[bi];
            for t in 0..cells {
                let idx = base + t * stride;
                nv[idx] = ov[t];
                ns[idx] = if oa[t] == NO_NODE {
                    NO_NODE
                } else {
                    src[base + oa[t] as usize * stride]
                };
            }
        }
        vals = nv;
        src = ns;
    }
    (vals, src)
}

/// Reference transform by exhaustive search, O(N * N). Used to validate the
/// separable sweep; kept independent of it.
pub fn brute_force_lower(spec: &GridSpec, input: &[f64], kappa: f64) -> (Vec<f64>, Vec<u32>) {
    let n = spec.total_nodes();
    let ndim = spec.ndim();
    let out: Vec<(f64, u32)> = (0..n)
        .into_par_iter()
        .map(|y| {
            let yc = spec.coord(y);
            let mut best = f64::INFINITY;
            let mut arg = NO_NODE;
            for x in 0..n {
                if input[x] == f64::INFINITY {
                    continue;
                }
                let xc = spec.coord(x);
                let d2: f64 = (0..ndim).map(|k| (xc[k] - yc[k]) * (xc[k] - yc[k])).sum();
                let v = input[x] + 0.5 * kappa * d2;
                if v < best {
                    best = v;
                    arg = x as u32;
                }
            }
            (best, arg)
        })
        .collect();
    (
        out.iter().map(|p| p.0).collect(),
        out.iter().map(|p| p.1).collect(),
    )
}

/// Slides the opening-`kappa` paraboloid below `u` for every vertex in `V`
/// simultaneously and assembles the resulting hull.
///
/// The minimization over touching points always ranges over the full ball;
/// the vertex restriction enters only through the second (mirrored) pass.
pub fn lower_transform(u: &GridFunction, kappa: f64, v: &VertexSet) -> Result<TransformResult> {
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kappa = {kappa} must be positive"
        )));
    }
    let spec = u.spec();
    if v.cells().is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let (m_all, argmin_all) = separable_lower(spec, u.values(), kappa);

    let n = spec.total_nodes();
    let mut m_vals = vec![f64::INFINITY; n];
    let mut argmin = vec![NO_NODE; n];
    let mut neg_m = vec![f64::INFINITY; n];
    for i in 0..n {
        if v.cells().contains(i) {
            m_vals[i] = m_all[i];
            argmin[i] = argmin_all[i];
            neg_m[i] = -m_all[i];
        }
    }
    let (neg_w, witness) = separable_lower(spec, &neg_m, kappa);
    let mut w_vals = vec![f64::INFINITY; n];
    for i in 0..n {
        if spec.is_masked(i) {
            w_vals[i] = -neg_w[i];
        }
    }
    // m carries the sentinel off V by construction.
    let m = GridFunction::from_raw(spec, m_vals);
    let w = GridFunction::from_raw(spec, w_vals);
    Ok(TransformResult {
        m,
        argmin,
        w,
        witness,
    })
}

/// Set of nodes where a slid paraboloid touches.
#[derive(Clone, Debug)]
pub struct ContactSet {
    pub cells: CellSet,
    pub direction: Direction,
    pub kappa: f64,
    pub tol: f64,
    /// Vertex witnessing the touch, per contact node (lower for `Lower` and
    /// `Both`, mirrored vertex for `Upper`).
    pub witness: Vec<u32>,
    /// Hull of the primary direction, for envelope diagnostics.
    pub envelope: GridFunction,
}

impl ContactSet {
    /// Contact nodes off the discrete boundary ring.
    pub fn interior(&self) -> CellSet {
        let spec = self.cells.spec().clone();
        CellSet::from_pred(&spec, |i| self.cells.contains(i) && !spec.is_ring(i))
    }
}

/// Default contact tolerance kappa h^2: a node adjacent to the true
/// off-grid touching point mismatches the paraboloid by this order, and
/// scaling the tolerance with kappa keeps the opening-rescaling invariant
/// exact.
pub fn default_tol(kappa: f64, spec: &GridSpec) -> f64 {
    kappa * spec.spacing() * spec.spacing()
}

pub fn contact_set(
    u: &GridFunction,
    kappa: f64,
    v: &VertexSet,
    direction: Direction,
    tol: Option<f64>,
) -> Result<ContactSet> {
    let spec = u.spec();
    let tol = match tol {
        Some(t) if t < 0.0 => {
            return Err(Error::InvalidParameter(format!("tol = {t} must be >= 0")));
        }
        Some(t) => t,
        None => default_tol(kappa, spec),
    };
    match direction {
        Direction::Lower => one_sided(u, kappa, v, tol, Direction::Lower),
        Direction::Upper => {
            let mut set = one_sided(&u.negated(), kappa, v, tol, Direction::Upper)?;
            set.direction = Direction::Upper;
            Ok(set)
        }
        Direction::Both => {
            let lo = one_sided(u, kappa, v, tol, Direction::Lower)?;
            let up = one_sided(&u.negated(), kappa, v, tol, Direction::Upper)?;
            Ok(ContactSet {
                cells: lo.cells.intersection(&up.cells),
                direction: Direction::Both,
                kappa,
                tol,
                witness: lo.witness,
                envelope: lo.envelope,
            })
        }
    }
}

fn one_sided(
    u: &GridFunction,
    kappa: f64,
    v: &VertexSet,
    tol: f64,
    dir: Direction,
) -> Result<ContactSet> {
    let spec = u.spec();
    let tr = lower_transform(u, kappa, v)?;
    let cells = CellSet::from_pred(spec, |i| u.value(i) - tr.w.value(i) <= tol);
    Ok(ContactSet {
        cells,
        direction: dir,
        kappa,
        tol,
        witness: tr.witness,
        envelope: tr.w,
    })
}

/// Inf-convolution regularization u_eps(x) = min_z (u(z) + |z-x|^2 / eps^4),
/// i.e. the lower transform at opening 2/eps^4 over the full ball, read as a
/// field over the query point.
pub fn moreau_envelope(u: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let kappa = 2.0 / epsilon.powi(4);
    let spec = u.spec();
    let (m, _) = separable_lower(spec, u.values(), kappa);
    let mut vals = vec![f64::INFINITY; spec.total_nodes()];
    for i in spec.masked_nodes() {
        vals[i] = m[i];
    }
    GridFunction::from_values(spec, vals)
}

/// Vertex map y = x + grad u_eps(x) / kappa and its Jacobian determinant
/// det(I + D^2 u_eps(x) / kappa).
#[derive(Clone, Copy, Debug)]
pub struct VertexMap {
    pub y: [f64; 3],
    /// Determinant clamped below at zero (the one-sided curvature bound
    /// holds at contact points).
    pub det: f64,
    pub det_raw: f64,
}

pub fn vertex_map(
    u_eps: &GridFunction,
    derivs: &Derivatives,
    node: usize,
    kappa: f64,
) -> Result<VertexMap> {
    let spec = u_eps.spec();
    if !derivs.valid[node] {
        return Err(Error::InvalidParameter(format!(
            "node {node} lacks a full difference stencil"
        )));
    }
    let ndim = spec.ndim();
    let x = spec.coord(node);
    let mut y = [0.0; 3];
    for k in 0..ndim {
        y[k] = x[k] + derivs.grad[node][k] / kappa;
    }
    let jac = SymMatrix::from_packed(ndim, &derivs.hess[node])
        .scaled(1.0 / kappa)
        .add(&SymMatrix::identity(ndim));
    let det_raw = jac.det();
    Ok(VertexMap {
        y,
        det: det_raw.max(0.0),
        det_raw,
    })
}

/// Convenience: derivatives of an envelope for repeated vertex-map queries.
pub fn envelope_derivatives(u_eps: &GridFunction) -> Derivatives {
    fd_derivatives(u_eps)
}
