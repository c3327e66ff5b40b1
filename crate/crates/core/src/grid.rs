//! Masked Cartesian discretization of the closed unit ball: sampling,
//! central finite differences, and node-count quadrature for measures
//! and L^p norms.
//!
//! The grid is node-centered on [-1,1]^n with an odd number of nodes per
//! axis, so the origin is always a node and the spacing is h = 2/(cells-1).
//! The mask marks nodes with |x| <= 1 (the closed ball). Nodes outside the
//! mask carry the sentinel value +inf, which acts as an absorbing element
//! in the min/max envelope transforms and never enters arithmetic.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Sentinel stored at masked-out nodes of a [`GridFunction`].
pub const SENTINEL: f64 = f64::INFINITY;

/// Node-centered grid covering [-1,1]^n with the closed-ball mask.
#[derive(Clone, Debug)]
pub struct GridSpec {
    ndim: usize,
    cells: usize,
    h: f64,
    mask: Arc<Vec<bool>>,
    /// Masked nodes with some unmasked neighbor in the full 3^n - 1
    /// neighborhood (grid edges count as unmasked). The discrete stand-in
    /// for the boundary sphere.
    ring: Arc<Vec<bool>>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.ndim == other.ndim && self.cells == other.cells
    }
}

/// Builds the ball grid. `cells_per_axis` must be odd (the origin must be a
/// node) and at least 3; `ndim` must be 1, 2 or 3.
pub fn build_ball_grid(ndim: usize, cells_per_axis: usize) -> Result<GridSpec> {
    if !(1..=3).contains(&ndim) {
        return Err(Error::InvalidGrid(format!("ndim {ndim} not in 1..=3")));
    }
    if cells_per_axis < 3 || cells_per_axis % 2 == 0 {
        return Err(Error::InvalidGrid(format!(
            "cells_per_axis {cells_per_axis} must be odd and >= 3"
        )));
    }
    let h = 2.0 / (cells_per_axis as f64 - 1.0);
    let total = cells_per_axis.pow(ndim as u32);
    let mut spec = GridSpec {
        ndim,
        cells: cells_per_axis,
        h,
        mask: Arc::new(Vec::new()),
        ring: Arc::new(Vec::new()),
    };
    let mut mask = vec![false; total];
    for (i, m) in mask.iter_mut().enumerate() {
        let x = spec.coord_raw(i);
        *m = norm2(&x, ndim) <= 1.0 + 1e-14;
    }
    spec.mask = Arc::new(mask);
    let mut ring = vec![false; total];
    for i in 0..total {
        if !spec.mask[i] {
            continue;
        }
        ring[i] = spec.moore_has_unmasked(i);
    }
    spec.ring = Arc::new(ring);
    Ok(spec)
}

fn norm2(x: &[f64; 3], ndim: usize) -> f64 {
    x[..ndim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance between two node coordinates.
pub fn dist(a: &[f64; 3], b: &[f64; 3], ndim: usize) -> f64 {
    (0..ndim)
        .map(|k| (a[k] - b[k]) * (a[k] - b[k]))
        .sum::<f64>()
        .sqrt()
}

impl GridSpec {
    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn total_nodes(&self) -> usize {
        self.cells.pow(self.ndim as u32)
    }

    /// Row-major stride of `axis` (the last axis is contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.cells.pow((self.ndim - 1 - axis) as u32)
    }

    /// Per-axis integer index of a flat node index.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.cells
    }

    fn coord_raw(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.ndim {
            x[a] = -1.0 + self.axis_index(flat, a) as f64 * self.h;
        }
        x
    }

    /// Coordinates of a node; unused components are zero.
    pub fn coord(&self, flat: usize) -> [f64; 3] {
        self.coord_raw(flat)
    }

    pub fn norm(&self, flat: usize) -> f64 {
        norm2(&self.coord_raw(flat), self.ndim)
    }

    /// Flat index of the node with the given per-axis indices.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for a in 0..self.ndim {
            f += idx[a] * self.stride(a);
        }
        f
    }

    /// Flat index of the node nearest to a point (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64; 3]) -> usize {
        let mut f = 0;
        for a in 0..self.ndim {
            let i = ((x[a] + 1.0) / self.h)
                .round()
                .clamp(0.0, (self.cells - 1) as f64);
            f += (i as usize) * self.stride(a);
        }
        f
    }

    /// Axis neighbor at `flat + dir` along `axis`, or None at the grid edge.
    pub fn neighbor(&self, flat: usize, axis: usize, dir: isize) -> Option<usize> {
        let i = self.axis_index(flat, axis) as isize + dir;
        if i < 0 || i >= self.cells as isize {
            return None;
        }
        Some((flat as isize + dir * self.stride(axis) as isize) as usize)
    }

    /// Neighbor displaced by `off` (entries in {-1,0,1}), or None off-grid.
    pub fn offset(&self, flat: usize, off: &[isize; 3]) -> Option<usize> {
        let mut f = flat as isize;
        for a in 0..self.ndim {
            let i = self.axis_index(flat, a) as isize + off[a];
            if i < 0 || i >= self.cells as isize {
                return None;
            }
            f += off[a] * self.stride(a) as isize;
        }
        Some(f as usize)
    }

    fn moore_has_unmasked(&self, flat: usize) -> bool {
        let mut off = [0isize; 3];
        self.moore_scan(flat, 0, &mut off)
    }

    fn moore_scan(&self, flat: usize, axis: usize, off: &mut [isize; 3]) -> bool {
        if axis == self.ndim {
            if off[..self.ndim].iter().all(|&d| d == 0) {
                return false;
            }
            return match self.offset(flat, off) {
                Some(j) => !self.mask[j],
                None => true,
            };
        }
        for d in [-1isize, 0, 1] {
            off[axis] = d;
            if self.moore_scan(flat, axis + 1, off) {
                off[axis] = 0;
                return true;
            }
        }
        off[axis] = 0;
        false
    }

    pub fn is_masked(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    /// True on the discrete boundary ring of the ball mask.
    pub fn is_ring(&self, flat: usize) -> bool {
        self.ring[flat]
    }

    /// Masked and not on the boundary ring: the full 3^n - 1 stencil is
    /// inside the mask, so central differences are available.
    pub fn is_interior(&self, flat: usize) -> bool {
        self.mask[flat] && !self.ring[flat]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Discrete measure of the whole ball mask: node count times h^n.
    pub fn ball_measure(&self) -> f64 {
        self.masked_count() as f64 * self.cell_volume()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.ndim as i32)
    }

    /// Flat indices of masked nodes.
    pub fn masked_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.total_nodes()).filter(move |&i| self.mask[i])
    }

    /// The boundary ring as a cell set.
    pub fn ring_set(&self) -> CellSet {
        CellSet {
            spec: self.clone(),
            members: self.ring.as_ref().clone(),
        }
    }
}

/// Scalar field on the masked grid. Off-mask nodes hold [`SENTINEL`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    /// Samples a pointwise expression on the mask. Fails if the expression
    /// is non-finite at a masked node.
    pub fn sample(spec: &GridSpec, expr: impl Fn(&[f64; 3]) -> f64) -> Result<Self> {
        let mut values = vec![SENTINEL; spec.total_nodes()];
        for i in spec.masked_nodes() {
            let v = expr(&spec.coord(i));
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i });
            }
            values[i] = v;
        }
        Ok(GridFunction {
            spec: spec.clone(),
            values,
        })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        let mut values = vec![SENTINEL; spec.total_nodes()];
        for i in spec.masked_nodes() {
            values[i] = 0.0;
        }
        GridFunction {
            spec: spec.clone(),
            values,
        }
    }

    /// Wraps raw values without the finiteness check. For fields that
    /// legitimately carry sentinels on masked nodes (restricted transform
    /// levels); off-mask nodes are still forced to the sentinel.
    pub(crate) fn from_raw(spec: &GridSpec, mut values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.total_nodes());
        for i in 0..values.len() {
            if !spec.is_masked(i) {
                values[i] = SENTINEL;
            }
        }
        GridFunction {
            spec: spec.clone(),
            values,
        }
    }

    /// Builds a field from raw values; masked nodes must be finite.
    pub fn from_values(spec: &GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.total_nodes() {
            return Err(Error::InvalidGrid("value buffer length mismatch".into()));
        }
        for i in 0..values.len() {
            if spec.is_masked(i) {
                if !values[i].is_finite() {
                    return Err(Error::NonFinite { node: i });
                }
            } else {
                values[i] = SENTINEL;
            }
        }
        Ok(GridFunction {
            spec: spec.clone(),
            values,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// Pointwise negation on the mask; the off-mask sentinel stays +inf so
    /// the result is again a valid lower-transform input.
    pub fn negated(&self) -> Self {
        let mut values = self.values.clone();
        for i in self.spec.masked_nodes() {
            values[i] = -values[i];
        }
        GridFunction {
            spec: self.spec.clone(),
            values,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut values = self.values.clone();
        for i in self.spec.masked_nodes() {
            values[i] *= a;
        }
        GridFunction {
            spec: self.spec.clone(),
            values,
        }
    }

    /// Sup norm over the mask.
    pub fn sup_norm(&self) -> f64 {
        self.spec
            .masked_nodes()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    /// Node minimizing the field over the mask (ties: smallest index).
    pub fn argmin(&self) -> usize {
        let mut best = usize::MAX;
        let mut bv = f64::INFINITY;
        for i in self.spec.masked_nodes() {
            if self.values[i] < bv {
                bv = self.values[i];
                best = i;
            }
        }
        best
    }
}

/// A set of grid nodes contained in the ball mask.
#[derive(Clone, Debug)]
pub struct CellSet {
    spec: GridSpec,
    members: Vec<bool>,
}

impl CellSet {
    pub fn empty(spec: &GridSpec) -> Self {
        CellSet {
            spec: spec.clone(),
            members: vec![false; spec.total_nodes()],
        }
    }

    pub fn full(spec: &GridSpec) -> Self {
        CellSet {
            spec: spec.clone(),
            members: spec.mask().to_vec(),
        }
    }

    /// Members are the masked nodes satisfying the predicate.
    pub fn from_pred(spec: &GridSpec, pred: impl Fn(usize) -> bool) -> Self {
        let mut members = vec![false; spec.total_nodes()];
        for i in spec.masked_nodes() {
            members[i] = pred(i);
        }
        CellSet {
            spec: spec.clone(),
            members,
        }
    }

    /// Builds a set from raw membership flags, clipping to the mask.
    pub fn from_members(spec: &GridSpec, members: Vec<bool>) -> Result<Self> {
        if members.len() != spec.total_nodes() {
            return Err(Error::InvalidSet(
                "membership buffer length mismatch".into(),
            ));
        }
        let mut members = members;
        for i in 0..members.len() {
            members[i] &= spec.is_masked(i);
        }
        Ok(CellSet {
            spec: spec.clone(),
            members,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.members[flat]
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn insert(&mut self, flat: usize) {
        debug_assert!(self.spec.is_masked(flat));
        self.members[flat] = self.spec.is_masked(flat);
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.members.iter().all(|&m| !m)
    }

    /// Discrete measure: node count times h^n.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.spec.cell_volume()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(move |&i| self.members[i])
    }

    fn zip_check(&self, other: &CellSet) {
        assert!(self.spec == other.spec, "cell sets live on different grids");
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.zip_check(other);
        let members = self
            .members
            .iter()
            .zip(&other.members)
            .map(|(&a, &b)| a && b)
            .collect();
        CellSet {
            spec: self.spec.clone(),
            members,
        }
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        self.zip_check(other);
        let members = self
            .members
            .iter()
            .zip(&other.members)
            .map(|(&a, &b)| a || b)
            .collect();
        CellSet {
            spec: self.spec.clone(),
            members,
        }
    }

    pub fn minus(&self, other: &CellSet) -> CellSet {
        self.zip_check(other);
        let members = self
            .members
            .iter()
            .zip(&other.members)
            .map(|(&a, &b)| a && !b)
            .collect();
        CellSet {
            spec: self.spec.clone(),
            members,
        }
    }

    pub fn symmetric_difference(&self, other: &CellSet) -> CellSet {
        self.zip_check(other);
        let members = self
            .members
            .iter()
            .zip(&other.members)
            .map(|(&a, &b)| a != b)
            .collect();
        CellSet {
            spec: self.spec.clone(),
            members,
        }
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.zip_check(other);
        self.members
            .iter()
            .zip(&other.members)
            .all(|(&a, &b)| !a || b)
    }

    /// Complement within the ball mask.
    pub fn complement(&self) -> CellSet {
        CellSet::from_pred(&self.spec, |i| !self.members[i])
    }
}

/// Central finite differences of a field. `grad` and `hess` are valid only
/// where `valid` is set: the full stencil, including the diagonal pairs used
/// by the symmetric four-point mixed formula, must be masked.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub grad: Vec<[f64; 3]>,
    /// Packed symmetric Hessian: (xx, yy, zz, xy, xz, yz).
    pub hess: Vec<[f64; 6]>,
    pub valid: Vec<bool>,
}

impl Derivatives {
    pub fn grad_norm(&self, i: usize, ndim: usize) -> f64 {
        self.grad[i][..ndim]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm of the Hessian (off-diagonal entries counted twice).
    pub fn hess_frobenius(&self, i: usize, ndim: usize) -> f64 {
        let h = &self.hess[i];
        let mut s = 0.0;
        for d in 0..ndim {
            s += h[d] * h[d];
        }
        let off = match ndim {
            1 => &[][..],
            2 => &[3usize][..],
            _ => &[3usize, 4, 5][..],
        };
        for &k in off {
            s += 2.0 * h[k] * h[k];
        }
        s.sqrt()
    }
}

/// Second-order central differences of `u`. Non-valid nodes hold zeros and
/// are excluded via the validity mask (which equals the grid interior).
pub fn fd_derivatives(u: &GridFunction) -> Derivatives {
    let spec = u.spec();
    let n = spec.total_nodes();
    let ndim = spec.ndim();
    let h = spec.spacing();
    let mut out = Derivatives {
        grad: vec![[0.0; 3]; n],
        hess: vec![[0.0; 6]; n],
        valid: vec![false; n],
    };
    let v = u.values();
    let mixed_slot = |a: usize, b: usize| match (a, b) {
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    };
    for i in 0..n {
        if !spec.is_interior(i) {
            continue;
        }
        out.valid[i] = true;
        for a in 0..ndim {
            let ip = spec.neighbor(i, a, 1).unwrap();
            let im = spec.neighbor(i, a, -1).unwrap();
            out.grad[i][a] = (v[ip] - v[im]) / (2.0 * h);
            out.hess[i][a] = (v[ip] - 2.0 * v[i] + v[im]) / (h * h);
        }
        for a in 0..ndim {
            for b in (a + 1)..ndim {
                let mut off = [0isize; 3];
                off[a] = 1;
                off[b] = 1;
                let pp = spec.offset(i, &off).unwrap();
                off[b] = -1;
                let pm = spec.offset(i, &off).unwrap();
                off[a] = -1;
                off[b] = 1;
                let mp = spec.offset(i, &off).unwrap();
                off[b] = -1;
                let mm = spec.offset(i, &off).unwrap();
                out.hess[i][mixed_slot(a, b)] = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * h * h);
            }
        }
    }
    out
}

/// L^p "norm" (h^n Σ g^p)^(1/p) over the mask, for p > 0 and g >= 0.
pub fn lp_norm(g: &GridFunction, p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::InvalidParameter(format!("p = {p} must be positive")));
    }
    let spec = g.spec();
    let mut s = 0.0;
    for i in spec.masked_nodes() {
        let v = g.value(i);
        if v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative value {v} at node {i} in lp_norm"
            )));
        }
        s += v.powf(p);
    }
    Ok((spec.cell_volume() * s).powf(1.0 / p))
}
