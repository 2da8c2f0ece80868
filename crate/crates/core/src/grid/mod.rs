//! Lattices, space-time grids, grid functions and parabolic cylinders.
//!
//! A spatial domain is a rectangular lattice of nodes with a boolean mask.
//! Mask nodes sample the closure of the domain; mask nodes with a neighbour
//! outside the mask sit on the boundary and carry Dirichlet data. The lattice
//! always keeps at least one ring of unmasked nodes around the mask.

mod io;

pub use io::{read_pgrd, write_csv, write_pgrd, PGRD_MAGIC, PGRD_VERSION};

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric family accepted by [`make_domain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// `[0, length]` sampled by `cells` mask nodes.
    Interval { length: f64, cells: usize },
    /// `[0, lx] x [0, ly]` sampled by `cells[0] x cells[1]` mask nodes.
    Box { lengths: [f64; 2], cells: [usize; 2] },
    /// `[0, L]^2` with the open upper-right quadrant removed.
    LShape { length: f64, cells: usize },
    /// Ring `inner <= |x| <= outer` around the origin; `cells` nodes across the diameter.
    Annulus { inner: f64, outer: f64, cells: usize },
}

/// Masked rectangular lattice in one or two space dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDomain {
    dim: usize,
    shape: [usize; 2],
    spacing: [f64; 2],
    origin: [f64; 2],
    mask: Vec<bool>,
    boundary: Vec<bool>,
    boundary_cells: Vec<usize>,
}

/// Build one of the standard domains.
pub fn make_domain(kind: &DomainKind) -> Result<SpatialDomain> {
    match *kind {
        DomainKind::Interval { length, cells } => {
            check_length(length)?;
            check_cells(cells)?;
            let h = length / (cells - 1) as f64;
            let mask = (0..cells + 2).map(|i| (1..=cells).contains(&i)).collect();
            SpatialDomain::from_mask(1, [cells + 2, 1], [h, h], [-h, 0.0], mask)
        }
        DomainKind::Box { lengths, cells } => {
            check_length(lengths[0])?;
            check_length(lengths[1])?;
            check_cells(cells[0])?;
            check_cells(cells[1])?;
            let h = [lengths[0] / (cells[0] - 1) as f64, lengths[1] / (cells[1] - 1) as f64];
            let shape = [cells[0] + 2, cells[1] + 2];
            let mut mask = vec![false; shape[0] * shape[1]];
            for i in 1..=cells[0] {
                for j in 1..=cells[1] {
                    mask[i * shape[1] + j] = true;
                }
            }
            SpatialDomain::from_mask(2, shape, h, [-h[0], -h[1]], mask)
        }
        DomainKind::LShape { length, cells } => {
            check_length(length)?;
            check_cells(cells)?;
            let h = length / (cells - 1) as f64;
            let shape = [cells + 2, cells + 2];
            let half = 0.5 * length;
            let tol = 1e-9 * h;
            let mut mask = vec![false; shape[0] * shape[1]];
            for i in 1..=cells {
                for j in 1..=cells {
                    let x = (i - 1) as f64 * h;
                    let y = (j - 1) as f64 * h;
                    if !(x > half + tol && y > half + tol) {
                        mask[i * shape[1] + j] = true;
                    }
                }
            }
            SpatialDomain::from_mask(2, shape, [h, h], [-h, -h], mask)
        }
        DomainKind::Annulus { inner, outer, cells } => {
            check_length(inner)?;
            check_length(outer)?;
            check_cells(cells)?;
            if inner >= outer {
                return Err(Error::InvalidParams(format!(
                    "annulus inner radius {inner} must be below outer radius {outer}"
                )));
            }
            let h = 2.0 * outer / (cells - 1) as f64;
            let n = cells + 2;
            let origin = -outer - h;
            let tol = 1e-9 * h;
            let mut mask = vec![false; n * n];
            for i in 0..n {
                for j in 0..n {
                    let x = origin + i as f64 * h;
                    let y = origin + j as f64 * h;
                    let r = x.hypot(y);
                    mask[i * n + j] = r >= inner - tol && r <= outer + tol;
                }
            }
            SpatialDomain::from_mask(2, [n, n], [h, h], [origin, origin], mask)
        }
    }
}

fn check_length(l: f64) -> Result<()> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParams(format!("length {l} must be positive")));
    }
    Ok(())
}

fn check_cells(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidParams(format!(
            "{n} cells per axis cannot hold an interior node"
        )));
    }
    Ok(())
}

impl SpatialDomain {
    /// Build a domain from an explicit node mask.
    ///
    /// Node `(i, j)` has index `i * shape[1] + j` and position
    /// `origin + (i * h0, j * h1)`. In one dimension `shape[1]` must be 1.
    pub fn from_mask(
        dim: usize,
        shape: [usize; 2],
        spacing: [f64; 2],
        origin: [f64; 2],
        mask: Vec<bool>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParams(format!("dimension {dim} not in {{1, 2}}")));
        }
        if dim == 1 && shape[1] != 1 {
            return Err(Error::InvalidParams("1-d lattice must have shape[1] = 1".into()));
        }
        if shape[0] == 0 || shape[1] == 0 || mask.len() != shape[0] * shape[1] {
            return Err(Error::InvalidParams("mask length does not match lattice shape".into()));
        }
        for &h in &spacing[..dim] {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParams(format!("spacing {h} must be positive")));
            }
        }
        let spacing = if dim == 1 { [spacing[0], spacing[0]] } else { spacing };
        let mut dom = SpatialDomain {
            dim,
            shape,
            spacing,
            origin,
            boundary: vec![false; mask.len()],
            mask,
            boundary_cells: Vec::new(),
        };
        let start = dom.mask.iter().position(|&m| m).ok_or_else(|| {
            Error::InvalidParams("mask is empty".into())
        })?;
        for idx in 0..dom.len() {
            if dom.mask[idx] && dom.lattice_neighbor_count(idx) < 2 * dim
                || dom.mask[idx] && dom.neighbors(idx).any(|n| !dom.mask[n])
            {
                dom.boundary[idx] = true;
                dom.boundary_cells.push(idx);
            }
        }
        if !dom.mask.iter().zip(&dom.boundary).any(|(&m, &b)| m && !b) {
            return Err(Error::InvalidParams("domain has no interior node".into()));
        }
        // connectivity of the mask
        let mut seen = vec![false; dom.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 1usize;
        while let Some(idx) = queue.pop_front() {
            for n in dom.neighbors(idx) {
                if dom.mask[n] && !seen[n] {
                    seen[n] = true;
                    reached += 1;
                    queue.push_back(n);
                }
            }
        }
        if reached != dom.mask.iter().filter(|&&m| m).count() {
            return Err(Error::InvalidParams("mask is not connected".into()));
        }
        Ok(dom)
    }

    /// Same lattice with every node inside the mask.
    pub fn unmasked(&self) -> SpatialDomain {
        let mut d = self.clone();
        d.mask = vec![true; self.len()];
        d.boundary = vec![false; self.len()];
        d.boundary_cells.clear();
        for idx in 0..d.len() {
            if d.lattice_neighbor_count(idx) < 2 * d.dim {
                d.boundary[idx] = true;
                d.boundary_cells.push(idx);
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    /// Number of lattice nodes, masked or not.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_mask(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary[idx]
    }

    /// Mask node that is not on the boundary.
    pub fn is_interior(&self, idx: usize) -> bool {
        self.mask[idx] && !self.boundary[idx]
    }

    pub fn boundary_cells(&self) -> &[usize] {
        &self.boundary_cells
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Volume of the cell owned by one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    /// Smallest lattice spacing.
    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.shape[1], idx % self.shape[1])
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        if self.dim == 1 {
            [self.origin[0] + i as f64 * self.spacing[0], 0.0]
        } else {
            [
                self.origin[0] + i as f64 * self.spacing[0],
                self.origin[1] + j as f64 * self.spacing[1],
            ]
        }
    }

    /// Euclidean distance between two points, using only the active axes.
    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        if self.dim == 1 {
            (a[0] - b[0]).abs()
        } else {
            (a[0] - b[0]).hypot(a[1] - b[1])
        }
    }

    /// Neighbour of `idx` one step along `axis` in direction `dir` (+1 or -1).
    pub fn step(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let (c, n) = if axis == 0 { (i, self.shape[0]) } else { (j, self.shape[1]) };
        let c2 = c as isize + dir;
        if c2 < 0 || c2 >= n as isize {
            return None;
        }
        Some(if axis == 0 {
            self.index(c2 as usize, j)
        } else {
            self.index(i, c2 as usize)
        })
    }

    /// Lattice neighbours along the active axes.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim)
            .flat_map(move |a| [-1isize, 1].into_iter().map(move |d| (a, d)))
            .filter_map(move |(a, d)| self.step(idx, a, d))
    }

    fn lattice_neighbor_count(&self, idx: usize) -> usize {
        self.neighbors(idx).count()
    }

    /// Lattice nodes with `|x - center| < radius`.
    pub fn ball_nodes(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let (i0, i1) = axis_range(self.origin[0], self.spacing[0], self.shape[0], center[0], radius);
        let (j0, j1) = if self.dim == 1 {
            (0, 0)
        } else {
            axis_range(self.origin[1], self.spacing[1], self.shape[1], center[1], radius)
        };
        if i0 > i1 || j0 > j1 {
            return out;
        }
        for i in i0..=i1 {
            for j in j0..=j1 {
                let idx = self.index(i, j);
                if self.distance(self.position(idx), center) < radius {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Index of the lattice node closest to `x` (clamped to the lattice).
    pub fn nearest_node(&self, x: [f64; 2]) -> usize {
        let snap = |a: usize| {
            let c = ((x[a] - self.origin[a]) / self.spacing[a]).round();
            c.clamp(0.0, (self.shape[a] - 1) as f64) as usize
        };
        if self.dim == 1 {
            self.index(snap(0), 0)
        } else {
            self.index(snap(0), snap(1))
        }
    }
}

/// Inclusive index range of lattice coordinates within `radius` of `c` on one axis.
fn axis_range(origin: f64, h: f64, n: usize, c: f64, radius: f64) -> (usize, usize) {
    let lo = ((c - radius - origin) / h).ceil().max(0.0);
    let hi = ((c + radius - origin) / h).floor().min((n - 1) as f64);
    if hi < lo {
        (1, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// Spatial lattice times uniform time levels `t0 + k dt`, `k = 0..nt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid {
    space: SpatialDomain,
    t0: f64,
    dt: f64,
    nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialDomain, t0: f64, t_end: f64, nt: usize) -> Result<Self> {
        if nt < 2 {
            return Err(Error::InvalidParams(format!("need at least two time levels, got {nt}")));
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidParams(format!("time window [{t0}, {t_end}] is empty")));
        }
        let dt = (t_end - t0) / (nt - 1) as f64;
        Ok(SpaceTimeGrid { space, t0, dt, nt })
    }

    pub fn with_step(space: SpatialDomain, t0: f64, dt: f64, nt: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParams(format!("time step {dt} must be positive")));
        }
        if nt < 2 {
            return Err(Error::InvalidParams(format!("need at least two time levels, got {nt}")));
        }
        Ok(SpaceTimeGrid { space, t0, dt, nt })
    }

    pub fn space(&self) -> &SpatialDomain {
        &self.space
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.nt - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Total number of space-time lattice points.
    pub fn len(&self) -> usize {
        self.nt * self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of one space-time lattice cell.
    pub fn cell_measure(&self) -> f64 {
        self.space.cell_volume() * self.dt
    }

    pub fn flat(&self, k: usize, node: usize) -> usize {
        k * self.space.len() + node
    }

    pub fn unflat(&self, flat: usize) -> (usize, usize) {
        (flat / self.space.len(), flat % self.space.len())
    }

    /// Same grid with the mask lifted to the whole lattice.
    pub fn unmasked(&self) -> SpaceTimeGrid {
        SpaceTimeGrid { space: self.space.unmasked(), ..self.clone() }
    }

    /// Same spatial lattice over a different set of time levels.
    pub fn retimed(&self, t0: f64, nt: usize) -> SpaceTimeGrid {
        SpaceTimeGrid { space: self.space.clone(), t0, dt: self.dt, nt }
    }

    /// Time levels `k` with `lo < t_k < hi`.
    pub fn slices_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let guess = |v: f64| ((v - self.t0) / self.dt).floor().clamp(0.0, self.nt as f64) as usize;
        // first level strictly above `lo`
        let mut a = guess(lo);
        while a < self.nt && self.time(a) <= lo {
            a += 1;
        }
        while a > 0 && self.time(a - 1) > lo {
            a -= 1;
        }
        // first level at or above `hi`
        let mut b = guess(hi);
        while b < self.nt && self.time(b) < hi {
            b += 1;
        }
        while b > 0 && self.time(b - 1) >= hi {
            b -= 1;
        }
        if a >= b {
            0..0
        } else {
            a..b
        }
    }
}

/// Real function on a space-time grid, zero outside the spatial mask.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<SpaceTimeGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Arc<SpaceTimeGrid>) -> Self {
        let n = grid.len();
        GridFunction { grid, values: vec![0.0; n] }
    }

    /// Sample `f(x, t)` on mask nodes.
    pub fn from_fn(grid: Arc<SpaceTimeGrid>, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let space = grid.space();
        let nodes = space.len();
        let mut values = vec![0.0; grid.len()];
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for node in 0..nodes {
                if space.in_mask(node) {
                    values[k * nodes + node] = f(space.position(node), t);
                }
            }
        }
        GridFunction { grid, values }
    }

    /// Wrap raw values, checking length, finiteness and the zero extension.
    pub fn from_values(grid: Arc<SpaceTimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimsMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let nodes = grid.space().len();
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("non-finite value at flat index {i}")));
            }
            if *v != 0.0 && !grid.space().in_mask(i % nodes) {
                return Err(Error::InvalidParams(format!(
                    "nonzero value outside the mask at flat index {i}"
                )));
            }
        }
        Ok(GridFunction { grid, values })
    }

    /// Like [`GridFunction::from_values`] but silently zeroes values off the mask.
    pub fn from_values_masked(grid: Arc<SpaceTimeGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimsMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let space = grid.space();
        let nodes = space.len();
        for (i, v) in values.iter_mut().enumerate() {
            if !space.in_mask(i % nodes) {
                *v = 0.0;
            }
        }
        GridFunction::from_values(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.grid.space().len() + node]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.space().len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Apply `f` on mask nodes; off-mask values stay zero.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        let space = self.grid.space();
        let nodes = space.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if space.in_mask(i % nodes) { f(v) } else { 0.0 })
            .collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert!(self.same_grid(other), "grid functions live on different grids");
        let space = self.grid.space();
        let nodes = space.len();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (&a, &b))| if space.in_mask(i % nodes) { f(a, b) } else { 0.0 })
            .collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Re-attach the values to an equal grid (for example one read from disk).
    pub fn with_grid(&self, grid: Arc<SpaceTimeGrid>) -> Result<GridFunction> {
        GridFunction::from_values(grid, self.values.clone())
    }

    /// Prepend `slices` zero time levels, keeping the time step.
    pub fn extend_backward(&self, slices: usize) -> GridFunction {
        let g = &self.grid;
        let grid = Arc::new(g.retimed(g.t0() - slices as f64 * g.dt(), g.nt() + slices));
        let mut values = vec![0.0; slices * g.space().len()];
        values.extend_from_slice(&self.values);
        GridFunction { grid, values }
    }
}

/// Intrinsic cylinder `B_r(x) x (t - gamma r^2, t + gamma r^2)`, open in space and time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub center: [f64; 2],
    pub t: f64,
    pub radius: f64,
    pub gamma: f64,
}

impl ParabolicCylinder {
    pub fn new(center: [f64; 2], t: f64, radius: f64, gamma: f64) -> Self {
        ParabolicCylinder { center, t, radius, gamma }
    }

    /// Cylinder with explicit time half-length `s`.
    pub fn with_half_length(center: [f64; 2], t: f64, radius: f64, s: f64) -> Self {
        ParabolicCylinder { center, t, radius, gamma: s / (radius * radius) }
    }

    pub fn half_length(&self) -> f64 {
        self.gamma * self.radius * self.radius
    }

    /// `alpha Q`: radius `alpha r`, time half-length `alpha^2 gamma r^2`.
    pub fn scaled(&self, alpha: f64) -> Self {
        ParabolicCylinder { radius: alpha * self.radius, ..*self }
    }

    pub fn contains(&self, space: &SpatialDomain, x: [f64; 2], t: f64) -> bool {
        (t - self.t).abs() < self.half_length() && space.distance(x, self.center) < self.radius
    }

    /// Lattice points `(k, node)` inside the cylinder.
    pub fn lattice_points(&self, grid: &SpaceTimeGrid) -> Vec<(usize, usize)> {
        let s = self.half_length();
        let nodes = grid.space().ball_nodes(self.center, self.radius);
        grid.slices_in(self.t - s, self.t + s)
            .flat_map(|k| nodes.iter().map(move |&n| (k, n)))
            .collect()
    }

    /// Lebesgue measure, with `dim` space dimensions.
    pub fn measure(&self, dim: usize) -> f64 {
        let ball = if dim == 1 {
            2.0 * self.radius
        } else {
            std::f64::consts::PI * self.radius * self.radius
        };
        ball * 2.0 * self.half_length()
    }
}

/// Zero `f` outside the cylinder.
pub fn restrict(f: &GridFunction, q: &ParabolicCylinder) -> Result<GridFunction> {
    let grid = f.grid();
    let pts = q.lattice_points(grid);
    if pts.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mut values = vec![0.0; grid.len()];
    for (k, n) in pts {
        let i = grid.flat(k, n);
        values[i] = f.values()[i];
    }
    GridFunction::from_values(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_has_requested_interior_count() {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 64 }).unwrap();
        assert_eq!(d.mask_count(), 64);
        assert_eq!(d.boundary_cells().len(), 2);
        let first = d.boundary_cells()[0];
        assert!(d.position(first)[0].abs() < 1e-14);
        let last = d.boundary_cells()[1];
        assert!((d.position(last)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_counts_and_boundary() {
        let d = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [32, 32] }).unwrap();
        assert_eq!(d.mask_count(), 1024);
        assert_eq!(d.boundary_cells().len(), 4 * 31);
        for &b in d.boundary_cells() {
            assert!(d.in_mask(b));
            assert!(d.neighbors(b).any(|n| d.in_mask(n)));
            assert!(d.neighbors(b).any(|n| !d.in_mask(n)));
        }
    }

    #[test]
    fn annulus_count_within_two_cells_of_area() {
        let (inner, outer) = (0.25, 1.0);
        let d = make_domain(&DomainKind::Annulus { inner, outer, cells: 81 }).unwrap();
        let h = d.spacing()[0];
        let pi = std::f64::consts::PI;
        let count = d.mask_count() as f64;
        let lo = pi * ((outer - 2.0 * h).powi(2) - (inner + 2.0 * h).powi(2)) / (h * h);
        let hi = pi * ((outer + 2.0 * h).powi(2) - (inner - 2.0 * h).powi(2)) / (h * h);
        assert!(lo <= count && count <= hi, "count {count} outside [{lo}, {hi}]");
    }

    #[test]
    fn lshape_is_connected_and_missing_a_quadrant() {
        let d = make_domain(&DomainKind::LShape { length: 1.0, cells: 21 }).unwrap();
        assert!(d.mask_count() < 21 * 21);
        assert!(d.mask_count() > 21 * 21 / 2);
        let corner = d.nearest_node([1.0, 1.0]);
        assert!(!d.in_mask(corner));
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert_eq!(
            make_domain(&DomainKind::Interval { length: 0.0, cells: 10 }).unwrap_err().kind(),
            "invalid-params"
        );
        assert!(make_domain(&DomainKind::Interval { length: 1.0, cells: 2 }).is_err());
        assert!(make_domain(&DomainKind::Box { lengths: [1.0, -1.0], cells: [8, 8] }).is_err());
        assert!(make_domain(&DomainKind::Annulus { inner: 1.0, outer: 0.5, cells: 9 }).is_err());
    }

    #[test]
    fn disconnected_mask_rejected() {
        let mut mask = vec![false; 12];
        for i in [1, 2, 3, 7, 8, 9, 10] {
            mask[i] = true;
        }
        let err = SpatialDomain::from_mask(1, [12, 1], [0.1, 0.1], [0.0, 0.0], mask).unwrap_err();
        assert_eq!(err.kind(), "invalid-params");
    }

    #[test]
    fn grid_time_levels_consistent() {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 8 }).unwrap();
        let g = SpaceTimeGrid::new(d.clone(), 0.0, 0.3, 7).unwrap();
        let rel = ((g.t_end() - g.t0()) - g.dt() * (g.nt() - 1) as f64).abs() / 0.3;
        assert!(rel < 1e-12);
        assert!(SpaceTimeGrid::new(d, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn grid_function_zero_outside_mask() {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 8 }).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(d, 0.0, 1.0, 3).unwrap());
        let f = GridFunction::from_fn(g.clone(), |x, t| 1.0 + x[0] + t);
        for k in 0..3 {
            assert_eq!(f.at(k, 0), 0.0);
            assert_eq!(f.at(k, 9), 0.0);
            assert!(f.at(k, 1) > 0.0);
        }
        let mut raw = f.values().to_vec();
        raw[0] = 1.0;
        assert!(GridFunction::from_values(g.clone(), raw).is_err());
        let mut raw = f.values().to_vec();
        raw[3] = f64::NAN;
        assert!(GridFunction::from_values(g, raw).is_err());
    }

    #[test]
    fn restrict_zeroes_outside_cylinder() {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 11 }).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(d, 0.0, 1.0, 11).unwrap());
        let f = GridFunction::from_fn(g.clone(), |_, _| 1.0);
        let q = ParabolicCylinder::new([0.5, 0.0], 0.5, 0.25, 2.0);
        let r = restrict(&f, &q).unwrap();
        let space = g.space();
        for k in 0..g.nt() {
            for n in 0..space.len() {
                let inside = q.contains(space, space.position(n), g.time(k)) && space.in_mask(n);
                assert_eq!(r.at(k, n), if inside { 1.0 } else { 0.0 });
            }
        }
        let far = ParabolicCylinder::new([5.0, 0.0], 0.5, 0.1, 1.0);
        assert_eq!(restrict(&f, &far).unwrap_err().kind(), "empty-intersection");
    }

    #[test]
    fn cylinder_time_extent_is_open() {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 11 }).unwrap();
        let q = ParabolicCylinder::new([0.5, 0.0], 0.0, 0.5, 1.0);
        assert!(!q.contains(&d, [0.5, 0.0], 0.25));
        assert!(q.contains(&d, [0.5, 0.0], 0.2499));
        assert_eq!(q.scaled(2.0).half_length(), 1.0);
    }

    proptest! {
        #[test]
        fn ball_nodes_match_brute_force(cx in -0.2f64..1.2, cy in -0.2f64..1.2, r in 0.0f64..0.7) {
            let d = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [9, 9] }).unwrap();
            let fast = d.ball_nodes([cx, cy], r);
            let slow: Vec<usize> = (0..d.len())
                .filter(|&n| d.distance(d.position(n), [cx, cy]) < r)
                .collect();
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn slices_in_matches_brute_force(lo in -0.5f64..1.5, len in 0.0f64..1.0) {
            let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 5 }).unwrap();
            let g = SpaceTimeGrid::new(d, 0.0, 1.0, 17).unwrap();
            let hi = lo + len;
            let fast: Vec<usize> = g.slices_in(lo, hi).collect();
            let slow: Vec<usize> = (0..g.nt()).filter(|&k| g.time(k) > lo && g.time(k) < hi).collect();
            prop_assert_eq!(fast, slow);
        }
    }
}
