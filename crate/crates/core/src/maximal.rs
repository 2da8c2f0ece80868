//! Parabolic maximal operators over a finite family of lattice cylinders.
//!
//! A family cylinder is a closed lattice ball of `radius * h` (with `h` the
//! smallest spacing) times `2 * half_length + 1` consecutive time levels.
//! Data are extended by zero beyond the grid, and cylinders may be centred
//! anywhere on the unbounded lattice, so every average is normalised by the
//! full node count of its cylinder.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::calculus::{neg_sobolev_norm, neg_sobolev_norm_iterative, EdgeField, NegSobolevOptions};
use crate::calculus::Region;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpaceTimeGrid, SpatialDomain};

/// Radii (in cells) and time half-lengths (in levels) of the index set.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFamily {
    pub radii: Vec<usize>,
    pub half_lengths: Vec<usize>,
}

fn dyadic_upto(n: usize) -> Vec<usize> {
    let mut v = vec![0, 1];
    while *v.last().unwrap() < n {
        let next = 2 * v.last().unwrap();
        v.push(next);
    }
    v
}

impl CylinderFamily {
    /// Every pair of radius and half-length from `{0, 1, 2, 4, ...}`, up to
    /// the first values whose cylinders cover the whole grid from any node.
    pub fn dyadic(grid: &SpaceTimeGrid) -> Self {
        let mut f = Self::spatial(grid.space());
        f.half_lengths = dyadic_upto(grid.nt().saturating_sub(1));
        f
    }

    /// Balls only: a single time level.
    pub fn spatial(space: &SpatialDomain) -> Self {
        let h = space.min_spacing();
        let [nx, ny] = space.shape();
        let sp = space.spacing();
        let diam = if space.dim() == 1 {
            (nx - 1) as f64 * sp[0]
        } else {
            ((nx - 1) as f64 * sp[0]).hypot((ny - 1) as f64 * sp[1])
        };
        CylinderFamily { radii: dyadic_upto((diam / h).ceil() as usize), half_lengths: vec![0] }
    }

    /// Add the sizes `3 * 2^k` between the dyadic ones.
    pub fn refined(&self) -> Self {
        let add = |v: &[usize]| {
            let mut out: Vec<usize> = v.to_vec();
            for &a in v {
                if a >= 2 && a % 2 == 0 {
                    out.push(a + a / 2);
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        };
        CylinderFamily { radii: add(&self.radii), half_lengths: add(&self.half_lengths) }
    }

    /// Number of (radius, half-length) shapes.
    pub fn len(&self) -> usize {
        self.radii.len() * self.half_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Lattice geometry shared by every operator here.
#[derive(Clone, Copy)]
struct Layout {
    nx: usize,
    ny: usize,
    nt: usize,
    dim: usize,
    hx: f64,
    hy: f64,
    h: f64,
}

impl Layout {
    fn new(space: &SpatialDomain, nt: usize) -> Self {
        let [nx, ny] = space.shape();
        let [hx, hy] = space.spacing();
        Layout { nx, ny, nt, dim: space.dim(), hx, hy, h: space.min_spacing() }
    }

    /// Rows `(di, w)` of the closed ball: offsets `(di, dj)` with `|dj| <= w`.
    fn disc(&self, rho: usize) -> Vec<(isize, isize)> {
        let r = rho as f64 * self.h * (1.0 + 1e-12);
        let m = (r / self.hx).floor() as isize;
        (-m..=m)
            .map(|di| {
                if self.dim == 1 {
                    return (di, 0);
                }
                let rest = r * r - (di as f64 * self.hx).powi(2);
                (di, (rest.max(0.0).sqrt() / self.hy).floor() as isize)
            })
            .collect()
    }

    /// Padding of the centre lattice for a given disc.
    fn pad(&self, disc: &[(isize, isize)]) -> (usize, usize) {
        let px = disc.iter().map(|d| d.0.unsigned_abs()).max().unwrap_or(0);
        let py = disc.iter().map(|d| d.1.unsigned_abs()).max().unwrap_or(0);
        (px, py)
    }

    fn count(disc: &[(isize, isize)]) -> usize {
        disc.iter().map(|&(_, w)| (2 * w + 1) as usize).sum()
    }
}

/// Row prefix sums of a lattice array: `out[i * (ny + 1) + j] = sum_{j' < j} a(i, j')`.
fn row_prefix(lay: &Layout, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lay.nx * (lay.ny + 1)];
    for i in 0..lay.nx {
        for j in 0..lay.ny {
            out[i * (lay.ny + 1) + j + 1] = out[i * (lay.ny + 1) + j] + a[i * lay.ny + j];
        }
    }
    out
}

/// Sum of row `i` of the lattice array over columns `lo..=hi`, clipped to the lattice.
fn row_sum(lay: &Layout, pref: &[f64], i: isize, lo: isize, hi: isize) -> f64 {
    if i < 0 || i >= lay.nx as isize {
        return 0.0;
    }
    let lo = lo.max(0);
    let hi = hi.min(lay.ny as isize - 1);
    if hi < lo {
        return 0.0;
    }
    let base = i as usize * (lay.ny + 1);
    pref[base + hi as usize + 1] - pref[base + lo as usize]
}

/// Ball sums of a nodal array at every padded centre.
fn ball_sums(lay: &Layout, disc: &[(isize, isize)], a: &[f64]) -> Vec<f64> {
    let (px, py) = lay.pad(disc);
    let (cx, cy) = (lay.nx + 2 * px, lay.ny + 2 * py);
    let pref = row_prefix(lay, a);
    let mut out = vec![0.0; cx * cy];
    for ci in 0..cx {
        for cj in 0..cy {
            let i = ci as isize - px as isize;
            let j = cj as isize - py as isize;
            out[ci * cy + cj] =
                disc.iter().map(|&(di, w)| row_sum(lay, &pref, i + di, j - w, j + w)).sum();
        }
    }
    out
}

/// Sums over the edges with both endpoints in the ball, at every padded centre.
/// `a0` holds edges along the first axis by tail node, `a1` along the second.
fn edge_sums(lay: &Layout, disc: &[(isize, isize)], a0: &[f64], a1: &[f64]) -> Vec<f64> {
    let (px, py) = lay.pad(disc);
    let (cx, cy) = (lay.nx + 2 * px, lay.ny + 2 * py);
    let p0 = row_prefix(lay, a0);
    let p1 = row_prefix(lay, a1);
    let m = disc.len();
    let mut out = vec![0.0; cx * cy];
    for ci in 0..cx {
        for cj in 0..cy {
            let i = ci as isize - px as isize;
            let j = cj as isize - py as isize;
            let mut s = 0.0;
            for (r, &(di, w)) in disc.iter().enumerate() {
                if lay.dim == 2 && w > 0 {
                    s += row_sum(lay, &p1, i + di, j - w, j + w - 1);
                }
                if r + 1 < m {
                    let w0 = w.min(disc[r + 1].1);
                    s += row_sum(lay, &p0, i + di, j - w0, j + w0);
                }
            }
            out[ci * cy + cj] = s;
        }
    }
    out
}

/// Maximum over windows `i - w ..= i + w` clipped to the slice.
fn sliding_max(a: &[f64], w: usize) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![f64::NEG_INFINITY; n];
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let hi = (i + w).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&b| a[b] <= a[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&f| f + w < i) {
            dq.pop_front();
        }
        *o = a[*dq.front().unwrap()];
    }
    out
}

/// Uncentred supremum over the family.
///
/// `centred(rho, k)` returns, for data level `k`, the spatial value of every
/// padded centre for radius `rho`; levels beyond the data count as zero.
/// The per-level values are averaged over each time window, and every
/// lattice point takes the largest window average among the cylinders
/// containing it.
fn family_sup(
    lay: &Layout,
    family: &CylinderFamily,
    centred: impl Fn(usize, &[(isize, isize)], usize) -> Vec<f64> + Sync,
) -> Vec<f64> {
    let len = lay.nx * lay.ny;
    let mut best = vec![0.0f64; len * lay.nt];
    for &rho in &family.radii {
        let disc = lay.disc(rho);
        let (px, py) = lay.pad(&disc);
        let (cx, cy) = (lay.nx + 2 * px, lay.ny + 2 * py);
        let cen: Vec<Vec<f64>> =
            (0..lay.nt).into_par_iter().map(|k| centred(rho, &disc, k)).collect();
        // prefix over levels, per centre
        let mut pref = vec![0.0; (lay.nt + 1) * cx * cy];
        for k in 0..lay.nt {
            for c in 0..cx * cy {
                pref[(k + 1) * cx * cy + c] = pref[k * cx * cy + c] + cen[k][c];
            }
        }
        let widths: Vec<isize> = {
            let mut w: Vec<isize> = disc.iter().map(|d| d.1).collect();
            w.sort_unstable();
            w.dedup();
            w
        };
        for &tau in &family.half_lengths {
            let norm = 1.0 / (2 * tau + 1) as f64;
            let span = lay.nt + 2 * tau;
            // window means at padded levels kk - tau, then max over the window again
            let levels: Vec<Vec<f64>> = (0..lay.nt)
                .into_par_iter()
                .map(|k| {
                    let mut d1 = vec![0.0; cx * cy];
                    for (c, out) in d1.iter_mut().enumerate() {
                        let mut m = f64::NEG_INFINITY;
                        for kk in k..=k + 2 * tau {
                            // window centred at level kk - tau
                            let lo = kk.saturating_sub(2 * tau).min(lay.nt);
                            let hi = (kk + 1).min(lay.nt);
                            let v = if kk < span && hi > lo {
                                (pref[hi * cx * cy + c] - pref[lo * cx * cy + c]) * norm
                            } else {
                                0.0
                            };
                            m = m.max(v);
                        }
                        *out = m;
                    }
                    // disc maximum back onto the lattice
                    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(widths.len());
                    for &w in &widths {
                        let mut r = vec![0.0; cx * cy];
                        for ci in 0..cx {
                            let sm = sliding_max(&d1[ci * cy..(ci + 1) * cy], w as usize);
                            r[ci * cy..(ci + 1) * cy].copy_from_slice(&sm);
                        }
                        rows.push(r);
                    }
                    let mut out = vec![f64::NEG_INFINITY; len];
                    for i in 0..lay.nx {
                        for j in 0..lay.ny {
                            let mut m = f64::NEG_INFINITY;
                            for &(di, w) in &disc {
                                let wi = widths.binary_search(&w).unwrap();
                                let ci = (i + px) as isize + di;
                                m = m.max(rows[wi][ci as usize * cy + j + py]);
                            }
                            out[i * lay.ny + j] = m;
                        }
                    }
                    out
                })
                .collect();
            for (k, lv) in levels.into_iter().enumerate() {
                for (n, v) in lv.into_iter().enumerate() {
                    let b = &mut best[k * len + n];
                    if v > *b {
                        *b = v;
                    }
                }
            }
        }
    }
    best
}

/// Maximal function of a nonnegative density given at every node and level.
pub fn maximal_of(grid: &SpaceTimeGrid, density: &[f64], family: &CylinderFamily) -> Vec<f64> {
    let lay = Layout::new(grid.space(), grid.nt());
    let len = grid.space().len();
    assert_eq!(density.len(), grid.len(), "density does not match the grid");
    family_sup(&lay, family, |_, disc, k| {
        let n = Layout::count(disc) as f64;
        let mut s = ball_sums(&lay, disc, &density[k * len..(k + 1) * len]);
        s.iter_mut().for_each(|v| *v /= n);
        s
    })
}

/// `M|f|`: at every node, the largest mean of `|f|` over family cylinders
/// containing it. The result lives on the unmasked grid.
pub fn strong_maximal(f: &GridFunction, family: &CylinderFamily) -> GridFunction {
    let grid = f.grid();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let m = maximal_of(grid, &abs, family);
    GridFunction::from_values(Arc::new(grid.unmasked()), m).expect("maximal values are finite")
}

/// Maximal function of a nonnegative nodal density over balls with the given radii.
pub fn spatial_maximal(space: &SpatialDomain, density: &[f64], radii: &[usize]) -> Vec<f64> {
    let lay = Layout::new(space, 1);
    let fam = CylinderFamily { radii: radii.to_vec(), half_lengths: vec![0] };
    family_sup(&lay, &fam, |_, disc, _| {
        let n = Layout::count(disc) as f64;
        let mut s = ball_sums(&lay, disc, density);
        s.iter_mut().for_each(|v| *v /= n);
        s
    })
}

/// Dense arrays of `|psi|^theta` per axis, indexed by tail node.
fn edge_powers(space: &SpatialDomain, psi: &EdgeField, theta: f64, keep: impl Fn(usize, usize) -> bool) -> (Vec<f64>, Vec<f64>) {
    let mut a0 = vec![0.0; space.len()];
    let mut a1 = vec![0.0; space.len()];
    for (e, &v) in psi.edges.iter().zip(&psi.values) {
        if !keep(e.tail, e.head) {
            continue;
        }
        let p = v.abs().powf(theta);
        if e.axis == 0 {
            a0[e.tail] += p;
        } else {
            a1[e.tail] += p;
        }
    }
    (a0, a1)
}

/// How the local negative norm on a ball is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegNormMode {
    /// `||psi||_{L^theta(B)}` over the edges inside the ball.
    Restriction,
    /// Minimal representation of `-div psi` on the ball; centres restricted to the lattice.
    Exact,
}

/// `M^{-1,theta}`: at every node, the largest `|B|^{-1/theta}` times the
/// local negative norm of `f = -div psi` over family balls containing it.
pub fn neg_maximal(
    space: &SpatialDomain,
    psi: &EdgeField,
    theta: f64,
    radii: &[usize],
    mode: NegNormMode,
) -> Result<Vec<f64>> {
    if !(theta > 1.0 && theta.is_finite()) {
        return Err(Error::InvalidParams(format!("exponent {theta} must exceed 1")));
    }
    let lay = Layout::new(space, 1);
    let fam = CylinderFamily { radii: radii.to_vec(), half_lengths: vec![0] };
    match mode {
        NegNormMode::Restriction => {
            let (a0, a1) = edge_powers(space, psi, theta, |_, _| true);
            Ok(family_sup(&lay, &fam, |_, disc, _| {
                let n = Layout::count(disc) as f64;
                let mut s = edge_sums(&lay, disc, &a0, &a1);
                s.iter_mut().for_each(|v| *v = (*v / n).powf(1.0 / theta));
                s
            }))
        }
        NegNormMode::Exact => {
            let f: Vec<f64> = psi.divergence(space).iter().map(|v| -v).collect();
            let failure = std::sync::Mutex::new(None);
            let out = family_sup(&lay, &fam, |_, disc, _| {
                let (px, py) = lay.pad(disc);
                let (cx, cy) = (lay.nx + 2 * px, lay.ny + 2 * py);
                let n = Layout::count(disc) as f64 * space.cell_volume();
                (0..cx * cy)
                    .into_par_iter()
                    .map(|c| {
                        let (ci, cj) = (c / cy, c % cy);
                        if ci < px || ci >= px + lay.nx || cj < py || cj >= py + lay.ny {
                            return 0.0;
                        }
                        let centre = space.index(ci - px, cj - py);
                        match local_exact(space, &f, centre, disc, theta) {
                            Ok(v) => (v.powf(theta) / n).powf(1.0 / theta),
                            Err(e) => {
                                *failure.lock().unwrap() = Some(e);
                                0.0
                            }
                        }
                    })
                    .collect()
            });
            if let Some(e) = failure.into_inner().unwrap() {
                return Err(e);
            }
            Ok(out)
        }
    }
}

/// Minimal `W^{-1,theta}` norm of `f` tested on the nodes whose whole
/// neighbourhood lies in the ball.
fn local_exact(
    space: &SpatialDomain,
    f: &[f64],
    centre: usize,
    disc: &[(isize, isize)],
    theta: f64,
) -> Result<f64> {
    let (ci, cj) = space.coords(centre);
    let [nx, ny] = space.shape();
    let mut ball = vec![false; space.len()];
    for &(di, w) in disc {
        let i = ci as isize + di;
        if i < 0 || i >= nx as isize {
            continue;
        }
        for dj in -w..=w {
            let j = cj as isize + dj;
            if j >= 0 && j < ny as isize {
                ball[space.index(i as usize, j as usize)] = true;
            }
        }
    }
    let inner: Vec<bool> = (0..space.len())
        .map(|i| {
            ball[i] && space.neighbors(i).all(|n| ball[n]) && space.neighbors(i).count() == 2 * space.dim()
        })
        .collect();
    if !inner.iter().any(|&b| b) || inner.iter().zip(f).all(|(&b, &v)| !b || v == 0.0) {
        return Ok(0.0);
    }
    if theta == 2.0 {
        return Ok(neg_sobolev_norm(space, f, theta, &inner)?.norm);
    }
    let opts = NegSobolevOptions { tol: 1e-6, max_iter: 1000, stages: 6 };
    Ok(neg_sobolev_norm_iterative(space, f, theta, &inner, opts)?.norm)
}

/// Time-sliced variant: the time average over each family cylinder of the
/// per-level `|B|^{-1/theta} ||psi(t) chi||_{L^theta(B)}`, where `chi` keeps
/// the edges whose endpoints both lie in `localization` at that level.
/// `psi` holds one field per time level. The result lives on the unmasked grid.
pub fn neg_maximal_spacetime(
    grid: &Arc<SpaceTimeGrid>,
    psi: &[EdgeField],
    theta: f64,
    family: &CylinderFamily,
    localization: Option<&Region>,
) -> Result<GridFunction> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(Error::InvalidParams(format!("exponent {theta} must be at least 1")));
    }
    if psi.len() != grid.nt() {
        return Err(Error::DimsMismatch(format!(
            "{} vector fields for {} time levels",
            psi.len(),
            grid.nt()
        )));
    }
    let space = grid.space();
    let lay = Layout::new(space, grid.nt());
    let powers: Vec<(Vec<f64>, Vec<f64>)> = psi
        .iter()
        .enumerate()
        .map(|(k, p)| {
            edge_powers(space, p, theta, |a, b| {
                localization.is_none_or(|r| r.contains(grid.flat(k, a)) && r.contains(grid.flat(k, b)))
            })
        })
        .collect();
    let out = family_sup(&lay, family, |_, disc, k| {
        let n = Layout::count(disc) as f64;
        let mut s = edge_sums(&lay, disc, &powers[k].0, &powers[k].1);
        s.iter_mut().for_each(|v| *v = (*v / n).powf(1.0 / theta));
        s
    });
    GridFunction::from_values(Arc::new(grid.unmasked()), out)
}

/// Nodal density of `|psi|^s chi` per level, for comparison with
/// [`neg_maximal_spacetime`] through [`maximal_of`].
pub fn localized_nodal_power(
    grid: &SpaceTimeGrid,
    psi: &[EdgeField],
    s: f64,
    localization: Option<&Region>,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (k, p) in psi.iter().enumerate() {
        for (e, &v) in p.edges.iter().zip(&p.values) {
            let keep = localization
                .is_none_or(|r| r.contains(grid.flat(k, e.tail)) && r.contains(grid.flat(k, e.head)));
            if keep {
                let w = 0.5 * v.abs().powf(s);
                out[grid.flat(k, e.tail)] += w;
                out[grid.flat(k, e.head)] += w;
            }
        }
    }
    out
}
