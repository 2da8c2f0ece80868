//! Intrinsic parabolic metric, Whitney coverings of the complement of a
//! closed lattice set, the associated partition of unity, and a metric
//! Lipschitz certifier.
//!
//! The covered set is a flag per lattice point of a space-time grid; every
//! point beyond the lattice (in space or time) counts as part of the closed
//! set, so distances to it are always finite.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::Region;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, ParabolicCylinder, SpaceTimeGrid, SpatialDomain};

/// `d((x, t), (y, s)) = max(|x - y|, sqrt(lambda^{p-2} |t - s|))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicMetric {
    pub lambda: f64,
    pub p: f64,
}

impl ParabolicMetric {
    pub fn new(lambda: f64, p: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParams(format!("metric needs lambda > 0 and p > 1, got {lambda}, {p}")));
        }
        Ok(ParabolicMetric { lambda, p })
    }

    /// Time scaling `gamma = lambda^{2-p}` of the intrinsic cylinders.
    pub fn gamma(&self) -> f64 {
        self.lambda.powf(2.0 - self.p)
    }

    pub fn distance(&self, a: ([f64; 2], f64), b: ([f64; 2], f64)) -> f64 {
        metric_distance(a, b, self.gamma())
    }
}

/// Parabolic distance with time scaling `gamma`.
pub fn metric_distance(a: ([f64; 2], f64), b: ([f64; 2], f64), gamma: f64) -> f64 {
    let dx = (a.0[0] - b.0[0]).hypot(a.0[1] - b.0[1]);
    dx.max(((a.1 - b.1).abs() / gamma).sqrt())
}

/// One cylinder of the covering.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WhitneyCylinder {
    /// Flat grid index of the centre.
    pub point: usize,
    pub center: [f64; 2],
    pub t: f64,
    pub radius: f64,
    /// Distance of the centre to the closed set.
    pub distance: f64,
}

impl WhitneyCylinder {
    /// `alpha Q` with the cover's time scaling.
    pub fn scaled(&self, alpha: f64, gamma: f64) -> ParabolicCylinder {
        ParabolicCylinder::new(self.center, self.t, alpha * self.radius, gamma)
    }
}

/// Whitney covering of the complement of a closed lattice set.
#[derive(Clone, Debug)]
pub struct WhitneyCover {
    grid: Arc<SpaceTimeGrid>,
    pub metric: ParabolicMetric,
    pub gamma: f64,
    pub cylinders: Vec<WhitneyCylinder>,
    /// `neighbors[k]`: cylinders `j` whose three-quarter cylinder meets that of `k`, including `k`.
    pub neighbors: Vec<Vec<usize>>,
    in_set: Vec<bool>,
    /// Cylinders whose three-quarter cylinder contains each lattice point.
    members: Vec<Vec<usize>>,
}

/// Exact squared Euclidean distance transform along one axis.
fn edt_1d(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![f64::INFINITY; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => return out,
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let pos = |i: usize| i as f64 * h;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < pos(q) {
            j += 1;
        }
        let p = v[j];
        *o = (pos(q) - pos(p)).powi(2) + f[p];
    }
    out
}

/// Spatial distance from every node of one level to the set, with a ring
/// of set points just beyond the lattice.
fn slice_distance(space: &SpatialDomain, in_set: &[bool]) -> Vec<f64> {
    let [nx, ny] = space.shape();
    let [hx, hy] = space.spacing();
    let ex = nx + 2;
    let ey = if space.dim() == 1 { 1 } else { ny + 2 };
    let oy = if space.dim() == 1 { 0 } else { 1 };
    let mut f = vec![f64::INFINITY; ex * ey];
    for a in 0..ex {
        for b in 0..ey {
            let ring = a == 0 || a + 1 == ex || (space.dim() == 2 && (b == 0 || b + 1 == ey));
            let hit = ring || in_set[space.index(a - 1, b - oy)];
            if hit {
                f[a * ey + b] = 0.0;
            }
        }
    }
    // along the first axis
    for b in 0..ey {
        let col: Vec<f64> = (0..ex).map(|a| f[a * ey + b]).collect();
        let d = edt_1d(&col, hx);
        for a in 0..ex {
            f[a * ey + b] = d[a];
        }
    }
    if space.dim() == 2 {
        for a in 0..ex {
            let d = edt_1d(&f[a * ey..(a + 1) * ey], hy);
            f[a * ey..(a + 1) * ey].copy_from_slice(&d);
        }
    }
    let mut out = vec![0.0; space.len()];
    for i in 0..nx {
        for j in 0..ny {
            out[space.index(i, j)] = f[(i + 1) * ey + j + oy].sqrt();
        }
    }
    out
}

/// Parabolic distance from every lattice point to the set.
pub fn distance_to_set(grid: &SpaceTimeGrid, in_set: &[bool], gamma: f64) -> Vec<f64> {
    let space = grid.space();
    let len = space.len();
    let nt = grid.nt();
    let slices: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|k| slice_distance(space, &in_set[k * len..(k + 1) * len]))
        .collect();
    let dt = grid.dt();
    (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let (k, n) = grid.unflat(flat);
            // the levels just outside the grid belong to the set entirely
            let mut best = ((k + 1) as f64 * dt / gamma).sqrt().min(((nt - k) as f64 * dt / gamma).sqrt());
            for step in 0..nt {
                let tpart = (step as f64 * dt / gamma).sqrt();
                if tpart >= best {
                    break;
                }
                for kk in [k.checked_sub(step), Some(k + step)].into_iter().flatten() {
                    if kk < nt {
                        best = best.min(slices[kk][n].max(tpart));
                    }
                }
            }
            best
        })
        .collect()
}

/// Whether two open cylinders intersect.
fn cylinders_meet(a: &WhitneyCylinder, ra: f64, b: &WhitneyCylinder, rb: f64, gamma: f64) -> bool {
    let dx = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
    dx < ra + rb && (a.t - b.t).abs() < gamma * (ra * ra + rb * rb)
}

/// Greedy Whitney covering of the lattice points outside `in_set`.
///
/// Each such point gets `r = (d + delta) / 16`, with `d` its parabolic
/// distance to the set and `delta` half the smaller of the spatial step and
/// the parabolic length of one time step. Points are taken by decreasing
/// radius and kept when their quarter cylinder misses every quarter
/// cylinder already kept.
pub fn build_cover(grid: &Arc<SpaceTimeGrid>, in_set: &[bool], metric: ParabolicMetric) -> Result<WhitneyCover> {
    if in_set.len() != grid.len() {
        return Err(Error::DimsMismatch("set flags do not match the grid".into()));
    }
    if in_set.iter().all(|&b| b) {
        return Err(Error::EmptyComplement);
    }
    let gamma = metric.gamma();
    let space = grid.space();
    let dist = distance_to_set(grid, in_set, gamma);
    let delta = 0.5 * space.min_spacing().min((grid.dt() / gamma).sqrt());
    let mut cands: Vec<WhitneyCylinder> = (0..grid.len())
        .filter(|&i| !in_set[i])
        .map(|i| {
            let (k, n) = grid.unflat(i);
            WhitneyCylinder {
                point: i,
                center: space.position(n),
                t: grid.time(k),
                radius: (dist[i] + delta) / 16.0,
                distance: dist[i],
            }
        })
        .collect();
    cands.sort_by(|a, b| b.radius.total_cmp(&a.radius).then(a.point.cmp(&b.point)));
    // Distance to the set is 1-Lipschitz in the metric, so two cylinders whose
    // `alpha`-scaled copies meet have radii within a factor
    // `(16 + alpha) / (16 - alpha)`; only chosen centres in that window are tested.
    let window = |c: &WhitneyCylinder, alpha: f64| {
        let big = c.radius * (16.0 + alpha) / (16.0 - alpha) * (1.0 + 1e-9);
        let reach = alpha * (c.radius + big);
        let span = gamma * alpha * alpha * (c.radius * c.radius + big * big);
        let nodes = space.ball_nodes(c.center, reach * (1.0 + 1e-12));
        let levels = grid.slices_in(c.t - span * (1.0 + 1e-12), c.t + span * (1.0 + 1e-12));
        levels.flat_map(move |k| nodes.clone().into_iter().map(move |n| grid.flat(k, n)))
    };
    let mut owner = vec![usize::MAX; grid.len()];
    let mut chosen: Vec<WhitneyCylinder> = Vec::new();
    for c in cands {
        let free = window(&c, 0.25).all(|i| {
            owner[i] == usize::MAX || {
                let s = &chosen[owner[i]];
                !cylinders_meet(&c, 0.25 * c.radius, s, 0.25 * s.radius, gamma)
            }
        });
        if free {
            owner[c.point] = chosen.len();
            chosen.push(c);
        }
    }
    let neighbors: Vec<Vec<usize>> = chosen
        .par_iter()
        .map(|c| {
            let mut nb: Vec<usize> = window(c, 0.75)
                .filter_map(|i| (owner[i] != usize::MAX).then_some(owner[i]))
                .filter(|&j| cylinders_meet(c, 0.75 * c.radius, &chosen[j], 0.75 * chosen[j].radius, gamma))
                .collect();
            nb.sort_unstable();
            nb
        })
        .collect();
    let mut members = vec![Vec::new(); grid.len()];
    for (j, c) in chosen.iter().enumerate() {
        for (k, n) in c.scaled(0.75, gamma).lattice_points(grid) {
            members[grid.flat(k, n)].push(j);
        }
    }
    Ok(WhitneyCover {
        grid: grid.clone(),
        metric,
        gamma,
        cylinders: chosen,
        neighbors,
        in_set: in_set.to_vec(),
        members,
    })
}

/// `6u^5 - 15u^4 + 10u^3` on `[0, 1]` and its first derivative.
fn smootherstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        let u2 = u * u;
        (u2 * u * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - u) * (1.0 - u))
    }
}

/// Value and derivatives of one bump, and of the normalised partition.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub dt: f64,
}

/// Cover statistics used by reports and the command line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverStats {
    pub count: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Counts of radii per power-of-two bin, from the smallest radius up.
    pub radius_histogram: Vec<usize>,
    /// Largest number of quadrupled cylinders at one lattice point.
    pub max_overlap_4q: usize,
    /// Largest neighbour set.
    pub max_neighbors: usize,
}

impl WhitneyCover {
    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.cylinders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn in_set(&self, flat: usize) -> bool {
        self.in_set[flat]
    }

    /// Cylinders whose three-quarter cylinder contains the lattice point.
    pub fn covering(&self, flat: usize) -> &[usize] {
        &self.members[flat]
    }

    /// Bump of cylinder `j`: one on the half cylinder, zero off the
    /// three-quarter cylinder, a C^2 quintic in between in space and time.
    pub fn bump(&self, j: usize, x: [f64; 2], t: f64) -> Jet {
        let c = &self.cylinders[j];
        let r = c.radius;
        let dx = [x[0] - c.center[0], x[1] - c.center[1]];
        let rad = dx[0].hypot(dx[1]);
        let sigma = rad / r;
        let (sv, sd) = smootherstep((sigma - 0.5) * 4.0);
        let s = 1.0 - sv;
        let s_d = -4.0 * sd / r;
        let span = self.gamma * r * r;
        let tau = (t - c.t).abs() / span;
        let (tv, td) = smootherstep((tau - 0.25) / (9.0 / 16.0 - 0.25));
        let tt = 1.0 - tv;
        let t_d = -td / (9.0 / 16.0 - 0.25) / span * (t - c.t).signum();
        let grad = if rad > 0.0 {
            [s_d * dx[0] / rad * tt, s_d * dx[1] / rad * tt]
        } else {
            [0.0, 0.0]
        };
        Jet { value: s * tt, grad, dt: s * t_d }
    }

    /// Cylinders whose bump may be nonzero at `(x, t)`.
    fn candidates(&self, x: [f64; 2], t: f64) -> Vec<usize> {
        (0..self.cylinders.len())
            .filter(|&j| self.cylinders[j].scaled(0.75, self.gamma).contains(self.grid.space(), x, t))
            .collect()
    }

    /// Partition function `Psi_j = phi_j / sum_k phi_k`, zero where no bump lives.
    pub fn partition(&self, j: usize, x: [f64; 2], t: f64) -> Jet {
        let cands = self.candidates(x, t);
        self.partition_from(j, &cands, x, t)
    }

    /// Every `(j, Psi_j)` whose bump is live at `(x, t)`.
    pub fn partition_all(&self, x: [f64; 2], t: f64) -> Vec<(usize, Jet)> {
        let cands = self.candidates(x, t);
        cands.iter().map(|&j| (j, self.partition_from(j, &cands, x, t))).collect()
    }

    /// Every nonzero `(j, Psi_j)` at a lattice point.
    pub fn partition_at(&self, flat: usize) -> Vec<(usize, Jet)> {
        let (k, n) = self.grid.unflat(flat);
        let x = self.grid.space().position(n);
        let t = self.grid.time(k);
        let cands = &self.members[flat];
        cands.iter().map(|&j| (j, self.partition_from(j, cands, x, t))).collect()
    }

    fn partition_from(&self, j: usize, cands: &[usize], x: [f64; 2], t: f64) -> Jet {
        let mut sum = Jet::default();
        let mut own = Jet::default();
        for &k in cands {
            let b = self.bump(k, x, t);
            sum.value += b.value;
            sum.grad[0] += b.grad[0];
            sum.grad[1] += b.grad[1];
            sum.dt += b.dt;
            if k == j {
                own = b;
            }
        }
        if sum.value <= 0.0 || own.value == 0.0 && own.grad == [0.0; 2] && own.dt == 0.0 {
            return Jet::default();
        }
        let s2 = sum.value * sum.value;
        Jet {
            value: own.value / sum.value,
            grad: [
                (own.grad[0] * sum.value - own.value * sum.grad[0]) / s2,
                (own.grad[1] * sum.value - own.value * sum.grad[1]) / s2,
            ],
            dt: (own.dt * sum.value - own.value * sum.dt) / s2,
        }
    }

    /// Largest second spatial derivative of `Psi_j` at a point, by central
    /// differences of the exact gradient.
    pub fn partition_hessian_max(&self, j: usize, x: [f64; 2], t: f64) -> f64 {
        let h = 1e-5 * self.cylinders[j].radius;
        let dims = self.grid.space().dim();
        let mut m = 0.0f64;
        for a in 0..dims {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let gp = self.partition(j, xp, t).grad;
            let gm = self.partition(j, xm, t).grad;
            for b in 0..dims {
                m = m.max(((gp[b] - gm[b]) / (2.0 * h)).abs());
            }
        }
        m
    }

    pub fn stats(&self) -> CoverStats {
        let rmin = self.cylinders.iter().map(|c| c.radius).fold(f64::INFINITY, f64::min);
        let rmax = self.cylinders.iter().map(|c| c.radius).fold(0.0, f64::max);
        let bins = if self.cylinders.is_empty() { 0 } else { (rmax / rmin).log2().floor() as usize + 1 };
        let mut hist = vec![0; bins];
        for c in &self.cylinders {
            hist[((c.radius / rmin).log2().floor() as usize).min(bins - 1)] += 1;
        }
        let mut overlap = vec![0usize; self.grid.len()];
        for c in &self.cylinders {
            for (k, n) in c.scaled(4.0, self.gamma).lattice_points(&self.grid) {
                overlap[self.grid.flat(k, n)] += 1;
            }
        }
        CoverStats {
            count: self.cylinders.len(),
            min_radius: if self.cylinders.is_empty() { 0.0 } else { rmin },
            max_radius: rmax,
            radius_histogram: hist,
            max_overlap_4q: overlap.into_iter().max().unwrap_or(0),
            max_neighbors: self.neighbors.iter().map(Vec::len).max().unwrap_or(0),
        }
    }
}

/// Outcome of [`lipschitz_certify`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    /// Largest `(1/r) mean_Q |f - f_Q|` over the sampled cylinders.
    pub campanato: f64,
    /// Largest `|f(z1) - f(z2)| / d(z1, z2)` over the sampled pairs.
    pub direct: f64,
    /// Flat indices of the pairs attaining the largest direct quotients, best first.
    pub witnesses: Vec<(usize, usize, f64)>,
    pub pairs_sampled: usize,
    pub cylinders_sampled: usize,
}

/// Sampling controls for [`lipschitz_certify`].
#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub random_pairs: usize,
    /// Largest cylinder radius, in lattice cells.
    pub max_radius_cells: usize,
    /// Use every `stride`-th region point as a cylinder centre.
    pub stride: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { random_pairs: 20_000, max_radius_cells: 8, stride: 1, seed: 7 }
    }
}

/// Two measurements of the Lipschitz constant of `f` on `region` in the
/// parabolic metric with time scaling `gamma`: the Campanato quotient over
/// cylinders centred in the region, and direct difference quotients over
/// all lattice-neighbour pairs, the two extreme levels of every node, and
/// random pairs.
pub fn lipschitz_certify(
    f: &GridFunction,
    region: &Region,
    gamma: f64,
    opts: CertifyOptions,
) -> Result<LipschitzCertificate> {
    let grid = f.grid();
    let space = grid.space();
    let pts: Vec<usize> = region.iter().collect();
    if pts.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let v = f.values();
    let z = |i: usize| {
        let (k, n) = grid.unflat(i);
        (space.position(n), grid.time(k))
    };
    let quotient = |a: usize, b: usize| {
        let d = metric_distance(z(a), z(b), gamma);
        if d > 0.0 { (v[a] - v[b]).abs() / d } else { 0.0 }
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &a in &pts {
        let (k, n) = grid.unflat(a);
        for m in space.neighbors(n) {
            let b = grid.flat(k, m);
            if b > a && region.contains(b) {
                pairs.push((a, b));
            }
        }
        if k + 1 < grid.nt() {
            let b = grid.flat(k + 1, n);
            if region.contains(b) {
                pairs.push((a, b));
            }
        }
    }
    for n in 0..space.len() {
        let col: Vec<usize> = (0..grid.nt()).map(|k| grid.flat(k, n)).filter(|&i| region.contains(i)).collect();
        if col.len() >= 2 {
            pairs.push((col[0], col[col.len() - 1]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_pairs {
        let a = pts[rng.random_range(0..pts.len())];
        let b = pts[rng.random_range(0..pts.len())];
        if a != b {
            pairs.push((a, b));
        }
    }
    let mut scored: Vec<(usize, usize, f64)> = pairs.par_iter().map(|&(a, b)| (a, b, quotient(a, b))).collect();
    scored.sort_by(|x, y| y.2.total_cmp(&x.2));
    let direct = scored.first().map_or(0.0, |s| s.2);
    let witnesses: Vec<(usize, usize, f64)> = scored.iter().take(5).copied().collect();

    let h = space.min_spacing();
    let mut radii = Vec::new();
    let mut c = 1;
    while c <= opts.max_radius_cells.max(1) {
        radii.push((c as f64 + 0.5) * h);
        c *= 2;
    }
    let centres: Vec<usize> = pts.iter().copied().step_by(opts.stride.max(1)).collect();
    let samples: Vec<f64> = centres
        .par_iter()
        .flat_map_iter(|&cz| {
            let (x, t) = z(cz);
            radii.iter().filter_map(move |&r| {
                let q = ParabolicCylinder::new(x, t, r, gamma);
                let inside: Vec<f64> = q
                    .lattice_points(grid)
                    .into_iter()
                    .map(|(k, n)| grid.flat(k, n))
                    .filter(|&i| region.contains(i))
                    .map(|i| v[i])
                    .collect();
                if inside.len() < 2 {
                    return None;
                }
                let mean = inside.iter().sum::<f64>() / inside.len() as f64;
                let osc = inside.iter().map(|w| (w - mean).abs()).sum::<f64>() / inside.len() as f64;
                Some(osc / r)
            })
        })
        .collect();
    let campanato = samples.iter().cloned().fold(0.0, f64::max);
    Ok(LipschitzCertificate {
        campanato,
        direct,
        witnesses,
        pairs_sampled: scored.len(),
        cylinders_sampled: samples.len(),
    })
}

/// Lattice points plus the virtual ring of set points just beyond the lattice
/// that lie inside `q`; returns whether any of them belongs to the set.
fn meets_set(cover: &WhitneyCover, q: &ParabolicCylinder) -> bool {
    let grid = &cover.grid;
    let space = grid.space();
    let [nx, ny] = space.shape();
    let [hx, hy] = space.spacing();
    let o = space.origin();
    let s = q.half_length();
    let klo = ((q.t - s - grid.t0()) / grid.dt()).floor() as isize - 1;
    let khi = ((q.t + s - grid.t0()) / grid.dt()).ceil() as isize + 1;
    let span = |c: f64, o: f64, h: f64, n: usize| {
        let lo = (((c - q.radius - o) / h).floor() as isize - 1).max(-1);
        let hi = (((c + q.radius - o) / h).ceil() as isize + 1).min(n as isize);
        (lo, hi)
    };
    let (ilo, ihi) = span(q.center[0], o[0], hx, nx);
    let (jlo, jhi) = if space.dim() == 1 { (0, 0) } else { span(q.center[1], o[1], hy, ny) };
    for k in klo.max(-1)..=khi.min(grid.nt() as isize) {
        let t = grid.t0() + k as f64 * grid.dt();
        if (t - q.t).abs() >= s {
            continue;
        }
        for i in ilo..=ihi {
            for j in jlo..=jhi {
                let x = [o[0] + i as f64 * hx, o[1] + j as f64 * hy];
                if space.distance(x, q.center) >= q.radius {
                    continue;
                }
                let outside = k < 0 || k >= grid.nt() as isize || i < 0 || i >= nx as isize
                    || j < 0 || j >= ny as isize;
                if outside || cover.in_set[grid.flat(k as usize, space.index(i as usize, j as usize))] {
                    return true;
                }
            }
        }
    }
    false
}

/// Measured values of every covering and partition property.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    pub cylinders: usize,
    /// Largest `|d(z_j) - 16 r_j|`.
    pub radius_defect: f64,
    /// Smallest lattice cell, spatial or parabolic in time.
    pub cell: f64,
    /// Lattice points outside the set not covered by any half cylinder.
    pub uncovered: usize,
    /// Cylinders whose 8-fold enlargement meets the set.
    pub enlarged_hits: usize,
    /// Cylinders whose 16-fold enlargement misses the set.
    pub far_misses: usize,
    /// Largest radius ratio between neighbours.
    pub neighbor_ratio: f64,
    /// Pairs of quarter cylinders that intersect.
    pub quarter_overlaps: usize,
    pub max_overlap_4q: usize,
    pub max_neighbors: usize,
    /// Neighbour pairs with a three-quarter cylinder lattice point outside the quadrupled one.
    pub inclusion_failures: usize,
    /// Samples with `Psi_j` nonzero outside the three-quarter cylinder or above one.
    pub support_failures: usize,
    /// Smallest `Psi_j |A_j|` over samples in the half cylinder.
    pub half_floor: f64,
    /// Samples in a half cylinder met by no other bump where `Psi_j != 1`.
    pub isolated_failures: usize,
    /// Largest scaled derivative sum over the union of half cylinders.
    pub derivative_bound: f64,
    /// Largest `|sum_{j in A_i} Psi_j - 1|` on three-quarter cylinders, within
    /// the union of half cylinders.
    pub partition_error: f64,
    pub samples: usize,
}

impl InvariantReport {
    /// Whether every property holds with the given frozen constants.
    pub fn holds(&self, overlap_bound: usize, derivative_bound: f64) -> bool {
        self.radius_defect <= self.cell
            && self.uncovered == 0
            && self.enlarged_hits == 0
            && self.far_misses == 0
            && self.neighbor_ratio <= 2.0
            && self.quarter_overlaps == 0
            && self.max_overlap_4q <= overlap_bound
            && self.max_neighbors <= overlap_bound
            && self.inclusion_failures == 0
            && self.support_failures == 0
            && self.half_floor > 0.0
            && self.isolated_failures == 0
            && self.derivative_bound <= derivative_bound
            && self.partition_error <= 1e-10
    }
}

/// Uniform sample in `alpha Q_j`, plus the centre for index zero.
fn sample_in(c: &WhitneyCylinder, alpha: f64, gamma: f64, dim: usize, idx: usize, rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
    if idx == 0 {
        return (c.center, c.t);
    }
    let r = alpha * c.radius;
    let x = loop {
        let u = [rng.random_range(-1.0..1.0), if dim == 2 { rng.random_range(-1.0..1.0) } else { 0.0 }];
        let n: f64 = u[0] * u[0] + u[1] * u[1];
        if n < 1.0 {
            break [c.center[0] + r * u[0], c.center[1] + r * u[1]];
        }
    };
    let s = gamma * r * r;
    (x, c.t + s * rng.random_range(-1.0..1.0))
}

impl WhitneyCover {
    fn partition_near(&self, j: usize, i: usize, x: [f64; 2], t: f64) -> Jet {
        self.partition_from(j, &self.neighbors[i], x, t)
    }

    /// Every `(j, Psi_j)` at a point of the three-quarter cylinder `i`.
    pub fn partition_in(&self, i: usize, x: [f64; 2], t: f64) -> Vec<(usize, Jet)> {
        self.neighbors[i].iter().map(|&j| (j, self.partition_near(j, i, x, t))).collect()
    }

    /// Whether `(x, t)`, a point of the three-quarter cylinder `i`, lies in
    /// some half cylinder.
    pub fn covered_in(&self, i: usize, x: [f64; 2], t: f64) -> bool {
        let space = self.grid.space();
        self.neighbors[i].iter().any(|&k| self.cylinders[k].scaled(0.5, self.gamma).contains(space, x, t))
    }

    /// Up to `count` points of the three-quarter cylinder `i` lying in the
    /// union of half cylinders; the centre comes first.
    pub fn sample_covered(&self, i: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<([f64; 2], f64)> {
        let c = self.cylinders[i];
        let dim = self.grid.space().dim();
        let mut out = Vec::with_capacity(count);
        let mut s = 0;
        while out.len() < count && s < 20 * count.max(1) {
            let (x, t) = sample_in(&c, 0.75, self.gamma, dim, s, rng);
            s += 1;
            if self.covered_in(i, x, t) {
                out.push((x, t));
            }
        }
        out
    }

    fn hessian_near(&self, j: usize, x: [f64; 2], t: f64) -> f64 {
        let h = 1e-5 * self.cylinders[j].radius;
        let dims = self.grid.space().dim();
        let mut m = 0.0f64;
        for a in 0..dims {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let gp = self.partition_near(j, j, xp, t).grad;
            let gm = self.partition_near(j, j, xm, t).grad;
            for b in 0..dims {
                m = m.max(((gp[b] - gm[b]) / (2.0 * h)).abs());
            }
        }
        m
    }

    /// Measure every covering and partition property, sampling
    /// `samples_per_cylinder` points in each cylinder for the partition checks.
    ///
    /// Partition properties are sampled on the union of the half cylinders,
    /// which holds every lattice point off the set and is where the bumps sum
    /// to at least one.
    pub fn check_invariants(&self, samples_per_cylinder: usize, seed: u64) -> InvariantReport {
        let grid = &self.grid;
        let space = grid.space();
        let gamma = self.gamma;
        let dim = space.dim();
        let n = self.cylinders.len();
        let mut rep = InvariantReport {
            cylinders: n,
            cell: space.min_spacing().min((grid.dt() / gamma).sqrt()),
            half_floor: f64::INFINITY,
            neighbor_ratio: 1.0,
            ..Default::default()
        };
        for c in &self.cylinders {
            rep.radius_defect = rep.radius_defect.max((c.distance - 16.0 * c.radius).abs());
        }
        let mut covered = vec![false; grid.len()];
        for c in &self.cylinders {
            for (k, m) in c.scaled(0.5, gamma).lattice_points(grid) {
                covered[grid.flat(k, m)] = true;
            }
        }
        rep.uncovered = (0..grid.len()).filter(|&i| !self.in_set[i] && !covered[i]).count();
        let hits: Vec<(bool, bool)> = self
            .cylinders
            .par_iter()
            .map(|c| (meets_set(self, &c.scaled(8.0, gamma)), !meets_set(self, &c.scaled(16.0, gamma))))
            .collect();
        rep.enlarged_hits = hits.iter().filter(|h| h.0).count();
        rep.far_misses = hits.iter().filter(|h| h.1).count();
        for (k, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                rep.neighbor_ratio = rep.neighbor_ratio.max(self.cylinders[j].radius / self.cylinders[k].radius);
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.cylinders[a].center[0].total_cmp(&self.cylinders[b].center[0]));
        let rmax = self.cylinders.iter().map(|c| c.radius).fold(0.0, f64::max);
        rep.quarter_overlaps = (0..n)
            .into_par_iter()
            .map(|a| {
                let ca = &self.cylinders[order[a]];
                order[a + 1..]
                    .iter()
                    .take_while(|&&b| self.cylinders[b].center[0] - ca.center[0] < 0.25 * (ca.radius + rmax))
                    .filter(|&&b| {
                        let cb = &self.cylinders[b];
                        cylinders_meet(ca, 0.25 * ca.radius, cb, 0.25 * cb.radius, gamma)
                    })
                    .count()
            })
            .sum();
        let st = self.stats();
        rep.max_overlap_4q = st.max_overlap_4q;
        rep.max_neighbors = st.max_neighbors;
        rep.inclusion_failures = (0..n)
            .into_par_iter()
            .map(|i| {
                let big = self.cylinders[i].scaled(4.0, gamma);
                self.neighbors[i]
                    .iter()
                    .map(|&j| {
                        self.cylinders[j]
                            .scaled(0.75, gamma)
                            .lattice_points(grid)
                            .into_iter()
                            .filter(|&(k, m)| !big.contains(space, space.position(m), grid.time(k)))
                            .count()
                    })
                    .sum::<usize>()
            })
            .sum();

        struct Acc {
            support: usize,
            floor: f64,
            isolated: usize,
            deriv: f64,
            err: f64,
            taken: usize,
        }
        let accs: Vec<Acc> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let c = self.cylinders[j];
                let mut acc = Acc { support: 0, floor: f64::INFINITY, isolated: 0, deriv: 0.0, err: 0.0, taken: 0 };
                let mut val = 0.0f64;
                let mut grad = 0.0f64;
                let mut hess = 0.0f64;
                let mut tder = 0.0f64;
                let in_union = |x: [f64; 2], t: f64| self.covered_in(j, x, t);
                let want = samples_per_cylinder.max(1);
                let mut taken = 0;
                let mut s = 0;
                while taken < want && s < 20 * want {
                    // three-quarter cylinder within the covered set: derivative bounds and the partition sum
                    let (x, t) = sample_in(&c, 0.75, gamma, dim, s, &mut rng);
                    s += 1;
                    if !in_union(x, t) {
                        continue;
                    }
                    taken += 1;
                    let p = self.partition_near(j, j, x, t);
                    val = val.max(p.value.abs());
                    grad = grad.max(p.grad[0].hypot(p.grad[1]));
                    tder = tder.max(p.dt.abs());
                    hess = hess.max(self.hessian_near(j, x, t));
                    if p.value > 1.0 + 1e-12 || p.value < -1e-12 {
                        acc.support += 1;
                    }
                    let sum: f64 = self.neighbors[j].iter().map(|&k| self.partition_near(k, j, x, t).value).sum();
                    acc.err = acc.err.max((sum - 1.0).abs());
                    // half cylinder: lower bound
                    let (x, t) = sample_in(&c, 0.5, gamma, dim, s, &mut rng);
                    let p = self.partition_near(j, j, x, t);
                    acc.floor = acc.floor.min(p.value * self.neighbors[j].len() as f64);
                    let alone = self.neighbors[j]
                        .iter()
                        .all(|&k| k == j || self.bump(k, x, t).value == 0.0);
                    if alone && (p.value - 1.0).abs() > 1e-12 {
                        acc.isolated += 1;
                    }
                    // the full cylinder: zero off the three-quarter cylinder
                    let (x, t) = sample_in(&c, 1.0, gamma, dim, s, &mut rng);
                    if !c.scaled(0.75, gamma).contains(space, x, t) && self.bump(j, x, t).value != 0.0 {
                        acc.support += 1;
                    }
                }
                acc.taken = taken;
                let r = c.radius;
                acc.deriv = val + r * grad + r * r * hess + gamma * r * r * tder;
                acc
            })
            .collect();
        for a in accs {
            rep.support_failures += a.support;
            rep.half_floor = rep.half_floor.min(a.floor);
            rep.isolated_failures += a.isolated;
            rep.derivative_bound = rep.derivative_bound.max(a.deriv);
            rep.partition_error = rep.partition_error.max(a.err);
            rep.samples += a.taken;
        }
        rep
    }
}

/// Grid over `space` whose time extent matches its spatial extent in the
/// metric with time scaling `gamma`: `T = gamma L^2 / 2` for side length `L`.
pub fn balanced_grid(space: SpatialDomain, gamma: f64, levels: usize) -> Result<Arc<SpaceTimeGrid>> {
    let [nx, _] = space.shape();
    let side = (nx - 1) as f64 * space.spacing()[0];
    Ok(Arc::new(SpaceTimeGrid::new(space, 0.0, 0.5 * gamma * side * side, levels)?))
}

/// Random closed set: a union of cylinders and half-spaces in space and time,
/// never the whole grid.
pub fn random_closed_set(grid: &SpaceTimeGrid, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = grid.space();
    let dim = space.dim();
    let [nx, ny] = space.shape();
    let o = space.origin();
    let ext = [(nx - 1) as f64 * space.spacing()[0], (ny.max(2) - 1) as f64 * space.spacing()[1]];
    let t_ext = grid.time(grid.nt() - 1) - grid.t0();
    let mut set = vec![false; grid.len()];
    loop {
        let pieces = rng.random_range(1..5usize);
        for _ in 0..pieces {
            if rng.random::<f64>() < 0.6 {
                let c = [o[0] + rng.random::<f64>() * ext[0], o[1] + if dim == 2 { rng.random::<f64>() * ext[1] } else { 0.0 }];
                let t = grid.t0() + rng.random::<f64>() * t_ext;
                let r = (0.05 + 0.2 * rng.random::<f64>()) * ext[0];
                let s = (0.05 + 0.3 * rng.random::<f64>()) * t_ext;
                let q = ParabolicCylinder::with_half_length(c, t, r, s);
                for (k, m) in q.lattice_points(grid) {
                    set[grid.flat(k, m)] = true;
                }
            } else {
                let axis = rng.random_range(0..dim + 1);
                let frac = 0.05 + 0.3 * rng.random::<f64>();
                let low = rng.random::<bool>();
                for (i, s) in set.iter_mut().enumerate() {
                    let (k, m) = grid.unflat(i);
                    let u = if axis == dim {
                        (grid.time(k) - grid.t0()) / t_ext.max(f64::MIN_POSITIVE)
                    } else {
                        (space.position(m)[axis] - o[axis]) / ext[axis]
                    };
                    if (low && u <= frac) || (!low && u >= 1.0 - frac) {
                        *s = true;
                    }
                }
            }
        }
        if set.iter().any(|&b| !b) {
            return set;
        }
        set.iter_mut().for_each(|b| *b = false);
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_domain, DomainKind};

    fn grid2(cells: usize, nt: usize, t_end: f64) -> Arc<SpaceTimeGrid> {
        let s = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [cells, cells] }).unwrap();
        Arc::new(SpaceTimeGrid::new(s.unmasked(), 0.0, t_end, nt).unwrap())
    }

    #[test]
    fn metric_examples() {
        let m = ParabolicMetric::new(3.0, 2.5).unwrap();
        assert_eq!(m.distance(([0.0, 0.0], 0.0), ([1.0, 0.0], 0.0)), 1.0);
        let flat = ParabolicMetric::new(7.0, 2.0).unwrap();
        assert_eq!(flat.distance(([0.0; 2], 0.0), ([0.0; 2], 4.0)), 2.0);
        let m = ParabolicMetric::new(2.0, 4.0).unwrap();
        assert!((m.distance(([0.0; 2], 0.0), ([0.0; 2], 1.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let g = grid2(9, 7, 0.3);
        let gamma = 0.7;
        let in_set: Vec<bool> = (0..g.len()).map(|i| (i * 7919) % 13 == 0).collect();
        let fast = distance_to_set(&g, &in_set, gamma);
        let space = g.space();
        let [nx, ny] = space.shape();
        let h = space.spacing();
        let o = space.origin();
        for (i, &d) in fast.iter().enumerate() {
            let (k, n) = g.unflat(i);
            let (x, t) = (space.position(n), g.time(k));
            let mut best = f64::INFINITY;
            for kk in -1..=g.nt() as isize {
                for a in -1..=nx as isize {
                    for b in -1..=ny as isize {
                        let outside = kk < 0 || kk >= g.nt() as isize || a < 0 || b < 0
                            || a >= nx as isize || b >= ny as isize;
                        let hit = outside || in_set[g.flat(kk as usize, space.index(a as usize, b as usize))];
                        if hit {
                            let y = [o[0] + a as f64 * h[0], o[1] + b as f64 * h[1]];
                            let s = g.t0() + kk as f64 * g.dt();
                            best = best.min(metric_distance((x, t), (y, s), gamma));
                        }
                    }
                }
            }
            assert!((d - best).abs() < 1e-12, "{d} vs {best}");
        }
    }

    #[test]
    fn whole_grid_in_set_is_an_error() {
        let g = grid2(5, 3, 1.0);
        let m = ParabolicMetric::new(1.0, 2.0).unwrap();
        assert!(matches!(build_cover(&g, &vec![true; g.len()], m), Err(Error::EmptyComplement)));
    }

    #[test]
    fn single_cylinder_partition_is_one_on_half() {
        let g = grid2(9, 9, 1.0);
        let m = ParabolicMetric::new(1.0, 2.0).unwrap();
        let mut in_set = vec![true; g.len()];
        let centre = g.flat(4, g.space().index(5, 5));
        in_set[centre] = false;
        let cover = build_cover(&g, &in_set, m).unwrap();
        assert_eq!(cover.len(), 1);
        let c = cover.cylinders[0];
        for &(dx, dt) in &[(0.0, 0.0), (0.4, 0.0), (0.0, 0.2), (0.3, -0.2)] {
            let x = [c.center[0] + dx * c.radius, c.center[1]];
            let t = c.t + dt * cover.gamma * c.radius * c.radius;
            assert!((cover.partition(0, x, t).value - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let g = grid2(9, 9, 1.0);
        let m = ParabolicMetric::new(1.3, 2.5).unwrap();
        let in_set: Vec<bool> = (0..g.len()).map(|i| g.unflat(i).0 < 2).collect();
        let cover = build_cover(&g, &in_set, m).unwrap();
        let c = cover.cylinders[cover.len() / 2];
        let x = [c.center[0] + 0.3 * c.radius, c.center[1] + 0.4 * c.radius];
        let t = c.t + 0.3 * cover.gamma * c.radius * c.radius;
        let j = cover.len() / 2;
        let p = cover.partition(j, x, t);
        let e = 1e-7 * c.radius;
        let fx = (cover.partition(j, [x[0] + e, x[1]], t).value - cover.partition(j, [x[0] - e, x[1]], t).value) / (2.0 * e);
        let et = e * e;
        let ft = (cover.partition(j, x, t + et).value - cover.partition(j, x, t - et).value) / (2.0 * et);
        assert!((fx - p.grad[0]).abs() < 1e-5 * (1.0 + p.grad[0].abs()), "{fx} vs {}", p.grad[0]);
        assert!((ft - p.dt).abs() < 1e-3 * (1.0 + p.dt.abs()), "{ft} vs {}", p.dt);
    }

    #[test]
    fn linear_function_has_unit_constant() {
        let g = grid2(9, 5, 0.2);
        let f = GridFunction::from_fn(g.clone(), |x, _| x[0]);
        let cert = lipschitz_certify(&f, &Region::domain(&g), 1.0, CertifyOptions::default()).unwrap();
        assert!((cert.direct - 1.0).abs() < 1e-12);
        let zero = GridFunction::zeros(g.clone());
        let c0 = lipschitz_certify(&zero, &Region::domain(&g), 1.0, CertifyOptions::default()).unwrap();
        assert_eq!((c0.direct, c0.campanato), (0.0, 0.0));
    }

    #[test]
    fn time_linear_function_is_comparable() {
        let gamma: f64 = 0.5;
        let g = grid2(9, 17, 1.0);
        let f = GridFunction::from_fn(g.clone(), |_, t| t / gamma.sqrt());
        let cert = lipschitz_certify(&f, &Region::domain(&g), gamma, CertifyOptions::default()).unwrap();
        assert!((0.5..=2.0).contains(&cert.direct), "{}", cert.direct);
    }

    #[test]
    fn half_space_in_time() {
        let m = ParabolicMetric::new(1.0, 2.0).unwrap();
        let s = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [24, 24] }).unwrap();
        let g = balanced_grid(s.unmasked(), 1.0, 24).unwrap();
        let in_set: Vec<bool> = (0..g.len()).map(|i| g.time(g.unflat(i).0) <= 0.0).collect();
        let cover = build_cover(&g, &in_set, m).unwrap();
        assert!(!cover.is_empty());
        let rep = cover.check_invariants(8, 1);
        assert!(rep.radius_defect <= rep.cell, "{rep:?}");
        assert!(rep.holds(200, 1e3), "{rep:?}");
    }

    #[test]
    fn complement_of_one_cylinder_stays_inside() {
        let g = grid2(16, 16, 1.0);
        let m = ParabolicMetric::new(1.0, 2.0).unwrap();
        let q0 = ParabolicCylinder::new([0.5, 0.5], 0.5, 0.3, 1.0);
        let in_set: Vec<bool> = (0..g.len())
            .map(|i| {
                let (k, n) = g.unflat(i);
                !q0.contains(g.space(), g.space().position(n), g.time(k))
            })
            .collect();
        let cover = build_cover(&g, &in_set, m).unwrap();
        let big = q0.scaled(8.0);
        for c in &cover.cylinders {
            let q = c.scaled(1.0, cover.gamma);
            for (k, n) in q.lattice_points(&g) {
                assert!(big.contains(g.space(), g.space().position(n), g.time(k)));
            }
            assert!(q.radius <= big.radius && q.half_length() <= big.half_length());
        }
        let rep = cover.check_invariants(4, 2);
        assert_eq!((rep.enlarged_hits, rep.far_misses), (0, 0));
    }

    #[test]
    fn partition_sums_to_one_at_random_points() {
        let m = ParabolicMetric::new(2.0, 3.0).unwrap();
        let s = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [24, 24] }).unwrap();
        let g = balanced_grid(s.unmasked(), m.gamma(), 24).unwrap();
        let set = random_closed_set(&g, 11);
        let cover = build_cover(&g, &set, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let c = cover.cylinders[rng.random_range(0..cover.len())];
            let (x, t) = sample_in(&c, 0.5, cover.gamma, 2, 1, &mut rng);
            let sum: f64 = cover.partition_all(x, t).iter().map(|(_, p)| p.value).sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn doubling_lambda_halves_time_scale_at_p3() {
        let a = ParabolicMetric::new(1.0, 3.0).unwrap();
        let b = ParabolicMetric::new(2.0, 3.0).unwrap();
        assert_eq!(b.gamma(), 0.5 * a.gamma());
        let g = grid2(8, 8, 1.0);
        let set = random_closed_set(&g, 5);
        let ca = build_cover(&g, &set, a).unwrap();
        let cb = build_cover(&g, &set, b).unwrap();
        let q = |c: &WhitneyCover| c.cylinders[0].scaled(1.0, c.gamma).half_length() / c.cylinders[0].radius.powi(2);
        assert!((q(&cb) / q(&ca) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_cover() {
        let s = make_domain(&DomainKind::Interval { length: 1.0, cells: 96 }).unwrap();
        let g = balanced_grid(s.unmasked(), 1.0, 96).unwrap();
        let set = random_closed_set(&g, 9);
        let cover = build_cover(&g, &set, ParabolicMetric::new(0.5, 1.6).unwrap()).unwrap();
        let rep = cover.check_invariants(8, 4);
        assert!(rep.holds(200, 1e3), "{rep:?}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn invariants_hold_on_random_sets(seed in 0u64..1_000_000, li in 0usize..3, pi in 0usize..3) {
            let s = make_domain(&DomainKind::Interval { length: 1.0, cells: 64 }).unwrap();
            let g = balanced_grid(s.unmasked(), 1.0, 64).unwrap();
            let lambda = [0.5, 1.0, 2.0][li];
            let p = [1.6, 2.0, 3.0][pi];
            let set = random_closed_set(&g, seed);
            let cover = build_cover(&g, &set, ParabolicMetric::new(lambda, p).unwrap()).unwrap();
            let rep = cover.check_invariants(4, seed);
            proptest::prop_assert!(rep.holds(200, 1e3), "{:?}", rep);
            proptest::prop_assert!(rep.neighbor_ratio < 1.1);
        }
    }
}
