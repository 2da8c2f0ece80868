//! Variational p-capacity of lattice sets, thickness of domain complements,
//! and the capacity form of the Sobolev-Poincare inequality.
//!
//! Test functions are continuous and piecewise linear: in two dimensions
//! every lattice square is split into two triangles along its diagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::elements;
use crate::grid::SpatialDomain;
use crate::linalg::Triplets;
use crate::report::EstimateReport;

/// Solver settings for [`p_capacity`].
#[derive(Clone, Copy, Debug)]
pub struct CapacityOptions {
    /// Relative size of the projected gradient at which Newton stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Tenfold reductions of the smoothing of `|grad phi|^p` when `p != 2`.
    pub stages: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions { tol: 1e-8, max_iter: 400, stages: 4 }
    }
}

/// Minimiser of the capacity problem.
#[derive(Clone, Debug)]
pub struct CapacityResult {
    pub value: f64,
    /// Optimal nodal values on the whole lattice.
    pub phi: Vec<f64>,
    pub iterations: usize,
}

/// `sum_T |T| |grad phi|^p` over the elements with every vertex in `nodes`.
pub fn dirichlet_energy(space: &SpatialDomain, phi: &[f64], p: f64, nodes: &[bool]) -> f64 {
    elements(space, |vs| vs.iter().all(|&v| nodes[v]))
        .iter()
        .map(|e| {
            let g = e.grad(phi);
            e.measure * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p)
        })
        .sum()
}

/// Capacity of the node set `k` relative to the open ball `B(center, radius)`.
///
/// Minimises `sum_T |T| |grad phi|^p` over piecewise linear `phi` with
/// `phi = 1` on `k`, `phi = 0` at nodes outside the ball and `0 <= phi <= 1`.
/// The lattice mask is ignored; the ball must stay clear of the lattice edge.
pub fn p_capacity(
    space: &SpatialDomain,
    k: &[bool],
    center: [f64; 2],
    radius: f64,
    p: f64,
    opts: CapacityOptions,
) -> Result<CapacityResult> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParams(format!("capacity exponent {p} must exceed 1")));
    }
    if k.len() != space.len() {
        return Err(Error::DimsMismatch("set does not match the lattice".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("ball radius {radius} must be positive")));
    }
    let inside: Vec<bool> =
        (0..space.len()).map(|i| space.distance(space.position(i), center) < radius).collect();
    let [nx, ny] = space.shape();
    for i in 0..space.len() {
        let (a, b) = space.coords(i);
        let edge = a == 0 || a + 1 == nx || (space.dim() == 2 && (b == 0 || b + 1 == ny));
        if inside[i] && edge {
            return Err(Error::InvalidParams("ball reaches the lattice edge".into()));
        }
        if k[i] && !inside[i] {
            return Err(Error::InvalidParams("set is not contained in the ball".into()));
        }
    }
    let mut phi: Vec<f64> = k.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
    if !k.iter().any(|&x| x) {
        return Ok(CapacityResult { value: 0.0, phi, iterations: 0 });
    }
    let free: Vec<usize> = (0..space.len()).filter(|&i| inside[i] && !k[i]).collect();
    let elems = elements(space, |vs| vs.iter().any(|&v| inside[v]));
    let mut slot = vec![usize::MAX; space.len()];
    for (s, &i) in free.iter().enumerate() {
        slot[i] = s;
    }

    let energy = |phi: &[f64], eps: f64| -> f64 {
        elems
            .iter()
            .map(|e| {
                let g = e.grad(phi);
                e.measure * (eps * eps + g[0] * g[0] + g[1] * g[1]).powf(0.5 * p)
            })
            .sum()
    };
    let gradient = |phi: &[f64], eps: f64| -> Vec<f64> {
        let mut out = vec![0.0; space.len()];
        for e in &elems {
            let g = e.grad(phi);
            let w = e.measure * p * (eps * eps + g[0] * g[0] + g[1] * g[1]).powf(0.5 * p - 1.0);
            for a in 0..e.len {
                out[e.nodes[a]] += w * (g[0] * e.basis[a][0] + g[1] * e.basis[a][1]);
            }
        }
        out
    };
    // components of the gradient that may move without leaving [0, 1]
    let projected = |phi: &[f64], g: &[f64]| -> Vec<f64> {
        free.iter()
            .map(|&i| {
                let gi = g[i];
                if (phi[i] <= 0.0 && gi > 0.0) || (phi[i] >= 1.0 && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    };
    let pnorm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let scale = 1.0 / radius;
    let mut eps = if p == 2.0 { 0.0 } else { scale };
    let mut stage = 0;
    let mut iterations = 0;
    let g0 = pnorm(&projected(&phi, &gradient(&phi, eps)));
    loop {
        loop {
            let g = gradient(&phi, eps);
            let pg = projected(&phi, &g);
            if pnorm(&pg) <= opts.tol * g0 {
                break;
            }
            if iterations >= opts.max_iter {
                return Err(Error::NotConverged(format!(
                    "capacity iteration stopped at projected gradient {:e}",
                    pnorm(&pg) / g0
                )));
            }
            iterations += 1;
            // Newton step on the nodes not held at a bound
            let active: Vec<bool> = free
                .iter()
                .zip(&pg)
                .map(|(&i, &v)| v == 0.0 && g[i] != 0.0)
                .collect();
            let mut h = Triplets::new(free.len());
            for e in &elems {
                let gr = e.grad(&phi);
                let q = eps * eps + gr[0] * gr[0] + gr[1] * gr[1];
                let c1 = e.measure * p * q.powf(0.5 * p - 1.0);
                let c2 = if q > 0.0 { e.measure * p * (p - 2.0) * q.powf(0.5 * p - 2.0) } else { 0.0 };
                for a in 0..e.len {
                    let sa = slot[e.nodes[a]];
                    if sa == usize::MAX || active[sa] {
                        continue;
                    }
                    let da = gr[0] * e.basis[a][0] + gr[1] * e.basis[a][1];
                    for b in 0..e.len {
                        let sb = slot[e.nodes[b]];
                        if sb == usize::MAX || active[sb] {
                            continue;
                        }
                        let db = gr[0] * e.basis[b][0] + gr[1] * e.basis[b][1];
                        let bb = e.basis[a][0] * e.basis[b][0] + e.basis[a][1] * e.basis[b][1];
                        h.push(sa, sb, c1 * bb + c2 * da * db);
                    }
                }
            }
            for (s, &act) in active.iter().enumerate() {
                if act {
                    h.push(s, s, 1.0);
                }
            }
            let rhs: Vec<f64> = pg.iter().map(|v| -v).collect();
            let d = h.factor()?.solve(&rhs);
            let j = energy(&phi, eps);
            let mut alpha = 1.0;
            let mut moved = false;
            let mut trial = phi.clone();
            for _ in 0..50 {
                for (s, &i) in free.iter().enumerate() {
                    trial[i] = (phi[i] + alpha * d[s]).clamp(0.0, 1.0);
                }
                let decrease: f64 = free.iter().map(|&i| g[i] * (trial[i] - phi[i])).sum();
                let jt = energy(&trial, eps);
                if jt <= j + 1e-4 * decrease.min(0.0) && decrease < 0.0 {
                    moved = true;
                    break;
                }
                // energy differences drowned in round-off: judge the full
                // step by the projected gradient instead
                if alpha == 1.0
                    && (jt - j).abs() <= 1e-12 * j.abs()
                    && pnorm(&projected(&trial, &gradient(&trial, eps))) < pnorm(&pg)
                {
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
            phi.copy_from_slice(&trial);
        }
        if eps == 0.0 || stage >= opts.stages {
            break;
        }
        stage += 1;
        eps = scale * 0.1f64.powi(stage as i32);
    }
    let value = energy(&phi, 0.0);
    Ok(CapacityResult { value, phi, iterations })
}

/// One sampled boundary point and radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThicknessSample {
    pub point: [f64; 2],
    pub radius: f64,
    pub ratio: f64,
}

/// Worst capacity ratio of the complement over the sampled boundary points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub b0_empirical: f64,
    /// Largest sampled radius.
    pub r0: f64,
    pub samples: Vec<ThicknessSample>,
}

/// Radii of 2, 4, 8 and 16 lattice cells.
pub fn default_radii(space: &SpatialDomain) -> Vec<f64> {
    [2.0, 4.0, 8.0, 16.0].iter().map(|c| c * space.min_spacing()).collect()
}

/// Square lattice of `2m + 1` nodes per axis centred on the origin.
fn patch(dim: usize, h: [f64; 2], m: usize) -> SpatialDomain {
    let n = 2 * m + 1;
    let shape = if dim == 1 { [n, 1] } else { [n, n] };
    let origin = [-(m as f64) * h[0], if dim == 1 { 0.0 } else { -(m as f64) * h[1] }];
    SpatialDomain::from_mask(dim, shape, h, origin, vec![true; shape[0] * shape[1]])
        .expect("patch lattice is valid")
}

fn patch_half_width(space: &SpatialDomain, radius: f64) -> usize {
    let h = space.spacing();
    let hmin = if space.dim() == 1 { h[0] } else { h[0].min(h[1]) };
    (2.0 * radius / hmin).ceil() as usize + 2
}

/// Ratio `cap(closed B_r(y) minus the domain, B_2r(y)) / cap(closed B_r(y), B_2r(y))`
/// on a patch around a lattice point, where `outside(a, b)` says whether the
/// node at lattice offset `(a, b)` from `y` lies in the complement.
pub fn local_thickness_ratio(
    space: &SpatialDomain,
    radius: f64,
    p: f64,
    outside: impl Fn(isize, isize) -> bool,
    denominator: Option<f64>,
) -> Result<f64> {
    let m = patch_half_width(space, radius);
    let pd = patch(space.dim(), space.spacing(), m);
    let closed = |i: usize| pd.distance(pd.position(i), [0.0; 2]) <= radius * (1.0 + 1e-12);
    let offset = |i: usize| {
        let (a, b) = pd.coords(i);
        (a as isize - m as isize, if space.dim() == 1 { 0 } else { b as isize - m as isize })
    };
    let k_num: Vec<bool> = (0..pd.len())
        .map(|i| closed(i) && {
            let (a, b) = offset(i);
            outside(a, b)
        })
        .collect();
    let opts = CapacityOptions::default();
    let den = match denominator {
        Some(d) => d,
        None => {
            let k_den: Vec<bool> = (0..pd.len()).map(closed).collect();
            p_capacity(&pd, &k_den, [0.0; 2], 2.0 * radius, p, opts)?.value
        }
    };
    let num = p_capacity(&pd, &k_num, [0.0; 2], 2.0 * radius, p, opts)?.value;
    Ok((num / den).clamp(0.0, 1.0))
}

/// Capacity of the closed ball of `radius` relative to the concentric ball of twice the radius.
pub fn ball_capacity(space: &SpatialDomain, radius: f64, p: f64) -> Result<f64> {
    let m = patch_half_width(space, radius);
    let pd = patch(space.dim(), space.spacing(), m);
    let k: Vec<bool> = (0..pd.len())
        .map(|i| pd.distance(pd.position(i), [0.0; 2]) <= radius * (1.0 + 1e-12))
        .collect();
    Ok(p_capacity(&pd, &k, [0.0; 2], 2.0 * radius, p, CapacityOptions::default())?.value)
}

/// Sample every `stride`-th boundary node at each radius and report the worst
/// ratio of the complement's capacity to the full ball's. The complement
/// holds every lattice node that is not an interior node, and everything off
/// the lattice.
pub fn thickness_check(
    space: &SpatialDomain,
    p: f64,
    radii: &[f64],
    stride: usize,
) -> Result<ThicknessReport> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParams("radii must be positive".into()));
    }
    let dens: Vec<f64> = radii
        .iter()
        .map(|&r| ball_capacity(space, r, p))
        .collect::<Result<_>>()?;
    let points: Vec<usize> =
        space.boundary_cells().iter().copied().step_by(stride.max(1)).collect();
    let jobs: Vec<(usize, usize)> =
        points.iter().flat_map(|&y| (0..radii.len()).map(move |k| (y, k))).collect();
    let [nx, ny] = space.shape();
    let samples: Vec<ThicknessSample> = jobs
        .par_iter()
        .map(|&(y, k)| {
            let (yi, yj) = space.coords(y);
            let outside = |a: isize, b: isize| {
                let i = yi as isize + a;
                let j = yj as isize + b;
                if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                    return true;
                }
                !space.is_interior(space.index(i as usize, j as usize))
            };
            let ratio = local_thickness_ratio(space, radii[k], p, outside, Some(dens[k]))?;
            Ok(ThicknessSample { point: space.position(y), radius: radii[k], ratio })
        })
        .collect::<Result<_>>()?;
    let b0 = samples.iter().map(|s| s.ratio).fold(1.0, f64::min);
    let r0 = radii.iter().cloned().fold(0.0, f64::max);
    Ok(ThicknessReport { b0_empirical: b0, r0, samples })
}

/// Compare `(mean_B |phi|^{kappa p})^{1/(kappa p)}` with
/// `(cap(N, 2B)^{-1} int_B |grad phi|^p)^{1/p}`, where `N` is the zero set of
/// `phi` in `B`. `phi` holds nodal values on the whole lattice.
pub fn verify_capacity_sobolev_poincare(
    space: &SpatialDomain,
    phi: &[f64],
    center: [f64; 2],
    radius: f64,
    kappa: f64,
    p: f64,
    bound: f64,
) -> Result<EstimateReport> {
    if phi.len() != space.len() {
        return Err(Error::DimsMismatch("function does not match the lattice".into()));
    }
    let n = space.dim() as f64;
    let kmax = if p < n {
        n / (n - p)
    } else if p == n {
        2.0
    } else {
        f64::INFINITY
    };
    if !(p > 1.0) || !(kappa >= 1.0 && kappa <= kmax) {
        return Err(Error::InvalidParams(format!(
            "kappa {kappa} outside [1, {kmax}] for p = {p} in dimension {n}"
        )));
    }
    let ball = space.ball_nodes(center, radius);
    if ball.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let scale = ball.iter().map(|&i| phi[i].abs()).fold(0.0, f64::max);
    let zero: Vec<usize> =
        ball.iter().copied().filter(|&i| phi[i].abs() <= 1e-12 * scale).collect();
    if zero.is_empty() {
        return Err(Error::ZeroSetEmpty);
    }
    let e = kappa * p;
    let lhs = (ball.iter().map(|&i| phi[i].abs().powf(e)).sum::<f64>() / ball.len() as f64)
        .powf(1.0 / e);
    let mut in_ball = vec![false; space.len()];
    for &i in &ball {
        in_ball[i] = true;
    }
    let grad = dirichlet_energy(space, phi, p, &in_ball);

    // capacity of the zero set in the doubled ball, on a patch around the centre node
    let c = space.nearest_node(center);
    let shift = {
        let pc = space.position(c);
        [center[0] - pc[0], center[1] - pc[1]]
    };
    let m = patch_half_width(space, radius) + 1;
    let pd = patch(space.dim(), space.spacing(), m);
    let (ci, cj) = space.coords(c);
    let mut k = vec![false; pd.len()];
    for &z in &zero {
        let (zi, zj) = space.coords(z);
        let a = zi as isize - ci as isize + m as isize;
        let b = if space.dim() == 1 { 0 } else { zj as isize - cj as isize + m as isize };
        k[pd.index(a as usize, b as usize)] = true;
    }
    let cap = p_capacity(&pd, &k, shift, 2.0 * radius, p, CapacityOptions::default())?.value;
    let rhs = (grad / cap).powf(1.0 / p);
    Ok(EstimateReport::new("capacity_sobolev_poincare", lhs, rhs, bound)
        .with_meta("capacity", cap)
        .with_meta("zero_nodes", zero.len())
        .with_meta("kappa", kappa))
}
