//! Lipschitz truncation: the composite maximal function `g`, the good set
//! `{g <= lambda}`, the Whitney-weighted extension `v_{lambda,h}` of a
//! Steklov-averaged difference, and measurements of its bounds.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{grad_norm, neg_sobolev_norm, steklov, EdgeField, Region};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, ParabolicCylinder, SpaceTimeGrid};
use crate::maximal::{maximal_of, neg_maximal_spacetime, CylinderFamily};
use crate::report::EstimateReport;
use crate::whitney::{build_cover, lipschitz_certify, CertifyOptions, LipschitzCertificate, ParabolicMetric, WhitneyCover};

/// Which composite function defines the good set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Interior and lateral boundary: one gradient term and one negative-norm term.
    Apriori,
    /// Near the initial time: five terms localised to the enlarged cylinder.
    InitialBoundary,
}

/// Check `1 < p - eps0 < q <= p - 2 beta` (the initial-boundary variant only
/// needs `1 < q <= p - 2 beta`).
pub fn check_exponents(p: f64, q: f64, eps0: f64, beta: f64, variant: Variant) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidExponentLadder(m));
    if !(p > 1.0 && q > 1.0 && beta > 0.0) {
        return bad(format!("need p > 1, q > 1, beta > 0; got p={p}, q={q}, beta={beta}"));
    }
    if q > p - 2.0 * beta {
        return bad(format!("q={q} exceeds p - 2 beta = {}", p - 2.0 * beta));
    }
    if variant == Variant::Apriori && !(p - eps0 > 1.0 && p - eps0 < q) {
        return bad(format!("need 1 < p - eps0 < q, got p - eps0 = {}, q = {q}", p - eps0));
    }
    Ok(())
}

/// Inputs of the composite function.
#[derive(Clone, Debug)]
pub struct GoodSetInput<'a> {
    pub u: &'a GridFunction,
    pub w: &'a GridFunction,
    /// Magnitude of the lower-order datum, if any.
    pub h0: Option<&'a GridFunction>,
    pub p: f64,
    pub q: f64,
    pub eps0: f64,
    pub beta: f64,
    pub variant: Variant,
    /// Cylinder crossing the initial time, required by the initial-boundary variant.
    pub cylinder: Option<ParabolicCylinder>,
}

/// Composite function, its level and the closed set below it.
#[derive(Clone, Debug)]
pub struct GoodSetData {
    pub g: GridFunction,
    pub lambda: f64,
    /// `g <= lambda`, per lattice point.
    pub in_set: Vec<bool>,
    pub variant: Variant,
}

impl GoodSetData {
    pub fn threshold(g: GridFunction, lambda: f64, variant: Variant) -> Self {
        let in_set = g.values().iter().map(|&v| v <= lambda).collect();
        GoodSetData { g, lambda, in_set, variant }
    }

    pub fn complement_count(&self) -> usize {
        self.in_set.iter().filter(|&&b| !b).count()
    }
}

/// Value of `g` at the given percentile (0 to 100) of its lattice values.
pub fn lambda_at_percentile(g: &GridFunction, percentile: f64) -> f64 {
    let mut v = g.values().to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (percentile.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64).round() as usize;
    v[pos]
}

/// Per-level representation `dw/dt = -div psi` (forward differences in
/// time), from the quadratic minimal representation on the mask interior.
pub fn time_derivative_flux(w: &GridFunction) -> Result<Vec<EdgeField>> {
    let grid = w.grid();
    let space = grid.space();
    let nt = grid.nt();
    let region: Vec<bool> = (0..space.len()).map(|n| space.is_interior(n)).collect();
    (0..nt)
        .into_par_iter()
        .map(|k| {
            let (a, b) = if k + 1 < nt { (k, k + 1) } else { (k.saturating_sub(1), k) };
            let d: Vec<f64> = if a == b {
                vec![0.0; space.len()]
            } else {
                w.slice(b).iter().zip(w.slice(a)).map(|(x, y)| (x - y) / grid.dt()).collect()
            };
            if d.iter().all(|&x| x == 0.0) || !region.iter().any(|&r| r) {
                return Ok(EdgeField { edges: Vec::new(), values: Vec::new() });
            }
            Ok(neg_sobolev_norm(space, &d, 2.0, &region)?.psi)
        })
        .collect()
}

/// Spatial and temporal cutoffs around a cylinder crossing the initial time.
#[derive(Clone, Debug)]
pub struct InitialData {
    /// `(u - w) eta zeta`, extended by zero to earlier times.
    pub v: GridFunction,
    /// `[u - w]_h eta zeta`, extended the same way.
    pub v_h: GridFunction,
    /// Spatial cutoff per node.
    pub eta: Vec<f64>,
    /// Temporal cutoff per level of the extended grid.
    pub zeta: Vec<f64>,
    /// Levels added before the original first level.
    pub pad: usize,
}

fn smooth_step(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Cutoff equal to one for `d <= inner` and zero for `d >= 2 inner`.
fn cutoff(d: f64, inner: f64) -> f64 {
    1.0 - smooth_step((d - inner) / inner)
}

/// Levels to prepend so the extended grid reaches `t0 - back`.
fn pad_levels(grid: &SpaceTimeGrid, back: f64) -> usize {
    if back <= 0.0 {
        0
    } else {
        (back / grid.dt()).ceil() as usize
    }
}

/// `v = (u - w) eta zeta` for a cylinder `B_rho x I_s` crossing the initial
/// time, with `eta = 1` on `B_{4 rho}`, zero off `B_{8 rho}`, `zeta = 1` on
/// `I_{4s}`, zero off `I_{8s}`; `h` is the Steklov length.
pub fn build_initial_boundary_v(
    u: &GridFunction,
    w: &GridFunction,
    q: &ParabolicCylinder,
    h: f64,
) -> Result<InitialData> {
    if !u.same_grid(w) {
        return Err(Error::DimsMismatch("u and w live on different grids".into()));
    }
    let grid = u.grid();
    let s = q.half_length();
    if !(q.t - s <= grid.t0() && grid.t0() <= q.t + s) {
        return Err(Error::CylinderDoesNotCrossInitialTime);
    }
    let space = grid.space();
    let eta: Vec<f64> = (0..space.len())
        .map(|n| if space.in_mask(n) { cutoff(space.distance(space.position(n), q.center), 4.0 * q.radius) } else { 0.0 })
        .collect();
    let pad = pad_levels(grid, 8.0 * s - (q.t - grid.t0()));
    let diff = u.sub(w);
    let diff_h = steklov(&diff, h)?;
    let apply = |f: &GridFunction| {
        let ext = f.extend_backward(pad);
        let g = ext.grid().clone();
        let nodes = g.space().len();
        let mut vals = ext.into_values();
        for k in 0..g.nt() {
            let z = cutoff((g.time(k) - q.t).abs(), 4.0 * s);
            for n in 0..nodes {
                vals[k * nodes + n] *= eta[n] * z;
            }
        }
        GridFunction::from_values(g, vals)
    };
    let v = apply(&diff)?;
    let v_h = apply(&diff_h)?;
    let g = v.grid().clone();
    let zeta = (0..g.nt()).map(|k| cutoff((g.time(k) - q.t).abs(), 4.0 * s)).collect();
    Ok(InitialData { v, v_h, eta, zeta, pad })
}

/// Points of `16Q` (radius `16 rho`, half-length `16 s`) inside the mask at
/// nonnegative times of `grid`, whose first `pad` levels precede the data.
fn localisation(grid: &SpaceTimeGrid, q: &ParabolicCylinder, pad: usize) -> Region {
    let big = ParabolicCylinder::with_half_length(q.center, q.t, 16.0 * q.radius, 16.0 * q.half_length());
    let space = grid.space();
    Region::from_fn(grid, |k, n| {
        k >= pad && space.in_mask(n) && big.contains(space, space.position(n), grid.time(k))
    })
}

/// Mask points at nonnegative times, for a grid with `pad` leading levels.
fn data_region(grid: &SpaceTimeGrid, pad: usize) -> Region {
    let space = grid.space();
    Region::from_fn(grid, |k, n| k >= pad && space.in_mask(n))
}

fn root_of_maximal(grid: &SpaceTimeGrid, density: &[f64], family: &CylinderFamily, q: f64) -> Vec<f64> {
    maximal_of(grid, density, family).into_iter().map(|m| m.max(0.0).powf(1.0 / q)).collect()
}

/// Composite maximal function of the chosen variant, on the unmasked grid
/// (extended backwards to cover the cylinder for the initial-boundary variant).
pub fn composite_g(inp: &GoodSetInput) -> Result<GridFunction> {
    check_exponents(inp.p, inp.q, inp.eps0, inp.beta, inp.variant)?;
    if !inp.u.same_grid(inp.w) || inp.h0.is_some_and(|h| !h.same_grid(inp.u)) {
        return Err(Error::DimsMismatch("u, w and h0 must share a grid".into()));
    }
    let q = inp.q;
    let p = inp.p;
    let h0 = |i: usize| inp.h0.map_or(0.0, |h| h.values()[i].abs());
    match inp.variant {
        Variant::Apriori => {
            let grid = Arc::new(inp.u.grid().unmasked());
            let family = CylinderFamily::dyadic(&grid);
            let gu = grad_norm(inp.u);
            let gw = grad_norm(inp.w);
            let gv = grad_norm(&inp.u.sub(inp.w));
            let density: Vec<f64> = (0..grid.len())
                .map(|i| {
                    gv.values()[i].powf(q) + (gu.values()[i] + h0(i)).powf(q) + gw.values()[i].powf(q)
                })
                .collect();
            let g1 = root_of_maximal(&grid, &density, &family, q);
            let flux = time_derivative_flux(inp.w)?;
            let omega = data_region(&grid, 0);
            let theta = (q / (p - 1.0)).max(1.0);
            let g2 = neg_maximal_spacetime(&grid, &flux, theta, &family, Some(&omega))?;
            let vals = g1.iter().zip(g2.values()).map(|(a, b)| a.max(b.powf(1.0 / (p - 1.0)))).collect();
            GridFunction::from_values(grid, vals)
        }
        Variant::InitialBoundary => {
            let cyl = inp
                .cylinder
                .ok_or_else(|| Error::InvalidParams("initial-boundary variant needs a cylinder".into()))?;
            let base = inp.u.grid();
            let s = cyl.half_length();
            if !(cyl.t - s <= base.t0() && base.t0() <= cyl.t + s) {
                return Err(Error::CylinderDoesNotCrossInitialTime);
            }
            let pad = pad_levels(base, 8.0 * s - (cyl.t - base.t0()));
            let ext = |f: &GridFunction| f.extend_backward(pad);
            let (u, w) = (ext(inp.u), ext(inp.w));
            let grid = Arc::new(u.grid().unmasked());
            let family = CylinderFamily::dyadic(&grid);
            let loc = localisation(&grid, &cyl, pad);
            let chi = |i: usize| if loc.contains(i) { 1.0 } else { 0.0 };
            let eta: Vec<f64> = {
                let space = grid.space();
                (0..space.len())
                    .map(|n| {
                        if base.space().in_mask(n) {
                            cutoff(space.distance(space.position(n), cyl.center), 4.0 * cyl.radius)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            };
            let nodes = grid.space().len();
            let v_vals: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let (k, n) = (i / nodes, i % nodes);
                    let z = cutoff((grid.time(k) - cyl.t).abs(), 4.0 * s);
                    (u.values()[i] - w.values()[i]) * eta[n] * z
                })
                .collect();
            let v = GridFunction::from_values(u.grid().clone(), v_vals)?;
            let gu = grad_norm(&u);
            let gv = grad_norm(&v);
            let gw = grad_norm(&w);
            let h0e = inp.h0.map(ext);
            let h0v = |i: usize| h0e.as_ref().map_or(0.0, |h| h.values()[i].abs());
            let dens = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..grid.len()).map(|i| f(i) * chi(i)).collect() };
            let rho = cyl.radius;
            let g1 = root_of_maximal(&grid, &dens(&|i| (gu.values()[i] + h0v(i)).powf(q)), &family, q);
            let g2 = root_of_maximal(&grid, &dens(&|i| gv.values()[i].powf(q)), &family, q);
            let g3 = root_of_maximal(
                &grid,
                &dens(&|i| ((u.values()[i] - w.values()[i]).abs() / rho).powf(q)),
                &family,
                q,
            );
            let g4 = root_of_maximal(&grid, &dens(&|i| gw.values()[i].powf(q)), &family, q);
            let flux = time_derivative_flux(&w)?;
            let g5 = neg_maximal_spacetime(&grid, &flux, 1.0, &family, Some(&loc))?;
            let vals = (0..grid.len())
                .map(|i| g1[i].max(g2[i]).max(g3[i]).max(g4[i]).max(g5.values()[i]))
                .collect();
            GridFunction::from_values(grid, vals)
        }
    }
}

/// Composite function thresholded at `lambda`.
pub fn build_good_set(inp: &GoodSetInput, lambda: f64) -> Result<GoodSetData> {
    Ok(GoodSetData::threshold(composite_g(inp)?, lambda, inp.variant))
}

/// Truncated function and the data it was assembled from.
#[derive(Clone, Debug)]
pub struct TruncationResult {
    pub v_h: GridFunction,
    pub v_trunc: GridFunction,
    /// `None` when the good set is everything.
    pub cover: Option<WhitneyCover>,
    /// Weighted average per cylinder.
    pub local_averages: Vec<f64>,
    /// Cylinders whose average was set to zero.
    pub zeroed_cylinders: Vec<usize>,
    pub in_set: Vec<bool>,
    pub lambda: f64,
    pub p: f64,
    pub gamma: f64,
    /// Index of the first level at time zero or later.
    pub first_level: usize,
}

/// Interior mask nodes: the default reference region.
pub fn interior_nodes(grid: &SpaceTimeGrid) -> Vec<bool> {
    let space = grid.space();
    (0..space.len()).map(|n| space.is_interior(n)).collect()
}

/// `v_{lambda,h} = v_h - sum_i Psi_i (v_h - v_h^i)` over the Whitney cover of
/// `{g > lambda}` with time scaling `lambda^{2-p}`.
///
/// `v_h^i` is the `Psi_i`-weighted lattice mean of `v_h` over the
/// three-quarter cylinder, and zero unless that cylinder lies inside
/// `reference` (spatial nodes) and at times `>= time_origin`.
pub fn truncate(
    v_h: &GridFunction,
    gs: &GoodSetData,
    reference: &[bool],
    time_origin: f64,
    p: f64,
) -> Result<TruncationResult> {
    let grid = Arc::new(v_h.grid().unmasked());
    if gs.in_set.len() != grid.len() || reference.len() != grid.space().len() {
        return Err(Error::DimsMismatch("good set or reference region does not match the grid".into()));
    }
    let lambda = gs.lambda;
    let metric = ParabolicMetric::new(lambda, p)?;
    let gamma = metric.gamma();
    let first_level = (0..grid.nt()).find(|&k| grid.time(k) >= time_origin - 1e-12 * grid.dt()).unwrap_or(grid.nt());
    let v_h = v_h.with_grid(grid.clone())?;
    let mut result = TruncationResult {
        v_h: v_h.clone(),
        v_trunc: v_h.clone(),
        cover: None,
        local_averages: Vec::new(),
        zeroed_cylinders: Vec::new(),
        in_set: gs.in_set.clone(),
        lambda,
        p,
        gamma,
        first_level,
    };
    if gs.in_set.iter().all(|&b| b) {
        return Ok(result);
    }
    let cover = build_cover(&grid, &gs.in_set, metric)?;
    let space = grid.space();
    let vals = v_h.values();
    let weights: Vec<Vec<(usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if gs.in_set[i] {
                Vec::new()
            } else {
                cover.partition_at(i).into_iter().map(|(j, jet)| (j, jet.value)).collect()
            }
        })
        .collect();
    let averages: Vec<(f64, bool)> = (0..cover.len())
        .into_par_iter()
        .map(|j| {
            let c = &cover.cylinders[j];
            let q = c.scaled(0.75, gamma);
            let ball = space.ball_nodes(c.center, q.radius);
            let full_ball = crate::calculus::virtual_ball_count(space, c.center, q.radius) == ball.len();
            let inside = full_ball && ball.iter().all(|&n| reference[n]) && c.t - q.half_length() >= time_origin;
            if !inside {
                return (0.0, true);
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (k, n) in q.lattice_points(&grid) {
                let i = grid.flat(k, n);
                if let Some(&(_, w)) = weights[i].iter().find(|e| e.0 == j) {
                    den += w;
                    if grid.time(k) >= time_origin {
                        num += w * vals[i];
                    }
                }
            }
            (if den > 0.0 { num / den } else { 0.0 }, false)
        })
        .collect();
    let mut out = vals.to_vec();
    for (i, ws) in weights.iter().enumerate() {
        for &(j, w) in ws {
            out[i] -= w * (vals[i] - averages[j].0);
        }
    }
    result.v_trunc = GridFunction::from_values(grid.clone(), out)?;
    result.local_averages = averages.iter().map(|a| a.0).collect();
    result.zeroed_cylinders = averages.iter().enumerate().filter(|a| a.1 .1).map(|a| a.0).collect();
    result.cover = Some(cover);
    Ok(result)
}

/// Value, spatial gradient and time derivative of `v_{lambda,h}` at a point
/// of the three-quarter cylinder `i` covered by some half cylinder.
pub fn truncated_jet(tr: &TruncationResult, i: usize, x: [f64; 2], t: f64) -> (f64, [f64; 2], f64) {
    let cover = tr.cover.as_ref().expect("cover present");
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut d = 0.0;
    for (j, jet) in cover.partition_in(i, x, t) {
        let a = tr.local_averages[j];
        v += jet.value * a;
        g[0] += jet.grad[0] * a;
        g[1] += jet.grad[1] * a;
        d += jet.dt * a;
    }
    (v, g, d)
}

/// Frozen tolerances for [`verify_truncation_bounds`].
#[derive(Clone, Copy, Debug)]
pub struct TruncationBounds {
    pub sup: f64,
    pub gradient: f64,
    pub average_jump: f64,
    pub time_derivative: f64,
    pub product: f64,
    pub lp: f64,
}

/// Measure the bounds of the truncation as ratios, `rho` being half the
/// diameter of the domain. Sampled quantities use `samples` points per cylinder.
pub fn verify_truncation_bounds(
    tr: &TruncationResult,
    rho: f64,
    bounds: TruncationBounds,
    samples: usize,
    seed: u64,
) -> Vec<EstimateReport> {
    let lambda = tr.lambda;
    let grid = tr.v_h.grid();
    let space = grid.space();
    let cell = grid.cell_measure();
    let mut reports = Vec::new();
    let Some(cover) = tr.cover.as_ref() else {
        let names = ["sup", "gradient", "average_jump", "time_derivative", "product", "lp"];
        return names
            .iter()
            .map(|n| EstimateReport::new(&format!("truncation_{n}"), 0.0, 0.0, 0.0).flag_vacuous("good set is everything"))
            .collect();
    };
    let gamma = tr.gamma;
    let outside: Vec<usize> = (0..grid.len())
        .filter(|&i| !tr.in_set[i] && grid.unflat(i).0 >= tr.first_level)
        .collect();
    let sup = outside.iter().map(|&i| tr.v_trunc.values()[i].abs()).fold(0.0, f64::max);
    reports.push(EstimateReport::new("truncation_sup", sup, rho * lambda, bounds.sup));

    struct Local {
        grad: f64,
        dt_ratio: (f64, f64, f64),
    }
    let locals: Vec<Local> = (0..cover.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
            let c = cover.cylinders[i];
            let scale = c.radius.min(rho) * lambda / (gamma * c.radius * c.radius);
            let mut loc = Local { grad: 0.0, dt_ratio: (0.0, 0.0, scale) };
            for (x, t) in cover.sample_covered(i, samples, &mut rng) {
                if t < grid.time(tr.first_level.min(grid.nt() - 1)) {
                    continue;
                }
                let (_, g, d) = truncated_jet(tr, i, x, t);
                loc.grad = loc.grad.max(g[0].hypot(g[1]));
                if d.abs() / scale > loc.dt_ratio.0 {
                    loc.dt_ratio = (d.abs() / scale, d.abs(), scale);
                }
            }
            loc
        })
        .collect();
    let grad = locals.iter().map(|l| l.grad).fold(0.0, f64::max);
    reports.push(EstimateReport::new("truncation_gradient", grad, lambda, bounds.gradient));

    let mut jump = (0.0, 0.0, 1.0);
    for (i, nb) in cover.neighbors.iter().enumerate() {
        let ri = cover.cylinders[i].radius;
        for &j in nb {
            let d = (tr.local_averages[i] - tr.local_averages[j]).abs();
            let scale = ri.min(rho) * lambda;
            if d / scale > jump.0 {
                jump = (d / scale, d, scale);
            }
        }
    }
    reports.push(EstimateReport::new("truncation_average_jump", jump.1, jump.2, bounds.average_jump));

    let worst = locals.iter().map(|l| l.dt_ratio).fold((0.0, 0.0, 1.0), |a, b| if b.0 > a.0 { b } else { a });
    reports.push(EstimateReport::new("truncation_time_derivative", worst.1, worst.2, bounds.time_derivative));

    // the product is integrated by sampling each lattice cell off the set,
    // since at lattice points the partition is locally constant
    let in_omega: Vec<usize> = outside.iter().copied().filter(|&i| space.in_mask(grid.unflat(i).1)).collect();
    let spacing = space.spacing();
    let products: Vec<f64> = in_omega
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (k, n) = grid.unflat(i);
            let centre = space.position(n);
            let mut candidates: Vec<usize> = cover.covering(i).to_vec();
            for &j in cover.covering(i) {
                candidates.extend_from_slice(&cover.neighbors[j]);
            }
            candidates.sort_unstable();
            candidates.dedup();
            let draws = samples.max(1);
            let mut acc = 0.0;
            for _ in 0..draws {
                let mut x = centre;
                for (a, h) in spacing.iter().enumerate().take(space.dim()) {
                    x[a] += h * rng.random_range(-0.5..0.5);
                }
                let t = grid.time(k) + grid.dt() * rng.random_range(-0.5..0.5);
                let owner = candidates.iter().copied().find(|&j| {
                    cover.cylinders[j].scaled(0.75, gamma).contains(space, x, t) && cover.covered_in(j, x, t)
                });
                if let Some(j) = owner {
                    let (vt, _, dt) = truncated_jet(tr, j, x, t);
                    acc += (dt * (vt - interpolate(&tr.v_h, x, t))).abs();
                }
            }
            acc / draws as f64 * cell
        })
        .collect();
    let product: f64 = products.iter().sum();
    let mut lp_trunc = 0.0;
    let mut lp_orig = 0.0;
    for &i in &in_omega {
        let vt = tr.v_trunc.values()[i];
        let vh = tr.v_h.values()[i];
        lp_trunc += vt * vt * cell;
        lp_orig += vh * vh * cell;
    }
    let measure = outside.len() as f64 * cell;
    reports.push(
        EstimateReport::new("truncation_product", product, lambda.powf(tr.p) * measure, bounds.product)
            .with_meta("exponent", 1.0),
    );
    reports.push(EstimateReport::new("truncation_lp", lp_trunc, lp_orig, bounds.lp).with_meta("exponent", 2.0));
    reports
}

/// Multilinear interpolation in space and time, clamped to the grid.
fn interpolate(f: &GridFunction, x: [f64; 2], t: f64) -> f64 {
    let grid = f.grid();
    let space = grid.space();
    let [nx, ny] = space.shape();
    let o = space.origin();
    let h = space.spacing();
    let locate = |v: f64, n: usize| -> (usize, f64) {
        if n < 2 {
            return (0, 0.0);
        }
        let v = v.clamp(0.0, (n - 1) as f64);
        let i = (v.floor() as usize).min(n - 2);
        (i, v - i as f64)
    };
    let (i, a) = locate((x[0] - o[0]) / h[0], nx);
    let (j, b) = if space.dim() == 2 { locate((x[1] - o[1]) / h[1], ny) } else { (0, 0.0) };
    let (k, c) = locate((t - grid.t0()) / grid.dt(), grid.nt());
    let mut out = 0.0;
    for (dk, wk) in [(0, 1.0 - c), (1, c)] {
        for (di, wi) in [(0, 1.0 - a), (1, a)] {
            for (dj, wj) in [(0, 1.0 - b), (1, b)] {
                let w = wk * wi * wj;
                if w == 0.0 {
                    continue;
                }
                out += w * f.at(k + dk, space.index(i + di, j + dj));
            }
        }
    }
    out
}

/// Metric Lipschitz constant of `v_{lambda,h}` over the levels from time
/// zero on, divided by `lambda`, with the full certificate.
pub fn lipschitz_certify_truncation(tr: &TruncationResult, opts: CertifyOptions) -> Result<(f64, LipschitzCertificate)> {
    let grid = tr.v_trunc.grid();
    let region = Region::from_fn(grid, |k, _| k >= tr.first_level);
    let cert = lipschitz_certify(&tr.v_trunc, &region, tr.gamma, opts)?;
    Ok((cert.direct / tr.lambda, cert))
}
