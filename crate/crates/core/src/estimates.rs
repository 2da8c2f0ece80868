//! Verification pipelines for the global a priori bound, the time-slice
//! estimate, the intrinsic-cylinder estimates at the initial time, the
//! Gehring exponent estimator and the iteration lemma.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::calculus::{
    cylinder_mean, grad_norm, gradient_slice, interval_weights, neg_sobolev_norm, neg_sobolev_norm_iterative, steklov, ball_mean, EdgeField,
    NegSobolevOptions,
};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, ParabolicCylinder, SpaceTimeGrid};
use crate::report::EstimateReport;
use crate::solver::Nonlinearity;
use crate::truncation::{composite_g, time_derivative_flux, GoodSetInput, Variant};

/// Exponents attached to a deficit `beta` below the natural exponent `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentLadder {
    pub p: f64,
    pub n: usize,
    pub beta: f64,
    pub eps0: f64,
    /// Intermediate exponent of the truncation, `p - 2 beta`.
    pub q: f64,
    /// Scaling exponent of the higher integrability bound.
    pub d: f64,
    /// Reverse Holder exponent.
    pub q_bar: f64,
    /// `max(q, q_bar)`.
    pub q0: f64,
}

impl ExponentLadder {
    /// `p - beta`.
    pub fn energy(&self) -> f64 {
        self.p - self.beta
    }

    /// `(p - beta) / (p - 1)`, the exponent of the time-derivative terms.
    pub fn flux_exponent(&self) -> f64 {
        self.energy() / (self.p - 1.0)
    }

    /// `1 + beta / d`.
    pub fn gain(&self) -> f64 {
        1.0 + self.beta / self.d
    }
}

/// Scaling exponent `d`.
pub fn scaling_exponent(p: f64, n: usize, beta: f64) -> f64 {
    if p >= 2.0 {
        2.0 - beta
    } else {
        p - beta - (2.0 - p) * n as f64 / 2.0
    }
}

/// Reverse Holder exponent `q_bar`.
pub fn reverse_holder_exponent(p: f64, n: usize, beta: f64) -> f64 {
    let n = n as f64;
    if p - beta >= 2.0 {
        n * p * (p - beta) / (p * (n + 2.0) - beta * (2.0 + p - beta))
    } else {
        2.0 * n * p / (p * (n + 2.0) - 4.0 * beta)
    }
}

/// Build the ladder and check `1 < p - eps0 < q <= p - 2 beta < p - beta < p`.
pub fn ladder(p: f64, n: usize, beta: f64, eps0: f64) -> Result<ExponentLadder> {
    if !(n == 1 || n == 2) {
        return Err(Error::InvalidParams(format!("dimension {n} must be 1 or 2")));
    }
    let nf = n as f64;
    if !(p.is_finite() && p > 2.0 * nf / (nf + 2.0) && p > 1.0) {
        return Err(Error::InvalidParams(format!("p = {p} must exceed max(1, 2n/(n+2))")));
    }
    if !(beta > 0.0 && beta < 1.0f64.min(p - 1.0)) {
        return Err(Error::InvalidParams(format!("beta = {beta} must lie in (0, min(1, p - 1))")));
    }
    let q = p - 2.0 * beta;
    if !(eps0.is_finite() && 1.0 < p - eps0 && p - eps0 < q) {
        return Err(Error::InfeasibleLadder(format!(
            "no q with 1 < p - eps0 < q <= p - 2 beta for p={p}, beta={beta}, eps0={eps0}"
        )));
    }
    let d = scaling_exponent(p, n, beta);
    if d <= 0.0 {
        return Err(Error::InfeasibleLadder(format!("scaling exponent d = {d} is not positive")));
    }
    if p - beta <= 2.0 * nf / (nf + 2.0) {
        return Err(Error::InfeasibleLadder(format!("p - beta = {} is below 2n/(n+2)", p - beta)));
    }
    let q_bar = reverse_holder_exponent(p, n, beta);
    if !(q_bar > 0.0 && q_bar.is_finite()) {
        return Err(Error::InfeasibleLadder(format!("reverse Holder exponent {q_bar} is not positive")));
    }
    Ok(ExponentLadder { p, n, beta, eps0, q, d, q_bar, q0: q.max(q_bar) })
}

/// Gradients and time-derivative flux of one instance.
struct Fields {
    grid: Arc<SpaceTimeGrid>,
    grad_u: Vec<f64>,
    grad_w: Vec<f64>,
    flux: Vec<EdgeField>,
    h0: f64,
    p: f64,
}

impl Fields {
    fn new(u: &GridFunction, w: &GridFunction, nl: &Nonlinearity) -> Result<Self> {
        if !u.same_grid(w) {
            return Err(Error::DimsMismatch("u and w must share a grid".into()));
        }
        if nl.dim() != u.grid().space().dim() {
            return Err(Error::DimsMismatch("nonlinearity and grid dimensions differ".into()));
        }
        Ok(Fields {
            grid: u.grid().clone(),
            grad_u: grad_norm(u).into_values(),
            grad_w: grad_norm(w).into_values(),
            flux: time_derivative_flux(w)?,
            h0: nl.h0(),
            p: nl.p,
        })
    }

    fn in_mask(&self, flat: usize) -> bool {
        self.grid.space().in_mask(flat % self.grid.space().len())
    }

    /// Nodal density of `|w_vec|^s`.
    fn flux_power(&self, s: f64) -> Vec<f64> {
        let space = self.grid.space();
        let nodes = space.len();
        let mut out = vec![0.0; self.grid.len()];
        for (k, f) in self.flux.iter().enumerate() {
            out[k * nodes..(k + 1) * nodes].copy_from_slice(&f.nodal_power(space, s));
        }
        out
    }

    /// Mean over a cylinder of a density, zero off the mask and off the grid.
    fn mean(&self, q: &ParabolicCylinder, dens: impl Fn(usize) -> f64) -> (f64, f64) {
        cylinder_mean(&self.grid, q, |k, n| {
            if self.grid.space().in_mask(n) {
                dens(self.grid.flat(k, n))
            } else {
                0.0
            }
        })
    }

    /// Density of the intrinsic-level functional.
    fn level_density(&self, ladder: &ExponentLadder) -> Vec<f64> {
        let e = ladder.energy();
        let fp = self.flux_power(ladder.flux_exponent());
        (0..self.grid.len())
            .map(|i| {
                if !self.in_mask(i) {
                    return 0.0;
                }
                (self.grad_u[i] + self.h0).powf(e) + self.grad_w[i].powf(e) + fp[i]
            })
            .collect()
    }
}

fn check_ladder(nl: &Nonlinearity, ladder: &ExponentLadder) -> Result<()> {
    if (nl.p - ladder.p).abs() > 1e-12 || nl.dim() != ladder.n {
        return Err(Error::InvalidParams(format!(
            "ladder built for p={}, n={} used with p={}, n={}",
            ladder.p,
            ladder.n,
            nl.p,
            nl.dim()
        )));
    }
    Ok(())
}

/// Tuning of the intrinsic-level assumption.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntrinsicOptions {
    /// Largest accepted ratio on either side of the two-sided assumption.
    pub bound: f64,
    /// Multiplier of the level above which the good set must be nonempty; reported only.
    pub c_e: f64,
    /// Enlargement factor of the outer cylinder.
    pub enlargement: f64,
}

impl Default for IntrinsicOptions {
    fn default() -> Self {
        IntrinsicOptions { bound: 8.0, c_e: 1.0, enlargement: 16.0 }
    }
}

/// Intrinsic level `alpha0` and the cylinder `Q_{rho, rho^2 alpha0^(2-p)}`.
#[derive(Clone, Debug, Serialize)]
pub struct IntrinsicCylinderData {
    pub alpha0: f64,
    pub cylinder: ParabolicCylinder,
    pub enlargement: f64,
    /// `alpha0^(p-beta)` over the average on `Q`.
    pub lower_ratio: f64,
    /// Average on the enlarged cylinder over `alpha0^(p-beta)`.
    pub upper_ratio: f64,
    /// Whether the lower and upper inequalities hold within the bound.
    pub two_sided: [bool; 2],
    /// All data vanish; `alpha0` is the floor value 1.
    pub degenerate: bool,
    pub c_e: f64,
}

impl IntrinsicCylinderData {
    /// Cylinder at a prescribed level, without checking the assumption.
    pub fn unchecked(center: [f64; 2], t: f64, rho: f64, alpha0: f64, p: f64) -> Self {
        IntrinsicCylinderData {
            alpha0,
            cylinder: intrinsic_q(center, t, rho, alpha0, p),
            enlargement: 16.0,
            lower_ratio: f64::NAN,
            upper_ratio: f64::NAN,
            two_sided: [false, false],
            degenerate: false,
            c_e: 1.0,
        }
    }

    pub fn rho(&self) -> f64 {
        self.cylinder.radius
    }
}

fn intrinsic_q(center: [f64; 2], t: f64, rho: f64, alpha: f64, p: f64) -> ParabolicCylinder {
    ParabolicCylinder::with_half_length(center, t, rho, rho * rho * alpha.powf(2.0 - p))
}

fn level_fixed_point(f: &Fields, dens: &[f64], center: [f64; 2], t: f64, rho: f64, e: f64) -> Option<f64> {
    let gap = |a: f64| a.powf(e) - f.mean(&intrinsic_q(center, t, rho, a, f.p), |i| dens[i]).0;
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut steps = 0;
    while gap(lo) >= 0.0 {
        lo *= 0.5;
        steps += 1;
        if steps > 400 {
            return None;
        }
    }
    steps = 0;
    while gap(hi) <= 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 400 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Some((lo * hi).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn assess_level(
    f: &Fields,
    dens: &[f64],
    ladder: &ExponentLadder,
    center: [f64; 2],
    t: f64,
    rho: f64,
    alpha0: f64,
    opts: &IntrinsicOptions,
) -> Result<IntrinsicCylinderData> {
    if !(alpha0 > 0.0 && alpha0.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParams(format!("need alpha0 > 0 and rho > 0, got {alpha0}, {rho}")));
    }
    let e = ladder.energy();
    let q = intrinsic_q(center, t, rho, alpha0, f.p);
    let inner = f.mean(&q, |i| dens[i]).0;
    let outer = f.mean(&q.scaled(opts.enlargement), |i| dens[i]).0;
    let level = alpha0.powf(e);
    let lower_ratio = if inner > 0.0 { level / inner } else { f64::INFINITY };
    let upper_ratio = outer / level;
    if lower_ratio > opts.bound {
        return Err(Error::Alpha0AssumptionViolated { side: "lower", ratio: lower_ratio, bound: opts.bound });
    }
    if upper_ratio > opts.bound {
        return Err(Error::Alpha0AssumptionViolated { side: "upper", ratio: upper_ratio, bound: opts.bound });
    }
    Ok(IntrinsicCylinderData {
        alpha0,
        cylinder: q,
        enlargement: opts.enlargement,
        lower_ratio,
        upper_ratio,
        two_sided: [true, true],
        degenerate: false,
        c_e: opts.c_e,
    })
}

fn degenerate_level(center: [f64; 2], t: f64, rho: f64, p: f64, opts: &IntrinsicOptions) -> IntrinsicCylinderData {
    IntrinsicCylinderData {
        alpha0: 1.0,
        cylinder: intrinsic_q(center, t, rho, 1.0, p),
        enlargement: opts.enlargement,
        lower_ratio: 0.0,
        upper_ratio: 0.0,
        two_sided: [true, true],
        degenerate: true,
        c_e: opts.c_e,
    }
}

/// Solve `alpha0^(p-beta) = average over Q(alpha0)` and check the two-sided
/// assumption on `Q` and its enlargement.
#[allow(clippy::too_many_arguments)]
pub fn intrinsic_cylinder(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    ladder: &ExponentLadder,
    center: [f64; 2],
    t: f64,
    rho: f64,
    opts: &IntrinsicOptions,
) -> Result<IntrinsicCylinderData> {
    check_ladder(nl, ladder)?;
    let f = Fields::new(u, w, nl)?;
    let dens = f.level_density(ladder);
    if dens.iter().all(|&v| v == 0.0) {
        return Ok(degenerate_level(center, t, rho, nl.p, opts));
    }
    let alpha0 = level_fixed_point(&f, &dens, center, t, rho, ladder.energy())
        .ok_or_else(|| Error::InvalidParams("no intrinsic level: the cylinder misses every time level".into()))?;
    assess_level(&f, &dens, ladder, center, t, rho, alpha0, opts)
}

/// Check the two-sided assumption at a prescribed level.
#[allow(clippy::too_many_arguments)]
pub fn check_alpha0(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    ladder: &ExponentLadder,
    center: [f64; 2],
    t: f64,
    rho: f64,
    alpha0: f64,
    opts: &IntrinsicOptions,
) -> Result<IntrinsicCylinderData> {
    check_ladder(nl, ladder)?;
    let f = Fields::new(u, w, nl)?;
    let dens = f.level_density(ladder);
    assess_level(&f, &dens, ladder, center, t, rho, alpha0, opts)
}

/// Re-check a supplied cylinder; `None` when all data vanish.
fn recheck(
    f: &Fields,
    ladder: &ExponentLadder,
    cyl: &IntrinsicCylinderData,
    opts: &IntrinsicOptions,
) -> Result<Option<Vec<f64>>> {
    let dens = f.level_density(ladder);
    if dens.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let q = &cyl.cylinder;
    let expected = q.radius * q.radius * cyl.alpha0.powf(2.0 - f.p);
    if (q.half_length() - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(Error::InvalidParams("cylinder is not intrinsic to alpha0".into()));
    }
    assess_level(f, &dens, ladder, q.center, q.t, q.radius, cyl.alpha0, opts)?;
    Ok(Some(dens))
}

fn trapezoid(nt: usize, k: usize) -> f64 {
    if nt > 1 && (k == 0 || k == nt - 1) {
        0.5
    } else {
        1.0
    }
}

/// Integral over the space-time domain of a nodal density (trapezoid in
/// time), and the difference to the left-endpoint rule.
fn domain_integral(grid: &SpaceTimeGrid, dens: impl Fn(usize) -> f64) -> (f64, f64) {
    let space = grid.space();
    let nodes = space.len();
    let nt = grid.nt();
    let per_level: Vec<f64> = (0..nt)
        .map(|k| (0..nodes).filter(|&n| space.in_mask(n)).map(|n| dens(k * nodes + n)).sum::<f64>())
        .collect();
    let cm = grid.cell_measure();
    let trap: f64 = per_level.iter().enumerate().map(|(k, v)| trapezoid(nt, k) * v).sum::<f64>() * cm;
    let left: f64 = per_level.iter().take(nt.saturating_sub(1)).sum::<f64>() * cm;
    (trap, (trap - left).abs())
}

const NEG_NORM: NegSobolevOptions = NegSobolevOptions { tol: 1e-6, max_iter: 1000, stages: 6 };

/// Global bound of the `(p - beta)` gradient energy by the data.
pub fn verify_apriori(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    ladder: &ExponentLadder,
) -> Result<EstimateReport> {
    check_ladder(nl, ladder)?;
    if !u.same_grid(w) {
        return Err(Error::DimsMismatch("u and w must share a grid".into()));
    }
    let grid = u.grid();
    let space = grid.space();
    let e = ladder.energy();
    let s = ladder.flux_exponent();
    let gu = grad_norm(u);
    let gw = grad_norm(w);
    let h0 = nl.h0();
    let (lhs, defect) = domain_integral(grid, |i| gu.values()[i].powf(e));
    let (grad_w, _) = domain_integral(grid, |i| gw.values()[i].powf(e));
    let (lower, _) = domain_integral(grid, |_| h0.powf(e));
    let interior: Vec<bool> = (0..space.len()).map(|n| space.is_interior(n)).collect();
    let dt = grid.dt();
    let slices: Vec<f64> = (0..grid.nt().saturating_sub(1))
        .into_par_iter()
        .map(|k| {
            let d: Vec<f64> = w.slice(k + 1).iter().zip(w.slice(k)).map(|(a, b)| (a - b) / dt).collect();
            if d.iter().all(|&x| x == 0.0) || !interior.iter().any(|&b| b) {
                return Ok(0.0);
            }
            let rep = if s == 2.0 {
                neg_sobolev_norm(space, &d, s, &interior)?
            } else {
                neg_sobolev_norm_iterative(space, &d, s, &interior, NEG_NORM)?
            };
            Ok(rep.norm.powf(s))
        })
        .collect::<Result<_>>()?;
    let time_term: f64 = slices.iter().sum::<f64>() * dt;
    let rhs = grad_w + lower + time_term;
    Ok(EstimateReport::new("apriori", lhs, rhs, bounds::APRIORI)
        .with_defect(defect)
        .with_meta("p", nl.p)
        .with_meta("beta", ladder.beta)
        .with_meta("grad_w_term", grad_w)
        .with_meta("h0_term", lower)
        .with_meta("time_derivative_term", time_term)
        .with_meta("time_derivative_exponent", s))
}

/// Steklov average at level `k` of a series that is piecewise linear in time.
fn steklov_linear(series: &[f64], k: usize, len: f64) -> f64 {
    interval_weights(k as f64, k as f64 + len).into_iter().map(|(j, w)| w * series[j]).sum::<f64>() / len
}

/// Steklov average at level `k` of a series constant on each `[j, j+1)`.
fn steklov_constant(series: &[f64], k: usize, len: f64) -> f64 {
    let (a, b) = (k as f64, k as f64 + len);
    let mut acc = 0.0;
    let mut j = k;
    while (j as f64) < b && j < series.len() {
        let overlap = b.min(j as f64 + 1.0) - a.max(j as f64);
        if overlap > 0.0 {
            acc += overlap * series[j];
        }
        j += 1;
    }
    acc / len
}

/// Trapezoid integral over levels `k1..=k2` (level units times `dt`).
fn level_integral(vals: impl Fn(usize) -> f64, k1: usize, k2: usize, dt: f64) -> (f64, f64) {
    let mut trap = 0.0;
    let mut left = 0.0;
    for k in k1..k2 {
        let (a, b) = (vals(k), vals(k + 1));
        trap += 0.5 * (a + b) * dt;
        left += a * dt;
    }
    (trap, (trap - left).abs())
}

fn level_of(grid: &SpaceTimeGrid, t: f64) -> usize {
    (((t - grid.t0()) / grid.dt()).round().max(0.0) as usize).min(grid.nt() - 1)
}

/// Change of the Steklov-averaged, tested difference `u - w` between two
/// times, against the flux, data and cut-off terms that control it.
///
/// `phi` is a nodal spatial test function vanishing off the interior and
/// `varphi` one value per time level. `t1`, `t2` are snapped to levels.
#[allow(clippy::too_many_arguments)]
pub fn verify_time_slice_estimate(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    phi: &[f64],
    varphi: &[f64],
    t1: f64,
    t2: f64,
    h: f64,
) -> Result<EstimateReport> {
    let f = Fields::new(u, w, nl)?;
    let grid = f.grid.clone();
    let space = grid.space();
    let nodes = space.len();
    if phi.len() != nodes || varphi.len() != grid.nt() {
        return Err(Error::DimsMismatch("test functions do not match the grid".into()));
    }
    if (0..nodes).any(|n| phi[n] != 0.0 && !space.is_interior(n)) {
        return Err(Error::InvalidParams("spatial test function must vanish off the interior".into()));
    }
    let dt = grid.dt();
    let (k1, k2) = (level_of(&grid, t1), level_of(&grid, t2));
    let len = h / dt;
    if k1 >= k2 || k2 as f64 + len > (grid.nt() - 1) as f64 - 1e-9 {
        return Err(Error::InvalidParams(format!(
            "need t1 < t2 and t2 + h inside the grid, got t1={t1}, t2={t2}, h={h}"
        )));
    }
    let vol = space.cell_volume();
    let v = u.sub(w);
    let vh = steklov(&v, h)?;
    let tested = |k: usize| varphi[k] * vol * (0..nodes).map(|n| vh.at(k, n) * phi[n]).sum::<f64>();
    let lhs = (tested(k2) - tested(k1)).abs();

    let gphi = gradient_slice(space, phi);
    let grad_phi_max = gphi.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max);
    let phi_max = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let range = k1..=k2;
    let varphi_max = range.clone().map(|k| varphi[k].abs()).fold(0.0, f64::max);
    let dvarphi_max = (k1..k2).map(|k| ((varphi[k + 1] - varphi[k]) / dt).abs()).fold(0.0, f64::max);

    let growth: Vec<f64> = (0..grid.nt())
        .map(|k| {
            vol * (0..nodes)
                .filter(|&n| space.in_mask(n))
                .map(|n| (f.grad_u[k * nodes + n] + f.h0).powf(nl.p - 1.0))
                .sum::<f64>()
        })
        .collect();
    let constant = nl.lambda1.max(1.0) * 2f64.powf(2.0 - nl.p).max(1.0);
    let (growth_int, d1) = level_integral(|k| steklov_linear(&growth, k, len), k1, k2, dt);
    let flux_term = constant * grad_phi_max * varphi_max * growth_int;

    let pairing: Vec<f64> = f
        .flux
        .iter()
        .map(|psi| {
            vol * psi
                .edges
                .iter()
                .zip(&psi.values)
                .map(|(e, &val)| val * (phi[e.head] - phi[e.tail]) / space.spacing()[e.axis])
                .sum::<f64>()
        })
        .collect();
    let (data_int, d2) = level_integral(|k| steklov_constant(&pairing, k, len).abs(), k1, k2, dt);
    let data_term = varphi_max * data_int;

    let mass: Vec<f64> = (0..grid.nt())
        .map(|k| vol * (0..nodes).filter(|&n| space.in_mask(n)).map(|n| vh.at(k, n).abs()).sum::<f64>())
        .collect();
    let (mass_int, d3) = level_integral(|k| mass[k], k1, k2, dt);
    let cutoff_term = phi_max * dvarphi_max * mass_int;

    let rhs = flux_term + data_term + cutoff_term;
    Ok(EstimateReport::new("time-slice", lhs, rhs, bounds::TIME_SLICE)
        .with_defect(constant * grad_phi_max * varphi_max * d1 + varphi_max * d2 + phi_max * dvarphi_max * d3)
        .with_meta("flux_term", flux_term)
        .with_meta("data_term", data_term)
        .with_meta("cutoff_term", cutoff_term)
        .with_meta("t1", grid.time(k1))
        .with_meta("t2", grid.time(k2))
        .with_meta("h", h))
}

/// Energy estimate on an intrinsic cylinder crossing the initial time.
pub fn verify_caccioppoli(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    cyl: &IntrinsicCylinderData,
    ladder: &ExponentLadder,
    opts: &IntrinsicOptions,
) -> Result<EstimateReport> {
    check_ladder(nl, ladder)?;
    let f = Fields::new(u, w, nl)?;
    let opts = IntrinsicOptions { enlargement: 16.0, ..*opts };
    let q = cyl.cylinder;
    let base = f.grid.clone();
    let s = q.half_length();
    if !(q.t - s <= base.t0() && base.t0() < q.t + s) {
        return Err(Error::CylinderDoesNotCrossInitialTime);
    }
    let Some(_) = recheck(&f, ladder, cyl, &opts)? else {
        return Ok(EstimateReport::new("caccioppoli", 0.0, 0.0, bounds::CACCIOPPOLI).flag_vacuous("all data vanish"));
    };
    let e = ladder.energy();
    let beta = ladder.beta;
    let p = nl.p;
    let a0 = cyl.alpha0;
    let rho = q.radius;
    let h0 = f.h0;
    let h0_field = (h0 > 0.0).then(|| GridFunction::from_fn(base.clone(), |_, _| h0));
    let g = composite_g(&GoodSetInput {
        u,
        w,
        h0: h0_field.as_ref(),
        p,
        q: ladder.q,
        eps0: ladder.eps0,
        beta,
        variant: Variant::InitialBoundary,
        cylinder: Some(q),
    })?;
    let ext = g.grid().clone();
    let pad = ((base.t0() - ext.t0()) / base.dt()).round() as usize;
    let space = base.space();
    let nodes = space.len();
    let v = u.sub(w);

    let mut sup = 0.0f64;
    for k in base.slices_in(q.t - s, q.t + s) {
        let m = ball_mean(space, q.center, rho, |n| {
            if !space.in_mask(n) {
                return 0.0;
            }
            let big = g.values()[(k + pad) * nodes + n].max(a0);
            big.powf(-beta) * (v.at(k, n) / rho).powi(2)
        });
        sup = sup.max(a0.powf(p - 2.0) * m);
    }
    let lhs = a0.powf(e) + sup;

    let big = q.scaled(8.0);
    let fp = f.flux_power(ladder.flux_exponent());
    let (osc, d1) = f.mean(&big, |i| {
        let r = v.values()[i].abs() / rho;
        a0.powf(p - 2.0 - beta) * r * r + r.powf(e)
    });
    let (lower, _) = f.mean(&big, |_| h0.powf(e));
    let (grad_w, d2) = f.mean(&big, |i| f.grad_w[i].powf(e));
    let (time_term, _) = f.mean(&big, |i| fp[i]);
    let rhs = osc + lower + grad_w + time_term;
    let good_level = opts.c_e * a0;
    let good = g.values().iter().filter(|&&x| x <= good_level).count();
    Ok(EstimateReport::new("caccioppoli", lhs, rhs, bounds::CACCIOPPOLI)
        .with_defect(d1 + d2)
        .with_meta("alpha0", a0)
        .with_meta("sup_term", sup)
        .with_meta("oscillation_term", osc)
        .with_meta("h0_term", lower)
        .with_meta("grad_w_term", grad_w)
        .with_meta("time_derivative_term", time_term)
        .with_meta("c_e", opts.c_e)
        .with_meta("good_set_points_at_c_e_alpha0", good))
}

/// Reverse Holder inequality for the gradient on `16 Q`, with the
/// assumption checked on `Q` and `256 Q`.
pub fn verify_reverse_holder(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    cyl: &IntrinsicCylinderData,
    ladder: &ExponentLadder,
    opts: &IntrinsicOptions,
) -> Result<EstimateReport> {
    check_ladder(nl, ladder)?;
    let f = Fields::new(u, w, nl)?;
    let opts = IntrinsicOptions { enlargement: 256.0, ..*opts };
    let Some(_) = recheck(&f, ladder, cyl, &opts)? else {
        return Ok(EstimateReport::new("reverse-holder", 0.0, 0.0, bounds::REVERSE_HOLDER)
            .flag_vacuous("all data vanish; alpha0 at its floor 1"));
    };
    let e = ladder.energy();
    let q0 = ladder.q0;
    let big = cyl.cylinder.scaled(16.0);
    let flux_abs = f.flux_power(1.0);
    let xi = |i: usize| f.h0 + f.grad_w[i] + flux_abs[i].powf(1.0 / (nl.p - 1.0));
    let (low, d1) = f.mean(&big, |i| f.grad_u[i].powf(q0));
    let (top, _) = f.mean(&big, |i| f.grad_u[i].powf(e));
    let (data, d2) = f.mean(&big, |i| xi(i).powf(e));
    let lhs = cyl.alpha0.powf(e);
    let rhs = low.powf(e / q0) + data;
    let rhs_energy = top + data;
    Ok(EstimateReport::new("reverse-holder", lhs, rhs, bounds::REVERSE_HOLDER)
        .with_defect(d1 + d2)
        .with_meta("alpha0", cyl.alpha0)
        .with_meta("q0", q0)
        .with_meta("gradient_term", low.powf(e / q0))
        .with_meta("data_term", data)
        .with_meta("rhs_at_energy_exponent", rhs_energy)
        .with_meta("jensen_ordered", rhs <= rhs_energy * (1.0 + 1e-12)))
}

/// Gradient in `L^p` on `Q1` from the `(p - beta)` energy on `Q2`.
pub fn verify_higher_integrability(
    u: &GridFunction,
    w: &GridFunction,
    nl: &Nonlinearity,
    q1: &ParabolicCylinder,
    q2: &ParabolicCylinder,
    ladder: &ExponentLadder,
) -> Result<EstimateReport> {
    check_ladder(nl, ladder)?;
    let space_dist = u.grid().space().distance(q1.center, q2.center);
    if !(q1.radius + space_dist <= q2.radius * (1.0 + 1e-12)
        && (q1.t - q2.t).abs() + q1.half_length() <= q2.half_length() * (1.0 + 1e-12))
    {
        return Err(Error::InvalidParams("inner cylinder must lie in the outer one".into()));
    }
    let f = Fields::new(u, w, nl)?;
    let p = nl.p;
    let e = ladder.energy();
    let gain = ladder.gain();
    let h0 = f.h0;
    let (lhs, defect) = f.mean(q1, |i| f.grad_u[i].powf(p));
    let fe = f.flux_power(ladder.flux_exponent());
    let fp = f.flux_power(p / (p - 1.0));
    let (energy, _) = f.mean(q2, |i| (f.grad_u[i] + h0).powf(e));
    let (area, _) = f.mean(q2, |_| 1.0 + h0.powf(p));
    let (gw_e, _) = f.mean(q2, |i| f.grad_w[i].powf(e));
    let (flux_e, _) = f.mean(q2, |i| fe[i]);
    let (gw_p, _) = f.mean(q2, |i| f.grad_w[i].powf(p));
    let (flux_p, _) = f.mean(q2, |i| fp[i]);
    let rhs = energy.powf(gain) + area + gw_e.powf(gain) + flux_e.powf(gain) + gw_p + flux_p;
    let t0 = u.grid().t0();
    Ok(EstimateReport::new("higher-integrability", lhs, rhs, bounds::HIGHER_INTEGRABILITY)
        .with_defect(defect)
        .with_meta("energy_term", energy.powf(gain))
        .with_meta("area_term", area)
        .with_meta("gain", gain)
        .with_meta("crosses_initial_time", (q1.t - t0).abs() < q1.half_length()))
}

/// Tuning of [`gehring_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GehringOptions {
    /// Largest tested improvement.
    pub delta_cap: f64,
    /// Number of rungs up to the cap.
    pub steps: usize,
    /// Smallest count of lattice points above a threshold used in the tail fit.
    pub min_count: usize,
    /// Largest count used in the tail fit, as a fraction of the region.
    pub max_fraction: f64,
    /// Number of thresholds in the tail fit.
    pub thresholds: usize,
    /// Seeds of the stopping-time diagnostic (0 disables it).
    pub seeds: usize,
}

impl Default for GehringOptions {
    fn default() -> Self {
        GehringOptions { delta_cap: 3.0, steps: 300, min_count: 64, max_fraction: 0.05, thresholds: 24, seeds: 0 }
    }
}

/// Power-law fit `#{f > lambda} ~ C lambda^(-kappa)` of the upper tail.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailFit {
    /// Decay exponent; infinite when the tail is empty.
    pub kappa: f64,
    /// `log C`.
    pub log_scale: f64,
    pub points: usize,
    pub top: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GehringRow {
    pub delta: f64,
    pub exponent: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Stopping radius of one seed: the largest dyadic radius whose average
/// still reaches `lambda0^(p-beta)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StoppingRadius {
    pub level: usize,
    pub node: usize,
    pub r_z: f64,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GehringDiagnostics {
    /// Power of the distance weight.
    pub alpha: f64,
    pub alpha0: f64,
    pub lambda0: f64,
    pub b: f64,
    pub tail: TailFit,
    pub rows: Vec<GehringRow>,
    pub stopping: Vec<StoppingRadius>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GehringEstimate {
    /// Largest improvement of the passing prefix of the ladder.
    pub delta: f64,
    /// `p - beta + delta`.
    pub critical_exponent: f64,
    pub diagnostics: GehringDiagnostics,
}

fn fit_tail(values: &[f64], opts: &GehringOptions) -> TailFit {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let top = v.first().copied().unwrap_or(0.0);
    let empty = TailFit { kappa: f64::INFINITY, log_scale: 0.0, points: 0, top };
    let hi_rank = opts.min_count;
    let lo_rank = (opts.max_fraction * v.len() as f64) as usize;
    if lo_rank <= hi_rank || lo_rank >= v.len() {
        return empty;
    }
    let (hi, lo) = (v[hi_rank], v[lo_rank]);
    if !(lo > 0.0 && hi > lo) {
        return empty;
    }
    let m = opts.thresholds.max(3);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..m {
        let lam = lo * (hi / lo).powf(j as f64 / (m - 1) as f64);
        let count = v.partition_point(|&x| x > lam);
        if count == 0 {
            continue;
        }
        xs.push(lam.ln());
        ys.push((count as f64).ln());
    }
    if xs.len() < 3 {
        return empty;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return empty;
    }
    TailFit { kappa: -slope, log_scale: my - slope * mx, points: xs.len(), top }
}

/// Largest improvement `delta` of the integrability exponent of `f` on the
/// region that the reverse Holder machinery sustains.
///
/// The weight is `f d^alpha`, `d` the parabolic distance to the boundary of
/// the region. Integrability of rung `p - beta + delta` is decided by a
/// power-law fit of the upper tail of `f`; the integral bound compares the
/// tail-extrapolated integral with `b (alpha0^delta int f^(p-beta) + int g^r)`.
pub fn gehring_estimate(
    f: &GridFunction,
    g_majorant: &GridFunction,
    ladder: &ExponentLadder,
    region: &ParabolicCylinder,
    opts: &GehringOptions,
) -> Result<GehringEstimate> {
    if !f.same_grid(g_majorant) {
        return Err(Error::DimsMismatch("f and the majorant must share a grid".into()));
    }
    let grid = f.grid();
    let space = grid.space();
    if space.dim() != ladder.n {
        return Err(Error::DimsMismatch("ladder dimension differs from the grid".into()));
    }
    if opts.steps == 0 || opts.delta_cap <= 0.0 {
        return Err(Error::InvalidParams("empty improvement ladder".into()));
    }
    let pts: Vec<(usize, usize)> =
        region.lattice_points(grid).into_iter().filter(|&(_, n)| space.in_mask(n)).collect();
    if pts.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let e = ladder.energy();
    let n = ladder.n as f64;
    let s = region.half_length();
    let alpha = (n + 2.0) / ladder.d;
    let dist = |k: usize, node: usize| {
        let dx = region.radius - space.distance(space.position(node), region.center);
        let dt = s - (grid.time(k) - region.t).abs();
        dx.min(dt.max(0.0).sqrt()).max(0.0)
    };
    let psi: Vec<f64> = pts.iter().map(|&(k, node)| f.at(k, node).abs()).collect();
    let weight: Vec<f64> = pts.iter().map(|&(k, node)| dist(k, node).powf(alpha)).collect();
    let gmaj: Vec<f64> = pts.iter().map(|&(k, node)| g_majorant.at(k, node).abs()).collect();
    let count = pts.len() as f64;
    let alpha0 = (psi.iter().map(|x| x.powf(e)).sum::<f64>() / count + 1.0).powf(1.0 / ladder.d);
    let b = 2f64.powf(10.0 * (n + 2.0));
    let lambda0 = b.powf(1.0 / ladder.d) * alpha0;
    let tail = fit_tail(&psi, opts);
    let cm = grid.cell_measure();
    let wmax = weight.iter().fold(0.0f64, |m, &x| m.max(x));
    let sum_pow = |r: f64, vals: &dyn Fn(usize) -> f64| cm * (0..psi.len()).map(|i| vals(i).powf(r)).sum::<f64>();
    let base_energy = sum_pow(e, &|i| weight[i] * psi[i]);

    let mut rows = Vec::with_capacity(opts.steps);
    for i in 1..=opts.steps {
        let delta = opts.delta_cap * i as f64 / opts.steps as f64;
        let r = e + delta;
        let integrable = r < tail.kappa;
        let discrete = sum_pow(r, &|i| weight[i] * psi[i]);
        let extrapolated = if tail.kappa.is_finite() && integrable {
            cm * wmax.powf(r) * r * tail.log_scale.exp() * tail.top.powf(r - tail.kappa) / (tail.kappa - r)
        } else if integrable {
            0.0
        } else {
            f64::INFINITY
        };
        let lhs = discrete + extrapolated;
        let rhs = b * (alpha0.powf(delta) * base_energy + sum_pow(r, &|i| weight[i] * gmaj[i]));
        rows.push(GehringRow { delta, exponent: r, lhs, rhs, pass: integrable && lhs <= rhs });
    }
    let delta = rows.iter().take_while(|r| r.pass).last().map_or(0.0, |r| r.delta);

    let stopping = if opts.seeds > 0 {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &c| (weight[c] * psi[c]).total_cmp(&(weight[a] * psi[a])));
        order.truncate(opts.seeds);
        let p = ladder.p;
        let weighted = |k: usize, node: usize| dist(k, node).powf(alpha) * f.at(k, node).abs();
        order
            .into_par_iter()
            .map(|i| {
                let (k, node) = pts[i];
                let r_z = dist(k, node);
                let x = space.position(node);
                let t = grid.time(k);
                let radius = (0..=9).map(|j| r_z / 2f64.powi(9 - j)).filter(|&rr| rr > 0.0).rev().find(|&rr| {
                    let q = if p >= 2.0 {
                        ParabolicCylinder::new(x, t, rr, lambda0.powf(2.0 - p))
                    } else {
                        ParabolicCylinder::with_half_length(x, t, lambda0.powf((p - 2.0) / 2.0) * rr, rr * rr)
                    };
                    let inside = |k: usize, node: usize| if region.contains(space, space.position(node), grid.time(k)) { 1.0 } else { 0.0 };
                    cylinder_mean(grid, &q, |k, node| inside(k, node) * weighted(k, node).powf(e)).0
                        >= lambda0.powf(e)
                });
                StoppingRadius { level: k, node, r_z, radius }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(GehringEstimate {
        delta,
        critical_exponent: e + delta,
        diagnostics: GehringDiagnostics { alpha, alpha0, lambda0, b, tail, rows, stopping },
    })
}

/// Result of [`iteration_bound`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationBound {
    pub bound: f64,
    /// `C(alpha, delta)`.
    pub constant: f64,
    /// Geometric ratio of the radii used by the constant.
    pub tau: f64,
    pub value_at_r: f64,
    /// `f(r) <= bound`.
    pub holds: bool,
}

fn iteration_constant(delta: f64, alpha: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (1.0, 0.0);
    }
    let c = |tau: f64| {
        let denom = 1.0 - delta * tau.powf(-alpha);
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            ((1.0 - tau).powf(-alpha) / denom).max(1.0 / (1.0 - delta))
        }
    };
    let lo = delta.powf(1.0 / alpha);
    let mut best = (f64::INFINITY, 0.5);
    for i in 1..1000 {
        let tau = lo + (1.0 - lo) * i as f64 / 1000.0;
        let v = c(tau);
        if v < best.0 {
            best = (v, tau);
        }
    }
    let step = (1.0 - lo) / 1000.0;
    let (mut a, mut b) = ((best.1 - step).max(lo + 1e-15), (best.1 + step).min(1.0 - 1e-15));
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if c(m1) < c(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let tau = 0.5 * (a + b);
    let v = c(tau);
    if v < best.0 {
        (v, tau)
    } else {
        best
    }
}

/// Bound `f(r) <= C (A (rho - r)^(-alpha) + B)` for a sampled function on
/// `[r, rho)` satisfying `f(t1) <= delta f(t2) + A (t2 - t1)^(-alpha) + B`.
///
/// `samples` are `(t, f(t))` sorted by `t`; `r` is the first sample.
pub fn iteration_bound(samples: &[(f64, f64)], rho: f64, delta: f64, a: f64, b: f64, alpha: f64) -> Result<IterationBound> {
    if !(0.0..1.0).contains(&delta) || !(alpha > 0.0) || a < 0.0 || b < 0.0 {
        return Err(Error::InvalidParams(format!(
            "need 0 <= delta < 1, alpha > 0, A, B >= 0; got {delta}, {alpha}, {a}, {b}"
        )));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0)
        || samples.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite()))
        || samples.last().is_some_and(|s| s.0 >= rho)
    {
        return Err(Error::InvalidParams("samples must be increasing in t, below rho, with finite f >= 0".into()));
    }
    for (i, &(t1, f1)) in samples.iter().enumerate() {
        for &(t2, f2) in &samples[i + 1..] {
            let allowed = delta * f2 + a * (t2 - t1).powf(-alpha) + b;
            if f1 > allowed * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::HypothesisViolatedOnSamples { t1, t2 });
            }
        }
    }
    let (constant, tau) = iteration_constant(delta, alpha);
    let r = samples[0].0;
    let bound = constant * (a * (rho - r).powf(-alpha) + b);
    let value_at_r = samples[0].1;
    Ok(IterationBound { bound, constant, tau, value_at_r, holds: value_at_r <= bound * (1.0 + 1e-12) })
}
