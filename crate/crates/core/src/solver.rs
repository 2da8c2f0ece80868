//! Implicit solver for `u_t - div A(x, t, grad u) = 0` with Dirichlet data,
//! weak-form residual checks and the mollify-and-solve approximation loop.
//!
//! Space is discretised by linear elements with a lumped mass matrix, time by
//! implicit Euler. Each step runs a damped Newton iteration with sparse
//! Cholesky solves.

use std::fmt;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::interval_weights;
use crate::error::{Error, Result};
use crate::fem::{elements, lumped_mass, Element};
use crate::grid::{GridFunction, SpaceTimeGrid, SpatialDomain};
use crate::linalg::Triplets;

/// User supplied vector field `(x, t, zeta) -> A(x, t, zeta)`.
pub type FluxFn = Arc<dyn Fn([f64; 2], f64, [f64; 2]) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
enum Flux {
    PLaplace,
    Regularized { eps: f64 },
    User(FluxFn),
}

/// Vector field `A` together with its structure constants.
///
/// `h1` and `h2` are the constant perturbations in
/// `<A, zeta> >= lambda0 |zeta|^p - h1` and `|A| <= lambda1 |zeta|^(p-1) + h2`.
#[derive(Clone)]
pub struct Nonlinearity {
    pub p: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub h1: f64,
    pub h2: f64,
    dim: usize,
    flux: Flux,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("variant", &self.variant())
            .field("p", &self.p)
            .field("lambda0", &self.lambda0)
            .field("lambda1", &self.lambda1)
            .field("h1", &self.h1)
            .field("h2", &self.h2)
            .field("dim", &self.dim)
            .finish()
    }
}

fn check_p(p: f64, dim: usize) -> Result<()> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidParams(format!("dimension {dim} not in {{1, 2}}")));
    }
    let lower = 2.0 * dim as f64 / (dim as f64 + 2.0);
    if !(p.is_finite() && p > lower && p > 1.0) {
        return Err(Error::InvalidParams(format!(
            "p = {p} must exceed max(1, 2n/(n+2)) = {}",
            lower.max(1.0)
        )));
    }
    Ok(())
}

fn monotonicity_constant(p: f64) -> f64 {
    if p < 2.0 {
        p - 1.0
    } else {
        2f64.powf(-0.5 * p)
    }
}

fn power_flux(z: [f64; 2], p: f64, eps: f64) -> [f64; 2] {
    let s = z[0] * z[0] + z[1] * z[1];
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let phi = (eps * eps + s).powf(0.5 * (p - 2.0));
    [phi * z[0], phi * z[1]]
}

fn power_jacobian(z: [f64; 2], p: f64, eps: f64) -> [[f64; 2]; 2] {
    let r = eps * eps + z[0] * z[0] + z[1] * z[1];
    if r == 0.0 {
        let d = if p == 2.0 { 1.0 } else { 0.0 };
        return [[d, 0.0], [0.0, d]];
    }
    let phi = r.powf(0.5 * (p - 2.0));
    let c = (p - 2.0) * phi / r;
    [
        [phi + c * z[0] * z[0], c * z[0] * z[1]],
        [c * z[1] * z[0], phi + c * z[1] * z[1]],
    ]
}

impl Nonlinearity {
    /// `A(zeta) = |zeta|^(p-2) zeta`.
    pub fn p_laplace(p: f64, dim: usize) -> Result<Self> {
        check_p(p, dim)?;
        Ok(Nonlinearity {
            p,
            lambda0: monotonicity_constant(p).min(1.0),
            lambda1: 1.0,
            h1: 0.0,
            h2: 0.0,
            dim,
            flux: Flux::PLaplace,
        })
    }

    /// `A(zeta) = (eps^2 + |zeta|^2)^((p-2)/2) zeta`.
    pub fn regularized(p: f64, eps: f64, dim: usize) -> Result<Self> {
        check_p(p, dim)?;
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParams(format!("eps = {eps} must be non-negative")));
        }
        let shift = 2f64.powf(0.5 * (p - 2.0));
        let mono = monotonicity_constant(p);
        let (lambda0, lambda1, h1, h2) = if p >= 2.0 {
            (mono.min(1.0), shift, 0.0, shift * eps.powf(p - 1.0))
        } else {
            (mono.min(shift), 1.0, shift * eps.powf(p), 0.0)
        };
        Ok(Nonlinearity { p, lambda0, lambda1, h1, h2, dim, flux: Flux::Regularized { eps } })
    }

    /// Arbitrary field with declared constants; the Newton Jacobian is taken
    /// by central differences.
    pub fn user(
        p: f64,
        dim: usize,
        constants: [f64; 4],
        field: FluxFn,
    ) -> Result<Self> {
        check_p(p, dim)?;
        let [lambda0, lambda1, h1, h2] = constants;
        if !(lambda0 > 0.0 && lambda1 >= lambda0 && h1 >= 0.0 && h2 >= 0.0) {
            return Err(Error::InvalidParams(
                "need 0 < lambda0 <= lambda1 and non-negative perturbations".into(),
            ));
        }
        Ok(Nonlinearity { p, lambda0, lambda1, h1, h2, dim, flux: Flux::User(field) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Combined lower-order size `(h1 + h2^(p/(p-1)))^(1/p)`.
    pub fn h0(&self) -> f64 {
        (self.h1 + self.h2.powf(self.p / (self.p - 1.0))).powf(1.0 / self.p)
    }

    pub fn variant(&self) -> &'static str {
        match self.flux {
            Flux::PLaplace => "p_laplace",
            Flux::Regularized { .. } => "regularized",
            Flux::User(_) => "user",
        }
    }

    /// Built-in field whose Jacobian degenerates at `zeta = 0`.
    fn degenerate(&self) -> bool {
        matches!(self.flux, Flux::PLaplace) && self.p < 2.0
    }

    pub fn eval(&self, x: [f64; 2], t: f64, zeta: [f64; 2]) -> [f64; 2] {
        self.eval_eps(x, t, zeta, 0.0)
    }

    /// Field with the p-Laplacian replaced by its `eps` regularisation.
    fn eval_eps(&self, x: [f64; 2], t: f64, zeta: [f64; 2], eps: f64) -> [f64; 2] {
        match &self.flux {
            Flux::PLaplace => power_flux(zeta, self.p, eps),
            Flux::Regularized { eps } => power_flux(zeta, self.p, *eps),
            Flux::User(f) => f(x, t, zeta),
        }
    }

    fn jacobian_eps(&self, x: [f64; 2], t: f64, zeta: [f64; 2], eps: f64) -> [[f64; 2]; 2] {
        match &self.flux {
            Flux::PLaplace => power_jacobian(zeta, self.p, eps),
            Flux::Regularized { eps } => power_jacobian(zeta, self.p, *eps),
            Flux::User(f) => {
                let mut jac = [[0.0; 2]; 2];
                for b in 0..self.dim {
                    let step = 1e-6 * (1.0 + zeta[b].abs());
                    let mut hi = zeta;
                    let mut lo = zeta;
                    hi[b] += step;
                    lo[b] -= step;
                    let (fh, fl) = (f(x, t, hi), f(x, t, lo));
                    for a in 0..self.dim {
                        jac[a][b] = (fh[a] - fl[a]) / (2.0 * step);
                    }
                }
                let off = 0.5 * (jac[0][1] + jac[1][0]);
                jac[0][1] = off;
                jac[1][0] = off;
                jac
            }
        }
    }

    /// Added to `|eta|^2 + |zeta|^2` in the monotonicity weight: `eps^2` for the
    /// regularised field below `p = 2`, where the unshifted weight is unbounded.
    pub fn monotonicity_shift(&self) -> f64 {
        match self.flux {
            Flux::Regularized { eps } if self.p < 2.0 => eps * eps,
            _ => 0.0,
        }
    }

    /// Sample coercivity, growth and monotonicity on random arguments.
    pub fn check_structure(&self, samples: usize, seed: u64) -> StructureCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim;
        let draw = |rng: &mut ChaCha8Rng| -> [f64; 2] {
            let mag = 10f64.powf(rng.random_range(-3.0..3.0));
            let mut z = [0.0; 2];
            for c in z.iter_mut().take(dim) {
                *c = rng.random_range(-1.0..1.0) * mag;
            }
            z
        };
        let mut out = StructureCheck { samples, ..Default::default() };
        let p = self.p;
        for _ in 0..samples {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let t = rng.random_range(0.0..1.0);
            let z = draw(&mut rng);
            let eta = if rng.random::<f64>() < 0.25 {
                let s = rng.random_range(0.5..1.5);
                [-s * z[0], -s * z[1]]
            } else {
                draw(&mut rng)
            };
            let nz = norm2(z);
            let a = self.eval(x, t, z);
            let coercive = dot2(a, z) - (self.lambda0 * nz.powf(p) - self.h1);
            let growth = self.lambda1 * nz.powf(p - 1.0) + self.h2 - norm2(a);
            let b = self.eval(x, t, eta);
            let d = [eta[0] - z[0], eta[1] - z[1]];
            let weight = (self.monotonicity_shift() + dot2(eta, eta) + dot2(z, z)).powf(0.5 * (p - 2.0)) * dot2(d, d);
            let mono = dot2([b[0] - a[0], b[1] - a[1]], d) - self.lambda0 * weight;
            let tol = |scale: f64| 1e-10 * scale.abs().max(1e-300);
            if coercive < -tol(dot2(a, z).abs() + self.lambda0 * nz.powf(p)) {
                out.coercivity_failures += 1;
            }
            if growth < -tol(norm2(a)) {
                out.growth_failures += 1;
            }
            if mono < -tol(self.lambda0 * weight) {
                out.monotonicity_failures += 1;
            }
        }
        out
    }
}

/// Counts of sampled structure violations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StructureCheck {
    pub samples: usize,
    pub coercivity_failures: usize,
    pub growth_failures: usize,
    pub monotonicity_failures: usize,
}

impl StructureCheck {
    pub fn holds(&self) -> bool {
        self.coercivity_failures == 0 && self.growth_failures == 0 && self.monotonicity_failures == 0
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm2(a: [f64; 2]) -> f64 {
    dot2(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    ImplicitEuler,
}

/// Newton and data-compatibility settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Per-step tolerance on the mass-scaled residual, relative to `1 + |u_old| / dt`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Regularisation kept in the final Newton stage when the field is degenerate.
    pub regularization_eps: f64,
    /// Allowed mismatch between initial and lateral data on the boundary.
    pub compat_tol: f64,
    pub theta_scheme: TimeScheme,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            newton_tol: 1e-10,
            max_newton: 50,
            regularization_eps: 1e-6,
            compat_tol: 1e-8,
            theta_scheme: TimeScheme::ImplicitEuler,
        }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidParams("newton_tol must be positive".into()));
        }
        if !(self.regularization_eps >= 0.0) {
            return Err(Error::InvalidParams("regularization_eps must be non-negative".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidParams("max_newton must be positive".into()));
        }
        if !(self.compat_tol >= 0.0) {
            return Err(Error::InvalidParams("compat_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Discrete energy of a computed solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `||u(., t_k)||_2^2` per level.
    pub l2_history: Vec<f64>,
    pub sup_l2: f64,
    /// `sum_k dt int |grad u(t_k)|^p` over the levels after the first.
    pub gradient_integral: f64,
    /// `||u(., 0)||_2^2 + sup_t ||w||_2^2 + int int |grad w|^p`.
    pub data: f64,
    /// `(sup_l2 + gradient_integral) / data`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub solution: GridFunction,
    pub newton_iterations: Vec<usize>,
    /// Final scaled residual of each step.
    pub residuals: Vec<f64>,
    pub energy: EnergyReport,
}

/// Elements, lumped masses and unknown numbering of one spatial lattice.
struct Discretisation {
    elems: Vec<Element>,
    centroids: Vec<[f64; 2]>,
    mass: Vec<f64>,
    /// Unknown index of each interior node.
    unknown: Vec<Option<usize>>,
    interior: Vec<usize>,
}

impl Discretisation {
    fn new(space: &SpatialDomain) -> Self {
        let elems = elements(space, |vs| vs.iter().all(|&v| space.in_mask(v)));
        let mass = lumped_mass(space, &elems);
        let centroids = elems
            .iter()
            .map(|e| {
                let mut c = [0.0; 2];
                for &n in &e.nodes[..e.len] {
                    let x = space.position(n);
                    c[0] += x[0] / e.len as f64;
                    c[1] += x[1] / e.len as f64;
                }
                c
            })
            .collect();
        let mut unknown = vec![None; space.len()];
        let mut interior = Vec::new();
        for n in 0..space.len() {
            if space.is_interior(n) && mass[n] > 0.0 {
                unknown[n] = Some(interior.len());
                interior.push(n);
            }
        }
        Discretisation { elems, centroids, mass, unknown, interior }
    }

    /// Implicit Euler residual per unknown and, optionally, its Jacobian.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        nl: &Nonlinearity,
        t: f64,
        u: &[f64],
        old: &[f64],
        dt: f64,
        eps: f64,
        with_jacobian: bool,
    ) -> (Vec<f64>, Option<Triplets>) {
        let n = self.interior.len();
        let mut r: Vec<f64> = self
            .interior
            .iter()
            .map(|&a| self.mass[a] * (u[a] - old[a]) / dt)
            .collect();
        let mut jac = with_jacobian.then(|| {
            let mut tr = Triplets::new(n);
            for (i, &a) in self.interior.iter().enumerate() {
                tr.push(i, i, self.mass[a] / dt);
            }
            tr
        });
        for (e, x) in self.elems.iter().zip(&self.centroids) {
            let z = e.grad(u);
            let flux = nl.eval_eps(*x, t, z, eps);
            for a in 0..e.len {
                if let Some(i) = self.unknown[e.nodes[a]] {
                    r[i] += e.measure * dot2(flux, e.basis[a]);
                }
            }
            if let Some(tr) = jac.as_mut() {
                let d = nl.jacobian_eps(*x, t, z, eps);
                for a in 0..e.len {
                    let Some(i) = self.unknown[e.nodes[a]] else { continue };
                    let ga = e.basis[a];
                    for b in 0..e.len {
                        let Some(j) = self.unknown[e.nodes[b]] else { continue };
                        let gb = e.basis[b];
                        let db = [d[0][0] * gb[0] + d[0][1] * gb[1], d[1][0] * gb[0] + d[1][1] * gb[1]];
                        tr.push(i, j, e.measure * dot2(ga, db));
                    }
                }
            }
        }
        (r, jac)
    }

    fn merit(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(&self.interior)
            .map(|(v, &a)| v * v / self.mass[a])
            .sum::<f64>()
            .sqrt()
    }

    fn scaled_max(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(&self.interior)
            .map(|(v, &a)| (v / self.mass[a]).abs())
            .fold(0.0, f64::max)
    }

    fn l2_sq(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(v, m)| m * v * v).sum()
    }

    fn gradient_power(&self, u: &[f64], p: f64) -> f64 {
        self.elems.iter().map(|e| e.measure * norm2(e.grad(u)).powf(p)).sum()
    }

    fn fluxes(&self, nl: &Nonlinearity, t: f64, u: &[f64]) -> Vec<[f64; 2]> {
        self.elems
            .iter()
            .zip(&self.centroids)
            .map(|(e, x)| nl.eval(*x, t, e.grad(u)))
            .collect()
    }
}

/// Regularisation ladder for one step: halve from a gradient quantile down to the target.
fn eps_ladder(disc: &Discretisation, u: &[f64], target: f64) -> Vec<f64> {
    let mut grads: Vec<f64> = disc.elems.iter().map(|e| norm2(e.grad(u))).filter(|g| *g > 0.0).collect();
    let mut start = target;
    if !grads.is_empty() {
        let pos = grads.len() / 10;
        let (_, q, _) = grads.select_nth_unstable_by(pos, |a, b| a.total_cmp(b));
        start = start.max(*q);
    }
    let mut out = Vec::new();
    let mut eps = start;
    while eps > 2.0 * target {
        out.push(eps);
        eps *= 0.5;
    }
    out.push(target);
    out
}

/// Solve on `grid` with boundary values taken from `lateral` and `initial`
/// as the first level.
pub fn solve(
    nl: &Nonlinearity,
    grid: &Arc<SpaceTimeGrid>,
    lateral: &GridFunction,
    initial: &[f64],
    cfg: &SolveConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let space = grid.space();
    if space.dim() != nl.dim() {
        return Err(Error::DimsMismatch(format!(
            "nonlinearity for dimension {} on a {}-d grid",
            nl.dim(),
            space.dim()
        )));
    }
    if lateral.grid().len() != grid.len() || lateral.grid().space() != space || lateral.grid().nt() != grid.nt() {
        return Err(Error::DimsMismatch("lateral data lives on a different grid".into()));
    }
    if initial.len() != space.len() {
        return Err(Error::DimsMismatch(format!(
            "{} initial values for {} nodes",
            initial.len(),
            space.len()
        )));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("initial data is not finite".into()));
    }
    if nl.degenerate() && cfg.regularization_eps == 0.0 {
        return Err(Error::InvalidParams(
            "p < 2 with the p-Laplacian needs regularization_eps > 0".into(),
        ));
    }
    let w0 = lateral.slice(0);
    let scale = 1.0 + lateral.max_abs();
    for &b in space.boundary_cells() {
        let gap = (initial[b] - w0[b]).abs();
        if gap > cfg.compat_tol * scale {
            return Err(Error::InvalidParams(format!(
                "initial and lateral data differ by {gap:e} at boundary node {b}"
            )));
        }
    }
    let disc = Discretisation::new(space);
    let nodes = space.len();
    let dt = grid.dt();
    let mut values = vec![0.0; grid.len()];
    for n in 0..nodes {
        if space.in_mask(n) {
            values[n] = if space.is_boundary(n) { w0[n] } else { initial[n] };
        }
    }
    let mut iterations = Vec::with_capacity(grid.nt().saturating_sub(1));
    let mut residuals = Vec::with_capacity(grid.nt().saturating_sub(1));
    for k in 1..grid.nt() {
        let t = grid.time(k);
        let old = values[(k - 1) * nodes..k * nodes].to_vec();
        let mut u = old.clone();
        let wk = lateral.slice(k);
        for &b in space.boundary_cells() {
            u[b] = wk[b];
        }
        let step_scale = 1.0 + old.iter().fold(0.0f64, |m, v| m.max(v.abs())) / dt;
        let ladder = if nl.degenerate() {
            eps_ladder(&disc, &old, cfg.regularization_eps)
        } else {
            vec![0.0]
        };
        let mut history = Vec::new();
        let mut total = 0;
        for (stage, &eps) in ladder.iter().enumerate() {
            let last_stage = stage + 1 == ladder.len();
            let mut converged = false;
            for _ in 0..cfg.max_newton {
                let (r, jac) = disc.assemble(nl, t, &u, &old, dt, eps, true);
                let res = disc.scaled_max(&r) / step_scale;
                history.push(res);
                if !res.is_finite() {
                    break;
                }
                if res <= cfg.newton_tol {
                    converged = true;
                    break;
                }
                total += 1;
                let Ok(factor) = jac.expect("jacobian requested").factor() else { break };
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                let delta = factor.solve(&neg);
                let m0 = disc.merit(&r);
                let mut alpha = 1.0;
                loop {
                    let mut trial = u.clone();
                    for (i, &a) in disc.interior.iter().enumerate() {
                        trial[a] += alpha * delta[i];
                    }
                    let (rt, _) = disc.assemble(nl, t, &trial, &old, dt, eps, false);
                    let mt = disc.merit(&rt);
                    if (mt.is_finite() && mt <= (1.0 - 1e-4 * alpha) * m0) || alpha < 1.0 / 1024.0 {
                        u = trial;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if last_stage && !converged {
                let last_residual = history.last().copied().unwrap_or(f64::NAN);
                return Err(Error::NewtonDivergence {
                    step: k,
                    last_residual,
                    residual_history: history,
                    last_iterate: u,
                });
            }
        }
        iterations.push(total);
        residuals.push(history.last().copied().unwrap_or(0.0));
        values[k * nodes..(k + 1) * nodes].copy_from_slice(&u);
    }
    let l2_history: Vec<f64> = (0..grid.nt())
        .map(|k| disc.l2_sq(&values[k * nodes..(k + 1) * nodes]))
        .collect();
    let sup_l2 = l2_history.iter().copied().fold(0.0, f64::max);
    let gradient_integral: f64 = (1..grid.nt())
        .map(|k| dt * disc.gradient_power(&values[k * nodes..(k + 1) * nodes], nl.p))
        .sum();
    let w_sup = (0..grid.nt()).map(|k| disc.l2_sq(lateral.slice(k))).fold(0.0, f64::max);
    let w_grad: f64 = (1..grid.nt()).map(|k| dt * disc.gradient_power(lateral.slice(k), nl.p)).sum();
    let data = l2_history[0] + w_sup + w_grad;
    let total_energy = sup_l2 + gradient_integral;
    let energy = EnergyReport {
        l2_history,
        sup_l2,
        gradient_integral,
        data,
        ratio: if data > 0.0 { total_energy / data } else if total_energy == 0.0 { 0.0 } else { f64::INFINITY },
    };
    Ok(SolveOutput {
        solution: GridFunction::from_values(grid.clone(), values)?,
        newton_iterations: iterations,
        residuals,
        energy,
    })
}

/// Smooth bump `(1 - s^2)^2` on `|s| < 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - s * s;
        a * a
    }
}

/// Discrete test function: nodal values and the element gradients it induces.
#[derive(Clone, Debug)]
struct TestFunction {
    nodes: Vec<(usize, f64)>,
    grads: Vec<(usize, [f64; 2])>,
}

/// Finite family of tensor bumps at several radii and all lattice
/// translations (stride half a radius) whose support stays inside the
/// interior nodes.
#[derive(Clone, Debug)]
pub struct TestBank {
    functions: Vec<TestFunction>,
    radii: Vec<usize>,
}

impl TestBank {
    /// Radii are in lattice cells.
    pub fn tensor_bumps(space: &SpatialDomain, radii: &[usize]) -> Result<Self> {
        let disc = Discretisation::new(space);
        let mut node_elems: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
        for (i, e) in disc.elems.iter().enumerate() {
            for &n in &e.nodes[..e.len] {
                node_elems[n].push(i);
            }
        }
        let [nx, ny] = space.shape();
        let two_d = space.dim() == 2;
        let mut functions = Vec::new();
        let mut scratch = vec![0.0; space.len()];
        for &r in radii {
            if r == 0 {
                return Err(Error::InvalidParams("bump radius must be at least one cell".into()));
            }
            let stride = (r / 2).max(1);
            let ri = r as isize;
            let (jr, jstride, jmax) = if two_d { (ri - 1, stride, ny) } else { (0, 1, 1) };
            for ci in (0..nx).step_by(stride) {
                'centre: for cj in (0..jmax).step_by(jstride) {
                    let mut vals = Vec::new();
                    for di in -ri + 1..ri {
                        for dj in -jr..=jr {
                            let (i, j) = (ci as isize + di, cj as isize + dj);
                            let v = bump(di as f64 / r as f64)
                                * if two_d { bump(dj as f64 / r as f64) } else { 1.0 };
                            if v == 0.0 {
                                continue;
                            }
                            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                                continue 'centre;
                            }
                            let n = space.index(i as usize, j as usize);
                            if !space.is_interior(n) {
                                continue 'centre;
                            }
                            vals.push((n, v));
                        }
                    }
                    for &(n, v) in &vals {
                        scratch[n] = v;
                    }
                    let mut touched: Vec<usize> = vals.iter().flat_map(|&(n, _)| node_elems[n].iter().copied()).collect();
                    touched.sort_unstable();
                    touched.dedup();
                    let grads = touched.iter().map(|&e| (e, disc.elems[e].grad(&scratch))).collect();
                    for &(n, _) in &vals {
                        scratch[n] = 0.0;
                    }
                    functions.push(TestFunction { nodes: vals, grads });
                }
            }
        }
        if functions.is_empty() {
            return Err(Error::InvalidParams("no bump fits inside the domain".into()));
        }
        Ok(TestBank { functions, radii: radii.to_vec() })
    }

    /// Three radii: a sixteenth, an eighth and a quarter of the lattice width.
    pub fn standard(space: &SpatialDomain) -> Result<Self> {
        let n = space.shape()[0];
        let radii: Vec<usize> = [16, 8, 4].iter().map(|d| (n / d).max(2)).collect();
        Self::tensor_bumps(space, &radii)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn describe(&self) -> String {
        format!(
            "{} tensor bumps (1-s^2)^2, radii {:?} cells, translations every half radius",
            self.len(),
            self.radii
        )
    }
}

/// Space-time test family: spatial bumps times time bumps `(1 - s^2)^3`.
#[derive(Clone, Debug)]
pub struct SpaceTimeBank {
    space: TestBank,
    windows: Vec<(f64, f64)>,
}

impl SpaceTimeBank {
    /// Time bumps with the given half widths, centres every half width, supported inside the grid.
    pub fn new(space: TestBank, grid: &SpaceTimeGrid, half_widths: &[f64]) -> Result<Self> {
        let mut windows = Vec::new();
        for &hw in half_widths {
            if !(hw >= grid.dt()) {
                return Err(Error::InvalidParams(format!("time half width {hw} below dt")));
            }
            let mut c = grid.t0() + hw;
            while c + hw <= grid.t_end() + 1e-12 * hw {
                windows.push((c, hw));
                c += 0.5 * hw;
            }
        }
        if windows.is_empty() {
            return Err(Error::InvalidParams("no time bump fits inside the grid".into()));
        }
        Ok(SpaceTimeBank { space, windows })
    }

    /// Half widths of an eighth and a quarter of the time span.
    pub fn standard(grid: &SpaceTimeGrid) -> Result<Self> {
        let span = grid.t_end() - grid.t0();
        Self::new(TestBank::standard(grid.space())?, grid, &[span / 8.0, span / 4.0])
    }

    pub fn len(&self) -> usize {
        self.space.len() * self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn describe(&self) -> String {
        format!("{} x {} time windows (1-s^2)^3", self.space.describe(), self.windows.len())
    }
}

/// Largest weak-form defect over a test family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max |defect| / max (|time term| + |flux term|)` over the bank.
    pub residual: f64,
    pub max_defect: f64,
    pub scale: f64,
    /// Same normalisation of the gap between the exact time average of the
    /// flux and the right-endpoint rule of implicit Euler.
    pub quadrature_defect: f64,
    pub tests: usize,
    pub levels: usize,
    pub bank: String,
}

fn normalise(defect: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        defect / scale
    } else {
        0.0
    }
}

fn all_fluxes(disc: &Discretisation, nl: &Nonlinearity, u: &GridFunction) -> Vec<Vec<[f64; 2]>> {
    let grid = u.grid();
    (0..grid.nt())
        .into_par_iter()
        .map(|k| disc.fluxes(nl, grid.time(k), u.slice(k)))
        .collect()
}

fn check_bank_space(u: &GridFunction, nl: &Nonlinearity) -> Result<()> {
    if u.grid().space().dim() != nl.dim() {
        return Err(Error::DimsMismatch("nonlinearity and grid dimensions differ".into()));
    }
    Ok(())
}

/// Defect of `int d/dt [u]_h phi + <[A(x, t, grad u)]_h, grad phi> dx` over
/// the bank and every level `t` with `t + h` on the grid.
pub fn residual_steklov(u: &GridFunction, nl: &Nonlinearity, h: f64, bank: &TestBank) -> Result<ResidualReport> {
    check_bank_space(u, nl)?;
    let grid = u.grid();
    let span = grid.t_end() - grid.t0();
    let dt = grid.dt();
    if !(h >= dt * (1.0 - 1e-9) && h <= 0.5 * span) {
        return Err(Error::HOutOfRange { h, max: 0.5 * span });
    }
    let space = grid.space();
    let disc = Discretisation::new(space);
    let fluxes = all_fluxes(&disc, nl, u);
    let last = (grid.nt() - 1) as f64;
    let levels: Vec<usize> = (0..grid.nt()).filter(|&k| k as f64 + h / dt <= last + 1e-9).collect();
    let per_level: Vec<(f64, f64, f64)> = levels
        .par_iter()
        .map(|&k| {
            let a = k as f64;
            let b = (a + h / dt).min(last);
            let mut avg = vec![[0.0; 2]; disc.elems.len()];
            for (j, w) in interval_weights(a, b) {
                let c = w * dt / h;
                for (s, f) in avg.iter_mut().zip(&fluxes[j]) {
                    s[0] += c * f[0];
                    s[1] += c * f[1];
                }
            }
            let mut rect = vec![[0.0; 2]; disc.elems.len()];
            let mut j = a.floor() as usize;
            while (j as f64) < b - 1e-12 {
                let len = b.min(j as f64 + 1.0) - a.max(j as f64);
                let c = len * dt / h;
                for (s, f) in rect.iter_mut().zip(&fluxes[j + 1]) {
                    s[0] += c * f[0];
                    s[1] += c * f[1];
                }
                j += 1;
            }
            let jb = (b.floor() as usize).min(grid.nt() - 2);
            let frac = b - jb as f64;
            let (lo, hi, cur) = (u.slice(jb), u.slice(jb + 1), u.slice(k));
            let mut worst = (0.0f64, 0.0f64, 0.0f64);
            for tf in &bank.functions {
                let time_term: f64 = tf
                    .nodes
                    .iter()
                    .map(|&(n, v)| disc.mass[n] * ((1.0 - frac) * lo[n] + frac * hi[n] - cur[n]) / h * v)
                    .sum();
                let mut flux_term = 0.0;
                let mut quad = 0.0;
                for &(e, g) in &tf.grads {
                    let m = disc.elems[e].measure;
                    flux_term += m * dot2(avg[e], g);
                    quad += m * (dot2(avg[e], g) - dot2(rect[e], g));
                }
                worst.0 = worst.0.max((time_term + flux_term).abs());
                worst.1 = worst.1.max(time_term.abs() + flux_term.abs());
                worst.2 = worst.2.max(quad.abs());
            }
            worst
        })
        .collect();
    let (defect, scale, quad) = per_level
        .iter()
        .fold((0.0f64, 0.0f64, 0.0f64), |acc, w| (acc.0.max(w.0), acc.1.max(w.1), acc.2.max(w.2)));
    Ok(ResidualReport {
        residual: normalise(defect, scale),
        max_defect: defect,
        scale,
        quadrature_defect: normalise(quad, scale),
        tests: bank.len(),
        levels: levels.len(),
        bank: bank.describe(),
    })
}

fn time_bump(t: f64, centre: f64, half: f64) -> f64 {
    let s = (t - centre) / half;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(3)
    }
}

/// Defect of `int int -u phi_t + <A(x, t, grad u), grad phi> dz` with `u`
/// linear in time between levels; the time term is integrated exactly by
/// parts and the flux term by the trapezoid rule.
pub fn residual_distributional(u: &GridFunction, nl: &Nonlinearity, bank: &SpaceTimeBank) -> Result<ResidualReport> {
    check_bank_space(u, nl)?;
    let grid = u.grid();
    let disc = Discretisation::new(grid.space());
    let fluxes = all_fluxes(&disc, nl, u);
    let dt = grid.dt();
    let nt = grid.nt();
    let tests = &bank.space.functions;
    // per level and test: increment term and flux term
    let table: Vec<(Vec<f64>, Vec<f64>)> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let inc: Vec<f64> = if k + 1 < nt {
                let (a, b) = (u.slice(k), u.slice(k + 1));
                tests
                    .iter()
                    .map(|tf| tf.nodes.iter().map(|&(n, v)| disc.mass[n] * (b[n] - a[n]) * v).sum())
                    .collect()
            } else {
                vec![0.0; tests.len()]
            };
            let flux: Vec<f64> = tests
                .iter()
                .map(|tf| tf.grads.iter().map(|&(e, g)| disc.elems[e].measure * dot2(fluxes[k][e], g)).sum())
                .collect();
            (inc, flux)
        })
        .collect();
    let results: Vec<(f64, f64)> = bank
        .windows
        .par_iter()
        .map(|&(c, hw)| {
            let weights: Vec<(f64, f64)> = (0..nt)
                .map(|k| {
                    let t = grid.time(k);
                    let integral = if k + 1 < nt {
                        let (a, b) = (t, grid.time(k + 1));
                        (b - a) / 6.0
                            * (time_bump(a, c, hw) + 4.0 * time_bump(0.5 * (a + b), c, hw) + time_bump(b, c, hw))
                    } else {
                        0.0
                    };
                    let end = if k == 0 || k + 1 == nt { 0.5 } else { 1.0 };
                    (integral, end * dt * time_bump(t, c, hw))
                })
                .collect();
            let mut worst = (0.0f64, 0.0f64);
            for i in 0..tests.len() {
                let mut time_term = 0.0;
                let mut flux_term = 0.0;
                for (k, &(wi, wf)) in weights.iter().enumerate() {
                    if wi == 0.0 && wf == 0.0 {
                        continue;
                    }
                    time_term += wi / dt * table[k].0[i];
                    flux_term += wf * table[k].1[i];
                }
                worst.0 = worst.0.max((time_term + flux_term).abs());
                worst.1 = worst.1.max(time_term.abs() + flux_term.abs());
            }
            worst
        })
        .collect();
    let (defect, scale) = results.iter().fold((0.0f64, 0.0f64), |a, w| (a.0.max(w.0), a.1.max(w.1)));
    Ok(ResidualReport {
        residual: normalise(defect, scale),
        max_defect: defect,
        scale,
        quadrature_defect: 0.0,
        tests: bank.len(),
        levels: nt,
        bank: bank.describe(),
    })
}

/// `L^2` distance between the forward average `u_h(., t0)` and `u1`, per `h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialDecay {
    pub rows: Vec<(f64, f64)>,
    /// Defects never increase as `h` decreases.
    pub monotone: bool,
}

/// Compare `(1/h) int_0^h u(., s) ds` with `u1` on the mask nodes (or on `region`).
pub fn check_initial_condition(
    u: &GridFunction,
    u1: &[f64],
    h_ladder: &[f64],
    region: Option<&[bool]>,
) -> Result<InitialDecay> {
    let grid = u.grid();
    let space = grid.space();
    if u1.len() != space.len() || region.is_some_and(|r| r.len() != space.len()) {
        return Err(Error::DimsMismatch("initial trace length differs from the lattice".into()));
    }
    let dt = grid.dt();
    let span = grid.t_end() - grid.t0();
    let vol = space.cell_volume();
    let mut rows = Vec::with_capacity(h_ladder.len());
    for &h in h_ladder {
        if !(h > 0.0 && h <= span) {
            return Err(Error::HOutOfRange { h, max: span });
        }
        let mut avg = vec![0.0; space.len()];
        for (j, w) in interval_weights(0.0, h / dt) {
            for (s, v) in avg.iter_mut().zip(u.slice(j)) {
                *s += w * dt / h * v;
            }
        }
        let sum: f64 = (0..space.len())
            .filter(|&n| space.in_mask(n) && region.is_none_or(|r| r[n]))
            .map(|n| vol * (avg[n] - u1[n]).powi(2))
            .sum();
        rows.push((h, sum.sqrt()));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].0.total_cmp(&rows[a].0));
    let monotone = order
        .windows(2)
        .all(|w| rows[w[1]].1 <= rows[w[0]].1 * (1.0 + 1e-9) + 1e-14);
    Ok(InitialDecay { rows, monotone })
}

/// Solutions for a ladder of mollified boundary data.
#[derive(Clone, Debug)]
pub struct ApproximationRun {
    /// Mollifier radii in lattice units, coarse to fine.
    pub mollification_scales: Vec<f64>,
    pub solutions: Vec<GridFunction>,
    /// `sup_t int (u^i - u^j)^2`.
    pub pairwise_energy: Vec<Vec<f64>>,
    /// Slope of `log E(i, finest)` against `log scale_i`; `None` with fewer than two usable points.
    pub cauchy_trend: Option<f64>,
    /// `int int |grad u0^k|^(p - beta) / int int |grad u0|^(p - beta)` per scale.
    pub gradient_ratios: Vec<f64>,
    pub c_app: f64,
}

fn mollifier_weights(radius: f64) -> Vec<f64> {
    let reach = radius.ceil() as isize;
    let mut w: Vec<f64> = (-reach..=reach)
        .map(|j| {
            let s = j as f64 / radius;
            if s.abs() >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - s * s)).exp()
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return vec![1.0];
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Convolve a run of values with odd reflection at both ends, which keeps affine data fixed.
fn mollify_run(run: &[f64], radius: f64) -> Vec<f64> {
    let n = run.len() as isize;
    if n < 2 {
        return run.to_vec();
    }
    let weights = mollifier_weights(radius.min((n - 1) as f64));
    let reach = (weights.len() / 2) as isize;
    let ext = |i: isize| -> f64 {
        if i < 0 {
            2.0 * run[0] - run[(-i) as usize]
        } else if i >= n {
            2.0 * run[(n - 1) as usize] - run[(2 * (n - 1) - i) as usize]
        } else {
            run[i as usize]
        }
    };
    (0..n)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * ext(i + k as isize - reach))
                .sum()
        })
        .collect()
}

/// Separable mollification in every space axis and in time, along runs of mask nodes.
pub fn mollify(f: &GridFunction, radius: f64) -> GridFunction {
    let grid = f.grid();
    let space = grid.space();
    let radius = radius.max(1e-12);
    let nodes = space.len();
    let nt = grid.nt();
    let mut vals = f.values().to_vec();
    let [nx, ny] = space.shape();
    let mut axes: Vec<Vec<Vec<usize>>> = Vec::new();
    // lines of nodes along x, then along y
    axes.push((0..ny).map(|j| (0..nx).map(|i| space.index(i, j)).collect()).collect());
    if space.dim() == 2 {
        axes.push((0..nx).map(|i| (0..ny).map(|j| space.index(i, j)).collect()).collect());
    }
    for lines in &axes {
        for k in 0..nt {
            let slice = &mut vals[k * nodes..(k + 1) * nodes];
            for line in lines {
                let mut start = 0;
                while start < line.len() {
                    if !space.in_mask(line[start]) {
                        start += 1;
                        continue;
                    }
                    let mut end = start;
                    while end < line.len() && space.in_mask(line[end]) {
                        end += 1;
                    }
                    let run: Vec<f64> = line[start..end].iter().map(|&n| slice[n]).collect();
                    for (&n, v) in line[start..end].iter().zip(mollify_run(&run, radius)) {
                        slice[n] = v;
                    }
                    start = end;
                }
            }
        }
    }
    for n in (0..nodes).filter(|&n| space.in_mask(n)) {
        let run: Vec<f64> = (0..nt).map(|k| vals[k * nodes + n]).collect();
        for (k, v) in mollify_run(&run, radius).into_iter().enumerate() {
            vals[k * nodes + n] = v;
        }
    }
    GridFunction::from_values(grid.clone(), vals).expect("mollified values stay on the mask")
}

/// Mollify `u0` at each scale, solve with the mollified data on the lateral
/// boundary and at the initial time, and compare the solutions pairwise.
pub fn approximation_loop(
    nl: &Nonlinearity,
    u0: &GridFunction,
    scales: &[f64],
    beta: f64,
    cfg: &SolveConfig,
) -> Result<ApproximationRun> {
    if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParams("mollification scales must be positive".into()));
    }
    if !(0.0..1.0).contains(&beta) || nl.p - beta <= 1.0 {
        return Err(Error::InvalidParams(format!("beta = {beta} must lie in [0, min(1, p - 1))")));
    }
    let grid = u0.grid().clone();
    let disc = Discretisation::new(grid.space());
    let dt = grid.dt();
    let integral = |f: &GridFunction| -> f64 {
        (0..grid.nt()).map(|k| dt * disc.gradient_power(f.slice(k), nl.p - beta)).sum()
    };
    let base = integral(u0);
    let runs: Vec<Result<(GridFunction, f64)>> = scales
        .par_iter()
        .map(|&s| {
            let data = mollify(u0, s);
            let ratio = if base > 0.0 { integral(&data) / base } else { 0.0 };
            let out = solve(nl, &grid, &data, data.slice(0), cfg)?;
            Ok((out.solution, ratio))
        })
        .collect();
    let mut solutions = Vec::with_capacity(scales.len());
    let mut gradient_ratios = Vec::with_capacity(scales.len());
    for r in runs {
        let (u, ratio) = r?;
        solutions.push(u);
        gradient_ratios.push(ratio);
    }
    let m = solutions.len();
    let mut pairwise_energy = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let e = (0..grid.nt())
                .map(|k| {
                    let d: Vec<f64> = solutions[i].slice(k).iter().zip(solutions[j].slice(k)).map(|(a, b)| a - b).collect();
                    disc.l2_sq(&d)
                })
                .fold(0.0, f64::max);
            pairwise_energy[i][j] = e;
            pairwise_energy[j][i] = e;
        }
    }
    let points: Vec<(f64, f64)> = (0..m.saturating_sub(1))
        .filter(|&i| pairwise_energy[i][m - 1] > 0.0)
        .map(|i| (scales[i].ln(), pairwise_energy[i][m - 1].ln()))
        .collect();
    let cauchy_trend = (points.len() >= 2).then(|| {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    });
    let c_app = gradient_ratios.iter().copied().fold(0.0, f64::max);
    Ok(ApproximationRun {
        mollification_scales: scales.to_vec(),
        solutions,
        pairwise_energy,
        cauchy_trend,
        gradient_ratios,
        c_app,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_domain, DomainKind};
    use std::f64::consts::PI;

    fn interval_grid(length: f64, cells: usize, t0: f64, t_end: f64, nt: usize) -> Arc<SpaceTimeGrid> {
        let space = make_domain(&DomainKind::Interval { length, cells }).unwrap();
        Arc::new(SpaceTimeGrid::new(space, t0, t_end, nt).unwrap())
    }

    fn heat_error(cells: usize) -> f64 {
        let dx = 1.0 / cells as f64;
        let dt = dx * dx;
        let steps = (0.05 / dt).round() as usize;
        let grid = interval_grid(1.0, cells + 1, 0.0, steps as f64 * dt, steps + 1);
        let nl = Nonlinearity::p_laplace(2.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let out = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        let k = grid.nt() - 1;
        let t = grid.time(k);
        let space = grid.space();
        (0..space.len())
            .filter(|&n| space.in_mask(n))
            .map(|n| (out.solution.at(k, n) - (-PI * PI * t).exp() * (PI * space.position(n)[0]).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn structure_constants_hold_on_samples() {
        for &p in &[1.2, 1.5, 2.0, 2.5, 3.0, 4.0] {
            for dim in [1, 2] {
                if p <= 2.0 * dim as f64 / (dim as f64 + 2.0) {
                    continue;
                }
                let a = Nonlinearity::p_laplace(p, dim).unwrap().check_structure(10_000, 1);
                assert!(a.holds(), "p-laplace p={p} dim={dim}: {a:?}");
                let b = Nonlinearity::regularized(p, 0.3, dim).unwrap().check_structure(10_000, 2);
                assert!(b.holds(), "regularized p={p} dim={dim}: {b:?}");
            }
        }
    }

    #[test]
    fn exponent_restriction() {
        assert!(Nonlinearity::p_laplace(1.0, 2).is_err());
        assert!(Nonlinearity::p_laplace(0.9, 1).is_err());
        assert!(Nonlinearity::p_laplace(1.01, 2).is_ok());
        assert!(Nonlinearity::regularized(2.0, -1.0, 1).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = interval_grid(1.0, 33, 0.0, 0.1, 11);
        for nl in [Nonlinearity::p_laplace(3.0, 1).unwrap(), Nonlinearity::p_laplace(1.5, 1).unwrap()] {
            let w = GridFunction::zeros(grid.clone());
            let out = solve(&nl, &grid, &w, w.slice(0), &SolveConfig::default()).unwrap();
            assert!(out.solution.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn heat_equation_converges_at_second_order() {
        let errs: Vec<f64> = [64, 128, 256].iter().map(|&c| heat_error(c)).collect();
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(errs[2] < 1e-4, "{errs:?}");
        assert!((s1 - 2.0).abs() < 0.2 && (s2 - 2.0).abs() < 0.2, "slopes {s1} {s2}");
    }

    fn barenblatt(x: f64, t: f64) -> f64 {
        let xi = x.abs() * t.powf(-0.25);
        let core = 0.5 - xi.powf(1.5) / 6.0;
        if core <= 0.0 {
            0.0
        } else {
            t.powf(-0.25) * core * core
        }
    }

    #[test]
    fn barenblatt_profile_at_p3() {
        let grid = interval_grid(16.0, 257, 1.0, 2.0, 1001);
        let nl = Nonlinearity::p_laplace(3.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, t| barenblatt(x[0] - 8.0, t));
        let out = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        let exact = GridFunction::from_fn(grid.clone(), |x, t| barenblatt(x[0] - 8.0, t));
        let k = grid.nt() - 1;
        let diff: f64 = out.solution.slice(k).iter().zip(exact.slice(k)).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = exact.slice(k).iter().map(|b| b * b).sum();
        let rel = (diff / norm).sqrt();
        assert!(rel < 0.05, "relative error {rel}");
        assert!(out.residuals.iter().all(|r| *r <= 1e-10));
    }

    #[test]
    fn maximum_principle_and_dissipation() {
        let grid = interval_grid(1.0, 65, 0.0, 0.05, 51);
        let init = GridFunction::from_fn(grid.clone(), |x, _| {
            let y = x[0];
            (y * (1.0 - y) * 4.0).powi(3) * (1.0 + (9.0 * y).sin())
        });
        let w = GridFunction::zeros(grid.clone());
        for p in [1.5, 2.0, 3.0] {
            let nl = Nonlinearity::p_laplace(p, 1).unwrap();
            let out = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
            let data_max = init.slice(0).iter().copied().fold(0.0f64, f64::max);
            let data_min = init.slice(0).iter().copied().fold(0.0f64, f64::min);
            let slack = 1e-8 * data_max;
            assert!(out.solution.values().iter().all(|&v| v <= data_max + slack && v >= data_min - slack), "p={p}");
            let h = &out.energy.l2_history;
            assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "p={p}");
            let last = *h.last().unwrap();
            assert!(0.5 * last + out.energy.gradient_integral <= 0.5 * h[0] * (1.0 + 1e-9), "p={p}");
        }
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let grid = interval_grid(1.0, 17, 0.0, 0.1, 5);
        let nl = Nonlinearity::p_laplace(2.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |_, _| 1.0);
        let err = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "invalid-params");
    }

    #[test]
    fn newton_cap_reports_divergence() {
        let grid = interval_grid(1.0, 17, 0.0, 0.1, 5);
        let nl = Nonlinearity::p_laplace(4.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let cfg = SolveConfig { max_newton: 1, newton_tol: 1e-14, ..SolveConfig::default() };
        match solve(&nl, &grid, &w, init.slice(0), &cfg) {
            Err(Error::NewtonDivergence { step, residual_history, last_iterate, .. }) => {
                assert_eq!(step, 1);
                assert!(!residual_history.is_empty());
                assert_eq!(last_iterate.len(), grid.space().len());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn user_field_matches_builtin() {
        let grid = interval_grid(1.0, 33, 0.0, 0.05, 21);
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let builtin = Nonlinearity::p_laplace(3.0, 1).unwrap();
        let field: FluxFn = Arc::new(|_, _, z: [f64; 2]| {
            let n = (z[0] * z[0] + z[1] * z[1]).sqrt();
            [n * z[0], n * z[1]]
        });
        let user = Nonlinearity::user(3.0, 1, [0.35, 1.0, 0.0, 0.0], field).unwrap();
        assert!(user.check_structure(2000, 3).holds());
        let a = solve(&builtin, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        let b = solve(&user, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        assert!(a.solution.sub(&b.solution).max_abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_heat_decay() {
        let space = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [17, 17] }).unwrap();
        let grid = Arc::new(SpaceTimeGrid::new(space, 0.0, 0.02, 21).unwrap());
        let nl = Nonlinearity::p_laplace(2.0, 2).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin() * (PI * x[1]).sin());
        let out = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        let k = grid.nt() - 1;
        let centre = grid.space().nearest_node([0.5, 0.5]);
        let exact = (-2.0 * PI * PI * grid.time(k)).exp();
        assert!((out.solution.at(k, centre) - exact).abs() < 0.02, "{}", out.solution.at(k, centre));
    }

    fn heat_solution(cells: usize) -> (GridFunction, Nonlinearity) {
        let dx = 1.0 / cells as f64;
        let dt = 0.25 * dx * dx;
        let steps = 400;
        let grid = interval_grid(1.0, cells + 1, 0.0, steps as f64 * dt, steps + 1);
        let nl = Nonlinearity::p_laplace(2.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin() + 0.3 * (3.0 * PI * x[0]).sin());
        let out = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap();
        (out.solution, nl)
    }

    #[test]
    fn steklov_residual_of_solver_output() {
        let (u, nl) = heat_solution(128);
        let bank = TestBank::standard(u.grid().space()).unwrap();
        let h = 2.0 * u.grid().dt();
        let r = residual_steklov(&u, &nl, h, &bank).unwrap();
        assert!(r.residual <= 10.0 * r.quadrature_defect, "{r:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let space = u.grid().space();
        let vals: Vec<f64> = (0..u.grid().len())
            .map(|i| if space.in_mask(i % space.len()) { rng_value(&mut rng) } else { 0.0 })
            .collect();
        let noise = GridFunction::from_values(u.grid().clone(), vals).unwrap();
        let rn = residual_steklov(&noise, &nl, h, &bank).unwrap();
        assert!(rn.residual >= 1e3 * r.residual, "noise {} vs {}", rn.residual, r.residual);
    }

    fn rng_value(rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(-1.0..1.0)
    }

    #[test]
    fn constants_have_zero_residual() {
        let grid = interval_grid(1.0, 65, 0.0, 0.1, 41);
        let u = GridFunction::from_fn(grid.clone(), |_, _| 2.5);
        let nl = Nonlinearity::p_laplace(2.5, 1).unwrap();
        let bank = TestBank::standard(grid.space()).unwrap();
        assert_eq!(residual_steklov(&u, &nl, 0.01, &bank).unwrap().residual, 0.0);
        let st = SpaceTimeBank::standard(&grid).unwrap();
        assert_eq!(residual_distributional(&u, &nl, &st).unwrap().residual, 0.0);
    }

    #[test]
    fn distributional_agrees_and_sees_time_reversal() {
        let (u, nl) = heat_solution(128);
        let grid = u.grid().clone();
        let bank = TestBank::standard(grid.space()).unwrap();
        let st = SpaceTimeBank::standard(&grid).unwrap();
        let steklov = residual_steklov(&u, &nl, 2.0 * grid.dt(), &bank).unwrap().residual;
        let dist = residual_distributional(&u, &nl, &st).unwrap().residual;
        assert!(dist <= 10.0 * steklov && steklov <= 10.0 * dist, "{dist} {steklov}");
        let nt = grid.nt();
        let nodes = grid.space().len();
        let mut rev = vec![0.0; grid.len()];
        for k in 0..nt {
            rev[k * nodes..(k + 1) * nodes].copy_from_slice(u.slice(nt - 1 - k));
        }
        let rev = GridFunction::from_values(grid.clone(), rev).unwrap();
        let back = residual_distributional(&rev, &nl, &st).unwrap().residual;
        assert!(back > 10.0 * dist, "{back} {dist}");
    }

    #[test]
    fn p_laplace_residuals_at_p3() {
        let grid = interval_grid(1.0, 65, 0.0, 0.05, 201);
        let nl = Nonlinearity::p_laplace(3.0, 1).unwrap();
        let w = GridFunction::zeros(grid.clone());
        let init = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let u = solve(&nl, &grid, &w, init.slice(0), &SolveConfig::default()).unwrap().solution;
        let bank = TestBank::standard(grid.space()).unwrap();
        let r = residual_steklov(&u, &nl, 2.0 * grid.dt(), &bank).unwrap();
        assert!(r.residual <= 10.0 * r.quadrature_defect, "{r:?}");
    }

    #[test]
    fn initial_condition_ladder() {
        let grid = interval_grid(1.0, 65, 0.0, 0.2, 201);
        let u = GridFunction::from_fn(grid.clone(), |x, t| (PI * x[0]).sin() * (1.0 + t));
        let u1 = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let ladder: Vec<f64> = (0..6).map(|i| 0.064 / 2f64.powi(i)).collect();
        let d = check_initial_condition(&u, u1.slice(0), &ladder, None).unwrap();
        assert!(d.monotone);
        // u_h(0) - u1 = (h/2) sin(pi x)
        for &(h, v) in &d.rows {
            let exact = 0.5 * h * (0.5f64).sqrt();
            assert!((v - exact).abs() < 0.05 * exact, "{h} {v} {exact}");
        }
        let still = GridFunction::from_fn(grid.clone(), |x, _| (PI * x[0]).sin());
        let z = check_initial_condition(&still, u1.slice(0), &ladder, None).unwrap();
        assert!(z.rows.iter().all(|r| r.1 < 1e-12));
        let off: Vec<f64> = u1.slice(0).iter().map(|v| v + 0.3).collect();
        let m = check_initial_condition(&u, &off, &ladder, None).unwrap();
        let gap: f64 = (0..grid.space().len())
            .filter(|&n| grid.space().in_mask(n))
            .map(|_| grid.space().cell_volume() * 0.09)
            .sum::<f64>()
            .sqrt();
        assert!(m.rows.last().unwrap().1 >= 0.5 * gap);
    }

    #[test]
    fn mollifier_keeps_affine_data() {
        let grid = interval_grid(1.0, 33, 0.0, 0.1, 21);
        let f = GridFunction::from_fn(grid.clone(), |x, t| 1.0 + 2.0 * x[0] - 3.0 * t);
        let g = mollify(&f, 5.0);
        assert!(f.sub(&g).max_abs() < 1e-12);
    }

    #[test]
    fn approximation_of_smooth_data_is_stable() {
        let grid = interval_grid(1.0, 33, 0.0, 0.05, 26);
        let u0 = GridFunction::from_fn(grid.clone(), |x, t| 0.5 + x[0] + 2.0 * t);
        let nl = Nonlinearity::p_laplace(3.0, 1).unwrap();
        let cfg = SolveConfig::default();
        let run = approximation_loop(&nl, &u0, &[8.0, 4.0, 2.0], 0.2, &cfg).unwrap();
        for row in &run.pairwise_energy {
            assert!(row.iter().all(|e| *e <= 10.0 * cfg.newton_tol), "{:?}", run.pairwise_energy);
        }
        assert!(run.c_app <= 2.0);
    }

    #[test]
    fn approximation_of_kinked_data_converges() {
        let grid = interval_grid(1.0, 33, 0.0, 0.1, 101);
        let u0 = GridFunction::from_fn(grid.clone(), |x, t| (1.0 + x[0]) * (t - 0.05).abs() * 10.0);
        let nl = Nonlinearity::p_laplace(2.5, 1).unwrap();
        let scales = [16.0, 8.0, 4.0, 2.0, 1.2];
        let run = approximation_loop(&nl, &u0, &scales, 0.2, &SolveConfig::default()).unwrap();
        let e = &run.pairwise_energy;
        for i in 0..scales.len() {
            assert_eq!(e[i][i], 0.0);
            for j in 0..scales.len() {
                assert_eq!(e[i][j], e[j][i]);
            }
        }
        let lead: Vec<f64> = (0..scales.len() - 1)
            .map(|m| (m + 1..scales.len()).map(|j| e[m][j]).fold(0.0, f64::max))
            .collect();
        assert!(lead.windows(2).all(|w| w[1] < w[0]), "{lead:?}");
        assert!(run.cauchy_trend.unwrap() > 0.0);
        assert!(run.c_app <= 2.0, "{:?}", run.gradient_ratios);
    }
}
