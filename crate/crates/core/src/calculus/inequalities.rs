//! Parabolic Poincare and Gagliardo-Nirenberg checks on lattice data.

use crate::bounds;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpatialDomain};
use crate::report::{EstimateReport, MeanAcc};

use super::{gradient_slice, virtual_ball_count};

/// Normalised C^2 bump on the ball: `int mu = 1` on the lattice, support in the ball.
pub fn standard_weight(space: &SpatialDomain, center: [f64; 2], radius: f64) -> Vec<f64> {
    let mut mu = vec![0.0; space.len()];
    for n in space.ball_nodes(center, radius) {
        let r = space.distance(space.position(n), center) / radius;
        mu[n] = (1.0 - r * r).powi(3);
    }
    let total: f64 = mu.iter().sum::<f64>() * space.cell_volume();
    if total > 0.0 {
        mu.iter_mut().for_each(|v| *v /= total);
    }
    mu
}

/// Inputs of the parabolic Poincare inequality on `B x I`.
pub struct PoincareInput<'a> {
    pub f: &'a GridFunction,
    pub center: [f64; 2],
    pub radius: f64,
    /// Time interval `I`.
    pub interval: (f64, f64),
    /// Sub-interval `J` of `I` cutting off `f`.
    pub cutoff: (f64, f64),
    /// Spatial weight with unit mass supported in the ball.
    pub mu: &'a [f64],
    /// Space-time weight on `B x I`, flat time-major like `f`.
    pub xi: &'a [f64],
    pub theta: f64,
    /// Constant in the size bounds `|mu| <= C / r^n`, `|grad mu| <= C / r^(n+1)`
    /// and `sup xi <= C mean xi`.
    pub weight_constant: f64,
}

/// `mean |(f chi_J - <f chi_J>_xi) / r|^theta` against
/// `mean |grad f|^theta chi_J + sup_{t1,t2} |(<f chi_J>_mu(t2) - <f chi_J>_mu(t1)) / r|^theta`.
pub fn verify_parabolic_poincare(inp: &PoincareInput) -> Result<EstimateReport> {
    let grid = inp.f.grid();
    let space = grid.space();
    let n = space.dim() as i32;
    let r = inp.radius;
    let ball = space.ball_nodes(inp.center, r);
    let slices: Vec<usize> = grid.slices_in(inp.interval.0, inp.interval.1).collect();
    if ball.is_empty() || slices.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    if inp.mu.len() != space.len() || inp.xi.len() != grid.len() {
        return Err(Error::DimsMismatch("weight length does not match the grid".into()));
    }
    // weight preconditions
    let in_ball: Vec<bool> = {
        let mut v = vec![false; space.len()];
        ball.iter().for_each(|&b| v[b] = true);
        v
    };
    let mass: f64 = inp.mu.iter().sum::<f64>() * space.cell_volume();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::WeightViolatesPrecondition(format!("mu has mass {mass}")));
    }
    if inp.mu.iter().enumerate().any(|(i, &m)| m != 0.0 && !in_ball[i]) {
        return Err(Error::WeightViolatesPrecondition("mu not supported in the ball".into()));
    }
    let c = inp.weight_constant;
    let mu_max = inp.mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mu_max * r.powi(n) > c {
        return Err(Error::WeightViolatesPrecondition(format!(
            "sup |mu| r^n = {} exceeds {c}",
            mu_max * r.powi(n)
        )));
    }
    let gmu = gradient_slice(&space.unmasked(), inp.mu);
    let gmu_max = gmu.iter().fold(0.0f64, |m, g| m.max(g[0].hypot(g[1])));
    if gmu_max * r.powi(n + 1) > c {
        return Err(Error::WeightViolatesPrecondition(format!(
            "sup |grad mu| r^(n+1) = {} exceeds {c}",
            gmu_max * r.powi(n + 1)
        )));
    }
    let mut xi_sum = 0.0;
    let mut xi_max: f64 = 0.0;
    for &k in &slices {
        for &b in &ball {
            let v = inp.xi[grid.flat(k, b)];
            if v < 0.0 {
                return Err(Error::WeightViolatesPrecondition("xi is negative".into()));
            }
            xi_sum += v;
            xi_max = xi_max.max(v);
        }
    }
    let count = (ball.len() * slices.len()) as f64;
    if xi_sum <= 0.0 {
        return Err(Error::WeightViolatesPrecondition("xi vanishes on B x I".into()));
    }
    if xi_max > c * xi_sum / count {
        return Err(Error::WeightViolatesPrecondition("xi is too concentrated".into()));
    }

    let in_j = |k: usize| {
        let t = grid.time(k);
        t > inp.cutoff.0 && t < inp.cutoff.1
    };
    let fj = |k: usize, b: usize| if in_j(k) { inp.f.at(k, b) } else { 0.0 };
    let xi_mean: f64 = slices
        .iter()
        .flat_map(|&k| ball.iter().map(move |&b| (k, b)))
        .map(|(k, b)| fj(k, b) * inp.xi[grid.flat(k, b)])
        .sum::<f64>()
        / xi_sum;
    let total = (virtual_ball_count(space, inp.center, r) * slices.len()) as f64;
    let frac = count / total;
    let mut lhs = MeanAcc::default();
    let mut grad_term = 0.0;
    for &k in &slices {
        let grad = gradient_slice(space, inp.f.slice(k));
        for &b in &ball {
            let (i, j) = space.coords(b);
            lhs.push(((fj(k, b) - xi_mean) / r).abs().powf(inp.theta), (i + j + k) % 2 == 0);
            if in_j(k) {
                grad_term += grad[b][0].hypot(grad[b][1]).powf(inp.theta);
            }
        }
    }
    let grad_term = grad_term / total;
    let slice_means: Vec<f64> = slices
        .iter()
        .map(|&k| ball.iter().map(|&b| fj(k, b) * inp.mu[b]).sum::<f64>() * space.cell_volume())
        .collect();
    let (lo, hi) = slice_means
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let osc = ((hi - lo) / r).abs().powf(inp.theta);
    let lhs_val = lhs.mean() * frac;
    Ok(EstimateReport::new("parabolic-poincare", lhs_val, grad_term + osc, bounds::POINCARE)
        .with_defect(lhs.defect() * frac)
        .with_meta("gradient_term", grad_term)
        .with_meta("oscillation_term", osc))
}

/// Interpolation inequality on the ball `B_rho`:
/// `mean |f/rho|^sigma <= C (mean |f/rho|^theta + |grad f|^theta)^(delta sigma/theta)
/// (mean |f/rho|^r)^((1-delta) sigma/r)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_gagliardo_nirenberg(
    space: &SpatialDomain,
    f: &[f64],
    center: [f64; 2],
    rho: f64,
    sigma: f64,
    theta: f64,
    r: f64,
    delta: f64,
) -> Result<EstimateReport> {
    let n = space.dim() as f64;
    if !(sigma >= 1.0 && theta >= 1.0 && r >= 1.0 && delta > 0.0 && delta <= 1.0) {
        return Err(Error::ExponentConstraintViolated(format!(
            "need sigma, theta, r >= 1 and delta in (0, 1], got {sigma}, {theta}, {r}, {delta}"
        )));
    }
    let lhs_exp = -n / sigma;
    let rhs_exp = delta * (1.0 - n / theta) - (1.0 - delta) * n / r;
    if lhs_exp > rhs_exp + 1e-12 {
        return Err(Error::ExponentConstraintViolated(format!(
            "-n/sigma = {lhs_exp} exceeds delta(1 - n/theta) - (1 - delta) n/r = {rhs_exp}"
        )));
    }
    let ball = space.ball_nodes(center, rho);
    if ball.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let grad = gradient_slice(space, f);
    let m = ball.len() as f64;
    let mean = |g: &dyn Fn(usize) -> f64| ball.iter().map(|&b| g(b)).sum::<f64>() / m;
    let lhs = mean(&|b| (f[b] / rho).abs().powf(sigma));
    let a = mean(&|b| (f[b] / rho).abs().powf(theta) + grad[b][0].hypot(grad[b][1]).powf(theta));
    let c = mean(&|b| (f[b] / rho).abs().powf(r));
    let rhs = a.powf(delta * sigma / theta) * c.powf((1.0 - delta) * sigma / r);
    Ok(EstimateReport::new("gagliardo-nirenberg", lhs, rhs, bounds::GAGLIARDO_NIRENBERG)
        .with_meta("sigma", sigma)
        .with_meta("theta", theta)
        .with_meta("r", r)
        .with_meta("delta", delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_domain, DomainKind, SpaceTimeGrid};
    use std::sync::Arc;

    fn box_grid() -> Arc<SpaceTimeGrid> {
        let d = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [25, 25] }).unwrap();
        Arc::new(SpaceTimeGrid::new(d, 0.0, 1.0, 21).unwrap())
    }

    fn run(f: &GridFunction, c: f64) -> Result<EstimateReport> {
        let g = f.grid();
        let center = [0.5, 0.5];
        let mu = standard_weight(g.space(), center, 0.3);
        let xi = vec![1.0; g.len()];
        verify_parabolic_poincare(&PoincareInput {
            f,
            center,
            radius: 0.3,
            interval: (0.1, 0.9),
            cutoff: (0.0, 1.0),
            mu: &mu,
            xi: &xi,
            theta: 2.0,
            weight_constant: c,
        })
    }

    #[test]
    fn constant_is_vacuous() {
        let g = box_grid();
        let f = GridFunction::from_fn(g, |_, _| 3.0);
        let r = run(&f, 100.0).unwrap();
        assert!(r.lhs.abs() < 1e-20 && r.pass && r.vacuous);
    }

    #[test]
    fn linear_in_space_has_finite_ratio() {
        let g = box_grid();
        let f = GridFunction::from_fn(g, |x, _| x[0]);
        let r = run(&f, 100.0).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0 && r.pass, "{r:?}");
    }

    #[test]
    fn time_oscillation_enters_rhs() {
        let g = box_grid();
        let f = GridFunction::from_fn(g, |_, t| (6.0 * t).sin());
        let r = run(&f, 100.0).unwrap();
        assert!(r.ratio.is_finite() && r.pass, "{r:?}");
        assert!(r.meta["oscillation_term"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn bad_weights_rejected() {
        let g = box_grid();
        let f = GridFunction::from_fn(g.clone(), |x, _| x[0]);
        let mut mu = standard_weight(g.space(), [0.5, 0.5], 0.3);
        mu.iter_mut().for_each(|v| *v *= 2.0);
        let xi = vec![1.0; g.len()];
        let err = verify_parabolic_poincare(&PoincareInput {
            f: &f,
            center: [0.5, 0.5],
            radius: 0.3,
            interval: (0.1, 0.9),
            cutoff: (0.0, 1.0),
            mu: &mu,
            xi: &xi,
            theta: 2.0,
            weight_constant: 100.0,
        })
        .unwrap_err();
        assert_eq!(err.kind(), "weight-violates-precondition");
        assert_eq!(run(&f, 1e-3).unwrap_err().kind(), "weight-violates-precondition");
    }

    #[test]
    fn gagliardo_nirenberg_trivial_case() {
        let d = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [33, 33] }).unwrap();
        let f: Vec<f64> = (0..d.len())
            .map(|i| if d.in_mask(i) { (4.0 * d.position(i)[0]).sin() + 0.2 } else { 0.0 })
            .collect();
        let r = verify_gagliardo_nirenberg(&d, &f, [0.5, 0.5], 0.4, 2.0, 2.0, 2.0, 1.0).unwrap();
        assert!(r.ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn gagliardo_nirenberg_constraint() {
        let d = make_domain(&DomainKind::Box { lengths: [1.0, 1.0], cells: [9, 9] }).unwrap();
        let f = vec![0.0; d.len()];
        // -2/8 > 0.5 (1 - 2/1.2) - 0.5 * 2/1
        let err = verify_gagliardo_nirenberg(&d, &f, [0.5, 0.5], 0.4, 8.0, 1.2, 1.0, 0.5).unwrap_err();
        assert_eq!(err.kind(), "exponent-constraint-violated");
    }
}
