//! Discrete differential operators, quadrature, Steklov averages and
//! negative Sobolev norms.

mod inequalities;
mod negsob;

pub use inequalities::{
    standard_weight, verify_gagliardo_nirenberg, verify_parabolic_poincare, PoincareInput,
};
pub use negsob::{
    neg_sobolev_norm, neg_sobolev_norm_iterative, Edge, EdgeField, NegSobolevOptions,
    NegSobolevRepresentation,
};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, ParabolicCylinder, SpaceTimeGrid, SpatialDomain};
use crate::report::MeanAcc;

/// Nodal gradient of one time level.
///
/// Central differences where both neighbours along an axis are in the mask,
/// one-sided differences where only one is, zero off the mask.
pub fn gradient_slice(space: &SpatialDomain, values: &[f64]) -> Vec<[f64; 2]> {
    let h = space.spacing();
    let mut out = vec![[0.0; 2]; space.len()];
    for (idx, g) in out.iter_mut().enumerate() {
        if !space.in_mask(idx) {
            continue;
        }
        for (a, ga) in g.iter_mut().enumerate().take(space.dim()) {
            let fwd = space.step(idx, a, 1).filter(|&n| space.in_mask(n));
            let bwd = space.step(idx, a, -1).filter(|&n| space.in_mask(n));
            *ga = match (bwd, fwd) {
                (Some(b), Some(f)) => (values[f] - values[b]) / (2.0 * h[a]),
                (None, Some(f)) => (values[f] - values[idx]) / h[a],
                (Some(b), None) => (values[idx] - values[b]) / h[a],
                (None, None) => 0.0,
            };
        }
    }
    out
}

/// Nodal gradient at every space-time lattice point, time-major.
pub fn gradient(f: &GridFunction) -> Vec<[f64; 2]> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.nt() {
        out.extend(gradient_slice(grid.space(), f.slice(k)));
    }
    out
}

/// `|grad f|` as a grid function.
pub fn grad_norm(f: &GridFunction) -> GridFunction {
    let values = gradient(f).iter().map(|g| g[0].hypot(g[1])).collect();
    GridFunction::from_values(f.grid().clone(), values).expect("gradient vanishes off the mask")
}

/// Set of space-time lattice points.
#[derive(Clone, Debug)]
pub struct Region {
    flags: Vec<bool>,
}

impl Region {
    /// Mask nodes at every time level.
    pub fn domain(grid: &SpaceTimeGrid) -> Region {
        let space = grid.space();
        let flags = (0..grid.len()).map(|i| space.in_mask(i % space.len())).collect();
        Region { flags }
    }

    /// Lattice points inside a cylinder (masked or not).
    pub fn cylinder(grid: &SpaceTimeGrid, q: &ParabolicCylinder) -> Region {
        let mut flags = vec![false; grid.len()];
        for (k, n) in q.lattice_points(grid) {
            flags[grid.flat(k, n)] = true;
        }
        Region { flags }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(usize, usize) -> bool) -> Region {
        let flags = (0..grid.len()).map(|i| {
            let (k, n) = grid.unflat(i);
            f(k, n)
        });
        Region { flags: flags.collect() }
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.flags[flat]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region { flags: self.flags.iter().zip(&other.flags).map(|(a, b)| *a && *b).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn measure(&self, grid: &SpaceTimeGrid) -> f64 {
        self.count() as f64 * grid.cell_measure()
    }
}

/// `(sum over region of |f|^theta * cell measure)^(1/theta)`.
pub fn lp_norm(f: &GridFunction, theta: f64, region: &Region) -> f64 {
    let cm = f.grid().cell_measure();
    let s: f64 = region.iter().map(|i| f.values()[i].abs().powf(theta)).sum();
    (s * cm).powf(1.0 / theta)
}

/// `(sum over region of (|f|^theta + |grad f|^theta) * cell measure)^(1/theta)`.
pub fn sobolev_norm(f: &GridFunction, theta: f64, region: &Region) -> f64 {
    let cm = f.grid().cell_measure();
    let g = grad_norm(f);
    let s: f64 = region
        .iter()
        .map(|i| f.values()[i].abs().powf(theta) + g.values()[i].powf(theta))
        .sum();
    (s * cm).powf(1.0 / theta)
}

/// Number of nodes of the unbounded lattice inside the open ball.
pub fn virtual_ball_count(space: &SpatialDomain, center: [f64; 2], radius: f64) -> usize {
    let h = space.spacing();
    let o = space.origin();
    let range = |a: usize| {
        let lo = ((center[a] - radius - o[a]) / h[a]).floor() as i64;
        let hi = ((center[a] + radius - o[a]) / h[a]).ceil() as i64;
        lo..=hi
    };
    let mut count = 0;
    for i in range(0) {
        let x = o[0] + i as f64 * h[0];
        if space.dim() == 1 {
            if (x - center[0]).abs() < radius {
                count += 1;
            }
            continue;
        }
        for j in range(1) {
            let y = o[1] + j as f64 * h[1];
            if (x - center[0]).hypot(y - center[1]) < radius {
                count += 1;
            }
        }
    }
    count
}

/// Number of time levels `t0 + k dt`, `k` any integer, in the open interval.
pub fn virtual_level_count(grid: &SpaceTimeGrid, lo: f64, hi: f64) -> usize {
    let dt = grid.dt();
    let a = ((lo - grid.t0()) / dt).floor() as i64;
    let b = ((hi - grid.t0()) / dt).ceil() as i64;
    (a..=b)
        .filter(|&k| {
            let t = grid.t0() + k as f64 * dt;
            t > lo && t < hi
        })
        .count()
}

/// Average of `g(k, node)` over a cylinder, with `g` extended by zero
/// outside the grid. Also reports the even-sub-lattice defect.
pub fn cylinder_mean(
    grid: &SpaceTimeGrid,
    q: &ParabolicCylinder,
    g: impl Fn(usize, usize) -> f64,
) -> (f64, f64) {
    let space = grid.space();
    let s = q.half_length();
    let total =
        virtual_ball_count(space, q.center, q.radius) * virtual_level_count(grid, q.t - s, q.t + s);
    if total == 0 {
        return (0.0, 0.0);
    }
    let mut acc = MeanAcc::default();
    for (k, n) in q.lattice_points(grid) {
        let (i, j) = space.coords(n);
        acc.push(g(k, n), (i + j + k) % 2 == 0);
    }
    let frac = acc.count() as f64 / total as f64;
    (acc.mean() * frac, acc.defect() * frac)
}

/// Average of `g(node)` over a ball, extended by zero off the lattice.
pub fn ball_mean(
    space: &SpatialDomain,
    center: [f64; 2],
    radius: f64,
    g: impl Fn(usize) -> f64,
) -> f64 {
    let total = virtual_ball_count(space, center, radius);
    if total == 0 {
        return 0.0;
    }
    let s: f64 = space.ball_nodes(center, radius).into_iter().map(g).sum();
    s / total as f64
}

/// Forward Steklov average `(1/h) int_t^{t+h} f` of the piecewise linear
/// time interpolant; zero at levels with `t >= T - h`.
pub fn steklov(f: &GridFunction, h: f64) -> Result<GridFunction> {
    let grid = f.grid();
    let span = grid.t_end() - grid.t0();
    if !(h > 0.0 && h < span) {
        return Err(Error::HOutOfRange { h, max: span });
    }
    let nodes = grid.space().len();
    let dt = grid.dt();
    let mut values = vec![0.0; grid.len()];
    let last = (grid.nt() - 1) as f64;
    for k in 0..grid.nt() {
        let a = k as f64;
        let b = a + h / dt;
        if b > last - 1e-9 {
            continue;
        }
        let weights = interval_weights(a, b);
        let out = &mut values[k * nodes..(k + 1) * nodes];
        for (j, w) in weights {
            let src = f.slice(j);
            for n in 0..nodes {
                out[n] += w * src[n];
            }
        }
        let inv = dt / h;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
    GridFunction::from_values(grid.clone(), values)
}

/// Time derivative of the Steklov average, `(f(t+h) - f(t)) / h`, with the
/// same cut-off as [`steklov`].
pub fn steklov_derivative(f: &GridFunction, h: f64) -> Result<GridFunction> {
    let grid = f.grid();
    let span = grid.t_end() - grid.t0();
    if !(h > 0.0 && h < span) {
        return Err(Error::HOutOfRange { h, max: span });
    }
    let nodes = grid.space().len();
    let dt = grid.dt();
    let last = (grid.nt() - 1) as f64;
    let mut values = vec![0.0; grid.len()];
    for k in 0..grid.nt() {
        let b = k as f64 + h / dt;
        if b > last - 1e-9 {
            continue;
        }
        let j = (b.floor() as usize).min(grid.nt() - 2);
        let frac = b - j as f64;
        let (lo, hi) = (f.slice(j), f.slice(j + 1));
        let cur = f.slice(k);
        for n in 0..nodes {
            let later = (1.0 - frac) * lo[n] + frac * hi[n];
            values[k * nodes + n] = (later - cur[n]) / h;
        }
    }
    GridFunction::from_values(grid.clone(), values)
}

/// Centred average over `(t - half, t + half)`, extended by zero outside the grid.
pub fn symmetric_time_average(f: &GridFunction, half: f64) -> GridFunction {
    let grid = f.grid();
    let nodes = grid.space().len();
    let dt = grid.dt();
    let last = (grid.nt() - 1) as f64;
    let mut values = vec![0.0; grid.len()];
    for k in 0..grid.nt() {
        let a = (k as f64 - half / dt).max(0.0);
        let b = (k as f64 + half / dt).min(last);
        if b <= a {
            continue;
        }
        let out = &mut values[k * nodes..(k + 1) * nodes];
        for (j, w) in interval_weights(a, b) {
            let src = f.slice(j);
            for n in 0..nodes {
                out[n] += w * src[n];
            }
        }
        let inv = dt / (2.0 * half);
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
    GridFunction::from_values(grid.clone(), values).expect("average of masked data")
}

/// Weights `w_j` with `int_a^b p(s) ds = sum w_j p(j)` for the piecewise
/// linear interpolant `p` of level values, in index units.
pub(crate) fn interval_weights(a: f64, b: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut add = |j: usize, w: f64| {
        if let Some(last) = out.last_mut() {
            if last.0 == j {
                last.1 += w;
                return;
            }
        }
        out.push((j, w));
    };
    let mut j = a.floor() as usize;
    while (j as f64) < b {
        let c = a.max(j as f64);
        let d = b.min(j as f64 + 1.0);
        if d > c {
            let jf = j as f64;
            // int_c^d (j+1-s) ds and int_c^d (s-j) ds
            let w_hi = 0.5 * ((d - jf).powi(2) - (c - jf).powi(2));
            let w_lo = (d - c) - w_hi;
            add(j, w_lo);
            if w_hi != 0.0 {
                add(j + 1, w_hi);
            }
        }
        j += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_domain, DomainKind};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(cells: usize, nt: usize, t_end: f64) -> Arc<SpaceTimeGrid> {
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells }).unwrap();
        Arc::new(SpaceTimeGrid::new(d, 0.0, t_end, nt).unwrap())
    }

    fn sine_gradient_error(cells: usize) -> f64 {
        let g = line(cells, 2, 1.0);
        let pi = std::f64::consts::PI;
        let f = GridFunction::from_fn(g.clone(), |x, _| (pi * x[0]).sin());
        let grad = gradient_slice(g.space(), f.slice(0));
        let space = g.space();
        (0..space.len())
            .filter(|&n| space.is_interior(n))
            .map(|n| (grad[n][0] - pi * (pi * space.position(n)[0]).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_is_second_order() {
        let e: Vec<f64> = [33, 65, 129].iter().map(|&c| sine_gradient_error(c)).collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope >= 1.9, "observed order {slope}");
        }
    }

    #[test]
    fn gradient_one_sided_at_boundary_and_zero_outside() {
        let g = line(11, 2, 1.0);
        let f = GridFunction::from_fn(g.clone(), |x, _| 3.0 * x[0] + 1.0);
        let grad = gradient_slice(g.space(), f.slice(0));
        for n in 0..g.space().len() {
            let expect = if g.space().in_mask(n) { 3.0 } else { 0.0 };
            assert!((grad[n][0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_of_one_is_measure_power() {
        let g = line(17, 5, 2.0);
        let one = GridFunction::from_fn(g.clone(), |_, _| 1.0);
        let r = Region::domain(&g);
        for theta in [1.0, 2.0, 3.5] {
            let n = lp_norm(&one, theta, &r);
            assert!((n - r.measure(&g).powf(1.0 / theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_homogeneous_and_triangle() {
        let g = line(21, 6, 1.0);
        let f = GridFunction::from_fn(g.clone(), |x, t| (5.0 * x[0]).sin() + t);
        let h = GridFunction::from_fn(g.clone(), |x, t| x[0] * x[0] - t);
        let r = Region::domain(&g);
        let a = lp_norm(&f.scale(-2.5), 2.0, &r);
        assert!((a - 2.5 * lp_norm(&f, 2.0, &r)).abs() < 1e-12);
        assert!(lp_norm(&f.add(&h), 1.5, &r) <= lp_norm(&f, 1.5, &r) + lp_norm(&h, 1.5, &r) + 1e-14);
        assert!(sobolev_norm(&f, 2.0, &r) >= lp_norm(&f, 2.0, &r));
    }

    #[test]
    fn steklov_of_time_is_shifted_time() {
        let g = line(5, 21, 1.0);
        let f = GridFunction::from_fn(g.clone(), |_, t| t);
        for h in [0.05, 0.13, 0.5] {
            let s = steklov(&f, h).unwrap();
            for k in 0..g.nt() {
                let t = g.time(k);
                let expect = if t >= 1.0 - h - 1e-12 { 0.0 } else { t + h / 2.0 };
                assert!((s.at(k, 2) - expect).abs() < 1e-12, "h={h} t={t}");
            }
        }
    }

    #[test]
    fn steklov_rejects_bad_h() {
        let g = line(5, 11, 1.0);
        let f = GridFunction::from_fn(g, |_, t| t);
        assert_eq!(steklov(&f, 0.0).unwrap_err().kind(), "h-out-of-range");
        assert_eq!(steklov(&f, 1.0).unwrap_err().kind(), "h-out-of-range");
    }

    #[test]
    fn steklov_of_one_step_within_oscillation() {
        let g = line(9, 33, 1.0);
        let f = GridFunction::from_fn(g.clone(), |x, t| (7.0 * t + x[0]).sin());
        let s = steklov(&f, g.dt()).unwrap();
        let mut osc: f64 = 0.0;
        for k in 0..g.nt() - 1 {
            for n in 0..g.space().len() {
                osc = osc.max((f.at(k + 1, n) - f.at(k, n)).abs());
            }
        }
        for k in 0..g.nt() - 2 {
            for n in 0..g.space().len() {
                assert!((s.at(k, n) - f.at(k, n)).abs() <= osc + 1e-14);
            }
        }
    }

    #[test]
    fn steklov_derivative_matches_difference_quotient() {
        let g = line(5, 41, 2.0);
        let f = GridFunction::from_fn(g.clone(), |_, t| t * t);
        let h = 0.15;
        let d = steklov_derivative(&f, h).unwrap();
        for k in 0..10 {
            let t = g.time(k);
            let expect = 2.0 * t + h;
            assert!((d.at(k, 2) - expect).abs() < 2.0 * g.dt() * g.dt() / h + 1e-12);
        }
    }

    #[test]
    fn symmetric_average_bounded_by_enlarged_cylinder() {
        // cylinder mean of the centred average against the mean over the
        // cylinder with time half-length lambda (r + h)^2
        let d = make_domain(&DomainKind::Interval { length: 1.0, cells: 41 }).unwrap();
        let g = Arc::new(SpaceTimeGrid::new(d, 0.0, 4.0, 161).unwrap());
        let f = GridFunction::from_fn(g.clone(), |x, t| ((9.0 * t).sin() * (3.0 * x[0]).cos()).abs());
        let lambda = 0.7;
        for (r, h) in [(0.1, 0.05), (0.1, 0.3), (0.2, 0.2), (0.05, 0.5)] {
            let avg = symmetric_time_average(&f, lambda * h * h);
            let q = ParabolicCylinder::new([0.5, 0.0], 2.0, r, lambda);
            let big = ParabolicCylinder::with_half_length([0.5, 0.0], 2.0, r, lambda * (r + h) * (r + h));
            let (lhs, _) = cylinder_mean(&g, &q, |k, n| avg.at(k, n));
            let (rhs, _) = cylinder_mean(&g, &big, |k, n| f.at(k, n));
            assert!(lhs <= 4.0 * rhs * 1.05, "r={r} h={h}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn cylinder_mean_of_one_inside_grid() {
        let g = line(41, 41, 1.0);
        let q = ParabolicCylinder::new([0.5, 0.0], 0.5, 0.2, 2.0);
        let (m, d) = cylinder_mean(&g, &q, |_, _| 1.0);
        assert!((m - 1.0).abs() < 1e-12 && d < 1e-12);
        // half of the cylinder lies before t0
        let q = ParabolicCylinder::new([0.5, 0.0], 0.0, 0.2, 2.0);
        let (m, _) = cylinder_mean(&g, &q, |_, _| 1.0);
        assert!(m > 0.4 && m < 0.6);
    }

    proptest! {
        #[test]
        fn steklov_shift_equivariant(shift in 1usize..6, m in 1usize..5, seed in 0u64..1000) {
            let g = line(5, 40, 1.0);
            let phase = seed as f64 * 0.01;
            let f = GridFunction::from_fn(g.clone(), |x, t| (11.0 * t + phase).sin() + x[0]);
            let dt = g.dt();
            let shifted_vals: Vec<f64> = (0..g.nt())
                .flat_map(|k| {
                    let src = (k + shift).min(g.nt() - 1);
                    f.slice(src).to_vec()
                })
                .collect();
            let fs = GridFunction::from_values(g.clone(), shifted_vals).unwrap();
            let h = m as f64 * dt;
            let a = steklov(&f, h).unwrap();
            let b = steklov(&fs, h).unwrap();
            for k in 0..g.nt() {
                if k + shift + m + 1 >= g.nt() {
                    break;
                }
                for n in 0..g.space().len() {
                    prop_assert!((a.at(k + shift, n) - b.at(k, n)).abs() < 1e-13);
                }
            }
        }

        #[test]
        fn interval_weights_integrate_linear(a in 0.0f64..8.0, len in 0.01f64..5.0) {
            let b = a + len;
            let w = interval_weights(a, b);
            let total: f64 = w.iter().map(|x| x.1).sum();
            prop_assert!((total - len).abs() < 1e-12);
            let first: f64 = w.iter().map(|&(j, x)| x * j as f64).sum();
            prop_assert!((first - 0.5 * (b * b - a * a)).abs() < 1e-10);
        }
    }
}
