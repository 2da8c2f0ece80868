//! One pipeline per subcommand.

use std::sync::Arc;

use ptlab_core::bounds;
use ptlab_core::calculus::{self, steklov, Edge, EdgeField};
use ptlab_core::capacity::{default_radii, thickness_check};
use ptlab_core::estimates::{
    gehring_estimate, intrinsic_cylinder, verify_apriori, verify_caccioppoli, verify_higher_integrability,
    verify_reverse_holder,
};
use ptlab_core::grid::{write_pgrd, GridFunction, ParabolicCylinder, SpaceTimeGrid, SpatialDomain};
use ptlab_core::maximal::{
    localized_nodal_power, maximal_of, neg_maximal, neg_maximal_spacetime, spatial_maximal, strong_maximal,
    CylinderFamily, NegNormMode,
};
use ptlab_core::solver::{approximation_loop, residual_steklov, solve, Nonlinearity, SolveOutput, TestBank};
use ptlab_core::truncation::{
    build_initial_boundary_v, composite_g, interior_nodes, lambda_at_percentile, truncate, verify_truncation_bounds,
    GoodSetData, GoodSetInput, Variant,
};
use ptlab_core::whitney::{balanced_grid, build_cover, random_closed_set, ParabolicMetric};
use ptlab_core::EstimateReport;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Config, MaximalOp, TruncationVariant};
use crate::Failure;

/// Reports, a free-form summary and extra files of one run.
pub struct Outcome {
    pub reports: Vec<EstimateReport>,
    pub summary: Value,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(reports: Vec<EstimateReport>, summary: Value) -> Self {
        Outcome { reports, summary, artifacts: Vec::new() }
    }
}

struct Instance {
    grid: Arc<SpaceTimeGrid>,
    u: GridFunction,
    w: GridFunction,
    nl: Nonlinearity,
    out: SolveOutput,
}

fn instance(cfg: &Config) -> Result<Instance, Failure> {
    let grid = cfg.grid()?;
    let nl = cfg.nonlinearity()?;
    let w = cfg.field(&cfg.data.lateral, &grid)?;
    let init = cfg.field(&cfg.data.initial, &grid)?;
    let out = solve(&nl, &grid, &w, init.slice(0), &cfg.solve.to_config())?;
    Ok(Instance { grid, u: out.solution.clone(), w, nl, out })
}

fn energy_report(out: &SolveOutput) -> EstimateReport {
    let e = &out.energy;
    EstimateReport::new("energy", e.sup_l2 + e.gradient_integral, e.data, bounds::ENERGY)
        .with_meta("sup_l2", e.sup_l2)
        .with_meta("gradient_integral", e.gradient_integral)
}

/// Half the diameter of the bounding box of the mask.
fn half_diameter(space: &SpatialDomain) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for n in (0..space.len()).filter(|&n| space.in_mask(n)) {
        let x = space.position(n);
        for a in 0..2 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    0.5 * (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

pub fn run_solve(cfg: &Config) -> Result<Outcome, Failure> {
    let inst = instance(cfg)?;
    let bank = TestBank::standard(inst.grid.space())?;
    let res = residual_steklov(&inst.u, &inst.nl, 2.0 * inst.grid.dt(), &bank)?;
    let reports = vec![
        energy_report(&inst.out),
        EstimateReport::new("weak_residual", res.residual, res.quadrature_defect, 10.0)
            .with_meta("bank", &res.bank)
            .with_meta("tests", res.tests),
    ];
    let summary = json!({
        "variant": inst.nl.variant(),
        "p": inst.nl.p,
        "newton_iterations": inst.out.newton_iterations,
        "max_step_residual": inst.out.residuals.iter().cloned().fold(0.0, f64::max),
        "energy": inst.out.energy,
    });
    let mut buf = Vec::new();
    write_pgrd(&inst.u, &mut buf)?;
    let mut csv = Vec::new();
    ptlab_core::grid::write_csv(&inst.u, &mut csv)?;
    let mut o = Outcome::new(reports, summary);
    o.artifacts.push(("solution.pgrd".into(), buf));
    o.artifacts.push(("solution.csv".into(), csv));
    Ok(o)
}

pub fn run_existence(cfg: &Config) -> Result<Outcome, Failure> {
    let grid = cfg.grid()?;
    let nl = cfg.nonlinearity()?;
    let u0 = cfg.field(&cfg.data.lateral, &grid)?;
    let run = approximation_loop(&nl, &u0, &cfg.existence.scales, cfg.ladder.beta, &cfg.solve.to_config())?;
    let trend = run.cauchy_trend;
    let mut cauchy = EstimateReport::new("cauchy_trend", 0.0, trend.unwrap_or(0.0), 0.0);
    cauchy.ratio = trend.unwrap_or(f64::NAN);
    cauchy.vacuous = false;
    cauchy.pass = trend.is_some_and(|t| t > 0.0);
    let reports = vec![
        cauchy.with_meta("pairwise_energy", &run.pairwise_energy),
        EstimateReport::new("approximation_constant", run.c_app, 1.0, 2.0)
            .with_meta("gradient_ratios", &run.gradient_ratios),
    ];
    let summary = json!({
        "mollification_scales": run.mollification_scales,
        "cauchy_trend": trend,
        "c_app": run.c_app,
    });
    Ok(Outcome::new(reports, summary))
}

pub fn run_truncate(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let inst = instance(cfg)?;
    let ladder = cfg.ladder()?;
    let p = inst.nl.p;
    let sec = &cfg.truncation;
    let variant = match sec.variant {
        TruncationVariant::Apriori => Variant::Apriori,
        TruncationVariant::Initial => Variant::InitialBoundary,
    };
    let i = &cfg.intrinsic;
    let cyl = ParabolicCylinder::with_half_length(i.center, inst.grid.t0(), i.rho, i.rho * i.rho);
    let inp = GoodSetInput {
        u: &inst.u,
        w: &inst.w,
        h0: None,
        p,
        q: ladder.q,
        eps0: ladder.eps0,
        beta: ladder.beta,
        variant,
        cylinder: (variant == Variant::InitialBoundary).then_some(cyl),
    };
    let g = composite_g(&inp)?;
    let lambda = lambda_at_percentile(&g, sec.percentile);
    let gs = GoodSetData::threshold(g, lambda, variant);
    let space = inst.grid.space();
    let (v_h, reference) = match variant {
        Variant::Apriori => (steklov(&inst.u.sub(&inst.w), 2.0 * inst.grid.dt())?, interior_nodes(&inst.grid)),
        Variant::InitialBoundary => {
            let d = build_initial_boundary_v(&inst.u, &inst.w, &cyl, 2.0 * inst.grid.dt())?;
            let reference = (0..space.len())
                .map(|n| space.is_interior(n) && space.distance(space.position(n), cyl.center) < 8.0 * cyl.radius)
                .collect();
            (d.v_h, reference)
        }
    };
    let tr = truncate(&v_h, &gs, &reference, inst.grid.t0(), p)?;
    let reports = verify_truncation_bounds(&tr, half_diameter(space), bounds::TRUNCATION, sec.samples, seed);
    let summary = json!({
        "variant": format!("{:?}", sec.variant).to_lowercase(),
        "lambda": lambda,
        "percentile": sec.percentile,
        "complement_points": gs.complement_count(),
        "cylinders": tr.cover.as_ref().map_or(0, |c| c.len()),
        "zeroed_cylinders": tr.zeroed_cylinders.len(),
        "cover": tr.cover.as_ref().map(|c| c.stats()),
    });
    Ok(Outcome::new(reports, summary))
}

fn random_density(grid: &Arc<SpaceTimeGrid>, rng: &mut ChaCha8Rng) -> GridFunction {
    let space = grid.space();
    let values = (0..grid.len())
        .map(|i| {
            let v: f64 = rng.random();
            if space.in_mask(i % space.len()) { v * v * v } else { 0.0 }
        })
        .collect();
    GridFunction::from_values(grid.clone(), values).expect("lengths match")
}

fn random_field(space: &SpatialDomain, rng: &mut ChaCha8Rng) -> EdgeField {
    let region: Vec<bool> = (0..space.len()).map(|i| space.is_interior(i)).collect();
    let edges: Vec<Edge> = EdgeField::edges_touching(space, &region);
    let values = edges.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    EdgeField { edges, values }
}

/// Largest `a / b^(1/theta)`, or zero when both vanish.
fn chain_ratio(lhs: &[f64], rhs: &[f64], theta: f64) -> f64 {
    lhs.iter()
        .zip(rhs)
        .map(|(&a, &b)| {
            let r = b.max(0.0).powf(1.0 / theta);
            if a <= 0.0 { 0.0 } else if r == 0.0 { f64::INFINITY } else { a / r }
        })
        .fold(0.0, f64::max)
}

pub fn run_maximal(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let grid = cfg.grid()?;
    let space = grid.space();
    let sec = &cfg.maximal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = grid.cell_measure();
    let mut reports = Vec::new();
    let mut summary = serde_json::Map::new();
    match sec.op {
        MaximalOp::Strong => {
            if !(sec.q > 1.0) {
                return Err(Failure::new("config", format!("maximal.q = {} must exceed 1", sec.q)));
            }
            let f = random_density(&grid, &mut rng);
            let family = CylinderFamily::dyadic(&grid);
            let m = strong_maximal(&f, &family);
            let l1: f64 = f.values().iter().map(|v| v.abs()).sum::<f64>() * cell;
            let top = m.max_abs();
            let floor = l1 / (grid.len() as f64 * cell);
            let levels = sec.levels.max(2);
            let mut weak: (f64, f64) = (0.0, 0.0);
            for j in 0..levels {
                let lam = floor * (top / floor).powf(j as f64 / (levels - 1) as f64) * (1.0 - 1e-12);
                let measure = m.values().iter().filter(|&&v| v > lam).count() as f64 * cell;
                if lam * measure > weak.0 {
                    weak = (lam * measure, lam);
                }
            }
            let n = space.dim() as i32;
            reports.push(
                EstimateReport::new("maximal_weak_type", weak.0, l1, 5f64.powi(n + 2)).with_meta("level", weak.1),
            );
            let lq = |v: &[f64]| v.iter().map(|x| x.abs().powf(sec.q)).sum::<f64>() * cell;
            reports.push(
                EstimateReport::new("maximal_strong_type", lq(m.values()), lq(f.values()), bounds::MAXIMAL_STRONG)
                    .with_meta("q", sec.q),
            );
            summary.insert("family_shapes".into(), json!(family.len()));
        }
        MaximalOp::Neg => {
            let psi = random_field(space, &mut rng);
            let radii = CylinderFamily::spatial(space).radii;
            let lhs = neg_maximal(space, &psi, sec.theta, &radii, NegNormMode::Restriction)?;
            let rhs = spatial_maximal(space, &psi.nodal_power(space, sec.theta), &radii);
            let exact = neg_maximal(space, &psi, sec.theta, &radii, NegNormMode::Exact)?;
            reports.push(
                EstimateReport::new("negative_maximal_chain", chain_ratio(&lhs, &rhs, sec.theta), 1.0, 1.0 + 1e-9)
                    .with_meta("theta", sec.theta),
            );
            let gap = exact.iter().zip(&lhs).map(|(e, r)| if *r > 0.0 { e / r } else { 0.0 }).fold(0.0, f64::max);
            reports.push(EstimateReport::new("exact_below_restriction", gap, 1.0, 1.0 + 1e-6));
        }
        MaximalOp::NegSpacetime => {
            let psi: Vec<EdgeField> = (0..grid.nt()).map(|_| random_field(space, &mut rng)).collect();
            let family = CylinderFamily::dyadic(&grid);
            let lhs = neg_maximal_spacetime(&grid, &psi, sec.theta, &family, None)?;
            let ungrid = grid.unmasked();
            let dens = localized_nodal_power(&ungrid, &psi, sec.theta, None);
            let rhs = maximal_of(&ungrid, &dens, &family);
            reports.push(
                EstimateReport::new(
                    "negative_maximal_spacetime_chain",
                    chain_ratio(lhs.values(), &rhs, sec.theta),
                    1.0,
                    1.0 + 1e-9,
                )
                .with_meta("theta", sec.theta),
            );
        }
    }
    summary.insert("op".into(), json!(format!("{:?}", sec.op)));
    Ok(Outcome::new(reports, Value::Object(summary)))
}

pub fn run_whitney(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let sec = &cfg.whitney;
    let p = cfg.nonlinearity.p;
    let metric = ParabolicMetric::new(sec.lambda, p)?;
    let space = ptlab_core::grid::make_domain(&cfg.domain)?.unmasked();
    let grid = balanced_grid(space, metric.gamma(), sec.levels)?;
    let mut overlap = 0usize;
    let mut derivative = 0.0f64;
    let mut structural = true;
    let mut covers = Vec::new();
    let mut csv = String::from("set,cylinder,x,y,t,radius,distance\n");
    for s in 0..sec.sets as u64 {
        let set = random_closed_set(&grid, seed.wrapping_add(s));
        let cover = build_cover(&grid, &set, metric)?;
        let inv = cover.check_invariants(sec.samples, seed.wrapping_add(s));
        overlap = overlap.max(inv.max_overlap_4q).max(inv.max_neighbors);
        derivative = derivative.max(inv.derivative_bound);
        structural &= inv.holds(usize::MAX, f64::INFINITY);
        for (j, c) in cover.cylinders.iter().enumerate() {
            csv.push_str(&format!("{s},{j},{},{},{},{},{}\n", c.center[0], c.center[1], c.t, c.radius, c.distance));
        }
        covers.push(json!({ "stats": cover.stats(), "invariants": inv }));
    }
    let mut structure = EstimateReport::new("whitney_structure", 0.0, 1.0, 0.0);
    structure.pass = structural;
    let reports = vec![
        EstimateReport::new("whitney_overlap", overlap as f64, 1.0, bounds::WHITNEY_OVERLAP as f64),
        EstimateReport::new("whitney_derivative", derivative, 1.0, bounds::WHITNEY_DERIVATIVE),
        structure,
    ];
    let mut o = Outcome::new(reports, json!({ "gamma": metric.gamma(), "covers": covers }));
    o.artifacts.push(("cylinders.csv".into(), csv.into_bytes()));
    Ok(o)
}

pub fn run_capacity(cfg: &Config) -> Result<Outcome, Failure> {
    let space = ptlab_core::grid::make_domain(&cfg.domain)?;
    let sec = &cfg.capacity;
    let radii = if sec.radii.is_empty() { default_radii(&space) } else { sec.radii.clone() };
    let report = thickness_check(&space, cfg.nonlinearity.p, &radii, sec.stride)?;
    let reports = vec![EstimateReport::new("uniform_thickness", sec.min_ratio, report.b0_empirical, 1.0)
        .with_meta("r0", report.r0)];
    Ok(Outcome::new(reports, serde_json::to_value(&report).expect("serialisable")))
}

pub fn run_verify_apriori(cfg: &Config) -> Result<Outcome, Failure> {
    let ladder = cfg.ladder()?;
    let inst = instance(cfg)?;
    let rep = verify_apriori(&inst.u, &inst.w, &inst.nl, &ladder)?;
    let summary = json!({ "ladder": ladder, "newton_iterations": inst.out.newton_iterations.iter().sum::<usize>() });
    Ok(Outcome::new(vec![energy_report(&inst.out), rep], summary))
}

pub fn run_verify_higher_int(cfg: &Config) -> Result<Outcome, Failure> {
    let ladder = cfg.ladder()?;
    let inst = instance(cfg)?;
    let sec = &cfg.intrinsic;
    let opts = sec.options;
    let cyl = intrinsic_cylinder(&inst.u, &inst.w, &inst.nl, &ladder, sec.center, sec.t, sec.rho, &opts)?;
    let q = cyl.cylinder;
    let mut reports = Vec::new();
    if (q.t - inst.grid.t0()).abs() <= q.half_length() {
        reports.push(verify_caccioppoli(&inst.u, &inst.w, &inst.nl, &cyl, &ladder, &opts)?);
        reports.push(verify_reverse_holder(&inst.u, &inst.w, &inst.nl, &cyl, &ladder, &opts)?);
    }
    reports.push(verify_higher_integrability(&inst.u, &inst.w, &inst.nl, &q, &q.scaled(2.0), &ladder)?);
    Ok(Outcome::new(reports, json!({ "ladder": ladder, "cylinder": cyl })))
}

pub fn run_gehring(cfg: &Config) -> Result<Outcome, Failure> {
    let ladder = cfg.ladder()?;
    let grid = cfg.grid()?;
    let sec = &cfg.gehring;
    let f = match &sec.field {
        Some(spec) => cfg.field(spec, &grid)?,
        None => {
            let inst = instance(cfg)?;
            let g = calculus::gradient(&inst.u);
            GridFunction::from_values(grid.clone(), g.iter().map(|v| v[0].hypot(v[1])).collect())?
        }
    };
    let g = cfg.field(&sec.majorant, &grid)?;
    let region = ParabolicCylinder::with_half_length(sec.center, sec.t, sec.radius, sec.half_length);
    let est = gehring_estimate(&f, &g, &ladder, &region, &sec.options)?;
    let d = &est.diagnostics;
    let mut rep = EstimateReport::new("gehring_improvement", ladder.energy(), est.critical_exponent, 1.0)
        .with_meta("delta", est.delta)
        .with_meta("kappa", d.tail.kappa);
    if est.delta <= 0.0 {
        rep.pass = false;
    }
    Ok(Outcome::new(vec![rep], serde_json::to_value(&est).expect("serialisable")))
}
