//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ptlab_core::estimates::{ExponentLadder, GehringOptions, IntrinsicOptions};
use ptlab_core::grid::{make_domain, read_pgrd, DomainKind, GridFunction, SpaceTimeGrid};
use ptlab_core::solver::{FluxFn, Nonlinearity, SolveConfig};
use ptlab_core::{estimates, Error};
use serde::Deserialize;

use crate::Failure;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainKind,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub nonlinearity: NonlinearitySection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub existence: ExistenceSection,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub maximal: MaximalSection,
    #[serde(default)]
    pub whitney: WhitneySection,
    #[serde(default)]
    pub capacity: CapacitySection,
    #[serde(default)]
    pub intrinsic: IntrinsicSection,
    #[serde(default)]
    pub gehring: GehringSection,
    /// Directory of the config file; relative data paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t0: f64,
    pub t_end: f64,
    pub levels: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t0: 0.0, t_end: 0.05, levels: 51 }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    #[default]
    PLaplace,
    Regularized,
    /// `a(x) |zeta|^(p-2) zeta` with `a` oscillating between `lambda0` and `lambda1`.
    Coefficient,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    #[serde(default)]
    pub variant: NonlinearityKind,
    pub p: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "one")]
    pub lambda0: f64,
    #[serde(default = "one")]
    pub lambda1: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for NonlinearitySection {
    fn default() -> Self {
        NonlinearitySection { variant: NonlinearityKind::PLaplace, p: 2.0, eps: 0.0, lambda0: 1.0, lambda1: 1.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub tol: f64,
    pub max_newton: usize,
    pub eps: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        let d = SolveConfig::default();
        SolveSection { tol: d.newton_tol, max_newton: d.max_newton, eps: d.regularization_eps }
    }
}

impl SolveSection {
    pub fn to_config(&self) -> SolveConfig {
        SolveConfig { newton_tol: self.tol, max_newton: self.max_newton, regularization_eps: self.eps, ..Default::default() }
    }
}

/// Scalar field on space-time.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// `amplitude (t - t0)/(T - t0) (1 + x + y + sin(3 pi x) / 2)`, coordinates relative to the extent.
    Ramp { amplitude: f64 },
    /// `amplitude sin(modes pi x) sin(modes pi y)`, coordinates relative to the extent.
    Sine { amplitude: f64, modes: u32 },
    /// `amplitude max(|x - center|, h/2)^exponent`.
    Radial { amplitude: f64, center: [f64; 2], exponent: f64 },
    /// Values read from a PGRD file on the same grid.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Initial values; only the first level is used.
    pub initial: FieldSpec,
    /// Lateral boundary values.
    pub lateral: FieldSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { initial: FieldSpec::Zero, lateral: FieldSpec::Ramp { amplitude: 1.0 } }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub beta: f64,
    pub eps0: f64,
}

impl Default for LadderSection {
    fn default() -> Self {
        LadderSection { beta: 0.1, eps0: 0.5 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExistenceSection {
    /// Mollifier radii in lattice units.
    pub scales: Vec<f64>,
}

impl Default for ExistenceSection {
    fn default() -> Self {
        ExistenceSection { scales: vec![4.0, 2.0, 1.0] }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSection {
    /// Percentile of the composite function used as the level.
    pub percentile: f64,
    pub variant: TruncationVariant,
    /// Samples per Whitney cylinder.
    pub samples: usize,
}

impl Default for TruncationSection {
    fn default() -> Self {
        TruncationSection { percentile: 80.0, variant: TruncationVariant::Apriori, samples: 4 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TruncationVariant {
    Apriori,
    /// Cylinder of the `[intrinsic]` section, crossing the initial time.
    Initial,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MaximalOp {
    Strong,
    Neg,
    NegSpacetime,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximalSection {
    pub op: MaximalOp,
    /// Exponent of the negative maximal functions.
    pub theta: f64,
    /// Exponent of the strong-type bound.
    pub q: f64,
    /// Levels at which the weak-type bound is tested.
    pub levels: usize,
}

impl Default for MaximalSection {
    fn default() -> Self {
        MaximalSection { op: MaximalOp::Strong, theta: 1.5, q: 2.0, levels: 12 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhitneySection {
    pub lambda: f64,
    pub sets: usize,
    pub levels: usize,
    pub samples: usize,
}

impl Default for WhitneySection {
    fn default() -> Self {
        WhitneySection { lambda: 1.0, sets: 4, levels: 33, samples: 3 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacitySection {
    /// Radii of the thickness test; two to sixteen cells when empty.
    pub radii: Vec<f64>,
    pub stride: usize,
    /// Smallest accepted thickness ratio.
    pub min_ratio: f64,
}

impl Default for CapacitySection {
    fn default() -> Self {
        CapacitySection { radii: Vec::new(), stride: 8, min_ratio: 0.05 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntrinsicSection {
    pub center: [f64; 2],
    pub t: f64,
    pub rho: f64,
    pub options: IntrinsicOptions,
}

impl Default for IntrinsicSection {
    fn default() -> Self {
        IntrinsicSection { center: [0.5, 0.0], t: 0.0, rho: 0.1, options: IntrinsicOptions::default() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GehringSection {
    /// Weighted function; the gradient magnitude of the solution when absent.
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default = "zero_field")]
    pub majorant: FieldSpec,
    pub center: [f64; 2],
    pub t: f64,
    pub radius: f64,
    pub half_length: f64,
    #[serde(default)]
    pub options: GehringOptions,
}

fn zero_field() -> FieldSpec {
    FieldSpec::Zero
}

impl Default for GehringSection {
    fn default() -> Self {
        GehringSection {
            field: None,
            majorant: FieldSpec::Zero,
            center: [0.5, 0.0],
            t: 0.025,
            radius: 0.4,
            half_length: 0.025,
            options: GehringOptions::default(),
        }
    }
}

impl Config {
    /// Parse the file, returning the configuration and its raw bytes.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::new("io", format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Failure::new("config", format!("{} is not UTF-8", path.display())))?;
        let mut cfg: Config =
            toml::from_str(text).map_err(|e| Failure::new("config", format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, bytes))
    }

    pub fn grid(&self) -> Result<Arc<SpaceTimeGrid>, Failure> {
        let space = make_domain(&self.domain)?;
        Ok(Arc::new(SpaceTimeGrid::new(space, self.time.t0, self.time.t_end, self.time.levels)?))
    }

    pub fn dim(&self) -> usize {
        match self.domain {
            DomainKind::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, Failure> {
        let n = &self.nonlinearity;
        Ok(match n.variant {
            NonlinearityKind::PLaplace => Nonlinearity::p_laplace(n.p, self.dim())?,
            NonlinearityKind::Regularized => Nonlinearity::regularized(n.p, n.eps, self.dim())?,
            NonlinearityKind::Coefficient => coefficient(n.p, n.lambda0, n.lambda1, self.dim())?,
        })
    }

    pub fn ladder(&self) -> Result<ExponentLadder, Failure> {
        Ok(estimates::ladder(self.nonlinearity.p, self.dim(), self.ladder.beta, self.ladder.eps0)?)
    }

    pub fn field(&self, spec: &FieldSpec, grid: &Arc<SpaceTimeGrid>) -> Result<GridFunction, Failure> {
        let space = grid.space();
        let [nx, ny] = space.shape();
        let sp = space.spacing();
        let origin = space.origin();
        // mask extent, excluding the pad ring
        let lo = [origin[0] + sp[0], if space.dim() == 2 { origin[1] + sp[1] } else { 0.0 }];
        let ext = [(nx - 3) as f64 * sp[0], if space.dim() == 2 { (ny - 3) as f64 * sp[1] } else { 1.0 }];
        let rel = |x: [f64; 2]| [(x[0] - lo[0]) / ext[0], if space.dim() == 2 { (x[1] - lo[1]) / ext[1] } else { 0.0 }];
        let (t0, span) = (grid.t0(), grid.t_end() - grid.t0());
        let floor = 0.5 * space.min_spacing();
        Ok(match spec {
            FieldSpec::Zero => GridFunction::zeros(grid.clone()),
            &FieldSpec::Ramp { amplitude } => GridFunction::from_fn(grid.clone(), |x, t| {
                let y = rel(x);
                amplitude * ((t - t0) / span) * (1.0 + y[0] + y[1] + 0.5 * (3.0 * std::f64::consts::PI * y[0]).sin())
            }),
            &FieldSpec::Sine { amplitude, modes } => GridFunction::from_fn(grid.clone(), |x, _| {
                let y = rel(x);
                let m = modes as f64 * std::f64::consts::PI;
                let s = (m * y[0]).sin();
                amplitude * if space.dim() == 2 { s * (m * y[1]).sin() } else { s }
            }),
            &FieldSpec::Radial { amplitude, center, exponent } => GridFunction::from_fn(grid.clone(), |x, _| {
                amplitude * space.distance(x, center).max(floor).powf(exponent)
            }),
            FieldSpec::File { path } => {
                let full = self.base.join(path);
                let file = std::fs::File::open(&full)
                    .map_err(|e| Failure::new("io", format!("cannot open {}: {e}", full.display())))?;
                let f = read_pgrd(std::io::BufReader::new(file))?;
                if f.grid().len() != grid.len() || f.grid().space().shape() != space.shape() {
                    return Err(Error::DimsMismatch(format!("{} does not match the configured grid", full.display())).into());
                }
                GridFunction::from_values(grid.clone(), f.into_values())?
            }
        })
    }
}

fn coefficient(p: f64, lo: f64, hi: f64, dim: usize) -> Result<Nonlinearity, Failure> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Failure::new("config", format!("need 0 < lambda0 <= lambda1, got {lo}, {hi}")));
    }
    let base = Nonlinearity::p_laplace(p, dim)?;
    let field: FluxFn = Arc::new(move |x: [f64; 2], _, z: [f64; 2]| {
        let a = lo + (hi - lo) * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * (x[0] + x[1])).sin());
        let s = (z[0] * z[0] + z[1] * z[1]).powf(0.5 * (p - 2.0));
        if s.is_finite() { [a * s * z[0], a * s * z[1]] } else { [0.0, 0.0] }
    });
    Ok(Nonlinearity::user(p, dim, [lo * base.lambda0, hi, 0.0, 0.0], field)?)
}
