//! Run configuration shared by the pipeline and the command-line driver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::LoweringOrder;
use crate::lattice::{classify_geometry, Geometry, GeometryClass, TorusConfig, Vertex};
use crate::qfock::{ModelParams, DEFAULT_SECTOR_CAP};
use crate::spectral::{family, PolyFamily, SolveMode, SolveOptions};
use crate::verify::Diagonalizer;

/// Positions given by class name (`line`, `coincident`, `generic`,
/// `grid:KxL`) or as explicit `[k, l]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Named(String),
    Positions(Vec<[i64; 2]>),
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec::Named("line".into())
    }
}

impl GeometrySpec {
    /// Parse a command-line value: a class name or `k,l;k,l;...`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains(',') {
            let pts = s
                .split(';')
                .map(|p| {
                    let xs: Vec<i64> = p
                        .split(',')
                        .map(|x| x.trim().parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::InvalidParameter(format!("bad position list '{s}'")))?;
                    match xs[..] {
                        [k, l] => Ok([k, l]),
                        _ => Err(Error::InvalidParameter(format!("bad position '{p}'"))),
                    }
                })
                .collect::<Result<_>>()?;
            Ok(GeometrySpec::Positions(pts))
        } else {
            Ok(GeometrySpec::Named(s.to_ascii_lowercase()))
        }
    }

    pub fn positions(&self, cfg: TorusConfig, n: usize) -> Result<Vec<Vertex>> {
        let at = |k: i64, l: i64| cfg.vertex(k, l);
        match self {
            GeometrySpec::Positions(ps) => Ok(ps.iter().map(|&[k, l]| at(k, l)).collect()),
            GeometrySpec::Named(name) => match name.as_str() {
                "line" => Ok((0..n as i64).map(|i| at(i, 0)).collect()),
                "coincident" => Ok(vec![Vertex::ORIGIN; n]),
                "generic" => Ok((0..n as i64).map(|i| at(i, i)).collect()),
                other => {
                    let (k, l) = parse_grid(other)?;
                    if k * l != n {
                        return Err(Error::InvalidParameter(format!("grid {k}x{l} does not hold N = {n}")));
                    }
                    Ok((0..l as i64)
                        .flat_map(|b| (0..k as i64).map(move |a| (a, b)))
                        .map(|(a, b)| at(a, b))
                        .collect())
                }
            },
        }
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("unknown geometry '{s}'"));
    let dims = s.strip_prefix("grid:").ok_or_else(bad)?;
    let (k, l) = dims.split_once('x').ok_or_else(bad)?;
    Ok((k.parse().map_err(|_| bad())?, l.parse().map_err(|_| bad())?))
}

/// Parse a family name: `binomial`/`line`, `q-binomial`/`coincident`/
/// `generic`, or `grid:KxL`.
pub fn parse_family(s: &str, n: usize) -> Result<PolyFamily> {
    match s.to_ascii_lowercase().as_str() {
        "binomial" | "line" => Ok(PolyFamily::binomial(n)),
        "q-binomial" | "qbinomial" | "coincident" | "generic" => Ok(PolyFamily::q_binomial(n)),
        other => {
            let (k, l) = parse_grid(other)?;
            family(GeometryClass::Grid { k, l }, n)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Lowering {
    #[default]
    Standard,
    Alternate,
    ImpurityFirst,
}

impl Lowering {
    pub fn order(self) -> LoweringOrder {
        match self {
            Lowering::Standard => LoweringOrder::STANDARD,
            Lowering::Alternate => LoweringOrder::ALTERNATE,
            Lowering::ImpurityFirst => LoweringOrder::IMPURITY_FIRST,
        }
    }
}

/// Whether verification also demands that the spectrum seen by the
/// geometry's impurity seed is fully predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resolve {
    /// On for coincident, line and grid geometries.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub unitarity: f64,
    pub residual: f64,
    #[serde(rename = "match")]
    pub match_: f64,
    pub dedup: f64,
    pub solve: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitarity: 1e-10,
            residual: 1e-8,
            match_: 1e-7,
            dedup: 1e-6,
            solve: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Directory for reports when no explicit path is given.
    pub dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub m: usize,
    pub q: f64,
    pub n: usize,
    pub geometry: GeometrySpec,
    /// Family override; by default the family follows the geometry class.
    pub family: Option<String>,
    pub mode: SolveMode,
    pub diagonalizer: Diagonalizer,
    pub lowering: Lowering,
    pub resolve: Resolve,
    pub tolerances: Tolerances,
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub sector_cap: usize,
    /// Required multiplicity of each matched eigenvalue; `M²` for one
    /// particle and `1` otherwise when unset.
    pub expected_multiplicity: Option<usize>,
    /// Record wall-clock timings in reports (breaks byte-reproducibility).
    pub timings: bool,
    /// Random non-solutions probed by the bethe command.
    pub controls: usize,
    pub output: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opts = SolveOptions::default();
        Self {
            m: 2,
            q: 0.5,
            n: 1,
            geometry: GeometrySpec::default(),
            family: None,
            mode: SolveMode::UParametrized,
            diagonalizer: Diagonalizer::Momentum,
            lowering: Lowering::Standard,
            resolve: Resolve::Auto,
            tolerances: Tolerances::default(),
            starts: opts.starts,
            max_iter: opts.max_iter,
            seed: opts.seed,
            sector_cap: DEFAULT_SECTOR_CAP,
            expected_multiplicity: None,
            timings: false,
            controls: 8,
            output: Outputs::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("bad config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParameter("q must lie in (0,1)".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        let t = &self.tolerances;
        if [t.unitarity, t.residual, t.match_, t.dedup, t.solve]
            .iter()
            .any(|&x| !(x > 0.0 && x.is_finite()))
        {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.starts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidParameter("multistart budget must be positive".into()));
        }
        if self.sector_cap == 0 {
            return Err(Error::InvalidParameter("sector cap must be positive".into()));
        }
        Ok(())
    }

    pub fn torus(&self) -> Result<TorusConfig> {
        TorusConfig::new(self.m)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.q)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let cfg = self.torus()?;
        let positions = self.geometry.positions(cfg, self.n)?;
        if positions.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "geometry has {} positions for N = {}",
                positions.len(),
                self.n
            )));
        }
        classify_geometry(&positions, cfg)
    }

    pub fn family(&self, geom: &Geometry) -> Result<PolyFamily> {
        match &self.family {
            Some(name) => parse_family(name, self.n),
            None => family(geom.class, self.n),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            starts: self.starts,
            seed: self.seed,
            tol: self.tolerances.solve,
            dedup: self.tolerances.dedup,
            max_iter: self.max_iter,
            ..SolveOptions::default()
        }
    }

    pub fn expected_multiplicity(&self) -> usize {
        self.expected_multiplicity
            .unwrap_or(if self.n == 1 { self.m * self.m } else { 1 })
    }

    pub fn resolves(&self, geom: &Geometry) -> bool {
        match self.resolve {
            Resolve::On => true,
            Resolve::Off => false,
            Resolve::Auto => geom.class != GeometryClass::Generic,
        }
    }
}
