//! Brute-force spectra of evolution blocks and containment tests for
//! predicted eigenvalues.
//!
//! `U` commutes with lattice translations, so a sector splits into `M²`
//! momentum blocks. Each block is diagonalized densely; the union of the
//! block spectra is the sector spectrum.

use std::f64::consts::TAU;
use std::time::Instant;

use ndarray::Array2;
use ndarray_linalg::Eig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::{build_evolution_with, Evolution, EvolutionBlock};
use crate::lattice::{Family, Geometry, ModeId, TorusConfig};
use crate::linalg::{eigvals, C64};
use crate::qfock::{sector_size, FockSpace, ModelParams, SectorCharge, StateVec, DEFAULT_SECTOR_CAP};
use crate::spectral::{solve_system, Branch, SolutionSet};

pub const CLUSTER_RADIUS: f64 = 1e-7;

/// Weights below this count as "not seen" by a seed state.
pub const SEED_WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub value: C64,
    pub multiplicity: usize,
}

/// Greedy clustering: each value joins the first cluster whose running mean
/// lies within `radius`, and clusters come out sorted by angle.
pub fn cluster_eigenvalues(values: &[C64], radius: f64) -> Vec<Cluster> {
    let mut sums: Vec<(C64, usize)> = Vec::new();
    let mut sorted = values.to_vec();
    sort_by_angle(&mut sorted);
    for v in sorted {
        match sums
            .iter_mut()
            .find(|(s, n)| (*s / *n as f64 - v).norm() <= radius)
        {
            Some((s, n)) => {
                *s += v;
                *n += 1;
            }
            None => sums.push((v, 1)),
        }
    }
    let mut out: Vec<Cluster> = sums
        .into_iter()
        .map(|(s, n)| Cluster {
            value: s / n as f64,
            multiplicity: n,
        })
        .collect();
    out.sort_by(|a, b| angle_key(a.value).total_cmp(&angle_key(b.value)));
    out
}

/// Angle in `[0, 2π)`, with angles within `1e-9` of `2π` folded to `0`.
fn angle_key(z: C64) -> f64 {
    let a = z.arg().rem_euclid(TAU);
    if TAU - a < 1e-9 {
        0.0
    } else {
        a
    }
}

fn sort_by_angle(v: &mut [C64]) {
    v.sort_by(|a, b| angle_key(*a).total_cmp(&angle_key(*b)));
}

/// Translation orbits of a sector basis.
#[derive(Debug, Clone)]
pub struct TranslationOrbits {
    m: usize,
    /// Representative state index of each orbit.
    pub reps: Vec<usize>,
    /// Shifts `(a, b)` fixing the representative.
    pub stabilizers: Vec<Vec<(usize, usize)>>,
    /// For each state: its orbit and a shift carrying the representative onto it.
    pub placement: Vec<(usize, (usize, usize))>,
}

impl TranslationOrbits {
    pub fn new(block: &EvolutionBlock, cfg: TorusConfig) -> Result<Self> {
        let m = cfg.m();
        let perms: Vec<Vec<usize>> = (0..m * m)
            .map(|t| {
                let (a, b) = (t % m, t / m);
                (0..cfg.num_modes())
                    .map(|i| {
                        let mode = cfg.mode_at(i);
                        let v = cfg.translate(mode.vertex, a as i64, b as i64);
                        cfg.mode_index(crate::lattice::ModeId::new(mode.family, v))
                    })
                    .collect()
            })
            .collect();
        let dim = block.dim();
        let mut placement = vec![(usize::MAX, (0, 0)); dim];
        let mut reps = Vec::new();
        let mut stabilizers = Vec::new();
        let mut img = vec![0u16; cfg.num_modes()];
        for s in 0..dim {
            if placement[s].0 != usize::MAX {
                continue;
            }
            let orbit = reps.len();
            reps.push(s);
            let mut stab = Vec::new();
            let counts = block.basis.state(s).counts();
            for (t, perm) in perms.iter().enumerate() {
                for (i, &c) in counts.iter().enumerate() {
                    img[perm[i]] = c;
                }
                let j = block
                    .basis
                    .index_of_counts(&img)
                    .ok_or(Error::OutsideSector(block.charge))?;
                let shift = (t % m, t / m);
                if j == s {
                    stab.push(shift);
                }
                if placement[j].0 == usize::MAX {
                    placement[j] = (orbit, shift);
                }
            }
            stabilizers.push(stab);
        }
        Ok(Self {
            m,
            reps,
            stabilizers,
            placement,
        })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    fn orbit_size(&self, o: usize) -> usize {
        self.m * self.m / self.stabilizers[o].len()
    }

    /// `χ_p(a, b) = exp(2πi (p₁a + p₂b)/M)`.
    fn character(&self, p: (usize, usize), t: (usize, usize)) -> C64 {
        C64::from_polar(1.0, TAU * ((p.0 * t.0 + p.1 * t.1) % self.m) as f64 / self.m as f64)
    }

    /// Orbits carrying a state of momentum `p`.
    pub fn allowed(&self, p: (usize, usize)) -> Vec<usize> {
        (0..self.len())
            .filter(|&o| {
                self.stabilizers[o]
                    .iter()
                    .all(|&t| (self.character(p, t) - 1.0).norm() < 1e-12)
            })
            .collect()
    }

    pub fn momenta(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m * self.m).map(|i| (i % self.m, i / self.m))
    }

    /// `⟨o, p| v⟩` for a full-sector vector `v`, over `allowed`.
    pub fn project(&self, p: (usize, usize), allowed: &[usize], v: &[C64]) -> Vec<C64> {
        let mut pos = vec![usize::MAX; self.len()];
        for (i, &o) in allowed.iter().enumerate() {
            pos[o] = i;
        }
        let mut out = vec![C64::new(0.0, 0.0); allowed.len()];
        for (s, &(o, t)) in self.placement.iter().enumerate() {
            if pos[o] != usize::MAX && v[s] != C64::new(0.0, 0.0) {
                out[pos[o]] += self.character(p, t) * v[s] / (self.orbit_size(o) as f64).sqrt();
            }
        }
        out
    }

    /// The block of `U` at momentum `p` in the basis `|o, p⟩`, `o ∈ allowed`.
    pub fn momentum_block(
        &self,
        block: &EvolutionBlock,
        p: (usize, usize),
        allowed: &[usize],
    ) -> Array2<C64> {
        let k = allowed.len();
        let mut out = Array2::from_elem((k, k), C64::new(0.0, 0.0));
        for (j, &o) in allowed.iter().enumerate() {
            let col: Vec<C64> = block.matrix.column(self.reps[o]).to_vec();
            let proj = self.project(p, allowed, &col);
            let scale = (self.orbit_size(o) as f64).sqrt();
            for (i, z) in proj.into_iter().enumerate() {
                out[[i, j]] = z * scale;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonalizer {
    Dense,
    Momentum,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub dim: usize,
    pub clusters: Vec<Cluster>,
    pub method: Diagonalizer,
    /// `max ||λ| − 1|` before clustering.
    pub unit_defect: f64,
}

impl Spectrum {
    pub fn total_multiplicity(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }

    /// Nearest cluster to `z`.
    pub fn nearest(&self, z: C64) -> Option<(usize, f64)> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c.value - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,multiplicity\n");
        for c in &self.clusters {
            s.push_str(&format!("{:.15e},{:.15e},{}\n", c.value.re, c.value.im, c.multiplicity));
        }
        s
    }
}

fn check_cap(block: &EvolutionBlock) -> Result<()> {
    if block.dim() > DEFAULT_SECTOR_CAP {
        return Err(Error::SectorCap {
            charge: block.charge,
            size: block.dim() as _,
            cap: DEFAULT_SECTOR_CAP,
        });
    }
    Ok(())
}

/// Full spectrum of a block, clustered at [`CLUSTER_RADIUS`].
pub fn diagonalize(block: &EvolutionBlock, cfg: TorusConfig, method: Diagonalizer) -> Result<Spectrum> {
    check_cap(block)?;
    let values = match method {
        Diagonalizer::Dense => eigvals(&block.matrix)?,
        Diagonalizer::Momentum => {
            let orbits = TranslationOrbits::new(block, cfg)?;
            let mut all = Vec::with_capacity(block.dim());
            for p in orbits.momenta() {
                let allowed = orbits.allowed(p);
                all.extend(eigvals(&orbits.momentum_block(block, p, &allowed))?);
            }
            all
        }
    };
    let unit_defect = values.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    Ok(Spectrum {
        dim: block.dim(),
        clusters: cluster_eigenvalues(&values, CLUSTER_RADIUS),
        method,
        unit_defect,
    })
}

/// `‖P_λ ψ‖²/‖ψ‖²` for every eigenvalue cluster `λ` of the block, where `ψ` is
/// a seed state. Eigenvectors of each momentum block are orthonormalized
/// within a cluster before projecting.
pub fn seed_weights(
    block: &EvolutionBlock,
    cfg: TorusConfig,
    seed: &StateVec,
) -> Result<Vec<(C64, f64)>> {
    check_cap(block)?;
    let psi = block.basis.coordinates(seed)?;
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let orbits = TranslationOrbits::new(block, cfg)?;
    let mut out = Vec::new();
    for p in orbits.momenta() {
        let allowed = orbits.allowed(p);
        if allowed.is_empty() {
            continue;
        }
        let coeffs = orbits.project(p, &allowed, &psi);
        if coeffs.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        let mb = orbits.momentum_block(block, p, &allowed);
        let (vals, vecs) = mb.eig().map_err(|e| Error::Linalg(e.to_string()))?;
        let vals = vals.to_vec();
        for c in cluster_eigenvalues(&vals, CLUSTER_RADIUS) {
            let cols: Vec<usize> = (0..vals.len())
                .filter(|&i| (vals[i] - c.value).norm() <= CLUSTER_RADIUS * 10.0)
                .collect();
            let basis = orthonormalize(cols.iter().map(|&i| vecs.column(i).to_vec()).collect());
            let w: f64 = basis
                .iter()
                .map(|b| {
                    b.iter()
                        .zip(&coeffs)
                        .map(|(x, y)| x.conj() * y)
                        .sum::<C64>()
                        .norm_sqr()
                })
                .sum();
            out.push((c.value, w / norm2));
        }
    }
    Ok(out)
}

/// Modified Gram-Schmidt; drops numerically dependent vectors.
fn orthonormalize(vs: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for mut v in vs {
        for _ in 0..2 {
            for b in &out {
                let d: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            out.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    out
}

/// Totals of seed weight per distinct eigenvalue, merged across momenta.
pub fn merge_weights(weights: &[(C64, f64)], radius: f64) -> Vec<(C64, f64)> {
    let mut out: Vec<(C64, f64)> = Vec::new();
    for &(z, w) in weights {
        match out.iter_mut().find(|(c, _)| (*c - z).norm() <= radius) {
            Some((_, acc)) => *acc += w,
            None => out.push((z, w)),
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionMatch {
    pub lambda: [f64; 2],
    pub branch: Option<Branch>,
    pub nearest: [f64; 2],
    pub distance: f64,
    pub multiplicity: usize,
    /// Seed weight within `tol` of the prediction, when a seed was supplied.
    pub seed_weight: Option<f64>,
    pub pass: bool,
}

/// Eigenvalues carried by the impurity seed of a geometry that no
/// prediction accounts for.
#[derive(Debug, Clone, Serialize)]
pub struct Coverage {
    /// Distinct eigenvalues with seed weight above [`SEED_WEIGHT_FLOOR`].
    pub seen: usize,
    /// `[re, im, weight]` of each unexplained eigenvalue.
    pub unexplained: Vec<[f64; 3]>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub config: serde_json::Value,
    pub tol: f64,
    pub expected_multiplicity: usize,
    pub dim: usize,
    pub eigenvalues: Vec<Cluster>,
    pub predictions: Vec<Prediction>,
    pub matches: Vec<PredictionMatch>,
    /// Share of the sector left over once each passing prediction accounts
    /// for `expected_multiplicity` states of its eigenvalue.
    pub unmatched_fraction: f64,
    pub coverage: Option<Coverage>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<serde_json::Value>,
}

impl MatchReport {
    pub fn all_pass(&self) -> bool {
        self.matches.iter().all(|m| m.pass)
    }

    pub fn passed(&self) -> usize {
        self.matches.iter().filter(|m| m.pass).count()
    }

    /// Containment, plus coverage when it was requested.
    pub fn verdict(&self) -> bool {
        self.all_pass() && self.coverage.as_ref().is_none_or(|c| c.pass)
    }
}

/// Predicted eigenvalue with an optional branch tag.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prediction {
    #[serde(serialize_with = "pair")]
    pub lambda: C64,
    pub branch: Option<Branch>,
}

fn pair<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

pub fn predictions(set: &SolutionSet) -> Vec<Prediction> {
    set.solutions
        .iter()
        .filter_map(|s| {
            s.lambda.map(|lambda| Prediction {
                lambda,
                branch: Some(s.branch),
            })
        })
        .collect()
}

/// Containment test of predictions in a spectrum. Seed weights, when given,
/// are recorded per prediction but do not affect the verdict.
pub fn match_spectrum(
    preds: &[Prediction],
    spectrum: &Spectrum,
    tol: f64,
    expected_multiplicity: usize,
    seed: Option<&[(C64, f64)]>,
) -> MatchReport {
    let mut hit = vec![0usize; spectrum.clusters.len()];
    let matches = preds
        .iter()
        .map(|p| {
            let (i, d) = spectrum.nearest(p.lambda).unwrap_or((usize::MAX, f64::INFINITY));
            let (nearest, mult) = spectrum
                .clusters
                .get(i)
                .map_or((C64::new(f64::NAN, f64::NAN), 0), |c| (c.value, c.multiplicity));
            let seed_weight = seed.map(|ws| {
                ws.iter()
                    .filter(|(z, _)| (*z - p.lambda).norm() <= tol)
                    .map(|(_, w)| w)
                    .sum::<f64>()
            });
            let pass = d <= tol && mult >= expected_multiplicity;
            if pass {
                hit[i] += 1;
            }
            PredictionMatch {
                lambda: [p.lambda.re, p.lambda.im],
                branch: p.branch,
                nearest: [nearest.re, nearest.im],
                distance: d,
                multiplicity: mult,
                seed_weight,
                pass,
            }
        })
        .collect();
    let covered: usize = spectrum
        .clusters
        .iter()
        .zip(&hit)
        .map(|(c, &h)| c.multiplicity.min(h * expected_multiplicity.max(1)))
        .sum();
    let unmatched_fraction = if spectrum.dim == 0 {
        0.0
    } else {
        1.0 - covered as f64 / spectrum.dim as f64
    };
    let mut report = MatchReport {
        config: json!({}),
        tol,
        expected_multiplicity,
        dim: spectrum.dim,
        eigenvalues: spectrum.clusters.clone(),
        predictions: preds.to_vec(),
        matches,
        unmatched_fraction,
        coverage: None,
        pass: false,
        timings: None,
    };
    report.pass = report.verdict();
    report
}

/// Every eigenvalue the seed sees must lie within `tol` of a prediction.
pub fn coverage(preds: &[Prediction], weights: &[(C64, f64)], tol: f64) -> Coverage {
    let seen: Vec<&(C64, f64)> = weights.iter().filter(|(_, w)| *w > SEED_WEIGHT_FLOOR).collect();
    let unexplained: Vec<[f64; 3]> = seen
        .iter()
        .filter(|(z, _)| preds.iter().all(|p| (p.lambda - z).norm() > tol))
        .map(|(z, w)| [z.re, z.im, *w])
        .collect();
    Coverage {
        seen: seen.len(),
        pass: unexplained.is_empty(),
        unexplained,
    }
}

/// `∏ a⁺₂,ᵥ |0⟩` over the positions of a geometry.
pub fn impurity_seed(cfg: TorusConfig, params: ModelParams, geom: &Geometry) -> StateVec {
    let modes: Vec<ModeId> = geom.positions.iter().map(|&v| ModeId::new(Family::Two, v)).collect();
    FockSpace::new(cfg, params).create(&modes)
}

/// Everything one verification run produces.
#[derive(Debug)]
pub struct Experiment {
    pub block: EvolutionBlock,
    pub spectrum: Spectrum,
    pub solutions: Option<SolutionSet>,
    pub report: MatchReport,
}

/// Resolved configuration echoed into every report.
pub fn config_echo(config: &RunConfig) -> Result<serde_json::Value> {
    let mut echo = serde_json::to_value(config)?;
    if let Ok(geom) = config.geometry() {
        let pos: Vec<[usize; 2]> = geom.positions.iter().map(|v| [v.k, v.l]).collect();
        echo["resolved_geometry"] = json!({ "class": geom.class.to_string(), "positions": pos });
        if let Ok(fam) = config.family(&geom) {
            echo["resolved_family"] = fam.to_json();
        }
    }
    Ok(echo)
}

/// Sector `(N, N)` → `U` → spectrum → family → spectral solutions → match.
pub fn run_experiment(config: &RunConfig) -> Result<MatchReport> {
    run_experiment_full(config).map(|e| e.report)
}

pub fn run_experiment_full(config: &RunConfig) -> Result<Experiment> {
    let mut timings = Timings::default();
    config.validate().map_err(|e| e.at("config"))?;
    let cfg = config.torus().map_err(|e| e.at("config"))?;
    let params = config.params().map_err(|e| e.at("config"))?;
    let charge = SectorCharge::particles(config.n as u32);
    let size = sector_size(cfg, charge);
    if size > config.sector_cap as u128 {
        return Err(Error::SectorCap {
            charge,
            size: size.min(usize::MAX as u128) as usize,
            cap: config.sector_cap,
        }
        .at("enumerate"));
    }
    let evo = Evolution::with_cap(cfg, params, config.sector_cap).with_order(config.lowering.order());
    let block = build_evolution_with(evo, charge).map_err(|e| e.at("build"))?;
    timings.lap("build");
    let spectrum = diagonalize(&block, cfg, config.diagonalizer).map_err(|e| e.at("diagonalize"))?;
    timings.lap("diagonalize");

    let (solutions, preds, geom) = if config.n == 0 {
        (None, vec![Prediction { lambda: C64::new(1.0, 0.0), branch: None }], None)
    } else {
        let geom = config.geometry().map_err(|e| e.at("geometry"))?;
        let fam = config.family(&geom).map_err(|e| e.at("family"))?;
        let set = solve_system(config.n, config.m, config.q, &fam, config.mode, &config.solve_options())
            .map_err(|e| e.at("solve"))?;
        timings.lap("solve");
        let preds = predictions(&set);
        (Some(set), preds, Some(geom))
    };

    let weights = match &geom {
        Some(g) if config.n > 0 && config.resolves(g) => {
            let seed = impurity_seed(cfg, params, g);
            Some(merge_weights(
                &seed_weights(&block, cfg, &seed).map_err(|e| e.at("seed"))?,
                CLUSTER_RADIUS,
            ))
        }
        _ => None,
    };
    let tol = config.tolerances.match_;
    let mut report = match_spectrum(&preds, &spectrum, tol, config.expected_multiplicity(), weights.as_deref());
    report.coverage = weights.as_deref().map(|w| coverage(&preds, w, tol));
    report.pass = report.verdict();
    report.config = config_echo(config)?;
    timings.lap("match");
    if config.timings {
        report.timings = Some(timings.to_json());
    }
    Ok(Experiment {
        block,
        spectrum,
        solutions,
        report,
    })
}

/// Wall-clock stopwatch for report timings.
#[derive(Debug)]
pub struct Timings {
    start: Instant,
    entries: Vec<(String, f64)>,
}

impl Default for Timings {
    fn default() -> Self {
        Self {
            start: Instant::now(),
            entries: Vec::new(),
        }
    }
}

impl Timings {
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.entries
            .push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{build_evolution, LoweringOrder};
    use crate::spectral::one_particle_roots;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn block(m: usize, q: f64, n: u32) -> EvolutionBlock {
        let cfg = TorusConfig::new(m).unwrap();
        build_evolution(cfg, ModelParams::new(q).unwrap(), SectorCharge::particles(n)).unwrap()
    }

    fn m2_one_particle() -> &'static Spectrum {
        static S: OnceLock<Spectrum> = OnceLock::new();
        S.get_or_init(|| diagonalize(&block(2, 0.5, 1), TorusConfig::new(2).unwrap(), Diagonalizer::Dense).unwrap())
    }

    fn root_predictions(m: usize, q: f64) -> Vec<Prediction> {
        one_particle_roots(m, q)
            .unwrap()
            .into_iter()
            .map(|lambda| Prediction { lambda, branch: None })
            .collect()
    }

    #[test]
    fn vacuum_sector_is_one() {
        let s = diagonalize(&block(3, 0.6, 0), TorusConfig::new(3).unwrap(), Diagonalizer::Dense).unwrap();
        assert_eq!(s.clusters.len(), 1);
        assert_eq!(s.clusters[0].multiplicity, 1);
        assert!((s.clusters[0].value - 1.0).norm() < 1e-14);
    }

    #[test]
    fn one_particle_spectrum_contains_roots() {
        let s = m2_one_particle();
        assert_eq!(s.dim, 20);
        assert_eq!(s.total_multiplicity(), 20);
        assert!(s.unit_defect < 1e-8);
        let r = match_spectrum(&root_predictions(2, 0.5), s, 1e-8, 4, None);
        assert_eq!(r.passed(), 3);
        assert!(r.matches.iter().all(|m| m.multiplicity >= 4));
        assert!((r.unmatched_fraction - 8.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_report_nothing() {
        let r = match_spectrum(&[], m2_one_particle(), 1e-7, 1, None);
        assert!(r.matches.is_empty());
        assert!(r.verdict());
        assert_eq!(r.unmatched_fraction, 1.0);
    }

    #[test]
    fn momentum_blocks_agree_with_dense() {
        for (m, n) in [(2, 1), (2, 2), (3, 1)] {
            let cfg = TorusConfig::new(m).unwrap();
            let b = block(m, 0.6, n);
            let dense = diagonalize(&b, cfg, Diagonalizer::Dense).unwrap();
            let mom = diagonalize(&b, cfg, Diagonalizer::Momentum).unwrap();
            assert_eq!(dense.total_multiplicity(), mom.total_multiplicity());
            assert_eq!(dense.clusters.len(), mom.clusters.len());
            for (a, c) in dense.clusters.iter().zip(&mom.clusters) {
                assert_eq!(a.multiplicity, c.multiplicity);
                assert!((a.value - c.value).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn spectrum_independent_of_lowering_order() {
        let cfg = TorusConfig::new(2).unwrap();
        let params = ModelParams::new(0.7).unwrap();
        let charge = SectorCharge::particles(2);
        let a = build_evolution(cfg, params, charge).unwrap();
        let b = build_evolution_with(Evolution::new(cfg, params).with_order(LoweringOrder::ALTERNATE), charge).unwrap();
        let sa = diagonalize(&a, cfg, Diagonalizer::Dense).unwrap();
        let sb = diagonalize(&b, cfg, Diagonalizer::Dense).unwrap();
        assert_eq!(sa.clusters.len(), sb.clusters.len());
        for (x, y) in sa.clusters.iter().zip(&sb.clusters) {
            assert_eq!(x.multiplicity, y.multiplicity);
            assert!((x.value - y.value).norm() < 1e-8);
        }
    }

    #[test]
    fn seed_weights_sum_to_one() {
        let cfg = TorusConfig::new(3).unwrap();
        let params = ModelParams::new(0.6).unwrap();
        let b = block(3, 0.6, 1);
        let seed = FockSpace::new(cfg, params).create(&[ModeId::new(Family::Two, crate::lattice::Vertex::ORIGIN)]);
        let w = merge_weights(&seed_weights(&b, cfg, &seed).unwrap(), CLUSTER_RADIUS);
        let total: f64 = w.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let cov = coverage(&root_predictions(3, 0.6), &w, 1e-7);
        assert!(cov.pass, "{:?}", cov.unexplained);
        assert_eq!(cov.seen, 4);
    }

    #[test]
    fn clustering_merges_close_values() {
        let vals = [C64::new(1.0, 0.0), C64::new(1.0, 1e-9), C64::new(-1.0, 0.0)];
        let c = cluster_eigenvalues(&vals, 1e-7);
        assert_eq!(c.len(), 2);
        assert_eq!(c.iter().map(|c| c.multiplicity).sum::<usize>(), 3);
    }

    #[test]
    fn one_particle_experiment_passes() {
        let r = run_experiment(&RunConfig::default()).unwrap();
        assert_eq!(r.matches.len(), 3);
        assert!(r.pass);
        assert!(r.coverage.as_ref().unwrap().pass);
        assert_eq!(r.config["m"], 2);
    }

    #[test]
    fn experiment_errors_carry_stage() {
        let bad = RunConfig { q: 2.0, ..RunConfig::default() };
        let e = run_experiment(&bad).unwrap_err();
        assert!(matches!(e, Error::Stage { stage: "config", .. }));
        let big = RunConfig { m: 4, n: 3, ..RunConfig::default() };
        let e = run_experiment(&big).unwrap_err();
        assert!(matches!(e.root(), Error::SectorCap { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn match_is_monotone_in_tol(re in -1.2f64..1.2, im in -1.2f64..1.2, t1 in 1e-10f64..1.0, f in 1.0f64..10.0) {
            let preds = [Prediction { lambda: C64::new(re, im), branch: None }];
            let s = m2_one_particle();
            let a = match_spectrum(&preds, s, t1, 1, None);
            let b = match_spectrum(&preds, s, t1 * f, 1, None);
            prop_assert!(!a.all_pass() || b.all_pass());
        }
    }
}
