//! Bethe-type eigenstates: the one-particle wave and the multi-particle
//! linear system over assignment coefficients.
//!
//! A multi-particle trial state is linear in its unknowns:
//!
//! - `C(û)` for every assignment `û` of spectral parameters to positions;
//!   it multiplies the impurity term and the one-pair terms whose
//!   `g`-segment is pinned (first and last segment of each chain),
//! - `C(û)·g` for every interior chain segment,
//! - free amplitudes where quanta from different factors meet: the
//!   impurity term and the one-pair terms of coincident positions, and all
//!   terms with two or more decayed pairs.
//!
//! Writing `Ψ = B(u)·y`, the eigen equation `(U − Λ)B(u)y = 0` with
//! `Λ = ∏u` is solved in the least-squares sense. Its smallest singular value
//! is the consistency condition: it vanishes exactly when the ansatz closes.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evolution::EvolutionBlock;
use crate::lattice::{
    cyclic_reanchor, delta_schedule, Direction, Family, Geometry, GeometryClass, ModeId,
    TorusConfig, Vertex,
};
use crate::linalg::{svd, C64};
use crate::qfock::{FockSpace, ModelParams, Occupation, SectorCharge, StateVec};
use crate::spectral::permutations;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Singular values below this count towards the null space.
pub const NULL_TOL: f64 = 1e-8;

/// `A⁺_v(u)` with a single chain coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneParticleWave {
    pub base: Vertex,
    pub u: C64,
    pub g: C64,
}

impl OneParticleWave {
    pub fn new(base: Vertex, u: C64, q: f64) -> Self {
        Self {
            base,
            u,
            g: opening_g(u, q),
        }
    }

    /// Chain value demanded at the closing end of the torus.
    pub fn closing_g(&self, q: f64, m: usize) -> C64 {
        closing_g(self.u, q, m)
    }

    pub fn state(&self, fock: &FockSpace) -> StateVec {
        let cfg = fock.cfg;
        let mut s = fock.create(&[ModeId::new(Family::Two, self.base)]);
        for k in 1..=cfg.m() {
            let pair = fock.create(&pair_modes(cfg, self.base, k));
            s = s.plus(&pair.scale(self.g * self.u.powi(-(k as i32))));
        }
        s.prune();
        s
    }
}

/// `(1 + qu)/(1 − q²)`
pub fn opening_g(u: C64, q: f64) -> C64 {
    (1.0 + q * u) / (1.0 - q * q)
}

/// `(q + u)uᴹ/(1 − q²)`
pub fn closing_g(u: C64, q: f64, m: usize) -> C64 {
    (q + u) * u.powu(m as u32) / (1.0 - q * q)
}

/// Modes of the photon pair `a⁺₁,ᵥ₊δₑ₁ a⁺₃,ᵥ₊δₑ₃`.
fn pair_modes(cfg: TorusConfig, v: Vertex, delta: usize) -> [ModeId; 2] {
    [
        ModeId::new(Family::One, cfg.shift(v, Direction::E1, delta as i64)),
        ModeId::new(Family::Three, cfg.shift(v, Direction::E3, delta as i64)),
    ]
}

pub fn one_particle_state(cfg: TorusConfig, params: ModelParams, v: Vertex, u: C64) -> StateVec {
    let fock = FockSpace::new(cfg, params);
    OneParticleWave::new(v, u, params.q()).state(&fock)
}

/// `‖U ψ − Λ ψ‖ / ‖ψ‖`.
pub fn eigen_residual(block: &EvolutionBlock, state: &StateVec, lambda: C64) -> Result<f64> {
    let coords = block.basis.coordinates(state)?;
    let norm = coords.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let v = Array1::from(coords);
    let image = block.matrix.dot(&v);
    let r = image
        .iter()
        .zip(v.iter())
        .map(|(a, b)| (a - lambda * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(r / norm)
}

/// Placement of spectral parameters: slot `i` (position `i` of the
/// geometry) carries `u[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub id: usize,
    pub perm: Vec<usize>,
}

impl Assignment {
    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// The parameter matrix, top row `m_L` first, for line and grid
    /// geometries.
    pub fn grid(&self, geom: &Geometry, us: &[C64], cfg: TorusConfig) -> Option<Vec<Vec<C64>>> {
        let layout = geom.layout.as_ref()?;
        let m = cfg.m() as i64;
        let mut rows = vec![vec![ZERO; layout.n.len()]; layout.m.len()];
        for (a, b, n, mm) in layout.points() {
            let v = Vertex::new(n.rem_euclid(m) as usize, mm.rem_euclid(m) as usize);
            let slot = geom.positions.iter().position(|p| *p == v)?;
            rows[layout.m.len() - 1 - b][a] = us[self.perm[slot]];
        }
        Some(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Unknown {
    /// `C(û)`.
    Coefficient { assignment: usize },
    /// `C(û)·g` on an interior chain segment of one slot.
    Segment {
        assignment: usize,
        slot: usize,
        segment: usize,
    },
    /// One-pair amplitude carrying `u[index]` at coincident positions.
    Wave { index: usize },
    /// Amplitude of a single basis state where factors meet.
    Joint { state: Occupation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Impurity,
    OnePair,
    MultiPair,
    Other,
}

/// Chain breaks of one slot: `g^{(δ)}` changes value after each entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub breaks: Vec<usize>,
}

impl Chain {
    /// Index of the segment holding `δ`; `0` is the opening segment and
    /// `breaks.len()` the closing one.
    pub fn segment(&self, delta: usize) -> usize {
        self.breaks.iter().filter(|&&b| delta > b).count()
    }

    pub fn segments(&self) -> usize {
        self.breaks.len() + 1
    }
}

/// The linear parametrization `Ψ = Σ_k y_k · columns[k]`.
#[derive(Debug, Clone)]
pub struct AppendixSystem {
    pub cfg: TorusConfig,
    pub params: ModelParams,
    pub geom: Geometry,
    pub u: Vec<C64>,
    pub lambda: C64,
    pub assignments: Vec<Assignment>,
    /// Per slot; empty for coincident positions.
    pub chains: Vec<Chain>,
    pub unknowns: Vec<Unknown>,
    pub columns: Vec<StateVec>,
    pub warnings: Vec<String>,
}

impl AppendixSystem {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn charge(&self) -> SectorCharge {
        SectorCharge::particles(self.n() as u32)
    }

    fn coincident(&self) -> bool {
        self.n() > 1 && self.geom.class == GeometryClass::Coincident
    }
}

/// Basis state of a decay pattern: slot `i` holds its impurity (`None`) or
/// its photon pair at distance `δ`.
fn pattern_state(fock: &FockSpace, positions: &[Vertex], pattern: &[Option<usize>]) -> StateVec {
    let cfg = fock.cfg;
    let mut modes = Vec::with_capacity(2 * positions.len());
    for (&v, p) in positions.iter().zip(pattern) {
        match p {
            None => modes.push(ModeId::new(Family::Two, v)),
            Some(d) => modes.extend(pair_modes(cfg, v, *d)),
        }
    }
    fock.create(&modes)
}

fn check_distinct(us: &[C64]) -> Result<()> {
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            if (us[i] - us[j]).norm() <= 1e-12 * (1.0 + us[i].norm()) {
                return Err(Error::SingularKernel(i, j));
            }
        }
    }
    Ok(())
}

/// Assemble the trial-state parametrization for `u_list` on `geom`.
pub fn build_appendix_system(
    cfg: TorusConfig,
    params: ModelParams,
    geom: &Geometry,
    u_list: &[C64],
) -> Result<AppendixSystem> {
    let n = u_list.len();
    if n == 0 || n != geom.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} spectral parameters for {} positions",
            geom.len()
        )));
    }
    if n > 4 {
        return Err(Error::InvalidParameter(format!("assignment sum capped at N = 4, got {n}")));
    }
    if u_list.iter().any(|u| u.norm() == 0.0 || !u.re.is_finite() || !u.im.is_finite()) {
        return Err(Error::InvalidParameter("spectral parameters must be finite and nonzero".into()));
    }
    check_distinct(u_list)?;
    let q = params.q();
    let m = cfg.m();
    let fock = FockSpace::new(cfg, params);
    let positions = &geom.positions;
    let coincident = n > 1 && geom.class == GeometryClass::Coincident;

    let chains: Vec<Chain> = if coincident {
        Vec::new()
    } else {
        (0..n)
            .map(|i| {
                let re = cyclic_reanchor(geom, cfg, i)?;
                let sched = delta_schedule(&re, cfg)?;
                Ok(Chain {
                    breaks: sched.deltas().into_iter().map(|d| d as usize).collect(),
                })
            })
            .collect::<Result<_>>()?
    };

    let assignments: Vec<Assignment> = permutations(n)
        .into_iter()
        .enumerate()
        .map(|(id, perm)| Assignment { id, perm })
        .collect();

    let mut unknowns = Vec::new();
    let mut columns = Vec::new();
    let mut warnings = Vec::new();
    let impurity: Vec<Option<usize>> = vec![None; n];
    let one_pair = |slot: usize, d: usize| {
        let mut p = impurity.clone();
        p[slot] = Some(d);
        p
    };

    if coincident {
        unknowns.push(Unknown::Joint {
            state: single_occupation(&pattern_state(&fock, positions, &impurity)),
        });
        columns.push(pattern_state(&fock, positions, &impurity));
        for (j, &u) in u_list.iter().enumerate() {
            let mut s = StateVec::zero();
            for d in 1..=m {
                s = s.plus(&pattern_state(&fock, positions, &one_pair(0, d)).scale(u.powi(-(d as i32))));
            }
            unknowns.push(Unknown::Wave { index: j });
            columns.push(s);
        }
        warnings.push("coincident positions: impurity and one-pair amplitudes left free".into());
    } else {
        for a in &assignments {
            let mut s = pattern_state(&fock, positions, &impurity);
            for (slot, chain) in chains.iter().enumerate() {
                let u = u_list[a.perm[slot]];
                let last = chain.segments() - 1;
                for d in 1..=m {
                    let g = match chain.segment(d) {
                        0 => opening_g(u, q),
                        k if k == last => closing_g(u, q, m),
                        _ => continue,
                    };
                    s = s.plus(&pattern_state(&fock, positions, &one_pair(slot, d)).scale(g * u.powi(-(d as i32))));
                }
            }
            unknowns.push(Unknown::Coefficient { assignment: a.id });
            columns.push(s);
            for (slot, chain) in chains.iter().enumerate() {
                let u = u_list[a.perm[slot]];
                for segment in 1..chain.segments().saturating_sub(1) {
                    let mut s = StateVec::zero();
                    for d in (1..=m).filter(|&d| chain.segment(d) == segment) {
                        s = s.plus(&pattern_state(&fock, positions, &one_pair(slot, d)).scale(u.powi(-(d as i32))));
                    }
                    unknowns.push(Unknown::Segment {
                        assignment: a.id,
                        slot,
                        segment,
                    });
                    columns.push(s);
                }
            }
        }
    }

    let mut joints: BTreeMap<Occupation, ()> = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        let slots: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if slots.len() < 2 {
            continue;
        }
        for t in 0..m.pow(slots.len() as u32) {
            let mut pattern = impurity.clone();
            let mut r = t;
            for &i in &slots {
                pattern[i] = Some(r % m + 1);
                r /= m;
            }
            joints.insert(single_occupation(&pattern_state(&fock, positions, &pattern)), ());
        }
    }
    if !joints.is_empty() {
        warnings.push(format!("{} multi-pair amplitudes left free", joints.len()));
    }
    for (occ, _) in joints {
        columns.push(StateVec::basis(occ.clone()));
        unknowns.push(Unknown::Joint { state: occ });
    }

    Ok(AppendixSystem {
        cfg,
        params,
        geom: geom.clone(),
        u: u_list.to_vec(),
        lambda: u_list.iter().product(),
        assignments,
        chains,
        unknowns,
        columns,
        warnings,
    })
}

/// The occupation of a state known to be one monomial.
fn single_occupation(s: &StateVec) -> Occupation {
    s.iter().next().expect("monomial is nonzero").0.clone()
}

#[derive(Debug, Clone, Default)]
pub struct AnsatzCoefficients {
    /// `C(û)` by assignment id; empty for coincident positions.
    pub c: BTreeMap<usize, C64>,
    /// `g^{(segment)}` per `(slot, assignment)`, opening to closing.
    pub g_tables: BTreeMap<(usize, usize), Vec<C64>>,
    /// Coincident one-pair amplitudes, one per spectral parameter.
    pub waves: Vec<C64>,
    pub joints: Vec<(Occupation, C64)>,
}

#[derive(Debug, Clone)]
pub struct ConsistencyConditions {
    /// Smallest singular value of `(U − Λ)` on the orthonormalized trial
    /// space.
    pub sigma_min: f64,
    /// Next singular value, for the gauge gap.
    pub sigma_next: Option<f64>,
    /// Residual norm of the solved state split by row type.
    pub by_kind: BTreeMap<RowKind, f64>,
}

impl ConsistencyConditions {
    pub fn max(&self) -> f64 {
        self.sigma_min
    }
}

#[derive(Debug, Clone)]
pub struct AnsatzSolution {
    pub coefficients: AnsatzCoefficients,
    pub conditions: ConsistencyConditions,
    /// Dimension of the numerical null space; `1` is the scale gauge.
    pub nullity: usize,
    /// Independent columns kept after orthonormalization.
    pub rank: usize,
    /// Solution vector over `system.unknowns`.
    pub y: Vec<C64>,
    pub warnings: Vec<String>,
}

impl AnsatzSolution {
    /// Fail when the null space exceeds the scale gauge.
    pub fn require_unique(&self) -> Result<()> {
        if self.nullity > 1 {
            return Err(Error::RankDeficient {
                deficiency: self.nullity - 1,
            });
        }
        Ok(())
    }
}

fn classify_row(occ: &Occupation, cfg: TorusConfig, positions: &[Vertex]) -> RowKind {
    let mut pairs = 0u32;
    for (mode, count) in occ.occupied(cfg) {
        match mode.family {
            Family::Two if !positions.contains(&mode.vertex) => return RowKind::Other,
            Family::One => pairs += count as u32,
            _ => {}
        }
    }
    match pairs {
        0 => RowKind::Impurity,
        1 => RowKind::OnePair,
        _ => RowKind::MultiPair,
    }
}

/// Modified Gram-Schmidt with the change of basis: `q_j = Σ_l t[j][l] b_l`.
fn orthonormal_span(cols: &[Vec<C64>]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
    let k = cols.len();
    let mut qs: Vec<Vec<C64>> = Vec::new();
    let mut ts: Vec<Vec<C64>> = Vec::new();
    for (j, b) in cols.iter().enumerate() {
        let bnorm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            continue;
        }
        let mut v = b.clone();
        let mut t = vec![ZERO; k];
        t[j] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for (qi, ti) in qs.iter().zip(&ts) {
                let d: C64 = qi.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (x, y) in v.iter_mut().zip(qi) {
                    *x -= d * y;
                }
                for (x, y) in t.iter_mut().zip(ti) {
                    *x -= d * y;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n <= 1e-10 * bnorm {
            continue;
        }
        qs.push(v.into_iter().map(|z| z / n).collect());
        ts.push(t.into_iter().map(|z| z / n).collect());
    }
    (qs, ts)
}

/// Least-squares null vector of `(U − Λ)B(u)` and the consistency data.
pub fn solve_coefficients(system: &AppendixSystem, block: &EvolutionBlock) -> Result<AnsatzSolution> {
    if block.charge != system.charge() {
        return Err(Error::InvalidParameter(format!(
            "system lives in sector {}, block is {}",
            system.charge(),
            block.charge
        )));
    }
    let cols: Vec<Vec<C64>> = system
        .columns
        .iter()
        .map(|c| block.basis.coordinates(c))
        .collect::<Result<_>>()?;
    let (qs, ts) = orthonormal_span(&cols);
    let r = qs.len();
    let dim = block.dim();
    let mut qmat = Array2::from_elem((dim, r), ZERO);
    for (j, qv) in qs.iter().enumerate() {
        for (i, z) in qv.iter().enumerate() {
            qmat[[i, j]] = *z;
        }
    }
    let mut a = block.matrix.dot(&qmat);
    a.scaled_add(-system.lambda, &qmat);
    let (sv, vt) = svd(&a)?;
    let sigma_min = *sv.last().ok_or(Error::ZeroNorm)?;
    let sigma_next = (sv.len() > 1).then(|| sv[sv.len() - 2]);
    let nullity = sv.iter().filter(|&&s| s <= NULL_TOL).count();
    let z: Vec<C64> = vt.row(r - 1).iter().map(|x| x.conj()).collect();

    let mut y = vec![ZERO; system.unknowns.len()];
    for (zj, tj) in z.iter().zip(&ts) {
        for (yl, tl) in y.iter_mut().zip(tj) {
            *yl += zj * tl;
        }
    }
    let mut warnings = system.warnings.clone();
    let anchor = system
        .unknowns
        .iter()
        .position(|u| match u {
            Unknown::Coefficient { assignment } => system.assignments[*assignment].is_identity(),
            Unknown::Joint { .. } => system.coincident(),
            _ => false,
        })
        .map(|i| y[i]);
    match anchor {
        Some(c) if c.norm() > 1e-12 => y.iter_mut().for_each(|v| *v /= c),
        _ => warnings.push("leading coefficient vanishes; state left unit-normalized".into()),
    }
    if nullity > 1 {
        warnings.push(format!("rank deficiency beyond gauge: {}", nullity - 1));
    }

    let psi: Vec<C64> = (0..dim)
        .map(|i| qs.iter().zip(&z).map(|(qv, zj)| qv[i] * zj).sum())
        .collect();
    let image = block.matrix.dot(&Array1::from(psi.clone()));
    let mut by_kind: BTreeMap<RowKind, f64> = BTreeMap::new();
    for (i, occ) in block.basis.states().iter().enumerate() {
        let res = (image[i] - system.lambda * psi[i]).norm_sqr();
        *by_kind
            .entry(classify_row(occ, system.cfg, &system.geom.positions))
            .or_insert(0.0) += res;
    }
    by_kind.values_mut().for_each(|v| *v = v.sqrt());

    Ok(AnsatzSolution {
        coefficients: unpack(system, &y),
        conditions: ConsistencyConditions {
            sigma_min,
            sigma_next,
            by_kind,
        },
        nullity,
        rank: r,
        y,
        warnings,
    })
}

fn unpack(system: &AppendixSystem, y: &[C64]) -> AnsatzCoefficients {
    let q = system.params.q();
    let m = system.cfg.m();
    let mut out = AnsatzCoefficients::default();
    let mut seg_values: BTreeMap<(usize, usize, usize), C64> = BTreeMap::new();
    for (unk, &v) in system.unknowns.iter().zip(y) {
        match unk {
            Unknown::Coefficient { assignment } => {
                out.c.insert(*assignment, v);
            }
            Unknown::Segment {
                assignment,
                slot,
                segment,
            } => {
                seg_values.insert((*slot, *assignment, *segment), v);
            }
            Unknown::Wave { .. } => out.waves.push(v),
            Unknown::Joint { state } => out.joints.push((state.clone(), v)),
        }
    }
    for a in &system.assignments {
        let c = out.c.get(&a.id).copied().unwrap_or(ZERO);
        for (slot, chain) in system.chains.iter().enumerate() {
            let u = system.u[a.perm[slot]];
            let k = chain.segments();
            let table = (0..k)
                .map(|s| match s {
                    0 => opening_g(u, q),
                    s if s == k - 1 => closing_g(u, q, m),
                    s => {
                        let cg = seg_values.get(&(slot, a.id, s)).copied().unwrap_or(ZERO);
                        if c.norm() > 0.0 {
                            cg / c
                        } else {
                            ZERO
                        }
                    }
                })
                .collect();
            out.g_tables.insert((slot, a.id), table);
        }
    }
    out
}

/// `Ψ = Σ y_k · columns[k]`, in the sector basis.
pub fn construct_state(system: &AppendixSystem, solution: &AnsatzSolution) -> StateVec {
    let mut s = StateVec::zero();
    for (col, &y) in system.columns.iter().zip(&solution.y) {
        if y != ZERO {
            s = s.plus(&col.scale(y));
        }
    }
    s.prune();
    s
}

/// Build, solve and assemble in one step.
pub fn ansatz_eigenstate(
    block: &EvolutionBlock,
    cfg: TorusConfig,
    params: ModelParams,
    geom: &Geometry,
    u_list: &[C64],
) -> Result<(AppendixSystem, AnsatzSolution, StateVec)> {
    let system = build_appendix_system(cfg, params, geom, u_list)?;
    let solution = solve_coefficients(&system, block)?;
    let state = construct_state(&system, &solution);
    Ok((system, solution, state))
}

/// JSON summary of one ansatz solve.
pub fn solution_json(system: &AppendixSystem, solution: &AnsatzSolution, residual: Option<f64>) -> serde_json::Value {
    let pair = |z: C64| [z.re, z.im];
    json!({
        "u": system.u.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
        "Lambda": pair(system.lambda),
        "unknowns": system.unknowns.len(),
        "rank": solution.rank,
        "nullity": solution.nullity,
        "sigma_min": solution.conditions.sigma_min,
        "sigma_next": solution.conditions.sigma_next,
        "by_kind": solution.conditions.by_kind,
        "C": solution.coefficients.c.iter().map(|(k, v)| (k.to_string(), pair(*v))).collect::<BTreeMap<_, _>>(),
        "eigen_residual": residual,
        "warnings": solution.warnings,
    })
}
