//! Occupation-number basis, conserved-charge sectors and the q-oscillator
//! generators acting on sparse states.
//!
//! The Fock representation is fixed in the orthonormal convention
//!
//! ```text
//! a⁺|n⟩ = √(1 − q^{2(n+1)}) |n+1⟩,   a⁻|n⟩ = √(1 − q^{2n}) |n−1⟩,
//! k|n⟩ = −k′|n⟩ = q^{1/2+n} |n⟩,
//! ```
//!
//! so that `(a⁻)† = a⁺` holds literally for `0 < q < 1`.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Family, ModeId, TorusConfig, Vertex};

/// Amplitudes below this magnitude are dropped by [`StateVec::prune`].
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Default refusal threshold for sector enumeration.
pub const DEFAULT_SECTOR_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    q: f64,
}

impl ModelParams {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter("q must lie in (0,1)".into()));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `√(1 − q^{2n})`, the norm factor linking `|n−1⟩` and `|n⟩`.
    pub fn ladder(&self, n: u16) -> f64 {
        (1.0 - self.q.powi(2 * n as i32)).sqrt()
    }

    /// Eigenvalue of `k` on `|n⟩`.
    pub fn k_value(&self, n: u16) -> f64 {
        self.q.powf(0.5 + n as f64)
    }
}

/// A Fock basis state: occupation numbers over all modes, stored densely in
/// mode order `(family, ℓ, k)` so the derived ordering is the lexicographic
/// order over the full mode list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation {
    counts: Vec<u16>,
}

impl Occupation {
    pub fn vacuum(cfg: TorusConfig) -> Self {
        Self {
            counts: vec![0; cfg.num_modes()],
        }
    }

    pub fn from_modes(cfg: TorusConfig, entries: &[(ModeId, u16)]) -> Self {
        let mut occ = Self::vacuum(cfg);
        for &(mode, n) in entries {
            occ.counts[cfg.mode_index(mode)] += n;
        }
        occ
    }

    pub(crate) fn from_counts(counts: Vec<u16>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u16] {
        &mut self.counts
    }

    pub fn get(&self, cfg: TorusConfig, mode: ModeId) -> u16 {
        self.counts[cfg.mode_index(mode)]
    }

    pub fn is_vacuum(&self) -> bool {
        self.counts.iter().all(|&n| n == 0)
    }

    /// Non-zero entries in mode order.
    pub fn occupied(&self, cfg: TorusConfig) -> impl Iterator<Item = (ModeId, u16)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(move |(i, &n)| (cfg.mode_at(i), n))
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&n| n as u32).sum()
    }

    pub fn charges(&self, cfg: TorusConfig) -> SectorCharge {
        let nv = cfg.num_vertices();
        let sum = |f: Family| -> u32 {
            self.counts[f.index() * nv..(f.index() + 1) * nv]
                .iter()
                .map(|&n| n as u32)
                .sum()
        };
        let (n1, n2, n3) = (sum(Family::One), sum(Family::Two), sum(Family::Three));
        SectorCharge::new(n1 + n2, n3 + n2)
    }

    /// `{"1:k,l": n, …}` with zero entries omitted.
    pub fn to_json(&self, cfg: TorusConfig) -> serde_json::Map<String, serde_json::Value> {
        self.occupied(cfg)
            .map(|(mode, n)| (mode.to_string(), serde_json::Value::from(n)))
            .collect()
    }

    pub fn from_json(
        cfg: TorusConfig,
        map: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Self> {
        let bad = |key: &str| Error::InvalidParameter(format!("bad occupation key {key:?}"));
        let mut entries = Vec::with_capacity(map.len());
        for (key, value) in map {
            let (fam, coords) = key.split_once(':').ok_or_else(|| bad(key))?;
            let (k, l) = coords.split_once(',').ok_or_else(|| bad(key))?;
            let family = fam
                .parse::<u8>()
                .ok()
                .and_then(Family::from_number)
                .ok_or_else(|| bad(key))?;
            let k: usize = k.parse().map_err(|_| bad(key))?;
            let l: usize = l.parse().map_err(|_| bad(key))?;
            if k >= cfg.m() || l >= cfg.m() {
                return Err(bad(key));
            }
            let n = value
                .as_u64()
                .and_then(|n| u16::try_from(n).ok())
                .ok_or_else(|| bad(key))?;
            entries.push((ModeId::new(family, Vertex::new(k, l)), n));
        }
        Ok(Self::from_modes(cfg, &entries))
    }
}

// Hash/Eq/Ord of the wrapper are those of the slice.
impl Borrow<[u16]> for Occupation {
    fn borrow(&self) -> &[u16] {
        &self.counts
    }
}

/// Conserved pair `(Q1, Q3) = (Σ n₁ + n₂, Σ n₃ + n₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorCharge {
    pub q1: u32,
    pub q3: u32,
}

impl SectorCharge {
    pub const VACUUM: SectorCharge = SectorCharge { q1: 0, q3: 0 };

    pub fn new(q1: u32, q3: u32) -> Self {
        Self { q1, q3 }
    }

    /// Sector `(N, N)` holding `N` ansatz particles.
    pub fn particles(n: u32) -> Self {
        Self { q1: n, q3: n }
    }

    pub fn level(&self) -> u32 {
        self.q1 + self.q3
    }
}

impl fmt::Display for SectorCharge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.q1, self.q3)
    }
}

/// Canonically ordered basis of one charge sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub charge: SectorCharge,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl SectorBasis {
    fn from_states(charge: SectorCharge, mut states: Vec<Occupation>) -> Self {
        states.sort();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self {
            charge,
            states,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &Occupation {
        &self.states[i]
    }

    pub fn index_of(&self, occ: &Occupation) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub(crate) fn index_of_counts(&self, counts: &[u16]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Dense coordinates of `state`; fails if any amplitude lies outside.
    pub fn coordinates(&self, state: &StateVec) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for (occ, &amp) in state.iter() {
            match self.index_of(occ) {
                Some(i) => out[i] += amp,
                None if amp.norm() <= PRUNE_THRESHOLD => {}
                None => return Err(Error::OutsideSector(self.charge)),
            }
        }
        Ok(out)
    }

    pub fn state_from_coordinates(&self, coords: &[Complex64]) -> StateVec {
        let mut s = StateVec::zero();
        for (occ, &c) in self.states.iter().zip(coords) {
            if c != Complex64::new(0.0, 0.0) {
                s.add(occ.clone(), c);
            }
        }
        s
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of ways to place `s` indistinguishable quanta on `v` modes.
fn compositions(s: u32, v: usize) -> u128 {
    binomial(s as u64 + v as u64 - 1, v as u64 - 1)
}

/// Dimension of a sector, computed without enumerating it.
pub fn sector_size(cfg: TorusConfig, charge: SectorCharge) -> u128 {
    let v = cfg.num_vertices();
    (0..=charge.q1.min(charge.q3))
        .map(|t| compositions(t, v) * compositions(charge.q1 - t, v) * compositions(charge.q3 - t, v))
        .sum()
}

fn for_each_composition(total: u32, slots: usize, f: &mut dyn FnMut(&[u16])) {
    fn rec(buf: &mut Vec<u16>, left: u32, slots: usize, f: &mut dyn FnMut(&[u16])) {
        if buf.len() + 1 == slots {
            buf.push(left as u16);
            f(buf);
            buf.pop();
            return;
        }
        for n in (0..=left).rev() {
            buf.push(n as u16);
            rec(buf, left - n, slots, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(slots);
    rec(&mut buf, total, slots, f);
}

/// All occupations carrying `charge`, in canonical order.
pub fn enumerate_sector(cfg: TorusConfig, charge: SectorCharge, cap: usize) -> Result<SectorBasis> {
    let size = sector_size(cfg, charge);
    if size > cap as u128 {
        return Err(Error::SectorCap {
            charge,
            size: usize::try_from(size).unwrap_or(usize::MAX),
            cap,
        });
    }
    let v = cfg.num_vertices();
    let mut states = Vec::with_capacity(size as usize);
    for t in 0..=charge.q1.min(charge.q3) {
        let mut twos = Vec::new();
        for_each_composition(t, v, &mut |c| twos.push(c.to_vec()));
        let mut ones = Vec::new();
        for_each_composition(charge.q1 - t, v, &mut |c| ones.push(c.to_vec()));
        let mut threes = Vec::new();
        for_each_composition(charge.q3 - t, v, &mut |c| threes.push(c.to_vec()));
        for a in &ones {
            for b in &twos {
                for c in &threes {
                    let mut counts = Vec::with_capacity(3 * v);
                    counts.extend_from_slice(a);
                    counts.extend_from_slice(b);
                    counts.extend_from_slice(c);
                    states.push(Occupation::from_counts(counts));
                }
            }
        }
    }
    Ok(SectorBasis::from_states(charge, states))
}

/// Local generator of one q-oscillator algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalOp {
    Raise,
    Lower,
    K,
    KPrime,
}

/// Act with `op` on the occupation at `slot`, in place. Returns the scalar
/// factor; zero means the state was annihilated (and `counts` is untouched).
pub(crate) fn act(counts: &mut [u16], slot: usize, op: LocalOp, params: &ModelParams) -> f64 {
    let n = counts[slot];
    match op {
        LocalOp::Raise => {
            counts[slot] = n + 1;
            params.ladder(n + 1)
        }
        LocalOp::Lower => {
            if n == 0 {
                0.0
            } else {
                counts[slot] = n - 1;
                params.ladder(n)
            }
        }
        LocalOp::K => params.k_value(n),
        LocalOp::KPrime => -params.k_value(n),
    }
}

/// One `(mode, generator)` factor of an operator word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpFactor {
    pub mode: ModeId,
    pub op: LocalOp,
}

impl OpFactor {
    pub fn new(mode: ModeId, op: LocalOp) -> Self {
        Self { mode, op }
    }
}

/// Sparse state: occupation → amplitude.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateVec {
    amplitudes: BTreeMap<Occupation, Complex64>,
}

impl StateVec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn basis(occ: Occupation) -> Self {
        let mut s = Self::zero();
        s.add(occ, Complex64::new(1.0, 0.0));
        s
    }

    pub fn vacuum(cfg: TorusConfig) -> Self {
        Self::basis(Occupation::vacuum(cfg))
    }

    pub fn add(&mut self, occ: Occupation, amp: Complex64) {
        *self.amplitudes.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amplitudes
            .get(occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|(o, &a)| (o.clone(), a * c))
                .collect(),
        }
    }

    pub fn plus(&self, other: &StateVec) -> Self {
        let mut out = self.clone();
        for (o, &a) in other.iter() {
            out.add(o.clone(), a);
        }
        out
    }

    pub fn minus(&self, other: &StateVec) -> Self {
        self.plus(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Drop entries below [`PRUNE_THRESHOLD`].
    pub fn prune(&mut self) {
        self.amplitudes.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Charge of every stored occupation, if they all agree.
    pub fn charge(&self, cfg: TorusConfig) -> Option<SectorCharge> {
        let mut it = self.amplitudes.keys().map(|o| o.charges(cfg));
        let first = it.next()?;
        it.all(|c| c == first).then_some(first)
    }
}

/// The creation/annihilation algebra over a fixed torus and `q`.
#[derive(Debug, Clone, Copy)]
pub struct FockSpace {
    pub cfg: TorusConfig,
    pub params: ModelParams,
}

impl FockSpace {
    pub fn new(cfg: TorusConfig, params: ModelParams) -> Self {
        Self { cfg, params }
    }

    fn map_each(&self, state: &StateVec, slot: usize, op: LocalOp) -> StateVec {
        let mut out = StateVec::zero();
        for (occ, &amp) in state.iter() {
            let mut counts = occ.counts().to_vec();
            let f = act(&mut counts, slot, op, &self.params);
            if f != 0.0 {
                out.add(Occupation::from_counts(counts), amp * f);
            }
        }
        out
    }

    pub fn apply_raise(&self, mode: ModeId, state: &StateVec) -> StateVec {
        self.map_each(state, self.cfg.mode_index(mode), LocalOp::Raise)
    }

    pub fn apply_lower(&self, mode: ModeId, state: &StateVec) -> StateVec {
        self.map_each(state, self.cfg.mode_index(mode), LocalOp::Lower)
    }

    pub fn apply_k(&self, mode: ModeId, state: &StateVec, primed: bool) -> StateVec {
        let op = if primed { LocalOp::KPrime } else { LocalOp::K };
        self.map_each(state, self.cfg.mode_index(mode), op)
    }

    /// Apply an operator word; the last factor acts first.
    pub fn apply_word(&self, word: &[OpFactor], state: &StateVec) -> StateVec {
        word.iter().rev().fold(state.clone(), |s, f| {
            self.map_each(&s, self.cfg.mode_index(f.mode), f.op)
        })
    }

    /// `∏ a⁺` over `modes` applied to the vacuum, not normalized: this is the
    /// operator monomial itself, as it appears in ansatz expansions.
    pub fn create(&self, modes: &[ModeId]) -> StateVec {
        let word: Vec<OpFactor> = modes
            .iter()
            .map(|&m| OpFactor::new(m, LocalOp::Raise))
            .collect();
        self.apply_word(&word, &StateVec::vacuum(self.cfg))
    }
}

/// Hermitian inner product `⟨a|b⟩` in the orthonormal occupation basis.
pub fn inner(a: &StateVec, b: &StateVec) -> Complex64 {
    let (small, large, conj_small) = if a.len() <= b.len() {
        (a, b, true)
    } else {
        (b, a, false)
    };
    small
        .iter()
        .filter_map(|(o, &x)| {
            large.amplitudes.get(o).map(|&y| {
                if conj_small {
                    x.conj() * y
                } else {
                    y.conj() * x
                }
            })
        })
        .sum()
}
