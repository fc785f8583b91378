//! The evolution operator `U`, one conserved-charge sector at a time.
//!
//! `U` is fixed by `U|0⟩ = |0⟩` and its adjoint action on the creation
//! operators:
//!
//! ```text
//! U k₂,ᵥ a⁺₁,ᵥ U⁻¹ = k₃,ᵥ₊ₑ₃ a⁺₁,ᵥ₊ₑ₁ + k₁,ᵥ₊ₑ₁ a⁺₂,ᵥ a⁻₃,ᵥ₊ₑ₃
//! U a⁺₂,ᵥ U⁻¹      = a⁺₁,ᵥ₊ₑ₁ a⁺₃,ᵥ₊ₑ₃ + k₁,ᵥ₊ₑ₁ k′₃,ᵥ₊ₑ₃ a⁺₂,ᵥ
//! U k′₂,ᵥ a⁺₃,ᵥ U⁻¹ = k′₁,ᵥ₊ₑ₁ a⁺₃,ᵥ₊ₑ₃ + k′₃,ᵥ₊ₑ₃ a⁺₂,ᵥ a⁻₁,ᵥ₊ₑ₁
//! ```
//!
//! A basis state is peeled one quantum at a time; its image is the
//! right-hand side applied to the (memoized) image of the smaller state.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::lattice::{Direction, Family, ModeId, TorusConfig, Vertex};
use crate::qfock::{
    act, enumerate_sector, FockSpace, LocalOp, ModelParams, OpFactor, Occupation, SectorBasis,
    SectorCharge, StateVec, DEFAULT_SECTOR_CAP, PRUNE_THRESHOLD,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One defining relation `U·lhs·U⁻¹ = Σ rhs`.
#[derive(Debug, Clone)]
pub struct AdjointRelation {
    /// Family whose quantum the left-hand side creates.
    pub family: Family,
    pub vertex: Vertex,
    pub lhs: Vec<OpFactor>,
    pub rhs: Vec<Vec<OpFactor>>,
}

/// The three relations anchored at vertex `v`, in family order 1, 2, 3.
pub fn adjoint_relations(cfg: TorusConfig, v: Vertex) -> [AdjointRelation; 3] {
    use Family::*;
    use LocalOp::*;
    let e1 = cfg.shift(v, Direction::E1, 1);
    let e3 = cfg.shift(v, Direction::E3, 1);
    let f = |fam, w, op| OpFactor::new(ModeId::new(fam, w), op);
    [
        AdjointRelation {
            family: One,
            vertex: v,
            lhs: vec![f(Two, v, K), f(One, v, Raise)],
            rhs: vec![
                vec![f(Three, e3, K), f(One, e1, Raise)],
                vec![f(One, e1, K), f(Two, v, Raise), f(Three, e3, Lower)],
            ],
        },
        AdjointRelation {
            family: Two,
            vertex: v,
            lhs: vec![f(Two, v, Raise)],
            rhs: vec![
                vec![f(One, e1, Raise), f(Three, e3, Raise)],
                vec![f(One, e1, K), f(Three, e3, KPrime), f(Two, v, Raise)],
            ],
        },
        AdjointRelation {
            family: Three,
            vertex: v,
            lhs: vec![f(Two, v, KPrime), f(Three, v, Raise)],
            rhs: vec![
                vec![f(One, e1, KPrime), f(Three, e3, Raise)],
                vec![f(Three, e3, KPrime), f(Two, v, Raise), f(One, e1, Lower)],
            ],
        },
    ]
}

/// Which quantum to peel off first when computing a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoweringOrder {
    pub families: [Family; 3],
    /// Pick the largest occupied vertex instead of the smallest.
    pub reverse_vertices: bool,
}

impl LoweringOrder {
    /// Family 1 at the smallest occupied vertex, then family 3, then family 2.
    pub const STANDARD: LoweringOrder = LoweringOrder {
        families: [Family::One, Family::Three, Family::Two],
        reverse_vertices: false,
    };
    /// Family 3 first, scanning vertices from the top.
    pub const ALTERNATE: LoweringOrder = LoweringOrder {
        families: [Family::Three, Family::One, Family::Two],
        reverse_vertices: true,
    };
    /// Peel impurities (family 2) before photons.
    pub const IMPURITY_FIRST: LoweringOrder = LoweringOrder {
        families: [Family::Two, Family::One, Family::Three],
        reverse_vertices: false,
    };

    fn pick(&self, cfg: TorusConfig, counts: &[u16]) -> Option<(Family, Vertex)> {
        let nv = cfg.num_vertices();
        for fam in self.families {
            let block = &counts[fam.index() * nv..(fam.index() + 1) * nv];
            let found = if self.reverse_vertices {
                block.iter().rposition(|&n| n > 0)
            } else {
                block.iter().position(|&n| n > 0)
            };
            if let Some(i) = found {
                return Some((fam, cfg.mode_at(fam.index() * nv + i).vertex));
            }
        }
        None
    }
}

/// Dense matrix of `U` on one sector; column `i` is `U` applied to basis
/// state `i`.
#[derive(Debug, Clone)]
pub struct EvolutionBlock {
    pub charge: SectorCharge,
    pub basis: SectorBasis,
    pub matrix: Array2<Complex64>,
}

impl EvolutionBlock {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn column_state(&self, i: usize) -> StateVec {
        let col: Vec<Complex64> = self.matrix.column(i).to_vec();
        let mut s = self.basis.state_from_coordinates(&col);
        s.prune();
        s
    }

    /// `max |(U†U − I)ᵢⱼ|`.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self.matrix.t().mapv(|z| z.conj()).dot(&self.matrix);
        gram.indexed_iter()
            .map(|((i, j), &z)| {
                let id = if i == j { 1.0 } else { 0.0 };
                (z - Complex64::new(id, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `{charge, dim, basis, entries}`, entries as `[row, col, re, im]` for
    /// every amplitude above the prune threshold.
    pub fn to_json(&self, cfg: TorusConfig, params: &ModelParams) -> serde_json::Value {
        let entries: Vec<(usize, usize, f64, f64)> = self
            .matrix
            .indexed_iter()
            .filter(|(_, z)| z.norm() > PRUNE_THRESHOLD)
            .map(|((i, j), z)| (i, j, z.re, z.im))
            .collect();
        let basis: Vec<_> = self.basis.states().iter().map(|s| s.to_json(cfg)).collect();
        json!({
            "M": cfg.m(),
            "q": params.q(),
            "charge": self.charge,
            "dim": self.dim(),
            "basis": basis,
            "entries": entries,
            "unitarity_defect": self.unitarity_defect(),
        })
    }
}

/// Memoizing builder of evolution blocks on one torus.
#[derive(Debug)]
pub struct Evolution {
    fock: FockSpace,
    cap: usize,
    order: LoweringOrder,
    blocks: BTreeMap<SectorCharge, EvolutionBlock>,
}

impl Evolution {
    pub fn new(cfg: TorusConfig, params: ModelParams) -> Self {
        Self::with_cap(cfg, params, DEFAULT_SECTOR_CAP)
    }

    pub fn with_cap(cfg: TorusConfig, params: ModelParams, cap: usize) -> Self {
        Self {
            fock: FockSpace::new(cfg, params),
            cap,
            order: LoweringOrder::STANDARD,
            blocks: BTreeMap::new(),
        }
    }

    /// Lowering order used for every column of every block.
    pub fn with_order(mut self, order: LoweringOrder) -> Self {
        self.order = order;
        self.blocks.clear();
        self
    }

    pub fn cfg(&self) -> TorusConfig {
        self.fock.cfg
    }

    pub fn params(&self) -> ModelParams {
        self.fock.params
    }

    pub fn fock(&self) -> &FockSpace {
        &self.fock
    }

    /// Build `charge` and every sector it recurses into, lowest level first.
    pub fn block(&mut self, charge: SectorCharge) -> Result<&EvolutionBlock> {
        if !self.blocks.contains_key(&charge) {
            for level in 0..=charge.level() {
                for q1 in 0..=charge.q1.min(level) {
                    let q3 = level - q1;
                    if q3 > charge.q3 {
                        continue;
                    }
                    let c = SectorCharge::new(q1, q3);
                    if !self.blocks.contains_key(&c) {
                        let block = self.build_sector(c)?;
                        self.blocks.insert(c, block);
                    }
                }
            }
        }
        Ok(&self.blocks[&charge])
    }

    /// Block already built by an earlier [`Evolution::block`] call.
    pub fn built(&self, charge: SectorCharge) -> Option<&EvolutionBlock> {
        self.blocks.get(&charge)
    }

    fn build_sector(&self, charge: SectorCharge) -> Result<EvolutionBlock> {
        let basis = enumerate_sector(self.fock.cfg, charge, self.cap)?;
        let dim = basis.len();
        let columns: Vec<Vec<Complex64>> = (0..dim)
            .into_par_iter()
            .map(|i| self.column(&basis, basis.state(i), self.order))
            .collect::<Result<_>>()?;
        let mut matrix = Array2::from_elem((dim, dim), ZERO);
        for (j, col) in columns.into_iter().enumerate() {
            for (i, z) in col.into_iter().enumerate() {
                matrix[[i, j]] = z;
            }
        }
        Ok(EvolutionBlock {
            charge,
            basis,
            matrix,
        })
    }

    /// `U|occ⟩` in the coordinates of `target`, using only lower blocks.
    pub fn column(
        &self,
        target: &SectorBasis,
        occ: &Occupation,
        order: LoweringOrder,
    ) -> Result<Vec<Complex64>> {
        let cfg = self.fock.cfg;
        let params = &self.fock.params;
        let mut out = vec![ZERO; target.len()];
        let Some((family, w)) = order.pick(cfg, occ.counts()) else {
            out[target.index_of(occ).ok_or(Error::OutsideSector(target.charge))?] =
                Complex64::new(1.0, 0.0);
            return Ok(out);
        };
        let relation = adjoint_relations(cfg, w)
            .into_iter()
            .find(|r| r.family == family)
            .expect("one relation per family");

        let mut psi = occ.clone();
        let slot = cfg.mode_index(ModeId::new(family, w));
        let n = psi.counts()[slot];
        psi.counts_mut()[slot] = n - 1;
        let n2 = psi.get(cfg, ModeId::new(Family::Two, w));
        let charge = target.charge;
        let (lower, scale) = match family {
            Family::One => (
                SectorCharge::new(charge.q1 - 1, charge.q3),
                params.k_value(n2) * params.ladder(n),
            ),
            Family::Three => (
                SectorCharge::new(charge.q1, charge.q3 - 1),
                -params.k_value(n2) * params.ladder(n),
            ),
            Family::Two => (
                SectorCharge::new(charge.q1 - 1, charge.q3 - 1),
                params.ladder(n),
            ),
        };
        let lower = self
            .blocks
            .get(&lower)
            .unwrap_or_else(|| panic!("sector {lower} must be built before {charge}"));
        let j = lower
            .basis
            .index_of(&psi)
            .ok_or(Error::OutsideSector(lower.charge))?;

        let words: Vec<Vec<(usize, LocalOp)>> = relation
            .rhs
            .iter()
            .map(|w| w.iter().rev().map(|f| (cfg.mode_index(f.mode), f.op)).collect())
            .collect();
        let mut counts = Vec::with_capacity(cfg.num_modes());
        for (i, &amp) in lower.matrix.column(j).iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            for word in &words {
                counts.clear();
                counts.extend_from_slice(lower.basis.state(i).counts());
                let mut f = 1.0;
                for &(s, op) in word {
                    f *= act(&mut counts, s, op, params);
                    if f == 0.0 {
                        break;
                    }
                }
                if f != 0.0 {
                    let idx = target
                        .index_of_counts(&counts)
                        .ok_or(Error::OutsideSector(charge))?;
                    out[idx] += amp * (f / scale);
                }
            }
        }
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(charge));
        }
        Ok(out)
    }

    /// `U` applied to a state supported on one sector.
    pub fn apply(&mut self, state: &StateVec) -> Result<StateVec> {
        if state.is_empty() {
            return Ok(StateVec::zero());
        }
        let cfg = self.fock.cfg;
        let charge = state
            .charge(cfg)
            .ok_or_else(|| Error::InvalidParameter("state mixes charge sectors".into()))?;
        let block = self.block(charge)?;
        apply_evolution(block, state)
    }
}

/// Build the block of `U` on one sector (and, internally, all lower ones).
pub fn build_evolution(
    cfg: TorusConfig,
    params: ModelParams,
    charge: SectorCharge,
) -> Result<EvolutionBlock> {
    build_evolution_with(Evolution::new(cfg, params), charge)
}

/// [`build_evolution`] with a configured builder.
pub fn build_evolution_with(mut evo: Evolution, charge: SectorCharge) -> Result<EvolutionBlock> {
    evo.block(charge)?;
    Ok(evo.blocks.remove(&charge).expect("just built"))
}

/// Matrix-vector product in the canonical basis of the block.
pub fn apply_evolution(block: &EvolutionBlock, state: &StateVec) -> Result<StateVec> {
    let coords = block.basis.coordinates(state)?;
    let v = ndarray::Array1::from(coords);
    let image = block.matrix.dot(&v);
    let mut out = block.basis.state_from_coordinates(image.as_slice().expect("contiguous"));
    out.prune();
    Ok(out)
}

/// Recompute up to `trials` random columns of `charge` with `order` and
/// return the largest entry-wise deviation from the stored block.
pub fn check_path_consistency_with(
    evo: &mut Evolution,
    charge: SectorCharge,
    trials: usize,
    seed: u64,
    order: LoweringOrder,
) -> Result<f64> {
    evo.block(charge)?;
    let block = &evo.blocks[&charge];
    let dim = block.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if trials >= dim {
        (0..dim).collect()
    } else {
        sample(&mut rng, dim, trials).into_vec()
    };
    let mut worst: f64 = 0.0;
    for i in picks {
        let col = evo.column(&block.basis, block.basis.state(i), order)?;
        for (a, b) in col.iter().zip(block.matrix.column(i)) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// [`check_path_consistency_with`] using [`LoweringOrder::ALTERNATE`].
pub fn check_path_consistency(
    evo: &mut Evolution,
    charge: SectorCharge,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_path_consistency_with(evo, charge, trials, seed, LoweringOrder::ALTERNATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(m: usize, q: f64) -> Evolution {
        Evolution::new(TorusConfig::new(m).unwrap(), ModelParams::new(q).unwrap())
    }

    fn occ(cfg: TorusConfig, entries: &[(Family, usize, usize)]) -> Occupation {
        let e: Vec<_> = entries
            .iter()
            .map(|&(f, k, l)| (ModeId::new(f, Vertex::new(k, l)), 1))
            .collect();
        Occupation::from_modes(cfg, &e)
    }

    #[test]
    fn vacuum_block_is_one() {
        let mut evo = setup(2, 0.5);
        let b = evo.block(SectorCharge::VACUUM).unwrap();
        assert_eq!(b.dim(), 1);
        assert_eq!(b.matrix[[0, 0]], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_photon_drifts() {
        let mut evo = setup(3, 0.4);
        let cfg = evo.cfg();
        let src = occ(cfg, &[(Family::One, 1, 2)]);
        let out = evo.apply(&StateVec::basis(src)).unwrap();
        assert_eq!(out.len(), 1);
        let dst = occ(cfg, &[(Family::One, 2, 2)]);
        assert!((out.amplitude(&dst) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn impurity_decays_into_pair() {
        let q: f64 = 0.5;
        let mut evo = setup(2, q);
        let cfg = evo.cfg();
        let out = evo.apply(&StateVec::basis(occ(cfg, &[(Family::Two, 0, 0)]))).unwrap();
        let stay = occ(cfg, &[(Family::Two, 0, 0)]);
        let pair = occ(cfg, &[(Family::One, 1, 0), (Family::Three, 0, 1)]);
        assert_eq!(out.len(), 2);
        assert!((out.amplitude(&stay) + q).norm() < 1e-12);
        assert!((out.amplitude(&pair) - (1.0 - q * q).sqrt()).norm() < 1e-12);
    }

    #[test]
    fn sector_cap_propagates() {
        let mut evo = Evolution::with_cap(
            TorusConfig::new(2).unwrap(),
            ModelParams::new(0.5).unwrap(),
            10,
        );
        assert!(matches!(
            evo.block(SectorCharge::new(1, 1)),
            Err(Error::SectorCap { .. })
        ));
    }

    #[test]
    fn apply_evolution_checks_support() {
        let mut evo = setup(2, 0.5);
        let cfg = evo.cfg();
        let b = evo.block(SectorCharge::new(1, 0)).unwrap();
        let stray = StateVec::basis(occ(cfg, &[(Family::Three, 0, 0)]));
        assert!(matches!(
            apply_evolution(b, &stray),
            Err(Error::OutsideSector(_))
        ));
        for i in 0..b.dim() {
            let col = apply_evolution(b, &StateVec::basis(b.basis.state(i).clone())).unwrap();
            assert!(col.minus(&b.column_state(i)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn single_lowering_path_sector() {
        let mut evo = setup(3, 0.7);
        let d = check_path_consistency(&mut evo, SectorCharge::new(1, 0), 100, 1).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn path_consistency_small_sectors() {
        let mut evo = setup(2, 0.5);
        let d = check_path_consistency(&mut evo, SectorCharge::new(1, 1), 100, 3).unwrap();
        assert!(d <= 1e-10, "deviation {d}");
        let mut evo = setup(2, 0.9);
        let d = check_path_consistency(&mut evo, SectorCharge::new(2, 2), 100, 3).unwrap();
        assert!(d <= 1e-10, "deviation {d}");
        let d = check_path_consistency_with(
            &mut evo,
            SectorCharge::new(2, 2),
            100,
            4,
            LoweringOrder::IMPURITY_FIRST,
        )
        .unwrap();
        assert!(d <= 1e-10, "deviation {d}");
    }

    #[test]
    fn block_json_shape() {
        let cfg = TorusConfig::new(2).unwrap();
        let params = ModelParams::new(0.5).unwrap();
        let b = build_evolution(cfg, params, SectorCharge::new(1, 0)).unwrap();
        let j = b.to_json(cfg, &params);
        assert_eq!(j["dim"], 4);
        let entries = j["entries"].as_array().unwrap();
        let norm2: f64 = entries
            .iter()
            .map(|e| e[2].as_f64().unwrap().powi(2) + e[3].as_f64().unwrap().powi(2))
            .sum();
        // Columns of a unitary have unit norm.
        assert!((norm2 - 4.0).abs() < 1e-12);
        assert_eq!(j["charge"]["q1"], 1);
    }
}
