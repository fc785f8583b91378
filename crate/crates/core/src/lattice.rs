//! Torus geometry of the M×M vertex lattice.
//!
//! Vertices are `v = k·e₁ + ℓ·e₃` with both coordinates in `Z_M`. Every
//! vertex hosts three oscillator modes (families 1, 2, 3). Modes are indexed
//! in `(family, ℓ, k)` order, which is also the order used to compare
//! occupations.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice period in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusConfig {
    m: usize,
}

impl TorusConfig {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_vertices(&self) -> usize {
        self.m * self.m
    }

    pub fn num_modes(&self) -> usize {
        3 * self.m * self.m
    }

    /// Vertex with coordinates reduced mod M.
    pub fn vertex(&self, k: i64, l: i64) -> Vertex {
        let m = self.m as i64;
        Vertex {
            k: k.rem_euclid(m) as usize,
            l: l.rem_euclid(m) as usize,
        }
    }

    /// `v + steps·direction`, reduced mod M.
    pub fn shift(&self, v: Vertex, direction: Direction, steps: i64) -> Vertex {
        match direction {
            Direction::E1 => self.vertex(v.k as i64 + steps, v.l as i64),
            Direction::E3 => self.vertex(v.k as i64, v.l as i64 + steps),
        }
    }

    /// Translate by an arbitrary lattice vector `(dk, dl)`.
    pub fn translate(&self, v: Vertex, dk: i64, dl: i64) -> Vertex {
        self.vertex(v.k as i64 + dk, v.l as i64 + dl)
    }

    /// Vertices in `(ℓ, k)` order, matching the mode order.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.m).flat_map(move |l| (0..self.m).map(move |k| Vertex { k, l }))
    }

    pub fn vertex_index(&self, v: Vertex) -> usize {
        v.l * self.m + v.k
    }

    pub fn mode_index(&self, mode: ModeId) -> usize {
        mode.family.index() * self.num_vertices() + self.vertex_index(mode.vertex)
    }

    pub fn mode_at(&self, index: usize) -> ModeId {
        let nv = self.num_vertices();
        let family = Family::ALL[index / nv];
        let rest = index % nv;
        ModeId {
            family,
            vertex: Vertex {
                k: rest % self.m,
                l: rest / self.m,
            },
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeId> + '_ {
        (0..self.num_modes()).map(move |i| self.mode_at(i))
    }
}

/// A lattice vertex `(k, ℓ)` with `0 ≤ k, ℓ < M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub k: usize,
    pub l: usize,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { k: 0, l: 0 };

    pub fn new(k: usize, l: usize) -> Self {
        Self { k, l }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    E1,
    E3,
}

/// Oscillator family hosted at each vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    One,
    Two,
    Three,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::One, Family::Two, Family::Three];

    pub fn index(self) -> usize {
        match self {
            Family::One => 0,
            Family::Two => 1,
            Family::Three => 2,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Family::One),
            2 => Some(Family::Two),
            3 => Some(Family::Three),
            _ => None,
        }
    }
}

/// Label of one local q-oscillator algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    pub family: Family,
    pub vertex: Vertex,
}

impl ModeId {
    pub fn new(family: Family, vertex: Vertex) -> Self {
        Self { family, vertex }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{},{}", self.family.number(), self.vertex.k, self.vertex.l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum GeometryClass {
    Coincident,
    Line,
    /// `k × l` sub-lattice, always with `k ≥ l ≥ 2`.
    Grid { k: usize, l: usize },
    Generic,
}

impl fmt::Display for GeometryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryClass::Coincident => write!(f, "coincident"),
            GeometryClass::Line => write!(f, "line"),
            GeometryClass::Grid { k, l } => write!(f, "grid:{k}x{l}"),
            GeometryClass::Generic => write!(f, "generic"),
        }
    }
}

/// Lifted product-set coordinates `{n_k} × {m_ℓ}` of a line or grid.
///
/// `n` and `m` are strictly increasing and span less than one period, so
/// `n[0], m[0]` is the bottom-left base point. After a cyclic re-anchoring
/// some entries exceed `M`; they still denote the same torus points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub n: Vec<i64>,
    pub m: Vec<i64>,
}

impl GridLayout {
    pub fn base(&self) -> (i64, i64) {
        (self.n[0], self.m[0])
    }

    /// Points in column-major `(k index, ℓ index)` order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, i64, i64)> + '_ {
        self.n.iter().enumerate().flat_map(move |(a, &n)| {
            self.m.iter().enumerate().map(move |(b, &m)| (a, b, n, m))
        })
    }
}

/// Particle positions together with their classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Geometry {
    pub positions: Vec<Vertex>,
    pub class: GeometryClass,
    /// Present for `Line` and `Grid`.
    pub layout: Option<GridLayout>,
}

impl Geometry {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Classify a position list as coincident, line, grid or generic.
pub fn classify_geometry(positions: &[Vertex], cfg: TorusConfig) -> Result<Geometry> {
    let Some(&first) = positions.first() else {
        return Err(Error::EmptyGeometry);
    };
    let positions: Vec<Vertex> = positions
        .iter()
        .map(|v| cfg.vertex(v.k as i64, v.l as i64))
        .collect();

    if positions.iter().all(|v| *v == cfg.vertex(first.k as i64, first.l as i64)) {
        return Ok(Geometry {
            positions,
            class: GeometryClass::Coincident,
            layout: None,
        });
    }

    let distinct: BTreeSet<Vertex> = positions.iter().copied().collect();
    let generic = Geometry {
        positions: positions.clone(),
        class: GeometryClass::Generic,
        layout: None,
    };
    if distinct.len() != positions.len() {
        return Ok(generic);
    }

    let ks: BTreeSet<usize> = positions.iter().map(|v| v.k).collect();
    let ls: BTreeSet<usize> = positions.iter().map(|v| v.l).collect();
    let layout = GridLayout {
        n: ks.iter().map(|&k| k as i64).collect(),
        m: ls.iter().map(|&l| l as i64).collect(),
    };
    let class = if ks.len() == 1 || ls.len() == 1 {
        GeometryClass::Line
    } else if ks.len() * ls.len() == positions.len() {
        // Distinct points, count equal to the product size: the product set.
        GeometryClass::Grid {
            k: ks.len().max(ls.len()),
            l: ks.len().min(ls.len()),
        }
    } else {
        return Ok(generic);
    };
    Ok(Geometry {
        positions,
        class,
        layout: Some(layout),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// `n_k − n₁`
    Horizontal,
    /// `m_ℓ − m₁`
    Vertical,
}

/// One break point of a coefficient chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub delta: i64,
    pub axis: Axis,
    /// Grid slot `(k index, ℓ index)` whose spectral parameter is tied to
    /// this break: `(k, 0)` for horizontal entries, `(0, ℓ)` for vertical.
    pub slot: (usize, usize),
}

/// Sorted differences from the base point of a line or grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaSchedule {
    pub base: Vertex,
    pub entries: Vec<ScheduleEntry>,
}

impl DeltaSchedule {
    pub fn deltas(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.delta).collect()
    }

    pub fn axes(&self) -> Vec<Axis> {
        self.entries.iter().map(|e| e.axis).collect()
    }
}

/// Merge the horizontal and vertical differences from the base, in strictly
/// increasing order.
pub fn delta_schedule(geom: &Geometry, cfg: TorusConfig) -> Result<DeltaSchedule> {
    let layout = match (&geom.class, &geom.layout) {
        (GeometryClass::Line | GeometryClass::Grid { .. }, Some(layout)) => layout,
        (GeometryClass::Coincident, _) if geom.len() == 1 => {
            return Ok(DeltaSchedule {
                base: geom.positions[0],
                entries: Vec::new(),
            })
        }
        (class, _) => return Err(Error::UnsupportedGeometry(class.to_string())),
    };
    let (n1, m1) = layout.base();
    let mut entries: Vec<ScheduleEntry> = layout.n[1..]
        .iter()
        .enumerate()
        .map(|(i, &n)| ScheduleEntry {
            delta: n - n1,
            axis: Axis::Horizontal,
            slot: (i + 1, 0),
        })
        .chain(layout.m[1..].iter().enumerate().map(|(i, &m)| ScheduleEntry {
            delta: m - m1,
            axis: Axis::Vertical,
            slot: (0, i + 1),
        }))
        .collect();
    entries.sort_by_key(|e| e.delta);
    if let Some(w) = entries.windows(2).find(|w| w[0].delta == w[1].delta) {
        return Err(Error::DegenerateSchedule(w[0].delta));
    }
    debug_assert!(entries
        .iter()
        .all(|e| e.delta >= 1 && e.delta < cfg.m() as i64));
    Ok(DeltaSchedule {
        base: cfg.vertex(n1, m1),
        entries,
    })
}

/// Re-label a line or grid so that `positions[new_base_index]` becomes the
/// bottom-left base. Coordinates left of (or below) the new base are lifted
/// by `+M`; the set of torus points is unchanged.
pub fn cyclic_reanchor(geom: &Geometry, cfg: TorusConfig, new_base_index: usize) -> Result<Geometry> {
    let target = *geom
        .positions
        .get(new_base_index)
        .ok_or_else(|| Error::InvalidParameter(format!("no position {new_base_index}")))?;
    let Some(layout) = &geom.layout else {
        return Ok(geom.clone());
    };
    let m = cfg.m() as i64;
    let rotate = |coords: &[i64], target: usize| -> Vec<i64> {
        let at = coords
            .iter()
            .position(|&c| c.rem_euclid(m) as usize == target)
            .expect("target lies on the layout");
        let lo = coords[at];
        coords[at..]
            .iter()
            .copied()
            .chain(coords[..at].iter().map(|&c| c + m))
            .map(|c| {
                // Keep the lifted window anchored at the new base.
                lo + (c - lo).rem_euclid(m)
            })
            .collect()
    };
    let new_layout = GridLayout {
        n: rotate(&layout.n, target.k),
        m: rotate(&layout.m, target.l),
    };
    let mut positions = geom.positions.clone();
    positions.sort_by_key(|v| {
        let dk = (v.k as i64 - target.k as i64).rem_euclid(m);
        let dl = (v.l as i64 - target.l as i64).rem_euclid(m);
        (dk, dl)
    });
    Ok(Geometry {
        positions,
        class: geom.class,
        layout: Some(new_layout),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(m: usize) -> TorusConfig {
        TorusConfig::new(m).unwrap()
    }

    fn verts(list: &[(usize, usize)]) -> Vec<Vertex> {
        list.iter().map(|&(k, l)| Vertex::new(k, l)).collect()
    }

    #[test]
    fn shift_examples() {
        let c = cfg(2);
        assert_eq!(c.shift(Vertex::new(0, 0), Direction::E1, 1), Vertex::new(1, 0));
        assert_eq!(c.shift(Vertex::new(1, 0), Direction::E1, 1), Vertex::new(0, 0));
        for m in 1..6 {
            let c = cfg(m);
            assert_eq!(
                c.shift(Vertex::ORIGIN, Direction::E3, m as i64),
                Vertex::ORIGIN
            );
        }
    }

    #[test]
    fn zero_period_rejected() {
        assert!(TorusConfig::new(0).is_err());
    }

    #[test]
    fn mode_index_roundtrip() {
        let c = cfg(3);
        assert_eq!(c.modes().count(), 27);
        for (i, mode) in c.modes().enumerate() {
            assert_eq!(c.mode_index(mode), i);
        }
    }

    #[test]
    fn classify_examples() {
        let c4 = cfg(4);
        assert_eq!(
            classify_geometry(&verts(&[(0, 0), (0, 0)]), c4).unwrap().class,
            GeometryClass::Coincident
        );
        assert_eq!(
            classify_geometry(&verts(&[(0, 0), (1, 0), (2, 0)]), c4)
                .unwrap()
                .class,
            GeometryClass::Line
        );
        assert_eq!(
            classify_geometry(&verts(&[(0, 0), (0, 1), (2, 0), (2, 1)]), c4)
                .unwrap()
                .class,
            GeometryClass::Grid { k: 2, l: 2 }
        );
        assert!(matches!(
            classify_geometry(&[], c4),
            Err(Error::EmptyGeometry)
        ));
    }

    #[test]
    fn classify_canonicalizes_and_demotes() {
        let c = cfg(5);
        // 2 columns × 3 rows is stored as 3×2.
        let g = classify_geometry(
            &verts(&[(0, 0), (0, 1), (0, 3), (2, 0), (2, 1), (2, 3)]),
            c,
        )
        .unwrap();
        assert_eq!(g.class, GeometryClass::Grid { k: 3, l: 2 });
        // Repeated point on a line is not a line.
        let g = classify_geometry(&verts(&[(0, 0), (1, 0), (1, 0)]), c).unwrap();
        assert_eq!(g.class, GeometryClass::Generic);
        // Incomplete product set.
        let g = classify_geometry(&verts(&[(0, 0), (1, 1), (1, 0)]), c).unwrap();
        assert_eq!(g.class, GeometryClass::Generic);
        let g = classify_geometry(&verts(&[(0, 0), (1, 1)]), c).unwrap();
        assert_eq!(g.class, GeometryClass::Generic);
    }

    #[test]
    fn schedule_examples() {
        let c7 = cfg(7);
        let g = classify_geometry(&verts(&[(0, 0), (0, 3), (2, 0), (2, 3)]), c7).unwrap();
        let s = delta_schedule(&g, c7).unwrap();
        assert_eq!(s.deltas(), vec![2, 3]);
        assert_eq!(s.axes(), vec![Axis::Horizontal, Axis::Vertical]);
        assert_eq!(s.entries[0].slot, (1, 0));
        assert_eq!(s.entries[1].slot, (0, 1));

        let c5 = cfg(5);
        let g = classify_geometry(&verts(&[(0, 0), (1, 0), (2, 0)]), c5).unwrap();
        let s = delta_schedule(&g, c5).unwrap();
        assert_eq!(s.deltas(), vec![1, 2]);
        assert_eq!(s.axes(), vec![Axis::Horizontal, Axis::Horizontal]);

        let g = classify_geometry(&verts(&[(0, 0), (0, 2), (2, 0), (2, 2)]), c7).unwrap();
        assert!(matches!(
            delta_schedule(&g, c7),
            Err(Error::DegenerateSchedule(2))
        ));

        let g = classify_geometry(&verts(&[(1, 1), (2, 2)]), c7).unwrap();
        assert!(matches!(
            delta_schedule(&g, c7),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn reanchor_examples() {
        let c = cfg(5);
        let g = classify_geometry(&verts(&[(1, 0), (3, 0)]), c).unwrap();
        let same = cyclic_reanchor(&g, c, 0).unwrap();
        assert_eq!(same.layout, g.layout);
        let moved = cyclic_reanchor(&g, c, 1).unwrap();
        assert_eq!(moved.layout.as_ref().unwrap().n, vec![3, 6]);
        assert_eq!(moved.positions[0], Vertex::new(3, 0));
        let s = delta_schedule(&moved, c).unwrap();
        assert_eq!(s.deltas(), vec![3]);
        // Reanchoring back closes the loop mod M.
        let back = cyclic_reanchor(&moved, c, 1).unwrap();
        let reduced: Vec<i64> = back.layout.unwrap().n.iter().map(|n| n % 5).collect();
        assert_eq!(reduced, vec![1, 3]);
    }

    fn arb_positions(m: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        prop::collection::vec((0..m, 0..m), 1..6)
    }

    proptest! {
        #[test]
        fn shift_is_group_action(k in 0usize..5, l in 0usize..5, a in -12i64..12, b in -12i64..12) {
            let c = cfg(5);
            let v = Vertex::new(k, l);
            for d in [Direction::E1, Direction::E3] {
                prop_assert_eq!(c.shift(c.shift(v, d, a), d, b), c.shift(v, d, a + b));
                prop_assert_eq!(c.shift(v, d, 5), v);
            }
        }

        #[test]
        fn classification_translation_invariant(pos in arb_positions(4), dk in 0i64..4, dl in 0i64..4) {
            let c = cfg(4);
            let a = classify_geometry(&verts(&pos), c).unwrap();
            let moved: Vec<Vertex> = verts(&pos).into_iter().map(|v| c.translate(v, dk, dl)).collect();
            let b = classify_geometry(&moved, c).unwrap();
            prop_assert_eq!(a.class, b.class);
        }

        #[test]
        fn reanchor_preserves_points(ks in prop::collection::btree_set(0usize..6, 1..4),
                                     ls in prop::collection::btree_set(0usize..6, 1..3),
                                     pick in 0usize..12) {
            let c = cfg(6);
            let pos: Vec<Vertex> = ks.iter().flat_map(|&k| ls.iter().map(move |&l| Vertex::new(k, l))).collect();
            prop_assume!(pos.len() >= 2);
            let g = classify_geometry(&pos, c).unwrap();
            let r = cyclic_reanchor(&g, c, pick % pos.len()).unwrap();
            let before: BTreeSet<Vertex> = g.positions.iter().copied().collect();
            let layout = r.layout.clone().unwrap();
            let after: BTreeSet<Vertex> = layout.points().map(|(_, _, n, m)| c.vertex(n, m)).collect();
            prop_assert_eq!(&before, &after);
            prop_assert_eq!(r.class, g.class);
            prop_assert!(layout.n.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(layout.m.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(layout.n.last().unwrap() - layout.n[0] < 6);
        }
    }
}
