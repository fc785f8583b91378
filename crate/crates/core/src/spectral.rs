//! Spectral equations `F_n({X}, {x}) = P_{n,N}(q)` and their solvers.
//!
//! Spectral parameters `u` are traded for
//!
//! ```text
//! x = (q + u)/(1 + q u),        X = uᴹ x,
//! S(a, b) = (q⁻¹ x_a − q x_b)/(x_a − x_b),
//! F_n = Σ_{|I|=n} ∏_{i∈I} X_i ∏_{i∈I, j∉I} S(i, j).
//! ```
//!
//! The right-hand sides `P_{n,N}` are Laurent polynomials in `q` selected by
//! the particle geometry, kept exact as integer coefficients.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::lattice::GeometryClass;
use crate::linalg::{poly_roots, solve, C64};

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);
const POLISH_STEPS: usize = 60;

/// Finite sum `Σ c_e qᵉ` with integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LaurentPoly {
    terms: BTreeMap<i32, i64>,
}

impl LaurentPoly {
    pub fn constant(c: i64) -> Self {
        Self::monomial(0, c)
    }

    pub fn monomial(exp: i32, c: i64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0 {
            terms.insert(exp, c);
        }
        Self { terms }
    }

    pub fn terms(&self) -> &BTreeMap<i32, i64> {
        &self.terms
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (&e, &c) in &other.terms {
            *terms.entry(e).or_insert(0) += c;
        }
        terms.retain(|_, c| *c != 0);
        Self { terms }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = BTreeMap::new();
        for (&e1, &c1) in &self.terms {
            for (&e2, &c2) in &other.terms {
                *terms.entry(e1 + e2).or_insert(0) += c1 * c2;
            }
        }
        terms.retain(|_, c| *c != 0);
        Self { terms }
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.terms.iter().map(|(&e, &c)| c as f64 * q.powi(e)).sum()
    }

    /// Invariant under `q → q⁻¹`.
    pub fn is_palindromic(&self) -> bool {
        self.terms.iter().all(|(&e, &c)| self.terms.get(&-e) == Some(&c))
    }
}

impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (&e, &c)) in self.terms.iter().enumerate() {
            let sign = if c < 0 { "-" } else if i > 0 { "+" } else { "" };
            let sep = if i > 0 { " " } else { "" };
            let mag = c.abs();
            let body = match (e, mag) {
                (0, m) => m.to_string(),
                (e, 1) => format!("q^{e}"),
                (e, m) => format!("{m}q^{e}"),
            };
            write!(f, "{sep}{sign}{}{body}", if i > 0 { " " } else { "" })?;
        }
        Ok(())
    }
}

/// Which generating function a family comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FamilyKind {
    /// `(1 + z)ᴺ`
    Binomial,
    /// `(−q^{1−N} z; q²)_N`
    QBinomial,
    /// `(−q^{1−L} z; q²)_L^K`
    Grid { k: usize, l: usize },
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Binomial => write!(f, "binomial"),
            FamilyKind::QBinomial => write!(f, "q-binomial"),
            FamilyKind::Grid { k, l } => write!(f, "grid:{k}x{l}"),
        }
    }
}

/// Coefficients `P_{0,N} … P_{N,N}` of a generating polynomial in `z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyFamily {
    pub n: usize,
    pub kind: FamilyKind,
    pub coeffs: Vec<LaurentPoly>,
}

/// `∏ (1 + q^{e} z)` over `exps`, as coefficients in `z`.
fn product_of_linear(exps: impl IntoIterator<Item = i32>) -> Vec<LaurentPoly> {
    let mut poly = vec![LaurentPoly::constant(1)];
    for e in exps {
        let mut next = vec![LaurentPoly::default(); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] = next[i].add(c);
            next[i + 1] = next[i + 1].add(&c.mul(&LaurentPoly::monomial(e, 1)));
        }
        poly = next;
    }
    poly
}

/// `(−q^{1−L} z; q²)_L = ∏_{j<L} (1 + q^{1−L+2j} z)`
fn q_pochhammer_exps(l: usize) -> impl Iterator<Item = i32> {
    (0..l as i32).map(move |j| 1 - l as i32 + 2 * j)
}

impl PolyFamily {
    pub fn binomial(n: usize) -> Self {
        Self {
            n,
            kind: FamilyKind::Binomial,
            coeffs: product_of_linear(std::iter::repeat_n(0, n)),
        }
    }

    pub fn q_binomial(n: usize) -> Self {
        Self {
            n,
            kind: FamilyKind::QBinomial,
            coeffs: product_of_linear(q_pochhammer_exps(n)),
        }
    }

    pub fn grid(k: usize, l: usize) -> Self {
        let exps: Vec<i32> = (0..k).flat_map(|_| q_pochhammer_exps(l)).collect();
        Self {
            n: k * l,
            kind: FamilyKind::Grid { k, l },
            coeffs: product_of_linear(exps),
        }
    }

    /// Numeric `P_n(q)`, `n = 0…N`.
    pub fn values(&self, q: f64) -> Vec<f64> {
        self.coeffs.iter().map(|p| p.eval(q)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coeffs: Vec<BTreeMap<String, i64>> = self
            .coeffs
            .iter()
            .map(|p| p.terms().iter().map(|(e, c)| (e.to_string(), *c)).collect())
            .collect();
        json!({
            "kind": self.kind.to_string(),
            "N": self.n,
            "coeffs": coeffs,
            "display": self.coeffs.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Right-hand sides for a geometry class with `n` particles.
pub fn family(class: GeometryClass, n: usize) -> Result<PolyFamily> {
    match class {
        GeometryClass::Line => Ok(PolyFamily::binomial(n)),
        GeometryClass::Coincident | GeometryClass::Generic => Ok(PolyFamily::q_binomial(n)),
        GeometryClass::Grid { k, l } => {
            if k * l != n || k < l {
                return Err(Error::InvalidParameter(format!(
                    "grid {k}x{l} does not hold {n} particles"
                )));
            }
            Ok(PolyFamily::grid(k, l))
        }
    }
}

/// `max_n |P_n(1 − ε) − binomial(N, n)|`.
pub fn q_limit_check(fam: &PolyFamily, eps: f64) -> f64 {
    let binom = PolyFamily::binomial(fam.n).values(1.0);
    fam.values(1.0 - eps)
        .iter()
        .zip(binom)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(u, x, X)` for one spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub u: C64,
    pub x: C64,
    pub big_x: C64,
    pub m: usize,
    pub q: f64,
}

pub fn x_of_u(u: C64, q: f64) -> C64 {
    (q + u) / (1.0 + q * u)
}

pub fn u_of_x(x: C64, q: f64) -> C64 {
    (x - q) / (1.0 - q * x)
}

pub fn lift(u: C64, q: f64, m: usize) -> Result<SpectralParams> {
    let den = 1.0 + q * u;
    if den.norm() <= 1e-300 {
        return Err(Error::Pole(format!("u = {u} sits at -1/q")));
    }
    let x = (q + u) / den;
    Ok(SpectralParams {
        u,
        x,
        big_x: u.powu(m as u32) * x,
        m,
        q,
    })
}

/// Two-particle kernel in the `x` variables.
pub fn kernel_s(xi: C64, xj: C64, q: f64) -> Result<C64> {
    let d = xi - xj;
    if d.norm() <= 1e-15 * (1.0 + xi.norm() + xj.norm()) {
        return Err(Error::Pole("coincident x".into()));
    }
    Ok((xi / q - q * xj) / d)
}

/// The same kernel written directly in `u`:
/// `(q + u_i + q² u_i + q u_i u_j) / (q (u_i − u_j))`.
pub fn kernel_s_u(ui: C64, uj: C64, q: f64) -> Result<C64> {
    let d = ui - uj;
    if d.norm() <= 1e-15 * (1.0 + ui.norm() + uj.norm()) {
        return Err(Error::Pole("coincident u".into()));
    }
    Ok((q + ui + q * q * ui + q * ui * uj) / (q * d))
}

/// `S[i][j]` for all ordered pairs; the diagonal is unused.
pub fn kernel_matrix(xs: &[C64], q: f64) -> Result<Vec<Vec<C64>>> {
    let n = xs.len();
    let mut s = vec![vec![ZERO; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[i][j] = kernel_s(xs[i], xs[j], q).map_err(|_| Error::SingularKernel(i.min(j), i.max(j)))?;
            }
        }
    }
    Ok(s)
}

/// All `F_0 … F_N` for independent `{x}` and `{X}`.
pub fn elementary_f_all(xs: &[C64], big_x: &[C64], q: f64) -> Result<Vec<C64>> {
    let n = xs.len();
    assert_eq!(n, big_x.len());
    let s = kernel_matrix(xs, q)?;
    let mut f = vec![ZERO; n + 1];
    for mask in 0u32..(1 << n) {
        let mut term = ONE;
        for i in (0..n).filter(|i| mask & (1 << i) != 0) {
            term *= big_x[i];
            for j in (0..n).filter(|j| mask & (1 << j) == 0) {
                term *= s[i][j];
            }
        }
        f[mask.count_ones() as usize] += term;
    }
    Ok(f)
}

/// `F_n` for lifted parameters.
pub fn elementary_f(n: usize, params: &[SpectralParams]) -> Result<C64> {
    if n > params.len() {
        return Err(Error::InvalidParameter(format!("n = {n} exceeds N = {}", params.len())));
    }
    let q = params.first().map_or(0.5, |p| p.q);
    let xs: Vec<C64> = params.iter().map(|p| p.x).collect();
    let bx: Vec<C64> = params.iter().map(|p| p.big_x).collect();
    Ok(elementary_f_all(&xs, &bx, q)?[n])
}

/// Non-interacting branch: every `X_i = 1`.
pub fn branch_free(n: usize) -> Vec<C64> {
    vec![ONE; n]
}

/// `X_i = ∏_{j≠i} S(j,i)/S(i,j)`.
pub fn branch_xxz(xs: &[C64], q: f64) -> Result<Vec<C64>> {
    let s = kernel_matrix(xs, q)?;
    Ok((0..xs.len())
        .map(|i| {
            (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| s[j][i] / s[i][j])
                .product()
        })
        .collect())
}

/// `X_i ↦ X_i⁻¹ ∏_{j≠i} S(j,i)/S(i,j)`.
pub fn dual_map(xs: &[C64], big_x: &[C64], q: f64) -> Result<Vec<C64>> {
    if big_x.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::Pole("X = 0 has no dual".into()));
    }
    let xxz = branch_xxz(xs, q)?;
    Ok(big_x.iter().zip(xxz).map(|(&b, r)| r / b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Free,
    Xxz,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    UParametrized,
    XFree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Random unit-circle starts, on top of the branch seeds.
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub dedup: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 42,
            tol: 1e-10,
            dedup: 1e-6,
            max_iter: 200,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Empty in x-free mode.
    pub u: Vec<C64>,
    pub x: Vec<C64>,
    pub big_x: Vec<C64>,
    /// `∏ u`; absent in x-free mode.
    pub lambda: Option<C64>,
    pub residual: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub family: PolyFamily,
    pub n: usize,
    pub m: usize,
    pub q: f64,
    pub mode: SolveMode,
    pub dedup_radius: f64,
    pub starts_tried: usize,
    pub starts_converged: usize,
    pub solutions: Vec<Solution>,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

impl SolutionSet {
    pub fn to_json(&self) -> serde_json::Value {
        let solutions: Vec<_> = self
            .solutions
            .iter()
            .map(|s| {
                json!({
                    "u": s.u.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
                    "x": s.x.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
                    "X": s.big_x.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
                    "Lambda": s.lambda.map(pair),
                    "residual": s.residual,
                    "branch": s.branch,
                })
            })
            .collect();
        json!({
            "family": self.family.to_json(),
            "N": self.n,
            "M": self.m,
            "q": self.q,
            "mode": self.mode,
            "dedup_radius": self.dedup_radius,
            "starts_tried": self.starts_tried,
            "starts_converged": self.starts_converged,
            "solutions": solutions,
        })
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.solutions.iter().filter_map(|s| s.lambda).collect()
    }
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Damped Newton iteration with a central-difference Jacobian. `f` returns
/// `None` where the system is undefined (poles, coincident parameters).
fn newton<F>(f: &F, start: Vec<C64>, opts: &SolveOptions) -> Option<(Vec<C64>, f64)>
where
    F: Fn(&[C64]) -> Option<Vec<C64>>,
{
    let n = start.len();
    let mut z = start;
    let mut r = f(&z)?;
    let mut norm = max_abs(&r);
    // Past the tolerance, keep stepping while the residual still drops: near
    // multiple roots convergence is only linear.
    let mut polish = 0;
    for _ in 0..opts.max_iter + POLISH_STEPS {
        if norm <= opts.tol {
            if polish == POLISH_STEPS || norm == 0.0 {
                break;
            }
            polish += 1;
        }
        let mut jac = Array2::from_elem((r.len(), n), ZERO);
        for j in 0..n {
            let h = opts.fd_step * (1.0 + z[j].norm());
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (rp, rm) = (f(&zp)?, f(&zm)?);
            for i in 0..r.len() {
                jac[[i, j]] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs: Vec<C64> = r.iter().map(|&v| -v).collect();
        let step = solve(&jac, &rhs).ok()?;
        if step.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return None;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<C64> = z.iter().zip(&step).map(|(a, b)| a + b * t).collect();
            if let Some(rt) = f(&trial) {
                let nt = max_abs(&rt);
                if nt.is_finite() && nt < norm {
                    z = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (norm <= opts.tol).then_some((z, norm))
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    out.push(a.clone());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Distance between two parameter lists up to relabelling.
pub fn permutation_distance(a: &[C64], b: &[C64]) -> f64 {
    permutations(a.len())
        .iter()
        .map(|p| {
            a.iter()
                .zip(p)
                .map(|(x, &j)| (x - b[j]).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Roots of `(q + u)uᴹ = 1 + q u`, i.e. `u^{M+1} + q uᴹ − q u − 1 = 0`.
pub fn one_particle_roots(m: usize, q: f64) -> Result<Vec<C64>> {
    let mut coeffs = vec![ZERO; m + 2];
    coeffs[0] += -1.0;
    coeffs[1] += -q;
    coeffs[m] += q;
    coeffs[m + 1] += 1.0;
    let mut roots = poly_roots(&coeffs)?;
    sort_by_angle(&mut roots, |z| *z);
    Ok(roots)
}

fn sort_by_angle<T>(items: &mut [T], key: impl Fn(&T) -> C64) {
    let angle = |z: C64| {
        let a = z.arg();
        // Put the positive real axis first and round to stabilize ties.
        let a = if a < -1e-12 { a + TAU } else { a.max(0.0) };
        ((a * 1e9).round(), (z.norm() * 1e9).round())
    };
    items.sort_by(|a, b| {
        angle(key(a))
            .partial_cmp(&angle(key(b)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// The single-particle spectrum as a solution set.
pub fn solve_one_particle(m: usize, q: f64) -> Result<SolutionSet> {
    let roots = one_particle_roots(m, q)?;
    let solutions = roots
        .iter()
        .map(|&u| {
            let p = lift(u, q, m)?;
            Ok(Solution {
                u: vec![u],
                x: vec![p.x],
                big_x: vec![p.big_x],
                lambda: Some(u),
                residual: (p.big_x - 1.0).norm(),
                branch: Branch::Free,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionSet {
        family: PolyFamily::binomial(1),
        n: 1,
        m,
        q,
        mode: SolveMode::UParametrized,
        dedup_radius: 0.0,
        starts_tried: roots.len(),
        starts_converged: roots.len(),
        solutions,
    })
}

fn lift_all(us: &[C64], q: f64, m: usize) -> Option<(Vec<C64>, Vec<C64>)> {
    let mut xs = Vec::with_capacity(us.len());
    let mut bx = Vec::with_capacity(us.len());
    for &u in us {
        if (1.0 + q * u).norm() < 1e-8 || !u.re.is_finite() || u.norm() > 1e6 {
            return None;
        }
        let p = lift(u, q, m).ok()?;
        xs.push(p.x);
        bx.push(p.big_x);
    }
    Some((xs, bx))
}

fn min_pair_gap(v: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            gap = gap.min((v[i] - v[j]).norm());
        }
    }
    gap
}

fn classify_branch(xs: &[C64], bx: &[C64], q: f64) -> Branch {
    let close = |a: &[C64], b: &[C64]| {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).norm() <= 1e-6 * (1.0 + y.norm()))
    };
    if close(bx, &branch_free(bx.len())) {
        Branch::Free
    } else if branch_xxz(xs, q).is_ok_and(|t| close(bx, &t)) {
        Branch::Xxz
    } else {
        Branch::Other
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Residuals `F_n − P_n`, `n = 1…N`, as functions of `{u}`.
pub fn u_residuals(us: &[C64], q: f64, m: usize, targets: &[f64]) -> Option<Vec<C64>> {
    let (xs, bx) = lift_all(us, q, m)?;
    let f = elementary_f_all(&xs, &bx, q).ok()?;
    Some((1..=us.len()).map(|n| f[n] - targets[n]).collect())
}

fn xxz_residuals(us: &[C64], q: f64, m: usize) -> Option<Vec<C64>> {
    let (xs, bx) = lift_all(us, q, m)?;
    let t = branch_xxz(&xs, q).ok()?;
    Some(bx.iter().zip(t).map(|(a, b)| a - b).collect())
}

/// Solve the spectral system for `n` particles with right-hand sides `fam`.
pub fn solve_system(
    n: usize,
    m: usize,
    q: f64,
    fam: &PolyFamily,
    mode: SolveMode,
    opts: &SolveOptions,
) -> Result<SolutionSet> {
    if fam.n != n {
        return Err(Error::InvalidParameter(format!(
            "family holds {} particles, asked for {n}",
            fam.n
        )));
    }
    match mode {
        SolveMode::UParametrized => solve_u(n, m, q, fam, opts),
        SolveMode::XFree => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let xs = random_x(n, &mut rng);
            solve_x_free(fam, &xs, q, m, opts)
        }
    }
}

/// Random, well separated `x` values inside the unit disc.
pub fn random_x(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    loop {
        let xs: Vec<C64> = (0..n)
            .map(|_| C64::from_polar(rng.gen_range(0.2..0.9), rng.gen_range(0.0..TAU)))
            .collect();
        if min_pair_gap(&xs) > 0.1 {
            return xs;
        }
    }
}

fn solve_u(n: usize, m: usize, q: f64, fam: &PolyFamily, opts: &SolveOptions) -> Result<SolutionSet> {
    let targets = fam.values(q);
    let system = |us: &[C64]| -> Option<Vec<C64>> {
        if min_pair_gap(us) < opts.dedup {
            return None;
        }
        u_residuals(us, q, m, &targets)
    };

    let roots = one_particle_roots(m, q)?;
    let mut seeds: Vec<Vec<C64>> = combinations(roots.len(), n)
        .into_iter()
        .map(|c| c.into_iter().map(|i| roots[i]).collect())
        .collect();
    let xxz_system = |us: &[C64]| -> Option<Vec<C64>> {
        if min_pair_gap(us) < opts.dedup {
            return None;
        }
        xxz_residuals(us, q, m)
    };
    let mut xxz_seeds = Vec::new();
    for s in &seeds {
        if let Some((z, _)) = newton(&xxz_system, s.clone(), opts) {
            xxz_seeds.push(z);
        }
    }
    seeds.extend(xxz_seeds);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.starts {
        seeds.push(
            (0..n)
                .map(|_| C64::from_polar(1.0, rng.gen_range(0.0..TAU)))
                .collect(),
        );
    }

    let starts_tried = seeds.len();
    let mut starts_converged = 0;
    let mut solutions: Vec<Solution> = Vec::new();
    for seed in seeds {
        let Some((us, residual)) = newton(&system, seed, opts) else {
            continue;
        };
        starts_converged += 1;
        if let Some(i) = solutions
            .iter()
            .position(|s| permutation_distance(&s.u, &us) <= opts.dedup)
        {
            if residual >= solutions[i].residual {
                continue;
            }
            solutions.remove(i);
        }
        let mut us = us;
        sort_by_angle(&mut us, |z| *z);
        let (xs, bx) = lift_all(&us, q, m).expect("converged point is regular");
        solutions.push(Solution {
            lambda: Some(us.iter().product()),
            branch: classify_branch(&xs, &bx, q),
            u: us,
            x: xs,
            big_x: bx,
            residual,
        });
    }
    sort_by_angle(&mut solutions, |s| s.lambda.unwrap_or(ZERO));
    Ok(SolutionSet {
        family: fam.clone(),
        n,
        m,
        q,
        mode: SolveMode::UParametrized,
        dedup_radius: opts.dedup,
        starts_tried,
        starts_converged,
        solutions,
    })
}

/// Solve for `{X}` at fixed `{x}`.
pub fn solve_x_free(
    fam: &PolyFamily,
    xs: &[C64],
    q: f64,
    m: usize,
    opts: &SolveOptions,
) -> Result<SolutionSet> {
    let n = xs.len();
    if fam.n != n {
        return Err(Error::InvalidParameter("family size differs from x count".into()));
    }
    kernel_matrix(xs, q)?;
    let targets = fam.values(q);
    let system = |bx: &[C64]| -> Option<Vec<C64>> {
        let f = elementary_f_all(xs, bx, q).ok()?;
        Some((1..=n).map(|k| f[k] - targets[k]).collect())
    };
    let mut seeds = vec![branch_free(n), branch_xxz(xs, q)?];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    for _ in 0..opts.starts {
        seeds.push(
            (0..n)
                .map(|_| {
                    let r: f64 = rng.gen_range(-1.5f64..1.5).exp();
                    C64::from_polar(r, rng.gen_range(0.0..TAU))
                })
                .collect(),
        );
    }
    let starts_tried = seeds.len();
    let mut starts_converged = 0;
    let mut solutions: Vec<Solution> = Vec::new();
    for seed in seeds {
        let Some((bx, residual)) = newton(&system, seed, opts) else {
            continue;
        };
        starts_converged += 1;
        let dup = solutions.iter().any(|s| {
            s.big_x
                .iter()
                .zip(&bx)
                .all(|(a, b)| (a - b).norm() <= opts.dedup * (1.0 + b.norm()))
        });
        if !dup {
            solutions.push(Solution {
                u: Vec::new(),
                x: xs.to_vec(),
                branch: classify_branch(xs, &bx, q),
                big_x: bx,
                lambda: None,
                residual,
            });
        }
    }
    sort_by_angle(&mut solutions, |s| s.big_x[0]);
    Ok(SolutionSet {
        family: fam.clone(),
        n,
        m,
        q,
        mode: SolveMode::XFree,
        dedup_radius: opts.dedup,
        starts_tried,
        starts_converged,
        solutions,
    })
}
