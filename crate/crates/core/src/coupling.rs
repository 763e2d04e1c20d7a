//! One-step dominance couplings of hipster walks and their verification.
//!
//! Two independent copies `(A, B)` and `(C, D)` of a coupling `(X, Y)` of `μ`
//! and `ν` feed one node of each process: `X'` is the output on `(A, C)` and
//! `Y'` the output on `(B, D)`. Each process has two equally likely outcomes
//! (a fair coin between distinct children, or a step from equal ones), and the
//! case table pairs them so that `X' ≤ Y'` whenever `A ≤ B` and `C ≤ D`.
//!
//! The node randomness is a pair of uniforms `(U₁, U₂)`. Process `X` takes its
//! "high" outcome when `U₁ ≥ θ_X`, where `θ = 1 − q` for a step of the totally
//! asymmetric walk and `½` otherwise; `Y` does the same with `U₁`, except on
//! `E₄` of the symmetric walk, where it uses the independent `U₂`.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::evolution::{evolve, Flavor};
use crate::rde::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingFlavor {
    Symmetric,
    TotallyAsymmetric { q: f64 },
}

impl CouplingFlavor {
    pub fn flavor(&self) -> Flavor {
        match self {
            CouplingFlavor::Symmetric => Flavor::Symmetric,
            CouplingFlavor::TotallyAsymmetric { q } => Flavor::TotallyAsymmetric { q: *q },
        }
    }

    fn validate(&self) -> Result<()> {
        self.flavor().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledInputs {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    /// `A ≤ B, C ≤ D`
    E1,
    /// `A ≤ B, C > D`
    E2,
    /// `A > B, C ≤ D`
    E3,
    /// `A > B, C > D`
    E4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subcase {
    /// `A = C, B ≠ D`
    I,
    /// `A ≠ C, B ≠ D`
    II,
    /// `A ≠ C, B = D`
    III,
    /// `A = C, B = D`
    IV,
}

pub fn classify(x: &CoupledInputs) -> (Event, Subcase) {
    let event = match (x.a <= x.b, x.c <= x.d) {
        (true, true) => Event::E1,
        (true, false) => Event::E2,
        (false, true) => Event::E3,
        (false, false) => Event::E4,
    };
    let sub = match (x.a == x.c, x.b == x.d) {
        (true, false) => Subcase::I,
        (false, false) => Subcase::II,
        (false, true) => Subcase::III,
        (true, true) => Subcase::IV,
    };
    (event, sub)
}

/// High/low outcomes of each process and whether `Y` shares `X`'s uniform.
struct Pairing {
    x: (i64, i64),
    y: (i64, i64),
    shared: bool,
}

fn pairing(flavor: &CouplingFlavor, inp: &CoupledInputs) -> Pairing {
    let CoupledInputs { a, b, c, d } = *inp;
    let (event, sub) = classify(inp);
    let tal = matches!(flavor, CouplingFlavor::TotallyAsymmetric { .. });
    // Lower outcome of a step: A−1 / D−1 for the symmetric walk, A / D for the lazy one.
    let down = if tal { 0 } else { 1 };
    let shared = |x, y| Pairing { x, y, shared: true };
    if sub == Subcase::II {
        return shared((c, a), (d, b));
    }
    // On E₄ the lazy walk reuses the E₁ table, which forces X' > Y'.
    let event = if tal && event == Event::E4 { Event::E1 } else { event };
    match (event, sub) {
        (Event::E1, Subcase::I) => shared((a + 1, a - down), (b.max(d), b.min(d))),
        (Event::E1, Subcase::III) => shared((a.max(c), a.min(c)), (d + 1, d - down)),
        (Event::E1, Subcase::IV) => shared((a + 1, a - down), (d + 1, d - down)),
        (Event::E2, Subcase::I) => shared((a + 1, a - down), (d, b)),
        (Event::E2, Subcase::III) => shared((a, c), (d + 1, d - down)),
        (Event::E3, Subcase::I) if tal => shared((a + 1, a), (b, d)),
        (Event::E3, Subcase::I) => shared((a - 1, a + 1), (d, b)),
        (Event::E3, Subcase::III) => shared((c, a), (d + 1, d - down)),
        (Event::E4, _) => Pairing {
            x: if a == c { (a + 1, a - 1) } else { (c, a) },
            y: if b == d { (d + 1, d - 1) } else { (d, b) },
            shared: false,
        },
        // E₂(iv) and E₃(iv) are empty.
        _ => unreachable!("impossible case {event:?}/{sub:?}"),
    }
}

fn thresholds(flavor: &CouplingFlavor, inp: &CoupledInputs) -> (f64, f64) {
    match flavor {
        CouplingFlavor::TotallyAsymmetric { q } => (
            if inp.a == inp.c { 1.0 - q } else { 0.5 },
            if inp.b == inp.d { 1.0 - q } else { 0.5 },
        ),
        CouplingFlavor::Symmetric => (0.5, 0.5),
    }
}

/// Outputs of both processes for fixed node uniforms `u1`, `u2` in `[0, 1)`.
pub fn couple_step_with(flavor: &CouplingFlavor, inp: &CoupledInputs, u1: f64, u2: f64) -> (i64, i64) {
    let p = pairing(flavor, inp);
    let (tx, ty) = thresholds(flavor, inp);
    let x = if u1 >= tx { p.x.0 } else { p.x.1 };
    let uy = if p.shared { u1 } else { u2 };
    let y = if uy >= ty { p.y.0 } else { p.y.1 };
    (x, y)
}

pub fn couple_sym_step<R: Rng + ?Sized>(inp: &CoupledInputs, rng: &mut R) -> (i64, i64) {
    couple_step_with(&CouplingFlavor::Symmetric, inp, rng.random(), rng.random())
}

pub fn couple_tal_step<R: Rng + ?Sized>(inp: &CoupledInputs, q: f64, rng: &mut R) -> (i64, i64) {
    couple_step_with(&CouplingFlavor::TotallyAsymmetric { q }, inp, rng.random(), rng.random())
}

/// Every outcome of one coupled step with its probability, from the cells of
/// the partition of `(U₁, U₂)` by the thresholds.
pub fn step_outcomes(flavor: &CouplingFlavor, inp: &CoupledInputs) -> Vec<((i64, i64), f64)> {
    let (tx, ty) = thresholds(flavor, inp);
    let mut cuts1 = vec![0.0, tx, 1.0];
    let shared = pairing(flavor, inp).shared;
    if shared {
        cuts1.push(ty);
    }
    cuts1.sort_by(f64::total_cmp);
    cuts1.dedup();
    let cuts2: Vec<f64> = if shared { vec![0.0, 1.0] } else { vec![0.0, ty, 1.0] };
    let mut out: Vec<((i64, i64), f64)> = Vec::with_capacity(4);
    for w1 in cuts1.windows(2) {
        for w2 in cuts2.windows(2) {
            let weight = (w1[1] - w1[0]) * (w2[1] - w2[0]);
            if weight <= 0.0 {
                continue;
            }
            let o = couple_step_with(flavor, inp, 0.5 * (w1[0] + w1[1]), 0.5 * (w2[0] + w2[1]));
            match out.iter_mut().find(|e| e.0 == o) {
                Some(e) => e.1 += weight,
                None => out.push((o, weight)),
            }
        }
    }
    out
}

/// A law on pairs of integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<((i64, i64), f64)>", into = "Vec<((i64, i64), f64)>")]
pub struct JointPmf {
    atoms: BTreeMap<(i64, i64), f64>,
}

impl TryFrom<Vec<((i64, i64), f64)>> for JointPmf {
    type Error = Error;

    fn try_from(v: Vec<((i64, i64), f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<JointPmf> for Vec<((i64, i64), f64)> {
    fn from(j: JointPmf) -> Self {
        j.atoms.into_iter().collect()
    }
}

impl JointPmf {
    pub fn new<I: IntoIterator<Item = ((i64, i64), f64)>>(atoms: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, w) in atoms {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidPmf(format!("joint weight {w} at {k:?}")));
            }
            if w > 0.0 {
                *map.entry(k).or_insert(0.0) += w;
            }
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > crate::dist::NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidPmf(format!("joint law sums to {total}")));
        }
        Ok(Self { atoms: map })
    }

    /// `X` and `Y` independent.
    pub fn independent(mu: &Pmf, nu: &Pmf) -> Self {
        let atoms = mu
            .iter()
            .flat_map(|(x, p)| nu.iter().map(move |(y, r)| ((x, y), p * r)))
            .filter(|a| a.1 > 0.0)
            .collect();
        Self { atoms }
    }

    /// Quantile coupling: `X = F_μ^{-1}(U)`, `Y = F_ν^{-1}(U)`.
    pub fn monotone(mu: &Pmf, nu: &Pmf) -> Self {
        let xs: Vec<(i64, f64)> = mu.iter().filter(|a| a.1 > 0.0).collect();
        let ys: Vec<(i64, f64)> = nu.iter().filter(|a| a.1 > 0.0).collect();
        let mut atoms = BTreeMap::new();
        let (mut i, mut j) = (0, 0);
        let (mut rx, mut ry) = (xs[0].1, ys[0].1);
        loop {
            let m = rx.min(ry);
            if m > 0.0 {
                *atoms.entry((xs[i].0, ys[j].0)).or_insert(0.0) += m;
            }
            rx -= m;
            ry -= m;
            let last_x = i + 1 == xs.len();
            let last_y = j + 1 == ys.len();
            if last_x && last_y {
                break;
            }
            if (rx <= ry && !last_x) || last_y {
                i += 1;
                rx += xs[i].1;
            } else {
                j += 1;
                ry += ys[j].1;
            }
        }
        Self { atoms }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), f64)> + '_ {
        self.atoms.iter().map(|(&k, &w)| (k, w))
    }

    pub fn marginals(&self) -> Result<(Pmf, Pmf)> {
        let mut mx: BTreeMap<i64, f64> = BTreeMap::new();
        let mut my: BTreeMap<i64, f64> = BTreeMap::new();
        for ((x, y), w) in self.iter() {
            *mx.entry(x).or_default() += w;
            *my.entry(y).or_default() += w;
        }
        Ok((Pmf::from_atoms(mx)?, Pmf::from_atoms(my)?))
    }

    /// `P(X > Y)`.
    pub fn p_exceed(&self) -> f64 {
        self.iter().filter(|((x, y), _)| x > y).map(|a| a.1).sum()
    }
}

fn max_atom_deviation(p: &Pmf, r: &Pmf) -> f64 {
    let (plo, phi) = p.support();
    let (rlo, rhi) = r.support();
    (plo.min(rlo)..=phi.max(rhi))
        .map(|j| (p.get(j) - r.get(j)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CouplingMode {
    Exact,
    Empirical { samples: usize, seed: u64, stderr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub flavor: CouplingFlavor,
    /// `P(X > Y)` under the base coupling.
    pub alpha: f64,
    pub k: u32,
    /// `P(X' > Y')` after `k` coupled levels.
    pub p_exceed: f64,
    pub mode: CouplingMode,
    /// Largest atom deviation of either coupled marginal from the evolved law.
    pub marginal_check: f64,
}

impl CouplingReport {
    pub fn stderr(&self) -> f64 {
        match self.mode {
            CouplingMode::Exact => 0.0,
            CouplingMode::Empirical { stderr, .. } => stderr,
        }
    }
}

fn check_base(mu: &Pmf, nu: &Pmf, base: &JointPmf) -> Result<()> {
    let (bx, by) = base.marginals()?;
    let dev = max_atom_deviation(&bx, mu).max(max_atom_deviation(&by, nu));
    if dev > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "base coupling marginals differ from μ, ν by up to {dev}"
        )));
    }
    Ok(())
}

/// Largest joint support allowed at any level of [`exact_coupling_law`].
pub const MAX_EXACT_JOINT_ATOMS: usize = 4096;

/// Exact joint law of the roots of two coupled depth-`k` trees.
///
/// The two pair-subtrees of a node are independent copies of the level below,
/// so each level enumerates all pairs of joint atoms and every cell of the node
/// randomness; no sampling is involved.
pub fn exact_coupling_law(mu: &Pmf, nu: &Pmf, base: &JointPmf, flavor: CouplingFlavor, k: u32) -> Result<CouplingReport> {
    flavor.validate()?;
    check_base(mu, nu, base)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut law: Vec<((i64, i64), f64)> = base.iter().collect();
    for _ in 0..k {
        let mut next: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for &((a, b), p1) in &law {
            for &((c, d), p2) in &law {
                let inp = CoupledInputs { a, b, c, d };
                for (o, w) in step_outcomes(&flavor, &inp) {
                    *next.entry(o).or_default() += p1 * p2 * w;
                }
            }
        }
        if next.len() > MAX_EXACT_JOINT_ATOMS {
            return Err(Error::TooExpensive {
                what: "exact coupled joint law (atoms)",
                estimate: next.len() as f64,
                limit: MAX_EXACT_JOINT_ATOMS as f64,
            });
        }
        law = next.into_iter().collect();
    }
    let joint = JointPmf {
        atoms: law.into_iter().collect(),
    };
    let (x, y) = joint.marginals()?;
    let fl = flavor.flavor();
    let marginal_check = max_atom_deviation(&x, &evolve(mu, &fl, k as u64)?)
        .max(max_atom_deviation(&y, &evolve(nu, &fl, k as u64)?));
    Ok(CouplingReport {
        flavor,
        alpha: base.p_exceed(),
        k,
        p_exceed: joint.p_exceed(),
        mode: CouplingMode::Exact,
        marginal_check,
    })
}

fn coupled_tree<R: Rng>(
    flavor: &CouplingFlavor,
    leaves: &[(i64, i64)],
    picker: &WeightedIndex<f64>,
    depth: u32,
    rng: &mut R,
) -> (i64, i64) {
    if depth == 0 {
        return leaves[picker.sample(rng)];
    }
    let (a, b) = coupled_tree(flavor, leaves, picker, depth - 1, rng);
    let (c, d) = coupled_tree(flavor, leaves, picker, depth - 1, rng);
    let (u1, u2) = (rng.random(), rng.random());
    couple_step_with(flavor, &CoupledInputs { a, b, c, d }, u1, u2)
}

/// Monte Carlo estimate of `P(X' > Y')` over `samples` coupled pairs of
/// depth-`k` trees. Sample `i` uses [`RngStream`] `(seed, i)`.
pub fn empirical_coupling_law(
    mu: &Pmf,
    nu: &Pmf,
    base: &JointPmf,
    flavor: CouplingFlavor,
    k: u32,
    samples: usize,
    seed: u64,
) -> Result<CouplingReport> {
    flavor.validate()?;
    check_base(mu, nu, base)?;
    if k == 0 || samples == 0 {
        return Err(Error::InvalidParameter("need k >= 1 and at least one sample".into()));
    }
    if k > crate::rde::MAX_EXACT_DEPTH {
        return Err(Error::TooExpensive {
            what: "coupled tree depth",
            estimate: k as f64,
            limit: crate::rde::MAX_EXACT_DEPTH as f64,
        });
    }
    let atoms: Vec<((i64, i64), f64)> = base.iter().collect();
    let leaves: Vec<(i64, i64)> = atoms.iter().map(|a| a.0).collect();
    let picker = WeightedIndex::new(atoms.iter().map(|a| a.1))
        .map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let pairs: Vec<(i64, i64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| coupled_tree(&flavor, &leaves, &picker, k, &mut RngStream::new(seed, i).rng()))
        .collect();
    let n = samples as f64;
    let exceed = pairs.iter().filter(|(x, y)| x > y).count() as f64 / n;
    let mut mx: BTreeMap<i64, f64> = BTreeMap::new();
    let mut my: BTreeMap<i64, f64> = BTreeMap::new();
    for &(x, y) in &pairs {
        *mx.entry(x).or_default() += 1.0 / n;
        *my.entry(y).or_default() += 1.0 / n;
    }
    let fl = flavor.flavor();
    let marginal_check = max_atom_deviation(&Pmf::from_atoms(mx)?, &evolve(mu, &fl, k as u64)?)
        .max(max_atom_deviation(&Pmf::from_atoms(my)?, &evolve(nu, &fl, k as u64)?));
    Ok(CouplingReport {
        flavor,
        alpha: base.p_exceed(),
        k,
        p_exceed: exceed,
        mode: CouplingMode::Empirical {
            samples,
            seed,
            stderr: (exceed * (1.0 - exceed) / n).sqrt(),
        },
        marginal_check,
    })
}

/// A random base coupling: a joint law on up to `4 × 4` atoms drawn from
/// `[-3, 3]²`, with `μ`, `ν` its marginals.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R) -> Result<(Pmf, Pmf, JointPmf)> {
    let nx = rng.random_range(1..=4);
    let ny = rng.random_range(1..=4);
    let pick = |rng: &mut R, n: usize| {
        let mut v: Vec<i64> = Vec::new();
        while v.len() < n {
            let x = rng.random_range(-3..=3);
            if !v.contains(&x) {
                v.push(x);
            }
        }
        v
    };
    let xs = pick(rng, nx);
    let ys = pick(rng, ny);
    let mut raw = Vec::new();
    for &x in &xs {
        for &y in &ys {
            // Leave some cells empty so the couplings vary in structure.
            let w: f64 = if rng.random_bool(0.3) { 0.0 } else { rng.random() };
            raw.push(((x, y), w));
        }
    }
    if raw.iter().all(|a| a.1 == 0.0) {
        raw[0].1 = 1.0;
    }
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let base = JointPmf::new(raw.into_iter().map(|(k, w)| (k, w / total)))?;
    let (mu, nu) = base.marginals()?;
    Ok((mu, nu, base))
}
