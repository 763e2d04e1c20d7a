//! Integer-supported distributions, discretized densities and distances to the
//! continuous reference laws.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Atoms strictly below this weight are trimmed from the ends of an evolved
/// distribution; their mass is accounted for in [`Pmf::truncated_mass`].
pub const TRIM_THRESHOLD: f64 = 1e-15;

/// Allowed deviation of `sum(weights) + truncated_mass` from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A probability mass function on a contiguous run of integers.
///
/// Atom `offset + i` carries `weights[i]`. The first and last weights are
/// strictly positive. Mass removed by tail trimming is kept in
/// `truncated_mass` rather than renormalized away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf")]
pub struct Pmf {
    offset: i64,
    weights: Vec<f64>,
    truncated_mass: f64,
}

#[derive(Deserialize)]
struct RawPmf {
    offset: i64,
    weights: Vec<f64>,
    #[serde(default)]
    truncated_mass: f64,
}

impl TryFrom<RawPmf> for Pmf {
    type Error = Error;

    fn try_from(raw: RawPmf) -> Result<Self> {
        Pmf::with_truncated(raw.offset, raw.weights, raw.truncated_mass)
    }
}

impl Pmf {
    /// Builds a distribution from a dense weight array. Exact zeros at either
    /// end are dropped; interior zeros are kept.
    pub fn new(offset: i64, weights: Vec<f64>) -> Result<Self> {
        Self::with_truncated(offset, weights, 0.0)
    }

    pub fn with_truncated(offset: i64, weights: Vec<f64>, truncated_mass: f64) -> Result<Self> {
        if !(truncated_mass.is_finite() && truncated_mass >= 0.0) {
            return Err(Error::InvalidPmf(format!(
                "truncated mass must be finite and non-negative, got {truncated_mass}"
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidPmf(format!(
                "weight of atom {} is {w}",
                offset + i as i64
            )));
        }
        let total: f64 = weights.iter().sum::<f64>() + truncated_mass;
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidPmf(format!("total mass is {total}, expected 1")));
        }
        let Some(first) = weights.iter().position(|&w| w > 0.0) else {
            return Err(Error::InvalidPmf("no atom carries positive mass".into()));
        };
        let last = weights.iter().rposition(|&w| w > 0.0).unwrap();
        Ok(Self {
            offset: offset + first as i64,
            weights: weights[first..=last].to_vec(),
            truncated_mass,
        })
    }

    /// Point mass at `j`.
    pub fn delta(j: i64) -> Self {
        Self {
            offset: j,
            weights: vec![1.0],
            truncated_mass: 0.0,
        }
    }

    /// Builds a distribution from `(atom, weight)` pairs; repeated atoms add up.
    pub fn from_atoms<I: IntoIterator<Item = (i64, f64)>>(atoms: I) -> Result<Self> {
        let atoms: Vec<(i64, f64)> = atoms.into_iter().collect();
        let (Some(lo), Some(hi)) = (
            atoms.iter().map(|a| a.0).min(),
            atoms.iter().map(|a| a.0).max(),
        ) else {
            return Err(Error::InvalidPmf("no atoms given".into()));
        };
        let mut weights = vec![0.0; (hi - lo + 1) as usize];
        for (j, w) in atoms {
            weights[(j - lo) as usize] += w;
        }
        Self::new(lo, weights)
    }

    /// Trusted constructor for evolution kernels: trims atoms below
    /// [`TRIM_THRESHOLD`] from both ends and moves their mass to the
    /// truncated account. `weights` must be non-negative.
    pub(crate) fn from_trimmed_parts(offset: i64, weights: &[f64], truncated_mass: f64) -> Self {
        let (first, last, dropped) = trim_bounds(weights);
        Self {
            offset: offset + first as i64,
            weights: weights[first..last].to_vec(),
            truncated_mass: truncated_mass + dropped,
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Smallest and largest atoms.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.weights.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of atom `j` (zero off the support).
    pub fn get(&self, j: i64) -> f64 {
        let i = j - self.offset;
        if i < 0 || i >= self.weights.len() as i64 {
            0.0
        } else {
            self.weights[i as usize]
        }
    }

    /// Sum of the retained weights.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.offset + i as i64, w))
    }

    /// `P(X <= y)` for real `y`.
    pub fn cdf(&self, y: f64) -> f64 {
        let k = y.floor();
        if k < self.offset as f64 {
            return 0.0;
        }
        let upto = ((k - self.offset as f64) as usize).min(self.weights.len() - 1);
        self.weights[..=upto].iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(j, w)| j as f64 * w).sum::<f64>() / self.mass()
    }

    /// The same law shifted by `by`.
    pub fn shifted(&self, by: i64) -> Self {
        Self {
            offset: self.offset + by,
            ..self.clone()
        }
    }
}

/// Returns `(first, end, dropped_mass)` such that `weights[first..end]` is the
/// trimmed run.
fn trim_bounds(weights: &[f64]) -> (usize, usize, f64) {
    let mut first = 0;
    let mut end = weights.len();
    let mut dropped = 0.0;
    while first < end && weights[first] < TRIM_THRESHOLD {
        dropped += weights[first];
        first += 1;
    }
    while end > first && weights[end - 1] < TRIM_THRESHOLD {
        dropped += weights[end - 1];
        end -= 1;
    }
    if first == end {
        // Everything is below threshold; keep the heaviest atom so the law
        // stays non-empty.
        let (i, _) = weights
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc });
        return (i, i + 1, dropped - weights[i]);
    }
    (first, end, dropped)
}

/// Total variation distance `½ Σ |p_j − r_j|` over the union of supports.
pub fn total_variation(p: &Pmf, r: &Pmf) -> f64 {
    let lo = p.offset.min(r.offset);
    let hi = p.support().1.max(r.support().1);
    0.5 * (lo..=hi).map(|j| (p.get(j) - r.get(j)).abs()).sum::<f64>()
}

/// A polynomial on a closed interval, coefficients in ascending powers of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, coeffs: Vec<f64>) -> Self {
        Self { lo, hi, coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Exact integral of the polynomial over `[a, b]`, written as
    /// `Σ c_k (b−a) Σ_i a^i b^{k−i} / (k+1)` to avoid cancellation on short cells.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let width = b - a;
        let mut total = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            // Σ_{i=0}^{k} a^i b^{k-i}
            let mut s = 0.0;
            let mut ai = 1.0;
            for i in 0..=k {
                s += ai * b.powi((k - i) as i32);
                ai *= a;
            }
            total += c * width * s / (k + 1) as f64;
        }
        total
    }
}

/// A piecewise-polynomial function with compact support: zero outside the
/// pieces. Pieces are sorted and do not overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    pieces: Vec<Piece>,
}

impl PiecewisePoly {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidDensity("no pieces".into()));
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for p in &pieces {
            if !(p.lo.is_finite() && p.hi.is_finite()) {
                return Err(Error::InvalidDensity("unbounded support".into()));
            }
            if p.lo >= p.hi {
                return Err(Error::InvalidDensity(format!(
                    "empty piece [{}, {}]",
                    p.lo, p.hi
                )));
            }
            if p.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidDensity("non-finite coefficient".into()));
            }
        }
        if pieces.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::InvalidDensity("overlapping pieces".into()));
        }
        Ok(Self { pieces })
    }

    /// Uniform density on `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidDensity(format!("uniform on [{lo}, {hi})")));
        }
        Self::new(vec![Piece::new(lo, hi, vec![1.0 / (hi - lo)])])
    }

    /// `x / (2qτ)` on `[0, (4qτ)^{1/2}]`: the Burgers rarefaction profile,
    /// a `(4qτ)^{1/2}`-scaled Beta(2,1) density.
    pub fn burgers_profile(q: f64, tau: f64) -> Result<Self> {
        if !(q > 0.0 && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Burgers profile needs q > 0 and τ > 0, got q={q}, τ={tau}"
            )));
        }
        Self::new(vec![Piece::new(
            0.0,
            (4.0 * q * tau).sqrt(),
            vec![0.0, 1.0 / (2.0 * q * tau)],
        )])
    }

    /// `¾((2/(9τ))^{1/3} − 2x²/(9τ))` on `|x| <= (9τ/2)^{1/3}`: the Barenblatt
    /// profile of `∂_t v = ½ ∂_xx v²`, a scaled and centred Beta(2,2) density.
    pub fn pme_profile(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "porous-medium profile needs τ > 0, got {tau}"
            )));
        }
        let a = (2.0 / (9.0 * tau)).cbrt();
        let r = (4.5 * tau).cbrt();
        Self::new(vec![Piece::new(
            -r,
            r,
            vec![0.75 * a, 0.0, -0.75 * 2.0 / (9.0 * tau)],
        )])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `(inf, sup)` of the support.
    pub fn bounds(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.lo <= x && x <= p.hi)
            .map_or(0.0, |p| p.eval(x))
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .filter_map(|p| {
                let lo = p.lo.max(a);
                let hi = p.hi.min(b);
                (lo < hi).then(|| p.integral(lo, hi))
            })
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.pieces.iter().map(|p| p.integral(p.lo, p.hi)).sum()
    }

    /// Checks non-negativity on a fine grid of each piece (endpoints included).
    pub fn is_nonnegative(&self) -> bool {
        self.pieces.iter().all(|p| {
            (0..=256).all(|i| {
                let x = p.lo + (p.hi - p.lo) * i as f64 / 256.0;
                p.eval(x) >= -1e-12
            })
        })
    }

    /// Integrals over the cells `[j/M, (j+1)/M)` meeting the support, as
    /// `(first cell index, integrals)`.
    pub fn cell_integrals(&self, mesh: f64) -> (i64, Vec<f64>) {
        let (lo, hi) = self.bounds();
        let first = (lo * mesh).floor() as i64;
        let last = ((hi * mesh).ceil() as i64 - 1).max(first);
        let cells = (first..=last)
            .map(|j| self.integral(j as f64 / mesh, (j + 1) as f64 / mesh))
            .collect();
        (first, cells)
    }
}

/// Discretizes a probability density on the mesh `1/M`: atom `j` receives
/// `∫_{j/M}^{(j+1)/M} ρ`.
pub fn pmf_from_density(density: &PiecewisePoly, mesh: f64) -> Result<Pmf> {
    if !(mesh.is_finite() && mesh > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mesh must be positive, got {mesh}"
        )));
    }
    let total = density.total();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDensity(format!(
            "density integrates to {total}, expected 1"
        )));
    }
    if !density.is_nonnegative() {
        return Err(Error::InvalidDensity("density takes negative values".into()));
    }
    let (first, mut cells) = density.cell_integrals(mesh);
    // Round-off can leave a cell a hair below zero where the density touches 0.
    for c in &mut cells {
        *c = c.max(0.0);
    }
    Pmf::new(first, cells)
}

/// The integer atom `j` sits at `scale * j + shift` after rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub shift: f64,
}

impl Affine {
    pub fn new(scale: f64, shift: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "affine map needs finite scale > 0, got scale={scale}, shift={shift}"
            )));
        }
        Ok(Self { scale, shift })
    }

    pub const IDENTITY: Affine = Affine {
        scale: 1.0,
        shift: 0.0,
    };

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawFamily {
    /// Density `2x` on `[0,1]`.
    Beta21,
    /// Density `6x(1−x)` on `[0,1]`.
    Beta22,
    /// Density `x/(2qτ)` on `[0, (4qτ)^{1/2}]`.
    BurgersProfile { q: f64, tau: f64 },
    /// Barenblatt density `¾((2/(9τ))^{1/3} − 2x²/(9τ))_+`.
    PmeProfile { tau: f64 },
}

/// One of the built-in continuous laws, pushed through `x ↦ scale·x + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLaw {
    pub family: LawFamily,
    pub map: Affine,
}

impl ContinuousLaw {
    pub fn new(family: LawFamily, map: Affine) -> Result<Self> {
        match family {
            LawFamily::BurgersProfile { q, tau } if !(q > 0.0 && tau > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "Burgers profile needs q, τ > 0 (q={q}, τ={tau})"
                )))
            }
            LawFamily::PmeProfile { tau } if !(tau > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "porous-medium profile needs τ > 0 (τ={tau})"
                )))
            }
            _ => {}
        }
        Affine::new(map.scale, map.shift)?;
        Ok(Self { family, map })
    }

    pub fn beta21() -> Self {
        Self {
            family: LawFamily::Beta21,
            map: Affine::IDENTITY,
        }
    }

    pub fn beta22() -> Self {
        Self {
            family: LawFamily::Beta22,
            map: Affine::IDENTITY,
        }
    }

    /// CDF of the canonical (unmapped) variable.
    pub fn canonical_cdf(&self, y: f64) -> f64 {
        match self.family {
            LawFamily::Beta21 => {
                let b = y.clamp(0.0, 1.0);
                b * b
            }
            LawFamily::Beta22 => {
                let b = y.clamp(0.0, 1.0);
                b * b * (3.0 - 2.0 * b)
            }
            LawFamily::BurgersProfile { q, tau } => {
                let b = y.clamp(0.0, (4.0 * q * tau).sqrt());
                b * b / (4.0 * q * tau)
            }
            LawFamily::PmeProfile { tau } => {
                let r = (4.5 * tau).cbrt();
                let a = (2.0 / (9.0 * tau)).cbrt();
                let b = y.clamp(-r, r);
                (0.75 * (a * (b + r) - 2.0 * (b * b * b + r * r * r) / (27.0 * tau))).clamp(0.0, 1.0)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.canonical_cdf(self.map.invert(x))
    }
}

/// CDF of `law` at `x`.
pub fn cdf(law: &ContinuousLaw, x: f64) -> f64 {
    law.cdf(x)
}

/// Kolmogorov distance between the law of `map(X)`, `X ~ p`, and `law`.
///
/// The supremum of a step CDF against a continuous one is attained at a jump,
/// so both one-sided limits are checked at every atom. Mass lost to trimming is
/// treated as missing from the step CDF.
pub fn kolmogorov_distance(p: &Pmf, map: Affine, law: &ContinuousLaw) -> f64 {
    let mut below = 0.0;
    let mut sup: f64 = 0.0;
    for (j, w) in p.iter() {
        let f = law.cdf(map.apply(j as f64));
        sup = sup.max((below - f).abs());
        below += w;
        sup = sup.max((below - f).abs());
    }
    // Beyond the last atom the continuous CDF keeps rising towards one.
    sup.max((1.0 - below).abs())
}

/// Kolmogorov distance between an empirical sample and a continuous law.
pub fn empirical_kolmogorov(sample: &[f64], law: &ContinuousLaw) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let f = law.cdf(x);
        sup = sup.max((i as f64 / n - f).abs());
        while i < xs.len() && xs[i] == x {
            i += 1;
        }
        sup = sup.max((i as f64 / n - f).abs());
    }
    sup
}
