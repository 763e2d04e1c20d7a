//! Exact evolution of the root law of hipster and fomo walks.
//!
//! Under i.i.d. leaf inputs with law `r`, the two children of the root are
//! independent with the depth-`n` law, so one more level maps `r` to
//!
//! * hipster: `r'_k = r_k(1 − r_k) + Σ_i c_i r_{k−i}²`
//! * fomo:    `r'_k = r_k² + Σ_i c_i r_{k−i}(1 − r_{k−i})`
//!
//! where `c_i` is the law of a step. Both are sums of products of
//! probabilities, so weights stay non-negative in floating point and the total
//! mass only drifts by rounding. The totally asymmetric walk is the hipster walk
//! with steps `{0: 1−q, 1: q}`; the symmetric walk uses `{−1: ½, +1: ½}`.

use serde::{Deserialize, Serialize};

use crate::dist::{Affine, ContinuousLaw, Pmf, TRIM_THRESHOLD};
use crate::{Error, Result};

/// Largest step magnitude accepted in a [`StepDistribution`].
pub const MAX_STEP: i64 = 64;

/// Law of a bounded integer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, f64)>", into = "Vec<(i64, f64)>")]
pub struct StepDistribution {
    /// Positive-probability steps in ascending order.
    atoms: Vec<(i64, f64)>,
}

impl TryFrom<Vec<(i64, f64)>> for StepDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<(i64, f64)>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<StepDistribution> for Vec<(i64, f64)> {
    fn from(s: StepDistribution) -> Self {
        s.atoms
    }
}

impl StepDistribution {
    pub fn new<I: IntoIterator<Item = (i64, f64)>>(atoms: I) -> Result<Self> {
        let mut merged: Vec<(i64, f64)> = Vec::new();
        let mut raw: Vec<(i64, f64)> = atoms.into_iter().collect();
        raw.sort_by_key(|a| a.0);
        for (i, c) in raw {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step {i} has probability {c}"
                )));
            }
            if i.abs() > MAX_STEP {
                return Err(Error::InvalidParameter(format!(
                    "step {i} exceeds the bound |i| <= {MAX_STEP}"
                )));
            }
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|a| a.1 > 0.0);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if merged.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "step probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms: merged })
    }

    /// Bernoulli(q) steps `{0: 1−q, 1: q}`.
    pub fn bernoulli(q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(Self {
            atoms: vec![(0, 1.0 - q), (1, q)],
        })
    }

    /// Fair ±1 steps.
    pub fn symmetric() -> Self {
        Self {
            atoms: vec![(-1, 0.5), (1, 0.5)],
        }
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn min_step(&self) -> i64 {
        self.atoms[0].0
    }

    pub fn max_step(&self) -> i64 {
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(i, c)| i as f64 * c).sum()
    }

    /// Inverse-CDF sample from a uniform `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> i64 {
        let mut acc = 0.0;
        for &(i, c) in &self.atoms {
            acc += c;
            if u < acc {
                return i;
            }
        }
        self.max_step()
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("q must lie in (0,1), got {q}")))
    }
}

/// Which recursion drives the evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flavor {
    /// Hipster walk with Bernoulli(q) steps.
    TotallyAsymmetric { q: f64 },
    /// Hipster walk with fair ±1 steps.
    Symmetric,
    /// Hipster walk with an arbitrary bounded step law.
    GeneralSteps { steps: StepDistribution },
    /// Fomo walk: stay on agreement, step after a coin pick on disagreement.
    Fomo { steps: StepDistribution },
}

impl Flavor {
    pub fn validate(&self) -> Result<()> {
        match self {
            Flavor::TotallyAsymmetric { q } => check_q(*q),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Flavor::TotallyAsymmetric { .. } => "tal",
            Flavor::Symmetric => "sym",
            Flavor::GeneralSteps { .. } => "general",
            Flavor::Fomo { .. } => "fomo",
        }
    }
}

/// A flavor plus a number of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub flavor: Flavor,
    pub steps: u64,
}

#[derive(Debug, Clone)]
enum Kernel {
    Tal { q: f64 },
    Sym,
    Hipster(StepDistribution),
    Fomo(StepDistribution),
}

impl Kernel {
    fn step_range(&self) -> (i64, i64) {
        match self {
            Kernel::Tal { .. } => (0, 1),
            Kernel::Sym => (-1, 1),
            // Both recurrences keep a term at the current atom.
            Kernel::Hipster(s) | Kernel::Fomo(s) => (s.min_step().min(0), s.max_step().max(0)),
        }
    }
}

/// Stateful exact evolution; one call to [`Evolver::step`] adds one tree level.
///
/// The weights live in a reusable double buffer that grows by the step span per
/// level and is trimmed back at [`TRIM_THRESHOLD`] on both ends.
#[derive(Debug, Clone)]
pub struct Evolver {
    kernel: Kernel,
    offset: i64,
    weights: Vec<f64>,
    next: Vec<f64>,
    padded: Vec<f64>,
    derived: Vec<f64>,
    truncated: f64,
    depth: u64,
    negative_atoms: u64,
}

impl Evolver {
    pub fn new(initial: &Pmf, flavor: &Flavor) -> Result<Self> {
        flavor.validate()?;
        let kernel = match flavor {
            Flavor::TotallyAsymmetric { q } => Kernel::Tal { q: *q },
            Flavor::Symmetric => Kernel::Sym,
            Flavor::GeneralSteps { steps } => Kernel::Hipster(steps.clone()),
            Flavor::Fomo { steps } => Kernel::Fomo(steps.clone()),
        };
        Ok(Self {
            kernel,
            offset: initial.offset(),
            weights: initial.weights().to_vec(),
            next: Vec::new(),
            padded: Vec::new(),
            derived: Vec::new(),
            truncated: initial.truncated_mass(),
            depth: 0,
            negative_atoms: 0,
        })
    }

    /// Number of levels applied so far.
    pub fn depth(&self) -> u64 {
        self.depth
    }

    /// Count of negative weights produced before trimming (always zero for
    /// these recurrences; exposed so callers can check it).
    pub fn negative_atoms(&self) -> u64 {
        self.negative_atoms
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated
    }

    /// Retained mass plus truncated mass.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.truncated
    }

    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.weights.len() as i64 - 1)
    }

    pub fn snapshot(&self) -> Pmf {
        Pmf::from_trimmed_parts(self.offset, &self.weights, self.truncated)
    }

    pub fn run(&mut self, levels: u64) {
        for _ in 0..levels {
            self.step();
        }
    }

    pub fn step(&mut self) {
        let (lo, hi) = self.kernel.step_range();
        let width = lo.abs().max(hi.abs()) as usize;
        let pad = 2 * width;
        let len = self.weights.len();
        let out_len = len + (hi - lo) as usize;

        // `padded` holds the current weights with `pad` zeros on each side;
        // `derived` holds r² (hipster) or r(1−r) (fomo) on the same layout.
        self.padded.clear();
        self.padded.resize(len + 2 * pad, 0.0);
        self.padded[pad..pad + len].copy_from_slice(&self.weights);
        self.derived.clear();
        let is_fomo = matches!(self.kernel, Kernel::Fomo(_));
        if is_fomo {
            self.derived
                .extend(self.padded.iter().map(|&r| r * (1.0 - r)));
        } else {
            self.derived.extend(self.padded.iter().map(|&r| r * r));
        }
        self.next.clear();
        self.next.resize(out_len, 0.0);

        // Output index k is atom `offset + lo + k`; its old index is `k + lo`.
        let base = (pad as i64 + lo) as usize;
        let r = &self.padded;
        let d = &self.derived;
        let out = &mut self.next;
        match &self.kernel {
            Kernel::Tal { q } => {
                let (c0, c1) = (1.0 - q, *q);
                for k in 0..out_len {
                    let x = r[base + k];
                    let mut acc = x * (1.0 - x);
                    acc += c0 * d[base + k];
                    acc += c1 * d[base + k - 1];
                    out[k] = acc;
                }
            }
            Kernel::Sym => {
                for k in 0..out_len {
                    let x = r[base + k];
                    let mut acc = x * (1.0 - x);
                    acc += 0.5 * d[base + k + 1];
                    acc += 0.5 * d[base + k - 1];
                    out[k] = acc;
                }
            }
            Kernel::Hipster(steps) => {
                for k in 0..out_len {
                    let x = r[base + k];
                    let mut acc = x * (1.0 - x);
                    for &(i, c) in steps.atoms() {
                        acc += c * d[(base as i64 + k as i64 - i) as usize];
                    }
                    out[k] = acc;
                }
            }
            Kernel::Fomo(steps) => {
                for k in 0..out_len {
                    let x = r[base + k];
                    let mut acc = x * x;
                    for &(i, c) in steps.atoms() {
                        acc += c * d[(base as i64 + k as i64 - i) as usize];
                    }
                    out[k] = acc;
                }
            }
        }

        self.negative_atoms += out.iter().filter(|&&w| w < 0.0).count() as u64;

        let mut first = 0;
        let mut end = out_len;
        while first < end - 1 && out[first] < TRIM_THRESHOLD {
            self.truncated += out[first];
            first += 1;
        }
        while end - 1 > first && out[end - 1] < TRIM_THRESHOLD {
            self.truncated += out[end - 1];
            end -= 1;
        }
        self.weights.clear();
        self.weights.extend_from_slice(&out[first..end]);
        self.offset += lo + first as i64;
        self.depth += 1;
    }
}

/// Law of the root after `n` levels of the given flavor, started from `p`.
pub fn evolve(p: &Pmf, flavor: &Flavor, n: u64) -> Result<Pmf> {
    if n == 0 {
        flavor.validate()?;
        return Ok(p.clone());
    }
    let mut ev = Evolver::new(p, flavor)?;
    ev.run(n);
    Ok(ev.snapshot())
}

/// Totally asymmetric q-lazy walk: the discrete Burgers recurrence.
pub fn evolve_tal(p: &Pmf, q: f64, n: u64) -> Result<Pmf> {
    evolve(p, &Flavor::TotallyAsymmetric { q }, n)
}

/// Symmetric simple walk: the discrete porous-medium recurrence.
pub fn evolve_sym(p: &Pmf, n: u64) -> Result<Pmf> {
    evolve(p, &Flavor::Symmetric, n)
}

/// Hipster walk with an arbitrary bounded step law.
pub fn evolve_general(p: &Pmf, steps: &StepDistribution, n: u64) -> Result<Pmf> {
    evolve(
        p,
        &Flavor::GeneralSteps {
            steps: steps.clone(),
        },
        n,
    )
}

/// Fomo walk with fair ±1 steps.
pub fn evolve_fomo(p: &Pmf, n: u64) -> Result<Pmf> {
    evolve_fomo_general(p, &StepDistribution::symmetric(), n)
}

pub fn evolve_fomo_general(p: &Pmf, steps: &StepDistribution, n: u64) -> Result<Pmf> {
    evolve(
        p,
        &Flavor::Fomo {
            steps: steps.clone(),
        },
        n,
    )
}

/// Rescaling `B_n / (4qn)^{1/2}` under which the totally asymmetric walk
/// approaches Beta(2,1).
pub fn beta21_rescaling(q: f64, n: u64) -> Result<Affine> {
    Affine::new(1.0 / (4.0 * q * n as f64).sqrt(), 0.0)
}

/// Rescaling `(36n)^{-1/3} G_n + ½` under which the symmetric walk approaches
/// Beta(2,2).
pub fn beta22_rescaling(n: u64) -> Result<Affine> {
    Affine::new(1.0 / (36.0 * n as f64).cbrt(), 0.5)
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub ks: f64,
    pub scale: f64,
}

/// Evolves `p0` and records the Kolmogorov distance to the limiting Beta law
/// at each (strictly increasing, positive) checkpoint depth. Only the two
/// theorem flavors have a limit law.
pub fn convergence_table(p0: &Pmf, flavor: &Flavor, checkpoints: &[u64]) -> Result<Vec<Checkpoint>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.first() == Some(&0) {
        return Err(Error::InvalidParameter(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    let (limit, rescale): (ContinuousLaw, Box<dyn Fn(u64) -> Result<Affine>>) = match flavor {
        Flavor::TotallyAsymmetric { q } => {
            let q = *q;
            (ContinuousLaw::beta21(), Box::new(move |n| beta21_rescaling(q, n)))
        }
        Flavor::Symmetric => (ContinuousLaw::beta22(), Box::new(beta22_rescaling)),
        other => {
            return Err(Error::InvalidParameter(format!(
                "no limit law is known for the `{}` flavor",
                other.label()
            )))
        }
    };
    let mut ev = Evolver::new(p0, flavor)?;
    let mut rows = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        ev.run(n - ev.depth());
        let map = rescale(n)?;
        let ks = crate::dist::kolmogorov_distance(&ev.snapshot(), map, &limit);
        rows.push(Checkpoint { n, ks, scale: map.scale });
    }
    Ok(rows)
}

/// One depth of a time-averaged law: the depth-`depth` root law, reached for
/// uniform times in `[t_lo, t_hi)`, with mixture weight `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub depth: u64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub weight: f64,
    pub law: Pmf,
}

/// Law of `B_{⌊W M^k⌋}` for `W ~ Uniform[ℓ, r]`, as an exact mixture over depths.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAveragedLaw {
    /// Time exponent `k`: 2 for the Burgers scaling, 3 for porous-medium.
    pub exponent: u32,
    pub mesh: u32,
    pub components: Vec<MixtureComponent>,
}

/// Largest number of depths a time average may span.
pub const MAX_AVERAGED_DEPTH: f64 = 1e7;

pub fn time_averaged_law(p0: &Pmf, flavor: &Flavor, mesh: u32, ell: f64, r: f64) -> Result<TimeAveragedLaw> {
    let exponent = match flavor {
        Flavor::TotallyAsymmetric { .. } => 2,
        Flavor::Symmetric => 3,
        other => {
            return Err(Error::InvalidParameter(format!(
                "time averaging is defined for the tal and sym flavors, not `{}`",
                other.label()
            )))
        }
    };
    if mesh == 0 || !(ell >= 0.0 && r > ell && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need M >= 1 and 0 <= ℓ < r (M={mesh}, ℓ={ell}, r={r})"
        )));
    }
    let scale = (mesh as f64).powi(exponent as i32);
    let first = (ell * scale).floor();
    let last = (r * scale).floor();
    if last > MAX_AVERAGED_DEPTH {
        return Err(Error::TooExpensive {
            what: "time-averaged law",
            estimate: last,
            limit: MAX_AVERAGED_DEPTH,
        });
    }
    let mut ev = Evolver::new(p0, flavor)?;
    ev.run(first as u64);
    let mut components = Vec::new();
    for depth in first as u64..=last as u64 {
        if depth > ev.depth() {
            ev.step();
        }
        let t_lo = (depth as f64 / scale).max(ell);
        let t_hi = ((depth + 1) as f64 / scale).min(r);
        let weight = (t_hi - t_lo) / (r - ell);
        if weight > 0.0 {
            components.push(MixtureComponent {
                depth,
                t_lo,
                t_hi,
                weight,
                law: ev.snapshot(),
            });
        }
    }
    if components.is_empty() {
        return Err(Error::InvalidParameter("empty depth range".into()));
    }
    Ok(TimeAveragedLaw {
        exponent,
        mesh,
        components,
    })
}

impl TimeAveragedLaw {
    /// Kolmogorov distance between the time-averaged rescaled variable and
    /// `law`, where the depth reached at time `t` is rescaled by `scaling(t)`.
    ///
    /// Each component's time interval is split into `t_samples` midpoints and
    /// the mixture CDF is evaluated on `grid` points spanning `[lo, hi]`.
    pub fn kolmogorov(
        &self,
        scaling: impl Fn(f64) -> Affine,
        law: &ContinuousLaw,
        (lo, hi): (f64, f64),
        grid: usize,
        t_samples: usize,
    ) -> f64 {
        let prepared: Vec<(f64, Vec<Affine>, &Pmf, Vec<f64>)> = self
            .components
            .iter()
            .map(|c| {
                let maps = (0..t_samples)
                    .map(|s| {
                        let t = c.t_lo + (c.t_hi - c.t_lo) * (s as f64 + 0.5) / t_samples as f64;
                        scaling(t)
                    })
                    .collect();
                let cumulative = c
                    .law
                    .weights()
                    .iter()
                    .scan(0.0, |acc, &w| {
                        *acc += w;
                        Some(*acc)
                    })
                    .collect();
                (c.weight, maps, &c.law, cumulative)
            })
            .collect();
        let mut sup: f64 = 0.0;
        for g in 0..=grid {
            let x = lo + (hi - lo) * g as f64 / grid as f64;
            let mut f = 0.0;
            for (w, maps, pmf, cumulative) in &prepared {
                let mut acc = 0.0;
                for m in maps {
                    let y = m.invert(x).floor();
                    let idx = y - pmf.offset() as f64;
                    if idx >= 0.0 {
                        acc += cumulative[(idx as usize).min(cumulative.len() - 1)];
                    }
                }
                f += w * acc / maps.len() as f64;
            }
            sup = sup.max((f - law.cdf(x)).abs());
        }
        sup
    }
}
