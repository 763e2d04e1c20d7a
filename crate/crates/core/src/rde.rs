//! Direct simulation of the tree recursion.
//!
//! The root of a depth-`n` complete binary tree is computed from `2^n` i.i.d.
//! leaf values by applying a random binary function at every internal node.
//! Integer rules (hipster, fomo) are the ground truth for [`crate::evolution`];
//! real-valued rules (min-plus, series-parallel) are only available here and
//! work on `log₂` values so that deep trees never overflow.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::evolution::StepDistribution;
use crate::{Error, Result};

/// Which binary function each node applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleKind {
    /// Equal children: step; unequal: pick one by a fair coin.
    Hipster { steps: StepDistribution },
    /// Equal children: stay; unequal: pick one by a fair coin and step.
    Fomo { steps: StepDistribution },
    /// `x + y` with probability `p`, otherwise `min(x, y)`.
    MinPlus { p: f64 },
    /// `x + y` with probability `p`, otherwise `xy / (x + y)`.
    SeriesParallel { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    Integer,
    Log2Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationRule {
    pub kind: RuleKind,
    pub value_domain: ValueDomain,
}

impl CombinationRule {
    pub fn new(kind: RuleKind) -> Result<Self> {
        let value_domain = match &kind {
            RuleKind::Hipster { .. } | RuleKind::Fomo { .. } => ValueDomain::Integer,
            RuleKind::MinPlus { p } | RuleKind::SeriesParallel { p } => {
                // p = 1 is the degenerate all-sum tree.
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "p must lie in (0,1], got {p}"
                    )));
                }
                ValueDomain::Log2Real
            }
        };
        Ok(Self { kind, value_domain })
    }

    pub fn hipster(steps: StepDistribution) -> Self {
        Self {
            kind: RuleKind::Hipster { steps },
            value_domain: ValueDomain::Integer,
        }
    }

    pub fn fomo(steps: StepDistribution) -> Self {
        Self {
            kind: RuleKind::Fomo { steps },
            value_domain: ValueDomain::Integer,
        }
    }

    /// Hipster rule with Bernoulli(q) steps.
    pub fn tal(q: f64) -> Result<Self> {
        Ok(Self::hipster(StepDistribution::bernoulli(q)?))
    }

    /// Hipster rule with fair ±1 steps.
    pub fn symmetric() -> Self {
        Self::hipster(StepDistribution::symmetric())
    }

    pub fn min_plus(p: f64) -> Result<Self> {
        Self::new(RuleKind::MinPlus { p })
    }

    pub fn series_parallel(p: f64) -> Result<Self> {
        Self::new(RuleKind::SeriesParallel { p })
    }

    /// Checks the stored domain against the kind (relevant after deserializing).
    pub fn validate(&self) -> Result<()> {
        let expected = Self::new(self.kind.clone())?.value_domain;
        if expected != self.value_domain {
            return Err(Error::DomainMismatch {
                rule: format!("{:?}", self.kind),
                expected: domain_name(expected),
            });
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            RuleKind::Hipster { .. } => "hipster",
            RuleKind::Fomo { .. } => "fomo",
            RuleKind::MinPlus { .. } => "min_plus",
            RuleKind::SeriesParallel { .. } => "series_parallel",
        }
    }
}

fn domain_name(d: ValueDomain) -> &'static str {
    match d {
        ValueDomain::Integer => "integer",
        ValueDomain::Log2Real => "log2-real",
    }
}

/// A node value: an integer, or the base-2 logarithm of a positive real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Log2(f64),
}

/// All randomness one node may use. Fields a rule does not need are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeDraw {
    /// Fair coin: keep the first child.
    pub pick_first: bool,
    /// Step added by hipster/fomo nodes.
    pub step: i64,
    /// Real rules: take the sum branch.
    pub sum_branch: bool,
}

/// `log₂(2^x + 2^y)`.
pub fn log2_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    hi + (-(hi - lo)).exp2().ln_1p() / std::f64::consts::LN_2
}

/// `log₂(ab / (a + b))` for `a = 2^x`, `b = 2^y`.
pub fn log2_parallel(x: f64, y: f64) -> f64 {
    x + y - log2_add(x, y)
}

fn int_with(kind: &RuleKind, x: i64, y: i64, d: &NodeDraw) -> i64 {
    let pick = if d.pick_first { x } else { y };
    match kind {
        RuleKind::Hipster { .. } => {
            if x == y {
                x + d.step
            } else {
                pick
            }
        }
        RuleKind::Fomo { .. } => {
            if x == y {
                x
            } else {
                pick + d.step
            }
        }
        _ => unreachable!("integer combine on a real rule"),
    }
}

fn log2_with(kind: &RuleKind, x: f64, y: f64, d: &NodeDraw) -> f64 {
    match kind {
        RuleKind::MinPlus { .. } => {
            if d.sum_branch {
                log2_add(x, y)
            } else {
                x.min(y)
            }
        }
        RuleKind::SeriesParallel { .. } => {
            if d.sum_branch {
                log2_add(x, y)
            } else {
                log2_parallel(x, y)
            }
        }
        _ => unreachable!("real combine on an integer rule"),
    }
}

/// Applies a node's function with its randomness fixed by `draw`.
pub fn combine_with(rule: &CombinationRule, x: Value, y: Value, draw: &NodeDraw) -> Result<Value> {
    match (rule.value_domain, x, y) {
        (ValueDomain::Integer, Value::Int(a), Value::Int(b)) => {
            Ok(Value::Int(int_with(&rule.kind, a, b, draw)))
        }
        (ValueDomain::Log2Real, Value::Log2(a), Value::Log2(b)) => {
            Ok(Value::Log2(log2_with(&rule.kind, a, b, draw)))
        }
        (d, _, _) => Err(Error::DomainMismatch {
            rule: rule.label().into(),
            expected: domain_name(d),
        }),
    }
}

#[inline]
fn combine_int<R: Rng + ?Sized>(kind: &RuleKind, x: i64, y: i64, rng: &mut R) -> i64 {
    match kind {
        RuleKind::Hipster { steps } => {
            if x == y {
                x + steps.quantile(rng.random())
            } else if rng.random::<bool>() {
                x
            } else {
                y
            }
        }
        RuleKind::Fomo { steps } => {
            if x == y {
                x
            } else {
                let pick = if rng.random::<bool>() { x } else { y };
                pick + steps.quantile(rng.random())
            }
        }
        _ => unreachable!("integer combine on a real rule"),
    }
}

#[inline]
fn combine_log2<R: Rng + ?Sized>(kind: &RuleKind, x: f64, y: f64, rng: &mut R) -> f64 {
    let p = match kind {
        RuleKind::MinPlus { p } | RuleKind::SeriesParallel { p } => *p,
        _ => unreachable!("real combine on an integer rule"),
    };
    let draw = NodeDraw {
        pick_first: false,
        step: 0,
        sum_branch: rng.random::<f64>() < p,
    };
    log2_with(kind, x, y, &draw)
}

/// Applies a node's function, drawing its randomness from `rng`.
pub fn combine<R: Rng + ?Sized>(rule: &CombinationRule, x: Value, y: Value, rng: &mut R) -> Result<Value> {
    match (rule.value_domain, x, y) {
        (ValueDomain::Integer, Value::Int(a), Value::Int(b)) => {
            Ok(Value::Int(combine_int(&rule.kind, a, b, rng)))
        }
        (ValueDomain::Log2Real, Value::Log2(a), Value::Log2(b)) => {
            Ok(Value::Log2(combine_log2(&rule.kind, a, b, rng)))
        }
        (d, _, _) => Err(Error::DomainMismatch {
            rule: rule.label().into(),
            expected: domain_name(d),
        }),
    }
}

/// A reproducible random stream: ChaCha8 seeded from `seed`, on stream `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Law of the leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InputLaw {
    /// Integer leaves drawn from a PMF.
    Lattice { pmf: Pmf },
    /// Every leaf carries the real value `2^log2_value`.
    Point { log2_value: f64 },
}

impl InputLaw {
    fn domain(&self) -> ValueDomain {
        match self {
            InputLaw::Lattice { .. } => ValueDomain::Integer,
            InputLaw::Point { .. } => ValueDomain::Log2Real,
        }
    }
}

enum LeafSampler {
    Int(i64),
    Weighted(i64, WeightedIndex<f64>),
    Log2(f64),
}

impl LeafSampler {
    fn new(input: &InputLaw) -> Result<Self> {
        Ok(match input {
            InputLaw::Lattice { pmf } if pmf.len() == 1 => LeafSampler::Int(pmf.offset()),
            InputLaw::Lattice { pmf } => LeafSampler::Weighted(
                pmf.offset(),
                WeightedIndex::new(pmf.weights().iter().copied())
                    .map_err(|e| Error::InvalidPmf(e.to_string()))?,
            ),
            InputLaw::Point { log2_value } => {
                if !log2_value.is_finite() {
                    return Err(Error::InvalidParameter("leaf value must be finite".into()));
                }
                LeafSampler::Log2(*log2_value)
            }
        })
    }

    #[inline]
    fn int<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match self {
            LeafSampler::Int(v) => *v,
            LeafSampler::Weighted(off, w) => off + w.sample(rng) as i64,
            LeafSampler::Log2(_) => unreachable!(),
        }
    }

    #[inline]
    fn log2(&self) -> f64 {
        match self {
            LeafSampler::Log2(v) => *v,
            _ => unreachable!(),
        }
    }
}

/// Sampled root values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", content = "values", rename_all = "snake_case")]
pub enum Samples {
    Int(Vec<i64>),
    Log2(Vec<f64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Int(v) => v.len(),
            Samples::Log2(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values as reals (`log₂` values for the real domain).
    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            Samples::Int(v) => v.iter().map(|&x| x as f64).collect(),
            Samples::Log2(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SamplingMethod {
    ExactTree,
    Pool { pool_size: usize },
}

/// Samples of the root value together with everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Samples,
    pub depth: u32,
    pub rule: CombinationRule,
    pub input: InputLaw,
    pub seed: u64,
    pub method: SamplingMethod,
}

impl SampleSet {
    /// Empirical law of integer samples.
    pub fn empirical_pmf(&self) -> Result<Pmf> {
        let Samples::Int(values) = &self.values else {
            return Err(Error::DomainMismatch {
                rule: self.rule.label().into(),
                expected: "integer",
            });
        };
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for &v in values {
            *counts.entry(v).or_default() += 1;
        }
        let n = values.len() as f64;
        Pmf::from_atoms(counts.into_iter().map(|(j, c)| (j, c as f64 / n)))
    }
}

/// Largest depth accepted by [`sample_exact_tree`].
pub const MAX_EXACT_DEPTH: u32 = 24;

fn check_domains(rule: &CombinationRule, input: &InputLaw) -> Result<()> {
    rule.validate()?;
    if rule.value_domain != input.domain() {
        return Err(Error::DomainMismatch {
            rule: rule.label().into(),
            expected: domain_name(rule.value_domain),
        });
    }
    Ok(())
}

fn tree_int<R: Rng>(kind: &RuleKind, leaves: &LeafSampler, depth: u32, rng: &mut R) -> i64 {
    if depth == 0 {
        return leaves.int(rng);
    }
    let x = tree_int(kind, leaves, depth - 1, rng);
    let y = tree_int(kind, leaves, depth - 1, rng);
    combine_int(kind, x, y, rng)
}

fn tree_log2<R: Rng>(kind: &RuleKind, leaves: &LeafSampler, depth: u32, rng: &mut R) -> f64 {
    if depth == 0 {
        return leaves.log2();
    }
    let x = tree_log2(kind, leaves, depth - 1, rng);
    let y = tree_log2(kind, leaves, depth - 1, rng);
    combine_log2(kind, x, y, rng)
}

/// `samples` independent root values of depth-`depth` trees.
///
/// Sample `k` uses [`RngStream`] `(seed, k)` and evaluates its tree depth
/// first, left child before right, so the output does not depend on the number
/// of threads.
pub fn sample_exact_tree(
    rule: &CombinationRule,
    input: &InputLaw,
    depth: u32,
    samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    check_domains(rule, input)?;
    if depth > MAX_EXACT_DEPTH {
        return Err(Error::TooExpensive {
            what: "exact tree sampling (node evaluations)",
            estimate: samples as f64 * 2f64.powi(depth as i32),
            limit: samples as f64 * 2f64.powi(MAX_EXACT_DEPTH as i32),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let leaves = LeafSampler::new(input)?;
    let kind = &rule.kind;
    let values = match rule.value_domain {
        ValueDomain::Integer => Samples::Int(
            (0..samples as u64)
                .into_par_iter()
                .map(|k| tree_int(kind, &leaves, depth, &mut RngStream::new(seed, k).rng()))
                .collect(),
        ),
        ValueDomain::Log2Real => Samples::Log2(
            (0..samples as u64)
                .into_par_iter()
                .map(|k| tree_log2(kind, &leaves, depth, &mut RngStream::new(seed, k).rng()))
                .collect(),
        ),
    };
    Ok(SampleSet {
        values,
        depth,
        rule: rule.clone(),
        input: input.clone(),
        seed,
        method: SamplingMethod::ExactTree,
    })
}

/// Pool entries handled by one random stream in [`sample_pool`].
pub const POOL_CHUNK: usize = 4096;

fn pool_stream(seed: u64, round: u32, chunk: usize) -> ChaCha8Rng {
    RngStream::new(seed, (u64::from(round) << 32) | chunk as u64).rng()
}

fn pool_rounds<T, L, C>(pool_size: usize, depth: u32, seed: u64, leaf: L, combine: C) -> Vec<T>
where
    T: Copy + Send + Sync + Default,
    L: Fn(&mut ChaCha8Rng) -> T + Sync,
    C: Fn(T, T, &mut ChaCha8Rng) -> T + Sync,
{
    let mut last = Vec::new();
    pool_checkpoints(pool_size, &[depth], seed, leaf, combine, |_, pool| {
        last = pool.to_vec()
    });
    last
}

/// Runs the pool to `depths.last()`, handing the pool to `visit` at each
/// listed depth. Round `r` always uses the same streams, so the pool seen at
/// depth `d` equals a standalone run to depth `d`.
fn pool_checkpoints<T, L, C, V>(
    pool_size: usize,
    depths: &[u32],
    seed: u64,
    leaf: L,
    combine: C,
    mut visit: V,
) where
    T: Copy + Send + Sync + Default,
    L: Fn(&mut ChaCha8Rng) -> T + Sync,
    C: Fn(T, T, &mut ChaCha8Rng) -> T + Sync,
    V: FnMut(u32, &[T]),
{
    let mut wanted = depths.iter().copied().peekable();
    let mut pool = vec![T::default(); pool_size];
    pool.par_chunks_mut(POOL_CHUNK).enumerate().for_each(|(c, out)| {
        let mut rng = pool_stream(seed, 0, c);
        for v in out {
            *v = leaf(&mut rng);
        }
    });
    while wanted.next_if_eq(&0).is_some() {
        visit(0, &pool);
    }
    let depth = depths.last().copied().unwrap_or(0);
    let mut next = vec![T::default(); pool_size];
    for round in 1..=depth {
        let current = &pool;
        next.par_chunks_mut(POOL_CHUNK).enumerate().for_each(|(c, out)| {
            let mut rng = pool_stream(seed, round, c);
            for v in out {
                let x = current[rng.random_range(0..pool_size)];
                let y = current[rng.random_range(0..pool_size)];
                *v = combine(x, y, &mut rng);
            }
        });
        std::mem::swap(&mut pool, &mut next);
        while wanted.next_if_eq(&round).is_some() {
            visit(round, &pool);
        }
    }
}

/// Particle approximation of the depth-`depth` root law: a pool is filled from
/// the input law, then each round replaces it by combinations of pairs drawn
/// with replacement from the previous round.
pub fn sample_pool(
    rule: &CombinationRule,
    input: &InputLaw,
    depth: u32,
    pool_size: usize,
    seed: u64,
) -> Result<SampleSet> {
    check_domains(rule, input)?;
    if pool_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "pool size must be at least 2, got {pool_size}"
        )));
    }
    let leaves = LeafSampler::new(input)?;
    let kind = &rule.kind;
    let values = match rule.value_domain {
        ValueDomain::Integer => Samples::Int(pool_rounds(
            pool_size,
            depth,
            seed,
            |rng| leaves.int(rng),
            |x, y, rng| combine_int(kind, x, y, rng),
        )),
        ValueDomain::Log2Real => Samples::Log2(pool_rounds(
            pool_size,
            depth,
            seed,
            |_| leaves.log2(),
            |x, y, rng| combine_log2(kind, x, y, rng),
        )),
    };
    Ok(SampleSet {
        values,
        depth,
        rule: rule.clone(),
        input: input.clone(),
        seed,
        method: SamplingMethod::Pool { pool_size },
    })
}

/// Pool samples at several depths from a single run; entry `i` equals
/// `sample_pool(rule, input, depths[i], pool_size, seed)`.
pub fn sample_pool_at(
    rule: &CombinationRule,
    input: &InputLaw,
    depths: &[u32],
    pool_size: usize,
    seed: u64,
) -> Result<Vec<SampleSet>> {
    check_domains(rule, input)?;
    if pool_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "pool size must be at least 2, got {pool_size}"
        )));
    }
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "depths must be non-empty and strictly increasing".into(),
        ));
    }
    let leaves = LeafSampler::new(input)?;
    let kind = &rule.kind;
    let mut out = Vec::with_capacity(depths.len());
    let mut record = |depth: u32, values: Samples| {
        out.push(SampleSet {
            values,
            depth,
            rule: rule.clone(),
            input: input.clone(),
            seed,
            method: SamplingMethod::Pool { pool_size },
        })
    };
    match rule.value_domain {
        ValueDomain::Integer => pool_checkpoints(
            pool_size,
            depths,
            seed,
            |rng| leaves.int(rng),
            |x, y, rng| combine_int(kind, x, y, rng),
            |d, pool| record(d, Samples::Int(pool.to_vec())),
        ),
        ValueDomain::Log2Real => pool_checkpoints(
            pool_size,
            depths,
            seed,
            |_| leaves.log2(),
            |x, y, rng| combine_log2(kind, x, y, rng),
            |d, pool| record(d, Samples::Log2(pool.to_vec())),
        ),
    }
    Ok(out)
}

/// Largest depth accepted by [`brute_force_law`].
pub const MAX_BRUTE_FORCE_DEPTH: u32 = 4;
/// Largest number of enumerated branches accepted by [`brute_force_law`].
pub const MAX_BRUTE_FORCE_BRANCHES: f64 = 1e8;

/// Every node draw of an integer rule with its probability.
pub fn node_draws(rule: &CombinationRule) -> Result<Vec<(NodeDraw, f64)>> {
    let steps = match &rule.kind {
        RuleKind::Hipster { steps } | RuleKind::Fomo { steps } => steps,
        _ => {
            return Err(Error::DomainMismatch {
                rule: rule.label().into(),
                expected: "integer",
            })
        }
    };
    let mut out = Vec::with_capacity(2 * steps.atoms().len());
    for pick_first in [true, false] {
        for &(step, c) in steps.atoms() {
            out.push((
                NodeDraw {
                    pick_first,
                    step,
                    sum_branch: false,
                },
                0.5 * c,
            ));
        }
    }
    Ok(out)
}

/// Exact law of the root for integer rules and depth at most 4.
///
/// The two subtrees of any node are independent with the law of the level
/// below, so each level enumerates all pairs of child values and all node
/// draws. Nothing is trimmed.
pub fn brute_force_law(rule: &CombinationRule, input: &Pmf, depth: u32) -> Result<Pmf> {
    let draws = node_draws(rule)?;
    if depth > MAX_BRUTE_FORCE_DEPTH {
        return Err(Error::TooExpensive {
            what: "brute-force depth",
            estimate: depth as f64,
            limit: MAX_BRUTE_FORCE_DEPTH as f64,
        });
    }
    let mut law: Vec<(i64, f64)> = input.iter().filter(|a| a.1 > 0.0).collect();
    let mut branches = 0.0;
    for _ in 0..depth {
        branches += (law.len() * law.len() * draws.len()) as f64;
        if branches > MAX_BRUTE_FORCE_BRANCHES {
            return Err(Error::TooExpensive {
                what: "brute-force enumeration (branches)",
                estimate: branches,
                limit: MAX_BRUTE_FORCE_BRANCHES,
            });
        }
        let mut next: BTreeMap<i64, f64> = BTreeMap::new();
        for &(x, px) in &law {
            for &(y, py) in &law {
                for (d, pd) in &draws {
                    *next.entry(int_with(&rule.kind, x, y, d)).or_default() += px * py * pd;
                }
            }
        }
        law = next.into_iter().collect();
    }
    Pmf::from_atoms(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::total_variation;
    use crate::evolution::{evolve_sym, evolve_tal};

    fn hist(values: &[i64]) -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for &v in values {
            *m.entry(v).or_default() += 1;
        }
        m
    }

    #[test]
    fn hipster_equal_children_step() {
        let rule = CombinationRule::symmetric();
        let mut rng = RngStream::new(7, 0).rng();
        let outs: Vec<i64> = (0..1000)
            .map(|_| match combine(&rule, Value::Int(3), Value::Int(3), &mut rng).unwrap() {
                Value::Int(v) => v,
                _ => unreachable!(),
            })
            .collect();
        let h = hist(&outs);
        assert_eq!(h.keys().copied().collect::<Vec<_>>(), vec![2, 4]);
        assert!(h[&2] > 400 && h[&4] > 400);
    }

    #[test]
    fn real_rule_branches() {
        let mp = CombinationRule::min_plus(0.5).unwrap();
        let series = NodeDraw { pick_first: true, step: 0, sum_branch: true };
        let other = NodeDraw { sum_branch: false, ..series };
        let z = Value::Log2(0.0);
        assert_eq!(combine_with(&mp, z, z, &series).unwrap(), Value::Log2(1.0));
        assert_eq!(combine_with(&mp, z, z, &other).unwrap(), Value::Log2(0.0));
        let sp = CombinationRule::series_parallel(0.5).unwrap();
        assert_eq!(combine_with(&sp, z, z, &series).unwrap(), Value::Log2(1.0));
        assert_eq!(combine_with(&sp, z, z, &other).unwrap(), Value::Log2(-1.0));
        assert!((log2_add(3.0, 1.0) - 10f64.log2()).abs() < 1e-15);
        assert_eq!(log2_add(2000.0, 2000.0), 2001.0);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let rule = CombinationRule::symmetric();
        let mut rng = RngStream::new(0, 0).rng();
        assert!(matches!(
            combine(&rule, Value::Log2(0.0), Value::Log2(0.0), &mut rng),
            Err(Error::DomainMismatch { .. })
        ));
        assert!(CombinationRule::min_plus(1.5).is_err());
        assert!(CombinationRule::min_plus(1.0).is_ok());
        let input = InputLaw::Point { log2_value: 0.0 };
        assert!(sample_exact_tree(&rule, &input, 2, 10, 0).is_err());
        assert!(brute_force_law(&CombinationRule::min_plus(0.5).unwrap(), &Pmf::delta(0), 1).is_err());
    }

    #[test]
    fn tree_depth_guard() {
        let rule = CombinationRule::symmetric();
        let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
        assert!(matches!(
            sample_exact_tree(&rule, &input, 25, 10, 0),
            Err(Error::TooExpensive { .. })
        ));
        assert!(matches!(
            brute_force_law(&rule, &Pmf::delta(0), 5),
            Err(Error::TooExpensive { .. })
        ));
    }

    #[test]
    fn depth_zero_returns_input_draws() {
        let pmf = Pmf::from_atoms([(1, 0.25), (4, 0.75)]).unwrap();
        let input = InputLaw::Lattice { pmf: pmf.clone() };
        let rule = CombinationRule::symmetric();
        let set = sample_exact_tree(&rule, &input, 0, 20_000, 3).unwrap();
        assert!(total_variation(&set.empirical_pmf().unwrap(), &pmf) < 0.02);
        let pool = sample_pool(&rule, &input, 0, 20_000, 3).unwrap();
        assert!(total_variation(&pool.empirical_pmf().unwrap(), &pmf) < 0.02);
        assert_eq!(brute_force_law(&rule, &pmf, 0).unwrap(), pmf);
    }

    #[test]
    fn tal_depth_one_frequencies() {
        let rule = CombinationRule::tal(0.3).unwrap();
        let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
        let set = sample_exact_tree(&rule, &input, 1, 50_000, 11).unwrap();
        let law = set.empirical_pmf().unwrap();
        assert_eq!(law.support(), (0, 1));
        assert!((law.get(1) - 0.3).abs() < 0.01);
    }

    #[test]
    fn brute_force_small_cases() {
        let tal = brute_force_law(&CombinationRule::tal(0.5).unwrap(), &Pmf::delta(0), 2).unwrap();
        assert_eq!(tal, Pmf::from_atoms([(0, 0.375), (1, 0.5), (2, 0.125)]).unwrap());
        let sym = brute_force_law(&CombinationRule::symmetric(), &Pmf::delta(0), 1).unwrap();
        assert_eq!(sym, Pmf::from_atoms([(-1, 0.5), (1, 0.5)]).unwrap());
        let fomo = brute_force_law(
            &CombinationRule::fomo(StepDistribution::symmetric()),
            &Pmf::from_atoms([(0, 0.5), (5, 0.5)]).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(
            fomo,
            Pmf::from_atoms([(-1, 0.125), (0, 0.25), (1, 0.125), (4, 0.125), (5, 0.25), (6, 0.125)])
                .unwrap()
        );
    }

    /// Enumerates every leaf assignment and every node draw of a depth-2 tree
    /// jointly, without using independence of subtrees.
    fn joint_depth_two(rule: &CombinationRule, input: &Pmf) -> BTreeMap<i64, f64> {
        let draws = node_draws(rule).unwrap();
        let atoms: Vec<(i64, f64)> = input.iter().collect();
        let mut out = BTreeMap::new();
        for a in &atoms {
            for b in &atoms {
                for c in &atoms {
                    for d in &atoms {
                        for (dl, pl) in &draws {
                            for (dr, pr) in &draws {
                                for (dt, pt) in &draws {
                                    let l = int_with(&rule.kind, a.0, b.0, dl);
                                    let r = int_with(&rule.kind, c.0, d.0, dr);
                                    let root = int_with(&rule.kind, l, r, dt);
                                    let p = a.1 * b.1 * c.1 * d.1 * pl * pr * pt;
                                    *out.entry(root).or_default() += p;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn level_enumeration_matches_joint_enumeration() {
        let input = Pmf::from_atoms([(0, 0.2), (1, 0.5), (3, 0.3)]).unwrap();
        for rule in [
            CombinationRule::tal(0.3).unwrap(),
            CombinationRule::symmetric(),
            CombinationRule::fomo(StepDistribution::symmetric()),
            CombinationRule::hipster(StepDistribution::new([(-2, 0.25), (0, 0.25), (1, 0.5)]).unwrap()),
        ] {
            let joint = joint_depth_two(&rule, &input);
            let levels = brute_force_law(&rule, &input, 2).unwrap();
            for (j, w) in &joint {
                assert!((levels.get(*j) - w).abs() < 1e-14, "{rule:?} atom {j}: {} vs {w}", levels.get(*j));
            }
            assert!((levels.mass() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_tree_matches_evolution_and_is_deterministic() {
        let rule = CombinationRule::symmetric();
        let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
        let set = sample_exact_tree(&rule, &input, 2, 100_000, 42).unwrap();
        let exact = evolve_sym(&Pmf::delta(0), 2).unwrap();
        assert!(total_variation(&set.empirical_pmf().unwrap(), &exact) <= 0.02);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| sample_exact_tree(&rule, &input, 2, 100_000, 42).unwrap());
        assert_eq!(set, serial);
    }

    #[test]
    fn checkpointed_pool_matches_standalone_runs() {
        let rule = CombinationRule::series_parallel(0.5).unwrap();
        let input = InputLaw::Point { log2_value: 0.0 };
        let sets = sample_pool_at(&rule, &input, &[0, 3, 7], 5000, 11).unwrap();
        for set in &sets {
            let alone = sample_pool(&rule, &input, set.depth, 5000, 11).unwrap();
            assert_eq!(set.values, alone.values);
        }
        assert!(sample_pool_at(&rule, &input, &[3, 3], 5000, 11).is_err());
    }

    #[test]
    fn pool_sampling_tracks_evolution() {
        let rule = CombinationRule::tal(0.5).unwrap();
        let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
        let set = sample_pool(&rule, &input, 6, 1 << 17, 9).unwrap();
        let exact = evolve_tal(&Pmf::delta(0), 0.5, 6).unwrap();
        assert!(total_variation(&set.empirical_pmf().unwrap(), &exact) <= 0.03);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let other = pool.install(|| sample_pool(&rule, &input, 6, 1 << 17, 9).unwrap());
        assert_eq!(set, other);
    }

    #[test]
    fn fomo_pool_fixed_point() {
        let rule = CombinationRule::fomo(StepDistribution::symmetric());
        let input = InputLaw::Lattice { pmf: Pmf::delta(5) };
        let set = sample_pool(&rule, &input, 10, 1000, 1).unwrap();
        assert_eq!(set.values, Samples::Int(vec![5; 1000]));
    }

    #[test]
    fn step_law_of_equal_children() {
        let steps = StepDistribution::new([(-1, 0.2), (0, 0.3), (2, 0.5)]).unwrap();
        let rule = CombinationRule::hipster(steps.clone());
        let mut rng = RngStream::new(5, 1).rng();
        let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
        let n = 1_000_000;
        for _ in 0..n {
            let Value::Int(v) = combine(&rule, Value::Int(0), Value::Int(0), &mut rng).unwrap() else {
                unreachable!()
            };
            *counts.entry(v).or_default() += 1.0 / n as f64;
        }
        let empirical = Pmf::from_atoms(counts).unwrap();
        let expected = Pmf::from_atoms(steps.atoms().iter().copied()).unwrap();
        assert!(total_variation(&empirical, &expected) <= 0.005);
    }

    #[test]
    fn min_plus_deep_trees_stay_finite() {
        let rule = CombinationRule::min_plus(0.5).unwrap();
        let input = InputLaw::Point { log2_value: 0.0 };
        let set = sample_pool(&rule, &input, 40, 4096, 2).unwrap();
        let Samples::Log2(v) = &set.values else { unreachable!() };
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0 && *x <= 40.0));
    }
}
