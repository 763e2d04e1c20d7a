//! Simulation studies of two related recursive tree models.
//!
//! Both models carry positive real values and are simulated in the `log₂`
//! domain from all-one leaves:
//!
//! * the min-plus tree, where a node holds `x + y` with probability `p` and
//!   `min(x, y)` otherwise; at `p = ½` the rescaled `ln M_n / (π²n/3)^{1/2}`
//!   is expected to approach Beta(2,1);
//! * the random hierarchical lattice, where a node holds `x + y` (series) with
//!   probability `p` and `xy/(x + y)` (parallel) otherwise; at `p = ½` the
//!   rescaled `log₂ R_n / (cn)^{1/3} + ½` is conjectured to approach Beta(2,2)
//!   for an unknown `c`.
//!
//! Nothing here is a pass/fail check of either limit. Pool sampling carries an
//! uncontrolled finite-pool bias, so fitted constants are indicative only.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ContinuousLaw;
use crate::rde::{sample_exact_tree, sample_pool_at, CombinationRule, InputLaw, SampleSet, Samples};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    MinPlus,
    Lattice,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::MinPlus => "min_plus",
            Model::Lattice => "lattice",
        }
    }

    fn rule(self, p: f64) -> Result<CombinationRule> {
        match self {
            Model::MinPlus => CombinationRule::min_plus(p),
            Model::Lattice => CombinationRule::series_parallel(p),
        }
    }

    fn target(self) -> ContinuousLaw {
        match self {
            Model::MinPlus => ContinuousLaw::beta21(),
            Model::Lattice => ContinuousLaw::beta22(),
        }
    }

    /// Scale and shift taking `log₂` of the root value at depth `n` to the
    /// target law's variable, for scaling constant `c`.
    fn rescaling(self, c: f64, n: u32) -> (f64, f64) {
        let n = f64::from(n);
        match self {
            Model::MinPlus => (LN_2 / (c * n).sqrt(), 0.0),
            Model::Lattice => (1.0 / (c * n).cbrt(), 0.5),
        }
    }

    /// The constant predicted for the limit, where one is known.
    pub fn reference_c(self) -> Option<f64> {
        match self {
            Model::MinPlus => Some(PI * PI / 3.0),
            Model::Lattice => None,
        }
    }
}

/// Per-depth summary of the `log₂` root values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub n: u32,
    /// KS distance to the target law. Uses the reference constant when the
    /// model has one and the fitted constant otherwise.
    pub ks: f64,
    /// Fraction of root values `≤ 1`.
    pub p_below: f64,
    /// Constant minimising the KS distance at this depth.
    pub fit_c: f64,
    pub fit_ks: f64,
    pub min_log2: f64,
    pub median_log2: f64,
    pub max_log2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub model: Model,
    pub p: f64,
    pub pool_size: usize,
    pub seed: u64,
    pub reference_c: Option<f64>,
    /// Fitted constant at the deepest level.
    pub fit_c: f64,
    pub rows: Vec<DepthReport>,
}

impl ConjectureReport {
    pub fn depths(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn ks(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ks).collect()
    }

    pub fn p_below(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.p_below).collect()
    }
}

/// Range searched for the scaling constant.
pub const FIT_RANGE: (f64, f64) = (1e-4, 1e4);
const FIT_GRID: usize = 64;
const FIT_ITERATIONS: usize = 60;

/// KS distance between the sorted sample pushed through `x ↦ ax + b` and
/// `law`'s canonical variable.
fn sorted_ks(sorted: &[f64], a: f64, b: f64, law: &ContinuousLaw) -> f64 {
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let f = law.canonical_cdf(a * x + b);
        sup = sup.max((i as f64 / n - f).abs());
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
        sup = sup.max((i as f64 / n - f).abs());
    }
    sup
}

/// Minimises `f` over `[lo, hi]`: a grid scan picks the bracket, golden-section
/// search refines it. Returns `(argmin, min)`.
fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let h = (hi - lo) / FIT_GRID as f64;
    let (best, _) = (0..=FIT_GRID)
        .map(|i| (i, f(lo + h * i as f64)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut a = lo + h * best.saturating_sub(1) as f64;
    let mut b = (lo + h * (best + 1) as f64).min(hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..FIT_ITERATIONS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn depth_report(model: Model, n: u32, mut values: Vec<f64>) -> DepthReport {
    values.sort_by(f64::total_cmp);
    let law = model.target();
    let ks_at = |c: f64| {
        let (a, b) = model.rescaling(c, n);
        sorted_ks(&values, a, b, &law)
    };
    let (log_c, fit_ks) = golden_min(|u| ks_at(u.exp()), FIT_RANGE.0.ln(), FIT_RANGE.1.ln());
    let fit_c = log_c.exp();
    let ks = match model.reference_c() {
        Some(c) => ks_at(c),
        None => fit_ks,
    };
    let below = values.partition_point(|&v| v <= 0.0);
    DepthReport {
        n,
        ks,
        p_below: below as f64 / values.len() as f64,
        fit_c,
        fit_ks,
        min_log2: values[0],
        median_log2: values[values.len() / 2],
        max_log2: values[values.len() - 1],
    }
}

fn log2_values(set: SampleSet) -> Vec<f64> {
    match set.values {
        Samples::Log2(v) => v,
        Samples::Int(_) => unreachable!("real rules produce log2 samples"),
    }
}

fn study(model: Model, p: f64, depths: &[u32], pool_size: usize, seed: u64) -> Result<ConjectureReport> {
    if depths.first() == Some(&0) {
        return Err(Error::InvalidParameter("depths must be at least 1".into()));
    }
    let rule = model.rule(p)?;
    let input = InputLaw::Point { log2_value: 0.0 };
    let sets = sample_pool_at(&rule, &input, depths, pool_size, seed)?;
    let rows: Vec<DepthReport> = sets
        .into_par_iter()
        .map(|set| {
            let n = set.depth;
            depth_report(model, n, log2_values(set))
        })
        .collect();
    Ok(ConjectureReport {
        model,
        p,
        pool_size,
        seed,
        reference_c: model.reference_c(),
        fit_c: rows.last().map_or(f64::NAN, |r| r.fit_c),
        rows,
    })
}

/// Pool study of the min-plus tree with all-one leaves.
pub fn minplus_study(p: f64, depths: &[u32], pool_size: usize, seed: u64) -> Result<ConjectureReport> {
    study(Model::MinPlus, p, depths, pool_size, seed)
}

/// Pool study of the hierarchical lattice with all-one leaves.
pub fn lattice_study(p: f64, depths: &[u32], pool_size: usize, seed: u64) -> Result<ConjectureReport> {
    study(Model::Lattice, p, depths, pool_size, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewnessReport {
    pub p: f64,
    pub depth: u32,
    pub samples: usize,
    pub batches: usize,
    pub skewness: f64,
    /// Batch-means standard error of `skewness`.
    pub stderr: f64,
}

impl SkewnessReport {
    /// Whether the skewness lies within `k` standard errors of zero.
    pub fn consistent_with_zero(&self, k: f64) -> bool {
        self.skewness.abs() <= k * self.stderr
    }
}

fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (m2, m3) = xs.iter().fold((0.0, 0.0), |(m2, m3), &x| {
        let d = x - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Skewness of `log₂ R_n` over independent exact lattice trees.
pub fn lattice_skewness(p: f64, depth: u32, samples: usize, batches: usize, seed: u64) -> Result<SkewnessReport> {
    if batches < 2 || samples < 2 * batches {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 batches of 2 samples (samples={samples}, batches={batches})"
        )));
    }
    let rule = CombinationRule::series_parallel(p)?;
    let input = InputLaw::Point { log2_value: 0.0 };
    let values = log2_values(sample_exact_tree(&rule, &input, depth, samples, seed)?);
    let size = samples / batches;
    let per_batch: Vec<f64> = values.chunks_exact(size).take(batches).map(skewness).collect();
    let b = batches as f64;
    let mean = per_batch.iter().sum::<f64>() / b;
    let var = per_batch.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(SkewnessReport {
        p,
        depth,
        samples,
        batches,
        skewness: skewness(&values),
        stderr: (var / b).sqrt(),
    })
}
