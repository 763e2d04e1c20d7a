use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hipster_core::coupling::{empirical_coupling_law, exact_coupling_law, random_triple, CouplingFlavor, CouplingReport};
use hipster_core::dist::{kolmogorov_distance, total_variation, Affine, ContinuousLaw, Pmf, PiecewisePoly};
use hipster_core::entropy::{l1_error, residual_battery, residual_tolerance, EntropySolution, Window};
use hipster_core::evolution::{beta21_rescaling, beta22_rescaling, evolve, Checkpoint, Evolver, Flavor, StepDistribution};
use hipster_core::explore::{lattice_skewness, lattice_study, minplus_study};
use hipster_core::io::{conjecture_rows, read_pmf_csv, read_pmf_json, write_pmf_csv, write_samples, CouplingRow, L1Row, ResidualRow, SnapshotRow};
use hipster_core::rde::{sample_exact_tree, sample_pool, CombinationRule, InputLaw, RngStream, ValueDomain};
use hipster_core::scheme::{init_scheme, monotone_check, verify_scheme_pmf_identity, IdentityFlavor, Preset};
use hipster_core::Error;

use crate::config::{ConfigFile, Globals, Steps};
use crate::output::Run;
use crate::Failure;

fn is_false(b: &bool) -> bool {
    !*b
}

fn start(g: &Globals, command: &'static str, params: &impl Serialize) -> Result<Run, Failure> {
    let config = json!({ "seed": g.seed, "params": params });
    Run::create(&g.out_dir, command, config, g.seed)
}

fn load_pmf(path: Option<&Path>) -> Result<Pmf, Failure> {
    let Some(path) = path else {
        return Ok(Pmf::delta(0));
    };
    let file = std::fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let pmf = if path.extension().is_some_and(|e| e == "csv") {
        read_pmf_csv(file)
    } else {
        read_pmf_json(file)
    };
    pmf.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn step_distribution(steps: &Option<Steps>, what: &str) -> Result<StepDistribution, Failure> {
    match steps {
        Some(s) => Ok(StepDistribution::new(s.0.iter().copied())?),
        None => Err(Failure::Config(format!("{what} needs --steps"))),
    }
}

/// Powers of ten below `n`, then `n`.
fn default_checkpoints(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(10u64), |c| c.checked_mul(10))
        .take_while(|&c| c < n)
        .collect();
    if n > 0 {
        out.push(n);
    }
    out
}

fn check_increasing(name: &str, values: &[u64], max: u64) -> Result<(), Failure> {
    if values.windows(2).any(|w| w[0] >= w[1]) || values.last().is_some_and(|&v| v > max) {
        return Err(Failure::Config(format!("{name} must be strictly increasing and at most {max}")));
    }
    Ok(())
}

/// Limit law and rescaling at depth `n`, for flavors that have one.
fn limit(flavor: &Flavor, n: u64) -> Option<(Affine, ContinuousLaw)> {
    match flavor {
        Flavor::TotallyAsymmetric { q } => Some((beta21_rescaling(*q, n).ok()?, ContinuousLaw::beta21())),
        Flavor::Symmetric => Some((beta22_rescaling(n).ok()?, ContinuousLaw::beta22())),
        _ => None,
    }
}

/// Evolves to `n`, recording the Kolmogorov distance at each checkpoint.
fn evolve_with_checkpoints(p0: &Pmf, flavor: &Flavor, n: u64, checkpoints: &[u64]) -> Result<(Evolver, Vec<Checkpoint>), Failure> {
    let mut ev = Evolver::new(p0, flavor)?;
    let mut rows = Vec::new();
    for &c in checkpoints {
        ev.run(c - ev.depth());
        if let Some((map, law)) = limit(flavor, c) {
            rows.push(Checkpoint {
                n: c,
                ks: kolmogorov_distance(&ev.snapshot(), map, &law),
                scale: map.scale,
            });
        }
    }
    ev.run(n - ev.depth());
    Ok((ev, rows))
}

fn print_checkpoints(rows: &[Checkpoint]) {
    if !rows.is_empty() {
        println!("{:>10}  {:>10}  {:>12}", "n", "ks", "scale");
    }
    for r in rows {
        println!("{:>10}  {:>10.6}  {:>12.6e}", r.n, r.ks, r.scale);
    }
}

fn mass_check(run: &mut Run, ev: &Evolver) {
    let drift = (ev.total_mass() - 1.0).abs();
    let negative = ev.negative_atoms();
    run.check(
        "mass",
        drift <= 1e-9 && negative == 0,
        format!("|mass − 1| = {drift:.2e}, negative atoms {negative}"),
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FlavorName {
    Tal,
    Sym,
    General,
    Fomo,
}

fn make_flavor(name: FlavorName, q: f64, steps: &Option<Steps>) -> Result<Flavor, Failure> {
    let flavor = match name {
        FlavorName::Tal => Flavor::TotallyAsymmetric { q },
        FlavorName::Sym => Flavor::Symmetric,
        FlavorName::General => Flavor::GeneralSteps {
            steps: step_distribution(steps, "general")?,
        },
        FlavorName::Fomo => Flavor::Fomo {
            steps: match steps {
                Some(_) => step_distribution(steps, "fomo")?,
                None => StepDistribution::symmetric(),
            },
        },
    };
    flavor.validate()?;
    Ok(flavor)
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveFlags {
    /// Walk flavor.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    flavor: Option<FlavorName>,
    /// Step probability of the totally asymmetric walk.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    /// Step law for `general` and `fomo`, as `step:weight,...`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<Steps>,
    /// Number of levels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    /// Input law as Pmf JSON or `j,weight` CSV; defaults to the point mass at 0.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Depths at which to record the Kolmogorov distance.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvolveParams {
    flavor: FlavorName,
    q: f64,
    steps: Option<Steps>,
    n: u64,
    input: Option<PathBuf>,
    checkpoints: Option<Vec<u64>>,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self {
            flavor: FlavorName::Tal,
            q: 0.5,
            steps: None,
            n: 1000,
            input: None,
            checkpoints: None,
        }
    }
}

pub fn evolve_cmd(file: &ConfigFile, g: &Globals, flags: &EvolveFlags) -> Result<(), Failure> {
    let p: EvolveParams = file.resolve("evolve", flags)?;
    let flavor = make_flavor(p.flavor, p.q, &p.steps)?;
    let p0 = load_pmf(p.input.as_deref())?;
    let checkpoints = p.checkpoints.clone().unwrap_or_else(|| default_checkpoints(p.n));
    check_increasing("checkpoints", &checkpoints, p.n)?;
    if checkpoints.first() == Some(&0) {
        return Err(Failure::Config("checkpoints must be positive".into()));
    }
    let mut run = start(g, "evolve", &p)?;

    let (ev, rows) = evolve_with_checkpoints(&p0, &flavor, p.n, &checkpoints)?;
    let last = ev.snapshot();
    print_checkpoints(&rows);
    let (lo, hi) = last.support();
    println!("{} n={}: support [{lo}, {hi}], mean {:.6}", flavor.label(), p.n, last.mean());

    run.with("pmf.csv", |w| write_pmf_csv(w, &last))?;
    run.json("pmf.json", &last)?;
    if !rows.is_empty() {
        run.csv("ks.csv", &rows)?;
    }
    mass_check(&mut run, &ev);
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Tal,
    Sym,
    General,
    Fomo,
    MinPlus,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Exact,
    Pool,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateFlags {
    /// Combination rule.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rule: Option<RuleName>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    /// Sum probability of the min-plus and lattice rules.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<Steps>,
    /// Tree depth.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    /// Independent trees for `exact`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<MethodName>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pool_size: Option<usize>,
    /// Leaf law for integer rules (Pmf JSON or CSV).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Fail unless the total-variation distance to the exact law is at most this.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tv: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateParams {
    rule: RuleName,
    q: f64,
    p: f64,
    steps: Option<Steps>,
    n: u32,
    samples: usize,
    method: MethodName,
    pool_size: usize,
    input: Option<PathBuf>,
    max_tv: Option<f64>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            rule: RuleName::Tal,
            q: 0.5,
            p: 0.5,
            steps: None,
            n: 10,
            samples: 10_000,
            method: MethodName::Exact,
            pool_size: 100_000,
            input: None,
            max_tv: None,
        }
    }
}

pub fn simulate_cmd(file: &ConfigFile, g: &Globals, flags: &SimulateFlags) -> Result<(), Failure> {
    let p: SimulateParams = file.resolve("simulate", flags)?;
    let (rule, flavor) = match p.rule {
        RuleName::MinPlus => (CombinationRule::min_plus(p.p)?, None),
        RuleName::Lattice => (CombinationRule::series_parallel(p.p)?, None),
        name => {
            let fname = match name {
                RuleName::Tal => FlavorName::Tal,
                RuleName::Sym => FlavorName::Sym,
                RuleName::General => FlavorName::General,
                _ => FlavorName::Fomo,
            };
            let flavor = make_flavor(fname, p.q, &p.steps)?;
            let rule = match &flavor {
                Flavor::Fomo { steps } => CombinationRule::fomo(steps.clone()),
                Flavor::TotallyAsymmetric { q } => CombinationRule::tal(*q)?,
                Flavor::Symmetric => CombinationRule::symmetric(),
                Flavor::GeneralSteps { steps } => CombinationRule::hipster(steps.clone()),
            };
            (rule, Some(flavor))
        }
    };
    let (input, leaves) = match rule.value_domain {
        ValueDomain::Integer => {
            let pmf = load_pmf(p.input.as_deref())?;
            (InputLaw::Lattice { pmf: pmf.clone() }, Some(pmf))
        }
        ValueDomain::Log2Real => (InputLaw::Point { log2_value: 0.0 }, None),
    };
    let mut run = start(g, "simulate", &p)?;

    let set = match p.method {
        MethodName::Exact => sample_exact_tree(&rule, &input, p.n, p.samples, g.seed)?,
        MethodName::Pool => sample_pool(&rule, &input, p.n, p.pool_size, g.seed)?,
    };
    let mut values = set.values.as_f64();
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    println!(
        "{} n={} N={}: mean {mean:.6}, median {}, range [{}, {}]{}",
        rule.label(),
        p.n,
        values.len(),
        values[values.len() / 2],
        values[0],
        values[values.len() - 1],
        if rule.value_domain == ValueDomain::Log2Real { " (log2)" } else { "" }
    );
    let (mut csv, mut meta) = (Vec::new(), Vec::new());
    write_samples(&mut csv, &mut meta, &set)?;
    run.bytes("samples.csv", csv)?;
    run.bytes("samples.json", meta)?;

    if let (Some(flavor), Some(leaves)) = (flavor, leaves) {
        let tv = total_variation(&set.empirical_pmf()?, &evolve(&leaves, &flavor, u64::from(p.n))?);
        println!("total variation to the exact law: {tv:.5}");
        if let Some(max) = p.max_tv {
            run.check("tv", tv <= max, format!("TV {tv:.5} (max {max})"));
        }
    } else if p.max_tv.is_some() {
        return Err(Failure::Config("--max-tv applies to integer rules only".into()));
    }
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Burgers,
    Pme,
}

#[derive(Debug, Args, Serialize)]
pub struct SchemeFlags {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<PresetName>,
    /// Flux coefficient of the Burgers preset.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    /// Age of the self-similar initial profile.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    /// Cells per unit length.
    #[arg(long = "M", visible_alias = "mesh")]
    #[serde(rename = "mesh", skip_serializing_if = "Option::is_none")]
    mesh: Option<u32>,
    /// Time steps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    /// Steps at which to write `snapshot_<k>.csv`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshots: Option<Vec<u64>>,
    /// Compare the scheme with the exact walk evolution over all `n` steps.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    identity_check: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    identity_tol: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchemeParams {
    preset: PresetName,
    q: f64,
    eps: f64,
    mesh: u32,
    n: u64,
    snapshots: Option<Vec<u64>>,
    identity_check: bool,
    identity_tol: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            preset: PresetName::Burgers,
            q: 0.5,
            eps: 0.25,
            mesh: 8,
            n: 100,
            snapshots: None,
            identity_check: false,
            identity_tol: 1e-9,
        }
    }
}

pub fn scheme_cmd(file: &ConfigFile, g: &Globals, flags: &SchemeFlags) -> Result<(), Failure> {
    let p: SchemeParams = file.resolve("scheme", flags)?;
    let (preset, u0, exact, identity) = match p.preset {
        PresetName::Burgers => (
            Preset::Burgers { q: p.q },
            PiecewisePoly::burgers_profile(p.q, p.eps)?,
            EntropySolution::burgers(p.q, p.eps, 1.0)?,
            IdentityFlavor::TotallyAsymmetric { q: p.q },
        ),
        PresetName::Pme => (
            Preset::Pme,
            PiecewisePoly::pme_profile(p.eps)?,
            EntropySolution::pme(p.eps, 1.0)?,
            IdentityFlavor::Symmetric,
        ),
    };
    let snapshots = p.snapshots.clone().unwrap_or_else(|| vec![0, p.n]);
    check_increasing("snapshots", &snapshots, p.n)?;
    let mut state = init_scheme(&u0, p.mesh, preset)?;
    let flux = preset.flux();
    let mut run = start(g, "scheme", &p)?;

    let initial_mass = state.mass();
    for &k in &snapshots {
        state.run(&flux, k - state.time_index);
        run.csv(&format!("snapshot_{k}.csv"), state.iter().map(|(j, u)| SnapshotRow { j, u }))?;
    }
    state.run(&flux, p.n - state.time_index);
    let drift = (state.mass() - initial_mass).abs();
    let monotone = monotone_check(&flux, state.dx, state.dt, (0.0, exact.sup(0.0)), 64)?;
    println!(
        "{:?} M={} n={}: mass drift {drift:.2e}; monotone on [0, {:.4}]: {} (threshold {:?})",
        preset,
        p.mesh,
        p.n,
        exact.sup(0.0),
        monotone.verdict,
        monotone.closed_form_threshold
    );

    let deviation = if p.identity_check {
        let dev = verify_scheme_pmf_identity(identity, &u0, p.mesh, p.n)?;
        run.check(
            "identity",
            dev <= p.identity_tol,
            format!("max |U − M p| over {} steps = {dev:.3e} (tol {:e})", p.n, p.identity_tol),
        );
        Some(dev)
    } else {
        None
    };
    run.json(
        "scheme.json",
        &json!({
            "preset": preset,
            "M": p.mesh,
            "n": p.n,
            "dx": state.dx,
            "dt": state.dt,
            "mass_initial": initial_mass,
            "mass_final": state.mass(),
            "mass_drift": drift,
            "monotonicity": monotone,
            "identity_deviation": deviation,
        }),
    )?;
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Burgers,
    Pme,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct EntropyFlags {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<FamilyName>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    /// Quadrature cells per axis for the residuals.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    quad_n: Option<usize>,
    /// Meshes of the L¹ convergence table.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    meshes: Option<Vec<u32>>,
    /// Midpoint samples of the time integral in the L¹ error.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    time_samples: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EntropyParams {
    family: FamilyName,
    q: f64,
    eps: f64,
    quad_n: usize,
    meshes: Vec<u32>,
    time_samples: usize,
}

impl Default for EntropyParams {
    fn default() -> Self {
        Self {
            family: FamilyName::Both,
            q: 0.5,
            eps: 0.25,
            quad_n: 512,
            meshes: vec![16, 32, 64, 128],
            time_samples: 2048,
        }
    }
}

pub fn entropy_cmd(file: &ConfigFile, g: &Globals, flags: &EntropyFlags) -> Result<(), Failure> {
    let p: EntropyParams = file.resolve("entropy", flags)?;
    let mut families = Vec::new();
    if p.family != FamilyName::Pme {
        families.push((
            EntropySolution::burgers(p.q, p.eps, 1.0)?,
            Window { x_lo: 0.0, x_hi: 1.5, t_lo: 0.0, t_hi: 0.5 },
        ));
    }
    if p.family != FamilyName::Burgers {
        families.push((
            EntropySolution::pme(p.eps, 1.0)?,
            Window { x_lo: -1.5, x_hi: 1.5, t_lo: 0.0, t_hi: 0.5 },
        ));
    }
    let mut run = start(g, "entropy", &p)?;
    let tol = residual_tolerance(p.quad_n);

    let mut residuals = Vec::new();
    for (sol, window) in &families {
        let label = sol.label();
        let battery = residual_battery(sol, p.quad_n)?;
        let min = battery.iter().map(|e| e.residual).fold(f64::INFINITY, f64::min);
        let identity = battery
            .iter()
            .filter(|e| e.identity_case)
            .map(|e| e.residual.abs())
            .fold(0.0, f64::max);
        run.check(
            &format!("{label} residuals"),
            min >= -tol && identity <= tol,
            format!("{} pairs, min {min:.3e}, identity cases max |r| {identity:.3e} (tol {tol:.1e})", battery.len()),
        );
        residuals.extend(battery.iter().map(ResidualRow::from));

        let mut rows = Vec::new();
        for &m in &p.meshes {
            let e = l1_error(sol, m, *window, p.time_samples)?;
            println!("{label} M={m}: L1 error {e:.4e}");
            rows.push(L1Row { m, l1_error: e });
        }
        if rows.len() > 1 {
            let decreasing = rows.windows(2).all(|w| w[1].l1_error < w[0].l1_error);
            run.check(&format!("{label} L1 decreasing"), decreasing, format!("over M = {:?}", p.meshes));
        }
        run.csv(&format!("l1_{label}.csv"), &rows)?;
    }
    run.csv("residuals.csv", &residuals)?;
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CoupleMode {
    Exact,
    Empirical,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleFlags {
    /// Random (μ, ν, base coupling) triples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    /// Tree depth.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    /// Step probability of the totally asymmetric flavor.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<CoupleMode>,
    /// Coupled tree pairs per empirical run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CoupleParams {
    trials: usize,
    k: u32,
    q: f64,
    mode: CoupleMode,
    samples: usize,
}

impl Default for CoupleParams {
    fn default() -> Self {
        Self {
            trials: 200,
            k: 1,
            q: 0.5,
            mode: CoupleMode::Exact,
            samples: 1_000_000,
        }
    }
}

pub fn couple_cmd(file: &ConfigFile, g: &Globals, flags: &CoupleFlags) -> Result<(), Failure> {
    let p: CoupleParams = file.resolve("couple", flags)?;
    let flavors = [
        ("sym", CouplingFlavor::Symmetric),
        ("tal", CouplingFlavor::TotallyAsymmetric { q: p.q }),
    ];
    for (_, f) in &flavors {
        f.flavor().validate()?;
    }
    let mut run = start(g, "couple", &p)?;

    let mut rng = RngStream::new(g.seed, 0).rng();
    let triples = (0..p.trials)
        .map(|_| random_triple(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mode = match p.mode {
        CoupleMode::Exact => "exact",
        CoupleMode::Empirical => "empirical",
    };
    let mut reports: Vec<(usize, CouplingReport)> = Vec::new();
    for (label, flavor) in flavors {
        let mut rows = Vec::new();
        let (mut excess, mut gap, mut marginal, mut worst_ratio) = (f64::NEG_INFINITY, 0.0f64, 0.0f64, 0.0f64);
        let mut compared = 0;
        for (trial, (mu, nu, base)) in triples.iter().enumerate() {
            let report = match p.mode {
                CoupleMode::Exact => exact_coupling_law(mu, nu, base, flavor, p.k)?,
                CoupleMode::Empirical => {
                    let seed = g.seed.wrapping_add(1 + trial as u64);
                    let emp = empirical_coupling_law(mu, nu, base, flavor, p.k, p.samples, seed)?;
                    match exact_coupling_law(mu, nu, base, flavor, p.k) {
                        Ok(exact) => {
                            let q = exact.p_exceed.clamp(0.0, 1.0);
                            let se = (q * (1.0 - q) / p.samples as f64).sqrt();
                            worst_ratio = worst_ratio.max((emp.p_exceed - q).abs() / (3.0 * se + 1e-12));
                            compared += 1;
                        }
                        Err(Error::TooExpensive { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                    emp
                }
            };
            excess = excess.max(report.p_exceed - report.alpha);
            gap = gap.max((report.p_exceed - report.alpha).abs());
            marginal = marginal.max(report.marginal_check);
            rows.push(CouplingRow {
                trial,
                alpha: report.alpha,
                p_exceed: report.p_exceed,
                mode: mode.into(),
            });
            reports.push((trial, report));
        }
        println!("{label}: max(p − α) = {excess:.3e}, max |p − α| = {gap:.3e}, marginal check {marginal:.3e}");
        if p.mode == CoupleMode::Exact {
            run.check(&format!("{label} bound"), excess <= 1e-12, format!("max(p − α) = {excess:.3e}"));
            if matches!(flavor, CouplingFlavor::TotallyAsymmetric { q } if q == 0.5) && p.k == 1 {
                run.check(&format!("{label} equality"), gap <= 1e-12, format!("max |p − α| = {gap:.3e}"));
            }
            run.check(&format!("{label} marginals"), marginal <= 1e-12, format!("{marginal:.3e}"));
        } else if compared > 0 {
            run.check(
                &format!("{label} empirical"),
                worst_ratio <= 1.0,
                format!("{compared} runs, max |p̂ − p| / (3 stderr) = {worst_ratio:.3}"),
            );
        }
        run.csv(&format!("coupling_{label}.csv"), &rows)?;
    }
    let reports: Vec<_> = reports
        .into_iter()
        .map(|(trial, r)| json!({ "trial": trial, "report": r }))
        .collect();
    run.json("reports.json", &reports)?;
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    MinPlus,
    Lattice,
}

#[derive(Debug, Args, Serialize)]
pub struct ExploreFlags {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelName>,
    /// Sum probability.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    depths: Option<Vec<u32>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pool_size: Option<usize>,
    /// Also measure the skewness of log₂ R_n over exact lattice trees.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    skewness: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    skew_depth: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    skew_samples: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExploreParams {
    model: ModelName,
    p: f64,
    depths: Option<Vec<u32>>,
    pool_size: usize,
    skewness: bool,
    skew_depth: u32,
    skew_samples: usize,
}

impl Default for ExploreParams {
    fn default() -> Self {
        Self {
            model: ModelName::Lattice,
            p: 0.5,
            depths: None,
            pool_size: 100_000,
            skewness: false,
            skew_depth: 10,
            skew_samples: 100_000,
        }
    }
}

pub fn explore_cmd(file: &ConfigFile, g: &Globals, flags: &ExploreFlags) -> Result<(), Failure> {
    let p: ExploreParams = file.resolve("explore", flags)?;
    let depths = p.depths.clone().unwrap_or_else(|| match p.model {
        ModelName::MinPlus => vec![64, 128, 256],
        ModelName::Lattice => vec![64, 128, 256, 512, 1024],
    });
    if p.skewness && p.model != ModelName::Lattice {
        return Err(Failure::Config("--skewness applies to the lattice model".into()));
    }
    let mut run = start(g, "explore", &p)?;

    let report = match p.model {
        ModelName::MinPlus => minplus_study(p.p, &depths, p.pool_size, g.seed)?,
        ModelName::Lattice => lattice_study(p.p, &depths, p.pool_size, g.seed)?,
    };
    println!("{:>6}  {:>8}  {:>8}  {:>10}  {:>10}", "n", "ks", "p_below", "fit_c", "median");
    for r in &report.rows {
        println!(
            "{:>6}  {:>8.4}  {:>8.4}  {:>10.4}  {:>10.4}",
            r.n, r.ks, r.p_below, r.fit_c, r.median_log2
        );
    }
    if p.model == ModelName::MinPlus && p.p == 1.0 {
        let exact = report
            .rows
            .iter()
            .all(|r| r.min_log2 == f64::from(r.n) && r.max_log2 == f64::from(r.n));
        run.check("all-sum tree", exact, format!("log2 M_n = n exactly at every depth: {exact}"));
    }
    run.json("report.json", &report)?;
    run.csv("conjecture.csv", conjecture_rows(&report))?;

    if p.skewness {
        let skew = lattice_skewness(p.p, p.skew_depth, p.skew_samples, 100, g.seed)?;
        println!("skewness of log2 R_{}: {:.5} ± {:.5}", p.skew_depth, skew.skewness, skew.stderr);
        if p.p == 0.5 {
            run.check(
                "lattice duality",
                skew.consistent_with_zero(3.0),
                format!("skewness {:.5} within 3 × {:.5}", skew.skewness, skew.stderr),
            );
        }
        run.json("skewness.json", &skew)?;
    }
    run.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct TheoremFlags {
    /// Step probability (totally asymmetric walk only).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    /// Largest accepted Kolmogorov distance at `n`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TheoremParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default)]
    n: Option<u64>,
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    checkpoints: Option<Vec<u64>>,
}

/// Kolmogorov distance of the rescaled root law from δ₀ to its Beta limit.
pub fn theorem_cmd(file: &ConfigFile, g: &Globals, flags: &TheoremFlags, symmetric: bool) -> Result<(), Failure> {
    let command = if symmetric { "theorem2" } else { "theorem1" };
    let mut p: TheoremParams = file.resolve(command, flags)?;
    let (n, threshold) = if symmetric { (1_000_000, 0.02) } else { (100_000, 0.01) };
    p.n.get_or_insert(n);
    p.threshold.get_or_insert(threshold);
    if !symmetric {
        p.q.get_or_insert(0.5);
    }
    let (n, threshold) = (p.n.unwrap_or(n), p.threshold.unwrap_or(threshold));
    let flavor = match (symmetric, p.q) {
        (true, None) => Flavor::Symmetric,
        (true, Some(_)) => return Err(Failure::Config("theorem2 has no q".into())),
        (false, q) => Flavor::TotallyAsymmetric { q: q.unwrap_or(0.5) },
    };
    flavor.validate()?;
    if n == 0 {
        return Err(Failure::Config("n must be positive".into()));
    }
    let checkpoints = p.checkpoints.clone().unwrap_or_else(|| default_checkpoints(n));
    check_increasing("checkpoints", &checkpoints, n)?;
    if checkpoints.first() == Some(&0) || checkpoints.last() != Some(&n) {
        return Err(Failure::Config("checkpoints must be positive and end at n".into()));
    }
    let mut run = start(g, command, &p)?;

    let (ev, rows) = evolve_with_checkpoints(&Pmf::delta(0), &flavor, n, &checkpoints)?;
    print_checkpoints(&rows);
    run.csv("ks.csv", &rows)?;
    let last = rows.last().expect("checkpoints end at n");
    run.check(
        "kolmogorov",
        last.ks <= threshold,
        format!("KS at n={} is {:.5} (threshold {threshold})", last.n, last.ks),
    );
    mass_check(&mut run, &ev);
    run.finish()
}
