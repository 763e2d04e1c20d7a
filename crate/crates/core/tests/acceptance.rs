//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use hipster_core::coupling::{empirical_coupling_law, exact_coupling_law, random_triple, CouplingFlavor};
use hipster_core::dist::{kolmogorov_distance, total_variation, ContinuousLaw, Pmf, PiecewisePoly};
use hipster_core::entropy::{l1_error, residual_battery, EntropySolution, Window};
use hipster_core::evolution::{beta21_rescaling, beta22_rescaling, evolve, Evolver, Flavor, StepDistribution};
use hipster_core::explore::{lattice_skewness, lattice_study, minplus_study};
use hipster_core::io::write_samples;
use hipster_core::rde::{brute_force_law, sample_exact_tree, CombinationRule, InputLaw, RngStream, SampleSet};
use hipster_core::scheme::{monotone_check, verify_scheme_pmf_identity, IdentityFlavor, Preset};

/// KS distance at n = 10⁴ (TAL, q = ½, from δ₀), frozen from the pilot run.
const PILOT_TAL_KS: f64 = 0.05519167535123992;
/// KS distance at n = 10⁵ (symmetric, from δ₀), frozen from the pilot run.
const PILOT_SYM_KS: f64 = 0.00489367325135176;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_atom_deviation(a: &Pmf, b: &Pmf) -> f64 {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    (alo.min(blo)..=ahi.max(bhi))
        .map(|j| (a.get(j) - b.get(j)).abs())
        .fold(0.0, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let sym = StepDistribution::symmetric();
    let thirds = StepDistribution::new([(0, 1.0 / 3.0), (1, 1.0 / 3.0), (2, 1.0 / 3.0)]).unwrap();
    let mut cases: Vec<(Flavor, CombinationRule)> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&q| (Flavor::TotallyAsymmetric { q }, CombinationRule::tal(q).unwrap()))
        .collect();
    cases.push((Flavor::Symmetric, CombinationRule::symmetric()));
    cases.push((Flavor::Fomo { steps: sym.clone() }, CombinationRule::fomo(sym)));
    cases.push((
        Flavor::GeneralSteps { steps: thirds.clone() },
        CombinationRule::hipster(thirds),
    ));
    let inputs = [
        Pmf::delta(0),
        Pmf::new(0, vec![0.5, 0.5]).unwrap(),
        Pmf::new(-1, vec![0.2, 0.3, 0.5]).unwrap(),
        Pmf::new(-2, vec![0.6, 0.0, 0.4]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (flavor, rule) in &cases {
        for p0 in &inputs {
            for n in 0..=4 {
                let a = evolve(p0, flavor, n).unwrap();
                let b = brute_force_law(rule, p0, n as u32).unwrap();
                worst = worst.max(max_atom_deviation(&a, &b));
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{checked} (flavor, input, n) cases, max atom deviation {worst:.3e} (tol 1e-12)"),
    )
}

fn scheme_identity() -> Outcome {
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, flavor, rho) in [
        (
            "burgers",
            IdentityFlavor::TotallyAsymmetric { q: 0.5 },
            PiecewisePoly::burgers_profile(0.5, 0.25).unwrap(),
        ),
        ("pme", IdentityFlavor::Symmetric, PiecewisePoly::pme_profile(0.25).unwrap()),
    ] {
        for m in [1, 4, 8] {
            let dev = verify_scheme_pmf_identity(flavor, &rho, m, 10_000).unwrap();
            worst = worst.max(dev);
            parts.push(format!("{name} M={m}: {dev:.2e}"));
        }
    }
    outcome(worst <= 1e-9, format!("n=1e4, {} (tol 1e-9)", parts.join(", ")))
}

/// Runs one evolution from δ₀ to `n_max`, checking mass and sign every step
/// and the Kolmogorov distance at each checkpoint.
struct LongRun {
    ks: Vec<(u64, f64)>,
    worst_mass: f64,
    negative_atoms: u64,
}

fn long_run(flavor: &Flavor, checkpoints: &[u64], ks_at: impl Fn(&Pmf, u64) -> f64) -> LongRun {
    let mut ev = Evolver::new(&Pmf::delta(0), flavor).unwrap();
    let mut ks = Vec::new();
    let mut worst_mass: f64 = 0.0;
    for &n in checkpoints {
        while ev.depth() < n {
            ev.step();
            worst_mass = worst_mass.max((ev.total_mass() - 1.0).abs());
        }
        ks.push((n, ks_at(&ev.snapshot(), n)));
    }
    LongRun {
        ks,
        worst_mass,
        negative_atoms: ev.negative_atoms(),
    }
}

fn ks_criterion(run: &LongRun, pilot: f64, threshold: f64) -> Outcome {
    let (n0, pilot_now) = run.ks[0];
    let (n1, last) = run.ks[1];
    let reproducible = (pilot_now - pilot).abs() <= 1e-12;
    let below_pilot = last < pilot;
    let below_threshold = last <= threshold;
    outcome(
        reproducible && below_pilot && below_threshold,
        format!(
            "KS(n={n0}) = {pilot_now:.5} (frozen pilot {pilot:.5}), KS(n={n1}) = {last:.5}; \
             below pilot: {below_pilot}, ≤ {threshold}: {below_threshold}"
        ),
    )
}

fn monotonicity() -> Outcome {
    let (q, eps): (f64, f64) = (0.5, 0.25);
    let burgers = Preset::Burgers { q };
    let b_sup = (q * eps).powf(-0.5);
    let b = monotone_check(&burgers.flux(), burgers.dx(16), burgers.dt(16), (0.0, b_sup), 64).unwrap();
    let b_ok = b.verdict && b.within_threshold == Some(true) && b_sup <= 16.0 / (2.0 * q);

    let pme = Preset::Pme;
    let p_sup = 0.75 * (2.0 / (9.0 * eps)).cbrt();
    let p = monotone_check(&pme.flux(), pme.dx(8), pme.dt(8), (0.0, p_sup), 64).unwrap();
    let p_ok = p.verdict && p.within_threshold == Some(true) && p_sup <= 8.0;

    let w = monotone_check(&burgers.flux(), burgers.dx(1), burgers.dt(1), (0.0, 10.0), 64).unwrap();
    let w_ok = !w.verdict && w.witness.is_some();
    outcome(
        b_ok && p_ok && w_ok,
        format!(
            "burgers M=16 I=[0,{b_sup:.4}] monotone={} threshold={:?}; \
             pme M=8 I=[0,{p_sup:.4}] monotone={} threshold={:?}; \
             burgers M=1 I=[0,10] witness={:?}",
            b.verdict, b.closed_form_threshold, p.verdict, p.closed_form_threshold, w.witness
        ),
    )
}

fn entropy_battery() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for sol in [
        EntropySolution::burgers(0.5, 0.25, 1.0).unwrap(),
        EntropySolution::pme(0.25, 1.0).unwrap(),
    ] {
        let battery = residual_battery(&sol, 512).unwrap();
        let min = battery.iter().map(|e| e.residual).fold(f64::INFINITY, f64::min);
        let identity = battery
            .iter()
            .filter(|e| e.identity_case)
            .map(|e| e.residual.abs())
            .fold(0.0, f64::max);
        pass &= battery.len() >= 50 && min >= -1e-4 && identity <= 1e-4;
        parts.push(format!(
            "{}: {} pairs, min residual {min:.2e}, max identity |r| {identity:.2e}",
            sol.label(),
            battery.len()
        ));
    }
    outcome(pass, format!("quad_n=512, {} (tol 1e-4)", parts.join("; ")))
}

fn l1_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (sol, window) in [
        (
            EntropySolution::burgers(0.5, 0.25, 1.0).unwrap(),
            Window { x_lo: 0.0, x_hi: 1.5, t_lo: 0.0, t_hi: 0.5 },
        ),
        (
            EntropySolution::pme(0.25, 1.0).unwrap(),
            Window { x_lo: -1.5, x_hi: 1.5, t_lo: 0.0, t_hi: 0.5 },
        ),
    ] {
        let errs: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&m| l1_error(&sol, m, window, 2048).unwrap())
            .collect();
        pass &= errs.windows(2).all(|w| w[1] < w[0]);
        let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
        parts.push(format!("{}: [{}]", sol.label(), shown.join(", ")));
    }
    outcome(pass, format!("M=16,32,64,128 {}", parts.join("; ")))
}

fn couplings() -> Outcome {
    let mut rng = RngStream::new(2024, 0).rng();
    let triples: Vec<_> = (0..200).map(|_| random_triple(&mut rng).unwrap()).collect();
    let (mut bound, mut equality, mut marginal): (f64, f64, f64) = (f64::NEG_INFINITY, 0.0, 0.0);
    for (mu, nu, base) in &triples {
        let sym = exact_coupling_law(mu, nu, base, CouplingFlavor::Symmetric, 1).unwrap();
        let tal = exact_coupling_law(mu, nu, base, CouplingFlavor::TotallyAsymmetric { q: 0.5 }, 1).unwrap();
        bound = bound.max(sym.p_exceed - sym.alpha).max(tal.p_exceed - tal.alpha);
        equality = equality.max((tal.p_exceed - tal.alpha).abs());
        marginal = marginal.max(sym.marginal_check).max(tal.marginal_check);
    }
    let exact_ok = bound <= 1e-12 && equality <= 1e-12 && marginal <= 1e-12;

    let mut worst_ratio: f64 = 0.0;
    let mut runs = 0;
    for (i, (mu, nu, base)) in triples.iter().take(4).enumerate() {
        for flavor in [CouplingFlavor::Symmetric, CouplingFlavor::TotallyAsymmetric { q: 0.5 }] {
            let exact = exact_coupling_law(mu, nu, base, flavor, 5).unwrap();
            let emp = empirical_coupling_law(mu, nu, base, flavor, 5, 1_000_000, 77 + i as u64).unwrap();
            let p = exact.p_exceed.clamp(0.0, 1.0);
            let se = (p * (1.0 - p) / 1e6).sqrt();
            // The slack covers rounding when p is exactly 0 or 1.
            worst_ratio = worst_ratio.max((emp.p_exceed - p).abs() / (3.0 * se + 1e-12));
            runs += 1;
        }
    }
    outcome(
        exact_ok && worst_ratio <= 1.0,
        format!(
            "200 triples k=1: max(p−α) {bound:.2e}, TAL max|p−α| {equality:.2e}, marginal {marginal:.2e} (tol 1e-12); \
             {runs} empirical k=5 runs N=1e6 vs exact: max |p̂ − p| / (3 stderr) {worst_ratio:.2} (≤ 1)"
        ),
    )
}

fn monte_carlo() -> Outcome {
    let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
    let mut pass = true;
    let mut parts = Vec::new();
    for (rule, flavor) in [
        (CombinationRule::tal(0.5).unwrap(), Flavor::TotallyAsymmetric { q: 0.5 }),
        (CombinationRule::symmetric(), Flavor::Symmetric),
    ] {
        let set = sample_exact_tree(&rule, &input, 12, 100_000, 5).unwrap();
        let tv = total_variation(&set.empirical_pmf().unwrap(), &evolve(&Pmf::delta(0), &flavor, 12).unwrap());
        let bytes = |set: &SampleSet| {
            let (mut c, mut j) = (Vec::new(), Vec::new());
            write_samples(&mut c, &mut j, set).unwrap();
            (c, j)
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let again = pool.install(|| sample_exact_tree(&rule, &input, 12, 100_000, 5).unwrap());
        let identical = bytes(&set) == bytes(&again);
        pass &= tv <= 0.02 && identical;
        parts.push(format!("{}: TV {tv:.4}, byte-identical {identical}", flavor.label()));
    }
    outcome(pass, format!("n=12 N=1e5, {} (tol 0.02)", parts.join("; ")))
}

fn explore_smoke() -> Outcome {
    let skew = lattice_skewness(0.5, 10, 100_000, 100, 11).unwrap();
    let skew_ok = skew.consistent_with_zero(3.0);
    let depths = [1, 8, 64, 256];
    let all_sum = minplus_study(1.0, &depths, 4096, 3).unwrap();
    let exact = all_sum
        .rows
        .iter()
        .all(|r| r.min_log2 == f64::from(r.n) && r.max_log2 == f64::from(r.n));
    outcome(
        skew_ok && exact,
        format!(
            "lattice p=½ n=10: skewness {:.4} ± {:.4} (within 3 stderr: {skew_ok}); \
             min-plus p=1: log₂M_n = n exactly at n ∈ {depths:?}: {exact}",
            skew.skewness, skew.stderr
        ),
    )
}

fn trajectories() {
    let mp = minplus_study(0.5, &[64, 128, 256], 50_000, 1).unwrap();
    for r in &mp.rows {
        println!(
            "INFO min-plus p=½ n={}: KS {:.4}, fitted c {:.3} (reference π²/3 = {:.3}), min log₂M_n {}",
            r.n,
            r.ks,
            r.fit_c,
            mp.reference_c.unwrap(),
            r.min_log2
        );
    }
    let lat = lattice_study(0.5, &[64, 128, 256, 512, 1024], 50_000, 1).unwrap();
    for r in &lat.rows {
        println!(
            "INFO lattice p=½ n={}: P(R_n ≤ 1) {:.4}, fitted c {:.1}, KS at fit {:.4}",
            r.n, r.p_below, r.fit_c, r.ks
        );
    }
}

fn main() -> ExitCode {
    let tal = Flavor::TotallyAsymmetric { q: 0.5 };
    let tal_law = ContinuousLaw::beta21();
    let sym_law = ContinuousLaw::beta22();
    let mut tal_run = None;
    let mut sym_run = None;

    let mut criteria: Vec<(&str, Box<dyn FnMut() -> Outcome>)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("scheme/walk identity", Box::new(scheme_identity)),
        (
            "TAL convergence",
            Box::new(|| {
                let run = long_run(&tal, &[10_000, 100_000, 1_000_000], |p, n| {
                    kolmogorov_distance(p, beta21_rescaling(0.5, n).unwrap(), &tal_law)
                });
                let out = ks_criterion(&run, PILOT_TAL_KS, 0.01);
                tal_run = Some(run);
                out
            }),
        ),
        (
            "symmetric convergence",
            Box::new(|| {
                let run = long_run(&Flavor::Symmetric, &[100_000, 1_000_000], |p, n| {
                    kolmogorov_distance(p, beta22_rescaling(n).unwrap(), &sym_law)
                });
                let out = ks_criterion(&run, PILOT_SYM_KS, 0.02);
                sym_run = Some(run);
                out
            }),
        ),
    ];
    let mut failed = 0;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
    };
    for (i, (name, f)) in criteria.iter_mut().enumerate() {
        report(i + 1, name, f.as_mut());
    }
    drop(criteria);

    let (tal_run, sym_run) = (tal_run.unwrap(), sym_run.unwrap());
    if let Some(&(n, ks)) = tal_run.ks.get(2) {
        println!("INFO TAL KS at n={n}: {ks:.5}");
    }
    report(5, "mass and positivity", &mut || {
        let mass = tal_run.worst_mass.max(sym_run.worst_mass);
        let negative = tal_run.negative_atoms + sym_run.negative_atoms;
        outcome(
            mass <= 1e-9 && negative == 0,
            format!(
                "TAL q=½ and symmetric over 1e6 steps: max |mass − 1| {mass:.2e} (tol 1e-9), negative atoms {negative}"
            ),
        )
    });
    report(6, "monotonicity certificates", &mut monotonicity);
    report(7, "entropy residual battery", &mut entropy_battery);
    report(8, "L1 convergence", &mut l1_convergence);
    report(9, "coupling battery", &mut couplings);
    report(10, "Monte Carlo consistency", &mut monte_carlo);
    report(11, "explore smoke tests", &mut explore_smoke);
    trajectories();

    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
