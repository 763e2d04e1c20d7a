use hipster_core::coupling::{step_outcomes, CoupledInputs, CouplingFlavor};
use hipster_core::dist::Pmf;
use hipster_core::evolution::{evolve, Evolver, Flavor, StepDistribution};
use hipster_core::io::{read_pmf_csv, read_pmf_json, write_pmf_csv, write_pmf_json};
use hipster_core::rde::{brute_force_law, log2_add, log2_parallel, CombinationRule};
use hipster_core::scheme::{Preset, SchemeState};
use proptest::prelude::*;

fn pmf_strategy(max_atoms: usize) -> impl Strategy<Value = Pmf> {
    (-5i64..5, prop::collection::vec(0.0f64..1.0, 1..=max_atoms)).prop_filter_map("zero mass", |(offset, raw)| {
        let total: f64 = raw.iter().sum();
        if raw[0] == 0.0 || raw[raw.len() - 1] == 0.0 || total < 1e-3 {
            return None;
        }
        Pmf::new(offset, raw.iter().map(|w| w / total).collect()).ok()
    })
}

fn steps_strategy() -> impl Strategy<Value = StepDistribution> {
    prop::collection::vec((-2i64..=2, 0.05f64..1.0), 1..=3).prop_filter_map("bad steps", |raw| {
        let total: f64 = raw.iter().map(|a| a.1).sum();
        StepDistribution::new(raw.into_iter().map(|(s, w)| (s, w / total))).ok()
    })
}

fn flavor_strategy() -> impl Strategy<Value = Flavor> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|q| Flavor::TotallyAsymmetric { q }),
        Just(Flavor::Symmetric),
        steps_strategy().prop_map(|steps| Flavor::GeneralSteps { steps }),
        steps_strategy().prop_map(|steps| Flavor::Fomo { steps }),
    ]
}

fn rule_for(flavor: &Flavor) -> CombinationRule {
    match flavor {
        Flavor::TotallyAsymmetric { q } => CombinationRule::tal(*q).unwrap(),
        Flavor::Symmetric => CombinationRule::symmetric(),
        Flavor::GeneralSteps { steps } => CombinationRule::hipster(steps.clone()),
        Flavor::Fomo { steps } => CombinationRule::fomo(steps.clone()),
    }
}

fn max_atom_deviation(a: &Pmf, b: &Pmf) -> f64 {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    (alo.min(blo)..=ahi.max(bhi))
        .map(|j| (a.get(j) - b.get(j)).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn evolution_conserves_mass(p in pmf_strategy(6), flavor in flavor_strategy(), n in 0u64..60) {
        let mut ev = Evolver::new(&p, &flavor).unwrap();
        for _ in 0..n {
            ev.step();
            prop_assert!((ev.total_mass() - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(ev.negative_atoms(), 0);
        prop_assert!(ev.snapshot().weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn evolution_matches_brute_force(p in pmf_strategy(3), flavor in flavor_strategy(), n in 0u32..=3) {
        let a = evolve(&p, &flavor, u64::from(n)).unwrap();
        let b = brute_force_law(&rule_for(&flavor), &p, n).unwrap();
        prop_assert!(max_atom_deviation(&a, &b) <= 1e-12);
    }

    #[test]
    fn specialized_kernels_match_general(p in pmf_strategy(5), q in 0.05f64..0.95, n in 0u64..40) {
        let tal = evolve(&p, &Flavor::TotallyAsymmetric { q }, n).unwrap();
        let steps = StepDistribution::bernoulli(q).unwrap();
        let general = evolve(&p, &Flavor::GeneralSteps { steps }, n).unwrap();
        prop_assert_eq!(tal.offset(), general.offset());
        prop_assert!(tal.weights().iter().zip(general.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let sym = evolve(&p, &Flavor::Symmetric, n).unwrap();
        let general = evolve(&p, &Flavor::GeneralSteps { steps: StepDistribution::symmetric() }, n).unwrap();
        prop_assert_eq!(sym.offset(), general.offset());
        prop_assert!(sym.weights().iter().zip(general.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn evolution_commutes_with_shifts(p in pmf_strategy(4), flavor in flavor_strategy(), n in 0u64..20, k in -7i64..7) {
        let a = evolve(&p.shifted(k), &flavor, n).unwrap();
        let b = evolve(&p, &flavor, n).unwrap().shifted(k);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pmf_serialization_is_bit_exact(p in pmf_strategy(12)) {
        let mut csv = Vec::new();
        write_pmf_csv(&mut csv, &p).unwrap();
        let back = read_pmf_csv(csv.as_slice()).unwrap();
        prop_assert_eq!(back.offset(), p.offset());
        prop_assert!(back.weights().iter().zip(p.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut json = Vec::new();
        write_pmf_json(&mut json, &p).unwrap();
        prop_assert_eq!(read_pmf_json(json.as_slice()).unwrap(), p);
    }

    #[test]
    fn monotone_scheme_preserves_order(
        cells in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30),
        preset in prop_oneof![Just(Preset::Burgers { q: 0.5 }), Just(Preset::Pme)],
    ) {
        // Values stay inside [0, 2√2] ⊆ [0, 16] for Burgers and [0, 4] for PME at these meshes.
        let mesh = match preset { Preset::Burgers { .. } => 16, Preset::Pme => 8 };
        let top = 2.0 * 2f64.sqrt();
        let lo: Vec<f64> = cells.iter().map(|(a, _)| a * top / 2.0).collect();
        let hi: Vec<f64> = cells.iter().map(|(a, b)| (a + b) * top / 2.0).collect();
        let (dx, dt) = (preset.dx(mesh), preset.dt(mesh));
        let mut u = SchemeState::new(dx, dt, 0, lo).unwrap();
        let mut v = SchemeState::new(dx, dt, 0, hi).unwrap();
        let flux = preset.flux();
        u.advance(&flux);
        v.advance(&flux);
        for j in -2..cells.len() as i64 + 2 {
            prop_assert!(u.get(j) >= 0.0);
            prop_assert!(u.get(j) <= v.get(j) + 1e-15);
        }
    }

    #[test]
    fn series_parallel_duality(x in -40.0f64..40.0, y in -40.0f64..40.0) {
        prop_assert!((log2_parallel(-x, -y) + log2_add(x, y)).abs() <= 1e-12);
        prop_assert_eq!(log2_add(x, y), log2_add(y, x));
        prop_assert!(log2_add(x, y) >= x.max(y));
    }

    #[test]
    fn coupled_step_is_a_coupling(a in -3i64..3, b in -3i64..3, c in -3i64..3, d in -3i64..3, q in 0.1f64..0.9) {
        for flavor in [CouplingFlavor::Symmetric, CouplingFlavor::TotallyAsymmetric { q }] {
            let inp = CoupledInputs { a, b, c, d };
            let cells = step_outcomes(&flavor, &inp);
            prop_assert!((cells.iter().map(|c| c.1).sum::<f64>() - 1.0).abs() <= 1e-12);
            let fl = match flavor {
                CouplingFlavor::Symmetric => Flavor::Symmetric,
                CouplingFlavor::TotallyAsymmetric { q } => Flavor::TotallyAsymmetric { q },
            };
            // Marginals: X' from (a, c) and Y' from (b, d) follow one step of the rule.
            for (side, (l, r)) in [(0, (a, c)), (1, (b, d))] {
                let mut law = std::collections::BTreeMap::new();
                for ((xo, yo), w) in &cells {
                    *law.entry(if side == 0 { *xo } else { *yo }).or_insert(0.0) += w;
                }
                let expect = one_step(&fl, l, r);
                for (j, w) in law {
                    prop_assert!((w - expect.get(j)).abs() <= 1e-12);
                }
            }
        }
    }
}

/// Law of one node fed the fixed children `(l, r)`.
fn one_step(flavor: &Flavor, l: i64, r: i64) -> Pmf {
    let steps = match flavor {
        Flavor::TotallyAsymmetric { q } => StepDistribution::bernoulli(*q).unwrap(),
        _ => StepDistribution::symmetric(),
    };
    if l == r {
        Pmf::from_atoms(steps.atoms().iter().map(|&(s, w)| (l + s, w))).unwrap()
    } else {
        Pmf::from_atoms([(l, 0.5), (r, 0.5)]).unwrap()
    }
}
