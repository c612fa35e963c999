//! Cross-module invariants on randomly drawn pages larger than the
//! exhaustive-search range, using the layered network as the exact optimum.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ias_core::dual_solver::{solve_on_samples, volume_draws, DualConfig, SampleSet};
use ias_core::flow_oracle::{
    build_col_sparse_network, build_layout_network, build_row_sparse_network, network_optimum, objectives_equal,
};
use ias_core::mechanisms::{allocate, allocation_objective, MechanismSpec, Tradeoff};
use ias_core::model::{validate_allocation, BidProfile, LayoutConstraints, Scenario};
use ias_core::rng::mean_se;
use ias_core::simulation::experiments::sweep_alpha;
use ias_core::simulation::{SmallInstance, SyntheticFamily};

fn medium(seed: u64) -> (Scenario, BidProfile) {
    let gen = SmallInstance {
        max_ads: 8,
        max_organics: 10,
        max_slots: 8,
        organics_fill_page: true,
    };
    gen.draw(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn layout(family: usize, k: usize, c: usize, l: usize) -> LayoutConstraints {
    let (c, l) = (c.clamp(1, k), l.clamp(1, k));
    match family {
        0 => LayoutConstraints::None,
        1 => LayoutConstraints::Budget { c },
        2 => LayoutConstraints::RowSparse { c, l },
        _ => LayoutConstraints::ColumnSparse { c, l },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn unconstrained_and_budget_greedy_are_exact(seed in any::<u64>(), budget in any::<bool>(), c in 1usize..8, lambda in 0.0f64..5.0) {
        let (s, p) = medium(seed);
        let layout = layout(usize::from(budget), s.num_slots(), c, 1);
        let spec = MechanismSpec::new(layout, Tradeoff::Lambda(lambda)).unwrap();
        let greedy = allocation_objective(&s, &p, lambda, &allocate(&s, &p, &spec).unwrap());
        let exact = network_optimum(&build_layout_network(&s, &p, lambda, &layout).unwrap()).unwrap().0;
        prop_assert!(objectives_equal(greedy, exact), "{} vs {}", greedy, exact);
    }

    #[test]
    fn sparse_pages_are_feasible_and_bounded(seed in any::<u64>(), column in any::<bool>(), c in 1usize..8, l in 1usize..8, lambda in 0.0f64..5.0) {
        let (s, p) = medium(seed);
        let k = s.num_slots();
        let layout = layout(if column { 3 } else { 2 }, k, c, l);
        let spec = MechanismSpec::new(layout, Tradeoff::Lambda(lambda)).unwrap();
        let alloc = allocate(&s, &p, &spec).unwrap();
        prop_assert!(validate_allocation(&s, &alloc, &layout).is_valid());
        let greedy = allocation_objective(&s, &p, lambda, &alloc);
        let exact = network_optimum(&build_layout_network(&s, &p, lambda, &layout).unwrap()).unwrap().0;
        let tol = 1e-9 * exact.abs().max(1.0);
        prop_assert!(greedy <= exact + tol);
        let gadget = match layout {
            LayoutConstraints::RowSparse { c, l } => build_row_sparse_network(&s, &p, lambda, c, l),
            LayoutConstraints::ColumnSparse { c, l } => build_col_sparse_network(&s, &p, lambda, c, l),
            _ => unreachable!(),
        };
        prop_assert!(network_optimum(&gadget.unwrap()).unwrap().0 >= exact - tol);
    }

    #[test]
    fn solved_floor_is_met(seed in 0u64..1000, frac in 0.0f64..1.0) {
        let fam = SyntheticFamily { slots: 6, ads: 4, organics: 8, ..SyntheticFamily::default() };
        let s = fam.generate(seed).unwrap();
        let config = DualConfig { mc_samples: 40, seed, ..DualConfig::default() };
        let samples = SampleSet::draw(&s, 40, seed);
        let layout = LayoutConstraints::None;
        let top_spec = MechanismSpec::new(layout, Tradeoff::Alpha(0.0)).unwrap();
        let top = mean_se(&volume_draws(&s, &samples, &top_spec).unwrap()).0;
        let r = solve_on_samples(&s, &layout, frac * top, &samples, &config).unwrap();
        prop_assert!(r.feasible && r.volume >= frac * top);
        prop_assert!((r.alpha - 1.0 / (1.0 + r.lambda)).abs() < 1e-15 || r.lambda.is_infinite());
    }

    #[test]
    fn alpha_sweep_trades_volume_for_surplus(seed in 0u64..1000) {
        let fam = SyntheticFamily { slots: 5, ads: 4, organics: 6, ..SyntheticFamily::default() };
        let s = fam.generate(seed).unwrap();
        let alphas: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
        let pts = sweep_alpha(&s, &LayoutConstraints::None, &alphas, 60, seed).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].mean_virtual_surplus >= w[0].mean_virtual_surplus);
            prop_assert!(w[1].curve.mean_gmv <= w[0].curve.mean_gmv);
        }
        prop_assert!(pts.iter().all(|p| p.curve.se_gmv >= 0.0 && p.curve.se_revenue >= 0.0));
    }
}
