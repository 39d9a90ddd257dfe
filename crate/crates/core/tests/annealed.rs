use proptest::prelude::*;
use trapwalk::annealed::*;
use trapwalk::stats::Summary;
use trapwalk::walk::*;
use trapwalk::RngStream;

fn ssrw() -> JumpKernel {
    JumpKernel::ssrw()
}

#[test]
fn constant_path_mc_matches_deterministic_solver() {
    let x = LatticePath::constant(0, 8.0);
    let fk = annealed_given_path_fk(&x, 1.0, 1.0, &ssrw(), f64::INFINITY, FkWindow::Fixed { half_width: 32, epsilon: 1e-6 }, 1e-10).unwrap();
    let mc = annealed_given_path_mc(&x, 1.0, 1.0, &ssrw(), f64::INFINITY, 4000, RngStream::new(3, 0)).unwrap();
    assert!(fk.agrees_with(&mc, 3.0), "fk {:?} mc {:?}", fk, mc);
}

#[test]
fn constant_path_decay_grows_like_sqrt_t() {
    let neg_log: Vec<f64> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&t| {
            let x = LatticePath::constant(0, t);
            annealed_given_path_fk(&x, 1.0, 1.0, &ssrw(), f64::INFINITY, FkWindow::Certified { epsilon: 1e-8 }, 1e-10)
                .unwrap()
                .neg_log()
        })
        .collect();
    for w in neg_log.windows(2) {
        let ratio = w[1] / w[0];
        assert!((1.25..=1.60).contains(&ratio), "{neg_log:?}");
    }
}

#[test]
fn three_routes_agree_on_sampled_paths() {
    for (seed, t) in [(1u64, 6.0), (2, 10.0)] {
        let x = sample_path(&ssrw(), 1.0, 0, t, &mut RngStream::new(seed, 0).rng()).unwrap();
        for gamma in [0.5, f64::INFINITY] {
            let fk = annealed_given_path_fk(&x, 1.0, 1.0, &ssrw(), gamma, FkWindow::Certified { epsilon: 1e-6 }, 1e-10).unwrap();
            let mc = annealed_given_path_mc(&x, 1.0, 1.0, &ssrw(), gamma, 4000, RngStream::new(seed, 1)).unwrap();
            let field = annealed_given_path_field(&x, 1.0, 1.0, &ssrw(), gamma, None, 1e-6, 20_000, RngStream::new(seed, 2)).unwrap();
            assert!(fk.agrees_with(&mc, 3.0), "t={t} γ={gamma}: {fk:?} {mc:?}");
            assert!(fk.agrees_with(&field, 3.0), "t={t} γ={gamma}: {fk:?} {field:?}");
            assert!(mc.agrees_with(&field, 3.0), "t={t} γ={gamma}: {mc:?} {field:?}");
        }
    }
}

#[test]
fn two_step_traps_agree_too() {
    let k = JumpKernel::two_step();
    let x = sample_path(&ssrw(), 1.0, 0, 5.0, &mut RngStream::new(9, 0).rng()).unwrap();
    let fk = annealed_given_path_fk(&x, 0.7, 1.3, &k, 1.0, FkWindow::Certified { epsilon: 1e-6 }, 1e-10).unwrap();
    let mc = annealed_given_path_mc(&x, 0.7, 1.3, &k, 1.0, 4000, RngStream::new(9, 1)).unwrap();
    assert!(fk.agrees_with(&mc, 3.0), "{fk:?} {mc:?}");
}

#[test]
fn survival_decreases_along_a_path() {
    let x = sample_path(&ssrw(), 1.0, 0, 12.0, &mut RngStream::new(4, 0).rng()).unwrap();
    let mut last = 0.0;
    for t in [1.0, 3.0, 6.0, 12.0] {
        let z = annealed_given_path_fk(&x.truncate(t), 1.0, 1.0, &ssrw(), 0.5, FkWindow::Certified { epsilon: 1e-8 }, 1e-10).unwrap();
        assert!(z.neg_log() >= last);
        last = z.neg_log();
    }
    let model = Model::ssrw(f64::INFINITY);
    let mut prev: Option<TotalSurvival> = None;
    for t in [4.0, 8.0, 16.0] {
        let z = annealed_total_mc(&model, t, 100, 500, RngStream::new(4, 1)).unwrap();
        if let Some(p) = &prev {
            let se = (p.estimate.log_std_error.powi(2) + z.estimate.log_std_error.powi(2)).sqrt();
            assert!(z.neg_log_z >= p.neg_log_z - 3.0 * se);
        }
        prev = Some(z);
    }
}

#[test]
fn total_survival_routes_agree() {
    let model = Model::ssrw(1.0);
    let mc = annealed_total_mc(&model, 6.0, 300, 2000, RngStream::new(5, 0)).unwrap();
    let fk = annealed_total_fk(&model, 6.0, 300, 1e-6, 1e-9, RngStream::new(5, 0)).unwrap();
    let se = (mc.estimate.log_std_error.powi(2) + fk.estimate.log_std_error.powi(2)).sqrt();
    // Outer paths differ between the two routes, so the comparison is statistical.
    assert!((mc.neg_log_z - fk.neg_log_z).abs() <= 4.0 * se, "{} vs {}", mc.neg_log_z, fk.neg_log_z);
    assert!(mc.neg_log_ci.0 <= mc.neg_log_z && mc.neg_log_z <= mc.neg_log_ci.1);
}

#[test]
fn soft_range_mean_matches_closed_form() {
    let y = sample_path(&ssrw(), 1.0, 0, 30.0, &mut RngStream::new(6, 0).rng()).unwrap();
    let gamma = 0.7;
    let exact = expected_soft_range(&local_time(&y), gamma).unwrap();
    let s = RngStream::new(6, 1);
    let sizes: Summary = (0..10_000u64)
        .map(|i| {
            let clock = SoftClock::sample(gamma, 30.0, &mut s.substream(i).rng()).unwrap();
            soft_range(&y, &clock).unwrap().len() as f64
        })
        .collect();
    assert!((sizes.mean - exact).abs() <= 3.0 * sizes.std_error(), "{} vs {exact}", sizes.mean);
}

#[test]
fn identity_examples() {
    let (l, r) = soft_range_identity_check(&LatticePath::constant(0, 2.0), 1.0).unwrap();
    assert!((l - (-2.0f64).exp()).abs() < 1e-15 && (r - l).abs() < 1e-15);
    let two = LatticePath::from_jumps(0, 2.0, [(1.0, 1)]).unwrap();
    let (l, r) = soft_range_identity_check(&two, 2f64.ln()).unwrap();
    assert!((l - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
}

#[test]
fn strategy_lower_bound_holds_at_small_ball() {
    let k = ssrw();
    let input = StrategyInput {
        radius: 3,
        t: 27.0,
        nu: 1.0,
        rho: 1.0,
        kappa: 1.0,
        walk_kernel: &k,
        trap_kernel: &k,
    };
    let r = strategy_probabilities(&input, 5000, RngStream::new(8, 0)).unwrap();
    let z = annealed_total_mc(&Model::ssrw(f64::INFINITY), 27.0, 200, 1000, RngStream::new(8, 1)).unwrap();
    assert!(r.log_lower_bound.exp() <= z.estimate.value + 3.0 * z.estimate.std_error);
    assert!((r.p_e - (-7.0f64).exp()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_range_is_inside_the_range(seed in any::<u64>(), gamma in 0.05f64..20.0) {
        let s = RngStream::new(seed, 0);
        let y = sample_path(&JumpKernel::one_three(), 1.0, 0, 15.0, &mut s.substream(0).rng()).unwrap();
        let clock = SoftClock::sample(gamma, 15.0, &mut s.substream(1).rng()).unwrap();
        let soft = soft_range(&y, &clock).unwrap();
        let visited: std::collections::BTreeSet<i64> = y.visited().collect();
        prop_assert!(soft.len() <= visited.len());
        prop_assert!(soft.iter().all(|x| visited.contains(x)));
    }
}
