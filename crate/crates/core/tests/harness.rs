use trapwalk::harness::*;
use trapwalk::stats::ols;
use trapwalk::walk::*;
use trapwalk::RngStream;

#[test]
fn threshold_above_horizon_counts_the_range() {
    let s = RngStream::new(1, 0);
    for i in 0..200 {
        let p = sample_path(&JumpKernel::two_step(), 1.0, 0, 25.0, &mut s.substream(i).rng()).unwrap();
        let prof = local_time(&p);
        assert_eq!(thin_count(&prof, 25.0).unwrap() as u64, range_stats(&p).size);
    }
    let r = thin_tail_experiment(&JumpKernel::ssrw(), 1.0, 25.0, 25.0, 1.0, 2000, s.substream(1000)).unwrap();
    assert!(r.monotone);
    assert_eq!(r.linkage_violations, 0);
}

#[test]
fn short_horizons_have_at_most_one_thin_point() {
    for t in [0.0, 1e-9] {
        let r = thin_tail_experiment(&JumpKernel::ssrw(), 1.0, t, 1.0, 1.0, 10_000, RngStream::new(2, 0)).unwrap();
        assert!(r.thresholds.iter().all(|&a| a <= 1.0), "t = {t}: {:?}", r.thresholds);
    }
}

#[test]
fn thin_tail_decays_linearly() {
    let r = thin_tail_experiment(&JumpKernel::ssrw(), 1.0, 100.0, 1.0, 1.0, 100_000, RngStream::new(3, 0)).unwrap();
    assert!(r.verdict, "{r:?}");
    let (x, y): (Vec<f64>, Vec<f64>) = r
        .thresholds
        .iter()
        .zip(&r.empirical_log_tail)
        // Beyond a = 20 the tail is below 1e-5 and has no samples.
        .filter(|(a, l)| **a >= 10.0 && l.is_finite())
        .map(|(a, l)| (*a, *l))
        .unzip();
    let fit = ols(&x, &y).expect("tail points beyond 10");
    assert!(fit.slope + 1.96 * fit.slope_se < 0.0, "{fit:?}");
}

#[test]
fn local_time_functional_moments_stay_bounded() {
    let table = exp_moment_experiment(
        MomentFunctional::FGamma(1.0),
        &JumpKernel::ssrw(),
        1.0,
        0.05,
        &[1e2, 1e3, 1e4],
        2000,
        10.0,
        RngStream::new(4, 0),
    )
    .unwrap();
    assert!(!table.exploded);
    assert!(table.max_estimate <= 10.0, "{table:?}");
}

#[test]
fn local_time_ratio_approaches_one() {
    let s = RngStream::new(5, 0);
    let rows: Vec<LocalTimeRatio> = [50.0, 100.0, 200.0]
        .iter()
        .enumerate()
        .map(|(k, &t)| local_time_zero_check(&JumpKernel::ssrw(), 1.0, 1.0, t, 200_000, s.substream(k as u64)).unwrap())
        .collect();
    for w in rows.windows(2) {
        let slack = 3.0 * (w[0].ratio_se.powi(2) + w[1].ratio_se.powi(2)).sqrt();
        assert!((w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs() + slack, "{rows:?}");
    }
}

#[test]
fn hitting_statistic_is_bounded_on_the_grid() {
    let table =
        hitting_tail_check(&JumpKernel::ssrw(), 1.0, 5, &[25.0, 100.0, 400.0], 20_000, 2.0, RngStream::new(6, 0)).unwrap();
    assert!(table.bounded, "{table:?}");
    let near = hitting_tail_check(&JumpKernel::ssrw(), 1.0, 1, &[1e-6], 1000, 2.0, RngStream::new(6, 1)).unwrap();
    assert!(near.rows[0].probability > 0.99);
}

#[test]
fn reports_are_deterministic() {
    let run = || thin_tail_experiment(&JumpKernel::one_three(), 1.0, 30.0, 0.5, 2.0, 3000, RngStream::new(7, 0)).unwrap();
    assert_eq!(run(), run());
}
