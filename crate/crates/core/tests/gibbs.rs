use trapwalk::annealed::{Method, Model};
use trapwalk::gibbs::*;
use trapwalk::stats::{weighted_mann_whitney, Summary};
use trapwalk::walk::{sample_path, sup_norm, JumpKernel};
use trapwalk::RngStream;

fn spec(t: f64, n_paths: usize, weight_method: Method, fields_per_path: u32) -> EnsembleSpec {
    EnsembleSpec {
        t,
        n_paths,
        fields_per_path,
        weight_method,
        window_eps: 1e-6,
    }
}

fn free_sup_norms(t: f64, n: u64, stream: RngStream) -> Vec<f64> {
    (0..n)
        .map(|i| sup_norm(&sample_path(&JumpKernel::ssrw(), 1.0, 0, t, &mut stream.substream(i).rng()).unwrap()))
        .collect()
}

#[test]
fn no_traps_reproduces_the_free_walk() {
    let model = Model { nu: 0.0, ..Model::ssrw(f64::INFINITY) };
    let e = sample_ensemble(&model, &spec(50.0, 4000, Method::FeynmanKac, 1), RngStream::new(1, 0)).unwrap();
    assert!(e.normalized_weights.iter().all(|&w| w == e.normalized_weights[0]));
    assert!((e.ess - 4000.0).abs() < 1e-6);

    let free = free_sup_norms(50.0, 4000, RngStream::new(1, 1));
    let fs: Summary = free.iter().copied().collect();
    let cond = conditioned_statistic(&e, Functional::SupNorm).unwrap();
    let se = (fs.std_error().powi(2) + cond.std_error.powi(2)).sqrt();
    assert!((cond.value - fs.mean).abs() <= 3.0 * se, "{} vs {}", cond.value, fs.mean);

    // Large-fluctuation tail against the free walk.
    let fl = fluctuation_probabilities(&e, 0.3, 0.01).unwrap();
    let hits = free.iter().filter(|&&s| s >= fl.large_threshold).count() as f64;
    let p = hits / free.len() as f64;
    let se = (fl.p_large.std_error.powi(2) + p * (1.0 - p) / free.len() as f64).sqrt();
    assert!((fl.p_large.value - p).abs() <= 3.0 * se, "{:?} vs {p}", fl.p_large);
}

#[test]
fn dense_traps_confine_the_walk() {
    let model = Model { nu: 4.0, ..Model::ssrw(f64::INFINITY) };
    let e = sample_ensemble(&model, &spec(4.0, 2000, Method::FeynmanKac, 1), RngStream::new(2, 0)).unwrap();
    let cond: Vec<f64> = e.paths.iter().map(sup_norm).collect();
    let free = free_sup_norms(4.0, 2000, RngStream::new(2, 1));
    let mw = weighted_mann_whitney(&cond, &e.normalized_weights, &free, &vec![1.0; free.len()]);
    assert!(mw.z > 3.0, "{mw:?}");
}

#[test]
fn weight_methods_agree() {
    let model = Model::ssrw(f64::INFINITY);
    let s = RngStream::new(3, 0);
    let fk = sample_ensemble(&model, &spec(6.0, 3000, Method::FeynmanKac, 1), s).unwrap();
    let field = sample_ensemble(&model, &spec(6.0, 3000, Method::FieldMc, 16), s).unwrap();
    assert_eq!(fk.paths, field.paths);
    let a = conditioned_statistic(&fk, Functional::SupNorm).unwrap();
    let b = conditioned_statistic(&field, Functional::SupNorm).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 3.0 * se, "{a:?} vs {b:?}");
}

#[test]
fn refining_fields_is_consistent() {
    let model = Model::ssrw(1.0);
    let s = RngStream::new(4, 0);
    let coarse = sample_ensemble(&model, &spec(8.0, 2000, Method::FieldMc, 4), s).unwrap();
    let fine = sample_ensemble(&model, &spec(8.0, 2000, Method::FieldMc, 8), s).unwrap();
    for f in [Functional::SupNorm, Functional::HoleVolume, Functional::FGamma(1.0)] {
        let a = conditioned_statistic(&coarse, f).unwrap();
        let b = conditioned_statistic(&fine, f).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= 3.0 * se, "{f:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn hard_field_weights_count_surviving_fields() {
    let fields = 5;
    let e = sample_ensemble(&Model::ssrw(f64::INFINITY), &spec(5.0, 300, Method::FieldMc, fields), RngStream::new(5, 0)).unwrap();
    for w in e.raw_weights() {
        assert!(w >= 0.0);
        let k = w * fields as f64;
        assert!((k - k.round()).abs() < 1e-9, "{w}");
    }
}

#[test]
fn ensembles_are_reproducible() {
    let model = Model::ssrw(0.5);
    let sp = spec(10.0, 200, Method::FeynmanKac, 1);
    let a = sample_ensemble(&model, &sp, RngStream::new(6, 0)).unwrap();
    let b = sample_ensemble(&model, &sp, RngStream::new(6, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        conditioned_statistic(&a, Functional::ThinCount(1.0)).unwrap(),
        conditioned_statistic(&b, Functional::ThinCount(1.0)).unwrap()
    );
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_csv(&mut ca, 0.5).unwrap();
    b.write_csv(&mut cb, 0.5).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn escalation_reaches_target() {
    let policy = EscalationPolicy { n_paths: 200, target_ess: 50.0, ..EscalationPolicy::default() };
    let (e, steps) = sample_ensemble_auto(&Model::ssrw(f64::INFINITY), 20.0, &policy, RngStream::new(7, 0)).unwrap();
    assert!(e.ess >= 50.0, "{steps:?}");
    assert!(!e.low_ess);
    assert_eq!(steps.last().unwrap().ess, e.ess);
    assert_eq!(conditioned_statistic(&e, Functional::One).unwrap().value, 1.0);
}
