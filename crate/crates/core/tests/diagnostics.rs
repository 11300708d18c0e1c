use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use steinflow::diagnostics::{first_below, format_float, KlMethod, MetricRecord, METRICS_SCHEMA};
use steinflow::{kl_estimate, TargetSpec};

fn samples(n: usize, d: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

fn std_normal(d: usize) -> TargetSpec {
    TargetSpec::gaussian(DVector::zeros(d), DMatrix::identity(d, d)).unwrap()
}

#[test]
fn gaussian_fit_kl_of_wide_sample() {
    let x = samples(10_000, 1, 2.0f64.sqrt(), 1);
    let kl = kl_estimate(&x, &std_normal(1), KlMethod::GaussianFit, 0).unwrap();
    let exact = 0.5 * (2.0 - 1.0 - 2.0f64.ln());
    assert!((kl.value - exact).abs() < 0.02, "{}", kl.value);
    assert!(!kl.regularized);
}

#[test]
fn kde_agrees_with_gaussian_fit() {
    let x = samples(500, 2, 1.5, 2);
    let t = std_normal(2);
    let fit = kl_estimate(&x, &t, KlMethod::GaussianFit, 0).unwrap().value;
    let kde = kl_estimate(&x, &t, KlMethod::Kde, 0).unwrap().value;
    assert!((fit - kde).abs() < 0.1, "fit {fit} kde {kde}");
}

#[test]
fn kde_is_seed_deterministic() {
    let x = samples(100, 2, 1.0, 3);
    let t = std_normal(2);
    let a = kl_estimate(&x, &t, KlMethod::Kde, 9).unwrap();
    let b = kl_estimate(&x, &t, KlMethod::Kde, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gaussian_fit_needs_gaussian_target() {
    let t = TargetSpec::custom(Some(1), |x| x[0] * x[0], |x| vec![2.0 * x[0]]);
    assert!(kl_estimate(&samples(10, 1, 1.0, 0), &t, KlMethod::GaussianFit, 0).is_err());
    assert_eq!(KlMethod::default_for(&t), KlMethod::Kde);
    assert_eq!(KlMethod::default_for(&std_normal(1)), KlMethod::GaussianFit);
}

#[test]
fn method_names_round_trip() {
    for name in KlMethod::NAMES {
        assert_eq!(KlMethod::parse(name).unwrap().name(), name);
    }
    assert!(KlMethod::parse("histogram").is_err());
}

#[test]
fn metrics_csv_layout() {
    let rec = |iteration, kl| MetricRecord {
        iteration,
        kl_estimate: kl,
        mean: DVector::from_vec(vec![0.5, -1.0]),
        cov: DMatrix::identity(2, 2),
        grad_restart_stat: 0.0,
        mean_speed: 0.25,
        kl_regularized: false,
    };
    let records = vec![rec(0, 1.0), rec(10, 0.04)];
    let mut buf = Vec::new();
    MetricRecord::write_csv(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], METRICS_SCHEMA);
    assert_eq!(lines[1].split(',').count(), lines[3].split(',').count());
    assert!(lines[3].starts_with(&format!("10,{},", format_float(0.04))));
    assert!(lines[3].ends_with(",0"));
    assert_eq!(first_below(&records, 0.05), Some(10));
    assert_eq!(first_below(&records, 0.01), None);
}
