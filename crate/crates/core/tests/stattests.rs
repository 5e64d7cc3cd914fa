use jopeq::dither::{stream, DOMAIN_TEST};
use jopeq::privacy::MechanismSpec;
use jopeq::stattests::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn ks_null_and_alternative() {
    let mut rng = stream(DOMAIN_TEST, 1, 0, 0, 0);
    let u: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let r = ks_test("uniform", &u, |x| x.clamp(0.0, 1.0));
    assert!(r.pass, "{r}");
    assert!((r.critical - 1.628 / (100_000f64).sqrt()).abs() < 1e-15);
    let g: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    assert!(!ks_test("normal vs uniform", &g, |x| x.clamp(0.0, 1.0)).pass);
    assert!(ks_test("normal", &g, normal_cdf).pass);
}

#[test]
fn ks_statistic_by_hand() {
    // sorted: 0.1 0.4 0.45 0.9; ECDF steps 0.25 .. 1.0
    // deviations: max(0.25-0.1, 0.1) max(0.5-0.4, 0.4-0.25) max(0.75-0.45, 0.45-0.5) max(1-0.9, 0.9-0.75)
    let d = ks_statistic(&[0.9, 0.1, 0.45, 0.4], |x| x);
    assert!((d - 0.3).abs() < 1e-15);
}

#[test]
fn two_sample_ks() {
    assert_eq!(ks_two_sample_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
    assert_eq!(ks_two_sample_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
}

#[test]
fn correlation_examples() {
    let mut rng = stream(DOMAIN_TEST, 2, 0, 0, 0);
    let x: Vec<f64> = (0..50_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..50_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    assert!(correlation_test("independent", &x, &y).pass);
    assert!(!correlation_test("identical", &x, &x).pass);
    let u: Vec<f64> = (0..50_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    // linear test only: a deterministic but even dependence goes unseen
    assert!(correlation_test("square", &u, &sq).pass);
    assert!((correlation_test("c", &x, &y).critical - 2.58 / (50_000f64).sqrt()).abs() < 1e-15);
}

fn t_cloud(n: usize, seed: u64) -> Vec<f64> {
    let spec = MechanismSpec::multivariate_t(3.0, 2, 3.0).unwrap();
    let mut rng = stream(DOMAIN_TEST, seed, 0, 0, 0);
    (0..n).flat_map(|_| spec.sample_direct(&mut rng)).collect()
}

#[test]
fn energy_examples() {
    let a = t_cloud(4000, 3);
    assert!(energy_statistic(&a, &a, 2).abs() < 1e-9);
    let (h1, h2) = a.split_at(4000);
    assert!(energy_distance_test("halves", h1, h2, 2, 1).pass);
}

#[test]
fn energy_detects_t_versus_gaussian() {
    let n = 10_000;
    let spec = MechanismSpec::multivariate_t(3.0, 2, 3.0).unwrap();
    let a = t_cloud(n, 4);
    let sd = spec.variance_per_coordinate().sqrt();
    let mut rng = stream(DOMAIN_TEST, 5, 0, 0, 0);
    let b: Vec<f64> = (0..2 * n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }).collect();
    let r = energy_distance_test("t vs gaussian", &a, &b, 2, 2);
    assert!(!r.pass, "{r}");
}

#[test]
fn permutation_test_is_deterministic() {
    let a = t_cloud(500, 6);
    let b = t_cloud(500, 7);
    assert_eq!(energy_distance_test("x", &a, &b, 2, 9), energy_distance_test("x", &a, &b, 2, 9));
}

#[test]
fn retry_uses_second_seed_only_on_failure() {
    let mut seen = Vec::new();
    let r = with_retry([1, 2], |s| {
        seen.push(s);
        TestReport::new("t", if s == 1 { 2.0 } else { 0.5 }, 1.0, 10)
    });
    assert!(r.pass);
    assert_eq!(seen, vec![1, 2]);
    assert!(r.name.contains("retry"));
    let mut calls = 0;
    with_retry([1, 2], |_| {
        calls += 1;
        TestReport::new("t", 0.0, 1.0, 10)
    });
    assert_eq!(calls, 1);
}

#[test]
fn report_pass_is_strict_inequality() {
    assert!(!TestReport::new("eq", 1.0, 1.0, 1).pass);
    assert!(TestReport::new("lt", 0.999, 1.0, 1).pass);
}
