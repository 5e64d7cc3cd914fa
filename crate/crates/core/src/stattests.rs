//! Goodness-of-fit, independence and two-sample tests at level 0.01.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dither::{stream, DOMAIN_TEST};

/// Asymptotic one-sample Kolmogorov-Smirnov constant at level 0.01.
pub const KS_C_001: f64 = 1.628;
/// Two-sided normal quantile at level 0.01.
pub const Z_001: f64 = 2.58;
pub const ENERGY_PERMUTATIONS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub critical: f64,
    pub n: usize,
    pub pass: bool,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, critical: f64, n: usize) -> Self {
        TestReport { name: name.into(), statistic, critical, n, pass: statistic < critical }
    }
}

impl std::fmt::Display for TestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: statistic {:.6e} critical {:.6e} n={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.critical,
            self.n
        )
    }
}

/// One-sample KS statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

pub fn ks_test<F: Fn(f64) -> f64>(name: &str, samples: &[f64], cdf: F) -> TestReport {
    let n = samples.len();
    TestReport::new(name, ks_statistic(samples, cdf), KS_C_001 / (n as f64).sqrt(), n)
}

/// Two-sample KS distance `sup |F_a - F_b|`.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// `|corr(x, y)|` against `2.58/sqrt(n)`. Detects linear dependence only.
pub fn correlation_test(name: &str, x: &[f64], y: &[f64]) -> TestReport {
    let n = x.len();
    TestReport::new(name, pearson(x, y).abs(), Z_001 / (n as f64).sqrt(), n)
}

/// Energy distance between two point clouds of dimension `dim`, stored
/// row-major.
pub fn energy_statistic(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = a.len() / dim;
    let labels: Vec<f64> = (0..pooled.len() / dim).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
    let (q, r, total) = quadratic_forms(&pooled, dim, &labels, 1);
    energy_from_forms(q[0], r[0], total, n, pooled.len() / dim - n)
}

fn energy_from_forms(q: f64, r: f64, total: f64, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let s_xy = r - q;
    let s_yy = total - 2.0 * r + q;
    2.0 * s_xy / (nf * mf) - q / (nf * nf) - s_yy / (mf * mf)
}

/// For each label column `a_p` returns `a_pᵀ D a_p` and `a_pᵀ D 1`, plus
/// `1ᵀ D 1`, where `D` is the Euclidean distance matrix of the pooled points.
/// Labels are stored row-major as `N x cols`.
fn quadratic_forms(z: &[f64], dim: usize, labels: &[f64], cols: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let n = z.len() / dim;
    const BLOCK: usize = 128;
    let mut q = vec![0.0; cols];
    let mut r = vec![0.0; cols];
    let mut total = 0.0;
    let mut dblock = vec![0.0; BLOCK * n];
    let mut prod = vec![0.0; BLOCK * cols];
    let mut start = 0;
    while start < n {
        let rows = BLOCK.min(n - start);
        for i in 0..rows {
            let zi = &z[(start + i) * dim..(start + i + 1) * dim];
            let row = &mut dblock[i * n..(i + 1) * n];
            for (j, slot) in row.iter_mut().enumerate() {
                let zj = &z[j * dim..(j + 1) * dim];
                let mut s = 0.0;
                for k in 0..dim {
                    let d = zi[k] - zj[k];
                    s += d * d;
                }
                *slot = s.sqrt();
            }
        }
        // prod = dblock (rows x n) * labels (n x cols)
        unsafe {
            matrixmultiply::dgemm(
                rows,
                n,
                cols,
                1.0,
                dblock.as_ptr(),
                n as isize,
                1,
                labels.as_ptr(),
                cols as isize,
                1,
                0.0,
                prod.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
        for i in 0..rows {
            let rowsum: f64 = dblock[i * n..(i + 1) * n].iter().sum();
            total += rowsum;
            let li = &labels[(start + i) * cols..(start + i + 1) * cols];
            let pi = &prod[i * cols..(i + 1) * cols];
            for p in 0..cols {
                q[p] += li[p] * pi[p];
                r[p] += li[p] * rowsum;
            }
        }
        start += rows;
    }
    (q, r, total)
}

/// Two-sample energy-distance test with a permutation critical value
/// (200 label permutations, 0.99 quantile). `a`, `b` are row-major clouds.
pub fn energy_distance_test(name: &str, a: &[f64], b: &[f64], dim: usize, seed: u64) -> TestReport {
    assert!(dim > 0 && a.len() % dim == 0 && b.len() % dim == 0);
    let n = a.len() / dim;
    let m = b.len() / dim;
    let total_n = n + m;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let cols = ENERGY_PERMUTATIONS + 1;
    let mut labels = vec![0.0; total_n * cols];
    let mut perm: Vec<usize> = (0..total_n).collect();
    let mut rng = stream(DOMAIN_TEST, seed, n as u64, m as u64, 0);
    for p in 0..cols {
        if p > 0 {
            perm.shuffle(&mut rng);
        }
        for &idx in &perm[..n] {
            labels[idx * cols + p] = 1.0;
        }
    }
    let (q, r, total) = quadratic_forms(&pooled, dim, &labels, cols);
    let observed = energy_from_forms(q[0], r[0], total, n, m);
    let mut null: Vec<f64> = (1..cols).map(|p| energy_from_forms(q[p], r[p], total, n, m)).collect();
    null.sort_by(f64::total_cmp);
    let k = ((0.99 * ENERGY_PERMUTATIONS as f64).ceil() as usize).saturating_sub(1);
    TestReport::new(name, observed, null[k], total_n)
}

/// Runs `f` with the first seed and, on failure, once more with the second.
pub fn with_retry<F: FnMut(u64) -> TestReport>(seeds: [u64; 2], mut f: F) -> TestReport {
    let first = f(seeds[0]);
    if first.pass {
        return first;
    }
    let mut second = f(seeds[1]);
    second.name = format!("{} (retry)", second.name);
    second
}
