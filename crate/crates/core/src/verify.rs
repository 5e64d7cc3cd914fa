//! Acceptance suite: one function per criterion, each returning the
//! statistical reports it is judged on together with its runtime budget.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode, Baseline, Dither};
use crate::config::ExperimentConfig;
use crate::dither::{dither_for, sdq, stream, SharedRandomness, DOMAIN_DATA, DOMAIN_PRIVATE};
use crate::error::Result;
use crate::flsim::{Experiment, StepSchedule, TaskKind};
use crate::lattice::{Lattice, LatticeFamily};
use crate::privacy::{
    build_ppn_sampler, laplace_cdf, required_ppn_variance, Admission, MechanismSpec, SamplerOptions,
};
use crate::stattests::{correlation_test, energy_distance_test, ks_test, pearson, with_retry, TestReport};
use crate::sweep::{run_sweep, snr_sweep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub reports: Vec<TestReport>,
    pub notes: Vec<String>,
    pub elapsed_s: f64,
    pub budget_s: f64,
}

impl CriterionOutcome {
    pub fn within_budget(&self) -> bool {
        self.elapsed_s <= self.budget_s
    }

    pub fn pass(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(|r| r.pass) && self.within_budget()
    }

    /// One-line verdict.
    pub fn line(&self) -> String {
        format!(
            "criterion {} {} ({:.1} s of {:.0} s): {}",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.elapsed_s,
            self.budget_s,
            self.title
        )
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.line())?;
        for r in &self.reports {
            writeln!(f, "    {r}")?;
        }
        for n in &self.notes {
            writeln!(f, "    note: {n}")?;
        }
        Ok(())
    }
}

/// Pass iff `value <= limit`.
fn at_most(name: &str, value: f64, limit: f64, n: usize) -> TestReport {
    let mut r = TestReport::new(name, value, limit, n);
    r.pass = value <= limit;
    r
}

fn timed<F: FnOnce(&mut Vec<String>) -> Result<Vec<TestReport>>>(id: u8, title: &str, budget_s: f64, f: F) -> CriterionOutcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let reports = match f(&mut notes) {
        Ok(r) => r,
        Err(e) => {
            notes.push(format!("error: {e}"));
            vec![TestReport { name: "completed".into(), statistic: 1.0, critical: 0.0, n: 0, pass: false }]
        }
    };
    CriterionOutcome {
        id,
        title: title.into(),
        reports,
        notes,
        elapsed_s: start.elapsed().as_secs_f64(),
        budget_s,
    }
}

fn retry_seeds(seed: u64) -> [u64; 2] {
    [seed, seed.wrapping_add(0x5eed)]
}

/// Quantization error is uniform on the cell and uncorrelated with the input.
pub fn criterion1(seed: u64) -> CriterionOutcome {
    timed(1, "SDQ error is Uniform(-1/2, 1/2) and uncorrelated with the input", 10.0, |notes| {
        let lat = Lattice::scalar_uniform(128.0, 8);
        let n = 100_000;
        let mut out = Vec::new();
        let mut overloads = 0usize;
        for (name, kind) in [("gaussian", 0u64), ("uniform", 1), ("constant", 2)] {
            let run = |s: u64, overloads: &mut usize| -> (Vec<f64>, Vec<f64>) {
                let mut rng = stream(DOMAIN_DATA, s, kind, 0, 0);
                let sr = SharedRandomness::new(s, kind, 1);
                let mut xs = Vec::with_capacity(n);
                let mut es = Vec::with_capacity(n);
                for i in 0..n {
                    let x = match kind {
                        0 => 10.0 * rng.sample::<f64, _>(StandardNormal),
                        1 => rng.random_range(-50.0..50.0),
                        _ => 3.7,
                    };
                    let d = dither_for(&sr, i as u64, &lat);
                    let q = sdq(&lat, &[x], &d).expect("scalar lattice");
                    *overloads += q.overloaded as usize;
                    xs.push(x);
                    es.push(q.value[0] - x);
                }
                (xs, es)
            };
            out.push(with_retry(retry_seeds(seed), |s| {
                let (_, es) = run(s, &mut overloads);
                ks_test(&format!("KS {name} input vs U(-1/2,1/2)"), &es, |e| (e + 0.5).clamp(0.0, 1.0))
            }));
            if kind == 2 {
                notes.push("correlation is undefined for the constant input".into());
            } else {
                out.push(with_retry(retry_seeds(seed), |s| {
                    let (xs, es) = run(s, &mut overloads);
                    at_most(&format!("|corr| {name} input vs error"), pearson(&xs, &es).abs(), 0.01, n)
                }));
                let (xs, es) = run(seed, &mut overloads);
                notes.push(format!("{}", correlation_test(&format!("2.58/sqrt(n) level, {name}"), &xs, &es)));
            }
        }
        out.push(at_most("overloaded operations", overloads as f64, 0.0, 3 * n));
        Ok(out)
    })
}

/// Scaled end-to-end distortions `ζ(h̃ − h)` of `count` updates of length
/// `dim`, with the total overload count.
fn joint_distortions(
    lat: &Lattice,
    spec: &MechanismSpec,
    opts: &SamplerOptions,
    count: usize,
    dim: usize,
    seed: u64,
) -> Result<(Vec<f64>, u64)> {
    let sampler = build_ppn_sampler(spec, lat, opts)?;
    let mut out = Vec::with_capacity(count * dim);
    let mut overloads = 0u64;
    for u in 0..count {
        let mut data = stream(DOMAIN_DATA, seed, u as u64, 0, 0);
        let h: Vec<f64> = (0..dim).map(|_| data.sample(StandardNormal)).collect();
        let dither = Dither::Shared(SharedRandomness::new(seed, u as u64, 0));
        let mut private = stream(DOMAIN_PRIVATE, seed, u as u64, 0, 0);
        let enc = encode(&h, lat, Some(&sampler), &dither, &mut private)?;
        overloads += enc.overloads as u64;
        let ht = decode(&enc, lat, &dither)?;
        out.extend(h.iter().zip(&ht).map(|(a, b)| enc.zeta * (b - a)));
    }
    Ok((out, overloads))
}

/// Scalar joint scheme realizes the Laplace mechanism.
pub fn criterion2(seed: u64) -> CriterionOutcome {
    timed(2, "joint scheme (L=1, R=4, eps=1) distortion is Laplace(0, 2) with zero overloads", 30.0, |notes| {
        let eps = 1.0;
        let rate = 4;
        let lat = Lattice::new(LatticeFamily::Scalar, 2.0 * rate as f64 + 1.0 / eps, rate)?;
        let spec = MechanismSpec::laplace(eps, 1)?;
        let opts = SamplerOptions::default();
        let b = spec.laplace_scale();
        let mut overloads = 0;
        let ks = with_retry(retry_seeds(seed), |s| match joint_distortions(&lat, &spec, &opts, 100, 1000, s) {
            Ok((e, o)) => {
                overloads = o;
                ks_test("KS scaled distortion vs Laplace(0, 2)", &e, |x| laplace_cdf(x, b))
            }
            Err(err) => TestReport::new(format!("sampler: {err}"), 1.0, 0.0, 0),
        });
        notes.push(format!("overload rate {:.3e} over 1e5 coordinates", overloads as f64 / 1e5));
        Ok(vec![ks, at_most("overloaded coordinates", overloads as f64, 0.0, 100_000)])
    })
}

/// Rate used for the two-dimensional joint-scheme check.
pub const CRITERION3_RATE: u32 = 6;

/// Hexagonal joint scheme realizes the multivariate t mechanism.
pub fn criterion3(seed: u64) -> CriterionOutcome {
    timed(3, "joint scheme (hexagonal L=2, nu=3, eps=3) distortion is t_3(0, s^2 I)", 120.0, |notes| {
        let spec = MechanismSpec::multivariate_t(3.0, 2, 3.0)?;
        let gamma = 1.5 * (1.0 + spec.variance_per_coordinate());
        let lat = Lattice::new(LatticeFamily::Hexagonal, gamma, CRITERION3_RATE)?;
        let opts = SamplerOptions::default();
        let s = spec.scale2.sqrt();
        notes.push(format!("s^2 = {:.10}, gamma = {gamma:.4}, R = {CRITERION3_RATE}", spec.scale2));
        let mut overloads = 0;
        let report = with_retry(retry_seeds(seed), |sd| match joint_distortions(&lat, &spec, &opts, 10, 2000, sd) {
            Ok((e, o)) => {
                overloads = o;
                let a: Vec<f64> = e.iter().map(|v| v / s).collect();
                let mut rng = stream(DOMAIN_PRIVATE, sd, u64::MAX, 0, 0);
                let b: Vec<f64> = (0..a.len() / 2).flat_map(|_| spec.sample_direct(&mut rng)).map(|v| v / s).collect();
                energy_distance_test("energy distance whitened distortion vs direct t_3", &a, &b, 2, sd)
            }
            Err(err) => TestReport::new(format!("sampler: {err}"), 1.0, 0.0, 0),
        });
        notes.push(format!("{overloads} overloaded sub-vectors of 10000"));
        Ok(vec![report])
    })
}

/// The privacy-quantization threshold `γε/2^R = √24` on the scalar lattice.
pub fn criterion4(_seed: u64) -> CriterionOutcome {
    timed(4, "PPN variance vanishes at gamma*eps/2^R = sqrt(24)", 1.0, |notes| {
        let eps = 1.0;
        let rate = 4;
        let spec = MechanismSpec::laplace(eps, 1)?;
        let threshold = 24f64.sqrt() * 2f64.powi(rate as i32) / eps;
        let mut out = Vec::new();
        let lat = Lattice::new(LatticeFamily::Scalar, threshold, rate)?;
        out.push(at_most("|required PPN variance| at threshold", required_ppn_variance(&spec, &lat).abs(), 1e-10, 1));
        let degenerate = SamplerOptions::with_admission(Admission::AllowDegenerate);
        for factor in [1.0, 1.25, 2.0] {
            let lat = Lattice::new(LatticeFamily::Scalar, threshold * factor, rate)?;
            let ok = matches!(build_ppn_sampler(&spec, &lat, &degenerate), Ok(s) if s.is_degenerate());
            out.push(at_most(&format!("degenerate-path failures at {factor} x threshold"), (!ok) as u8 as f64, 0.0, 1));
        }
        for factor in [0.9, 0.75] {
            let lat = Lattice::new(LatticeFamily::Scalar, threshold * factor, rate)?;
            let res = build_ppn_sampler(&spec, &lat, &SamplerOptions::default());
            if let Err(e) = &res {
                notes.push(format!("{factor} x threshold: {}", e.to_string().lines().next().unwrap_or("")));
            }
            out.push(at_most(&format!("strict-path acceptances at {factor} x threshold"), res.is_ok() as u8 as f64, 0.0, 1));
        }
        Ok(out)
    })
}

/// Reference configuration for the bound checks (criteria 5, 6).
pub fn bound_config(schedule: StepSchedule, rounds: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig { schedule, rounds, ..Default::default() };
    c.task.kind = TaskKind::Linear;
    c
}

/// Weights distortion stays below its bound.
pub fn criterion5(seed: u64) -> CriterionOutcome {
    timed(5, "mean weights distortion <= distortion bound (linear, K=10, tau=4, eta=0.05)", 120.0, |notes| {
        let mut cfg = bound_config(StepSchedule::Fixed(0.05), 200);
        cfg.seed = seed;
        let exp = Experiment::new(&cfg.base_fl_config()?)?;
        let m = exp.run()?;
        let mut worst: f64 = f64::NEG_INFINITY;
        let (mut s1, mut s2) = (0.0, 0.0);
        for (i, r) in m.iter().enumerate() {
            s1 += r.distortion;
            s2 += r.distortion * r.distortion;
            let n = (i + 1) as f64;
            if (i + 1) % 20 == 0 {
                let mean = s1 / n;
                let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
                worst = worst.max((mean - 2.0 * se) / r.distortion_bound);
                if i + 1 == m.len() {
                    notes.push(format!("mean {mean:.4e}, standard error {se:.2e}, bound {:.4e}", r.distortion_bound));
                }
            }
        }
        Ok(vec![at_most("max over checkpoints of (mean - 2 SE) / bound", worst, 1.0, m.len())])
    })
}

/// Rounds and replicates of the convergence check.
pub const CRITERION6_ROUNDS: usize = 2500;
pub const CRITERION6_REPLICATES: u64 = 20;

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Replicate-mean metric per round.
fn mean_curve(exp: &Experiment, seeds: &[u64], pick: fn(&crate::flsim::RoundMetrics) -> f64) -> Result<Vec<f64>> {
    let runs: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| Ok(exp.run_with_seed(s)?.iter().map(pick).collect()))
        .collect();
    let mut acc = vec![0.0; exp.cfg.rounds];
    for r in runs {
        for (a, v) in acc.iter_mut().zip(r?) {
            *a += v / seeds.len() as f64;
        }
    }
    Ok(acc)
}

/// Loss gap under the decaying step size stays below its bound and decays as 1/t.
pub fn criterion6(seed: u64) -> CriterionOutcome {
    timed(6, "mean loss gap <= convergence bound and O(1/t) rate (decaying step)", 300.0, |notes| {
        let cfg = bound_config(StepSchedule::Decaying, CRITERION6_ROUNDS);
        let exp = Experiment::new(&cfg.base_fl_config()?)?;
        let seeds: Vec<u64> = (0..CRITERION6_REPLICATES).map(|i| seed.wrapping_add(i)).collect();
        let gap = mean_curve(&exp, &seeds, |m| m.loss_gap)?;
        let reference = exp.run_with_seed(seed)?;
        let worst = gap.iter().zip(&reference).map(|(g, m)| g / m.convergence_bound).fold(f64::NEG_INFINITY, f64::max);
        let lo = CRITERION6_ROUNDS / 10 - 1;
        let t: Vec<f64> = reference[lo..].iter().map(|m| m.t as f64).collect();
        let slope = log_log_slope(&t, &gap[lo..]);
        notes.push(format!("final-decade slope {slope:.4}, final mean gap {:.4e}", gap[gap.len() - 1]));
        Ok(vec![
            at_most("max over rounds of mean gap / bound", worst, 1.0, gap.len()),
            at_most("slope above -0.7", slope, -0.7, t.len()),
            at_most("slope below -1.3", -slope, 1.3, t.len()),
        ])
    })
}

/// Low-rate advantage of the joint scheme over separate privatization and quantization.
pub fn criterion7(seed: u64) -> CriterionOutcome {
    timed(7, "SNR versus rate: joint scheme gains at low rate, flat in R", 600.0, |notes| {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.sweep.baselines = vec![Baseline::Separate, Baseline::Jopeq];
        let pts = snr_sweep(&cfg)?;
        let get = |eps: f64, r: u32, b: Baseline| {
            pts.iter().find(|p| p.epsilon == eps && p.rate == r && p.baseline == b).map(|p| p.snr_db).unwrap_or(f64::NAN)
        };
        let mut out = Vec::new();
        for &eps in &cfg.sweep.epsilons {
            let gap: Vec<f64> = (1..=8).map(|r| get(eps, r, Baseline::Jopeq) - get(eps, r, Baseline::Separate)).collect();
            notes.push(format!(
                "eps {eps}: gap by rate [{}]",
                gap.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", ")
            ));
            let neg = -gap[0].min(gap[1]);
            out.push(at_most(&format!("eps {eps}: -min gap at R=1,2"), neg, 0.0, 2));
            let rise = gap.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            out.push(at_most(&format!("eps {eps}: largest gap increase in R"), rise, 0.0, 8));
            let joint = (get(eps, 1, Baseline::Jopeq) - get(eps, 4, Baseline::Jopeq)).abs();
            out.push(TestReport::new(format!("eps {eps}: joint |SNR(1) - SNR(4)| dB"), joint, 3.0, 2));
            let sep = (get(eps, 1, Baseline::Separate) - get(eps, 4, Baseline::Separate)).abs();
            out.push(TestReport::new(format!("eps {eps}: 3 - separate |SNR(1) - SNR(4)| dB"), 3.0 - sep, 0.0, 2));
        }
        Ok(out)
    })
}

pub const CRITERION8_ROUNDS: usize = 2000;
pub const CRITERION8_REPLICATES: u64 = 60;

/// Final logistic-regression loss gaps at R=1, ε=4.
pub fn criterion8(seed: u64) -> CriterionOutcome {
    timed(8, "logistic FL at R=1, eps=4: joint scheme near the single-purpose baselines", 600.0, |notes| {
        let mut cfg = ExperimentConfig { rounds: CRITERION8_ROUNDS, ..Default::default() };
        cfg.task.kind = TaskKind::Logistic;
        let seeds: Vec<u64> = (0..CRITERION8_REPLICATES).map(|i| seed.wrapping_add(i)).collect();
        let mut finals = Vec::new();
        for b in [Baseline::SdqOnly, Baseline::PpnOnly, Baseline::Separate, Baseline::Jopeq] {
            let exp = Experiment::new(&cfg.fl_config(LatticeFamily::Scalar, 1, 4.0, b)?)?;
            let per_seed: Vec<Result<f64>> = seeds
                .par_iter()
                .map(|&s| {
                    let m = exp.run_with_seed(s)?;
                    Ok(m[m.len() - 10..].iter().map(|r| r.loss_gap).sum::<f64>() / 10.0)
                })
                .collect();
            let v: Vec<f64> = per_seed.into_iter().collect::<Result<_>>()?;
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let se = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) / n).sqrt();
            notes.push(format!("{}: final loss gap {mean:.5e} (standard error {se:.2e})", b.name()));
            finals.push(mean);
        }
        let (sdq, ppn, sep, joint) = (finals[0], finals[1], finals[2], finals[3]);
        let n = CRITERION8_REPLICATES as usize;
        Ok(vec![
            at_most("joint / min(SDQ-only, PPN-only)", joint / sdq.min(ppn), 1.1, n),
            TestReport::new("joint / separate", joint / sep, 1.0, n),
        ])
    })
}

/// Identical seeds give byte-identical CSV output, independent of worker count.
pub fn criterion9(seed: u64) -> CriterionOutcome {
    timed(9, "byte-identical CSV output on rerun", 600.0, |notes| {
        let mut cfg = ExperimentConfig { rounds: 30, seed, ..Default::default() };
        cfg.sweep.rates = vec![1, 2];
        cfg.sweep.epsilons = vec![4.0];
        cfg.sweep.snr_dim = 50;
        cfg.sweep.snr_rounds = 5;
        cfg.sweep.snr_repeats = 2;
        let mut outputs = Vec::new();
        for jobs in [1, 2, 1] {
            cfg.jobs = Some(jobs);
            let r = run_sweep(&cfg)?;
            outputs.push((r.snr_csv(), r.curve_csv(), r.summary_json()?));
        }
        let differing = outputs.windows(2).filter(|w| w[0] != w[1]).count();
        notes.push(format!("{} bytes of CSV per run", outputs[0].0.len() + outputs[0].1.len()));
        Ok(vec![at_most("reruns with differing output", differing as f64, 0.0, outputs.len())])
    })
}

pub type Criterion = fn(u64) -> CriterionOutcome;

pub const CRITERIA: [Criterion; 9] =
    [criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7, criterion8, criterion9];

/// Runs the selected criteria (1-based ids; empty means all).
pub fn run_suite(ids: &[u8], seed: u64) -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .enumerate()
        .filter(|(i, _)| ids.is_empty() || ids.contains(&(*i as u8 + 1)))
        .map(|(_, f)| f(seed))
        .collect()
}

pub const DEFAULT_SEED: u64 = 20_240_601;
