//! Parameter sweeps producing the SNR-versus-rate table and learning curves.
//!
//! SNR points reuse one set of reference updates (an exactly aggregated
//! run) so every baseline is measured on the same inputs. Points run on a
//! worker pool; results are collected in sweep order and written by one
//! writer, so output is independent of the worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{snr_db, Baseline};
use crate::config::ExperimentConfig;
use crate::dither::SharedRandomness;
use crate::error::{Error, Result};
use crate::flsim::{Experiment, RoundMetrics};
use crate::lattice::LatticeFamily;

pub const SNR_SCHEMA: &str = "# jopeq-snr v1";
pub const CURVE_SCHEMA: &str = "# jopeq-curve v1";
pub const SNR_FILE: &str = "snr.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub family: LatticeFamily,
    pub rate: u32,
    pub epsilon: f64,
    pub baseline: Baseline,
    pub gamma: f64,
    pub snr_db: f64,
    pub overloads: u64,
    /// Sup marginal CDF distance of the PPN law (joint scheme only).
    pub sampler_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub baseline: Baseline,
    pub rounds: Vec<RoundMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: Vec<(String, String)>,
    pub snr: Vec<SnrPoint>,
    pub curves: Vec<Curve>,
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// SNR of every (family, rate, ε, baseline) point of the sweep axes.
pub fn snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<SnrPoint>> {
    let sw = &cfg.sweep;
    let mut base = cfg.fl_config(cfg.family, cfg.rate, cfg.epsilon, Baseline::Plain)?;
    base.task.dim = sw.snr_dim;
    let reference = Experiment::new(&base)?;
    let updates = reference.plain_updates(sw.snr_rounds, cfg.seed);
    let mut points = Vec::new();
    for &family in &sw.families {
        for &rate in &sw.rates {
            for &eps in &sw.epsilons {
                for &b in &sw.baselines {
                    points.push((family, rate, eps, b));
                }
            }
        }
    }
    pool(cfg.jobs)?.install(|| {
        points
            .par_iter()
            .map(|&(family, rate, eps, baseline)| {
                let fl = cfg.fl_config(family, rate, eps, baseline)?;
                let transport = fl.codec.transport(baseline)?;
                let mut hs = Vec::new();
                let mut hts = Vec::new();
                let mut overloads = 0u64;
                for rep in 0..sw.snr_repeats {
                    for (r, round) in updates.iter().enumerate() {
                        for (k, h) in round.iter().enumerate() {
                            let slot = (r * sw.snr_repeats + rep) as u64;
                            let shared = SharedRandomness::new(cfg.shared_seed ^ cfg.seed, k as u64, slot);
                            let sent = transport.transmit(h, shared, cfg.private_seed ^ cfg.seed)?;
                            overloads += sent.overloads as u64;
                            hs.push(h.clone());
                            hts.push(sent.h_tilde);
                        }
                    }
                }
                Ok(SnrPoint {
                    family,
                    rate,
                    epsilon: eps,
                    baseline,
                    gamma: fl.codec.lattice.gamma,
                    snr_db: snr_db(&hs, &hts),
                    overloads,
                    sampler_residual: transport.sampler.as_ref().map(|s| s.report().residual),
                })
            })
            .collect()
    })
}

/// Learning curve of every sweep baseline at the curve operating point.
pub fn curve_sweep(cfg: &ExperimentConfig) -> Result<Vec<Curve>> {
    let sw = &cfg.sweep;
    pool(cfg.jobs)?.install(|| {
        sw.baselines
            .par_iter()
            .map(|&b| {
                let fl = cfg.fl_config(sw.curve_family, sw.curve_rate, sw.curve_epsilon, b)?;
                Ok(Curve { baseline: b, rounds: Experiment::new(&fl)?.run()? })
            })
            .collect()
    })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let config = cfg.to_kv().into_iter().filter(|(k, _)| !k.starts_with("run.")).collect();
    Ok(SweepResult { config, snr: snr_sweep(cfg)?, curves: curve_sweep(cfg)? })
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.9e}")
    }
}

impl SweepResult {
    pub fn snr_csv(&self) -> String {
        let mut s = format!("{SNR_SCHEMA}\nfamily,rate,epsilon,baseline,snr_db,overloads\n");
        for p in &self.snr {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.family,
                p.rate,
                p.epsilon,
                p.baseline.name(),
                fmt_f64(p.snr_db),
                p.overloads
            );
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = format!("{CURVE_SCHEMA}\nround,baseline,loss_gap,accuracy_proxy\n");
        for c in &self.curves {
            for m in &c.rounds {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    m.round + 1,
                    c.baseline.name(),
                    fmt_f64(m.loss_gap),
                    fmt_f64(m.accuracy_proxy)
                );
            }
        }
        s
    }

    /// Structured summary: configuration, SNR points and final loss gaps.
    pub fn summary_json(&self) -> Result<String> {
        let finals: Vec<serde_json::Value> = self
            .curves
            .iter()
            .map(|c| {
                let last = c.rounds.last();
                serde_json::json!({
                    "baseline": c.baseline.name(),
                    "final_loss_gap": last.map(|m| m.loss_gap),
                    "final_accuracy_proxy": last.map(|m| m.accuracy_proxy),
                    "overloads": c.rounds.iter().map(|m| m.overloads).sum::<u64>(),
                })
            })
            .collect();
        let snr: Vec<serde_json::Value> = self
            .snr
            .iter()
            .map(|p| {
                serde_json::json!({
                    "family": p.family.to_string(),
                    "rate": p.rate,
                    "epsilon": p.epsilon,
                    "baseline": p.baseline.name(),
                    "gamma": p.gamma,
                    "snr_db": if p.snr_db.is_finite() { Some(p.snr_db) } else { None },
                    "overloads": p.overloads,
                    "sampler_residual": p.sampler_residual,
                })
            })
            .collect();
        let config: serde_json::Map<String, serde_json::Value> =
            self.config.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        let doc = serde_json::json!({ "config": config, "snr": snr, "curves": finals });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(format!("summary: {e}")))
    }

    /// Writes the two CSV files and the summary into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (dir.join(SNR_FILE), self.snr_csv()),
            (dir.join(CURVE_FILE), self.curve_csv()),
            (dir.join(SUMMARY_FILE), self.summary_json()? + "\n"),
        ];
        let mut out = Vec::new();
        for (path, body) in files {
            fs::write(&path, body)?;
            out.push(path);
        }
        Ok(out)
    }
}
