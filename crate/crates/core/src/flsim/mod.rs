//! Deterministic federated-learning simulator: local SGD, federated averaging
//! with a configurable uplink, and the distortion/convergence bounds.

mod bounds;
mod task;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{snr_db, Baseline, Transport};
use crate::dither::{stream, SharedRandomness, DOMAIN_TRAINING};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::privacy::{MechanismKind, MechanismSpec, SamplerOptions, DEFAULT_EPSILON_EXPONENT};

pub use bounds::{phi, distortion_bound, convergence_bound, convergence_coefficient};
pub use task::{Task, TaskKind, TaskSpec, UserData};

/// Loss gap beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSchedule {
    Fixed(f64),
    /// `η_t = τ / (ρ_c (t + φ))`.
    Decaying,
}

impl StepSchedule {
    pub fn eta(&self, t: usize, tau: usize, rho_s: f64, rho_c: f64) -> f64 {
        match *self {
            StepSchedule::Fixed(eta) => eta,
            StepSchedule::Decaying => tau as f64 / (rho_c * (t as f64 + phi(tau, rho_s, rho_c))),
        }
    }
}

/// Mechanism parameters as configured (the t scale is solved at build time).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    pub epsilon: f64,
    /// Degrees of freedom for the t mechanism.
    pub nu: f64,
}

impl MechanismConfig {
    pub fn build(&self, dim: usize) -> Result<MechanismSpec> {
        match self.kind {
            MechanismKind::Laplace => MechanismSpec::laplace(self.epsilon, dim),
            MechanismKind::MultivariateT => {
                MechanismSpec::multivariate_t_with(self.epsilon, dim, self.nu, DEFAULT_EPSILON_EXPONENT)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub lattice: LatticeSpec,
    pub mechanism: MechanismConfig,
    pub sampler: SamplerOptions,
    /// Base of the per-user shared dither seeds.
    pub shared_seed: u64,
    /// Encoder-private noise seed.
    pub private_seed: u64,
}

impl CodecSpec {
    pub fn transport(&self, baseline: Baseline) -> Result<Transport> {
        let lattice = self.lattice.build()?;
        let mechanism = self.mechanism.build(lattice.dimension())?;
        Transport::new(baseline, lattice, mechanism, &self.sampler)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlConfig {
    pub task: TaskSpec,
    /// Local steps per round.
    pub tau: usize,
    pub rounds: usize,
    pub schedule: StepSchedule,
    pub codec: CodecSpec,
    pub baseline: Baseline,
    /// Seed for local SGD sampling and for the codec streams of this run.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Global iteration index after the round.
    pub t: usize,
    pub loss_gap: f64,
    pub snr_db: f64,
    /// `|w̃ − w|²` between the aggregate of received and of exact updates.
    pub distortion: f64,
    pub distortion_bound: f64,
    pub convergence_bound: f64,
    pub overloads: u64,
    pub accuracy_proxy: f64,
}

/// `τ` single-sample SGD steps from `w` on user `k`, starting at global
/// iteration `t0`; returns `w_final − w`.
pub fn local_sgd<R: Rng + ?Sized>(
    task: &Task,
    k: usize,
    w: &[f64],
    tau: usize,
    schedule: &StepSchedule,
    t0: usize,
    rng: &mut R,
) -> Vec<f64> {
    let m = w.len();
    let n = task.users[k].len();
    let mut local = w.to_vec();
    let mut g = vec![0.0; m];
    for s in 0..tau {
        let i = rng.random_range(0..n);
        let eta = schedule.eta(t0 + s, tau, task.rho_s, task.rho_c);
        task.sample_grad(k, i, &local, &mut g);
        for j in 0..m {
            local[j] -= eta * g[j];
        }
    }
    local.iter().zip(w).map(|(a, b)| a - b).collect()
}

/// `w + Σ α_k h_k`.
pub fn fedavg_round(w: &[f64], updates: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    assert_eq!(updates.len(), alpha.len(), "one weight per update");
    let mut out = w.to_vec();
    for (h, a) in updates.iter().zip(alpha) {
        for (o, v) in out.iter_mut().zip(h) {
            *o += a * v;
        }
    }
    out
}

/// Prepared experiment: generated task, built uplink and derived constants.
pub struct Experiment {
    pub cfg: FlConfig,
    pub task: Task,
    pub transport: Transport,
    pub xi: Vec<f64>,
    pub psi: f64,
    pub w0: Vec<f64>,
}

impl Experiment {
    pub fn new(cfg: &FlConfig) -> Result<Self> {
        let task = Task::generate(&cfg.task)?;
        let transport = cfg.codec.transport(cfg.baseline)?;
        Self::with_parts(cfg, task, transport)
    }

    /// Reuses an existing task and uplink (they must match `cfg`).
    pub fn with_parts(cfg: &FlConfig, task: Task, transport: Transport) -> Result<Self> {
        if cfg.tau == 0 {
            return Err(Error::Config("tau must be at least 1".into()));
        }
        let w0 = vec![0.0; task.dim()];
        let xi = task.gradient_bounds(&w0);
        let psi = task.heterogeneity_gap();
        Ok(Experiment { cfg: cfg.clone(), task, transport, xi, psi, w0 })
    }

    /// `σ²` used in the bounds: the configured mechanism's sub-vector variance.
    pub fn sigma2(&self) -> f64 {
        self.transport.mechanism.sigma2()
    }

    /// Updates `h[r][k]` of an exactly aggregated run (no uplink distortion).
    pub fn plain_updates(&self, rounds: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let cfg = &self.cfg;
        let task = &self.task;
        let mut w = self.w0.clone();
        let mut out = Vec::with_capacity(rounds);
        for r in 0..rounds {
            let hs: Vec<Vec<f64>> = (0..task.users())
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream(DOMAIN_TRAINING, seed, k as u64, r as u64, 0);
                    local_sgd(task, k, &w, cfg.tau, &cfg.schedule, r * cfg.tau, &mut rng)
                })
                .collect();
            w = fedavg_round(&w, &hs, &task.alpha);
            out.push(hs);
        }
        out
    }

    pub fn run(&self) -> Result<Vec<RoundMetrics>> {
        self.run_with_seed(self.cfg.seed)
    }

    pub fn run_with_seed(&self, seed: u64) -> Result<Vec<RoundMetrics>> {
        let cfg = &self.cfg;
        let task = &self.task;
        let k_users = task.users();
        let tau = cfg.tau;
        let f_opt = task.f_opt();
        let sigma2 = self.sigma2();
        let w_dist2: f64 = self.w0.iter().zip(&task.w_opt).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut w = self.w0.clone();
        let mut out = Vec::with_capacity(cfg.rounds);
        for r in 0..cfg.rounds {
            let t0 = r * tau;
            let results: Vec<Result<(Vec<f64>, Vec<f64>, u32)>> = (0..k_users)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream(DOMAIN_TRAINING, seed, k as u64, r as u64, 0);
                    let h = local_sgd(task, k, &w, tau, &cfg.schedule, t0, &mut rng);
                    let shared = SharedRandomness::new(cfg.codec.shared_seed ^ seed, k as u64, r as u64);
                    let sent = self.transport.transmit(&h, shared, cfg.codec.private_seed ^ seed)?;
                    Ok((h, sent.h_tilde, sent.overloads))
                })
                .collect();
            let mut hs = Vec::with_capacity(k_users);
            let mut hts = Vec::with_capacity(k_users);
            let mut overloads = 0u64;
            for res in results {
                let (h, ht, o) = res?;
                hs.push(h);
                hts.push(ht);
                overloads += o as u64;
            }
            let exact = fedavg_round(&w, &hs, &task.alpha);
            let received = fedavg_round(&w, &hts, &task.alpha);
            let distortion: f64 = exact.iter().zip(&received).map(|(a, b)| (a - b) * (a - b)).sum();
            w = received;
            let loss_gap = task.loss(&w) - f_opt;
            if !loss_gap.is_finite() || loss_gap > DIVERGENCE_LIMIT {
                return Err(Error::Divergence { round: r, loss_gap });
            }
            let eta_sq: f64 = (t0..t0 + tau)
                .map(|t| cfg.schedule.eta(t, tau, task.rho_s, task.rho_c).powi(2))
                .sum();
            let t_end = t0 + tau;
            out.push(RoundMetrics {
                round: r,
                t: t_end,
                loss_gap,
                snr_db: snr_db(&hs, &hts),
                distortion,
                distortion_bound: distortion_bound(tau, sigma2, eta_sq, &task.alpha, &self.xi),
                convergence_bound: convergence_bound(
                    tau, sigma2, self.psi, task.rho_s, task.rho_c, &task.alpha, &self.xi, w_dist2, t_end,
                ),
                overloads,
                accuracy_proxy: task.accuracy_proxy(&w),
            });
        }
        Ok(out)
    }
}

/// Builds the experiment and runs it once with `cfg.seed`.
pub fn run_experiment(cfg: &FlConfig) -> Result<Vec<RoundMetrics>> {
    Experiment::new(cfg)?.run()
}
