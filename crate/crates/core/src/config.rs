//! Flat `key = value` experiment configuration with dotted section keys.
//!
//! Lines starting with `#` are comments. Lists are comma separated.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::Baseline;
use crate::error::{Error, Result};
use crate::flsim::{CodecSpec, FlConfig, MechanismConfig, StepSchedule, TaskKind, TaskSpec};
use crate::lattice::{LatticeFamily, LatticeSpec};
use crate::privacy::{solve_t_params, Admission, MechanismKind, SamplerOptions, UNIT_BALL_SENSITIVITY};

/// Quantizer support radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GammaRule {
    /// `2R + 1/ε` for scalar lattices, `1.5 (1 + per-coordinate noise
    /// variance)` for two-dimensional ones.
    Auto,
    Fixed(f64),
}

/// Mechanism family; `Auto` picks Laplace for scalar and t for 2-D lattices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MechanismChoice {
    Auto,
    Fixed(MechanismKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub families: Vec<LatticeFamily>,
    pub rates: Vec<u32>,
    pub epsilons: Vec<f64>,
    pub baselines: Vec<Baseline>,
    /// Model dimension of the reference task used for SNR; the per-user
    /// variance ratio is only unbiased when this is large.
    pub snr_dim: usize,
    /// Rounds of reference updates collected for the SNR sweep.
    pub snr_rounds: usize,
    /// Independent transmissions of every reference update.
    pub snr_repeats: usize,
    /// Operating point of the learning-curve output.
    pub curve_family: LatticeFamily,
    pub curve_rate: u32,
    pub curve_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub tau: usize,
    pub rounds: usize,
    pub schedule: StepSchedule,
    pub baseline: Baseline,
    pub seed: u64,
    pub family: LatticeFamily,
    pub rate: u32,
    pub gamma: GammaRule,
    pub mechanism: MechanismChoice,
    pub epsilon: f64,
    pub nu: f64,
    pub sampler: SamplerOptions,
    pub shared_seed: u64,
    pub private_seed: u64,
    pub sweep: SweepAxes,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskSpec {
                kind: TaskKind::Linear,
                dim: 10,
                samples: vec![200; 10],
                heterogeneity: 0.5,
                label_noise: 0.1,
                lambda: 0.1,
                seed: 7,
            },
            tau: 4,
            rounds: 200,
            schedule: StepSchedule::Decaying,
            baseline: Baseline::Jopeq,
            seed: 1,
            family: LatticeFamily::Scalar,
            rate: 4,
            gamma: GammaRule::Auto,
            mechanism: MechanismChoice::Auto,
            epsilon: 3.0,
            nu: 3.0,
            sampler: SamplerOptions::with_admission(Admission::BestEffort),
            shared_seed: 11,
            private_seed: 13,
            sweep: SweepAxes {
                families: vec![LatticeFamily::Scalar],
                rates: (1..=8).collect(),
                epsilons: vec![3.0, 3.5, 4.0],
                baselines: Baseline::ALL.to_vec(),
                snr_dim: 500,
                snr_rounds: 20,
                snr_repeats: 4,
                curve_family: LatticeFamily::Scalar,
                curve_rate: 1,
                curve_epsilon: 4.0,
            },
            out_dir: PathBuf::from("out"),
            jobs: None,
        }
    }
}

/// Support radius for one operating point.
pub fn resolve_gamma(rule: GammaRule, family: LatticeFamily, rate: u32, epsilon: f64, mech: &MechanismConfig) -> Result<f64> {
    match rule {
        GammaRule::Fixed(g) => Ok(g),
        GammaRule::Auto if family.dimension() == 1 => Ok(2.0 * rate as f64 + 1.0 / epsilon),
        GammaRule::Auto => {
            let var = mech.build(family.dimension())?.variance_per_coordinate();
            Ok(1.5 * (1.0 + var))
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn mechanism_kind(&self, family: LatticeFamily) -> MechanismKind {
        match self.mechanism {
            MechanismChoice::Fixed(k) => k,
            MechanismChoice::Auto if family.dimension() == 1 => MechanismKind::Laplace,
            MechanismChoice::Auto => MechanismKind::MultivariateT,
        }
    }

    /// Fully resolved simulator configuration for one operating point.
    pub fn fl_config(&self, family: LatticeFamily, rate: u32, epsilon: f64, baseline: Baseline) -> Result<FlConfig> {
        let mechanism = MechanismConfig { kind: self.mechanism_kind(family), epsilon, nu: self.nu };
        let gamma = resolve_gamma(self.gamma, family, rate, epsilon, &mechanism)?;
        let cfg = FlConfig {
            task: self.task.clone(),
            tau: self.tau,
            rounds: self.rounds,
            schedule: self.schedule,
            codec: CodecSpec {
                lattice: LatticeSpec { family, gamma, rate },
                mechanism,
                sampler: self.sampler.clone(),
                shared_seed: self.shared_seed,
                private_seed: self.private_seed,
            },
            baseline,
            seed: self.seed,
        };
        validate(&cfg)?;
        Ok(cfg)
    }

    /// Configuration at the top-level operating point.
    pub fn base_fl_config(&self) -> Result<FlConfig> {
        self.fl_config(self.family, self.rate, self.epsilon, self.baseline)
    }

    /// Serializes back to the text format (round-trips through `from_str`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_kv() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let t = &self.task;
        let sw = &self.sweep;
        let join = |v: Vec<String>| v.join(",");
        let mut out: Vec<(&str, String)> = vec![
            ("task.kind", t.kind.to_string()),
            ("task.dim", t.dim.to_string()),
            ("task.samples", join(t.samples.iter().map(|n| n.to_string()).collect())),
            ("task.heterogeneity", t.heterogeneity.to_string()),
            ("task.label_noise", t.label_noise.to_string()),
            ("task.lambda", t.lambda.to_string()),
            ("task.seed", t.seed.to_string()),
            ("fl.tau", self.tau.to_string()),
            ("fl.rounds", self.rounds.to_string()),
            (
                "fl.schedule",
                match self.schedule {
                    StepSchedule::Decaying => "decaying".into(),
                    StepSchedule::Fixed(eta) => format!("fixed:{eta}"),
                },
            ),
            ("fl.baseline", self.baseline.name().into()),
            ("fl.seed", self.seed.to_string()),
            ("lattice.family", self.family.to_string()),
            ("lattice.rate", self.rate.to_string()),
            (
                "lattice.gamma",
                match self.gamma {
                    GammaRule::Auto => "auto".into(),
                    GammaRule::Fixed(g) => g.to_string(),
                },
            ),
            (
                "mechanism.kind",
                match self.mechanism {
                    MechanismChoice::Auto => "auto".into(),
                    MechanismChoice::Fixed(k) => k.to_string(),
                },
            ),
            ("mechanism.epsilon", self.epsilon.to_string()),
            ("mechanism.nu", self.nu.to_string()),
            ("sampler.admission", self.sampler.admission.to_string()),
            ("sampler.max_residual", self.sampler.max_residual.to_string()),
            ("codec.shared_seed", self.shared_seed.to_string()),
            ("codec.private_seed", self.private_seed.to_string()),
            ("sweep.families", join(sw.families.iter().map(|f| f.to_string()).collect())),
            ("sweep.rates", join(sw.rates.iter().map(|r| r.to_string()).collect())),
            ("sweep.epsilons", join(sw.epsilons.iter().map(|e| e.to_string()).collect())),
            ("sweep.baselines", join(sw.baselines.iter().map(|b| b.name().to_string()).collect())),
            ("sweep.snr_dim", sw.snr_dim.to_string()),
            ("sweep.snr_rounds", sw.snr_rounds.to_string()),
            ("sweep.snr_repeats", sw.snr_repeats.to_string()),
            ("sweep.curve_family", sw.curve_family.to_string()),
            ("sweep.curve_rate", sw.curve_rate.to_string()),
            ("sweep.curve_epsilon", sw.curve_epsilon.to_string()),
            ("output.dir", self.out_dir.display().to_string()),
        ];
        if let Some(j) = self.jobs {
            out.push(("run.jobs", j.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task.kind" => self.task.kind = v.parse()?,
            "task.dim" => self.task.dim = num(key, v)?,
            "task.users" => {
                let n = self.task.samples.first().copied().unwrap_or(200);
                self.task.samples = vec![n; num(key, v)?];
            }
            "task.samples" => {
                let list: Vec<usize> = list(key, v)?;
                self.task.samples = if list.len() == 1 { vec![list[0]; self.task.samples.len().max(1)] } else { list };
            }
            "task.heterogeneity" => self.task.heterogeneity = num(key, v)?,
            "task.label_noise" => self.task.label_noise = num(key, v)?,
            "task.lambda" => self.task.lambda = num(key, v)?,
            "task.seed" => self.task.seed = num(key, v)?,
            "fl.tau" => self.tau = num(key, v)?,
            "fl.rounds" => self.rounds = num(key, v)?,
            "fl.schedule" => self.schedule = parse_schedule(v)?,
            "fl.baseline" => self.baseline = v.parse()?,
            "fl.seed" => self.seed = num(key, v)?,
            "lattice.family" => self.family = v.parse()?,
            "lattice.rate" => self.rate = num(key, v)?,
            "lattice.gamma" => {
                self.gamma = if v.eq_ignore_ascii_case("auto") { GammaRule::Auto } else { GammaRule::Fixed(num(key, v)?) }
            }
            "mechanism.kind" => {
                self.mechanism =
                    if v.eq_ignore_ascii_case("auto") { MechanismChoice::Auto } else { MechanismChoice::Fixed(v.parse()?) }
            }
            "mechanism.epsilon" => self.epsilon = num(key, v)?,
            "mechanism.nu" => self.nu = num(key, v)?,
            "sampler.admission" => self.sampler.admission = v.parse()?,
            "sampler.max_residual" => self.sampler.max_residual = num(key, v)?,
            "codec.shared_seed" => self.shared_seed = num(key, v)?,
            "codec.private_seed" => self.private_seed = num(key, v)?,
            "sweep.families" => self.sweep.families = list(key, v)?,
            "sweep.rates" => self.sweep.rates = list(key, v)?,
            "sweep.epsilons" => self.sweep.epsilons = list(key, v)?,
            "sweep.baselines" => {
                self.sweep.baselines =
                    if v.eq_ignore_ascii_case("all") { Baseline::ALL.to_vec() } else { list(key, v)? }
            }
            "sweep.snr_dim" => self.sweep.snr_dim = num(key, v)?,
            "sweep.snr_rounds" => self.sweep.snr_rounds = num(key, v)?,
            "sweep.snr_repeats" => self.sweep.snr_repeats = num(key, v)?,
            "sweep.curve_family" => self.sweep.curve_family = v.parse()?,
            "sweep.curve_rate" => self.sweep.curve_rate = num(key, v)?,
            "sweep.curve_epsilon" => self.sweep.curve_epsilon = num(key, v)?,
            "output.dir" => self.out_dir = PathBuf::from(v),
            "run.jobs" => self.jobs = Some(num(key, v)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks every sweep point yields a valid simulator configuration.
    pub fn validate(&self) -> Result<()> {
        self.base_fl_config()?;
        for &family in &self.sweep.families {
            for &rate in &self.sweep.rates {
                for &eps in &self.sweep.epsilons {
                    for &b in &self.sweep.baselines {
                        self.fl_config(family, rate, eps, b)?;
                    }
                }
            }
        }
        let sw = &self.sweep;
        self.fl_config(sw.curve_family, sw.curve_rate, sw.curve_epsilon, Baseline::Plain)?;
        if sw.snr_dim == 0 || sw.snr_rounds == 0 || sw.snr_repeats == 0 {
            return Err(Error::Config("sweep.snr_dim, snr_rounds and snr_repeats must be positive".into()));
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        // later assignments win; task.users is applied before task.samples
        let mut pairs: BTreeMap<usize, (String, String)> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let order = if k.trim() == "task.users" { 0 } else { no + 1 };
            pairs.insert(order, (k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in pairs.values() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn validate(cfg: &FlConfig) -> Result<()> {
    let t = &cfg.task;
    if cfg.tau == 0 {
        return Err(Error::Config("fl.tau must be at least 1".into()));
    }
    if t.samples.is_empty() || t.samples.contains(&0) {
        return Err(Error::Config("every user needs at least one sample".into()));
    }
    if t.dim == 0 {
        return Err(Error::Config("task.dim must be positive".into()));
    }
    if t.lambda <= 0.0 {
        return Err(Error::Config("task.lambda must be positive".into()));
    }
    let m = &cfg.codec.mechanism;
    if m.epsilon.is_nan() || m.epsilon <= 0.0 {
        return Err(Error::Config("mechanism.epsilon must be positive".into()));
    }
    if m.kind == MechanismKind::MultivariateT {
        if m.nu <= 2.0 {
            return Err(Error::Config("mechanism.nu must exceed 2".into()));
        }
        solve_t_params(m.epsilon, cfg.codec.lattice.dimension(), UNIT_BALL_SENSITIVITY, m.nu)?;
    }
    let g = cfg.codec.lattice.gamma;
    if g.is_nan() || g <= 0.0 || cfg.codec.lattice.rate == 0 {
        return Err(Error::Config("lattice gamma and rate must be positive".into()));
    }
    if let StepSchedule::Fixed(eta) = cfg.schedule {
        if eta.is_nan() || eta < 0.0 {
            return Err(Error::Config("step size must be nonnegative".into()));
        }
    }
    Ok(())
}

fn parse_schedule(v: &str) -> Result<StepSchedule> {
    if v.eq_ignore_ascii_case("decaying") {
        return Ok(StepSchedule::Decaying);
    }
    let eta = v.strip_prefix("fixed:").unwrap_or(v);
    eta.trim()
        .parse()
        .map(StepSchedule::Fixed)
        .map_err(|_| Error::Config(format!("fl.schedule: expected `decaying` or `fixed:<eta>`, got `{v}`")))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let out: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{s}`"))))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}
