//! Local-differential-privacy mechanisms and the privacy-preserving noise
//! (PPN) that, added before subtractive dithered quantization, makes the total
//! distortion follow the mechanism.

mod fft;
mod sampler;

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Vec2};
use crate::special::ln_scaled_bessel_k;

pub use sampler::{build_ppn_sampler, Admission, PpnSampler, SamplerOptions, ValidityReport};

/// Sensitivity of sub-vectors confined to the unit ball.
pub const UNIT_BALL_SENSITIVITY: f64 = SQRT_2;

/// Exponent applied to the log likelihood ratio in the multivariate-t
/// privacy relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonExponent {
    /// `(ν + d)^2`.
    Squared,
    /// `(ν + d) / 2`.
    Half,
}

impl EpsilonExponent {
    pub fn value(self, nu: f64, d: usize) -> f64 {
        let a = nu + d as f64;
        match self {
            EpsilonExponent::Squared => a * a,
            EpsilonExponent::Half => 0.5 * a,
        }
    }
}

/// Exponent used unless a caller selects the alternative explicitly.
pub const DEFAULT_EPSILON_EXPONENT: EpsilonExponent = EpsilonExponent::Squared;

/// Privacy level of the multivariate-t mechanism with `ν` degrees of freedom,
/// whitened sensitivity `delta` and dimension `d`.
pub fn t_mech_epsilon(nu: f64, delta: f64, d: usize) -> f64 {
    t_mech_epsilon_with(nu, delta, d, DEFAULT_EPSILON_EXPONENT)
}

pub fn t_mech_epsilon_with(nu: f64, delta: f64, d: usize, exponent: EpsilonExponent) -> f64 {
    let c = 0.5 * (delta + (delta * delta + 4.0 * nu).sqrt());
    let num = 1.0 + c * c / nu;
    let den = 1.0 + (c - delta) * (c - delta) / nu;
    exponent.value(nu, d) * (num / den).ln()
}

/// Scale `s^2` of `Σ = s^2 I_d` reaching privacy level `epsilon` for fixed
/// `ν`, by bisection on `log s` over `[1e-6, 1e6]`.
pub fn solve_t_params(epsilon: f64, d: usize, delta: f64, nu: f64) -> Result<f64> {
    solve_t_params_with(epsilon, d, delta, nu, DEFAULT_EPSILON_EXPONENT)
}

pub fn solve_t_params_with(
    epsilon: f64,
    d: usize,
    delta: f64,
    nu: f64,
    exponent: EpsilonExponent,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InfeasibleParameters(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(nu > 0.0 && delta > 0.0) {
        return Err(Error::InfeasibleParameters(format!("need nu > 0 and delta > 0 (nu={nu}, delta={delta})")));
    }
    let f = |ls: f64| t_mech_epsilon_with(nu, delta / ls.exp(), d, exponent) - epsilon;
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::InfeasibleParameters(format!(
            "no bracket for epsilon={epsilon} in s∈[1e-6,1e6] (residuals {flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (0.5 * (lo + hi)).exp();
    Ok(s * s)
}

/// `ε = Δf / b` for the Laplace mechanism.
pub fn laplace_epsilon_for_budget(delta_f: f64, b: f64) -> f64 {
    delta_f / b
}

/// Threshold `γε/2^R >= sqrt(24)` beyond which quantization noise alone has at
/// least the Laplace variance (scalar lattice). A relative slack of `1e-12`
/// absorbs rounding at the boundary.
pub fn pq_tradeoff_check(gamma: f64, epsilon: f64, rate: u32) -> bool {
    gamma * epsilon / 2f64.powi(rate as i32) >= 24f64.sqrt() * (1.0 - 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Laplace,
    #[serde(rename = "t")]
    MultivariateT,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::MultivariateT => "t",
        })
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laplace" => Ok(MechanismKind::Laplace),
            "t" | "multivariate-t" => Ok(MechanismKind::MultivariateT),
            other => Err(Error::Config(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// Identity and parameters of an LDP mechanism acting on `dim`-dimensional
/// sub-vectors. Location is zero; the t scale is `s^2 I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub epsilon: f64,
    pub dim: usize,
    /// Degrees of freedom (t only; infinite for Laplace).
    pub nu: f64,
    /// `s^2` for t, `b^2` for Laplace.
    pub scale2: f64,
    pub sensitivity: f64,
}

impl MechanismSpec {
    /// Laplace with `b = 2/ε` per coordinate.
    pub fn laplace(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InfeasibleParameters(format!("epsilon must be positive, got {epsilon}")));
        }
        check_dim(dim)?;
        let b = 2.0 / epsilon;
        Ok(MechanismSpec {
            kind: MechanismKind::Laplace,
            epsilon,
            dim,
            nu: f64::INFINITY,
            scale2: b * b,
            sensitivity: 2.0,
        })
    }

    /// Multivariate t with `ν` fixed and `s^2` solved from `ε`.
    pub fn multivariate_t(epsilon: f64, dim: usize, nu: f64) -> Result<Self> {
        Self::multivariate_t_with(epsilon, dim, nu, DEFAULT_EPSILON_EXPONENT)
    }

    pub fn multivariate_t_with(epsilon: f64, dim: usize, nu: f64, exponent: EpsilonExponent) -> Result<Self> {
        check_dim(dim)?;
        if nu <= 2.0 {
            return Err(Error::InfeasibleParameters(format!("nu must exceed 2 for finite variance, got {nu}")));
        }
        let s2 = solve_t_params_with(epsilon, dim, UNIT_BALL_SENSITIVITY, nu, exponent)?;
        Ok(MechanismSpec {
            kind: MechanismKind::MultivariateT,
            epsilon,
            dim,
            nu,
            scale2: s2,
            sensitivity: UNIT_BALL_SENSITIVITY,
        })
    }

    /// Laplace scale `b`.
    pub fn laplace_scale(&self) -> f64 {
        self.scale2.sqrt()
    }

    /// Per-coordinate variance.
    pub fn variance_per_coordinate(&self) -> f64 {
        match self.kind {
            MechanismKind::Laplace => 2.0 * self.scale2,
            MechanismKind::MultivariateT => self.nu * self.scale2 / (self.nu - 2.0),
        }
    }

    /// `σ²`: total variance of one sub-vector of noise.
    pub fn sigma2(&self) -> f64 {
        self.variance_per_coordinate() * self.dim as f64
    }

    /// Characteristic function of the mechanism noise.
    pub fn cf(&self, t: &[f64]) -> f64 {
        match self.kind {
            MechanismKind::Laplace => (0..self.dim).map(|l| 1.0 / (1.0 + self.scale2 * t[l] * t[l])).product(),
            MechanismKind::MultivariateT => {
                let tt: f64 = (0..self.dim).map(|l| t[l] * t[l]).sum();
                t_cf(self.nu, (self.nu * self.scale2 * tt).sqrt())
            }
        }
    }

    /// CDF of one coordinate.
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        match self.kind {
            MechanismKind::Laplace => laplace_cdf(x, self.laplace_scale()),
            MechanismKind::MultivariateT => StudentsT::new(0.0, self.scale2.sqrt(), self.nu)
                .expect("valid t parameters")
                .cdf(x),
        }
    }

    /// Density at a point (joint over `dim` coordinates).
    pub fn density(&self, x: &[f64]) -> f64 {
        match self.kind {
            MechanismKind::Laplace => {
                let b = self.laplace_scale();
                (0..self.dim).map(|l| (-(x[l].abs()) / b).exp() / (2.0 * b)).product()
            }
            MechanismKind::MultivariateT => {
                let d = self.dim as f64;
                let q: f64 = (0..self.dim).map(|l| x[l] * x[l]).sum::<f64>() / self.scale2;
                let ln_c = statrs::function::gamma::ln_gamma(0.5 * (self.nu + d))
                    - statrs::function::gamma::ln_gamma(0.5 * self.nu)
                    - 0.5 * d * (self.nu * std::f64::consts::PI).ln()
                    - 0.5 * d * self.scale2.ln();
                (ln_c - 0.5 * (self.nu + d) * (1.0 + q / self.nu).ln()).exp()
            }
        }
    }

    /// Half-width beyond which a coordinate has two-sided tail mass `tail`.
    pub fn tail_quantile(&self, tail: f64) -> f64 {
        match self.kind {
            MechanismKind::Laplace => -self.laplace_scale() * tail.ln(),
            MechanismKind::MultivariateT => StudentsT::new(0.0, self.scale2.sqrt(), self.nu)
                .expect("valid t parameters")
                .inverse_cdf(1.0 - 0.5 * tail),
        }
    }

    /// Direct draw from the mechanism (baselines and test oracles).
    pub fn sample_direct<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let mut out = [0.0; 2];
        match self.kind {
            MechanismKind::Laplace => {
                let b = self.laplace_scale();
                for v in out.iter_mut().take(self.dim) {
                    *v = sample_laplace(rng, b);
                }
            }
            MechanismKind::MultivariateT => {
                let q: f64 = ChiSquared::new(self.nu).expect("nu > 0").sample(rng);
                let w = (self.nu / q).sqrt() * self.scale2.sqrt();
                for v in out.iter_mut().take(self.dim) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = z * w;
                }
            }
        }
        out
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let kind = match self.kind {
            MechanismKind::Laplace => "laplace",
            MechanismKind::MultivariateT => "t",
        };
        vec![
            ("kind".into(), kind.into()),
            ("epsilon".into(), format!("{}", self.epsilon)),
            ("dimension".into(), self.dim.to_string()),
            ("nu".into(), format!("{}", self.nu)),
            ("scale2".into(), format!("{}", self.scale2)),
            ("sensitivity".into(), format!("{}", self.sensitivity)),
            ("sigma2".into(), format!("{}", self.sigma2())),
        ]
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("mechanism dimension must be 1 or 2, got {dim}")))
    }
}

/// Characteristic function of a t distribution with `ν` degrees of freedom
/// at whitened radius `z = sqrt(ν) s |t|`.
pub fn t_cf(nu: f64, z: f64) -> f64 {
    let a = 0.5 * nu;
    (ln_scaled_bessel_k(a, z) - ln_scaled_bessel_k(a, 0.0)).exp()
}

pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Target CF divided by the cell CF for the Laplace mechanism.
pub fn laplace_ppn_cf(t: &[f64], epsilon: f64, lat: &Lattice) -> f64 {
    let b = 2.0 / epsilon;
    let target: f64 = (0..lat.dimension()).map(|l| 1.0 / (1.0 + b * b * t[l] * t[l])).product();
    target / lat.cell_cf_closed(t)
}

/// Target CF divided by the cell CF for the multivariate-t mechanism.
pub fn t_ppn_cf(t: &[f64], spec: &MechanismSpec, lat: &Lattice) -> f64 {
    spec.cf(t) / lat.cell_cf_closed(t)
}

/// Variance per coordinate the PPN must carry: target minus cell error.
pub fn required_ppn_variance(spec: &MechanismSpec, lat: &Lattice) -> f64 {
    spec.variance_per_coordinate() - lat.cell_variance_per_coordinate()
}
