//! Synthetic strongly convex learning tasks with known optima.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dither::{stream, DOMAIN_DATA};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Squared loss `½(xᵀw − y)² + λ/2 |w|²`.
    Linear,
    /// Logistic loss `log(1 + exp(−y xᵀw)) + λ/2 |w|²`, labels in {−1, +1}.
    Logistic,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Linear => "linear",
            TaskKind::Logistic => "logistic",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "linear-regression" => Ok(TaskKind::Linear),
            "logistic" | "logistic-regression" => Ok(TaskKind::Logistic),
            other => Err(Error::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Model dimension `m`.
    pub dim: usize,
    /// Samples held by each user; its length is the user count `K`.
    pub samples: Vec<usize>,
    /// Scale of the per-user feature mean shift.
    pub heterogeneity: f64,
    /// Label noise standard deviation (linear only).
    pub label_noise: f64,
    /// ℓ2 regularization `λ`.
    pub lambda: f64,
    pub seed: u64,
}

impl TaskSpec {
    pub fn users(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Clone, Debug)]
pub struct UserData {
    /// Row-major `n x m` features.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl UserData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.x.len() / self.y.len();
        &self.x[i * m..(i + 1) * m]
    }
}

/// Generated task with derived constants.
#[derive(Clone, Debug)]
pub struct Task {
    pub spec: TaskSpec,
    pub users: Vec<UserData>,
    /// Aggregation weights `|D_k| / |D|`.
    pub alpha: Vec<f64>,
    pub w_opt: Vec<f64>,
    pub user_opt: Vec<Vec<f64>>,
    /// Smoothness constant.
    pub rho_s: f64,
    /// Strong-convexity constant.
    pub rho_c: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Task {
    pub fn generate(spec: &TaskSpec) -> Result<Self> {
        if spec.dim == 0 || spec.samples.is_empty() || spec.samples.contains(&0) {
            return Err(Error::Config("task needs a positive dimension and non-empty users".into()));
        }
        if !(spec.lambda > 0.0) {
            return Err(Error::Config("regularization must be positive for strong convexity".into()));
        }
        let m = spec.dim;
        let mut rng = stream(DOMAIN_DATA, spec.seed, 0, 0, 0);
        let inv = 1.0 / (m as f64).sqrt();
        let w_true: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * inv * 2.0
            })
            .collect();
        let mut users = Vec::with_capacity(spec.users());
        for (k, &n) in spec.samples.iter().enumerate() {
            let mut r = stream(DOMAIN_DATA, spec.seed, 1, k as u64, 0);
            let shift: Vec<f64> = (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    spec.heterogeneity * z * inv
                })
                .collect();
            let mut x = Vec::with_capacity(n * m);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = shift
                    .iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        s + z
                    })
                    .collect();
                let lin = dot(&row, &w_true);
                let label = match spec.kind {
                    TaskKind::Linear => {
                        let z: f64 = StandardNormal.sample(&mut r);
                        lin + spec.label_noise * z
                    }
                    TaskKind::Logistic => {
                        let u: f64 = rand::Rng::random(&mut r);
                        if u < sigmoid(lin) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                x.extend_from_slice(&row);
                y.push(label);
            }
            users.push(UserData { x, y });
        }
        let total: usize = spec.samples.iter().sum();
        let alpha = spec.samples.iter().map(|&n| n as f64 / total as f64).collect();
        let mut task = Task {
            spec: spec.clone(),
            users,
            alpha,
            w_opt: vec![0.0; m],
            user_opt: Vec::new(),
            rho_s: 0.0,
            rho_c: 0.0,
        };
        task.derive_constants()?;
        Ok(task)
    }

    fn gram(&self, k: usize) -> DMatrix<f64> {
        let m = self.spec.dim;
        let u = &self.users[k];
        let n = u.len();
        let x = DMatrix::from_row_slice(n, m, &u.x);
        x.transpose() * &x / n as f64
    }

    fn derive_constants(&mut self) -> Result<()> {
        let m = self.spec.dim;
        let lambda = self.spec.lambda;
        let curvature = match self.spec.kind {
            TaskKind::Linear => 1.0,
            TaskKind::Logistic => 0.25,
        };
        let mut rho_s: f64 = 0.0;
        let mut rho_c = f64::INFINITY;
        for k in 0..self.users.len() {
            let eig = self.gram(k).symmetric_eigenvalues();
            let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            rho_s = rho_s.max(curvature * hi + lambda);
            rho_c = rho_c.min(match self.spec.kind {
                TaskKind::Linear => lo + lambda,
                TaskKind::Logistic => lambda,
            });
        }
        self.rho_s = rho_s;
        self.rho_c = rho_c;
        let all: Vec<(usize, f64)> = self.alpha.iter().copied().enumerate().collect();
        self.w_opt = self.minimize(&all)?;
        self.user_opt = (0..self.users.len()).map(|k| self.minimize(&[(k, 1.0)])).collect::<Result<_>>()?;
        let _ = m;
        Ok(())
    }

    /// Minimizer of `Σ c_k F_k` (closed form or Newton).
    fn minimize(&self, weights: &[(usize, f64)]) -> Result<Vec<f64>> {
        let m = self.spec.dim;
        let lambda = self.spec.lambda;
        match self.spec.kind {
            TaskKind::Linear => {
                let mut a = DMatrix::<f64>::identity(m, m) * lambda;
                let mut b = DVector::<f64>::zeros(m);
                for &(k, c) in weights {
                    let u = &self.users[k];
                    let n = u.len() as f64;
                    a += self.gram(k) * c;
                    for i in 0..u.len() {
                        let row = u.row(i);
                        for j in 0..m {
                            b[j] += c * u.y[i] * row[j] / n;
                        }
                    }
                }
                let chol = a.cholesky().ok_or_else(|| Error::Config("normal equations not positive definite".into()))?;
                Ok(chol.solve(&b).as_slice().to_vec())
            }
            TaskKind::Logistic => {
                let mut w = vec![0.0; m];
                for _ in 0..100 {
                    let mut g = DVector::<f64>::from_fn(m, |j, _| lambda * w[j]);
                    let mut h = DMatrix::<f64>::identity(m, m) * lambda;
                    for &(k, c) in weights {
                        let u = &self.users[k];
                        let n = u.len() as f64;
                        for i in 0..u.len() {
                            let row = u.row(i);
                            let z = u.y[i] * dot(row, &w);
                            let s = sigmoid(-z);
                            let coef = -c * u.y[i] * s / n;
                            let curv = c * s * (1.0 - s) / n;
                            for a in 0..m {
                                g[a] += coef * row[a];
                                for b in 0..m {
                                    h[(a, b)] += curv * row[a] * row[b];
                                }
                            }
                        }
                    }
                    let gn = g.norm();
                    let step = h
                        .cholesky()
                        .ok_or_else(|| Error::Config("logistic Hessian not positive definite".into()))?
                        .solve(&g);
                    for j in 0..m {
                        w[j] -= step[j];
                    }
                    if gn < 1e-13 {
                        break;
                    }
                }
                Ok(w)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    /// Per-sample loss of user `k`, sample `i`, including regularization.
    pub fn sample_loss(&self, k: usize, i: usize, w: &[f64]) -> f64 {
        let u = &self.users[k];
        let z = dot(u.row(i), w);
        let reg = 0.5 * self.spec.lambda * dot(w, w);
        match self.spec.kind {
            TaskKind::Linear => 0.5 * (z - u.y[i]).powi(2) + reg,
            TaskKind::Logistic => log1p_exp(-u.y[i] * z) + reg,
        }
    }

    /// Per-sample gradient written into `out`.
    pub fn sample_grad(&self, k: usize, i: usize, w: &[f64], out: &mut [f64]) {
        let u = &self.users[k];
        let row = u.row(i);
        let z = dot(row, w);
        let c = match self.spec.kind {
            TaskKind::Linear => z - u.y[i],
            TaskKind::Logistic => -u.y[i] * sigmoid(-u.y[i] * z),
        };
        for j in 0..w.len() {
            out[j] = c * row[j] + self.spec.lambda * w[j];
        }
    }

    /// Local objective `F_k`.
    pub fn user_loss(&self, k: usize, w: &[f64]) -> f64 {
        let n = self.users[k].len();
        (0..n).map(|i| self.sample_loss(k, i, w)).sum::<f64>() / n as f64
    }

    /// Global objective `F = Σ α_k F_k`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        (0..self.users.len()).map(|k| self.alpha[k] * self.user_loss(k, w)).sum()
    }

    /// Full gradient of `F`.
    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        let m = w.len();
        let mut out = vec![0.0; m];
        let mut g = vec![0.0; m];
        for k in 0..self.users.len() {
            let n = self.users[k].len();
            for i in 0..n {
                self.sample_grad(k, i, w, &mut g);
                for j in 0..m {
                    out[j] += self.alpha[k] * g[j] / n as f64;
                }
            }
        }
        out
    }

    pub fn f_opt(&self) -> f64 {
        self.loss(&self.w_opt)
    }

    /// `ψ = F(w_opt) − Σ α_k min F_k`.
    pub fn heterogeneity_gap(&self) -> f64 {
        let local: f64 = (0..self.users.len()).map(|k| self.alpha[k] * self.user_loss(k, &self.user_opt[k])).sum();
        self.f_opt() - local
    }

    /// `ξ_k`: 1.1 times the largest per-sample gradient norm of user `k`
    /// over the calibration points (`w_0`, the global optimum and every
    /// local optimum).
    pub fn gradient_bounds(&self, w0: &[f64]) -> Vec<f64> {
        let m = self.spec.dim;
        let mut points: Vec<&[f64]> = vec![w0, &self.w_opt];
        points.extend(self.user_opt.iter().map(|v| v.as_slice()));
        let mut g = vec![0.0; m];
        (0..self.users.len())
            .map(|k| {
                let mut best: f64 = 0.0;
                for p in &points {
                    for i in 0..self.users[k].len() {
                        self.sample_grad(k, i, p, &mut g);
                        best = best.max(dot(&g, &g).sqrt());
                    }
                }
                1.1 * best
            })
            .collect()
    }

    /// Fraction of correctly signed predictions (logistic) or `1/(1+MSE)`
    /// (linear), pooled over all users.
    pub fn accuracy_proxy(&self, w: &[f64]) -> f64 {
        let mut hits = 0.0;
        let mut count = 0usize;
        for u in &self.users {
            for i in 0..u.len() {
                let z = dot(u.row(i), w);
                hits += match self.spec.kind {
                    TaskKind::Logistic => ((z >= 0.0) == (u.y[i] > 0.0)) as u8 as f64,
                    TaskKind::Linear => (z - u.y[i]).powi(2),
                };
                count += 1;
            }
        }
        match self.spec.kind {
            TaskKind::Logistic => hits / count as f64,
            TaskKind::Linear => 1.0 / (1.0 + hits / count as f64),
        }
    }
}
