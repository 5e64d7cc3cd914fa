//! Right-hand sides of the weights-distortion and convergence bounds.

/// `φ = τ max(1, 4ρ_s/ρ_c)`.
pub fn phi(tau: usize, rho_s: f64, rho_c: f64) -> f64 {
    tau as f64 * (4.0 * rho_s / rho_c).max(1.0)
}

/// `9 τ σ² (Σ η²) Σ α_k² ξ_k²`, with `eta_sq_sum` the sum of squared step
/// sizes over the `τ` local steps of the round.
pub fn distortion_bound(tau: usize, sigma2: f64, eta_sq_sum: f64, alpha: &[f64], xi: &[f64]) -> f64 {
    let s: f64 = alpha.iter().zip(xi).map(|(a, x)| a * a * x * x).sum();
    9.0 * tau as f64 * sigma2 * eta_sq_sum * s
}

/// `b = (1 + 36τ²σ²) Σ α_k² ξ_k² + 6 ρ_s ψ + 8 (τ−1)² Σ α_k ξ_k²`.
pub fn convergence_coefficient(tau: usize, sigma2: f64, psi: f64, rho_s: f64, alpha: &[f64], xi: &[f64]) -> f64 {
    let t = tau as f64;
    let sq: f64 = alpha.iter().zip(xi).map(|(a, x)| a * a * x * x).sum();
    let lin: f64 = alpha.iter().zip(xi).map(|(a, x)| a * x * x).sum();
    (1.0 + 36.0 * t * t * sigma2) * sq + 6.0 * rho_s * psi + 8.0 * (t - 1.0).powi(2) * lin
}

/// `ρ_s / (2(t+φ)) · max((ρ_c² + τ² b)/(τ ρ_c), φ |w_0 − w_opt|²)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_bound(
    tau: usize,
    sigma2: f64,
    psi: f64,
    rho_s: f64,
    rho_c: f64,
    alpha: &[f64],
    xi: &[f64],
    w0_dist2: f64,
    t: usize,
) -> f64 {
    let p = phi(tau, rho_s, rho_c);
    let b = convergence_coefficient(tau, sigma2, psi, rho_s, alpha, xi);
    let tf = tau as f64;
    let lead = (rho_c * rho_c + tf * tf * b) / (tf * rho_c);
    rho_s / (2.0 * (t as f64 + p)) * lead.max(p * w0_dist2)
}
