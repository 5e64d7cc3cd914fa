//! Special functions not covered by `statrs`.

/// Modified Bessel function of the second kind `K_nu(z)` for real `nu` and
/// `z > 0`, from `∫_0^∞ exp(-z cosh u) cosh(nu u) du` with the trapezoid rule.
/// The integrand is analytic in a strip, so the rule converges geometrically.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    ln_bessel_k(nu, z).exp()
}

/// `ln K_nu(z)`; finite where `K_nu` itself over- or underflows.
pub fn ln_bessel_k(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0, "bessel_k requires z > 0");
    let nu = nu.abs();
    // integrand peaks at sinh u = nu / z with width about (nu^2 + z^2)^(-1/4)
    let peak = (nu / z).asinh();
    let g = |u: f64| -z * u.cosh() + nu * u;
    let top = g(peak);
    let h = 0.05f64.min(0.2 / (nu * nu + z * z).sqrt().sqrt());
    let f = |u: f64| (g(u) - top).exp() * 0.5 * (1.0 + (-2.0 * nu * u).exp());
    let mut sum = 0.5 * f(0.0);
    let mut k = 1;
    loop {
        let u = k as f64 * h;
        let v = f(u);
        sum += v;
        if (v < 1e-18 * sum && u > peak) || k > 2_000_000 {
            break;
        }
        k += 1;
    }
    top + (sum * h).ln()
}

/// `z^a K_a(z)`, continuous at `z = 0` where it equals `2^(a-1) Γ(a)`.
pub fn scaled_bessel_k(a: f64, z: f64) -> f64 {
    ln_scaled_bessel_k(a, z).exp()
}

/// `ln(z^a K_a(z))` for `a > 0`.
pub fn ln_scaled_bessel_k(a: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return (a - 1.0) * std::f64::consts::LN_2 + statrs::function::gamma::ln_gamma(a);
    }
    a * z.ln() + ln_bessel_k(a, z)
}
