//! Exponent algebra for the blow-up family of `□φ + |φ|^{p−1}φ = 0`.
//!
//! The model solution is `φ = c_p t^{−α_p}` with
//!
//! ```text
//! α_p = 2/(p−1),   β_p = 2p/(p−1),   γ_p = β_p(β_p−1),
//! κ_p = (α_p+β_p)/2 = (p+1)/(p−1),   c_p^{p−1} = 2(p+1)/(p−1)² = α_p(α_p+1).
//! ```
//!
//! `β_p` is the indicial root of the Fuchsian operator `∂_t² − γ_p t^{−2}`;
//! the expansion carries a `t^{β_p} log t` term exactly when `2κ_p ∈ ℕ`
//! (the resonant case).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerance on `|2κ − round(2κ)|` below which p is classified resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub c: f64,
    pub resonant: bool,
}

/// Lorentz boost parameters of the travelling blow-up solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Boost {
    /// velocity, |v| < 1
    pub v: f64,
    /// time offset
    pub big_t: f64,
}

impl Boost {
    pub fn new(v: f64, big_t: f64) -> Result<Self> {
        if !(v.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|v| = {} must be < 1", v.abs())));
        }
        Ok(Boost { v, big_t })
    }
}

/// Raise a positive base to a real power, preferring exact integer powers.
pub fn powr(base: f64, expo: f64) -> f64 {
    let r = expo.round();
    if (expo - r).abs() < 1e-14 && r.abs() <= 64.0 {
        base.powi(r as i32)
    } else {
        base.powf(expo)
    }
}

pub fn derive_exponents(p: f64) -> Result<Exponents> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("p = {p} must be > 1")));
    }
    let alpha = 2.0 / (p - 1.0);
    let beta = 2.0 * p / (p - 1.0);
    let gamma = beta * (beta - 1.0);
    let kappa = (p + 1.0) / (p - 1.0);
    let c = powr(2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0)), 1.0 / (p - 1.0));
    let two_kappa = 2.0 * kappa;
    let resonant = (two_kappa - two_kappa.round()).abs() < RESONANCE_TOL;
    Ok(Exponents { p, alpha, beta, gamma, kappa, c, resonant })
}

impl Exponents {
    /// Indicial factor `q(q−1) − γ`; vanishes exactly at `q = β`.
    pub fn indicial(&self, q: f64) -> f64 {
        q * (q - 1.0) - self.gamma
    }

    /// `|φ|^{p−1}φ` (sign-correct focusing nonlinearity).
    pub fn nonlinearity(&self, phi: f64) -> f64 {
        phi.abs().powf(self.p - 1.0) * phi
    }

    /// Two series bases are compatible when they describe the same power.
    pub fn same_base(&self, other: &Exponents) -> bool {
        (self.p - other.p).abs() < 1e-12
    }
}

/// Model blow-up solution `(φ, ∂_tφ) = (c t^{−α}, −αc t^{−α−1})`.
pub fn model_value(e: &Exponents, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    let phi = e.c * powr(t, -e.alpha);
    let phi_t = -e.alpha * e.c * powr(t, -e.alpha - 1.0);
    Ok((phi, phi_t))
}

/// Boosted model `φ = c_p (1−v²)^{1/(p−1)} (T ± t − v·x)^{−α_p}`.
///
/// `sign` is the ± in the phase; +1 places the singular surface in the past of
/// increasing phase.
pub fn boosted_model_value(e: &Exponents, b: &Boost, t: f64, x: f64, sign: f64) -> Result<f64> {
    let phase = b.big_t + sign * t - b.v * x;
    if !(phase > 0.0) {
        return Err(Error::InvalidParameter(format!("non-positive phase {phase}")));
    }
    let amp = e.c * powr(1.0 - b.v * b.v, 1.0 / (e.p - 1.0));
    Ok(amp * powr(phase, -e.alpha))
}

/// ∂_t of the boosted model, for seeding Cauchy data.
pub fn boosted_model_dt(e: &Exponents, b: &Boost, t: f64, x: f64, sign: f64) -> Result<f64> {
    let phase = b.big_t + sign * t - b.v * x;
    if !(phase > 0.0) {
        return Err(Error::InvalidParameter(format!("non-positive phase {phase}")));
    }
    let amp = e.c * powr(1.0 - b.v * b.v, 1.0 / (e.p - 1.0));
    Ok(-e.alpha * sign * amp * powr(phase, -e.alpha - 1.0))
}
