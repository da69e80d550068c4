//! ODE laboratory: the spatially homogeneous equation `φ'' = φ^p` near its
//! blow-up at `t = 0`, in slope-adapted variables.
//!
//! Writing `s(φ) = sqrt(2/(p+1)) φ^{(p+1)/2}` (so `s s' = φ^p`), the variable
//! `δ = ∂_tφ + s(φ)` turns the equation into the triangular system
//!
//! ```text
//! ∂_tφ = δ − s(φ),    ∂_tδ = s'(φ) δ,
//! ```
//!
//! in which the model solution is exactly `δ ≡ 0` and the conserved energy
//! `E = ½(∂_tφ)² − φ^{p+1}/(p+1) = ½ δ(δ − 2s(φ))` is cancellation-free.
//! The scattering datum is read off from the gauge law: with `τ = (φ/c)^{−1/α}`
//! the gauge factor `Ω̊² = (dt/dτ)² − 1 = −2E/(∂_tφ)²` satisfies
//! `Ω̊² = ψ̂ τ^{2κ}` with `ψ̂` constant along the trajectory and linear in ψ.

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::exponents::{powr, Exponents};
use crate::fit::{adaptive_simpson, median, relstd};
use crate::series::binomial_coeffs;
use serde::{Deserialize, Serialize};

/// `s(φ) = sqrt(2/(p+1)) φ^{(p+1)/2}` for `φ > 0`.
pub fn slope_fn(e: &Exponents, phi: f64) -> f64 {
    (2.0 / (e.p + 1.0)).sqrt() * powr(phi, 0.5 * (e.p + 1.0))
}

/// `s'(φ) = sqrt((p+1)/2) φ^{(p−1)/2}`.
pub fn slope_fn_deriv(e: &Exponents, phi: f64) -> f64 {
    (0.5 * (e.p + 1.0)).sqrt() * powr(phi, 0.5 * (e.p - 1.0))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OdeState {
    pub t: f64,
    pub phi: f64,
    /// slope-adapted momentum `δ = ∂_tφ + s(φ)`
    pub delta: f64,
}

impl OdeState {
    pub fn from_phi_phit(e: &Exponents, t: f64, phi: f64, phi_t: f64) -> Result<Self> {
        if !(phi > 0.0) {
            return Err(Error::LeftBasin { t, phi });
        }
        Ok(OdeState { t, phi, delta: phi_t + slope_fn(e, phi) })
    }

    pub fn phi_t(&self, e: &Exponents) -> f64 {
        self.delta - slope_fn(e, self.phi)
    }

    /// Conserved energy `½ δ (δ − 2 s(φ))`, free of the `φ_t²` vs `φ^{p+1}`
    /// cancellation that plagues the textbook form.
    pub fn energy(&self, e: &Exponents) -> f64 {
        0.5 * self.delta * (self.delta - 2.0 * slope_fn(e, self.phi))
    }

    /// Gauge time `τ = (φ/c)^{−1/α}`; equals `t` on the model solution.
    pub fn tau(&self, e: &Exponents) -> f64 {
        powr(self.phi / e.c, -1.0 / e.alpha)
    }

    /// `Ω̊² = (dt/dτ)² − 1 = −2E/(∂_tφ)²`.
    pub fn omega_ring_sq(&self, e: &Exponents) -> f64 {
        let pt = self.phi_t(e);
        -2.0 * self.energy(e) / (pt * pt)
    }
}

#[derive(Debug, Clone)]
pub struct OdeOpts {
    pub rtol: f64,
    pub atol: f64,
    /// step cap `|h| ≤ frac · t`, resolving the approach to `t = 0`
    pub max_step_frac: f64,
    /// when set, the trajectory holds exactly these times (must be sorted in
    /// the direction of integration); otherwise every accepted step is kept
    pub output_times: Option<Vec<f64>>,
    pub max_steps: usize,
}

impl Default for OdeOpts {
    fn default() -> Self {
        OdeOpts {
            rtol: 1e-10,
            atol: 1e-14,
            max_step_frac: 0.1,
            output_times: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub base: Exponents,
    pub states: Vec<OdeState>,
}

fn rhs(e: &Exponents, phi: f64, delta: f64) -> (f64, f64) {
    (delta - slope_fn(e, phi), slope_fn_deriv(e, phi) * delta)
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate from `start` to `t_end` (either direction, both on `t > 0`) with
/// an adaptive embedded Runge-Kutta pair.
pub fn ode_integrate(
    e: &Exponents,
    start: OdeState,
    t_end: f64,
    opts: &OdeOpts,
) -> Result<Trajectory> {
    if !(start.t > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter("ode_integrate requires t > 0".into()));
    }
    let dir = (t_end - start.t).signum();
    if dir == 0.0 {
        return Ok(Trajectory { base: *e, states: vec![start] });
    }
    let mut outputs = opts.output_times.clone().unwrap_or_default();
    outputs.sort_by(|a, b| a.total_cmp(b));
    if dir < 0.0 {
        outputs.reverse();
    }
    let mut next_output = 0usize;
    let store_all = opts.output_times.is_none();

    let mut t = start.t;
    let mut y = [start.phi, start.delta];
    let mut states = Vec::new();
    let record = |states: &mut Vec<OdeState>, t: f64, y: &[f64; 2]| {
        states.push(OdeState { t, phi: y[0], delta: y[1] });
    };
    if store_all {
        record(&mut states, t, &y);
    }
    let mut h = dir * (opts.max_step_frac * t).min((t_end - t).abs());
    for _ in 0..opts.max_steps {
        if (t - t_end) * dir >= -1e-15 * t_end.abs() {
            break;
        }
        h = h.clamp(-opts.max_step_frac * t, opts.max_step_frac * t);
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let mut hit_output = None;
        if next_output < outputs.len() {
            let to = outputs[next_output];
            if (t + h - to) * dir >= 0.0 {
                h = to - t;
                hit_output = Some(to);
            }
        }
        if h.abs() < 1e-17 * t.abs() {
            return Err(Error::StepUnderflow(t));
        }

        // embedded step
        let mut k = [[0.0f64; 2]; 7];
        let (d0, d1) = rhs(e, y[0], y[1]);
        k[0] = [d0, d1];
        let mut failed = false;
        for i in 0..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i + 1) {
                yi[0] += h * A[i][j] * kj[0];
                yi[1] += h * A[i][j] * kj[1];
            }
            if !(yi[0] > 0.0) {
                failed = true;
                break;
            }
            let (d0, d1) = rhs(e, yi[0], yi[1]);
            k[i + 1] = [d0, d1];
        }
        if failed {
            h *= 0.25;
            continue;
        }
        let mut y5 = y;
        let mut y4 = y;
        for (j, kj) in k.iter().enumerate() {
            y5[0] += h * B5[j] * kj[0];
            y5[1] += h * B5[j] * kj[1];
            y4[0] += h * B4[j] * kj[0];
            y4[1] += h * B4[j] * kj[1];
        }
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let scale = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((y5[i] - y4[i]).abs() / scale);
        }
        if !err.is_finite() || !(y5[0] > 0.0) {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            if y[0] > 1e12 {
                return Err(Error::BlowupReached(t));
            }
            match hit_output {
                Some(to) => {
                    t = to; // land exactly
                    record(&mut states, t, &y);
                    next_output += 1;
                }
                None => {
                    if store_all {
                        record(&mut states, t, &y);
                    }
                }
            }
        }
        let grow = if err > 0.0 { 0.9 * powr(err, -0.2) } else { 5.0 };
        h *= grow.clamp(0.2, 5.0);
    }
    if (t - t_end) * dir < -1e-12 * t_end.abs() {
        return Err(Error::StepUnderflow(t));
    }
    Ok(Trajectory { base: *e, states })
}

/// Seed `(φ, δ)` from a spatially homogeneous ansatz at time `t` without the
/// `∂_tφ + s(φ)` cancellation: with `u = Φ/φ₀` and `m = (p+1)/2`,
///
/// ```text
/// δ = s(φ₀) [(m−1)u + Σ_{k≥2} C(m,k) u^k] + φ₀ ∂_t u,
/// ```
///
/// using `s(φ₀) = (α/t) φ₀` exactly on the leading profile.
pub fn seed_from_ansatz_ode(ansatz: &Ansatz, t: f64) -> Result<OdeState> {
    let e = &ansatz.base;
    let phi0 = ansatz
        .phi0
        .eval(t)?
        .as_scalar()
        .ok_or_else(|| Error::InvalidParameter("ODE seeding needs a scalar ansatz".into()))?;
    let corr = ansatz
        .corrections
        .eval(t)?
        .as_scalar()
        .ok_or_else(|| Error::InvalidParameter("ODE seeding needs a scalar ansatz".into()))?;
    let corr_t = ansatz
        .corrections
        .dt()
        .eval(t)?
        .as_scalar()
        .ok_or_else(|| Error::InvalidParameter("ODE seeding needs a scalar ansatz".into()))?;
    let u = corr / phi0;
    if u.abs() > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "ansatz correction u = {u:.3} too large at t = {t}; seed closer to the surface"
        )));
    }
    let u_t = corr_t / phi0 + u * e.alpha / t;
    let m = 0.5 * (e.p + 1.0);
    let coeffs = binomial_coeffs(m, 64);
    let mut series = (m - 1.0) * u;
    let mut uk = u;
    for &c in coeffs.iter().skip(2) {
        uk *= u;
        let term = c * uk;
        series += term;
        if term.abs() < 1e-18 * series.abs().max(1e-300) {
            break;
        }
    }
    let s0 = e.alpha / t * phi0;
    let delta = s0 * series + phi0 * u_t;
    Ok(OdeState { t, phi: phi0 * (1.0 + u), delta })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringData {
    /// gauge-law constant, `Ω̊² = ψ̂ τ^{2κ}`
    pub psi_hat: f64,
    /// series datum, `ψ = ψ̂ c α / (2(2κ+1))`
    pub psi: f64,
    /// blow-up time of the trajectory
    pub t0: f64,
    /// relative spread of `Ω̊² τ^{−2κ}` over the window
    pub spread: f64,
    pub samples: usize,
}

/// Per-state gauge-law values `Ω̊² τ^{−2κ}` for states with `τ` inside the
/// window.
pub fn gauge_law_samples(traj: &Trajectory, tau_lo: f64, tau_hi: f64) -> Vec<f64> {
    let e = &traj.base;
    traj.states
        .iter()
        .filter_map(|s| {
            let tau = s.tau(e);
            if tau >= tau_lo && tau <= tau_hi {
                Some(s.omega_ring_sq(e) * powr(tau, -2.0 * e.kappa))
            } else {
                None
            }
        })
        .collect()
}

/// Recover `(ψ, t₀)` from a trajectory through the gauge law, validating its
/// constancy over the `τ` window.
pub fn extract_scattering(traj: &Trajectory, tau_lo: f64, tau_hi: f64) -> Result<ScatteringData> {
    let e = &traj.base;
    let vals = gauge_law_samples(traj, tau_lo, tau_hi);
    if vals.len() < 8 {
        return Err(Error::TooFewSlices { op: "extract_scattering", have: vals.len(), need: 8 });
    }
    let psi_hat = median(&vals);
    let spread = relstd(&vals);
    if psi_hat.abs() > 1e-300 && spread > 0.01 {
        return Err(Error::GaugeLawViolation { spread });
    }
    let psi = psi_hat * e.c * e.alpha / (2.0 * (2.0 * e.kappa + 1.0));

    // blow-up time: integrate dt/dτ = sqrt(1 + ψ̂ τ^{2κ}) down to the surface
    let anchor = traj
        .states
        .iter()
        .filter(|s| {
            let tau = s.tau(e);
            tau >= tau_lo && tau <= tau_hi
        })
        .max_by(|a, b| a.tau(e).total_cmp(&b.tau(e)))
        .expect("nonempty window");
    let tau_star = anchor.tau(e);
    let two_kappa = 2.0 * e.kappa;
    let integrand = |sigma: f64| {
        let w = 1.0 + psi_hat * powr(sigma, two_kappa);
        w.max(0.0).sqrt()
    };
    let t0 = anchor.t - adaptive_simpson(&integrand, 0.0, tau_star, 1e-13);
    Ok(ScatteringData { psi_hat, psi, t0, spread, samples: vals.len() })
}

/// Pull a trajectory through the scaling symmetry
/// `φ_s(t) = s^α φ(t/s)`: times shrink by `delta_s`, `φ` gains `δ_s^α`,
/// `δ` gains `δ_s^{α+1}`.
pub fn rescale_trajectory(traj: &Trajectory, delta_s: f64) -> Result<Trajectory> {
    if !(delta_s > 0.0) {
        return Err(Error::InvalidParameter(format!("scale {delta_s} must be > 0")));
    }
    let e = &traj.base;
    let sa = powr(delta_s, e.alpha);
    let sa1 = powr(delta_s, e.alpha + 1.0);
    Ok(Trajectory {
        base: traj.base,
        states: traj
            .states
            .iter()
            .map(|s| OdeState { t: s.t / delta_s, phi: sa * s.phi, delta: sa1 * s.delta })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_ansatz, ChartWeights};
    use crate::exponents::{derive_exponents, model_value};
    use crate::series::Coeff;
    use approx::assert_relative_eq;

    fn e3() -> Exponents {
        derive_exponents(3.0).unwrap()
    }

    #[test]
    fn model_is_exact_orbit() {
        // δ ≡ 0 is preserved exactly and φ follows c t^{−α}
        let e = e3();
        let (phi, _) = model_value(&e, 1.0).unwrap();
        let start = OdeState { t: 1.0, phi, delta: 0.0 };
        let opts = OdeOpts { output_times: Some(vec![0.5, 0.1, 0.01]), ..Default::default() };
        let traj = ode_integrate(&e, start, 0.01, &opts).unwrap();
        assert_eq!(traj.states.len(), 3);
        for s in &traj.states {
            assert_eq!(s.delta, 0.0);
            let (exact, _) = model_value(&e, s.t).unwrap();
            assert_relative_eq!(s.phi, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn energy_is_conserved() {
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.2), 10.0).unwrap();
        let start = seed_from_ansatz_ode(&a, 0.01).unwrap();
        let e0 = start.energy(&e);
        let traj = ode_integrate(&e, start, 1e-4, &OdeOpts::default()).unwrap();
        let e1 = traj.states.last().unwrap().energy(&e);
        assert_relative_eq!(e0, e1, max_relative = 1e-9);
        // E = −(αβc + c^p)ψ exactly
        assert_relative_eq!(e0, -5.0 * 2f64.sqrt() * 0.2, max_relative = 1e-10);
    }

    #[test]
    fn seed_matches_naive_at_moderate_t() {
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.2), 10.0).unwrap();
        let t = 0.3;
        let s = seed_from_ansatz_ode(&a, t).unwrap();
        let phi = a.eval(t).unwrap().as_scalar().unwrap();
        let phi_t = a.eval_dt(t).unwrap().as_scalar().unwrap();
        let naive = OdeState::from_phi_phit(&e, t, phi, phi_t).unwrap();
        assert_relative_eq!(s.phi, naive.phi, max_relative = 1e-14);
        assert_relative_eq!(s.delta, naive.delta, max_relative = 1e-10);
    }

    #[test]
    fn gauge_law_and_extraction() {
        let e = e3();
        let psi = 0.2;
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(psi), 10.0).unwrap();
        let start = seed_from_ansatz_ode(&a, 0.01).unwrap();
        let traj = ode_integrate(&e, start, 1e-4, &OdeOpts::default()).unwrap();
        let data = extract_scattering(&traj, 1e-4, 1e-2).unwrap();
        assert!(data.spread < 1e-7, "spread {}", data.spread);
        assert_relative_eq!(data.psi, psi, max_relative = 1e-7);
        assert!(data.t0.abs() < 1e-9, "t0 {}", data.t0);
    }

    #[test]
    fn extraction_nonresonant() {
        let e = derive_exponents(4.0).unwrap();
        let psi = 0.05;
        let n = 2.0 * e.beta + 4.0;
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(psi), n).unwrap();
        let start = seed_from_ansatz_ode(&a, 0.01).unwrap();
        let traj = ode_integrate(&e, start, 1e-4, &OdeOpts::default()).unwrap();
        let data = extract_scattering(&traj, 1e-4, 1e-2).unwrap();
        assert!(data.spread < 1e-7, "spread {}", data.spread);
        assert_relative_eq!(data.psi, psi, max_relative = 1e-6);
    }

    #[test]
    fn shifted_time_recovers_t0() {
        // integrate a trajectory whose blow-up sits at t0 ≠ 0 by shifting time
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.1), 10.0).unwrap();
        let t0 = 0.003;
        let seed = seed_from_ansatz_ode(&a, 0.02).unwrap();
        let shifted = OdeState { t: seed.t + t0, ..seed };
        let traj = ode_integrate(&e, shifted, 4e-3, &OdeOpts::default()).unwrap();
        // τ window must stay above the shifted surface
        let data = extract_scattering(&traj, 1e-3, 1.5e-2).unwrap();
        assert_relative_eq!(data.t0, t0, max_relative = 1e-4);
    }

    #[test]
    fn rescaling_powers() {
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.2), 10.0).unwrap();
        let start = seed_from_ansatz_ode(&a, 0.01).unwrap();
        let traj = ode_integrate(&e, start, 1e-4, &OdeOpts::default()).unwrap();
        let base = extract_scattering(&traj, 1e-4, 1e-2).unwrap();
        let ds = 0.5;
        let scaled = rescale_trajectory(&traj, ds).unwrap();
        let got = extract_scattering(&scaled, 1e-4 / ds, 1e-2 / ds).unwrap();
        assert_relative_eq!(
            got.psi,
            powr(ds, e.alpha + e.beta) * base.psi,
            max_relative = 1e-9
        );
        assert_relative_eq!(got.t0 * ds, base.t0, epsilon = 1e-10);
    }

    #[test]
    fn left_basin_detected() {
        let e = e3();
        assert!(OdeState::from_phi_phit(&e, 1.0, -1.0, 0.0).is_err());
    }
}
