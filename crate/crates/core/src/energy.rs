//! Weighted energy currents for the two halves of the argument.
//!
//! Backward (scattering) direction: on slices `{𝐭 = t − f(x) = const}` the
//! multiplier `Z = 𝐭^{−2q}∂_t` with the zeroth-order correction
//! `Q = (κ_p²/2) 𝐭^{−2q−2} ∂_t` gives the current
//!
//! ```text
//! 𝕁^μ = 𝕋^{μν}Z_ν − Q^μ Φ²
//! ```
//!
//! whose slice energy controls `𝐭^{−2q−2}(|𝐭∂Φ|² + Φ²)` wherever `f′² < 1/2`.
//!
//! Forward (stability) direction: on gauge-time slices `{τ = const}` the
//! growing weight `τ^{2(q̃+1)}` multiplies the transported time vector,
//! `Z = τ^{2(q̃+1)}(∂_t + U∂_x)` and `Q = (κ_p²/2) τ^{2(q̃+1)}(∂_t + U∂_x)`.
//! Both constructions are validated by the divergence theorem: the change of
//! the slice energy must match the bulk integral of `∇·𝕁` to the order of the
//! cross-slice finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{powr, Exponents};
use crate::fit::fornberg_weights;
use crate::grid::SpatialField;

/// Fields on a tilted slice `{t − f(x) = t_loc}`, as produced by a solve in
/// the tilted chart. `phi_t` is the derivative transverse to the slice
/// (equivalently `∂_tΦ` in the standard chart).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiltedSlice {
    pub t_loc: f64,
    pub phi: SpatialField,
    pub phi_t: SpatialField,
}

/// Fields on a gauge-time slice `{τ = const}`, parameterized by `z = x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForwardSlice {
    pub tau: f64,
    pub w: SpatialField,
    pub v: SpatialField,
    pub phi: SpatialField,
    pub phi_tau: SpatialField,
}

/// Build constant-`τ` slices from a stored standard-chart run: Jacobians from
/// the level sets, `φ` interpolated onto them per column, and
/// `∂_τφ|_z = ∂_tφ / W`.
pub fn forward_slices(
    e: &Exponents,
    states: &[crate::solver::WaveState],
    taus: &[f64],
) -> Result<Vec<ForwardSlice>> {
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    let tau_cols = crate::gauge::tau_field(e, states)?;
    taus.iter()
        .map(|&tau| {
            let jf = crate::gauge::jacobian_fields(e, states, tau)?;
            let grid = states[0].phi.grid;
            let mut phi = SpatialField::zeros(grid);
            let mut phi_t = SpatialField::zeros(grid);
            for j in 0..grid.n {
                let tau_col: Vec<f64> = tau_cols.iter().map(|f| f.values[j]).collect();
                let t_star = crate::fit::local_interp(&tau_col, &times, tau, 4)?;
                let phi_col: Vec<f64> = states.iter().map(|s| s.phi.values[j]).collect();
                let phit_col: Vec<f64> = states.iter().map(|s| s.phi_t.values[j]).collect();
                phi.values[j] = crate::fit::local_interp(&times, &phi_col, t_star, 4)?;
                phi_t.values[j] = crate::fit::local_interp(&times, &phit_col, t_star, 4)?;
            }
            let phi_tau = phi_t.div(&jf.w);
            Ok(ForwardSlice { tau, w: jf.w, v: jf.v, phi, phi_tau })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurrentReport {
    /// multiplier weight exponent (q backward, q̃ forward)
    pub q: f64,
    /// (slice coordinate, slice energy) pairs at the interior slices
    pub energies: Vec<(f64, f64)>,
    /// energy difference between the last and first interior slice
    pub flux_change: f64,
    /// bulk integral of the current divergence over the same region
    pub bulk: f64,
    /// |flux_change + bulk| (vanishes in the continuum)
    pub residual: f64,
}

fn integrate(field: &SpatialField) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.spacing()
}

/// trapezoid rule over unevenly spaced slice values
fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Backward slice energy
/// `E(𝐭) = ∫ 𝐭^{−2q} [𝕋_tt + f′𝕋_tx + (κ²/2)𝐭^{−2}Φ²] dy`
/// with `𝕋_tt = ½(Φ_t² + Φ_x²)`, `𝕋_tx = Φ_tΦ_x`, `Φ_x = Φ_y − f′Φ_t`.
pub fn backward_slice_energy(
    e: &Exponents,
    fp: &SpatialField,
    slice: &TiltedSlice,
    q: f64,
) -> Result<f64> {
    if slice.t_loc <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "backward energy needs 𝐭 > 0, got {}",
            slice.t_loc
        )));
    }
    let d = backward_density(e, fp, slice, q);
    Ok(integrate(&d))
}

fn backward_density(e: &Exponents, fp: &SpatialField, slice: &TiltedSlice, q: f64) -> SpatialField {
    let tl = slice.t_loc;
    let phi_t = &slice.phi_t;
    let phi_x = slice.phi.dx().sub(&fp.mul(phi_t));
    let t_tt = phi_t.mul(phi_t).add(&phi_x.mul(&phi_x)).scale(0.5);
    let t_tx = phi_t.mul(&phi_x);
    let pot = slice.phi.mul(&slice.phi).scale(0.5 * e.kappa * e.kappa * powr(tl, -2.0));
    t_tt.add(&fp.mul(&t_tx)).add(&pot).scale(powr(tl, -2.0 * q))
}

/// Pointwise ratio of the backward energy density to the coercive quantity
/// `𝐭^{−2q−2}(|𝐭Φ_𝐭|² + |𝐭Φ_y|² + Φ²)`; bounded above and below wherever the
/// slice is sufficiently spacelike (`f′² < 1/2`).
pub fn coercivity_ratios(
    e: &Exponents,
    fp: &SpatialField,
    slice: &TiltedSlice,
    q: f64,
) -> Result<(f64, f64)> {
    let d = backward_density(e, fp, slice, q);
    let tl = slice.t_loc;
    let phi_y = slice.phi.dx();
    let vnorm = slice
        .phi_t
        .mul(&slice.phi_t)
        .scale(tl * tl)
        .add(&phi_y.mul(&phi_y).scale(tl * tl))
        .add(&slice.phi.mul(&slice.phi))
        .scale(powr(tl, -2.0 * q - 2.0));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for j in 0..d.grid.n {
        if fp.values[j] * fp.values[j] >= 0.5 {
            continue;
        }
        if vnorm.values[j] < 1e-300 {
            continue;
        }
        let r = d.values[j] / vnorm.values[j];
        lo = lo.min(r);
        hi = hi.max(r);
        any = true;
    }
    if !any {
        return Err(Error::InvalidParameter("no admissible points for coercivity".into()));
    }
    Ok((lo, hi))
}

/// Divergence of the backward current,
/// `∇·𝕁 = 2q𝐭^{−2q−1}(𝕋_tt + f′𝕋_tx) + κ²(q+1)𝐭^{−2q−3}Φ²
///        − κ²𝐭^{−2q−2}ΦΦ_t + 𝐭^{−2q}(□Φ)Φ_t`,
/// with `□Φ` reconstructed from the slice family.
fn backward_divergence(
    e: &Exponents,
    fp: &SpatialField,
    fpp: &SpatialField,
    slice: &TiltedSlice,
    phi_ttl: &SpatialField,
    q: f64,
) -> SpatialField {
    let tl = slice.t_loc;
    let k2 = e.kappa * e.kappa;
    let phi_t = &slice.phi_t;
    let phi_x = slice.phi.dx().sub(&fp.mul(phi_t));
    let t_tt = phi_t.mul(phi_t).add(&phi_x.mul(&phi_x)).scale(0.5);
    let t_tx = phi_t.mul(&phi_x);
    // □Φ = −(1−f′²)Φ_𝐭𝐭 − f″Φ_𝐭 − 2f′∂_yΦ_𝐭 + Φ_yy
    let w = fp.map(|s| 1.0 - s * s);
    let box_phi = w
        .mul(phi_ttl)
        .scale(-1.0)
        .sub(&fpp.mul(phi_t))
        .sub(&fp.mul(&phi_t.dx()).scale(2.0))
        .add(&slice.phi.dxx());
    t_tt.add(&fp.mul(&t_tx))
        .scale(2.0 * q * powr(tl, -2.0 * q - 1.0))
        .add(&slice.phi.mul(&slice.phi).scale(k2 * (q + 1.0) * powr(tl, -2.0 * q - 3.0)))
        .sub(&slice.phi.mul(phi_t).scale(k2 * powr(tl, -2.0 * q - 2.0)))
        .add(&box_phi.mul(phi_t).scale(powr(tl, -2.0 * q)))
}

/// Check the backward current over a family of tilted slices: slice energies,
/// their change across the family, and the matching bulk divergence integral.
/// The residual converges at second order in the slice spacing.
pub fn backward_current_report(
    e: &Exponents,
    fp: &SpatialField,
    fpp: &SpatialField,
    slices: &[TiltedSlice],
    q: f64,
) -> Result<CurrentReport> {
    if slices.len() < 5 {
        return Err(Error::TooFewSlices { op: "backward_current_report", have: slices.len(), need: 5 });
    }
    let ts: Vec<f64> = slices.iter().map(|s| s.t_loc).collect();
    let interior = 1..slices.len() - 1;
    let mut energies = Vec::new();
    let mut div_int = Vec::new();
    let mut div_ts = Vec::new();
    for i in interior {
        energies.push((ts[i], backward_slice_energy(e, fp, &slices[i], q)?));
        let nodes = [ts[i - 1], ts[i], ts[i + 1]];
        let wts = fornberg_weights(&nodes, ts[i], 2);
        let phi_ttl = slices[i - 1]
            .phi
            .scale(wts[0])
            .add(&slices[i].phi.scale(wts[1]))
            .add(&slices[i + 1].phi.scale(wts[2]));
        let div = backward_divergence(e, fp, fpp, &slices[i], &phi_ttl, q);
        div_int.push(integrate(&div));
        div_ts.push(ts[i]);
    }
    let flux_change = energies.last().unwrap().1 - energies.first().unwrap().1;
    let bulk = trapezoid(&div_ts, &div_int);
    Ok(CurrentReport { q, energies, flux_change, bulk, residual: (flux_change + bulk).abs() })
}

/// Forward slice energy
/// `ℰ(τ) = τ^{2(q̃+1)} ∫ [(1+U²)𝕋_tt + 2U𝕋_tx + (κ²/2)(1−U²)Φ²] dz`
/// with `Φ_t = WΦ_τ` and `Φ_x = Φ_z − VΦ_τ`; manifestly positive for |U| < 1
/// and exactly proportional to `τ^{2q̃+2}` on z-independent boosted data.
pub fn forward_slice_energy(e: &Exponents, slice: &ForwardSlice, q_tilde: f64) -> Result<f64> {
    if slice.tau <= 0.0 {
        return Err(Error::InvalidParameter(format!("forward energy needs τ > 0, got {}", slice.tau)));
    }
    let (jt, jx) = forward_current(e, slice, q_tilde);
    let u = slice.v.div(&slice.w);
    Ok(-integrate(&jt.sub(&u.mul(&jx))))
}

/// components `(𝕁^t, 𝕁^x)` of the forward current on a slice
fn forward_current(e: &Exponents, slice: &ForwardSlice, q_tilde: f64) -> (SpatialField, SpatialField) {
    let weight = powr(slice.tau, 2.0 * (q_tilde + 1.0));
    let phi_t = slice.w.mul(&slice.phi_tau);
    let phi_x = slice.phi.dx().sub(&slice.v.mul(&slice.phi_tau));
    let t_tt = phi_t.mul(&phi_t).add(&phi_x.mul(&phi_x)).scale(0.5);
    let t_tx = phi_t.mul(&phi_x);
    let u = slice.v.div(&slice.w);
    let k2h = 0.5 * e.kappa * e.kappa;
    let phi2 = slice.phi.mul(&slice.phi);
    // Z^μ = τ^{2(q̃+1)}(1, U), Q^μ = (κ²/2)τ^{2(q̃+1)}(1, U), 𝕁 = 𝕋Z − QΦ²
    let jt = t_tt.add(&u.mul(&t_tx)).add(&phi2.scale(k2h)).scale(-weight);
    let jx = t_tx.add(&u.mul(&t_tt)).sub(&u.mul(&phi2).scale(k2h)).scale(weight);
    (jt, jx)
}

/// Check the forward current across `τ`-slices. The divergence is evaluated
/// through the chain rule `∂_t = W∂_τ`, `∂_x = ∂_z − V∂_τ` with second-order
/// differences across slices, and the bulk measure is `W^{−1} dz dτ`.
pub fn forward_current_report(
    e: &Exponents,
    slices: &[ForwardSlice],
    q_tilde: f64,
) -> Result<CurrentReport> {
    if slices.len() < 5 {
        return Err(Error::TooFewSlices { op: "forward_current_report", have: slices.len(), need: 5 });
    }
    let taus: Vec<f64> = slices.iter().map(|s| s.tau).collect();
    let currents: Vec<(SpatialField, SpatialField)> =
        slices.iter().map(|s| forward_current(e, s, q_tilde)).collect();
    let mut energies = Vec::new();
    let mut div_int = Vec::new();
    let mut div_taus = Vec::new();
    for i in 1..slices.len() - 1 {
        energies.push((taus[i], forward_slice_energy(e, &slices[i], q_tilde)?));
        let nodes = [taus[i - 1], taus[i], taus[i + 1]];
        let wts = fornberg_weights(&nodes, taus[i], 1);
        let dtau = |k: usize| -> SpatialField {
            let pick = |c: &(SpatialField, SpatialField)| if k == 0 { c.0.clone() } else { c.1.clone() };
            pick(&currents[i - 1])
                .scale(wts[0])
                .add(&pick(&currents[i]).scale(wts[1]))
                .add(&pick(&currents[i + 1]).scale(wts[2]))
        };
        let jt_tau = dtau(0);
        let jx_tau = dtau(1);
        let s = &slices[i];
        let div = s
            .w
            .mul(&jt_tau)
            .add(&currents[i].1.dx())
            .sub(&s.v.mul(&jx_tau));
        div_int.push(integrate(&div.div(&s.w)));
        div_taus.push(taus[i]);
    }
    let flux_change = energies.last().unwrap().1 - energies.first().unwrap().1;
    let bulk = trapezoid(&div_taus, &div_int);
    Ok(CurrentReport { q: q_tilde, energies, flux_change, bulk, residual: (flux_change + bulk).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derive_exponents;
    use crate::grid::Grid1D;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(2.0 * PI, n).unwrap()
    }

    fn lin(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    // Φ = 𝐭 on a flat surface: density is (1 + κ²)/2 · 𝐭^{−2q} pointwise
    #[test]
    fn backward_closed_form_oracle() {
        let e = derive_exponents(3.0).unwrap();
        let g = grid(64);
        let fp = SpatialField::zeros(g);
        let q = e.kappa;
        for tl in [0.5, 1.0, 2.0] {
            let slice = TiltedSlice {
                t_loc: tl,
                phi: SpatialField::constant(g, tl),
                phi_t: SpatialField::constant(g, 1.0),
            };
            let en = backward_slice_energy(&e, &fp, &slice, q).unwrap();
            let expect = 0.5 * (1.0 + e.kappa * e.kappa) * powr(tl, -2.0 * q) * g.length;
            assert_relative_eq!(en, expect, max_relative = 1e-12);
        }
    }

    fn curved_family(e_p: f64, g: Grid1D, tls: &[f64]) -> (SpatialField, SpatialField, Vec<TiltedSlice>) {
        let fp = SpatialField::from_fn(g, |x| 0.05 * x.cos());
        let fpp = SpatialField::from_fn(g, |x| -0.05 * x.sin());
        let slices = tls
            .iter()
            .map(|&tl| TiltedSlice {
                t_loc: tl,
                phi: SpatialField::from_fn(g, |x| x.sin() * (1.3 * tl).cos() + tl * tl),
                phi_t: SpatialField::from_fn(g, |x| -1.3 * x.sin() * (1.3 * tl).sin() + 2.0 * tl),
            })
            .collect();
        let _ = e_p;
        (fp, fpp, slices)
    }

    #[test]
    fn backward_divergence_residual_second_order() {
        let e = derive_exponents(3.0).unwrap();
        let g = grid(64);
        let q = e.kappa;
        let mut residuals = Vec::new();
        for n_slices in [17usize, 33] {
            let (fp, fpp, slices) = curved_family(3.0, g, &lin(1.0, 2.0, n_slices));
            let rep = backward_current_report(&e, &fp, &fpp, &slices, q).unwrap();
            residuals.push(rep.residual);
        }
        let order = (residuals[0] / residuals[1]).log2();
        assert!(order > 1.7, "order {order}, residuals {residuals:?}");
    }

    #[test]
    fn backward_coercive_where_spacelike() {
        for p in [3.0, 4.0] {
            let e = derive_exponents(p).unwrap();
            let g = grid(64);
            let fp = SpatialField::from_fn(g, |x| 0.05 * x.cos());
            let q = e.kappa;
            for tl in [0.3, 1.0] {
                let slice = TiltedSlice {
                    t_loc: tl,
                    phi: SpatialField::from_fn(g, |x| 0.7 + 0.3 * (2.0 * x).sin()),
                    phi_t: SpatialField::from_fn(g, |x| 0.4 * x.cos() - 0.9),
                };
                let (lo, hi) = coercivity_ratios(&e, &fp, &slice, q).unwrap();
                assert!(lo >= 0.25, "p={p} t={tl}: lower {lo}");
                assert!(hi <= 4.0, "p={p} t={tl}: upper {hi}");
            }
        }
    }

    #[test]
    fn forward_boosted_exact_power_law() {
        let e = derive_exponents(3.0).unwrap();
        let g = grid(32);
        let q_tilde = 4.0 * e.kappa;
        let mk = |tau: f64| ForwardSlice {
            tau,
            w: SpatialField::constant(g, 1.25),
            v: SpatialField::constant(g, 0.75),
            phi: SpatialField::constant(g, 0.25),
            phi_tau: SpatialField::zeros(g),
        };
        let e0 = forward_slice_energy(&e, &mk(0.5), q_tilde).unwrap();
        let e1 = forward_slice_energy(&e, &mk(1.0), q_tilde).unwrap();
        let ratio = e0 / e1;
        let expect = powr(0.5, 2.0 * q_tilde + 2.0);
        assert_relative_eq!(ratio, expect, max_relative = 1e-12);
        assert!(e0 > 0.0 && e1 > 0.0);
    }

    #[test]
    fn forward_divergence_residual_second_order() {
        let e = derive_exponents(3.0).unwrap();
        let g = grid(64);
        let q_tilde = 2.0;
        // slices of the genuine map τ(t,x) = t(1 + 0.1 sin x): the chain rule
        // used for the bulk divergence needs W, V from an integrable gauge
        let family = |n_slices: usize| -> Vec<ForwardSlice> {
            lin(1.0, 2.0, n_slices)
                .iter()
                .map(|&tau| ForwardSlice {
                    tau,
                    w: SpatialField::from_fn(g, |z| 1.0 + 0.1 * z.sin()),
                    v: SpatialField::from_fn(g, |z| {
                        -0.1 * z.cos() * tau / (1.0 + 0.1 * z.sin())
                    }),
                    phi: SpatialField::from_fn(g, |z| 0.25 + 0.05 * (2.0 * z).cos() * tau * tau),
                    phi_tau: SpatialField::from_fn(g, |z| 0.1 * (2.0 * z).cos() * tau),
                })
                .collect()
        };
        let mut residuals = Vec::new();
        for n_slices in [17usize, 33] {
            let rep = forward_current_report(&e, &family(n_slices), q_tilde).unwrap();
            residuals.push(rep.residual);
        }
        let order = (residuals[0] / residuals[1]).log2();
        assert!(order > 1.7, "order {order}, residuals {residuals:?}");
    }
}
