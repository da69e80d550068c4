//! Blow-up foliation geometry recovered from numerical solutions.
//!
//! The gauge time is defined through the solution itself, `φ =: c_p τ^{−α_p}`,
//! so the blow-up surface is the zero level set of `τ` and the Jacobian
//! fields
//!
//! ```text
//! W = ∂_tτ,   V = −∂_xτ,   Ω² = W² − V²,   U = V/W,   Ω̊² = Ω² − 1
//! ```
//!
//! (sign convention fixed by `W ≡ 1` on the model) carry the scattering data.
//! The surface `f` comes from per-column extrapolation of `t ↦ τ(t,x)` to
//! `τ = 0`; the datum `ψ` from fitting the `𝐭^{β}` tail of the solution after
//! subtracting the surface-determined part of the expansion.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, Ansatz, ChartWeights};
use crate::error::{Error, Result};
use crate::exponents::{powr, Exponents};
use crate::fit::{fornberg_weights, local_interp, median, poly_deriv, poly_eval, poly_root, polyfit, weighted_lsq};
use crate::grid::SpatialField;
use crate::series::Coeff;
use crate::solver::WaveState;

/// `τ = (φ/c_p)^{−1/α_p}` pointwise; requires `φ > 0`.
pub fn tau_of_phi(e: &Exponents, phi: &SpatialField) -> Result<SpatialField> {
    let mut out = phi.clone();
    for v in &mut out.values {
        if !(*v > 0.0) {
            return Err(Error::InvalidParameter(format!("non-positive φ = {v} in τ-gauge")));
        }
        *v = powr(*v / e.c, -1.0 / e.alpha);
    }
    Ok(out)
}

/// `τ(t, x)` sampled on every slice of a run.
pub fn tau_field(e: &Exponents, states: &[WaveState]) -> Result<Vec<SpatialField>> {
    states.iter().map(|s| tau_of_phi(e, &s.phi)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianFields {
    pub tau_slice: f64,
    pub w: SpatialField,
    pub v: SpatialField,
    pub omega2: SpatialField,
    pub u: SpatialField,
    pub omega_ring2: SpatialField,
}

fn slice_times(states: &[WaveState]) -> Vec<f64> {
    states.iter().map(|s| s.time).collect()
}

/// Jacobian fields on the level set `τ = tau_slice`, by cubic interpolation in
/// `t` per grid column and 4th/5-point stencils for the derivatives.
pub fn jacobian_fields(
    e: &Exponents,
    states: &[WaveState],
    tau_slice: f64,
) -> Result<JacobianFields> {
    if states.len() < 5 {
        return Err(Error::TooFewSlices { op: "jacobian_fields", have: states.len(), need: 5 });
    }
    let taus = tau_field(e, states)?;
    let tau_x: Vec<SpatialField> = taus.iter().map(|f| f.dx()).collect();
    let times = slice_times(states);
    let grid = states[0].phi.grid;
    let n = grid.n;
    let mut w = SpatialField::zeros(grid);
    let mut v = SpatialField::zeros(grid);
    for j in 0..n {
        let tau_col: Vec<f64> = taus.iter().map(|f| f.values[j]).collect();
        let range = tau_col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
        if tau_slice < range.0 || tau_slice > range.1 {
            return Err(Error::LevelSetOutOfRange(tau_slice));
        }
        // t on the level set: interpolate t as a function of τ (monotone)
        let t_star = local_interp(&tau_col, &times, tau_slice, 4)?;
        // ∂_tτ from the 5 nearest slices
        let mut idx: Vec<usize> = (0..times.len()).collect();
        idx.sort_by(|&a, &b| {
            (times[a] - t_star).abs().total_cmp(&(times[b] - t_star).abs())
        });
        let sel: Vec<usize> = idx.into_iter().take(5.min(times.len())).collect();
        let nodes: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
        let wts = fornberg_weights(&nodes, t_star, 1);
        let dtau_dt: f64 = sel.iter().zip(&wts).map(|(&i, &c)| c * tau_col[i]).sum();
        // ∂_xτ on the level set, interpolated in t
        let taux_col: Vec<f64> = tau_x.iter().map(|f| f.values[j]).collect();
        let taux = local_interp(&times, &taux_col, t_star, 4)?;
        w.values[j] = dtau_dt;
        v.values[j] = -taux;
    }
    let omega2 = w.mul(&w).sub(&v.mul(&v));
    let u = v.div(&w);
    let omega_ring2 = omega2.map(|x| x - 1.0);
    Ok(JacobianFields { tau_slice, w, v, omega2, u, omega_ring2 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportResiduals {
    /// L² residual of `τ∂_τU = −W^{−2} τ∂_zW` (the sign follows from the
    /// convention `V = −∂_xτ` used throughout: `dt = W^{−1}dτ + U dz` is
    /// closed, so `∂_τU = ∂_z(W^{−1})`)
    pub r_u: f64,
    /// L² residual of `τ∂_τΩ̊² = 2κ_p Ω̊² − 2τ∂_zV`, in the same convention
    pub r_omega: f64,
    /// integrability constraint; identically zero with one spatial dimension
    pub r_integrability: f64,
}

/// Residuals of the transport system across a family of constant-`τ` slices
/// (`∂_z` along slices, `∂_τ` across).
pub fn transport_residuals(
    e: &Exponents,
    fields: &[JacobianFields],
) -> Result<TransportResiduals> {
    if fields.len() < 3 {
        return Err(Error::TooFewSlices { op: "transport_residuals", have: fields.len(), need: 3 });
    }
    let taus: Vec<f64> = fields.iter().map(|f| f.tau_slice).collect();
    let mut ru_acc = 0.0;
    let mut rom_acc = 0.0;
    let mut count = 0usize;
    for i in 1..fields.len() - 1 {
        let tau = taus[i];
        let nodes = [taus[i - 1], taus[i], taus[i + 1]];
        let wts = fornberg_weights(&nodes, tau, 1);
        let du_dtau = fields[i - 1]
            .u
            .scale(wts[0])
            .add(&fields[i].u.scale(wts[1]))
            .add(&fields[i + 1].u.scale(wts[2]));
        let dom_dtau = fields[i - 1]
            .omega_ring2
            .scale(wts[0])
            .add(&fields[i].omega_ring2.scale(wts[1]))
            .add(&fields[i + 1].omega_ring2.scale(wts[2]));
        let f = &fields[i];
        let ru = du_dtau
            .scale(tau)
            .add(&f.w.dx().div(&f.w.mul(&f.w)).scale(tau));
        let rom = dom_dtau
            .scale(tau)
            .sub(&f.omega_ring2.scale(2.0 * e.kappa))
            .add(&f.v.dx().scale(2.0 * tau));
        ru_acc += ru.l2_norm().powi(2);
        rom_acc += rom.l2_norm().powi(2);
        count += 1;
    }
    Ok(TransportResiduals {
        r_u: (ru_acc / count as f64).sqrt(),
        r_omega: (rom_acc / count as f64).sqrt(),
        r_integrability: 0.0,
    })
}

/// L² residual of the gauge-time equation
/// `−∂_t²τ + ∂_x²τ = κ_p τ^{−1}(1 − (∂_tτ)² + (∂_xτ)²)`,
/// averaged over the interior slices.
pub fn nlw_tau_residual(e: &Exponents, states: &[WaveState]) -> Result<f64> {
    if states.len() < 5 {
        return Err(Error::TooFewSlices { op: "nlw_tau_residual", have: states.len(), need: 5 });
    }
    let taus = tau_field(e, states)?;
    let times = slice_times(states);
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 2..states.len() - 2 {
        let nodes = [times[i - 2], times[i - 1], times[i], times[i + 1], times[i + 2]];
        let w1 = fornberg_weights(&nodes, times[i], 1);
        let w2 = fornberg_weights(&nodes, times[i], 2);
        let window = [&taus[i - 2], &taus[i - 1], &taus[i], &taus[i + 1], &taus[i + 2]];
        let mut tau_t = SpatialField::zeros(taus[i].grid);
        let mut tau_tt = SpatialField::zeros(taus[i].grid);
        for (k, f) in window.iter().enumerate() {
            tau_t = tau_t.add(&f.scale(w1[k]));
            tau_tt = tau_tt.add(&f.scale(w2[k]));
        }
        let tau_xx = taus[i].dxx();
        let tau_x = taus[i].dx();
        let grad_sq = tau_x.mul(&tau_x).sub(&tau_t.mul(&tau_t));
        let res = tau_tt
            .scale(-1.0)
            .add(&tau_xx)
            .sub(&taus[i].map(|t| e.kappa / t).mul(&grad_sq.map(|g| 1.0 + g)));
        acc += res.l2_norm().powi(2);
        count += 1;
    }
    Ok((acc / count as f64).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceExtraction {
    pub f: SpatialField,
    /// fitted `dτ/dt` at the root, per column (equals `(1−f′²)^{−1/2}` exactly
    /// on solutions with the claimed expansion)
    pub slope: SpatialField,
    /// median |slope − (1−f′²)^{−1/2}| over columns
    pub slope_consistency: f64,
    /// largest extrapolation distance relative to the fit window length
    pub max_extrapolation: f64,
}

/// Extract the blow-up surface by fitting `t ↦ τ(t,x)` per column with a
/// quadratic over the slices whose minimal `τ` lies in `window` (default: the
/// smallest resolved decade) and extrapolating to the root `τ = 0`.
pub fn extract_surface(
    e: &Exponents,
    states: &[WaveState],
    window: Option<(f64, f64)>,
) -> Result<SurfaceExtraction> {
    let taus = tau_field(e, states)?;
    let times = slice_times(states);
    let grid = states[0].phi.grid;
    let mut f = SpatialField::zeros(grid);
    let mut slope = SpatialField::zeros(grid);
    let mut max_extrap = 0.0f64;
    for j in 0..grid.n {
        // select the fit window column by column so the extrapolation to the
        // root stays short even when the surface varies a lot across the grid
        let tau_col: Vec<f64> = taus.iter().map(|fld| fld.values[j]).collect();
        let col_min = tau_col.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let (lo, hi) = window.unwrap_or((col_min, 10.0 * col_min));
        let sel: Vec<usize> =
            (0..states.len()).filter(|&i| tau_col[i] >= lo && tau_col[i] <= hi).collect();
        if sel.len() < 4 {
            return Err(Error::TooFewSlices { op: "extract_surface", have: sel.len(), need: 4 });
        }
        let ts: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
        let ys: Vec<f64> = sel.iter().map(|&i| tau_col[i]).collect();
        let t_lo = ts.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let t_hi = ts.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let span = t_hi - t_lo;
        let coeffs = polyfit(&ts, &ys, 2)?;
        // root below the window: τ grows with t, start from a linear estimate
        let guess = ts[0] - ys[0] / poly_eval(&poly_deriv(&coeffs), ts[0]).max(1e-12);
        let root = poly_root(&coeffs, guess)?;
        let extrap = (t_lo - root).abs() / span;
        max_extrap = max_extrap.max(extrap);
        if extrap > 3.0 {
            return Err(Error::ExtrapolationTooFar { dist: (t_lo - root).abs(), window: span });
        }
        f.values[j] = root;
        slope.values[j] = poly_eval(&poly_deriv(&coeffs), root);
    }
    let fp = f.dx();
    let diffs: Vec<f64> = (0..grid.n)
        .map(|j| {
            let expect = 1.0 / (1.0 - fp.values[j] * fp.values[j]).max(1e-12).sqrt();
            (slope.values[j] - expect).abs()
        })
        .collect();
    Ok(SurfaceExtraction { f, slope, slope_consistency: median(&diffs), max_extrapolation: max_extrap })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub window: (f64, f64),
    /// per-column sample counts inside the window
    pub samples: Vec<usize>,
    /// per-column weighted RMS of the remainder before the ψ fit
    pub prefit_rms: Vec<f64>,
    /// and after
    pub postfit_rms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeScatteringData {
    pub f: SpatialField,
    pub psi: SpatialField,
    pub psi_log: Option<SpatialField>,
    /// estimated error of the supplied surface, from the `𝐭^{−α−1}` component
    /// of the remainder; subtracting it from `f` refines the surface
    pub surface_correction: SpatialField,
    pub fit: FitReport,
}

/// Recover `ψ(x)` from slices: rebuild the surface-determined expansion from
/// the extracted `f` with `ψ = 0`, subtract, and fit the remainder against
/// `𝐭^β` (plus `𝐭^β log 𝐭` when resonant) per column, weighted by `𝐭^{−β}`.
pub fn extract_scattering_pde(
    e: &Exponents,
    states: &[WaveState],
    f: &SpatialField,
    window: (f64, f64),
) -> Result<PdeScatteringData> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad fit window [{lo}, {hi}]")));
    }
    // the 𝐭^{q−α} terms with q ≤ 2κ are determined by f; rebuilding them at
    // high order removes them to well below the fit window's ψ signal
    let weights = ChartWeights::from_surface(f)?;
    let order = 2.0 * e.beta + 4.0;
    let zero = Coeff::Field(SpatialField::zeros(f.grid));
    let reference = build_ansatz(e, &weights, &zero, order)?;
    let data = extract_scattering_against(e, states, f, &reference, window)?;
    // misfit guard: the fit must actually explain the remainder unless the
    // remainder is already at the noise floor
    let med_pre = median(&data.fit.prefit_rms);
    let med_post = median(&data.fit.postfit_rms);
    let psi_scale = data
        .psi
        .sup_norm()
        .max(data.psi_log.as_ref().map(|f| f.sup_norm()).unwrap_or(0.0));
    if med_pre > 1e-10 && psi_scale > 1e-8 && med_post > 0.5 * med_pre {
        return Err(Error::FitMisfit { measured: med_post, expected: 0.5 * med_pre });
    }
    Ok(data)
}

/// Fit the remainder against a caller-supplied reference ansatz. The basis
/// holds `𝐭^{−α−1}` besides `𝐭^β` (and `𝐭^β log 𝐭` when resonant): an error
/// `δf` in the surface shows up in the remainder as `αc w^{1/(p−1)} δf
/// 𝐭^{−α−1}` to leading order and would otherwise swamp the `ψ` signal, which
/// is smaller by `𝐭^{α+1+β}`. The fitted coefficient doubles as a surface
/// correction. The returned `psi` is the increment relative to whatever `ψ`
/// the reference was built with.
pub fn extract_scattering_against(
    e: &Exponents,
    states: &[WaveState],
    f: &SpatialField,
    reference: &Ansatz,
    window: (f64, f64),
) -> Result<PdeScatteringData> {
    let (lo, hi) = window;
    let grid = states[0].phi.grid;
    if grid.n != f.grid.n {
        return Err(Error::MismatchedGrids(grid.n, f.grid.n));
    }
    let n = grid.n;
    let resonant = e.resonant;
    let mut psi = SpatialField::zeros(grid);
    let mut psi_log = SpatialField::zeros(grid);
    let mut correction = SpatialField::zeros(grid);
    let mut samples = vec![0usize; n];
    let mut prefit = vec![0.0; n];
    let mut postfit = vec![0.0; n];
    let fp = f.dx();
    for j in 0..n {
        // slide the window up for columns whose closest approach to the
        // surface is above the requested lower edge (keeping its log width)
        let t_min = states
            .iter()
            .map(|s| s.time - f.values[j])
            .filter(|&t| t > 0.0)
            .fold(f64::INFINITY, f64::min);
        let lo_j = lo.max(t_min * (1.0 + 1e-12));
        let hi_j = lo_j * (hi / lo);
        let mut tt = Vec::new();
        let mut rem = Vec::new();
        for s in states {
            let t_loc = s.time - f.values[j];
            if t_loc < lo_j || t_loc > hi_j {
                continue;
            }
            let pred = reference.phi.eval_at_column(j, t_loc)?;
            tt.push(t_loc);
            rem.push(s.phi.values[j] - pred);
        }
        let need = if resonant { 5 } else { 4 };
        if tt.len() < need {
            return Err(Error::TooFewSlices { op: "extract_scattering_pde", have: tt.len(), need });
        }
        samples[j] = tt.len();
        let wgt: Vec<f64> = tt.iter().map(|&t| powr(t, -e.beta)).collect();
        let mut basis =
            vec![tt.iter().map(|&t| powr(t, -e.alpha - 1.0)).collect::<Vec<f64>>()];
        basis.push(tt.iter().map(|&t| powr(t, e.beta)).collect());
        if resonant {
            basis.push(tt.iter().map(|&t| powr(t, e.beta) * t.ln()).collect());
        }
        let coef = weighted_lsq(&basis, &rem, &wgt)?;
        // 𝐭̂ = 𝐭 − δ with δ = f_j − f_true,j, so the remainder carries
        // +δ·∂_𝐭φ₀ = −δ·αc w^{1/(p−1)} 𝐭^{−α−1}; flip to get δ itself
        let w_pow = powr(1.0 - fp.values[j] * fp.values[j], 1.0 / (e.p - 1.0));
        correction.values[j] = -coef[0] / (e.alpha * e.c * w_pow);
        psi.values[j] = coef[1];
        if resonant {
            psi_log.values[j] = coef[2];
        }
        let m = tt.len() as f64;
        prefit[j] = (tt
            .iter()
            .zip(&rem)
            .map(|(&t, &r)| (r * powr(t, -e.beta)).powi(2))
            .sum::<f64>()
            / m)
            .sqrt();
        postfit[j] = (tt
            .iter()
            .zip(&rem)
            .enumerate()
            .map(|(i, (&t, &r))| {
                let fitv: f64 =
                    coef.iter().zip(&basis).map(|(c, b)| c * b[i]).sum();
                ((r - fitv) * powr(t, -e.beta)).powi(2)
            })
            .sum::<f64>()
            / m)
            .sqrt();
    }
    Ok(PdeScatteringData {
        f: f.clone(),
        psi,
        psi_log: if resonant { Some(psi_log) } else { None },
        surface_correction: correction,
        fit: FitReport { window, samples, prefit_rms: prefit, postfit_rms: postfit },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityDifference {
    pub f_l2: f64,
    pub f_sup: f64,
    pub psi_l2: f64,
    pub psi_sup: f64,
    pub input_diff: f64,
    /// (output difference)/(input difference), the discrete (Lipschitz) ratio
    pub ratio: f64,
}

/// Difference norms between two extracted data sets, normalized by the
/// Cauchy-data difference of the runs that produced them.
pub fn stability_difference(
    a: &PdeScatteringData,
    b: &PdeScatteringData,
    input_diff: f64,
) -> Result<StabilityDifference> {
    if a.f.grid.n != b.f.grid.n {
        return Err(Error::MismatchedGrids(a.f.grid.n, b.f.grid.n));
    }
    let df = a.f.sub(&b.f);
    let dpsi = a.psi.sub(&b.psi);
    let out = (df.sup_norm().powi(2) + dpsi.sup_norm().powi(2)).sqrt();
    Ok(StabilityDifference {
        f_l2: df.l2_norm(),
        f_sup: df.sup_norm(),
        psi_l2: dpsi.l2_norm(),
        psi_sup: dpsi.sup_norm(),
        input_diff,
        ratio: if input_diff > 0.0 { out / input_diff } else { f64::INFINITY },
    })
}

/// Push slices through the scaling symmetry: `t̄ = t/δ`, `x̄ = x/δ`,
/// `φ̄ = δ^α φ`, `∂_tφ̄ = δ^{α+1} ∂_tφ`.
pub fn rescale_states(
    e: &Exponents,
    states: &[WaveState],
    delta_s: f64,
) -> Result<Vec<WaveState>> {
    if !(delta_s > 0.0) {
        return Err(Error::InvalidParameter(format!("scale {delta_s} must be > 0")));
    }
    let amp = powr(delta_s, e.alpha);
    states
        .iter()
        .map(|s| {
            let g = crate::grid::Grid1D::new(s.phi.grid.length / delta_s, s.phi.grid.n)?;
            let mut phi = SpatialField::zeros(g);
            let mut phi_t = SpatialField::zeros(g);
            phi.values.copy_from_slice(&s.phi.values);
            phi_t.values.copy_from_slice(&s.phi_t.values);
            Ok(WaveState {
                time: s.time / delta_s,
                phi: phi.scale(amp),
                phi_t: phi_t.scale(amp * delta_s),
            })
        })
        .collect()
}
