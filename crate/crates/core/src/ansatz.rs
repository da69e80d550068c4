//! Singular series ansatz near a prescribed blow-up surface `{t = f(x)}`.
//!
//! In the tilted chart `(𝐭, y) = (t − f(x), x)` the wave operator reads
//!
//! ```text
//! □ = −(1 − f′²) ∂_𝐭² + (−f″ − 2 f′ ∂_y) ∂_𝐭 + ∂_y²,
//! ```
//!
//! and the equation admits the expansion
//!
//! ```text
//! φ = c_p (1 − f′²)^{1/(p−1)} 𝐭^{−α} + (corrections) + ψ 𝐭^{β} + …
//! ```
//!
//! The builder cancels residual terms lowest-exponent first by inverting the
//! indicial operator, inserts the free datum `ψ` at the indicial root `𝐭^β`
//! (with a forced `𝐭^β log 𝐭` companion in the resonant case), and keeps going
//! until every residual exponent the truncation order controls is gone. The
//! same loop serves the spatially homogeneous (scalar-coefficient) and the
//! full surface-carrying (field-coefficient) expansions.

use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::fit::loglog_slope;
use crate::grid::SpatialField;
use crate::series::{
    invert_p0_on_term, nonlinear_expand, Coeff, FuchsianSeries, SeriesTerm, EXP_MERGE_TOL,
};

/// Residual coefficients below this sup-norm are considered cancelled.
pub const DROP_TOL: f64 = 1e-13;

/// Safety cap on cancellation sweeps.
const MAX_SWEEPS: usize = 500;

/// Maximum allowed surface slope for the ansatz machinery.
pub const MAX_SLOPE: f64 = 0.1;

/// Geometry of the chart the ansatz lives in: the surface profile and the
/// coefficient weights built from it. A flat surface gives scalar weights.
#[derive(Debug, Clone)]
pub struct ChartWeights {
    pub w: Coeff,   // 1 − f′²
    pub fp: Coeff,  // f′
    pub fpp: Coeff, // f″
}

impl ChartWeights {
    pub fn flat() -> Self {
        ChartWeights { w: Coeff::Scalar(1.0), fp: Coeff::Scalar(0.0), fpp: Coeff::Scalar(0.0) }
    }

    pub fn from_surface(f: &SpatialField) -> Result<Self> {
        let fp = f.dx();
        let slope = fp.sup_norm();
        if slope >= MAX_SLOPE {
            return Err(Error::InvalidParameter(format!(
                "surface slope {slope:.3} exceeds the allowed {MAX_SLOPE}"
            )));
        }
        let w = fp.map(|v| 1.0 - v * v);
        Ok(ChartWeights { w: Coeff::Field(w), fp: Coeff::Field(fp), fpp: Coeff::Field(f.dxx()) })
    }
}

/// Leading blow-up profile `c_p (1 − f′²)^{1/(p−1)}`.
pub fn leading_profile(e: &Exponents, weights: &ChartWeights) -> Coeff {
    weights.w.powr(1.0 / (e.p - 1.0)).scale(e.c)
}

#[derive(Debug, Clone)]
pub struct Ansatz {
    pub base: Exponents,
    /// full series φ = φ₀ + corrections, in powers of 𝐭
    pub phi: FuchsianSeries,
    pub phi0: FuchsianSeries,
    pub corrections: FuchsianSeries,
    pub weights: ChartWeights,
    pub psi: Coeff,
    /// relative truncation order N (absolute exponent cap is N − α)
    pub order: f64,
    /// inversion targets skipped because the indicial factor was dangerously small
    pub skipped: Vec<f64>,
}

impl Ansatz {
    pub fn eval(&self, t: f64) -> Result<Coeff> {
        self.phi.eval(t)
    }

    pub fn eval_dt(&self, t: f64) -> Result<Coeff> {
        self.phi.dt().eval(t)
    }

    /// Recompute the equation residual `□φ + φ^p` of the built series,
    /// keeping exponents up to `cap`.
    pub fn residual(&self, cap: f64) -> Result<FuchsianSeries> {
        residual_series(&self.base, &self.phi0, &self.corrections, &self.weights, cap)
    }
}

/// `P_f s = (−f″ − 2 f′ ∂_y) ∂_𝐭 s + ∂_y² s`, termwise on a series.
fn apply_pf(s: &FuchsianSeries, weights: &ChartWeights) -> Result<FuchsianSeries> {
    let d = s.dt();
    let neg_fpp = weights.fpp.scale(-1.0);
    let neg_2fp = weights.fp.scale(-2.0);
    let from_dt = d.map_coeff(|c| c.mul(&neg_fpp).add(&c.dy().mul(&neg_2fp)));
    let from_yy = s.map_coeff(|c| c.dyy());
    let mut out = from_dt.add(&from_yy)?;
    out.prune(0.0);
    Ok(out)
}

/// Residual `□(φ₀ + Φ) + (φ₀ + Φ)^p` as a series, truncated at exponent `cap`.
///
/// The leading profile satisfies `−(1−f′²)∂_𝐭²φ₀ + φ₀^p = 0` exactly and
/// `p φ₀^{p−1} = γ (1−f′²) 𝐭^{−2}`, so the residual reduces to
/// `P_f[φ₀ + Φ] + P₀Φ + 𝒩_{φ₀}[Φ]` with `P₀ = −(1−f′²)(∂_𝐭² − γ𝐭^{−2})`.
fn residual_series(
    e: &Exponents,
    phi0: &FuchsianSeries,
    corrections: &FuchsianSeries,
    weights: &ChartWeights,
    cap: f64,
) -> Result<FuchsianSeries> {
    // the corrections are a concrete polynomial, so their residual is exact at
    // every exponent; lift the trust bookkeeping and cap explicitly instead
    let mut corrections = corrections.clone();
    corrections.truncation_order = f64::INFINITY;
    let mut full = phi0.add(&corrections)?;
    full.truncation_order = f64::INFINITY;
    let mut r = apply_pf(&full, weights)?;
    if !corrections.terms.is_empty() {
        r = r.add(&corrections.apply_p0(&weights.w))?;
        r = r.add(&nonlinear_expand(phi0, &corrections, e, cap)?)?;
    }
    r.terms.retain(|t| t.exponent <= cap + EXP_MERGE_TOL);
    r.truncation_order = r.truncation_order.min(cap);
    r.prune(DROP_TOL);
    Ok(r)
}

fn is_skipped(skipped: &[f64], target: f64) -> bool {
    skipped.iter().any(|&s| (s - target).abs() < EXP_MERGE_TOL)
}

/// Build the ansatz for surface datum `weights` (from `f`) and scattering
/// datum `psi`, to relative order `n_max` (> 2κ so the ψ slot is reached).
pub fn build_ansatz(
    e: &Exponents,
    weights: &ChartWeights,
    psi: &Coeff,
    n_max: f64,
) -> Result<Ansatz> {
    if n_max <= 2.0 * e.kappa + EXP_MERGE_TOL {
        return Err(Error::InvalidParameter(format!(
            "ansatz order {n_max} must exceed 2κ = {}",
            2.0 * e.kappa
        )));
    }
    let abs_cap = n_max - e.alpha; // corrections live at exponents ≤ abs_cap
    let res_cap = abs_cap - 2.0; // residual exponents we are responsible for
    let phi0 = FuchsianSeries::single(
        *e,
        SeriesTerm::new(-e.alpha, 0, leading_profile(e, weights)),
    );
    let mut corrections = FuchsianSeries::with_truncation(*e, abs_cap);
    let mut skipped = Vec::new();

    // stage A: cancel everything whose inversion target sits below the
    // indicial root β, where the operator is safely invertible
    cancel_below(
        e, &phi0, &mut corrections, weights, res_cap,
        e.beta - 2.0 - EXP_MERGE_TOL, false, &mut skipped,
    )?;

    // the free datum enters at the indicial root
    corrections.push(SeriesTerm::new(e.beta, 0, psi.clone()));

    // stage B: cancel the rest; a residual term landing exactly on β − 2 is
    // absorbed on the log branch (resonant case only)
    cancel_below(
        e, &phi0, &mut corrections, weights, res_cap,
        res_cap + EXP_MERGE_TOL, e.resonant, &mut skipped,
    )?;

    let phi = phi0.add(&corrections)?;
    Ok(Ansatz {
        base: *e,
        phi,
        phi0,
        corrections,
        weights: weights.clone(),
        psi: psi.clone(),
        order: n_max,
        skipped,
    })
}

/// Repeatedly cancel the lowest surviving residual term with exponent below
/// `upper`, recomputing the full residual after each correction.
#[allow(clippy::too_many_arguments)]
fn cancel_below(
    e: &Exponents,
    phi0: &FuchsianSeries,
    corrections: &mut FuchsianSeries,
    weights: &ChartWeights,
    res_cap: f64,
    upper: f64,
    log_branch: bool,
    skipped: &mut Vec<f64>,
) -> Result<()> {
    let inv_w = weights.w.map(|v| 1.0 / v);
    for sweep in 0..=MAX_SWEEPS {
        let r = residual_series(e, phi0, corrections, weights, res_cap)?;
        let next = r.terms.iter().find(|t| {
            t.exponent < upper
                && t.coeff.sup_norm() > DROP_TOL
                && !is_skipped(skipped, t.exponent + 2.0)
        });
        let term = match next {
            Some(t) => t.clone(),
            None => return Ok(()),
        };
        if sweep == MAX_SWEEPS {
            return Err(Error::AnsatzDiverged(MAX_SWEEPS));
        }
        // cancel r·𝐭^e: need P₀ s = −r·𝐭^e, i.e. (∂² − γ𝐭^{−2}) s = (r/w)·𝐭^e
        let scaled = SeriesTerm::new(term.exponent, term.log_power, term.coeff.mul(&inv_w));
        match invert_p0_on_term(&scaled, e, log_branch) {
            Ok(corr) => corrections.push(corr),
            Err(Error::NearResonant { exponent, .. }) => skipped.push(exponent),
            Err(Error::ResonantExponent { exponent }) => skipped.push(exponent),
            Err(err) => return Err(err),
        }
    }
    Ok(())
}

/// Decay-rate report for the built ansatz: the equation residual measured on
/// log-spaced times should fall off like the first uncancelled exponent.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub slope: f64,
    /// lowest surviving residual exponent (what the slope should match)
    pub leading_exponent: Option<f64>,
    /// true when the residual vanished identically below the truncation cap
    pub exact: bool,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

pub fn ansatz_residual_slope(
    ansatz: &Ansatz,
    t_lo: f64,
    t_hi: f64,
    n_samples: usize,
) -> Result<SlopeReport> {
    if !(t_lo > 0.0 && t_hi > t_lo) || n_samples < 3 {
        return Err(Error::InvalidParameter("bad residual-slope sampling window".into()));
    }
    // measure past the truncation cap so the leading surviving term shows
    let cap = ansatz.order - ansatz.base.alpha + 2.0;
    let r = ansatz.residual(cap)?;
    let lead = r.terms.iter().find(|t| t.coeff.sup_norm() > DROP_TOL);
    let leading_exponent = lead.map(|t| t.exponent);
    let mut times = Vec::with_capacity(n_samples);
    let mut norms = Vec::with_capacity(n_samples);
    let ratio = (t_hi / t_lo).ln() / (n_samples - 1) as f64;
    for i in 0..n_samples {
        let t = t_lo * (ratio * i as f64).exp();
        times.push(t);
        norms.push(r.eval(t)?.sup_norm());
    }
    let exact = leading_exponent.is_none() || norms.iter().all(|&n| n < 1e-300);
    let slope = if exact { f64::INFINITY } else { loglog_slope(&times, &norms)? };
    Ok(SlopeReport { slope, leading_exponent, exact, times, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::derive_exponents;
    use crate::grid::Grid1D;
    use approx::assert_relative_eq;

    fn e3() -> Exponents {
        derive_exponents(3.0).unwrap()
    }

    #[test]
    fn flat_resonant_hand_coefficients() {
        // p=3, f≡0, ψ const: Φ = ψ𝐭³ + (√2/12)ψ²𝐭⁷ + … and no log terms are
        // forced below the next resonance
        let e = e3();
        let psi = 0.8;
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(psi), 10.0).unwrap();
        assert!(a.skipped.is_empty());
        let c = &a.corrections;
        let t3 = c
            .terms
            .iter()
            .find(|t| (t.exponent - 3.0).abs() < 1e-9 && t.log_power == 0)
            .unwrap();
        assert_relative_eq!(t3.coeff.as_scalar().unwrap(), psi, max_relative = 1e-13);
        let t7 = c
            .terms
            .iter()
            .find(|t| (t.exponent - 7.0).abs() < 1e-9)
            .unwrap();
        assert_relative_eq!(
            t7.coeff.as_scalar().unwrap(),
            2f64.sqrt() / 12.0 * psi * psi,
            max_relative = 1e-12
        );
    }

    #[test]
    fn flat_residual_is_cancelled() {
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.5), 10.0).unwrap();
        let r = a.residual(10.0 - e.alpha - 2.0).unwrap();
        assert!(r.terms.is_empty(), "surviving residual terms: {:?}", r.terms);
    }

    #[test]
    fn ansatz_solves_ode_pointwise() {
        // φ'' = φ³ up to the truncation error 𝐭^{N−α−2} = 𝐭⁷
        let e = e3();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.3), 10.0).unwrap();
        let dd = a.phi.dt().dt();
        for t in [0.05, 0.1, 0.2] {
            let d2 = dd.eval(t).unwrap().as_scalar().unwrap();
            let phi = a.eval(t).unwrap().as_scalar().unwrap();
            let res = d2 - phi.powi(3);
            assert!(res.abs() < 100.0 * t.powi(7), "t={t} res={res}");
        }
    }

    #[test]
    fn curved_surface_field_ansatz() {
        let e = derive_exponents(4.0).unwrap();
        let g = Grid1D::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let f = SpatialField::from_fn(g, |x| {
            0.05 * x.sin()
        });
        let w = ChartWeights::from_surface(&f).unwrap();
        let psi = Coeff::Field(SpatialField::from_fn(g, |x| {
            0.1 * x.cos()
        }));
        let n = 2.0 * e.beta + 4.0;
        let a = build_ansatz(&e, &w, &psi, n).unwrap();
        assert!(a.skipped.is_empty(), "skipped {:?}", a.skipped);
        // responsible residual range must be clear
        let r = a.residual(n - e.alpha - 2.0).unwrap();
        assert!(r.terms.is_empty(), "surviving: {:?}", r.terms.len());
        // corrections start at 𝐭^{1−α} for a curved surface
        let lead = a.corrections.lowest_exponent().unwrap();
        assert_relative_eq!(lead, 1.0 - e.alpha, epsilon = 1e-9);
    }

    #[test]
    fn residual_slope_matches_leading_exponent() {
        let e = derive_exponents(4.0).unwrap();
        let g = Grid1D::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let f = SpatialField::from_fn(g, |x| {
            0.05 * x.sin()
        });
        let w = ChartWeights::from_surface(&f).unwrap();
        let psi = Coeff::Field(SpatialField::from_fn(g, |x| {
            0.1 * x.cos()
        }));
        let a = build_ansatz(&e, &w, &psi, 4.0).unwrap();
        let rep = ansatz_residual_slope(&a, 1e-4, 1e-2, 9).unwrap();
        assert!(!rep.exact);
        let lead = rep.leading_exponent.unwrap();
        assert!((rep.slope - lead).abs() < 0.05, "slope {} vs lead {lead}", rep.slope);
    }

    #[test]
    fn steep_surface_rejected() {
        let g = Grid1D::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let f = SpatialField::from_fn(g, |x| 0.2 * x.sin());
        assert!(ChartWeights::from_surface(&f).is_err());
    }

    #[test]
    fn order_below_psi_slot_rejected() {
        let e = e3();
        assert!(build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.1), 3.0).is_err());
    }

    #[test]
    fn nonresonant_has_no_log_terms() {
        let e = derive_exponents(4.0).unwrap();
        let a = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(0.2), 2.0 * e.beta + 4.0)
            .unwrap();
        assert!(a.phi.terms.iter().all(|t| t.log_power == 0));
    }

    #[test]
    fn resonant_log_appears_with_curvature() {
        // p=3 with a curved surface forces 𝐭³ log 𝐭 via the resonant branch
        let e = e3();
        let g = Grid1D::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let f = SpatialField::from_fn(g, |x| 0.05 * x.sin());
        let w = ChartWeights::from_surface(&f).unwrap();
        let a = build_ansatz(&e, &w, &Coeff::Scalar(0.0), 2.0 * e.beta + 4.0).unwrap();
        assert!(
            a.phi.terms.iter().any(|t| t.log_power > 0),
            "expected a log term in the resonant curved expansion"
        );
    }
}
