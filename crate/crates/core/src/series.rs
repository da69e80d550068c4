//! Algebra of generalized power series `Σ c · t^e (log t)^m` with scalar or
//! spatial-field coefficients.
//!
//! The singular expansions live here: the indicial (Fuchsian) operator
//! `∂_t² − γ t^{−2}` acts termwise as `t^q ↦ (q(q−1) − γ) t^{q−2}`, is
//! annihilated exactly on the indicial root `t^β`, and picks up the factor
//! `(2β − 1)` on `t^β log t`. Its inversion on monomials drives the ansatz
//! construction; the nonlinearity is expanded with generalized binomial
//! coefficients.

use crate::error::{Error, Result};
use crate::exponents::{powr, Exponents};
use crate::grid::SpatialField;
use serde::{Deserialize, Serialize};

/// Exponents closer than this are considered the same term slot.
pub const EXP_MERGE_TOL: f64 = 1e-9;

/// `|q(q−1) − γ|` below this (but nonzero) triggers a near-resonance error.
pub const NEAR_RESONANCE_TOL: f64 = 1e-6;

/// Scalar (ODE) or spatial-field (PDE) coefficient; binary operations
/// broadcast scalars over fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coeff {
    Scalar(f64),
    Field(SpatialField),
}

impl Coeff {
    pub fn zip_with(&self, other: &Coeff, f: impl Fn(f64, f64) -> f64) -> Coeff {
        match (self, other) {
            (Coeff::Scalar(a), Coeff::Scalar(b)) => Coeff::Scalar(f(*a, *b)),
            (Coeff::Scalar(a), Coeff::Field(b)) => Coeff::Field(b.map(|v| f(*a, v))),
            (Coeff::Field(a), Coeff::Scalar(b)) => Coeff::Field(a.map(|v| f(v, *b))),
            (Coeff::Field(a), Coeff::Field(b)) => Coeff::Field(a.zip_with(b, f)),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Coeff {
        match self {
            Coeff::Scalar(a) => Coeff::Scalar(f(*a)),
            Coeff::Field(a) => Coeff::Field(a.map(f)),
        }
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Coeff) -> Coeff {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Coeff) -> Coeff {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn div(&self, other: &Coeff) -> Coeff {
        self.zip_with(other, |a, b| a / b)
    }

    pub fn scale(&self, s: f64) -> Coeff {
        self.map(|v| s * v)
    }

    /// Real power, assuming positive base values.
    pub fn powr(&self, expo: f64) -> Coeff {
        self.map(|v| powr(v, expo))
    }

    /// Spatial derivative; scalars are y-independent.
    pub fn dy(&self) -> Coeff {
        match self {
            Coeff::Scalar(_) => Coeff::Scalar(0.0),
            Coeff::Field(f) => Coeff::Field(f.dx()),
        }
    }

    pub fn dyy(&self) -> Coeff {
        match self {
            Coeff::Scalar(_) => Coeff::Scalar(0.0),
            Coeff::Field(f) => Coeff::Field(f.dxx()),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Coeff::Scalar(a) => a.abs(),
            Coeff::Field(f) => f.sup_norm(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        match self {
            Coeff::Scalar(a) => a.abs(),
            Coeff::Field(f) => f.l2_norm(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Coeff::Scalar(a) => a.is_finite(),
            Coeff::Field(f) => f.is_finite(),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Coeff::Scalar(a) => Some(*a),
            Coeff::Field(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub exponent: f64,
    pub log_power: u32,
    pub coeff: Coeff,
}

impl SeriesTerm {
    pub fn new(exponent: f64, log_power: u32, coeff: Coeff) -> Self {
        SeriesTerm { exponent, log_power, coeff }
    }

    pub fn scalar(exponent: f64, value: f64) -> Self {
        Self::new(exponent, 0, Coeff::Scalar(value))
    }
}

/// Finite sum of terms `coeff · t^e (log t)^m`, graded by a trusted decay
/// order: terms with exponent beyond `truncation_order` are dropped, and
/// arithmetic tightens the order so only trustworthy exponents survive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuchsianSeries {
    pub base: Exponents,
    pub terms: Vec<SeriesTerm>,
    pub truncation_order: f64,
}

impl FuchsianSeries {
    pub fn new(base: Exponents) -> Self {
        FuchsianSeries { base, terms: Vec::new(), truncation_order: f64::INFINITY }
    }

    pub fn with_truncation(base: Exponents, order: f64) -> Self {
        FuchsianSeries { base, terms: Vec::new(), truncation_order: order }
    }

    pub fn single(base: Exponents, term: SeriesTerm) -> Self {
        let mut s = Self::new(base);
        s.push(term);
        s
    }

    /// Insert a term, merging into an existing `(exponent, log_power)` slot
    /// within tolerance and respecting the truncation order.
    pub fn push(&mut self, term: SeriesTerm) {
        if term.exponent > self.truncation_order + EXP_MERGE_TOL {
            return;
        }
        for existing in &mut self.terms {
            if (existing.exponent - term.exponent).abs() < EXP_MERGE_TOL
                && existing.log_power == term.log_power
            {
                existing.coeff = existing.coeff.add(&term.coeff);
                return;
            }
        }
        self.terms.push(term);
        self.sort();
    }

    fn sort(&mut self) {
        self.terms
            .sort_by(|a, b| a.exponent.total_cmp(&b.exponent).then(a.log_power.cmp(&b.log_power)));
    }

    /// Drop terms whose coefficient sup-norm is below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        self.terms.retain(|t| t.coeff.sup_norm() > threshold);
    }

    pub fn lowest_exponent(&self) -> Option<f64> {
        self.terms.first().map(|t| t.exponent)
    }

    pub fn add(&self, other: &FuchsianSeries) -> Result<FuchsianSeries> {
        if !self.base.same_base(&other.base) {
            return Err(Error::IncompatibleBases(self.base.p, other.base.p));
        }
        let mut out =
            FuchsianSeries::with_truncation(self.base, self.truncation_order.min(other.truncation_order));
        for t in self.terms.iter().chain(&other.terms) {
            out.push(t.clone());
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> FuchsianSeries {
        FuchsianSeries {
            base: self.base,
            terms: self
                .terms
                .iter()
                .map(|t| SeriesTerm::new(t.exponent, t.log_power, t.coeff.scale(s)))
                .collect(),
            truncation_order: self.truncation_order,
        }
    }

    pub fn scale_coeff(&self, c: &Coeff) -> FuchsianSeries {
        let mut out = FuchsianSeries::with_truncation(self.base, self.truncation_order);
        for t in &self.terms {
            out.push(SeriesTerm::new(t.exponent, t.log_power, t.coeff.mul(c)));
        }
        out
    }

    /// Transform every coefficient in place (exponents and log powers kept).
    pub fn map_coeff(&self, f: impl Fn(&Coeff) -> Coeff) -> FuchsianSeries {
        FuchsianSeries {
            base: self.base,
            terms: self
                .terms
                .iter()
                .map(|t| SeriesTerm::new(t.exponent, t.log_power, f(&t.coeff)))
                .collect(),
            truncation_order: self.truncation_order,
        }
    }

    /// Shift every exponent by `delta` (multiplication by `t^delta`).
    pub fn shift_exponent(&self, delta: f64) -> FuchsianSeries {
        FuchsianSeries {
            base: self.base,
            terms: self
                .terms
                .iter()
                .map(|t| SeriesTerm::new(t.exponent + delta, t.log_power, t.coeff.clone()))
                .collect(),
            truncation_order: self.truncation_order + delta,
        }
    }

    pub fn multiply(&self, other: &FuchsianSeries) -> Result<FuchsianSeries> {
        if !self.base.same_base(&other.base) {
            return Err(Error::IncompatibleBases(self.base.p, other.base.p));
        }
        // trust: a product term at exponent e mixes a-terms up to e − b_min,
        // so the result is trusted to min(A + b_min, B + a_min)
        let trunc = match (self.lowest_exponent(), other.lowest_exponent()) {
            (Some(am), Some(bm)) => {
                (self.truncation_order + bm).min(other.truncation_order + am)
            }
            _ => f64::INFINITY,
        };
        let mut out = FuchsianSeries::with_truncation(self.base, trunc);
        for a in &self.terms {
            for b in &other.terms {
                let e = a.exponent + b.exponent;
                if e > trunc + EXP_MERGE_TOL {
                    continue;
                }
                out.push(SeriesTerm::new(e, a.log_power + b.log_power, a.coeff.mul(&b.coeff)));
            }
        }
        Ok(out)
    }

    /// Evaluate at `t > 0`.
    pub fn eval(&self, t: f64) -> Result<Coeff> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("series eval at t = {t} <= 0")));
        }
        let lt = t.ln();
        let mut acc = Coeff::Scalar(0.0);
        for term in &self.terms {
            let w = powr(t, term.exponent) * lt.powi(term.log_power as i32);
            acc = acc.add(&term.coeff.scale(w));
        }
        Ok(acc)
    }

    /// Evaluate the series at `t > 0` restricted to one grid column; scalar
    /// coefficients broadcast.
    pub fn eval_at_column(&self, j: usize, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("series eval at t = {t} <= 0")));
        }
        let lt = t.ln();
        let mut acc = 0.0;
        for term in &self.terms {
            let c = match &term.coeff {
                Coeff::Scalar(a) => *a,
                Coeff::Field(f) => f.values[j],
            };
            acc += c * powr(t, term.exponent) * lt.powi(term.log_power as i32);
        }
        Ok(acc)
    }

    /// Termwise t-derivative: `(e, m) ↦ e·t^{e−1}(log)^m + m·t^{e−1}(log)^{m−1}`.
    pub fn dt(&self) -> FuchsianSeries {
        let mut out = FuchsianSeries::with_truncation(self.base, self.truncation_order - 1.0);
        for t in &self.terms {
            if t.exponent.abs() > 1e-300 || t.log_power == 0 {
                out.push(SeriesTerm::new(t.exponent - 1.0, t.log_power, t.coeff.scale(t.exponent)));
            }
            if t.log_power > 0 {
                out.push(SeriesTerm::new(
                    t.exponent - 1.0,
                    t.log_power - 1,
                    t.coeff.scale(t.log_power as f64),
                ));
            }
        }
        out.prune(0.0);
        out
    }

    /// Apply `−w · (∂_t² − γ t^{−2})` termwise.
    ///
    /// With the ODE convention `w = −1` this realizes the indicial operator
    /// `∂_t² − γ t^{−2}` itself; with `w = 1 − (∂f)²` it realizes the
    /// PDE-side `P₀ = −(1−(∂f)²)(∂_𝐭² − γ 𝐭^{−2})`.
    pub fn apply_p0(&self, weight: &Coeff) -> FuchsianSeries {
        let g = self.base.gamma;
        let mut out = FuchsianSeries::with_truncation(self.base, self.truncation_order - 2.0);
        let neg_w = weight.scale(-1.0);
        for t in &self.terms {
            let e = t.exponent;
            let m = t.log_power;
            // (∂² − γ/t²) t^e log^m = (e(e−1)−γ) t^{e−2} log^m
            //                        + m(2e−1) t^{e−2} log^{m−1}
            //                        + m(m−1) t^{e−2} log^{m−2}
            let c = t.coeff.mul(&neg_w);
            out.push(SeriesTerm::new(e - 2.0, m, c.scale(e * (e - 1.0) - g)));
            if m >= 1 {
                out.push(SeriesTerm::new(e - 2.0, m - 1, c.scale(m as f64 * (2.0 * e - 1.0))));
            }
            if m >= 2 {
                out.push(SeriesTerm::new(e - 2.0, m - 2, c.scale((m * (m - 1)) as f64)));
            }
        }
        out.prune(0.0);
        out
    }
}

/// Invert the indicial operator `∂_t² − γ t^{−2}` on a single term: find
/// `term'` with `(∂² − γ/t²) term' = term`.
///
/// Nonresonant target `q = e + 2`: divide by `q(q−1) − γ`. Resonant target
/// `q = β` with `log_branch`: divide by `2β − 1` and increment the log power.
pub fn invert_p0_on_term(
    term: &SeriesTerm,
    e: &Exponents,
    log_branch: bool,
) -> Result<SeriesTerm> {
    let q = term.exponent + 2.0;
    let factor = e.indicial(q);
    if factor.abs() < NEAR_RESONANCE_TOL {
        if (q - e.beta).abs() < EXP_MERGE_TOL {
            if log_branch {
                return Ok(SeriesTerm::new(
                    e.beta,
                    term.log_power + 1,
                    term.coeff.scale(1.0 / (2.0 * e.beta - 1.0)),
                ));
            }
            return Err(Error::ResonantExponent { exponent: q });
        }
        return Err(Error::NearResonant { exponent: q, factor: factor.abs() });
    }
    Ok(SeriesTerm::new(q, term.log_power, term.coeff.scale(1.0 / factor)))
}

/// Generalized binomial coefficient sequence `C(p, 0..)` via the recursion
/// `C(p, k+1) = C(p, k)(p − k)/(k + 1)`.
pub fn binomial_coeffs(p: f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut c = 1.0;
    out.push(c);
    for k in 0..kmax {
        c *= (p - k as f64) / (k as f64 + 1.0);
        out.push(c);
    }
    out
}

/// Series of the quadratically-vanishing nonlinearity
/// `𝒩_Ψ[Φ] = (Ψ+Φ)^p − Ψ^p − pΨ^{p−1}Φ`, truncated at exponent `order`.
///
/// The background must be a single log-free term with positive coefficient
/// (the leading profile); the expansion is in powers of Φ/Ψ.
pub fn nonlinear_expand(
    background: &FuchsianSeries,
    perturbation: &FuchsianSeries,
    e: &Exponents,
    order: f64,
) -> Result<FuchsianSeries> {
    if background.terms.len() != 1 || background.terms[0].log_power != 0 {
        return Err(Error::InvalidParameter(
            "nonlinear_expand: background must be a single log-free term".into(),
        ));
    }
    let bg = &background.terms[0];
    let e0 = bg.exponent;
    let mut out = FuchsianSeries::with_truncation(*e, order);
    let pmin = match perturbation.lowest_exponent() {
        Some(m) => m,
        None => return Ok(out),
    };
    if pmin <= e0 + EXP_MERGE_TOL {
        return Err(Error::InvalidParameter(format!(
            "nonlinear_expand: perturbation exponent {pmin} must exceed background {e0}"
        )));
    }
    let p = e.p;
    let gap = pmin - e0;
    // term k contributes at exponent >= p·e0 + k·gap, increasing in k
    let kmax_bound = 64usize;
    let coeffs = binomial_coeffs(p, kmax_bound);
    let mut phi_k =
        FuchsianSeries::single(*e, SeriesTerm::new(0.0, 0, Coeff::Scalar(1.0))); // Φ^0
    for k in 1..=kmax_bound {
        // cap Φ^k so product exponents stay within order
        let cap = order - e0 * (p - k as f64);
        phi_k = phi_k.multiply(perturbation)?;
        phi_k.terms.retain(|t| t.exponent <= cap + EXP_MERGE_TOL);
        phi_k.truncation_order = phi_k.truncation_order.min(cap);
        if k < 2 {
            continue;
        }
        if p * e0 + k as f64 * gap > order + EXP_MERGE_TOL {
            break;
        }
        if coeffs[k].abs() < 1e-300 {
            break; // integer p: expansion terminates
        }
        let bg_pow = bg.coeff.powr(p - k as f64);
        let contrib = phi_k.scale_coeff(&bg_pow).scale(coeffs[k]).shift_exponent(e0 * (p - k as f64));
        for t in contrib.terms {
            if t.exponent <= order + EXP_MERGE_TOL {
                out.push(t);
            }
        }
        if phi_k.terms.is_empty() {
            break;
        }
    }
    out.prune(0.0);
    out.truncation_order = order;
    Ok(out)
}
