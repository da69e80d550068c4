//! End-to-end experiment pipelines: the backward scattering construction
//! (data → singular solution → data) and the forward stability sweep
//! (perturbed Cauchy data → blow-up surface and datum).
//!
//! Both run the solver in the standard chart, where the equation is a plain
//! semilinear wave equation and the surface enters only through the data. The
//! singular region is approached but never crossed: the time step shrinks
//! proportionally to the distance from the estimated singular time, and all
//! asymptotic information is read off from stored slices by fitting.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, ChartWeights};
use crate::error::{Error, Result};
use crate::exponents::{derive_exponents, Exponents};
use crate::gauge::{
    extract_scattering_against, extract_surface, PdeScatteringData, SurfaceExtraction,
};
use crate::grid::SpatialField;
use crate::series::Coeff;
use crate::solver::{
    evolve, perturbed_model_data, seed_from_ansatz, seed_standard_from_ansatz, Chart, EvolveOpts,
    EvolveStatus, WaveState,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub p: f64,
    pub n: usize,
    pub length: f64,
    /// distance from the surface at which the ansatz seeds the solver
    pub t_seed: f64,
    /// distance from the surface the evolution swings out to
    pub t_far: f64,
    /// relative ansatz order; `None` takes the default `2β + 4`
    pub order: Option<f64>,
    /// time-step fraction for the close approach on the way back
    pub dt_frac_back: f64,
    /// window in 𝐭 for the ψ fit (slid up per column when out of reach)
    pub fit_window: (f64, f64),
    /// stored slices on the backward leg (log-spaced in 𝐭)
    pub back_slices: usize,
    /// extra ψ-fit passes with the reference rebuilt from the estimate
    pub refine_iterations: usize,
    /// Fourier modes kept when smoothing the extracted surface; the reference
    /// expansion differentiates the surface repeatedly, so grid-scale
    /// extraction noise must not reach it
    pub surface_modes: usize,
    /// evolve in the tilted chart of the input surface instead of the
    /// standard chart; keeps the near-surface data smooth in space and is the
    /// only way to run steep surfaces at moderate grids
    pub tilted: bool,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        ScatteringConfig {
            p: 4.0,
            n: 256,
            length: 2.0 * std::f64::consts::PI,
            t_seed: 1e-3,
            t_far: 1e-1,
            order: None,
            dt_frac_back: 0.001,
            fit_window: (0.01, 0.05),
            back_slices: 90,
            refine_iterations: 6,
            surface_modes: 12,
            tilted: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringOutcome {
    pub base: Exponents,
    pub f_in: SpatialField,
    pub psi_in: SpatialField,
    pub surface: SurfaceExtraction,
    pub data: PdeScatteringData,
    pub f_sup_error: f64,
    pub psi_rel_error: f64,
    /// sup of φ on the turnaround slice (sanity: finite, far from blow-up)
    pub far_sup: f64,
}

fn field_max(f: &SpatialField) -> f64 {
    f.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Slices from the scattering legs: seed near the surface, evolve out to the
/// turnaround, come back storing log-spaced slices. The returned states are
/// the backward-leg slices (ordered in decreasing time), plus the sup of φ at
/// the turnaround and the time anchoring the surface (`max f` in the standard
/// chart, 0 in the tilted one).
pub fn scattering_states(
    cfg: &ScatteringConfig,
    f_in: &SpatialField,
    psi_in: &SpatialField,
) -> Result<(Vec<WaveState>, f64, f64)> {
    let e = derive_exponents(cfg.p)?;
    if f_in.grid.n != cfg.n {
        return Err(Error::MismatchedGrids(f_in.grid.n, cfg.n));
    }
    let order = cfg.order.unwrap_or(2.0 * e.beta + 4.0);
    let weights = ChartWeights::from_surface(f_in)?;
    let ansatz = build_ansatz(&e, &weights, &Coeff::Field(psi_in.clone()), order)?;

    // in the tilted chart the surface sits at 𝐭 = 0 uniformly and the chart
    // time is already the surface distance; in the standard chart the slices
    // are anchored past the latest surface point
    let (chart, t_base) = if cfg.tilted {
        (Chart::tilted(f_in)?, 0.0)
    } else {
        (Chart::Standard, field_max(f_in))
    };
    let t_start = t_base + cfg.t_seed;
    let t_turn = t_base + cfg.t_far;
    let seed = if cfg.tilted {
        seed_from_ansatz(&ansatz, f_in.grid, t_start)?
    } else {
        seed_standard_from_ansatz(&ansatz, f_in, t_start)?
    };

    // out: only the turnaround slice is needed, but the tight step rule
    // applies here too; errors picked up near the surface are amplified
    // 𝐭^{−α−1−β}-fold in the final fit
    let out_opts = EvolveOpts {
        t_singular: t_base,
        dt_frac: cfg.dt_frac_back,
        output_times: Some(vec![t_turn]),
        ..EvolveOpts::default()
    };
    let outward = evolve(&e, &chart, &seed, t_turn, &out_opts)?;
    if outward.status != EvolveStatus::Completed {
        return Err(Error::BlowupReached(t_turn));
    }
    let far = outward.states.last().unwrap().clone();
    let far_sup = far.phi.sup_norm();

    // back: tight steps near the surface, slices log-spaced in surface distance
    let back_times: Vec<f64> = log_spaced(cfg.t_seed, cfg.t_far, cfg.back_slices)
        .into_iter()
        .rev()
        .map(|d| t_base + d)
        .collect();
    let back_opts = EvolveOpts {
        t_singular: t_base,
        dt_frac: cfg.dt_frac_back,
        output_times: Some(back_times),
        ..EvolveOpts::default()
    };
    let backward = evolve(&e, &chart, &far, t_start, &back_opts)?;
    if backward.status != EvolveStatus::Completed {
        return Err(Error::BlowupReached(t_start));
    }
    Ok((backward.states, far_sup, t_base))
}

/// Extraction half of the scattering run: surface, then joint (f, ψ)
/// refinement, folding the chart surface back in on tilted runs.
pub fn scattering_extract(
    cfg: &ScatteringConfig,
    states: &[WaveState],
    chart_surface: Option<&SpatialField>,
) -> Result<(SurfaceExtraction, PdeScatteringData)> {
    let e = derive_exponents(cfg.p)?;
    let order = cfg.order.unwrap_or(2.0 * e.beta + 4.0);
    // in the tilted chart the extracted surface is the residual against the
    // chart surface and is folded back in afterwards
    let surface = extract_surface(&e, states, None)?;
    let mut data = extract_with_refinement(
        &e,
        states,
        &surface.f,
        cfg.fit_window,
        order,
        cfg.refine_iterations,
        cfg.surface_modes,
        chart_surface,
    )?;
    if let Some(fc) = chart_surface {
        data.f = fc.add(&data.f);
    }
    Ok((surface, data))
}

/// The backward construction: build the singular ansatz for `(f, ψ)`, seed
/// the solver on a slice hugging the surface, evolve away, come back, and
/// re-extract the data from the numerical solution alone.
pub fn run_scattering_construction(
    cfg: &ScatteringConfig,
    f_in: &SpatialField,
    psi_in: &SpatialField,
) -> Result<ScatteringOutcome> {
    let e = derive_exponents(cfg.p)?;
    let (states, far_sup, _) = scattering_states(cfg, f_in, psi_in)?;
    let chart_surface = if cfg.tilted { Some(f_in) } else { None };
    let (surface, data) = scattering_extract(cfg, &states, chart_surface)?;

    let f_sup_error = data.f.sub(f_in).sup_norm();
    let psi_rel_error = data.psi.sub(psi_in).sup_norm() / psi_in.sup_norm().max(1e-300);
    Ok(ScatteringOutcome {
        base: e,
        f_in: f_in.clone(),
        psi_in: psi_in.clone(),
        surface,
        data,
        f_sup_error,
        psi_rel_error,
        far_sup,
    })
}

/// Joint (f, ψ) refinement. Each pass rebuilds the reference expansion from
/// the current estimates, fits the remainder, and folds the fitted surface
/// correction and ψ increment back in. The surface correction matters: an
/// error `ε` in `f` contaminates the remainder at size `ε𝐭^{−α−1}` against a
/// ψ signal of `𝐭^{β}`, so ψ converges only as the surface does. The surface
/// stays low-pass filtered throughout because the reference differentiates it
/// repeatedly.
///
/// When the slices come from a tilted-chart run, `chart_offset` carries the
/// chart surface: the reference weights must see the full surface while the
/// per-column times and corrections stay chart-local.
pub fn extract_with_refinement(
    e: &Exponents,
    states: &[WaveState],
    f0: &SpatialField,
    window: (f64, f64),
    order: f64,
    iterations: usize,
    surface_modes: usize,
    chart_offset: Option<&SpatialField>,
) -> Result<PdeScatteringData> {
    let mut f = f0.low_pass(surface_modes);
    let mut psi = SpatialField::zeros(f.grid);
    let mut psi_log = SpatialField::zeros(f.grid);
    let mut last = None;
    for _ in 0..iterations.max(1) {
        let weights = match chart_offset {
            Some(fc) => ChartWeights::from_surface(&fc.add(&f))?,
            None => ChartWeights::from_surface(&f)?,
        };
        // the reference, like the surface, must only see smooth estimates
        let psi_ref = psi.low_pass(surface_modes);
        let reference = build_ansatz(e, &weights, &Coeff::Field(psi_ref), order)?;
        let corr = extract_scattering_against(e, states, &f, &reference, window)?;
        f = f.sub(&corr.surface_correction).low_pass(surface_modes);
        psi = psi.add(&corr.psi);
        if let Some(pl) = &corr.psi_log {
            psi_log = psi_log.add(pl);
        }
        last = Some(corr);
    }
    let corr = last.unwrap();
    Ok(PdeScatteringData {
        f,
        psi,
        psi_log: if e.resonant { Some(psi_log) } else { None },
        surface_correction: corr.surface_correction,
        fit: corr.fit,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub p: f64,
    pub n: usize,
    pub length: f64,
    /// blow-up detection threshold on sup φ
    pub phi_cap: f64,
    pub dt_frac: f64,
    pub fit_window: (f64, f64),
    pub refine_iterations: usize,
    pub surface_modes: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            p: 3.0,
            n: 256,
            length: 2.0 * std::f64::consts::PI,
            phi_cap: 1e4,
            dt_frac: 0.01,
            fit_window: (0.05, 0.2),
            refine_iterations: 5,
            surface_modes: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub base: Exponents,
    pub eps: f64,
    pub surface: SurfaceExtraction,
    pub data: PdeScatteringData,
    /// ‖f_ε‖_∞ / ε (linear-response coefficient for the surface)
    pub f_ratio: f64,
    /// ‖ψ_ε‖_∞ / ε
    pub psi_ratio: f64,
    /// time of the last stored slice before the cap
    pub stop_time: f64,
    /// sup-norm of the Cauchy-data perturbation (for difference quotients)
    pub input_size: f64,
}

/// Forward-evolution half of the stability experiment: perturb the model
/// data at `t = 1` and integrate toward the singularity until the cap fires.
/// Every accepted step is stored.
pub fn stability_states(
    cfg: &StabilityConfig,
    eps: f64,
    g0: &SpatialField,
    g1: &SpatialField,
) -> Result<(Vec<WaveState>, f64)> {
    let e = derive_exponents(cfg.p)?;
    let start = perturbed_model_data(&e, eps, g0, g1);
    let opts = EvolveOpts {
        t_singular: 0.0,
        dt_frac: cfg.dt_frac,
        phi_max: cfg.phi_cap,
        output_times: None,
        ..EvolveOpts::default()
    };
    // integrate toward t = 0; the cap fires first on any blow-up of this type
    let evo = evolve(&e, &Chart::Standard, &start, 1e-9, &opts)?;
    match evo.status {
        EvolveStatus::BlowupReached { .. } => {}
        EvolveStatus::Completed => {
            let last = evo.states.last().unwrap();
            return Err(Error::BlowupNotReached(last.phi.sup_norm()));
        }
    }
    let stop_time = evo.states.last().unwrap().time;
    Ok((evo.states, stop_time))
}

/// The forward experiment: perturb the model data at `t = 1`, evolve toward
/// the singularity until the cap, and read off the blow-up surface and datum.
pub fn run_stability_experiment(
    cfg: &StabilityConfig,
    eps: f64,
    g0: &SpatialField,
    g1: &SpatialField,
) -> Result<StabilityOutcome> {
    let e = derive_exponents(cfg.p)?;
    let (states, stop_time) = stability_states(cfg, eps, g0, g1)?;

    let surface = extract_surface(&e, &states, None)?;
    let order = 2.0 * e.beta + 4.0;
    let data = extract_with_refinement(
        &e,
        &states,
        &surface.f,
        cfg.fit_window,
        order,
        cfg.refine_iterations,
        cfg.surface_modes,
        None,
    )?;
    let input_size = (eps * g0.sup_norm()).hypot(eps * g1.sup_norm());
    Ok(StabilityOutcome {
        base: e,
        eps,
        f_ratio: data.f.sup_norm() / eps.max(1e-300),
        psi_ratio: data.psi.sup_norm() / eps.max(1e-300),
        surface,
        data,
        stop_time,
        input_size,
    })
}
