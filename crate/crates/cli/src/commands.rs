//! Subcommand implementations. Every command either prints JSON to stdout or
//! populates a run directory with CSV/TSV data plus a JSON manifest.

use std::fs;
use std::path::Path;

use nlw_core::ansatz::{build_ansatz, ansatz_residual_slope, ChartWeights};
use nlw_core::energy::{
    backward_current_report, coercivity_ratios, forward_current_report, forward_slices,
    TiltedSlice,
};
use nlw_core::error::{Error, Result};
use nlw_core::exponents::derive_exponents;
use nlw_core::expr::Expr;
use nlw_core::gauge::{extract_surface, jacobian_fields, transport_residuals};
use nlw_core::grid::{Grid1D, SpatialField};
use nlw_core::ode::{
    extract_scattering, ode_integrate, seed_from_ansatz_ode, OdeOpts, OdeState, Trajectory,
};
use nlw_core::pipeline::{
    extract_with_refinement, run_stability_experiment, scattering_extract, scattering_states,
    stability_states,
};
use nlw_core::series::Coeff;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ChartKind, Mode, RunConfig};
use crate::rundir::{load_run, write_json, write_run, Manifest};

pub fn cmd_exponents(p: f64) -> Result<()> {
    let e = derive_exponents(p)?;
    println!("{}", serde_json::to_string_pretty(&e).unwrap());
    Ok(())
}

pub fn cmd_ode_run(
    p: f64,
    psi: f64,
    t_seed: f64,
    t_end: f64,
    rtol: f64,
    order: Option<f64>,
    out: &Path,
) -> Result<()> {
    let e = derive_exponents(p)?;
    if !(t_seed > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ode-run needs positive times, got t_seed = {t_seed}, t_end = {t_end}"
        )));
    }
    let order = order.unwrap_or(2.0 * e.beta + 4.0);
    let ansatz = build_ansatz(&e, &ChartWeights::flat(), &Coeff::Scalar(psi), order)?;
    let seed = seed_from_ansatz_ode(&ansatz, t_seed)?;
    let opts = OdeOpts { rtol, ..OdeOpts::default() };
    let traj = ode_integrate(&e, seed, t_end, &opts)?;

    let mut text = String::new();
    text.push_str(&format!("# p = {p}\n"));
    text.push_str(&format!("# psi = {psi}\n"));
    text.push_str(&format!("# t_seed = {t_seed}\n"));
    text.push_str(&format!("# t_end = {t_end}\n"));
    text.push_str(&format!("# order = {order}\n"));
    text.push_str(&format!("# rtol = {rtol}\n"));
    // delta is stored alongside phi_t: recomputing it from phi_t would lose
    // it to cancellation near the surface, where |delta| ≪ |phi_t|
    text.push_str("t,phi,phi_t,delta\n");
    for s in &traj.states {
        text.push_str(&format!("{},{},{},{}\n", s.t, s.phi, s.phi_t(&e), s.delta));
    }
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(out, text)?;
    eprintln!("wrote {} states to {}", traj.states.len(), out.display());
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut p = None;
    let mut states = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# p = ") {
            p = rest.trim().parse::<f64>().ok();
            continue;
        }
        if line.starts_with('#') || line.starts_with('t') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            return Err(Error::InvalidParameter(format!("bad row in {}", path.display())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad number in {}: {e}", path.display())))
        };
        states.push(OdeState {
            t: parse(cols[0])?,
            phi: parse(cols[1])?,
            delta: parse(cols[3])?,
        });
    }
    let p = p.ok_or_else(|| {
        Error::InvalidParameter(format!("{} lacks a `# p = ...` header", path.display()))
    })?;
    let e = derive_exponents(p)?;
    Ok(Trajectory { base: e, states })
}

pub fn cmd_ode_extract(input: &Path, tau_lo: f64, tau_hi: f64) -> Result<()> {
    let traj = load_trajectory(input)?;
    let data = extract_scattering(&traj, tau_lo, tau_hi)?;
    println!("{}", serde_json::to_string_pretty(&data).unwrap());
    Ok(())
}

#[derive(Serialize)]
struct AnsatzArtifact {
    p: f64,
    n: usize,
    length: f64,
    order: f64,
    f_spec: String,
    psi_spec: String,
    skipped: Vec<f64>,
    residual_slope: f64,
    residual_leading_exponent: Option<f64>,
    residual_exact: bool,
    residual_times: Vec<f64>,
    residual_norms: Vec<f64>,
    phi: nlw_core::series::FuchsianSeries,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_ansatz_build(
    p: f64,
    f_spec: &str,
    psi_spec: &str,
    order: Option<f64>,
    n: usize,
    length: f64,
    slope_window: (f64, f64),
    out: &Path,
) -> Result<()> {
    let e = derive_exponents(p)?;
    let grid = Grid1D::new(length, n)?;
    let f = Expr::parse(f_spec)?.sample(grid);
    let psi = Expr::parse(psi_spec)?.sample(grid);
    let order = order.unwrap_or(2.0 * e.beta + 4.0);
    let weights = ChartWeights::from_surface(&f)?;
    let ansatz = build_ansatz(&e, &weights, &Coeff::Field(psi), order)?;
    let slope = ansatz_residual_slope(&ansatz, slope_window.0, slope_window.1, 25)?;
    let artifact = AnsatzArtifact {
        p,
        n,
        length,
        order,
        f_spec: f_spec.to_string(),
        psi_spec: psi_spec.to_string(),
        skipped: ansatz.skipped.clone(),
        residual_slope: slope.slope,
        residual_leading_exponent: slope.leading_exponent,
        residual_exact: slope.exact,
        residual_times: slope.times,
        residual_norms: slope.norms,
        phi: ansatz.phi,
    };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_json(out, &artifact)?;
    eprintln!(
        "ansatz order {order}: residual slope {:.3} (floor {:?})",
        artifact.residual_slope, artifact.residual_leading_exponent
    );
    Ok(())
}

pub fn cmd_pde_evolve(config_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path)?;
    let cfg = RunConfig::parse(&text)?;
    let e = derive_exponents(cfg.p)?;
    let mut manifest = Manifest {
        config: cfg.clone(),
        config_toml: text,
        base: e,
        t_base: 0.0,
        f_samples: None,
        psi_samples: None,
        g0_samples: None,
        g1_samples: None,
        far_sup: None,
        stop_time: None,
        times: Vec::new(),
        slices: Vec::new(),
    };
    let states = match cfg.mode {
        Mode::Scattering => {
            let score = cfg.to_scattering()?;
            let f = cfg.f_field()?;
            let psi = cfg.psi_field()?;
            let (states, far_sup, t_base) = scattering_states(&score, &f, &psi)?;
            manifest.f_samples = Some(f.values);
            manifest.psi_samples = Some(psi.values);
            manifest.far_sup = Some(far_sup);
            manifest.t_base = t_base;
            states
        }
        Mode::Stability => {
            let scfg = cfg.to_stability()?;
            let eps = cfg.eps.unwrap_or(0.0);
            let g0 = cfg.g0_field()?;
            let g1 = cfg.g1_field()?;
            let (states, stop_time) = stability_states(&scfg, eps, &g0, &g1)?;
            manifest.g0_samples = Some(g0.values);
            manifest.g1_samples = Some(g1.values);
            manifest.stop_time = Some(stop_time);
            states
        }
    };
    write_run(out, &mut manifest, &states)?;
    eprintln!("stored {} slices in {}", states.len(), out.display());
    Ok(())
}

fn manifest_field(samples: &Option<Vec<f64>>, grid: Grid1D) -> Option<SpatialField> {
    samples
        .as_ref()
        .filter(|v| v.len() == grid.n)
        .map(|v| SpatialField { grid, values: v.clone() })
}

#[derive(Serialize)]
struct SurfaceArtifact {
    extraction: nlw_core::gauge::SurfaceExtraction,
    /// total surface (chart surface folded back in on tilted runs)
    f_total: Vec<f64>,
}

pub fn cmd_extract_surface(run: &Path) -> Result<()> {
    let (manifest, states) = load_run(run)?;
    let e = manifest.base;
    let grid = manifest.config.grid()?;
    let extraction = extract_surface(&e, &states, None)?;
    let f_total = match (manifest.config.chart, manifest_field(&manifest.f_samples, grid)) {
        (ChartKind::Tilted, Some(fc)) => fc.add(&extraction.f),
        _ => extraction.f.clone(),
    };
    let artifact = SurfaceArtifact { extraction, f_total: f_total.values.clone() };
    write_json(&run.join("surface.json"), &artifact)?;
    let mut csv = String::from("x,f,slope\n");
    for j in 0..grid.n {
        csv.push_str(&format!(
            "{},{},{}\n",
            grid.point(j),
            f_total.values[j],
            artifact.extraction.slope.values[j]
        ));
    }
    fs::write(run.join("surface.csv"), csv)?;
    eprintln!(
        "surface written; slope consistency {:.3e}",
        artifact.extraction.slope_consistency
    );
    Ok(())
}

#[derive(Serialize)]
struct ScatteringArtifact {
    surface: nlw_core::gauge::SurfaceExtraction,
    data: nlw_core::gauge::PdeScatteringData,
    f_sup_error: Option<f64>,
    psi_rel_error: Option<f64>,
}

pub fn cmd_extract_scattering(run: &Path) -> Result<()> {
    let (manifest, states) = load_run(run)?;
    let e = manifest.base;
    let grid = manifest.config.grid()?;
    let (surface, data) = match manifest.config.mode {
        Mode::Scattering => {
            let cfg = manifest.config.to_scattering()?;
            let chart_surface = match manifest.config.chart {
                ChartKind::Tilted => manifest_field(&manifest.f_samples, grid),
                ChartKind::Standard => None,
            };
            scattering_extract(&cfg, &states, chart_surface.as_ref())?
        }
        Mode::Stability => {
            let cfg = manifest.config.to_stability()?;
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
            (surface, data)
        }
    };
    let f_in = manifest_field(&manifest.f_samples, grid);
    let psi_in = manifest_field(&manifest.psi_samples, grid);
    let f_sup_error = f_in.map(|f| data.f.sub(&f).sup_norm());
    let psi_rel_error =
        psi_in.map(|p| data.psi.sub(&p).sup_norm() / p.sup_norm().max(1e-300));
    let artifact = ScatteringArtifact { surface, data, f_sup_error, psi_rel_error };
    write_json(&run.join("scattering.json"), &artifact)?;
    let mut csv = String::from("x,f,psi\n");
    for j in 0..grid.n {
        csv.push_str(&format!(
            "{},{},{}\n",
            grid.point(j),
            artifact.data.f.values[j],
            artifact.data.psi.values[j]
        ));
    }
    fs::write(run.join("data.csv"), csv)?;
    if let (Some(fe), Some(pe)) = (f_sup_error, psi_rel_error) {
        eprintln!("recovered data: f sup error {fe:.3e}, psi relative error {pe:.3e}");
    } else {
        eprintln!("extracted data written to {}", run.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    eps: f64,
    f_sup: f64,
    psi_sup: f64,
    f_ratio: f64,
    psi_ratio: f64,
    stop_time: f64,
}

#[derive(Serialize)]
struct SweepDifference {
    eps_a: f64,
    eps_b: f64,
    #[serde(flatten)]
    diff: nlw_core::gauge::StabilityDifference,
}

#[derive(Serialize)]
struct SweepArtifact {
    eps_list: Vec<f64>,
    runs: Vec<SweepEntry>,
    differences: Vec<SweepDifference>,
}

pub fn cmd_stability_sweep(config_path: &Path, eps_list: &[f64], out: &Path) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty --eps-list".into()));
    }
    let text = fs::read_to_string(config_path)?;
    let cfg = RunConfig::parse(&text)?;
    let scfg = cfg.to_stability()?;
    let g0 = cfg.g0_field()?;
    let g1 = cfg.g1_field()?;
    // each run is independent; fan out across the pool
    let outcomes = eps_list
        .par_iter()
        .map(|&eps| run_stability_experiment(&scfg, eps, &g0, &g1))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let grid = cfg.grid()?;
    let mut runs = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        runs.push(SweepEntry {
            eps: o.eps,
            f_sup: o.data.f.sup_norm(),
            psi_sup: o.data.psi.sup_norm(),
            f_ratio: o.f_ratio,
            psi_ratio: o.psi_ratio,
            stop_time: o.stop_time,
        });
        let mut csv = String::from("x,f,psi\n");
        for j in 0..grid.n {
            csv.push_str(&format!(
                "{},{},{}\n",
                grid.point(j),
                o.data.f.values[j],
                o.data.psi.values[j]
            ));
        }
        fs::write(out.join(format!("eps_{i}.csv")), csv)?;
        write_json(&out.join(format!("run_{i}.json")), o)?;
    }
    let mut differences = Vec::new();
    let scale = g0.sup_norm().hypot(g1.sup_norm());
    for i in 0..outcomes.len() {
        for k in i + 1..outcomes.len() {
            let input_diff = (outcomes[i].eps - outcomes[k].eps).abs() * scale;
            differences.push(SweepDifference {
                eps_a: outcomes[i].eps,
                eps_b: outcomes[k].eps,
                diff: nlw_core::gauge::stability_difference(
                    &outcomes[i].data,
                    &outcomes[k].data,
                    input_diff,
                )?,
            });
        }
    }
    let artifact = SweepArtifact { eps_list: eps_list.to_vec(), runs, differences };
    write_json(&out.join("sweep.json"), &artifact)?;
    fs::write(out.join("config.toml"), text)?;
    eprintln!("sweep over {} perturbation sizes written to {}", eps_list.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
pub enum EnergyMode {
    Backward,
    Forward,
}

#[derive(Serialize)]
struct BackwardEnergyArtifact {
    report: nlw_core::energy::CurrentReport,
    /// residual over the larger of |flux change| and |bulk|; second order in
    /// the slice spacing, so dense slice families matter for steep weights
    relative_residual: f64,
    coercivity_lo: f64,
    coercivity_hi: f64,
}

#[derive(Serialize)]
struct ForwardEnergyArtifact {
    report: nlw_core::energy::CurrentReport,
    relative_residual: f64,
    transport: nlw_core::gauge::TransportResiduals,
    taus: Vec<f64>,
}

fn relative_residual(r: &nlw_core::energy::CurrentReport) -> f64 {
    r.residual / r.flux_change.abs().max(r.bulk.abs()).max(1e-300)
}

/// The current weights grow like steep powers of the slice coordinate, so the
/// divergence-theorem check needs tightly spaced slices: a geometric band at
/// `ratio` spacing around the midpoint of `[lo, hi]`, clipped to the range.
fn slice_band(lo: f64, hi: f64, count: usize, ratio: f64) -> Vec<f64> {
    let mid = (lo * hi).sqrt();
    let half = (count - 1) as f64 / 2.0;
    (0..count)
        .map(|i| (mid * ratio.powf(i as f64 - half)).clamp(lo, hi))
        .collect()
}

/// Resample stored slices onto new times by cubic interpolation per column.
fn interp_states(
    states: &[nlw_core::solver::WaveState],
    times_out: &[f64],
) -> Result<Vec<nlw_core::solver::WaveState>> {
    let mut sorted: Vec<&nlw_core::solver::WaveState> = states.iter().collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let times: Vec<f64> = sorted.iter().map(|s| s.time).collect();
    let grid = states[0].phi.grid;
    times_out
        .iter()
        .map(|&t| {
            let mut phi = SpatialField::zeros(grid);
            let mut phi_t = SpatialField::zeros(grid);
            for j in 0..grid.n {
                let phi_col: Vec<f64> = sorted.iter().map(|s| s.phi.values[j]).collect();
                let phit_col: Vec<f64> = sorted.iter().map(|s| s.phi_t.values[j]).collect();
                phi.values[j] = nlw_core::fit::local_interp(&times, &phi_col, t, 4)?;
                phi_t.values[j] = nlw_core::fit::local_interp(&times, &phit_col, t, 4)?;
            }
            Ok(nlw_core::solver::WaveState { time: t, phi, phi_t })
        })
        .collect()
}

pub fn cmd_energy_report(run: &Path, mode: EnergyMode, q: Option<f64>) -> Result<()> {
    let (manifest, states) = load_run(run)?;
    let e = manifest.base;
    let grid = manifest.config.grid()?;
    let q = q.unwrap_or(4.0 * e.kappa);
    match mode {
        EnergyMode::Backward => {
            // slices must be constant-𝐭: a tilted-chart run, or a standard
            // run over a flat surface
            let flat = manifest_field(&manifest.f_samples, grid)
                .map(|f| f.sup_norm() < 1e-14)
                .unwrap_or(true);
            if manifest.config.chart != ChartKind::Tilted && !flat {
                return Err(Error::InvalidParameter(
                    "backward energy needs a tilted-chart run (or a flat surface)".into(),
                ));
            }
            let f = manifest_field(&manifest.f_samples, grid)
                .unwrap_or_else(|| SpatialField::zeros(grid));
            let fp = f.dx();
            let fpp = f.dxx();
            let mut t_locs: Vec<f64> = states.iter().map(|s| s.time - manifest.t_base).collect();
            t_locs.sort_by(f64::total_cmp);
            let (t_lo, t_hi) = (t_locs[0], t_locs[t_locs.len() - 1]);
            if !(t_lo > 0.0 && t_hi > t_lo) {
                return Err(Error::InvalidParameter(
                    "stored slices do not span a positive local-time range".into(),
                ));
            }
            let band: Vec<f64> =
                slice_band(t_lo, t_hi, 9, 1.015).iter().map(|t| t + manifest.t_base).collect();
            let slices: Vec<TiltedSlice> = interp_states(&states, &band)?
                .into_iter()
                .map(|s| TiltedSlice {
                    t_loc: s.time - manifest.t_base,
                    phi: s.phi,
                    phi_t: s.phi_t,
                })
                .collect();
            let report = backward_current_report(&e, &fp, &fpp, &slices, q)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in &slices {
                let (a, b) = coercivity_ratios(&e, &fp, s, q)?;
                lo = lo.min(a);
                hi = hi.max(b);
            }
            let rel = relative_residual(&report);
            let artifact = BackwardEnergyArtifact {
                report,
                relative_residual: rel,
                coercivity_lo: lo,
                coercivity_hi: hi,
            };
            write_json(&run.join("energy_backward.json"), &artifact)?;
            let mut csv = String::from("t_loc,energy\n");
            for (t, en) in &artifact.report.energies {
                csv.push_str(&format!("{t},{en}\n"));
            }
            fs::write(run.join("energy_backward.csv"), csv)?;
            eprintln!(
                "backward current: relative residual {:.3e}, coercivity [{lo:.3}, {hi:.3}]",
                artifact.relative_residual
            );
        }
        EnergyMode::Forward => {
            if manifest.config.chart == ChartKind::Tilted {
                return Err(Error::InvalidParameter(
                    "forward energy reads constant-t slices; rerun in the standard chart".into(),
                ));
            }
            // usable τ range: level sets must cross every column
            let taus_per_slice = nlw_core::gauge::tau_field(&e, &states)?;
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for j in 0..grid.n {
                let col: Vec<f64> = taus_per_slice.iter().map(|f| f.values[j]).collect();
                lo = lo.max(col.iter().cloned().fold(f64::INFINITY, f64::min));
                hi = hi.min(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            }
            if !(hi > lo && lo > 0.0) {
                return Err(Error::LevelSetOutOfRange(lo));
            }
            let taus = slice_band(lo, hi, 9, 1.015);
            let slices = forward_slices(&e, &states, &taus)?;
            let report = forward_current_report(&e, &slices, q)?;
            let jfs = taus
                .iter()
                .map(|&t| jacobian_fields(&e, &states, t))
                .collect::<Result<Vec<_>>>()?;
            let transport = transport_residuals(&e, &jfs)?;
            let rel = relative_residual(&report);
            let artifact = ForwardEnergyArtifact { report, relative_residual: rel, transport, taus };
            write_json(&run.join("energy_forward.json"), &artifact)?;
            let mut csv = String::from("tau,energy\n");
            for (t, en) in &artifact.report.energies {
                csv.push_str(&format!("{t},{en}\n"));
            }
            fs::write(run.join("energy_forward.csv"), csv)?;
            eprintln!(
                "forward current: relative residual {:.3e}, transport residuals ({:.3e}, {:.3e})",
                artifact.relative_residual, artifact.transport.r_u, artifact.transport.r_omega
            );
        }
    }
    Ok(())
}
