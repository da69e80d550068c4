//! Plot-ready TSV emission. Reads whatever artifacts a run directory holds
//! and writes one gnuplot-friendly TSV per figure, schema in the header line.

use std::path::Path;

use nlw_core::error::{Error, Result};
use nlw_core::exponents::powr;
use serde_json::Value;

use crate::commands::load_trajectory;
use crate::rundir::{read_json, write_tsv};

fn json_array(v: &Value, key: &str) -> Option<Vec<f64>> {
    v.get(key)?
        .as_array()?
        .iter()
        .map(|x| x.as_f64())
        .collect()
}

fn field_values(v: &Value) -> Option<Vec<f64>> {
    // a serialized SpatialField: {"grid": {...}, "values": [...]}
    v.get("values")?
        .as_array()?
        .iter()
        .map(|x| x.as_f64())
        .collect()
}

fn grid_points(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * length / n as f64).collect()
}

pub fn cmd_plots(run: &Path, out: Option<&Path>) -> Result<()> {
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.join("plots"));
    std::fs::create_dir_all(&out_dir)?;
    let mut written: Vec<String> = Vec::new();

    // recovered (f, ψ) profiles, with inputs alongside when recorded
    let scattering = run.join("scattering.json");
    let manifest = run.join("manifest.json");
    if scattering.exists() {
        let sc: Value = read_json(&scattering)?;
        let f = sc
            .get("data")
            .and_then(|d| d.get("f"))
            .and_then(field_values)
            .ok_or_else(|| Error::InvalidParameter("scattering.json lacks data.f".into()))?;
        let psi = sc
            .get("data")
            .and_then(|d| d.get("psi"))
            .and_then(field_values)
            .ok_or_else(|| Error::InvalidParameter("scattering.json lacks data.psi".into()))?;
        let (f_in, psi_in, length) = if manifest.exists() {
            let m: Value = read_json(&manifest)?;
            let length = m
                .get("config")
                .and_then(|c| c.get("length"))
                .and_then(|x| x.as_f64())
                .unwrap_or(2.0 * std::f64::consts::PI);
            (json_array(&m, "f_samples"), json_array(&m, "psi_samples"), length)
        } else {
            (None, None, 2.0 * std::f64::consts::PI)
        };
        let xs = grid_points(f.len(), length);
        let mut rows = Vec::new();
        for j in 0..f.len() {
            let mut row = vec![xs[j], f[j], psi[j]];
            if let Some(fi) = &f_in {
                row.push(fi[j]);
            }
            if let Some(pi) = &psi_in {
                row.push(pi[j]);
            }
            rows.push(row);
        }
        let header = match (&f_in, &psi_in) {
            (Some(_), Some(_)) => "x\tf_recovered\tpsi_recovered\tf_input\tpsi_input",
            _ => "x\tf_recovered\tpsi_recovered",
        };
        write_tsv(&out_dir.join("profiles.tsv"), header, &rows)?;
        written.push("profiles.tsv".into());
    }

    // blow-up surface and slope diagnostics
    let surface = run.join("surface.csv");
    if surface.exists() {
        let text = std::fs::read_to_string(&surface)?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .filter_map(|l| {
                let vals: Option<Vec<f64>> = l.split(',').map(|c| c.parse().ok()).collect();
                vals
            })
            .collect();
        write_tsv(&out_dir.join("surface.tsv"), "x\tf\tslope", &rows)?;
        written.push("surface.tsv".into());
    }

    // gauge-law flatness of an ODE trajectory: Ω̊² τ^{−2κ} against τ
    let traj = run.join("traj.csv");
    if traj.exists() {
        let t = load_trajectory(&traj)?;
        let e = t.base;
        let rows: Vec<Vec<f64>> = t
            .states
            .iter()
            .map(|s| {
                let tau = s.tau(&e);
                vec![tau, s.omega_ring_sq(&e) * powr(tau, -2.0 * e.kappa)]
            })
            .collect();
        write_tsv(
            &out_dir.join("gauge_flatness.tsv"),
            "tau\tomega_ring_sq_over_tau_2kappa",
            &rows,
        )?;
        written.push("gauge_flatness.tsv".into());
    }

    // ansatz residual decay, log-log line of slope ≈ order − 5/2
    let series = run.join("series.json");
    if series.exists() {
        let a: Value = read_json(&series)?;
        let times = json_array(&a, "residual_times").unwrap_or_default();
        let norms = json_array(&a, "residual_norms").unwrap_or_default();
        let rows: Vec<Vec<f64>> =
            times.iter().zip(&norms).map(|(&t, &n)| vec![t, n]).collect();
        if !rows.is_empty() {
            write_tsv(&out_dir.join("ansatz_residual.tsv"), "t\tresidual_sup", &rows)?;
            written.push("ansatz_residual.tsv".into());
        }
    }

    // slice energies for whichever current reports exist
    for (name, coord) in
        [("energy_backward", "t_loc"), ("energy_forward", "tau")]
    {
        let path = run.join(format!("{name}.json"));
        if path.exists() {
            let a: Value = read_json(&path)?;
            let energies = a
                .get("report")
                .and_then(|r| r.get("energies"))
                .and_then(|x| x.as_array())
                .map(|arr| {
                    arr.iter()
                        .filter_map(|pair| {
                            let p = pair.as_array()?;
                            Some(vec![p[0].as_f64()?, p[1].as_f64()?])
                        })
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default();
            if !energies.is_empty() {
                write_tsv(
                    &out_dir.join(format!("{name}.tsv")),
                    &format!("{coord}\tenergy"),
                    &energies,
                )?;
                written.push(format!("{name}.tsv"));
            }
        }
    }

    // stability sweep: data norms against ε (slope ≈ 1 on log-log)
    let sweep = run.join("sweep.json");
    if sweep.exists() {
        let a: Value = read_json(&sweep)?;
        let rows: Vec<Vec<f64>> = a
            .get("runs")
            .and_then(|x| x.as_array())
            .map(|arr| {
                arr.iter()
                    .filter_map(|r| {
                        Some(vec![
                            r.get("eps")?.as_f64()?,
                            r.get("f_sup")?.as_f64()?,
                            r.get("psi_sup")?.as_f64()?,
                            r.get("f_ratio")?.as_f64()?,
                            r.get("psi_ratio")?.as_f64()?,
                        ])
                    })
                    .collect()
            })
            .unwrap_or_default();
        if !rows.is_empty() {
            write_tsv(
                &out_dir.join("stability_sweep.tsv"),
                "eps\tf_sup\tpsi_sup\tf_ratio\tpsi_ratio",
                &rows,
            )?;
            written.push("stability_sweep.tsv".into());
        }
    }

    if written.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no plottable artifacts found in {}",
            run.display()
        )));
    }
    for name in &written {
        println!("{}", out_dir.join(name).display());
    }
    Ok(())
}
