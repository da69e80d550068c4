//! Small numerics toolbox: dense solves for tiny least-squares systems,
//! polynomial fits, log-log slopes, medians, adaptive Simpson quadrature, and
//! Fornberg finite-difference weights on arbitrary (nonuniform) stencils.

use crate::error::{Error, Result};

/// Solve `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. `a` is row-major `n × n`.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidParameter("singular system in solve_dense".into()));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in (row + 1)..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Ok(x)
}

/// Weighted least squares against arbitrary basis columns:
/// minimize Σ_i w_i² (y_i − Σ_j c_j B_ij)². Returns the coefficients `c`.
pub fn weighted_lsq(basis: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let k = basis.len();
    let n = y.len();
    if k == 0 || basis.iter().any(|col| col.len() != n) || w.len() != n {
        return Err(Error::InvalidParameter("weighted_lsq shape mismatch".into()));
    }
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for i in 0..n {
        let w2 = w[i] * w[i];
        for r in 0..k {
            b[r] += w2 * basis[r][i] * y[i];
            for c in r..k {
                a[r][c] += w2 * basis[r][i] * basis[c][i];
            }
        }
    }
    for r in 0..k {
        for c in 0..r {
            a[r][c] = a[c][r];
        }
    }
    solve_dense(&a, &b)
}

/// Least-squares polynomial fit `y ≈ Σ c_j x^j`, centered internally for
/// conditioning. Returns coefficients in the original variable.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() < degree + 1 {
        return Err(Error::InvalidParameter(format!(
            "polyfit: {} points for degree {degree}",
            x.len()
        )));
    }
    let x0 = x.iter().sum::<f64>() / x.len() as f64;
    let basis: Vec<Vec<f64>> = (0..=degree)
        .map(|j| x.iter().map(|&xi| (xi - x0).powi(j as i32)).collect())
        .collect();
    let w = vec![1.0; x.len()];
    let centered = weighted_lsq(&basis, y, &w)?;
    Ok(shift_poly(&centered, -x0))
}

/// Rewrite `p(u)` with `u = x + shift` as coefficients in `x`.
fn shift_poly(coeffs: &[f64], shift: f64) -> Vec<f64> {
    // p(x) = Σ c_j (x - (-shift))^j expanded via repeated Horner synthesis
    let mut out = vec![0.0; coeffs.len()];
    for &c in coeffs.iter().rev() {
        for j in (1..out.len()).rev() {
            out[j] = out[j - 1] + shift * out[j];
        }
        out[0] = c + shift * out[0];
    }
    out
}

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| j as f64 * c)
        .collect()
}

/// Newton root of a polynomial from a starting guess.
pub fn poly_root(coeffs: &[f64], guess: f64) -> Result<f64> {
    let d = poly_deriv(coeffs);
    let mut x = guess;
    for _ in 0..64 {
        let f = poly_eval(coeffs, x);
        let fp = poly_eval(&d, x);
        if fp.abs() < 1e-300 {
            return Err(Error::InvalidParameter("flat polynomial in poly_root".into()));
        }
        let step = f / fp;
        x -= step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    Ok(x)
}

/// Least-squares slope of `log y` against `log x` (both must be positive).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(&xi, &yi)| xi > 0.0 && yi > 0.0)
        .map(|(&xi, &yi)| (xi.ln(), yi.ln()))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter("loglog_slope: too few positive samples".into()));
    }
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidParameter("loglog_slope: degenerate abscissae".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative standard deviation, `std/|mean|`.
pub fn relstd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Fornberg weights for the `order`-th derivative at `x0` from samples at
/// `nodes` (any distinct reals). Exact for polynomials of degree
/// `nodes.len() − 1`; `order = 0` gives interpolation weights.
pub fn fornberg_weights(nodes: &[f64], x0: f64, order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(order < n, "need more nodes than the derivative order");
    // B. Fornberg, "Generation of finite difference formulas on arbitrarily
    // spaced grids", Math. Comp. 51 (1988).
    let m = order;
    let mut delta = vec![vec![vec![0.0; n]; m + 1]; n];
    delta[0][0][0] = 1.0;
    let mut c1 = 1.0;
    for nn in 1..n {
        let mut c2 = 1.0;
        for nu in 0..nn {
            let c3 = nodes[nn] - nodes[nu];
            c2 *= c3;
            for mm in 0..=m.min(nn) {
                let prev = delta[nn - 1][mm][nu];
                let prev_d = if mm > 0 { delta[nn - 1][mm - 1][nu] } else { 0.0 };
                delta[nn][mm][nu] = ((nodes[nn] - x0) * prev - mm as f64 * prev_d) / c3;
            }
        }
        for mm in 0..=m.min(nn) {
            let prev_d = if mm > 0 { delta[nn - 1][mm - 1][nn - 1] } else { 0.0 };
            let prev = delta[nn - 1][mm][nn - 1];
            delta[nn][mm][nn] = c1 / c2 * (mm as f64 * prev_d - (nodes[nn - 1] - x0) * prev);
        }
        c1 = c2;
    }
    (0..n).map(|nu| delta[n - 1][m][nu]).collect()
}

/// Interpolate `(xs, ys)` samples at `x0` with the `k` nearest nodes
/// (default cubic, k = 4). `xs` must be strictly monotone.
pub fn local_interp(xs: &[f64], ys: &[f64], x0: f64, k: usize) -> Result<f64> {
    let n = xs.len();
    if n < k {
        return Err(Error::TooFewSlices { op: "local_interp", have: n, need: k });
    }
    let ascending = xs[n - 1] > xs[0];
    // index of first node >= x0 in ascending order
    let pos = if ascending {
        xs.partition_point(|&v| v < x0)
    } else {
        xs.partition_point(|&v| v > x0)
    };
    let start = pos.saturating_sub(k / 2).min(n - k);
    let nodes = &xs[start..start + k];
    let w = fornberg_weights(nodes, x0, 0);
    Ok(w.iter().zip(&ys[start..start + k]).map(|(wi, yi)| wi * yi).sum())
}
