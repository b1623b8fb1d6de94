//! PDE solutions rebuilt from a profile, `u(r, t) = w(r/√τ) τ^{1/(1-p)}` with
//! `τ = t + t_offset`, and their checks against `u_t - Δu = u|u|^{p-1}`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::io::write_row;
use crate::ivp::SolutionTrace;
use crate::model::{equilibrium_amplitude, Params};

/// Radial samples `u[j][i] = u(r_grid[i], t_grid[j])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialField {
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub t_offset: f64,
    pub params: Params,
}

/// `((1-p)τ)^{1/(1-p)}`, the spatially constant maximal solution.
pub fn maximal_solution(tau: f64, p: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        ((1.0 - p) * tau).powf(1.0 / (1.0 - p))
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Grid(format!("{name} must be non-empty, finite and non-negative")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// `u(r, t) = w(r/√τ) τ^{1/(1-p)}`, `τ = t + t_offset`; `u = 0` where `τ = 0`.
pub fn reconstruct(
    trace: &SolutionTrace,
    r_grid: &[f64],
    t_grid: &[f64],
    t_offset: f64,
) -> Result<RadialField> {
    reconstruct_with(trace, r_grid, t_grid, t_offset, false)
}

/// As [`reconstruct`]; with `literal_factor` the amplitude is
/// `((1-p)τ)^{1/(1-p)}` instead of `τ^{1/(1-p)}`, the shifted global form as
/// sometimes printed. That variant does not solve the PDE and exists for
/// comparison only.
pub fn reconstruct_with(
    trace: &SolutionTrace,
    r_grid: &[f64],
    t_grid: &[f64],
    t_offset: f64,
    literal_factor: bool,
) -> Result<RadialField> {
    check_grid("r_grid", r_grid)?;
    check_grid("t_grid", t_grid)?;
    if !(t_offset >= 0.0 && t_offset.is_finite()) {
        return Err(Error::Parameter(format!("t_offset must be ≥ 0, got {t_offset}")));
    }
    let p = trace.params.p;
    let r_max = *r_grid.last().expect("non-empty");
    let tau_min = t_grid
        .iter()
        .map(|t| t + t_offset)
        .find(|&tau| tau > 0.0);
    if let Some(tau_min) = tau_min {
        let need = r_max / tau_min.sqrt();
        if need > trace.eta_end() {
            return Err(Error::Range(format!(
                "grid reaches η = {need}, beyond the trace end {}",
                trace.eta_end()
            )));
        }
    }
    let scale = if literal_factor { 1.0 - p } else { 1.0 };
    let u = t_grid
        .iter()
        .map(|&t| {
            let tau = t + t_offset;
            if tau <= 0.0 {
                return Ok(vec![0.0; r_grid.len()]);
            }
            let amp = (scale * tau).powf(1.0 / (1.0 - p));
            let sq = tau.sqrt();
            r_grid
                .iter()
                .map(|&r| Ok(trace.w(r / sq)? * amp))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadialField {
        r_grid: r_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        u,
        t_offset,
        params: trace.params,
    })
}

fn uniform_step(name: &str, grid: &[f64]) -> Result<f64> {
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h)
    {
        return Err(Error::Grid(format!("{name} must be uniformly spaced")));
    }
    Ok(h)
}

/// `max |u_t - u_rr - (n-1)/r u_r - u|u|^{p-1}|` over interior nodes with
/// centred second-order differences; at `r = 0` the Laplacian is `n u_rr`
/// with `u_r(0) = 0`.
pub fn pde_residual(field: &RadialField) -> Result<f64> {
    let (nr, nt) = (field.r_grid.len(), field.t_grid.len());
    if nr < 3 || nt < 3 {
        return Err(Error::Grid("residual needs at least 3 nodes in r and t".into()));
    }
    let dr = uniform_step("r_grid", &field.r_grid)?;
    let dt = uniform_step("t_grid", &field.t_grid)?;
    let p = field.params.p;
    let n = field.params.n as f64;
    let at_origin = field.r_grid[0] == 0.0;
    let mut worst = 0.0_f64;
    for j in 1..nt - 1 {
        let (prev, row, next) = (&field.u[j - 1], &field.u[j], &field.u[j + 1]);
        let start = if at_origin { 0 } else { 1 };
        for i in start..nr - 1 {
            let u = row[i];
            let ut = (next[i] - prev[i]) / (2.0 * dt);
            let lap = if at_origin && i == 0 {
                n * 2.0 * (row[1] - row[0]) / (dr * dr)
            } else {
                let urr = (row[i + 1] - 2.0 * u + row[i - 1]) / (dr * dr);
                let ur = (row[i + 1] - row[i - 1]) / (2.0 * dr);
                urr + (n - 1.0) / field.r_grid[i] * ur
            };
            let reaction = if u == 0.0 { 0.0 } else { u * u.abs().powf(p - 1.0) };
            worst = worst.max((ut - lap - reaction).abs());
        }
    }
    Ok(worst)
}

/// `|u| ≤ ((1-p)(t + t_offset))^{1/(1-p)} + abs_tol` at every node; `measured`
/// is the worst margin `bound - |u|`.
pub fn apriori_check(field: &RadialField) -> CheckReport {
    let p = field.params.p;
    let mut margin = f64::INFINITY;
    for (j, &t) in field.t_grid.iter().enumerate() {
        let bound = maximal_solution(t + field.t_offset, p);
        for &u in &field.u[j] {
            margin = margin.min(bound - u.abs());
        }
    }
    CheckReport::lower(
        "apriori_bound",
        Some(field.params),
        margin,
        0.0,
        field.params.abs_tol,
    )
}

/// Whether row `j` takes both signs.
pub fn two_signed(field: &RadialField, j: usize) -> bool {
    let row = &field.u[j];
    row.iter().any(|&u| u > 0.0) && row.iter().any(|&u| u < 0.0)
}

/// `∫ |u(r, t_j)|^q r^{n-1} dr` by the trapezoidal rule on `r_grid`.
pub fn radial_lq_integral(field: &RadialField, j: usize, q: f64) -> f64 {
    let nm1 = (field.params.n - 1) as i32;
    let g = |i: usize| field.u[j][i].abs().powf(q) * field.r_grid[i].powi(nm1);
    (0..field.r_grid.len() - 1)
        .map(|i| 0.5 * (g(i) + g(i + 1)) * (field.r_grid[i + 1] - field.r_grid[i]))
        .sum()
}

impl RadialField {
    /// CSV `r,t,u`, time-major.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "r,t,u")?;
        for (j, &t) in self.t_grid.iter().enumerate() {
            for (i, &r) in self.r_grid.iter().enumerate() {
                write_row(out, &[r, t, self.u[j][i]])?;
            }
        }
        Ok(())
    }

    /// Equilibrium amplitude `(1-p)^{1/(1-p)}` of the underlying problem.
    pub fn equilibrium(&self) -> f64 {
        equilibrium_amplitude(self.params.p).expect("validated p")
    }
}

/// `count` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|k| a + (b - a) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivp::integrate;
    use approx::assert_relative_eq;

    fn reference_trace() -> SolutionTrace {
        integrate(&Params::new(0.5, 3, 0.2).unwrap()).unwrap()
    }

    #[test]
    fn linspace_counts_nodes() {
        assert_eq!(linspace(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn zero_trace_gives_zero_field() {
        let trace = integrate(&Params::new(0.5, 3, 0.0).unwrap()).unwrap();
        let f = reconstruct(&trace, &linspace(0.0, 2.0, 10), &linspace(0.0, 1.0, 10), 0.0).unwrap();
        assert!(f.u.iter().flatten().all(|&u| u == 0.0));
        assert_eq!(pde_residual(&f).unwrap(), 0.0);
        let report = apriori_check(&f);
        assert!(report.pass);
        // the tightest node is t = 0, where the bound itself vanishes
        assert_eq!(report.measured, 0.0);
    }

    #[test]
    fn equilibrium_trace_is_maximal_solution() {
        let p = 0.5;
        let e = equilibrium_amplitude(p).unwrap();
        let trace = integrate(&Params::new(p, 3, e).unwrap()).unwrap();
        let ts = linspace(0.0, 2.0, 40);
        let f = reconstruct(&trace, &linspace(0.0, 3.0, 30), &ts, 0.0).unwrap();
        for (j, &t) in ts.iter().enumerate() {
            for &u in &f.u[j] {
                assert_relative_eq!(u, maximal_solution(t, p), max_relative = 1e-14);
            }
        }
        let report = apriori_check(&f);
        assert!(report.pass);
        assert!(report.measured.abs() < 1e-15);
        // u = (t/2)^2 is quadratic in t, so centred differences are exact
        assert!(pde_residual(&f).unwrap() < 1e-12);
    }

    #[test]
    fn reference_value_at_origin() {
        let f = reconstruct(&reference_trace(), &[0.0, 1.0], &[0.0, 1.0], 0.0).unwrap();
        assert_relative_eq!(f.u[1][0], 0.2, epsilon = 1e-15);
        assert_eq!(f.u[0], vec![0.0, 0.0]);
    }

    #[test]
    fn sign_symmetry() {
        let trace = reference_trace();
        let (rs, ts) = (linspace(0.0, 5.0, 20), linspace(0.5, 1.5, 5));
        let a = reconstruct(&trace, &rs, &ts, 0.0).unwrap();
        let b = reconstruct(&trace.negated(), &rs, &ts, 0.0).unwrap();
        for (ra, rb) in a.u.iter().zip(&b.u) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn out_of_range_grid_is_rejected() {
        let trace = reference_trace();
        assert!(matches!(
            reconstruct(&trace, &[0.0, 100.0], &[1.0], 0.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn literal_factor_breaks_the_equation() {
        let trace = reference_trace();
        let (rs, ts) = (linspace(0.0, 4.0, 80), linspace(0.0, 1.0, 80));
        let good = reconstruct_with(&trace, &rs, &ts, 1.0, false).unwrap();
        let literal = reconstruct_with(&trace, &rs, &ts, 1.0, true).unwrap();
        assert!(pde_residual(&literal).unwrap() > 100.0 * pde_residual(&good).unwrap());
    }

    #[test]
    fn lq_integral_is_grid_stable() {
        let trace = reference_trace();
        let coarse = reconstruct(&trace, &linspace(0.0, 20.0, 400), &[1.0], 0.0).unwrap();
        let fine = reconstruct(&trace, &linspace(0.0, 20.0, 800), &[1.0], 0.0).unwrap();
        let (a, b) = (radial_lq_integral(&coarse, 0, 2.0), radial_lq_integral(&fine, 0, 2.0));
        assert!(a.is_finite() && a > 0.0);
        assert_relative_eq!(a, b, max_relative = 1e-3);
    }
}
