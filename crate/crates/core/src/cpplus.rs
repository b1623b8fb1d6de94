//! Radial solver for the regularised non-negative problems
//!
//! ```text
//! u_t - Δu = f_m(u),   u(·, 0) = u₀ ≥ 0,
//! ```
//!
//! where `f_m` is the globally Lipschitz cut-off of `max{u, 0}^p`. Their
//! solutions increase with `m`, stay below the spatially constant
//! supersolution, and approach the maximal solution from above in the limit.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::io::num;
use crate::ivp::SolutionTrace;
use crate::model::check_p;
use crate::pde::maximal_solution;

/// `0` for `u ≤ 0`, `m^{1-p} u` on `[0, 1/m]`, `u^p` above.
pub fn f_m(u: f64, m: u32, p: f64) -> f64 {
    let m = m.max(1) as f64;
    if u <= 0.0 {
        0.0
    } else if u <= 1.0 / m {
        m.powf(1.0 - p) * u
    } else {
        u.powf(p)
    }
}

/// `(g/2) e^{-1/(η* - r)}` inside the ball of radius `η*`, zero outside.
pub fn bump_u0(r: f64, eta_star: f64, g: f64) -> f64 {
    if r < eta_star {
        0.5 * g * (-1.0 / (eta_star - r)).exp()
    } else {
        0.0
    }
}

/// Horizon `min{1/2, g^{1-p}(1 - 2^{p-1})/(1-p)}` used with the bump data.
pub fn default_horizon(g: f64, p: f64) -> f64 {
    (g.powf(1.0 - p) / (1.0 - p) * (1.0 - 0.5f64.powf(1.0 - p))).min(0.5)
}

/// `g = inf_{η ∈ [η*, √2 η*]} |w(η)| · 2^{-1/(1-p)}` from a profile, and
/// whether `w` changes sign on that window (which makes `g` vanish).
pub fn bump_scale(trace: &SolutionTrace, eta_star: f64) -> Result<(f64, bool)> {
    let (a, b) = (eta_star, 2f64.sqrt() * eta_star);
    let mut inf = trace.w(a)?.abs().min(trace.w(b)?.abs());
    let mut signs = (trace.w(a)? > 0.0, trace.w(a)? < 0.0);
    for (&eta, &w) in trace.etas.iter().zip(&trace.ws) {
        if eta > a && eta < b {
            inf = inf.min(w.abs());
            signs.0 |= w > 0.0;
            signs.1 |= w < 0.0;
        }
    }
    let straddles = signs.0 && signs.1;
    if straddles {
        inf = 0.0;
    }
    Ok((inf * 0.5f64.powf(1.0 / (1.0 - trace.params.p)), straddles))
}

/// One run of the regularised problem, `u[j][i] = u(r_grid[i], t_grid[j])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialEvolution {
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub m: u32,
    pub p: f64,
    pub n: u32,
    pub g: f64,
    pub eta_star: f64,
    /// Internal time step actually used.
    pub dt: f64,
}

/// Solve `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place (`d` becomes `x`).
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut [f64]) {
    let len = d.len();
    scratch[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..len {
        let den = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / den;
        d[i] = (d[i] - a[i] * d[i - 1]) / den;
    }
    for i in (0..len - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

/// Finite-volume radial Laplacian on a uniform grid from `r = 0`, as
/// tridiagonal coefficients `(lower, diag, upper)` for the interior unknowns
/// `0..N-1`; the node at `R` carries the Dirichlet value 0.
fn laplacian(r_grid: &[f64], n: u32) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dr = r_grid[1] - r_grid[0];
    let dim = n as f64;
    let nm1 = (n - 1) as i32;
    let unknowns = r_grid.len() - 1;
    let (mut lo, mut di, mut up) = (vec![0.0; unknowns], vec![0.0; unknowns], vec![0.0; unknowns]);
    for i in 0..unknowns {
        let r = r_grid[i];
        let (rm, rp) = ((r - 0.5 * dr).max(0.0), r + 0.5 * dr);
        let volume = (rp.powi(n as i32) - rm.powi(n as i32)) / dim;
        let (am, ap) = (rm.powi(nm1), rp.powi(nm1));
        let am = if i == 0 { 0.0 } else { am };
        lo[i] = am / (dr * volume);
        up[i] = ap / (dr * volume);
        di[i] = -(am + ap) / (dr * volume);
    }
    (lo, di, up)
}

/// Method of lines on `[0, R]` with a second-order finite-volume Laplacian,
/// `u(R) = 0`, and IMEX time stepping: the diffusion implicit, the reaction
/// explicit (backward Euler for the first step, SBDF2 after). The internal
/// step respects `Δt ≤ m^{p-1}/2`, subdividing the `t_steps` output
/// intervals when needed.
#[allow(clippy::too_many_arguments)]
pub fn solve_cpplus(
    m: u32,
    p: f64,
    n: u32,
    eta_star: f64,
    g: f64,
    horizon: f64,
    r_grid: &[f64],
    t_steps: usize,
) -> Result<RadialEvolution> {
    check_p(p)?;
    if m < 1 || n < 1 {
        return Err(Error::Parameter("m and n must be at least 1".into()));
    }
    if !(eta_star > 0.0 && g >= 0.0 && horizon > 0.0 && t_steps >= 1) {
        return Err(Error::Parameter(
            "need η* > 0, g ≥ 0, T > 0 and at least one time step".into(),
        ));
    }
    if r_grid.len() < 3 || r_grid[0] != 0.0 {
        return Err(Error::Grid("r_grid must start at 0 and have at least 3 nodes".into()));
    }
    let dr = r_grid[1] - r_grid[0];
    if r_grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dr).abs() > 1e-9 * dr)
    {
        return Err(Error::Grid("r_grid must be uniformly spaced".into()));
    }
    let big_r = *r_grid.last().expect("non-empty");
    let need = 4.0 * eta_star + 4.0 * horizon.sqrt();
    if big_r < need * (1.0 - 1e-12) {
        return Err(Error::Grid(format!(
            "outer radius {big_r} below the far-field requirement 4η* + 4√T = {need}"
        )));
    }

    let dt_out = horizon / t_steps as f64;
    let dt_max = 0.5 * (m as f64).powf(p - 1.0);
    let sub = (dt_out / dt_max).ceil().max(1.0) as usize;
    let dt = dt_out / sub as f64;

    let (lo, di, up) = laplacian(r_grid, n);
    let unknowns = lo.len();
    // (I - dt L) for the start, (3I - 2dt L) for SBDF2
    let be_diag: Vec<f64> = di.iter().map(|d| 1.0 - dt * d).collect();
    let bd_diag: Vec<f64> = di.iter().map(|d| 3.0 - 2.0 * dt * d).collect();
    let scale = |c: f64, v: &[f64]| v.iter().map(|x| -c * x).collect::<Vec<f64>>();
    let (be_lo, be_up) = (scale(dt, &lo), scale(dt, &up));
    let (bd_lo, bd_up) = (scale(2.0 * dt, &lo), scale(2.0 * dt, &up));

    let mut u: Vec<f64> = r_grid[..unknowns]
        .iter()
        .map(|&r| bump_u0(r, eta_star, g))
        .collect();
    let mut prev: Option<Vec<f64>> = None;
    let mut rhs = vec![0.0; unknowns];
    let mut scratch = vec![0.0; unknowns];
    let with_boundary = |v: &[f64]| {
        let mut row = v.to_vec();
        row.push(0.0);
        row
    };
    let mut rows = vec![with_boundary(&u)];
    let mut t_grid = vec![0.0];
    for k in 1..=t_steps {
        for _ in 0..sub {
            match &prev {
                None => {
                    for i in 0..unknowns {
                        rhs[i] = u[i] + dt * f_m(u[i], m, p);
                    }
                    thomas(&be_lo, &be_diag, &be_up, &mut rhs, &mut scratch);
                }
                Some(old) => {
                    for i in 0..unknowns {
                        let react = 2.0 * f_m(u[i], m, p) - f_m(old[i], m, p);
                        rhs[i] = 4.0 * u[i] - old[i] + 2.0 * dt * react;
                    }
                    thomas(&bd_lo, &bd_diag, &bd_up, &mut rhs, &mut scratch);
                }
            }
            if rhs.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical("non-finite value in the regularised evolution".into()));
            }
            let next = std::mem::replace(&mut rhs, vec![0.0; unknowns]);
            prev = Some(std::mem::replace(&mut u, next));
        }
        rows.push(with_boundary(&u));
        t_grid.push(horizon * k as f64 / t_steps as f64);
    }
    Ok(RadialEvolution {
        r_grid: r_grid.to_vec(),
        t_grid,
        u: rows,
        m,
        p,
        n,
        g,
        eta_star,
        dt,
    })
}

/// Runs for several `m` on shared grids, concurrently; output sorted by `m`.
#[allow(clippy::too_many_arguments)]
pub fn solve_family(
    ms: &[u32],
    p: f64,
    n: u32,
    eta_star: f64,
    g: f64,
    horizon: f64,
    r_grid: &[f64],
    t_steps: usize,
) -> Result<Vec<RadialEvolution>> {
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    ms.par_iter()
        .map(|&m| solve_cpplus(m, p, n, eta_star, g, horizon, r_grid, t_steps))
        .collect()
}

impl RadialEvolution {
    /// `‖u₀‖_∞ = (g/2) e^{-1/η*}`, attained at the origin.
    pub fn initial_sup(&self) -> f64 {
        bump_u0(0.0, self.eta_star, self.g)
    }

    /// `((1-p)t + ‖u₀‖_∞^{1-p})^{1/(1-p)}`.
    pub fn supersolution(&self, t: f64) -> f64 {
        let q = 1.0 - self.p;
        ((q * t) + self.initial_sup().powf(q)).powf(1.0 / q)
    }

    /// Worst margin `supersolution(t) - u` over all nodes.
    pub fn bound_report(&self, abs_tol: f64) -> CheckReport {
        let mut margin = f64::INFINITY;
        for (row, &t) in self.u.iter().zip(&self.t_grid) {
            let bound = self.supersolution(t);
            for &u in row {
                margin = margin.min(bound - u);
            }
        }
        CheckReport::lower("supersolution_bound", None, margin, 0.0, abs_tol)
    }

    /// Smallest value anywhere; non-negative up to rounding.
    pub fn min_value(&self) -> f64 {
        self.u.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|u|` on the outer tenth of the grid.
    pub fn far_field(&self) -> f64 {
        let start = self.r_grid.len() * 9 / 10;
        self.u
            .iter()
            .flat_map(|row| row[start..].iter())
            .fold(0.0, |m, u| m.max(u.abs()))
    }

    /// Far-field check: outer tenth below `10⁻⁸ ‖u₀‖_∞`.
    pub fn far_field_report(&self) -> CheckReport {
        let sup = self.initial_sup();
        CheckReport::upper("far_field", None, self.far_field(), 1e-8 * sup, 0.0)
    }

    /// CSV `r,t,u,m`, time-major.
    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> io::Result<()> {
        if header {
            writeln!(out, "r,t,u,m")?;
        }
        for (row, &t) in self.u.iter().zip(&self.t_grid) {
            for (&r, &u) in self.r_grid.iter().zip(row) {
                writeln!(out, "{},{},{},{}", num(r), num(t), num(u), self.m)?;
            }
        }
        Ok(())
    }

    fn same_grids(&self, other: &Self) -> bool {
        self.r_grid == other.r_grid && self.t_grid == other.t_grid
    }
}

/// Largest `u^{(m)} - u^{(m')}` over all nodes and consecutive pairs `m < m'`;
/// non-positive when the sequence is pointwise non-decreasing in `m`.
pub fn monotonicity_gap(evolutions: &[RadialEvolution]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for pair in evolutions.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !a.same_grids(b) || a.m >= b.m {
            return Err(Error::Grid("evolutions must share grids and increase in m".into()));
        }
        for (ra, rb) in a.u.iter().zip(&b.u) {
            for (x, y) in ra.iter().zip(rb) {
                worst = worst.max(x - y);
            }
        }
    }
    Ok(worst)
}

/// Margins `u^{(m)}(r, t) - ((1-p)t)^{1/(1-p)}` at probe nodes, per `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub ms: Vec<u32>,
    /// Probe nodes `(r, t)`.
    pub nodes: Vec<(f64, f64)>,
    /// `margins[k][j]`: run `k`, node `j`.
    pub margins: Vec<Vec<f64>>,
    /// Per node, the margin of the largest `m`.
    pub best: Vec<f64>,
    /// Whether every node's margin is non-decreasing in `m`.
    pub non_decreasing: bool,
}

/// Probe nodes are given as grid indices `(i, j)` into `(r_grid, t_grid)`.
pub fn lower_bound_probe(
    evolutions: &[RadialEvolution],
    nodes: &[(usize, usize)],
) -> Result<ProbeReport> {
    let first = evolutions
        .first()
        .ok_or_else(|| Error::Grid("no evolutions to probe".into()))?;
    for pair in evolutions.windows(2) {
        if !pair[0].same_grids(&pair[1]) || pair[0].m >= pair[1].m {
            return Err(Error::Grid("evolutions must share grids and increase in m".into()));
        }
    }
    if nodes
        .iter()
        .any(|&(i, j)| i >= first.r_grid.len() || j >= first.t_grid.len())
    {
        return Err(Error::Grid("probe node outside the grid".into()));
    }
    let p = first.p;
    let margins: Vec<Vec<f64>> = evolutions
        .iter()
        .map(|ev| {
            nodes
                .iter()
                .map(|&(i, j)| ev.u[j][i] - maximal_solution(ev.t_grid[j], p))
                .collect()
        })
        .collect();
    let non_decreasing = (0..nodes.len()).all(|j| margins.windows(2).all(|w| w[1][j] >= w[0][j]));
    Ok(ProbeReport {
        ms: evolutions.iter().map(|e| e.m).collect(),
        nodes: nodes
            .iter()
            .map(|&(i, j)| (first.r_grid[i], first.t_grid[j]))
            .collect(),
        best: margins.last().cloned().unwrap_or_default(),
        margins,
        non_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::linspace;
    use approx::assert_relative_eq;

    #[test]
    fn f_m_branches() {
        assert_eq!(f_m(-1.0, 3, 0.5), 0.0);
        for m in [1, 2, 4, 8] {
            let knot = 1.0 / m as f64;
            let left = (m as f64).powf(0.5) * knot;
            assert_relative_eq!(left, knot.powf(0.5), max_relative = 1e-15);
            assert_relative_eq!(f_m(knot, m, 0.5), (m as f64).powf(-0.5), max_relative = 1e-15);
        }
        assert_eq!(f_m(1.0, 4, 0.5), 1.0);
    }

    #[test]
    fn f_m_ordering() {
        // f_m ≤ f_{m'} ≤ u^p for m ≤ m'
        for k in 0..1000 {
            let u = k as f64 * 1e-3;
            let mut last = 0.0;
            for m in [1, 2, 4, 8, 16] {
                let v = f_m(u, m, 0.3);
                assert!(v >= last && v <= u.powf(0.3) + 1e-15);
                last = v;
            }
        }
    }

    #[test]
    fn bump_values() {
        assert_eq!(bump_u0(1.0, 1.0, 2.0), 0.0);
        assert_relative_eq!(bump_u0(0.0, 1.0, 2.0), (-1.0f64).exp(), epsilon = 1e-16);
        assert_eq!(bump_u0(1.5, 1.0, 2.0), 0.0);
    }

    #[test]
    fn laplacian_is_exact_on_quadratics() {
        // Δ r² = 2n in n dimensions, away from the boundary row
        for n in [1, 2, 3] {
            let r = linspace(0.0, 2.0, 40);
            let (lo, di, up) = laplacian(&r, n);
            for i in 0..r.len() - 2 {
                let f = |k: usize| r[k] * r[k];
                let below = if i == 0 { 0.0 } else { lo[i] * f(i - 1) };
                let val = below + di[i] * f(i) + up[i] * f(i + 1);
                assert_relative_eq!(val, 2.0 * n as f64, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let r = linspace(0.0, 8.0, 80);
        let ev = solve_cpplus(4, 0.5, 3, 1.0, 0.0, 0.5, &r, 50).unwrap();
        assert!(ev.u.iter().flatten().all(|&u| u == 0.0));
    }

    #[test]
    fn supersolution_and_sign() {
        let r = linspace(0.0, 8.0, 160);
        let ev = solve_cpplus(2, 0.5, 3, 1.0, 1.0, 0.5, &r, 100).unwrap();
        assert!(ev.bound_report(1e-12).pass);
        assert!(ev.min_value() >= -1e-12);
    }

    #[test]
    fn far_field_truncation_is_checked() {
        let r = linspace(0.0, 3.0, 30);
        assert!(solve_cpplus(1, 0.5, 3, 1.0, 1.0, 0.5, &r, 10).is_err());
    }

    #[test]
    fn second_order_in_space_and_time() {
        let at = |k: usize| {
            let r = linspace(0.0, 8.0, 100 * k);
            let ev = solve_cpplus(2, 0.5, 3, 1.0, 1.0, 0.25, &r, 50 * k).unwrap();
            ev.u[50 * k][0]
        };
        let (a, b, c) = (at(1), at(2), at(4));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn probe_at_initial_time() {
        let r = linspace(0.0, 8.0, 80);
        let evs: Vec<_> = [1, 2]
            .iter()
            .map(|&m| solve_cpplus(m, 0.5, 3, 1.0, 1.0, 0.5, &r, 20).unwrap())
            .collect();
        let rep = lower_bound_probe(&evs, &[(0, 0)]).unwrap();
        assert_relative_eq!(rep.margins[0][0], bump_u0(0.0, 1.0, 1.0), epsilon = 1e-16);
        let zero: Vec<_> = [1, 2]
            .iter()
            .map(|&m| solve_cpplus(m, 0.5, 3, 1.0, 0.0, 0.5, &r, 20).unwrap())
            .collect();
        let rep = lower_bound_probe(&zero, &[(0, 20)]).unwrap();
        assert_relative_eq!(rep.margins[1][0], -maximal_solution(0.5, 0.5), epsilon = 1e-16);
    }
}
