//! The singular initial value problem
//!
//! ```text
//! w'' + ((n-1)/η + η/2) w' = H(w),   w(0) = α,   w'(0) = 0.
//! ```
//!
//! Three routes to the same profile: a Picard iteration of the integral form on
//! a short interval, a series start followed by adaptive Dormand–Prince
//! continuation of the first-order system, and quadrature oracles that
//! re-derive `w'` and `w` from a finished trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_p, dh_unchecked, energy_constants, equilibrium_amplitude, h_unchecked, v_unchecked,
    Params, PhasePoint, WindowMode,
};
use crate::quadrature::{adaptive_gk, GaussLegendre, PanelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Picard,
    RkContinuation,
    Constant,
}

/// Counters collected while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Steps shortened so that a crossing of `w = 0` is straddled by a short step.
    pub crossing_steps: usize,
}

/// Sampled profile `(η, w, w', w'')` with piecewise cubic Hermite interpolation.
///
/// `w` is interpolated from `(w, w')` and `w'` from `(w', w'')`, so both
/// channels carry an `O(h⁴)` interpolation error.
#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub params: Params,
    pub etas: Vec<f64>,
    pub ws: Vec<f64>,
    pub wps: Vec<f64>,
    pub wpps: Vec<f64>,
    pub method_tag: MethodTag,
    /// Position after which the profile is carried as exactly `(0, 0)`.
    pub quiescent_from: Option<f64>,
    pub stats: StepStats,
    /// Segments stepped relative to the cusp of a zero, interpolated likewise.
    cusps: Vec<CuspSpan>,
}

/// Segments `first..=last` share the cusp expansion `cusp`.
#[derive(Debug, Clone, Copy)]
struct CuspSpan {
    first: usize,
    last: usize,
    cusp: Cusp,
}

/// A Picard solution on `[0, ε]`.
#[derive(Debug, Clone)]
pub struct LocalTrace {
    pub trace: SolutionTrace,
    pub epsilon: f64,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
}

impl SolutionTrace {
    /// Build a trace from raw samples, e.g. a manufactured profile.
    pub fn from_samples(
        params: Params,
        etas: Vec<f64>,
        ws: Vec<f64>,
        wps: Vec<f64>,
        wpps: Vec<f64>,
        method_tag: MethodTag,
    ) -> Result<Self> {
        let len = etas.len();
        if len < 2 || ws.len() != len || wps.len() != len || wpps.len() != len {
            return Err(Error::Grid("trace samples must have equal length ≥ 2".into()));
        }
        if etas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("trace abscissae must be strictly increasing".into()));
        }
        Ok(SolutionTrace {
            params,
            etas,
            ws,
            wps,
            wpps,
            method_tag,
            quiescent_from: None,
            stats: StepStats::default(),
            cusps: Vec::new(),
        })
    }

    fn constant(params: Params, value: f64) -> Self {
        let count = (params.eta_max / 0.5).ceil().max(1.0) as usize;
        let etas: Vec<f64> = (0..=count)
            .map(|k| params.eta_max * k as f64 / count as f64)
            .collect();
        let len = etas.len();
        SolutionTrace {
            params,
            etas,
            ws: vec![value; len],
            wps: vec![0.0; len],
            wpps: vec![0.0; len],
            method_tag: MethodTag::Constant,
            quiescent_from: None,
            stats: StepStats::default(),
            cusps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn eta_end(&self) -> f64 {
        *self.etas.last().expect("non-empty trace")
    }

    /// Index `i` with `etas[i] ≤ eta ≤ etas[i+1]`.
    pub fn segment(&self, eta: f64) -> Result<usize> {
        let (lo, hi) = (self.etas[0], self.eta_end());
        if !(eta >= lo && eta <= hi) {
            return Err(Error::Range(format!("η = {eta} outside trace range [{lo}, {hi}]")));
        }
        let idx = self.etas.partition_point(|&x| x <= eta);
        Ok(idx.saturating_sub(1).min(self.etas.len() - 2))
    }

    /// Interpolated `(w, w')`.
    pub fn eval(&self, eta: f64) -> Result<PhasePoint> {
        let i = self.segment(eta)?;
        Ok(self.eval_in(i, eta))
    }

    /// Interpolate inside segment `i` without a range check.
    ///
    /// Next to a zero of `w` the cusp expansion is subtracted at both ends and
    /// added back at `eta`, so only the smooth remainder is interpolated.
    pub fn eval_in(&self, i: usize, eta: f64) -> PhasePoint {
        let (a, b) = (self.etas[i], self.etas[i + 1]);
        let h = b - a;
        let t = (eta - a) / h;
        let (y0, d0, y1, d1) = (
            [self.ws[i], self.wps[i]],
            self.wpps[i],
            [self.ws[i + 1], self.wps[i + 1]],
            self.wpps[i + 1],
        );
        match self.cusp_of(i) {
            None => PhasePoint::new(
                hermite(t, h, y0[0], y0[1], y1[0], y1[1]),
                hermite(t, h, y0[1], d0, y1[1], d1),
            ),
            Some(c) => {
                let (ca, cb, ce) = (c.at(a), c.at(b), c.at(eta));
                PhasePoint::new(
                    ce.0 + hermite(t, h, y0[0] - ca.0, y0[1] - ca.1, y1[0] - cb.0, y1[1] - cb.1),
                    ce.1 + hermite(t, h, y0[1] - ca.1, d0 - ca.2, y1[1] - cb.1, d1 - cb.2),
                )
            }
        }
    }

    fn cusp_of(&self, i: usize) -> Option<Cusp> {
        let k = self.cusps.partition_point(|s| s.first <= i).checked_sub(1)?;
        let span = self.cusps[k];
        (i <= span.last).then_some(span.cusp)
    }

    pub fn w(&self, eta: f64) -> Result<f64> {
        Ok(self.eval(eta)?.w)
    }

    /// Negated copy, the trace of `-α`.
    pub fn negated(&self) -> Self {
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect();
        SolutionTrace {
            params: self.params.mirrored(),
            ws: neg(&self.ws),
            wps: neg(&self.wps),
            wpps: neg(&self.wpps),
            cusps: self
                .cusps
                .iter()
                .map(|s| CuspSpan { cusp: s.cusp.negated(), ..*s })
                .collect(),
            ..self.clone()
        }
    }

    /// Strict sign changes of `w` between samples, located on the interpolant.
    pub fn zeros(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut last_sign = 0.0;
        let mut last_idx = 0;
        for i in 0..self.len() {
            let s = sign(self.ws[i]);
            if s == 0.0 {
                continue;
            }
            if last_sign != 0.0 && s != last_sign {
                // nonzero samples at last_idx and i with opposite signs
                let mut j = last_idx;
                while j < i && sign(self.ws[j + 1]) == last_sign {
                    j += 1;
                }
                let z = if j + 1 == i || sign(self.ws[j + 1]) != 0.0 {
                    self.root_in(j, |pt| pt.w)
                } else {
                    self.etas[j + 1]
                };
                let slope = self.eval(z).map(|pt| pt.wp).unwrap_or(self.wps[j + 1]);
                out.push((z, slope));
            }
            last_sign = s;
            last_idx = i;
        }
        out
    }

    /// Local extrema of `w` (sign changes of `w'`), as `(η, w)`.
    pub fn extrema(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len().saturating_sub(1) {
            let (a, b) = (self.wps[i], self.wps[i + 1]);
            if (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0) {
                let z = self.root_in(i, |pt| pt.wp);
                out.push((z, self.eval_in(i, z).w));
            }
        }
        out
    }

    /// Root of a channel inside segment `i` that changes sign across it.
    fn root_in(&self, i: usize, f: impl Fn(PhasePoint) -> f64) -> f64 {
        let (mut lo, mut hi) = (self.etas[i], self.etas[i + 1]);
        let flo = f(self.eval_in(i, lo));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sign(f(self.eval_in(i, mid))) == sign(flo) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn hermite(t: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

fn local_epsilon_formula(alpha: f64, p: f64) -> f64 {
    let (a, b) = (0.5 * alpha, 1.5 * alpha);
    let w_star = energy_constants(p).map(|c| c.w_min_arg).unwrap_or(f64::NAN);
    // H is convex on (0, ∞): the sup of |H| sits at an endpoint or at the minimiser.
    let mut sup = h_unchecked(a, p).abs().max(h_unchecked(b, p).abs());
    if w_star >= a && w_star <= b {
        sup = sup.max(h_unchecked(w_star, p).abs());
    }
    let first = if sup > 0.0 { (alpha / sup).sqrt() } else { f64::INFINITY };
    let second = (1.0 / (1.0 - p) + p * a.powf(p - 1.0)).powf(-0.5);
    first.min(second)
}

/// Length of the interval on which the integral operator contracts on
/// `{α/2 ≤ w ≤ 3α/2}`.
pub fn local_epsilon(alpha: f64, p: f64) -> Result<f64> {
    let e = equilibrium_amplitude(p)?;
    if !(alpha > 0.0 && alpha < e) {
        return Err(Error::Domain(format!(
            "local interval needs 0 < α < {e}, got α = {alpha}"
        )));
    }
    Ok(local_epsilon_formula(alpha, p))
}

/// Fixed point of the integral operator on `[0, local_epsilon]`.
///
/// `quad_points` Gauss–Legendre nodes are spread over panels of eight.
/// `α = e` is accepted and returns the constant after one sweep.
pub fn picard_solve(params: &Params, quad_points: usize) -> Result<LocalTrace> {
    check_p(params.p)?;
    let e = params.equilibrium();
    let alpha = params.alpha;
    if !(alpha > 0.0 && alpha <= e) {
        return Err(Error::Domain(format!(
            "Picard iteration needs 0 < α ≤ {e}, got α = {alpha}"
        )));
    }
    if quad_points < 16 {
        return Err(Error::Parameter("picard_solve needs at least 16 quadrature points".into()));
    }
    const ORDER: usize = 8;
    let epsilon = local_epsilon_formula(alpha, params.p);
    let panels = quad_points.div_ceil(ORDER);
    let grid = PanelGrid::uniform(epsilon, panels, ORDER)?;
    let size = panels * ORDER;

    let mut w = vec![alpha; size];
    let mut ratios = Vec::new();
    let mut prev_diff = f64::NAN;
    let mut iterations = 0;
    let image = loop {
        iterations += 1;
        let img = grid.apply(alpha, params.n, params.p, &w);
        let diff = img
            .w_nodes
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .chain(img.w_breaks.iter().map(|_| 0.0))
            .fold(0.0, f64::max);
        if prev_diff.is_finite() && prev_diff > 0.0 && diff > 0.0 {
            ratios.push(diff / prev_diff);
        }
        prev_diff = diff;
        w.clone_from(&img.w_nodes);
        if diff < params.abs_tol {
            break img;
        }
        if iterations >= 200 {
            return Err(Error::Numerical(format!(
                "Picard iteration did not converge in 200 sweeps (last change {diff:e})"
            )));
        }
    };

    // Interleave nodes and breaks into one increasing sample set.
    let nodes = grid.nodes();
    let breaks = grid.breaks();
    let mut etas = Vec::with_capacity(size + panels + 1);
    let mut ws = Vec::with_capacity(etas.capacity());
    let mut wps = Vec::with_capacity(etas.capacity());
    for k in 0..panels {
        etas.push(breaks[k]);
        ws.push(image.w_breaks[k]);
        wps.push(if k == 0 { 0.0 } else { image.wp_breaks[k] });
        for j in 0..ORDER {
            etas.push(nodes[k * ORDER + j]);
            ws.push(image.w_nodes[k * ORDER + j]);
            wps.push(image.wp_nodes[k * ORDER + j]);
        }
    }
    etas.push(breaks[panels]);
    ws.push(image.w_breaks[panels]);
    wps.push(image.wp_breaks[panels]);
    let wpps = etas
        .iter()
        .zip(ws.iter().zip(&wps))
        .map(|(&eta, (&w, &wp))| second_derivative(w, wp, eta, params))
        .collect();
    let mut local_params = *params;
    local_params.eta_max = epsilon;
    let mut trace =
        SolutionTrace::from_samples(local_params, etas, ws, wps, wpps, MethodTag::Picard)?;
    trace.stats.accepted = iterations;
    Ok(LocalTrace {
        trace,
        epsilon,
        iterations,
        contraction_ratios: ratios,
    })
}

fn second_derivative(w: f64, wp: f64, eta: f64, params: &Params) -> f64 {
    let h = h_unchecked(w, params.p);
    if eta == 0.0 {
        h / params.n as f64
    } else {
        h - ((params.n - 1) as f64 / eta + 0.5 * eta) * wp
    }
}

/// Right-hand side of the first-order system `(w, w')' = (w', H(w) - ((n-1)/η + η/2) w')`.
pub fn rhs(pt: PhasePoint, eta: f64, params: &Params) -> Result<PhasePoint> {
    check_p(params.p)?;
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("η must be non-negative, got {eta}")));
    }
    if eta == 0.0 && pt.wp != 0.0 {
        return Err(Error::Domain("the system is singular at η = 0 unless w' = 0".into()));
    }
    Ok(PhasePoint::new(pt.wp, second_derivative(pt.w, pt.wp, eta, params)))
}

/// Length of the window after a crossing at `eta_bar` with slope `beta` over
/// which the profile provably stays monotone with slope in `[β/2, β]`.
pub fn crossing_window(beta: f64, eta_bar: f64, p: f64, n: u32, mode: WindowMode) -> Result<f64> {
    let consts = energy_constants(p)?;
    let e = equilibrium_amplitude(p)?;
    let beta = beta.abs();
    if !(beta > 0.0) || !(eta_bar > 0.0) {
        return Err(Error::Window(format!(
            "crossing window needs β > 0 and η̄ > 0 (β = {beta}, η̄ = {eta_bar})"
        )));
    }
    let growth = if n == 1 {
        f64::INFINITY
    } else {
        (8.0_f64 / 7.0).powf(1.0 / (n - 1) as f64) * eta_bar
    };
    let gaussian = (eta_bar * eta_bar - 4.0 * (6.0_f64 / 7.0).ln()).sqrt();
    let curvature = eta_bar - beta / (4.0 * consts.m_h);
    let amplitude = e / beta;
    let w = match mode {
        WindowMode::Literal => growth.min(gaussian).min(curvature).min(amplitude),
        WindowMode::Offset => (growth - eta_bar)
            .min(gaussian - eta_bar)
            .min(curvature - eta_bar)
            .min(amplitude),
    };
    Ok(w)
}

/// Amplitude below which the profile is treated as quiescent. At amplitude `A`
/// small oscillations have angular frequency ≈ `A^{(p-1)/2}`, so by default the
/// tail is dropped once it oscillates faster than `max_frequency`; an explicit
/// `quiescent_amplitude` takes precedence.
pub fn quiescence_amplitude(params: &Params) -> f64 {
    params
        .quiescent_amplitude
        .unwrap_or_else(|| params.max_frequency.powf(-2.0 / (1.0 - params.p)))
}

/// Amplitude implied by the small-amplitude energy `½w'² + |w|^{1+p}/(1+p)`.
fn energy_amplitude(w: f64, wp: f64, p: f64) -> f64 {
    let e = 0.5 * wp * wp + w.abs().powf(1.0 + p) / (1.0 + p);
    ((1.0 + p) * e).powf(1.0 / (1.0 + p))
}

/// Slope of a small oscillation of amplitude `A`: `A^{(1+p)/2}` up to a constant.
#[inline]
fn slope_scale(amp: f64, p: f64) -> f64 {
    amp.powf(0.5 * (1.0 + p))
}

fn check_run(params: &Params) -> Result<()> {
    let mut abs = *params;
    abs.alpha = params.alpha.abs();
    abs.validate()
}

// Dormand–Prince 5(4).
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct System {
    p: f64,
    nm1: f64,
}

impl System {
    #[inline]
    fn f(&self, eta: f64, y: [f64; 2]) -> [f64; 2] {
        [y[1], h_unchecked(y[0], self.p) - (self.nm1 / eta + 0.5 * eta) * y[1]]
    }
}

#[inline]
fn axpy(y: [f64; 2], h: f64, terms: &[(f64, [f64; 2])]) -> [f64; 2] {
    let mut out = y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One DP5 step of `y' = f(η, y)`: (new state, FSAL derivative, error vector).
fn dp5_step(
    f: impl Fn(f64, [f64; 2]) -> [f64; 2],
    eta: f64,
    y: [f64; 2],
    k1: [f64; 2],
    h: f64,
) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let k2 = f(eta + C2 * h, axpy(y, h, &[(A21, k1)]));
    let k3 = f(eta + C3 * h, axpy(y, h, &[(A31, k1), (A32, k2)]));
    let k4 = f(eta + C4 * h, axpy(y, h, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = f(
        eta + C5 * h,
        axpy(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]),
    );
    let k6 = f(
        eta + h,
        axpy(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]),
    );
    let y_new = axpy(y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    let k7 = f(eta + h, y_new);
    let err = axpy(
        [0.0, 0.0],
        h,
        &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)],
    );
    (y_new, k7, err)
}

/// Leading singular part of `w` near a simple zero `z` with slope `β`.
///
/// With `s = η - z` and `g = (n-1)/η + η/2`, the forcing of the profile
/// equation behaves like `-c sign(s)|s|^p + d|s|^{p+1} + O(|s|^{p+2})`, where
/// `c = σ|β|^p` and `d = c g(z) (p/2 + 1/(p+1))` (the second term collects the
/// curvature `w''(z) = -g(z)β` and the damping of the first term). `φ` has
/// exactly this second derivative; integrating `w - φ` instead of `w` leaves a
/// forcing that is `C²`, so steps next to the zero need not shrink towards it.
#[derive(Debug, Clone, Copy)]
struct Cusp {
    z: f64,
    c: f64,
    d: f64,
    e: f64,
    p: f64,
}

impl Cusp {
    #[inline]
    fn at(&self, eta: f64) -> (f64, f64, f64) {
        let s = eta - self.z;
        if s == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let a = s.abs();
        let ap = a.powf(self.p);
        let sg = s.signum();
        let (p, c, d, e) = (self.p, self.c, self.d, self.e);
        let a2p1 = ap * ap * a;
        (
            -c * sg * ap * a * a / ((p + 1.0) * (p + 2.0))
                + d * ap * a * a * a / ((p + 2.0) * (p + 3.0))
                + e * sg * a2p1 * a * a / ((2.0 * p + 2.0) * (2.0 * p + 3.0)),
            -c * ap * a / (p + 1.0) + d * sg * ap * a * a / (p + 2.0) + e * a2p1 * a / (2.0 * p + 2.0),
            -c * sg * ap + d * ap * a + e * sg * a2p1,
        )
    }
}

impl Cusp {
    fn negated(self) -> Self {
        Cusp { c: -self.c, d: -self.d, e: -self.e, ..self }
    }

    fn new(z: f64, beta: f64, p: f64, n: f64) -> Self {
        let c = beta.signum() * beta.abs().powf(p);
        let g = (n - 1.0) / z + 0.5 * z;
        Cusp {
            z,
            c,
            d: c * g * (0.5 * p + 1.0 / (p + 1.0)),
            e: p * c * c / (beta * (p + 1.0) * (p + 2.0)),
            p,
        }
    }
}

/// DP5 step, relative to `cusp` when one is active.
fn cusp_step(
    sys: &System,
    cusp: Option<Cusp>,
    eta: f64,
    y: [f64; 2],
    k1: [f64; 2],
    h: f64,
) -> ([f64; 2], [f64; 2], [f64; 2]) {
    match cusp {
        None => dp5_step(|t, v| sys.f(t, v), eta, y, k1, h),
        Some(cusp) => {
            let fh = |t: f64, v: [f64; 2]| {
                let (f0, f1, f2) = cusp.at(t);
                let full = sys.f(t, [v[0] + f0, v[1] + f1]);
                [v[1], full[1] - f2]
            };
            let (a0, a1, _) = cusp.at(eta);
            let yh = [y[0] - a0, y[1] - a1];
            let (yh_new, _, err) = dp5_step(fh, eta, yh, fh(eta, yh), h);
            let (b0, b1, _) = cusp.at(eta + h);
            let y_new = [yh_new[0] + b0, yh_new[1] + b1];
            (y_new, sys.f(eta + h, y_new), err)
        }
    }
}

/// Newton iteration on the zero of `w` ahead of `eta`, each iterate obtained
/// by one step integrated relative to the cusp at the current guess.
fn locate_zero(
    sys: &System,
    eta: f64,
    y: [f64; 2],
    k1: [f64; 2],
    guess: f64,
    params: &Params,
) -> Option<Cusp> {
    let p = params.p;
    let n = params.n as f64;
    let mut z = guess;
    let mut beta = y[1] + k1[1] * (z - eta);
    // The error of a step relative to a misplaced cusp is proportional to the
    // misplacement, so Newton contracts quickly even from a coarse guess. The
    // shooting steps only locate the zero; the trajectory itself is then
    // advanced by ordinary error-controlled steps relative to the cusp.
    for _ in 0..12 {
        if !(z > eta) || beta == 0.0 {
            return None;
        }
        let cusp = Cusp::new(z, beta, p, n);
        let (yz, _, _) = cusp_step(sys, Some(cusp), eta, y, k1, z - eta);
        if !(yz[1] != 0.0 && yz[1].is_finite()) {
            return None;
        }
        let dz = -yz[0] / yz[1];
        beta = yz[1];
        z += dz;
        if dz.abs() <= 1e-3 * params.rel_tol * (z - eta).abs() + 4.0 * f64::EPSILON * z {
            return Some(Cusp::new(z, beta, p, n));
        }
    }
    None
}

/// Nearest zero of the local quadratic model of `w`, as an offset from `η`.
fn zero_offset(w: f64, wp: f64, wpp: f64) -> Option<f64> {
    if wp == 0.0 {
        return None;
    }
    let lin = -w / wp;
    let disc = wp * wp - 2.0 * wpp * w;
    if wpp == 0.0 || disc < 0.0 {
        return Some(lin);
    }
    // the root continuous with the linear one as w'' → 0
    let q = -0.5 * (wp + wp.signum() * disc.sqrt());
    Some(if q != 0.0 { w / q } else { lin })
}

const MAX_STEPS: usize = 200_000_000;

/// Solve the profile problem on `[0, eta_max]`.
pub fn integrate(params: &Params) -> Result<SolutionTrace> {
    check_run(params)?;
    let p = params.p;
    let alpha = params.alpha;
    let e = params.equilibrium();
    if alpha == 0.0 {
        return Ok(SolutionTrace::constant(*params, 0.0));
    }
    if alpha.abs() == e {
        return Ok(SolutionTrace::constant(*params, alpha));
    }

    let n = params.n as f64;
    let a_abs = alpha.abs();
    let v0 = v_unchecked(alpha, 0.0, p);
    let h_alpha = h_unchecked(alpha, p);
    let a2 = h_alpha / (2.0 * n);
    let a4 = a2 * (dh_unchecked(alpha, p) - 1.0) / (4.0 * (n + 2.0));
    let eta_s = (local_epsilon_formula(a_abs, p) / 4.0).min(1e-3).min(params.eta_max);
    let sys = System { p, nm1: n - 1.0 };

    let mut etas = vec![0.0];
    let mut ws = vec![alpha];
    let mut wps = vec![0.0];
    let mut wpps = vec![h_alpha / n];
    let series = |t: f64| {
        let t2 = t * t;
        [alpha + a2 * t2 + a4 * t2 * t2, 2.0 * a2 * t + 4.0 * a4 * t2 * t]
    };
    let mut eta = eta_s;
    let mut y = series(eta);
    let mut k1 = sys.f(eta, y);
    etas.push(eta);
    ws.push(y[0]);
    wps.push(y[1]);
    wpps.push(k1[1]);

    let floor_amp = quiescence_amplitude(params);
    let tiny = 1e-3 * floor_amp * params.rel_tol;
    let mut stats = StepStats::default();
    let mut h = (0.01 * eta_s.max(1e-3)).max(1e-6);
    let mut h_prev = h;
    // (straddle cap, failed straddle attempts) while a crossing is approached
    let mut forced: Option<(f64, u32)> = None;
    let mut h_resume = 0.0_f64;
    let mut straddled = false;
    let mut quiescent_from = None;
    let mut err_prev = 1e-4_f64;
    let mut amp_now = energy_amplitude(y[0], y[1], p);
    let mut cusp: Option<Cusp> = None;
    let mut cusp_spans: Vec<CuspSpan> = Vec::new();

    while eta < params.eta_max {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Error::Numerical(format!(
                "step budget exhausted at η = {eta}; raise max_frequency limits or tolerances"
            )));
        }
        let mut step = h.min(params.eta_max - eta);
        let mut straddle_try = false;
        if let Some((cap, misses)) = forced {
            // distance to the zero being approached, refined at every step
            let s0 = cusp
                .map(|c| c.z - eta)
                .filter(|s0| *s0 > 0.0)
                .or_else(|| zero_offset(y[0], y[1], k1[1]).filter(|s0| *s0 > 0.0));
            match s0 {
                Some(s0) if misses < 8 => {
                    if s0 > 0.75 * cap {
                        step = step.min(s0 - 0.5 * cap);
                    } else {
                        step = step.min(cap);
                        straddle_try = true;
                    }
                }
                _ => forced = None,
            }
        }
        if step < step_floor(eta) && eta + step < params.eta_max {
            return Err(Error::Numerical(format!("step size underflow at η = {eta}")));
        }
        // Near a zero of w, locate it by shooting and integrate relative to its cusp.
        if cusp.is_some_and(|c| eta - c.z > 0.0 && y[0].abs() > 0.2 * amp_now) {
            cusp = None;
        }
        if cusp.is_none() && y[0].abs() < 0.2 * amp_now && y[0] * y[1] < 0.0 {
            if let Some(s0) = zero_offset(y[0], y[1], k1[1]).filter(|s0| *s0 > 0.0 && *s0 <= 3.0 * step) {
                cusp = locate_zero(&sys, eta, y, k1, eta + s0, params);
            }
        }
        let (y_new, k_new, err) = cusp_step(&sys, cusp, eta, y, k1, step);
        let amp_new = energy_amplitude(y_new[0], y_new[1], p);
        let amp = amp_now.max(amp_new);
        let sc_w = params.rel_tol * y[0].abs().max(y_new[0].abs()).max(amp) + tiny;
        let sc_wp = params.rel_tol * y[1].abs().max(y_new[1].abs()).max(slope_scale(amp, p)) + tiny;
        let err_norm = ((err[0] / sc_w).powi(2) + (err[1] / sc_wp).powi(2)).sqrt() / 2f64.sqrt();
        if !err_norm.is_finite() || err_norm > 1.0 {
            stats.rejected += 1;
            let fac = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = step * fac;
            continue;
        }

        // A crossing of w = 0 is straddled by a short step.
        if sign(y[0]) != 0.0 && sign(y_new[0]) != sign(y[0]) {
            let z = crossing_estimate(eta, step, y, k1, y_new, k_new);
            let beta = hermite_slope(eta, step, y, k1, y_new, k_new, z).abs();
            let cap = crossing_window(beta, z, p, params.n, params.window_mode)
                .map(|w| 1e-2 * w)
                .unwrap_or(step);
            if step > cap * (1.0 + 1e-12) && cap > 64.0 * step_floor(eta) {
                stats.rejected += 1;
                stats.crossing_steps += 1;
                forced = Some((cap, 0));
                h_resume = h_resume.max(step);
                continue;
            }
            if forced.take().is_some() {
                straddled = true;
            }
        } else if straddle_try {
            if let Some((_, misses)) = forced.as_mut() {
                *misses += 1;
            }
        }

        eta += step;
        y = y_new;
        k1 = k_new;
        amp_now = amp_new;
        stats.accepted += 1;
        push(&mut etas, &mut ws, &mut wps, &mut wpps, eta, y, k1);
        if let Some(c) = cusp {
            let seg = etas.len() - 2;
            match cusp_spans.last_mut() {
                Some(span) if span.cusp.z == c.z && span.last + 1 == seg => span.last = seg,
                _ => cusp_spans.push(CuspSpan { first: seg, last: seg, cusp: c }),
            }
        }

        if v_unchecked(y[0], y[1], p) >= v0 + params.abs_tol || y[0].abs() > e + params.abs_tol {
            return Err(Error::Numerical(format!(
                "trajectory left the energy sublevel set at η = {eta}"
            )));
        }

        // PI controller
        let en = err_norm.max(1e-10);
        let fac = 0.9 * en.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
        err_prev = en;
        h_prev = step;
        h = step * fac.clamp(0.2, 5.0);
        if straddled {
            // the short straddle step says nothing about the scale beyond the crossing
            h = h.max(h_resume);
            h_resume = 0.0;
            straddled = false;
            err_prev = 1e-4;
        }

        if amp_now < floor_amp && eta >= params.resolve_to {
            quiescent_from = Some(eta);
            break;
        }
    }

    if let Some(eq) = quiescent_from {
        let mut t = (eq + h_prev).min(params.eta_max);
        if t > eq {
            push(&mut etas, &mut ws, &mut wps, &mut wpps, t, [0.0, 0.0], [0.0, 0.0]);
        }
        while t < params.eta_max {
            t = (t + 0.5).min(params.eta_max);
            push(&mut etas, &mut ws, &mut wps, &mut wpps, t, [0.0, 0.0], [0.0, 0.0]);
        }
    }

    let mut trace = SolutionTrace::from_samples(
        *params,
        etas,
        ws,
        wps,
        wpps,
        MethodTag::RkContinuation,
    )?;
    trace.quiescent_from = quiescent_from;
    trace.stats = stats;
    trace.cusps = cusp_spans;
    Ok(trace)
}

fn step_floor(eta: f64) -> f64 {
    16.0 * f64::EPSILON * eta.max(1.0)
}

fn push(
    etas: &mut Vec<f64>,
    ws: &mut Vec<f64>,
    wps: &mut Vec<f64>,
    wpps: &mut Vec<f64>,
    eta: f64,
    y: [f64; 2],
    k: [f64; 2],
) {
    etas.push(eta);
    ws.push(y[0]);
    wps.push(y[1]);
    wpps.push(k[1]);
}

/// Root of the Hermite interpolant of `w` across one step.
fn crossing_estimate(eta: f64, h: f64, y0: [f64; 2], k0: [f64; 2], y1: [f64; 2], k1: [f64; 2]) -> f64 {
    let f = |t: f64| hermite(t, h, y0[0], k0[0], y1[0], k1[0]);
    let s0 = sign(y0[0]);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sign(f(mid)) == s0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eta + h * 0.5 * (lo + hi)
}

fn hermite_slope(eta: f64, h: f64, y0: [f64; 2], k0: [f64; 2], y1: [f64; 2], k1: [f64; 2], z: f64) -> f64 {
    let t = (z - eta) / h;
    hermite(t, h, y0[1], k0[1], y1[1], k1[1])
}

/// Truncation below which `e^{(s²-η²)/4}` is negligible against double precision.
fn lower_limit(eta: f64) -> f64 {
    (eta * eta - 4.0 * 46.0).max(0.0).sqrt()
}

/// `w'(η)` recomputed as `η^{1-n} e^{-η²/4} ∫₀^η H(w(s)) s^{n-1} e^{s²/4} ds`
/// from the interpolant of `w` alone.
pub fn derivative_oracle(trace: &SolutionTrace, eta: f64) -> Result<f64> {
    let p = trace.params.p;
    if !(eta > 0.0 && eta <= trace.eta_end()) {
        return Err(Error::Range(format!("oracle needs 0 < η ≤ {}, got {eta}", trace.eta_end())));
    }
    let nm1 = (trace.params.n - 1) as i32;
    let lo = lower_limit(eta);
    let i0 = trace.segment(lo)?;
    let i1 = trace.segment(eta)?;
    let scale = trace.ws.iter().fold(0.0_f64, |m, w| m.max(w.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-3 * trace.params.rel_tol * scale;
    let mut total = 0.0;
    for i in i0..=i1 {
        let a = trace.etas[i].max(lo);
        let b = trace.etas[i + 1].min(eta);
        if b <= a {
            continue;
        }
        total += adaptive_gk(a, b, &[], tol * (b - a) / eta.max(1.0), 4096, |s| {
            let w = trace.eval_in(i, s).w;
            h_unchecked(w, p) * (s / eta).powi(nm1) * ((s * s - eta * eta) / 4.0).exp()
        })?;
    }
    Ok(total)
}

/// The oracle at many points in one sweep over the trace.
///
/// Carries `B(η) = η^{1-n} e^{-η²/4} ∫₀^η …` from sample to sample, so the
/// cost is one quadrature per trace segment regardless of how many points
/// are requested.
pub fn derivative_oracle_many(trace: &SolutionTrace, etas: &[f64]) -> Result<Vec<f64>> {
    let p = trace.params.p;
    let nm1 = (trace.params.n - 1) as i32;
    let end = trace.eta_end();
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|&a, &b| etas[a].total_cmp(&etas[b]));
    let mut out = vec![0.0; etas.len()];
    let scale = trace.ws.iter().fold(0.0_f64, |m, w| m.max(w.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-3 * trace.params.rel_tol * scale;
    // acc = e^{-x²/4} ∫₀^x H(w) s^{n-1} e^{s²/4} ds at the current x
    let mut acc = 0.0;
    let mut x = 0.0;
    let mut seg = 0usize;
    let piece = |i: usize, a: f64, b: f64| -> Result<f64> {
        adaptive_gk(a, b, &[], tol * (b - a) / b.max(1.0), 4096, |s| {
            let w = trace.eval_in(i, s).w;
            h_unchecked(w, p) * s.powi(nm1) * ((s * s - b * b) / 4.0).exp()
        })
    };
    for &k in &order {
        let eta = etas[k];
        if !(eta > 0.0 && eta <= end) {
            return Err(Error::Range(format!("oracle needs 0 < η ≤ {end}, got {eta}")));
        }
        while seg + 1 < trace.len() && trace.etas[seg + 1] <= eta {
            let b = trace.etas[seg + 1];
            if b > x {
                acc = acc * ((x * x - b * b) / 4.0).exp() + piece(seg, x, b)?;
                x = b;
            }
            seg += 1;
        }
        let mut val = acc * ((x * x - eta * eta) / 4.0).exp();
        if eta > x {
            let i = seg.min(trace.len() - 2);
            val += piece(i, x, eta)?;
        }
        out[k] = val / eta.powi(nm1);
    }
    Ok(out)
}

/// `max |w(η) - T[w](η)|` over `check_etas`, applying the integral operator
/// panel-by-panel on the trace's own sample grid.
pub fn residual(trace: &SolutionTrace, check_etas: &[f64]) -> Result<f64> {
    if check_etas.is_empty() {
        return Ok(0.0);
    }
    let end = trace.eta_end();
    let top = check_etas.iter().copied().fold(0.0, f64::max);
    if check_etas.iter().any(|&x| !(x > 0.0 && x <= end)) {
        return Err(Error::Range(format!("check points must lie in (0, {end}]")));
    }
    let mut breaks: Vec<f64> = trace.etas.iter().copied().take_while(|&x| x < top).collect();
    breaks.extend_from_slice(check_etas);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    if breaks[0] != 0.0 {
        breaks.insert(0, 0.0);
    }
    let grid = PanelGrid::new(breaks, 8)?;
    let w_nodes = grid
        .nodes()
        .iter()
        .map(|&x| trace.eval(x).map(|pt| pt.w))
        .collect::<Result<Vec<_>>>()?;
    let img = grid.apply(trace.params.alpha, trace.params.n, trace.params.p, &w_nodes);
    let mut worst = 0.0_f64;
    for &c in check_etas {
        let k = grid
            .breaks()
            .iter()
            .position(|&b| (b - c).abs() <= 1e-14 * c.max(1.0))
            .expect("check point is a break");
        worst = worst.max((img.w_breaks[k] - trace.w(grid.breaks()[k])?).abs());
    }
    Ok(worst)
}

/// `∫₀^η e^{s²/4} s^{n-1} ds / (2 e^{η²/4} η^{n-2})`, which tends to 1.
pub fn watson_ratio(n: u32, eta: f64) -> Result<f64> {
    let nm1 = (n - 1) as i32;
    let rule = GaussLegendre::new(16);
    let panels = ((eta * eta).ceil() as usize).max(8);
    let mut total = 0.0;
    for k in 0..panels {
        let a = eta * k as f64 / panels as f64;
        let b = eta * (k + 1) as f64 / panels as f64;
        total += rule.integrate(a, b, |s| (s / eta).powi(nm1) * ((s * s - eta * eta) / 4.0).exp());
    }
    Ok(total * eta / 2.0)
}
