//! Qualitative checks on computed profiles: energy decay, the `4M_H/η` tail
//! bound, zeros and their isolation, decay envelopes, the bootstrap exponents
//! and continuous dependence on `α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ivp::{crossing_window, integrate, SolutionTrace};
use crate::model::{energy_constants, v_unchecked, Params};

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub params: Option<Params>,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
}

impl CheckReport {
    /// `measured ≤ bound + tolerance`.
    pub fn upper(name: &str, params: Option<Params>, measured: f64, bound: f64, tolerance: f64) -> Self {
        CheckReport {
            check_name: name.to_string(),
            params,
            pass: measured <= bound + tolerance,
            measured,
            bound,
            tolerance,
        }
    }

    /// `measured ≥ bound - tolerance`.
    pub fn lower(name: &str, params: Option<Params>, measured: f64, bound: f64, tolerance: f64) -> Self {
        CheckReport {
            pass: measured >= bound - tolerance,
            ..Self::upper(name, params, measured, bound, tolerance)
        }
    }
}

// ---------------------------------------------------------------- energy

/// `F(η) = V(w(η), w'(η))` along a trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub etas: Vec<f64>,
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    /// Mean of `F` over the last tenth of the samples.
    pub f_inf_estimate: f64,
    /// Largest increase `F(η_{i+1}) - F(η_i)` between consecutive samples.
    pub max_increase: f64,
    /// `max_η |F(η) - F(0) - ∫₀^η F'|`, with `F'` taken from the identity
    /// `F' = -((n-1)/η + η/2) w'²` on the dense interpolant and integrated by
    /// three-point Gauss–Legendre on every sample interval.
    pub derivative_mismatch: f64,
    /// Largest `F'` magnitude.
    pub derivative_scale: f64,
}

/// `F'(η)` from the closed form.
pub fn energy_derivative(wp: f64, eta: f64, n: u32) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    -((n - 1) as f64 / eta + 0.5 * eta) * wp * wp
}

pub fn energy_trace(trace: &SolutionTrace) -> EnergyTrace {
    let p = trace.params.p;
    let n = trace.params.n;
    let f: Vec<f64> = trace
        .ws
        .iter()
        .zip(&trace.wps)
        .map(|(&w, &wp)| v_unchecked(w, wp, p))
        .collect();
    let len = f.len();
    let tail = (len / 10).max(1);
    let f_inf_estimate = f[len - tail..].iter().sum::<f64>() / tail as f64;
    let dfs: Vec<f64> = trace
        .etas
        .iter()
        .zip(&trace.wps)
        .map(|(&eta, &wp)| energy_derivative(wp, eta, n))
        .collect();
    let max_increase = f
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    const GL3: [(f64, f64); 3] = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    let mut integral = 0.0;
    let mut derivative_mismatch = 0.0_f64;
    for i in 0..len.saturating_sub(1) {
        let (a, b) = (trace.etas[i], trace.etas[i + 1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wgt) in GL3 {
            let eta = mid + half * x;
            integral += wgt * half * energy_derivative(trace.eval_in(i, eta).wp, eta, n);
        }
        derivative_mismatch = derivative_mismatch.max((f[i + 1] - f[0] - integral).abs());
    }
    EnergyTrace {
        etas: trace.etas.clone(),
        f,
        f_inf_estimate,
        max_increase,
        derivative_mismatch,
        derivative_scale: dfs.iter().fold(0.0, |m, d| m.max(d.abs())),
    }
}

impl EnergyTrace {
    /// `F` non-increasing within `10·abs_tol`.
    pub fn monotonicity_report(&self, params: &Params) -> CheckReport {
        CheckReport::upper(
            "energy_non_increasing",
            Some(*params),
            self.max_increase,
            0.0,
            10.0 * params.abs_tol,
        )
    }

    /// `0 ≤ F(η) < V(α, 0)` for every sample with `η > 0`, reported as the
    /// worst violation of either side (negative when both hold).
    pub fn range_report(&self, params: &Params) -> CheckReport {
        let v0 = v_unchecked(params.alpha, 0.0, params.p);
        let mut worst = f64::NEG_INFINITY;
        let mut strict = true;
        for (&eta, &f) in self.etas.iter().zip(&self.f) {
            if eta > 0.0 {
                worst = worst.max(-f).max(f - v0);
                strict &= f < v0;
            }
        }
        let mut report =
            CheckReport::upper("energy_range", Some(*params), worst, 0.0, params.abs_tol);
        report.pass &= strict;
        report
    }
}

/// `max(|w|, |w'|)` at the end of the trace below `limit`.
pub fn origin_report(trace: &SolutionTrace, limit: f64) -> CheckReport {
    let last = trace.len() - 1;
    CheckReport::upper(
        "convergence_to_origin",
        Some(trace.params),
        trace.ws[last].abs().max(trace.wps[last].abs()),
        limit,
        0.0,
    )
}

// ---------------------------------------------------------------- tail bound

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailBoundReport {
    /// Smallest sample `η_α` from which `|w'(η)|·η ≤ 4M_H` holds at every later sample.
    pub eta_alpha: Option<f64>,
    /// `4M_H`.
    pub lemma_bound: f64,
    /// `(M_H/2)·sup_s s^k e^{-3s²/16} + 4(1-p)^{p/(1-p)}`, `k = 2p/(1-p) + 2`.
    pub global_bound: f64,
    /// `max |w'(η)|·η` over all samples.
    pub max_scaled_slope: f64,
    pub global_bound_holds: bool,
}

/// `sup_{s>0} s^k e^{-3s²/16} = (8k/3)^{k/2} e^{-k/2}`.
pub fn gaussian_power_sup(k: f64) -> f64 {
    (8.0 * k / 3.0).powf(0.5 * k) * (-0.5 * k).exp()
}

/// The all-η constant bounding `|w'(η)|·η`.
pub fn global_slope_bound(p: f64) -> Result<f64> {
    let consts = energy_constants(p)?;
    let k = 2.0 * p / (1.0 - p) + 2.0;
    Ok(0.5 * consts.big_m_h * gaussian_power_sup(k) + 4.0 * (1.0 - p).powf(p / (1.0 - p)))
}

pub fn tail_bound_report(trace: &SolutionTrace) -> Result<TailBoundReport> {
    let p = trace.params.p;
    let consts = energy_constants(p)?;
    let lemma_bound = 4.0 * consts.big_m_h;
    let global_bound = global_slope_bound(p)?;
    let scaled: Vec<f64> = trace
        .etas
        .iter()
        .zip(&trace.wps)
        .map(|(&eta, &wp)| (wp * eta).abs())
        .collect();
    let mut eta_alpha = None;
    for i in (0..scaled.len()).rev() {
        if scaled[i] > lemma_bound {
            break;
        }
        eta_alpha = Some(trace.etas[i]);
    }
    let max_scaled_slope = scaled.iter().copied().fold(0.0, f64::max);
    Ok(TailBoundReport {
        eta_alpha,
        lemma_bound,
        global_bound,
        max_scaled_slope,
        global_bound_holds: max_scaled_slope <= global_bound,
    })
}

impl TailBoundReport {
    /// `η_α` exists and is at most `limit`.
    pub fn eta_alpha_report(&self, params: &Params, limit: f64) -> CheckReport {
        CheckReport::upper(
            "tail_bound_eta_alpha",
            Some(*params),
            self.eta_alpha.unwrap_or(f64::INFINITY),
            limit,
            0.0,
        )
    }

    pub fn global_report(&self, params: &Params) -> CheckReport {
        CheckReport::upper(
            "tail_bound_global",
            Some(*params),
            self.max_scaled_slope,
            self.global_bound,
            0.0,
        )
    }
}

// ---------------------------------------------------------------- zeros

/// One sign change of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub eta_zero: f64,
    /// `w'` at the zero.
    pub slope: f64,
    /// Length of the window after the zero on which the slope provably stays
    /// within a factor two of its value at the zero.
    pub window: f64,
}

/// All zeros of a trace together with their isolation diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroCensus {
    pub records: Vec<ZeroRecord>,
    /// Per-zero threshold `10⁻⁶ · max |w|` over the two lobes adjacent to the zero.
    pub slope_floors: Vec<f64>,
    /// Indices of zeros whose slope does not clear its floor.
    pub floor_violations: Vec<usize>,
    /// Whether consecutive slopes strictly alternate in sign.
    pub alternating: bool,
}

pub const SLOPE_FLOOR_FACTOR: f64 = 1e-6;

pub fn zero_census(trace: &SolutionTrace) -> Result<ZeroCensus> {
    let params = &trace.params;
    let zeros = trace.zeros();
    let mut records = Vec::with_capacity(zeros.len());
    for &(z, slope) in &zeros {
        let window = if slope != 0.0 {
            crossing_window(slope, z, params.p, params.n, params.window_mode)?
        } else {
            0.0
        };
        records.push(ZeroRecord {
            eta_zero: z,
            slope,
            window,
        });
    }
    // lobe maxima: |w| between consecutive zeros (and the trace ends)
    let mut lobes = Vec::with_capacity(zeros.len() + 1);
    let mut i = 0;
    for k in 0..=zeros.len() {
        let end = zeros.get(k).map_or(f64::INFINITY, |z| z.0);
        let mut m = 0.0_f64;
        while i < trace.len() && trace.etas[i] < end {
            m = m.max(trace.ws[i].abs());
            i += 1;
        }
        lobes.push(m);
    }
    let slope_floors: Vec<f64> = (0..zeros.len())
        .map(|k| SLOPE_FLOOR_FACTOR * lobes[k].max(lobes[k + 1]))
        .collect();
    let floor_violations = records
        .iter()
        .zip(&slope_floors)
        .enumerate()
        .filter(|(_, (r, &fl))| !(r.slope.abs() > fl))
        .map(|(k, _)| k)
        .collect();
    let alternating = records
        .windows(2)
        .all(|r| r[0].slope * r[1].slope < 0.0);
    Ok(ZeroCensus {
        records,
        slope_floors,
        floor_violations,
        alternating,
    })
}

impl ZeroCensus {
    /// At least `min_zeros` isolated zeros with alternating slopes.
    pub fn oscillation_report(&self, params: &Params, min_zeros: usize) -> CheckReport {
        let ok = self.alternating && self.floor_violations.is_empty();
        CheckReport {
            pass: ok && self.records.len() >= min_zeros,
            ..CheckReport::lower(
                "oscillation",
                Some(*params),
                self.records.len() as f64,
                min_zeros as f64,
                0.0,
            )
        }
    }

    /// Spacings between consecutive zeros; reported, never asserted.
    pub fn spacings(&self) -> Vec<f64> {
        self.records.windows(2).map(|r| r[1].eta_zero - r[0].eta_zero).collect()
    }
}

// ---------------------------------------------------------------- decay

/// Power-law fit `|w| ≈ constant · η^{-exponent}` of the peak envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub exponent: f64,
    pub constant: f64,
    pub peak_count: usize,
    /// The same fit for the peaks of `|w'|`, when there are enough of them.
    pub slope_exponent: Option<f64>,
    pub slope_peak_count: usize,
    /// `16^{1/(1-p)}`, the conjectured sharp envelope constant; reported only.
    pub conjectured_constant: f64,
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Local maxima of `|w'|` (sign changes of `w''` between samples), as `(η, w')`.
fn slope_peaks(trace: &SolutionTrace, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let start = trace.etas.partition_point(|&x| x < lo).saturating_sub(1);
    for i in start..trace.len().saturating_sub(1) {
        let (a, b) = (trace.wpps[i], trace.wpps[i + 1]);
        if trace.etas[i] > hi {
            break;
        }
        if (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0) {
            let t = a / (a - b);
            let eta = trace.etas[i] + t * (trace.etas[i + 1] - trace.etas[i]);
            if eta >= lo && eta <= hi {
                out.push((eta, trace.eval_in(i, eta).wp));
            }
        }
    }
    out
}

pub fn decay_fit(trace: &SolutionTrace, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo >= 1.0 && hi > lo && hi <= trace.eta_end()) {
        return Err(Error::Window(format!(
            "decay window [{lo}, {hi}] must satisfy 1 ≤ lo < hi ≤ {}",
            trace.eta_end()
        )));
    }
    // a quiescent tail is exactly zero and carries no envelope information
    let peaks: Vec<(f64, f64)> = trace
        .extrema()
        .into_iter()
        .filter(|&(eta, w)| eta >= lo && eta <= hi && w != 0.0)
        .collect();
    if peaks.len() < 3 {
        return Err(Error::Window(format!(
            "{} peaks of |w| in [{lo}, {hi}]; at least 3 are needed",
            peaks.len()
        )));
    }
    let xs: Vec<f64> = peaks.iter().map(|pk| pk.0.ln()).collect();
    let ys: Vec<f64> = peaks.iter().map(|pk| pk.1.abs().ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);

    let sp: Vec<(f64, f64)> = slope_peaks(trace, lo, hi)
        .into_iter()
        .filter(|pk| pk.1 != 0.0)
        .collect();
    let slope_exponent = (sp.len() >= 3).then(|| {
        let xs: Vec<f64> = sp.iter().map(|pk| pk.0.ln()).collect();
        let ys: Vec<f64> = sp.iter().map(|pk| pk.1.abs().ln()).collect();
        -least_squares(&xs, &ys).0
    });
    Ok(DecayFit {
        window,
        exponent: -slope,
        constant: intercept.exp(),
        peak_count: peaks.len(),
        slope_exponent,
        slope_peak_count: sp.len(),
        conjectured_constant: 16f64.powf(1.0 / (1.0 - trace.params.p)),
    })
}

impl DecayFit {
    /// Fitted exponent at least `2/(1-p) - slack`.
    pub fn exponent_report(&self, params: &Params, slack: f64) -> CheckReport {
        CheckReport::lower(
            "decay_exponent",
            Some(*params),
            self.exponent,
            2.0 / (1.0 - params.p) - slack,
            0.0,
        )
    }
}

// ---------------------------------------------------------------- bootstrap

/// `σ₁ = 0`, `σ_{m+1} = min{2σ_m p/(1+p) + 2, C(p)}` with `C(p) = 2(1+p)/(1-p) + 1`.
pub fn sigma_sequence(p: f64, m: usize) -> Result<Vec<f64>> {
    crate::model::check_p(p)?;
    if m < 1 {
        return Err(Error::Parameter("sigma_sequence needs M ≥ 1".into()));
    }
    let cap = 2.0 * (1.0 + p) / (1.0 - p) + 1.0;
    let mut out = Vec::with_capacity(m);
    let mut s = 0.0;
    out.push(s);
    for _ in 1..m {
        s = (2.0 * s * p / (1.0 + p) + 2.0).min(cap);
        out.push(s);
    }
    Ok(out)
}

/// `2(1+p)/(1-p) - (4p/(1-p)) (2p/(1+p))^{m-2}`, valid for all `m ≥ 1`.
pub fn sigma_closed_form(p: f64, m: usize) -> f64 {
    let r = 2.0 * p / (1.0 + p);
    2.0 * (1.0 + p) / (1.0 - p) - 4.0 * p / (1.0 - p) * r.powi(m as i32 - 2)
}

// ---------------------------------------------------------------- continuity

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub delta: f64,
    /// `sup_η max(|w₁ - w₂|, |w₁' - w₂'|)` over the common range.
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityTable {
    pub params: Params,
    pub rows: Vec<ContinuityRow>,
    /// `sqrt(α / (2|m_H|))`.
    pub eta_1: f64,
}

/// Sup-distance between two traces over the samples of both.
pub fn sup_distance(a: &SolutionTrace, b: &SolutionTrace) -> Result<f64> {
    let end = a.eta_end().min(b.eta_end());
    let mut worst = 0.0_f64;
    for (t, other) in [(a, b), (b, a)] {
        let mut j = 0;
        for i in 0..t.len() {
            let eta = t.etas[i];
            if eta > end {
                break;
            }
            while j + 2 < other.len() && other.etas[j + 1] < eta {
                j += 1;
            }
            let q = other.eval_in(j, eta);
            worst = worst.max((t.ws[i] - q.w).abs()).max((t.wps[i] - q.wp).abs());
        }
    }
    Ok(worst)
}

pub fn continuity_experiment(params: &Params, deltas: &[f64]) -> Result<ContinuityTable> {
    let e = params.equilibrium();
    if !(params.alpha > 0.0 && params.alpha < e) {
        return Err(Error::Parameter(format!(
            "continuity experiment needs 0 < α < {e}, got {}",
            params.alpha
        )));
    }
    let top = deltas.iter().copied().fold(0.0, f64::max);
    if deltas.iter().any(|d| !(*d >= 0.0)) || !(params.alpha + top < e) {
        return Err(Error::Parameter(format!(
            "perturbations must be non-negative with α + max δ < {e}"
        )));
    }
    let consts = energy_constants(params.p)?;
    let base = integrate(params)?;
    let rows = deltas
        .iter()
        .map(|&delta| {
            let other = integrate(&params.with_alpha(params.alpha + delta)?)?;
            Ok(ContinuityRow {
                delta,
                distance: sup_distance(&base, &other)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContinuityTable {
        params: *params,
        rows,
        eta_1: (params.alpha / (2.0 * consts.m_h.abs())).sqrt(),
    })
}

impl ContinuityTable {
    /// Distances non-increasing as `δ` decreases, and the smallest below `limit`.
    pub fn report(&self, limit: f64) -> CheckReport {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        let monotone = rows.windows(2).all(|r| r[1].distance <= r[0].distance);
        let last = rows.last().map_or(0.0, |r| r.distance);
        let mut report = CheckReport::upper("continuous_dependence", Some(self.params), last, limit, 0.0);
        report.pass &= monotone;
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivp::MethodTag;
    use crate::model::equilibrium_amplitude;
    use approx::assert_relative_eq;

    fn reference() -> Params {
        Params::new(0.5, 3, 0.2).unwrap()
    }

    /// `w = η^{-k} cos η` sampled with exact derivatives.
    fn manufactured(k: f64, lo: f64, hi: f64) -> SolutionTrace {
        let count = ((hi - lo) * 40.0) as usize;
        let etas: Vec<f64> = (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect();
        let w = |x: f64| x.powf(-k) * x.cos();
        let wp = |x: f64| -k * x.powf(-k - 1.0) * x.cos() - x.powf(-k) * x.sin();
        let wpp = |x: f64| {
            k * (k + 1.0) * x.powf(-k - 2.0) * x.cos() + 2.0 * k * x.powf(-k - 1.0) * x.sin()
                - x.powf(-k) * x.cos()
        };
        let params = reference().with_eta_max(hi).unwrap();
        SolutionTrace::from_samples(
            params,
            etas.clone(),
            etas.iter().map(|&x| w(x)).collect(),
            etas.iter().map(|&x| wp(x)).collect(),
            etas.iter().map(|&x| wpp(x)).collect(),
            MethodTag::Constant,
        )
        .unwrap()
    }

    #[test]
    fn energy_of_trivial_traces() {
        let zero = integrate(&Params::new(0.5, 3, 0.0).unwrap()).unwrap();
        let et = energy_trace(&zero);
        assert!(et.f.iter().all(|&f| f == 0.0));
        let e = equilibrium_amplitude(0.5).unwrap();
        let eq = integrate(&Params::new(0.5, 3, e).unwrap()).unwrap();
        let c_star = energy_constants(0.5).unwrap().c_star;
        for f in energy_trace(&eq).f {
            assert_relative_eq!(f, c_star, max_relative = 1e-14);
        }
    }

    #[test]
    fn reference_energy() {
        let params = reference();
        let trace = integrate(&params).unwrap();
        let et = energy_trace(&trace);
        let v0 = v_unchecked(0.2, 0.0, 0.5);
        assert_eq!(et.f[0], v0);
        assert!(et.f_inf_estimate >= 0.0 && et.f_inf_estimate < v0);
        assert!(et.monotonicity_report(&params).pass);
        assert!(et.range_report(&params).pass);
        // F' = -((n-1)/η + η/2) w'² integrates back to F
        assert!(et.derivative_mismatch < 1e-6 * v0, "{}", et.derivative_mismatch);
    }

    #[test]
    fn gaussian_sup_matches_grid() {
        for k in [2.0, 3.5, 8.0, 20.0] {
            let grid = (1..200_000)
                .map(|i| {
                    let s = i as f64 * 1e-4;
                    s.powf(k) * (-3.0 * s * s / 16.0).exp()
                })
                .fold(0.0, f64::max);
            assert_relative_eq!(gaussian_power_sup(k), grid, max_relative = 1e-7);
        }
    }

    #[test]
    fn tail_bounds_on_trivial_traces() {
        let zero = integrate(&Params::new(0.5, 3, 0.0).unwrap()).unwrap();
        let r = tail_bound_report(&zero).unwrap();
        assert_eq!(r.eta_alpha, Some(zero.etas[0]));
        assert!(r.global_bound_holds);
        let e = equilibrium_amplitude(0.5).unwrap();
        let eq = integrate(&Params::new(0.5, 3, e).unwrap()).unwrap();
        assert_eq!(tail_bound_report(&eq).unwrap().max_scaled_slope, 0.0);
    }

    #[test]
    fn reference_tail_bound() {
        let trace = integrate(&reference()).unwrap();
        let r = tail_bound_report(&trace).unwrap();
        assert!(r.eta_alpha.is_some_and(|x| x <= 20.0), "{:?}", r.eta_alpha);
        assert!(r.global_bound_holds);
    }

    #[test]
    fn census_of_trivial_traces() {
        let zero = integrate(&Params::new(0.5, 3, 0.0).unwrap()).unwrap();
        assert!(zero_census(&zero).unwrap().records.is_empty());
        let e = equilibrium_amplitude(0.5).unwrap();
        let eq = integrate(&Params::new(0.5, 3, e).unwrap()).unwrap();
        assert!(zero_census(&eq).unwrap().records.is_empty());
    }

    #[test]
    fn reference_census() {
        let trace = integrate(&reference()).unwrap();
        let census = zero_census(&trace).unwrap();
        assert!(census.records.len() >= 3);
        assert!(census.alternating);
        assert!(census.floor_violations.is_empty());
        assert!(census.records.iter().all(|r| r.eta_zero > 0.0 && r.window > 0.0));
        // w starts positive and decreasing, so the first crossing is downward
        assert!(census.records[0].slope < 0.0);
    }

    #[test]
    fn manufactured_decay() {
        let fit = decay_fit(&manufactured(4.0, 1.0, 100.0), (10.0, 100.0)).unwrap();
        assert!((fit.exponent - 4.0).abs() < 0.05, "{}", fit.exponent);
        assert!(fit.peak_count >= 3);
        assert!(decay_fit(&manufactured(4.0, 1.0, 100.0), (10.0, 12.0)).is_err());
    }

    #[test]
    fn reference_decay() {
        let trace = integrate(&reference()).unwrap();
        let fit = decay_fit(&trace, (15.0, 50.0)).unwrap();
        assert!(fit.exponent >= 4.0 - 0.5, "{}", fit.exponent);
        assert_relative_eq!(fit.conjectured_constant, 256.0, max_relative = 1e-14);
    }

    #[test]
    fn sigma_examples() {
        let s = sigma_sequence(0.5, 3).unwrap();
        assert_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], 2.0, epsilon = 1e-15);
        assert_relative_eq!(s[2], 10.0 / 3.0, epsilon = 1e-15);
        let s = sigma_sequence(0.5, 40).unwrap();
        assert!((s[39] - 6.0).abs() < 1e-4);
        assert!(sigma_sequence(0.5, 0).is_err());
    }

    #[test]
    fn continuity_horizon() {
        let params = Params::new(0.5, 3, 0.125).unwrap().with_eta_max(5.0).unwrap();
        let table = continuity_experiment(&params, &[0.0]).unwrap();
        assert_relative_eq!(table.eta_1, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(table.rows[0].distance, 0.0);
    }

    #[test]
    fn report_json_shape() {
        let r = CheckReport::upper("x", None, 1.0, 2.0, 0.0);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["check_name", "params", "pass", "measured", "bound", "tolerance"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["pass"], true);
    }
}
