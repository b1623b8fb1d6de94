//! Closed-form quantities of the profile problem: the nonlinearity `H`, the
//! equilibrium amplitude, the energy `V` and its critical level, and the
//! sublevel regions `Ω_c` of `V` around the origin.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// How the transversal-crossing window around a zero of `w` is read.
///
/// `Literal` takes the four entries of the window formula at face value;
/// `Offset` treats the entries that are written as absolute positions
/// (`(8/7)^{1/(n-1)} η̄`, `sqrt(η̄² - 4 log(6/7))`, `η̄ - β/(4 m_H)`) as
/// positions and subtracts `η̄` to obtain increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Literal,
    #[default]
    Offset,
}

impl std::str::FromStr for WindowMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(WindowMode::Literal),
            "offset" => Ok(WindowMode::Offset),
            other => Err(param(format!("unknown window mode `{other}`"))),
        }
    }
}

/// Problem parameters and solver tolerances for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub n: u32,
    pub alpha: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub eta_max: f64,
    /// Local oscillation frequency above which the tail of a profile is no
    /// longer resolved and is carried as the quiescent state `(0, 0)`.
    pub max_frequency: f64,
    /// Explicit amplitude below which the tail is carried as `(0, 0)`;
    /// overrides the floor implied by `max_frequency` when set.
    pub quiescent_amplitude: Option<f64>,
    /// The tail is resolved at least up to this point, whatever its amplitude.
    pub resolve_to: f64,
    pub window_mode: WindowMode,
}

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_ETA_MAX: f64 = 50.0;
pub const DEFAULT_MAX_FREQUENCY: f64 = 1e5;

impl Params {
    /// Validated parameters with default tolerances and horizon.
    pub fn new(p: f64, n: u32, alpha: f64) -> Result<Self> {
        let params = Params {
            p,
            n,
            alpha,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            eta_max: DEFAULT_ETA_MAX,
            max_frequency: DEFAULT_MAX_FREQUENCY,
            quiescent_amplitude: None,
            resolve_to: 0.0,
            window_mode: WindowMode::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Result<Self> {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eta_max(mut self, eta_max: f64) -> Result<Self> {
        self.eta_max = eta_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_window_mode(mut self, mode: WindowMode) -> Self {
        self.window_mode = mode;
        self
    }

    pub fn with_max_frequency(mut self, max_frequency: f64) -> Result<Self> {
        self.max_frequency = max_frequency;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quiescent_amplitude(mut self, amplitude: f64) -> Result<Self> {
        self.quiescent_amplitude = Some(amplitude);
        self.validate()?;
        Ok(self)
    }

    pub fn with_resolve_to(mut self, eta: f64) -> Result<Self> {
        self.resolve_to = eta;
        self.validate()?;
        Ok(self)
    }

    /// The same run started from `-alpha`. The odd symmetry of `H` makes this
    /// a valid problem even though it sits outside the validated range.
    pub fn mirrored(self) -> Self {
        Params {
            alpha: -self.alpha,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if self.n < 1 {
            return Err(param("spatial dimension n must be at least 1"));
        }
        let e = equilibrium_amplitude(self.p)?;
        if !(self.alpha >= 0.0 && self.alpha <= e) {
            return Err(param(format!(
                "alpha = {} outside [0, {e}] for p = {}",
                self.alpha, self.p
            )));
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("eta_max", self.eta_max),
            ("max_frequency", self.max_frequency),
            ("quiescent_amplitude", self.quiescent_amplitude.unwrap_or(1.0)),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.resolve_to >= 0.0 && self.resolve_to.is_finite()) {
            return Err(param(format!(
                "resolve_to must be non-negative and finite, got {}",
                self.resolve_to
            )));
        }
        Ok(())
    }

    pub fn equilibrium(&self) -> f64 {
        equilibrium_amplitude(self.p).expect("validated p")
    }
}

/// A point `(w, w')` of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub w: f64,
    pub wp: f64,
}

impl PhasePoint {
    pub fn new(w: f64, wp: f64) -> Self {
        PhasePoint { w, wp }
    }

    pub fn origin() -> Self {
        PhasePoint { w: 0.0, wp: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    /// Infimum of `H` on `[0, equilibrium]`.
    pub m_h: f64,
    /// Supremum of `|H|` on `[0, equilibrium]`.
    pub big_m_h: f64,
    /// Level of `V` through the equilibria `(±e, 0)`.
    pub c_star: f64,
    /// Where `H` attains `m_h`.
    pub w_min_arg: f64,
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(param(format!("exponent p = {p} must lie in (0, 1)")))
    }
}

/// `x^(1/(1-p))` evaluated through logarithms, `x > 0`.
fn pow_inv_one_minus(x: f64, p: f64) -> f64 {
    (x.ln() / (1.0 - p)).exp()
}

/// `H(w) = w/(1-p) - w|w|^{p-1}`, with `H(0) = 0`.
pub fn eval_h(w: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(h_unchecked(w, p))
}

/// `H` without the parameter check, for inner loops where `p` is already validated.
#[inline]
pub fn h_unchecked(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w / (1.0 - p) - w * w.abs().powf(p - 1.0)
    }
}

/// `H'(w) = 1/(1-p) - p|w|^{p-1}` for `w != 0`.
#[inline]
pub fn dh_unchecked(w: f64, p: f64) -> f64 {
    1.0 / (1.0 - p) - p * w.abs().powf(p - 1.0)
}

/// `(1-p)^{1/(1-p)}`, the nonzero rest point and the a priori bound on `|w|`.
pub fn equilibrium_amplitude(p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(pow_inv_one_minus(1.0 - p, p))
}

pub fn energy_constants(p: f64) -> Result<EnergyConstants> {
    check_p(p)?;
    // H is convex on (0, ∞) with its only stationary point at (p(1-p))^{1/(1-p)}.
    let w_min_arg = pow_inv_one_minus(p * (1.0 - p), p);
    let m_h = h_unchecked(w_min_arg, p);
    Ok(EnergyConstants {
        m_h,
        big_m_h: m_h.abs(),
        c_star: pow_inv_one_minus(1.0 - p, p).powi(2) / (2.0 * (1.0 + p)),
        w_min_arg,
    })
}

/// `V(w, w') = ½w'² - w²/(2(1-p)) + |w|^{1+p}/(1+p)`.
pub fn eval_v(w: f64, wp: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(v_unchecked(w, wp, p))
}

#[inline]
pub fn v_unchecked(w: f64, wp: f64, p: f64) -> f64 {
    0.5 * wp * wp - w * w / (2.0 * (1.0 - p)) + w.abs().powf(1.0 + p) / (1.0 + p)
}

/// `∇V = (-w/(1-p) + w|w|^{p-1}, w') = (-H(w), w')`.
pub fn grad_v(w: f64, wp: f64, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    Ok((-h_unchecked(w, p), wp))
}

/// The unique root of `V(w, 0) = c` in `[0, e]` for `0 ≤ c ≤ c*`.
///
/// `V(·, 0)` increases strictly from 0 to `c*` on `[0, e]`, so bisection is exact
/// up to the floating point resolution of the bracket.
pub fn level_root(c: f64, p: f64) -> Result<f64> {
    let consts = energy_constants(p)?;
    if !(c >= 0.0 && c <= consts.c_star) {
        return Err(param(format!("level c = {c} outside [0, c*]")));
    }
    let e = equilibrium_amplitude(p)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    if c == consts.c_star {
        return Ok(e);
    }
    let (mut lo, mut hi) = (0.0_f64, e);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if v_unchecked(mid, 0.0, p) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Membership in `Ω_c`: the component of `{V < c}` that contains the origin.
pub fn in_omega(pt: PhasePoint, c: f64, p: f64) -> Result<bool> {
    let w_c = level_root(c, p)?;
    Ok(v_unchecked(pt.w, pt.wp, p) < c && pt.w.abs() < w_c)
}
