//! Quadrature used by the integral-equation side of the profile problem.
//!
//! The operator `T[w](η) = α + ∫₀^η t^{1-n} e^{-t²/4} ∫₀^t H(w(s)) s^{n-1} e^{s²/4} ds dt`
//! is applied on composite Gauss–Legendre panels. Inside a panel both nested
//! integrals are cumulative integrals of the Lagrange interpolant through the
//! panel nodes. The inner integral is carried in the scaled form
//! `B(t) = e^{-t²/4} ∫₀^t …`, which keeps every factor bounded for large `t`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::h_unchecked;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (pn, d) = legendre(order, x);
                dp = d;
                let dx = pn / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `∫_a^b f` with this rule.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// `S[i][j] = ∫_{-1}^{x_i} ℓ_j(s) ds` for the Lagrange basis `ℓ_j` on the nodes.
    pub fn integration_matrix(&self) -> Vec<Vec<f64>> {
        let q = self.order();
        let mut s = vec![vec![0.0; q]; q];
        for (row, &xi) in s.iter_mut().zip(&self.nodes) {
            let half = 0.5 * (xi + 1.0);
            let mid = 0.5 * (xi - 1.0);
            for (k, wk) in self.nodes.iter().zip(&self.weights) {
                let y = mid + half * k;
                for (j, sij) in row.iter_mut().enumerate() {
                    *sij += half * wk * lagrange(&self.nodes, j, y);
                }
            }
        }
        s
    }
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn lagrange(nodes: &[f64], j: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &xk)| (x - xk) / (nodes[j] - xk))
        .product()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (integral, error estimate, integral of |f|).
fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (l, r) = (f(mid - dx), f(mid + dx));
        kron += WGK[j] * (l + r);
        abs += WGK[j] * (l.abs() + r.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (l + r);
        }
    }
    (kron * half, ((kron - gauss) * half).abs(), abs * half.abs())
}

struct Panel {
    lo: f64,
    hi: f64,
    val: f64,
    err: f64,
    abs: f64,
}

impl Panel {
    fn new(lo: f64, hi: f64, f: &mut impl FnMut(f64) -> f64) -> Self {
        let (val, err, abs) = gk15(lo, hi, f);
        Panel { lo, hi, val, err, abs }
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod over `[a, b]`, pre-split at `breaks`
/// (sorted, inside `(a, b)`).
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `tol` or below the rounding level of `∫|f|`; fails if
/// more than `max_panels` panels would be needed. A Hölder-type singularity
/// costs only a couple of panels per bisection level.
pub fn adaptive_gk(
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
    max_panels: usize,
    mut f: impl FnMut(f64) -> f64,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(a);
    edges.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    let mut heap: BinaryHeap<Panel> = edges.windows(2).map(|w| Panel::new(w[0], w[1], &mut f)).collect();
    let mut panels = heap.len();
    let mut err_sum: f64 = heap.iter().map(|p| p.err).sum();
    let mut abs_sum: f64 = heap.iter().map(|p| p.abs).sum();
    // panels too narrow to bisect further
    let mut settled = 0.0;
    while err_sum > tol.max(50.0 * f64::EPSILON * abs_sum) {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            settled += worst.val;
            err_sum -= worst.err;
            continue;
        }
        panels += 1;
        if panels > max_panels {
            return Err(Error::Numerical(format!(
                "adaptive quadrature on [{a}, {b}] exceeded {max_panels} panels"
            )));
        }
        let (left, right) = (Panel::new(worst.lo, mid, &mut f), Panel::new(mid, worst.hi, &mut f));
        err_sum += left.err + right.err - worst.err;
        abs_sum += left.abs + right.abs - worst.abs;
        heap.push(left);
        heap.push(right);
    }
    Ok(settled + heap.iter().map(|p| p.val).sum::<f64>())
}

/// Composite panels for the double-integral operator.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    breaks: Vec<f64>,
    rule: GaussLegendre,
    smat: Vec<Vec<f64>>,
}

/// Result of applying the integral operator on a panel grid.
#[derive(Debug, Clone)]
pub struct VolterraImage {
    /// `T[w]` at the panel nodes, panel-major.
    pub w_nodes: Vec<f64>,
    /// `w'` implied by the inner integral at the panel nodes.
    pub wp_nodes: Vec<f64>,
    /// `T[w]` at the panel breaks.
    pub w_breaks: Vec<f64>,
    pub wp_breaks: Vec<f64>,
}

impl PanelGrid {
    /// Panels between consecutive `breaks`; `breaks[0]` must be 0.
    pub fn new(breaks: Vec<f64>, order: usize) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 {
            return Err(Error::Grid("panel breaks must start at 0 and contain a panel".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("panel breaks must be strictly increasing".into()));
        }
        let rule = GaussLegendre::new(order);
        let smat = rule.integration_matrix();
        Ok(PanelGrid { breaks, rule, smat })
    }

    pub fn uniform(length: f64, panels: usize, order: usize) -> Result<Self> {
        let breaks = (0..=panels)
            .map(|k| length * k as f64 / panels as f64)
            .collect();
        Self::new(breaks, order)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.breaks.len() - 1) * self.order());
        for win in self.breaks.windows(2) {
            let (a, b) = (win[0], win[1]);
            for x in &self.rule.nodes {
                out.push(a + 0.5 * (b - a) * (x + 1.0));
            }
        }
        out
    }

    /// Apply `T` to `w` sampled at [`PanelGrid::nodes`].
    pub fn apply(&self, alpha: f64, n: u32, p: f64, w_nodes: &[f64]) -> VolterraImage {
        let q = self.order();
        let panels = self.breaks.len() - 1;
        assert_eq!(w_nodes.len(), panels * q);
        let nm1 = (n - 1) as i32;
        let mut out = VolterraImage {
            w_nodes: vec![0.0; panels * q],
            wp_nodes: vec![0.0; panels * q],
            w_breaks: vec![0.0; panels + 1],
            wp_breaks: vec![0.0; panels + 1],
        };
        out.w_breaks[0] = alpha;
        let mut b_scaled = 0.0; // e^{-a²/4} ∫₀^a H(w) s^{n-1} e^{s²/4} ds
        let mut w_left = alpha;
        let mut g = vec![0.0; q];
        for k in 0..panels {
            let (a, b) = (self.breaks[k], self.breaks[k + 1]);
            let half = 0.5 * (b - a);
            let xs: Vec<f64> = self.rule.nodes.iter().map(|x| a + half * (x + 1.0)).collect();
            for j in 0..q {
                let x = xs[j];
                g[j] = h_unchecked(w_nodes[k * q + j], p) * x.powi(nm1) * ((x * x - a * a) / 4.0).exp();
            }
            let mut wp = vec![0.0; q];
            for i in 0..q {
                let x = xs[i];
                let inner: f64 = self.smat[i].iter().zip(&g).map(|(s, gj)| s * gj).sum();
                let bx = ((a * a - x * x) / 4.0).exp() * (b_scaled + half * inner);
                wp[i] = bx / x.powi(nm1);
            }
            for i in 0..q {
                let acc: f64 = self.smat[i].iter().zip(&wp).map(|(s, v)| s * v).sum();
                out.w_nodes[k * q + i] = w_left + half * acc;
                out.wp_nodes[k * q + i] = wp[i];
            }
            let full: f64 = self.rule.weights.iter().zip(&g).map(|(w, gj)| w * gj).sum();
            b_scaled = ((a * a - b * b) / 4.0).exp() * (b_scaled + half * full);
            let wsum: f64 = self.rule.weights.iter().zip(&wp).map(|(w, v)| w * v).sum();
            w_left += half * wsum;
            out.w_breaks[k + 1] = w_left;
            out.wp_breaks[k + 1] = b_scaled / b.powi(nm1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for order in [2, 5, 8, 16] {
            let rule = GaussLegendre::new(order);
            assert_relative_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            let deg = 2 * order - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-13);
            let got = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32 - 1));
            assert_relative_eq!(got, 1.0 / deg as f64, epsilon = 1e-13);
        }
    }

    #[test]
    fn integration_matrix_integrates_cumulatively() {
        let rule = GaussLegendre::new(8);
        let s = rule.integration_matrix();
        // ∫_{-1}^{x} 3t² dt = x³ + 1
        let f: Vec<f64> = rule.nodes.iter().map(|t| 3.0 * t * t).collect();
        for (i, x) in rule.nodes.iter().enumerate() {
            let got: f64 = s[i].iter().zip(&f).map(|(a, b)| a * b).sum();
            assert_relative_eq!(got, x.powi(3) + 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn adaptive_gk_handles_kinks() {
        let got = adaptive_gk(0.0, 2.0, &[], 1e-12, 10_000, |x: f64| (x - 1.0).abs().sqrt()).unwrap();
        assert_relative_eq!(got, 4.0 / 3.0, epsilon = 1e-10);
        let got = adaptive_gk(0.0, 2.0, &[1.0], 1e-12, 10_000, |x: f64| (x - 1.0).abs().sqrt()).unwrap();
        assert_relative_eq!(got, 4.0 / 3.0, epsilon = 1e-12);
        assert!(adaptive_gk(0.0, 1.0, &[], 1e-30, 3, |x: f64| x.sqrt()).is_err());
        // a requested accuracy below rounding stops at the rounding level
        let got = adaptive_gk(0.0, 1.0, &[], 1e-30, 4096, |x: f64| x.powf(0.25)).unwrap();
        assert_relative_eq!(got, 0.8, max_relative = 1e-13);
    }

    #[test]
    fn volterra_constant_equilibrium_is_fixed() {
        let p = 0.5;
        let e = 0.25;
        let grid = PanelGrid::uniform(2.0, 4, 8).unwrap();
        let w = vec![e; grid.nodes().len()];
        let img = grid.apply(e, 3, p, &w);
        for v in img.w_nodes.iter().chain(&img.w_breaks) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn volterra_matches_closed_form_for_frozen_source() {
        // Feeding a constant w = c makes H(w) = h constant; then for n = 1
        // w'(t) = h e^{-t²/4} ∫₀^t e^{s²/4} ds, checked here against adaptive quadrature.
        let (p, c) = (0.5, 0.1);
        let h = h_unchecked(c, p);
        let grid = PanelGrid::uniform(3.0, 6, 8).unwrap();
        let w = vec![c; grid.nodes().len()];
        let img = grid.apply(c, 1, p, &w);
        let wp3 = h * adaptive_gk(0.0, 3.0, &[], 1e-14, 1000, |s: f64| ((s * s - 9.0) / 4.0).exp()).unwrap();
        assert_relative_eq!(*img.wp_breaks.last().unwrap(), wp3, epsilon = 1e-13);
        let w3 = c + adaptive_gk(0.0, 3.0, &[], 1e-13, 1000, |t: f64| {
            h * adaptive_gk(0.0, t, &[], 1e-15, 1000, |s: f64| ((s * s - t * t) / 4.0).exp()).unwrap()
        })
        .unwrap();
        assert_relative_eq!(*img.w_breaks.last().unwrap(), w3, epsilon = 1e-12);
    }
}
