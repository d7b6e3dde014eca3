//! Gauss–Legendre quadrature with adaptive panel bisection.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Fixed-order Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of P_order, found by Newton iteration from the
    /// Chebyshev-like initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
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
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive integration: each panel is accepted when its two-half estimate
/// agrees with the whole-panel estimate to its share of `rtol * |I|`.
pub fn adaptive<F: FnMut(f64) -> f64>(rule: &GaussLegendre, mut f: F, a: f64, b: f64, rtol: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
    }
    const MAX_PANELS: usize = 200_000;
    let initial_panels = 4;
    let width = b - a;
    let mut stack: Vec<(f64, f64, f64)> = (0..initial_panels)
        .map(|i| {
            let lo = a + width * i as f64 / initial_panels as f64;
            let hi = a + width * (i + 1) as f64 / initial_panels as f64;
            (lo, hi, rule.integrate(&mut f, lo, hi))
        })
        .collect();
    let scale = stack.iter().map(|p| p.2).sum::<f64>().abs().max(1e-300);
    let mut total = 0.0;
    let mut compensation = 0.0;
    let mut evaluated = initial_panels;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(&mut f, lo, mid);
        let right = rule.integrate(&mut f, mid, hi);
        evaluated += 2;
        let halves = left + right;
        if !halves.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let target = rtol * scale * (hi - lo) / width;
        if (halves - whole).abs() <= target || (hi - lo) <= 1e-15 * width.max(1.0) {
            // Kahan summation keeps the accumulated panel sum below rtol
            let y = halves - compensation;
            let t = total + y;
            compensation = (t - total) - y;
            total = t;
        } else {
            if evaluated > MAX_PANELS {
                return Err(Error::NumericalFailure(format!(
                    "adaptive quadrature exceeded {MAX_PANELS} panels"
                )));
            }
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    Ok(total)
}
