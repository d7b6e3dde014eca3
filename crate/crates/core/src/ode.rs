//! Dormand–Prince 5(4) explicit Runge–Kutta integrator with dense output.
//!
//! Seven stages with the first-same-as-last property; the local error is
//! estimated from the embedded fourth-order solution and the continuous
//! extension is Hairer's fourth-order interpolant.

use crate::error::{Error, Result};

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 1e-9,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// Continuous extension over one accepted step `[t0, t0 + h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSegment {
    t0: f64,
    h: f64,
    n: usize,
    coeffs: Vec<f64>,
}

impl DenseSegment {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let n = self.n;
        let c = &self.coeffs;
        for i in 0..n {
            out[i] =
                c[i] + theta * (c[n + i] + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval(t, &mut out);
        out
    }

    /// Bisection for a sign change of `g` along the interpolant inside
    /// `[ta, tb]`, where `g(ta)` and `g(tb)` have opposite signs.
    pub fn bisect<G: FnMut(&[f64]) -> f64>(&self, mut ta: f64, mut tb: f64, mut g: G, t_tol: f64) -> (f64, Vec<f64>) {
        let mut y = vec![0.0; self.n];
        self.eval(ta, &mut y);
        let mut ga = g(&y);
        for _ in 0..200 {
            if (tb - ta).abs() <= t_tol {
                break;
            }
            let tm = 0.5 * (ta + tb);
            self.eval(tm, &mut y);
            let gm = g(&y);
            if gm == 0.0 {
                ta = tm;
                tb = tm;
                break;
            }
            if (gm < 0.0) == (ga < 0.0) {
                ta = tm;
                ga = gm;
            } else {
                tb = tm;
            }
        }
        let t = 0.5 * (ta + tb);
        self.eval(t, &mut y);
        (t, y)
    }
}

/// Single-step driver; callers own the stepping loop so they can inspect
/// each accepted step for events.
pub struct Dopri5<F> {
    f: F,
    n: usize,
    t: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    h: f64,
    opts: SolverOptions,
    steps: usize,
    last: Option<DenseSegment>,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(mut f: F, t0: f64, y0: &[f64], opts: SolverOptions) -> Result<Self> {
        if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
            return Err(Error::InvalidArgument("integrator tolerances must be positive".into()));
        }
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = Default::default();
        for ki in k.iter_mut() {
            *ki = vec![0.0; n];
        }
        f(t0, y0, &mut k[0]);
        if k[0].iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite derivative at t = {t0}")));
        }
        let mut solver = Self {
            f,
            n,
            t: t0,
            y: y0.to_vec(),
            k,
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            h: 0.0,
            opts,
            steps: 0,
            last: None,
        };
        solver.h = match opts.h_init {
            Some(h) if h > 0.0 => h,
            _ => solver.initial_step(),
        };
        Ok(solver)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Derivative at the current point.
    pub fn derivative(&self) -> &[f64] {
        &self.k[0]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn last_segment(&self) -> Option<&DenseSegment> {
        self.last.as_ref()
    }

    fn weights<'a>(&self, a: &'a [f64], b: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        a.iter().zip(b).map(move |(x, y)| atol + rtol * x.abs().max(y.abs()))
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.n.max(1) as f64;
        let sk: Vec<f64> = self.weights(&self.y, &self.y).collect();
        let d0 = (self.y.iter().zip(&sk).map(|(y, s)| (y / s).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (self.k[0].iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.opts.h_max);
        for i in 0..self.n {
            self.y_stage[i] = self.y[i] + h0 * self.k[0][i];
        }
        (self.f)(self.t + h0, &self.y_stage, &mut self.k[1]);
        let d2 = (self.k[1]
            .iter()
            .zip(&self.k[0])
            .zip(&sk)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (1e-6_f64).max(h0 * 1e-3)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        let h = (100.0 * h0).min(h1).min(self.opts.h_max);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6
        }
    }

    /// Take one accepted step without passing `t_end`.
    pub fn step_towards(&mut self, t_end: f64) -> Result<()> {
        let remaining = t_end - self.t;
        if remaining <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "step target {t_end} is not ahead of t = {}",
                self.t
            )));
        }
        let mut rejected = false;
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(Error::NumericalFailure(format!(
                    "exceeded {} integrator steps at t = {}",
                    self.opts.max_steps, self.t
                )));
            }
            let mut h = self.h.min(self.opts.h_max);
            let mut last = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                last = true;
            }
            if h < 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(Error::NumericalFailure(format!(
                    "step size underflow (h = {h:e}) at t = {}",
                    self.t
                )));
            }
            let t = self.t;
            let err = self.attempt(t, h);
            self.steps += 1;
            if err <= 1.0 {
                self.accept(t, h, last, t_end);
                let fac = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
                };
                let fac = if rejected { fac.min(1.0) } else { fac };
                self.h = h * fac;
                return Ok(());
            }
            rejected = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            self.h = h * fac;
        }
    }

    /// Evaluates stages 2..7 and returns the scaled error norm.
    fn attempt(&mut self, t: f64, h: f64) -> f64 {
        let n = self.n;
        let (k, ys) = (&mut self.k, &mut self.y_stage);
        let y = &self.y;
        let f = &mut self.f;
        macro_rules! stage {
            ($dst:expr, $c:expr, $($coef:expr => $src:expr),+) => {{
                for i in 0..n {
                    ys[i] = y[i] + h * (0.0 $(+ $coef * k[$src][i])+);
                }
                f(t + $c * h, ys, &mut k[$dst]);
            }};
        }
        stage!(1, C2, A21 => 0);
        stage!(2, C3, A31 => 0, A32 => 1);
        stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            self.y_new[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        f(t + h, &self.y_new, &mut k[6]);
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sk = self.opts.atol + self.opts.rtol * y[i].abs().max(self.y_new[i].abs());
            acc += (e / sk).powi(2);
        }
        let err = (acc / n.max(1) as f64).sqrt();
        if err.is_finite() && self.y_new.iter().all(|v| v.is_finite()) {
            err
        } else {
            f64::INFINITY
        }
    }

    fn accept(&mut self, t: f64, h: f64, last: bool, t_end: f64) {
        let n = self.n;
        let k = &self.k;
        let mut coeffs = vec![0.0; 5 * n];
        for i in 0..n {
            let y0 = self.y[i];
            let y1 = self.y_new[i];
            let dy = y1 - y0;
            let bspl = h * k[0][i] - dy;
            coeffs[i] = y0;
            coeffs[n + i] = dy;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = dy - h * k[6][i] - bspl;
            coeffs[4 * n + i] =
                h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        self.last = Some(DenseSegment { t0: t, h, n, coeffs });
        std::mem::swap(&mut self.y, &mut self.y_new);
        let (first, rest) = self.k.split_at_mut(1);
        std::mem::swap(&mut first[0], &mut rest[5]);
        self.t = if last { t_end } else { t + h };
    }
}

/// Densely interpolable solution.
#[derive(Clone, Debug, Default)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
}

impl Solution {
    /// Interpolated state; clamps to the covered time range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() {
            return self.y.first().cloned().unwrap_or_default();
        }
        let idx = self
            .segments
            .partition_point(|s| s.t1() < t)
            .min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        seg.eval_vec(t.clamp(seg.t0(), seg.t1()))
    }

    pub fn final_state(&self) -> &[f64] {
        self.y.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Integrate from `t0` to `t_end` keeping every accepted step.
pub fn solve<F>(f: F, t0: f64, y0: &[f64], t_end: f64, opts: SolverOptions) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut solver = Dopri5::new(f, t0, y0, opts)?;
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        segments: Vec::new(),
    };
    while solver.t() < t_end {
        solver.step_towards(t_end)?;
        sol.t.push(solver.t());
        sol.y.push(solver.y().to_vec());
        sol.segments
            .push(solver.last_segment().cloned().expect("accepted step"));
    }
    Ok(sol)
}

/// Integrate and return the state at each requested time (increasing).
/// Steps are clipped so every output time is hit exactly.
pub fn solve_at<F>(f: F, t0: f64, y0: &[f64], times: &[f64], opts: SolverOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut solver = Dopri5::new(f, t0, y0, opts)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < solver.t() {
            return Err(Error::InvalidArgument("output times must increase".into()));
        }
        while solver.t() < t {
            solver.step_towards(t)?;
        }
        out.push(solver.y().to_vec());
    }
    Ok(out)
}
