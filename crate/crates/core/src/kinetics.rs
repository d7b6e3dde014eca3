//! Spatially homogeneous dynamics `U' = f(U)`: trajectories, limit-cycle
//! detection on a Poincaré section, monodromy and Floquet multipliers.

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{self, CompetitionModel};
use crate::ode::{Dopri5, Solution, SolverOptions};
use crate::C64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-7;
/// Coordinates below `-NEGATIVITY_TOL` abort an integration.
pub const NEGATIVITY_TOL: f64 = 1e-8;
const REPORT_CLAMP: f64 = 1e-10;
/// Multipliers within this distance of 1 count as the trivial multiplier.
pub const UNIT_MULTIPLIER_TOL: f64 = 1e-3;
pub const STABILITY_MARGIN: f64 = 1e-6;

fn options(tol: f64) -> Result<SolverOptions> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut opts = SolverOptions::with_tolerances(tol, tol * 1e-2);
    opts.max_steps = 50_000_000;
    // keeps the explicit stages inside their stability region near sinks
    opts.h_max = 1.0;
    Ok(opts)
}

fn check_state(model: &CompetitionModel, u0: &[f64]) -> Result<()> {
    if u0.len() != model.species() {
        return Err(invalid(format!(
            "initial state has {} components, model has {} species",
            u0.len(),
            model.species()
        )));
    }
    if u0.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(invalid("initial state must be finite and nonnegative"));
    }
    Ok(())
}

fn check_negativity(t: f64, y: &[f64]) -> Result<()> {
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v < -NEGATIVITY_TOL) {
        return Err(Error::InvariantViolation(format!(
            "species {} became negative ({v:e}) at t = {t}",
            i + 1
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Accepted integrator steps with dense output between them.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States with round-off negatives above `-1e-10` reported as 0.
    pub states: Vec<Vec<f64>>,
    dense: Solution,
}

impl Trajectory {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.dense.eval(t)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty trajectory")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty trajectory")
    }

    /// States at `t0, t0 + dt, ...` up to the end of the trajectory.
    pub fn sample(&self, dt: f64) -> Vec<(f64, Vec<f64>)> {
        let count = ((self.t_end() - self.times[0]) / dt).floor() as usize;
        (0..=count)
            .map(|k| {
                let t = self.times[0] + k as f64 * dt;
                (t, self.eval(t))
            })
            .collect()
    }
}

/// Adaptive 5(4) integration with `rtol = tol`, `atol = tol/100`.
pub fn integrate(model: &CompetitionModel, u0: &[f64], t_end: f64, tol: f64) -> Result<Trajectory> {
    check_state(model, u0)?;
    if !(t_end > 0.0) {
        return Err(invalid(format!("t_end must be positive, got {t_end}")));
    }
    let mut solver = Dopri5::new(|_t, y, dy| model.reaction_into(y, dy), 0.0, u0, options(tol)?)?;
    let mut dense = Solution {
        t: vec![0.0],
        y: vec![u0.to_vec()],
        segments: Vec::new(),
    };
    while solver.t() < t_end {
        solver.step_towards(t_end)?;
        check_negativity(solver.t(), solver.y())?;
        dense.t.push(solver.t());
        dense.y.push(solver.y().to_vec());
        dense
            .segments
            .push(solver.last_segment().cloned().expect("accepted step"));
    }
    let states = dense
        .y
        .iter()
        .map(|y| {
            y.iter()
                .map(|&v| if (-REPORT_CLAMP..0.0).contains(&v) { 0.0 } else { v })
                .collect()
        })
        .collect();
    Ok(Trajectory {
        times: dense.t.clone(),
        states,
        dense,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleOptions {
    pub max_time: f64,
    /// Section is erected here; defaults to `max_time / 2`.
    pub transient: Option<f64>,
    pub tol: f64,
    pub state_tol: f64,
    pub period_rtol: f64,
    /// Returns needed before a periodic verdict.
    pub min_returns: usize,
    /// `‖f(U)‖` below which the state counts as settled.
    pub settle_tol: f64,
    pub settle_steps: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            max_time: 2000.0,
            transient: None,
            tol: DEFAULT_TOL,
            state_tol: 1e-6,
            period_rtol: 1e-4,
            min_returns: 5,
            settle_tol: 1e-8,
            settle_steps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "label")]
pub enum OrbitOutcome {
    Periodic,
    Converged(String),
    Undetermined,
}

#[derive(Clone, Debug)]
pub struct OrbitAnalysis {
    pub outcome: OrbitOutcome,
    pub period: Option<f64>,
    /// Point on the orbit where one period starts (last section crossing).
    pub anchor: Vec<f64>,
    /// One period of `(t, U)` from the anchor.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// `‖U(T) - U(0)‖` after re-integrating one period.
    pub closure_error: Option<f64>,
    /// Times between successive one-sided section crossings.
    pub return_times: Vec<f64>,
    pub crossings: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub monodromy: Option<DMatrix<f64>>,
    pub multipliers: Vec<C64>,
    pub tol: f64,
}

impl OrbitAnalysis {
    pub fn periodic(&self) -> bool {
        self.outcome == OrbitOutcome::Periodic
    }

    pub fn converged_to(&self) -> Option<&str> {
        match &self.outcome {
            OrbitOutcome::Converged(label) => Some(label),
            _ => None,
        }
    }

    /// `(max - min) / mean` of the last `k` return times.
    pub fn return_time_spread(&self, k: usize) -> Option<f64> {
        if k == 0 || self.return_times.len() < k {
            return None;
        }
        let tail = &self.return_times[self.return_times.len() - k..];
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = tail.iter().sum::<f64>() / k as f64;
        Some((hi - lo) / mean)
    }

    /// A known periodic orbit through `anchor` with period `period`,
    /// for use with [`monodromy`] and [`modal_multipliers`].
    pub fn from_known_orbit(anchor: Vec<f64>, period: f64, tol: f64) -> Self {
        Self {
            outcome: OrbitOutcome::Periodic,
            period: Some(period),
            final_state: anchor.clone(),
            anchor,
            samples: Vec::new(),
            closure_error: None,
            return_times: Vec::new(),
            crossings: Vec::new(),
            monodromy: None,
            multipliers: Vec::new(),
            tol,
        }
    }
}

fn nearest_equilibrium(model: &CompetitionModel, u: &[f64]) -> Result<String> {
    let set = model::equilibria(model)?;
    Ok(set
        .nearest(u)
        .map(|(e, _)| e.label.clone())
        .unwrap_or_else(|| "P_0".into()))
}

/// Integrate past a transient, then look for a limit cycle on the section
/// through the current state normal to the velocity.
pub fn detect_limit_cycle(model: &CompetitionModel, u0: &[f64], opts: &CycleOptions) -> Result<OrbitAnalysis> {
    check_state(model, u0)?;
    if !(opts.max_time > 0.0) {
        return Err(invalid("max_time must be positive"));
    }
    let transient = opts.transient.unwrap_or(opts.max_time / 2.0);
    if !(transient > 0.0 && transient < opts.max_time) {
        return Err(invalid("transient must lie inside (0, max_time)"));
    }
    let n = model.species();
    let mut solver = Dopri5::new(|_t, y, dy| model.reaction_into(y, dy), 0.0, u0, options(opts.tol)?)?;
    let mut fbuf = vec![0.0; n];
    let mut settled = SettleTracker::new(opts.settle_tol, opts.settle_steps);
    let mut tail_start: Option<Vec<f64>> = None;
    let mut tail: Vec<Vec<f64>> = Vec::new();
    let undetermined = |solver_y: &[f64], return_times, crossings| OrbitAnalysis {
        outcome: OrbitOutcome::Undetermined,
        period: None,
        anchor: Vec::new(),
        samples: Vec::new(),
        closure_error: None,
        return_times,
        crossings,
        final_state: solver_y.to_vec(),
        monodromy: None,
        multipliers: Vec::new(),
        tol: opts.tol,
    };

    while solver.t() < transient {
        solver.step_towards(transient)?;
        check_negativity(solver.t(), solver.y())?;
        model.reaction_into(solver.y(), &mut fbuf);
        if settled.push(norm(&fbuf)) {
            let label = nearest_equilibrium(model, solver.y())?;
            let mut out = undetermined(solver.y(), Vec::new(), Vec::new());
            out.outcome = OrbitOutcome::Converged(label);
            return Ok(out);
        }
        if solver.t() >= transient / 2.0 {
            if tail_start.is_none() {
                tail_start = Some(solver.y().to_vec());
            }
            tail.push(solver.y().to_vec());
        }
    }
    let anchor = solver.y().to_vec();
    model.reaction_into(&anchor, &mut fbuf);
    let speed = norm(&fbuf);
    let normal: Vec<f64> = fbuf.iter().map(|v| v / speed).collect();
    let radius = 0.5 * tail.iter().map(|y| dist(y, &anchor)).fold(0.0, f64::max);
    let g = |y: &[f64]| {
        normal
            .iter()
            .zip(y.iter().zip(&anchor))
            .map(|(nv, (a, b))| nv * (a - b))
            .sum::<f64>()
    };

    let mut crossing_times = vec![transient];
    let mut crossings = vec![anchor.clone()];
    let mut return_times: Vec<f64> = Vec::new();
    let mut g_prev = 0.0;
    while solver.t() < opts.max_time {
        solver.step_towards(opts.max_time)?;
        check_negativity(solver.t(), solver.y())?;
        model.reaction_into(solver.y(), &mut fbuf);
        if settled.push(norm(&fbuf)) {
            let label = nearest_equilibrium(model, solver.y())?;
            let mut out = undetermined(solver.y(), return_times, crossings);
            out.outcome = OrbitOutcome::Converged(label);
            return Ok(out);
        }
        let g_now = g(solver.y());
        if g_prev < 0.0 && g_now >= 0.0 {
            let seg = solver.last_segment().expect("accepted step");
            let (tc, yc) = seg.bisect(seg.t0(), seg.t1(), g, 1e-12);
            if dist(&yc, &anchor) <= radius.max(opts.state_tol) {
                return_times.push(tc - crossing_times.last().expect("anchor"));
                crossing_times.push(tc);
                crossings.push(yc);
                if return_times.len() >= opts.min_returns && consistent(&crossings, &return_times, opts) {
                    let k = 2;
                    let period = return_times[return_times.len() - k..].iter().sum::<f64>() / k as f64;
                    let start = crossings.last().expect("crossing").clone();
                    return finish_periodic(model, start, period, return_times, crossings, opts.tol);
                }
            }
        }
        g_prev = g_now;
    }
    Ok(undetermined(solver.y(), return_times, crossings))
}

/// Last three crossings agree pairwise in state and the two return times
/// between them agree relatively.
fn consistent(crossings: &[Vec<f64>], return_times: &[f64], opts: &CycleOptions) -> bool {
    let m = crossings.len();
    if m < 3 || return_times.len() < 2 {
        return false;
    }
    let last = &crossings[m - 3..];
    let states_ok = (0..3).all(|i| (i + 1..3).all(|j| dist(&last[i], &last[j]) < opts.state_tol));
    let (t1, t2) = (
        return_times[return_times.len() - 2],
        return_times[return_times.len() - 1],
    );
    states_ok && (t1 - t2).abs() <= opts.period_rtol * t1.max(t2)
}

struct SettleTracker {
    tol: f64,
    needed: usize,
    run: Vec<f64>,
}

impl SettleTracker {
    fn new(tol: f64, needed: usize) -> Self {
        Self {
            tol,
            needed: needed.max(1),
            run: Vec::new(),
        }
    }

    /// True once `needed` consecutive small residuals were seen and the
    /// residual is not growing across that run (rules out saddle escapes).
    fn push(&mut self, r: f64) -> bool {
        if r >= self.tol {
            self.run.clear();
            return false;
        }
        self.run.push(r);
        if self.run.len() > self.needed {
            self.run.remove(0);
        }
        self.run.len() == self.needed && self.run[self.needed - 1] <= self.run[0] * 2.0 + 1e-14
    }
}

fn finish_periodic(
    model: &CompetitionModel,
    anchor: Vec<f64>,
    period: f64,
    return_times: Vec<f64>,
    crossings: Vec<Vec<f64>>,
    tol: f64,
) -> Result<OrbitAnalysis> {
    let mut solver = Dopri5::new(|_t, y, dy| model.reaction_into(y, dy), 0.0, &anchor, options(tol)?)?;
    let mut samples = vec![(0.0, anchor.clone())];
    while solver.t() < period {
        solver.step_towards(period)?;
        samples.push((solver.t(), solver.y().to_vec()));
    }
    let closure = dist(solver.y(), &anchor);
    let mut orbit = OrbitAnalysis {
        outcome: OrbitOutcome::Periodic,
        period: Some(period),
        final_state: anchor.clone(),
        anchor,
        samples,
        closure_error: Some(closure),
        return_times,
        crossings,
        monodromy: None,
        multipliers: Vec::new(),
        tol,
    };
    let m = monodromy(model, &orbit)?;
    orbit.multipliers = linalg::eigenvalues(&m)?;
    orbit.monodromy = Some(m);
    Ok(orbit)
}

fn periodic_parts(orbit: &OrbitAnalysis) -> Result<(&[f64], f64)> {
    match (orbit.periodic(), orbit.period) {
        (true, Some(t)) if t > 0.0 => Ok((&orbit.anchor, t)),
        _ => Err(invalid("orbit is not periodic")),
    }
}

/// Fundamental matrix of `X' = (A(t) - λ D) X` over one period, with the
/// orbit re-integrated alongside; also returns `∫ trace A dt`.
fn variational(model: &CompetitionModel, orbit: &OrbitAnalysis, lambda: f64) -> Result<(DMatrix<f64>, f64)> {
    let (anchor, period) = periodic_parts(orbit)?;
    let n = model.species();
    if anchor.len() != n {
        return Err(invalid("orbit anchor does not match the model dimension"));
    }
    let d = model.diffusion().to_vec();
    let mut y0 = vec![0.0; n + n * n + 1];
    y0[..n].copy_from_slice(anchor);
    for i in 0..n {
        y0[n + i * n + i] = 1.0;
    }
    let mut jac = vec![0.0; n * n];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (u, rest) = y.split_at(n);
        let x = &rest[..n * n];
        model.reaction_into(u, &mut dy[..n]);
        model.jacobian_into(u, &mut jac);
        for i in 0..n {
            jac[i * n + i] -= lambda * d[i];
        }
        // row-major X
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += jac[i * n + k] * x[k * n + j];
                }
                dy[n + i * n + j] = s;
            }
        }
        dy[n + n * n] = (0..n).map(|i| jac[i * n + i] + lambda * d[i]).sum();
    };
    let tol = orbit.tol.min(1e-9);
    let opts = options(tol)?;
    let sol = crate::ode::solve(rhs, 0.0, &y0, period, opts)?;
    let y = sol.final_state();
    let x = DMatrix::from_row_slice(n, n, &y[n..n + n * n]);
    Ok((x, y[n + n * n]))
}

pub fn monodromy(model: &CompetitionModel, orbit: &OrbitAnalysis) -> Result<DMatrix<f64>> {
    Ok(variational(model, orbit, 0.0)?.0)
}

/// `∫₀ᵀ trace f'(U(t)) dt`; `det` of the monodromy equals its exponential.
pub fn trace_integral(model: &CompetitionModel, orbit: &OrbitAnalysis) -> Result<f64> {
    Ok(variational(model, orbit, 0.0)?.1)
}

/// Multipliers of the mode system `g' = (A(t) - λ_k D) g`, integrated
/// directly (no factorisation through the base multipliers).
pub fn modal_multipliers(model: &CompetitionModel, orbit: &OrbitAnalysis, lambda_k: f64) -> Result<Vec<C64>> {
    if !(lambda_k >= 0.0) {
        return Err(invalid(format!("mode eigenvalue must be nonnegative, got {lambda_k}")));
    }
    let (x, _) = variational(model, orbit, lambda_k)?;
    linalg::eigenvalues(&x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub base_multipliers: Vec<C64>,
    pub unit_multipliers: usize,
    /// `(λ_k, multipliers)` for each supplied mode.
    pub modes: Vec<(f64, Vec<C64>)>,
    pub verdict: Verdict,
}

/// Combine base and modal multipliers into a verdict; `mode_eigenvalues`
/// lists `λ_1, ..., λ_kmax` (empty for the plain ODE test).
pub fn orbital_stability(
    model: &CompetitionModel,
    orbit: &OrbitAnalysis,
    mode_eigenvalues: &[f64],
) -> Result<StabilityReport> {
    let base = match (&orbit.monodromy, orbit.multipliers.is_empty()) {
        (Some(_), false) => orbit.multipliers.clone(),
        _ => linalg::eigenvalues(&monodromy(model, orbit)?)?,
    };
    let modes = mode_eigenvalues
        .iter()
        .map(|&l| Ok((l, modal_multipliers(model, orbit, l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(stability_verdict(base, modes))
}

/// Verdict from precomputed base and modal multipliers.
pub fn stability_verdict(base: Vec<C64>, modes: Vec<(f64, Vec<C64>)>) -> StabilityReport {
    let (unit, nontrivial): (Vec<C64>, Vec<C64>) = base
        .iter()
        .partition(|rho| (*rho - C64::new(1.0, 0.0)).norm() < UNIT_MULTIPLIER_TOL);
    let moduli: Vec<f64> = nontrivial
        .iter()
        .chain(modes.iter().flat_map(|(_, m)| m.iter()))
        .map(|rho| rho.norm())
        .collect();
    let verdict = if moduli.iter().any(|m| *m > 1.0 + STABILITY_MARGIN) {
        Verdict::Unstable
    } else if unit.len() == 1 && moduli.iter().all(|m| *m < 1.0 - STABILITY_MARGIN) {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    };
    StabilityReport {
        base_multipliers: base,
        unit_multipliers: unit.len(),
        modes,
        verdict,
    }
}
