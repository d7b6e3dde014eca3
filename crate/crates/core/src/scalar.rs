//! Single-species steady states of `D u'' + u(1 - u) = 0`: energy, time
//! map, KISS size, Dirichlet profiles and radial shooting.

use crate::error::{invalid, Error, Result};
use crate::ode::{Dopri5, Solution, SolverOptions};
use crate::quadrature::{self, GaussLegendre};
use std::f64::consts::PI;

pub const MU_MIN: f64 = 1e-8;
pub const MU_MAX: f64 = 1.0 - 1e-6;
pub const TIME_MAP_RTOL: f64 = 1e-8;
/// Radial shooting stops once `u` reaches this value.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;
const BISECTION_MAX_ITER: usize = 200;

fn check_d(d: f64) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid(format!("diffusion coefficient must be positive, got {d}")));
    }
    Ok(())
}

/// `F(u) = u²/2 - u³/3`.
pub fn potential(u: f64) -> f64 {
    u * u / 2.0 - u * u * u / 3.0
}

/// First integral `u'²/2 + F(u)/D` of `u'' = -u(1 - u)/D`.
pub fn energy(u: f64, up: f64, d: f64) -> Result<f64> {
    check_d(d)?;
    Ok(up * up / 2.0 + potential(u) / d)
}

pub fn kiss_size(d: f64) -> Result<f64> {
    check_d(d)?;
    Ok(PI * d.sqrt())
}

/// Length of the Dirichlet interval on which the orbit through `(μ, 0)`
/// is the steady state (twice the distance from the maximum to a zero).
pub fn time_map(mu: f64, d: f64) -> Result<f64> {
    time_map_with_tol(mu, d, TIME_MAP_RTOL)
}

pub fn time_map_with_tol(mu: f64, d: f64, rtol: f64) -> Result<f64> {
    check_d(d)?;
    if !(MU_MIN..=MU_MAX).contains(&mu) {
        return Err(invalid(format!("mu = {mu} outside [{MU_MIN:e}, 1 - 1e-6]")));
    }
    // u = μz, z = 1 - w²: (F(μ) - F(u)) / (μ² w²) expanded in w
    let g = |w: f64| {
        let w2 = w * w;
        (1.0 - mu) + w2 * (mu - 0.5) - mu * w2 * w2 / 3.0
    };
    let rule = GaussLegendre::new(20);
    let integral = quadrature::adaptive(&rule, |w| 2.0 / g(w).sqrt(), 0.0, 1.0, rtol)?;
    Ok((2.0 * d).sqrt() * integral)
}

/// Amplitude `μ*` with `time_map(μ*, D) = L`, by bisection.
pub fn invert_time_map(length: f64, d: f64) -> Result<f64> {
    let kiss = kiss_size(d)?;
    if !(length > kiss) {
        return Err(invalid(format!("length {length} does not exceed the KISS size {kiss}")));
    }
    let rtol = 1e-13;
    let (mut lo, mut hi) = (MU_MIN, MU_MAX);
    let l_hi = time_map_with_tol(hi, d, rtol)?;
    if length > l_hi {
        return Err(invalid(format!(
            "length {length} exceeds the largest supported time-map value {l_hi}"
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let l_mid = time_map_with_tol(mid, d, rtol)?;
        if l_mid < length {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-3) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NumericalFailure(format!(
        "time-map inversion for L = {length} did not converge"
    )))
}

/// Positive Dirichlet steady state on `[0, L]`, symmetric about `L/2`.
#[derive(Clone, Debug)]
pub struct SteadyProfile {
    pub length: f64,
    pub d: f64,
    /// Maximum value, attained at `L/2`.
    pub mu: f64,
    half: Solution,
}

impl SteadyProfile {
    /// `u(x)`; defined on `[-L/10, 11L/10]` by continuing the orbit.
    pub fn value_at(&self, x: f64) -> f64 {
        let s = (x - self.length / 2.0).abs();
        self.half.eval(self.length / 2.0 + s)[0]
    }

    /// `n + 1` equally spaced samples `(x, u)` including both endpoints.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(1);
        (0..=n)
            .map(|i| {
                let x = self.length * i as f64 / n as f64;
                (x, self.value_at(x))
            })
            .collect()
    }
}

/// `None` when `L ≤ π√D` (only constant steady states exist).
pub fn dirichlet_steady_profile(length: f64, d: f64) -> Result<Option<SteadyProfile>> {
    if !(length > 0.0) {
        return Err(invalid(format!("length must be positive, got {length}")));
    }
    if length <= kiss_size(d)? {
        return Ok(None);
    }
    let mu = invert_time_map(length, d)?;
    let centre = length / 2.0;
    let half = crate::ode::solve(
        |_x, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0] * (1.0 - y[0]) / d;
        },
        centre,
        &[mu, 0.0],
        length * 1.1,
        SolverOptions::with_tolerances(1e-12, 1e-14),
    )?;
    Ok(Some(SteadyProfile { length, d, mu, half }))
}

/// Sup-norm of `u'' + u(1 - u)/D` at `nodes - 1` interior grid points,
/// with `u''` from the fourth-order five-point central stencil.
pub fn bvp_residual(profile: &SteadyProfile, nodes: usize) -> f64 {
    let h = profile.length / nodes as f64;
    let u = |x: f64| profile.value_at(x);
    (1..nodes)
        .map(|i| {
            let x = i as f64 * h;
            let upp =
                (-u(x - 2.0 * h) + 16.0 * u(x - h) - 30.0 * u(x) + 16.0 * u(x + h) - u(x + 2.0 * h)) / (12.0 * h * h);
            let ux = u(x);
            (upp + ux * (1.0 - ux) / profile.d).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShootOutcome {
    BlowUp,
    HitZero,
    StayedPositive,
}

#[derive(Clone, Debug)]
pub struct ShootResult {
    pub outcome: ShootOutcome,
    pub first_zero_r: Option<f64>,
    /// `(r, u, u')` at each accepted step.
    pub profile: Vec<[f64; 3]>,
    /// Radii where `u'` changes sign.
    pub turning_points: Vec<f64>,
}

/// Shoot `u'' + ((m-1)/r) u' = -u(1 - u)/D` from `u(0) = c`, `u'(0) = 0`.
/// `m = 1` is the planar orbit.
pub fn radial_shoot(c: f64, d: f64, radius: f64, m: u32) -> Result<ShootResult> {
    check_d(d)?;
    if !(c > 0.0) || !(radius > 0.0) || m < 1 {
        return Err(invalid(format!(
            "radial shooting needs c > 0, R > 0, m >= 1 (got c = {c}, R = {radius}, m = {m})"
        )));
    }
    let mf = m as f64;
    let rhs = move |r: f64, y: &[f64], dy: &mut [f64]| {
        let f = y[0] * (1.0 - y[0]) / d;
        dy[0] = y[1];
        dy[1] = if r <= 0.0 { -f / mf } else { -f - (mf - 1.0) / r * y[1] };
    };
    let mut opts = SolverOptions::with_tolerances(1e-8, 1e-10);
    opts.max_steps = 2_000_000;
    let mut solver = Dopri5::new(rhs, 0.0, &[c, 0.0], opts)?;
    let mut profile = vec![[0.0, c, 0.0]];
    let mut turning_points = Vec::new();
    while solver.t() < radius {
        let prev_up = solver.y()[1];
        solver.step_towards(radius)?;
        let (r, u, up) = (solver.t(), solver.y()[0], solver.y()[1]);
        let seg = solver.last_segment().expect("accepted step");
        if u <= 0.0 {
            let (r0, y0) = seg.bisect(seg.t0(), r, |y| y[0], 1e-10);
            if prev_up != 0.0 && (up < 0.0) != (prev_up < 0.0) {
                let (rt, _) = seg.bisect(seg.t0(), r0, |y| y[1], 1e-10);
                turning_points.push(rt);
            }
            if r0 > profile.last().expect("nonempty")[0] {
                profile.push([r0, y0[0], y0[1]]);
            }
            return Ok(ShootResult {
                outcome: ShootOutcome::HitZero,
                first_zero_r: Some(r0),
                profile,
                turning_points,
            });
        }
        if prev_up != 0.0 && up != 0.0 && (up < 0.0) != (prev_up < 0.0) {
            let (rt, _) = seg.bisect(seg.t0(), r, |y| y[1], 1e-10);
            turning_points.push(rt);
        }
        profile.push([r, u, up]);
        if u >= BLOW_UP_THRESHOLD {
            return Ok(ShootResult {
                outcome: ShootOutcome::BlowUp,
                first_zero_r: None,
                profile,
                turning_points,
            });
        }
    }
    Ok(ShootResult {
        outcome: ShootOutcome::StayedPositive,
        first_zero_r: None,
        profile,
        turning_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_values() {
        assert_eq!(potential(0.0), 0.0);
        assert!((potential(1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!(potential(1.5).abs() < 1e-15);
    }

    #[test]
    fn energy_values_and_validation() {
        assert_eq!(energy(0.0, 0.0, 0.3).unwrap(), 0.0);
        assert!((energy(1.0, 0.0, 0.25).unwrap() - 1.0 / 1.5).abs() < 1e-15);
        assert!(energy(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn kiss_values() {
        assert!((kiss_size(1.0).unwrap() - PI).abs() < 1e-15);
        assert!((kiss_size(0.1).unwrap() - 0.993459).abs() < 1e-6);
        assert!(kiss_size(-1.0).is_err());
    }

    #[test]
    fn time_map_small_amplitude_limit() {
        let l = time_map(1e-4, 0.1).unwrap();
        assert!((l - PI * 0.1_f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn time_map_reference_value() {
        // mpmath quad at 30 digits on the original singular integral
        let l = time_map(0.5, 0.1).unwrap();
        assert!((l - 1.3143906172951457).abs() < 1e-7, "{l}");
    }

    #[test]
    fn time_map_matches_orbit_half_period() {
        let (mu, d) = (0.7, 0.2);
        let mut solver = Dopri5::new(
            |_x, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0] * (1.0 - y[0]) / d;
            },
            0.0,
            &[mu, 0.0],
            SolverOptions::with_tolerances(1e-12, 1e-14),
        )
        .unwrap();
        let zero = loop {
            solver.step_towards(100.0).unwrap();
            if solver.y()[0] <= 0.0 {
                let seg = solver.last_segment().unwrap();
                break seg.bisect(seg.t0(), seg.t1(), |y| y[0], 1e-13).0;
            }
        };
        // centre to boundary is half the interval
        assert!((2.0 * zero - time_map(mu, d).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn time_map_range_checks() {
        assert!(time_map(0.0, 0.1).is_err());
        assert!(time_map(1.0, 0.1).is_err());
        assert!(time_map(0.5, 0.0).is_err());
        assert!(time_map(MU_MAX, 0.1).is_ok());
    }

    #[test]
    fn profile_below_kiss_is_none() {
        assert!(dirichlet_steady_profile(0.9, 0.1).unwrap().is_none());
    }

    #[test]
    fn profile_above_kiss() {
        let p = dirichlet_steady_profile(2.0, 0.1).unwrap().unwrap();
        assert!(p.mu > 0.0 && p.mu < 1.0);
        assert!(p.value_at(0.0).abs() < 1e-9);
        assert!(p.value_at(2.0).abs() < 1e-9);
        assert!((p.value_at(1.0) - p.mu).abs() < 1e-14);
        assert!(p.sample(100)[1..100].iter().all(|(_, u)| *u > 0.0));
        assert!(bvp_residual(&p, 200) < 1e-6);
    }

    #[test]
    fn profile_near_kiss_has_small_amplitude() {
        let l = kiss_size(0.1).unwrap() + 1e-4;
        let p = dirichlet_steady_profile(l, 0.1).unwrap().unwrap();
        assert!(p.mu < 0.05, "{}", p.mu);
    }

    #[test]
    fn shooting_outcomes() {
        let blow = radial_shoot(1.5, 0.1, 10.0, 2).unwrap();
        assert_eq!(blow.outcome, ShootOutcome::BlowUp);
        let hit = radial_shoot(0.5, 0.1, 10.0, 2).unwrap();
        assert_eq!(hit.outcome, ShootOutcome::HitZero);
        assert!(hit.first_zero_r.unwrap() > kiss_size(0.1).unwrap() / 2.0);
        assert!(hit.turning_points.is_empty());
        assert!(hit.profile.windows(2).all(|w| w[1][0] > w[0][0]));
        let end = hit.profile.last().unwrap();
        assert!(end[1].abs() < 1e-8);
        let stay = radial_shoot(0.5, 0.1, 0.1, 2).unwrap();
        assert_eq!(stay.outcome, ShootOutcome::StayedPositive);
    }

    #[test]
    fn planar_shot_reaches_zero_at_half_time_map() {
        let hit = radial_shoot(0.5, 0.1, 10.0, 1).unwrap();
        let half = time_map(0.5, 0.1).unwrap();
        assert!((2.0 * hit.first_zero_r.unwrap() - half).abs() < 1e-6);
    }
}
