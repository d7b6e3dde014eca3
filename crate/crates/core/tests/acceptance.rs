//! Acceptance criteria; one PASS/FAIL line per criterion.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rdlab_core::analysis::{self, SupRegion};
use rdlab_core::kinetics::{self, CycleOptions};
use rdlab_core::model::{self, CompetitionModel, ConditionCase, Region};
use rdlab_core::pde::{self, Boundary, Domain1D, EvolveOptions, Field};
use rdlab_core::scalar::{self, ShootOutcome};
use rdlab_core::{Result, C64};
use std::f64::consts::PI;
use std::time::Instant;

const REFERENCE_D: [f64; 3] = [1e-3, 2e-3, 0.5e-3];
const REFERENCE_U0: [f64; 3] = [0.1, 0.0095238, 0.0333333];

fn paper_phi(domain: Domain1D) -> Field {
    Field::from_fn(domain, 3, |i, x| match i {
        0 => 6.0 * x * x * (1.0 - x).powi(3),
        1 => x.powi(4) * (1.0 - x).powi(2),
        _ => 2.0 * x.powi(3) * (1.0 - x).powi(2),
    })
}

type Criterion = fn() -> Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
    min_field: Option<f64>,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail,
        min_field: None,
    })
}

fn kiss_limit() -> Result<Outcome> {
    let start = Instant::now();
    let l = scalar::time_map(1e-4, 0.1)?;
    let want = PI * 0.1_f64.sqrt();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (l - want).abs() <= 1e-3 && secs < 1.0,
        format!(
            "L(1e-4) = {l:.9}, pi*sqrt(0.1) = {want:.9}, |diff| = {:.2e} (tol 1e-3), {secs:.3}s",
            (l - want).abs()
        ),
    )
}

fn time_map_monotone() -> Result<Outcome> {
    let mus: Vec<f64> = (0..100).map(|k| 1e-3 + (0.999 - 1e-3) * k as f64 / 99.0).collect();
    let ls = mus
        .iter()
        .map(|&m| scalar::time_map(m, 0.1))
        .collect::<Result<Vec<_>>>()?;
    let increasing = ls.windows(2).all(|w| w[1] > w[0]);
    let top = *ls.last().expect("grid");
    let bound = 3.0 * scalar::kiss_size(0.1)?;
    outcome(
        increasing && top > bound,
        format!("strictly increasing = {increasing}; L(0.999) = {top:.6} vs 3*KISS = {bound:.6}"),
    )
}

fn dirichlet_threshold() -> Result<Outcome> {
    let below = scalar::dirichlet_steady_profile(0.9, 0.1)?;
    let profile = scalar::dirichlet_steady_profile(2.0, 0.1)?
        .ok_or_else(|| rdlab_core::Error::NumericalFailure("no profile at L = 2".into()))?;
    let residual = scalar::bvp_residual(&profile, 200);
    let single = CompetitionModel::new(vec![vec![1.0]], vec![0.1])?;
    let domain = Domain1D::interval(2.0, 399, Boundary::Dirichlet)?;
    let bump = Field::from_fn(domain, 1, |_, x| 0.2 * (PI * x / 2.0).sin());
    let mut opts = EvolveOptions::new(200.0, 1e-2);
    opts.probe_positions = vec![1.0];
    let run = pde::evolve(&single, &bump, &opts)?;
    let grid = domain.grid();
    let err = run.final_field().values[0]
        .iter()
        .zip(&grid)
        .map(|(u, &x)| (u - profile.value_at(x)).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: below.is_none() && residual < 1e-6 && err < 1e-4,
        detail: format!(
            "L=0.9: none = {}; L=2: mu* = {:.10}, residual = {residual:.2e} (tol 1e-6); PDE sup error at t=200 = {err:.2e} (tol 1e-4)",
            below.is_none(),
            profile.mu
        ),
        min_field: Some(run.min_value),
    })
}

fn radial_shooting() -> Result<Outcome> {
    let hit = scalar::radial_shoot(0.5, 0.1, 10.0, 2)?;
    let blow = scalar::radial_shoot(1.5, 0.1, 10.0, 2)?;
    let r1 = hit.first_zero_r.unwrap_or(f64::NAN);
    let bound = scalar::kiss_size(0.1)? / 2.0;
    outcome(
        hit.outcome == ShootOutcome::HitZero && r1 > bound && blow.outcome == ShootOutcome::BlowUp,
        format!("c=0.5: r1 = {r1:.8} > {bound:.8}; c=1.5: {:?}", blow.outcome),
    )
}

fn two_species_norm() -> Result<Outcome> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (u, v, b, c): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
        let m = CompetitionModel::two_species(b.max(1e-9), c.max(1e-9), 1.0, 1.0)?;
        let direct = m.jacobian_frobenius_sq(&[u, v])?;
        let closed = model::two_species_frobenius_sq_expansion(b.max(1e-9), c.max(1e-9), u, v);
        worst = worst.max((direct - closed).abs());
    }
    let m = CompetitionModel::two_species(1.0, 1.0, 1.0, 1.0)?;
    let sup = analysis::sup_jacobian_norm_with(&m, &SupRegion::SigmaTwoSpecies, &Default::default())?;
    let sq = sup.value * sup.value;
    let at_origin = m.jacobian_frobenius_sq(&[0.0, 0.0])?;
    outcome(
        worst < 1e-12 && (sq - 2.0).abs() < 1e-6 && (at_origin - 2.0).abs() < 1e-15,
        format!(
            "max |closed - entrywise| = {worst:.2e}; b=c=1: sup norm^2 over Sigma = {sq:.12}, norm^2 at origin = {at_origin}"
        ),
    )
}

fn reference_algebra() -> Result<Outcome> {
    let m = model::reference_model(REFERENCE_D);
    let set = model::equilibria(&m)?;
    let worst = set
        .feasible()
        .map(|e| m.residual(&e.point))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let r = model::condition_report(&m)?;
    let exact = [37759.0 / 2000.0, 2.97, 3.52, 2.925];
    let got = [r.w, r.w_u, r.w_v, r.w_w];
    let det_err = got.iter().zip(exact).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    let p_err = (r.p + 99.0 / 37759.0).abs();
    outcome(
        worst < 1e-10
            && got.iter().all(|x| *x > 0.0)
            && r.p < 0.0
            && r.ineq9_holds
            && det_err < 1e-10
            && p_err < 1e-12
            && r.case == ConditionCase::PeriodicAttractorCandidate,
        format!(
            "max residual = {worst:.2e}; W, Wu, Wv, Ww = {:.6}, {:.6}, {:.6}, {:.6} (rational err {det_err:.1e}); p = {:.10} (err {p_err:.1e}); (9) = {}; case = {:?}",
            r.w, r.w_u, r.w_v, r.w_w, r.p, r.ineq9_holds, r.case
        ),
    )
}

fn q_roots(p: f64, q: f64) -> [C64; 3] {
    let disc = C64::new(p * p - 4.0 * q, 0.0).sqrt();
    [C64::new(-1.0, 0.0), (-p + disc) / 2.0, (-p - disc) / 2.0]
}

fn q_mismatch(m: &CompetitionModel) -> Result<f64> {
    let r = model::condition_report(m)?;
    let q = r.interior.iter().product::<f64>() * r.w;
    let ev = rdlab_core::linalg::eigenvalues(&m.jacobian(&r.interior)?)?;
    let roots = q_roots(r.p, q);
    Ok(roots
        .iter()
        .map(|z| ev.iter().map(|l| (l - z).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

fn q_consistency() -> Result<Outcome> {
    let mut worst = q_mismatch(&model::reference_model(REFERENCE_D))?;
    let reference = worst;
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut count = 0;
    while count < 20 {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.random_range(0.5..3.5)).collect())
            .collect();
        let m = CompetitionModel::new(rows, vec![1.0; 3])?;
        let Ok(r) = model::condition_report(&m) else { continue };
        if [r.w, r.w_u, r.w_v, r.w_w].iter().all(|x| *x > 0.0) {
            worst = worst.max(q_mismatch(&m)?);
            count += 1;
        }
    }
    outcome(
        worst < 1e-8,
        format!("max |eig - root| = {worst:.2e} (reference matrix {reference:.2e}, plus {count} random admissible matrices; tol 1e-8)"),
    )
}

fn limit_cycle() -> Result<Outcome> {
    let m = model::reference_model(REFERENCE_D);
    let start = Instant::now();
    let opts = CycleOptions::default();
    let orbit = kinetics::detect_limit_cycle(&m, &REFERENCE_U0, &opts)?;
    let transient = opts.max_time / 2.0;
    let traj = kinetics::integrate(&m, &REFERENCE_U0, opts.max_time, opts.tol)?;
    let confined = traj
        .sample(0.1)
        .iter()
        .filter(|(t, _)| *t >= transient)
        .all(|(_, u)| model::region_membership(&m, u) == Ok(Region::A));
    let secs = start.elapsed().as_secs_f64();
    let spread = orbit.return_time_spread(5);
    let tail: Vec<String> = orbit
        .return_times
        .iter()
        .rev()
        .take(5)
        .rev()
        .map(|t| format!("{t:.4}"))
        .collect();
    let min_coord = traj
        .sample(0.1)
        .iter()
        .filter(|(t, _)| *t >= transient)
        .flat_map(|(_, u)| u.clone())
        .fold(f64::INFINITY, f64::min);
    outcome(
        orbit.periodic() && spread.is_some_and(|s| s < 1e-3) && confined && secs < 30.0,
        format!(
            "outcome = {:?}; last return times = [{}]; spread = {}; confined to A = {confined}; late min coordinate = {min_coord:.2e}; {secs:.1}s",
            orbit.outcome,
            tail.join(", "),
            spread.map_or("n/a".into(), |s| format!("{s:.2e}"))
        ),
    )
}

fn match_sets(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .map(|z| b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn floquet() -> Result<Outcome> {
    let (m, u0) = floquet_case()?;
    let opts = CycleOptions {
        max_time: 400.0,
        ..CycleOptions::default()
    };
    let orbit = kinetics::detect_limit_cycle(&m, &u0, &opts)?;
    if !orbit.periodic() {
        return outcome(false, format!("no cycle detected: {:?}", orbit.outcome));
    }
    let period = orbit.period.expect("periodic");
    let trivial = orbit
        .multipliers
        .iter()
        .map(|r| (r - C64::new(1.0, 0.0)).norm())
        .fold(f64::INFINITY, f64::min);
    let mono: &DMatrix<f64> = orbit.monodromy.as_ref().expect("monodromy");
    let det = mono.determinant();
    let liouville = kinetics::trace_integral(&m, &orbit)?.exp();
    let d = 0.01;
    let scalar_d = m.with_diffusion(vec![d; 3])?;
    let lambda1 = PI * PI;
    let direct = kinetics::modal_multipliers(&scalar_d, &orbit, lambda1)?;
    let factor = (-lambda1 * d * period).exp();
    let factorised: Vec<C64> = orbit.multipliers.iter().map(|r| r * factor).collect();
    let modal_err = match_sets(&direct, &factorised).max(match_sets(&factorised, &direct));
    outcome(
        trivial < 1e-3 && (det - liouville).abs() < 1e-6 && modal_err < 1e-6,
        format!(
            "period = {period:.8}; min |rho - 1| = {trivial:.2e}; det = {det:.6e}, exp(int tr A) = {liouville:.6e}; scalar-D modal mismatch = {modal_err:.2e}"
        ),
    )
}

fn chs_regime() -> Result<Outcome> {
    let m = model::reference_model([1.0; 3]);
    let domain = Domain1D::interval(1.0, 512, Boundary::Neumann)?;
    let phi = paper_phi(domain);
    let mut opts = EvolveOptions::new(50.0, 1e-3);
    opts.probe_interval = 0.02;
    let run = pde::evolve(&m, &phi, &opts)?;
    let flat = pde::flatness(run.final_field());
    let fit = analysis::decay_fit(&run, (0.2, 2.0))?;
    let sigma = PI * PI - 3.0_f64.sqrt();
    let avg0 = pde::spatial_average(&phi);
    let ode = kinetics::integrate(&m, &avg0, 50.0, 1e-10)?;
    let markus = run
        .record_times
        .iter()
        .zip(&run.averages)
        .filter(|(t, _)| **t >= 20.0)
        .map(|(t, a)| {
            ode.eval(*t)
                .iter()
                .zip(a)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: flat < 1e-4 && fit.rate >= sigma && markus < 1e-3,
        detail: format!(
            "flatness(t=50) = {flat:.2e} (tol 1e-4); decay rate on [0.2, 2] = {:.4} vs sigma = {sigma:.4}; max |avg - ODE| for t >= 20 = {markus:.2e} (tol 1e-3)",
            fit.rate
        ),
        min_field: Some(run.min_value),
    })
}

fn heterogeneous_regime() -> Result<Outcome> {
    let m = model::reference_model(REFERENCE_D);
    let domain = Domain1D::interval(1.0, 512, Boundary::Neumann)?;
    let start = Instant::now();
    let run = pde::evolve(&m, &paper_phi(domain), &EvolveOptions::new(100.0, 1e-3))?;
    let secs = start.elapsed().as_secs_f64();
    let win = run.record_window(50.0, 100.0);
    let traces: Vec<Vec<f64>> = (0..3).map(|p| run.probe_trace(1, p)[win.clone()].to_vec()).collect();
    let mut dists = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            dists.push(
                traces[i]
                    .iter()
                    .zip(&traces[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
    }
    let scores = traces
        .iter()
        .map(|tr| analysis::periodicity_in_window(&run.record_times[win.clone()], tr, (50.0, 100.0)))
        .collect::<Result<Vec<_>>>()?;
    let pass = dists.iter().all(|d| *d > 0.05) && scores.iter().all(|s| s.score > 0.9) && secs < 300.0;
    Ok(Outcome {
        pass,
        detail: format!(
            "pairwise sup distances = [{}] (> 0.05); scores = [{}] (> 0.9); periods = [{}]; {secs:.1}s",
            dists.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join(", "),
            scores
                .iter()
                .map(|s| format!("{:.4}", s.score))
                .collect::<Vec<_>>()
                .join(", "),
            scores
                .iter()
                .map(|s| s.period.map_or("n/a".into(), |p| format!("{p:.3}")))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        min_field: Some(run.min_value),
    })
}

fn hygiene(min_fields: &[f64]) -> Result<Outcome> {
    let m = model::reference_model(REFERENCE_D);
    let domain = Domain1D::interval(1.0, 128, Boundary::Neumann)?;
    let phi = paper_phi(domain);
    let run = |dt: f64| -> Result<(Field, f64)> {
        let tr = pde::evolve(&m, &phi, &EvolveOptions::new(1.0, dt))?;
        Ok((tr.final_field().clone(), tr.min_value))
    };
    let (coarse, m1) = run(0.1)?;
    let (fine, m2) = run(0.05)?;
    let (reference, m3) = run(0.0125)?;
    let err = |a: &Field| {
        a.values
            .iter()
            .flatten()
            .zip(reference.values.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let dt_ratio = err(&coarse) / err(&fine);

    let k = 2.0 * PI;
    let lap_err = |nodes: usize| -> Result<f64> {
        let d = Domain1D::interval(1.0, nodes, Boundary::Neumann)?;
        let g = d.grid();
        let row: Vec<f64> = g.iter().map(|x| (k * x).cos()).collect();
        let out = pde::laplacian_apply(&d, &row)?;
        Ok(out
            .iter()
            .zip(&g)
            .map(|(v, x)| (v + k * k * (k * x).cos()).abs())
            .fold(0.0, f64::max))
    };
    let h_ratio = lap_err(63)? / lap_err(127)?;
    let lowest = min_fields
        .iter()
        .chain([m1, m2, m3].iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    outcome(
        lowest >= -1e-8 && (3.5..=4.5).contains(&dt_ratio) && (3.5..=4.5).contains(&h_ratio),
        format!("min field value over runs = {lowest:.3e}; dt-halving error ratio = {dt_ratio:.3}; h-halving Laplacian error ratio = {h_ratio:.3}"),
    )
}

/// Three-species model and start point with a genuine periodic orbit.
fn floquet_case() -> Result<(CompetitionModel, Vec<f64>)> {
    Ok((CompetitionModel::may_leonard(0.5, 1.5, [1.0; 3])?, vec![0.3, 0.4, 0.3]))
}

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("KISS limit of the time map", kiss_limit),
        ("time-map monotonicity", time_map_monotone),
        ("Dirichlet threshold and PDE convergence", dirichlet_threshold),
        ("radial shooting", radial_shooting),
        ("two-species norm formula and sup over Sigma", two_species_norm),
        ("reference-matrix algebra", reference_algebra),
        ("Q(lambda) consistency", q_consistency),
        ("limit cycle of the reference ODE", limit_cycle),
        ("Floquet multipliers", floquet),
        ("CHS regime, d = 1", chs_regime),
        ("heterogeneous regime, small d", heterogeneous_regime),
    ];
    let mut failed = 0;
    let mut min_fields = Vec::new();
    let mut line = |id: usize, name: &str, res: Result<Outcome>, min_fields: &mut Vec<f64>| {
        let (pass, detail) = match res {
            Ok(o) => {
                min_fields.extend(o.min_field);
                (o.pass, o.detail)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    for (k, (name, run)) in criteria.iter().enumerate() {
        line(k + 1, name, run(), &mut min_fields);
    }
    line(12, "numerical hygiene", hygiene(&min_fields), &mut min_fields);
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
