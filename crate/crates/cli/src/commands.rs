//! One function per subcommand. Each writes into the output directory and
//! returns extra manifest fields.

use crate::config::{InitialSpec, ModelSpec, RunConfig, SolverSpec};
use crate::output::{num, nums, OutputDir, Series};
use crate::CliError;
use rayon::prelude::*;
use rdlab_core::analysis::{self, SupOptions, SupRegion};
use rdlab_core::kinetics::{self, CycleOptions, OrbitAnalysis};
use rdlab_core::model::{self, CompetitionModel, SupportStatus};
use rdlab_core::pde::{self, Boundary, Domain1D, EvolveOptions, Geometry, PdeTrajectory};
use rdlab_core::scalar;
use rdlab_core::C64;
use serde_json::{json, Value};
use std::f64::consts::PI;

type Out = Result<Value, CliError>;

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    x.as_ref()
        .ok_or_else(|| CliError::Config(format!("missing `{what}` section")))
}

fn model_of(cfg: &RunConfig) -> Result<CompetitionModel, CliError> {
    need(&cfg.model, "model")?.build()
}

fn complex(z: &C64) -> Value {
    json!({ "re": z.re, "im": z.im, "modulus": z.norm() })
}

fn complexes(zs: &[C64]) -> Vec<Value> {
    zs.iter().map(complex).collect()
}

fn species_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn equilibria(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let m = model_of(cfg)?;
    let n = m.species();
    let set = model::equilibria(&m)?;
    let mut header = vec!["label".to_string(), "status".into()];
    header.extend(species_header("u", n));
    header.push("class".into());
    for k in 1..=n {
        header.push(format!("eig{k}_re"));
        header.push(format!("eig{k}_im"));
    }
    let blank = |k: usize| vec![String::new(); k];
    let rows = set.candidates.iter().map(|c| {
        let mut row = vec![c.label.clone()];
        match &c.status {
            SupportStatus::Feasible(e) => {
                row.push("feasible".into());
                row.extend(nums(&e.point));
                row.push(serde_json::to_value(e.class).unwrap().as_str().unwrap().to_string());
                for z in &e.eigenvalues {
                    row.push(num(z.re));
                    row.push(num(z.im));
                }
            }
            SupportStatus::Infeasible { solution } => {
                row.push("infeasible".into());
                row.extend(nums(solution));
                row.extend(blank(1 + 2 * n));
            }
            SupportStatus::Degenerate => {
                row.push("degenerate".into());
                row.extend(blank(n + 1 + 2 * n));
            }
        }
        row
    });
    dir.csv("equilibria.csv", &header, rows.collect::<Vec<_>>())?;

    let feasible: Vec<Value> = set
        .feasible()
        .map(|e| {
            json!({
                "label": e.label,
                "point": e.point,
                "class": e.class,
                "eigenvalues": complexes(&e.eigenvalues),
            })
        })
        .collect();
    let degenerate: Vec<&str> = set.degenerate().map(|c| c.label.as_str()).collect();
    let condition = if n == 3 {
        Some(model::condition_report(&m))
    } else {
        None
    };
    let two_species = if n == 2 {
        Some(model::two_species_case(&m))
    } else {
        None
    };
    let mut summary = json!({
        "species": n,
        "candidates": set.candidates.len(),
        "feasible": feasible,
        "degenerate_supports": degenerate,
    });
    let mut failure = None;
    match condition {
        Some(Ok(r)) => summary["condition_report"] = serde_json::to_value(r).unwrap(),
        Some(Err(e)) => failure = Some(e),
        None => {}
    }
    match two_species {
        Some(Ok(c)) => summary["two_species_case"] = serde_json::to_value(c).unwrap(),
        // the case split is only defined for unit diagonal
        Some(Err(rdlab_core::Error::InvalidArgument(msg))) => summary["two_species_case_note"] = json!(msg),
        Some(Err(e)) => failure = Some(e),
        None => {}
    }
    let full = (1u32 << n) - 1;
    if failure.is_none() {
        if let Some(c) = set.candidates.iter().find(|c| c.support.0 == full) {
            if c.status == SupportStatus::Degenerate {
                failure = Some(rdlab_core::Error::DegenerateModel(
                    "interaction matrix is singular; interior equilibrium undetermined".into(),
                ));
            }
        }
    }
    dir.json("equilibria.json", &summary)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(json!({ "feasible_equilibria": set.feasible().count() })),
    }
}

pub fn timemap(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let spec = need(&cfg.timemap, "timemap")?;
    if spec.points < 2 {
        return Err(CliError::Config("timemap.points must be at least 2".into()));
    }
    if !(spec.mu_max > spec.mu_min) {
        return Err(CliError::Config("timemap.mu_max must exceed mu_min".into()));
    }
    let mus: Vec<f64> = (0..spec.points)
        .map(|k| spec.mu_min + (spec.mu_max - spec.mu_min) * k as f64 / (spec.points - 1) as f64)
        .collect();
    let ls = mus
        .par_iter()
        .map(|&mu| scalar::time_map(mu, spec.d))
        .collect::<rdlab_core::Result<Vec<_>>>()?;
    let kiss = scalar::kiss_size(spec.d)?;
    dir.csv(
        "timemap.csv",
        &["mu".into(), "length".into()],
        mus.iter()
            .zip(&ls)
            .map(|(m, l)| vec![num(*m), num(*l)])
            .collect::<Vec<_>>(),
    )?;
    let kiss_line = vec![kiss; mus.len()];
    dir.svg(
        "timemap.svg",
        &format!("time map, D = {}", spec.d),
        "mu",
        &[
            Series {
                name: "L(mu)".into(),
                x: &mus,
                y: &ls,
            },
            Series {
                name: "KISS".into(),
                x: &mus,
                y: &kiss_line,
            },
        ],
    )?;
    let monotone = ls.windows(2).all(|w| w[1] > w[0]);
    let mut summary = json!({ "d": spec.d, "kiss_size": kiss, "monotone": monotone, "points": mus.len() });
    if let Some(target) = spec.length_target {
        if target > kiss {
            let mu_star = scalar::invert_time_map(target, spec.d)?;
            summary["mu_star"] = json!(mu_star);
            if let Some(profile) = scalar::dirichlet_steady_profile(target, spec.d)? {
                let samples = profile.sample(201);
                let max = samples.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                dir.csv(
                    "profile.csv",
                    &["x".into(), "u".into()],
                    samples.iter().map(|(x, u)| vec![num(*x), num(*u)]).collect::<Vec<_>>(),
                )?;
                summary["profile_max"] = json!(max);
                summary["bvp_residual"] = json!(scalar::bvp_residual(&profile, ((target / 0.005) as usize).max(50)));
            }
        } else {
            summary["mu_star"] = Value::Null;
            summary["note"] = json!(format!(
                "length {target} <= KISS size {kiss}: only constant steady states"
            ));
        }
    }
    dir.json("timemap.json", &summary)?;
    Ok(json!({ "kiss_size": kiss }))
}

pub fn shoot(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let spec = need(&cfg.shoot, "shoot")?;
    let res = scalar::radial_shoot(spec.c, spec.d, spec.radius, spec.m)?;
    dir.csv(
        "shoot.csv",
        &["r".into(), "u".into(), "uprime".into()],
        res.profile.iter().map(|p| nums(p)).collect::<Vec<_>>(),
    )?;
    let r: Vec<f64> = res.profile.iter().map(|p| p[0]).collect();
    let u: Vec<f64> = res.profile.iter().map(|p| p[1]).collect();
    dir.svg(
        "shoot.svg",
        &format!("radial shooting, c = {}, m = {}", spec.c, spec.m),
        "r",
        &[Series {
            name: "u".into(),
            x: &r,
            y: &u,
        }],
    )?;
    let summary = json!({
        "outcome": res.outcome,
        "first_zero_r": res.first_zero_r,
        "turning_points": res.turning_points,
        "half_kiss_size": scalar::kiss_size(spec.d)? / 2.0,
    });
    dir.json("shoot.json", &summary)?;
    Ok(json!({ "outcome": res.outcome }))
}

fn cycle_options(solver: &SolverSpec) -> CycleOptions {
    CycleOptions {
        max_time: solver.max_time,
        tol: solver.tol,
        ..CycleOptions::default()
    }
}

fn domain_of(cfg: &RunConfig) -> Result<Option<Domain1D>, CliError> {
    cfg.domain.as_ref().map(|d| d.build()).transpose()
}

fn ode_point(cfg: &RunConfig, m: &CompetitionModel) -> Result<Vec<f64>, CliError> {
    need(&cfg.initial, "initial")?.point(m, domain_of(cfg)?)
}

fn orbit_summary(orbit: &OrbitAnalysis) -> Value {
    let tail = orbit.return_times.len().saturating_sub(10);
    json!({
        "outcome": orbit.outcome,
        "periodic": orbit.periodic(),
        "period": orbit.period,
        "anchor": orbit.anchor,
        "closure_error": orbit.closure_error,
        "return_times_tail": &orbit.return_times[tail..],
        "return_time_spread_5": orbit.return_time_spread(5),
        "final_state": orbit.final_state,
        "multipliers": complexes(&orbit.multipliers),
    })
}

fn write_trajectory(dir: &mut OutputDir, name: &str, n: usize, samples: &[(f64, Vec<f64>)]) -> Result<(), CliError> {
    let mut header = vec!["t".to_string()];
    header.extend(species_header("u", n));
    dir.csv(
        name,
        &header,
        samples
            .iter()
            .map(|(t, u)| {
                let mut row = vec![num(*t)];
                row.extend(nums(u));
                row
            })
            .collect::<Vec<_>>(),
    )
}

fn species_series<'a>(t: &'a [f64], cols: &'a [Vec<f64>], prefix: &str) -> Vec<Series<'a>> {
    cols.iter()
        .enumerate()
        .map(|(i, y)| Series {
            name: format!("{prefix}{}", i + 1),
            x: t,
            y,
        })
        .collect()
}

fn columns(samples: &[(f64, Vec<f64>)], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t = samples.iter().map(|s| s.0).collect();
    let cols = (0..n).map(|i| samples.iter().map(|s| s.1[i]).collect()).collect();
    (t, cols)
}

pub fn ode(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let m = model_of(cfg)?;
    let n = m.species();
    let u0 = ode_point(cfg, &m)?;
    let traj = kinetics::integrate(&m, &u0, cfg.solver.t_end, cfg.solver.tol)?;
    let samples = traj.sample(cfg.solver.sample_dt);
    write_trajectory(dir, "trajectory.csv", n, &samples)?;
    let (t, cols) = columns(&samples, n);
    dir.svg(
        "trajectory.svg",
        "kinetic trajectory",
        "t",
        &species_series(&t, &cols, "u"),
    )?;
    let orbit = kinetics::detect_limit_cycle(&m, &u0, &cycle_options(&cfg.solver))?;
    if orbit.periodic() {
        write_trajectory(dir, "orbit.csv", n, &orbit.samples)?;
    }
    let summary = json!({
        "initial_point": u0,
        "t_end": cfg.solver.t_end,
        "final_state": traj.final_state(),
        "cycle": orbit_summary(&orbit),
    });
    dir.json("ode.json", &summary)?;
    Ok(json!({ "periodic": orbit.periodic() }))
}

fn run_pde(
    m: &CompetitionModel,
    domain: Domain1D,
    initial: &InitialSpec,
    solver: &SolverSpec,
) -> Result<PdeTrajectory, CliError> {
    let phi = initial.field(m, domain)?;
    let dt = solver.dt.unwrap_or_else(|| pde::default_dt(m, &domain));
    let opts = EvolveOptions {
        snapshots: solver.snapshots,
        probe_positions: solver.probes.clone(),
        probe_interval: solver.probe_interval,
        ..EvolveOptions::new(solver.t_end, dt)
    };
    Ok(pde::evolve(m, &phi, &opts)?)
}

fn write_pde(dir: &mut OutputDir, m: &CompetitionModel, run: &PdeTrajectory) -> Result<Value, CliError> {
    let n = m.species();
    let probes = &run.probe_positions;
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        for x in probes {
            header.push(format!("u{}_x{x}", i + 1));
        }
    }
    dir.csv(
        "probes.csv",
        &header,
        run.record_times
            .iter()
            .zip(&run.probes)
            .map(|(t, rec)| {
                let mut row = vec![num(*t)];
                row.extend(rec.iter().flat_map(|s| nums(s)));
                row
            })
            .collect::<Vec<_>>(),
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(species_header("avg_u", n));
    dir.csv(
        "averages.csv",
        &header,
        run.record_times
            .iter()
            .zip(&run.averages)
            .map(|(t, a)| {
                let mut row = vec![num(*t)];
                row.extend(nums(a));
                row
            })
            .collect::<Vec<_>>(),
    )?;
    dir.csv(
        "flatness.csv",
        &["t".into(), "flatness".into(), "grad_l2".into()],
        run.record_times
            .iter()
            .zip(run.flatness.iter().zip(&run.grad_norms))
            .map(|(t, (f, g))| vec![num(*t), num(*f), num(*g)])
            .collect::<Vec<_>>(),
    )?;
    let last = run.final_field();
    let grid = run.domain.grid();
    let mut header = vec!["x".to_string()];
    header.extend(species_header("u", n));
    dir.csv(
        "final_field.csv",
        &header,
        grid.iter()
            .enumerate()
            .map(|(k, x)| {
                let mut row = vec![num(*x)];
                row.extend(last.values.iter().map(|s| num(s[k])));
                row
            })
            .collect::<Vec<_>>(),
    )?;

    for i in 0..n {
        let traces: Vec<Vec<f64>> = (0..probes.len()).map(|p| run.probe_trace(i, p)).collect();
        let series: Vec<Series> = traces
            .iter()
            .zip(probes)
            .map(|(y, x)| Series {
                name: format!("x = {x}"),
                x: &run.record_times,
                y,
            })
            .collect();
        dir.svg(
            &format!("probes_u{}.svg", i + 1),
            &format!("u{} at probe points", i + 1),
            "t",
            &series,
        )?;
    }
    let avg_cols: Vec<Vec<f64>> = (0..n).map(|i| run.averages.iter().map(|a| a[i]).collect()).collect();
    dir.svg(
        "averages.svg",
        "spatial averages",
        "t",
        &species_series(&run.record_times, &avg_cols, "avg u"),
    )?;

    let omega = if run.record_times.last().is_some_and(|t| *t >= 50.0) {
        serde_json::to_value(analysis::classify_omega(run, m)?).unwrap()
    } else {
        json!({ "kind": { "kind": "undetermined" }, "note": "run shorter than 50 time units; not classified" })
    };
    dir.json("omega.json", &omega)?;
    Ok(json!({
        "dt": run.dt,
        "records": run.record_times.len(),
        "min_value": run.min_value,
        "final_flatness": run.flatness.last(),
        "omega": omega,
    }))
}

pub fn pde(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let m = model_of(cfg)?;
    let domain = need(&cfg.domain, "domain")?.build()?;
    let run = run_pde(&m, domain, need(&cfg.initial, "initial")?, &cfg.solver)?;
    let summary = write_pde(dir, &m, &run)?;
    dir.json("pde.json", &summary)?;
    Ok(json!({ "omega": summary["omega"]["kind"] }))
}

fn mode_eigenvalues(spec: &crate::config::FloquetSpec) -> Result<Vec<f64>, CliError> {
    match (&spec.lambdas, spec.length, spec.k_max) {
        (Some(l), None, None) => Ok(l.clone()),
        (None, Some(len), k) => {
            let k = k.unwrap_or(0);
            (1..=k).map(|k| Ok(pde::neumann_eigenvalue(len, k)?)).collect()
        }
        (None, None, None) => Ok(Vec::new()),
        _ => Err(CliError::Config(
            "floquet: give either `lambdas` or `length` with `k_max`".into(),
        )),
    }
}

pub fn floquet(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let m = model_of(cfg)?;
    let spec = cfg.floquet.clone().unwrap_or_default();
    let lambdas = mode_eigenvalues(&spec)?;
    let u0 = ode_point(cfg, &m)?;
    let orbit = kinetics::detect_limit_cycle(&m, &u0, &cycle_options(&cfg.solver))?;
    if !orbit.periodic() {
        dir.json("floquet.json", &json!({ "cycle": orbit_summary(&orbit) }))?;
        return Err(CliError::NoCycle(format!(
            "cycle detection from {u0:?} ended {:?}",
            orbit.outcome
        )));
    }
    let modes = lambdas
        .par_iter()
        .map(|&l| Ok((l, kinetics::modal_multipliers(&m, &orbit, l)?)))
        .collect::<rdlab_core::Result<Vec<_>>>()?;
    let report = kinetics::stability_verdict(orbit.multipliers.clone(), modes);
    let period = orbit.period.expect("periodic orbit has a period");
    let liouville = kinetics::trace_integral(&m, &orbit)?.exp();
    let det = orbit.monodromy.as_ref().map(|x| x.determinant());

    let mut header = vec!["k".to_string(), "lambda".into()];
    for j in 1..=m.species() {
        header.push(format!("rho{j}_re"));
        header.push(format!("rho{j}_im"));
        header.push(format!("rho{j}_abs"));
    }
    let row = |k: usize, l: f64, rho: &[C64]| {
        let mut r = vec![k.to_string(), num(l)];
        for z in rho {
            r.extend([num(z.re), num(z.im), num(z.norm())]);
        }
        r
    };
    let mut rows = vec![row(0, 0.0, &report.base_multipliers)];
    rows.extend(report.modes.iter().enumerate().map(|(k, (l, rho))| row(k + 1, *l, rho)));
    dir.csv("multipliers.csv", &header, rows)?;
    write_trajectory(dir, "orbit.csv", m.species(), &orbit.samples)?;

    let mut summary = json!({
        "cycle": orbit_summary(&orbit),
        "period": period,
        "monodromy_determinant": det,
        "liouville_determinant": liouville,
        "base_multipliers": complexes(&report.base_multipliers),
        "unit_multipliers": report.unit_multipliers,
        "modes": report.modes.iter().map(|(l, rho)| json!({ "lambda": l, "multipliers": complexes(rho) })).collect::<Vec<_>>(),
        "verdict": report.verdict,
    });
    if let Some(d) = spec.scalar_d {
        let scalar_model = m.with_diffusion(vec![d; m.species()])?;
        let checks: Vec<Value> = lambdas
            .par_iter()
            .map(|&l| {
                let direct = kinetics::modal_multipliers(&scalar_model, &orbit, l)?;
                let factor = (-l * d * period).exp();
                let factorised: Vec<C64> = orbit.multipliers.iter().map(|r| r * factor).collect();
                let mismatch = set_distance(&direct, &factorised).max(set_distance(&factorised, &direct));
                Ok(json!({ "lambda": l, "mismatch": mismatch }))
            })
            .collect::<rdlab_core::Result<Vec<_>>>()?;
        summary["scalar_d_check"] = json!({ "d": d, "modes": checks });
    }
    dir.json("floquet.json", &summary)?;
    Ok(json!({ "period": period, "verdict": report.verdict }))
}

fn set_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .map(|z| b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn chs(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    let m = model_of(cfg)?;
    let spec = cfg.chs.clone().unwrap_or(crate::config::ChsSpec {
        length: 1.0,
        norm: Default::default(),
        box_lower: None,
        box_upper: None,
    });
    let region = match (&spec.box_lower, &spec.box_upper) {
        (Some(lower), Some(upper)) => SupRegion::Box {
            lower: lower.clone(),
            upper: upper.clone(),
        },
        (None, None) => match m.species() {
            2 => SupRegion::SigmaTwoSpecies,
            3 => SupRegion::RegionA,
            n => {
                return Err(CliError::Config(format!(
                    "{n} species: chs needs box_lower and box_upper"
                )))
            }
        },
        _ => return Err(CliError::Config("chs: box_lower and box_upper go together".into())),
    };
    let opts = SupOptions {
        norm: spec.norm,
        ..SupOptions::default()
    };
    let report = analysis::chs_report_with(&m, spec.length, &region, &opts)?;
    let value = json!({ "length": spec.length, "region": region, "norm": spec.norm, "report": report });
    dir.json("chs.json", &value)?;
    Ok(json!({ "sigma": report.sigma, "threshold_d": report.threshold_d }))
}

/// Settings of the reference run; the config may only set `out`.
pub const PINNED_NODES: usize = 512;
pub const PINNED_DT: f64 = 1e-3;
pub const PINNED_TOL: f64 = 1e-7;
pub const PINNED_T_END: f64 = 100.0;
pub const REFERENCE_U0: [f64; 3] = [0.1, 0.0095238, 0.0333333];

pub fn reproduce_paper(cfg: &RunConfig, dir: &mut OutputDir) -> Out {
    if cfg.model.is_some() || cfg.domain.is_some() || cfg.initial.is_some() {
        log::warn!("reproduce-paper uses pinned settings; model/domain/initial in the config are ignored");
    }
    let m = ModelSpec::paper().build()?;
    let domain = Domain1D::new(Geometry::Interval { length: 1.0 }, PINNED_NODES, Boundary::Neumann)?;
    let initial = InitialSpec::paper_phi();
    let solver = SolverSpec {
        dt: Some(PINNED_DT),
        t_end: PINNED_T_END,
        tol: PINNED_TOL,
        ..SolverSpec::default()
    };

    let condition = model::condition_report(&m)?;
    let set = model::equilibria(&m)?;
    dir.json(
        "condition.json",
        &json!({
            "condition_report": condition,
            "equilibria": set.feasible().map(|e| json!({
                "label": e.label, "point": e.point, "class": e.class,
                "eigenvalues": complexes(&e.eigenvalues),
            })).collect::<Vec<_>>(),
        }),
    )?;
    let chs = analysis::chs_report(&m, 1.0)?;
    dir.json(
        "chs.json",
        &json!({ "report": chs, "threshold_d_closed_form": 3f64.sqrt() / (PI * PI) }),
    )?;

    let phi_average = pde::spatial_average(&initial.field(&m, domain)?);
    let avg_error = phi_average
        .iter()
        .zip(REFERENCE_U0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (ode_leg, pde_leg) = rayon::join(
        || -> Result<_, CliError> {
            let traj = kinetics::integrate(&m, &phi_average, PINNED_T_END, PINNED_TOL)?;
            let orbit = kinetics::detect_limit_cycle(&m, &phi_average, &cycle_options(&solver))?;
            Ok((traj, orbit))
        },
        || run_pde(&m, domain, &initial, &solver),
    );
    let (traj, orbit) = ode_leg?;
    let run = pde_leg?;

    write_trajectory(dir, "ode_trajectory.csv", 3, &traj.sample(solver.sample_dt))?;
    dir.json("ode_cycle.json", &orbit_summary(&orbit))?;
    if !orbit.periodic() {
        log::warn!("ODE leg: no periodic orbit confirmed ({:?})", orbit.outcome);
    }
    let pde_summary = write_pde(dir, &m, &run)?;

    let mut header = vec!["t".to_string()];
    header.extend(species_header("ode_u", 3));
    header.extend(species_header("avg_u", 3));
    let rows: Vec<Vec<String>> = run
        .record_times
        .iter()
        .zip(&run.averages)
        .map(|(t, a)| {
            let mut row = vec![num(*t)];
            row.extend(nums(&traj.eval(*t)));
            row.extend(nums(a));
            row
        })
        .collect();
    dir.csv("ode_vs_average.csv", &header, rows)?;
    let ode_v: Vec<f64> = run.record_times.iter().map(|t| traj.eval(*t)[1]).collect();
    let avg_v: Vec<f64> = run.averages.iter().map(|a| a[1]).collect();
    dir.svg(
        "ode_vs_average.svg",
        "v: kinetic ODE vs spatial average",
        "t",
        &[
            Series {
                name: "ODE v".into(),
                x: &run.record_times,
                y: &ode_v,
            },
            Series {
                name: "avg v".into(),
                x: &run.record_times,
                y: &avg_v,
            },
        ],
    )?;

    let v_traces: Vec<Vec<f64>> = (0..run.probe_positions.len()).map(|p| run.probe_trace(1, p)).collect();
    let mut separation = Vec::new();
    for a in 0..v_traces.len() {
        for b in a + 1..v_traces.len() {
            let d = v_traces[a]
                .iter()
                .zip(&v_traces[b])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            separation
                .push(json!({ "probes": [run.probe_positions[a], run.probe_positions[b]], "max_abs_difference": d }));
        }
    }
    let summary = json!({
        "ode_initial_point": phi_average,
        "ode_initial_point_reference": REFERENCE_U0,
        "ode_initial_point_error": avg_error,
        "ode_periodic": orbit.periodic(),
        "ode_outcome": orbit.outcome,
        "condition_case": condition.case,
        "threshold_d": chs.threshold_d,
        "origin_threshold_d": chs.origin_threshold_d,
        "threshold_d_closed_form": 3f64.sqrt() / (PI * PI),
        "flat_guarantee": chs.flat_guarantee,
        "v_probe_separation": separation,
        "pde": pde_summary,
        "pinned": { "nodes": PINNED_NODES, "dt": PINNED_DT, "tol": PINNED_TOL, "t_end": PINNED_T_END, "probes": solver.probes },
    });
    dir.json("summary.json", &summary)?;
    Ok(summary)
}
