//! Flatness analysis: sup of the Jacobian norm over invariant regions,
//! the CHS margin `σ = λ₁ d_min - M`, decay-rate fits, periodicity
//! scores and classification of long PDE runs.

use crate::error::{invalid, Result};
use crate::model::{self, CompetitionModel, MatrixNorm, Region};
use crate::pde::{self, PdeTrajectory};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SupRegion {
    /// `{u, v ≥ 0 : u ≤ 1 - b v or v ≤ 1 - c u}` for two species.
    SigmaTwoSpecies,
    /// Points between the planes `Σ_j a_ij u_j = 1`, inside `[0, u_max]^n`.
    RegionA,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupOptions {
    pub points_per_axis: usize,
    /// Total grid cap, applied when `points_per_axis^n` is larger.
    pub max_points: usize,
    pub refine_iterations: usize,
    pub norm: MatrixNorm,
}

impl Default for SupOptions {
    fn default() -> Self {
        Self {
            points_per_axis: 200,
            max_points: 8_000_000,
            refine_iterations: 20,
            norm: MatrixNorm::Frobenius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupResult {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// Upper corner used to bound region A: `max_i 1/min_j a_ji + 1`.
pub fn region_a_bound(model: &CompetitionModel) -> f64 {
    let n = model.species();
    (0..n)
        .map(|i| 1.0 / (0..n).map(|j| model.a(j, i)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        + 1.0
}

fn region_box(model: &CompetitionModel, region: &SupRegion) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.species();
    match region {
        SupRegion::SigmaTwoSpecies => {
            if n != 2 {
                return Err(invalid("the two-species region needs n = 2"));
            }
            let (b, c) = (model.a(0, 1), model.a(1, 0));
            Ok((vec![0.0, 0.0], vec![1.0_f64.max(1.0 / c), 1.0_f64.max(1.0 / b)]))
        }
        SupRegion::RegionA => Ok((vec![0.0; n], vec![region_a_bound(model); n])),
        SupRegion::Box { lower, upper } => {
            if lower.len() != n || upper.len() != n {
                return Err(invalid("box bounds must have one entry per species"));
            }
            if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || *l < 0.0) {
                return Err(invalid("box bounds must satisfy 0 <= lower <= upper"));
            }
            Ok((lower.clone(), upper.clone()))
        }
    }
}

fn contains(model: &CompetitionModel, region: &SupRegion, u: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    if u.iter().zip(lo.iter().zip(hi)).any(|(x, (l, h))| *x < *l || *x > *h) {
        return false;
    }
    match region {
        SupRegion::SigmaTwoSpecies => {
            let (b, c) = (model.a(0, 1), model.a(1, 0));
            u[0] <= 1.0 - b * u[1] + 1e-12 || u[1] <= 1.0 - c * u[0] + 1e-12
        }
        SupRegion::RegionA => model::region_membership(model, u) == Ok(Region::A),
        SupRegion::Box { .. } => true,
    }
}

pub fn sup_jacobian_norm(model: &CompetitionModel, region: &SupRegion) -> Result<f64> {
    Ok(sup_jacobian_norm_with(model, region, &SupOptions::default())?.value)
}

/// Dense grid search followed by coordinate-descent refinement.
pub fn sup_jacobian_norm_with(model: &CompetitionModel, region: &SupRegion, opts: &SupOptions) -> Result<SupResult> {
    let n = model.species();
    let (lo, hi) = region_box(model, region)?;
    let objective = |u: &[f64]| match opts.norm {
        MatrixNorm::Frobenius => model.jacobian_frobenius_sq(u).map(f64::sqrt),
        MatrixNorm::Spectral => model.jacobian_norm(u, MatrixNorm::Spectral),
    };
    let mut per_axis = opts.points_per_axis.max(2);
    while (per_axis as f64).powi(n as i32) > opts.max_points as f64 && per_axis > 2 {
        per_axis -= 1;
    }
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if hi[i] == lo[i] {
                vec![lo[i]]
            } else {
                (0..per_axis)
                    .map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut u = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    'grid: loop {
        for i in 0..n {
            u[i] = axes[i][idx[i]];
        }
        if contains(model, region, &u, &lo, &hi) {
            let v = objective(&u)?;
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, u.clone()));
            }
        }
        for i in 0..n {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                continue 'grid;
            }
            idx[i] = 0;
        }
        break;
    }
    let (mut value, mut point) = best.ok_or_else(|| invalid("no grid point falls inside the region"))?;
    let mut step: Vec<f64> = (0..n).map(|i| (hi[i] - lo[i]) / (per_axis - 1) as f64).collect();
    for _ in 0..opts.refine_iterations {
        let mut improved = false;
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                let mut trial = point.clone();
                trial[i] += sign * step[i];
                if contains(model, region, &trial, &lo, &hi) {
                    let v = objective(&trial)?;
                    if v > value {
                        value = v;
                        point = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok(SupResult { value, argmax: point })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChsReport {
    pub lambda1: f64,
    pub d_min: f64,
    pub m_sup: f64,
    pub argmax: Vec<f64>,
    pub sigma: f64,
    pub flat_guarantee: bool,
    pub threshold_d: f64,
    /// `‖f'(0)‖ = √n` and the corresponding threshold `√n / λ₁`.
    pub origin_norm: f64,
    pub origin_threshold_d: f64,
    /// `σ > 0` exactly when `L < π √(d_min / M)`.
    pub critical_length: f64,
    /// For two species, `2^{-1/4} π min(dᵢ)`; this disagrees with
    /// `critical_length` except when `min(dᵢ) = 1`.
    pub printed_corollary_length: Option<f64>,
}

/// CHS margin on `(0, L)` with the region matching the species count.
pub fn chs_report(model: &CompetitionModel, length: f64) -> Result<ChsReport> {
    let region = match model.species() {
        2 => SupRegion::SigmaTwoSpecies,
        3 => SupRegion::RegionA,
        n => return Err(invalid(format!("no named region for {n} species; supply a box"))),
    };
    chs_report_with(model, length, &region, &SupOptions::default())
}

pub fn chs_report_with(
    model: &CompetitionModel,
    length: f64,
    region: &SupRegion,
    opts: &SupOptions,
) -> Result<ChsReport> {
    let lambda1 = pde::neumann_eigenvalue(length, 1)?;
    let sup = sup_jacobian_norm_with(model, region, opts)?;
    let d_min = model.diffusion().iter().copied().fold(f64::INFINITY, f64::min);
    let sigma = lambda1 * d_min - sup.value;
    let origin_norm = (model.species() as f64).sqrt();
    Ok(ChsReport {
        lambda1,
        d_min,
        m_sup: sup.value,
        argmax: sup.argmax,
        sigma,
        flat_guarantee: sigma > 0.0,
        threshold_d: sup.value / lambda1,
        origin_norm,
        origin_threshold_d: origin_norm / lambda1,
        critical_length: PI * (d_min / sup.value).sqrt(),
        printed_corollary_length: (model.species() == 2).then(|| 2.0_f64.powf(-0.25) * PI * d_min),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub amplitude: f64,
    pub points: usize,
}

pub fn default_decay_window(t_end: f64) -> (f64, f64) {
    (t_end / 10.0, t_end / 2.0)
}

/// Least-squares fit of `log ‖∇U‖` against `t` over the records in the window.
pub fn decay_fit(trajectory: &PdeTrajectory, window: (f64, f64)) -> Result<DecayFit> {
    decay_fit_series(&trajectory.record_times, &trajectory.grad_norms, window)
}

pub fn decay_fit_series(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (t_a, t_b) = window;
    if !(t_b > t_a) {
        return Err(invalid(format!("empty decay window [{t_a}, {t_b}]")));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_a - 1e-12 && **t <= t_b + 1e-12)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 10 {
        return Err(invalid(format!(
            "decay fit needs at least 10 samples in the window, found {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 1e-14)) {
        return Err(invalid(format!(
            "gradient norm {v:e} at t = {t} is at the round-off floor"
        )));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        rate: -slope,
        amplitude: (my - slope * mt).exp(),
        points: pts.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub score: f64,
    pub period: Option<f64>,
}

pub const PERIODIC_SCORE: f64 = 0.9;
pub const MIN_PERIODICITY_SAMPLES: usize = 200;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() as f64;
    let ma = a.iter().sum::<f64>() / k;
    let mb = b.iter().sum::<f64>() / k;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Correlation between the trace and its lagged copy, for lags up to half
/// the samples; the score is the first peak after the correlation turns
/// negative. Uniform sampling with step `dt` is assumed.
pub fn periodicity_score(values: &[f64], dt: f64) -> Result<Periodicity> {
    let n = values.len();
    if n < MIN_PERIODICITY_SAMPLES {
        return Err(invalid(format!(
            "periodicity needs at least {MIN_PERIODICITY_SAMPLES} samples, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let none = Periodicity {
        score: 0.0,
        period: None,
    };
    if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
        return Ok(none);
    }
    let max_lag = n / 2;
    let r: Vec<f64> = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                pearson(&values[..n - k], &values[k..])
            }
        })
        .collect();
    let Some(neg) = r.iter().position(|v| *v < 0.0) else {
        return Ok(none);
    };
    for k in neg.max(1)..max_lag {
        if r[k] >= r[k - 1] && r[k] >= r[k + 1] && r[k] > 0.0 {
            let denom = r[k - 1] - 2.0 * r[k] + r[k + 1];
            let shift = if denom < 0.0 {
                0.5 * (r[k - 1] - r[k + 1]) / denom
            } else {
                0.0
            };
            return Ok(Periodicity {
                score: r[k].clamp(0.0, 1.0),
                period: Some((k as f64 + shift) * dt),
            });
        }
    }
    Ok(none)
}

/// Periodicity of the part of a sampled trace inside `[t_a, t_b]`.
pub fn periodicity_in_window(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<Periodicity> {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.0 - 1e-12 && times[i] <= window.1 + 1e-12)
        .collect();
    if idx.len() < 2 {
        return Err(invalid("window contains fewer than two samples"));
    }
    let dt = (times[*idx.last().expect("nonempty")] - times[idx[0]]) / (idx.len() - 1) as f64;
    let vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    periodicity_score(&vals, dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "label")]
pub enum OmegaKind {
    ConstantEquilibrium(String),
    FlatPeriodic,
    HeterogeneousSteady,
    HeterogeneousPeriodic,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaEvidence {
    pub window: (f64, f64),
    pub flatness: f64,
    /// Lowest score over the traces inspected (averages when flat,
    /// probes otherwise); `None` when the window is too short.
    pub periodicity: Option<f64>,
    pub nearest_equilibrium: Option<String>,
    pub equilibrium_distance: Option<f64>,
    pub temporal_variation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaClassification {
    pub kind: OmegaKind,
    pub evidence: OmegaEvidence,
}

pub const FLAT_TOL: f64 = 1e-4;
pub const HETEROGENEOUS_TOL: f64 = 1e-2;

/// Classify the final quarter of a run of length at least 50.
pub fn classify_omega(trajectory: &PdeTrajectory, model: &CompetitionModel) -> Result<OmegaClassification> {
    let t_end = *trajectory.record_times.last().unwrap_or(&0.0);
    if t_end < 50.0 {
        return Err(invalid(format!("classification needs t_end >= 50, got {t_end}")));
    }
    let window = (0.75 * t_end, t_end);
    let recs = trajectory.record_window(window.0, window.1);
    let times = &trajectory.record_times[recs.clone()];
    let flat = trajectory.flatness[recs.clone()].iter().copied().fold(0.0, f64::max);
    let n = model.species();

    let matched = model::equilibria(model).ok().and_then(|set| {
        let (e, _) = set.nearest(trajectory.averages[recs.end - 1].as_slice())?;
        let d = trajectory.averages[recs.clone()]
            .iter()
            .map(|a| a.iter().zip(&e.point).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        Some((e.label.clone(), d))
    });

    let score_of = |series: Vec<f64>| -> Option<f64> {
        if series.len() < MIN_PERIODICITY_SAMPLES {
            return None;
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        periodicity_score(&series, dt).ok().map(|p| p.score)
    };
    let min_score =
        |all: Vec<Option<f64>>| -> Option<f64> { all.into_iter().try_fold(1.0_f64, |m, s| s.map(|s| m.min(s))) };
    let periodicity = if flat < FLAT_TOL {
        min_score(
            (0..n)
                .map(|i| score_of(trajectory.averages[recs.clone()].iter().map(|a| a[i]).collect()))
                .collect(),
        )
    } else {
        let probes = trajectory.probe_positions.len();
        min_score(
            (0..n)
                .flat_map(|i| (0..probes).map(move |p| (i, p)))
                .map(|(i, p)| score_of(trajectory.probes[recs.clone()].iter().map(|r| r[i][p]).collect()))
                .collect(),
        )
    };

    let snaps: Vec<&pde::Field> = trajectory
        .times
        .iter()
        .zip(&trajectory.fields)
        .filter(|(t, _)| **t >= window.0 - 1e-12)
        .map(|(_, f)| f)
        .collect();
    let last = trajectory.final_field();
    let temporal_variation = snaps
        .iter()
        .map(|f| {
            f.values
                .iter()
                .flatten()
                .zip(last.values.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    let periodic = periodicity.is_some_and(|s| s > PERIODIC_SCORE);
    let kind = match (&matched, flat) {
        (Some((label, d)), f) if f < FLAT_TOL && *d < 1e-6 => OmegaKind::ConstantEquilibrium(label.clone()),
        (_, f) if f < FLAT_TOL && periodic => OmegaKind::FlatPeriodic,
        (_, f) if f >= HETEROGENEOUS_TOL && temporal_variation < 1e-6 => OmegaKind::HeterogeneousSteady,
        (_, f) if f >= HETEROGENEOUS_TOL && periodic => OmegaKind::HeterogeneousPeriodic,
        _ => OmegaKind::Undetermined,
    };
    Ok(OmegaClassification {
        kind,
        evidence: OmegaEvidence {
            window,
            flatness: flat,
            periodicity,
            nearest_equilibrium: matched.as_ref().map(|m| m.0.clone()),
            equilibrium_distance: matched.map(|m| m.1),
            temporal_variation,
        },
    })
}
