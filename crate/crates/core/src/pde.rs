//! Method of lines for `U_t = D ΔU + f(U)` on an interval or a radial
//! disk: Strang splitting of Crank–Nicolson diffusion and RK4 reaction.

use crate::error::{invalid, Error, Result};
use crate::linalg::{ThomasFactor, Tridiagonal};
use crate::model::CompetitionModel;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MIN_NODES: usize = 8;
pub const NEGATIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Geometry {
    Interval {
        length: f64,
    },
    /// Radially symmetric functions on the ball of radius `radius` in `ℝ^m`.
    RadialDisk {
        radius: f64,
        m: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

/// Grid of `nodes` interior points plus the two end points,
/// spacing `h = extent / (nodes + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain1D {
    geometry: Geometry,
    nodes: usize,
    bc: Boundary,
}

impl Domain1D {
    pub fn new(geometry: Geometry, nodes: usize, bc: Boundary) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(invalid(format!(
                "need at least {MIN_NODES} interior nodes, got {nodes}"
            )));
        }
        match geometry {
            Geometry::Interval { length } if !(length > 0.0) => {
                return Err(invalid(format!("interval length must be positive, got {length}")))
            }
            Geometry::RadialDisk { radius, m } if !(radius > 0.0) || m < 2 => {
                return Err(invalid(format!(
                    "radial disk needs radius > 0 and m >= 2 (got {radius}, {m})"
                )))
            }
            _ => {}
        }
        Ok(Self { geometry, nodes, bc })
    }

    pub fn interval(length: f64, nodes: usize, bc: Boundary) -> Result<Self> {
        Self::new(Geometry::Interval { length }, nodes, bc)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn boundary(&self) -> Boundary {
        self.bc
    }

    pub fn interior_nodes(&self) -> usize {
        self.nodes
    }

    /// Total node count including the end points.
    pub fn len(&self) -> usize {
        self.nodes + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent(&self) -> f64 {
        match self.geometry {
            Geometry::Interval { length } => length,
            Geometry::RadialDisk { radius, .. } => radius,
        }
    }

    pub fn h(&self) -> f64 {
        self.extent() / (self.nodes + 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.h();
        let mut g: Vec<f64> = (0..self.len()).map(|j| j as f64 * h).collect();
        g[self.len() - 1] = self.extent();
        g
    }

    fn radial_exponent(&self) -> Option<i32> {
        match self.geometry {
            Geometry::Interval { .. } => None,
            Geometry::RadialDisk { m, .. } => Some(m as i32 - 1),
        }
    }

    /// Trapezoid weights, times `r^{m-1}` on a disk; they sum to the
    /// (unnormalised) measure.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let last = self.len() - 1;
        let grid = self.grid();
        grid.iter()
            .enumerate()
            .map(|(j, x)| {
                let end = if j == 0 || j == last { 0.5 } else { 1.0 };
                let radial = self.radial_exponent().map_or(1.0, |e| x.powi(e));
                end * h * radial
            })
            .collect()
    }

    /// Tridiagonal discrete Laplacian over all nodes. Dirichlet end rows
    /// are zero so boundary values stay fixed.
    pub fn laplacian(&self) -> Tridiagonal {
        let n = self.len();
        let h2 = self.h() * self.h();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let grid = self.grid();
        for j in 1..n - 1 {
            let drift = match self.radial_exponent() {
                Some(e) => e as f64 / grid[j] * self.h() / 2.0,
                None => 0.0,
            };
            sub[j] = (1.0 - drift) / h2;
            diag[j] = -2.0 / h2;
            sup[j] = (1.0 + drift) / h2;
        }
        // r = 0 on a disk: Δu → m u''(0); on an interval: mirror ghost
        let left = match self.geometry {
            Geometry::RadialDisk { m, .. } => m as f64,
            Geometry::Interval { .. } => 1.0,
        };
        match (self.bc, self.geometry) {
            (Boundary::Dirichlet, Geometry::Interval { .. }) => {}
            _ => {
                diag[0] = -2.0 * left / h2;
                sup[0] = 2.0 * left / h2;
            }
        }
        if self.bc == Boundary::Neumann {
            diag[n - 1] = -2.0 / h2;
            sub[n - 1] = 2.0 / h2;
        }
        Tridiagonal::new(sub, diag, sup).expect("consistent lengths")
    }
}

pub fn laplacian_apply(domain: &Domain1D, row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != domain.len() {
        return Err(invalid(format!(
            "field row has {} values, grid has {}",
            row.len(),
            domain.len()
        )));
    }
    let mut out = vec![0.0; row.len()];
    domain.laplacian().apply(row, &mut out);
    Ok(out)
}

/// `(kπ/L)²`.
pub fn neumann_eigenvalue(length: f64, k: u32) -> Result<f64> {
    if !(length > 0.0) {
        return Err(invalid(format!("length must be positive, got {length}")));
    }
    Ok((k as f64 * PI / length).powi(2))
}

pub fn neumann_eigenfunction(length: f64, k: u32, x: f64) -> f64 {
    (k as f64 * PI * x / length).cos()
}

/// Densities of every species on the grid of `domain`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub domain: Domain1D,
    /// `values[i][j]`: species `i` at node `j`.
    pub values: Vec<Vec<f64>>,
}

impl Field {
    pub fn new(domain: Domain1D, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|r| r.len() != domain.len()) {
            return Err(invalid(format!("field rows must each have {} values", domain.len())));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn<F: Fn(usize, f64) -> f64>(domain: Domain1D, species: usize, f: F) -> Self {
        let grid = domain.grid();
        let values = (0..species).map(|i| grid.iter().map(|&x| f(i, x)).collect()).collect();
        Self { domain, values }
    }

    pub fn constant(domain: Domain1D, point: &[f64]) -> Self {
        Self::from_fn(domain, point.len(), |i, _| point[i])
    }

    pub fn species(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of every species at `x`.
    pub fn probe(&self, x: f64) -> Vec<f64> {
        let h = self.domain.h();
        let last = self.domain.len() - 1;
        let s = (x / h).clamp(0.0, last as f64);
        let j = (s.floor() as usize).min(last - 1);
        let w = s - j as f64;
        self.values
            .iter()
            .map(|row| (1.0 - w) * row[j] + w * row[j + 1])
            .collect()
    }
}

pub fn spatial_average(field: &Field) -> Vec<f64> {
    let w = field.domain.weights();
    let total: f64 = w.iter().sum();
    field
        .values
        .iter()
        .map(|row| row.iter().zip(&w).map(|(u, w)| u * w).sum::<f64>() / total)
        .collect()
}

/// `max_i (max_x u_i - min_x u_i)`.
pub fn flatness(field: &Field) -> f64 {
    field
        .values
        .iter()
        .map(|row| {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Discrete `‖∇U‖_{L²}` from forward differences on each cell, summed over
/// species; cells carry `r^{m-1}` at their midpoint on a disk.
pub fn grad_l2_norm(field: &Field) -> f64 {
    let h = field.domain.h();
    let grid = field.domain.grid();
    let exponent = field.domain.radial_exponent();
    let mut acc = 0.0;
    for row in &field.values {
        for j in 0..row.len() - 1 {
            let slope = (row[j + 1] - row[j]) / (grid[j + 1] - grid[j]);
            let radial = exponent.map_or(1.0, |e| (0.5 * (grid[j] + grid[j + 1])).powi(e));
            acc += h * radial * slope * slope;
        }
    }
    acc.sqrt()
}

/// `min(10⁻², 10 h²/(2 max dᵢ))`.
pub fn default_dt(model: &CompetitionModel, domain: &Domain1D) -> f64 {
    let dmax = model.diffusion().iter().copied().fold(0.0, f64::max);
    let h = domain.h();
    (10.0 * h * h / (2.0 * dmax)).min(1e-2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Number of stored field snapshots (besides the initial one).
    pub snapshots: usize,
    pub probe_positions: Vec<f64>,
    /// Spacing of probe, average, flatness and gradient records.
    pub probe_interval: f64,
    /// `false` solves the pure diffusion problem.
    pub reaction: bool,
}

impl EvolveOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            snapshots: 200,
            probe_positions: vec![0.1, 0.5, 0.9],
            probe_interval: 0.05,
            reaction: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PdeTrajectory {
    pub domain: Domain1D,
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub probe_positions: Vec<f64>,
    pub record_times: Vec<f64>,
    /// `probes[r][i][p]`: species `i` at probe `p` at record `r`.
    pub probes: Vec<Vec<Vec<f64>>>,
    pub averages: Vec<Vec<f64>>,
    pub flatness: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub min_value: f64,
    pub dt: f64,
}

impl PdeTrajectory {
    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("nonempty trajectory")
    }

    /// Time series of species `i` at probe `p`.
    pub fn probe_trace(&self, species: usize, probe: usize) -> Vec<f64> {
        self.probes.iter().map(|r| r[species][probe]).collect()
    }

    /// Record indices with `t_a ≤ t ≤ t_b`.
    pub fn record_window(&self, t_a: f64, t_b: f64) -> std::ops::Range<usize> {
        let lo = self.record_times.partition_point(|t| *t < t_a - 1e-12);
        let hi = self.record_times.partition_point(|t| *t <= t_b + 1e-12);
        lo..hi
    }
}

struct Splitter<'a> {
    model: &'a CompetitionModel,
    explicit: Vec<Tridiagonal>,
    implicit: Vec<ThomasFactor>,
    scratch: Vec<f64>,
    stages: [Vec<f64>; 5],
}

impl<'a> Splitter<'a> {
    fn new(model: &'a CompetitionModel, domain: &Domain1D, dt: f64) -> Result<Self> {
        let lap = domain.laplacian();
        let mut explicit = Vec::new();
        let mut implicit = Vec::new();
        for &d in model.diffusion() {
            // half step of length dt/2, trapezoidal in time
            let s = d * dt / 4.0;
            explicit.push(lap.shifted_identity(s));
            implicit.push(lap.shifted_identity(-s).factor()?);
        }
        let n = model.species();
        Ok(Self {
            model,
            explicit,
            implicit,
            scratch: vec![0.0; domain.len()],
            stages: Default::default(),
        }
        .with_stage_len(n))
    }

    fn with_stage_len(mut self, n: usize) -> Self {
        for s in self.stages.iter_mut() {
            *s = vec![0.0; n];
        }
        self
    }

    fn diffuse_half(&mut self, values: &mut [Vec<f64>]) {
        for (i, row) in values.iter_mut().enumerate() {
            self.explicit[i].apply(row, &mut self.scratch);
            self.implicit[i].solve_in_place(&mut self.scratch);
            row.copy_from_slice(&self.scratch);
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn react(&mut self, values: &mut [Vec<f64>], dt: f64) {
        let n = values.len();
        let nodes = values[0].len();
        let [u, k1, k2, k3, k4] = &mut self.stages;
        let mut tmp = vec![0.0; n];
        for j in 0..nodes {
            for i in 0..n {
                u[i] = values[i][j];
            }
            self.model.reaction_into(u, k1);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            self.model.reaction_into(&tmp, k2);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            self.model.reaction_into(&tmp, k3);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            self.model.reaction_into(&tmp, k4);
            for i in 0..n {
                values[i][j] = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

/// Strang splitting: half-step diffusion, full RK4 reaction step,
/// half-step diffusion. The step is shrunk so it divides `t_end`.
pub fn evolve(model: &CompetitionModel, phi: &Field, opts: &EvolveOptions) -> Result<PdeTrajectory> {
    let domain = phi.domain;
    if phi.species() != model.species() {
        return Err(invalid(format!(
            "initial field has {} species, model has {}",
            phi.species(),
            model.species()
        )));
    }
    if !(opts.t_end > 0.0) || !(opts.dt > 0.0) || !(opts.probe_interval > 0.0) {
        return Err(invalid("t_end, dt and probe_interval must be positive"));
    }
    if phi.min_value() < 0.0 {
        return Err(invalid("initial field must be nonnegative"));
    }
    if opts
        .probe_positions
        .iter()
        .any(|x| !(0.0..=domain.extent()).contains(x))
    {
        return Err(invalid("probe positions must lie inside the domain"));
    }
    if domain.boundary() == Boundary::Neumann {
        let h = domain.h();
        let worst = phi
            .values
            .iter()
            .map(|r| {
                let l = r.len();
                ((r[1] - r[0]) / h).abs().max(((r[l - 1] - r[l - 2]) / h).abs())
            })
            .fold(0.0, f64::max);
        if worst > 1e-2 {
            log::warn!("initial field has boundary slope {worst:.3e}; Neumann compatibility fails");
        }
    }
    let pinned: Vec<usize> = match (domain.boundary(), domain.geometry()) {
        (Boundary::Neumann, _) => vec![],
        (Boundary::Dirichlet, Geometry::Interval { .. }) => vec![0, domain.len() - 1],
        (Boundary::Dirichlet, Geometry::RadialDisk { .. }) => vec![domain.len() - 1],
    };
    let steps = (opts.t_end / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let record_stride = ((opts.probe_interval / dt).round() as usize).max(1);
    let snapshot_stride = (steps / opts.snapshots.max(1)).max(1);

    let mut split = Splitter::new(model, &domain, dt)?;
    let mut values = phi.values.clone();
    let pin = |values: &mut [Vec<f64>]| {
        for row in values.iter_mut() {
            for &j in &pinned {
                row[j] = 0.0;
            }
        }
    };
    let boundary_mass = pinned
        .iter()
        .map(|&j| values.iter().map(|r| r[j].abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if boundary_mass > 1e-12 {
        log::warn!("initial field is {boundary_mass:.3e} on a Dirichlet boundary; using 0");
    }
    pin(&mut values);
    let mut out = PdeTrajectory {
        domain,
        times: Vec::new(),
        fields: Vec::new(),
        probe_positions: opts.probe_positions.clone(),
        record_times: Vec::new(),
        probes: Vec::new(),
        averages: Vec::new(),
        flatness: Vec::new(),
        grad_norms: Vec::new(),
        min_value: phi.min_value(),
        dt,
    };
    let record = |out: &mut PdeTrajectory, field: &Field, t: f64| {
        out.record_times.push(t);
        let per_probe: Vec<Vec<f64>> = opts.probe_positions.iter().map(|&x| field.probe(x)).collect();
        out.probes.push(
            (0..field.species())
                .map(|i| per_probe.iter().map(|p| p[i]).collect())
                .collect(),
        );
        out.averages.push(spatial_average(field));
        out.flatness.push(flatness(field));
        out.grad_norms.push(grad_l2_norm(field));
    };
    let first = Field {
        domain,
        values: values.clone(),
    };
    record(&mut out, &first, 0.0);
    out.times.push(0.0);
    out.fields.push(first);

    for step in 1..=steps {
        split.diffuse_half(&mut values);
        if opts.reaction {
            split.react(&mut values, dt);
        }
        split.diffuse_half(&mut values);
        pin(&mut values);
        let t = if step == steps { opts.t_end } else { step as f64 * dt };
        let mut lo = f64::INFINITY;
        for row in &values {
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NumericalFailure(format!("non-finite value at t = {t}")));
                }
                lo = lo.min(v);
            }
        }
        out.min_value = out.min_value.min(lo);
        if lo < -NEGATIVITY_TOL {
            return Err(Error::InvariantViolation(format!(
                "field became negative ({lo:e}) at t = {t}"
            )));
        }
        let is_record = step % record_stride == 0 || step == steps;
        let is_snapshot = step % snapshot_stride == 0 || step == steps;
        if is_record || is_snapshot {
            let field = Field {
                domain,
                values: values.clone(),
            };
            if is_record {
                record(&mut out, &field, t);
            }
            if is_snapshot {
                out.times.push(t);
                out.fields.push(field);
            }
        }
    }
    Ok(out)
}
