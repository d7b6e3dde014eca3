//! JSON run configuration. Unknown keys are rejected everywhere.

use crate::CliError;
use rdlab_core::model::MatrixNorm;
use rdlab_core::model::{self, CompetitionModel, ModelFile};
use rdlab_core::pde::{Boundary, Domain1D, Field, Geometry};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub domain: Option<DomainSpec>,
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    pub timemap: Option<TimemapSpec>,
    pub shoot: Option<ShootSpec>,
    pub floquet: Option<FloquetSpec>,
    pub chs: Option<ChsSpec>,
    pub out: Option<PathBuf>,
}

/// Exactly one of `inline`, `file`, `preset`; `d` overrides diffusion.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub inline: Option<ModelFile>,
    pub file: Option<PathBuf>,
    /// `"paper"` (reference matrix) or `"may-leonard"`.
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub geometry: Geometry,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_bc")]
    pub bc: Boundary,
}

fn default_nodes() -> usize {
    512
}

fn default_bc() -> Boundary {
    Boundary::Neumann
}

/// Exactly one field set.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// `"paper-phi"`.
    pub preset: Option<String>,
    pub constant: Option<Vec<f64>>,
    /// Ascending-power coefficients per species.
    pub polynomial: Option<Vec<Vec<f64>>>,
    /// Equilibrium label such as `"P_1"`.
    pub equilibrium: Option<String>,
    pub point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    #[serde(default = "default_probe_interval")]
    pub probe_interval: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    /// Output spacing for ODE trajectories.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
}

fn default_t_end() -> f64 {
    100.0
}
fn default_tol() -> f64 {
    1e-7
}
fn default_snapshots() -> usize {
    200
}
fn default_probes() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}
fn default_probe_interval() -> f64 {
    0.05
}
fn default_max_time() -> f64 {
    2000.0
}
fn default_sample_dt() -> f64 {
    0.1
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: default_t_end(),
            tol: default_tol(),
            snapshots: default_snapshots(),
            probes: default_probes(),
            probe_interval: default_probe_interval(),
            max_time: default_max_time(),
            sample_dt: default_sample_dt(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimemapSpec {
    pub d: f64,
    #[serde(default = "default_mu_min")]
    pub mu_min: f64,
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    pub length_target: Option<f64>,
}

fn default_mu_min() -> f64 {
    1e-3
}
fn default_mu_max() -> f64 {
    0.999
}
fn default_points() -> usize {
    100
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootSpec {
    pub c: f64,
    pub d: f64,
    pub radius: f64,
    #[serde(default = "default_m")]
    pub m: u32,
}

fn default_m() -> u32 {
    2
}

/// Mode eigenvalues either listed or generated as `(kπ/L)²`, `k = 1..k_max`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSpec {
    pub lambdas: Option<Vec<f64>>,
    pub length: Option<f64>,
    pub k_max: Option<u32>,
    /// Also compare direct and factorised modal multipliers with `D = dI`.
    pub scalar_d: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChsSpec {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default)]
    pub norm: MatrixNorm,
    pub box_lower: Option<Vec<f64>>,
    pub box_upper: Option<Vec<f64>>,
}

fn default_length() -> f64 {
    1.0
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    // relative model paths resolve against the config file
    if let Some(ModelSpec { file: Some(f), .. }) = cfg.model.as_mut() {
        if f.is_relative() {
            if let Some(dir) = path.parent() {
                *f = dir.join(&*f);
            }
        }
    }
    cfg.solver.validate()?;
    Ok(cfg)
}

impl SolverSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("t_end", self.t_end),
            ("tol", self.tol),
            ("probe_interval", self.probe_interval),
            ("max_time", self.max_time),
            ("sample_dt", self.sample_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(CliError::Config(format!("solver.dt must be positive, got {dt}")));
            }
        }
        if self.tol > 1e-2 {
            return Err(CliError::Config(format!(
                "solver.tol = {} is too loose (max 1e-2)",
                self.tol
            )));
        }
        if self.snapshots == 0 {
            return Err(CliError::Config("solver.snapshots must be at least 1".into()));
        }
        Ok(())
    }
}

fn one_of(count: usize, what: &str) -> Result<(), CliError> {
    if count != 1 {
        return Err(CliError::Config(format!(
            "{what}: specify exactly one source, found {count}"
        )));
    }
    Ok(())
}

impl ModelSpec {
    pub fn paper() -> Self {
        Self {
            preset: Some("paper".into()),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<CompetitionModel, CliError> {
        let count = [self.inline.is_some(), self.file.is_some(), self.preset.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        one_of(count, "model")?;
        let base = if let Some(inline) = &self.inline {
            CompetitionModel::try_from(inline.clone())?
        } else if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read model file {}: {e}", path.display())))?;
            CompetitionModel::from_json(&text)?
        } else {
            match self.preset.as_deref() {
                Some("paper") => model::reference_model([1e-3, 2e-3, 0.5e-3]),
                Some("may-leonard") => {
                    CompetitionModel::may_leonard(self.alpha.unwrap_or(0.5), self.beta.unwrap_or(1.5), [1.0; 3])?
                }
                other => {
                    return Err(CliError::Config(format!(
                        "unknown model preset {other:?} (expected \"paper\" or \"may-leonard\")"
                    )))
                }
            }
        };
        if (self.alpha.is_some() || self.beta.is_some()) && self.preset.as_deref() != Some("may-leonard") {
            return Err(CliError::Config(
                "alpha/beta only apply to the may-leonard preset".into(),
            ));
        }
        match &self.d {
            Some(d) => Ok(base.with_diffusion(d.clone())?),
            None => Ok(base),
        }
    }
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain1D, CliError> {
        Ok(Domain1D::new(self.geometry, self.nodes, self.bc)?)
    }
}

fn polynomial(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `6x²(1-x)³`, `x⁴(1-x)²`, `2x³(1-x)²` as ascending coefficients.
pub fn paper_phi_coefficients() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 6.0, -18.0, 18.0, -6.0],
        vec![0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 1.0],
        vec![0.0, 0.0, 0.0, 2.0, -4.0, 2.0],
    ]
}

impl InitialSpec {
    pub fn paper_phi() -> Self {
        Self {
            preset: Some("paper-phi".into()),
            ..Self::default()
        }
    }

    fn count(&self) -> usize {
        [
            self.preset.is_some(),
            self.constant.is_some(),
            self.polynomial.is_some(),
            self.equilibrium.is_some(),
            self.point.is_some(),
        ]
        .iter()
        .filter(|x| **x)
        .count()
    }

    fn equilibrium_point(&self, model: &CompetitionModel, label: &str) -> Result<Vec<f64>, CliError> {
        let set = model::equilibria(model)?;
        set.get(label)
            .map(|e| e.point.clone())
            .ok_or_else(|| CliError::Config(format!("model has no feasible equilibrium {label}")))
    }

    pub fn field(&self, model: &CompetitionModel, domain: Domain1D) -> Result<Field, CliError> {
        one_of(self.count(), "initial")?;
        let n = model.species();
        let coeffs = if let Some(p) = &self.preset {
            if p != "paper-phi" {
                return Err(CliError::Config(format!("unknown initial preset {p:?}")));
            }
            if n != 3 {
                return Err(CliError::Config("paper-phi needs a three-species model".into()));
            }
            paper_phi_coefficients()
        } else if let Some(p) = &self.polynomial {
            p.clone()
        } else {
            let point = match (&self.constant, &self.point, &self.equilibrium) {
                (Some(c), _, _) | (_, Some(c), _) => c.clone(),
                (_, _, Some(label)) => self.equilibrium_point(model, label)?,
                _ => unreachable!("one source checked above"),
            };
            if point.len() != n {
                return Err(CliError::Config(format!(
                    "initial state needs {n} values, got {}",
                    point.len()
                )));
            }
            return Ok(Field::constant(domain, &point));
        };
        if coeffs.len() != n {
            return Err(CliError::Config(format!(
                "initial polynomial needs {n} species, got {}",
                coeffs.len()
            )));
        }
        Ok(Field::from_fn(domain, n, |i, x| polynomial(&coeffs[i], x)))
    }

    /// ODE initial point; spatial profiles contribute their average over
    /// the unit interval (or the configured domain when given).
    pub fn point(&self, model: &CompetitionModel, domain: Option<Domain1D>) -> Result<Vec<f64>, CliError> {
        one_of(self.count(), "initial")?;
        let n = model.species();
        let point = match (&self.constant, &self.point, &self.equilibrium) {
            (Some(c), _, _) | (_, Some(c), _) => c.clone(),
            (_, _, Some(label)) => self.equilibrium_point(model, label)?,
            _ => {
                let domain = match domain {
                    Some(d) => d,
                    None => Domain1D::interval(1.0, 4095, Boundary::Neumann)?,
                };
                rdlab_core::pde::spatial_average(&self.field(model, domain)?)
            }
        };
        if point.len() != n {
            return Err(CliError::Config(format!(
                "initial state needs {n} values, got {}",
                point.len()
            )));
        }
        Ok(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"solver": {"dt": 0.1, "foo": 1}}"#).is_err());
    }

    #[test]
    fn paper_phi_coefficients_match_closed_form() {
        let c = paper_phi_coefficients();
        for x in [0.1, 0.37, 0.9] {
            assert!((polynomial(&c[0], x) - 6.0 * x * x * (1.0 - x).powi(3)).abs() < 1e-14);
            assert!((polynomial(&c[1], x) - x.powi(4) * (1.0 - x).powi(2)).abs() < 1e-14);
            assert!((polynomial(&c[2], x) - 2.0 * x.powi(3) * (1.0 - x).powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn paper_phi_average_is_the_reference_point() {
        let m = ModelSpec::paper().build().unwrap();
        let p = InitialSpec::paper_phi().point(&m, None).unwrap();
        for (got, want) in p.iter().zip([0.1, 0.0095238, 0.0333333]) {
            assert!((got - want).abs() < 1e-5);
        }
    }

    #[test]
    fn model_sources_are_exclusive() {
        let spec = ModelSpec {
            preset: Some("paper".into()),
            file: Some("x.json".into()),
            ..ModelSpec::default()
        };
        assert!(matches!(spec.build(), Err(CliError::Config(_))));
        assert!(matches!(ModelSpec::default().build(), Err(CliError::Config(_))));
    }
}
