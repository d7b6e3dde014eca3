//! Competition model `f_i(u) = u_i (1 - Σ_j a_ij u_j)`, its Jacobian,
//! equilibria, invariant regions and the algebraic conditions on the
//! three-species interaction matrix.

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Largest species count for which all `2^n` supports are enumerated.
pub const MAX_ENUMERATED_SPECIES: usize = 8;
/// Eigenvalues with `|Re λ|` below this are treated as non-hyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;
/// Residual bound every returned equilibrium satisfies.
pub const EQUILIBRIUM_RESIDUAL_TOL: f64 = 1e-10;
const CLASSIFY_RESIDUAL_TOL: f64 = 1e-8;
const REGION_TIE_TOL: f64 = 1e-12;

/// Interaction matrix `a` (row-major, all entries positive) and diffusion
/// coefficients `d` (all positive) for `n` competing species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct CompetitionModel {
    n: usize,
    a: Vec<f64>,
    d: Vec<f64>,
}

/// On-disk form of a model: `{"n": 3, "a": [[...], ...], "d": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub a: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

impl TryFrom<ModelFile> for CompetitionModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.a.len() != file.n {
            return Err(invalid(format!(
                "model declares n = {} but has {} matrix rows",
                file.n,
                file.a.len()
            )));
        }
        Self::new(file.a, file.d)
    }
}

impl From<CompetitionModel> for ModelFile {
    fn from(m: CompetitionModel) -> Self {
        ModelFile {
            n: m.n,
            a: m.a.chunks(m.n).map(|r| r.to_vec()).collect(),
            d: m.d,
        }
    }
}

impl CompetitionModel {
    pub fn new(a: Vec<Vec<f64>>, d: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|row| row.len() != n) {
            return Err(invalid("interaction matrix must be square"));
        }
        let flat: Vec<f64> = a.into_iter().flatten().collect();
        Self::from_row_major(n, flat, d)
    }

    pub fn from_row_major(n: usize, a: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("model needs at least one species"));
        }
        if a.len() != n * n {
            return Err(invalid(format!(
                "interaction matrix has {} entries, expected {}",
                a.len(),
                n * n
            )));
        }
        if d.len() != n {
            return Err(invalid(format!(
                "diffusion vector has {} entries, expected {n}",
                d.len()
            )));
        }
        if let Some((k, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(invalid(format!(
                "interaction coefficient a[{}][{}] = {v} is not positive",
                k / n,
                k % n
            )));
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(invalid(format!("diffusion coefficient d[{i}] = {v} is not positive")));
        }
        Ok(Self { n, a, d })
    }

    /// Normalised two-species model `u(1 - u - b v)`, `v(1 - c u - v)`.
    pub fn two_species(b: f64, c: f64, d1: f64, d2: f64) -> Result<Self> {
        Self::from_row_major(2, vec![1.0, b, c, 1.0], vec![d1, d2])
    }

    /// Cyclic three-species system with unit self-interaction,
    /// rows `[1, α, β]`, `[β, 1, α]`, `[α, β, 1]`.
    pub fn may_leonard(alpha: f64, beta: f64, d: [f64; 3]) -> Result<Self> {
        Self::new(
            vec![vec![1.0, alpha, beta], vec![beta, 1.0, alpha], vec![alpha, beta, 1.0]],
            d.to_vec(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("model file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn species(&self) -> usize {
        self.n
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.d
    }

    pub fn interaction_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }

    pub fn with_diffusion(&self, d: Vec<f64>) -> Result<Self> {
        Self::from_row_major(self.n, self.a.clone(), d)
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n {
            return Err(invalid(format!(
                "state has {} components, model has {} species",
                u.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `Σ_j a_ij u_j` for each row `i`.
    pub fn row_sums(&self, u: &[f64]) -> Vec<f64> {
        self.a
            .chunks(self.n)
            .map(|row| row.iter().zip(u).map(|(a, x)| a * x).sum())
            .collect()
    }

    pub fn reaction(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = vec![0.0; self.n];
        self.reaction_into(u, &mut out);
        Ok(out)
    }

    /// Unchecked variant for inner loops; lengths must equal `n`.
    #[inline]
    pub fn reaction_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.a[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(u).map(|(a, x)| a * x).sum();
            out[i] = u[i] * (1.0 - s);
        }
    }

    /// Max-norm of the reaction term.
    pub fn residual(&self, u: &[f64]) -> Result<f64> {
        Ok(self.reaction(u)?.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(u)?;
        let mut entries = vec![0.0; self.n * self.n];
        self.jacobian_into(u, &mut entries);
        Ok(DMatrix::from_row_slice(self.n, self.n, &entries))
    }

    /// Row-major Jacobian entries: `-a_ij u_i` off the diagonal,
    /// `1 - Σ_j a_ij u_j - a_ii u_i` on it.
    #[inline]
    pub fn jacobian_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.a[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(u).map(|(a, x)| a * x).sum();
            for j in 0..n {
                out[i * n + j] = -row[j] * u[i];
            }
            out[i * n + i] += 1.0 - s;
        }
    }

    pub fn jacobian_frobenius_sq(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let mut entries = vec![0.0; self.n * self.n];
        self.jacobian_into(u, &mut entries);
        Ok(entries.iter().map(|x| x * x).sum())
    }

    pub fn jacobian_norm(&self, u: &[f64], norm: MatrixNorm) -> Result<f64> {
        match norm {
            MatrixNorm::Frobenius => Ok(self.jacobian_frobenius_sq(u)?.sqrt()),
            MatrixNorm::Spectral => Ok(linalg::spectral_norm(&self.jacobian(u)?)),
        }
    }
}

/// Matrix norm used for `sup ‖f'(u)‖`; Frobenius is the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixNorm {
    #[default]
    Frobenius,
    Spectral,
}

/// Closed-form expansion of `‖f'(u, v)‖²_F` for the normalised
/// two-species model.
pub fn two_species_frobenius_sq_expansion(b: f64, c: f64, u: f64, v: f64) -> f64 {
    (b * b + c * c + 4.0) * (u * u + v * v) + 4.0 * (b + c) * u * v - 4.0 * (u + v) - 2.0 * (c * u + b * v) + 2.0
}

// ---------------------------------------------------------------------------
// Equilibria

/// Set of species with positive density, as a bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Support(pub u32);

impl Support {
    pub fn from_members(members: &[usize]) -> Self {
        Support(members.iter().fold(0, |m, i| m | (1 << i)))
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn members(&self) -> Vec<usize> {
        (0..32).filter(|i| self.contains(*i)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// `P_0`, `P_u`, `P_vw`, ... for up to three species, `P_1` for the
    /// full support; `P_{1,3}` style (1-based) beyond three species.
    pub fn label(&self, n: usize) -> String {
        const LETTERS: [char; 3] = ['u', 'v', 'w'];
        if self.is_empty() {
            return "P_0".into();
        }
        if self.len() == n && n >= 2 {
            return "P_1".into();
        }
        let members = self.members();
        if n <= 3 {
            let s: String = members.iter().map(|&i| LETTERS[i]).collect();
            format!("P_{s}")
        } else {
            let s: Vec<String> = members.iter().map(|i| (i + 1).to_string()).collect();
            format!("P_{{{}}}", s.join(","))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    Source,
    Sink,
    Saddle,
    NonHyperbolic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    pub support: Support,
    pub label: String,
    pub eigenvalues: Vec<C64>,
    pub class: StabilityClass,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupportStatus {
    Feasible(Equilibrium),
    /// Support system solvable but some coordinate on the support is `≤ 0`.
    Infeasible {
        solution: Vec<f64>,
    },
    /// Support-restricted interaction submatrix is singular.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportCandidate {
    pub support: Support,
    pub label: String,
    pub status: SupportStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSet {
    pub candidates: Vec<SupportCandidate>,
}

impl EquilibriumSet {
    pub fn feasible(&self) -> impl Iterator<Item = &Equilibrium> {
        self.candidates.iter().filter_map(|c| match &c.status {
            SupportStatus::Feasible(e) => Some(e),
            _ => None,
        })
    }

    pub fn degenerate(&self) -> impl Iterator<Item = &SupportCandidate> {
        self.candidates
            .iter()
            .filter(|c| matches!(c.status, SupportStatus::Degenerate))
    }

    pub fn get(&self, label: &str) -> Option<&Equilibrium> {
        self.feasible().find(|e| e.label == label)
    }

    /// Feasible equilibrium closest (Euclidean) to `u`.
    pub fn nearest(&self, u: &[f64]) -> Option<(&Equilibrium, f64)> {
        self.feasible()
            .map(|e| {
                let d = e.point.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                (e, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Enumerate every support `S` and solve `Σ_{j∈S} a_ij u_j = 1` for `i ∈ S`.
pub fn equilibria(model: &CompetitionModel) -> Result<EquilibriumSet> {
    let n = model.species();
    if n > MAX_ENUMERATED_SPECIES {
        return Err(invalid(format!(
            "equilibrium enumeration supports at most {MAX_ENUMERATED_SPECIES} species, got {n}"
        )));
    }
    let mut candidates = Vec::with_capacity(1 << n);
    for mask in 0..(1u32 << n) {
        let support = Support(mask);
        let label = support.label(n);
        let status = match solve_support(model, support) {
            None => SupportStatus::Degenerate,
            Some(point) => {
                let positive = support.members().iter().all(|&i| point[i] > 0.0);
                if positive {
                    let residual = model.residual(&point)?;
                    if residual > EQUILIBRIUM_RESIDUAL_TOL {
                        return Err(Error::NumericalFailure(format!(
                            "equilibrium {label} residual {residual:e} exceeds tolerance"
                        )));
                    }
                    let (eigenvalues, class) = classify(model, &point)?;
                    SupportStatus::Feasible(Equilibrium {
                        point,
                        support,
                        label: label.clone(),
                        eigenvalues,
                        class,
                    })
                } else {
                    SupportStatus::Infeasible { solution: point }
                }
            }
        };
        candidates.push(SupportCandidate { support, label, status });
    }
    Ok(EquilibriumSet { candidates })
}

/// Solution of the support system scattered into a full-length vector,
/// or `None` when the submatrix is numerically singular.
fn solve_support(model: &CompetitionModel, support: Support) -> Option<Vec<f64>> {
    let n = model.species();
    let members = support.members();
    let k = members.len();
    let mut point = vec![0.0; n];
    if k == 0 {
        return Some(point);
    }
    let sub = DMatrix::from_fn(k, k, |r, c| model.a(members[r], members[c]));
    let rhs = DVector::from_element(k, 1.0);
    let scale = sub.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let lu = sub.clone().lu();
    let u = lu.u();
    let min_pivot = (0..k).fold(f64::INFINITY, |m, i| m.min(u[(i, i)].abs()));
    if !(min_pivot > 1e-12 * scale) {
        return None;
    }
    let mut x = lu.solve(&rhs)?;
    // one step of iterative refinement
    let r = &rhs - &sub * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    for (slot, &i) in members.iter().enumerate() {
        point[i] = x[slot];
    }
    Some(point)
}

/// Eigenvalues of the Jacobian at an equilibrium and the resulting class.
pub fn classify(model: &CompetitionModel, point: &[f64]) -> Result<(Vec<C64>, StabilityClass)> {
    let residual = model.residual(point)?;
    if residual > CLASSIFY_RESIDUAL_TOL {
        return Err(invalid(format!("point is not an equilibrium (residual {residual:e})")));
    }
    let ev = linalg::eigenvalues(&model.jacobian(point)?)?;
    Ok((ev.clone(), stability_class(&ev)))
}

pub fn stability_class(ev: &[C64]) -> StabilityClass {
    if ev.iter().any(|l| l.re.abs() < HYPERBOLICITY_TOL) {
        StabilityClass::NonHyperbolic
    } else if ev.iter().all(|l| l.re < 0.0) {
        StabilityClass::Sink
    } else if ev.iter().all(|l| l.re > 0.0) {
        StabilityClass::Source
    } else {
        StabilityClass::Saddle
    }
}

// ---------------------------------------------------------------------------
// Three-species conditions

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionCase {
    PeriodicAttractorCandidate,
    P1Stable,
    PZeroDegenerate,
    P1OutsideCone,
    NotCovered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub w: f64,
    pub w_u: f64,
    pub w_v: f64,
    pub w_w: f64,
    /// Interior candidate `P_1 = (W_u, W_v, W_w) / W`.
    pub interior: [f64; 3],
    pub p: f64,
    pub ineq9_holds: bool,
    pub case: ConditionCase,
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Determinants, interior point, trace-type quantity `p` and the
/// boundary-repulsion inequalities for a three-species model.
pub fn condition_report(model: &CompetitionModel) -> Result<ConditionReport> {
    if model.species() != 3 {
        return Err(invalid(format!(
            "condition report needs 3 species, model has {}",
            model.species()
        )));
    }
    let a = |i, j| model.a(i, j);
    let m = [
        [a(0, 0), a(0, 1), a(0, 2)],
        [a(1, 0), a(1, 1), a(1, 2)],
        [a(2, 0), a(2, 1), a(2, 2)],
    ];
    let with_ones = |col: usize| {
        let mut r = m;
        for row in r.iter_mut() {
            row[col] = 1.0;
        }
        det3(r)
    };
    let w = det3(m);
    if w.abs() < 1e-12 {
        return Err(Error::DegenerateModel(format!(
            "interaction matrix is singular (det = {w:e})"
        )));
    }
    let (w_u, w_v, w_w) = (with_ones(0), with_ones(1), with_ones(2));
    let interior = [w_u / w, w_v / w, w_w / w];
    let p = m[0][0] * interior[0] + m[1][1] * interior[1] + m[2][2] * interior[2] - 1.0;
    let ineq9_holds =
        m[1][0].min(m[2][0]) < m[0][0] && m[0][1].min(m[2][1]) < m[1][1] && m[0][2].min(m[1][2]) < m[2][2];
    let dets = [w, w_u, w_v, w_w];
    let case = if dets.iter().all(|x| *x > 0.0) {
        if p.abs() < 1e-10 {
            ConditionCase::PZeroDegenerate
        } else if p > 0.0 {
            ConditionCase::P1Stable
        } else if ineq9_holds {
            ConditionCase::PeriodicAttractorCandidate
        } else {
            ConditionCase::NotCovered
        }
    } else if dets.iter().all(|x| *x < 0.0) {
        ConditionCase::NotCovered
    } else {
        ConditionCase::P1OutsideCone
    };
    Ok(ConditionReport {
        w,
        w_u,
        w_v,
        w_w,
        interior,
        p,
        ineq9_holds,
        case,
    })
}

/// Position relative to the planes `Σ_j a_ij u_j = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// Above every plane.
    DPlus,
    /// Between the planes.
    A,
    /// Below every plane.
    DMinus,
}

pub fn region_membership(model: &CompetitionModel, u: &[f64]) -> Result<Region> {
    model.check_len(u)?;
    let sums = model.row_sums(u);
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if lo > 1.0 + REGION_TIE_TOL {
        Region::DPlus
    } else if hi < 1.0 - REGION_TIE_TOL {
        Region::DMinus
    } else {
        Region::A
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoSpeciesCase {
    /// `b, c < 1`: every nontrivial solution tends to the coexistence state.
    Coexistence,
    /// `b < 1 < c`: the first species wins.
    UWins,
    /// `c < 1 < b`: the second species wins.
    VWins,
    /// `b, c > 1`: the outcome depends on the initial data.
    Bistable,
}

pub fn two_species_case(model: &CompetitionModel) -> Result<TwoSpeciesCase> {
    if model.species() != 2 {
        return Err(invalid("two-species classification needs n = 2"));
    }
    if (model.a(0, 0) - 1.0).abs() > 1e-12 || (model.a(1, 1) - 1.0).abs() > 1e-12 {
        return Err(invalid(
            "two-species classification expects unit self-interaction (a11 = a22 = 1)",
        ));
    }
    let (b, c) = (model.a(0, 1), model.a(1, 0));
    if (b - 1.0).abs() < 1e-10 || (c - 1.0).abs() < 1e-10 {
        return Err(Error::DegenerateModel(format!(
            "competition coefficient equal to 1 (b = {b}, c = {c})"
        )));
    }
    Ok(match (b < 1.0, c < 1.0) {
        (true, true) => TwoSpeciesCase::Coexistence,
        (true, false) => TwoSpeciesCase::UWins,
        (false, true) => TwoSpeciesCase::VWins,
        (false, false) => TwoSpeciesCase::Bistable,
    })
}

/// Interaction matrix of the three-species numerical experiment.
pub const REFERENCE_MATRIX: [[f64; 3]; 3] = [[2.0, 1.1, 3.1], [3.1, 2.0, 0.9], [0.95, 2.9, 2.0]];

/// Reference matrix with the given diffusion coefficients.
pub fn reference_model(d: [f64; 3]) -> CompetitionModel {
    CompetitionModel::new(REFERENCE_MATRIX.iter().map(|r| r.to_vec()).collect(), d.to_vec())
        .expect("reference matrix is positive")
}
