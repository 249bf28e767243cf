//! Domain values shared by every module: signature matrices, Hamiltonian
//! fields, GBDT triples and residual reports, plus the structural checks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{c, eye, fro, is_finite, min_hermitian_eigenvalue, r};
use crate::{json, CMat, GbdtError, Result};

/// Default tolerance for the material identity `AS - SA* = iΠJΠ*`.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Hermitian involution `J = J* = J⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix(CMat);

impl SignatureMatrix {
    pub fn new(j: CMat) -> Result<Self> {
        if j.nrows() != j.ncols() {
            return Err(GbdtError::Dimension("signature matrix must be square".into()));
        }
        let n = j.nrows();
        let herm = fro(&(&j - j.adjoint()));
        let invol = fro(&(&j * &j - eye(n)));
        if herm > 1e-14 || invol > 1e-14 {
            return Err(GbdtError::InvalidInput(format!(
                "not a signature matrix: |J - J*| = {herm:.3e}, |J^2 - I| = {invol:.3e}"
            )));
        }
        Ok(Self(j))
    }

    /// `J = [[0, 1], [1, 0]]`, the signature of the rank-one base system.
    pub fn off_diagonal() -> Self {
        Self(CMat::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)]))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    ConstantRankOne,
    Tabulated,
    Callback,
}

type FieldFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

#[derive(Clone)]
enum FieldRepr {
    RankOne { beta: CMat, value: CMat },
    Tabulated { x: Vec<f64>, values: Vec<CMat> },
    Callback(FieldFn),
}

/// `H(x)` on `[0, l]`: an `m × m` Hermitian matrix function.
#[derive(Clone)]
pub struct HamiltonianField {
    m: usize,
    l: f64,
    repr: FieldRepr,
}

impl fmt::Debug for HamiltonianField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianField").field("m", &self.m).field("l", &self.l).field("kind", &self.kind()).finish()
    }
}

impl HamiltonianField {
    /// The base Hamiltonian `H = β*β` with `β = [1  i]`.
    pub fn base(l: f64) -> Self {
        Self::rank_one(CMat::from_row_slice(1, 2, &[r(1.0), c(0.0, 1.0)]), l).expect("1x2 row vector")
    }

    /// Constant `H = β*β` for a row vector `β`.
    pub fn rank_one(beta: CMat, l: f64) -> Result<Self> {
        if beta.nrows() != 1 {
            return Err(GbdtError::Dimension("beta must be a row vector".into()));
        }
        let value = beta.adjoint() * &beta;
        Ok(Self { m: beta.ncols(), l, repr: FieldRepr::RankOne { beta, value } })
    }

    /// Tabulated samples, linearly interpolated between nodes. The nodes
    /// must start at 0, be strictly increasing and end at `l`.
    pub fn tabulated(x: Vec<f64>, values: Vec<CMat>) -> Result<Self> {
        if x.len() < 2 || x.len() != values.len() {
            return Err(GbdtError::InvalidInput(
                "tabulated field needs at least two nodes and one matrix per node".into(),
            ));
        }
        if x[0] != 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GbdtError::InvalidInput("tabulated nodes must start at 0 and increase strictly".into()));
        }
        let m = values[0].nrows();
        for v in &values {
            if v.shape() != (m, m) {
                return Err(GbdtError::Dimension("tabulated values must all be m x m".into()));
            }
            if fro(&(v - v.adjoint())) > 1e-12 {
                return Err(GbdtError::InvalidInput("tabulated H is not Hermitian".into()));
            }
        }
        let l = *x.last().unwrap();
        Ok(Self { m, l, repr: FieldRepr::Tabulated { x, values } })
    }

    pub fn callback<F>(m: usize, l: f64, f: F) -> Self
    where
        F: Fn(f64) -> CMat + Send + Sync + 'static,
    {
        Self { m, l, repr: FieldRepr::Callback(Arc::new(f)) }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn kind(&self) -> HamiltonianKind {
        match self.repr {
            FieldRepr::RankOne { .. } => HamiltonianKind::ConstantRankOne,
            FieldRepr::Tabulated { .. } => HamiltonianKind::Tabulated,
            FieldRepr::Callback(_) => HamiltonianKind::Callback,
        }
    }

    /// `β` for a constant rank-one field.
    pub fn rank_one_factor(&self) -> Option<&CMat> {
        match &self.repr {
            FieldRepr::RankOne { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> CMat {
        match &self.repr {
            FieldRepr::RankOne { value, .. } => value.clone(),
            FieldRepr::Tabulated { x: nodes, values } => interpolate(nodes, values, x),
            FieldRepr::Callback(f) => f(x),
        }
    }

    pub fn check_hermitian(&self, grid: &[f64], tol: f64) -> ResidualReport {
        let res = grid.iter().map(|&x| {
            let h = self.eval(x);
            fro(&(&h - h.adjoint()))
        });
        ResidualReport::new("hamiltonian_hermitian", grid.to_vec(), res.collect(), tol)
    }

    /// Residual is `max(0, -λ_min(H))` at each sample.
    pub fn check_positive(&self, grid: &[f64], tol: f64) -> ResidualReport {
        let res = grid.iter().map(|&x| (-min_hermitian_eigenvalue(&self.eval(x))).max(0.0));
        ResidualReport::new("hamiltonian_positive", grid.to_vec(), res.collect(), tol)
    }
}

fn interpolate(nodes: &[f64], values: &[CMat], x: f64) -> CMat {
    if x <= nodes[0] {
        return values[0].clone();
    }
    let last = nodes.len() - 1;
    if x >= nodes[last] {
        return values[last].clone();
    }
    let k = nodes.partition_point(|&t| t <= x) - 1;
    let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    &values[k] * r(1.0 - t) + &values[k + 1] * r(t)
}

/// The GBDT parameter triple `(A, S, Π)` at a position `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtTriple {
    #[serde(rename = "A", with = "json::matrix")]
    pub a: CMat,
    #[serde(rename = "S", with = "json::matrix")]
    pub s: CMat,
    #[serde(rename = "Pi", with = "json::matrix")]
    pub pi: CMat,
    pub x: f64,
}

impl GbdtTriple {
    /// Accepts the triple only if the dimensions conform, `S = S*` and the
    /// material identity holds to `IDENTITY_TOL`.
    pub fn new(a: CMat, s: CMat, pi: CMat, x: f64, j: &SignatureMatrix) -> Result<Self> {
        let t = Self::unverified(a, s, pi, x)?;
        let herm = fro(&(&t.s - t.s.adjoint()));
        if herm > 1e-10 {
            return Err(GbdtError::InvalidInput(format!("S is not Hermitian ({herm:.3e})")));
        }
        let report = check_material_identity(&t, j, IDENTITY_TOL)?;
        if !report.pass {
            return Err(GbdtError::InvalidInput(format!("material identity fails: residual {:.3e}", report.max)));
        }
        Ok(t)
    }

    /// Dimension checks only; for candidates that are about to be diagnosed.
    pub fn unverified(a: CMat, s: CMat, pi: CMat, x: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || s.shape() != (n, n) || pi.nrows() != n {
            return Err(GbdtError::Dimension(format!("A {:?}, S {:?}, Pi {:?}", a.shape(), s.shape(), pi.shape())));
        }
        Ok(Self { a, s, pi, x })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.pi.ncols()
    }

    /// `AS - SA* - iΠJΠ*`.
    pub fn identity_defect(&self, j: &SignatureMatrix) -> CMat {
        &self.a * &self.s - &self.s * self.a.adjoint() - &self.pi * j.matrix() * self.pi.adjoint() * c(0.0, 1.0)
    }
}

/// Named residuals over a grid with a pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub grid: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(name: impl Into<String>, grid: Vec<f64>, residuals: Vec<f64>, tolerance: f64) -> Self {
        let max = residuals.iter().copied().fold(
            0.0,
            |acc: f64, v| {
                if v.is_nan() || acc.is_nan() {
                    f64::NAN
                } else {
                    acc.max(v)
                }
            },
        );
        let pass = max < tolerance;
        Self { name: name.into(), grid, residuals, max, tolerance, pass }
    }

    pub fn single(name: impl Into<String>, at: f64, residual: f64, tolerance: f64) -> Self {
        Self::new(name, vec![at], vec![residual], tolerance)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StructureKind<'a> {
    Hermitian,
    JUnitary(&'a SignatureMatrix),
    Positive,
}

/// Residuals: `‖M - M*‖`, `‖M*JM - J‖` or `max(0, -λ_min((M + M*)/2))`.
pub fn check_structure(m: &CMat, kind: StructureKind<'_>, tol: f64) -> Result<ResidualReport> {
    if m.nrows() != m.ncols() {
        return Err(GbdtError::Dimension(format!("expected a square matrix, got {:?}", m.shape())));
    }
    let (name, residual) = match kind {
        StructureKind::Hermitian => ("hermitian", fro(&(m - m.adjoint()))),
        StructureKind::JUnitary(j) => {
            if j.dim() != m.nrows() {
                return Err(GbdtError::Dimension(format!("J is {}x{}, matrix is {:?}", j.dim(), j.dim(), m.shape())));
            }
            ("j_unitary", fro(&(m.adjoint() * j.matrix() * m - j.matrix())))
        }
        StructureKind::Positive => {
            let residual = if is_finite(m) { (-min_hermitian_eigenvalue(m)).max(0.0) } else { f64::NAN };
            ("positive", residual)
        }
    };
    Ok(ResidualReport::single(name, 0.0, residual, tol))
}

/// Frobenius residual of `AS - SA* - iΠJΠ*`.
pub fn check_material_identity(t: &GbdtTriple, j: &SignatureMatrix, tol: f64) -> Result<ResidualReport> {
    if t.m() != j.dim() {
        return Err(GbdtError::Dimension(format!("Pi has {} columns but J is {}x{}", t.m(), j.dim(), j.dim())));
    }
    Ok(ResidualReport::single("material_identity", t.x, fro(&t.identity_defect(j)), tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;

    fn j() -> SignatureMatrix {
        SignatureMatrix::off_diagonal()
    }

    fn triple(a: f64, a_im: f64, pi: [f64; 2]) -> GbdtTriple {
        GbdtTriple::unverified(
            CMat::from_element(1, 1, c(a, a_im)),
            CMat::from_element(1, 1, r(1.0)),
            CMat::from_row_slice(1, 2, &[r(pi[0]), r(pi[1])]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_is_j_unitary() {
        let rep = check_structure(&eye(2), StructureKind::JUnitary(&j()), 1e-8).unwrap();
        assert_eq!(rep.max, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn j_is_hermitian_and_involutive() {
        let jm = j().matrix().clone();
        let rep = check_structure(&jm, StructureKind::Hermitian, 1e-8).unwrap();
        assert_eq!(rep.max, 0.0);
        assert_eq!(fro(&(&jm * &jm - eye(2))), 0.0);
    }

    #[test]
    fn skew_matrix_fails_hermitian_check() {
        let m = CMat::from_row_slice(2, 2, &[r(0.0), r(1.0), r(-1.0), r(0.0)]);
        let rep = check_structure(&m, StructureKind::Hermitian, 1e-8).unwrap();
        // Frobenius norm of [[0, 2], [-2, 0]]; its spectral norm would be 2.
        assert!((rep.max - 8f64.sqrt()).abs() < 1e-15);
        assert!(!rep.pass);
    }

    #[test]
    fn positive_check_reports_negative_eigenvalue() {
        let m = CMat::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(-0.5)]);
        let rep = check_structure(&m, StructureKind::Positive, 1e-12).unwrap();
        assert!((rep.max - 0.5).abs() < 1e-15);
        assert!(!rep.pass);
    }

    #[test]
    fn structure_checks_reject_bad_shapes() {
        let m = CMat::zeros(2, 3);
        assert!(matches!(check_structure(&m, StructureKind::Hermitian, 1.0), Err(GbdtError::Dimension(_))));
        let j3 = SignatureMatrix::new(eye(3)).unwrap();
        assert!(check_structure(&eye(2), StructureKind::JUnitary(&j3), 1.0).is_err());
    }

    #[test]
    fn structure_check_is_deterministic() {
        let m = CMat::from_row_slice(2, 2, &[c(0.3, 0.1), I, c(0.2, -0.7), r(1.5)]);
        let a = check_structure(&m, StructureKind::JUnitary(&j()), 1e-8).unwrap();
        let b = check_structure(&m, StructureKind::JUnitary(&j()), 1e-8).unwrap();
        assert_eq!(a.max.to_bits(), b.max.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn material_identity_examples() {
        let jj = j();
        assert_eq!(check_material_identity(&triple(2.0, 0.0, [0.0, 0.0]), &jj, 1e-8).unwrap().max, 0.0);
        assert_eq!(check_material_identity(&triple(0.0, 1.0, [1.0, 1.0]), &jj, 1e-8).unwrap().max, 0.0);
        let bad = check_material_identity(&triple(0.0, 1.0, [1.0, 0.0]), &jj, 1e-8).unwrap();
        assert_eq!(bad.max, 2.0);
        assert!(!bad.pass);
    }

    #[test]
    fn constructor_enforces_identity() {
        let t = triple(0.0, 1.0, [1.0, 0.0]);
        assert!(GbdtTriple::new(t.a, t.s, t.pi, 0.0, &j()).is_err());
        let t = triple(0.0, 1.0, [1.0, 1.0]);
        assert!(GbdtTriple::new(t.a, t.s, t.pi, 0.0, &j()).is_ok());
    }

    #[test]
    fn material_identity_dimension_error() {
        let t = triple(0.0, 1.0, [1.0, 1.0]);
        let j3 = SignatureMatrix::new(eye(3)).unwrap();
        assert!(matches!(check_material_identity(&t, &j3, 1e-8), Err(GbdtError::Dimension(_))));
    }

    #[test]
    fn signature_rejects_non_involution() {
        assert!(SignatureMatrix::new(eye(2) * r(2.0)).is_err());
    }

    #[test]
    fn base_field_is_hermitian_positive_rank_one() {
        let h = HamiltonianField::base(1.0);
        let grid: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        assert!(h.check_hermitian(&grid, 1e-12).pass);
        assert!(h.check_positive(&grid, 1e-12).pass);
        assert_eq!(h.kind(), HamiltonianKind::ConstantRankOne);
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let h0 = CMat::zeros(2, 2);
        let h1 = eye(2);
        let h = HamiltonianField::tabulated(vec![0.0, 1.0], vec![h0, h1]).unwrap();
        assert!(fro(&(h.eval(0.25) - eye(2) * r(0.25))) < 1e-15);
        assert_eq!(h.l(), 1.0);
    }

    #[test]
    fn report_max_is_max_of_residuals() {
        let rep = ResidualReport::new("x", vec![0.0, 1.0, 2.0], vec![0.1, 0.3, 0.2], 0.25);
        assert_eq!(rep.max, 0.3);
        assert!(!rep.pass);
    }
}
