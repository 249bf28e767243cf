//! Recovery of GBDT data from a scalar rational inner function
//!
//! ```text
//! u(s) = c² (1 + i θ* S₀⁻¹ (sI - α)⁻¹ θ),   α S₀ - S₀ α* = i θ θ*,   c = (1 - i)/√2
//! ```
//!
//! Splitting `θ = c θ₁ + c̄ θ₂` gives `A(0) = α - i c θ θ₂* S₀⁻¹`,
//! `S(0) = S₀`, `Π(0) = [θ₁ θ₂] K*`, and from there the explicit family
//! produces `H̃` and `R̃` whose row `r(s)` returns `u` through
//!
//! ```text
//! u(s) = (r̄₁(1/s) + r̄₂(1/s)) / (r̄₁(1/s) - r̄₂(1/s)).
//! ```

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::TripleSource;
use crate::explicit::{r_row_from_data, BaseSystem, ExplicitFamily, ExplicitFamilyParams};
use crate::linalg::{
    c, condition_number, eigen_decomposition, eye, fro, guarded_inverse, r, solve_sylvester, CONDITION_LIMIT, I,
};
use crate::types::{GbdtTriple, HamiltonianField, SignatureMatrix};
use crate::{json, CMat, CVec, GbdtError, Result};

/// `c = (1 - i)/√2`, so `c² = -i = u(∞)`.
pub fn c_const() -> Complex64 {
    c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)
}

/// `K = [[1, -1], [1, 1]] / √2`, unitary with `K j K* = J`.
pub fn k_matrix() -> CMat {
    CMat::from_row_slice(2, 2, &[r(1.0), r(-1.0), r(1.0), r(1.0)]) * r(FRAC_1_SQRT_2)
}

/// `j = diag(1, -1)`.
pub fn j_diag() -> CMat {
    CMat::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(-1.0)])
}

fn as_column(v: &[Complex64]) -> CMat {
    CMat::from_column_slice(v.len(), 1, v)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRealization {
    #[serde(with = "json::matrix")]
    alpha: CMat,
    #[serde(rename = "S0", with = "json::matrix")]
    s0: CMat,
    #[serde(with = "json::complex_vec")]
    theta: Vec<Complex64>,
}

impl TryFrom<RawRealization> for InnerRealization {
    type Error = GbdtError;

    fn try_from(raw: RawRealization) -> Result<Self> {
        InnerRealization::new(raw.alpha, raw.s0, raw.theta)
    }
}

/// Minimal realization `(α, S₀, θ)` of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRealization")]
pub struct InnerRealization {
    #[serde(with = "json::matrix")]
    pub alpha: CMat,
    #[serde(rename = "S0", with = "json::matrix")]
    pub s0: CMat,
    #[serde(with = "json::complex_vec")]
    pub theta: Vec<Complex64>,
}

/// Real sample points used for the `|u| = 1` check.
pub fn unimodularity_samples() -> Vec<f64> {
    (0..20).map(|k| -5.0 + 10.0 * k as f64 / 19.0).collect()
}

impl InnerRealization {
    /// Validates the identity, `S₀ = S₀*` invertible, `α` invertible, and
    /// `|u| = 1` on the sample points.
    pub fn new(alpha: CMat, s0: CMat, theta: Vec<Complex64>) -> Result<Self> {
        let n = theta.len();
        if n == 0 || alpha.shape() != (n, n) || s0.shape() != (n, n) {
            return Err(GbdtError::Dimension(format!(
                "alpha {:?}, S0 {:?}, theta length {n}",
                alpha.shape(),
                s0.shape()
            )));
        }
        let real = Self { alpha, s0, theta };
        let scale = 1.0 + fro(&real.alpha) * fro(&real.s0) + real.theta_norm_sqr();
        if fro(&(&real.s0 - real.s0.adjoint())) > 1e-10 * scale {
            return Err(GbdtError::DegenerateRealization("S0 is not Hermitian".into()));
        }
        if !(condition_number(&real.s0) < CONDITION_LIMIT) {
            return Err(GbdtError::DegenerateRealization("S0 is singular".into()));
        }
        if !(condition_number(&real.alpha) < CONDITION_LIMIT) {
            return Err(GbdtError::DegenerateRealization("alpha is singular".into()));
        }
        let residual = real.identity_residual();
        if residual > 1e-10 * scale {
            return Err(GbdtError::DegenerateRealization(format!(
                "alpha S0 - S0 alpha* - i theta theta* has norm {residual:.3e}"
            )));
        }
        for s in unimodularity_samples() {
            let dev = (real.u(s)?.norm() - 1.0).abs();
            if dev > 1e-8 {
                return Err(GbdtError::DegenerateRealization(format!("|u({s})| deviates from 1 by {dev:.3e}")));
            }
        }
        Ok(real)
    }

    /// Solves the identity for `S₀` given `α` and `θ`.
    pub fn from_alpha_theta(alpha: CMat, theta: Vec<Complex64>) -> Result<Self> {
        let t = as_column(&theta);
        let rhs = &t * t.adjoint() * I;
        let s0 = solve_sylvester(&alpha, &alpha.adjoint(), &rhs)
            .map_err(|e| GbdtError::DegenerateRealization(e.to_string()))?;
        let s0 = (&s0 + s0.adjoint()) * r(0.5);
        Self::new(alpha, s0, theta)
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    fn theta_norm_sqr(&self) -> f64 {
        self.theta.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn theta_column(&self) -> CMat {
        as_column(&self.theta)
    }

    pub fn identity_residual(&self) -> f64 {
        let t = self.theta_column();
        fro(&(&self.alpha * &self.s0 - &self.s0 * self.alpha.adjoint() - &t * t.adjoint() * I))
    }

    /// `u(z) = c² (1 + i θ* S₀⁻¹ (zI - α)⁻¹ θ)`.
    pub fn u_at(&self, z: Complex64) -> Result<Complex64> {
        let n = self.n();
        let t = self.theta_column();
        let s_inv = guarded_inverse(&self.s0).map_err(|_| GbdtError::DegenerateRealization("S0 is singular".into()))?;
        let res = guarded_inverse(&(eye(n) * z - &self.alpha)).map_err(|_| GbdtError::Pole { s: z.re })?;
        let q = (t.adjoint() * s_inv * res * &t)[(0, 0)];
        Ok(c_const() * c_const() * (r(1.0) + I * q))
    }

    pub fn u(&self, s: f64) -> Result<Complex64> {
        self.u_at(r(s))
    }

    pub fn u_at_infinity(&self) -> Complex64 {
        c_const() * c_const()
    }
}

/// `n = 1` realization with pole `α`: `S₀ = |θ|² / (2 Im α)`, so that
/// `u(s) = c² (s - ᾱ)/(s - α)`.
pub fn realization_from_pole(alpha: Complex64, theta: Complex64) -> Result<InnerRealization> {
    if alpha.im == 0.0 {
        return Err(GbdtError::DegenerateRealization("pole must be off the real axis".into()));
    }
    if theta.norm() == 0.0 {
        return Err(GbdtError::DegenerateRealization("theta must be non-zero".into()));
    }
    let s0 = theta.norm_sqr() / (2.0 * alpha.im);
    InnerRealization::new(CMat::from_element(1, 1, alpha), CMat::from_element(1, 1, r(s0)), vec![theta])
}

/// The `n = 1` shorthand `{"pole", "theta"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleShorthand {
    #[serde(with = "json::complex")]
    pub pole: Complex64,
    #[serde(with = "json::complex")]
    pub theta: Complex64,
}

/// Either a full realization or the pole shorthand.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RealizationInput {
    Full(InnerRealization),
    Pole(PoleShorthand),
}

impl RealizationInput {
    pub fn build(&self) -> Result<InnerRealization> {
        match self {
            RealizationInput::Full(real) => Ok(real.clone()),
            RealizationInput::Pole(p) => realization_from_pole(p.pole, p.theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Theta2Choice {
    /// `θ₂ = 0`, then `θ₂ = ε θ` with `ε` halved from `1e-2`.
    Auto,
    Given(Vec<Complex64>),
}

/// `θ = c θ₁ + c̄ θ₂` and the resulting `A(0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSplit {
    #[serde(with = "json::complex_vec")]
    pub theta1: Vec<Complex64>,
    #[serde(with = "json::complex_vec")]
    pub theta2: Vec<Complex64>,
    #[serde(rename = "A0", with = "json::matrix")]
    pub a0: CMat,
    /// Scale of `θ₂` relative to `θ` (0 for the unperturbed split).
    pub epsilon: f64,
    pub halvings: usize,
}

impl ThetaSplit {
    /// `Λ = [θ₁ θ₂]`.
    pub fn lambda(&self) -> CMat {
        let n = self.theta1.len();
        CMat::from_fn(n, 2, |i, k| if k == 0 { self.theta1[i] } else { self.theta2[i] })
    }

    pub fn pi0(&self) -> CMat {
        self.lambda() * k_matrix().adjoint()
    }
}

const MAX_HALVINGS: usize = 50;

fn split_with(real: &InnerRealization, theta2: Vec<Complex64>, epsilon: f64, halvings: usize) -> Result<ThetaSplit> {
    let cc = c_const();
    let s_inv = guarded_inverse(&real.s0).map_err(|_| GbdtError::DegenerateRealization("S0 is singular".into()))?;
    let theta1: Vec<Complex64> = real.theta.iter().zip(&theta2).map(|(&t, &t2)| (t - cc.conj() * t2) / cc).collect();
    let a0 = &real.alpha - real.theta_column() * as_column(&theta2).adjoint() * s_inv * (I * cc);
    Ok(ThetaSplit { theta1, theta2, a0, epsilon, halvings })
}

pub fn split_theta(real: &InnerRealization, choice: &Theta2Choice) -> Result<ThetaSplit> {
    let n = real.n();
    match choice {
        Theta2Choice::Given(t2) => {
            if t2.len() != n {
                return Err(GbdtError::Dimension(format!("theta2 has length {}, expected {n}", t2.len())));
            }
            let split = split_with(real, t2.clone(), f64::NAN, 0)?;
            if condition_number(&split.a0) < CONDITION_LIMIT {
                Ok(split)
            } else {
                Err(GbdtError::SplitFailure { attempts: 0 })
            }
        }
        Theta2Choice::Auto => {
            let split = split_with(real, vec![r(0.0); n], 0.0, 0)?;
            if condition_number(&split.a0) < CONDITION_LIMIT {
                return Ok(split);
            }
            let mut eps = 1e-2;
            for k in 0..MAX_HALVINGS {
                let t2 = real.theta.iter().map(|&t| t * eps).collect();
                let split = split_with(real, t2, eps, k)?;
                if condition_number(&split.a0) < CONDITION_LIMIT {
                    return Ok(split);
                }
                eps *= 0.5;
            }
            Err(GbdtError::SplitFailure { attempts: MAX_HALVINGS })
        }
    }
}

/// GBDT data at `x = 0` with `B = A(0)⁻¹` and `g = θ`.
#[derive(Debug, Clone, Serialize)]
pub struct GbdtData {
    pub split: ThetaSplit,
    pub triple: GbdtTriple,
    #[serde(rename = "B", with = "json::matrix")]
    pub b: CMat,
    #[serde(with = "json::complex_vec")]
    pub g: Vec<Complex64>,
    pub identity_residual: f64,
}

impl GbdtData {
    pub fn g_vector(&self) -> CVec {
        CVec::from_vec(self.g.clone())
    }
}

pub fn build_gbdt_data(real: &InnerRealization, choice: &Theta2Choice) -> Result<GbdtData> {
    let split = split_theta(real, choice)?;
    let j = SignatureMatrix::off_diagonal();
    let triple = GbdtTriple::new(split.a0.clone(), real.s0.clone(), split.pi0(), 0.0, &j)?;
    let identity_residual = fro(&triple.identity_defect(&j));
    let b = guarded_inverse(&triple.a).map_err(|_| GbdtError::SplitFailure { attempts: split.halvings })?;
    Ok(GbdtData { split, triple, b, g: real.theta.clone(), identity_residual })
}

/// `u` from a row `r = [r₁ r₂]` evaluated at `1/s`.
pub fn u_from_row(row: &CMat, s: f64) -> Result<Complex64> {
    let (r1, r2) = (row[(0, 0)].conj(), row[(0, 1)].conj());
    let den = r1 - r2;
    if den.norm() < 1e-12 {
        return Err(GbdtError::Pole { s });
    }
    Ok((r1 + r2) / den)
}

/// `r(∞) = β + i g* B* S(0)⁻¹ Π(0)`.
fn r_row_at_infinity(t0: &GbdtTriple, b: &CMat, g: &CVec) -> Result<CMat> {
    let s_inv = guarded_inverse(&t0.s).map_err(|cond| GbdtError::SingularS { x: 0.0, cond })?;
    let gc = CMat::from_column_slice(g.len(), 1, g.as_slice());
    Ok(BaseSystem::new().beta + gc.adjoint() * b.adjoint() * s_inv * &t0.pi * I)
}

/// `u(s)` from the GBDT data through the row `r(1/s)`; `s = 0` takes the
/// limit `r(∞)`.
pub fn reconstruct_u(t0: &GbdtTriple, j: &SignatureMatrix, b: &CMat, g: &CVec, s: f64) -> Result<Complex64> {
    if j.dim() != 2 || t0.m() != 2 {
        return Err(GbdtError::Dimension("reconstruction needs m = 2".into()));
    }
    let row = if s == 0.0 { r_row_at_infinity(t0, b, g)? } else { r_row_from_data(t0, b, g, 1.0 / s)? };
    u_from_row(&row, s)
}

/// `W(s) = I - i j Λ* S(0)⁻¹ (A(0) - sI)⁻¹ Λ`.
pub fn w_matrix(real: &InnerRealization, split: &ThetaSplit, s: f64) -> Result<CMat> {
    let n = real.n();
    let lam = split.lambda();
    let s_inv = guarded_inverse(&real.s0).map_err(|_| GbdtError::DegenerateRealization("S0 is singular".into()))?;
    let res = guarded_inverse(&(&split.a0 - eye(n) * r(s))).map_err(|_| GbdtError::Pole { s })?;
    Ok(eye(2) - j_diag() * lam.adjoint() * s_inv * res * lam * I)
}

/// `|(c W₂₁ + c̄ W₂₂)⁻¹ - c (1 - i c θ₂* S₀⁻¹ (α - sI)⁻¹ θ)|`.
pub fn inverse_realization_residual(real: &InnerRealization, split: &ThetaSplit, s: f64) -> Result<f64> {
    let cc = c_const();
    let w = w_matrix(real, split, s)?;
    let lhs = (cc * w[(1, 0)] + cc.conj() * w[(1, 1)]).inv();
    let n = real.n();
    let s_inv = guarded_inverse(&real.s0).map_err(|_| GbdtError::DegenerateRealization("S0 is singular".into()))?;
    let res = guarded_inverse(&(&real.alpha - eye(n) * r(s))).map_err(|_| GbdtError::Pole { s })?;
    let q = (as_column(&split.theta2).adjoint() * s_inv * res * real.theta_column())[(0, 0)];
    let rhs = cc * (r(1.0) - I * cc * q);
    Ok((lhs - rhs).norm())
}

/// Recovered `H̃` and `R̃`, computed in an eigenbasis of `B` where the
/// closed-form family applies.
#[derive(Debug, Clone, Serialize)]
pub struct Recovery {
    pub split: ThetaSplit,
    pub triple0: GbdtTriple,
    #[serde(rename = "B", with = "json::matrix")]
    pub b: CMat,
    #[serde(with = "json::complex_vec")]
    pub g: Vec<Complex64>,
    #[serde(rename = "U", with = "json::matrix")]
    pub u: CMat,
    pub l: f64,
    /// Eigenvectors of `B` (columns).
    #[serde(with = "json::matrix")]
    pub basis: CMat,
    pub family_params: ExplicitFamilyParams,
    #[serde(skip)]
    family: Option<ExplicitFamily>,
}

impl Recovery {
    pub fn family(&self) -> &ExplicitFamily {
        self.family.as_ref().expect("constructed with a family")
    }

    pub fn hamiltonian_at(&self, x: f64) -> Result<CMat> {
        self.family().hamiltonian_at(x)
    }

    pub fn field(&self) -> HamiltonianField {
        self.family().transformed_field()
    }

    pub fn jump(&self, s: f64) -> Result<CMat> {
        self.family().jump(s)
    }

    /// `u(s)` read back from the row of the recovered jump.
    pub fn u_from_jump(&self, s: f64) -> Result<Complex64> {
        let fam = self.family();
        let t0 = fam.triple_at(0.0)?;
        let g = fam.params.g_vector();
        reconstruct_u(&t0, fam.signature(), &fam.params.b_matrix(), &g, s)
    }

    /// `u(s)` from the original (non-diagonal) data.
    pub fn u_from_data(&self, s: f64) -> Result<Complex64> {
        let g = CVec::from_vec(self.g.clone());
        reconstruct_u(&self.triple0, &SignatureMatrix::off_diagonal(), &self.b, &g, s)
    }
}

/// Number of grid points for the `det S(x) ≠ 0` scan.
pub const INTERVAL_SCAN_POINTS: usize = 1001;

pub fn recover_hamiltonian_and_jump(split: &ThetaSplit, real: &InnerRealization, u: &CMat, l: f64) -> Result<Recovery> {
    if !(l > 0.0) {
        return Err(GbdtError::InvalidInput("l must be positive".into()));
    }
    let j = SignatureMatrix::off_diagonal();
    let triple0 = GbdtTriple::new(split.a0.clone(), real.s0.clone(), split.pi0(), 0.0, &j)?;
    let b = guarded_inverse(&split.a0).map_err(|_| GbdtError::SplitFailure { attempts: split.halvings })?;
    let (d, v) = eigen_decomposition(&b)?;
    for &dk in &d {
        if dk.im.abs() <= 1e-12 * dk.norm().max(1.0) && dk.re >= 0.0 && dk.re <= l {
            return Err(GbdtError::Interval { requested: l, largest: dk.re });
        }
    }
    let v_inv = guarded_inverse(&v).map_err(|_| GbdtError::DegenerateRealization("B is not diagonalizable".into()))?;
    let g = CVec::from_vec(real.theta.clone());
    let g_eig = &v_inv * &g;
    let pb = &v_inv * &triple0.pi * BaseSystem::new().beta.adjoint();
    let h_eig: Vec<Complex64> = (0..d.len()).map(|k| pb[(k, 0)] * 0.5 - I * g_eig[k] * d[k].ln()).collect();
    let family_params =
        ExplicitFamilyParams { n: d.len(), b: d, g: g_eig.iter().copied().collect(), h: h_eig, u: u.clone(), l };
    let family = ExplicitFamily::new(family_params.clone())?;
    let grid: Vec<f64> = (0..INTERVAL_SCAN_POINTS).map(|k| l * k as f64 / (INTERVAL_SCAN_POINTS - 1) as f64).collect();
    family.check_interval(&grid)?;
    Ok(Recovery {
        split: split.clone(),
        triple0,
        b,
        g: real.theta.clone(),
        u: u.clone(),
        l,
        basis: v,
        family_params,
        family: Some(family),
    })
}
