//! Closed-form GBDT of the rank-one base system
//!
//! ```text
//! m = 2,  H = β*β,  β = [1  i],  J = [[0, 1], [1, 0]],  R = I + π J β*β
//! ```
//!
//! with diagonal `B = diag(b₁, …, b_n)`, `A(x) = (B - x I)⁻¹`. Along `x`
//! the two projections of `Π` are explicit:
//!
//! ```text
//! Π J β* = g,     Π β* = 2({i g_k ln(b_k - x)} + h)
//! ```
//!
//! and `Π` itself is recovered through `T = [β; βJ]`, `T J T* = 2J`.
//! `S` solves `A S - S A* = i Π J Π*` entrywise.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::{transfer_matrix_at_infinity, TripleSource};
use crate::linalg::{c, condition_number, eye, fro, guarded_inverse, r, CONDITION_LIMIT, I};
use crate::types::{GbdtTriple, HamiltonianField, SignatureMatrix};
use crate::{json, CMat, CVec, GbdtError, Result};

fn identity2() -> CMat {
    eye(2)
}

/// Parameters of the closed-form family. `h` may be omitted (zeros) and
/// `U` defaults to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitFamilyParams {
    pub n: usize,
    #[serde(with = "json::complex_vec")]
    pub b: Vec<Complex64>,
    #[serde(with = "json::complex_vec")]
    pub g: Vec<Complex64>,
    #[serde(default, with = "json::complex_vec")]
    pub h: Vec<Complex64>,
    #[serde(rename = "U", default = "identity2", with = "json::matrix")]
    pub u: CMat,
    pub l: f64,
}

impl ExplicitFamilyParams {
    /// `n = 1`, `b = i`, `g = 1`, `h = 0`, `U = I`, `l = 1`.
    pub fn unit_mode() -> Self {
        Self { n: 1, b: vec![I], g: vec![r(1.0)], h: vec![r(0.0)], u: eye(2), l: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.len() != self.n || self.g.len() != self.n || !(self.h.is_empty() || self.h.len() == self.n) {
            return Err(GbdtError::Dimension(format!(
                "n = {} but b, g, h have lengths {}, {}, {}",
                self.n,
                self.b.len(),
                self.g.len(),
                self.h.len()
            )));
        }
        if self.n == 0 {
            return Err(GbdtError::InvalidInput("n must be positive".into()));
        }
        for &b in &self.b {
            if b.im == 0.0 && b.re >= 0.0 {
                return Err(GbdtError::InvalidInput(format!("b = {b} lies in [0, inf)")));
            }
        }
        if !(self.l > 0.0) {
            return Err(GbdtError::InvalidInput("l must be positive".into()));
        }
        if self.u.shape() != (2, 2) {
            return Err(GbdtError::Dimension("U must be 2 x 2".into()));
        }
        let j = BaseSystem::new().j;
        let residual = fro(&(self.u.adjoint() * j.matrix() * &self.u - j.matrix()));
        if residual > 1e-10 {
            return Err(GbdtError::NotJUnitary { residual });
        }
        Ok(())
    }

    fn h_at(&self, k: usize) -> Complex64 {
        self.h.get(k).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn b_matrix(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_vec(self.b.clone()))
    }

    pub fn g_vector(&self) -> CVec {
        CVec::from_vec(self.g.clone())
    }
}

/// The untransformed system the family is built on.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSystem {
    pub beta: CMat,
    pub j: SignatureMatrix,
    pub h: CMat,
    pub r: CMat,
}

impl Default for BaseSystem {
    fn default() -> Self {
        Self::new()
    }
}

impl BaseSystem {
    pub fn new() -> Self {
        let beta = CMat::from_row_slice(1, 2, &[r(1.0), I]);
        let j = SignatureMatrix::off_diagonal();
        let h = beta.adjoint() * &beta;
        let r_jump = eye(2) + j.matrix() * &h * r(PI);
        Self { beta, j, h, r: r_jump }
    }

    /// `R² = I + 2π J β*β`.
    pub fn r_squared(&self) -> CMat {
        &self.r * &self.r
    }

    /// `T = [β; βJ]`.
    pub fn t_matrix(&self) -> CMat {
        let bj = &self.beta * self.j.matrix();
        CMat::from_row_slice(2, 2, &[self.beta[(0, 0)], self.beta[(0, 1)], bj[(0, 0)], bj[(0, 1)]])
    }

    pub fn field(&self, l: f64) -> HamiltonianField {
        HamiltonianField::rank_one(self.beta.clone(), l).expect("row vector")
    }
}

fn as_column(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

fn log_shift(b: Complex64, x: f64) -> Result<Complex64> {
    let d = b - x;
    if d.im == 0.0 && d.re <= 0.0 {
        return Err(GbdtError::Branch { x, value: d });
    }
    Ok(d.ln())
}

/// `Π(x)`, n × 2.
pub fn explicit_pi(p: &ExplicitFamilyParams, x: f64) -> Result<CMat> {
    p.validate()?;
    let base = BaseSystem::new();
    let jtj = base.j.matrix() * base.t_matrix() * base.j.matrix();
    let mut projections = CMat::zeros(p.n, 2);
    for k in 0..p.n {
        let ln = log_shift(p.b[k], x)?;
        projections[(k, 0)] = (I * p.g[k] * ln + p.h_at(k)) * 2.0;
        projections[(k, 1)] = p.g[k];
    }
    // Π = ½ Π T* J T J and Π T* = [Πβ*, ΠJβ*].
    Ok(projections * jtj * r(0.5))
}

fn check_resonance(b: &[Complex64]) -> Result<()> {
    let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for (j, bj) in b.iter().enumerate() {
        for (k, bk) in b.iter().enumerate() {
            if (bj - bk.conj()).norm() <= 1e-12 * scale {
                return Err(GbdtError::DegenerateSpectrum { j, k });
            }
        }
    }
    Ok(())
}

/// `S(x)` from `A S - S A* = i Π J Π*` with diagonal `A`:
/// `S_jk = i (ΠJΠ*)_jk / (λ_j - conj(λ_k))`, `λ_j = (b_j - x)⁻¹`.
pub fn explicit_s(p: &ExplicitFamilyParams, x: f64) -> Result<CMat> {
    let pi = explicit_pi(p, x)?;
    check_resonance(&p.b)?;
    let j = BaseSystem::new().j;
    let pjp = &pi * j.matrix() * pi.adjoint();
    let lambda: Vec<Complex64> = p.b.iter().map(|&b| (b - x).inv()).collect();
    let s = CMat::from_fn(p.n, p.n, |a, b| I * pjp[(a, b)] / (lambda[a] - lambda[b].conj()));
    // exact Hermitian symmetry; the entrywise formula is symmetric up to round-off
    Ok((&s + s.adjoint()) * r(0.5))
}

pub fn explicit_triple(p: &ExplicitFamilyParams, x: f64) -> Result<GbdtTriple> {
    let pi = explicit_pi(p, x)?;
    let s = explicit_s(p, x)?;
    let a = CMat::from_diagonal(&CVec::from_iterator(p.n, p.b.iter().map(|&b| (b - x).inv())));
    GbdtTriple::unverified(a, s, pi, x)
}

/// `Ũ = J w_A(0, ∞)* J U` (the inverse of `w_A(0, ∞)` applied to `U`).
pub fn u_tilde(p: &ExplicitFamilyParams) -> Result<CMat> {
    let j = BaseSystem::new().j;
    let t0 = explicit_triple(p, 0.0)?;
    let w_inf = transfer_matrix_at_infinity(&t0, &j)?;
    Ok(j.matrix() * w_inf.adjoint() * j.matrix() * &p.u)
}

/// `β w₀(x) = (β - i g* S(x)⁻¹ (B - xI) Π(x)) Ũ`, a 1 × 2 row.
pub fn gauge_row(p: &ExplicitFamilyParams, x: f64, u_tilde: &CMat) -> Result<CMat> {
    let base = BaseSystem::new();
    let pi = explicit_pi(p, x)?;
    let s = explicit_s(p, x)?;
    let s_inv = guarded_inverse(&s).map_err(|cond| GbdtError::SingularS { x, cond })?;
    let shifted = p.b_matrix() - eye(p.n) * r(x);
    let g = p.g_vector();
    let row = &base.beta - as_column(&g).adjoint() * s_inv * shifted * pi * I;
    Ok(row * u_tilde)
}

/// `H̃(x) = Ũ* (β - i g* S⁻¹ (B - xI) Π)* (β - i g* S⁻¹ (B - xI) Π) Ũ`.
pub fn explicit_transformed_hamiltonian(p: &ExplicitFamilyParams, x: f64) -> Result<CMat> {
    let ut = u_tilde(p)?;
    let row = gauge_row(p, x, &ut)?;
    Ok(row.adjoint() * row)
}

/// `r(s) = β + i s g* (sI - B*)⁻¹ B* S(0)⁻¹ Π(0)`.
pub fn explicit_r(p: &ExplicitFamilyParams, s: f64) -> Result<CMat> {
    let t0 = explicit_triple(p, 0.0)?;
    r_row_from_data(&t0, &p.b_matrix(), &p.g_vector(), s)
}

/// The row `r(s)` of the jump for any triple at `x = 0` with `B = A(0)⁻¹`
/// and `g = Π(0) J β*`.
pub fn r_row_from_data(t0: &GbdtTriple, b: &CMat, g: &CVec, s: f64) -> Result<CMat> {
    let base = BaseSystem::new();
    let n = t0.n();
    let s_inv = guarded_inverse(&t0.s).map_err(|cond| GbdtError::SingularS { x: 0.0, cond })?;
    let shifted = eye(n) * r(s) - b.adjoint();
    let res = guarded_inverse(&shifted).map_err(|_| GbdtError::SpectrumHit { x: s })?;
    Ok(&base.beta + as_column(g).adjoint() * res * b.adjoint() * s_inv * &t0.pi * (I * s))
}

/// `R̃(s) = I + π J U* r(s)* r(s) U`.
pub fn explicit_transformed_jump(p: &ExplicitFamilyParams, s: f64) -> Result<CMat> {
    let base = BaseSystem::new();
    let row = explicit_r(p, s)? * &p.u;
    Ok(eye(2) + base.j.matrix() * row.adjoint() * row * r(PI))
}

/// The closed-form family as a [`TripleSource`] and Hamiltonian factory.
#[derive(Debug, Clone)]
pub struct ExplicitFamily {
    pub params: ExplicitFamilyParams,
    base: BaseSystem,
    field: HamiltonianField,
    u_tilde: CMat,
}

impl ExplicitFamily {
    pub fn new(params: ExplicitFamilyParams) -> Result<Self> {
        params.validate()?;
        check_resonance(&params.b)?;
        let base = BaseSystem::new();
        let field = base.field(params.l);
        let u_tilde = u_tilde(&params)?;
        Ok(Self { params, base, field, u_tilde })
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn u_tilde(&self) -> &CMat {
        &self.u_tilde
    }

    pub fn hamiltonian_at(&self, x: f64) -> Result<CMat> {
        let row = gauge_row(&self.params, x, &self.u_tilde)?;
        Ok(row.adjoint() * row)
    }

    /// `H̃` as a field; samples that cannot be evaluated are NaN.
    pub fn transformed_field(&self) -> HamiltonianField {
        let fam = self.clone();
        HamiltonianField::callback(2, self.params.l, move |x| {
            fam.hamiltonian_at(x).unwrap_or_else(|_| CMat::from_element(2, 2, c(f64::NAN, f64::NAN)))
        })
    }

    pub fn jump(&self, s: f64) -> Result<CMat> {
        explicit_transformed_jump(&self.params, s)
    }

    pub fn as_source(&self) -> Arc<dyn TripleSource> {
        Arc::new(self.clone())
    }

    /// Checks `S(x)` stays invertible on `grid`; on failure reports the
    /// last admissible grid position.
    pub fn check_interval(&self, grid: &[f64]) -> Result<()> {
        let mut last_good = 0.0;
        for &x in grid {
            let ok = explicit_s(&self.params, x).map(|s| condition_number(&s) < CONDITION_LIMIT).unwrap_or(false);
            if !ok {
                return Err(GbdtError::Interval { requested: grid.last().copied().unwrap_or(x), largest: last_good });
            }
            last_good = x;
        }
        Ok(())
    }
}

impl TripleSource for ExplicitFamily {
    fn triple_at(&self, x: f64) -> Result<GbdtTriple> {
        explicit_triple(&self.params, x)
    }

    fn signature(&self) -> &SignatureMatrix {
        &self.base.j
    }

    fn hamiltonian(&self) -> &HamiltonianField {
        &self.field
    }
}

/// Fully explicit scalar case `n = 1`, `h = 0`, in terms of `b` and `g`.
pub mod single_mode {
    use super::*;

    fn bracket(ln: Complex64) -> CMat {
        CMat::from_row_slice(1, 2, &[I * (1.0 + ln * 2.0), r(1.0) - ln * 2.0])
    }

    /// `S(x) = 2i/(b - b̄) |g|² arg(b - x) (b - x)(b̄ - x)`.
    pub fn s(b: Complex64, g: Complex64, x: f64) -> Complex64 {
        let d = b - x;
        I * 2.0 / (b - b.conj()) * g.norm_sqr() * d.arg() * d * d.conj()
    }

    /// `Π(x) = ½ g [i(1 + 2 ln(b - x))  1 - 2 ln(b - x)]`.
    pub fn pi(b: Complex64, g: Complex64, x: f64) -> CMat {
        bracket((b - x).ln()) * (g * 0.5)
    }

    /// `h(x) = β - (b - b̄) / (4 (b̄ - x) arg(b - x)) [i(1 + 2 ln(b - x))  1 - 2 ln(b - x)]`.
    pub fn h_row(b: Complex64, x: f64) -> CMat {
        let d = b - x;
        let coef = (b - b.conj()) / ((b.conj() - x) * 4.0 * d.arg());
        BaseSystem::new().beta - bracket(d.ln()) * coef
    }

    /// `r(s) = β + (b - b̄)/(4 b arg b) · s/(s - b̄) · [i(1 + 2 ln b)  1 - 2 ln b]`.
    pub fn r_row(b: Complex64, s: f64) -> CMat {
        let coef = (b - b.conj()) / (b * 4.0 * b.arg()) * (r(s) / (s - b.conj()));
        BaseSystem::new().beta + bracket(b.ln()) * coef
    }

    /// `Ũ = (I + i b̄ / conj(S(0)) J Π(0)* Π(0)) U`.
    pub fn u_tilde(b: Complex64, g: Complex64, u: &CMat) -> CMat {
        let j = SignatureMatrix::off_diagonal();
        let p0 = pi(b, g, 0.0);
        let s0 = s(b, g, 0.0);
        (eye(2) + j.matrix() * p0.adjoint() * p0 * (I * b.conj() / s0.conj())) * u
    }

    /// `H̃(x) = Ũ* h(x)* h(x) Ũ`.
    pub fn hamiltonian(b: Complex64, g: Complex64, u: &CMat, x: f64) -> CMat {
        let row = h_row(b, x) * u_tilde(b, g, u);
        row.adjoint() * row
    }

    /// `R̃(s) = I + π J U* r(s)* r(s) U`.
    pub fn jump(b: Complex64, u: &CMat, s: f64) -> CMat {
        let j = SignatureMatrix::off_diagonal();
        let row = r_row(b, s) * u;
        eye(2) + j.matrix() * row.adjoint() * row * r(PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;
    use crate::types::check_material_identity;

    fn ex1() -> ExplicitFamilyParams {
        ExplicitFamilyParams::unit_mode()
    }

    fn two_pole() -> ExplicitFamilyParams {
        ExplicitFamilyParams {
            n: 2,
            b: vec![c(-0.5, 1.0), c(0.7, -0.4)],
            g: vec![c(1.0, 0.2), c(-0.3, 0.8)],
            h: vec![c(0.1, 0.0), c(0.0, -0.2)],
            u: eye(2),
            l: 1.0,
        }
    }

    #[test]
    fn base_system_invariants_are_exact() {
        let base = BaseSystem::new();
        let bjb = &base.beta * base.j.matrix() * base.beta.adjoint();
        assert_eq!(bjb[(0, 0)], r(0.0));
        let jh = base.j.matrix() * &base.h;
        assert_eq!(&jh * &jh, CMat::zeros(2, 2));
        let expected = eye(2) + jh * r(2.0 * PI);
        assert!(fro(&(base.r_squared() - expected)) < 1e-14);
        let t = base.t_matrix();
        assert_eq!(&t * base.j.matrix() * t.adjoint(), base.j.matrix() * r(2.0));
    }

    #[test]
    fn pi_at_zero_unit_mode() {
        let pi = explicit_pi(&ex1(), 0.0).unwrap();
        let expected = CMat::from_row_slice(1, 2, &[c(-PI, 1.0), c(1.0, -PI)]) * r(0.5);
        assert!(fro(&(&pi - expected)) < 1e-15);
        let base = BaseSystem::new();
        let g = &pi * base.j.matrix() * base.beta.adjoint();
        assert!((g[(0, 0)] - r(1.0)).norm() < 1e-15);
    }

    #[test]
    fn pi_projections_hold_along_x() {
        let p = two_pole();
        let base = BaseSystem::new();
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            let pi = explicit_pi(&p, x).unwrap();
            let g = &pi * base.j.matrix() * base.beta.adjoint();
            let pb = &pi * base.beta.adjoint();
            for i in 0..2 {
                assert!((g[(i, 0)] - p.g[i]).norm() < 1e-12);
                let expected = (I * p.g[i] * (p.b[i] - x).ln() + p.h[i]) * 2.0;
                assert!((pb[(i, 0)] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_g_and_h_give_zero_pi_and_s() {
        let mut p = two_pole();
        p.g = vec![r(0.0); 2];
        p.h = vec![r(0.0); 2];
        assert_eq!(explicit_pi(&p, 0.3).unwrap(), CMat::zeros(2, 2));
        assert!(fro(&explicit_s(&p, 0.3).unwrap()) == 0.0);
    }

    #[test]
    fn s_matches_closed_form_and_identity() {
        let p = ex1();
        let s0 = explicit_s(&p, 0.0).unwrap()[(0, 0)];
        assert!((s0 - r(PI / 2.0)).norm() < 1e-12);
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let s = explicit_s(&p, x).unwrap()[(0, 0)];
            let oracle = single_mode::s(I, r(1.0), x);
            assert!((s - oracle).norm() < 1e-10, "x = {x}");
            assert!(s.norm() > 0.0);
        }
        let j = BaseSystem::new().j;
        for x in [0.0, 0.37, 1.0] {
            let t = explicit_triple(&two_pole(), x).unwrap();
            assert!(check_material_identity(&t, &j, 1e-10).unwrap().pass);
            assert!(fro(&(&t.s - t.s.adjoint())) < 1e-10);
        }
    }

    #[test]
    fn resonant_spectrum_rejected() {
        let mut p = two_pole();
        p.b = vec![c(-0.5, 1.0), c(-0.5, -1.0)];
        assert!(matches!(explicit_s(&p, 0.0), Err(GbdtError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn b_on_positive_axis_rejected() {
        let mut p = ex1();
        p.b = vec![r(0.5)];
        assert!(p.validate().is_err());
    }

    #[test]
    fn branch_cut_reported() {
        assert!(matches!(log_shift(r(-1.0), 0.0), Err(GbdtError::Branch { .. })));
        assert!(log_shift(c(-1.0, 1e-9), 0.0).is_ok());
    }

    #[test]
    fn transformed_hamiltonian_matches_unit_mode_form() {
        let p = ex1();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let ht = explicit_transformed_hamiltonian(&p, x).unwrap();
            let oracle = single_mode::hamiltonian(I, r(1.0), &eye(2), x);
            assert!(fro(&(&ht - oracle)) < 1e-10, "x = {x}");
            let sv = singular_values(&ht);
            assert!(sv.iter().copied().fold(f64::INFINITY, f64::min) < 1e-10);
            let j = BaseSystem::new().j;
            assert!(fro(&(&ht * j.matrix() * &ht)) < 1e-9);
        }
    }

    #[test]
    fn u_tilde_matches_unit_mode_form() {
        let p = ex1();
        let ut = u_tilde(&p).unwrap();
        assert!(fro(&(ut - single_mode::u_tilde(I, r(1.0), &eye(2)))) < 1e-13);
    }

    #[test]
    fn r_row_unit_mode_and_properties() {
        let p = ex1();
        let j = BaseSystem::new().j;
        for k in 1..=10 {
            let s = 0.37 * k as f64 - 1.5;
            let row = explicit_r(&p, s).unwrap();
            assert!(fro(&(&row - single_mode::r_row(I, s))) < 1e-12);
            let q = &row * j.matrix() * row.adjoint();
            assert!(q[(0, 0)].norm() < 1e-12);
        }
        // coefficient 1/π at b = i
        let lead = single_mode::r_row(I, 1.0) - BaseSystem::new().beta;
        let expected =
            CMat::from_row_slice(1, 2, &[I * (1.0 + I * PI), r(1.0) - I * PI]) * (r(1.0 / PI) / (r(1.0) + I));
        assert!(fro(&(lead - expected)) < 1e-14);
        assert_eq!(explicit_r(&p, 0.0).unwrap(), BaseSystem::new().beta);
    }

    #[test]
    fn jump_is_nilpotent_and_starts_from_base() {
        for p in [ex1(), two_pole()] {
            for k in 1..=9 {
                let s = k as f64 / 10.0;
                let jump = explicit_transformed_jump(&p, s).unwrap();
                let d = jump - eye(2);
                assert!(fro(&(&d * &d)) < 1e-10 * fro(&d).powi(2).max(1.0));
            }
            let base = BaseSystem::new();
            let at0 = explicit_transformed_jump(&p, 0.0).unwrap();
            let expected = eye(2) + base.j.matrix() * p.u.adjoint() * &base.h * &p.u * r(PI);
            assert!(fro(&(at0 - expected)) < 1e-12);
        }
    }

    #[test]
    fn interval_scan_passes_for_unit_mode() {
        let fam = ExplicitFamily::new(ex1()).unwrap();
        let grid: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
        fam.check_interval(&grid).unwrap();
    }

    #[test]
    fn params_json_shape() {
        let text = r#"{"n":1,"b":[{"re":0,"im":1}],"g":[{"re":1,"im":0}],"h":[{"re":0,"im":0}],
            "U":[[{"re":1,"im":0},{"re":0,"im":0}],[{"re":0,"im":0},{"re":1,"im":0}]],"l":1.0}"#;
        let p: ExplicitFamilyParams = serde_json::from_str(text).unwrap();
        assert_eq!(p, ex1());
        let bad = r#"{"n":1,"b":[],"g":[],"l":1.0,"extra":1}"#;
        assert!(serde_json::from_str::<ExplicitFamilyParams>(bad).is_err());
    }
}
