//! Evolution of the GBDT triple along `x` and the objects built from it:
//! the transfer matrix function `w_A`, the gauge `w₀`, the transformed
//! Hamiltonian `H̃ = w₀* H w₀`, the multiplier `v = w₀⁻¹ w_A` and the
//! transformed fundamental solution.
//!
//! The triple obeys
//!
//! ```text
//! A' = A²,   Π' = -i A Π J H,   S' = Π J H J Π* - (A S + S A*)
//! ```
//!
//! which preserves `A S - S A* = i Π J Π*`. When `A(0)` is invertible the
//! first equation is solved exactly by `A(x) = (B - x I)⁻¹` with
//! `B = A(0)⁻¹`, and only `S` and `Π` are integrated.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::{eye, fro, guarded_inverse, hermitian_part, min_hermitian_eigenvalue, singular_values, I};
use crate::ode::{integrate_with, OdeOptions, OdeStats};
use crate::types::{check_material_identity, GbdtTriple, HamiltonianField, ResidualReport, SignatureMatrix};
use crate::{json, CMat, GbdtError, Result};

/// Norm bound beyond which `A` or `S⁻¹` counts as blown up.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Anything that can produce the GBDT triple at an arbitrary position.
pub trait TripleSource: Send + Sync {
    fn triple_at(&self, x: f64) -> Result<GbdtTriple>;
    fn signature(&self) -> &SignatureMatrix;
    fn hamiltonian(&self) -> &HamiltonianField;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AEvolution {
    /// Closed form when `A(0)` is invertible, direct integration otherwise.
    Auto,
    Closed,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    pub a_evolution: AEvolution,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), a_evolution: AEvolution::Auto }
    }
}

impl EvolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { ode: OdeOptions { rtol: tol, atol: tol, ..OdeOptions::default() }, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorMeta {
    pub rtol: f64,
    pub atol: f64,
    pub a_evolution: AEvolution,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
}

/// Packing of `(A?, S, Π[, w₀])` into a flat ODE state, column-major.
#[derive(Debug, Clone)]
struct Layout {
    n: usize,
    m: usize,
    b: Option<CMat>,
    with_gauge: bool,
}

impl Layout {
    fn a_len(&self) -> usize {
        if self.b.is_some() {
            0
        } else {
            self.n * self.n
        }
    }

    fn len(&self) -> usize {
        self.a_len() + self.n * self.n + self.n * self.m + if self.with_gauge { self.m * self.m } else { 0 }
    }

    fn pack(&self, t: &GbdtTriple, w0: Option<&CMat>) -> Vec<Complex64> {
        let mut y = Vec::with_capacity(self.len());
        if self.b.is_none() {
            y.extend_from_slice(t.a.as_slice());
        }
        y.extend_from_slice(t.s.as_slice());
        y.extend_from_slice(t.pi.as_slice());
        if let Some(w) = w0 {
            y.extend_from_slice(w.as_slice());
        }
        y
    }

    fn a_at(&self, x: f64, y: &[Complex64]) -> CMat {
        match &self.b {
            Some(b) => shifted_inverse(b, x),
            None => CMat::from_column_slice(self.n, self.n, &y[..self.n * self.n]),
        }
    }

    fn unpack(&self, x: f64, y: &[Complex64]) -> (CMat, CMat, CMat) {
        let (n, m) = (self.n, self.m);
        let o = self.a_len();
        let a = self.a_at(x, y);
        let s = CMat::from_column_slice(n, n, &y[o..o + n * n]);
        let pi = CMat::from_column_slice(n, m, &y[o + n * n..o + n * n + n * m]);
        (a, s, pi)
    }

    fn gauge(&self, y: &[Complex64]) -> CMat {
        let o = self.a_len() + self.n * self.n + self.n * self.m;
        CMat::from_column_slice(self.m, self.m, &y[o..o + self.m * self.m])
    }

    fn rhs(&self, x: f64, y: &[Complex64], dy: &mut [Complex64], h: &HamiltonianField, j: &CMat) {
        let (a, s, pi) = self.unpack(x, y);
        let hx = h.eval(x);
        let jhj = j * &hx * j;
        let d_pi = &a * &pi * j * &hx * (-I);
        let d_s = &pi * &jhj * pi.adjoint() - (&a * &s + &s * a.adjoint());
        let mut o = 0;
        if self.b.is_none() {
            let d_a = &a * &a;
            dy[..self.n * self.n].copy_from_slice(d_a.as_slice());
            o = self.n * self.n;
        }
        dy[o..o + self.n * self.n].copy_from_slice(d_s.as_slice());
        o += self.n * self.n;
        dy[o..o + self.n * self.m].copy_from_slice(d_pi.as_slice());
        o += self.n * self.m;
        if self.with_gauge {
            let w0 = self.gauge(y);
            let g0 = match guarded_inverse(&s) {
                Ok(s_inv) => gauge_generator(&s_inv, &pi, &hx, j),
                Err(_) => CMat::from_element(self.m, self.m, Complex64::new(f64::NAN, f64::NAN)),
            };
            let d_w = g0 * w0;
            dy[o..o + self.m * self.m].copy_from_slice(d_w.as_slice());
        }
    }

    /// Re-Hermitizes `S` and checks the blow-up guards.
    fn after_step(&self, x: f64, y: &mut [Complex64]) -> Result<()> {
        let n = self.n;
        let o = self.a_len();
        let s = CMat::from_column_slice(n, n, &y[o..o + n * n]);
        let s = hermitian_part(&s);
        y[o..o + n * n].copy_from_slice(s.as_slice());
        let a = self.a_at(x, y);
        if !(fro(&a) < BLOWUP_LIMIT) {
            return Err(GbdtError::Singularity { x, what: "|A| exceeds 1e12".into() });
        }
        let smin = singular_values(&s).into_iter().fold(f64::INFINITY, f64::min);
        if !(smin > 1.0 / BLOWUP_LIMIT) {
            return Err(GbdtError::Singularity { x, what: "|S^-1| exceeds 1e12".into() });
        }
        Ok(())
    }
}

fn shifted_inverse(b: &CMat, x: f64) -> CMat {
    let n = b.nrows();
    let shifted = b - eye(n) * Complex64::new(x, 0.0);
    shifted.lu().try_inverse().unwrap_or_else(|| CMat::from_element(n, n, Complex64::new(f64::NAN, f64::NAN)))
}

/// `G̃₀ = -J(iM - HJM + MJH)` with `M = Π* S⁻¹ Π`.
fn gauge_generator(s_inv: &CMat, pi: &CMat, h: &CMat, j: &CMat) -> CMat {
    let m = pi.adjoint() * s_inv * pi;
    -(j * (&m * I - h * j * &m + &m * j * h))
}

fn identity_drift_limit(t: &GbdtTriple, tol: f64) -> f64 {
    100.0 * tol * (1.0 + fro(&t.a) * fro(&t.s) + fro(&t.pi).powi(2))
}

/// States of the triple on a grid `0 = x₀ < x₁ < … < x_N = l`.
#[derive(Clone, Serialize)]
pub struct TripleTrajectory {
    pub grid: Vec<f64>,
    pub states: Vec<GbdtTriple>,
    pub meta: IntegratorMeta,
    pub identity: ResidualReport,
    #[serde(rename = "B", with = "json::option_matrix")]
    pub b: Option<CMat>,
    #[serde(skip)]
    h: HamiltonianField,
    #[serde(skip)]
    j: SignatureMatrix,
    #[serde(skip)]
    opts: EvolveOptions,
}

impl std::fmt::Debug for TripleTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TripleTrajectory")
            .field("grid_points", &self.grid.len())
            .field("identity_max", &self.identity.max)
            .field("meta", &self.meta)
            .finish()
    }
}

impl TripleTrajectory {
    fn layout(&self, with_gauge: bool) -> Layout {
        let t0 = &self.states[0];
        Layout { n: t0.n(), m: t0.m(), b: self.b.clone(), with_gauge }
    }

    /// Index of the last grid node at or before `x` (0 if `x` precedes the grid).
    fn anchor(&self, x: f64) -> usize {
        self.grid.partition_point(|&g| g <= x).saturating_sub(1)
    }

    /// Smallest eigenvalue of `S` at each grid point.
    pub fn s_min_eigenvalues(&self) -> Vec<f64> {
        self.states.iter().map(|t| min_hermitian_eigenvalue(&t.s)).collect()
    }

    /// Positions where `S` lost positivity (reported, not enforced).
    pub fn positivity_losses(&self) -> Vec<f64> {
        self.grid.iter().zip(self.s_min_eigenvalues()).filter(|(_, ev)| *ev <= 0.0).map(|(&x, _)| x).collect()
    }
}

impl TripleSource for TripleTrajectory {
    /// Re-integrates from the nearest preceding grid node.
    fn triple_at(&self, x: f64) -> Result<GbdtTriple> {
        let k = self.anchor(x);
        let start = &self.states[k];
        if x == start.x {
            return Ok(start.clone());
        }
        let layout = self.layout(false);
        let mut y = layout.pack(start, None);
        let jm = self.j.matrix().clone();
        integrate_with(
            |t, y, dy| layout.rhs(t, y, dy, &self.h, &jm),
            start.x,
            x,
            &mut y,
            &self.opts.ode,
            |_| f64::INFINITY,
            |t, y| layout.after_step(t, y),
        )?;
        let (a, s, pi) = layout.unpack(x, &y);
        Ok(GbdtTriple { a, s, pi, x })
    }

    fn signature(&self) -> &SignatureMatrix {
        &self.j
    }

    fn hamiltonian(&self) -> &HamiltonianField {
        &self.h
    }
}

/// Integrates the triple from `init` (at `grid[0]`) across the grid.
pub fn evolve_triple(
    init: &GbdtTriple,
    h: &HamiltonianField,
    j: &SignatureMatrix,
    grid: &[f64],
    opts: &EvolveOptions,
) -> Result<TripleTrajectory> {
    if grid.is_empty() || grid[0] != init.x || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GbdtError::InvalidInput("grid must start at the initial position and increase strictly".into()));
    }
    if h.m() != j.dim() {
        return Err(GbdtError::Dimension("H and J dimensions differ".into()));
    }
    let init_report = check_material_identity(init, j, crate::types::IDENTITY_TOL)?;
    if !init_report.pass {
        return Err(GbdtError::InvalidInput(format!(
            "initial triple violates the material identity (residual {:.3e})",
            init_report.max
        )));
    }
    let b = match opts.a_evolution {
        AEvolution::Direct => None,
        AEvolution::Closed => Some(
            guarded_inverse(&init.a)
                .map_err(|_| GbdtError::InvalidInput("closed A evolution needs invertible A(0)".into()))?
                + eye(init.n()) * Complex64::new(init.x, 0.0),
        ),
        AEvolution::Auto => guarded_inverse(&init.a).ok().map(|inv| inv + eye(init.n()) * Complex64::new(init.x, 0.0)),
    };
    let layout = Layout { n: init.n(), m: init.m(), b: b.clone(), with_gauge: false };
    let jm = j.matrix().clone();
    let mut y = layout.pack(init, None);
    let mut states = vec![init.clone()];
    let mut stats = OdeStats::default();
    let tol = opts.ode.rtol.max(opts.ode.atol);

    let mut residuals = vec![init_report.max];
    for w in grid.windows(2) {
        stats += integrate_with(
            |t, y, dy| layout.rhs(t, y, dy, h, &jm),
            w[0],
            w[1],
            &mut y,
            &opts.ode,
            |_| f64::INFINITY,
            |t, y| layout.after_step(t, y),
        )?;
        let (a, s, pi) = layout.unpack(w[1], &y);
        let t = GbdtTriple { a, s, pi, x: w[1] };
        let residual = fro(&t.identity_defect(j));
        let limit = identity_drift_limit(&t, tol);
        if !(residual <= limit) {
            return Err(GbdtError::IdentityDrift { x: w[1], residual, limit });
        }
        residuals.push(residual);
        states.push(t);
    }

    let identity = ResidualReport::new("material_identity", grid.to_vec(), residuals, 1e-7);
    Ok(TripleTrajectory {
        grid: grid.to_vec(),
        states,
        meta: IntegratorMeta {
            rtol: opts.ode.rtol,
            atol: opts.ode.atol,
            a_evolution: if b.is_some() { AEvolution::Closed } else { AEvolution::Direct },
            accepted_steps: stats.accepted,
            rejected_steps: stats.rejected,
            evaluations: stats.evaluations,
        },
        identity,
        b,
        h: h.clone(),
        j: j.clone(),
        opts: *opts,
    })
}

fn transfer_with_lambda(t: &GbdtTriple, j: &SignatureMatrix, lambda: Complex64) -> Result<CMat> {
    if t.m() != j.dim() {
        return Err(GbdtError::Dimension("Pi and J dimensions differ".into()));
    }
    let s_inv = guarded_inverse(&t.s).map_err(|cond| GbdtError::SingularS { x: t.x, cond })?;
    let shifted = &t.a - eye(t.n()) * lambda;
    let resolvent = guarded_inverse(&shifted).map_err(|_| GbdtError::SpectrumHit { x: t.x })?;
    Ok(eye(t.m()) - j.matrix() * t.pi.adjoint() * s_inv * resolvent * &t.pi * I)
}

/// `w_A(x, z) = I - i J Π* S⁻¹ (A - λ I)⁻¹ Π` with `λ = (z - x)⁻¹`.
pub fn transfer_matrix(t: &GbdtTriple, j: &SignatureMatrix, z: Complex64) -> Result<CMat> {
    let d = z - Complex64::new(t.x, 0.0);
    if d.norm() == 0.0 {
        return Err(GbdtError::SpectrumHit { x: t.x });
    }
    transfer_with_lambda(t, j, d.inv())
}

/// `w_A(x, ∞) = I - i J Π* S⁻¹ A⁻¹ Π`.
pub fn transfer_matrix_at_infinity(t: &GbdtTriple, j: &SignatureMatrix) -> Result<CMat> {
    transfer_with_lambda(t, j, Complex64::new(0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeRoute {
    /// `w₀(x) = w_A(x, ∞) Ũ`, `Ũ = w_A(0, ∞)⁻¹ U`.
    ClosedForm,
    /// Direct integration of `w₀' = G̃₀ w₀`.
    Ode,
}

#[derive(Clone)]
enum GaugeSource {
    Closed(Arc<dyn TripleSource>),
    Ode(Arc<TripleTrajectory>),
}

/// The J-unitary gauge `w₀` with `H̃ = w₀* H w₀`.
#[derive(Clone, Serialize)]
pub struct GaugeMatrix {
    pub grid: Vec<f64>,
    #[serde(with = "json::matrix_vec")]
    pub values: Vec<CMat>,
    #[serde(rename = "U", with = "json::matrix")]
    pub u: CMat,
    #[serde(rename = "U_tilde", with = "json::option_matrix")]
    pub u_tilde: Option<CMat>,
    pub route: GaugeRoute,
    #[serde(skip)]
    source: GaugeSource,
}

impl std::fmt::Debug for GaugeMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugeMatrix").field("grid_points", &self.grid.len()).field("route", &self.route).finish()
    }
}

fn check_j_unitary(u: &CMat, j: &SignatureMatrix, tol: f64) -> Result<()> {
    if u.shape() != (j.dim(), j.dim()) {
        return Err(GbdtError::Dimension("U must be m x m".into()));
    }
    let residual = fro(&(u.adjoint() * j.matrix() * u - j.matrix()));
    if residual > tol {
        return Err(GbdtError::NotJUnitary { residual });
    }
    Ok(())
}

impl GaugeMatrix {
    /// Closed representation over any triple source.
    pub fn closed_form(source: Arc<dyn TripleSource>, grid: &[f64], u: &CMat) -> Result<Self> {
        let j = source.signature().clone();
        check_j_unitary(u, &j, 1e-10)?;
        let x0 = grid.first().copied().unwrap_or(0.0);
        let t0 = source.triple_at(x0)?;
        let w_inf0 = transfer_matrix_at_infinity(&t0, &j)
            .map_err(|_| GbdtError::Singularity { x: x0, what: "A(x) is not invertible".into() })?;
        // w_A(0, ∞)⁻¹ = J w_A(0, ∞)* J by the J-property.
        let u_tilde = j.matrix() * w_inf0.adjoint() * j.matrix() * u;
        let mut values = Vec::with_capacity(grid.len());
        for &x in grid {
            let t = source.triple_at(x)?;
            let w = transfer_matrix_at_infinity(&t, &j)
                .map_err(|_| GbdtError::Singularity { x, what: "A(x) is not invertible".into() })?;
            values.push(w * &u_tilde);
        }
        if let Some(first) = values.first_mut() {
            *first = u.clone();
        }
        Ok(Self {
            grid: grid.to_vec(),
            values,
            u: u.clone(),
            u_tilde: Some(u_tilde),
            route: GaugeRoute::ClosedForm,
            source: GaugeSource::Closed(source),
        })
    }

    pub fn signature(&self) -> &SignatureMatrix {
        match &self.source {
            GaugeSource::Closed(s) => s.signature(),
            GaugeSource::Ode(t) => &t.j,
        }
    }

    pub fn triple_at(&self, x: f64) -> Result<GbdtTriple> {
        match &self.source {
            GaugeSource::Closed(s) => s.triple_at(x),
            GaugeSource::Ode(t) => t.triple_at(x),
        }
    }

    /// `w₀(x)` at any position in the interval.
    pub fn at(&self, x: f64) -> Result<CMat> {
        let k = self.grid.partition_point(|&g| g <= x).saturating_sub(1);
        if self.grid.get(k) == Some(&x) {
            return Ok(self.values[k].clone());
        }
        match &self.source {
            GaugeSource::Closed(src) => {
                let t = src.triple_at(x)?;
                let w = transfer_matrix_at_infinity(&t, src.signature())?;
                Ok(w * self.u_tilde.as_ref().expect("closed route stores U~"))
            }
            GaugeSource::Ode(traj) => {
                let layout = traj.layout(true);
                let start = &traj.states[k];
                let mut y = layout.pack(start, Some(&self.values[k]));
                let jm = traj.j.matrix().clone();
                integrate_with(
                    |t, y, dy| layout.rhs(t, y, dy, &traj.h, &jm),
                    start.x,
                    x,
                    &mut y,
                    &traj.opts.ode,
                    |_| f64::INFINITY,
                    |t, y| layout.after_step(t, y),
                )?;
                Ok(layout.gauge(&y))
            }
        }
    }

    /// `‖w₀(x)* J w₀(x) - J‖` on the grid.
    pub fn j_unitarity(&self, tol: f64) -> ResidualReport {
        let j = self.signature().matrix();
        let res = self.values.iter().map(|w| fro(&(w.adjoint() * j * w - j))).collect();
        ResidualReport::new("gauge_j_unitary", self.grid.clone(), res, tol)
    }

    /// `v(x, z) = w₀(x)⁻¹ w_A(x, z)` using the gauge's own triple source.
    pub fn multiplier(&self, x: f64, z: Complex64) -> Result<CMat> {
        let t = self.triple_at(x)?;
        multiplier_v(&t, self, z)
    }
}

/// Gauge through the closed representation; falls back to integrating
/// `w₀' = G̃₀ w₀` when `A(x)` is singular somewhere on the grid.
pub fn gauge_w0(traj: &TripleTrajectory, u: &CMat) -> Result<GaugeMatrix> {
    let source: Arc<dyn TripleSource> = Arc::new(traj.clone());
    match GaugeMatrix::closed_form(source, &traj.grid, u) {
        Ok(g) => Ok(g),
        Err(GbdtError::Singularity { .. }) => gauge_w0_ode(traj, u),
        Err(e) => Err(e),
    }
}

/// Gauge by direct integration of `w₀' = G̃₀ w₀`, `w₀(0) = U`.
pub fn gauge_w0_ode(traj: &TripleTrajectory, u: &CMat) -> Result<GaugeMatrix> {
    check_j_unitary(u, &traj.j, 1e-10)?;
    let layout = traj.layout(true);
    let jm = traj.j.matrix().clone();
    let mut y = layout.pack(&traj.states[0], Some(u));
    let mut values = vec![u.clone()];
    for w in traj.grid.windows(2) {
        integrate_with(
            |t, y, dy| layout.rhs(t, y, dy, &traj.h, &jm),
            w[0],
            w[1],
            &mut y,
            &traj.opts.ode,
            |_| f64::INFINITY,
            |t, y| layout.after_step(t, y),
        )?;
        values.push(layout.gauge(&y));
    }
    Ok(GaugeMatrix {
        grid: traj.grid.clone(),
        values,
        u: u.clone(),
        u_tilde: None,
        route: GaugeRoute::Ode,
        source: GaugeSource::Ode(Arc::new(traj.clone())),
    })
}

/// `H̃(x) = w₀(x)* H(x) w₀(x)`. Samples where the gauge cannot be evaluated
/// come back as NaN matrices.
pub fn transformed_hamiltonian(gauge: &GaugeMatrix, h: &HamiltonianField) -> HamiltonianField {
    let gauge = gauge.clone();
    let base = h.clone();
    let m = h.m();
    HamiltonianField::callback(m, h.l(), move |x| match gauge.at(x) {
        Ok(w0) => w0.adjoint() * base.eval(x) * w0,
        Err(_) => CMat::from_element(m, m, Complex64::new(f64::NAN, f64::NAN)),
    })
}

/// `v(x, z) = w₀(x)⁻¹ w_A(x, z)`, with `w₀⁻¹ = J w₀* J`.
pub fn multiplier_v(t: &GbdtTriple, gauge: &GaugeMatrix, z: Complex64) -> Result<CMat> {
    let j = gauge.signature();
    let w0 = gauge.at(t.x)?;
    let w_a = transfer_matrix(t, j, z)?;
    Ok(j.matrix() * w0.adjoint() * j.matrix() * w_a)
}

/// `w̃(x, z) = v(x, z) w(x, z) v(0, z)⁻¹`.
pub fn transformed_solution<V, W>(v_at: V, w_at: W, z: Complex64, x: f64) -> Result<CMat>
where
    V: Fn(f64, Complex64) -> Result<CMat>,
    W: Fn(f64, Complex64) -> Result<CMat>,
{
    let v0 = v_at(0.0, z)?;
    let v0_inv =
        guarded_inverse(&v0).map_err(|_| GbdtError::Singularity { x: 0.0, what: "v(0, z) is singular".into() })?;
    if x == 0.0 {
        // w(0, z) = I, so the product collapses exactly.
        return Ok(eye(v0.nrows()));
    }
    Ok(v_at(x, z)? * w_at(x, z)? * v0_inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, r};

    fn j() -> SignatureMatrix {
        SignatureMatrix::off_diagonal()
    }

    fn grid(n: usize, l: f64) -> Vec<f64> {
        (0..n).map(|k| l * k as f64 / (n - 1) as f64).collect()
    }

    fn zero_pi_triple() -> GbdtTriple {
        // Π = 0 with S = I forces A = A*.
        GbdtTriple::new(
            CMat::from_row_slice(2, 2, &[r(-1.0), c(0.2, 0.1), c(0.2, -0.1), r(-2.0)]),
            eye(2),
            CMat::zeros(2, 2),
            0.0,
            &j(),
        )
        .unwrap()
    }

    #[test]
    fn zero_pi_stays_zero_and_transfer_is_identity() {
        let t0 = zero_pi_triple();
        let traj =
            evolve_triple(&t0, &HamiltonianField::base(1.0), &j(), &grid(11, 1.0), &EvolveOptions::default()).unwrap();
        for t in &traj.states {
            assert!(fro(&t.pi) < 1e-10);
            assert_eq!(transfer_matrix(t, &j(), c(2.0, 1.0)).unwrap(), eye(2));
        }
        let gauge = gauge_w0(&traj, &eye(2)).unwrap();
        for w in &gauge.values {
            assert!(fro(&(w - eye(2))) < 1e-14);
        }
        let t = &traj.states[5];
        assert!(fro(&(multiplier_v(t, &gauge, c(0.3, 0.2)).unwrap() - eye(2))) < 1e-14);
    }

    #[test]
    fn a_direct_matches_closed_form() {
        let t0 = GbdtTriple::new(
            CMat::from_element(1, 1, c(0.0, 1.0)),
            CMat::from_element(1, 1, r(1.0)),
            CMat::from_row_slice(1, 2, &[r(1.0), r(1.0)]),
            0.0,
            &j(),
        )
        .unwrap();
        let opts = EvolveOptions { a_evolution: AEvolution::Direct, ..EvolveOptions::default() };
        let traj = evolve_triple(&t0, &HamiltonianField::base(1.0), &j(), &[0.0, 0.25, 0.5], &opts).unwrap();
        let expected = (c(-0.5, -1.0)).inv();
        assert!((traj.states[2].a[(0, 0)] - expected).norm() < 1e-8);
        assert_eq!(traj.meta.a_evolution, AEvolution::Direct);
    }

    #[test]
    fn initial_identity_violation_rejected() {
        let bad = GbdtTriple::unverified(
            CMat::from_element(1, 1, c(0.0, 1.0)),
            CMat::from_element(1, 1, r(1.0)),
            CMat::from_row_slice(1, 2, &[r(1.0), r(0.0)]),
            0.0,
        )
        .unwrap();
        let err = evolve_triple(&bad, &HamiltonianField::base(1.0), &j(), &[0.0, 1.0], &EvolveOptions::default());
        assert!(matches!(err, Err(GbdtError::InvalidInput(_))));
    }

    #[test]
    fn blowup_of_a_is_reported() {
        // B = 0.5 is real, so A = (0.5 - x)⁻¹ blows up inside [0, 1].
        let t0 = GbdtTriple::new(
            CMat::from_element(1, 1, r(2.0)),
            CMat::from_element(1, 1, r(1.0)),
            CMat::zeros(1, 2),
            0.0,
            &j(),
        )
        .unwrap();
        let opts = EvolveOptions { a_evolution: AEvolution::Direct, ..EvolveOptions::default() };
        let err = evolve_triple(&t0, &HamiltonianField::base(1.0), &j(), &grid(11, 1.0), &opts).unwrap_err();
        match err {
            GbdtError::Singularity { x, .. } | GbdtError::Integrator { x, .. } => assert!(x < 0.5 + 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn transfer_errors() {
        let singular_s =
            GbdtTriple::unverified(CMat::from_element(1, 1, r(2.0)), CMat::zeros(1, 1), CMat::zeros(1, 2), 0.0)
                .unwrap();
        assert!(matches!(transfer_matrix(&singular_s, &j(), c(1.0, 1.0)), Err(GbdtError::SingularS { .. })));
        // λ = 1/(z - x) = 2 = A.
        let t = GbdtTriple::unverified(
            CMat::from_element(1, 1, r(2.0)),
            CMat::from_element(1, 1, r(1.0)),
            CMat::zeros(1, 2),
            0.0,
        )
        .unwrap();
        assert!(matches!(transfer_matrix(&t, &j(), r(0.5)), Err(GbdtError::SpectrumHit { .. })));
    }

    #[test]
    fn gauge_rejects_non_j_unitary_u() {
        let traj = evolve_triple(
            &zero_pi_triple(),
            &HamiltonianField::base(1.0),
            &j(),
            &[0.0, 1.0],
            &EvolveOptions::default(),
        )
        .unwrap();
        assert!(matches!(gauge_w0(&traj, &(eye(2) * r(2.0))), Err(GbdtError::NotJUnitary { .. })));
    }

    #[test]
    fn transformed_solution_at_zero_is_identity() {
        let v = |_x: f64, _z: Complex64| Ok(CMat::from_row_slice(2, 2, &[r(2.0), r(1.0), r(0.0), r(1.0)]));
        let w = |_x: f64, _z: Complex64| Ok(eye(2));
        assert_eq!(transformed_solution(v, w, c(1.0, 1.0), 0.0).unwrap(), eye(2));
    }
}
