//! Fundamental solutions `w(x, z)` of `w_x = i (z - x)⁻¹ J H(x) w`,
//! `w(0, z) = I`, their boundary values on the cut `(0, l)`, jump
//! verification, and the first Markov parameter `M₁(l) = ∫₀ˡ J H dx`.
//!
//! Boundary values `W±(s) = lim w(l, s ± iη)` are taken along a decreasing
//! `η` sequence and extrapolated to `η = 0` with a Neville table.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::exec::Execution;
use crate::linalg::{eye, fro, guarded_inverse, r, I};
use crate::ode::{integrate_with, OdeOptions};
use crate::types::{HamiltonianField, ResidualReport, SignatureMatrix};
use crate::{json, CMat, GbdtError, Result};

/// `w(x_k, z)` on a grid, with `w(0, z) = I`.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalSolution {
    #[serde(with = "json::complex")]
    pub z: Complex64,
    pub grid: Vec<f64>,
    #[serde(with = "json::matrix_vec")]
    pub values: Vec<CMat>,
}

impl FundamentalSolution {
    pub fn last(&self) -> &CMat {
        self.values.last().expect("non-empty grid")
    }
}

/// `w(x, z) = I + i ln(z / (z - x)) J β*β` for the base system.
pub fn base_fundamental_closed(beta: &CMat, j: &SignatureMatrix, x: f64, z: Complex64) -> CMat {
    let ln = (z / (z - x)).ln();
    eye(j.dim()) + j.matrix() * beta.adjoint() * beta * (I * ln)
}

fn distance_to_segment(z: Complex64, l: f64) -> f64 {
    if z.re < 0.0 {
        z.norm()
    } else if z.re > l {
        (z - l).norm()
    } else {
        z.im.abs()
    }
}

/// Step cap resolving the `1/(z - x)` peak: at most `η/10` within `10η`
/// of `Re z`, and never stepping into that window from outside.
fn peak_step_cap(z: Complex64) -> impl Fn(f64) -> f64 {
    let eta = z.im.abs();
    move |x| {
        let d = (x - z.re).abs();
        if d < 10.0 * eta {
            eta / 10.0
        } else {
            (d - 10.0 * eta).max(eta / 10.0)
        }
    }
}

/// Integrates the fundamental solution to every grid point.
pub fn integrate_fundamental(
    h: &HamiltonianField,
    j: &SignatureMatrix,
    z: Complex64,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<FundamentalSolution> {
    let m = j.dim();
    if h.m() != m {
        return Err(GbdtError::Dimension("H and J dimensions differ".into()));
    }
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GbdtError::InvalidInput("grid must be non-negative and strictly increasing".into()));
    }
    let l = *grid.last().unwrap();
    let distance = distance_to_segment(z, l);
    if distance <= 1e-12 {
        return Err(GbdtError::Proximity { z, distance, l });
    }
    let jm = j.matrix().clone();
    let rhs = |x: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let w = CMat::from_column_slice(m, m, y);
        let d = (&jm * h.eval(x) * w) * (I / (z - x));
        dy.copy_from_slice(d.as_slice());
    };
    let cap = peak_step_cap(z);
    let mut y = eye(m).as_slice().to_vec();
    let mut x = 0.0;
    let mut values = Vec::with_capacity(grid.len());
    for &xk in grid {
        if xk > x {
            integrate_with(rhs, x, xk, &mut y, opts, &cap, |_, _| Ok(())).map_err(|e| match e {
                GbdtError::Integrator { .. } if distance < 1e-3 => GbdtError::Proximity { z, distance, l },
                e => e,
            })?;
            x = xk;
        }
        values.push(if xk == 0.0 { eye(m) } else { CMat::from_column_slice(m, m, &y) });
    }
    Ok(FundamentalSolution { z, grid: grid.to_vec(), values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOptions {
    pub eta: Vec<f64>,
    pub ode: OdeOptions,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self { eta: vec![1e-2, 1e-3, 1e-4], ode: OdeOptions::default() }
    }
}

/// Extrapolated `W±(s)` with error estimates.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryValues {
    pub s: f64,
    #[serde(rename = "W_plus", with = "json::matrix")]
    pub plus: CMat,
    #[serde(rename = "W_minus", with = "json::matrix")]
    pub minus: CMat,
    pub plus_error: f64,
    pub minus_error: f64,
    pub eta: Vec<f64>,
}

impl BoundaryValues {
    pub fn error(&self) -> f64 {
        self.plus_error.max(self.minus_error)
    }
}

/// Polynomial extrapolation of `samples[k] ≈ W(eta[k])` to `η = 0`.
/// The error estimate is the gap between the two highest-order entries of
/// the table plus an integration noise floor.
fn extrapolate(s: f64, eta: &[f64], samples: &[CMat], noise: f64) -> Result<(CMat, f64)> {
    let diffs: Vec<f64> = samples.windows(2).map(|w| fro(&(&w[1] - &w[0]))).collect();
    for w in diffs.windows(2) {
        if w[1] > w[0] && w[1] > noise {
            return Err(GbdtError::LimitDivergence { s, differences: diffs.clone() });
        }
    }
    let n = samples.len();
    let mut table: Vec<CMat> = samples.to_vec();
    let mut prev_top = table[n - 1].clone();
    for k in 1..n {
        prev_top = table[n - 1].clone();
        for i in (k..n).rev() {
            let factor = eta[i] / (eta[i - k] - eta[i]);
            table[i] = &table[i] + (&table[i] - &table[i - 1]) * r(factor);
        }
    }
    let top = table[n - 1].clone();
    let err = fro(&(&top - prev_top)) + noise;
    Ok((top, err))
}

/// `W±(s) = lim_{η→0} w(l, s ± iη)`.
pub fn boundary_values(
    h: &HamiltonianField,
    j: &SignatureMatrix,
    s: f64,
    opts: &BoundaryOptions,
) -> Result<BoundaryValues> {
    let l = h.l();
    if !(s > 0.0 && s < l) {
        return Err(GbdtError::InvalidInput(format!("s = {s} must lie strictly inside (0, {l})")));
    }
    if opts.eta.len() < 3 || opts.eta.iter().any(|&e| !(e > 0.0)) || opts.eta.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(GbdtError::InvalidInput("eta sequence needs >= 3 decreasing positive values".into()));
    }
    let grid = [l];
    let side = |sign: f64| -> Result<(CMat, f64)> {
        let samples = opts
            .eta
            .iter()
            .map(|&eta| {
                integrate_fundamental(h, j, Complex64::new(s, sign * eta), &grid, &opts.ode).map(|f| f.last().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = samples.iter().map(fro).fold(1.0, f64::max);
        extrapolate(s, &opts.eta, &samples, 10.0 * opts.ode.rtol * scale)
    };
    let (plus, plus_error) = side(1.0)?;
    let (minus, minus_error) = side(-1.0)?;
    Ok(BoundaryValues { s, plus, minus, plus_error, minus_error, eta: opts.eta.clone() })
}

/// Boundary values and the squared jump on an `s` grid.
#[derive(Debug, Clone, Serialize)]
pub struct JumpData {
    pub s_grid: Vec<f64>,
    #[serde(rename = "W_plus", with = "json::matrix_vec")]
    pub w_plus: Vec<CMat>,
    #[serde(rename = "W_minus", with = "json::matrix_vec")]
    pub w_minus: Vec<CMat>,
    #[serde(rename = "R_squared", with = "json::matrix_vec")]
    pub r_squared: Vec<CMat>,
    pub eta_sequence: Vec<f64>,
    pub extrapolation_error: Vec<f64>,
}

impl JumpData {
    pub fn from_boundary_values(values: Vec<BoundaryValues>, jumps: Vec<CMat>, eta: Vec<f64>) -> Self {
        let mut out = JumpData {
            s_grid: Vec::new(),
            w_plus: Vec::new(),
            w_minus: Vec::new(),
            r_squared: Vec::new(),
            eta_sequence: eta,
            extrapolation_error: Vec::new(),
        };
        for (bv, rj) in values.into_iter().zip(jumps) {
            out.s_grid.push(bv.s);
            out.extrapolation_error.push(bv.error());
            out.w_plus.push(bv.plus);
            out.w_minus.push(bv.minus);
            out.r_squared.push(&rj * &rj);
        }
        out
    }

    /// Same boundary values against another jump.
    pub fn with_jump<F>(&self, jump: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<CMat>,
    {
        let r_squared = self.s_grid.iter().map(|&s| jump(s).map(|rj| &rj * &rj)).collect::<Result<Vec<_>>>()?;
        Ok(Self { r_squared, ..self.clone() })
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.w_plus
            .iter()
            .zip(&self.w_minus)
            .zip(&self.r_squared)
            .map(|((wp, wm), r2)| {
                let rhs = wm * r2;
                fro(&(wp - &rhs)) / fro(&rhs)
            })
            .collect()
    }

    /// Columns `s,residual,extrapolation_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,residual,extrapolation_error\n");
        for ((s, res), err) in self.s_grid.iter().zip(self.residuals()).zip(&self.extrapolation_error) {
            out.push_str(&format!("{s},{res},{err}\n"));
        }
        out
    }
}

/// Boundary values at every `s` (in parallel when requested) with the
/// jump `R(s)` squared alongside.
pub fn jump_data<F>(
    h: &HamiltonianField,
    j: &SignatureMatrix,
    s_grid: &[f64],
    jump: F,
    opts: &BoundaryOptions,
    exec: Execution,
) -> Result<JumpData>
where
    F: Fn(f64) -> Result<CMat> + Sync + Send,
{
    let pairs = exec.try_map(s_grid, |&s| Ok((boundary_values(h, j, s, opts)?, jump(s)?)))?;
    let (values, jumps) = pairs.into_iter().unzip();
    Ok(JumpData::from_boundary_values(values, jumps, opts.eta.clone()))
}

/// Relative residual `‖W₊ - W₋R²‖ / ‖W₋R²‖` per `s`.
pub fn verify_jump(jump: &JumpData, tol: f64) -> ResidualReport {
    ResidualReport::new("jump", jump.s_grid.clone(), jump.residuals(), tol)
}

/// `R̃(s) = v(0, s) R(s) v(0, s)⁻¹`.
pub fn transformed_jump_via_v<V, R>(v0: V, r_jump: R) -> impl Fn(f64) -> Result<CMat>
where
    V: Fn(f64) -> Result<CMat>,
    R: Fn(f64) -> Result<CMat>,
{
    move |s| {
        let v = v0(s)?;
        let v_inv = guarded_inverse(&v)
            .map_err(|_| GbdtError::Singularity { x: 0.0, what: format!("v(0, {s}) is singular") })?;
        Ok(&v * r_jump(s)? * v_inv)
    }
}

/// `W̃±(s) = v(l, s) W±(s) v(0, s)⁻¹`.
pub fn transformed_boundary_values(bv: &BoundaryValues, v_l: &CMat, v_0: &CMat) -> Result<BoundaryValues> {
    let v0_inv = guarded_inverse(v_0)
        .map_err(|_| GbdtError::Singularity { x: 0.0, what: format!("v(0, {}) is singular", bv.s) })?;
    let gain = fro(v_l) * fro(&v0_inv);
    Ok(BoundaryValues {
        s: bv.s,
        plus: v_l * &bv.plus * &v0_inv,
        minus: v_l * &bv.minus * &v0_inv,
        plus_error: bv.plus_error * gain,
        minus_error: bv.minus_error * gain,
        eta: bv.eta.clone(),
    })
}

/// Base jump `R = I + π J β*β`.
pub fn base_jump(beta: &CMat, j: &SignatureMatrix) -> CMat {
    eye(j.dim()) + j.matrix() * beta.adjoint() * beta * r(PI)
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovParameter {
    #[serde(with = "json::matrix")]
    pub m1: CMat,
    /// `i (m₂₂ - m₁₁)` when `m = 2`.
    #[serde(with = "json::option_complex")]
    pub log_derivative: Option<Complex64>,
    pub nodes: usize,
    /// Change under node doubling.
    pub self_convergence: f64,
}

fn simpson(h: &HamiltonianField, j: &SignatureMatrix, nodes: usize) -> CMat {
    let l = h.l();
    let step = l / (nodes - 1) as f64;
    let mut acc = CMat::zeros(j.dim(), j.dim());
    for k in 0..nodes {
        let w = if k == 0 || k == nodes - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += h.eval(k as f64 * step) * r(w);
    }
    j.matrix() * acc * r(step / 3.0)
}

/// `M₁(l) = ∫₀ˡ J H(x) dx` by composite Simpson with at least 201 nodes.
pub fn markov_m1(h: &HamiltonianField, j: &SignatureMatrix) -> Result<MarkovParameter> {
    markov_m1_with(h, j, 201)
}

pub fn markov_m1_with(h: &HamiltonianField, j: &SignatureMatrix, nodes: usize) -> Result<MarkovParameter> {
    if h.m() != j.dim() {
        return Err(GbdtError::Dimension("H and J dimensions differ".into()));
    }
    let mut nodes = nodes.max(201);
    if nodes.is_multiple_of(2) {
        nodes += 1;
    }
    let m1 = simpson(h, j, nodes);
    let fine = simpson(h, j, 2 * nodes - 1);
    let log_derivative = (j.dim() == 2).then(|| I * (m1[(1, 1)] - m1[(0, 0)]));
    Ok(MarkovParameter { self_convergence: fro(&(&fine - &m1)), m1, log_derivative, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::BaseSystem;
    use crate::linalg::c;

    fn base() -> (BaseSystem, HamiltonianField) {
        let b = BaseSystem::new();
        let f = b.field(1.0);
        (b, f)
    }

    #[test]
    fn normalization_at_zero() {
        let (b, f) = base();
        let sol = integrate_fundamental(&f, &b.j, c(2.0, 0.5), &[0.0, 0.5, 1.0], &OdeOptions::default()).unwrap();
        assert_eq!(sol.values[0], eye(2));
    }

    #[test]
    fn closed_form_at_sample_point() {
        let (b, f) = base();
        let z = c(2.0, 0.5);
        let sol = integrate_fundamental(&f, &b.j, z, &[1.0], &OdeOptions::default()).unwrap();
        let oracle = base_fundamental_closed(&b.beta, &b.j, 1.0, z);
        assert!(fro(&(sol.last() - oracle)) < 1e-6);
        let bw = &b.beta * sol.last();
        assert!(fro(&(bw - &b.beta)) < 1e-8);
    }

    #[test]
    fn large_z_gives_identity() {
        let (b, f) = base();
        let sol = integrate_fundamental(&f, &b.j, c(1e8, 0.0), &[1.0], &OdeOptions::default()).unwrap();
        assert!(fro(&(sol.last() - eye(2))) < 1e-6);
    }

    #[test]
    fn z_on_the_segment_is_rejected() {
        let (b, f) = base();
        let res = integrate_fundamental(&f, &b.j, c(0.5, 0.0), &[1.0], &OdeOptions::default());
        assert!(matches!(res, Err(GbdtError::Proximity { .. })));
    }

    #[test]
    fn base_boundary_values_at_midpoint() {
        let (b, f) = base();
        let bv = boundary_values(&f, &b.j, 0.5, &BoundaryOptions::default()).unwrap();
        let bj = &b.beta * b.j.matrix();
        let lhs = &bj * &bv.plus;
        let expected = &b.beta * r(2.0 * PI) + &bj;
        assert!(fro(&(lhs - expected)) < 1e-5);
        assert!(fro(&(&b.beta * &bv.plus - &b.beta)) < 1e-6);
        assert!(fro(&(&b.beta * &bv.minus - &b.beta)) < 1e-6);
        let gap = &bv.plus - &bv.minus - b.j.matrix() * &b.h * r(2.0 * PI);
        assert!(fro(&gap) < 1e-5);
    }

    #[test]
    fn base_jump_verifies_and_wrong_jump_fails() {
        let (b, f) = base();
        let s = [0.25, 0.5, 0.75];
        let rj = base_jump(&b.beta, &b.j);
        let data =
            jump_data(&f, &b.j, &s, |_| Ok(rj.clone()), &BoundaryOptions::default(), Execution::default()).unwrap();
        let rep = verify_jump(&data, 1e-5);
        assert!(rep.pass, "{:?}", rep.residuals);
        let wrong = data.with_jump(|_| Ok(eye(2))).unwrap();
        let rep = verify_jump(&wrong, 1e-5);
        assert!(!rep.pass);
        assert!(rep.residuals.iter().all(|&x| x > 0.1));
        let csv = data.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("s,residual,extrapolation_error\n"));
    }

    #[test]
    fn divergent_sequence_detected() {
        let samples = vec![eye(2), eye(2) * r(1.001), eye(2) * r(1.1)];
        let res = extrapolate(0.5, &[1e-2, 1e-3, 1e-4], &samples, 1e-12);
        assert!(matches!(res, Err(GbdtError::LimitDivergence { .. })));
    }

    #[test]
    fn extrapolation_is_exact_for_quadratics() {
        let eta = [1e-2, 1e-3, 1e-4];
        let samples: Vec<CMat> = eta.iter().map(|&e| eye(2) * r(1.0 + 3.0 * e - 7.0 * e * e)).collect();
        let (top, _) = extrapolate(0.5, &eta, &samples, 0.0).unwrap();
        assert!(fro(&(top - eye(2))) < 1e-13);
    }

    #[test]
    fn conjugation_by_identity_keeps_jump() {
        let (b, _) = base();
        let rj = base_jump(&b.beta, &b.j);
        let rj2 = rj.clone();
        let f = transformed_jump_via_v(|_| Ok(eye(2)), move |_| Ok(rj2.clone()));
        assert_eq!(f(0.3).unwrap(), rj);
    }

    #[test]
    fn markov_parameter_of_base_system() {
        let (b, f) = base();
        let mp = markov_m1(&f, &b.j).unwrap();
        let expected = CMat::from_row_slice(2, 2, &[-I, r(1.0), r(1.0), I]);
        assert!(fro(&(&mp.m1 - expected)) < 1e-12);
        assert!((mp.log_derivative.unwrap() - r(-2.0)).norm() < 1e-12);
        let zero = HamiltonianField::callback(2, 1.0, |_| CMat::zeros(2, 2));
        assert_eq!(markov_m1(&zero, &b.j).unwrap().m1, CMat::zeros(2, 2));
    }
}
