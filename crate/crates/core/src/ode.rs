//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems.
//!
//! The state is a flat slice of `Complex64`; matrix-valued problems pack
//! their matrices column-major. Two hooks shape the integration:
//! a step cap that may depend on `x` (used to resolve the `1/(z - x)` peak
//! near the real axis) and an after-step hook that may project the state
//! or abort it.

use num_complex::Complex64;

use crate::{GbdtError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-10, max_steps: 500_000, initial_step: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for OdeStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(x, y)` from `x0` to `x1` in place.
pub fn integrate<F>(f: F, x0: f64, x1: f64, y: &mut [Complex64], opts: &OdeOptions) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    integrate_with(f, x0, x1, y, opts, |_| f64::INFINITY, |_, _| Ok(()))
}

/// Full-control variant: `max_step(x)` caps the step taken from `x`, and
/// `after_step(x, y)` runs after every accepted step.
pub fn integrate_with<F, M, P>(
    mut f: F,
    x0: f64,
    x1: f64,
    y: &mut [Complex64],
    opts: &OdeOptions,
    max_step: M,
    mut after_step: P,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    M: Fn(f64) -> f64,
    P: FnMut(f64, &mut [Complex64]) -> Result<()>,
{
    let mut stats = OdeStats::default();
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(stats);
    }
    let dir = span.signum();
    let dim = y.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut k: [Vec<Complex64>; 7] = std::array::from_fn(|_| vec![zero; dim]);
    let mut tmp = vec![zero; dim];
    let mut y_new = vec![zero; dim];

    let mut x = x0;
    f(x, y, &mut k[0]);
    stats.evaluations += 1;

    let mut h = match opts.initial_step {
        Some(h) => h.abs(),
        None => initial_step(&mut f, x, y, &k[0], dir, opts, &mut tmp, &mut y_new, &mut stats),
    };
    let h_floor = 1e-15 * span.abs().max(x0.abs()).max(1.0);
    let mut last_rejected = false;

    while (x1 - x) * dir > 0.0 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(GbdtError::Integrator { x, reason: format!("step budget of {} exhausted", opts.max_steps) });
        }
        h = h.min(max_step(x)).min((x1 - x).abs());
        let last = (x1 - x).abs() <= h * (1.0 + 1e-12);
        let hs = if last { x1 - x } else { h * dir };

        stage(&mut tmp, y, &k, &[(0, A21)], hs);
        f(x + C2 * hs, &tmp, &mut k[1]);
        stage(&mut tmp, y, &k, &[(0, A31), (1, A32)], hs);
        f(x + C3 * hs, &tmp, &mut k[2]);
        stage(&mut tmp, y, &k, &[(0, A41), (1, A42), (2, A43)], hs);
        f(x + C4 * hs, &tmp, &mut k[3]);
        stage(&mut tmp, y, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)], hs);
        f(x + C5 * hs, &tmp, &mut k[4]);
        stage(&mut tmp, y, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], hs);
        f(x + hs, &tmp, &mut k[5]);
        stage(&mut y_new, y, &k, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], hs);
        f(x + hs, &y_new, &mut k[6]);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..dim {
            let e = hs * (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7);
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / dim.max(1) as f64).sqrt();

        if !err.is_finite() {
            return Err(GbdtError::Integrator { x, reason: "non-finite state".into() });
        }

        if err <= 1.0 {
            x = if last { x1 } else { x + hs };
            y.copy_from_slice(&y_new);
            after_step(x, y)?;
            k.swap(0, 6);
            if !y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(GbdtError::Integrator { x, reason: "non-finite state".into() });
            }
            stats.accepted += 1;
            let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            last_rejected = true;
            if h < h_floor {
                return Err(GbdtError::Integrator { x, reason: format!("step size underflow ({h:.3e})") });
            }
        }
    }
    Ok(stats)
}

fn stage(out: &mut [Complex64], y: &[Complex64], k: &[Vec<Complex64>; 7], terms: &[(usize, f64)], h: f64) {
    for i in 0..y.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(j, a) in terms {
            acc += k[j][i] * a;
        }
        out[i] = y[i] + acc * h;
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    f: &mut F,
    x: f64,
    y: &[Complex64],
    f0: &[Complex64],
    dir: f64,
    opts: &OdeOptions,
    tmp: &mut [Complex64],
    f1: &mut [Complex64],
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let dim = y.len().max(1) as f64;
    let sc = |v: Complex64| opts.atol + opts.rtol * v.norm();
    let d0 = (y.iter().map(|&v| (v.norm() / sc(v)).powi(2)).sum::<f64>() / dim).sqrt();
    let d1 = (y.iter().zip(f0).map(|(&v, &d)| (d.norm() / sc(v)).powi(2)).sum::<f64>() / dim).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    for i in 0..y.len() {
        tmp[i] = y[i] + f0[i] * (h0 * dir);
    }
    f(x + h0 * dir, tmp, f1);
    stats.evaluations += 1;
    let d2 =
        (y.iter().zip(f0.iter().zip(f1.iter())).map(|(&v, (&a, &b))| ((b - a).norm() / sc(v)).powi(2)).sum::<f64>()
            / dim)
            .sqrt()
            / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
