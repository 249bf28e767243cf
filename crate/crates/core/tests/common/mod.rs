#![allow(dead_code)]

use gbdt::linalg::{c, eigen_decomposition, eye, guarded_inverse, r, I};
use gbdt::Complex64;
use gbdt::{CMat, GbdtTriple, SignatureMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cnormal(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) * scale)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> CMat {
    CMat::from_fn(n, m, |_, _| cnormal(rng, scale))
}

/// `A(0) = (½ i Π J Π* + X) S⁻¹` with `X` Hermitian and `S(0) > 0`, which
/// satisfies the identity exactly. Resampled while `B = A(0)⁻¹` has an
/// eigenvalue within 0.05 of `[0, l]`.
pub fn random_admissible_triple(rng: &mut ChaCha8Rng, n: usize, l: f64) -> GbdtTriple {
    let j = SignatureMatrix::off_diagonal();
    loop {
        let y = random_matrix(rng, n, n, 1.0);
        let s = &y * y.adjoint() + eye(n) * r(0.5);
        let pi = random_matrix(rng, n, 2, 0.7);
        let x = random_matrix(rng, n, n, 1.0);
        let x = (&x + x.adjoint()) * r(0.5);
        let s_inv = guarded_inverse(&s).unwrap();
        let a = (&pi * j.matrix() * pi.adjoint() * (I * 0.5) + x) * s_inv;
        let Ok(b) = guarded_inverse(&a) else { continue };
        let Ok((d, _)) = eigen_decomposition(&b) else { continue };
        let near = d.iter().any(|z| {
            let re = z.re.clamp(0.0, l);
            (z - re).norm() < 0.05
        });
        if near {
            continue;
        }
        return GbdtTriple::new(a, s, pi, 0.0, &j).expect("identity holds by construction");
    }
}

/// Complex point with distance > `min_dist` from `[0, l]`.
pub fn random_z(rng: &mut ChaCha8Rng, l: f64, min_dist: f64) -> Complex64 {
    loop {
        let z = c(rng.random_range(-2.0..3.0), rng.random_range(-2.0..2.0));
        let re = z.re.clamp(0.0, l);
        if (z - re).norm() > min_dist {
            return z;
        }
    }
}

pub fn grid(l: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| l * k as f64 / (points - 1) as f64).collect()
}

/// Synthetic realization: random `α` with eigenvalues at `Im ≥ 0.3`,
/// random `θ`, `S₀ > 0` from the identity. Resampled until the recovery on
/// `[0, l]` succeeds with `‖H̃‖ ≤ 1e3`.
pub fn synthetic_realization(
    rng: &mut ChaCha8Rng,
    n: usize,
    l: f64,
) -> (gbdt::inverse::InnerRealization, gbdt::inverse::Recovery) {
    use gbdt::inverse::{build_gbdt_data, recover_hamiltonian_and_jump, InnerRealization, Theta2Choice};
    loop {
        let alpha = random_matrix(rng, n, n, 1.0);
        let Ok((d, _)) = eigen_decomposition(&alpha) else { continue };
        if d.iter().any(|z| z.im < 0.3) {
            continue;
        }
        let theta = (0..n).map(|_| cnormal(rng, 1.0)).collect();
        let Ok(real) = InnerRealization::from_alpha_theta(alpha, theta) else { continue };
        let Ok(data) = build_gbdt_data(&real, &Theta2Choice::Auto) else { continue };
        if gbdt::linalg::min_hermitian_eigenvalue(&real.s0) <= 0.0 {
            continue;
        }
        let Ok(rec) = recover_hamiltonian_and_jump(&data.split, &real, &eye(2), l) else { continue };
        let tame =
            grid(l, 101).iter().all(|&x| rec.hamiltonian_at(x).map(|h| gbdt::linalg::fro(&h) <= 1e3).unwrap_or(false));
        if tame {
            return (real, rec);
        }
    }
}
