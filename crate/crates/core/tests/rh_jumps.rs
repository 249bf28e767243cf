mod common;

use std::sync::Arc;

use common::{grid, random_z, rng};
use gbdt::engine::GaugeMatrix;
use gbdt::explicit::{BaseSystem, ExplicitFamily, ExplicitFamilyParams};
use gbdt::linalg::{c, eye, fro, r};
use gbdt::ode::OdeOptions;
use gbdt::rh::{
    base_fundamental_closed, base_jump, boundary_values, integrate_fundamental, jump_data, markov_m1,
    transformed_boundary_values, transformed_jump_via_v, verify_jump, BoundaryOptions,
};
use gbdt::{Execution, GbdtError};

const S_POINTS: [f64; 3] = [0.25, 0.5, 0.75];

#[test]
fn base_solution_matches_closed_form_off_the_cut() {
    let base = BaseSystem::new();
    let field = base.field(1.0);
    let xs = grid(1.0, 11);
    let mut g = rng(21);
    for _ in 0..20 {
        let z = random_z(&mut g, 1.0, 0.1);
        let sol = integrate_fundamental(&field, &base.j, z, &xs, &OdeOptions::default()).unwrap();
        for (w, &x) in sol.values.iter().zip(&xs) {
            let oracle = base_fundamental_closed(&base.beta, &base.j, x, z);
            assert!(fro(&(w - &oracle)) < 1e-6, "z = {z}, x = {x}");
            assert!(fro(&(&base.beta * w - &base.beta)) < 1e-8);
            assert!(fro(&(&base.beta * &oracle - &base.beta)) < 1e-14);
        }
    }
}

#[test]
fn extrapolation_agrees_with_a_finer_sequence() {
    let base = BaseSystem::new();
    let field = base.field(1.0);
    let coarse = boundary_values(&field, &base.j, 0.4, &BoundaryOptions::default()).unwrap();
    let fine_opts = BoundaryOptions { eta: vec![1e-3, 1e-4, 1e-5], ..BoundaryOptions::default() };
    let fine = boundary_values(&field, &base.j, 0.4, &fine_opts).unwrap();
    assert!(fro(&(&coarse.plus - &fine.plus)) < 10.0 * coarse.plus_error);
    assert!(fro(&(&coarse.minus - &fine.minus)) < 10.0 * coarse.minus_error);
}

#[test]
fn unit_mode_transformed_jump_direct_route() {
    let fam = ExplicitFamily::new(ExplicitFamilyParams::unit_mode()).unwrap();
    let field = fam.transformed_field();
    let j = fam.base().j.clone();
    let data =
        jump_data(&field, &j, &S_POINTS, |s| fam.jump(s), &BoundaryOptions::default(), Execution::default()).unwrap();
    let rep = verify_jump(&data, 1e-4);
    assert!(rep.pass, "{:?}", rep.residuals);
    for s in S_POINTS {
        let d = fam.jump(s).unwrap() - eye(2);
        assert!(fro(&(&d * &d)) < 1e-10);
    }
}

#[test]
fn unit_mode_jump_routes_agree() {
    let fam = ExplicitFamily::new(ExplicitFamilyParams::unit_mode()).unwrap();
    let base = BaseSystem::new();
    let gauge = GaugeMatrix::closed_form(Arc::new(fam.clone()), &[0.0, 1.0], &eye(2)).unwrap();
    let rj = base_jump(&base.beta, &base.j);
    let via_v = transformed_jump_via_v(|s| gauge.multiplier(0.0, r(s)), |_| Ok(rj.clone()));
    for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let a = via_v(s).unwrap();
        let b = fam.jump(s).unwrap();
        assert!(fro(&(&a - &b)) < 1e-6, "s = {s}");
    }
    // W̃± through v(l, s) W± v(0, s)⁻¹ against direct integration of the transformed system
    let field = fam.transformed_field();
    for s in S_POINTS {
        let bv = boundary_values(&base.field(1.0), &base.j, s, &BoundaryOptions::default()).unwrap();
        let v_l = gauge.multiplier(1.0, r(s)).unwrap();
        let v_0 = gauge.multiplier(0.0, r(s)).unwrap();
        let routed = transformed_boundary_values(&bv, &v_l, &v_0).unwrap();
        let direct = boundary_values(&field, &base.j, s, &BoundaryOptions::default()).unwrap();
        let scale = fro(&direct.plus).max(1.0);
        assert!(fro(&(&routed.plus - &direct.plus)) < 1e-4 * scale);
        assert!(fro(&(&routed.minus - &direct.minus)) < 1e-4 * scale);
    }
}

#[test]
fn boundary_values_reject_bad_input() {
    let base = BaseSystem::new();
    let field = base.field(1.0);
    assert!(boundary_values(&field, &base.j, 1.0, &BoundaryOptions::default()).is_err());
    let short = BoundaryOptions { eta: vec![1e-2, 1e-3], ..BoundaryOptions::default() };
    assert!(matches!(boundary_values(&field, &base.j, 0.5, &short), Err(GbdtError::InvalidInput(_))));
}

#[test]
fn markov_parameter_of_unit_mode_is_self_consistent() {
    let fam = ExplicitFamily::new(ExplicitFamilyParams::unit_mode()).unwrap();
    let mp = markov_m1(&fam.transformed_field(), &fam.base().j).unwrap();
    assert!(mp.self_convergence < 1e-8, "{}", mp.self_convergence);
    assert!(mp.nodes >= 201);
}

#[test]
fn jump_csv_and_json_shapes() {
    let base = BaseSystem::new();
    let rj = base_jump(&base.beta, &base.j);
    let data = jump_data(
        &base.field(1.0),
        &base.j,
        &[0.5],
        |_| Ok(rj.clone()),
        &BoundaryOptions::default(),
        Execution::Sequential,
    )
    .unwrap();
    let json = serde_json::to_value(&data).unwrap();
    for key in ["s_grid", "W_plus", "W_minus", "R_squared", "eta_sequence", "extrapolation_error"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let line = data.to_csv().lines().nth(1).unwrap().to_string();
    assert_eq!(line.split(',').count(), 3);
    let sol =
        integrate_fundamental(&base.field(1.0), &base.j, c(2.0, 0.5), &[0.0, 1.0], &OdeOptions::default()).unwrap();
    let json = serde_json::to_value(&sol).unwrap();
    assert_eq!(json["values"].as_array().unwrap().len(), 2);
}
