use gbdt::engine::{evolve_triple, gauge_w0, gauge_w0_ode, transformed_hamiltonian, EvolveOptions, GaugeMatrix};
use gbdt::explicit::{explicit_triple, BaseSystem, ExplicitFamily};
use gbdt::inverse::{
    build_gbdt_data, inverse_realization_residual, recover_hamiltonian_and_jump, unimodularity_samples, Theta2Choice,
};
use gbdt::linalg::{eye, fro, min_hermitian_eigenvalue, r};
use gbdt::rh::{base_jump, boundary_values, transformed_boundary_values, verify_jump, BoundaryOptions, JumpData};
use gbdt::{
    check_material_identity, CMat, Execution, GbdtError, GbdtTriple, HamiltonianField, ResidualReport, SignatureMatrix,
};
use log::{debug, info};

use crate::config::{
    ConfigError, HamiltonianInput, InvertConfig, JumpConfig, JumpModel, JumpRoute, TransformRoute, TripleConfig,
};
use crate::output::{csv_table, matrix_fields, matrix_header, Artifact, Report};

/// Flag overrides shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub tolerance_scale: f64,
    pub grid_points: Option<usize>,
}

pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
    pub exit_code: u8,
}

/// Bad input maps to 2, everything found while computing maps to 1.
pub fn exit_code_for(e: &GbdtError) -> u8 {
    match e {
        GbdtError::Dimension(_)
        | GbdtError::InvalidInput(_)
        | GbdtError::NotJUnitary { .. }
        | GbdtError::DegenerateRealization(_)
        | GbdtError::DegenerateSpectrum { .. }
        | GbdtError::Branch { .. } => 2,
        _ => 1,
    }
}

fn finish(mut report: Report, result: gbdt::Result<Vec<Artifact>>) -> Outcome {
    match result {
        Ok(artifacts) => {
            let exit_code = if report.pass { 0 } else { 1 };
            Outcome { report, artifacts, exit_code }
        }
        Err(e) => {
            info!("{}: {e}", report.command);
            report.fail_with(&e);
            Outcome { exit_code: exit_code_for(&e), report, artifacts: Vec::new() }
        }
    }
}

fn uniform(l: f64, points: usize) -> Result<Vec<f64>, ConfigError> {
    if points < 2 {
        return Err(ConfigError::Invalid(format!("grid needs at least 2 points, got {points}")));
    }
    Ok((0..points).map(|k| l * k as f64 / (points - 1) as f64).collect())
}

fn interior(l: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| l * k as f64 / (points + 1) as f64).collect()
}

fn length(l: Option<f64>) -> Result<f64, ConfigError> {
    let l = l.unwrap_or(1.0);
    if l > 0.0 && l.is_finite() {
        Ok(l)
    } else {
        Err(ConfigError::Invalid(format!("l must be positive, got {l}")))
    }
}

fn check_tolerance(t: Option<f64>) -> Result<(), ConfigError> {
    match t {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            Err(ConfigError::Invalid(format!("tolerance must be positive, got {t}")))
        }
        _ => Ok(()),
    }
}

/// Triple, Hamiltonian and signature at `x = 0`.
struct Setup {
    t0: GbdtTriple,
    h: HamiltonianField,
    j: SignatureMatrix,
    u: CMat,
    family: Option<ExplicitFamily>,
}

fn setup(cfg: &TripleConfig) -> gbdt::Result<Setup> {
    if let Some(p) = &cfg.family {
        let fam = ExplicitFamily::new(p.clone())?;
        let base = fam.base().clone();
        return Ok(Setup {
            t0: explicit_triple(p, 0.0)?,
            h: base.field(p.l),
            j: base.j,
            u: p.u.clone(),
            family: Some(fam),
        });
    }
    let t = cfg.triple.as_ref().expect("checked by TripleConfig::check");
    let l = cfg.l.unwrap_or(1.0);
    let j = match &cfg.j {
        Some(j) => SignatureMatrix::new(j.clone())?,
        None => SignatureMatrix::off_diagonal(),
    };
    let h = cfg.hamiltonian.clone().unwrap_or(HamiltonianInput::Base {}).build(l)?;
    let u = cfg.u.clone().unwrap_or_else(|| eye(j.dim()));
    let t0 = GbdtTriple::unverified(t.a.clone(), t.s.clone(), t.pi.clone(), 0.0)?;
    Ok(Setup { t0, h, j, u, family: None })
}

fn triple_grid(cfg: &TripleConfig, ctx: Context) -> Result<usize, ConfigError> {
    cfg.check()?;
    check_tolerance(cfg.tolerance)?;
    if cfg.family.is_none() {
        length(cfg.l)?;
    }
    Ok(ctx.grid_points.or(cfg.grid_points).unwrap_or(101))
}

/// Returns false (after recording the failed check) when the initial
/// triple violates the identity.
fn initial_identity(report: &mut Report, s: &Setup, tol: f64) -> gbdt::Result<bool> {
    let mut init = check_material_identity(&s.t0, &s.j, tol)?;
    init.name = "material_identity_initial".into();
    let pass = init.pass;
    report.push(init);
    Ok(pass)
}

pub fn verify_identity(cfg: &TripleConfig, ctx: Context) -> Result<Outcome, ConfigError> {
    let points = triple_grid(cfg, ctx)?;
    let mut report = Report::new("verify-identity", ctx.tolerance_scale);
    let tol = report.tolerance("material_identity", cfg.tolerance.unwrap_or(1e-7));
    let positivity_tol = report.tolerance("s_positive", 1e-12);
    let closed_tol = cfg.family.as_ref().map(|_| report.tolerance("closed_form", 1e-6));
    let l = cfg.family.as_ref().map_or(cfg.l.unwrap_or(1.0), |p| p.l);
    let grid = uniform(l, points)?;
    let result = (|| {
        let s = setup(cfg)?;
        if !initial_identity(&mut report, &s, tol)? {
            return Ok(Vec::new());
        }
        info!("evolving n = {} triple over {} points", s.t0.n(), grid.len());
        let traj = evolve_triple(&s.t0, &s.h, &s.j, &grid, &EvolveOptions::default())?;
        let residuals: Vec<f64> = traj.states.iter().map(|t| fro(&t.identity_defect(&s.j))).collect();
        report.push(ResidualReport::new("material_identity", grid.clone(), residuals.clone(), tol));
        let s_min = traj.s_min_eigenvalues();
        if s_min[0] > 0.0 {
            let losses = s_min.iter().map(|v| (-v).max(0.0)).collect();
            report.push(ResidualReport::new("s_positive", grid.clone(), losses, positivity_tol));
        }
        if let (Some(fam), Some(tol)) = (&s.family, closed_tol) {
            let mut drift = Vec::with_capacity(grid.len());
            for t in &traj.states {
                let closed = explicit_triple(&fam.params, t.x)?;
                let scale = 1.0 + fro(&closed.s) + fro(&closed.pi);
                drift.push((fro(&(&t.s - &closed.s)) + fro(&(&t.pi - &closed.pi))) / scale);
            }
            report.push(ResidualReport::new("closed_form", grid.clone(), drift, tol));
        }
        let rows: Vec<Vec<String>> = grid
            .iter()
            .zip(&residuals)
            .zip(&s_min)
            .map(|((x, res), ev)| vec![x.to_string(), res.to_string(), ev.to_string()])
            .collect();
        let header = ["x", "identity_residual", "s_min_eigenvalue"].map(String::from);
        let table = csv_table(&header, &rows).map_err(|e| GbdtError::InvalidInput(e.to_string()))?;
        Ok(vec![Artifact { name: "identity.csv".into(), contents: table }])
    })();
    Ok(finish(report, result))
}

/// `‖H̃ J H̃‖` is checked only for Hamiltonians `β*β` with `βJβ* = 0`.
fn nilpotent_input(s: &Setup) -> bool {
    match s.h.rank_one_factor() {
        Some(beta) => fro(&(beta * s.j.matrix() * beta.adjoint())) < 1e-12,
        None => false,
    }
}

pub fn transform(cfg: &TripleConfig, ctx: Context) -> Result<Outcome, ConfigError> {
    let points = triple_grid(cfg, ctx)?;
    let route = cfg.route.unwrap_or_default();
    let mut report = Report::new("transform", ctx.tolerance_scale);
    let tol = report.tolerance("material_identity", cfg.tolerance.unwrap_or(1e-7));
    let structure_tol = report.tolerance("structure", cfg.tolerance.unwrap_or(1e-7));
    let nil_tol = report.tolerance("nilpotent", 1e-9);
    let l = cfg.family.as_ref().map_or(cfg.l.unwrap_or(1.0), |p| p.l);
    let grid = uniform(l, points)?;
    let result = (|| {
        let s = setup(cfg)?;
        if !initial_identity(&mut report, &s, tol)? {
            return Ok(Vec::new());
        }
        let samples: Vec<CMat> = match (&s.family, route) {
            (Some(fam), TransformRoute::ClosedForm) => {
                fam.check_interval(&grid)?;
                Execution::default().try_map(&grid, |&x| fam.hamiltonian_at(x))?
            }
            _ => {
                let traj = evolve_triple(&s.t0, &s.h, &s.j, &grid, &EvolveOptions::default())?;
                let gauge: GaugeMatrix = match route {
                    TransformRoute::ClosedForm => gauge_w0(&traj, &s.u)?,
                    TransformRoute::Ode => gauge_w0_ode(&traj, &s.u)?,
                };
                debug!("gauge route {:?}", gauge.route);
                let mut ju = gauge.j_unitarity(structure_tol);
                ju.name = "gauge_j_unitary".into();
                report.push(ju);
                let field = transformed_hamiltonian(&gauge, &s.h);
                grid.iter().map(|&x| field.eval(x)).collect()
            }
        };
        if let (Some(fam), TransformRoute::Ode) = (&s.family, route) {
            let closed_tol = report.tolerance("closed_form", 1e-6);
            let mut diff = Vec::with_capacity(grid.len());
            for (&x, h) in grid.iter().zip(&samples) {
                diff.push(fro(&(h - fam.hamiltonian_at(x)?)));
            }
            report.push(ResidualReport::new("closed_form", grid.clone(), diff, closed_tol));
        }
        let scale = |h: &CMat| fro(h).max(1.0);
        let herm: Vec<f64> = samples.iter().map(|h| fro(&(h - h.adjoint())) / scale(h)).collect();
        let psd: Vec<f64> = samples.iter().map(|h| (-min_hermitian_eigenvalue(h)).max(0.0) / scale(h)).collect();
        report.push(ResidualReport::new("hermitian", grid.clone(), herm.clone(), structure_tol));
        report.push(ResidualReport::new("positive", grid.clone(), psd.clone(), structure_tol));
        if s.family.is_some() || nilpotent_input(&s) {
            let nil = samples.iter().map(|h| fro(&(h * s.j.matrix() * h)) / scale(h).powi(2)).collect();
            report.push(ResidualReport::new("nilpotent", grid.clone(), nil, nil_tol));
        }
        let m = s.j.dim();
        let header =
            [vec!["x".to_string()], matrix_header("h", m, m), vec!["hermitian".into(), "positive".into()]].concat();
        let rows: Vec<Vec<String>> = grid
            .iter()
            .zip(&samples)
            .zip(herm.iter().zip(&psd))
            .map(|((x, h), (he, ps))| {
                [
                    vec![x.to_string()],
                    matrix_fields(h),
                    vec![(*he < structure_tol).to_string(), (*ps < structure_tol).to_string()],
                ]
                .concat()
            })
            .collect();
        let table = csv_table(&header, &rows).map_err(|e| GbdtError::InvalidInput(e.to_string()))?;
        Ok(vec![Artifact { name: "hamiltonian.csv".into(), contents: table }])
    })();
    Ok(finish(report, result))
}

pub fn jump(cfg: &JumpConfig, ctx: Context) -> Result<Outcome, ConfigError> {
    check_tolerance(cfg.tolerance)?;
    let l = match &cfg.family {
        Some(_) if cfg.l.is_some() => return Err(ConfigError::Invalid("\"family\" fixes l; drop \"l\"".into())),
        Some(p) => p.l,
        None => length(cfg.l)?,
    };
    let route = cfg.route.unwrap_or_default();
    if route == JumpRoute::ViaV && cfg.family.is_none() {
        return Err(ConfigError::Invalid("route \"via-v\" needs a \"family\"".into()));
    }
    let s_grid = match (ctx.grid_points, &cfg.s) {
        (Some(n), _) => interior(l, n),
        (None, Some(s)) => s.clone(),
        (None, None) => vec![0.25 * l, 0.5 * l, 0.75 * l],
    };
    if s_grid.is_empty() {
        return Err(ConfigError::Invalid("empty s grid".into()));
    }
    let opts = BoundaryOptions {
        eta: cfg.eta.clone().unwrap_or_else(|| BoundaryOptions::default().eta),
        ..Default::default()
    };
    let model = cfg.jump.unwrap_or_default();
    let mut report = Report::new("jump", ctx.tolerance_scale);
    let default_tol = if cfg.family.is_some() { 1e-4 } else { 1e-5 };
    let tol = report.tolerance("jump", cfg.tolerance.unwrap_or(default_tol));
    let nil_tol = (model == JumpModel::Model).then(|| report.tolerance("jump_nilpotent", 1e-10));
    let exec = Execution::default();
    let result = (|| {
        let base = BaseSystem::new();
        let base_r = base_jump(&base.beta, &base.j);
        let base_field = base.field(l);
        let fam = cfg.family.clone().map(ExplicitFamily::new).transpose()?;
        info!("boundary values at {} points", s_grid.len());
        let (values, model_jumps) = match (&fam, route) {
            (None, _) => {
                let values = exec.try_map(&s_grid, |&s| boundary_values(&base_field, &base.j, s, &opts))?;
                (values, vec![base_r.clone(); s_grid.len()])
            }
            (Some(fam), JumpRoute::Direct) => {
                let field = fam.transformed_field();
                let values = exec.try_map(&s_grid, |&s| boundary_values(&field, &base.j, s, &opts))?;
                let jumps = s_grid.iter().map(|&s| fam.jump(s)).collect::<gbdt::Result<Vec<_>>>()?;
                (values, jumps)
            }
            (Some(fam), JumpRoute::ViaV) => {
                let gauge = GaugeMatrix::closed_form(fam.as_source(), &[0.0, l], &fam.params.u)?;
                let base_values = exec.try_map(&s_grid, |&s| boundary_values(&base_field, &base.j, s, &opts))?;
                let mut values = Vec::with_capacity(s_grid.len());
                let mut jumps = Vec::with_capacity(s_grid.len());
                for (bv, &s) in base_values.iter().zip(&s_grid) {
                    let v_0 = gauge.multiplier(0.0, r(s))?;
                    let v_l = gauge.multiplier(l, r(s))?;
                    values.push(transformed_boundary_values(bv, &v_l, &v_0)?);
                    let v_inv = gbdt::linalg::guarded_inverse(&v_0)
                        .map_err(|_| GbdtError::Singularity { x: 0.0, what: format!("v(0, {s}) is singular") })?;
                    jumps.push(&v_0 * &base_r * v_inv);
                }
                (values, jumps)
            }
        };
        let jumps = match model {
            JumpModel::Model => model_jumps,
            JumpModel::Identity => vec![eye(2); s_grid.len()],
        };
        if let Some(nil_tol) = nil_tol {
            let nil = jumps
                .iter()
                .map(|rj| {
                    let d = rj - eye(2);
                    fro(&(&d * &d)) / fro(&d).powi(2).max(1.0)
                })
                .collect();
            report.push(ResidualReport::new("jump_nilpotent", s_grid.clone(), nil, nil_tol));
        }
        let data = JumpData::from_boundary_values(values, jumps, opts.eta.clone());
        report.push(verify_jump(&data, tol));
        let json = serde_json::to_string_pretty(&data).map_err(|e| GbdtError::InvalidInput(e.to_string()))?;
        Ok(vec![
            Artifact { name: "jump.csv".into(), contents: data.to_csv() },
            Artifact { name: "jump.json".into(), contents: json + "\n" },
        ])
    })();
    Ok(finish(report, result))
}

pub fn invert(cfg: &InvertConfig, ctx: Context, with_jump: bool) -> Result<Outcome, ConfigError> {
    check_tolerance(cfg.tolerance)?;
    check_tolerance(cfg.jump_tolerance)?;
    let l = length(cfg.l)?;
    let samples = match (ctx.grid_points, &cfg.samples) {
        (Some(n), _) => uniform(10.0, n)?.into_iter().map(|s| s - 5.0).collect(),
        (None, Some(s)) => s.clone(),
        (None, None) => unimodularity_samples(),
    };
    let s_grid = cfg.s.clone().unwrap_or_else(|| vec![0.25 * l, 0.5 * l, 0.75 * l]);
    let check_jump = with_jump || cfg.verify_jump.unwrap_or(false);
    let command = if with_jump { "roundtrip" } else { "invert" };
    let mut report = Report::new(command, ctx.tolerance_scale);
    let tol = report.tolerance("round_trip_u", cfg.tolerance.unwrap_or(1e-8));
    let uni_tol = report.tolerance("unimodularity", 1e-8);
    let real_tol = report.tolerance("realization_identity", 1e-10);
    let inv_tol = report.tolerance("inverse_identity", 1e-9);
    let nil_tol = report.tolerance("nilpotent", 1e-9);
    let jump_tol = check_jump.then(|| report.tolerance("jump", cfg.jump_tolerance.unwrap_or(1e-4)));
    let choice = match &cfg.theta2 {
        Some(t) => Theta2Choice::Given(t.iter().map(|&c| c.into()).collect()),
        None => Theta2Choice::Auto,
    };
    let u = cfg.u.clone().unwrap_or_else(|| eye(2));
    let grid_points = cfg.grid_points.unwrap_or(101);
    let grid = uniform(l, grid_points)?;
    let result = (|| {
        let real = cfg.realization.build()?;
        let data = build_gbdt_data(&real, &choice)?;
        debug!("theta split after {} halvings", data.split.halvings);
        report.push(ResidualReport::single("realization_identity", 0.0, data.identity_residual, real_tol));
        let rec = recover_hamiltonian_and_jump(&data.split, &real, &u, l)?;
        let mut exact = Vec::with_capacity(samples.len());
        let mut rebuilt = Vec::with_capacity(samples.len());
        let mut eigen = Vec::with_capacity(samples.len());
        let mut inverse = Vec::with_capacity(samples.len());
        for &s in &samples {
            exact.push(real.u(s)?);
            rebuilt.push(rec.u_from_data(s)?);
            eigen.push(rec.u_from_jump(s)?);
            inverse.push(inverse_realization_residual(&real, &data.split, s)?);
        }
        let err = |v: &[gbdt::Complex64]| exact.iter().zip(v).map(|(a, b)| (a - b).norm()).collect::<Vec<_>>();
        report.push(ResidualReport::new("round_trip_u", samples.clone(), err(&rebuilt), tol));
        report.push(ResidualReport::new("u_eigenbasis", samples.clone(), err(&eigen), tol));
        let uni = exact.iter().map(|u| (u.norm() - 1.0).abs()).collect();
        report.push(ResidualReport::new("unimodularity", samples.clone(), uni, uni_tol));
        report.push(ResidualReport::new("inverse_identity", samples.clone(), inverse, inv_tol));
        let j = SignatureMatrix::off_diagonal();
        let h_tilde = Execution::default().try_map(&grid, |&x| rec.hamiltonian_at(x))?;
        let nil = h_tilde.iter().map(|h| fro(&(h * j.matrix() * h)) / fro(h).max(1.0).powi(2)).collect();
        report.push(ResidualReport::new("nilpotent", grid.clone(), nil, nil_tol));
        if let Some(jump_tol) = jump_tol {
            let field = rec.field();
            let opts = BoundaryOptions {
                eta: cfg.eta.clone().unwrap_or_else(|| BoundaryOptions::default().eta),
                ..Default::default()
            };
            info!("jump check at {} points", s_grid.len());
            let values = Execution::default().try_map(&s_grid, |&s| boundary_values(&field, &j, s, &opts))?;
            let jumps = s_grid.iter().map(|&s| rec.jump(s)).collect::<gbdt::Result<Vec<_>>>()?;
            let jd = JumpData::from_boundary_values(values, jumps, opts.eta.clone());
            report.push(verify_jump(&jd, jump_tol));
        }
        let rows: Vec<Vec<String>> = samples
            .iter()
            .zip(exact.iter().zip(&rebuilt))
            .map(|(s, (a, b))| [s, &a.re, &a.im, &b.re, &b.im].iter().map(|v| v.to_string()).collect())
            .collect();
        let header = ["s", "u_re", "u_im", "u_reconstructed_re", "u_reconstructed_im"].map(String::from);
        let table = csv_table(&header, &rows).map_err(|e| GbdtError::InvalidInput(e.to_string()))?;
        let json = serde_json::to_string_pretty(&rec).map_err(|e| GbdtError::InvalidInput(e.to_string()))?;
        Ok(vec![
            Artifact { name: "u_samples.csv".into(), contents: table },
            Artifact { name: "recovery.json".into(), contents: json + "\n" },
        ])
    })();
    Ok(finish(report, result))
}
