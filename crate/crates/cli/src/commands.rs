use toricsol_core::grid::{DomainTag, GridFunction, Stencil};
use toricsol_core::integrals::{converges, exp_integral, quadrature_oracle, QuadratureOptions, VectorFieldParam};
use toricsol_core::lattice::{anticanonical_polyhedron, blowup_cone, Fan, FanJson, HalfSpace, Polyhedron, PolyhedronJson};
use toricsol_core::legendre::{legendre_transform, PiecewiseLinearConjugate};
use toricsol_core::model::{
    continuity_solve, far_field_fit, functional_fhat, functional_i, functional_j_exact, normalize_data, path_csv, rho_u,
    rho_u_analytic, soliton_residual_analytic, soliton_residual_xi, ContinuityOptions, ModelError, TorusModel,
};
use toricsol_core::potential::{GaussianModel, GaussianSymplectic, SmoothPotential};
use toricsol_core::volume::{NewtonOptions, Prefactor, WeightedVolumeProblem};

use crate::config::{ModelKind, ModelRun, PrefactorFlag, ResolvedRun, RunConfig, VerifyCase};
use crate::report::Report;
use crate::{write_file, CliError};

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// A fan JSON yields its anticanonical polyhedron; otherwise the input is read as halfspaces.
pub fn parse_polyhedron(text: &str) -> Result<(Polyhedron, &'static str), CliError> {
    if let Ok(fan) = serde_json::from_str::<FanJson>(text) {
        let fan = fan.build().map_err(domain)?;
        return Ok((anticanonical_polyhedron(&fan).map_err(domain)?, "fan"));
    }
    match serde_json::from_str::<PolyhedronJson>(text) {
        Ok(p) => Ok((p.build().map_err(domain)?, "polyhedron")),
        Err(e) => Err(CliError::Config(format!("input is neither a fan nor a polyhedron: {e}"))),
    }
}

fn require_input<'a>(text: Option<&'a str>, what: &str) -> Result<&'a str, CliError> {
    text.ok_or_else(|| CliError::Config(format!("--input with {what} is required")))
}

fn describe(p: &Polyhedron, report: &mut Report) {
    report.text("dim", p.dim());
    report.text("halfspaces", p.halfspaces().len());
    report.text("vertices", p.vertices().len());
    for (k, v) in p.vertices().iter().enumerate() {
        let pt: Vec<String> = v.point.iter().map(|q| q.to_string()).collect();
        report.text(&format!("vertex[{k}]"), format!("({})", pt.join(", ")));
    }
    let rays: Vec<String> = p.recession_rays().iter().map(|w| format!("{:?}", w.coords())).collect();
    report.text("recession_rays", format!("[{}]", rays.join(", ")));
    let delzant = p.delzant_check();
    report.text("delzant", delzant.is_delzant);
}

pub fn polytope(cfg: &RunConfig, text: Option<&str>, report: &mut Report) -> Result<(), CliError> {
    let (p, kind) = parse_polyhedron(require_input(text, "a fan or polyhedron")?)?;
    report.text("input_kind", kind);
    describe(&p, report);
    write_file(cfg.output_dir.as_deref(), "polytope.json", &p.to_json())
}

pub fn soliton_vector(cfg: &RunConfig, text: Option<&str>, report: &mut Report) -> Result<(), CliError> {
    let (p, kind) = parse_polyhedron(require_input(text, "a fan or polyhedron")?)?;
    let prefactor = match cfg.prefactor {
        PrefactorFlag::One => Prefactor::One,
        PrefactorFlag::TwoPi => Prefactor::TwoPi,
    };
    let problem = WeightedVolumeProblem::new(p, prefactor).map_err(domain)?;
    let tol = cfg.tolerance("grad", 1e-10);
    let v0 = problem.default_start().map_err(domain)?;
    let r = problem.minimize_f(&v0, NewtonOptions { tol, ..Default::default() }).map_err(domain)?;
    report.text("input_kind", kind);
    report.text("prefactor", format!("{:?}", prefactor));
    report.vector("b_X", &r.b_x.b);
    report.value("grad_norm", r.grad_norm);
    report.value("F", r.value);
    report.value("hessian_cond", r.hessian_cond);
    report.text("iterations", r.iterations);
    report.below("grad_norm", r.grad_norm, tol);
    report.at_least("in_lambda", f64::from(u8::from(problem.lambda_contains(&r.b_x.b))), 1.0);
    write_file(cfg.output_dir.as_deref(), "trace.csv", &r.trace_csv())
}

fn span_or(cfg: &RunConfig, lo: f64, hi: f64) -> (f64, f64) {
    cfg.grid_span.unwrap_or((lo, hi))
}

/// Sup-norm of `values` over grid nodes whose coordinate lies in `[lo, hi]`.
fn sup_on(g: &GridFunction, lo: f64, hi: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let eps = 1e-9 * g.spacing()[0];
    (0..g.len())
        .filter(|&k| (lo - eps..=hi + eps).contains(&g.coord(k)))
        .map(|k| f(g.coord(k), g.values()[k]).abs())
        .fold(0.0, f64::max)
}

fn sampled_with_halo(pot: &dyn SmoothPotential, lo: f64, hi: f64, h: f64, tag: DomainTag) -> Result<GridFunction, CliError> {
    let halo = Stencil::Fourth.halo() as f64;
    let count = ((hi - lo) / h).round() as usize + 1 + 2 * Stencil::Fourth.halo();
    GridFunction::sample_1d(lo - halo * h, h, count, tag, |x| pot.value(&[x])).map_err(|e| CliError::Config(e.to_string()))
}

fn unit_simplex() -> Polyhedron {
    Polyhedron::new(
        2,
        vec![HalfSpace::from_ints(&[1, 0], 0), HalfSpace::from_ints(&[0, 1], 0), HalfSpace::from_ints(&[-1, -1], 1)],
    )
    .expect("unit simplex")
}

/// A generic direction inside the convergence cone: the sum of unit recession rays plus a small
/// irrational offset.
fn generic_direction(p: &Polyhedron) -> Vec<f64> {
    let offsets = [std::f64::consts::FRAC_1_SQRT_2, -0.309_016_994_374_947_4, 0.223_606_797_749_979];
    let mut b: Vec<f64> = offsets[..p.dim()].to_vec();
    for w in p.recession_rays() {
        let wf = w.to_f64();
        let len = wf.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (bi, wi) in b.iter_mut().zip(&wf) {
            *bi += 1.3 * wi / len;
        }
    }
    b
}

pub fn verify(cfg: &RunConfig, case: VerifyCase, text: Option<&str>, report: &mut Report) -> Result<(), CliError> {
    report.text("case", serde_json::to_value(case).expect("enum").as_str().unwrap_or_default());
    match case {
        VerifyCase::GaussianXi => {
            let (lo, hi) = span_or(cfg, -3.0, 4.0);
            let h = cfg.grid_h.unwrap_or(1e-3);
            let b = VectorFieldParam::new(vec![1.0]);
            let count = ((hi - lo) / h).round() as usize;
            let analytic = (0..=count)
                .map(|k| soliton_residual_analytic(&GaussianModel, &b, &[lo + k as f64 * h]).abs())
                .fold(0.0, f64::max);
            let phi = sampled_with_halo(&GaussianModel, lo, hi, h, DomainTag::Xi)?;
            let r = soliton_residual_xi(&phi, &b, Stencil::Fourth).map_err(domain)?;
            let fd = sup_on(&r, lo, hi, |_, v| v);
            report.value("span_lo", lo);
            report.value("span_hi", hi);
            report.value("h", h);
            report.value("max_residual_analytic", analytic);
            report.value("max_residual_fd", fd);
            report.below("max_residual_analytic", analytic, 1e-9);
            report.below("max_residual_fd", fd, 1e-5);
        }
        VerifyCase::GaussianPolytope => {
            let (lo, hi) = span_or(cfg, -0.9, 10.0);
            let h = cfg.grid_h.unwrap_or(1e-3);
            let count = ((hi - lo) / h).round() as usize;
            let analytic = (0..=count)
                .map(|k| {
                    let x = lo + k as f64 * h;
                    rho_u_analytic(&GaussianSymplectic, &[x]) - x
                })
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let u = sampled_with_halo(&GaussianSymplectic, lo, hi, h, DomainTag::X)?;
            let rho = rho_u(&u, Stencil::Fourth).map_err(domain)?;
            let fd = sup_on(&rho, lo, hi, |x, v| v - x);
            let shifted = rho_u(&u.map_values(|v| v + 0.25).map_err(domain)?, Stencil::Fourth).map_err(domain)?;
            let shift = sup_on(&shifted, lo, hi, |x, v| v - x + 0.5);
            report.value("max_rho_minus_x_analytic", analytic);
            report.value("max_rho_minus_x_fd", fd);
            report.value("constant_shift_gap", shift);
            report.below("max_rho_minus_x_analytic", analytic, 1e-9);
            report.below("max_rho_minus_x_fd", fd, 1e-6);
            report.below("constant_shift_gap", shift, 1e-6);
        }
        VerifyCase::BrionVsOracle => {
            let p = match text {
                Some(t) => parse_polyhedron(t)?.0,
                None => unit_simplex(),
            };
            let b = generic_direction(&p);
            if !converges(&p, &b) {
                return Err(CliError::Domain(format!("no convergent direction found, tried {b:?}")));
            }
            let truncation = cfg.truncation_r.unwrap_or(60.0);
            let exact = exp_integral(&p, &b).map_err(domain)?;
            let q = quadrature_oracle(&p, &b, QuadratureOptions { truncation, ..Default::default() }).map_err(domain)?;
            let gap_value = (q.result.value - exact.value).abs() / exact.value.abs();
            let gap_grad = (&q.result.gradient - &exact.gradient).norm() / exact.gradient.norm().max(exact.value.abs());
            let gap_hess = (&q.result.hessian - &exact.hessian).norm() / exact.hessian.norm().max(exact.value.abs());
            report.vector("b", &b);
            report.value("truncation_R", truncation);
            report.value("brion_value", exact.value);
            report.value("oracle_value", q.result.value);
            report.value("tail_estimate", q.tail_estimate);
            report.below("relative_gap_value", gap_value, 1e-6);
            report.below("relative_gap_gradient", gap_grad, 1e-6);
            report.below("relative_gap_hessian", gap_hess, 1e-6);
        }
        VerifyCase::LegendreInvolution => {
            let h = cfg.grid_h.unwrap_or(0.01);
            let (lo, hi) = span_or(cfg, -5.0, 5.0);
            let sup_gap = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64, CliError> {
                let g = GridFunction::sample_interval(lo, hi, h, DomainTag::Xi, f).map_err(domain)?;
                let back = legendre_transform(&legendre_transform(&g).map_err(domain)?).map_err(domain)?;
                Ok((1..back.len() - 1).map(|k| (back.values()[k] - f(back.coord(k))).abs()).fold(0.0, f64::max))
            };
            let quad = sup_gap(&|x| 0.5 * x * x, lo, hi)?;
            let gauss = sup_gap(&|x| GaussianModel.value(&[x]), -6.0, 4.0)?;
            report.value("h", h);
            report.value("sup_gap_quadratic", quad);
            report.value("sup_gap_gaussian", gauss);
            report.below("sup_gap_quadratic", quad, h * h);
            report.below("sup_gap_gaussian", gauss, 10.0 * h);
        }
    }
    Ok(())
}

fn flagship_polytope() -> Polyhedron {
    let fan = Fan::new(2, vec![vec![1, 0].into(), vec![0, 1].into(), vec![0, -1].into()], vec![vec![0, 1], vec![0, 2]])
        .expect("C x P1 fan");
    anticanonical_polyhedron(&blowup_cone(&fan, 0, 1).expect("blowup")).expect("Fano blowup")
}

fn load_run(cfg: &RunConfig, text: Option<&str>) -> Result<ResolvedRun, CliError> {
    let run: ModelRun = match text {
        Some(t) => serde_json::from_str(t).map_err(|e| CliError::Config(format!("run configuration: {e}")))?,
        None => ModelRun::default(),
    };
    run.resolve(cfg)
}

fn build_model(run: &ResolvedRun) -> Result<TorusModel, CliError> {
    let [lo, hi] = run.grid_span;
    match run.model {
        ModelKind::Gaussian => TorusModel::gaussian(lo, hi, run.grid_h).map_err(domain),
        ModelKind::Flagship => {
            let p = flagship_polytope();
            let problem = WeightedVolumeProblem::new(p.clone(), Prefactor::One).map_err(domain)?;
            let start = problem.default_start().map_err(domain)?;
            let b = problem.minimize_f(&start, NewtonOptions::default()).map_err(domain)?.b_x;
            let count = ((hi - lo) / run.grid_h).round() as usize + 1;
            TorusModel::guillemin(p, b, hi, count).map_err(domain)
        }
    }
}

pub fn continuity(cfg: &RunConfig, text: Option<&str>, report: &mut Report) -> Result<(), CliError> {
    let run = load_run(cfg, text)?;
    let out = cfg.output_dir.as_deref();
    write_file(out, "run.json", &(serde_json::to_string_pretty(&run).expect("run config serializes") + "\n"))?;
    let model = build_model(&run)?;
    let raw = model.bumped_data(run.bump.amplitude, &run.bump.center, run.bump.width);
    let (f, c0) = normalize_data(&model, &raw).map_err(domain)?;
    report.text("model", serde_json::to_value(run.model).expect("enum").as_str().unwrap_or_default());
    report.text("steps", run.steps);
    report.value("c0", c0);
    report.vector("b", &model.b().b);
    let opts = ContinuityOptions { steps: run.steps, newton_tol: run.newton_tol, ..Default::default() };
    let states = match continuity_solve(&model, &f, &opts) {
        Ok(s) => s,
        Err(e @ (ModelError::NewtonDiverged { .. } | ModelError::PositivityLoss { .. })) => {
            let (kind, last) = match &e {
                ModelError::NewtonDiverged { last, .. } => ("NewtonDiverged", last),
                ModelError::PositivityLoss { last, .. } => ("PositivityLoss", last),
                _ => unreachable!(),
            };
            let mut message = format!("{kind}: {e}");
            if let Some(st) = last {
                message.push_str(&format!("; last good s = {}", st.s));
                report.value("last_good_s", st.s);
                report.value("last_sup_psi", st.monitors.sup_psi);
                report.value("last_inf_psi", st.monitors.inf_psi);
                report.value("last_inf_xpsi", st.monitors.inf_xpsi);
                report.value("last_sup_xpsi", st.monitors.sup_xpsi);
                report.value("last_sup_ddbar", st.monitors.sup_ddbar);
            }
            return Err(CliError::Continuation { message, report: None });
        }
        Err(e) => return Err(domain(e)),
    };
    write_file(out, "path.csv", &path_csv(&states))?;
    let last = states.last().expect("s = 0 state");
    write_file(out, "psi.csv", &last.psi.to_csv())?;
    let m0 = states[0].mass;
    let drift = states.iter().map(|s| ((s.mass - m0) / m0).abs()).fold(0.0, f64::max);
    let min_ij = states.iter().map(|s| s.functional_i - s.functional_j).fold(f64::INFINITY, f64::min);
    report.text("rows", states.len() - 1);
    report.value("final_s", last.s);
    report.value("final_residual", last.residual_norm);
    report.value("c_s", last.c_s);
    report.value("mass_drift", drift);
    report.value("min_I_minus_J", min_ij);
    report.value("I", last.functional_i);
    report.value("J", last.functional_j);
    report.value("sup_psi", last.monitors.sup_psi);
    report.value("inf_psi", last.monitors.inf_psi);
    report.value("inf_xpsi", last.monitors.inf_xpsi);
    report.value("sup_xpsi", last.monitors.sup_xpsi);
    report.value("sup_ddbar", last.monitors.sup_ddbar);
    if model.dim() == 1 && c0 != 0.0 {
        let fit = far_field_fit(&model, &last.psi).map_err(domain)?;
        report.value("far_field_c1", fit.c1);
        report.value("far_field_c2", fit.c2);
        report.value("far_field_rms", fit.residual);
        report.value("far_field_rms_constant", fit.residual_constant);
    }
    report.at_least("reached_s1", last.s, 1.0);
    if !report.below("final_residual", last.residual_norm, run.newton_tol) || last.s < 1.0 {
        return Err(CliError::Continuation {
            message: format!("s = 1 not reached with residual below {}", run.newton_tol),
            report: None,
        });
    }
    let drift_tol = if model.dim() == 1 { 1e-8 } else { 1e-2 };
    report.below("mass_drift", drift, drift_tol);
    report.at_least("min_I_minus_J", min_ij, -1e-10);
    Ok(())
}

pub fn fhat(cfg: &RunConfig, text: Option<&str>, report: &mut Report) -> Result<(), CliError> {
    let run = load_run(cfg, text)?;
    if run.model != ModelKind::Gaussian {
        return Err(CliError::Config("fhat supports the one-dimensional Gaussian model".into()));
    }
    let model = build_model(&run)?;
    let phi0 = model.phi0();
    let (a, c, w) = (run.bump.amplitude, run.bump.center[0], run.bump.width);
    let psi = phi0
        .with_values((0..phi0.len()).map(|k| a * (-((phi0.coord(k) - c) / w).powi(2)).exp()).collect())
        .map_err(domain)?;
    let phi1 = phi0
        .with_values(phi0.values().iter().zip(psi.values()).map(|(p, q)| p + 0.5 * q).collect())
        .map_err(domain)?;
    let u0 = PiecewiseLinearConjugate::new(phi0).map_err(domain)?;
    let u1 = PiecewiseLinearConjugate::new(&phi1).map_err(domain)?;
    let b = model.b().b[0];
    let f_hat = functional_fhat(&u0, &u1, b, model.polytope()).map_err(domain)?;
    let j = functional_j_exact(&model, &psi).map_err(domain)?;
    let i = functional_i(&model, &psi).map_err(domain)?;
    let w0 = model.weight();
    let mean: f64 = phi0.interior_nodes(1).iter().zip(&w0).map(|(idx, wt)| psi.value(idx) * wt).sum();
    report.value("Fhat", f_hat);
    report.value("J", j);
    report.value("I", i);
    report.value("psi_dmu0", mean);
    report.below("fhat_identity", (f_hat - (j - mean)).abs(), 1e-9 * (1.0 + j.abs()));
    report.at_least("I_minus_J", i - j, -1e-10);
    Ok(())
}
