use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regpath::analysis::{
    emit_table, fit_tail, level_set_measure, measure_condition_estimate, path_condition_report, write_jsonl, EocTable,
    Exponent, MeasureSource, RateFit, TableFormat, DEFAULT_FIT_LEVELS,
};
use regpath::control::AdmissibleBox;
use regpath::convergence::{spatial_study, temporal_study, zero_data_error, ConvergenceStudy};
use regpath::elliptic::{poisson_example, EllipticProblem};
use regpath::located::LocatedHeatBackend;
use regpath::manufactured::ManufacturedProblem;
use regpath::mesh::{NodalField, SpaceMesh};
use regpath::parabolic::{DenseLoad, ParabolicOperator};
use regpath::solver::{
    check_monotonicity_inequality, regularization_parameter, run_reg_path, solve_fixed_point, ControlSpec, PathConfig,
    ProblemBackend, RegPath,
};
use regpath::time_grid::{PiecewiseLinearScalar, TimePartition, DEFAULT_GAUSS_ORDER};

use crate::config::{Example, RunConfig};

/// Outcome of a command that ran to completion.
pub enum Status {
    Success,
    /// A level, check or order requirement failed.
    Failed,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))
}

fn located_backend(cfg: &RunConfig) -> Result<LocatedHeatBackend> {
    let problem = ManufacturedProblem::located_heat(cfg.kappa)?;
    let mesh = Arc::new(SpaceMesh::uniform(cfg.n_per_side)?);
    let partition = Arc::new(TimePartition::uniform(cfg.time_steps, problem.end_time)?);
    let mut op = ParabolicOperator::new(mesh, partition)?;
    if cfg.inject_adjoint_fault {
        op = op.with_injected_adjoint_fault();
    }
    Ok(LocatedHeatBackend::manufactured_on(&problem, op, DEFAULT_GAUSS_ORDER)?)
}

fn path_config(cfg: &RunConfig) -> PathConfig {
    PathConfig {
        fixed_point: cfg.fixed_point(),
        warm_start: cfg.warm_start,
    }
}

fn fit_levels(cfg: &RunConfig) -> Option<usize> {
    (!cfg.full_range_fit).then_some(DEFAULT_FIT_LEVELS)
}

fn describe_fit(name: &str, fit: &Result<RateFit, regpath::error::Error>) -> String {
    match fit {
        Ok(f) => format!(
            "{name}: exponent {:.4}, constant {:.4}, residual {:.2e}, {} levels\n",
            f.exponent, f.constant, f.residual, f.points
        ),
        Err(e) => format!("{name}: not fitted ({e})\n"),
    }
}

fn describe_exponent(name: &str, e: &Exponent) -> String {
    match e {
        Exponent::Infinite => format!("{name}: exponent inf (quantity vanishes)\n"),
        Exponent::Fitted(f) => describe_fit(name, &Ok(f.clone())),
    }
}

fn report_failures(path: &RegPath) -> String {
    path.failures
        .iter()
        .map(|f| format!("level {} failed: {}\n", f.level, f.error))
        .collect()
}

pub fn cmd_path(cfg: &RunConfig) -> Result<Status> {
    prepare_output(cfg)?;
    match cfg.example {
        Example::LocatedHeat => path_located(cfg),
        Example::Poisson => path_poisson(cfg),
    }
}

fn path_located(cfg: &RunConfig) -> Result<Status> {
    let backend = located_backend(cfg)?;
    let path = run_reg_path(&backend, &cfg.levels.0, &path_config(cfg))?;
    let table = EocTable::from_records(&path.records, cfg.kappa, cfg.n_per_side, cfg.time_steps, cfg.tol)?;

    let mut summary = String::new();
    if table.rows.len() >= 3 {
        let a = table.alphas();
        summary += &describe_fit("L1 rate", &fit_tail(&table.l1_errors(), &a, fit_levels(cfg)));
        summary += &describe_fit("L2 rate", &fit_tail(&table.l2_errors(), &a, fit_levels(cfg)));
        let report = path_condition_report(&path.records, cfg.kappa, fit_levels(cfg))?;
        summary += &describe_exponent("inactive-set measure", &report.inactive_measure);
        summary += &describe_exponent("derivative L1 norm", &report.derivative_l1);
        if report.violation {
            summary += &format!("inactive-set exponent below kappa - 0.15 = {:.2}\n", cfg.kappa - 0.15);
        }
    }
    let state: Vec<String> = path
        .records
        .iter()
        .map(|r| format!("{}:{:.8}", r.level, r.metrics.state_error.unwrap_or(f64::NAN)))
        .collect();
    summary += &format!("state errors (not gated): {}\n", state.join(" "));
    summary += &report_failures(&path);

    let markdown = emit_table(&table, TableFormat::Markdown);
    if cfg.format.csv() {
        write_file(&cfg.output, "eoc.csv", &(cfg.comment_header() + &emit_table(&table, TableFormat::Csv)))?;
    }
    if cfg.format.markdown() {
        write_file(&cfg.output, "eoc.md", &format!("{}{markdown}\n```\n{summary}```\n", cfg.markdown_header()))?;
    }
    if cfg.format.jsonl() {
        let mut buf = cfg.comment_header().into_bytes();
        write_jsonl(&path.records, &mut buf)?;
        write_file(&cfg.output, "records.jsonl", &String::from_utf8(buf)?)?;
    }
    print!("{markdown}\n{summary}");
    Ok(if path.failures.is_empty() { Status::Success } else { Status::Failed })
}

fn path_poisson(cfg: &RunConfig) -> Result<Status> {
    let (problem, _) = poisson_example(cfg.n_per_side)?;
    let path = run_reg_path(&problem, &cfg.levels.0, &path_config(cfg))?;
    let mut csv = String::from("level,alpha,iterations,residual_norm,inactive_measure,objective,slack_to_next\n");
    let mut md = String::from(
        "| l | alpha | iterations | residual norm | inactive measure | slack to next |\n|---|---|---|---|---|---|\n",
    );
    for (i, r) in path.records.iter().enumerate() {
        let slack = match path.records.get(i + 1) {
            Some(next) if next.level == r.level + 1 => Some(check_monotonicity_inequality(&problem, r, next)?),
            _ => None,
        };
        let m = &r.metrics;
        let _ = writeln!(
            csv,
            "{},{:?},{},{:?},{:?},{:?},{}",
            r.level,
            r.alpha,
            r.iterations,
            m.state_error.unwrap_or(f64::NAN),
            m.inactive_measure.unwrap_or(f64::NAN),
            m.objective.unwrap_or(f64::NAN),
            slack.map(|s| format!("{s:?}")).unwrap_or_default()
        );
        let _ = writeln!(
            md,
            "| {} | {:.8} | {} | {:.8} | {:.8} | {} |",
            r.level,
            r.alpha,
            r.iterations,
            m.state_error.unwrap_or(f64::NAN),
            m.inactive_measure.unwrap_or(f64::NAN),
            slack.map(|s| format!("{s:.2e}")).unwrap_or_else(|| "/".into())
        );
    }
    let failures = report_failures(&path);
    if cfg.format.csv() {
        write_file(&cfg.output, "path.csv", &(cfg.comment_header() + &csv))?;
    }
    if cfg.format.markdown() {
        write_file(&cfg.output, "path.md", &format!("{}{md}{failures}", cfg.markdown_header()))?;
    }
    if cfg.format.jsonl() {
        let mut buf = cfg.comment_header().into_bytes();
        write_jsonl(&path.records, &mut buf)?;
        write_file(&cfg.output, "records.jsonl", &String::from_utf8(buf)?)?;
    }
    print!("{md}{failures}");
    Ok(if path.failures.is_empty() { Status::Success } else { Status::Failed })
}

pub fn cmd_solve(cfg: &RunConfig, alpha: Option<f64>) -> Result<Status> {
    prepare_output(cfg)?;
    let alpha = alpha.unwrap_or_else(|| regularization_parameter(cfg.levels.0[0]));
    let mut fp = cfg.fixed_point();
    fp.initial = regpath::solver::InitialControl::Lower;
    let (outcome, metrics, samples) = match cfg.example {
        Example::LocatedHeat => {
            let backend = located_backend(cfg)?;
            let out = solve_fixed_point(&backend, alpha, &fp)?;
            let metrics = backend.metrics(alpha, &out.q)?;
            let mut samples = cfg.comment_header().into_bytes();
            backend.implicit_control(alpha, &out.q)?.write_samples(&mut samples)?;
            (out, metrics, String::from_utf8(samples)?)
        }
        Example::Poisson => {
            let (problem, _) = poisson_example(cfg.n_per_side)?;
            let out = solve_fixed_point(&problem, alpha, &fp)?;
            let metrics = problem.metrics(alpha, &out.q)?;
            let u = problem.nodal_control(out.control());
            let mut s = cfg.comment_header() + "node,x,y,u\n";
            for (i, (p, v)) in problem.mesh().nodes().iter().zip(&u).enumerate() {
                let _ = writeln!(s, "{i},{:?},{:?},{v:?}", p[0], p[1]);
            }
            (out, metrics, s)
        }
    };
    let summary = serde_json::json!({
        "alpha": alpha,
        "iterations": outcome.iterations,
        "last_difference": outcome.last_difference,
        "vi_residual": outcome.vi_residual,
        "damping": outcome.damping,
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    write_file(&cfg.output, "control.csv", &samples)?;
    write_file(&cfg.output, "solve.json", &format!("{text}\n"))?;
    println!("{text}");
    Ok(Status::Success)
}

struct Checks {
    lines: Vec<(bool, String)>,
}

impl Checks {
    fn record(&mut self, ok: bool, name: &str, detail: String) {
        self.lines.push((ok, format!("{name}: {detail}")));
    }

    fn all_pass(&self) -> bool {
        self.lines.iter().all(|(ok, _)| *ok)
    }
}

fn random_interior(mesh: &SpaceMesh, rng: &mut ChaCha8Rng) -> Vec<f64> {
    mesh.boundary_mask()
        .iter()
        .map(|&b| if b { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect()
}

fn op_for(cfg: &RunConfig, n: usize, steps: usize) -> Result<ParabolicOperator> {
    let mesh = Arc::new(SpaceMesh::uniform(n)?);
    let partition = Arc::new(TimePartition::uniform(steps, 0.5)?);
    let op = ParabolicOperator::new(mesh, partition)?;
    Ok(if cfg.inject_adjoint_fault { op.with_injected_adjoint_fault() } else { op })
}

/// Property suite at toy scale: 3 x 3 and 5 x 5 meshes, 8 time steps.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Status> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Checks { lines: Vec::new() };

    match cfg.example {
        Example::LocatedHeat => {
            let mut worst: f64 = 0.0;
            for case in 0..100 {
                let op = op_for(cfg, if case % 2 == 0 { 3 } else { 5 }, 8)?;
                let mesh = op.mesh().clone();
                let f = DenseLoad((0..8).map(|_| random_interior(&mesh, &mut rng)).collect());
                let h = DenseLoad((0..8).map(|_| random_interior(&mesh, &mut rng)).collect());
                let y0 = NodalField::new(random_interior(&mesh, &mut rng));
                worst = worst.max(op.check_adjointness(&f, &y0, &h)?);
            }
            checks.record(worst <= 1e-10, "adjointness", format!("worst defect {worst:.3e} over 100 load pairs"));

            let problem = ManufacturedProblem::located_heat(cfg.kappa)?;
            let backend = LocatedHeatBackend::manufactured_on(&problem, op_for(cfg, 5, 16)?, DEFAULT_GAUSS_ORDER)?;
            let g = gradient_defect(&backend, &mut rng)?;
            checks.record(g < 1e-6, "gradient", format!("finite-difference defect {g:.3e}"));

            let backend = LocatedHeatBackend::manufactured_on(&problem, op_for(cfg, 3, 8)?, DEFAULT_GAUSS_ORDER)?;
            let path = run_reg_path(&backend, &[1, 2, 3, 4, 5, 6], &path_config(cfg))?;
            verify_path(&mut checks, &backend, &path);

            let eps: Vec<f64> = (1..=6).map(|i| 0.002 * i as f64).collect();
            let closed = measure_condition_estimate(MeasureSource::Manufactured(&problem), &eps)?;
            let n = 1_000_000;
            let dt = problem.end_time / n as f64;
            let worst = eps
                .iter()
                .zip(&closed)
                .map(|(&e, &m)| {
                    let hits = (0..n).filter(|&i| problem.b_star_adjoint((i as f64 + 0.5) * dt).abs() <= e).count();
                    (hits as f64 * dt - m).abs()
                })
                .fold(0.0, f64::max);
            checks.record(worst < 1e-4, "measure oracle (closed form)", format!("worst scan deviation {worst:.2e}"));

            let partition = TimePartition::uniform(7, 1.0)?;
            let q = PiecewiseLinearScalar::new(&partition, (0..=7).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let e = rng.random_range(0.05..0.5);
            let hits = (0..n).filter(|&i| q.eval(&partition, (i as f64 + 0.5) / n as f64).abs() <= e).count();
            let d = (hits as f64 / n as f64 - level_set_measure(&partition, &q, e)).abs();
            checks.record(d < 1e-4, "measure oracle (piecewise linear)", format!("scan deviation {d:.2e}"));
        }
        Example::Poisson => {
            let (problem, u0) = poisson_example(9)?;
            let g = elliptic_gradient_defect(&problem, &mut rng)?;
            checks.record(g < 1e-6, "gradient", format!("finite-difference defect {g:.3e}"));
            let q = problem.elliptic_q(u0.values())?;
            let sup = q.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            checks.record(sup < 1e-12, "consistent target", format!("sup |p(u0)| = {sup:.2e}"));
            let levels: Vec<i32> = (1..=10).collect();
            let path = run_reg_path(&problem, &levels, &path_config(cfg))?;
            verify_path(&mut checks, &problem, &path);
        }
    }

    let bounds = AdmissibleBox::new(-0.2, 0.2)?;
    let mut proj_ok = true;
    for _ in 0..1000 {
        let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let px = bounds.project(x);
        proj_ok &= bounds.project(px) == px && (px - bounds.project(y)).abs() <= (x - y).abs();
    }
    checks.record(proj_ok, "projection", "idempotent and 1-Lipschitz on 1000 samples".into());

    for (ok, line) in &checks.lines {
        println!("{} {line}", if *ok { "PASS" } else { "FAIL" });
    }
    let pass = checks.all_pass();
    println!("{}", if pass { "all checks passed" } else { "some checks failed" });
    Ok(if pass { Status::Success } else { Status::Failed })
}

fn verify_path<B: ProblemBackend>(checks: &mut Checks, backend: &B, path: &RegPath) {
    checks.record(
        path.failures.is_empty(),
        "fixed point",
        format!("{} levels solved, {} failed", path.records.len(), path.failures.len()),
    );
    let mut worst = f64::INFINITY;
    let mut errors = Vec::new();
    for w in path.records.windows(2) {
        match check_monotonicity_inequality(backend, &w[0], &w[1]) {
            Ok(s) => worst = worst.min(s),
            Err(e) => errors.push(e.to_string()),
        }
    }
    checks.record(
        errors.is_empty() && worst >= -1e-6,
        "monotonicity slack",
        format!("minimum {worst:.3e} over consecutive levels {}", errors.join("; ")),
    );
}

fn gradient_defect(backend: &LocatedHeatBackend, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = backend.partition().nodes().len();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
    let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = 1e-4;
    let shifted = |s: f64| -> Vec<f64> { u.iter().zip(&du).map(|(a, d)| a + s * d).collect() };
    let (up, um) = (shifted(h), shifted(-h));
    let fd = (backend.objective(ControlSpec::Raw(&up), 0.0)? - backend.objective(ControlSpec::Raw(&um), 0.0)?) / (2.0 * h);
    let q = backend.adjoint_image(ControlSpec::Raw(&u))?;
    let exact = backend.inner(ControlSpec::Raw(&q), ControlSpec::Raw(&du));
    Ok(((fd - exact) / exact.abs().max(1e-300)).abs())
}

fn elliptic_gradient_defect(problem: &EllipticProblem, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = problem.mesh().node_count();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
    let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = 1e-4;
    let j = |s: f64| -> Result<f64> {
        let v: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + s * d).collect();
        Ok(0.5 * problem.residual_norm(&v)?.powi(2))
    };
    let fd = (j(h)? - j(-h)?) / (2.0 * h);
    let q = problem.elliptic_q(&u)?;
    let exact = problem.inner(ControlSpec::Raw(q.values()), ControlSpec::Raw(&du));
    Ok(((fd - exact) / exact.abs().max(1e-300)).abs())
}

pub struct ConvergenceArgs {
    pub time_levels: Vec<usize>,
    pub temporal_nodes: usize,
    pub space_levels: Vec<usize>,
    pub fine_steps: usize,
}

fn study_rows(study: &ConvergenceStudy, name: &str, csv: &mut String, md: &mut String) {
    for (i, (p, e)) in study.parameters.iter().zip(&study.errors).enumerate() {
        let order = i.checked_sub(1).map(|j| study.orders[j]);
        let _ = writeln!(csv, "{name},{p},{e:?},{}", order.map(|o| format!("{o:?}")).unwrap_or_default());
        let _ = writeln!(
            md,
            "| {name} | {p} | {e:.8} | {} |",
            order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "/".into())
        );
    }
}

pub fn cmd_convergence(cfg: &RunConfig, args: &ConvergenceArgs) -> Result<Status> {
    prepare_output(cfg)?;
    let time = temporal_study(args.temporal_nodes, &args.time_levels)?;
    let space = spatial_study(&args.space_levels, args.fine_steps)?;
    let zero = zero_data_error(9, 16)?;
    let mut csv = cfg.comment_header() + "refinement,parameter,error,order\n";
    let mut md = String::from("| refinement | parameter | error | order |\n|---|---|---|---|\n");
    study_rows(&time, "time", &mut csv, &mut md);
    study_rows(&space, "space", &mut csv, &mut md);
    let ok = time.min_order() >= 1.8 && space.min_order() >= 1.8 && zero == 0.0;
    let summary = format!(
        "minimum temporal order {:.3}, minimum spatial order {:.3}, zero-data error {zero:e}\n{}\n",
        time.min_order(),
        space.min_order(),
        if ok { "orders at least 1.8" } else { "observed order below 1.8" }
    );
    if cfg.format.csv() {
        write_file(&cfg.output, "convergence.csv", &csv)?;
    }
    if cfg.format.markdown() {
        write_file(&cfg.output, "convergence.md", &format!("{}{md}\n{summary}", cfg.markdown_header()))?;
    }
    print!("{md}\n{summary}");
    Ok(if ok { Status::Success } else { Status::Failed })
}
