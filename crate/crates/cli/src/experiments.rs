//! Experiment drivers. Each one has a `compute_*` function returning plain
//! data and a writer that turns it into CSV files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raceway_core::optimizer::{
    criticality_check, fd_gradient, norm_inf, optimize, random_shape, CriticalityReport,
    OptimizationTrace,
};
use raceway_core::transport::contraction_bound;
use raceway_core::{Evaluation, FourierShape, ModelError, Problem, Variant};

use crate::config::ExperimentConfig;
use crate::output::{emit_profile_csv, emit_shape_csv, emit_trace_csv, Cell, OutputDir, Table};
use crate::RunError;

type ModelResult<T> = Result<T, ModelError>;

/// Names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Optimize,
    Gradcheck,
    SweepNz,
    SweepN,
    Paddle,
    Areal,
    C0Study,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Optimize => "optimize",
            Experiment::Gradcheck => "gradcheck",
            Experiment::SweepNz => "sweep-nz",
            Experiment::SweepN => "sweep-n",
            Experiment::Paddle => "paddle",
            Experiment::Areal => "areal",
            Experiment::C0Study => "c0-study",
        }
    }

    /// Variant used when the configuration does not name one.
    pub fn default_variant(self) -> Variant {
        match self {
            Experiment::Simulate | Experiment::SweepNz => Variant::Periodic,
            Experiment::Optimize | Experiment::SweepN | Experiment::C0Study => Variant::Multi,
            Experiment::Gradcheck => Variant::Periodic,
            Experiment::Paddle => Variant::Paddle,
            Experiment::Areal => Variant::Areal,
        }
    }
}

fn problem(cfg: &ExperimentConfig, variant: Variant) -> ModelResult<Problem> {
    Problem::new(variant, &cfg.settings()?)
}

fn variant_for(cfg: &ExperimentConfig, exp: Experiment) -> Variant {
    cfg.variant.unwrap_or(exp.default_variant())
}

/// Result of an optimization started from `init`.
#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub initial: Evaluation,
    pub trace: OptimizationTrace,
    pub optimum: Evaluation,
}

impl OptimizationRun {
    pub fn gain_percent(&self) -> f64 {
        100.0 * (self.optimum.report.value / self.initial.report.value - 1.0)
    }
}

pub fn run_optimization(
    cfg: &ExperimentConfig,
    problem: &Problem,
    init: &FourierShape,
) -> ModelResult<OptimizationRun> {
    let ev = problem.evaluator(init.order());
    let initial = ev.evaluate(init)?;
    let (shape, trace) = optimize(&ev, init, &cfg.optimizer(init.order()))?;
    let optimum = ev.evaluate(&shape)?;
    Ok(OptimizationRun {
        initial,
        trace,
        optimum,
    })
}

fn summary_table(eval: &Evaluation, problem: &Problem) -> Table {
    let mut t = Table::new([
        "variant",
        "objective_d1",
        "raw",
        "space_average_d1",
        "fp_iterations",
        "fp_residual",
        "contraction",
        "contraction_bound",
        "min_h",
        "h_c",
    ]);
    let r = &eval.report;
    t.push(vec![
        r.variant.name().into(),
        r.value.into(),
        r.raw.into(),
        r.space_average.into(),
        eval.fixed_point.iterations.into(),
        eval.fixed_point.residual.into(),
        eval.fixed_point.contraction.into(),
        contraction_bound(&eval.flow, &problem.han).into(),
        eval.flow.min_height().into(),
        problem.hydro.critical_height().into(),
    ]);
    t
}

fn simulate(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let p = problem(cfg, variant_for(cfg, Experiment::Simulate)).map_err(RunError::model("simulate"))?;
    let eval = p.evaluate(&cfg.initial_shape()).map_err(RunError::model("simulate"))?;
    emit_profile_csv(&eval, &out.file("profile.csv"))?;
    summary_table(&eval, &p).write(&out.file("summary.csv"))?;
    let mut t = Table::new(["trajectory", "q", "objective_d1"]);
    for (i, (q, v)) in eval.bundle.fractions.iter().zip(&eval.report.per_trajectory).enumerate() {
        t.push(vec![(i + 1).into(), (*q).into(), (*v).into()]);
    }
    t.write(&out.file("per_trajectory.csv"))?;
    Ok(None)
}

fn write_run(run: &OptimizationRun, out: &mut OutputDir, suffix: &str) -> std::io::Result<()> {
    emit_trace_csv(&run.trace, &out.file(&format!("trace{suffix}.csv")))?;
    emit_shape_csv(&run.optimum.shape, &out.file(&format!("shape{suffix}.csv")))?;
    emit_profile_csv(&run.optimum, &out.file(&format!("profile{suffix}.csv")))
}

fn optimize_driver(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let p = problem(cfg, variant_for(cfg, Experiment::Optimize)).map_err(RunError::model("optimize"))?;
    let run = run_optimization(cfg, &p, &cfg.initial_shape()).map_err(RunError::model("optimize"))?;
    write_run(&run, out, "")?;
    let mut t = Table::new([
        "variant",
        "N",
        "iterations",
        "termination",
        "initial_objective_d1",
        "objective_d1",
        "gain_percent",
        "grad_norm",
    ]);
    let last = run.trace.last();
    t.push(vec![
        p.variant.name().into(),
        run.optimum.shape.order().into(),
        run.trace.iterations().into(),
        run.trace.termination.name().into(),
        run.initial.report.value.into(),
        run.optimum.report.value.into(),
        run.gain_percent().into(),
        last.grad_norm.into(),
    ]);
    t.write(&out.file("summary.csv"))?;
    Ok(Some(run.trace.termination.name().into()))
}

/// Adjoint-versus-finite-difference comparison at one shape.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub variant: Variant,
    pub sample: usize,
    pub shape: FourierShape,
    pub adjoint: Vec<f64>,
    pub fd: Vec<f64>,
}

impl GradCheck {
    /// ‖adjoint − fd‖∞ / ‖fd‖∞.
    pub fn relative_error(&self) -> f64 {
        let diff: Vec<f64> = self.adjoint.iter().zip(&self.fd).map(|(a, b)| a - b).collect();
        norm_inf(&diff) / norm_inf(&self.fd)
    }
}

/// Random subcritical shapes for each variant, seeded per variant.
pub fn compute_gradcheck(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    order: usize,
) -> ModelResult<Vec<GradCheck>> {
    let mut checks = Vec::new();
    for &variant in variants {
        let p = problem(cfg, variant)?;
        let ev = p.evaluator(order);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (variant as u64 + 1).wrapping_mul(0x9E37_79B9));
        for sample in 0..cfg.gradcheck_shapes {
            let mut shape = random_shape(&ev, cfg.a0, &mut rng)?;
            if p.optimizes_mean_depth() {
                let a0 = cfg.a0 * rng.gen_range(0.9..1.1);
                shape = FourierShape { a0, ..shape };
                ev.flow(&shape)?;
            }
            let adjoint = ev.gradient(&shape)?.vector;
            let fd = fd_gradient(&ev, &shape, cfg.fd_eta)?;
            checks.push(GradCheck {
                variant,
                sample,
                shape,
                adjoint,
                fd,
            });
        }
    }
    Ok(checks)
}

fn gradcheck(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let variants = match cfg.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let checks = compute_gradcheck(cfg, &variants, cfg.order).map_err(RunError::model("gradcheck"))?;
    let mut detail = Table::new(["variant", "sample", "component", "adjoint", "fd", "abs_error"]);
    let mut summary = Table::new(["variant", "sample", "max_rel_error"]);
    for c in &checks {
        for (k, (a, f)) in c.adjoint.iter().zip(&c.fd).enumerate() {
            detail.push(vec![
                c.variant.name().into(),
                c.sample.into(),
                k.into(),
                (*a).into(),
                (*f).into(),
                (a - f).abs().into(),
            ]);
        }
        summary.push(vec![c.variant.name().into(), c.sample.into(), c.relative_error().into()]);
    }
    detail.write(&out.file("gradcheck.csv"))?;
    summary.write(&out.file("gradcheck_summary.csv"))?;
    let worst = checks.iter().map(GradCheck::relative_error).fold(0.0, f64::max);
    Ok(Some(format!("max_rel_error={worst:e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NzRow {
    pub nz: usize,
    pub flat: f64,
    /// Mean over the random shapes, when any were drawn.
    pub random_mean: Option<f64>,
}

/// Objective against the number of trajectories, on the flat shape and
/// averaged over `cfg.samples` random order-N shapes.
pub fn compute_sweep_nz(cfg: &ExperimentConfig, variant: Variant) -> ModelResult<Vec<NzRow>> {
    cfg.nz_values
        .iter()
        .map(|&nz| {
            let local = ExperimentConfig { nz, ..cfg.clone() };
            let p = problem(&local, variant)?;
            let ev = p.evaluator(cfg.order);
            let flat = ev.evaluate(&FourierShape::flat(cfg.a0, cfg.order))?.report.value;
            // Same shapes for every Nz: the draw only depends on the seed.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut sum = 0.0;
            for _ in 0..cfg.samples {
                let shape = random_shape(&ev, cfg.a0, &mut rng)?;
                sum += ev.evaluate(&shape)?.report.value;
            }
            Ok(NzRow {
                nz,
                flat,
                random_mean: (cfg.samples > 0).then(|| sum / cfg.samples as f64),
            })
        })
        .collect()
}

fn sweep_nz(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let rows = compute_sweep_nz(cfg, variant_for(cfg, Experiment::SweepNz))
        .map_err(RunError::model("sweep-nz"))?;
    let mut t = Table::new(["Nz", "flat_objective_d1", "mean_random_objective_d1", "samples"]);
    for r in &rows {
        t.push(vec![
            r.nz.into(),
            r.flat.into(),
            r.random_mean.map_or(Cell::Text(String::new()), Cell::Real),
            cfg.samples.into(),
        ]);
    }
    t.write(&out.file("sweep_nz.csv"))?;
    Ok(None)
}

/// Optimizations from the flat shape for every order in `cfg.n_values`.
pub fn compute_sweep_n(cfg: &ExperimentConfig, variant: Variant) -> ModelResult<Vec<OptimizationRun>> {
    let p = problem(cfg, variant)?;
    cfg.n_values
        .iter()
        .map(|&n| run_optimization(cfg, &p, &p.flat(n)))
        .collect()
}

fn sweep_n(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let runs = compute_sweep_n(cfg, variant_for(cfg, Experiment::SweepN)).map_err(RunError::model("sweep-n"))?;
    let mut t = Table::new([
        "N",
        "iterations",
        "objective_d1",
        "log10_grad_norm",
        "gain_percent",
        "termination",
    ]);
    for run in &runs {
        let n = run.optimum.shape.order();
        t.push(vec![
            n.into(),
            run.trace.iterations().into(),
            run.optimum.report.value.into(),
            run.trace.last().grad_norm.log10().into(),
            run.gain_percent().into(),
            run.trace.termination.name().into(),
        ]);
        emit_trace_csv(&run.trace, &out.file(&format!("trace_N{n}.csv")))?;
        emit_shape_csv(&run.optimum.shape, &out.file(&format!("shape_N{n}.csv")))?;
    }
    t.write(&out.file("sweep_n.csv"))?;
    let worst = runs
        .iter()
        .map(|r| r.trace.termination)
        .find(|t| *t != raceway_core::optimizer::Termination::Converged);
    Ok(Some(worst.map_or("converged", |t| t.name()).into()))
}

#[derive(Debug, Clone)]
pub struct PaddleStudy {
    /// Flat shape, one lap, no reassignment.
    pub flat_periodic: f64,
    /// Flat shape with the paddle wheel.
    pub flat_paddle: f64,
    pub run: OptimizationRun,
}

impl PaddleStudy {
    pub fn gain_vs_flat_paddle(&self) -> f64 {
        100.0 * (self.run.optimum.report.value / self.flat_paddle - 1.0)
    }

    pub fn gain_vs_flat_periodic(&self) -> f64 {
        100.0 * (self.run.optimum.report.value / self.flat_periodic - 1.0)
    }
}

pub fn compute_paddle(cfg: &ExperimentConfig) -> ModelResult<PaddleStudy> {
    let paddle = problem(cfg, Variant::Paddle)?;
    let periodic = problem(cfg, Variant::Periodic)?;
    let flat = paddle.flat(cfg.order);
    let flat_periodic = periodic.evaluate(&flat)?.report.value;
    let run = run_optimization(cfg, &paddle, &flat)?;
    Ok(PaddleStudy {
        flat_periodic,
        flat_paddle: run.initial.report.value,
        run,
    })
}

fn paddle(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let study = compute_paddle(cfg).map_err(RunError::model("paddle"))?;
    let mut t = Table::new(["case", "objective_d1", "gain_percent_of_optimum"]);
    let opt = study.run.optimum.report.value;
    t.push(vec!["flat_periodic".into(), study.flat_periodic.into(), study.gain_vs_flat_periodic().into()]);
    t.push(vec!["flat_paddle".into(), study.flat_paddle.into(), study.gain_vs_flat_paddle().into()]);
    t.push(vec!["optimized_paddle".into(), opt.into(), 0.0.into()]);
    t.write(&out.file("paddle.csv"))?;
    write_run(&study.run, out, "")?;
    Ok(Some(study.run.trace.termination.name().into()))
}

#[derive(Debug, Clone)]
pub struct ArealStudy {
    pub compensation: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub a0_star: f64,
    pub at_star: CriticalityReport,
    pub value_at_star: f64,
    pub run: OptimizationRun,
}

pub fn compute_areal(cfg: &ExperimentConfig) -> ModelResult<ArealStudy> {
    let p = problem(cfg, Variant::Areal)?;
    let ap = *p.areal().expect("areal variant");
    let a0_star = ap.optimal_mean_depth()?;
    let ev = p.evaluator(cfg.order);
    let star = FourierShape::flat(a0_star, cfg.order);
    let at_star = criticality_check(&ev, &star, 1e-10)?;
    let value_at_star = ev.evaluate(&star)?.report.value;
    let run = run_optimization(cfg, &p, &cfg.initial_shape())?;
    Ok(ArealStudy {
        compensation: ap.compensation,
        alpha2: ap.alpha2(),
        alpha3: ap.alpha3(),
        a0_star,
        at_star,
        value_at_star,
        run,
    })
}

fn areal(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let s = compute_areal(cfg).map_err(RunError::model("areal"))?;
    let mut t = Table::new(["quantity", "value"]);
    let rows: [(&str, f64); 9] = [
        ("I_zb", s.compensation),
        ("alpha2", s.alpha2),
        ("alpha3", s.alpha3),
        ("a0_star", s.a0_star),
        ("grad_inf_at_star", s.at_star.grad_inf),
        ("value_at_star", s.value_at_star),
        ("initial_value", s.run.initial.report.value),
        ("optimized_a0", s.run.optimum.shape.a0),
        ("optimized_value", s.run.optimum.report.value),
    ];
    for (k, v) in rows {
        t.push(vec![k.into(), v.into()]);
    }
    t.write(&out.file("areal.csv"))?;
    write_run(&s.run, out, "")?;
    Ok(Some(s.run.trace.termination.name().into()))
}

#[derive(Debug, Clone)]
pub struct C0Case {
    pub c0: f64,
    pub flat_gradient: CriticalityReport,
    pub run: OptimizationRun,
}

/// Optimal topographies for each prescribed inlet state in `cfg.c0_values`.
pub fn compute_c0_study(cfg: &ExperimentConfig) -> ModelResult<Vec<C0Case>> {
    cfg.c0_values
        .iter()
        .map(|&c0| {
            let local = ExperimentConfig { c0, ..cfg.clone() };
            let p = problem(&local, Variant::Multi)?;
            let flat = p.flat(cfg.order);
            let flat_gradient = criticality_check(&p.evaluator(cfg.order), &flat, 1e-12)?;
            let run = run_optimization(&local, &p, &flat)?;
            Ok(C0Case {
                c0,
                flat_gradient,
                run,
            })
        })
        .collect()
}

fn c0_study(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Option<String>, RunError> {
    let cases = compute_c0_study(cfg).map_err(RunError::model("c0-study"))?;
    let mut t = Table::new([
        "C0",
        "flat_objective_d1",
        "flat_grad_inf",
        "iterations",
        "objective_d1",
        "termination",
    ]);
    for c in &cases {
        t.push(vec![
            c.c0.into(),
            c.run.initial.report.value.into(),
            c.flat_gradient.grad_inf.into(),
            c.run.trace.iterations().into(),
            c.run.optimum.report.value.into(),
            c.run.trace.termination.name().into(),
        ]);
    }
    t.write(&out.file("c0_study.csv"))?;

    let mut header = vec!["x".to_string()];
    header.extend(cases.iter().map(|c| format!("zb_C0_{}", c.c0)));
    let mut topo = Table::new(header);
    if let Some(first) = cases.first() {
        for n in 0..first.run.optimum.flow.nodes() {
            let mut row: Vec<Cell> = vec![first.run.optimum.flow.x[n].into()];
            row.extend(cases.iter().map(|c| Cell::Real(c.run.optimum.flow.zb[n])));
            topo.push(row);
        }
    }
    topo.write(&out.file("topography.csv"))?;
    Ok(None)
}

pub(crate) fn dispatch(
    exp: Experiment,
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
) -> Result<Option<String>, RunError> {
    match exp {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Optimize => optimize_driver(cfg, out),
        Experiment::Gradcheck => gradcheck(cfg, out),
        Experiment::SweepNz => sweep_nz(cfg, out),
        Experiment::SweepN => sweep_n(cfg, out),
        Experiment::Paddle => paddle(cfg, out),
        Experiment::Areal => areal(cfg, out),
        Experiment::C0Study => c0_study(cfg, out),
    }
}

