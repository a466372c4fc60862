//! Dispatch of a manifest to the experiments and their artifacts.

use std::path::PathBuf;

use escapade_core::lyapunov::{is_hurwitz, lyapunov_residual, solve_lyapunov};
use escapade_core::poly::inf_norm;
use escapade_core::probes::{
    equivalence_check, es_check, es_draw, estimate_r_sweep, rfc_sweep, uga_table, SystemKind,
};
use escapade_core::systems::{
    associated_system, cascade_system, default_cascade_delay, greedy_with_dwell, planar_system,
    run_switching, DEFAULT_DWELL,
};
use escapade_core::{
    certify, integrate, residual_audit, DiscreteDelaySystem, HistoryFn, InputSignal,
    IntegratorOptions, PlanarParams, SimOutcome,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{
    EquivTask, EsTask, EscapeTask, EstimateRTask, HistoryChoice, LyapunovTask, RfcTask,
    RunManifest, SimulateTask, SystemChoice, Task, UgaTask,
};
use crate::output::{ensure_dir, num, write_json, write_text, Plot, Series, Table};

/// Growth of the largest over the smallest peak that counts as unbounded.
pub const RFC_MIN_GROWTH: f64 = 10.0;
const AUDIT_SAMPLES: usize = 32;
const LYAPUNOV_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(property: &str, passed: bool, detail: String) -> Self {
        Self {
            property: property.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {} ({})", self.property, self.detail)
    }
}

/// What a run produced, besides the files it wrote.
pub struct Report {
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
    /// Text for standard output before the verdicts.
    pub stdout: Option<String>,
}

struct Ctx<'a> {
    m: &'a RunManifest,
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn opts(&self) -> &IntegratorOptions {
        &self.m.integrator
    }

    fn params(&self) -> &PlanarParams {
        &self.m.system
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.out.join(format!("{}.{ext}", self.m.task.name()))
    }

    fn table(&mut self, t: &Table) -> Result<(), CliError> {
        let p = self.path("csv");
        t.write(&p)?;
        self.files.push(p);
        Ok(())
    }

    fn summary(&mut self, result: Value, verdicts: &[Verdict]) -> Result<(), CliError> {
        let p = self.path("json");
        write_json(
            &p,
            &json!({
                "subcommand": self.m.task.name(),
                "result": result,
                "verdicts": verdicts,
            }),
        )?;
        self.files.push(p);
        Ok(())
    }

    fn plot(&mut self, make: impl FnOnce() -> Plot) -> Result<(), CliError> {
        if let Some(p) = &self.m.svg {
            write_text(p, &make().render())?;
            self.files.push(p.clone());
        }
        Ok(())
    }

    /// `τ` if given, else 1.5 times the greedy escape time from `(0, 1)`.
    fn tau(&self, tau: Option<f64>) -> Result<f64, CliError> {
        if let Some(t) = tau {
            return Ok(t);
        }
        let policy = greedy_with_dwell(self.params(), DEFAULT_DWELL)?;
        let run = run_switching(self.params(), &policy, [0.0, 1.0], 20.0, self.opts())?;
        run.t_escape.map(default_cascade_delay).ok_or_else(|| {
            CliError::config(
                "task.tau",
                "greedy switching does not escape with these matrices; set tau explicitly",
            )
        })
    }

    fn residual_verdict(&self, residual: f64) -> Verdict {
        let bound = 100.0 * self.opts().abs_tol;
        Verdict::new(
            "residual audit ≤ 100·abs_tol",
            residual <= bound,
            format!("max residual {residual:.3e}, bound {bound:.1e}"),
        )
    }
}

pub fn run(m: &RunManifest) -> Result<Report, CliError> {
    m.validate()?;
    let out = ensure_dir(&m.out)?;
    let mut ctx = Ctx {
        m,
        out,
        files: Vec::new(),
    };
    let (verdicts, stdout) = match &m.task {
        Task::Lyapunov(t) => lyapunov(&mut ctx, t)?,
        Task::Simulate(t) => (simulate(&mut ctx, t)?, None),
        Task::Escape(t) => (escape(&mut ctx, t)?, None),
        Task::EstimateR(t) => (estimate(&mut ctx, t)?, None),
        Task::RfcSweep(t) => (rfc(&mut ctx, t)?, None),
        Task::EsCheck(t) => (es(&mut ctx, t)?, None),
        Task::UgaTable(t) => (uga(&mut ctx, t)?, None),
        Task::EquivCheck(t) => (equiv(&mut ctx, t)?, None),
    };
    let manifest = ctx.out.join("manifest.json");
    write_text(&manifest, &(m.to_json() + "\n"))?;
    ctx.files.push(manifest);
    Ok(Report {
        verdicts,
        files: ctx.files,
        stdout,
    })
}

fn lyapunov(ctx: &mut Ctx, t: &LyapunovTask) -> Result<(Vec<Verdict>, Option<String>), CliError> {
    let pencil = ctx.params().pencil();
    let mut result = serde_json::Map::new();
    let mut verdicts = Vec::new();
    let mut table = Table::new(vec!["lambda", "p11", "p12", "p22", "c1", "c2", "residual"]);
    let lambdas: Vec<f64> = match t.lambda {
        Some(l) => vec![l],
        None if t.constants => Vec::new(),
        None => (0..=100).map(|i| i as f64 / 100.0).collect(),
    };
    let mut worst: f64 = 0.0;
    let mut hurwitz = true;
    let (mut c1s, mut c2s) = (Vec::new(), Vec::new());
    for &lam in &lambdas {
        let a = pencil.at(lam);
        hurwitz &= is_hurwitz(&a);
        let p = solve_lyapunov(&a)?;
        let res = lyapunov_residual(&a, &p);
        worst = worst.max(res);
        c1s.push((lam, p.c1));
        c2s.push((lam, p.c2));
        table.push(vec![
            num(lam),
            num(p.p11),
            num(p.p12),
            num(p.p22),
            num(p.c1),
            num(p.c2),
            num(res),
        ]);
        if t.lambda.is_some() {
            result.insert("lambda".into(), json!(lam));
            result.insert("p".into(), json!([[p.p11, p.p12], [p.p12, p.p22]]));
            result.insert("c1".into(), json!(p.c1));
            result.insert("c2".into(), json!(p.c2));
            result.insert("residual".into(), json!(res));
        }
    }
    if !lambdas.is_empty() {
        if t.lambda.is_none() {
            result.insert("grid_points".into(), json!(lambdas.len()));
            result.insert("max_residual".into(), json!(worst));
        }
        verdicts.push(Verdict::new(
            "A(λ) Hurwitz with Lyapunov residual ≤ 1e-12",
            hurwitz && worst <= LYAPUNOV_RESIDUAL,
            format!("{} value(s) of λ, max residual {worst:.3e}", lambdas.len()),
        ));
    }
    if t.constants {
        let cert = certify(&pencil, t.margin)?;
        let c = cert.constants;
        result.insert(
            "constants".into(),
            json!({
                "capital_lambda": c.capital_lambda,
                "k": c.k,
                "p": c.p,
                "c1": c.c1,
                "c2": c.c2,
                "margin": cert.margin,
                "p0": [[cert.p0.p11, cert.p0.p12], [cert.p0.p12, cert.p0.p22]],
            }),
        );
        verdicts.push(Verdict::new(
            "certificate margin holds on [0, Λ] with Λ > 0",
            c.capital_lambda > 0.0,
            format!(
                "Λ = {:.6e}, k = {:.6}, p = {:.6e}",
                c.capital_lambda, c.k, c.p
            ),
        ));
    }
    ctx.table(&table)?;
    if lambdas.len() > 1 {
        ctx.plot(|| Plot {
            title: "eigenvalues of the Lyapunov solution of A(λ)".into(),
            x_label: "λ".into(),
            y_label: "eigenvalue".into(),
            log_x: false,
            log_y: true,
            series: vec![
                Series {
                    label: "c1 (smallest)".into(),
                    points: c1s,
                },
                Series {
                    label: "c2 (largest)".into(),
                    points: c2s,
                },
            ],
        })?;
    } else if ctx.m.svg.is_some() {
        eprintln!("note: lyapunov plots only the λ grid; --svg ignored");
    }
    let result = Value::Object(result);
    let text = serde_json::to_string_pretty(&result).expect("serializes");
    ctx.summary(result, &verdicts)?;
    Ok((verdicts, Some(text)))
}

fn build_system(
    ctx: &Ctx,
    choice: SystemChoice,
    tau: Option<f64>,
) -> Result<DiscreteDelaySystem, CliError> {
    Ok(match choice {
        SystemChoice::Planar => planar_system(ctx.params()),
        SystemChoice::Cascade => cascade_system(ctx.params(), ctx.tau(tau)?)?,
        SystemChoice::Associated => {
            associated_system(&cascade_system(ctx.params(), ctx.tau(tau)?)?)
        }
    })
}

fn build_history(choice: &HistoryChoice, tau: f64, n: usize) -> Result<HistoryFn, CliError> {
    let h = match choice {
        HistoryChoice::Zero => HistoryFn::zeros(tau, n)?,
        HistoryChoice::Constant { value } => {
            if value.len() != n {
                return Err(CliError::config(
                    "task.history.value",
                    format!("expects {n} components, got {}", value.len()),
                ));
            }
            HistoryFn::constant(tau, value.clone())?
        }
        HistoryChoice::Linear { knots, values } => {
            if values.iter().any(|v| v.len() != n) {
                return Err(CliError::config(
                    "task.history.values",
                    format!("expects {n} components per knot"),
                ));
            }
            HistoryFn::linear(knots, values)?
        }
    };
    if h.tau() < tau {
        return Err(CliError::config(
            "task.history.knots",
            format!("history must cover [-{tau}, 0]"),
        ));
    }
    Ok(h)
}

fn simulate(ctx: &mut Ctx, t: &SimulateTask) -> Result<Vec<Verdict>, CliError> {
    let sys = build_system(ctx, t.system, t.tau)?;
    let (n, m) = (sys.dim(), sys.input_dim());
    let hist = build_history(&t.history, sys.max_delay(), n)?;
    let input = match &t.input {
        Some(u) => {
            if u.dim() != m {
                return Err(CliError::config(
                    "task.input",
                    format!(
                        "{} system takes {m} input(s), signal has {}",
                        sys.name(),
                        u.dim()
                    ),
                ));
            }
            u.clone()
        }
        None if m == 0 => InputSignal::none(),
        None => InputSignal::constant(vec![0.0; m]),
    };
    let out = integrate(&sys, &hist, &input, t.t_end, ctx.opts())?;
    let traj = out.trajectory();
    let end = traj.end();
    let mut header = vec!["t"];
    const NAMES: [&str; 8] = ["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8"];
    header.extend(NAMES.iter().take(n));
    let mut table = Table::new(header);
    let rows = if end > 0.0 {
        traj.sample(0.0, end, t.grid)
    } else {
        vec![(0.0, traj.initial_value())]
    };
    for (time, y) in &rows {
        let mut row = vec![num(*time)];
        row.extend(y.iter().map(|&v| num(v)));
        table.push(row);
    }
    ctx.table(&table)?;
    let mut verdicts = Vec::new();
    let residual = match &out {
        SimOutcome::Completed { trajectory } => {
            let r = residual_audit(trajectory, &sys, &input, AUDIT_SAMPLES)?;
            verdicts.push(ctx.residual_verdict(r));
            Some(r)
        }
        SimOutcome::Escaped(_) => None,
    };
    let escape = out.escape();
    ctx.summary(
        json!({
            "system": sys.name(),
            "delays": sys.delays(),
            "outcome": if escape.is_some() { "escaped" } else { "completed" },
            "t_end": end,
            "t_escape": escape.map(|e| e.t_escape),
            "escape_cause": escape.map(|e| e.cause),
            "steps": traj.step_count(),
            "residual": residual,
            "integrator": ctx.opts(),
        }),
        &verdicts,
    )?;
    ctx.plot(|| Plot {
        title: format!("{} system", sys.name()),
        x_label: "t".into(),
        y_label: "|x(t)|∞".into(),
        log_x: false,
        log_y: false,
        series: vec![Series {
            label: "|x|∞".into(),
            points: rows.iter().map(|(t, y)| (*t, inf_norm(y))).collect(),
        }],
    })?;
    Ok(verdicts)
}

fn escape(ctx: &mut Ctx, t: &EscapeTask) -> Result<Vec<Verdict>, CliError> {
    let policy = greedy_with_dwell(ctx.params(), t.dwell)?;
    let run = run_switching(ctx.params(), &policy, t.x0, t.horizon, ctx.opts())?;
    let mut table = Table::new(vec!["t", "x1", "x2", "u"]);
    let mut points = Vec::new();
    for &time in run.path.breaks() {
        let x = run.path.eval(time).expect("break inside span");
        let u = run.schedule.eval_left(time.max(f64::MIN_POSITIVE))?[0];
        table.push(vec![num(time), num(x[0]), num(x[1]), num(u)]);
        points.push((time, inf_norm(&x)));
    }
    ctx.table(&table)?;
    let escaped = run.t_escape.is_some();
    let verdicts = vec![Verdict::new(
        "finite escape under piecewise-constant switching",
        escaped,
        match run.t_escape {
            Some(te) => format!("|x| reached {:.3e} at t = {te:.10}", run.peak),
            None => format!("no escape before T = {}, peak {:.3e}", t.horizon, run.peak),
        },
    )];
    ctx.summary(
        json!({
            "x0": t.x0,
            "horizon": t.horizon,
            "dwell": t.dwell,
            "escape_threshold": ctx.opts().escape_threshold,
            "t_escape": run.t_escape,
            "peak": run.peak,
            "pieces": run.pieces,
            "cascade_tau": run.t_escape.map(default_cascade_delay),
        }),
        &verdicts,
    )?;
    ctx.plot(|| Plot {
        title: "greedy switching".into(),
        x_label: "t".into(),
        y_label: "|x(t)|∞".into(),
        log_x: false,
        log_y: true,
        series: vec![Series {
            label: "|x|∞".into(),
            points,
        }],
    })?;
    Ok(verdicts)
}

fn estimate(ctx: &mut Ctx, t: &EstimateRTask) -> Result<Vec<Verdict>, CliError> {
    let kind = match t.system {
        SystemChoice::Planar => SystemKind::Planar,
        SystemChoice::Cascade => SystemKind::Cascade {
            tau: ctx.tau(t.tau)?,
        },
        SystemChoice::Associated => SystemKind::Associated {
            tau: ctx.tau(t.tau)?,
        },
    };
    let sweep = estimate_r_sweep(
        ctx.params(),
        kind,
        &t.radii,
        t.horizon,
        &t.probe,
        ctx.opts(),
    )?;
    let mut table = Table::new(vec![
        "r",
        "horizon",
        "lower_bound",
        "escape_seen",
        "best_draw",
        "sample_budget",
    ]);
    for e in &sweep {
        table.push(vec![
            num(e.r),
            num(e.horizon),
            num(e.lower_bound),
            e.escape_seen.to_string(),
            e.best_draw.to_string(),
            e.sample_budget.to_string(),
        ]);
    }
    ctx.table(&table)?;
    let mut verdicts = vec![Verdict::new(
        "estimate nondecreasing in r",
        sweep
            .windows(2)
            .all(|w| w[1].lower_bound >= w[0].lower_bound),
        format!("{} radii", sweep.len()),
    )];
    if t.horizon == 0.0 {
        verdicts.push(Verdict::new(
            "R(r, 0) = r",
            sweep.iter().all(|e| e.lower_bound == e.r),
            "horizon 0".into(),
        ));
    }
    ctx.summary(json!({ "kind": kind, "estimates": sweep }), &verdicts)?;
    ctx.plot(|| Plot {
        title: "reachable-set radius, lower bound".into(),
        x_label: "r".into(),
        y_label: "R(r, T)".into(),
        log_x: false,
        log_y: true,
        series: vec![Series {
            label: format!("T = {}", t.horizon),
            points: sweep.iter().map(|e| (e.r, e.lower_bound)).collect(),
        }],
    })?;
    Ok(verdicts)
}

fn rfc(ctx: &mut Ctx, t: &RfcTask) -> Result<Vec<Verdict>, CliError> {
    let cert = certify(
        &ctx.params().pencil(),
        escapade_core::lyapunov::DEFAULT_MARGIN,
    )?;
    let sw = rfc_sweep(ctx.params(), &cert, &t.probe, ctx.opts())?;
    let mut table = Table::new(vec!["delta", "peak", "settle_time", "reach_bound"]);
    for ((d, p), s) in sw.deltas.iter().zip(&sw.peaks).zip(&sw.settle_times) {
        table.push(vec![num(*d), num(*p), num(*s), num(sw.reach_bound)]);
    }
    ctx.table(&table)?;
    let verdicts = vec![
        Verdict::new(
            "every run completes",
            true,
            format!("{} runs on [0, {:.1}]", sw.peaks.len(), sw.reach_bound),
        ),
        Verdict::new(
            "peaks strictly increasing as δ shrinks",
            sw.strictly_increasing,
            format!("peaks {:.4?}", sw.peaks),
        ),
        Verdict::new(
            "RFC falsified: growth ≥ 10×",
            sw.rfc_falsified(RFC_MIN_GROWTH),
            format!("growth {:.3}", sw.growth),
        ),
        Verdict::new(
            "every run settles by T(r, ε)",
            sw.settled_within_bound(),
            format!(
                "latest settle {:.3}, bound {:.1} for ε = {}",
                sw.settle_times.iter().cloned().fold(0.0, f64::max),
                sw.reach_bound,
                sw.eps
            ),
        ),
        ctx.residual_verdict(sw.max_residual),
    ];
    ctx.summary(json!(sw), &verdicts)?;
    ctx.plot(|| Plot {
        title: "peak of |x| on [0, τ] against smoothing width".into(),
        x_label: "δ".into(),
        y_label: "peak".into(),
        log_x: true,
        log_y: false,
        series: vec![Series {
            label: "sup |x|∞".into(),
            points: sw
                .deltas
                .iter()
                .cloned()
                .zip(sw.peaks.iter().cloned())
                .collect(),
        }],
    })?;
    Ok(verdicts)
}

fn es(ctx: &mut Ctx, t: &EsTask) -> Result<Vec<Verdict>, CliError> {
    let cert = certify(
        &ctx.params().pencil(),
        escapade_core::lyapunov::DEFAULT_MARGIN,
    )?;
    let tau = ctx.tau(t.tau)?;
    let fit = es_check(ctx.params(), &cert, tau, &t.probe, ctx.opts())?;
    let mut table = Table::new(vec![
        "run",
        "norm",
        "k_emp",
        "p_emp",
        "violations",
        "checked",
        "residual",
    ]);
    for r in &fit.per_run {
        table.push(vec![
            r.index.to_string(),
            num(r.norm),
            num(r.k_emp),
            num(r.p_emp),
            r.violations.to_string(),
            r.checked.to_string(),
            num(r.residual),
        ]);
    }
    ctx.table(&table)?;
    let verdicts = vec![
        Verdict::new(
            "ES envelope |state(t)| ≤ k‖φ‖e^{-pt}",
            fit.passed(),
            format!(
                "{} violations over {} runs, k = {:.4} (empirical {:.4}), p = {:.4e} (empirical {:.4e})",
                fit.violations, fit.runs, fit.k, fit.k_emp, fit.p, fit.p_emp
            ),
        ),
        ctx.residual_verdict(fit.max_residual),
    ];
    let mut summary = serde_json::to_value(&fit).expect("serializes");
    if let Value::Object(o) = &mut summary {
        o.remove("per_run");
        o.insert("tau".into(), json!(tau));
    }
    ctx.summary(summary, &verdicts)?;
    if ctx.m.svg.is_some() {
        // the run closest to its envelope
        let worst = fit
            .per_run
            .iter()
            .max_by(|a, b| a.k_emp.total_cmp(&b.k_emp))
            .expect("at least one run");
        let (norm, hist) = es_draw(&t.probe, cert.capital_lambda(), tau, worst.index);
        let sys = cascade_system(ctx.params(), tau)?;
        let traj = integrate(
            &sys,
            &hist,
            &InputSignal::none(),
            t.probe.horizon,
            ctx.opts(),
        )?
        .into_trajectory();
        let samples = traj.sample(0.0, traj.end(), 400);
        let (k, p) = (fit.k, fit.p);
        ctx.plot(|| Plot {
            title: format!("run {} against its envelope", worst.index),
            x_label: "t".into(),
            y_label: "|state(t)|∞".into(),
            log_x: false,
            log_y: true,
            series: vec![
                Series {
                    label: "|state|∞".into(),
                    points: samples.iter().map(|(t, y)| (*t, inf_norm(y))).collect(),
                },
                Series {
                    label: "k‖φ‖e^{-pt}".into(),
                    points: samples
                        .iter()
                        .map(|(t, _)| (*t, k * norm * (-p * t).exp()))
                        .collect(),
                },
            ],
        })?;
    }
    Ok(verdicts)
}

fn uga(ctx: &mut Ctx, t: &UgaTask) -> Result<Vec<Verdict>, CliError> {
    let cert = certify(
        &ctx.params().pencil(),
        escapade_core::lyapunov::DEFAULT_MARGIN,
    )?;
    let tau = ctx.tau(t.tau)?;
    let table_out = uga_table(ctx.params(), &cert, tau, &t.probe, ctx.opts())?;
    let mut table = Table::new(vec![
        "r",
        "eps",
        "bound",
        "samples",
        "empirical",
        "violations",
    ]);
    for c in &table_out.cells {
        table.push(vec![
            num(c.r),
            num(c.eps),
            num(c.bound),
            c.samples.to_string(),
            num(c.empirical),
            c.violations.to_string(),
        ]);
    }
    ctx.table(&table)?;
    let verdicts = vec![
        Verdict::new(
            "every sample settles by T(r, ε)",
            table_out.passed(),
            format!(
                "{} cells, {} late samples",
                table_out.cells.len(),
                table_out.cells.iter().map(|c| c.violations).sum::<usize>()
            ),
        ),
        ctx.residual_verdict(table_out.max_residual),
    ];
    ctx.summary(json!(table_out), &verdicts)?;
    let first_eps = t.probe.eps_list.first().copied();
    ctx.plot(|| Plot {
        title: "latest settling time against history norm".into(),
        x_label: "r".into(),
        y_label: "settling time".into(),
        log_x: true,
        log_y: false,
        series: vec![Series {
            label: format!("ε = {}", first_eps.unwrap_or(f64::NAN)),
            points: table_out
                .cells
                .iter()
                .filter(|c| Some(c.eps) == first_eps)
                .map(|c| (c.r, c.empirical))
                .collect(),
        }],
    })?;
    Ok(verdicts)
}

fn equiv(ctx: &mut Ctx, t: &EquivTask) -> Result<Vec<Verdict>, CliError> {
    let tau = ctx.tau(t.tau)?;
    let sys = cascade_system(ctx.params(), tau)?;
    let rep = equivalence_check(&sys, &t.probe, ctx.opts())?;
    let mut table = Table::new(vec![
        "pairs",
        "embed_window",
        "inverse_window",
        "max_dev_embed",
        "max_dev_inverse",
        "worst_ratio",
        "max_residual",
    ]);
    table.push(vec![
        rep.pairs.to_string(),
        num(rep.embed_window),
        num(rep.inverse_window),
        num(rep.max_dev_embed),
        num(rep.max_dev_inverse),
        num(rep.worst_ratio),
        num(rep.max_residual),
    ]);
    ctx.table(&table)?;
    let verdicts = vec![
        Verdict::new(
            "delay and delay-free runs agree",
            rep.passed(),
            format!(
                "worst deviation {:.3} of {}x tolerance over {} pairs",
                rep.worst_ratio, t.probe.tol_factor, rep.pairs
            ),
        ),
        ctx.residual_verdict(rep.max_residual),
    ];
    ctx.summary(json!({ "tau": tau, "report": rep }), &verdicts)?;
    if ctx.m.svg.is_some() {
        eprintln!("note: equiv-check has no plot; --svg ignored");
    }
    Ok(verdicts)
}
