//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the verdict lines
//! are always printed.

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::time::Instant;

use escapade_core::lyapunov::{is_hurwitz, solve_lyapunov, DEFAULT_MARGIN};
use escapade_core::probes::{
    constant_input_slope, equivalence_check, es_check, estimate_r, rfc_sweep, uga_table,
    EquivalenceConfig, EsConfig, ReachConfig, RfcConfig, SystemKind, UgaConfig,
};
use escapade_core::systems::{
    cascade_system, default_cascade_delay, greedy_with_dwell, planar_system, run_switching,
    CASCADE_Z, DEFAULT_DWELL,
};
use escapade_core::{
    certify, integrate, residual_audit, DiscreteDelaySystem, HistoryFn, InputSignal,
    IntegratorOptions, LyapunovCert, PlanarParams, SimOutcome, Trajectory,
};

const REL_TOL: f64 = 1e-10;
const ABS_TOL: f64 = 1e-10;
const AUDIT_SAMPLES: usize = 32;

fn opts() -> IntegratorOptions {
    IntegratorOptions::default().with_tolerances(REL_TOL, ABS_TOL)
}

/// Largest residual over every completed run of the suite.
#[derive(Default)]
struct Residuals {
    max: f64,
    runs: usize,
}

impl Residuals {
    fn record(&mut self, r: f64, runs: usize) {
        self.max = self.max.max(r);
        self.runs += runs;
    }

    fn audit(&mut self, traj: &Trajectory, sys: &DiscreteDelaySystem, u: &InputSignal) {
        let r = residual_audit(traj, sys, u, AUDIT_SAMPLES).expect("audit");
        self.record(r, 1);
    }
}

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict { ok, detail }
}

struct Suite {
    params: PlanarParams,
    cert: LyapunovCert,
    residuals: Residuals,
    tau: Option<f64>,
}

impl Suite {
    fn tau(&self) -> f64 {
        self.tau
            .expect("cascade delay is set by the switching criterion")
    }
}

/// `AᵀP + PA + I`, entrywise max, computed from plain arrays.
fn independent_residual(a: [[f64; 2]; 2], p: [[f64; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for k in 0..2 {
                v += a[k][i] * p[k][j] + p[i][k] * a[k][j];
            }
            worst = worst.max(v.abs());
        }
    }
    worst
}

fn lyapunov_grid(s: &mut Suite) -> Verdict {
    let pencil = s.params.pencil();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..=100 {
        let lam = i as f64 / 100.0;
        let a = pencil.at(lam);
        let r = a.rows();
        let hurwitz = r[0][0] + r[1][1] < 0.0 && r[0][0] * r[1][1] - r[0][1] * r[1][0] > 0.0;
        let p = match solve_lyapunov(&a) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("λ={lam}: {e}"));
                continue;
            }
        };
        let res = independent_residual(r, p.to_mat().rows());
        worst = worst.max(res);
        if !(hurwitz && is_hurwitz(&a) && res <= 1e-12) {
            failures.push(format!("λ={lam}: hurwitz={hurwitz} residual={res:e}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "101 λ values, worst residual {worst:.3e} (≤ 1e-12){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {}", failures.join("; "))
            }
        ),
    )
}

fn integrator_oracles(s: &mut Suite) -> Verdict {
    let o = opts();
    let none = InputSignal::none();

    let decay = DiscreteDelaySystem::ode(1, 0, |x, _, _, out| out[0] = -x[0]);
    let traj = integrate(
        &decay,
        &HistoryFn::constant(0.0, vec![1.0]).unwrap(),
        &none,
        1.0,
        &o,
    )
    .unwrap()
    .into_trajectory();
    s.residuals.audit(&traj, &decay, &none);
    let err_decay = (traj.final_value()[0] - (-1f64).exp()).abs();

    let blowup = DiscreteDelaySystem::ode(1, 0, |x, _, _, out| out[0] = 1.0 + x[0] * x[0]);
    let out = integrate(
        &blowup,
        &HistoryFn::constant(0.0, vec![0.0]).unwrap(),
        &none,
        3.0,
        &o,
    )
    .unwrap();
    let t_esc = out.escape().map(|e| e.t_escape);
    let esc_ok = t_esc.is_some_and(|t| (t - FRAC_PI_2).abs() <= 1e-3);

    let tau = 1.0;
    let sys = cascade_system(&s.params, tau).unwrap();
    let z0 = 1.0;
    let hist = HistoryFn::constant(tau, vec![z0, 0.3, -0.2]).unwrap();
    let horizon = 10.0;
    let traj = integrate(&sys, &hist, &none, horizon, &o)
        .unwrap()
        .into_trajectory();
    s.residuals.audit(&traj, &sys, &none);
    let err_z = (1..=100)
        .map(|i| {
            let t = horizon * i as f64 / 100.0;
            (traj.eval(t).unwrap()[CASCADE_Z] - z0 * (-t).exp()).abs()
        })
        .fold(0.0, f64::max);

    let bound = 10.0 * REL_TOL;
    verdict(
        err_decay <= bound && esc_ok && err_z <= bound,
        format!(
            "|x(1)-e^-1| = {err_decay:.2e}, tan escape at {t_esc:?} (π/2 ± 1e-3), \
             max |z - z0 e^-t| = {err_z:.2e} (bound {bound:e})"
        ),
    )
}

fn planar_not_forward_complete(s: &mut Suite) -> Verdict {
    let o = opts();
    let policy = greedy_with_dwell(&s.params, DEFAULT_DWELL).unwrap();
    let run = run_switching(&s.params, &policy, [0.0, 1.0], 20.0, &o).unwrap();
    let escaped = run.t_escape.is_some() && run.peak >= o.escape_threshold;
    if let Some(t) = run.t_escape {
        s.tau = Some(default_cascade_delay(t));
    }

    let sys = planar_system(&s.params);
    let starts = [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [-0.7, 0.4], [0.2, -1.0]];
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=20 {
        let u = -0.5 + 2.0 * k as f64 / 20.0;
        for &x0 in &starts {
            let slope = constant_input_slope(&s.params, u, x0, 5.0, 400, &o).unwrap();
            worst = worst.max(slope);
            let input = InputSignal::constant(vec![u]);
            let out = integrate(
                &sys,
                &HistoryFn::constant(0.0, x0.to_vec()).unwrap(),
                &input,
                5.0,
                &o,
            )
            .unwrap();
            if let SimOutcome::Completed { trajectory } = out {
                s.residuals.audit(&trajectory, &sys, &input);
            }
        }
    }
    verdict(
        escaped && worst <= 1e-6,
        format!(
            "greedy escape at t = {:?} (peak {:.3e}), worst relative dW/dt under constant \
             inputs {worst:.3e} (≤ 1e-6)",
            run.t_escape, run.peak
        ),
    )
}

fn rfc_falsification(s: &mut Suite) -> Verdict {
    let cfg = RfcConfig {
        audit_samples: AUDIT_SAMPLES,
        ..Default::default()
    };
    match rfc_sweep(&s.params, &s.cert, &cfg, &opts()) {
        Ok(sw) => {
            s.residuals.record(sw.max_residual, sw.peaks.len());
            let settled = sw.settled_within_bound();
            let worst_settle = sw.settle_times.iter().cloned().fold(0.0, f64::max);
            verdict(
                sw.strictly_increasing && sw.growth >= 10.0 && settled,
                format!(
                    "{} runs completed, peaks {:.4?}, strictly increasing = {}, growth {:.2} \
                     (≥ 10), latest settle {worst_settle:.2} ≤ bound {:.1}: {settled}",
                    sw.peaks.len(),
                    sw.peaks,
                    sw.strictly_increasing,
                    sw.growth,
                    sw.reach_bound
                ),
            )
        }
        Err(e) => verdict(false, format!("sweep failed: {e}")),
    }
}

fn es_envelope(s: &mut Suite) -> Verdict {
    let cfg = EsConfig {
        audit_samples: AUDIT_SAMPLES,
        ..Default::default()
    };
    match es_check(&s.params, &s.cert, s.tau(), &cfg, &opts()) {
        Ok(fit) => {
            s.residuals.record(fit.max_residual, fit.runs);
            verdict(
                fit.passed() && fit.runs == 200,
                format!(
                    "{} runs on [0, 30], {} violations in {} checks, k = {:.4} (empirical {:.4}), \
                     p = {:.4e} (empirical {:.4e})",
                    fit.runs, fit.violations, fit.checked, fit.k, fit.k_emp, fit.p, fit.p_emp
                ),
            )
        }
        Err(e) => verdict(false, format!("envelope check failed: {e}")),
    }
}

fn uga_reach_time(s: &mut Suite) -> Verdict {
    let cfg = UgaConfig {
        audit_samples: AUDIT_SAMPLES,
        ..Default::default()
    };
    match uga_table(&s.params, &s.cert, s.tau(), &cfg, &opts()) {
        Ok(table) => {
            s.residuals
                .record(table.max_residual, cfg.r_list.len() * cfg.per_cell);
            let cells: Vec<String> = table
                .cells
                .iter()
                .map(|c| {
                    format!(
                        "r={} ε={}: {:.2} ≤ {:.1} ({} late)",
                        c.r, c.eps, c.empirical, c.bound, c.violations
                    )
                })
                .collect();
            verdict(
                table.passed() && table.cells.iter().all(|c| c.samples == 50),
                cells.join(", "),
            )
        }
        Err(e) => verdict(false, format!("reach-time table failed: {e}")),
    }
}

fn embeddings(s: &mut Suite) -> Verdict {
    let tau = s.tau();
    let sys = cascade_system(&s.params, tau).unwrap();
    let cfg = EquivalenceConfig {
        audit_samples: AUDIT_SAMPLES,
        ..Default::default()
    };
    let report = match equivalence_check(&sys, &cfg, &opts()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("equivalence check failed: {e}")),
    };
    s.residuals.record(report.max_residual, 4 * report.pairs);
    let mut exact = true;
    for r in [0.0, 0.25, 1.0, 10.0] {
        let est = estimate_r(
            &s.params,
            SystemKind::Associated { tau },
            r,
            0.0,
            &ReachConfig::default(),
            &opts(),
        )
        .unwrap();
        exact &= est.lower_bound == r;
    }
    verdict(
        report.passed() && report.pairs == 50 && exact,
        format!(
            "{} pairs, max deviation {:.2e} on [0, {:.4}] and {:.2e} on [0, {:.4}], \
             worst ratio to 10x tolerance {:.3}, R(r, 0) = r exactly: {exact}",
            report.pairs,
            report.max_dev_embed,
            report.embed_window,
            report.max_dev_inverse,
            report.inverse_window,
            report.worst_ratio
        ),
    )
}

fn integral_audit(s: &mut Suite) -> Verdict {
    let tau = s.tau();
    let sys = cascade_system(&s.params, tau).unwrap();
    let hist = HistoryFn::linear(
        &[-tau, -0.6, 0.0],
        &[
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.5, 1.0],
            vec![0.3, 0.0, 1.0],
        ],
    )
    .unwrap();
    let none = InputSignal::none();
    let residual_at = |rel: f64, abs: f64| {
        let o = IntegratorOptions::default().with_tolerances(rel, abs);
        let traj = integrate(&sys, &hist, &none, 10.0, &o)
            .unwrap()
            .into_trajectory();
        residual_audit(&traj, &sys, &none, AUDIT_SAMPLES).unwrap()
    };
    let coarse = residual_at(REL_TOL, ABS_TOL);
    let fine = residual_at(REL_TOL / 10.0, ABS_TOL / 10.0);
    s.residuals.record(coarse, 1);
    let bound = 100.0 * ABS_TOL;
    let shrink = coarse / fine;
    verdict(
        s.residuals.max <= bound && shrink >= 4.0,
        format!(
            "max residual {:.3e} over {} completed runs (≤ {bound:e}), \
             shrink at 10x tighter tolerance {shrink:.2} (≥ 4)",
            s.residuals.max, s.residuals.runs
        ),
    )
}

fn main() -> ExitCode {
    let params = PlanarParams::default();
    let cert = certify(&params.pencil(), DEFAULT_MARGIN).expect("default pencil certifies");
    let mut suite = Suite {
        params,
        cert,
        residuals: Residuals::default(),
        tau: None,
    };
    type Criterion = fn(&mut Suite) -> Verdict;
    // The switching criterion fixes the cascade delay used by later ones,
    // and the audit criterion collects residuals from all of them.
    let criteria: [(usize, &str, Criterion); 8] = [
        (1, "lyapunov certification", lyapunov_grid),
        (2, "integrator oracles", integrator_oracles),
        (
            3,
            "planar system is not forward complete",
            planar_not_forward_complete,
        ),
        (6, "robust forward completeness fails", rfc_falsification),
        (4, "exponential stability envelope", es_envelope),
        (5, "uniform global attractivity", uga_reach_time),
        (7, "delay-free embeddings", embeddings),
        (8, "integral-form residual audit", integral_audit),
    ];
    let mut results = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let v = run(&mut suite);
        let line = format!(
            "{} criterion {id} ({name}) [{:.1} s]: {}",
            if v.ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        println!("{line}");
        results.push((id, v.ok, line));
    }
    results.sort_by_key(|r| r.0);
    let failed = results.iter().filter(|r| !r.1).count();
    println!("\nacceptance summary (rel_tol = {REL_TOL:e}, abs_tol = {ABS_TOL:e}):");
    for (_, _, line) in &results {
        println!("  {}", line.split(" [").next().unwrap_or(line));
    }
    if failed == 0 {
        println!("all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
