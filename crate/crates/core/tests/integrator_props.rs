use escapade_core::systems::{cascade_system, planar_system, CASCADE_Z};
use escapade_core::{
    integrate, residual_audit, DiscreteDelaySystem, HistoryFn, InputSignal, IntegratorOptions,
    Kink, KinkSource, PlanarParams, SimOutcome, Trajectory,
};
use proptest::prelude::*;

fn completed(out: SimOutcome) -> Trajectory {
    match out {
        SimOutcome::Completed { trajectory } => trajectory,
        SimOutcome::Escaped(e) => panic!("unexpected escape at {}", e.t_escape),
    }
}

fn near_step(traj: &Trajectory, t: f64) -> bool {
    traj.step_times()
        .iter()
        .any(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_growth_matches_exponential(a in -3.0f64..1.0, x0 in -2.0f64..2.0, t in 0.1f64..3.0) {
        let sys = DiscreteDelaySystem::ode(1, 0, move |x, _, _, out| out[0] = a * x[0]);
        let opts = IntegratorOptions::default().with_tolerances(1e-10, 1e-12);
        let traj = completed(
            integrate(&sys, &HistoryFn::constant(0.0, vec![x0]).unwrap(), &InputSignal::none(), t, &opts)
                .unwrap(),
        );
        for i in 0..=10 {
            let s = (t * i as f64 / 10.0).min(t);
            let exact = x0 * (a * s).exp();
            let got = traj.eval(s).unwrap()[0];
            prop_assert!((got - exact).abs() <= 1e-8 * exact.abs().max(1.0), "t={s}: {got} vs {exact}");
        }
    }

    #[test]
    fn delayed_decay_matches_steps_solution(c in -2.0f64..2.0, tau in 0.3f64..2.0) {
        // x' = -x(t - τ), x ≡ c on [-τ, 0]:
        // x = c(1 - t) on [0, τ], x = c(1 - t + (t - τ)²/2) on [τ, 2τ].
        let sys = DiscreteDelaySystem::new(1, 0, vec![tau], |_, d, _, out| out[0] = -d[0]).unwrap();
        let h = HistoryFn::constant(tau, vec![c]).unwrap();
        let opts = IntegratorOptions::default().with_tolerances(1e-10, 1e-12);
        let traj = completed(integrate(&sys, &h, &InputSignal::none(), 2.0 * tau, &opts).unwrap());
        for i in 0..=20 {
            let t = (2.0 * tau * i as f64 / 20.0).min(2.0 * tau);
            let exact = if t <= tau {
                c * (1.0 - t)
            } else {
                c * (1.0 - t + 0.5 * (t - tau).powi(2))
            };
            prop_assert!((traj.eval(t).unwrap()[0] - exact).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical(z0 in -3.0f64..3.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
        let sys = cascade_system(&PlanarParams::default(), 1.2).unwrap();
        let h = HistoryFn::linear(&[-1.2, -0.5, 0.0], &[vec![0.0, x1, x2], vec![z0, 0.0, x1], vec![z0, x1, x2]])
            .unwrap();
        let opts = IntegratorOptions::default();
        let a = integrate(&sys, &h, &InputSignal::none(), 4.0, &opts).unwrap();
        let b = integrate(&sys, &h, &InputSignal::none(), 4.0, &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cascade_z_is_exponential(z0 in -5.0f64..5.0, tau in 0.2f64..2.0) {
        let sys = cascade_system(&PlanarParams::default(), tau).unwrap();
        let h = HistoryFn::constant(tau, vec![z0, 0.5, -0.5]).unwrap();
        let opts = IntegratorOptions::default();
        let traj = completed(integrate(&sys, &h, &InputSignal::none(), 6.0, &opts).unwrap());
        for i in 0..=30 {
            let t = 6.0 * i as f64 / 30.0;
            let exact = z0 * (-t).exp();
            prop_assert!((traj.eval(t).unwrap()[CASCADE_Z] - exact).abs() <= 10.0 * opts.rel_tol * z0.abs().max(1.0));
        }
    }

    #[test]
    fn delayed_saturation_crossing_is_a_step(z0 in 1.05f64..8.0, tau in 0.3f64..1.5) {
        // z = z0 e^{-t} passes 1 at ln z0; the delayed copy does so at ln z0 + τ.
        let sys = cascade_system(&PlanarParams::default(), tau).unwrap();
        let h = HistoryFn::constant(tau, vec![z0, 0.2, 0.3]).unwrap();
        let t_end = z0.ln() + tau + 1.0;
        let traj = completed(
            integrate(&sys, &h, &InputSignal::none(), t_end, &IntegratorOptions::default()).unwrap(),
        );
        prop_assert!(near_step(&traj, z0.ln() + tau));
    }

    #[test]
    fn input_saturation_crossing_is_a_step(lo in -1.0f64..-0.1, hi in 1.1f64..2.0, len in 0.5f64..2.0) {
        // the ramp from lo to hi passes 0 and 1 at known times
        let u = InputSignal::trapezoid_train(vec![0.0, len], vec![vec![lo], vec![hi]]).unwrap();
        let sys = planar_system(&PlanarParams::default());
        let traj = completed(
            integrate(&sys, &HistoryFn::constant(0.0, vec![0.3, 0.4]).unwrap(), &u, len, &IntegratorOptions::default())
                .unwrap(),
        );
        for level in [0.0, 1.0] {
            prop_assert!(near_step(&traj, len * (level - lo) / (hi - lo)), "level {level}");
        }
    }

    #[test]
    fn residual_is_within_tolerance_scale(x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, u in -0.5f64..1.5) {
        let sys = planar_system(&PlanarParams::default());
        let input = InputSignal::constant(vec![u]);
        let opts = IntegratorOptions::default().with_tolerances(1e-9, 1e-10);
        let traj = completed(
            integrate(&sys, &HistoryFn::constant(0.0, vec![x1, x2]).unwrap(), &input, 5.0, &opts).unwrap(),
        );
        let r = residual_audit(&traj, &sys, &input, 16).unwrap();
        prop_assert!(r <= 100.0 * opts.abs_tol.max(opts.rel_tol), "{r}");
    }
}

#[test]
fn kinks_with_bad_indices_are_rejected() {
    let sys = DiscreteDelaySystem::new(1, 1, vec![1.0], |_, _, _, out| out[0] = 0.0).unwrap();
    let delayed = Kink {
        source: KinkSource::Delayed {
            delay: 1,
            component: 0,
        },
        level: 0.0,
    };
    let input = Kink {
        source: KinkSource::Input { component: 2 },
        level: 0.0,
    };
    assert!(sys.clone().with_kinks(vec![delayed]).is_err());
    assert!(sys.with_kinks(vec![input]).is_err());
}

#[test]
fn history_crossing_is_shifted_by_the_delay() {
    // z crosses 0 at s = -0.4 in the history, so x' = g(x, z(t - τ)) has a
    // corner at -0.4 + τ
    let tau = 1.0;
    let sys = cascade_system(&PlanarParams::default(), tau).unwrap();
    let h = HistoryFn::linear(&[-1.0, 0.0], &[vec![-0.6, 0.0, 1.0], vec![0.4, 0.0, 1.0]]).unwrap();
    let traj = completed(
        integrate(
            &sys,
            &h,
            &InputSignal::none(),
            2.0,
            &IntegratorOptions::default(),
        )
        .unwrap(),
    );
    assert!(near_step(&traj, 0.6));
}
