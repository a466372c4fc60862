use escapade_core::signal::box_smooth;
use escapade_core::{InputSignal, PiecewisePoly};
use proptest::prelude::*;

fn sorted_breaks(raw: Vec<f64>) -> Vec<f64> {
    let mut b: Vec<f64> = raw.into_iter().map(|x| (x * 1e6).round() / 1e6).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

proptest! {
    #[test]
    fn piecewise_constant_takes_piece_values(
        raw in prop::collection::vec(0.01f64..10.0, 1..8),
        probe in 0.0f64..12.0,
    ) {
        let b = sorted_breaks(raw);
        let values: Vec<Vec<f64>> = (0..=b.len()).map(|i| vec![i as f64, -(i as f64)]).collect();
        let u = InputSignal::piecewise_constant(b.clone(), values).unwrap();
        // right-continuous: the piece index is the number of breakpoints <= t
        let idx = b.iter().filter(|&&x| x <= probe).count() as f64;
        prop_assert_eq!(u.eval(probe).unwrap(), vec![idx, -idx]);
        prop_assert_eq!(u.sup_norm(0.0, 12.0).unwrap(), b.len() as f64);
    }

    #[test]
    fn stack_concatenates_components(c in -5.0f64..5.0, t in 0.0f64..3.0, slope in -2.0f64..2.0) {
        let ramp = InputSignal::trapezoid_train(vec![0.0, 3.0], vec![vec![0.0], vec![3.0 * slope]]).unwrap();
        let s = InputSignal::stack(vec![InputSignal::constant(vec![c, -c]), ramp]);
        prop_assert_eq!(s.dim(), 3);
        let v = s.eval(t).unwrap();
        prop_assert_eq!(&v[..2], &[c, -c]);
        prop_assert!((v[2] - slope * t).abs() <= 1e-12 * (1.0 + (slope * t).abs()));
    }

    #[test]
    fn box_smoothing_preserves_bounds_and_mean(
        raw in prop::collection::vec(0.05f64..5.0, 1..6),
        delta in 0.001f64..0.3,
        t in 0.0f64..6.0,
    ) {
        let b = sorted_breaks(raw);
        let values: Vec<Vec<f64>> = (0..=b.len()).map(|i| vec![(i % 2) as f64]).collect();
        let u = InputSignal::piecewise_constant(b.clone(), values).unwrap();
        let s = box_smooth(&u, delta).unwrap();
        let v = s.eval(t).unwrap()[0];
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        // away from every breakpoint the average equals the piece value
        if b.iter().all(|&x| (x - t).abs() > delta + 1e-9) && t > delta {
            prop_assert!((v - u.eval(t).unwrap()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_level_crossings_are_exact(
        y0 in -3.0f64..3.0, y1 in -3.0f64..3.0, level in -2.0f64..2.0, t1 in 0.5f64..4.0,
    ) {
        prop_assume!((y0 - level).abs() > 1e-6 && (y1 - level).abs() > 1e-6);
        let p = PiecewisePoly::linear(&[0.0, t1], &[vec![y0], vec![y1]]).unwrap();
        let got = p.level_crossings(0, level, 0.0, t1);
        if (y0 - level).signum() != (y1 - level).signum() {
            let exact = t1 * (level - y0) / (y1 - y0);
            prop_assert_eq!(got.len(), 1);
            prop_assert!((got[0] - exact).abs() <= 1e-12 * t1.max(1.0));
        } else {
            prop_assert!(got.is_empty());
        }
        let u = InputSignal::polynomial(p);
        let from_signal = u.level_crossings(0, level, 0.0, t1);
        prop_assert_eq!(from_signal.len(), got.len());
    }

    #[test]
    fn segment_bound_dominates_values(
        vals in prop::collection::vec(-5.0f64..5.0, 2..8),
        frac in 0.0f64..=1.0,
    ) {
        let knots: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
        let values: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        let p = PiecewisePoly::linear(&knots, &values).unwrap();
        let mut bound = [0.0];
        for i in 0..p.segment_count() {
            p.segment_abs_bound(i, &mut bound);
            let y = p.eval(i as f64 + frac).unwrap()[0];
            prop_assert!(y.abs() <= bound[0] + 1e-12);
        }
    }
}
