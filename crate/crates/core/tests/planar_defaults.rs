use escapade_core::systems::{g, phi};
use escapade_core::{Mat2, PlanarParams};

#[test]
fn saturation_values() {
    assert_eq!(phi(-1.0), 0.0);
    assert_eq!(phi(0.5), 0.5);
    assert_eq!(phi(2.0), 1.0);
}

#[test]
fn default_matrices() {
    let p = PlanarParams::default();
    assert_eq!(p.a1, Mat2::from_rows([[0.0, 2.0], [-0.5, -0.1]]));
    assert_eq!(p.a2, Mat2::from_rows([[-0.1, 0.5], [-2.0, 0.0]]));
    assert_eq!(p.pencil().at(1.0), p.a1);
    assert_eq!(p.pencil().at(0.0), p.a2);
}

#[test]
fn vector_field_by_hand() {
    // x = (1, 0): gain 2, A(1) x = (0, -0.5), A(0) x = (-0.1, -2)
    assert_eq!(g([1.0, 0.0], 1.0), [0.0, -1.0]);
    assert_eq!(g([1.0, 0.0], 7.0), [0.0, -1.0]);
    assert_eq!(g([1.0, 0.0], -3.0), [-0.2, -4.0]);
    // A(0.5) = [[-0.05, 1.25], [-1.25, -0.05]], x = (0, 1), gain 2
    let v = g([0.0, 1.0], 0.5);
    assert!((v[0] - 2.5).abs() < 1e-15 && (v[1] + 0.1).abs() < 1e-15);
}
