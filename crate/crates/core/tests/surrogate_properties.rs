use std::f64::consts::PI;

use adjoint_pde_core::autodiff::Tape;
use adjoint_pde_core::fem::{KappaPoissonSystem, RectMesh};
use adjoint_pde_core::optimize::OptimizerKind;
use adjoint_pde_core::surrogate::{
    node_points, physics_loss, train_data_driven, train_mixed, train_physics_informed, Mlp,
};
use proptest::prelude::*;

fn source(x: f64, y: f64) -> f64 {
    -6.0 * PI * y * (PI * x).sin() * (PI * y).cos()
        + 2.0 * PI * PI * (2.0 * x + 3.0 * y * y + 1.0) * (PI * x).sin() * (PI * y).sin()
        - 2.0 * PI * (PI * y).sin() * (PI * x).cos()
}

fn kappa_true(x: f64, y: f64) -> f64 {
    1.0 + 2.0 * x + 3.0 * y * y
}

proptest! {
    #[test]
    fn parameter_count_formula(layers in prop::collection::vec(1usize..12, 2..6), seed in 0u64..100) {
        let direct: usize = (1..layers.len()).map(|i| layers[i - 1] * layers[i] + layers[i]).sum();
        prop_assert_eq!(Mlp::new(&layers, seed).unwrap().n_params(), direct);
    }

    #[test]
    fn evaluation_is_permutation_equivariant(
        pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 2..20),
        seed in 0u64..50,
    ) {
        let m = Mlp::new(&[2, 20, 1], seed).unwrap();
        let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
        let rev: Vec<f64> = pts.iter().rev().flat_map(|&(x, y)| [x, y]).collect();
        let a = m.predict(&flat).unwrap();
        let mut b = m.predict(&rev).unwrap();
        b.reverse();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, m.predict(&flat).unwrap());
    }
}

#[test]
fn regression_reduces_loss_by_two_orders() {
    let mesh = RectMesh::unit_square(40, 40).unwrap();
    let pts = node_points(mesh.coords());
    let targets = mesh.interpolate(kappa_true);
    let mut m = Mlp::new(&[2, 20, 1], 0).unwrap();
    let rec = train_data_driven(&mut m, &pts, &targets, OptimizerKind::Adam { lr: 1e-2 }, 1000);
    let (first, last) = (rec.initial_loss().unwrap(), rec.final_loss().unwrap());
    assert!(first / last >= 100.0, "{first} -> {last}");
}

#[test]
fn network_kappa_reproduces_its_own_observations() {
    let mesh = RectMesh::unit_square(8, 8).unwrap();
    let sys = KappaPoissonSystem::new(mesh.clone(), source).unwrap();
    let mut m = Mlp::new(&[2, 20, 1], 4).unwrap();
    m.set_output_bias(2.0);
    let kappa = m.predict(&node_points(mesh.coords())).unwrap();
    let u_true = sys.solve(&kappa).unwrap();
    let mut tape = Tape::new();
    let p = tape.constant(m.params().to_vec());
    let loss = physics_loss(&m, &mut tape, p, &sys, &u_true).unwrap();
    assert!(tape.scalar(loss) < 1e-12, "{}", tape.scalar(loss));
}

#[test]
fn training_modes_stay_finite() {
    let coarse = RectMesh::unit_square(4, 4).unwrap();
    let fine = RectMesh::unit_square(8, 8).unwrap();
    let sys = KappaPoissonSystem::new(fine.clone(), source).unwrap();
    let u_true = sys.solve(&fine.interpolate(kappa_true)).unwrap();
    let coarse_pts = node_points(coarse.coords());
    let coarse_kappa = coarse.interpolate(kappa_true);
    let opt = OptimizerKind::Adam { lr: 1e-2 };
    for seed in 0..5 {
        let mut a = Mlp::new(&[2, 20, 1], seed).unwrap();
        train_data_driven(&mut a, &node_points(fine.coords()), &fine.interpolate(kappa_true), opt, 200);
        let mut b = Mlp::new(&[2, 20, 1], seed).unwrap();
        b.set_output_bias(1.0);
        let rb = train_physics_informed(&mut b, &sys, &u_true, opt, 200);
        let mut c = Mlp::new(&[2, 20, 1], seed).unwrap();
        let (r1, r2) = train_mixed(&mut c, &coarse_pts, &coarse_kappa, &sys, &u_true, opt, 200);
        assert!(!rb.failed() && !r1.failed() && !r2.failed());
        for m in [&a, &b, &c] {
            assert!(m.params().iter().all(|v| v.is_finite()), "seed {seed}");
        }
    }
}
