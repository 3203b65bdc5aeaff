use std::f64::consts::PI;

use gibbsflow_core::dolgopyat::{c0, norm_contraction_sweep, C0Variant, CancellationParams};
use gibbsflow_core::flow::{evolve, FlowPoint};
use gibbsflow_core::presets;
use gibbsflow_core::uni::c7;
use gibbsflow_core::Discretization;

#[test]
fn sys_b_cancellation_parameters() {
    let sys = presets::sys_b();
    let rep = sys.validate(2048).unwrap();
    let k = c7(&rep);
    assert!((k - 8.0 * PI / 3.0).abs() < 1e-5);
    assert!((rep.lambda - 2.0).abs() < 1e-12 && (rep.rho - 2.0).abs() < 1e-12);
    let disc = Discretization::new(&sys, 1024).unwrap();
    let eig = disc.eigendata(0.0).unwrap();
    let r = c0(&disc, &eig, rep.lambda, C0Variant::Printed, 0.1);
    let p = CancellationParams::new(&sys, &rep, 0.0, 256.0, 0.05, 0.2, r.value, k, 1, 6.0).unwrap();
    assert_eq!((p.wuni.head, p.wuni.tail), (1, 4));
    assert!((p.wuni.scale - 30.0).abs() < 1e-4, "{}", p.wuni.scale);
    assert_eq!(p.contraction, 1.0 / 32.0);
    assert!((p.eta - (1.0 - 0.05 / 32.0 / 4.5)).abs() < 1e-15);
    assert!(!p.partition.cells.is_empty());
}

#[test]
fn norm_sweep_contracts_only_for_non_constant_roof() {
    let b_list = [256.0, 1024.0];
    let a = norm_contraction_sweep(&presets::sys_a(), 0.0, &[2.0 * PI * 40.0], 1.0, 8, 4, 3).unwrap();
    assert!((a.zeta_max - 1.0).abs() < 1e-6, "{:?}", a);
    let b = norm_contraction_sweep(&presets::sys_b(), 0.0, &b_list, 1.0, 8, 4, 3).unwrap();
    assert!(b.zeta_max < 1.0, "{:?}", b);
    for row in &b.rows {
        assert!(row.ratio <= 1.0 + 1e-9);
    }
}

#[test]
fn flow_over_unit_roof_shifts_height() {
    let sys = presets::sys_a();
    let p = evolve(&sys, FlowPoint { x: 0.3, u: 0.25 }, 0.5);
    assert!((p.x - 0.3).abs() < 1e-15 && (p.u - 0.75).abs() < 1e-15);
    let q = evolve(&sys, FlowPoint { x: 0.3, u: 0.25 }, 1.0);
    assert!((q.x - 0.6).abs() < 1e-12 && (q.u - 0.25).abs() < 1e-12);
}
