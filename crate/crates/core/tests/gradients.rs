mod common;

use common::grad::{check_op, check_student_objective, op_names};

const SEEDS: u64 = 20;
const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_finite_differences() {
    let mut failures = Vec::new();
    for name in op_names() {
        let r = check_op(name, SEEDS).unwrap();
        assert!(r.checked > 0, "{name}");
        if r.max_rel_error >= TOL {
            failures.push(format!("{name}: {:.3e} at {:?}", r.max_rel_error, r.worst));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn student_objective_matches_finite_differences() {
    for seed in 0..SEEDS {
        let r = check_student_objective(seed).unwrap();
        assert!(
            r.max_rel_error < TOL,
            "seed {seed}: {:.3e} at {:?} (analytic {}, numeric {})",
            r.max_rel_error,
            r.worst,
            r.worst_analytic,
            r.worst_numeric
        );
    }
}
