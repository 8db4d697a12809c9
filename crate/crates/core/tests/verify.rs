use tprop_core::model::{CellKind, ModelDims};
use tprop_core::verify::{
    check_equivalence, check_equivalence_with, gradcheck_all, EquivalenceSetup, EQUIVALENCE_TOL,
};

const ETAS: [f64; 3] = [0.1, 0.01, 0.001];
const LAMBDAS: [f64; 3] = [1.0, 0.1, 0.01];

#[test]
fn equivalence_holds_over_the_grid() {
    for cell in [CellKind::Elman, CellKind::Gru] {
        for eta in ETAS {
            for lambda in LAMBDAS {
                for seed in 0..10 {
                    let r = check_equivalence(cell, ModelDims::square(7, 5), eta, lambda, seed).unwrap();
                    assert!(r.passed, "{cell} eta={eta} lambda={lambda} seed={seed}: {}", r.max_deviation);
                    assert!(r.max_deviation <= EQUIVALENCE_TOL);
                    assert!((r.ratio - eta * lambda).abs() <= 1e-8 * eta * lambda);
                }
            }
        }
    }
}

#[test]
fn equivalence_fails_without_forward_initialization() {
    for cell in [CellKind::Elman, CellKind::Gru] {
        for seed in 0..10 {
            let r = check_equivalence_with(&EquivalenceSetup {
                cell,
                dims: ModelDims::square(7, 5),
                eta: 0.1,
                lambda: 0.1,
                seed,
                init_offset: 0.05,
            })
            .unwrap();
            assert!(!r.passed);
            assert!(r.max_deviation > 1e3 * EQUIVALENCE_TOL, "{}", r.max_deviation);
        }
    }
}

#[test]
fn gradient_audit_passes_on_twenty_seeds() {
    for seed in 0..20 {
        let r = gradcheck_all(seed).unwrap();
        for p in &r.paths {
            assert!(p.passed, "seed {seed} {}: {:e}", p.path, p.max_rel_err);
        }
        assert!(r.passed);
    }
}
