use std::cell::Cell;

use demix_core::rng::{gaussian_vec, RngSeed};
use demix_core::solver::{dcg_observed, DcgStep};
use demix_core::{generate_instance, AtomicSet, Component, DemixProblem, InstanceSpec, LinearOperator};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const LOGGED_ITERATIONS: usize = 1_000;

fn random_problem(seed: u64, kind: u8) -> DemixProblem {
    let s = RngSeed::new(seed, 0);
    match kind {
        0 => generate_instance(&InstanceSpec { n: 12, m: 8, k: 2, s: 2, alpha: 0.05, seed: s }).unwrap().problem,
        1 => {
            let mut rng = s.rng();
            let b = gaussian_vec(&mut rng, 16);
            let components = vec![
                Component { weight: 1.0, set: AtomicSet::CrossPolytope(16) },
                Component { weight: 0.7, set: AtomicSet::RankOneBall { rows: 4, cols: 4 } },
            ];
            DemixProblem::new(LinearOperator::Identity(16), b, 0.0, components).unwrap()
        }
        _ => {
            let mut rng = s.rng();
            let b = gaussian_vec(&mut rng, 6);
            let op = demix_core::sample_gaussian_operator(6, 10, s.child(&[1])).unwrap();
            let components = vec![Component { weight: 1.0, set: AtomicSet::CrossPolytope(10) }];
            DemixProblem::new(op, b, 0.0, components).unwrap()
        }
    }
}

/// Logs every inner step over random problems and checks that the objective
/// never increases and the gap never goes negative.
#[test]
fn residual_is_monotone_and_gap_nonnegative() {
    let logged = Cell::new(0usize);
    let mut runner = TestRunner::new(Config { cases: 300, ..Config::default() });
    runner
        .run(&(any::<u64>(), 0u8..3, 0.05f64..3.0), |(seed, kind, tau)| {
            let problem = random_problem(seed, kind);
            let mut steps: Vec<DcgStep> = Vec::new();
            dcg_observed(&problem, tau, 1e-12, 60, None, &mut |s| steps.push(*s)).unwrap();
            logged.set(logged.get() + steps.len());
            let scale = 1.0 + steps[0].objective;
            for w in steps.windows(2) {
                prop_assert!(w[1].objective <= w[0].objective + 1e-12 * scale, "{:?}", w);
            }
            for s in &steps {
                prop_assert!(s.gap >= -1e-12 * scale, "{:?}", s);
            }
            Ok(())
        })
        .unwrap();
    assert!(logged.get() >= LOGGED_ITERATIONS, "only {} iterations logged", logged.get());
}
