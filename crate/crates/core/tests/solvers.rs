use std::sync::Arc;

use liftrec::lifting::LiftingSpec;
use liftrec::manifold::{MeasurementSubspace, ProductPoint};
use liftrec::objective::Objective;
use liftrec::solvers::{
    AltminConfig, ArmijoConfig, Event, RtrConfig, Schedule, SolveContext, SolveTrace, SolverRegistry, SvdMode,
    TerminalStatus,
};
use liftrec::synth::{gen_entry_mask, gen_gaussian_sensing, gen_uos, numerical_rank, UosSpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LIFT: LiftingSpec = LiftingSpec::MonomialKernel { d: 2, c: 1.0 };

fn lines(seed: u64, dense: bool) -> (DMatrix<f64>, Objective) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, _) = gen_uos(&UosSpec::uniform(6, 2, 1, 10), &mut rng).unwrap();
    let meas: MeasurementSubspace = if dense {
        gen_gaussian_sensing(&m, 48, None, &mut rng).unwrap()
    } else {
        gen_entry_mask(&m, 0.7, &mut rng).unwrap()
    };
    let r = numerical_rank(&LIFT.gram(&m).unwrap(), 1e-8);
    let obj = Objective::new(LIFT, r, Arc::new(meas)).unwrap();
    (m, obj)
}

/// Re-checks a trace from its logged columns: the cost never increases on
/// rows that move the iterate, the logged decrease matches the cost column,
/// every iterate is feasible, and Armijo rows satisfy
/// `f_prev − f ≥ β α ‖grad_X f_prev‖²`.
fn check_trace(trace: &SolveTrace, b_norm: f64, beta: f64) {
    let feas_tol = 1e-9 * (1.0 + b_norm);
    for (i, rec) in trace.records.iter().enumerate() {
        assert!(rec.feasibility <= feas_tol, "row {i}: infeasible {}", rec.feasibility);
        if i == 0 {
            continue;
        }
        let prev = &trace.records[i - 1];
        let slack = 1e-10 * (1.0 + prev.f.abs());
        if rec.event.moves() {
            assert!(rec.f <= prev.f + slack, "row {i}: cost rose {} -> {}", prev.f, rec.f);
            assert!(
                (prev.f - rec.f - rec.decrease).abs() <= slack,
                "row {i}: decrease column"
            );
        } else {
            assert_eq!(rec.f, prev.f, "row {i}: non-moving row changed f");
        }
        if rec.event == Event::Armijo {
            let alpha = rec.step.expect("Armijo rows log the step");
            let required = beta * alpha * prev.gnorm_x * prev.gnorm_x;
            assert!(
                rec.decrease >= required * (1.0 - 1e-9),
                "row {i}: {} < {required}",
                rec.decrease
            );
        }
    }
}

#[test]
fn every_solver_keeps_descent_and_feasibility() {
    let reg = SolverRegistry::with_configs(
        RtrConfig {
            max_iter: 200,
            ..RtrConfig::default()
        },
        AltminConfig {
            max_outer: 100,
            max_inner: 30,
            ..AltminConfig::default()
        },
    );
    for dense in [false, true] {
        for seed in 0..3 {
            let (m, obj) = lines(seed, dense);
            let b_norm = obj.measurement().b().norm();
            for name in reg.names() {
                let z0 = obj.initial_point().unwrap();
                let ctx = SolveContext { truth: Some(&m), seed };
                let (z, trace) = reg.get(name).unwrap().solve(&obj, z0, &ctx).unwrap();
                check_trace(&trace, b_norm, ArmijoConfig::default().beta);
                assert!(obj.measurement().residual(&z.x).unwrap().norm() <= 1e-9 * (1.0 + b_norm));
                assert_eq!(trace.records[0].event, Event::Init);
            }
        }
    }
}

#[test]
fn altmin_stops_immediately_at_the_solution() {
    let (m, obj) = lines(4, false);
    let z0 = ProductPoint {
        u: obj.best_subspace(&m).unwrap(),
        x: m.clone(),
    };
    let reg = SolverRegistry::with_configs(RtrConfig::default(), AltminConfig::default());
    for name in ["altmin1", "altmin2", "simple", "rtr2"] {
        let (z, trace) = reg
            .get(name)
            .unwrap()
            .solve(&obj, z0.clone(), &SolveContext::default())
            .unwrap();
        assert_eq!(trace.iterations(), 0, "{name}");
        assert_eq!(trace.status, TerminalStatus::GradTol, "{name}");
        assert_eq!(z.x, m);
    }
}

#[test]
fn simple_matches_altmin_with_one_inner_step() {
    let (m, obj) = lines(5, false);
    let base = AltminConfig {
        max_outer: 20,
        max_inner: 1,
        eps_u: 0.0,
        schedule: Schedule::Greedy,
        force_svd: Some(SvdMode::Exact),
        ..AltminConfig::default()
    };
    let reg = SolverRegistry::with_configs(RtrConfig::default(), base);
    let ctx = SolveContext {
        truth: Some(&m),
        seed: 5,
    };
    let (za, ta) = reg
        .get("altmin1")
        .unwrap()
        .solve(&obj, obj.initial_point().unwrap(), &ctx)
        .unwrap();
    let (zs, ts) = reg
        .get("simple")
        .unwrap()
        .solve(&obj, obj.initial_point().unwrap(), &ctx)
        .unwrap();
    assert_eq!(ta.records, ts.records);
    assert_eq!(za.x, zs.x);
}

#[test]
fn rtr_recovers_fully_observed_data_without_moving() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (m, _) = gen_uos(&UosSpec::uniform(6, 2, 1, 10), &mut rng).unwrap();
    let meas = gen_entry_mask(&m, 1.0, &mut rng).unwrap();
    let r = numerical_rank(&LIFT.gram(&m).unwrap(), 1e-8);
    let obj = Objective::new(LIFT, r, Arc::new(meas)).unwrap();
    let reg = SolverRegistry::with_configs(RtrConfig::default(), AltminConfig::default());
    for name in reg.names() {
        let (z, trace) = reg
            .get(name)
            .unwrap()
            .solve(&obj, obj.initial_point().unwrap(), &SolveContext::default())
            .unwrap();
        assert!(trace.iterations() <= 1, "{name}: {} iterations", trace.iterations());
        assert!((&z.x - &m).norm() <= 1e-12 * (1.0 + m.norm()));
    }
}

#[test]
fn penalized_rtr_decreases_the_cost() {
    let (m, obj) = lines(7, true);
    let pen = obj.with_penalty(1e-2).unwrap();
    let reg = SolverRegistry::with_configs(
        RtrConfig {
            max_iter: 200,
            ..RtrConfig::default()
        },
        AltminConfig::default(),
    );
    let z0 = pen.initial_point().unwrap();
    let ctx = SolveContext {
        truth: Some(&m),
        seed: 7,
    };
    let (_, trace) = reg.get("rtr2").unwrap().solve(&pen, z0, &ctx).unwrap();
    for w in trace.records.windows(2) {
        assert!(w[1].f <= w[0].f + 1e-10 * (1.0 + w[0].f.abs()));
    }
    assert!(reg
        .get("altmin1")
        .unwrap()
        .solve(&pen, pen.initial_point().unwrap(), &ctx)
        .is_err());
}
