use std::sync::Arc;

use liftrec::lifting::LiftingSpec;
use liftrec::linalg::gaussian_matrix;
use liftrec::manifold::{MeasurementSubspace, ProductPoint};
use liftrec::objective::{fd_check, random_tangent, Objective};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::CliError;
use crate::experiment::Report;
use crate::output::{f, Table};

pub const CHECK_COLUMNS: [&str; 12] = [
    "index",
    "lifting",
    "instance",
    "grad_error",
    "hess_error",
    "symmetry_error",
    "hess_checked",
    "projection_error",
    "feasibility",
    "orthonormality",
    "tangent_error",
    "pass",
];

pub const GRAD_TOL: f64 = 1e-5;
pub const HESS_TOL: f64 = 1e-4;
pub const SYMMETRY_TOL: f64 = 1e-8;
pub const MANIFOLD_TOL: f64 = 1e-10;

/// Liftings exercised by `check`, with the rank used for each.
pub fn check_liftings() -> Vec<(&'static str, LiftingSpec, usize)> {
    vec![
        ("monomial_features_d1", LiftingSpec::MonomialFeatures { d: 1 }, 2),
        ("monomial_features_d2", LiftingSpec::MonomialFeatures { d: 2 }, 2),
        ("monomial_features_d3", LiftingSpec::MonomialFeatures { d: 3 }, 2),
        ("monomial_kernel_d1", LiftingSpec::MonomialKernel { d: 1, c: 1.0 }, 2),
        ("monomial_kernel_d2", LiftingSpec::MonomialKernel { d: 2, c: 1.0 }, 2),
        ("monomial_kernel_d3", LiftingSpec::MonomialKernel { d: 3, c: 1.0 }, 2),
        ("gaussian", LiftingSpec::GaussianKernel { sigma: 1.5 }, 2),
    ]
}

/// Measurements and a random feasible point for a small completion problem.
pub fn random_problem<R: Rng + ?Sized>(
    lifting: LiftingSpec,
    rank: usize,
    n: usize,
    s: usize,
    rng: &mut R,
) -> Result<(Objective, ProductPoint), CliError> {
    let truth = gaussian_matrix(n, s, rng);
    let mask = DMatrix::from_fn(n, s, |_, _| rng.random::<f64>() < 0.6);
    let meas = Arc::new(MeasurementSubspace::from_mask(mask, &truth));
    let obj = Objective::new(lifting, rank, meas.clone())?;
    let x = meas.feasible_point()? + meas.project(&gaussian_matrix(n, s, rng))?.0;
    let u = obj.best_subspace(&x)?;
    // Step off the optimal subspace so that both gradient blocks are active.
    let z = ProductPoint { x, u };
    let xi = random_tangent(&obj, &z, rng)?.scale(0.3);
    let z = obj.retract(&z, &xi)?;
    Ok((obj, z))
}

pub fn run_check(instances: usize, seed: u64) -> Result<Report, CliError> {
    let mut table = Table::new(&CHECK_COLUMNS);
    let mut all_pass = true;
    let mut per_lifting = Vec::new();
    let mut index = 0;
    for (name, lifting, rank) in check_liftings() {
        let mut worst = [0.0f64; 7];
        let mut lifting_pass = true;
        let hess_checked = !matches!(lifting, LiftingSpec::GaussianKernel { .. });
        for inst in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(inst as u64));
            let (obj, z) = random_problem(lifting, rank, 4, 6, &mut rng)?;
            let fd = fd_check(&obj, &z, GRAD_TOL, 3, &mut rng)?;
            let props = manifold_properties(&obj, &z, &mut rng)?;
            let pass = fd.grad_error <= GRAD_TOL
                && (!hess_checked || (fd.hess_error <= HESS_TOL && fd.symmetry_error <= SYMMETRY_TOL))
                && props.iter().all(|&p| p <= MANIFOLD_TOL);
            let vals = [
                fd.grad_error,
                fd.hess_error,
                fd.symmetry_error,
                props[0],
                props[1],
                props[2],
                props[3],
            ];
            for (w, v) in worst.iter_mut().zip(vals) {
                *w = w.max(v);
            }
            lifting_pass &= pass;
            table.push(vec![
                index.to_string(),
                name.to_string(),
                inst.to_string(),
                f(fd.grad_error),
                f(fd.hess_error),
                f(fd.symmetry_error),
                u8::from(hess_checked).to_string(),
                f(props[0]),
                f(props[1]),
                f(props[2]),
                f(props[3]),
                u8::from(pass).to_string(),
            ]);
            index += 1;
        }
        all_pass &= lifting_pass;
        per_lifting.push(json!({
            "lifting": name,
            "max_grad_error": worst[0],
            "max_hess_error": worst[1],
            "max_symmetry_error": worst[2],
            "hess_checked": hess_checked,
            "max_projection_error": worst[3],
            "max_feasibility": worst[4],
            "max_orthonormality": worst[5],
            "max_tangent_error": worst[6],
            "pass": lifting_pass,
        }));
    }
    let summary = json!({
        "command": "check",
        "instances": instances,
        "seed": seed,
        "tolerances": {
            "grad": GRAD_TOL,
            "hess": HESS_TOL,
            "symmetry": SYMMETRY_TOL,
            "manifold": MANIFOLD_TOL,
        },
        "liftings": per_lifting,
        "pass": all_pass,
    });
    Ok(Report {
        summary,
        trials: table,
        heatmap: None,
        traces: Vec::new(),
        numerical_failures: usize::from(!all_pass),
    })
}

/// Idempotence of the tangent projection, feasibility and orthonormality
/// after a retraction, and the tangency of the Riemannian gradient.
fn manifold_properties<R: Rng + ?Sized>(obj: &Objective, z: &ProductPoint, rng: &mut R) -> Result<[f64; 4], CliError> {
    let m = obj.manifold();
    let (n, s) = m.x_factor.shape();
    let ax = gaussian_matrix(n, s, rng);
    let au = gaussian_matrix(m.p, m.r, rng);
    let once = m.project(z, &ax, &au)?;
    let twice = m.project(z, &once.dx, &once.du)?;
    let projection = twice.add_scaled(-1.0, &once).norm() / once.norm().max(1.0);

    let z1 = obj.retract(z, &once)?;
    let meas = obj.measurement();
    let feasibility = meas.residual(&z1.x)?.norm() / (1.0 + meas.b().norm());
    let u = z1.u.basis();
    let orthonormality = (u.tr_mul(u) - DMatrix::identity(m.r, m.r)).norm();

    let g = obj.rgrad(z)?;
    let gp = m.project(z, &g.dx, &g.du)?;
    let tangent = gp.add_scaled(-1.0, &g).norm() / g.norm().max(1.0);
    Ok([projection, feasibility, orthonormality, tangent])
}
