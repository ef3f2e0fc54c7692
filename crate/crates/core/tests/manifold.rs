use std::sync::Arc;

use liftrec::linalg::{gaussian_matrix, random_orthonormal};
use liftrec::manifold::{
    grass_distance, grass_project, grass_retract, GrassmannPoint, MeasurementSubspace, ProductManifold, ProductPoint,
    XFactor,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask_problem(n: usize, s: usize, rng: &mut ChaCha8Rng) -> (Arc<MeasurementSubspace>, DMatrix<f64>) {
    let truth = gaussian_matrix(n, s, rng);
    let mask = DMatrix::from_fn(n, s, |_, _| rng.random::<f64>() < 0.5);
    (Arc::new(MeasurementSubspace::from_mask(mask, &truth)), truth)
}

fn dense_problem(n: usize, s: usize, m: usize, rng: &mut ChaCha8Rng) -> (Arc<MeasurementSubspace>, DMatrix<f64>) {
    let truth = gaussian_matrix(n, s, rng);
    let a = gaussian_matrix(m, n * s, rng);
    let b = &a * DVector::from_column_slice(truth.as_slice());
    (Arc::new(MeasurementSubspace::dense(n, s, a, b).unwrap()), truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grassmann_projection_is_an_orthogonal_projector(seed in any::<u64>(), p in 3usize..9, r in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(p, r, &mut rng)).unwrap();
        let z = gaussian_matrix(p, r, &mut rng);
        let w = gaussian_matrix(p, r, &mut rng);
        let pz = grass_project(&u, &z).unwrap().0;
        let ppz = grass_project(&u, &pz).unwrap().0;
        prop_assert!((&ppz - &pz).norm() <= 1e-12 * (1.0 + pz.norm()));
        prop_assert!(u.basis().tr_mul(&pz).norm() <= 1e-12 * (1.0 + z.norm()));
        // Self-adjoint: <P z, w> = <z, P w>.
        let pw = grass_project(&u, &w).unwrap().0;
        prop_assert!((pz.dot(&w) - z.dot(&pw)).abs() <= 1e-12 * (1.0 + z.norm() * w.norm()));
    }

    #[test]
    fn grassmann_retraction_is_orthonormal(seed in any::<u64>(), p in 3usize..9, scale in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(p, 2, &mut rng)).unwrap();
        let h = grass_project(&u, &(gaussian_matrix(p, 2, &mut rng) * scale)).unwrap();
        let v = grass_retract(&u, &h).unwrap();
        let b = v.basis();
        prop_assert!((b.tr_mul(b) - DMatrix::identity(2, 2)).norm() <= 1e-12);
    }

    #[test]
    fn grassmann_distance_is_a_metric(seed in any::<u64>(), p in 3usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = (0..3)
            .map(|_| GrassmannPoint::from_orthonormal(random_orthonormal(p, 2, &mut rng)).unwrap())
            .collect();
        let d = |i: usize, j: usize| grass_distance(&pts[i], &pts[j]).unwrap();
        prop_assert!(d(0, 0) <= 1e-7);
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-12);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
        prop_assert!(d(0, 1) <= 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn mask_projection_and_retraction_keep_feasibility(seed in any::<u64>(), n in 2usize..6, s in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (meas, _) = mask_problem(n, s, &mut rng);
        let x0 = meas.feasible_point().unwrap();
        let delta = meas.project(&gaussian_matrix(n, s, &mut rng)).unwrap().0;
        prop_assert!(meas.apply(&delta).unwrap().norm() <= 1e-12 * (1.0 + delta.norm()));
        let x1 = &x0 + &delta * 3.0;
        prop_assert!(meas.residual(&x1).unwrap().norm() <= 1e-9 * (1.0 + meas.b().norm()));
    }

    #[test]
    fn dense_projection_is_idempotent_and_feasible(seed in any::<u64>(), n in 2usize..5, s in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = (n * s) / 2;
        prop_assume!(m >= 1);
        let (meas, _) = dense_problem(n, s, m, &mut rng);
        let delta = gaussian_matrix(n, s, &mut rng);
        let p1 = meas.project(&delta).unwrap().0;
        let p2 = meas.project(&p1).unwrap().0;
        prop_assert!((&p2 - &p1).norm() <= 1e-10 * (1.0 + p1.norm()));
        prop_assert!(meas.apply(&p1).unwrap().norm() <= 1e-10 * (1.0 + delta.norm()));
        let x0 = meas.feasible_point().unwrap();
        prop_assert!(meas.residual(&x0).unwrap().norm() <= 1e-9 * (1.0 + meas.b().norm()));
    }

    #[test]
    fn product_retraction_stays_on_the_manifold(seed in any::<u64>(), scale in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, s, p, r) = (3, 5, 6, 2);
        let (meas, _) = mask_problem(n, s, &mut rng);
        let man = ProductManifold::new(XFactor::Affine(meas.clone()), p, r);
        let z = ProductPoint {
            x: meas.feasible_point().unwrap(),
            u: GrassmannPoint::from_orthonormal(random_orthonormal(p, r, &mut rng)).unwrap(),
        };
        let xi = man
            .project(&z, &gaussian_matrix(n, s, &mut rng), &gaussian_matrix(p, r, &mut rng))
            .unwrap()
            .scale(scale);
        let z1 = man.retract(&z, &xi).unwrap();
        prop_assert!(meas.residual(&z1.x).unwrap().norm() <= 1e-9 * (1.0 + meas.b().norm()));
        let b = z1.u.basis();
        prop_assert!((b.tr_mul(b) - DMatrix::identity(r, r)).norm() <= 1e-12);
        // The projection fixes tangent vectors.
        let again = man.project(&z, &xi.dx, &xi.du).unwrap();
        prop_assert!(again.add_scaled(-1.0, &xi).norm() <= 1e-11 * (1.0 + xi.norm()));
    }
}

#[test]
fn free_factor_projection_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let man = ProductManifold::new(XFactor::Free { n: 3, s: 4 }, 5, 2);
    let z = ProductPoint {
        x: gaussian_matrix(3, 4, &mut rng),
        u: GrassmannPoint::from_orthonormal(random_orthonormal(5, 2, &mut rng)).unwrap(),
    };
    let dx = gaussian_matrix(3, 4, &mut rng);
    let xi = man.project(&z, &dx, &DMatrix::zeros(5, 2)).unwrap();
    assert_eq!(xi.dx, dx);
    assert_eq!(man.dimension(), 12 + 2 * 3);
}
