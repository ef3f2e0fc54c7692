use liftrec::lifting::{monomial_features, LiftingSpec};
use liftrec::manifold::Sensing;
use liftrec::synth::{
    cluster_assign, gen_clusters, gen_entry_mask, gen_gaussian_sensing, gen_uos, numerical_rank, rand_index,
    ClusterSpec, NoiseSpec, UosSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Eigenvalues of a symmetric PSD matrix, descending, from nalgebra's
/// symmetric eigensolver.
fn psd_spectrum(k: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = k
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn psd_rank(k: &DMatrix<f64>, tol: f64) -> usize {
    let ev = psd_spectrum(k);
    ev.iter().filter(|&&v| v >= tol * ev[0]).count()
}

/// `n = 15`, four planes, 150 points (the last plane gets 36).
fn four_planes(seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, _) = gen_uos(&UosSpec::uniform(15, 4, 2, 38), &mut rng).unwrap();
    m.columns(0, 150).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uos_columns_lie_on_their_subspace(seed in any::<u64>(), n in 4usize..10, affine in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = UosSpec { n, dims: vec![1, 2, 3], pts_per: 8, affine };
        let (m, labels) = gen_uos(&spec, &mut rng).unwrap();
        prop_assert_eq!(labels.len(), spec.s());
        for (g, &dim) in spec.dims.iter().enumerate() {
            let mut block = m.columns(g * spec.pts_per, spec.pts_per).into_owned();
            prop_assert!(labels[g * spec.pts_per..(g + 1) * spec.pts_per].iter().all(|&l| l == g));
            if affine {
                let first = block.column(0).into_owned();
                for mut col in block.column_iter_mut() {
                    col -= &first;
                }
            }
            let sv = block.singular_values();
            let mut sv: Vec<f64> = sv.iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            prop_assert!(sv.get(dim).copied().unwrap_or(0.0) <= 1e-10 * (1.0 + sv[0]), "{sv:?}");
        }
    }

    #[test]
    fn entry_mask_has_the_requested_size(seed in any::<u64>(), n in 1usize..8, s in 1usize..8, delta in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = DMatrix::from_fn(n, s, |i, j| (i + 10 * j) as f64);
        let meas = gen_entry_mask(&target, delta, &mut rng).unwrap();
        let expected = (delta * (n * s) as f64).round() as usize;
        prop_assert_eq!(meas.m(), expected);
        let Sensing::EntryMask { mask, .. } = meas.sensing() else { panic!("entry mask expected") };
        prop_assert_eq!(mask.iter().filter(|&&b| b).count(), expected);
        prop_assert!(meas.residual(&target).unwrap().norm() == 0.0);
    }

    #[test]
    fn rand_index_is_symmetric_and_label_invariant(
        a in prop::collection::vec(0usize..4, 2..30),
        shift in 1usize..10,
    ) {
        let b: Vec<usize> = a.iter().rev().copied().collect();
        prop_assert_eq!(rand_index(&a, &b).unwrap(), rand_index(&b, &a).unwrap());
        let renamed: Vec<usize> = a.iter().map(|&l| (l * 7 + shift) % 31).collect();
        prop_assert_eq!(rand_index(&a, &renamed).unwrap(), 1.0);
        prop_assert_eq!(rand_index(&renamed, &b).unwrap(), rand_index(&a, &b).unwrap());
        let r = rand_index(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }
}

#[test]
fn entry_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, s, delta, draws) = (5, 6, 0.4, 2000);
    let target = DMatrix::zeros(n, s);
    let mut counts = DMatrix::<f64>::zeros(n, s);
    for _ in 0..draws {
        let meas = gen_entry_mask(&target, delta, &mut rng).unwrap();
        let Sensing::EntryMask { mask, .. } = meas.sensing() else {
            panic!("entry mask expected")
        };
        for (c, &b) in counts.iter_mut().zip(mask.iter()) {
            if b {
                *c += 1.0;
            }
        }
    }
    let sd = (delta * (1.0 - delta) / draws as f64).sqrt();
    for c in counts.iter() {
        let freq = c / draws as f64;
        assert!((freq - delta).abs() <= 3.0 * sd, "inclusion frequency {freq}");
    }
}

#[test]
fn monomial_kernel_ranks_on_four_planes() {
    let m = four_planes(0);
    for (d, expected) in [(1, 9), (2, 21), (3, 37)] {
        let k = LiftingSpec::MonomialKernel { d, c: 1.0 }.gram(&m).unwrap();
        assert_eq!(psd_rank(&k, 1e-8), expected, "d = {d}");
        assert_eq!(numerical_rank(&k, 1e-8), expected, "d = {d}");
    }
    let phi = monomial_features(&m, 2).unwrap();
    assert!(numerical_rank(&phi, 1e-8) <= 24);
}

#[test]
fn quadratic_features_of_two_planes_obey_the_count_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (m, _) = gen_uos(&UosSpec::uniform(10, 2, 2, 20), &mut rng).unwrap();
    let phi = monomial_features(&m, 2).unwrap();
    assert!(numerical_rank(&phi, 1e-8) <= 12);
}

#[test]
fn gaussian_kernel_of_two_clusters_has_two_dominant_directions() {
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = gen_clusters(
            &ClusterSpec {
                n: 5,
                k: 2,
                pts_per: 25,
                sigma_c: 0.5,
            },
            &mut rng,
        )
        .unwrap();
        let ev = psd_spectrum(&LiftingSpec::GaussianKernel { sigma: 2.5 }.gram(&m).unwrap());
        ratios.push(ev[2] / ev[1]);
    }
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[4] + ratios[5]);
    // Measured median is about 0.11 with centres drawn from N(0, 4I) in R⁵.
    assert!(median < 0.15, "median ratio {median}");
}

#[test]
fn tight_clusters_are_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ClusterSpec {
        n: 5,
        k: 3,
        pts_per: 10,
        sigma_c: 1e-9,
    };
    let (m, labels) = gen_clusters(&spec, &mut rng).unwrap();
    assert_eq!(labels.len(), 30);
    let mut distinct = labels.clone();
    distinct.dedup();
    assert_eq!(distinct, vec![0, 1, 2]);
    for g in 0..3 {
        let block = m.columns(10 * g, 10);
        for j in 1..10 {
            assert!((block.column(j) - block.column(0)).norm() <= 1e-6);
        }
    }
    let found = cluster_assign(&m, 3, &mut rng).unwrap();
    assert_eq!(rand_index(&found, &labels).unwrap(), 1.0);
}

#[test]
fn noisy_sensing_residual_matches_the_noise_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, _) = gen_uos(&UosSpec::uniform(15, 2, 2, 20), &mut rng).unwrap();
    let meas = gen_gaussian_sensing(&m, 300, Some(NoiseSpec { sigma: 1e-2 }), &mut rng).unwrap();
    let res = meas.residual(&m).unwrap().norm();
    assert!((0.1..=0.3).contains(&res), "residual {res}");
    let Sensing::Dense { a, .. } = meas.sensing() else {
        panic!("dense sensing expected")
    };
    assert_eq!(psd_rank(&(a * a.transpose()), 1e-10), 300);
}

#[test]
fn generators_are_reproducible() {
    let spec = UosSpec::uniform(6, 2, 2, 5);
    let a = gen_uos(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = gen_uos(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}
