use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcskin::eval::{rmse_by_degree, DegreeBins, TOTAL_LABEL};
use tcskin::formats::{read_grm, write_grm};
use tcskin::reml::{fit_variance_components, reml_loglik, PhenotypeVector};
use tcskin::tcs::{dirac_smooth, Smoother};
use tcskin::tuning::{sample_blackout, weighted_risk, BlackoutUnit};
use tcskin::*;

mod common;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn permute(a: &RelationshipMatrix<f64>, perm: &[usize]) -> RelationshipMatrix<f64> {
    let n = a.n();
    rel(DMatrix::from_fn(n, n, |i, j| a.get(perm[i], perm[j])))
}

fn random_panel(n: usize, m: usize, missing: f64, rng: &mut impl Rng) -> GenotypePanel {
    let rows: Vec<Vec<Option<u8>>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| (!rng.random_bool(missing)).then(|| rng.random_range(0..3u8)))
                .collect()
        })
        .collect();
    let snps = (0..m).map(|k| SnpMeta::new(format!("snp{k}"), 1, k as u64)).collect();
    GenotypePanel::from_rows(ids(n), snps, &rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn treelet_orthonormal_and_exact(seed in any::<u64>(), n in 2usize..60) {
        let a = random_symmetric(n, seed as usize, &mut rng(seed));
        let dec = build_treelet(&a, TreeletConfig::default()).unwrap();
        let b = dec.basis();
        prop_assert!(max_abs(&(b.transpose() * b - DMatrix::identity(n, n))) <= 1e-10);
        prop_assert!(max_abs(&(b * dec.transformed() * b.transpose() - a.values())) <= 1e-10);
        prop_assert!((dec.transformed().trace() - a.values().trace()).abs() <= 1e-10);
    }

    #[test]
    fn treelet_matches_naive_oracle(seed in any::<u64>(), n in 3usize..=6) {
        let a = random_symmetric(n, seed as usize, &mut rng(seed));
        let dec = build_treelet(&a, TreeletConfig::default()).unwrap();
        let (pairs, b, t) = naive_treelet(a.values());
        let got: Vec<(usize, usize)> = dec.rotations().iter().map(|r| (r.i, r.j)).collect();
        prop_assert_eq!(got, pairs);
        prop_assert!(max_abs(&(dec.basis() - b)) <= 1e-12);
        prop_assert!(max_abs(&(dec.transformed() - t)) <= 1e-12);
    }

    #[test]
    fn smoothing_is_permutation_equivariant(seed in any::<u64>(), n in 3usize..25, frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_symmetric(n, seed as usize, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let pa = permute(&a, &perm);
        let dec = build_treelet(&a, TreeletConfig::default()).unwrap();
        let lambda = frac * max_abs(dec.transformed());
        let s = smooth_covariance(&a, &dec, lambda, SmoothOptions::default()).unwrap();
        let pdec = build_treelet(&pa, TreeletConfig::default()).unwrap();
        let ps = smooth_covariance(&pa, &pdec, lambda, SmoothOptions::default()).unwrap();
        let expected = permute(&s.values, &perm);
        prop_assert!(max_abs(&(ps.values.values() - expected.values())) <= 1e-10);
    }

    #[test]
    fn smoothing_sparsity_norm_and_idempotence(seed in any::<u64>(), n in 2usize..30) {
        let mut r = rng(seed);
        let a = random_symmetric(n, seed as usize, &mut r);
        let dec = build_treelet(&a, TreeletConfig::default()).unwrap();
        let top = max_abs(dec.transformed());
        let mut lambdas: Vec<f64> = (0..8).map(|_| r.random_range(0.0..1.2 * top)).collect();
        lambdas.sort_by(f64::total_cmp);
        let smoother = Smoother::new(&a, &dec).unwrap();
        let mut last = 0;
        for &l in &lambdas {
            let s = smoother.smooth(l, SmoothOptions::default()).unwrap();
            prop_assert!(s.zeroed_count >= last);
            last = s.zeroed_count;
            prop_assert!(s.values.values().norm() <= a.values().norm() + 1e-12);
            let again = smooth_covariance(&s.values, &dec, l, SmoothOptions::default()).unwrap();
            prop_assert!(max_abs(&(again.values.values() - s.values.values())) <= 1e-10);
        }
    }

    #[test]
    fn simple_threshold_is_identity_basis_smoothing(seed in any::<u64>(), n in 1usize..30, frac in 0.0f64..1.1) {
        let a = random_symmetric(n.max(1), seed as usize, &mut rng(seed));
        let lambda = frac * max_abs(a.values());
        let s = simple_threshold(&a, lambda, SmoothOptions::default()).unwrap();
        let d = dirac_smooth(&a, lambda, SmoothOptions::default()).unwrap();
        prop_assert_eq!(s.values.values(), d.values.values());
    }

    #[test]
    fn zero_weights_give_zero_risk(seed in any::<u64>(), n in 2usize..15, l in 1usize..5) {
        let mut r = rng(seed);
        let a = random_symmetric(n, 0, &mut r);
        let tests: Vec<_> = (0..l).map(|k| random_symmetric(n, k, &mut r)).collect();
        let h = weighted_risk(&a, &tests, &DMatrix::zeros(n, n)).unwrap();
        prop_assert_eq!(h, 0.0);
    }

    #[test]
    fn blackout_spacing_holds(seed in any::<u64>(), m in 5usize..200, chroms in 1u32..4, b in 0u64..8, frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let mut pos = 0u64;
        let snps: Vec<SnpMeta> = (0..m)
            .map(|k| {
                pos += r.random_range(1..5);
                SnpMeta::new(format!("s{k}"), 1 + (k as u32 * chroms) / m as u32, pos)
            })
            .collect();
        let candidates: Vec<usize> = (0..m).filter(|_| r.random_bool(0.8)).collect();
        for unit in [BlackoutUnit::Snps, BlackoutUnit::BasePairs] {
            let feasible = tcskin::tuning::max_feasible(&snps, &candidates, b, unit);
            let count = (frac * feasible as f64) as usize;
            let picked = sample_blackout(&snps, &candidates, count, b, unit, &mut r).unwrap();
            prop_assert_eq!(picked.len(), count);
            for (x, &p) in picked.iter().enumerate() {
                prop_assert!(candidates.contains(&p));
                for &q in &picked[x + 1..] {
                    if snps[p].chromosome == snps[q].chromosome {
                        let gap = match unit {
                            BlackoutUnit::Snps => (q - p) as u64,
                            BlackoutUnit::BasePairs => snps[q].position - snps[p].position,
                        };
                        prop_assert!(gap >= b, "{p} and {q} are {gap} apart, b = {b}");
                    }
                }
            }
            prop_assert!(sample_blackout(&snps, &candidates, feasible + 1, b, unit, &mut r).is_err());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reml_eigen_path_matches_dense(seed in any::<u64>(), n in 3usize..=100, h2 in 0.0f64..0.95) {
        let mut r = rng(seed);
        let a = random_symmetric(n, 0, &mut r);
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let yv = PhenotypeVector::new(y.clone(), ids(n)).unwrap();
        let e = reml_loglik(&yv, &a, h2).unwrap();
        prop_assert!((e - dense_loglik(&y, a.values(), h2)).abs() <= 1e-8);
    }

    #[test]
    fn reml_permutation_and_scale(seed in any::<u64>(), n in 5usize..60, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(n, n + 2, |_, _| normal(&mut r));
        let a = rel(tcskin::grm::symmetrize(&x * x.transpose() / (n + 2) as f64));
        let y: Vec<f64> = (0..n).map(|i| normal(&mut r) + 0.5 * x[(i, 0)]).collect();
        let yv = PhenotypeVector::new(y.clone(), ids(n)).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let pa = permute(&a, &perm);
        let py = PhenotypeVector::new(perm.iter().map(|&i| y[i]).collect(), ids(n)).unwrap();
        for h2 in [0.0, 0.3, 0.8] {
            let l1 = reml_loglik(&yv, &a, h2).unwrap();
            let l2 = reml_loglik(&py, &pa, h2).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-10);
        }

        let fit = fit_variance_components(&yv, &a).unwrap();
        prop_assert!((fit.h2 - fit.sigma_g2 / (fit.sigma_g2 + fit.sigma_e2)).abs() <= 1e-12 * fit.h2.max(1.0));
        let scaled = PhenotypeVector::new(y.iter().map(|v| c * v).collect(), ids(n)).unwrap();
        let sfit = fit_variance_components(&scaled, &a).unwrap();
        prop_assert!((sfit.h2 - fit.h2).abs() <= 1e-8);
        prop_assert!((sfit.sigma_g2 - c * c * fit.sigma_g2).abs() <= 1e-8 * (1.0 + c * c * fit.sigma_g2));
        prop_assert!((sfit.sigma_e2 - c * c * fit.sigma_e2).abs() <= 1e-8 * (1.0 + c * c * fit.sigma_e2));
    }

    #[test]
    fn rmse_matches_one_pass(seed in any::<u64>(), n in 2usize..40) {
        let mut r = rng(seed);
        let mut t = DMatrix::identity(n, n);
        for j in 1..n {
            for i in 0..j {
                let v = if r.random_bool(0.3) { 0.0 } else { 2f64.powi(-r.random_range(1..14)) };
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let truth = rel(t);
        let est = rel(tcskin::grm::symmetrize(truth.values() + DMatrix::from_fn(n, n, |_, _| 0.01 * normal(&mut r))));
        let rows = rmse_by_degree(&truth, &est, &DegreeBins::default(), "m").unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for j in 1..n {
            for i in 0..j {
                sum += (est.get(i, j) - truth.get(i, j)).powi(2);
                count += 1;
            }
        }
        let total = rows.iter().find(|row| row.bin == TOTAL_LABEL).unwrap();
        prop_assert_eq!(total.pairs, count);
        prop_assert!((total.rmse - (sum / count as f64).sqrt()).abs() <= 1e-12);
        let binned: usize = rows.iter().filter(|row| row.bin != TOTAL_LABEL).map(|row| row.pairs).sum();
        prop_assert_eq!(binned, count);
    }

    #[test]
    fn scaled_columns_centred_and_folding_idempotent(seed in any::<u64>(), n in 2usize..30, m in 1usize..40) {
        let panel = random_panel(n, m, 0.1, &mut rng(seed));
        let Ok(folded) = estimate_allele_freqs(panel) else { return Ok(()); };
        let twice = estimate_allele_freqs(folded.clone()).unwrap();
        prop_assert_eq!(&twice, &folded);
        if let Ok(z) = scale_genotypes::<f64>(&folded, 0.0) {
            for k in 0..z.n_snps() {
                prop_assert!(z.z.column(k).mean().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn grm_matches_double_loop(seed in any::<u64>(), n in 2usize..=20, m in 1usize..=100) {
        let panel = random_panel(n, m, 0.05, &mut rng(seed));
        let Ok(folded) = estimate_allele_freqs(panel) else { return Ok(()); };
        let Ok(z) = scale_genotypes::<f64>(&folded, 0.05) else { return Ok(()); };
        let a = estimate_grm(&z).unwrap();
        let m = z.n_snps();
        for i in 0..n {
            for j in 0..n {
                let brute: f64 = (0..m).map(|k| z.z[(i, k)] * z.z[(j, k)]).sum::<f64>() / m as f64;
                prop_assert!((a.get(i, j) - brute).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn grm_file_round_trip(seed in any::<u64>(), n in 1usize..30) {
        let a = random_symmetric(n, seed as usize, &mut rng(seed));
        let a32: RelationshipMatrix<f32> = a.cast();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("x");
        write_grm(&stem, &a32).unwrap();
        let back: RelationshipMatrix<f32> = read_grm(&stem, MatrixKind::RawEstimate).unwrap();
        prop_assert_eq!(back.values(), a32.values());
        prop_assert_eq!(back.sample_ids(), a32.sample_ids());
    }
}

#[test]
fn treelet_of_500_variables_is_orthonormal() {
    let a = random_symmetric(500, 0, &mut rng(500));
    let dec = build_treelet(&a, TreeletConfig::default()).unwrap();
    let b = dec.basis();
    assert!(max_abs(&(b.transpose() * b - DMatrix::identity(500, 500))) <= 1e-10);
    assert!(max_abs(&(b * dec.transformed() * b.transpose() - a.values())) <= 1e-10);
}

#[test]
fn single_line_of_descent_halves() {
    let mut members = vec![PedigreeMember::founder("p0")];
    for g in 1..=12 {
        members.push(PedigreeMember::founder(format!("s{g}")));
        members.push(PedigreeMember::child(
            format!("p{g}"),
            format!("p{}", g - 1),
            format!("s{g}"),
        ));
    }
    let ped = Pedigree::new(members).unwrap();
    let a: RelationshipMatrix<f64> = pedigree_expected_relationship(&ped);
    for g in 1..=12 {
        let i = ped.index_of(&format!("p{g}")).unwrap();
        assert_eq!(a.get(0, i), 2f64.powi(-g));
    }
}
