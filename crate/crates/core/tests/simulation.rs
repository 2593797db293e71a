use std::collections::BTreeMap;

use tcskin::pedsim::{pedigree_phenotype, simulate_panel, SimulatedPanel, SimulationSpec};
use tcskin::pipeline::split_grm_snps;
use tcskin::tuning::grm_from_subset;

fn desk(seed: u64) -> SimulatedPanel {
    simulate_panel(&SimulationSpec {
        rng_seed: seed,
        ..SimulationSpec::default()
    })
    .unwrap()
}

#[test]
fn same_seed_same_everything() {
    let (a, b) = (desk(3), desk(3));
    assert_eq!(a.panel, b.panel);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.realized, b.realized);
    let ya = pedigree_phenotype(&a, 0.5, 3, 0).unwrap();
    let yb = pedigree_phenotype(&b, 0.5, 3, 0).unwrap();
    assert_eq!(ya.values, yb.values);
    assert_ne!(desk(4).panel, a.panel);
}

#[test]
fn truth_is_block_diagonal_powers_of_two() {
    let sim = desk(1);
    let n = sim.truth.n();
    for i in 0..n {
        assert_eq!(sim.truth.get(i, i), 1.0);
        for j in 0..i {
            let v = sim.truth.get(i, j);
            if sim.family[i] != sim.family[j] {
                assert_eq!(v, 0.0);
            } else if v != 0.0 {
                let r = -v.log2();
                assert_eq!(r, r.round(), "A = {v} is not a power of two");
                assert!(r >= 3.0, "R = {r} below the sampling bound");
            }
        }
    }
}

#[test]
fn estimate_regresses_on_truth_with_unit_slope() {
    let (mut sxy, mut sxx, mut sx, mut sy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for seed in 0..10 {
        let sim = desk(100 + seed);
        let (snps, _) = split_grm_snps(&sim, 10_000, seed).unwrap();
        let a_hat = grm_from_subset::<f64>(&sim.panel, &snps, 0.05).unwrap();
        for j in 1..a_hat.n() {
            for i in 0..j {
                let (x, y) = (sim.truth.get(i, j), a_hat.get(i, j));
                sxy += x * y;
                sxx += x * x;
                sx += x;
                sy += y;
                count += 1.0;
            }
        }
    }
    let slope = (sxy - sx * sy / count) / (sxx - sx * sx / count);
    assert!((0.9..=1.1).contains(&slope), "slope {slope}");
}

#[test]
fn realized_sharing_matches_expectation_by_class() {
    let mut classes: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for seed in 0..6 {
        let sim = desk(200 + seed);
        for j in 1..sim.truth.n() {
            for i in 0..j {
                let t = sim.truth.get(i, j);
                if t > 0.0 {
                    let e = classes.entry((-t.log2()).round() as i32).or_default();
                    e.0 += sim.realized.get(i, j);
                    e.1 += 1;
                }
            }
        }
    }
    let mut checked = 0;
    for (r, (sum, n)) in classes {
        if n >= 500 {
            let mean = sum / n as f64;
            assert!(
                (mean - 2f64.powi(-r)).abs() <= 0.03,
                "R = {r}: mean {mean} over {n} pairs"
            );
            checked += 1;
        }
    }
    assert!(checked >= 2, "only {checked} classes reached 500 pairs");
}
