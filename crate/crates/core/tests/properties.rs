use nalgebra::DMatrix;
use proptest::prelude::*;

use hokme::causal::{kpc_skeleton_grams, KpcConfig};
use hokme::condind::{hs_conditional_criterion, CiConfig};
use hokme::datagen::{gen_brownian, gen_fig3, uniform_grid, Fig3};
use hokme::dr::{fit_krr, predict, Bag};
use hokme::higherorder::{higher_order_mmd, inner_prod_pred_kme, HigherOrderConfig, Variant};
use hokme::mmdtest::two_sample_test;
use hokme::sigkernel::{first_order_gram, sig_kernel, truncated_sig_kernel, PdeSolver, Scheme};
use hokme::{Ensemble, GramField, Path};

fn arb_path(points: usize, dim: usize, step: f64) -> impl Strategy<Value = Path> {
    prop::collection::vec(-step..step, (points - 1) * dim).prop_map(move |inc| {
        let mut values = vec![0.0; dim];
        for k in 0..points - 1 {
            for c in 0..dim {
                let prev = values[k * dim + c];
                values.push(prev + inc[k * dim + c]);
            }
        }
        Path::from_flat((0..points).map(|t| t as f64 * 0.5).collect(), values, dim).unwrap()
    })
}

fn arb_ensemble(m: usize, points: usize, dim: usize) -> impl Strategy<Value = Ensemble> {
    prop::collection::vec(arb_path(points, dim, 0.7), m).prop_map(|p| Ensemble::new(p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn restrict_is_prefix_idempotent(p in arb_path(7, 2, 1.0), q in 1usize..=7, r in 1usize..=7) {
        let r = r.min(q);
        prop_assert_eq!(p.restrict(q).unwrap().restrict(r).unwrap(), p.restrict(r).unwrap());
        let full = p.increments();
        let pre = p.restrict(q).unwrap().increments();
        prop_assert_eq!(pre.nrows(), q - 1);
        for i in 0..q - 1 {
            prop_assert_eq!(pre.row(i), full.row(i));
        }
    }

    #[test]
    fn time_augment_keeps_times_bitwise(p in arb_path(6, 1, 1.0), s in 0.1f64..10.0) {
        let a = p.time_augment(s).unwrap();
        prop_assert!(a.times().iter().zip(p.times()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn pde_matches_truncated_oracle(x in arb_path(5, 2, 0.7), y in arb_path(5, 2, 0.7)) {
        // increments have norm below 1
        let pde = sig_kernel(&x, &y, &PdeSolver::new(Scheme::Series, 3).unwrap()).unwrap();
        let oracle = truncated_sig_kernel(&x, &y, 12).unwrap();
        prop_assert!((pde - oracle).abs() <= 1e-3 * pde.abs(), "{} vs {}", pde, oracle);
    }

    #[test]
    fn biased_mmd_is_nonnegative(x in arb_ensemble(4, 4, 1), y in arb_ensemble(3, 4, 1), order in 1usize..=2) {
        let cfg = HigherOrderConfig::with_order(order);
        let v = higher_order_mmd(&x, &y, &cfg, Variant::Biased).unwrap().value_squared;
        prop_assert!(v >= -1e-12, "{}", v);
    }
}

fn permute_field(g: &GramField, rows: &[usize], cols: &[usize]) -> GramField {
    g.select(rows, cols)
}

#[test]
fn pred_kme_relabeling_invariance() {
    let grid = uniform_grid(5, 1.0);
    let x = gen_brownian(2, 6, &grid, 1).unwrap();
    let y = gen_brownian(2, 5, &grid, 2).unwrap();
    let s = PdeSolver::default();
    let (gxx, gxy, gyy) = (
        first_order_gram(&x, &x, &s).unwrap(),
        first_order_gram(&x, &y, &s).unwrap(),
        first_order_gram(&y, &y, &s).unwrap(),
    );
    let base = inner_prod_pred_kme(&gxx, &gxy, &gyy, 1e-2).unwrap();
    let (px, py) = ([3, 0, 5, 1, 4, 2], [4, 2, 0, 3, 1]);
    let permuted = inner_prod_pred_kme(
        &permute_field(&gxx, &px, &px),
        &permute_field(&gxy, &px, &py),
        &permute_field(&gyy, &py, &py),
        1e-2,
    )
    .unwrap();
    let want = permute_field(&base, &px, &py);
    let scale = base.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in permuted.data().iter().zip(want.data()) {
        assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
    }
}

#[test]
fn duplicated_paths_match_single_solves() {
    let grid = uniform_grid(4, 1.0);
    let base = gen_brownian(2, 3, &grid, 5).unwrap();
    let dup = Ensemble::new(vec![
        base.path(0).clone(),
        base.path(1).clone(),
        base.path(0).clone(),
        base.path(2).clone(),
        base.path(1).clone(),
    ])
    .unwrap();
    let s = PdeSolver::default();
    let g = first_order_gram(&dup, &dup, &s).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let want = sig_kernel(dup.path(i), dup.path(j), &s).unwrap();
            assert!((g.get(i, j, 3, 3) - want).abs() <= 1e-12 * want.abs());
        }
    }
    let k = higher_order_mmd(&dup, &dup, &HigherOrderConfig::with_order(2), Variant::Biased).unwrap();
    assert!(k.value_squared.abs() < 1e-10);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let grid = uniform_grid(5, 1.0);
    let x = gen_brownian(2, 7, &grid, 11).unwrap();
    let y = gen_brownian(2, 6, &grid, 12).unwrap();
    let cfg = HigherOrderConfig::with_order(2);
    let many = two_sample_test(&x, &y, &cfg, 0.05, 40, 3).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| two_sample_test(&x, &y, &cfg, 0.05, 40, 3).unwrap());
    assert_eq!(many, one);
}

#[test]
fn two_sample_swap_symmetry() {
    let grid = uniform_grid(5, 1.0);
    let x = gen_brownian(1, 10, &grid, 21).unwrap();
    let y = gen_brownian(1, 10, &grid, 22).unwrap().scaled(1.3);
    let cfg = HigherOrderConfig::default();
    let a = two_sample_test(&x, &y, &cfg, 0.05, 400, 9).unwrap();
    let b = two_sample_test(&y, &x, &cfg, 0.05, 400, 9).unwrap();
    assert!((a.statistic - b.statistic).abs() <= 1e-12 * a.statistic.abs().max(1e-12));
    // both p-values estimate the same permutation tail probability
    let sd = (a.p_value * (1.0 - a.p_value) / 400.0).sqrt();
    assert!((a.p_value - b.p_value).abs() <= 4.0 * std::f64::consts::SQRT_2 * sd + 0.01, "{} vs {}", a.p_value, b.p_value);
}

#[test]
fn type_one_error_is_controlled() {
    let grid = uniform_grid(5, 1.0);
    let trials = 100;
    let level: f64 = 0.05;
    let rejections = (0..trials as u64)
        .filter(|&t| {
            let x = gen_brownian(1, 10, &grid, 2 * t).unwrap();
            let y = gen_brownian(1, 10, &grid, 2 * t + 1).unwrap();
            two_sample_test(&x, &y, &HigherOrderConfig::default(), level, 99, t).unwrap().reject
        })
        .count();
    let bound = level + 3.0 * (level * (1.0 - level) / trials as f64).sqrt();
    assert!((rejections as f64 / trials as f64) <= bound, "{rejections} rejections");
}

#[test]
fn ci_statistic_relabeling_invariance() {
    let grid = uniform_grid(5, 1.0);
    let x = gen_brownian(1, 9, &grid, 31).unwrap();
    let y = gen_brownian(2, 9, &grid, 32).unwrap();
    let z = gen_brownian(1, 9, &grid, 33).unwrap();
    let perm = [4, 1, 8, 0, 7, 2, 6, 3, 5];
    let cfg = CiConfig::default();
    let a = hs_conditional_criterion(&x, &y, Some(&z), &cfg).unwrap();
    let b = hs_conditional_criterion(
        &x.select(&perm).unwrap(),
        &y.select(&perm).unwrap(),
        Some(&z.select(&perm).unwrap()),
        &cfg,
    )
    .unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
}

fn random_grams(n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let grid = uniform_grid(5, 1.0);
    let cfg = CiConfig::default();
    let base: Vec<Ensemble> = (0..n).map(|v| gen_brownian(1, 12, &grid, seed + v as u64).unwrap()).collect();
    // chain dependence: variable v+1 adds noise to variable v
    let mut ens = vec![base[0].clone()];
    for v in 1..n {
        let paths = ens[v - 1]
            .iter()
            .zip(base[v].iter())
            .map(|(a, b)| {
                let vals = a.values().iter().zip(b.values()).map(|(u, w)| u + 0.5 * w).collect();
                Path::from_flat(a.times().to_vec(), vals, 1).unwrap()
            })
            .collect();
        ens.push(Ensemble::new(paths).unwrap());
    }
    ens.iter().map(|e| cfg.gram(e).unwrap()).collect()
}

#[test]
fn kpc_is_deterministic_and_monotone_in_alpha() {
    let grams = random_grams(4, 40);
    let mut prev: Option<usize> = None;
    for alpha in [1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let cfg = KpcConfig { alpha, ..KpcConfig::default() };
        let g = kpc_skeleton_grams(&grams, &cfg).unwrap();
        assert_eq!(g, kpc_skeleton_grams(&grams, &cfg).unwrap());
        let mut pairs: Vec<(usize, usize)> = g.edges.clone();
        pairs.extend(g.separating_sets.iter().map(|s| s.pair));
        pairs.sort_unstable();
        let all: Vec<(usize, usize)> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        assert_eq!(pairs, all, "alpha {alpha}");
        if let Some(p) = prev {
            assert!(g.edges.len() <= p, "alpha {alpha}");
        }
        prev = Some(g.edges.len());
    }
}

#[test]
fn dr_interpolates_as_ridge_vanishes_and_ignores_bag_order() {
    let grid = uniform_grid(5, 1.0);
    let bags: Vec<Bag> = (0..6)
        .map(|i| Bag {
            ensemble: gen_brownian(1, 6, &grid, 50 + i).unwrap().scaled(0.3 + 0.4 * i as f64),
            label: i as f64 / 5.0,
        })
        .collect();
    let ens: Vec<Ensemble> = bags.iter().map(|b| b.ensemble.clone()).collect();
    let cfg = HigherOrderConfig::default();
    let mut errs = Vec::new();
    for ridge in [1e-1, 1e-3, 1e-6] {
        let model = fit_krr(&bags, &cfg, 1.0, ridge).unwrap();
        let pred = predict(&model, &ens, &ens).unwrap();
        errs.push(pred.iter().zip(&bags).map(|(p, b)| (p - b.label).abs()).fold(0.0, f64::max));
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 1e-3, "{errs:?}");

    let order = [2, 0, 5, 1, 4, 3];
    let shuffled: Vec<Bag> = order.iter().map(|&i| bags[i].clone()).collect();
    let se: Vec<Ensemble> = shuffled.iter().map(|b| b.ensemble.clone()).collect();
    let a = fit_krr(&bags, &cfg, 1.0, 1e-3).unwrap();
    let b = fit_krr(&shuffled, &cfg, 1.0, 1e-3).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert!((a.alpha[i] - b.alpha[k]).abs() < 1e-9 * a.alpha[i].abs().max(1.0));
    }
    let new = [gen_brownian(1, 6, &grid, 99).unwrap()];
    let (pa, pb) = (predict(&a, &ens, &new).unwrap(), predict(&b, &se, &new).unwrap());
    assert!((pa[0] - pb[0]).abs() < 1e-9);
}

#[test]
fn fig3_biased_order_two_exceeds_order_one() {
    // the left and right branches share terminal laws, so order 1 sees little
    let x = gen_fig3(Fig3::Right, 60, 1).unwrap();
    let y = gen_fig3(Fig3::Left { n: 1e5 }, 60, 2).unwrap();
    let mk = |order| HigherOrderConfig { order, lambda: 1e-14, time_augment: Some(1.0), ..Default::default() };
    let d1 = higher_order_mmd(&x, &y, &mk(1), Variant::Biased).unwrap().value_squared;
    let d2 = higher_order_mmd(&x, &y, &mk(2), Variant::Biased).unwrap().value_squared;
    assert!(d2 > 10.0 * d1, "{d1} {d2}");
}
