mod common;

use std::time::Instant;

use common::*;
use gradguard::datasets::{gen_toy_color, pixel_columns, TOY_CORNERS};
use gradguard::explain::{input_gradients, Target};
use gradguard::model::Params;
use gradguard::surrogate::{
    explain_instance, fit_local, fit_local_with, perturb, top_k_jaccard, FeatureUnits,
    PerturbationScheme,
};
use gradguard::training::{train, TrainConfig};
use gradguard::Tensor;

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

/// Ridge with an unpenalized intercept and uniform weights: center the
/// columns, solve `(XᵀX + αI) β = Xᵀy`.
fn closed_form_ridge(x: &Tensor, y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let (s, m) = (x.rows(), x.cols());
    let xm: Vec<f64> = (0..m).map(|j| (0..s).map(|i| x.get(i, j)).sum::<f64>() / s as f64).collect();
    let ym = y.iter().sum::<f64>() / s as f64;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..s {
        for j in 0..m {
            let xj = x.get(i, j) - xm[j];
            b[j] += xj * (y[i] - ym);
            for k in 0..m {
                a[j][k] += xj * (x.get(i, k) - xm[k]);
            }
        }
    }
    for (j, row) in a.iter_mut().enumerate() {
        row[j] += alpha;
    }
    let beta = solve(a, b);
    let intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    (beta, intercept)
}

fn dense(e: &gradguard::surrogate::LocalExplanation, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for &(j, c) in &e.features {
        out[j] = c;
    }
    out
}

#[test]
fn first_sample_is_the_instance_and_weights_follow_the_kernel() {
    let x = [0.5, -1.0, 2.0, 0.25];
    let scheme = PerturbationScheme::features(FeatureUnits::All, 200);
    let p = perturb(&x, &scheme, 3).unwrap();
    assert_eq!(p.samples.row(0), &x);
    assert_eq!(p.weights[0], 1.0);
    assert_eq!(p.kernel_width, 0.75 * 2.0);
    let mut saw_all_off = false;
    for i in 0..200 {
        let off = p.codes.row(i).iter().filter(|&&c| c == 0.0).count() as f64;
        assert_eq!(p.weights[i], (-(off * off) / (1.5 * 1.5)).exp());
        for (j, &c) in p.codes.row(i).iter().enumerate() {
            assert_eq!(p.samples.get(i, j), if c == 1.0 { x[j] } else { 0.0 });
        }
        if off == 4.0 {
            saw_all_off = true;
            assert!(p.samples.row(i).iter().all(|&v| v == 0.0));
        }
    }
    assert!(saw_all_off);
    assert_eq!(perturb(&x, &scheme, 3).unwrap(), p);
}

#[test]
fn nonzero_units_skip_absent_words() {
    let x = [0.0, 0.3, 0.0, 0.7, 0.1];
    let p = perturb(&x, &PerturbationScheme::features(FeatureUnits::NonZero, 10), 1).unwrap();
    assert_eq!(p.units, vec![vec![1], vec![3], vec![4]]);
    assert_eq!(p.codes.cols(), 3);
}

#[test]
fn exact_linear_targets_are_recovered_without_ridge() {
    let x: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
    let p = perturb(&x, &PerturbationScheme::features(FeatureUnits::All, 300), 5).unwrap();
    let coef = [0.3, -0.7, 0.0, 1.2, 0.05, -0.4, 0.9, -1.1];
    let y: Vec<f64> = (0..300)
        .map(|i| 0.25 + p.codes.row(i).iter().zip(&coef).map(|(c, b)| c * b).sum::<f64>())
        .collect();
    let e = fit_local_with(&p.codes, &y, &p.weights, 8, 0.0).unwrap();
    for (got, want) in dense(&e, 8).iter().zip(&coef) {
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
    assert!((e.intercept - 0.25).abs() <= 1e-6);
    assert!((e.score - 1.0).abs() <= 1e-9);
}

#[test]
fn uniform_weights_give_ordinary_ridge() {
    let codes = random_binary(60, 7, 0.5, 2);
    let y: Vec<f64> = random_matrix(60, 1, -1.0, 1.0, 3).data().to_vec();
    let e = fit_local(&codes, &y, &[1.0; 60], 7).unwrap();
    let (beta, intercept) = closed_form_ridge(&codes, &y, 1.0);
    for (got, want) in dense(&e, 7).iter().zip(&beta) {
        assert!((got - want).abs() <= 1e-10);
    }
    assert!((e.intercept - intercept).abs() <= 1e-10);
}

/// With more units than samples the full fit is solved in dual form; the
/// selected units and the refit must still match the primal closed form.
#[test]
fn more_units_than_samples_still_gives_ordinary_ridge() {
    let codes = random_binary(12, 30, 0.5, 4);
    let y: Vec<f64> = random_matrix(12, 1, -1.0, 1.0, 5).data().to_vec();
    let e = fit_local(&codes, &y, &[1.0; 12], 5).unwrap();
    let (beta, _) = closed_form_ridge(&codes, &y, 1.0);
    let mut expect: Vec<usize> = (0..30).collect();
    expect.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
    expect.truncate(5);
    expect.sort_unstable();
    let mut chosen: Vec<usize> = e.features.iter().map(|f| f.0).collect();
    chosen.sort_unstable();
    assert_eq!(chosen, expect);
    let sub = Tensor::matrix(
        12,
        chosen.len(),
        (0..12).flat_map(|i| chosen.iter().map(move |&j| (i, j))).map(|(i, j)| codes.get(i, j)).collect(),
    )
    .unwrap();
    let (b2, i2) = closed_form_ridge(&sub, &y, 1.0);
    for (&j, want) in chosen.iter().zip(&b2) {
        let got = e.features.iter().find(|f| f.0 == j).unwrap().1;
        assert!((got - want).abs() <= 1e-10);
    }
    assert!((e.intercept - i2).abs() <= 1e-10);
}

#[test]
fn selecting_every_unit_is_a_single_fit() {
    let codes = random_binary(50, 6, 0.5, 6);
    let y: Vec<f64> = random_matrix(50, 1, 0.0, 1.0, 7).data().to_vec();
    let w: Vec<f64> = random_matrix(50, 1, 0.1, 1.0, 8).data().to_vec();
    let all = fit_local(&codes, &y, &w, 6).unwrap();
    let more = fit_local(&codes, &y, &w, 60).unwrap();
    assert_eq!(all, more);
    assert_eq!(all.features.len(), 6);
    let some = fit_local(&codes, &y, &w, 3).unwrap();
    assert_eq!(some.features.len(), 3);
    // The kept units are the three largest full-fit coefficients.
    let mut top: Vec<usize> = all.features[..3].iter().map(|f| f.0).collect();
    let mut kept: Vec<usize> = some.features.iter().map(|f| f.0).collect();
    top.sort_unstable();
    kept.sort_unstable();
    assert_eq!(top, kept);
}

#[test]
fn constant_outputs_give_zero_weights() {
    let codes = random_binary(40, 5, 0.5, 9);
    let e = fit_local(&codes, &[0.37; 40], &[1.0; 40], 5).unwrap();
    assert!(e.features.iter().all(|f| f.1 == 0.0));
    assert_eq!(e.intercept, 0.37);
}

#[test]
fn explanations_are_seeded() {
    let params = Params::init(10, 3, 1).unwrap();
    let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
    let scheme = PerturbationScheme::features(FeatureUnits::All, 400);
    let (a, _) = explain_instance(&params, &x, &scheme, 4, 7).unwrap();
    let (b, _) = explain_instance(&params, &x, &scheme, 4, 7).unwrap();
    assert_eq!(a, b);
    let (c, _) = explain_instance(&params, &x, &scheme, 4, 8).unwrap();
    assert_ne!(a.features, c.features);
}

fn top_k_gradient(g: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[test]
fn reseeding_moves_surrogates_but_not_gradients() {
    let d = 2000;
    let params = Params::init(d, 2, 3).unwrap();
    let x = random_matrix(1, d, 0.05, 1.0, 4);
    let scheme = PerturbationScheme::features(FeatureUnits::NonZero, 500);
    let k = 10;
    let base_grad = top_k_gradient(input_gradients(&params, &x, Target::PredictedProb).unwrap().data(), k);
    let (base, _) = explain_instance(&params, x.data(), &scheme, k, 0).unwrap();
    let base_sur: Vec<usize> = base.features.iter().map(|f| f.0).collect();
    let (mut grad_overlap, mut sur_overlap) = (0.0, 0.0);
    for seed in 1..=20 {
        let g = input_gradients(&params, &x, Target::PredictedProb).unwrap();
        grad_overlap += top_k_jaccard(&base_grad, &top_k_gradient(g.data(), k));
        let (e, _) = explain_instance(&params, x.data(), &scheme, k, seed).unwrap();
        let sur: Vec<usize> = e.features.iter().map(|f| f.0).collect();
        sur_overlap += top_k_jaccard(&base_sur, &sur);
    }
    assert_eq!(grad_overlap / 20.0, 1.0);
    let sur_overlap = sur_overlap / 20.0;
    assert!(sur_overlap <= 1.0);
    println!("surrogate top-{k} Jaccard over 20 reseeds: {sur_overlap:.3}");
}

#[test]
fn surrogate_cost_grows_linearly_with_samples() {
    let params = Params::init(784, 10, 2).unwrap();
    let x = random_matrix(1, 784, 0.0, 1.0, 3);
    let sizes = [2000usize, 4000, 6000, 8000];
    let times: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            let scheme = PerturbationScheme::blocks(28, 28, 1, 4, s);
            let mut runs: Vec<f64> = (0..5)
                .map(|seed| {
                    let t = Instant::now();
                    std::hint::black_box(explain_instance(&params, x.data(), &scheme, 10, seed).unwrap());
                    t.elapsed().as_secs_f64()
                })
                .collect();
            runs.sort_by(f64::total_cmp);
            runs[2]
        })
        .collect();
    let n = sizes.len() as f64;
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, times.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&times).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = times.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 >= 0.95, "R² {r2} for {times:?}");
}

/// Zeroing a channel that is already 0 changes nothing, so only the nonzero
/// corner channels (4 or 8 of the 12) can carry weight. For each rule-holding
/// instance the first `q` ranked features are checked, `q` being that count
/// capped at 6.
#[test]
fn toy_color_surrogate_points_at_the_corners() {
    let data = gen_toy_color(10_000, 0).unwrap();
    let (params, _) = train(&TrainConfig::default(), &data).unwrap();
    let corners: Vec<usize> = TOY_CORNERS.iter().flat_map(|&(r, c)| pixel_columns(r, c)).collect();
    let probe = gen_toy_color(80, 21).unwrap();
    let scheme = PerturbationScheme::features(FeatureUnits::All, 2000);
    let (mut first, mut instances, mut inside, mut slots) = (0, 0, 0, 0);
    for (n, &label) in probe.labels().iter().enumerate() {
        if label != 0 {
            continue;
        }
        let x = probe.x.row(n);
        let q = corners.iter().filter(|&&c| x[c] != 0.0).count().min(6);
        let (e, _) = explain_instance(&params, x, &scheme, 6, n as u64).unwrap();
        assert_eq!(e.features.len(), 6);
        instances += 1;
        first += usize::from(corners.contains(&e.features[0].0));
        inside += e.features[..q].iter().filter(|f| corners.contains(&f.0)).count();
        slots += q;
    }
    let share = inside as f64 / slots as f64;
    println!("top feature in a corner for {first}/{instances}; corner share of top slots {share:.3}");
    assert!(first as f64 >= 0.9 * instances as f64);
    assert!(share >= 0.9, "{share}");
}
