use ndarray::{concatenate, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;

use drk_core::datagen::oracle_knockoff_independent;
use drk_core::metrics::{
    random_directions, sliced_wasserstein_correlation, sliced_wasserstein_distance, swd_with_directions,
    EmpiricalSample, ProjectionConfig, TransportOrder,
};
use drk_core::model::swap_columns;
use drk_core::rng;

fn randn(shape: (usize, usize), r: &mut rng::Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| r.sample(StandardNormal))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
}

#[test]
fn swap_distance_of_exact_knockoffs_shrinks_like_inverse_root_n() {
    let sizes = [250usize, 500, 1000, 2000, 4000];
    let p = 10;
    let mut logs = Vec::new();
    for &n in &sizes {
        let mut total = 0.0;
        let seeds = 10;
        for seed in 0..seeds {
            let mut r = rng::rng_at(77, &[n as u64, seed]);
            let x = randn((n, p), &mut r);
            let xk = oracle_knockoff_independent(x.view(), r.random());
            let b = sample(&mut r, p, p / 2).into_vec();
            let (xs, ks) = swap_columns(x.view(), xk.view(), &b).unwrap();
            let joint = concatenate(Axis(1), &[x.view(), xk.view()]).unwrap();
            let swapped = concatenate(Axis(1), &[xs.view(), ks.view()]).unwrap();
            let dirs = random_directions(2 * p, 128, &mut r);
            total += swd_with_directions(joint.view(), swapped.view(), dirs.view(), TransportOrder::W2).unwrap();
        }
        logs.push((total / seeds as f64).ln());
    }
    let lx: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let s = slope(&lx, &logs);
    assert!((-0.75..=-0.25).contains(&s), "slope {s}");
}

#[test]
fn swd_triangle_inequality_within_projection_noise() {
    let mut r = rng::rng(5);
    let a = EmpiricalSample::new(randn((500, 4), &mut r)).unwrap();
    let b = EmpiricalSample::new(randn((500, 4), &mut r) + 0.5).unwrap();
    let c = EmpiricalSample::new(randn((500, 4), &mut r) * 2.0).unwrap();
    // Spread of the estimate over projection seeds bounds the Monte Carlo error.
    let draws: Vec<[f64; 3]> = (0..20)
        .map(|s| {
            let cfg = ProjectionConfig::seeded(128, TransportOrder::W2, s);
            let d = |u, v| sliced_wasserstein_distance(u, v, &cfg).unwrap();
            [d(&a, &c), d(&a, &b), d(&b, &c)]
        })
        .collect();
    let se = |k: usize| {
        let m = draws.iter().map(|d| d[k]).sum::<f64>() / 20.0;
        (draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / 19.0).sqrt()
    };
    let eps = 3.0 * (se(0) + se(1) + se(2));
    for d in &draws {
        assert!(d[0] <= d[1] + d[2] + eps, "{d:?} eps {eps}");
    }
}

#[test]
fn swc_orders_dependence_strength() {
    let mut r = rng::rng(9);
    let x = randn((2000, 5), &mut r);
    let noise = randn((2000, 5), &mut r);
    let cfg = ProjectionConfig::seeded(128, TransportOrder::W2, 1);
    let swc = |y: Array2<f64>| {
        sliced_wasserstein_correlation(&EmpiricalSample::new(x.clone()).unwrap(), &EmpiricalSample::new(y).unwrap(), &cfg)
            .unwrap()
    };
    let affine = swc(&x * 2.0 + 1.0);
    let partial = swc(&x * 0.5 + &noise * 0.5);
    let independent = swc(noise.clone());
    assert!(affine > 0.85, "{affine}");
    assert!(affine > partial && partial > independent, "{affine} {partial} {independent}");
}
