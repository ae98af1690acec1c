//! Fitted means against an independent fixed-point iteration.

use fuzzy_contact::fcm::{self, FcmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain double-loop fuzzy c-means written straight from the update rules:
/// weighted centroids, then `w_ij = 1 / sum_k (d_ij / d_ik)^(2/(m-1))`.
fn oracle_fit(points: &[Vec<f64>], init: &[Vec<f64>], m: f64, tol: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let k = init[0].len();
    let d = points[0].len();
    let mut w = init.to_vec();
    let mut c = vec![vec![0.0; d]; k];
    for _ in 0..100_000 {
        for j in 0..k {
            let mut num = vec![0.0; d];
            let mut den = 0.0;
            for i in 0..n {
                let wm = w[i][j].powf(m);
                den += wm;
                for t in 0..d {
                    num[t] += wm * points[i][t];
                }
            }
            for t in 0..d {
                c[j][t] = num[t] / den;
            }
        }
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let dist: Vec<f64> = (0..k)
                .map(|j| {
                    (0..d)
                        .map(|t| (points[i][t] - c[j][t]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            for j in 0..k {
                let s: f64 = (0..k).map(|q| (dist[j] / dist[q]).powf(2.0 / (m - 1.0))).sum();
                let nw = 1.0 / s;
                delta = delta.max((nw - w[i][j]).abs());
                w[i][j] = nw;
            }
        }
        if delta < tol {
            break;
        }
    }
    c
}

#[test]
fn two_blobs_match_oracle_and_centroids() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pts = Vec::new();
    for i in 0..20 {
        let (cx, cy) = if i < 10 { (-4.0, 1.0) } else { (5.0, -2.0) };
        pts.push(vec![
            cx + rng.random_range(-0.5..0.5),
            cy + rng.random_range(-0.5..0.5),
        ]);
    }
    let cfg = FcmConfig {
        tolerance: 1e-10,
        rng_seed: 11,
        ..Default::default()
    };
    let (model, diag) = fcm::fit_with_diagnostics(&pts, &cfg).unwrap();
    assert!(diag.converged);
    let init = fcm::initial_weights(pts.len(), 2, cfg.rng_seed);
    let oracle = oracle_fit(&pts, &init, cfg.fuzziness, 1e-10);
    for (a, b) in model.means.iter().zip(&oracle) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
    for blob in [0..10, 10..20] {
        let cx: f64 = pts[blob.clone()].iter().map(|p| p[0]).sum::<f64>() / 10.0;
        let cy: f64 = pts[blob.clone()].iter().map(|p| p[1]).sum::<f64>() / 10.0;
        let nearest = model
            .means
            .iter()
            .map(|c| ((c[0] - cx).powi(2) + (c[1] - cy).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.05, "mean is {nearest} away from blob centroid");
    }
}

#[test]
fn randomized_datasets_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..8 {
        let n = rng.random_range(6..=30);
        let d = rng.random_range(2..=5);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let off = if i % 2 == 0 { 2.0 } else { -2.0 };
                (0..d).map(|_| off + rng.random_range(-1.5..1.5)).collect()
            })
            .collect();
        let cfg = FcmConfig {
            tolerance: 1e-10,
            max_iterations: 10_000,
            rng_seed: trial,
            ..Default::default()
        };
        let model = fcm::fit(&pts, &cfg).unwrap();
        let init = fcm::initial_weights(n, 2, cfg.rng_seed);
        let oracle = oracle_fit(&pts, &init, cfg.fuzziness, 1e-10);
        for (a, b) in model.means.iter().zip(&oracle) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6, "trial {trial}: {a:?} vs {b:?}");
            }
        }
    }
}
