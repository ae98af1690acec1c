//! Window assembly and normalization against direct recomputation.

use fuzzy_contact::experiment::{generate_trial, ScenarioConfig};
use fuzzy_contact::features::{build_window, fit_stats, preprocess, Dof, WindowSpec};
use fuzzy_contact::kinematics::Side;
use fuzzy_contact::sensors::NoiseSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn statistics_match_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let windows: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..140).map(|k| k as f64 * 3.0 + rng.random_range(-50.0..50.0)).collect())
        .collect();
    let stats = fit_stats(&windows).unwrap();
    for k in 0..140 {
        let column: Vec<f64> = windows.iter().map(|w| w[k]).collect();
        let mean = column.iter().sum::<f64>() / 50.0;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
        assert!((stats.mean[k] - mean).abs() <= 1e-12 * mean.abs().max(1.0), "mean {k}");
        assert!((stats.std_dev[k] - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1.0), "dev {k}");
    }

    let raw: Vec<f64> = (0..140).map(|_| rng.random_range(-500.0..500.0)).collect();
    let out = preprocess(&raw, &stats).unwrap();
    for k in 0..140 {
        let want = ((raw[k] - stats.mean[k]) / stats.std_dev[k]).abs();
        assert_eq!(out[k], want);
    }
}

#[test]
fn windows_slice_the_logged_channels() {
    let trial = generate_trial(&ScenarioConfig::rough_walk().with_duration(2.0), &NoiseSpec::default(), 0).unwrap();
    let history = trial.sensors.history(Side::Right);
    let spec = WindowSpec::new(20, 1).unwrap();
    let before = history.clone();
    let end = history.len() - 1;
    for dof in Dof::ALL {
        let w = build_window(&history, dof, spec).unwrap();
        assert_eq!(w.len(), 140);
        assert_eq!(w, build_window(&history, dof, spec).unwrap());
        for j in 0..20 {
            let idx = end - 19 + j;
            let ws = &history.wrench[idx];
            let channels = [ws.force.x, ws.force.y, ws.force.z, ws.torque.x, ws.torque.y, ws.torque.z];
            for (b, v) in channels.iter().enumerate() {
                assert_eq!(w[b * 20 + j], *v);
            }
            let imu = &history.imu[idx];
            let want = match dof {
                Dof::X => imu.accel.x,
                Dof::Y => imu.accel.y,
                Dof::Z => imu.accel.z,
                Dof::Alpha => imu.gyro.x,
                Dof::Beta => imu.gyro.y,
                Dof::Gamma => imu.gyro.z,
            };
            assert_eq!(w[120 + j], want);
        }
    }
    assert_eq!(history, before);
}
