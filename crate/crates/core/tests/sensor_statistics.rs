//! Statistical checks of the sensor noise model.

use fuzzy_contact::experiment::ScenarioConfig;
use fuzzy_contact::features::WrenchSample;
use fuzzy_contact::kinematics::rot_z;
use fuzzy_contact::sensors::{
    corrupt_imu, corrupt_joints, corrupt_log, corrupt_wrench, step_bias, BiasState, NoiseSpec,
    NoiseStreams, GRAVITY,
};
use nalgebra::{Matrix3, Vector3};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    ((got - want) / want).abs() <= rel
}

#[test]
fn white_noise_deviations_match_the_profile() {
    let spec = NoiseSpec::default();
    let mut rng = NoiseStreams::new(17, 1);
    let truth = WrenchSample::new(0.0, Vector3::new(0.0, 0.0, 600.0), Vector3::zeros());
    let zero = BiasState::default();
    let n = 10_000;
    let mut fz = Vec::with_capacity(n);
    let mut fx = Vec::with_capacity(n);
    let mut tx = Vec::with_capacity(n);
    let mut ay = Vec::with_capacity(n);
    let mut gz = Vec::with_capacity(n);
    let mut q0 = Vec::with_capacity(n);
    let r = *rot_z(0.3).matrix();
    for _ in 0..n {
        let w = corrupt_wrench(&truth, &zero, &spec, &mut rng);
        fz.push(w.force.z);
        fx.push(w.force.x);
        tx.push(w.torque.x);
        let imu = corrupt_imu(0.0, &Vector3::zeros(), &Vector3::zeros(), &r, &zero, &spec, &mut rng).unwrap();
        ay.push(imu.accel.y);
        gz.push(imu.gyro.z);
        q0.push(corrupt_joints(&[0.0; 6], &spec, &mut rng)[0]);
    }
    let (m, s) = mean_std(&fz);
    assert!((m - 600.0).abs() < 0.1, "mean F_z {m}");
    assert!((s - 2.0).abs() < 0.1, "std F_z {s}");
    for (name, xs, want) in [
        ("force x", &fx, spec.force),
        ("torque x", &tx, spec.torque),
        ("accel y", &ay, spec.accel),
        ("gyro z", &gz, spec.gyro),
        ("joint", &q0, spec.joint_angle),
    ] {
        let (_, s) = mean_std(xs);
        assert!(within(s, want, 0.05), "{name}: {s} vs {want}");
    }
}

#[test]
fn residuals_are_gaussian() {
    let spec = NoiseSpec::default();
    let mut rng = NoiseStreams::new(3, 2);
    let truth = WrenchSample::new(0.0, Vector3::new(1.0, -2.0, 500.0), Vector3::new(0.1, 0.0, -0.2));
    let mut bias = BiasState::default();
    let n = 100_000;
    let (mut force, mut torque) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        bias = step_bias(&bias, &spec, 1e-3, &mut rng);
        let w = corrupt_wrench(&truth, &bias, &spec, &mut rng);
        force.push(w.force.y - truth.force.y - bias.force.y);
        torque.push(w.torque.z - truth.torque.z - bias.torque.z);
    }
    for xs in [&force, &torque] {
        let k = kurtosis(xs);
        assert!((2.7..=3.3).contains(&k), "kurtosis {k}");
    }
}

/// Ensemble variance of independent walks against `n (sigma dt)^2`,
/// pooled over every axis of every bias and fitted through the origin.
#[test]
fn random_walk_variance_grows_linearly() {
    let spec = NoiseSpec {
        force_bias: 2.0,
        torque_bias: 0.5,
        accel_bias: 1.0,
        gyro_bias: 3.0,
        ..NoiseSpec::noiseless()
    };
    let dt = 1e-3;
    let walkers = 2000;
    let steps = 1000;
    let checkpoints: Vec<usize> = (1..=10).map(|i| i * steps / 10).collect();
    let mut sum_sq = vec![0.0; checkpoints.len()];
    let sigmas = [spec.force_bias, spec.torque_bias, spec.accel_bias, spec.gyro_bias];
    let mut samples = 0usize;
    for w in 0..walkers {
        let mut rng = NoiseStreams::new(1000 + w as u64, 0);
        let mut bias = BiasState::default();
        let mut c = 0;
        for step in 1..=steps {
            bias = step_bias(&bias, &spec, dt, &mut rng);
            if checkpoints.get(c) == Some(&step) {
                let parts = [bias.force, bias.torque, bias.accel, bias.gyro];
                for (v, s) in parts.iter().zip(sigmas) {
                    sum_sq[c] += (v / (s * dt)).norm_squared();
                }
                c += 1;
            }
        }
        samples += 12;
    }
    // Normalized walks have unit increment variance: var(n) = n.
    let var: Vec<f64> = sum_sq.iter().map(|s| s / samples as f64).collect();
    let num: f64 = checkpoints.iter().zip(&var).map(|(&n, v)| n as f64 * v).sum();
    let den: f64 = checkpoints.iter().map(|&n| (n * n) as f64).sum();
    let slope = num / den;
    assert!(within(slope, 1.0, 0.05), "slope {slope}, variances {var:?}");
}

#[test]
fn zero_noise_is_the_identity() {
    let truth = ScenarioConfig::rough_walk().with_duration(3.0).simulate(0).unwrap();
    let log = corrupt_log(&truth, &NoiseSpec { seed: 9, ..NoiseSpec::noiseless() }).unwrap();
    for (k, s) in truth.samples.iter().enumerate() {
        for i in 0..2 {
            let f = &s.feet[i];
            assert_eq!(log.wrench[i][k].force, f.wrench.force);
            assert_eq!(log.wrench[i][k].torque, f.wrench.torque);
            assert_eq!(log.joints[i][k], f.joints);
            let r_fw = f.body.pose.rotation().inverse();
            assert_eq!(log.foot_imu[i][k].accel, r_fw * (f.body.acceleration + GRAVITY));
            assert_eq!(log.foot_imu[i][k].gyro, r_fw * f.body.angular_velocity);
        }
    }
    // The identity holds for the raw corruption functions too.
    let mut rng = NoiseStreams::new(0, 0);
    let w = WrenchSample::new(1.0, Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 0.25));
    let spec = NoiseSpec::noiseless();
    assert_eq!(corrupt_wrench(&w, &BiasState::default(), &spec, &mut rng), w);
    let imu = corrupt_imu(0.0, &-GRAVITY, &Vector3::x(), &Matrix3::identity(), &BiasState::default(), &spec, &mut rng)
        .unwrap();
    assert_eq!(imu.accel, Vector3::zeros());
    assert_eq!(imu.gyro, Vector3::x());
}

#[test]
fn same_seed_same_streams() {
    let truth = ScenarioConfig::rough_walk().with_duration(2.0).simulate(0).unwrap();
    let spec = NoiseSpec { seed: 4, ..NoiseSpec::default() };
    assert_eq!(corrupt_log(&truth, &spec).unwrap(), corrupt_log(&truth, &spec).unwrap());
    let other = NoiseSpec { seed: 5, ..spec };
    assert_ne!(corrupt_log(&truth, &spec).unwrap(), corrupt_log(&truth, &other).unwrap());
}
