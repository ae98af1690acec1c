//! Contact models trained on simulated logs.

use std::sync::OnceLock;

use fuzzy_contact::contact::{
    self, estimate_probability, estimate_probability_wrench_only, in_contact, label_contact_cluster,
    ContactEstimator, ContactModel,
};
use fuzzy_contact::experiment::{generate_trial, train_on_logs, ScenarioConfig, Trial, TrainingSettings};
use fuzzy_contact::features::{Dof, ImuSample, SampleHistory, WrenchSample};
use fuzzy_contact::kinematics::Side;
use fuzzy_contact::sensors::NoiseSpec;
use nalgebra::Vector3;

const TRAINING_SEED: u64 = 1000;

fn rough_trial(seed: u64) -> Trial {
    generate_trial(&ScenarioConfig::rough_walk(), &NoiseSpec::default(), seed).unwrap()
}

fn rough_model() -> &'static ContactModel {
    static MODEL: OnceLock<ContactModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let trial = rough_trial(TRAINING_SEED);
        let (model, report) = train_on_logs(&[&trial.sensors], &TrainingSettings::default()).unwrap();
        for d in &report.dofs {
            assert!(d.cost_monotone, "{}", d.dof);
            assert!(d.max_weight_sum_error <= 1e-9, "{}", d.dof);
        }
        model
    })
}

fn held_out() -> &'static Trial {
    static TRIAL: OnceLock<Trial> = OnceLock::new();
    TRIAL.get_or_init(|| rough_trial(3))
}

/// Streamed probabilities of one foot, `None` until the window fills.
fn stream(model: &ContactModel, trial: &Trial, side: Side, wrench_only: bool) -> Vec<Option<[f64; 6]>> {
    let i = side.index();
    let mut est = ContactEstimator::new(model.clone(), wrench_only);
    (0..trial.sensors.len())
        .map(|k| {
            est.push(trial.sensors.wrench[i][k], trial.sensors.foot_imu[i][k])
                .unwrap()
                .map(|p| p.0)
        })
        .collect()
}

fn slipping(trial: &Trial, side: Side, t: f64, margin: f64) -> bool {
    trial
        .truth
        .episodes
        .iter()
        .any(|e| e.side == side && t >= e.onset - margin && t <= e.end + margin)
}

#[test]
fn loaded_cluster_is_labelled_contact() {
    let model = rough_model();
    assert_eq!(model.dimension(), 140);
    let t = model.window.len;
    for d in &model.dofs {
        let c = label_contact_cluster(d);
        assert_eq!(c, d.contact_cluster);
        assert!(d.cluster_fz[c] > d.cluster_fz[1 - c] + 100.0, "{}: {:?}", d.dof, d.cluster_fz);
        // After rectification both means sit about one deviation from the
        // pooled F_z mean, so the normalized blocks cannot tell the clusters
        // apart; only the raw-unit levels can.
        let block = |j: usize| (2 * t..3 * t).map(|k| d.fcm.means[j][k]).sum::<f64>() / t as f64;
        assert!((block(0) - block(1)).abs() < 0.2, "{}", d.dof);
    }
}

#[test]
fn quiet_mid_stance_is_contact_in_every_dof() {
    let model = rough_model();
    let trial = held_out();
    let mut checked = 0;
    for side in Side::BOTH {
        let probs = stream(model, trial, side, false);
        for (k, s) in trial.truth.samples.iter().enumerate() {
            let f = &s.feet[side.index()];
            let mid = f.stance_phase.is_some_and(|p| (p - 0.5).abs() < 0.05);
            // The opening stand, with each foot carrying about half the
            // weight, is unlike any walking stance and is left out.
            let opening = s.time < ScenarioConfig::rough_walk().gait.initial_stance + 0.2;
            if !mid || opening || slipping(trial, side, s.time, 0.1) {
                continue;
            }
            let p = probs[k].unwrap();
            assert!(in_contact(&contact::ContactProbability(p), 0.5), "t = {}: {p:?}", s.time);
            checked += 1;
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn wrench_only_traces_follow_full_traces() {
    let model = rough_model();
    let trial = held_out();
    for side in Side::BOTH {
        let full = stream(model, trial, side, false);
        let wrench = stream(model, trial, side, true);
        for dof in Dof::ALL {
            let pairs: Vec<(f64, f64)> = full
                .iter()
                .zip(&wrench)
                .filter_map(|(a, b)| Some((a.as_ref()?[dof.index()], b.as_ref()?[dof.index()])))
                .collect();
            let r = correlation(&pairs);
            assert!(r > 0.9, "{side:?} {dof}: correlation {r}");
        }
    }
}

fn correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn unloaded_foot_is_not_in_contact() {
    let model = rough_model();
    let mut history = SampleHistory::new(1e-3);
    for k in 0..model.window.required_samples() {
        let t = k as f64 * 1e-3;
        history.push(
            WrenchSample::new(t, Vector3::zeros(), Vector3::zeros()),
            ImuSample::new(t, Vector3::new(0.0, 0.0, 9.81), Vector3::zeros()),
        );
    }
    let p = estimate_probability_wrench_only(model, &history).unwrap();
    for dof in Dof::ALL {
        assert!(p.get(dof) < 0.5, "{dof}: {}", p.get(dof));
    }
    let p_full = estimate_probability(model, &history).unwrap();
    assert!(!in_contact(&p_full, 0.5));
}

#[test]
fn probabilities_are_causal() {
    let model = rough_model();
    let trial = held_out();
    let history = trial.sensors.history(Side::Left);
    let cut = 7_000;
    let mut poisoned = history.clone();
    for k in cut..poisoned.len() {
        poisoned.wrench[k].force *= -3.0;
        poisoned.imu[k].gyro = Vector3::repeat(1e3);
    }
    let a = stream(model, trial, Side::Left, false);
    let mut est = ContactEstimator::new(model.clone(), false);
    for k in 0..cut {
        let p = est.push(poisoned.wrench[k], poisoned.imu[k]).unwrap().map(|p| p.0);
        assert_eq!(p, a[k]);
    }
    // Batch evaluation over a prefix agrees with the streamed value.
    let mut prefix = SampleHistory::new(history.sample_period);
    prefix.wrench = poisoned.wrench[..cut].to_vec();
    prefix.imu = poisoned.imu[..cut].to_vec();
    assert_eq!(Some(estimate_probability(model, &prefix).unwrap().0), a[cut - 1]);
}

#[test]
fn every_probability_is_a_valid_membership() {
    let model = rough_model();
    let trial = held_out();
    for side in Side::BOTH {
        for p in stream(model, trial, side, false).into_iter().flatten() {
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{p:?}");
        }
    }
}

#[test]
fn flat_trained_model_gates_rough_stances() {
    let flat = generate_trial(&ScenarioConfig::flat_walk_in_place(), &NoiseSpec::default(), TRAINING_SEED).unwrap();
    let (model, _) = train_on_logs(&[&flat.sensors], &TrainingSettings::default()).unwrap();
    let trial = held_out();
    let mut agree = 0usize;
    let mut total = 0usize;
    for side in Side::BOTH {
        let probs = stream(&model, trial, side, false);
        for (k, s) in trial.truth.samples.iter().enumerate() {
            let Some(p) = probs[k] else { continue };
            let truth = s.feet[side.index()].wrench.force.z > 50.0;
            agree += (truth == in_contact(&contact::ContactProbability(p), 0.5)) as usize;
            total += 1;
        }
    }
    let rate = agree as f64 / total as f64;
    assert!(rate > 0.8, "agreement {rate}");
}

#[test]
fn trained_model_survives_the_file_round_trip() {
    let model = rough_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    contact::save_model(model, &path).unwrap();
    let back = contact::load_model(&path).unwrap();
    assert_eq!(&back, model);
    assert_eq!(back.dimension(), 140);
}
