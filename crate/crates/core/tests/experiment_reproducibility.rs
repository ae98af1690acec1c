//! Experiments rerun byte for byte and carry everything needed to redraw
//! their figures.

use fuzzy_contact::experiment::{run_experiment, Experiment, ExperimentResult, RunConfig};

fn short_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.gait.duration = 8.0;
    cfg.seeds = vec![0, 1, 2];
    cfg
}

fn csv_of(result: &ExperimentResult) -> String {
    let mut buf = Vec::new();
    result.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = short_config();
    for experiment in [Experiment::ClusterVsFixed, Experiment::GaitGeneralization] {
        let a = csv_of(&run_experiment(experiment, &cfg).unwrap());
        let b = csv_of(&run_experiment(experiment, &cfg).unwrap());
        assert_eq!(a, b, "{experiment}");
    }
}

#[test]
fn csv_lists_trials_means_and_deviations() {
    let cfg = short_config();
    let result = run_experiment(Experiment::ThresholdSweep, &cfg).unwrap();
    assert_eq!(result.conditions.len(), 5);
    let text = csv_of(&result);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "condition,trial,seed,x,y,z,yaw,position");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5 * (3 + 2));
    for (c, chunk) in result.conditions.iter().zip(rows.chunks(5)) {
        for (k, row) in chunk[..3].iter().enumerate() {
            assert_eq!(row[0], c.label);
            assert_eq!(row[1], k.to_string());
            assert_eq!(row[2], cfg.seeds[k].to_string());
            let x: f64 = row[3].parse().unwrap();
            assert_eq!(x, c.trials[k].x);
        }
        assert_eq!(chunk[3][1], "mean");
        assert_eq!(chunk[4][1], "std");
        let mean_x: f64 = chunk[3][3].parse().unwrap();
        let want = c.trials.iter().map(|t| t.x).sum::<f64>() / 3.0;
        assert!((mean_x - want).abs() <= 1e-15 * want.max(1.0));
    }
    let labels: Vec<&str> = result.conditions.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(
        labels,
        ["threshold_10", "threshold_40", "threshold_100", "threshold_200", "threshold_400"]
    );
}

#[test]
fn condition_sets_match_each_study() {
    let cfg = short_config();
    let labels = |e| -> Vec<String> {
        run_experiment(e, &cfg)
            .unwrap()
            .conditions
            .into_iter()
            .map(|c| c.label)
            .collect()
    };
    assert_eq!(labels(Experiment::ImuAblation), ["full", "wrench_only"]);
    assert_eq!(
        labels(Experiment::TrainGeneralization),
        ["rough_trained", "flat_trained", "threshold_200"]
    );
}

#[test]
fn empty_seed_list_is_rejected() {
    let cfg = RunConfig {
        seeds: vec![],
        ..short_config()
    };
    assert!(run_experiment(Experiment::ClusterVsFixed, &cfg).is_err());
}
