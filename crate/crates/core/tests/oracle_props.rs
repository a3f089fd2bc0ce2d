//! Limits and monotonicity of the simulated supernet.

mod common;

use padnas_core::pipeline::{Pipeline, PipelineConfig};
use padnas_core::space::Architecture;
use padnas_core::{Oracle, OracleConfig, SearchSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_noise_pipeline_selects_like_the_truth() {
    for seed in 0..3 {
        let truth = PipelineConfig::default().with_seed(seed);
        let mut zero = truth.clone();
        zero.oracle = OracleConfig::supernet(truth.oracle.seed, 0.0);
        let mut direct = truth.clone();
        direct.oracle = OracleConfig::synthetic(truth.oracle.seed);
        let a = Pipeline::new(zero).unwrap().run().unwrap();
        let b = Pipeline::new(direct).unwrap().run().unwrap();
        let pick = |o: &padnas_core::PipelineOutcome| o.best.iter().map(|b| b.architecture.clone()).collect::<Vec<_>>();
        assert_eq!(pick(&a), pick(&b), "seed {seed}");
        assert_eq!(a.final_space, b.final_space, "seed {seed}");
        for r in &a.reports[1..] {
            assert_eq!(r.mean_abs_error, Some(0.0));
            assert_eq!(r.tau.as_ref().and_then(|t| t.tau).map(|t| t > 0.999), Some(true));
        }
    }
}

fn mean_abs_noise(oracle: &Oracle, space: &SearchSpace, rng: &mut ChaCha8Rng) -> f64 {
    let n = 4000;
    let total: f64 = (0..n)
        .map(|_| {
            let a: Architecture = space.sample_uniform(rng);
            (oracle.supernet_accuracy(&a).unwrap() - oracle.true_accuracy(&a).unwrap()).abs()
        })
        .sum();
    total / n as f64
}

#[test]
fn expected_noise_shrinks_across_stages() {
    // Mirror the stage schedule: train, then prune and fine-tune twice.
    let cfg = PipelineConfig::default();
    let space = SearchSpace::build("basic").unwrap();
    let mut oracle = Oracle::new(cfg.oracle.clone(), &space).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    oracle.train(cfg.finetune_schedule[0].epochs).unwrap();
    let mut current = space;
    let mut errors = vec![mean_abs_noise(&oracle, &current, &mut rng)];
    let mut sigmas = vec![oracle.sigma().to_vec()];
    for step in &cfg.finetune_schedule[1..] {
        // Drop the last candidate of every other layer.
        for j in (0..current.num_layers()).step_by(2) {
            let layer = &current.layers()[j];
            if layer.candidates.len() > 1 {
                let last = layer.candidates.last().unwrap().clone();
                current = current.prune_operation(j, &last).unwrap();
            }
        }
        oracle.rebind_space(&current).unwrap();
        oracle.finetune(step.epochs).unwrap();
        errors.push(mean_abs_noise(&oracle, &current, &mut rng));
        sigmas.push(oracle.sigma().to_vec());
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "mean |noise| {errors:?}");
    }
    for w in sigmas.windows(2) {
        assert!(w[1].iter().zip(&w[0]).all(|(after, before)| after <= before));
    }
}

#[test]
fn pipeline_noise_does_not_grow_on_average() {
    // The per-stage error in reports is measured on a front sample, so the
    // check averages over seeds.
    let mut sums = Vec::new();
    for seed in 0..6 {
        let out = Pipeline::new(PipelineConfig::default().with_seed(seed)).unwrap().run().unwrap();
        let errors: Vec<f64> = out.reports.iter().filter_map(|r| r.mean_abs_error).collect();
        if sums.is_empty() {
            sums = vec![0.0; errors.len()];
        }
        for (s, e) in sums.iter_mut().zip(errors) {
            *s += e;
        }
    }
    for w in sums.windows(2) {
        assert!(w[1] <= w[0], "summed mean |noise| per stage {sums:?}");
    }
}
