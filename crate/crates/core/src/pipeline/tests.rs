use super::*;
use crate::evolution::CesConfig;

fn quick(stages: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        ces: CesConfig {
            population_size: 16,
            iterations: 4,
            ..CesConfig::default()
        },
        tau_sample: 10,
        ..PipelineConfig::default()
    }
    .with_stages(stages)
    .with_seed(seed)
}

#[test]
fn two_stages_search_once_without_pruning() {
    let out = run_pipeline(&quick(2, 1)).unwrap();
    assert_eq!(out.reports.len(), 2);
    assert_eq!(out.reports[0].kind, StageKind::InitialTraining);
    assert_eq!(out.reports[1].kind, StageKind::FinalSearch);
    assert!(out.reports.iter().all(|r| r.prune.is_none()));
    assert_eq!(out.final_space, SearchSpace::build("basic").unwrap());
    assert_eq!(out.best.len(), 5);
}

#[test]
fn stages_form_a_chain_and_best_is_feasible() {
    let cfg = quick(4, 2);
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.reports.len(), 4);
    let mut size = SearchSpace::build("basic").unwrap().size();
    for r in &out.reports {
        let input: num_bigint::BigUint = r.input_size.parse().unwrap();
        let output: num_bigint::BigUint = r.output_size.parse().unwrap();
        assert_eq!(input, size);
        assert!(output <= input);
        size = output;
        if let Some(d) = &r.diagnostics {
            assert!(d.valid, "{:?}", d.violations);
        }
    }
    let (_, table) = Pipeline::new(cfg.clone()).unwrap().setup().unwrap();
    for b in &out.best {
        assert!(out.final_space.validate(&b.architecture).unwrap());
        assert!(cfg.band.contains(table.predict(&b.architecture).unwrap()));
        assert!(b.true_accuracy.is_some());
    }
    // Oracle epochs follow the 120/80/40 schedule.
    assert_eq!(out.reports[3].oracle_epochs, 240);
}

#[test]
fn evaluation_accounting_balances() {
    let out = run_pipeline(&quick(3, 3)).unwrap();
    for r in &out.reports {
        if let Some(s) = &r.search {
            assert_eq!(s.evaluations.queries, s.evaluations.hits + s.evaluations.misses);
            assert_eq!(s.evaluations.queries as usize, 16 * 5);
            assert!(s.archive_size as u64 <= s.evaluations.misses);
        }
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = quick(4, 4);
    let full = tempfile::tempdir().unwrap();
    let cut = tempfile::tempdir().unwrap();
    Pipeline::new(cfg.clone()).unwrap().with_output(full.path()).run().unwrap();
    let stopped = Pipeline::new(cfg.clone())
        .unwrap()
        .with_output(cut.path())
        .run_until(Some(2))
        .unwrap();
    assert!(stopped.is_none());
    assert!(!stage_path(cut.path(), 3).exists());
    Pipeline::new(cfg).unwrap().with_output(cut.path()).resume().unwrap();
    for k in 1..=4 {
        assert_eq!(
            std::fs::read(stage_path(full.path(), k)).unwrap(),
            std::fs::read(stage_path(cut.path(), k)).unwrap(),
            "stage {k}"
        );
    }
    for name in ["summary.json", "fronts/stage-4.csv"] {
        assert_eq!(
            std::fs::read(full.path().join(name)).unwrap(),
            std::fs::read(cut.path().join(name)).unwrap()
        );
    }
}

#[test]
fn resume_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::new(quick(3, 5))
        .unwrap()
        .with_output(dir.path())
        .run_until(Some(1))
        .unwrap();
    let err = Pipeline::new(quick(3, 6)).unwrap().with_output(dir.path()).resume().unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("checkpoint.json"), "{not json").unwrap();
    let err = Pipeline::new(quick(3, 0)).unwrap().with_output(dir.path()).resume().unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)));
}

#[test]
fn infeasible_band_propagates() {
    let mut cfg = quick(2, 0);
    cfg.band = crate::latency::LatencyBand::new(1.0, 2.0).unwrap();
    assert!(matches!(run_pipeline(&cfg), Err(Error::InfeasibleBand { .. })));
}

#[test]
fn random_baseline_single_candidate_space() {
    use rand::SeedableRng;
    let space = SearchSpace::build("basic").unwrap();
    let mut only = space.clone();
    for layer in space.layers() {
        for op in layer.candidates.iter().skip(1) {
            only = only.prune_operation(layer.index, op).unwrap();
        }
    }
    let (_, table) = Pipeline::new(quick(2, 0)).unwrap().setup().unwrap();
    let oracle = Oracle::new(crate::oracle::OracleConfig::synthetic(0), &only).unwrap();
    let band = crate::latency::LatencyBand::unbounded();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = random_search_baseline(&only, &table, &band, &oracle, 1, &mut rng).unwrap();
    assert_eq!(s.samples.len(), 1);
    assert_eq!(s.samples[0].architecture, only.enumerate().next().unwrap());
}
