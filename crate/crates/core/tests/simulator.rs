mod common;

use std::collections::BTreeSet;

use common::*;
use huds::corpus::{init_pools, PoolState};
use huds::embedding::EmbeddingStore;
use huds::scoring::score_pool;
use huds::simulator::{
    config_from_manifest, iteration_seed, run_iteration, run_simulation, run_with_inputs,
    write_bundle, LogprobSource, ReportBundle, RunReport, SimulationConfig, SimulationInputs,
};
use huds::strategies::{select_huds, select_random, HudsParams, Strategy};
use huds::Error;

fn config(strategy: Strategy, iterations: usize, k: usize, seed_size: usize) -> SimulationConfig {
    let mut c = SimulationConfig::new(strategy, "<memory>");
    c.iterations = iterations;
    c.batch_size = k;
    c.seed_size = seed_size;
    c.rng_seed = 17;
    c
}

fn inputs(n: usize) -> SimulationInputs {
    let (corpus, lps) = text_fixture(2, n);
    let store = EmbeddingStore::fallback(&corpus, 64).unwrap();
    SimulationInputs::from_parts(corpus, Some(lps), Some(store))
}

fn single(bundle: ReportBundle) -> RunReport {
    match bundle {
        ReportBundle::Single(r) => r,
        ReportBundle::Sweep(_) => panic!("expected a single run"),
    }
}

#[test]
fn conservation_over_ten_iterations() {
    let cfg = config(Strategy::Huds, 10, 10, 20);
    let mut inp = inputs(200);
    let run = single(run_with_inputs(&cfg, &mut inp).unwrap());
    assert_eq!(run.records.len(), 10);
    let mut all = BTreeSet::new();
    for (t, rec) in run.records.iter().enumerate() {
        assert_eq!(rec.iteration, t + 1);
        assert_eq!(rec.selected_ids.len(), 10);
        for id in &rec.selected_ids {
            assert!(all.insert(id.clone()), "{id} selected twice");
            assert!(!run.seed_state.labeled.contains(id));
        }
        assert_eq!(rec.pool_sizes, (20 + 10 * (t + 1), 200 - 20 - 10 * (t + 1)));
    }
    assert_eq!(all.len(), 100);
    assert_eq!(run.final_state.labeled.len(), 120);
    assert_eq!(run.final_state.unlabeled.len(), 80);
    assert!(run.final_state.labeled.is_disjoint(&run.final_state.unlabeled));
    assert_eq!(run.records[0].strategy, Strategy::Random);
    assert!(run.records[1..].iter().all(|r| r.strategy == Strategy::Huds));
}

#[test]
fn first_iteration_is_random_over_the_unlabeled_pool() {
    for strategy in Strategy::ALL {
        let cfg = config(strategy, 1, 15, 30);
        let mut inp = inputs(120);
        let run = single(run_with_inputs(&cfg, &mut inp).unwrap());
        let expect = select_random(&run.seed_state.unlabeled, 15, iteration_seed(&cfg, 1)).unwrap();
        assert_eq!(run.records[0].selected_ids, expect.selected_ids, "{strategy}");
    }
}

#[test]
fn iteration_one_composition_is_uniform() {
    // a 0/1 attribute on half the pool: random picks carry roughly half of it
    let (corpus, lps) = text_fixture(3, 2000);
    let store = EmbeddingStore::fallback(&corpus, 16).unwrap();
    let mut inp = SimulationInputs::from_parts(corpus, Some(lps), Some(store));
    let mut total = 0usize;
    let mut marked = 0usize;
    for seed in 0..20 {
        let mut cfg = config(Strategy::Huds, 1, 100, 0);
        cfg.rng_seed = seed;
        let run = single(run_with_inputs(&cfg, &mut inp).unwrap());
        for id in &run.records[0].selected_ids {
            total += 1;
            let n: usize = id[1..].parse().unwrap();
            marked += n.is_multiple_of(2) as usize;
        }
    }
    let frac = marked as f64 / total as f64;
    assert!((0.45..=0.55).contains(&frac), "{frac}");
}

#[test]
fn exhaustion_stops_cleanly() {
    let cfg = config(Strategy::Huds, 10, 10, 20);
    let mut inp = inputs(55);
    let run = single(run_with_inputs(&cfg, &mut inp).unwrap());
    assert_eq!(run.exhausted_at, Some(5));
    assert_eq!(run.records.len(), 4);
    assert_eq!(run.records[3].selected_ids.len(), 5);
    assert!(run.final_state.unlabeled.is_empty());

    let empty = PoolState {
        labeled: run.final_state.labeled.clone(),
        unlabeled: BTreeSet::new(),
        ..run.final_state.clone()
    };
    let err = run_iteration(&empty, &cfg, &mut inp, 7).unwrap_err();
    assert!(matches!(err, Error::Exhausted { iteration: 7 }));
}

#[test]
fn bundles_are_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), 4, 150);
    let mut cfg = SimulationConfig::new(Strategy::Huds, &files.corpus);
    cfg.logprobs = Some(LogprobSource::Static(files.logprobs.clone()));
    cfg.embeddings = Some(files.embeddings.clone());
    cfg.iterations = 4;
    cfg.batch_size = 8;
    cfg.seed_size = 10;
    cfg.rng_seed = 5;

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    write_bundle(&run_simulation(&cfg).unwrap(), &a).unwrap();
    write_bundle(&run_simulation(&cfg).unwrap(), &b).unwrap();
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    assert!(ta.contains_key("manifest.json"));
    assert!(ta.contains_key("pool_seed.json"));
    assert!(ta.contains_key("pool_final.json"));
    assert!(ta.contains_key("scatter.csv"));
    for t in 1..=4 {
        assert!(ta.contains_key(&format!("iter_{t:03}/selection.jsonl")));
        assert!(ta.contains_key(&format!("iter_{t:03}/labeled.jsonl")));
    }

    let replayed = config_from_manifest(&a.join("manifest.json")).unwrap();
    let c = dir.path().join("c");
    write_bundle(&run_simulation(&replayed).unwrap(), &c).unwrap();
    assert_eq!(ta, tree(&c));
}

#[test]
fn per_iteration_logprob_files_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), 4, 80);
    for t in 1..=3 {
        let (_, lps) = text_fixture(100 + t, 80);
        lps.write(&dir.path().join(format!("lp_{t}.jsonl"))).unwrap();
    }
    let mut cfg = SimulationConfig::new(Strategy::Uncertainty, &files.corpus);
    cfg.logprobs = Some(LogprobSource::PerIteration(
        dir.path().join("lp_{iter}.jsonl").to_string_lossy().into_owned(),
    ));
    cfg.iterations = 3;
    cfg.batch_size = 5;
    cfg.seed_size = 5;
    let run = single(run_simulation(&cfg).unwrap());
    assert_eq!(run.records.len(), 3);

    cfg.iterations = 4;
    let err = run_simulation(&cfg).unwrap_err();
    assert!(matches!(err.root(), Error::Io { .. }), "{err}");
}

#[test]
fn lambda_sweep_matches_single_selection() {
    let (corpus, lps) = text_fixture(6, 300);
    let store = EmbeddingStore::fallback(&corpus, 32).unwrap();
    let mut inp = SimulationInputs::from_parts(corpus.clone(), Some(lps.clone()), Some(store.clone()));
    let mut cfg = config(Strategy::Huds, 2, 12, 20);
    cfg.lambda_sweep = Some(vec![0.0, 0.5, 1.0]);
    let ReportBundle::Sweep(runs) = run_with_inputs(&cfg, &mut inp).unwrap() else {
        panic!("expected a sweep");
    };
    assert_eq!(runs.len(), 3);
    let seed_state = init_pools(&corpus, 20, cfg.rng_seed).unwrap();
    let first = &runs[0].1.records[0].selected_ids;
    for (lambda, run) in &runs {
        assert_eq!(&run.records[0].selected_ids, first, "iteration 1 differs at λ={lambda}");
        let state = seed_state.transfer(first).unwrap();
        let seed = iteration_seed(&cfg, 2);
        let scores = score_pool(&state.unlabeled, &lps, cfg.score_kind(), cfg.pool_cap, seed).unwrap();
        let params = HudsParams { lambda: *lambda, ..cfg.huds };
        let expect = select_huds(&scores, &store, &params, 12, seed).unwrap();
        assert_eq!(run.records[1].selected_ids, expect.selected_ids, "λ={lambda}");
    }
}

#[test]
fn selected_diagnostics_are_complete() {
    let cfg = config(Strategy::Uncertainty, 3, 10, 10);
    let mut inp = inputs(100);
    let run = single(run_with_inputs(&cfg, &mut inp).unwrap());
    let (u, d) = run.selection_tables().expect("every pick carries u and d");
    assert_eq!(u.len(), 30);
    assert_eq!(d.len(), 30);
}

#[test]
fn missing_logprobs_is_a_config_error() {
    let cfg = SimulationConfig::new(Strategy::Huds, "nowhere.jsonl");
    assert!(matches!(run_simulation(&cfg).unwrap_err(), Error::Config(_)));
}
