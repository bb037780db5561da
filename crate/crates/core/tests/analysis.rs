mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use common::*;
use huds::analysis::{scatter_csv, scatter_export, unigram_overlap, unigrams, Side};
use huds::corpus::SentenceRecord;
use huds::scoring::{ScoreTable, UncertaintyKind};
use huds::simulator::IterationRecord;
use huds::strategies::Strategy;
use huds::stratify::DiversityTable;
use proptest::prelude::*;

fn rec(id: &str, source: &str, target: Option<&str>) -> SentenceRecord {
    SentenceRecord {
        id: id.into(),
        source: source.into(),
        target: target.map(String::from),
    }
}

#[test]
fn hand_computed_overlap() {
    let reference = vec![
        rec("r1", "The cat sat.", Some("Die Katze saß.")),
        rec("r2", "A dog, a cat!", Some("Ein Hund, eine Katze!")),
    ];
    let selected = vec![
        rec("s1", "the DOG ran", Some("der Hund rannte")),
        rec("s2", "«Birds» fly...", Some("Vögel fliegen")),
        rec("s3", "ran ran", Some("rannte")),
    ];
    // reference source vocabulary {the, cat, sat, a, dog}; shared {the, dog}
    let src = unigram_overlap(&selected, &reference, Side::Source).unwrap();
    assert_eq!(src.reference_unigrams, 5);
    assert_eq!(src.selected_unigrams, 5);
    assert_eq!(src.shared_unigrams, 2);
    assert_eq!(src.overlap_pct, 40.0);

    // reference target vocabulary {die, katze, saß, ein, hund, eine}; shared {hund}
    let tgt = unigram_overlap(&selected, &reference, Side::Target).unwrap();
    assert_eq!(tgt.reference_unigrams, 6);
    assert_eq!(tgt.shared_unigrams, 1);
    assert!((tgt.overlap_pct - 100.0 / 6.0).abs() < 1e-12);

    let both = unigram_overlap(&selected, &reference, Side::Combined).unwrap();
    assert_eq!(both.reference_unigrams, 11);
    assert_eq!(both.shared_unigrams, 3);

    let own = unigram_overlap(&reference, &reference, Side::Combined).unwrap();
    assert_eq!(own.overlap_pct, 100.0);
}

#[test]
fn tokenization_rules() {
    let got: Vec<String> = unigrams("  «Hello», WORLD!! don't -- …").into_iter().collect();
    assert_eq!(got, ["don't", "hello", "world"]);
}

#[test]
fn missing_targets_and_empty_reference_are_errors() {
    let reference = vec![rec("r", "a b", None)];
    assert!(unigram_overlap(&reference, &reference, Side::Target).is_err());
    assert!(unigram_overlap(&reference, &[], Side::Source).is_err());
    let blank = vec![rec("r", "... !!", None)];
    assert!(unigram_overlap(&reference, &blank, Side::Source).is_err());
}

proptest! {
    #[test]
    fn overlap_is_monotone_in_the_selection(seed in any::<u64>(), split in 1usize..20) {
        let (corpus, _) = text_fixture(seed, 40);
        let recs = corpus.records();
        let reference = &recs[20..];
        let small = unigram_overlap(&recs[..split], reference, Side::Combined).unwrap();
        let large = unigram_overlap(&recs[..split + 1], reference, Side::Combined).unwrap();
        prop_assert!(large.overlap_pct >= small.overlap_pct);
        prop_assert!((0.0..=100.0).contains(&small.overlap_pct));
    }
}

fn records(iterations: usize, per: usize) -> (Vec<IterationRecord>, ScoreTable, DiversityTable) {
    let mut recs = Vec::new();
    let mut u = BTreeMap::new();
    let mut d = BTreeMap::new();
    for t in 1..=iterations {
        let ids: Vec<String> = (0..per).map(|j| id((t - 1) * per + j)).collect();
        for (j, i) in ids.iter().enumerate() {
            u.insert(i.clone(), t as f64 + j as f64 / 100.0);
            d.insert(i.clone(), j as f64 / 10.0);
        }
        recs.push(IterationRecord {
            iteration: t,
            strategy: if t == 1 { Strategy::Random } else { Strategy::Huds },
            // reversed so the export has to sort
            selected_ids: ids.into_iter().rev().collect(),
            pool_sizes: (0, 0),
            candidates: 0,
            strategy_diagnostics: BTreeMap::new(),
            wall_time: Duration::ZERO,
        });
    }
    (
        recs,
        ScoreTable::from_scores(UncertaintyKind::Nnll, u),
        DiversityTable { entries: d },
    )
}

#[test]
fn scatter_has_one_row_per_pick() {
    let (recs, u, d) = records(10, 10);
    let rows = scatter_export(&recs, &u, &d).unwrap();
    assert_eq!(rows.len(), 100);
    let mut by_iter: BTreeMap<usize, usize> = BTreeMap::new();
    for w in rows.windows(2) {
        assert!((w[0].iteration, &w[0].id) < (w[1].iteration, &w[1].id));
    }
    for r in &rows {
        *by_iter.entry(r.iteration).or_default() += 1;
        assert_eq!(r.u, u.get(&r.id).unwrap());
        assert_eq!(r.d, d.get(&r.id).unwrap());
    }
    assert_eq!(by_iter.keys().cloned().collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    assert!(by_iter.values().all(|&c| c == 10));

    let csv = scatter_csv(&rows).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,iteration,u,d,strategy"));
    assert_eq!(lines.next(), Some("s00000,1,1.0,0.0,random"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn scatter_passes_values_through() {
    let (recs, _, _) = records(1, 1);
    let u = ScoreTable::from_scores(UncertaintyKind::Nnll, [(id(0), 3.75)].into());
    let d = DiversityTable { entries: [(id(0), 0.125)].into() };
    let rows = scatter_export(&recs, &u, &d).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].u, rows[0].d), (3.75, 0.125));

    let missing = DiversityTable { entries: BTreeMap::new() };
    assert!(scatter_export(&recs, &u, &missing).is_err());
    assert_eq!(scatter_csv(&[]).unwrap().trim_end(), "id,iteration,u,d,strategy");
}
