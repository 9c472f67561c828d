//! Store-level workflow properties.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablescope_core::dataset::{merge_annotations, AnnotationTriplet};
use tablescope_core::synth::{random_document, SynthSpec};
use tablescope_core::Document;
use tablescope_service::{AnnotationMode, Label, LabelRequest, ServiceError, Store};

fn doc(seed: u64, tables: usize, texts: usize) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_document(
        &mut rng,
        &SynthSpec {
            doc_id: format!("doc{seed}"),
            source: "synthetic".into(),
            n_pages: 2,
            n_tables: tables,
            n_texts: texts,
        },
    )
}

fn label(store: &mut Store, p: &str, who: &str, t: &str, s: &str, l: Label, rev: u64) -> Result<u64, ServiceError> {
    store
        .submit_label(
            p,
            LabelRequest {
                annotator_id: who.into(),
                table_id: t.into(),
                text_block_id: s.into(),
                label: l,
                revision: rev,
            },
        )
        .map(|e| e.revision)
}

fn two_annotator_project(store: &mut Store, d: &Document) -> String {
    store
        .create_project(d.clone(), vec!["ann1".into(), "ann2".into()], None, AnnotationMode::TextOnly)
        .unwrap()
        .project_id
}

#[test]
fn three_tables_two_annotators_give_three_tasks() {
    let d = doc(1, 3, 4);
    let mut store = Store::in_memory();
    let p = two_annotator_project(&mut store, &d);
    let tasks = store.tasks(&p, |_, _| None).unwrap();
    assert_eq!(tasks.tasks.len(), 3);
    for t in &tasks.tasks {
        assert_eq!(t.candidates.len(), 4);
        assert_eq!(t.progress.len(), 2);
        assert!(t.progress.values().all(|p| p.labeled == 0 && !p.complete));
    }
}

#[test]
fn one_annotator_is_rejected() {
    let mut store = Store::in_memory();
    let err = store
        .create_project(doc(1, 1, 1), vec!["solo".into()], None, AnnotationMode::TextOnly)
        .unwrap_err();
    assert!(matches!(err, ServiceError::TooFewAnnotators(1)));
}

#[test]
fn revisions_are_optimistic() {
    let d = doc(2, 1, 2);
    let (t, s) = (d.tables()[0].block_id.clone(), d.text_blocks()[0].block_id.clone());
    let mut store = Store::in_memory();
    let p = two_annotator_project(&mut store, &d);
    assert_eq!(label(&mut store, &p, "ann1", &t, &s, Label::Related, 1).unwrap(), 1);
    // Identical resubmission is idempotent.
    assert_eq!(label(&mut store, &p, "ann1", &t, &s, Label::Related, 1).unwrap(), 1);
    assert_eq!(label(&mut store, &p, "ann1", &t, &s, Label::Unrelated, 2).unwrap(), 2);
    for (l, rev) in [(Label::Related, 1), (Label::Unrelated, 1), (Label::Related, 2), (Label::Related, 4)] {
        let err = label(&mut store, &p, "ann1", &t, &s, l, rev).unwrap_err();
        assert!(matches!(err, ServiceError::StaleRevision { current: 2, .. }), "{err}");
    }
    // Revisions are tracked per annotator.
    assert_eq!(label(&mut store, &p, "ann2", &t, &s, Label::Related, 1).unwrap(), 1);
}

#[test]
fn label_preconditions() {
    let d = doc(3, 1, 2);
    let (t, s) = (d.tables()[0].block_id.clone(), d.text_blocks()[0].block_id.clone());
    let mut store = Store::in_memory();
    let p = two_annotator_project(&mut store, &d);
    assert!(matches!(
        label(&mut store, &p, "ann1", &t, "nope", Label::Related, 1),
        Err(ServiceError::UnknownBlock(_))
    ));
    assert!(matches!(
        label(&mut store, &p, "ann1", &s, &t, Label::Related, 1),
        Err(ServiceError::UnknownBlock(_))
    ));
    assert!(matches!(
        label(&mut store, &p, "ann1", &t, "p0-fig", Label::Related, 1),
        Err(ServiceError::UnknownBlock(_))
    ));
    assert!(matches!(
        label(&mut store, &p, "mallory", &t, &s, Label::Related, 1),
        Err(ServiceError::UnknownAnnotator(_))
    ));
    assert!(matches!(
        label(&mut store, "missing", "ann1", &t, &s, Label::Related, 1),
        Err(ServiceError::ProjectNotFound(_))
    ));
}

#[test]
fn skipped_pair_is_incomplete_not_conflict() {
    let d = doc(4, 1, 2);
    let (t, s) = (d.tables()[0].block_id.clone(), d.text_blocks()[0].block_id.clone());
    let mut store = Store::in_memory();
    let p = two_annotator_project(&mut store, &d);
    label(&mut store, &p, "ann1", &t, &s, Label::Related, 1).unwrap();
    let r = store.conflicts(&p).unwrap();
    assert!(r.conflicts.is_empty());
    assert_eq!(r.incomplete.len(), 1);
    assert_eq!(r.incomplete[0].missing, vec!["ann2".to_string()]);
    assert!(matches!(
        store.resolve_conflict(&p, &t, &s, true, String::new()),
        Err(ServiceError::NotInConflict(..))
    ));
    assert!(matches!(store.finalize(&p, false), Err(ServiceError::WarningsNotAcknowledged(_))));
    store.finalize(&p, true).unwrap();
    // A pair only one annotator marked stays out of the consensus.
    assert!(store.export_triplets(&p).unwrap()[0].related_paragraphs.is_empty());
}

#[test]
fn full_workflow_fixture() {
    // Table 1 has four candidates. ann1 marks {a, b} related, ann2 marks {a, b, c}.
    let raw = br#"{"doc_id":"fx","source":"fixture","pages":[{"page_id":0,"width_px":100,"height_px":100,"blocks":[
      {"block_id":"t1","type":"Table","bbox":[0,0,10,10],"text":"Table 1 accuracy"},
      {"block_id":"t2","type":"Table","bbox":[0,0,10,10],"text":"Table 2 latency"},
      {"block_id":"a","type":"Text","bbox":[0,0,10,10],"text":"Table 1 shows accuracy"},
      {"block_id":"b","type":"Text","bbox":[0,0,10,10],"text":"accuracy improves"},
      {"block_id":"c","type":"List","bbox":[0,0,10,10],"text":"baseline numbers"},
      {"block_id":"d","type":"Text","bbox":[0,0,10,10],"text":"related work"}]}]}"#;
    let d = tablescope_core::parse_document_json(raw).unwrap();
    let mut store = Store::in_memory();
    let p = two_annotator_project(&mut store, &d);
    let plan = [
        ("ann1", "a", Label::Related),
        ("ann1", "b", Label::Related),
        ("ann1", "c", Label::Unrelated),
        ("ann1", "d", Label::Unrelated),
        ("ann2", "a", Label::Related),
        ("ann2", "b", Label::Related),
        ("ann2", "c", Label::Related),
        ("ann2", "d", Label::Unrelated),
    ];
    for (who, s, l) in plan {
        label(&mut store, &p, who, "t1", s, l, 1).unwrap();
    }
    let tasks = store.tasks(&p, |_, _| None).unwrap();
    let t1 = &tasks.tasks[0];
    assert!(t1.progress.values().all(|p| p.complete && p.labeled == 4));
    let matches: Vec<_> = t1.candidates.iter().filter(|c| c.number_match).map(|c| c.text_block_id.as_str()).collect();
    assert_eq!(matches, vec!["a"]);

    assert!(matches!(store.export_triplets(&p), Err(ServiceError::NotFinalized)));
    let report = store.conflicts(&p).unwrap();
    assert_eq!(report.conflicts.len(), 1);
    assert_eq!((report.conflicts[0].table_id.as_str(), report.conflicts[0].text_block_id.as_str()), ("t1", "c"));
    assert!(matches!(store.finalize(&p, true), Err(ServiceError::UnresolvedConflicts(1))));
    assert!(matches!(
        store.resolve_conflict(&p, "t1", "a", true, String::new()),
        Err(ServiceError::NotInConflict(..))
    ));

    let rec = store.resolve_conflict(&p, "t1", "c", true, "lists the baselines of Table 1".into()).unwrap();
    assert_eq!(rec.resolution, Some(true));
    // Reconciliation locks labeling.
    assert!(matches!(
        label(&mut store, &p, "ann1", "t2", "a", Label::Related, 1),
        Err(ServiceError::ProjectClosed("Reconciling"))
    ));
    let report = store.conflicts(&p).unwrap();
    assert!(report.conflicts.is_empty());
    assert_eq!(report.resolved.len(), 1);
    assert_eq!(report.completeness_warnings.len(), 1);
    assert_eq!(report.completeness_warnings[0].table_id, "t2");
    assert!(matches!(store.finalize(&p, false), Err(ServiceError::WarningsNotAcknowledged(_))));
    store.finalize(&p, true).unwrap();
    assert!(matches!(store.finalize(&p, true), Err(ServiceError::ProjectClosed(_))));
    assert!(matches!(
        store.resolve_conflict(&p, "t1", "c", false, String::new()),
        Err(ServiceError::ProjectClosed(_))
    ));

    let bytes = store.export_jsonl(&p).unwrap();
    let want = "{\"annotator_id\":\"consensus\",\"doc_id\":\"fx\",\"page_id\":0,\"related_paragraphs\":[\"a\",\"b\",\"c\"],\"table_id\":\"t1\"}\n\
                {\"annotator_id\":\"consensus\",\"doc_id\":\"fx\",\"page_id\":0,\"related_paragraphs\":[],\"table_id\":\"t2\"}\n";
    assert_eq!(String::from_utf8(bytes.clone()).unwrap(), want);
    assert_eq!(store.export_jsonl(&p).unwrap(), bytes);
}

#[test]
fn log_replays_to_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let d = doc(5, 2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, before_conflicts, before_tasks) = {
        let mut store = Store::open(&path).unwrap();
        let p = two_annotator_project(&mut store, &d);
        for t in d.tables() {
            for s in d.text_blocks() {
                for who in ["ann1", "ann2"] {
                    let n = rng.gen_range(1..4);
                    for rev in 1..=n {
                        let l = if rng.gen_bool(0.4) { Label::Related } else { Label::Unrelated };
                        label(&mut store, &p, who, &t.block_id, &s.block_id, l, rev).unwrap();
                    }
                }
            }
        }
        let c = store.conflicts(&p).unwrap();
        let t = store.tasks(&p, |_, _| None).unwrap();
        (p, c, t)
    };
    let store = Store::open(&path).unwrap();
    assert_eq!(store.conflicts(&p).unwrap(), before_conflicts);
    assert_eq!(store.tasks(&p, |_, _| None).unwrap(), before_tasks);

    // Every (annotator, pair) history in the log has strictly increasing revisions.
    let raw = std::fs::read_to_string(&path).unwrap();
    let mut last: std::collections::BTreeMap<(String, String, String), u64> = Default::default();
    for line in raw.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["event"] == "label" {
            let key = (
                v["annotator_id"].as_str().unwrap().to_string(),
                v["table_id"].as_str().unwrap().to_string(),
                v["text_block_id"].as_str().unwrap().to_string(),
            );
            let rev = v["revision"].as_u64().unwrap();
            let prev = last.insert(key, rev).unwrap_or(0);
            assert!(rev > prev);
        }
    }
}

#[test]
fn corrupt_log_is_storage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    std::fs::write(&path, "{not json}\n").unwrap();
    assert!(matches!(Store::open(&path), Err(ServiceError::Storage(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// With both annotators labeling every pair, the conflict list equals the
    /// disagreement set of a plain two-set merge.
    #[test]
    fn conflicts_match_merge(seed in any::<u64>(), tables in 1usize..4, texts in 1usize..8) {
        let d = doc(seed, tables, texts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Store::in_memory();
        let p = two_annotator_project(&mut store, &d);
        let mut sets: Vec<Vec<AnnotationTriplet>> = vec![Vec::new(), Vec::new()];
        for t in d.tables() {
            for (i, who) in ["ann1", "ann2"].iter().enumerate() {
                let mut related = BTreeSet::new();
                for s in d.text_blocks() {
                    let r = rng.gen_bool(0.35);
                    if r {
                        related.insert(s.block_id.clone());
                    }
                    label(&mut store, &p, who, &t.block_id, &s.block_id, Label::from_related(r), 1).unwrap();
                }
                sets[i].push(AnnotationTriplet {
                    doc_id: d.doc_id.clone(),
                    table_id: t.block_id.clone(),
                    page_id: t.page_id,
                    related_paragraphs: related,
                    annotator_id: (*who).into(),
                });
            }
        }
        let (_, want) = merge_annotations(&sets[0], &sets[1]).unwrap();
        let got = store.conflicts(&p).unwrap().conflicts;
        let key = |c: &tablescope_core::ConflictRecord| (c.table_id.clone(), c.text_block_id.clone(), c.labels.clone());
        let mut w: Vec<_> = want.iter().map(key).collect();
        let mut g: Vec<_> = got.iter().map(key).collect();
        w.sort();
        g.sort();
        prop_assert_eq!(g, w);
    }
}
