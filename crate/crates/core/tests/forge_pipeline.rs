//! Whole-pipeline checks on the default registry and a small corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use apiplan_core::client::LocalClient;
use apiplan_core::corpus::{generate_corpus, Corpus};
use apiplan_core::forge::*;
use apiplan_core::plan::{check_plan, parse_plan};
use apiplan_core::registry::{default_library, ApiLibrary};
use serde_json::Value;

const SCHOLARS: usize = 400;
const PUBS: usize = 1200;

struct Fixture {
    lib: ApiLibrary,
    corpus: Arc<Corpus>,
    run: ForgeRun,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let lib = default_library();
        let corpus = Arc::new(generate_corpus(7, SCHOLARS, PUBS).unwrap());
        let run = forge(&ForgeConfig::default(), &lib, corpus.clone(), None).unwrap();
        Fixture { lib, corpus, run }
    })
}

fn export_opts(dir: &std::path::Path, f: &Fixture) -> ExportOptions {
    ExportOptions {
        out_dir: dir.to_path_buf(),
        seed: 42,
        split_ratio: DEFAULT_SPLIT_RATIO,
        snapshot_id: f.corpus.snapshot_id.clone(),
        solutions: f.run.library.len(),
        combinations: f.run.combinations.len(),
        timestamp: None,
    }
}

#[test]
fn combination_product_minus_echo() {
    let f = fixture();
    for s in f.run.library.iter() {
        let heads = admissible_heads(s, &f.lib);
        let tails = admissible_tails(s, &f.lib);
        let echo = heads.iter().filter(|h| tails.contains(h)).count();
        assert_eq!(formulate_combinations(s, &f.lib).len(), heads.len() * tails.len() - echo, "{s}");
    }
}

#[test]
fn curated_combinations_ask_distinct_questions() {
    let f = fixture();
    assert_eq!(f.run.combinations.len(), 39);
    let sigs: BTreeSet<_> = f.run.combinations.iter().map(|c| question_signature(c).unwrap()).collect();
    assert_eq!(sigs.len(), f.run.combinations.len());
    let texts: BTreeSet<&str> = f.run.templates.iter().map(|t| t.text.as_str()).collect();
    assert_eq!(texts.len(), f.run.templates.len());
    let queries: BTreeSet<&str> = f.run.triplets.iter().map(|t| t.text.as_str()).collect();
    assert_eq!(queries.len(), f.run.triplets.len());
}

#[test]
fn triplet_count_and_split_arithmetic() {
    let f = fixture();
    assert_eq!(f.run.skipped, 0);
    assert!(f.run.excluded.is_empty());
    let n = f.run.combinations.len();
    assert_eq!(f.run.templates.len(), TEMPLATES_PER_COMBINATION * n);
    assert_eq!(f.run.triplets.len(), TEMPLATES_PER_COMBINATION * DEFAULT_INSTANTIATIONS * n);
    let mut per_bucket: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for t in &f.run.triplets {
        let b = per_bucket.entry(t.combination_id.as_str()).or_default();
        b.0 += 1;
        b.1 += usize::from(t.split == Split::Test);
    }
    for (cid, (total, test)) in per_bucket {
        assert_eq!(test, total / 5, "{cid}");
    }
}

#[test]
fn every_plan_checks_and_every_triplet_verifies() {
    let f = fixture();
    let client = LocalClient::new(f.corpus.clone());
    for t in &f.run.triplets {
        check_plan(&parse_plan(&t.plan).unwrap(), &f.lib).unwrap();
        assert!(verify_triplet(t, &f.lib, &client).unwrap(), "{}", t.id);
        assert_eq!(t.hop, t.solution.len());
    }
}

fn scholar_by_name<'a>(c: &'a Corpus, name: &str) -> &'a apiplan_core::corpus::Scholar {
    let hits: Vec<_> = c.scholars.values().filter(|s| s.name.eq_ignore_ascii_case(name)).collect();
    assert_eq!(hits.len(), 1);
    hits[0]
}

#[test]
fn ground_truth_matches_direct_corpus_lookups() {
    let f = fixture();
    let c = &f.corpus;
    let by_comb = |id: &'static str| f.run.triplets.iter().filter(move |t| t.combination_id == id);

    let mut seen = 0;
    for t in by_comb("name:searchPerson:organization") {
        let s = scholar_by_name(c, t.input["name"].as_str().unwrap());
        assert_eq!(t.ground_truth, Value::from(s.organization.clone()));
        seen += 1;
    }
    for t in by_comb("name:searchPerson>getPersonPubs:title") {
        let s = scholar_by_name(c, t.input["name"].as_str().unwrap());
        let best = s.pub_ids.iter().map(|p| &c.publications[p]).max_by_key(|p| p.num_citation).unwrap();
        assert_eq!(t.ground_truth, Value::from(best.title.clone()));
        seen += 1;
    }
    for t in by_comb("publication_info:searchPublication>getPublication:num_citation") {
        let q = t.input["publication_info"].as_str().unwrap().to_lowercase();
        let first = c.publications.values().find(|p| p.title.to_lowercase().contains(&q)).unwrap();
        assert_eq!(t.ground_truth, Value::from(first.num_citation));
        seen += 1;
    }
    assert_eq!(seen, 3 * 90);
}

#[test]
fn forging_twice_is_identical() {
    let f = fixture();
    let again = forge(&ForgeConfig::default(), &f.lib, f.corpus.clone(), None).unwrap();
    assert_eq!(again.triplets, f.run.triplets);
    assert_eq!(again.templates, f.run.templates);
}

#[test]
fn export_is_byte_stable_and_manifest_adds_up() {
    let f = fixture();
    let client = LocalClient::new(f.corpus.clone());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m1 = export_dataset(f.run.triplets.clone(), &export_opts(a.path(), f), &f.lib, &client).unwrap();
    let m2 = export_dataset(f.run.triplets.clone(), &export_opts(b.path(), f), &f.lib, &client).unwrap();
    assert_eq!(m1, m2);
    for file in [TRAIN_FILE, TEST_FILE, SFT_FILE, MANIFEST_FILE, GOLD_STUB_FILE] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    assert_eq!(m1.train + m1.test, m1.total);
    assert_eq!(m1.per_hop.values().map(|h| h.total).sum::<usize>(), m1.total);
    assert_eq!(m1.test_per_hop.values().map(|h| h.total).sum::<usize>(), m1.test);
    for h in m1.per_hop.values() {
        assert_eq!(h.scholar + h.publication, h.total);
    }
    let train = read_triplets(&a.path().join(TRAIN_FILE)).unwrap();
    let test = read_triplets(&a.path().join(TEST_FILE)).unwrap();
    assert_eq!((train.len(), test.len()), (m1.train, m1.test));
    assert!(train.iter().all(|t| t.split == Split::Train));
    assert!(test.iter().all(|t| t.split == Split::Test));
    let sft = std::fs::read_to_string(a.path().join(SFT_FILE)).unwrap();
    assert_eq!(sft.lines().count(), m1.train);
}

#[test]
fn tampered_record_blocks_export() {
    let f = fixture();
    let client = LocalClient::new(f.corpus.clone());
    let mut triplets = f.run.triplets.clone();
    triplets[5].ground_truth = Value::from("not the answer");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    match export_dataset(triplets, &export_opts(&out, f), &f.lib, &client) {
        Err(ForgeError::VerificationFailed(ids)) => assert_eq!(ids, vec![f.run.triplets[5].id.clone()]),
        other => panic!("expected verification failure, got {other:?}"),
    }
    assert!(!out.join(TRAIN_FILE).exists());
}
