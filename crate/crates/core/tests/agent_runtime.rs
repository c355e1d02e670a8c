//! Prompt rendering and end-to-end agent runs against stub backends.

use std::sync::{Arc, OnceLock};

use apiplan_core::agent::{alternate_fixtures, run_benchmark, Agent, AgentTranscript};
use apiplan_core::client::{CountingClient, LocalClient};
use apiplan_core::corpus::generate_corpus;
use apiplan_core::eval::{classify, grade, EvalWeights, Outcome};
use apiplan_core::forge::{forge, gold_fixtures, ForgeConfig, ForgeRun, Split, Triplet};
use apiplan_core::llm::{render_prompts, PromptBundle, PromptError, Stage, StubBackend};
use apiplan_core::plan::Limits;
use apiplan_core::registry::{default_library, ApiLibrary};

struct Fixture {
    lib: ApiLibrary,
    client: LocalClient,
    run: ForgeRun,
    bundle: PromptBundle,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let lib = default_library();
        let corpus = Arc::new(generate_corpus(11, 300, 900).unwrap());
        let run = forge(&ForgeConfig::default(), &lib, corpus.clone(), None).unwrap();
        let bundle = render_prompts(&run.library, &lib, &train(&run), 2, 42).unwrap();
        Fixture { lib, client: LocalClient::new(corpus), run, bundle }
    })
}

fn train(run: &ForgeRun) -> Vec<Triplet> {
    run.triplets.iter().filter(|t| t.split == Split::Train).cloned().collect()
}

fn test_set(run: &ForgeRun) -> Vec<Triplet> {
    run.triplets.iter().filter(|t| t.split == Split::Test).cloned().collect()
}

fn agent<'a>(f: &'a Fixture, backend: &'a StubBackend) -> Agent<'a> {
    Agent {
        bundle: &f.bundle,
        solutions: &f.run.library,
        apis: &f.lib,
        backend,
        client: &f.client,
        limits: Limits::default(),
    }
}

#[test]
fn prompts_take_k_exemplars_per_solution() {
    let f = fixture();
    let tr = train(&f.run);
    let keys: Vec<String> = f.run.library.iter().map(|s| s.key()).take(3).collect();
    let subset: Vec<Triplet> = tr.iter().filter(|t| keys.contains(&t.solution_key())).cloned().collect();
    let b = render_prompts(&f.run.library, &f.lib, &subset, 2, 1).unwrap();
    assert_eq!(b.general_plan_prompt.matches("Example query:").count(), 6);
    assert_eq!(b.specific_plan_prompts.len(), 3);
    for p in b.specific_plan_prompts.values() {
        assert_eq!(p.matches("Example query:").count(), 2);
    }
    assert_eq!(b.flagged.len(), f.run.library.len() - 3);
    for s in f.run.library.iter() {
        assert!(b.solution_prompt.contains(&format!("solution: {}\n", s.key())));
    }
}

#[test]
fn prompts_are_deterministic_and_refuse_test_records() {
    let f = fixture();
    let tr = train(&f.run);
    assert_eq!(render_prompts(&f.run.library, &f.lib, &tr, 2, 42).unwrap(), f.bundle);
    assert!(f.bundle.flagged.is_empty());
    let mut leaked = tr.clone();
    leaked.push(test_set(&f.run)[0].clone());
    assert!(matches!(render_prompts(&f.run.library, &f.lib, &leaked, 2, 42), Err(PromptError::TestLeak(_))));
    assert!(matches!(render_prompts(&f.run.library, &f.lib, &[], 2, 42), Err(PromptError::NoTrainingData)));
}

#[test]
fn exemplars_never_come_from_test_split() {
    let f = fixture();
    for t in test_set(&f.run) {
        assert!(!f.bundle.general_plan_prompt.contains(&format!("Example query: {}\n", t.text)));
    }
}

#[test]
fn gold_stub_scores_full_marks() {
    let f = fixture();
    let test = test_set(&f.run);
    assert!(test.len() >= 200);
    let stub = StubBackend::from_fixtures(gold_fixtures(&test));
    let ts = run_benchmark(&agent(f, &stub), &test, 4);
    assert_eq!(ts.len(), test.len());
    assert!(ts.iter().zip(&test).all(|(t, g)| t.id == g.id));
    assert!(ts.iter().all(|t| t.llm_calls == 3 && t.specific_plan_prompt == Some(true)));
    let report = grade(&ts, &test, &EvalWeights::default()).unwrap();
    for row in report.per_hop.values() {
        assert_eq!(row.counts[&Outcome::EM], row.n);
    }
    assert!((report.score.unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn alternate_solutions_grade_as_ds() {
    let f = fixture();
    let test = test_set(&f.run);
    let stub = StubBackend::from_fixtures(alternate_fixtures(&test));
    let ts = run_benchmark(&agent(f, &stub), &test, 4);
    for (t, g) in ts.iter().zip(&test) {
        assert_eq!(classify(t, g), Outcome::DS, "{}", t.id);
        assert_eq!(t.specific_plan_prompt, Some(false));
    }
    let report = grade(&ts, &test, &EvalWeights::default()).unwrap();
    for row in report.per_hop.values() {
        assert!((row.acc - 100.0).abs() < 1e-9);
    }
}

#[test]
fn parallelism_does_not_change_transcripts() {
    let f = fixture();
    let test: Vec<Triplet> = test_set(&f.run).into_iter().take(120).collect();
    let stub = StubBackend::from_fixtures(gold_fixtures(&test));
    let a = agent(f, &stub);
    let one = serde_json::to_string(&run_benchmark(&a, &test, 1)).unwrap();
    let eight = serde_json::to_string(&run_benchmark(&a, &test, 8)).unwrap();
    assert_eq!(one, eight);
}

#[test]
fn llm_calls_stay_at_three_for_large_results() {
    let f = fixture();
    let counting = CountingClient::new(&f.client);
    let big = test_set(&f.run)
        .into_iter()
        .filter(|t| t.set_valued)
        .max_by_key(|t| t.ground_truth.as_array().map_or(0, Vec::len))
        .unwrap();
    let stub = StubBackend::from_fixtures(gold_fixtures(std::slice::from_ref(&big)));
    let a = Agent { client: &counting, ..agent(f, &stub) };
    let t = a.answer_query(&big.id, &big.text);
    assert_eq!(t.llm_calls, 3);
    assert!(counting.calls() >= 2);
    assert_eq!(classify(&t, &big), Outcome::EM);
}

#[test]
fn unparseable_plan_is_an_execution_error() {
    let f = fixture();
    let g = &test_set(&f.run)[0];
    let stub = StubBackend::default()
        .with(&g.text, Stage::Solution, &format!("solution: {}", g.solution_key()))
        .with(&g.text, Stage::Plan, "let x = = call")
        .with(&g.text, Stage::Answer, "unused");
    let t = agent(f, &stub).answer_query(&g.id, &g.text);
    assert!(t.execution_error);
    assert_eq!(t.llm_calls, 2);
    assert_eq!(classify(&t, g), Outcome::EE);
}

#[test]
fn stub_miss_is_recorded_not_raised() {
    let f = fixture();
    let stub = StubBackend::default();
    let t: AgentTranscript = agent(f, &stub).answer_query("q", "Who is nobody?");
    assert!(t.solution_error.is_some());
    assert!(t.execution_error);
}

#[test]
fn empty_dataset_gives_empty_report() {
    let f = fixture();
    let stub = StubBackend::default();
    let ts = run_benchmark(&agent(f, &stub), &[], 4);
    assert!(ts.is_empty());
    let report = grade(&ts, &[], &EvalWeights::default()).unwrap();
    assert_eq!(report.total, 0);
    assert_eq!(report.score, None);
}
