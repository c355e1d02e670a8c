//! Property tests over randomly generated inputs.

use std::collections::{BTreeMap, BTreeSet};

use apiplan_core::agent::{AgentTranscript, Execution};
use apiplan_core::eval::{classify, grade, EvalWeights, Outcome};
use apiplan_core::forge::{Split, Triplet};
use apiplan_core::graph::{build_graph, LinkPolicy};
use apiplan_core::plan::*;
use apiplan_core::registry::{ApiLibrary, ApiSpec, AttributeKind, AttributeSpec};
use apiplan_core::solutions::enumerate_solutions;
use proptest::prelude::*;
use serde_json::Value;

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_filter("reserved", |s| !RESERVED_WORDS.contains(&s.as_str()))
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![any::<i32>().prop_map(|i| Literal::Int(i64::from(i))), "[ -~\n\t]{0,12}".prop_map(Literal::Str),]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![name().prop_map(Expr::Var), literal().prop_map(Expr::Lit)];
    leaf.prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), name()).prop_map(|(e, f)| e.field(&f)),
            (inner, 0usize..5).prop_map(|(e, i)| e.index(i)),
        ]
    })
}

/// Expressions that can be the subject of field access or iteration.
fn place() -> impl Strategy<Value = Expr> {
    (name(), prop::collection::vec(name(), 0..3), prop::option::of(0usize..4)).prop_map(|(v, fields, idx)| {
        let mut e = Expr::var(&v);
        if let Some(i) = idx {
            e = e.index(i);
        }
        for f in fields {
            e = e.field(&f);
        }
        e
    })
}

fn cmp() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
}

fn step() -> impl Strategy<Value = Step> {
    let simple =
        prop_oneof![
            (name(), name(), prop::collection::btree_map(name(), expr(), 0..3))
                .prop_map(|(bind, api, args)| Step::Call { bind, api, args }),
            (name(), place(), name(), cmp(), literal()).prop_map(|(bind, over, field, cmp, value)| Step::Filter {
                bind,
                over,
                field,
                cmp,
                value
            }),
            (name(), place(), name(), any::<bool>()).prop_map(|(bind, over, field, asc)| Step::SortBy {
                bind,
                over,
                field,
                order: if asc { SortOrder::Asc } else { SortOrder::Desc }
            }),
            (name(), place(), name(), any::<bool>()).prop_map(|(bind, over, field, max)| Step::ArgBest {
                bind,
                over,
                field,
                mode: if max { BestMode::Max } else { BestMode::Min }
            }),
            (name(), place(), 0usize..9).prop_map(|(bind, over, k)| Step::Take { bind, over, k }),
            (name(), place(), name()).prop_map(|(bind, from, field)| Step::Select { bind, from, field }),
        ];
    simple.prop_recursive(2, 12, 3, |inner| {
        (name(), name(), place(), prop::collection::vec(inner, 1..3), place())
            .prop_map(|(bind, var, over, body, collect)| Step::ForEach { bind, var, over, body, collect })
    })
}

fn plan() -> impl Strategy<Value = Plan> {
    let kinds = prop::sample::select(vec![AttributeKind::Text, AttributeKind::Scalar, AttributeKind::EntityId]);
    (
        prop::collection::vec((name(), kinds).prop_map(|(name, kind)| Param { name, kind }), 1..3),
        prop::collection::vec(step(), 0..5),
        place(),
    )
        .prop_map(|(params, body, result)| Plan { params, body, result })
}

fn gold(i: usize, hop: usize, steps: &[String]) -> Triplet {
    Triplet {
        id: format!("q{i}"),
        text: format!("question {i}"),
        input: BTreeMap::new(),
        ground_truth: Value::from(i as i64),
        solution: steps.to_vec(),
        hop_links: Vec::new(),
        plan: String::new(),
        hop,
        template_id: format!("t{}", i % 7),
        template: String::new(),
        combination_id: String::new(),
        set_valued: false,
        split: Split::Test,
    }
}

/// (hop, solution matches, answer matches, executed)
fn synthetic(cases: &[(usize, bool, bool, bool)]) -> (Vec<AgentTranscript>, Vec<Triplet>) {
    let mut ts = Vec::new();
    let mut gs = Vec::new();
    for (i, &(hop, same_sol, same_ans, ran)) in cases.iter().enumerate() {
        let steps: Vec<String> = (0..hop).map(|k| format!("api{k}")).collect();
        let g = gold(i, hop, &steps);
        let mut predicted = steps.clone();
        if !same_sol {
            predicted.push("extra".into());
        }
        let answer = if same_ans { g.ground_truth.clone() } else { Value::from("wrong") };
        ts.push(AgentTranscript {
            id: g.id.clone(),
            query: g.text.clone(),
            predicted_solution: Some(predicted),
            execution: Some(Execution {
                value: ran.then(|| answer.clone()),
                api_calls: hop,
                trace: Vec::new(),
                error: (!ran)
                    .then(|| ExecError { step: Some(0), kind: ExecErrorKind::EmptySelection("people".into()) }),
            }),
            answer_value: ran.then_some(answer),
            execution_error: !ran,
            llm_calls: 3,
            ..AgentTranscript::default()
        });
        gs.push(g);
    }
    (ts, gs)
}

fn random_library(n: usize, edges: &[(usize, usize)]) -> ApiLibrary {
    let apis = (0..n)
        .map(|i| {
            let mut inputs = vec![AttributeSpec::new("q", AttributeKind::Text)];
            let sources: BTreeSet<usize> = edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
            inputs.extend(sources.iter().map(|s| AttributeSpec::new(&format!("id{s}"), AttributeKind::EntityId)));
            let outputs = vec![AttributeSpec::new(&format!("id{i}"), AttributeKind::EntityId)];
            ApiSpec {
                name: format!("api{i}"),
                description: String::new(),
                returns_list: false,
                pick: None,
                inputs,
                outputs,
            }
        })
        .collect();
    ApiLibrary { version: "random".into(), apis }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn plan_text_round_trips(p in plan()) {
        let text = serialize_plan(&p);
        let back = parse_plan(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(serialize_plan(&back), text);
    }

    #[test]
    fn outcomes_partition_and_score_ignores_weight_scale(
        cases in prop::collection::vec((1usize..=3, any::<bool>(), any::<bool>(), any::<bool>()), 1..300),
        c in 0.01f64..100.0,
    ) {
        let (ts, gs) = synthetic(&cases);
        let w = EvalWeights::default();
        let report = grade(&ts, &gs, &w).unwrap();
        let counted: usize = report.per_hop.values().flat_map(|r| r.counts.values()).sum();
        prop_assert_eq!(counted, cases.len());
        for (t, g) in ts.iter().zip(&gs) {
            let &(_, same_sol, same_ans, ran) = &cases[g.id[1..].parse::<usize>().unwrap()];
            let expected = match (ran, same_ans, same_sol) {
                (false, _, _) => Outcome::EE,
                (true, true, true) => Outcome::EM,
                (true, true, false) => Outcome::DS,
                (true, false, true) => Outcome::WC,
                (true, false, false) => Outcome::WS,
            };
            prop_assert_eq!(classify(t, g), expected);
        }
        let scaled = grade(&ts, &gs, &w.scaled(c)).unwrap();
        prop_assert!((report.score.unwrap() - scaled.score.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn enumeration_grows_with_hop_limit(
        n in 2usize..6,
        edges in prop::collection::vec((0usize..6, 0usize..6), 0..8),
    ) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let g = build_graph(&random_library(n, &edges), LinkPolicy::EntityId);
        let mut prev: BTreeSet<_> = BTreeSet::new();
        for h in 1..=4 {
            let cur: BTreeSet<_> = enumerate_solutions(&g, h).unwrap().into_iter().collect();
            prop_assert!(prev.is_subset(&cur));
            prop_assert!(cur.iter().all(|s| s.steps.len() <= h));
            prev = cur;
        }
    }
}
