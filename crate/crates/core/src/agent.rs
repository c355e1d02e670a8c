//! The three-call inference loop: query → solution → plan → execution → answer.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::ApiClient;
use crate::forge::{extract_plan_text, Triplet};
use crate::llm::{LlmBackend, PromptBundle};
use crate::plan::{check_plan, execute_plan, parse_plan, serialize_plan, ExecError, Limits, TraceEntry};
use crate::registry::ApiLibrary;
use crate::solutions::SolutionLibrary;

/// Parses `solution: a -> b -> c` from model text. Whitespace-tolerant; the
/// first line starting with `solution:` wins.
pub fn parse_solution_line(text: &str) -> Option<Vec<String>> {
    let line = text.lines().map(str::trim).find(|l| l.to_ascii_lowercase().starts_with("solution:"))?;
    let rest = &line["solution:".len()..];
    let steps: Vec<String> = rest.split("->").map(|s| s.trim().to_string()).collect();
    let ident = |s: &String| {
        !s.is_empty()
            && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !s.starts_with(|c: char| c.is_ascii_digit())
    };
    steps.iter().all(ident).then_some(steps)
}

/// Parses the `input: {"param": value}` line accompanying a plan.
pub fn parse_input_line(text: &str) -> Option<BTreeMap<String, Value>> {
    let line = text.lines().map(str::trim).find(|l| l.starts_with("input:"))?;
    serde_json::from_str(line["input:".len()..].trim()).ok()
}

pub fn input_line(input: &BTreeMap<String, Value>) -> String {
    format!("input: {}", serde_json::to_string(input).expect("JSON values always serialize"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub value: Option<Value>,
    pub api_calls: usize,
    pub trace: Vec<TraceEntry>,
    pub error: Option<ExecError>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solution_ms: Option<f64>,
    pub plan_ms: Option<f64>,
    pub execution_ms: Option<f64>,
    pub answer_ms: Option<f64>,
    pub total_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// One query's run. A failed stage leaves later stages empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub id: String,
    pub query: String,
    pub solution_text: Option<String>,
    pub predicted_solution: Option<Vec<String>>,
    pub solution_error: Option<String>,
    /// Whether the solution's own plan prompt was used rather than the general one.
    pub specific_plan_prompt: Option<bool>,
    pub plan_text: Option<String>,
    pub plan: Option<String>,
    pub plan_error: Option<String>,
    pub plan_input: Option<BTreeMap<String, Value>>,
    pub execution: Option<Execution>,
    pub answer_value: Option<Value>,
    pub answer_text: Option<String>,
    pub answer_error: Option<String>,
    pub llm_calls: usize,
    /// Set when the plan did not parse, check or execute.
    pub execution_error: bool,
    /// Kept out of the transcript file so reruns compare byte for byte.
    #[serde(skip)]
    pub timings: Timings,
}

impl AgentTranscript {
    pub fn executed_ok(&self) -> bool {
        self.execution.as_ref().is_some_and(|e| e.error.is_none())
    }
}

pub struct Agent<'a> {
    pub bundle: &'a PromptBundle,
    pub solutions: &'a SolutionLibrary,
    pub apis: &'a ApiLibrary,
    pub backend: &'a dyn LlmBackend,
    pub client: &'a dyn ApiClient,
    pub limits: Limits,
}

impl Agent<'_> {
    /// Never fails; every stage failure is recorded in the transcript.
    pub fn answer_query(&self, id: &str, query: &str) -> AgentTranscript {
        let start = Instant::now();
        let mut t = AgentTranscript { id: id.to_string(), query: query.to_string(), ..AgentTranscript::default() };
        self.run_stages(&mut t);
        t.timings.total_ms = ms(start.elapsed());
        t
    }

    fn run_stages(&self, t: &mut AgentTranscript) {
        let clock = Instant::now();
        t.llm_calls += 1;
        let reply = self.backend.complete(&self.bundle.solution_request(&t.query));
        t.timings.solution_ms = Some(ms(clock.elapsed()));
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                t.solution_error = Some(e.to_string());
                t.execution_error = true;
                return;
            }
        };
        let steps = parse_solution_line(&reply);
        t.solution_text = Some(reply);
        let Some(steps) = steps else {
            t.solution_error = Some("no `solution: a -> b` line".into());
            t.execution_error = true;
            return;
        };
        let key = steps.join(" -> ");
        let known = self.solutions.find_steps(&steps).is_some();
        t.predicted_solution = Some(steps);

        let clock = Instant::now();
        let (prompt, specific) = self.bundle.plan_request(&key, &t.query);
        t.specific_plan_prompt = Some(specific && known);
        t.llm_calls += 1;
        let reply = self.backend.complete(&prompt);
        t.timings.plan_ms = Some(ms(clock.elapsed()));
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                t.plan_error = Some(e.to_string());
                t.execution_error = true;
                return;
            }
        };
        let text = extract_plan_text(&reply);
        t.plan_text = Some(reply);
        let plan = match parse_plan(&text) {
            Ok(p) => p,
            Err(e) => {
                t.plan_error = Some(format!("parse: {e}"));
                t.execution_error = true;
                return;
            }
        };
        t.plan = Some(serialize_plan(&plan));
        let typed = match check_plan(&plan, self.apis) {
            Ok(tp) => tp,
            Err(findings) => {
                let msgs: Vec<String> = findings.iter().map(|f| format!("{}: {}", f.step, f.message)).collect();
                t.plan_error = Some(format!("check: {}", msgs.join("; ")));
                t.execution_error = true;
                return;
            }
        };
        let Some(inputs) = parse_input_line(t.plan_text.as_deref().unwrap_or("")) else {
            t.plan_error = Some("no `input: {...}` line binding the plan parameters".into());
            t.execution_error = true;
            return;
        };
        t.plan_input = Some(inputs.clone());

        let clock = Instant::now();
        let result = execute_plan(&typed, &inputs, self.client, self.limits);
        t.timings.execution_ms = Some(ms(clock.elapsed()));
        let value = match result {
            Ok(r) => {
                t.execution = Some(Execution {
                    value: Some(r.value.clone()),
                    api_calls: r.api_calls,
                    trace: r.trace,
                    error: None,
                });
                r.value
            }
            Err(e) => {
                t.execution = Some(Execution { value: None, api_calls: 0, trace: Vec::new(), error: Some(e) });
                t.execution_error = true;
                return;
            }
        };
        // Recorded before the answer prompt so grading never reads prose.
        t.answer_value = Some(value.clone());

        let clock = Instant::now();
        t.llm_calls += 1;
        match self.backend.complete(&self.bundle.answer_request(&t.query, &value)) {
            Ok(text) => t.answer_text = Some(text),
            Err(e) => t.answer_error = Some(e.to_string()),
        }
        t.timings.answer_ms = Some(ms(clock.elapsed()));
    }
}

/// Runs every record with up to `parallelism` concurrent queries. Results
/// keep dataset order.
pub fn run_benchmark(agent: &Agent<'_>, dataset: &[Triplet], parallelism: usize) -> Vec<AgentTranscript> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build().expect("thread pool");
    pool.install(|| dataset.par_iter().map(|t| agent.answer_query(&t.id, &t.text)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub queries: usize,
    pub mean_total_ms: f64,
    pub mean_execution_ms: f64,
    pub mean_llm_calls: f64,
}

pub fn latency_summary(ts: &[AgentTranscript]) -> LatencySummary {
    let n = ts.len().max(1) as f64;
    LatencySummary {
        queries: ts.len(),
        mean_total_ms: ts.iter().map(|t| t.timings.total_ms).sum::<f64>() / n,
        mean_execution_ms: ts.iter().filter_map(|t| t.timings.execution_ms).sum::<f64>() / n,
        mean_llm_calls: ts.iter().map(|t| t.llm_calls as f64).sum::<f64>() / n,
    }
}

/// Stub fixtures answering with a different solution that still reaches the
/// gold answer: the head API is called twice and the first result discarded.
pub fn alternate_fixtures(triplets: &[Triplet]) -> crate::llm::StubFixtures {
    use crate::llm::{Stage, StubEntry, StubFixtures};
    use crate::plan::Step;
    let entries = triplets
        .iter()
        .filter_map(|t| {
            let mut plan = parse_plan(&t.plan).ok()?;
            let first = plan.body.first()?.clone();
            let Step::Call { api, args, .. } = first else {
                return None;
            };
            plan.body.insert(0, Step::Call { bind: "probe".into(), api: api.clone(), args });
            let mut steps = vec![api];
            steps.extend(t.solution.iter().cloned());
            Some(StubEntry {
                query: t.text.clone(),
                responses: BTreeMap::from([
                    (Stage::Solution, format!("solution: {}", steps.join(" -> "))),
                    (Stage::Plan, format!("{}{}\n", serialize_plan(&plan), input_line(&t.input))),
                    (Stage::Answer, format!("It is {}.", t.ground_truth)),
                ]),
                default: None,
            })
        })
        .collect();
    StubFixtures { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_line_parsing() {
        assert_eq!(
            parse_solution_line("Sure.\n  solution:  searchPerson->getPersonPubs ->  getPublication \n"),
            Some(vec!["searchPerson".into(), "getPersonPubs".into(), "getPublication".into()])
        );
        assert_eq!(parse_solution_line("Solution: searchPerson"), Some(vec!["searchPerson".into()]));
        assert_eq!(parse_solution_line("searchPerson -> getPersonPubs"), None);
        assert_eq!(parse_solution_line("solution: searchPerson -> "), None);
        assert_eq!(parse_solution_line("solution: search Person"), None);
    }

    #[test]
    fn input_line_round_trip() {
        let m = BTreeMap::from([("name".to_string(), Value::from("Alice Zhang"))]);
        assert_eq!(parse_input_line(&format!("plan(...)\n{}\n", input_line(&m))), Some(m));
        assert_eq!(parse_input_line("input: not json"), None);
    }
}
