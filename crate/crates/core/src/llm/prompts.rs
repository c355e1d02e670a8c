use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::Stage;
use crate::forge::{Split, Triplet};
use crate::registry::{describe_api, ApiLibrary};
use crate::solutions::SolutionLibrary;
use crate::util::seeded_hash;

pub const DEFAULT_EXEMPLARS: usize = 2;

const GRAMMAR: &str = "\
Plan language, one statement per line:
  plan(param: kind, ...)
  let v = call Api(input=expr, ...)
  let v = foreach x in expr { ... yield expr }
  let v = filter expr by field OP literal
  let v = argmax expr by field   (or argmin)
  let v = sort expr by field asc|desc
  let v = take expr k
  let v = expr.field
  return expr
Expressions are variables, literals, field access `a.b` and indexing `a[0]`.
After the plan, bind its parameters with values taken from the query on one line:
  input: {\"param\": \"value\"}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no training triplets to draw exemplars from")]
    NoTrainingData,
    #[error("test-split triplet {0} must not be used as an exemplar")]
    TestLeak(String),
}

/// Appends the addressing lines every prompt ends with.
pub fn compose(stage: Stage, body: &str, query: &str) -> String {
    let query = query.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = String::from(body.trim_end());
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&format!("Task: {}\nQuery: {query}\n", stage.as_str()));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub solution_prompt: String,
    /// Keyed by the solution's `a -> b` form.
    pub specific_plan_prompts: BTreeMap<String, String>,
    pub general_plan_prompt: String,
    pub answer_prompt: String,
    pub extract_prompt: String,
    /// Solutions without any training exemplar.
    pub flagged: Vec<String>,
    pub exemplars_per_solution: usize,
    pub seed: u64,
}

impl PromptBundle {
    pub fn solution_request(&self, query: &str) -> String {
        compose(Stage::Solution, &self.solution_prompt, query)
    }

    /// Uses the solution's own prompt when it has one, else the general prompt.
    /// The flag says which one was used.
    pub fn plan_request(&self, solution_key: &str, query: &str) -> (String, bool) {
        let (base, specific) = match self.specific_plan_prompts.get(solution_key) {
            Some(p) => (p, true),
            None => (&self.general_plan_prompt, false),
        };
        let body = format!("{}\nSolution: {solution_key}", base.trim_end());
        (compose(Stage::Plan, &body, query), specific)
    }

    pub fn answer_request(&self, query: &str, value: &Value) -> String {
        let body = format!("{}\nResult: {value}", self.answer_prompt.trim_end());
        compose(Stage::Answer, &body, query)
    }

    pub fn extract_request(&self, free_text: &str) -> String {
        compose(Stage::Extract, &self.extract_prompt, free_text)
    }
}

/// The default extraction prompt, usable without a rendered bundle.
pub fn default_extract_prompt() -> String {
    "Extract the precise answer from the text below. Reply with the bare value only: \
     a number, a name, a title, or a JSON list."
        .into()
}

fn exemplar(out: &mut String, t: &Triplet) {
    out.push_str(&format!("Example query: {}\nSolution: {}\n{}", t.text, t.solution.join(" -> "), t.plan));
    if !t.plan.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&crate::agent::input_line(&t.input));
    out.push('\n');
}

/// Builds the solution, plan and answer prompts from training exemplars.
pub fn render_prompts(
    library: &SolutionLibrary,
    apis: &ApiLibrary,
    train: &[Triplet],
    k: usize,
    seed: u64,
) -> Result<PromptBundle, PromptError> {
    if train.is_empty() {
        return Err(PromptError::NoTrainingData);
    }
    if let Some(t) = train.iter().find(|t| t.split == Split::Test) {
        return Err(PromptError::TestLeak(t.id.clone()));
    }
    let mut by_solution: BTreeMap<String, Vec<&Triplet>> = BTreeMap::new();
    for t in train {
        by_solution.entry(t.solution.join(" -> ")).or_default().push(t);
    }
    for list in by_solution.values_mut() {
        list.sort_by_key(|t| (seeded_hash(seed, &t.id), t.id.clone()));
    }

    let all_apis: String = apis
        .apis
        .iter()
        .map(|a| describe_api(apis, &a.name).expect("API from the same library"))
        .collect::<Vec<_>>()
        .join("\n");

    let mut solution_prompt = format!(
        "You answer questions about scholars and publications by choosing a sequence of API calls.\n\
         Available APIs:\n{all_apis}\nKnown solutions, each with an example question:\n"
    );
    let mut specific = BTreeMap::new();
    let mut general = format!(
        "Write a plan that answers the query by following the solution.\n{GRAMMAR}\nAPIs:\n{all_apis}\nExamples:\n"
    );
    let mut flagged = Vec::new();

    for s in library.iter() {
        let key = s.key();
        let picked: Vec<&Triplet> =
            by_solution.get(&key).map(|l| l.iter().take(k).copied().collect()).unwrap_or_default();
        solution_prompt.push_str(&format!("solution: {key}\n"));
        match picked.first() {
            Some(t) => solution_prompt.push_str(&format!("  e.g. {}\n", t.template)),
            None => {
                flagged.push(key.clone());
                continue;
            }
        }
        let described: String = s
            .steps
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|a| describe_api(apis, a).expect("library solution uses known APIs"))
            .collect::<Vec<_>>()
            .join("\n");
        let mut p = format!(
            "Write a plan that answers the query by following the solution.\n{GRAMMAR}\nAPIs:\n{described}\nExamples:\n"
        );
        for t in &picked {
            exemplar(&mut p, t);
            exemplar(&mut general, t);
        }
        specific.insert(key, p);
    }
    solution_prompt.push_str("Reply with a single line of the form `solution: api1 -> api2 -> ...`.");

    Ok(PromptBundle {
        solution_prompt,
        specific_plan_prompts: specific,
        general_plan_prompt: general,
        answer_prompt: "Turn the structured result into a one-sentence natural language answer to the query.".into(),
        extract_prompt: default_extract_prompt(),
        flagged,
        exemplars_per_solution: k,
        seed,
    })
}
