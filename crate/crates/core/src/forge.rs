//! Benchmark synthesis: combinations, template queries, instantiation against
//! a corpus, gold plan compilation, verification, splitting and export.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::client::{ApiClient, LocalClient};
use crate::corpus::Corpus;
use crate::eval::answers_equal;
use crate::graph::{build_graph, LinkPolicy};
use crate::llm::{compose, LlmBackend, LlmError, Stage, StubBackend, StubEntry, StubFixtures};
use crate::plan::{
    check_plan, execute_plan, parse_plan, serialize_plan, BestMode, ExecError, Expr, Limits, Param, Plan, Step,
    TypedPlan, ValueKind,
};
use crate::registry::{describe_api, describe_library, ApiLibrary, ApiSpec, AttributeKind, OutputPath, Pick};
use crate::solutions::{build_library, hop_count, JudgeError, Solution, SolutionLibrary, StructuralJudge};
use crate::util::{canonical_json, pretty_json, seeded_hash};

pub const TEMPLATES_PER_COMBINATION: usize = 3;
pub const DEFAULT_INSTANTIATIONS: usize = 30;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.2;
pub const TEMPLATE_RETRIES: usize = 3;
pub const SYNTHESIS_RETRIES: usize = 3;

/// Placeholder symbols and the attribute each stands for.
pub const PLACEHOLDERS: &[(&str, &str)] = &[
    ("X", "interest"),
    ("XX", "organization"),
    ("XXX", "name"),
    ("XXXX", "publication_info"),
    ("N", "count"),
    ("Y", "year"),
];

pub fn placeholder_for(attribute: &str) -> Option<&'static str> {
    PLACEHOLDERS.iter().find(|(_, a)| *a == attribute).map(|(s, _)| *s)
}

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("unknown API `{0}`")]
    UnknownApi(String),
    #[error("combination {combination}: {message}")]
    Unsupported { combination: String, message: String },
    #[error("template generation for {combination} failed after {attempts} attempts: {reason}")]
    Templates { combination: String, attempts: usize, reason: String },
    #[error("plan synthesis for {combination} failed: {reason}")]
    Synthesis { combination: String, reason: String },
    #[error("corpus exhausted for {template}: {found} of {wanted} instantiations")]
    CorpusExhausted { template: String, found: usize, wanted: usize },
    #[error("transport failure while verifying {id}: {error}")]
    Transport { id: String, error: ExecError },
    #[error("{} triplet(s) failed re-verification, export blocked: {}", .0.len(), .0.join(", "))]
    VerificationFailed(Vec<String>),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("I/O on {path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combination {
    pub id: String,
    pub head_input: String,
    pub solution: Solution,
    pub tail_output: String,
}

impl Combination {
    pub fn new(head_input: &str, solution: Solution, tail_output: &str) -> Self {
        Combination {
            id: format!("{head_input}:{}:{tail_output}", solution.steps.join(">")),
            head_input: head_input.to_string(),
            solution,
            tail_output: tail_output.to_string(),
        }
    }
}

/// Head inputs of the first API, in declaration order.
pub fn admissible_heads(s: &Solution, lib: &ApiLibrary) -> Vec<String> {
    lib.get(s.head()).map(|api| api.inputs.iter().map(|i| i.name.clone()).collect()).unwrap_or_default()
}

/// Tail outputs worth asking about: no raw ids and no whole record lists.
/// Non-id fields of a record list appear as `list.field`.
pub fn admissible_tails(s: &Solution, lib: &ApiLibrary) -> Vec<String> {
    let Some(api) = lib.get(s.tail()) else {
        return Vec::new();
    };
    api.flattened_outputs()
        .into_iter()
        .filter_map(|p| match p {
            OutputPath::Top(o) if o.kind != AttributeKind::EntityId && !o.is_record_list() => Some(o.name.clone()),
            OutputPath::Nested { list, field } if field.kind != AttributeKind::EntityId => {
                Some(format!("{}.{}", list.name, field.name))
            }
            _ => None,
        })
        .collect()
}

/// Splits `list.field` tails; plain tails have no list part.
pub fn split_tail(tail: &str) -> (Option<&str>, &str) {
    match tail.split_once('.') {
        Some((list, field)) => (Some(list), field),
        None => (None, tail),
    }
}

/// Head × tail product minus pairs where the tail echoes the head.
pub fn formulate_combinations(s: &Solution, lib: &ApiLibrary) -> Vec<Combination> {
    let tails = admissible_tails(s, lib);
    let mut out = Vec::new();
    for head in admissible_heads(s, lib) {
        for tail in &tails {
            if *tail != head {
                out.push(Combination::new(&head, s.clone(), tail));
            }
        }
    }
    out
}

/// What a combination asks: head input, the entity reached and the attribute read.
pub fn question_signature(c: &Combination) -> Option<(String, String, String)> {
    let sym = placeholder_for(&c.head_input)?;
    Some((c.head_input.clone(), subject_of(c, sym).phrase().to_string(), c.tail_output.clone()))
}

/// All combinations of a library, dropping any that asks the same question
/// as a combination with a shorter solution. Library order is kept.
pub fn curate_combinations(library: &SolutionLibrary, lib: &ApiLibrary) -> Vec<Combination> {
    let mut by_length: Vec<&Solution> = library.iter().collect();
    by_length.sort_by_key(|s| (s.steps.len(), s.key()));
    let mut owner: BTreeMap<(String, String, String), String> = BTreeMap::new();
    for s in by_length {
        for c in formulate_combinations(s, lib) {
            if let Some(sig) = question_signature(&c) {
                owner.entry(sig).or_insert(c.id);
            }
        }
    }
    library
        .iter()
        .flat_map(|s| formulate_combinations(s, lib))
        .filter(|c| question_signature(c).is_none_or(|sig| owner.get(&sig) == Some(&c.id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub id: String,
    pub combination_id: String,
    pub text: String,
    pub placeholder_map: BTreeMap<String, String>,
    pub variant_index: usize,
}

/// Placeholder tokens in a text: maximal runs of `X`, plus standalone `N` and `Y`.
pub fn placeholder_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .filter(|w| w.chars().all(|c| c == 'X') || *w == "N" || *w == "Y")
        .map(str::to_string)
        .collect()
}

/// A template is valid when its only placeholder is the head's, exactly once.
pub fn template_is_valid(text: &str, head_input: &str) -> bool {
    let Some(sym) = placeholder_for(head_input) else {
        return false;
    };
    let tokens = placeholder_tokens(text);
    tokens.len() == 1 && tokens[0] == sym
}

/// Replaces the single placeholder token with `value`.
pub fn fill_template(text: &str, symbol: &str, value: &str) -> String {
    let mut out = String::with_capacity(text.len() + value.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if word == symbol {
            out.push_str(value);
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Subject {
    Person(String),
    Paper(String),
    People(String),
}

impl Subject {
    fn phrase(&self) -> &str {
        match self {
            Subject::Person(s) | Subject::Paper(s) | Subject::People(s) => s,
        }
    }
}

fn base_subject(head_api: &str, head_input: &str, sym: &str) -> Subject {
    if head_api == "searchPublication" {
        return Subject::Paper(sym.to_string());
    }
    Subject::Person(match head_input {
        "organization" => format!("the scholar from {sym}"),
        "interest" => format!("the scholar working on {sym}"),
        _ => sym.to_string(),
    })
}

fn subject_of(c: &Combination, sym: &str) -> Subject {
    let steps = &c.solution.steps;
    let mut subject = base_subject(&steps[0], &c.head_input, sym);
    for (j, api) in steps.iter().enumerate().skip(1) {
        if let (Subject::Paper(p), Some("person_id")) = (&subject, c.solution.hop_links.get(j - 1).map(String::as_str))
        {
            subject = Subject::Person(format!("the first author of {p}"));
        }
        subject = match (api.as_str(), subject) {
            ("getPersonPubs", s) => Subject::Paper(format!("the most cited paper of {}", s.phrase())),
            ("getCoauthors", s) => Subject::People(format!("the coauthors of {}", s.phrase())),
            (_, s) => s,
        };
    }
    subject
}

fn asks(tail: &str, plural: bool) -> Vec<String> {
    let v: &[&str] = match (tail, plural) {
        ("authors.name", _) => {
            &["Who are the authors of {s}?", "List the authors of {s}.", "Which scholars wrote {s}?"]
        }
        ("name", true) => &["Who are {s}?", "What are the names of {s}?", "List the names of {s}."],
        ("organization", true) => {
            &["Which organizations are {s} affiliated with?", "Where do {s} work?", "List the institutions of {s}."]
        }
        ("education_experience", _) => &[
            "Which school did {s} graduate from?",
            "What is the alma mater of {s}?",
            "Where did {s} receive their education?",
        ],
        ("organization", _) => {
            &["Which organization is {s} affiliated with?", "Where does {s} work?", "What institution is {s} part of?"]
        }
        ("name", _) => &["What is the name of {s}?", "Who is {s}?", "Tell me the name of {s}."],
        ("bio", _) => {
            &["Give me a short bio of {s}.", "What does the biography of {s} say?", "Can you introduce {s} briefly?"]
        }
        ("interest", _) => &[
            "What are the research interests of {s}?",
            "Which topics does {s} study?",
            "What fields is {s} interested in?",
        ],
        ("title", _) => &["What is the title of {s}?", "What is {s} called?", "Give me the title of {s}."],
        ("num_citation", _) => &[
            "How many citations does {s} have?",
            "How many times has {s} been cited?",
            "What is the citation count of {s}?",
        ],
        ("year", _) => {
            &["In which year was {s} published?", "When was {s} published?", "What is the publication year of {s}?"]
        }
        _ => &["What is the {a} of {s}?", "Tell me the {a} of {s}.", "Look up the {a} of {s}."],
    };
    v.iter().map(|t| t.replace("{a}", &tail.replace('_', " "))).collect()
}

/// The three built-in question phrasings for a combination.
pub fn phrasebook_templates(c: &Combination) -> Result<Vec<String>, ForgeError> {
    let sym = placeholder_for(&c.head_input).ok_or_else(|| ForgeError::Unsupported {
        combination: c.id.clone(),
        message: format!("no placeholder symbol for head input `{}`", c.head_input),
    })?;
    let subject = subject_of(c, sym);
    let plural = matches!(subject, Subject::People(_));
    Ok(asks(&c.tail_output, plural).into_iter().map(|a| a.replace("{s}", subject.phrase())).collect())
}

/// A stub backend that answers template prompts from the phrasebook.
pub fn phrasebook_backend(combinations: &[Combination]) -> Result<StubBackend, ForgeError> {
    let mut stub = StubBackend::default();
    for c in combinations {
        let lines = phrasebook_templates(c)?;
        stub = stub.with(&c.id, Stage::Template, &lines.join("\n"));
    }
    Ok(stub)
}

pub fn template_prompt(c: &Combination, lib: &ApiLibrary, attempt: usize) -> String {
    let sym = placeholder_for(&c.head_input).unwrap_or("?");
    let symbols: String = PLACEHOLDERS.iter().map(|(s, a)| format!("  {s} = {a}\n")).collect();
    let apis: String = c.solution.steps.iter().filter_map(|a| describe_api(lib, a).ok()).collect::<Vec<_>>().join("\n");
    let body = format!(
        "Write {TEMPLATES_PER_COMBINATION} differently worded questions, one per line.\n\
         Each question is answered by calling the APIs in order {} starting from the input `{}` \
         and reading the output `{}`.\n\
         Write the input as the placeholder {sym} and use no other placeholder.\n\
         Placeholder symbols:\n{symbols}APIs:\n{apis}\nAttempt: {attempt}",
        c.solution.key(),
        c.head_input,
        c.tail_output,
    );
    compose(Stage::Template, &body, &c.id)
}

fn strip_enumeration(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(|c: char| c.is_ascii_digit());
    let t = t.strip_prefix('.').or_else(|| t.strip_prefix(')')).unwrap_or(t);
    t.trim_start_matches(['-', '*', ' ']).trim()
}

/// Asks the backend for three phrasings, retrying on invalid output.
pub fn generate_templates(
    c: &Combination,
    lib: &ApiLibrary,
    llm: &dyn LlmBackend,
) -> Result<Vec<QueryTemplate>, ForgeError> {
    let sym = placeholder_for(&c.head_input).ok_or_else(|| ForgeError::Unsupported {
        combination: c.id.clone(),
        message: format!("no placeholder symbol for head input `{}`", c.head_input),
    })?;
    let mut reason = String::new();
    for attempt in 1..=TEMPLATE_RETRIES {
        let reply = llm.complete(&template_prompt(c, lib, attempt))?;
        let mut texts: Vec<String> = Vec::new();
        for line in reply.lines() {
            let t = strip_enumeration(line);
            if t.is_empty() {
                continue;
            }
            if template_is_valid(t, &c.head_input) && !texts.iter().any(|x| x == t) {
                texts.push(t.to_string());
            } else {
                reason = format!("rejected template {t:?}");
            }
        }
        if texts.len() >= TEMPLATES_PER_COMBINATION {
            return Ok(texts
                .into_iter()
                .take(TEMPLATES_PER_COMBINATION)
                .enumerate()
                .map(|(i, text)| QueryTemplate {
                    id: format!("{}#v{}", c.id, i + 1),
                    combination_id: c.id.clone(),
                    text,
                    placeholder_map: BTreeMap::from([(sym.to_string(), c.head_input.clone())]),
                    variant_index: i + 1,
                })
                .collect());
        }
        if reason.is_empty() {
            reason = format!("only {} valid templates", texts.len());
        }
    }
    Err(ForgeError::Templates { combination: c.id.clone(), attempts: TEMPLATE_RETRIES, reason })
}

/// Per-combination template memo so regeneration within a run is stable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TemplateCache {
    pub templates: BTreeMap<String, Vec<QueryTemplate>>,
}

impl TemplateCache {
    pub fn get_or_generate(
        &mut self,
        c: &Combination,
        lib: &ApiLibrary,
        llm: &dyn LlmBackend,
    ) -> Result<Vec<QueryTemplate>, ForgeError> {
        if let Some(t) = self.templates.get(&c.id) {
            return Ok(t.clone());
        }
        let t = generate_templates(c, lib, llm)?;
        self.templates.insert(c.id.clone(), t.clone());
        Ok(t)
    }
}

fn snake(name: &str) -> String {
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

struct Compiler<'a> {
    lib: &'a ApiLibrary,
    c: &'a Combination,
    used: BTreeSet<String>,
}

impl<'a> Compiler<'a> {
    fn unsupported(&self, message: String) -> ForgeError {
        ForgeError::Unsupported { combination: self.c.id.clone(), message }
    }

    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut i = 2;
        while self.used.contains(&name) || crate::plan::RESERVED_WORDS.contains(&name.as_str()) {
            name = format!("{base}_{i}");
            i += 1;
        }
        self.used.insert(name.clone());
        name
    }

    fn api(&self, name: &str) -> Result<&'a ApiSpec, ForgeError> {
        self.lib.get(name).ok_or_else(|| ForgeError::UnknownApi(name.to_string()))
    }

    /// Expression for the value of `link` read off one response record.
    fn link_expr(&mut self, api: &ApiSpec, link: &str, record: Expr, out: &mut Vec<Step>) -> Result<Expr, ForgeError> {
        let located = api
            .locate_output(link)
            .ok_or_else(|| self.unsupported(format!("`{}` does not output `{link}`", api.name)))?;
        let from = match located {
            OutputPath::Top(_) => record,
            OutputPath::Nested { list, .. } => {
                let items = record.field(&list.name);
                match list.pick.clone().unwrap_or(Pick::First) {
                    Pick::First => items.index(0),
                    Pick::Argmax { by } | Pick::Argmin { by } => {
                        let mode =
                            if matches!(list.pick, Some(Pick::Argmin { .. })) { BestMode::Min } else { BestMode::Max };
                        let bind = self.fresh(&format!("best_{}", list.name));
                        out.push(Step::ArgBest { bind: bind.clone(), over: items, field: by, mode });
                        Expr::var(&bind)
                    }
                    Pick::Each => {
                        return Err(self.unsupported(format!("per-element link through `{}`", list.name)));
                    }
                }
            }
        };
        let bind = self.fresh(link);
        out.push(Step::Select { bind: bind.clone(), from, field: link.to_string() });
        Ok(Expr::var(&bind))
    }

    fn select_tail(&mut self, from: Expr, out: &mut Vec<Step>) -> Expr {
        let bind = self.fresh("answer");
        let (list, field) = split_tail(&self.c.tail_output);
        out.push(Step::Select {
            bind: bind.clone(),
            from: match list {
                Some(l) => from.field(l),
                None => from,
            },
            field: field.to_string(),
        });
        Expr::var(&bind)
    }

    fn steps_from(&mut self, j: usize, arg: Expr, out: &mut Vec<Step>) -> Result<Expr, ForgeError> {
        let s = &self.c.solution;
        let api = self.api(&s.steps[j])?;
        let input = if j == 0 { self.c.head_input.clone() } else { s.hop_links[j - 1].clone() };
        let last = j + 1 == s.steps.len();
        let call = self.fresh(&snake(&api.name));
        out.push(Step::Call { bind: call.clone(), api: api.name.clone(), args: BTreeMap::from([(input, arg)]) });
        let record = if api.returns_list {
            match api.effective_pick() {
                Pick::First => Expr::var(&call).index(0),
                Pick::Argmax { by } | Pick::Argmin { by } => {
                    let mode =
                        if matches!(api.effective_pick(), Pick::Argmin { .. }) { BestMode::Min } else { BestMode::Max };
                    let bind = self.fresh(&format!("best_{call}"));
                    out.push(Step::ArgBest { bind: bind.clone(), over: Expr::var(&call), field: by, mode });
                    Expr::var(&bind)
                }
                Pick::Each => {
                    if last {
                        return Ok(self.select_tail(Expr::var(&call), out));
                    }
                    let item = self.fresh("item");
                    let mut body = Vec::new();
                    let link = self.link_expr(api, &s.hop_links[j], Expr::var(&item), &mut body)?;
                    let collect = self.steps_from(j + 1, link, &mut body)?;
                    let bind = self.fresh("collected");
                    out.push(Step::ForEach { bind: bind.clone(), var: item, over: Expr::var(&call), body, collect });
                    return Ok(Expr::var(&bind));
                }
            }
        } else {
            Expr::var(&call)
        };
        if last {
            return Ok(self.select_tail(record, out));
        }
        let link = self.link_expr(api, &s.hop_links[j], record, out)?;
        self.steps_from(j + 1, link, out)
    }
}

/// Mechanical compilation: one call per step, links threaded through each
/// API's pick rule, tail attribute selected last.
pub fn compile_plan(c: &Combination, lib: &ApiLibrary) -> Result<Plan, ForgeError> {
    let head = lib.get(c.solution.head()).ok_or_else(|| ForgeError::UnknownApi(c.solution.head().to_string()))?;
    let input = head.input(&c.head_input).ok_or_else(|| ForgeError::Unsupported {
        combination: c.id.clone(),
        message: format!("`{}` has no input `{}`", head.name, c.head_input),
    })?;
    let mut compiler = Compiler { lib, c, used: BTreeSet::from([c.head_input.clone()]) };
    let mut body = Vec::new();
    let result = compiler.steps_from(0, Expr::var(&c.head_input), &mut body)?;
    Ok(Plan { params: vec![Param { name: c.head_input.clone(), kind: input.kind }], body, result })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    #[default]
    Builtin,
    Llm,
}

fn expected_tail_kind(c: &Combination, lib: &ApiLibrary) -> Option<ValueKind> {
    let api = lib.get(c.solution.tail())?;
    match split_tail(&c.tail_output) {
        (None, tail) => api.output(tail).map(ValueKind::of_attribute),
        (Some(list), field) => {
            let f = api.output(list)?.field(field)?;
            Some(ValueKind::List(Box::new(ValueKind::of_attribute(f))))
        }
    }
}

fn result_matches_tail(t: &TypedPlan, c: &Combination, lib: &ApiLibrary) -> bool {
    let Some(expected) = expected_tail_kind(c, lib) else {
        return false;
    };
    t.result_kind.fits(&expected) || t.result_kind.fits(&ValueKind::List(Box::new(expected)))
}

pub fn synthesis_prompt(c: &Combination, lib: &ApiLibrary, attempt: usize) -> String {
    let head_kind =
        lib.get(c.solution.head()).and_then(|a| a.input(&c.head_input)).map(|i| i.kind.as_str()).unwrap_or("text");
    let body = format!(
        "Write a plan in the plan language.\n\
         Header: plan({}: {head_kind})\nSolution: {}\nReturn the `{}` output of `{}`.\n\
         APIs:\n{}\nAttempt: {attempt}",
        c.head_input,
        c.solution.key(),
        c.tail_output,
        c.solution.tail(),
        describe_library(lib),
    );
    compose(Stage::Synthesize, &body, &c.id)
}

/// Builtin compiles mechanically; llm mode parses and checks model output.
pub fn synthesize_plan(
    c: &Combination,
    lib: &ApiLibrary,
    mode: SynthesisMode,
    llm: Option<&dyn LlmBackend>,
) -> Result<TypedPlan, ForgeError> {
    let fail = |reason: String| ForgeError::Synthesis { combination: c.id.clone(), reason };
    match mode {
        SynthesisMode::Builtin => {
            let plan = compile_plan(c, lib)?;
            let typed = check_plan(&plan, lib).map_err(|f| fail(format!("{f:?}")))?;
            if !result_matches_tail(&typed, c, lib) {
                return Err(fail(format!("result kind {} does not match `{}`", typed.result_kind, c.tail_output)));
            }
            Ok(typed)
        }
        SynthesisMode::Llm => {
            let llm = llm.ok_or_else(|| fail("llm mode needs a backend".into()))?;
            let mut reason = String::new();
            for attempt in 1..=SYNTHESIS_RETRIES {
                let reply = llm.complete(&synthesis_prompt(c, lib, attempt))?;
                let text = extract_plan_text(&reply);
                match parse_plan(&text) {
                    Err(e) => reason = format!("parse: {e}"),
                    Ok(plan) => match check_plan(&plan, lib) {
                        Err(f) => {
                            reason =
                                format!("check: {}", f.iter().map(|x| x.message.clone()).collect::<Vec<_>>().join("; "))
                        }
                        Ok(t) if !result_matches_tail(&t, c, lib) => {
                            reason = format!("result kind {} does not match `{}`", t.result_kind, c.tail_output)
                        }
                        Ok(t) => return Ok(t),
                    },
                }
            }
            Err(fail(format!("after {SYNTHESIS_RETRIES} attempts: {reason}")))
        }
    }
}

/// Pulls plan source out of model text: strips code fences, then keeps the
/// lines from the `plan(` header through the `return` line.
pub fn extract_plan_text(reply: &str) -> String {
    let lines: Vec<&str> = reply.lines().filter(|l| !l.trim_start().starts_with("```")).collect();
    let Some(start) = lines.iter().position(|l| l.trim_start().starts_with("plan(")) else {
        return lines.join("\n");
    };
    let end = lines[start..]
        .iter()
        .position(|l| l.trim_start().starts_with("return "))
        .map(|e| start + e)
        .unwrap_or(lines.len() - 1);
    let mut text = lines[start..=end].join("\n");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantiatedQuery {
    pub id: String,
    pub text: String,
    pub input: BTreeMap<String, Value>,
    pub ground_truth: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Instantiation {
    pub queries: Vec<InstantiatedQuery>,
    /// Candidate values rejected because the gold plan failed or returned nothing.
    pub skipped: usize,
}

/// Candidate values for a head input attribute, in corpus order.
pub fn candidate_pool(corpus: &Corpus, attribute: &str) -> Option<Vec<String>> {
    let distinct = |it: &mut dyn Iterator<Item = String>| it.collect::<BTreeSet<_>>().into_iter().collect();
    Some(match attribute {
        "name" => corpus.scholars.values().map(|s| s.name.clone()).collect(),
        "organization" => distinct(&mut corpus.scholars.values().map(|s| s.organization.clone())),
        "interest" => distinct(&mut corpus.scholars.values().flat_map(|s| s.interest.clone())),
        "publication_info" => corpus.publications.values().map(|p| p.title.clone()).collect(),
        _ => return None,
    })
}

fn is_empty_answer(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.trim().is_empty(),
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Fills a template with sampled corpus values; ground truth comes from the gold plan.
pub fn instantiate(
    t: &QueryTemplate,
    plan: &TypedPlan,
    corpus: &Corpus,
    client: &dyn ApiClient,
    n: usize,
    seed: u64,
) -> Result<Instantiation, ForgeError> {
    let (symbol, attribute) = t.placeholder_map.iter().next().ok_or_else(|| ForgeError::Unsupported {
        combination: t.combination_id.clone(),
        message: "template has no placeholder".into(),
    })?;
    let mut pool = candidate_pool(corpus, attribute).ok_or_else(|| ForgeError::Unsupported {
        combination: t.combination_id.clone(),
        message: format!("no corpus values for `{attribute}`"),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeded_hash(seed, &t.id));
    pool.shuffle(&mut rng);
    let mut out = Instantiation::default();
    for value in pool {
        if out.queries.len() == n {
            break;
        }
        let input = BTreeMap::from([(attribute.clone(), Value::from(value.clone()))]);
        match execute_plan(plan, &input, client, Limits::default()) {
            Ok(r) if !is_empty_answer(&r.value) => out.queries.push(InstantiatedQuery {
                id: format!("{}-{:02}", t.id, out.queries.len() + 1),
                text: fill_template(&t.text, symbol, &value),
                input,
                ground_truth: r.value,
            }),
            _ => out.skipped += 1,
        }
    }
    if out.queries.len() < n {
        return Err(ForgeError::CorpusExhausted { template: t.id.clone(), found: out.queries.len(), wanted: n });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// A benchmark record: query, solution and canonical plan text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub id: String,
    pub text: String,
    pub input: BTreeMap<String, Value>,
    pub ground_truth: Value,
    pub solution: Vec<String>,
    pub hop_links: Vec<String>,
    pub plan: String,
    pub hop: usize,
    pub template_id: String,
    pub template: String,
    pub combination_id: String,
    pub set_valued: bool,
    #[serde(default)]
    pub split: Split,
}

impl Triplet {
    pub fn solution(&self) -> Solution {
        Solution { steps: self.solution.clone(), hop_links: self.hop_links.clone() }
    }

    pub fn solution_key(&self) -> String {
        self.solution.join(" -> ")
    }
}

pub fn make_triplet(q: InstantiatedQuery, t: &QueryTemplate, c: &Combination, plan: &TypedPlan) -> Triplet {
    Triplet {
        id: q.id,
        text: q.text,
        input: q.input,
        ground_truth: q.ground_truth,
        solution: c.solution.steps.clone(),
        hop_links: c.solution.hop_links.clone(),
        plan: serialize_plan(&plan.plan),
        hop: hop_count(&c.solution),
        template_id: t.id.clone(),
        template: t.text.clone(),
        combination_id: c.id.clone(),
        set_valued: plan.result_kind.is_list(),
        split: Split::Train,
    }
}

/// Re-executes the gold plan. Transport failures are errors, not mismatches.
pub fn verify_triplet(t: &Triplet, lib: &ApiLibrary, client: &dyn ApiClient) -> Result<bool, ForgeError> {
    let Ok(plan) = parse_plan(&t.plan) else {
        return Ok(false);
    };
    let Ok(typed) = check_plan(&plan, lib) else {
        return Ok(false);
    };
    match execute_plan(&typed, &t.input, client, Limits::default()) {
        Ok(r) => Ok(answers_equal(&r.value, &t.ground_truth, t.set_valued)),
        Err(e) if e.is_transport() => Err(ForgeError::Transport { id: t.id.clone(), error: e }),
        Err(_) => Ok(false),
    }
}

/// Per-combination split: in each bucket, the ⌊n·ratio⌋ records with the
/// smallest seeded hash of their id become test.
pub fn assign_splits(triplets: &mut [Triplet], ratio: f64, seed: u64) {
    let ratio = ratio.clamp(0.0, 1.0);
    let mut buckets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, t) in triplets.iter().enumerate() {
        buckets.entry(t.combination_id.clone()).or_default().push(i);
    }
    for idx in buckets.values_mut() {
        idx.sort_by_key(|&i| (seeded_hash(seed, &triplets[i].id), triplets[i].id.clone()));
        let n_test = (idx.len() as f64 * ratio + 1e-9).floor() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            triplets[i].split = if rank < n_test { Split::Test } else { Split::Train };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub seed: u64,
    pub max_hops: usize,
    pub instantiations: usize,
    pub split_ratio: f64,
    pub mode: SynthesisMode,
    pub link_policy: LinkPolicy,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            seed: 42,
            max_hops: crate::solutions::DEFAULT_MAX_HOPS,
            instantiations: DEFAULT_INSTANTIATIONS,
            split_ratio: DEFAULT_SPLIT_RATIO,
            mode: SynthesisMode::Builtin,
            link_policy: LinkPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForgeRun {
    pub library: SolutionLibrary,
    pub combinations: Vec<Combination>,
    pub templates: Vec<QueryTemplate>,
    pub triplets: Vec<Triplet>,
    pub skipped: usize,
    /// Ids of triplets that failed verification and were dropped.
    pub excluded: Vec<String>,
}

/// The whole pipeline on an in-process corpus. `llm` serves template (and in
/// llm mode, plan) prompts; when `None` the phrasebook stub is used.
pub fn forge(
    cfg: &ForgeConfig,
    lib: &ApiLibrary,
    corpus: Arc<Corpus>,
    llm: Option<&dyn LlmBackend>,
) -> Result<ForgeRun, ForgeError> {
    let graph = build_graph(lib, cfg.link_policy);
    let library = build_library(&graph, cfg.max_hops, &StructuralJudge::new(lib))?;
    let combinations = curate_combinations(&library, lib);
    let phrasebook;
    let templater: &dyn LlmBackend = match llm {
        Some(b) => b,
        None => {
            phrasebook = phrasebook_backend(&combinations)?;
            &phrasebook
        }
    };
    let client = LocalClient::new(corpus.clone());

    let mut cache = TemplateCache::default();
    let mut jobs = Vec::new();
    for c in &combinations {
        let plan = synthesize_plan(c, lib, cfg.mode, llm)?;
        for t in cache.get_or_generate(c, lib, templater)? {
            jobs.push((c, plan.clone(), t));
        }
    }
    let results: Vec<Result<(Vec<Triplet>, usize), ForgeError>> = jobs
        .par_iter()
        .map(|(c, plan, t)| {
            let inst = instantiate(t, plan, &corpus, &client, cfg.instantiations, cfg.seed)?;
            let triplets = inst.queries.into_iter().map(|q| make_triplet(q, t, c, plan)).collect();
            Ok((triplets, inst.skipped))
        })
        .collect();
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for r in results {
        let (t, s) = r?;
        triplets.extend(t);
        skipped += s;
    }

    let templates: Vec<QueryTemplate> = jobs.into_iter().map(|(_, _, t)| t).collect();
    let verdicts: Vec<Result<bool, ForgeError>> =
        triplets.par_iter().map(|t| verify_triplet(t, lib, &client)).collect();
    let mut kept = Vec::with_capacity(triplets.len());
    let mut excluded = Vec::new();
    for (t, v) in triplets.into_iter().zip(verdicts) {
        if v? {
            kept.push(t);
        } else {
            excluded.push(t.id);
        }
    }
    assign_splits(&mut kept, cfg.split_ratio, cfg.seed);

    Ok(ForgeRun { library, combinations, templates, triplets: kept, skipped, excluded })
}

/// Entity type a query is about, by the head API's outputs.
pub fn entity_type(solution: &[String], lib: &ApiLibrary) -> &'static str {
    match solution.first().and_then(|h| lib.get(h)) {
        Some(api) if api.output("pub_id").is_some() => "publication",
        _ => "scholar",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopCounts {
    pub scholar: usize,
    pub publication: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub snapshot_id: String,
    pub split_ratio: f64,
    pub solutions: usize,
    pub combinations: usize,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub per_hop: BTreeMap<usize, HopCounts>,
    pub test_per_hop: BTreeMap<usize, HopCounts>,
    /// Values that differ between otherwise identical runs.
    pub volatile: BTreeMap<String, String>,
}

fn hop_table<'a>(triplets: impl Iterator<Item = &'a Triplet>, lib: &ApiLibrary) -> BTreeMap<usize, HopCounts> {
    let mut out: BTreeMap<usize, HopCounts> = BTreeMap::new();
    for t in triplets {
        let row = out.entry(t.hop).or_insert(HopCounts { scholar: 0, publication: 0, total: 0 });
        match entity_type(&t.solution, lib) {
            "publication" => row.publication += 1,
            _ => row.scholar += 1,
        }
        row.total += 1;
    }
    out
}

pub fn sft_record(t: &Triplet, lib: &ApiLibrary) -> Value {
    json!({
        "input": format!("{}\nQuery: {}", describe_library(lib), t.text),
        "output": format!("solution: {}\n{}", t.solution_key(), t.plan),
    })
}

/// Stub fixtures that answer every query with its gold solution and plan.
pub fn gold_fixtures(triplets: &[Triplet]) -> StubFixtures {
    StubFixtures {
        entries: triplets
            .iter()
            .map(|t| StubEntry {
                query: t.text.clone(),
                responses: BTreeMap::from([
                    (Stage::Solution, format!("solution: {}", t.solution_key())),
                    (Stage::Plan, format!("{}{}\n", t.plan, crate::agent::input_line(&t.input))),
                    (Stage::Answer, format!("The answer is {}.", t.ground_truth)),
                ]),
                default: None,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split_ratio: f64,
    pub snapshot_id: String,
    pub solutions: usize,
    pub combinations: usize,
    pub timestamp: Option<String>,
}

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SFT_FILE: &str = "sft.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GOLD_STUB_FILE: &str = "gold_stub.json";

fn write(path: &Path, text: &str) -> Result<(), ForgeError> {
    std::fs::write(path, text).map_err(|error| ForgeError::Io { path: path.to_path_buf(), error })
}

fn jsonl<'a>(rows: impl Iterator<Item = &'a Triplet>) -> String {
    rows.map(|t| canonical_json(t) + "\n").collect()
}

/// Splits, re-verifies every triplet against `client`, then writes the
/// benchmark, SFT, gold stub and manifest files. Any mismatch blocks export.
pub fn export_dataset(
    mut triplets: Vec<Triplet>,
    opts: &ExportOptions,
    lib: &ApiLibrary,
    client: &dyn ApiClient,
) -> Result<Manifest, ForgeError> {
    let verdicts: Vec<Result<bool, ForgeError>> = triplets.par_iter().map(|t| verify_triplet(t, lib, client)).collect();
    let mut failed = Vec::new();
    for (t, v) in triplets.iter().zip(verdicts) {
        if !v? {
            failed.push(t.id.clone());
        }
    }
    if !failed.is_empty() {
        return Err(ForgeError::VerificationFailed(failed));
    }
    assign_splits(&mut triplets, opts.split_ratio, opts.seed);

    std::fs::create_dir_all(&opts.out_dir).map_err(|error| ForgeError::Io { path: opts.out_dir.clone(), error })?;
    let train = triplets.iter().filter(|t| t.split == Split::Train);
    let test = triplets.iter().filter(|t| t.split == Split::Test);
    write(&opts.out_dir.join(TRAIN_FILE), &jsonl(train.clone()))?;
    write(&opts.out_dir.join(TEST_FILE), &jsonl(test.clone()))?;
    let sft: String = train.clone().map(|t| canonical_json(&sft_record(t, lib)) + "\n").collect();
    write(&opts.out_dir.join(SFT_FILE), &sft)?;
    write(&opts.out_dir.join(GOLD_STUB_FILE), &pretty_json(&gold_fixtures(&triplets)))?;

    let manifest = Manifest {
        seed: opts.seed,
        snapshot_id: opts.snapshot_id.clone(),
        split_ratio: opts.split_ratio,
        solutions: opts.solutions,
        combinations: opts.combinations,
        total: triplets.len(),
        train: train.count(),
        test: test.clone().count(),
        per_hop: hop_table(triplets.iter(), lib),
        test_per_hop: hop_table(test, lib),
        volatile: opts.timestamp.iter().map(|t| ("timestamp".to_string(), t.clone())).collect(),
    };
    write(&opts.out_dir.join(MANIFEST_FILE), &pretty_json(&manifest))?;
    Ok(manifest)
}

pub fn read_triplets(path: &Path) -> Result<Vec<Triplet>, ForgeError> {
    let text = std::fs::read_to_string(path).map_err(|error| ForgeError::Io { path: path.to_path_buf(), error })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| ForgeError::Io {
                path: path.to_path_buf(),
                error: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_corpus;
    use crate::registry::default_library;
    use std::sync::OnceLock;

    fn corpus() -> Arc<Corpus> {
        static C: OnceLock<Arc<Corpus>> = OnceLock::new();
        C.get_or_init(|| Arc::new(generate_corpus(42, 1000, 3000).unwrap())).clone()
    }

    fn sol(steps: &[&str], links: &[&str]) -> Solution {
        Solution::new(steps.iter().copied(), links.iter().copied())
    }

    fn alma_mater() -> Combination {
        Combination::new(
            "publication_info",
            sol(&["searchPublication", "getPublication", "getPersonBasicInfo"], &["pub_id", "person_id"]),
            "education_experience",
        )
    }

    #[test]
    fn combination_product_minus_echo() {
        let lib = default_library();
        let one = formulate_combinations(&sol(&["searchPerson"], &[]), &lib);
        let pairs: Vec<(String, String)> = one.iter().map(|c| (c.head_input.clone(), c.tail_output.clone())).collect();
        assert_eq!(
            pairs,
            vec![
                ("name".into(), "organization".into()),
                ("organization".into(), "name".into()),
                ("interest".into(), "name".into()),
                ("interest".into(), "organization".into()),
            ]
        );
        let chain = formulate_combinations(&alma_mater().solution, &lib);
        assert!(chain.iter().any(|c| c.head_input == "publication_info" && c.tail_output == "education_experience"));
    }

    #[test]
    fn alma_mater_phrasing() {
        let t = phrasebook_templates(&alma_mater()).unwrap();
        assert!(t.contains(&"Which school did the first author of XXXX graduate from?".to_string()), "{t:?}");
    }

    #[test]
    fn placeholder_validation() {
        assert!(template_is_valid("Who is XXX?", "name"));
        assert!(!template_is_valid("Who is XX?", "name"));
        assert!(!template_is_valid("Is XXX at XX?", "name"));
        assert!(!template_is_valid("Is XXX or XXX?", "name"));
        assert!(!template_is_valid("How many N papers did XXX write?", "name"));
        assert!(!template_is_valid("What is XXX's X-ray count?", "name"));
        assert_eq!(fill_template("Where does XXX work?", "XXX", "Alice Zhang"), "Where does Alice Zhang work?");
        assert_eq!(fill_template("XXXX, cited?", "XXXX", "A for B"), "A for B, cited?");
    }

    #[test]
    fn stub_templates_are_three_and_valid() {
        let lib = default_library();
        let c = alma_mater();
        let stub = phrasebook_backend(std::slice::from_ref(&c)).unwrap();
        let t = generate_templates(&c, &lib, &stub).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].id, format!("{}#v1", c.id));
        assert!(t.iter().all(|x| template_is_valid(&x.text, "publication_info")));
        assert_eq!(generate_templates(&c, &lib, &stub).unwrap(), t);
    }

    #[test]
    fn invalid_template_replies_exhaust_retries() {
        let lib = default_library();
        let c = alma_mater();
        let stub = StubBackend::default().with(&c.id, Stage::Template, "Where did XXX study?\nWhich school?\n");
        assert!(matches!(generate_templates(&c, &lib, &stub), Err(ForgeError::Templates { attempts: 3, .. })));
    }

    #[test]
    fn alma_mater_plan_shape() {
        let lib = default_library();
        let p = compile_plan(&alma_mater(), &lib).unwrap();
        assert_eq!(
            serialize_plan(&p),
            "plan(publication_info: text)\n\
             let search_publication = call searchPublication(publication_info=publication_info)\n\
             let pub_id = search_publication[0].pub_id\n\
             let get_publication = call getPublication(pub_id=pub_id)\n\
             let person_id = get_publication.authors[0].person_id\n\
             let get_person_basic_info = call getPersonBasicInfo(person_id=person_id)\n\
             let answer = get_person_basic_info.education_experience\n\
             return answer\n"
        );
    }

    #[test]
    fn one_hop_plan_is_two_steps() {
        let lib = default_library();
        let c = Combination::new("name", sol(&["searchPerson"], &[]), "organization");
        let p = compile_plan(&c, &lib).unwrap();
        assert_eq!(p.body.len(), 2);
        assert!(matches!(&p.body[0], Step::Call { api, .. } if api == "searchPerson"));
        assert!(matches!(&p.body[1], Step::Select { field, .. } if field == "organization"));
    }

    #[test]
    fn alma_mater_ground_truth_matches_corpus_lookup() {
        let lib = default_library();
        let c = alma_mater();
        let plan = synthesize_plan(&c, &lib, SynthesisMode::Builtin, None).unwrap();
        let stub = phrasebook_backend(std::slice::from_ref(&c)).unwrap();
        let t = &generate_templates(&c, &lib, &stub).unwrap()[0];
        let corpus = corpus();
        let client = LocalClient::new(corpus.clone());
        let inst = instantiate(t, &plan, &corpus, &client, 30, 7).unwrap();
        assert_eq!(inst.queries.len(), 30);
        for q in &inst.queries {
            let title = q.input["publication_info"].as_str().unwrap();
            assert!(q.text.contains(title));
            let p = corpus.publications.values().find(|p| p.title == title).unwrap();
            let first = &corpus.scholars[&p.author_ids[0]];
            assert_eq!(q.ground_truth, json!(first.education_experience));
        }
        assert_eq!(instantiate(t, &plan, &corpus, &client, 30, 7).unwrap(), inst);
    }

    #[test]
    fn exhausted_pool_errors() {
        let lib = default_library();
        let c = Combination::new("organization", sol(&["searchPerson"], &[]), "name");
        let plan = synthesize_plan(&c, &lib, SynthesisMode::Builtin, None).unwrap();
        let stub = phrasebook_backend(std::slice::from_ref(&c)).unwrap();
        let t = &generate_templates(&c, &lib, &stub).unwrap()[0];
        let small = Arc::new(generate_corpus(1, 3, 3).unwrap());
        let client = LocalClient::new(small.clone());
        assert!(matches!(
            instantiate(t, &plan, &small, &client, 30, 1),
            Err(ForgeError::CorpusExhausted { wanted: 30, .. })
        ));
    }

    #[test]
    fn tampered_ground_truth_fails_verification() {
        let lib = default_library();
        let c = alma_mater();
        let plan = synthesize_plan(&c, &lib, SynthesisMode::Builtin, None).unwrap();
        let stub = phrasebook_backend(std::slice::from_ref(&c)).unwrap();
        let t = &generate_templates(&c, &lib, &stub).unwrap()[0];
        let corpus = corpus();
        let client = LocalClient::new(corpus.clone());
        let q = instantiate(t, &plan, &corpus, &client, 1, 3).unwrap().queries.remove(0);
        let mut trip = make_triplet(q, t, &c, &plan);
        assert!(verify_triplet(&trip, &lib, &client).unwrap());
        trip.ground_truth = json!("Nowhere University");
        assert!(!verify_triplet(&trip, &lib, &client).unwrap());
    }

    #[test]
    fn llm_synthesis_parses_fenced_reply() {
        let lib = default_library();
        let c = Combination::new("name", sol(&["searchPerson"], &[]), "organization");
        let reply = "Here you go:\n```\nplan(name: text)\nlet r = call searchPerson(name=name)\nlet o = r[0].organization\nreturn o\n```\n";
        let stub = StubBackend::default().with(&c.id, Stage::Synthesize, reply);
        let t = synthesize_plan(&c, &lib, SynthesisMode::Llm, Some(&stub)).unwrap();
        assert_eq!(t.result_kind, ValueKind::Text);
        let bad = StubBackend::default().with(&c.id, Stage::Synthesize, "plan(name: text)\nreturn nope\n");
        assert!(matches!(synthesize_plan(&c, &lib, SynthesisMode::Llm, Some(&bad)), Err(ForgeError::Synthesis { .. })));
    }

    #[test]
    fn split_floor_per_bucket() {
        let mk = |c: usize, i: usize| Triplet {
            id: format!("c{c}#v1-{i:02}"),
            text: String::new(),
            input: BTreeMap::new(),
            ground_truth: Value::Null,
            solution: vec!["searchPerson".into()],
            hop_links: vec![],
            plan: String::new(),
            hop: 1,
            template_id: String::new(),
            template: String::new(),
            combination_id: format!("c{c}"),
            set_valued: false,
            split: Split::Train,
        };
        let mut ts: Vec<Triplet> = (0..44).flat_map(|c| (0..90).map(move |i| mk(c, i))).collect();
        assert_eq!(ts.len(), 3960);
        assign_splits(&mut ts, 0.2, 42);
        assert_eq!(ts.iter().filter(|t| t.split == Split::Test).count(), 792);
        let first: Vec<Split> = ts.iter().map(|t| t.split).collect();
        assign_splits(&mut ts, 0.2, 42);
        assert_eq!(ts.iter().map(|t| t.split).collect::<Vec<_>>(), first);
        assign_splits(&mut ts, 0.0, 42);
        assert!(ts.iter().all(|t| t.split == Split::Train));
    }
}
