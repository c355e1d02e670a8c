//! Grading: outcome classification, answer normalization and the hop-weighted
//! score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::AgentTranscript;
use crate::forge::Triplet;
use crate::llm::{LlmBackend, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Solution and answer both match.
    EM,
    /// Different solution, correct answer.
    DS,
    /// Wrong solution, wrong answer.
    WS,
    /// Correct solution, wrong answer.
    WC,
    /// Plan failed to parse or execute.
    EE,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [Outcome::EM, Outcome::DS, Outcome::WS, Outcome::WC, Outcome::EE];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::EM => "EM",
            Outcome::DS => "DS",
            Outcome::WS => "WS",
            Outcome::WC => "WC",
            Outcome::EE => "EE",
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no text to extract an answer from")]
    EmptyText,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("weights must be positive: hop {hop} has {weight}")]
    BadWeight { hop: usize, weight: f64 },
    #[error("no gold record for transcript {0}")]
    MissingGold(String),
}

fn numeric_string(s: &str) -> Option<i64> {
    let t = s.trim();
    let digits = t.strip_prefix('-').unwrap_or(t);
    if digits.is_empty() {
        return None;
    }
    let plain = digits.chars().all(|c| c.is_ascii_digit());
    let grouped = {
        let groups: Vec<&str> = digits.split(',').collect();
        groups.len() > 1
            && (1..=3).contains(&groups[0].len())
            && groups.iter().all(|g| !g.is_empty() && g.chars().all(|c| c.is_ascii_digit()))
            && groups[1..].iter().all(|g| g.len() == 3)
    };
    if plain || grouped {
        t.replace(',', "").parse().ok()
    } else {
        None
    }
}

/// Trimmed, case-folded strings; numeric-looking strings become integers.
pub fn normalize_answer(v: &Value) -> Value {
    match v {
        Value::String(s) => match numeric_string(s) {
            Some(n) => Value::from(n),
            None => Value::String(s.trim().to_lowercase()),
        },
        Value::Number(n) => match n.as_i64() {
            Some(i) => Value::from(i),
            None => match n.as_f64() {
                Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Value::from(f as i64),
                _ => v.clone(),
            },
        },
        Value::Array(items) => Value::Array(items.iter().map(normalize_answer).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), normalize_answer(v))).collect()),
        other => other.clone(),
    }
}

/// Equality after normalization. Set-valued golds ignore list order.
pub fn answers_equal(predicted: &Value, gold: &Value, set_valued: bool) -> bool {
    let (p, g) = (normalize_answer(predicted), normalize_answer(gold));
    match (&p, &g) {
        (Value::Array(a), Value::Array(b)) if set_valued => {
            let key = |v: &Value| serde_json::to_string(v).expect("JSON values always serialize");
            let mut a: Vec<String> = a.iter().map(key).collect();
            let mut b: Vec<String> = b.iter().map(key).collect();
            a.sort();
            b.sort();
            a == b
        }
        _ => p == g,
    }
}

/// What grading needs from any transcript, ours or a baseline's.
#[derive(Debug, Clone, PartialEq)]
pub struct Graded<'a> {
    pub solution: Option<&'a [String]>,
    /// `None` means the plan did not run to completion.
    pub answer: Option<&'a Value>,
}

/// EE first, then answer correctness, then solution match.
pub fn classify_parts(g: &Graded<'_>, gold: &Triplet) -> Outcome {
    let Some(answer) = g.answer else {
        return Outcome::EE;
    };
    let same_solution = g.solution.is_some_and(|s| s == gold.solution.as_slice());
    match (answers_equal(answer, &gold.ground_truth, gold.set_valued), same_solution) {
        (true, true) => Outcome::EM,
        (true, false) => Outcome::DS,
        (false, true) => Outcome::WC,
        (false, false) => Outcome::WS,
    }
}

pub fn classify(t: &AgentTranscript, gold: &Triplet) -> Outcome {
    let answer = if t.executed_ok() { t.answer_value.as_ref() } else { None };
    classify_parts(&Graded { solution: t.predicted_solution.as_deref(), answer }, gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWeights {
    /// Weight per hop; hops without an entry weigh their hop count.
    pub per_hop: BTreeMap<usize, f64>,
}

impl Default for EvalWeights {
    fn default() -> Self {
        EvalWeights { per_hop: BTreeMap::from([(1, 1.0), (2, 2.0), (3, 3.0)]) }
    }
}

impl EvalWeights {
    pub fn from_list(ws: &[f64]) -> Result<Self, EvalError> {
        let per_hop: BTreeMap<usize, f64> = ws.iter().enumerate().map(|(i, &w)| (i + 1, w)).collect();
        let w = EvalWeights { per_hop };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self.per_hop.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            Some((&hop, &weight)) => Err(EvalError::BadWeight { hop, weight }),
            None => Ok(()),
        }
    }

    pub fn weight(&self, hop: usize) -> f64 {
        self.per_hop.get(&hop).copied().unwrap_or(hop as f64)
    }

    pub fn scaled(&self, c: f64) -> Self {
        EvalWeights { per_hop: self.per_hop.iter().map(|(&h, &w)| (h, w * c)).collect() }
    }
}

/// Σ w_h·ACC_h / Σ w_h over the hops present; `None` when no hop is present.
pub fn score_from_acc(acc: &BTreeMap<usize, f64>, weights: &EvalWeights) -> Option<f64> {
    if acc.is_empty() {
        return None;
    }
    let (num, den) = acc.iter().fold((0.0, 0.0), |(n, d), (&h, &a)| (n + weights.weight(h) * a, d + weights.weight(h)));
    Some(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRow {
    pub n: usize,
    pub counts: BTreeMap<Outcome, usize>,
    /// Percentages per outcome.
    pub pct: BTreeMap<Outcome, f64>,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub template_id: String,
    pub hop: usize,
    pub n: usize,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub groups: usize,
    pub mean: f64,
    /// Population standard deviation across groups.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_hop: BTreeMap<usize, HopRow>,
    pub score: Option<f64>,
    pub weights: EvalWeights,
    /// Hops among 1..=3 without any graded sample; the score skips them.
    pub missing_hops: Vec<usize>,
    pub groups: Vec<GroupRow>,
    /// ACC across template groups, per hop.
    pub group_stats: BTreeMap<usize, MeanStd>,
    pub total: usize,
    pub notes: Vec<String>,
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len();
    if n == 0 {
        return MeanStd { groups: 0, mean: 0.0, std: 0.0 };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    MeanStd { groups: n, mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedItem {
    pub outcome: Outcome,
    pub hop: usize,
    pub template_id: String,
}

pub fn aggregate(items: &[GradedItem], weights: &EvalWeights) -> EvalReport {
    let mut by_hop: BTreeMap<usize, BTreeMap<Outcome, usize>> = BTreeMap::new();
    let mut by_group: BTreeMap<(usize, String), (usize, usize)> = BTreeMap::new();
    for it in items {
        *by_hop.entry(it.hop).or_default().entry(it.outcome).or_default() += 1;
        let g = by_group.entry((it.hop, it.template_id.clone())).or_default();
        g.0 += 1;
        if matches!(it.outcome, Outcome::EM | Outcome::DS) {
            g.1 += 1;
        }
    }
    let per_hop: BTreeMap<usize, HopRow> = by_hop
        .into_iter()
        .map(|(hop, mut counts)| {
            for o in Outcome::ALL {
                counts.entry(o).or_insert(0);
            }
            let n: usize = counts.values().sum();
            let pct_map: BTreeMap<Outcome, f64> = counts.iter().map(|(&o, &k)| (o, pct(k, n))).collect();
            let acc = pct_map[&Outcome::EM] + pct_map[&Outcome::DS];
            (hop, HopRow { n, counts, pct: pct_map, acc })
        })
        .collect();
    let acc: BTreeMap<usize, f64> = per_hop.iter().map(|(&h, r)| (h, r.acc)).collect();
    let groups: Vec<GroupRow> = by_group
        .into_iter()
        .map(|((hop, template_id), (n, ok))| GroupRow { template_id, hop, n, acc: pct(ok, n) })
        .collect();
    let group_stats = per_hop
        .keys()
        .map(|&h| {
            let xs: Vec<f64> = groups.iter().filter(|g| g.hop == h).map(|g| g.acc).collect();
            (h, mean_std(&xs))
        })
        .collect();
    let missing_hops: Vec<usize> = (1..=3).filter(|h| !per_hop.contains_key(h)).collect();
    let mut notes = Vec::new();
    if !missing_hops.is_empty() {
        notes.push(format!("score computed without hops {missing_hops:?}, which have no samples"));
    }
    EvalReport {
        score: score_from_acc(&acc, weights),
        per_hop,
        weights: weights.clone(),
        missing_hops,
        groups,
        group_stats,
        total: items.len(),
        notes,
    }
}

/// Grades transcripts against gold records matched by id.
pub fn grade(
    transcripts: &[AgentTranscript],
    gold: &[Triplet],
    weights: &EvalWeights,
) -> Result<EvalReport, EvalError> {
    let by_id: BTreeMap<&str, &Triplet> = gold.iter().map(|t| (t.id.as_str(), t)).collect();
    let items = transcripts
        .iter()
        .map(|t| {
            let g = by_id.get(t.id.as_str()).ok_or_else(|| EvalError::MissingGold(t.id.clone()))?;
            Ok(GradedItem { outcome: classify(t, g), hop: g.hop, template_id: g.template_id.clone() })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(aggregate(&items, weights))
}

/// Asks a model for the precise value in free text, then normalizes it.
pub fn extract_answer(free_text: &str, extract_prompt: &str, llm: &dyn LlmBackend) -> Result<Value, EvalError> {
    if free_text.trim().is_empty() {
        return Err(EvalError::EmptyText);
    }
    let prompt = crate::llm::compose(crate::llm::Stage::Extract, extract_prompt, free_text);
    let reply = llm.complete(&prompt)?;
    let reply = reply.trim();
    let value = serde_json::from_str::<Value>(reply).unwrap_or_else(|_| Value::String(reply.to_string()));
    Ok(normalize_answer(&value))
}

/// One API call in a baseline's trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCall {
    pub api: String,
    #[serde(default = "yes")]
    pub ok: bool,
}

fn yes() -> bool {
    true
}

/// A baseline transcript: a call trajectory and a free-text answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalTranscript {
    pub id: String,
    #[serde(default)]
    pub calls: Vec<ExternalCall>,
    #[serde(default)]
    pub answer_text: Option<String>,
    #[serde(default)]
    pub answer_value: Option<Value>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Distinct successful APIs in order of first occurrence.
pub fn solution_from_calls(calls: &[ExternalCall]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in calls.iter().filter(|c| c.ok) {
        if !out.contains(&c.api) {
            out.push(c.api.clone());
        }
    }
    out
}

pub const BASELINE_SOLUTION_RULE: &str =
    "baseline solutions are the distinct successful API calls in order of first occurrence";

pub fn classify_external(
    t: &ExternalTranscript,
    gold: &Triplet,
    extract_prompt: &str,
    llm: Option<&dyn LlmBackend>,
) -> Outcome {
    if t.error.is_some() {
        return Outcome::EE;
    }
    let value = match (&t.answer_value, &t.answer_text, llm) {
        (Some(v), _, _) => Some(v.clone()),
        (None, Some(text), Some(llm)) => extract_answer(text, extract_prompt, llm).ok(),
        _ => None,
    };
    let solution = solution_from_calls(&t.calls);
    classify_parts(&Graded { solution: Some(&solution), answer: value.as_ref() }, gold)
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Table layout: one row per hop with DS/WS/WC/EE/EM/ACC, then the score.
pub fn format_table(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "hop", "n", "DS", "WS", "WC", "EE", "EM", "ACC"
    );
    for (hop, row) in &r.per_hop {
        let p = |o: Outcome| fmt2(row.pct[&o]);
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            hop,
            row.n,
            p(Outcome::DS),
            p(Outcome::WS),
            p(Outcome::WC),
            p(Outcome::EE),
            p(Outcome::EM),
            fmt2(row.acc)
        );
    }
    let _ = writeln!(out, "score {}", r.score.map(fmt2).unwrap_or_else(|| "undefined".into()));
    for (hop, s) in &r.group_stats {
        let _ =
            writeln!(out, "hop {hop} template ACC mean {} std {} over {} groups", fmt2(s.mean), fmt2(s.std), s.groups);
    }
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

pub fn format_csv(r: &EvalReport) -> String {
    let mut out = String::from("hop,n,EM,DS,WS,WC,EE,ACC,acc_group_mean,acc_group_std\n");
    for (hop, row) in &r.per_hop {
        let s = &r.group_stats[hop];
        let _ = writeln!(
            out,
            "{hop},{},{},{},{},{},{},{},{},{}",
            row.n,
            fmt2(row.pct[&Outcome::EM]),
            fmt2(row.pct[&Outcome::DS]),
            fmt2(row.pct[&Outcome::WS]),
            fmt2(row.pct[&Outcome::WC]),
            fmt2(row.pct[&Outcome::EE]),
            fmt2(row.acc),
            fmt2(s.mean),
            fmt2(s.std)
        );
    }
    let _ = writeln!(out, "score,,,,,,,{},,", r.score.map(fmt2).unwrap_or_default());
    out
}
