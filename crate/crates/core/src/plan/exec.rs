use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{BestMode, Expr, Literal, SortOrder, Step, TypedPlan};
use crate::client::{ApiClient, ApiError};
use crate::util::digest_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_calls: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_calls: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub api: String,
    pub args: BTreeMap<String, Value>,
    pub response_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub value: Value,
    pub trace: Vec<TraceEntry>,
    pub api_calls: usize,
    /// Not serialized; timings are reported separately.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ExecErrorKind {
    #[error("API `{api}` failed: {error}")]
    Api {
        api: String,
        #[serde(with = "api_error_text")]
        error: ApiError,
    },
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("call budget of {0} exceeded")]
    CallBudgetExceeded(usize),
    #[error("index {index} out of range for list of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("type error: {0}")]
    Type(String),
    #[error("input mismatch: {0}")]
    Inputs(String),
}

mod api_error_text {
    use super::ApiError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &ApiError, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!(
            "{}|{}",
            e.code(),
            match e {
                ApiError::NotFound(m) | ApiError::BadRequest(m) | ApiError::Transport(m) | ApiError::Protocol(m) => m,
            }
        ))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ApiError, D::Error> {
        let s = String::deserialize(d)?;
        let (code, msg) = s.split_once('|').unwrap_or(("PROTOCOL", &s));
        let msg = msg.to_string();
        Ok(match code {
            "NOT_FOUND" => ApiError::NotFound(msg),
            "BAD_REQUEST" => ApiError::BadRequest(msg),
            "TRANSPORT" => ApiError::Transport(msg),
            _ => ApiError::Protocol(msg),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct ExecError {
    /// Index of the top-level step that failed; `None` for input or result errors.
    pub step: Option<usize>,
    pub kind: ExecErrorKind,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl ExecError {
    pub fn is_transport(&self) -> bool {
        matches!(&self.kind, ExecErrorKind::Api { error, .. } if error.is_transport())
    }
}

type Env = HashMap<String, Value>;

struct Interp<'a> {
    client: &'a dyn ApiClient,
    limits: Limits,
    trace: Vec<TraceEntry>,
}

fn type_err(msg: impl Into<String>) -> ExecErrorKind {
    ExecErrorKind::Type(msg.into())
}

fn eval(env: &Env, e: &Expr) -> Result<Value, ExecErrorKind> {
    match e {
        Expr::Var(v) => env.get(v).cloned().ok_or_else(|| type_err(format!("unbound variable `{v}`"))),
        Expr::Lit(Literal::Int(n)) => Ok(Value::from(*n)),
        Expr::Lit(Literal::Str(s)) => Ok(Value::from(s.clone())),
        Expr::Field { of, field } => select(&eval(env, of)?, field),
        Expr::Index { of, index } => match eval(env, of)? {
            Value::Array(items) if items.is_empty() => {
                Err(ExecErrorKind::EmptySelection(format!("index {index} of an empty list")))
            }
            Value::Array(mut items) => {
                let len = items.len();
                if *index < len {
                    Ok(items.swap_remove(*index))
                } else {
                    Err(ExecErrorKind::IndexOutOfRange { index: *index, len })
                }
            }
            other => Err(type_err(format!("cannot index into {}", kind_name(&other)))),
        },
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "record",
    }
}

/// Field access; over a list it projects every element.
fn select(v: &Value, field: &str) -> Result<Value, ExecErrorKind> {
    match v {
        Value::Object(map) => map.get(field).cloned().ok_or_else(|| type_err(format!("record has no field `{field}`"))),
        Value::Array(items) => items.iter().map(|i| select(i, field)).collect::<Result<Vec<_>, _>>().map(Value::Array),
        other => Err(type_err(format!("cannot select `{field}` from {}", kind_name(other)))),
    }
}

fn list(v: Value, what: &str) -> Result<Vec<Value>, ExecErrorKind> {
    match v {
        Value::Array(items) => Ok(items),
        other => Err(type_err(format!("{what} requires list, found {}", kind_name(&other)))),
    }
}

/// Integers compare numerically, strings case-insensitively.
fn compare(a: &Value, b: &Value) -> Result<Ordering, ExecErrorKind> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(x), Some(y)) => Ok(x.cmp(&y)),
            _ => x
                .as_f64()
                .zip(y.as_f64())
                .and_then(|(x, y)| x.partial_cmp(&y))
                .ok_or_else(|| type_err("incomparable numbers")),
        },
        (Value::String(x), Value::String(y)) => Ok(x.to_lowercase().cmp(&y.to_lowercase())),
        (x, y) => Err(type_err(format!("cannot compare {} with {}", kind_name(x), kind_name(y)))),
    }
}

impl<'a> Interp<'a> {
    fn run(&mut self, body: &[Step], env: &mut Env, top: Option<usize>) -> Result<(), ExecError> {
        for (i, step) in body.iter().enumerate() {
            let at = top.or(Some(i));
            let value = self.step(step, env, at).map_err(|kind| ExecError { step: at, kind })?;
            env.insert(step.bind().to_string(), value);
        }
        Ok(())
    }

    fn step(&mut self, step: &Step, env: &mut Env, at: Option<usize>) -> Result<Value, ExecErrorKind> {
        match step {
            Step::Call { api, args, .. } => {
                let mut evaluated = BTreeMap::new();
                for (name, e) in args {
                    evaluated.insert(name.clone(), eval(env, e)?);
                }
                if self.trace.len() >= self.limits.max_calls {
                    return Err(ExecErrorKind::CallBudgetExceeded(self.limits.max_calls));
                }
                let response = self
                    .client
                    .call(api, &evaluated)
                    .map_err(|error| ExecErrorKind::Api { api: api.clone(), error })?;
                self.trace.push(TraceEntry {
                    api: api.clone(),
                    args: evaluated,
                    response_digest: digest_json(&response),
                });
                Ok(response)
            }
            Step::ForEach { var, over, body, collect, .. } => {
                let items = list(eval(env, over)?, "ForEach")?;
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    let mut inner = env.clone();
                    inner.insert(var.clone(), item);
                    self.run(body, &mut inner, at).map_err(|e| e.kind)?;
                    out.push(eval(&inner, collect)?);
                }
                Ok(Value::Array(out))
            }
            Step::Filter { over, field, cmp, value, .. } => {
                let items = list(eval(env, over)?, "Filter")?;
                let lit = match value {
                    Literal::Int(n) => Value::from(*n),
                    Literal::Str(s) => Value::from(s.clone()),
                };
                let mut out = Vec::new();
                for item in items {
                    if cmp.holds(compare(&select(&item, field)?, &lit)?) {
                        out.push(item);
                    }
                }
                Ok(Value::Array(out))
            }
            Step::SortBy { over, field, order, .. } => {
                let items = list(eval(env, over)?, "SortBy")?;
                let mut keyed =
                    items.into_iter().map(|i| select(&i, field).map(|k| (k, i))).collect::<Result<Vec<_>, _>>()?;
                let mut failure = None;
                keyed.sort_by(|(a, _), (b, _)| {
                    let ord = compare(a, b).unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        Ordering::Equal
                    });
                    match order {
                        SortOrder::Asc => ord,
                        SortOrder::Desc => ord.reverse(),
                    }
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                Ok(Value::Array(keyed.into_iter().map(|(_, i)| i).collect()))
            }
            Step::ArgBest { over, field, mode, .. } => {
                let items = list(eval(env, over)?, "ArgBest")?;
                let mut best: Option<(Value, Value)> = None;
                for item in items {
                    let key = select(&item, field)?;
                    let better = match &best {
                        None => true,
                        Some((k, _)) => {
                            let ord = compare(&key, k)?;
                            match mode {
                                BestMode::Max => ord == Ordering::Greater,
                                BestMode::Min => ord == Ordering::Less,
                            }
                        }
                    };
                    if better {
                        best = Some((key, item));
                    }
                }
                best.map(|(_, item)| item)
                    .ok_or_else(|| ExecErrorKind::EmptySelection(format!("ArgBest over empty list by `{field}`")))
            }
            Step::Take { over, k, .. } => {
                let mut items = list(eval(env, over)?, "Take")?;
                items.truncate(*k);
                Ok(Value::Array(items))
            }
            Step::Select { from, field, .. } => select(&eval(env, from)?, field),
        }
    }
}

/// Runs a checked plan. `inputs` must bind exactly the plan's parameters.
pub fn execute_plan(
    p: &TypedPlan,
    inputs: &BTreeMap<String, Value>,
    client: &dyn ApiClient,
    limits: Limits,
) -> Result<ExecutionResult, ExecError> {
    let start = Instant::now();
    let input_err = |msg: String| ExecError { step: None, kind: ExecErrorKind::Inputs(msg) };
    if limits.max_calls == 0 {
        return Err(input_err("limits.max_calls must be at least 1".into()));
    }
    let mut env = Env::new();
    for param in &p.plan.params {
        let v = inputs.get(&param.name).ok_or_else(|| input_err(format!("missing input `{}`", param.name)))?;
        env.insert(param.name.clone(), v.clone());
    }
    if let Some(extra) = inputs.keys().find(|k| !p.plan.params.iter().any(|pp| &pp.name == *k)) {
        return Err(input_err(format!("unexpected input `{extra}`")));
    }
    let mut interp = Interp { client, limits, trace: Vec::new() };
    interp.run(&p.plan.body, &mut env, None)?;
    let value = eval(&env, &p.plan.result).map_err(|kind| ExecError { step: None, kind })?;
    let api_calls = interp.trace.len();
    Ok(ExecutionResult { value, trace: interp.trace, api_calls, wall_time: start.elapsed() })
}
