use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Expr, Literal, Plan, Step};
use crate::registry::{ApiLibrary, ApiSpec, AttributeKind, AttributeSpec};

const MAX_LOOP_DEPTH: usize = 2;

/// Static kind of a plan value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Text,
    Int,
    Id,
    List(Box<ValueKind>),
    Record(BTreeMap<String, ValueKind>),
    /// Unknown; produced after an error so findings do not cascade.
    Any,
}

impl ValueKind {
    pub fn of_attribute(attr: &AttributeSpec) -> Self {
        match attr.kind {
            AttributeKind::EntityId => ValueKind::Id,
            AttributeKind::Scalar => ValueKind::Int,
            AttributeKind::Text => ValueKind::Text,
            AttributeKind::List if attr.is_record_list() => ValueKind::List(Box::new(Self::record(&attr.fields))),
            AttributeKind::List => {
                let item = AttributeSpec::new("", attr.item.unwrap_or(AttributeKind::Text));
                ValueKind::List(Box::new(Self::of_attribute(&item)))
            }
        }
    }

    pub fn of_param(kind: AttributeKind) -> Self {
        match kind {
            AttributeKind::EntityId => ValueKind::Id,
            AttributeKind::Scalar => ValueKind::Int,
            AttributeKind::Text => ValueKind::Text,
            AttributeKind::List => ValueKind::List(Box::new(ValueKind::Any)),
        }
    }

    fn record(attrs: &[AttributeSpec]) -> Self {
        ValueKind::Record(attrs.iter().map(|a| (a.name.clone(), Self::of_attribute(a))).collect())
    }

    pub fn of_response(api: &ApiSpec) -> Self {
        let rec = Self::record(&api.outputs);
        if api.returns_list {
            ValueKind::List(Box::new(rec))
        } else {
            rec
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(self, ValueKind::List(_) | ValueKind::Any)
    }

    /// Whether a value of kind `self` may be passed where `expected` is declared.
    /// Ids and text are both strings on the wire and interchange freely.
    pub fn fits(&self, expected: &ValueKind) -> bool {
        use ValueKind::*;
        match (self, expected) {
            (Any, _) | (_, Any) => true,
            (Text | Id, Text | Id) => true,
            (Int, Int) => true,
            (List(a), List(b)) => a.fits(b),
            (Record(_), Record(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Text => f.write_str("text"),
            ValueKind::Int => f.write_str("scalar"),
            ValueKind::Id => f.write_str("entity_id"),
            ValueKind::List(k) => write!(f, "list of {k}"),
            ValueKind::Record(_) => f.write_str("record"),
            ValueKind::Any => f.write_str("any"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingCode {
    UnknownApi,
    MissingArgument,
    KindMismatch,
    UnboundVariable,
    Redefined,
    UnknownField,
    RequiresList,
    NestingTooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanFinding {
    /// Step path, e.g. `2` or `2.0` for the first step inside loop 2.
    pub step: String,
    pub code: FindingCode,
    pub message: String,
}

impl fmt::Display for PlanFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedPlan {
    pub plan: Plan,
    /// Kind of every bound name (params, step binds, loop variables).
    pub kinds: BTreeMap<String, ValueKind>,
    pub result_kind: ValueKind,
}

struct Checker<'a> {
    lib: &'a ApiLibrary,
    findings: Vec<PlanFinding>,
    kinds: BTreeMap<String, ValueKind>,
}

impl<'a> Checker<'a> {
    fn report(&mut self, step: &str, code: FindingCode, message: impl Into<String>) {
        self.findings.push(PlanFinding { step: step.to_string(), code, message: message.into() });
    }

    fn bind(&mut self, step: &str, name: &str, kind: ValueKind) {
        if self.kinds.insert(name.to_string(), kind).is_some() {
            self.report(step, FindingCode::Redefined, format!("variable `{name}` is already defined"));
        }
    }

    fn expr(&mut self, step: &str, scope: &BTreeMap<String, ValueKind>, e: &Expr) -> ValueKind {
        match e {
            Expr::Var(v) => match scope.get(v) {
                Some(k) => k.clone(),
                None => {
                    self.report(step, FindingCode::UnboundVariable, format!("unbound variable `{v}`"));
                    ValueKind::Any
                }
            },
            Expr::Lit(Literal::Int(_)) => ValueKind::Int,
            Expr::Lit(Literal::Str(_)) => ValueKind::Text,
            Expr::Field { of, field } => {
                let base = self.expr(step, scope, of);
                self.field_of(step, &base, field)
            }
            Expr::Index { of, .. } => match self.expr(step, scope, of) {
                ValueKind::List(k) => *k,
                ValueKind::Any => ValueKind::Any,
                other => {
                    self.report(step, FindingCode::RequiresList, format!("indexing requires list, found {other}"));
                    ValueKind::Any
                }
            },
        }
    }

    fn field_of(&mut self, step: &str, base: &ValueKind, field: &str) -> ValueKind {
        match base {
            ValueKind::Record(fields) => match fields.get(field) {
                Some(k) => k.clone(),
                None => {
                    self.report(step, FindingCode::UnknownField, format!("record has no field `{field}`"));
                    ValueKind::Any
                }
            },
            // projection over a list of records
            ValueKind::List(inner) => match self.field_of(step, inner, field) {
                ValueKind::Any => ValueKind::Any,
                k => ValueKind::List(Box::new(k)),
            },
            ValueKind::Any => ValueKind::Any,
            other => {
                self.report(step, FindingCode::KindMismatch, format!("cannot select `{field}` from {other}"));
                ValueKind::Any
            }
        }
    }

    /// Element kind of a list operand, reporting `what requires list` otherwise.
    fn list_elem(&mut self, step: &str, what: &str, kind: ValueKind) -> ValueKind {
        match kind {
            ValueKind::List(k) => *k,
            ValueKind::Any => ValueKind::Any,
            _ => {
                self.report(step, FindingCode::RequiresList, format!("{what} requires list"));
                ValueKind::Any
            }
        }
    }

    fn steps(&mut self, body: &[Step], prefix: &str, scope: &mut BTreeMap<String, ValueKind>, depth: usize) {
        for (i, s) in body.iter().enumerate() {
            let path = if prefix.is_empty() { i.to_string() } else { format!("{prefix}.{i}") };
            let kind = self.step(s, &path, scope, depth);
            self.bind(&path, s.bind(), kind.clone());
            scope.insert(s.bind().to_string(), kind);
        }
    }

    fn step(&mut self, s: &Step, path: &str, scope: &mut BTreeMap<String, ValueKind>, depth: usize) -> ValueKind {
        match s {
            Step::Call { api, args, .. } => {
                let arg_kinds: Vec<(String, ValueKind)> =
                    args.iter().map(|(n, e)| (n.clone(), self.expr(path, scope, e))).collect();
                let Some(spec) = self.lib.get(api) else {
                    self.report(path, FindingCode::UnknownApi, format!("unknown API `{api}`"));
                    return ValueKind::Any;
                };
                for (name, kind) in &arg_kinds {
                    match spec.input(name) {
                        None => self.report(
                            path,
                            FindingCode::KindMismatch,
                            format!("argument `{name}` does not match any input of `{api}`"),
                        ),
                        Some(input) => {
                            let expected = ValueKind::of_attribute(input);
                            if !kind.fits(&expected) {
                                self.report(
                                    path,
                                    FindingCode::KindMismatch,
                                    format!("argument `{name}` of `{api}` expects {expected}, found {kind}"),
                                );
                            }
                        }
                    }
                }
                for req in spec.required_inputs() {
                    if !args.contains_key(&req.name) {
                        self.report(
                            path,
                            FindingCode::MissingArgument,
                            format!("`{api}` requires input `{}`", req.name),
                        );
                    }
                }
                if spec.required_inputs().next().is_none() && !spec.inputs.iter().any(|i| args.contains_key(&i.name)) {
                    let names: Vec<&str> = spec.inputs.iter().map(|i| i.name.as_str()).collect();
                    self.report(
                        path,
                        FindingCode::MissingArgument,
                        format!("`{api}` requires at least one of {}", names.join(", ")),
                    );
                }
                ValueKind::of_response(spec)
            }
            Step::ForEach { var, over, body, collect, .. } => {
                if depth + 1 > MAX_LOOP_DEPTH {
                    self.report(
                        path,
                        FindingCode::NestingTooDeep,
                        format!("foreach nested deeper than {MAX_LOOP_DEPTH}"),
                    );
                }
                let over_kind = self.expr(path, scope, over);
                let elem = self.list_elem(path, "ForEach", over_kind);
                self.bind(path, var, elem.clone());
                let mut inner = scope.clone();
                inner.insert(var.clone(), elem);
                self.steps(body, path, &mut inner, depth + 1);
                let k = self.expr(path, &inner, collect);
                ValueKind::List(Box::new(k))
            }
            Step::Filter { over, field, value, .. } => {
                let over_kind = self.expr(path, scope, over);
                let elem = self.list_elem(path, "Filter", over_kind.clone());
                let fk = self.field_of(path, &elem, field);
                let lit = match value {
                    Literal::Int(_) => ValueKind::Int,
                    Literal::Str(_) => ValueKind::Text,
                };
                if !lit.fits(&fk) {
                    self.report(
                        path,
                        FindingCode::KindMismatch,
                        format!("filter on `{field}` ({fk}) compares against {lit}"),
                    );
                }
                if over_kind.is_list() {
                    over_kind
                } else {
                    ValueKind::Any
                }
            }
            Step::SortBy { over, field, .. } => {
                let over_kind = self.expr(path, scope, over);
                let elem = self.list_elem(path, "SortBy", over_kind.clone());
                let fk = self.field_of(path, &elem, field);
                if matches!(fk, ValueKind::List(_) | ValueKind::Record(_)) {
                    self.report(path, FindingCode::KindMismatch, format!("cannot sort by {fk} field `{field}`"));
                }
                if over_kind.is_list() {
                    over_kind
                } else {
                    ValueKind::Any
                }
            }
            Step::ArgBest { over, field, .. } => {
                let over_kind = self.expr(path, scope, over);
                let elem = self.list_elem(path, "ArgBest", over_kind);
                let fk = self.field_of(path, &elem, field);
                if !fk.fits(&ValueKind::Int) {
                    self.report(
                        path,
                        FindingCode::KindMismatch,
                        format!("ArgBest field `{field}` must be scalar, found {fk}"),
                    );
                }
                elem
            }
            Step::Take { over, .. } => {
                let over_kind = self.expr(path, scope, over);
                let elem = self.list_elem(path, "Take", over_kind);
                ValueKind::List(Box::new(elem))
            }
            Step::Select { from, field, .. } => {
                let base = self.expr(path, scope, from);
                self.field_of(path, &base, field)
            }
        }
    }
}

/// Checks every call, argument, variable and field access. All violations
/// are collected before returning.
pub fn check_plan(p: &Plan, lib: &ApiLibrary) -> Result<TypedPlan, Vec<PlanFinding>> {
    let mut checker = Checker { lib, findings: Vec::new(), kinds: BTreeMap::new() };
    let mut scope = BTreeMap::new();
    for param in &p.params {
        let k = ValueKind::of_param(param.kind);
        checker.bind("params", &param.name, k.clone());
        scope.insert(param.name.clone(), k);
    }
    checker.steps(&p.body, "", &mut scope, 0);
    let result_kind = checker.expr("return", &scope, &p.result);
    if checker.findings.is_empty() {
        Ok(TypedPlan { plan: p.clone(), kinds: checker.kinds, result_kind })
    } else {
        Err(checker.findings)
    }
}
