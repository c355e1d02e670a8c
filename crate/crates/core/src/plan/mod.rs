//! A small line-oriented plan language for API calling programs.
//!
//! ```text
//! plan(name: text)
//! let people = call searchPerson(name=name)
//! let pubs = call getPersonPubs(person_id=people[0].person_id)
//! let best = argmax pubs by num_citation
//! let answer = best.title
//! return answer
//! ```
//!
//! Plans are parsed into [`Plan`], statically checked against an
//! [`ApiLibrary`](crate::registry::ApiLibrary) into a [`TypedPlan`], and run
//! by [`execute_plan`] against any [`ApiClient`](crate::client::ApiClient).

mod check;
mod exec;
mod parse;
mod print;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::registry::AttributeKind;

pub use check::{check_plan, FindingCode, PlanFinding, TypedPlan, ValueKind};
pub use exec::{execute_plan, ExecError, ExecErrorKind, ExecutionResult, Limits, TraceEntry};
pub use parse::{parse_plan, PlanParseError, RESERVED_WORDS};
pub use print::serialize_plan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: AttributeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub params: Vec<Param>,
    pub body: Vec<Step>,
    pub result: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Var(String),
    Lit(Literal),
    Field { of: Box<Expr>, field: String },
    Index { of: Box<Expr>, index: usize },
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn field(self, field: &str) -> Self {
        Expr::Field { of: Box::new(self), field: field.to_string() }
    }

    pub fn index(self, index: usize) -> Self {
        Expr::Index { of: Box::new(self), index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestMode {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    Call { bind: String, api: String, args: BTreeMap<String, Expr> },
    ForEach { bind: String, var: String, over: Expr, body: Vec<Step>, collect: Expr },
    Filter { bind: String, over: Expr, field: String, cmp: CmpOp, value: Literal },
    SortBy { bind: String, over: Expr, field: String, order: SortOrder },
    ArgBest { bind: String, over: Expr, field: String, mode: BestMode },
    Take { bind: String, over: Expr, k: usize },
    Select { bind: String, from: Expr, field: String },
}

impl Step {
    pub fn bind(&self) -> &str {
        match self {
            Step::Call { bind, .. }
            | Step::ForEach { bind, .. }
            | Step::Filter { bind, .. }
            | Step::SortBy { bind, .. }
            | Step::ArgBest { bind, .. }
            | Step::Take { bind, .. }
            | Step::Select { bind, .. } => bind,
        }
    }
}

impl Plan {
    /// APIs called by the plan, in textual order (loop bodies inline).
    pub fn called_apis(&self) -> Vec<String> {
        fn walk(steps: &[Step], out: &mut Vec<String>) {
            for s in steps {
                match s {
                    Step::Call { api, .. } => out.push(api.clone()),
                    Step::ForEach { body, .. } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}
