//! API registry: the declarative library of API specs.
//!
//! A registry document is JSON. Every API declares typed inputs and outputs;
//! list-valued outputs may carry element fields and a `pick` annotation that
//! tells plan synthesis how a list collapses to the element that feeds the
//! next hop (first element, best-by-field, or per-element fan-out).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The registry shipped with the crate.
pub const DEFAULT_REGISTRY: &str = include_str!("../registry/default.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("registry parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("library must contain at least one API")]
    Empty,
    #[error("duplicate API name `{0}`")]
    DuplicateApi(String),
    #[error("API `{api}` references undeclared attribute `{attribute}`")]
    UndeclaredAttribute { api: String, attribute: String },
    #[error("unknown API `{0}`")]
    UnknownApi(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    EntityId,
    Scalar,
    Text,
    List,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::EntityId => "entity_id",
            AttributeKind::Scalar => "scalar",
            AttributeKind::Text => "text",
            AttributeKind::List => "list",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "entity_id" => AttributeKind::EntityId,
            "scalar" => AttributeKind::Scalar,
            "text" => AttributeKind::Text,
            "list" => AttributeKind::List,
            _ => return None,
        })
    }
}

impl std::fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a list collapses when its elements feed a later step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pick {
    First,
    Argmax { by: String },
    Argmin { by: String },
    Each,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub linkable: bool,
    #[serde(default)]
    pub description: String,
    /// Only meaningful on inputs.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub required: bool,
    /// Element kind of a scalar list (`kind = list` without `fields`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<AttributeKind>,
    /// Element record fields of a list of records.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<AttributeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick: Option<Pick>,
}

impl AttributeSpec {
    pub fn new(name: &str, kind: AttributeKind) -> Self {
        AttributeSpec {
            name: name.to_string(),
            kind,
            linkable: kind == AttributeKind::EntityId,
            description: String::new(),
            required: true,
            item: None,
            fields: Vec::new(),
            pick: None,
        }
    }

    pub fn is_record_list(&self) -> bool {
        self.kind == AttributeKind::List && !self.fields.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<&AttributeSpec> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub returns_list: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick: Option<Pick>,
    pub inputs: Vec<AttributeSpec>,
    pub outputs: Vec<AttributeSpec>,
}

/// Where an output attribute lives in a response element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputPath<'a> {
    Top(&'a AttributeSpec),
    Nested { list: &'a AttributeSpec, field: &'a AttributeSpec },
}

impl<'a> OutputPath<'a> {
    pub fn attribute(&self) -> &'a AttributeSpec {
        match self {
            OutputPath::Top(a) => a,
            OutputPath::Nested { field, .. } => field,
        }
    }
}

impl ApiSpec {
    pub fn input(&self, name: &str) -> Option<&AttributeSpec> {
        self.inputs.iter().find(|a| a.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&AttributeSpec> {
        self.outputs.iter().find(|a| a.name == name)
    }

    /// Top-level outputs followed by the fields of record-list outputs.
    pub fn flattened_outputs(&self) -> Vec<OutputPath<'_>> {
        let mut out: Vec<OutputPath<'_>> = self.outputs.iter().map(OutputPath::Top).collect();
        for list in self.outputs.iter().filter(|a| a.is_record_list()) {
            out.extend(list.fields.iter().map(|field| OutputPath::Nested { list, field }));
        }
        out
    }

    /// Top-level outputs win over nested fields of the same name.
    pub fn locate_output(&self, name: &str) -> Option<OutputPath<'_>> {
        self.flattened_outputs().into_iter().find(|p| p.attribute().name == name)
    }

    pub fn required_inputs(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.inputs.iter().filter(|a| a.required)
    }

    pub fn effective_pick(&self) -> Pick {
        self.pick.clone().unwrap_or(Pick::First)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiLibrary {
    pub version: String,
    pub apis: Vec<ApiSpec>,
}

impl ApiLibrary {
    pub fn get(&self, name: &str) -> Option<&ApiSpec> {
        self.apis.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ApiSpec, RegistryError> {
        self.get(name).ok_or_else(|| RegistryError::UnknownApi(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.apis.iter().map(|a| a.name.as_str())
    }

    /// Canonical JSON form; `load_registry` of this text yields an equal library.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }
}

pub fn default_library() -> ApiLibrary {
    load_registry(DEFAULT_REGISTRY).expect("bundled registry is valid")
}

pub fn load_registry(document: &str) -> Result<ApiLibrary, RegistryError> {
    let lib: ApiLibrary = serde_json::from_str(document).map_err(|e| RegistryError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if lib.apis.is_empty() {
        return Err(RegistryError::Empty);
    }
    let mut seen = BTreeSet::new();
    for api in &lib.apis {
        if !seen.insert(api.name.as_str()) {
            return Err(RegistryError::DuplicateApi(api.name.clone()));
        }
        check_pick_refs(api)?;
    }
    Ok(lib)
}

fn check_pick_refs(api: &ApiSpec) -> Result<(), RegistryError> {
    let undeclared = |attribute: &str| RegistryError::UndeclaredAttribute {
        api: api.name.clone(),
        attribute: attribute.to_string(),
    };
    if let Some(Pick::Argmax { by } | Pick::Argmin { by }) = &api.pick {
        if api.output(by).is_none() {
            return Err(undeclared(by));
        }
    }
    for out in &api.outputs {
        if let Some(Pick::Argmax { by } | Pick::Argmin { by }) = &out.pick {
            if out.field(by).is_none() {
                return Err(undeclared(by));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub api: String,
    pub attribute: Option<String>,
    pub message: String,
    pub hint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate_library(lib: &ApiLibrary) -> ValidationReport {
    let mut findings = Vec::new();
    let mut push = |api: &str, attribute: Option<&str>, message: &str, hint: Option<&str>| {
        findings.push(Finding {
            api: api.to_string(),
            attribute: attribute.map(str::to_string),
            message: message.to_string(),
            hint: hint.map(str::to_string),
        })
    };

    if lib.apis.is_empty() {
        push("", None, "library must contain at least one API", None);
    }
    let mut names = BTreeSet::new();
    for api in &lib.apis {
        let a = api.name.as_str();
        if a.trim().is_empty() {
            push(a, None, "API name is empty", None);
        }
        if !names.insert(a) {
            push(a, None, "duplicate API name", Some("rename one of the APIs"));
        }
        if api.inputs.is_empty() {
            push(a, None, "API has no inputs", None);
        }
        if api.outputs.is_empty() {
            push(a, None, "API has no outputs", None);
        }
        if api.pick.is_some() && !api.returns_list {
            push(
                a,
                None,
                "pick declared on an API that does not return a list",
                Some("remove `pick` or set returns_list=true"),
            );
        }
        for (side, attrs) in [("input", &api.inputs), ("output", &api.outputs)] {
            let mut seen = BTreeSet::new();
            for attr in attrs.iter() {
                if !seen.insert(attr.name.as_str()) {
                    push(a, Some(&attr.name), &format!("duplicate {side} attribute"), None);
                }
                check_attribute(a, attr, &mut push);
            }
        }
    }
    ValidationReport { findings }
}

fn check_attribute(api: &str, attr: &AttributeSpec, push: &mut impl FnMut(&str, Option<&str>, &str, Option<&str>)) {
    if attr.name.trim().is_empty() {
        push(api, None, "attribute name is empty", None);
    }
    if attr.kind == AttributeKind::EntityId && !attr.linkable {
        push(api, Some(&attr.name), "entity_id attribute is not linkable", Some("set linkable=true"));
    }
    if attr.kind != AttributeKind::List && (!attr.fields.is_empty() || attr.item.is_some()) {
        push(api, Some(&attr.name), "element fields declared on a non-list attribute", Some("set kind=list"));
    }
    if attr.pick.is_some() && !attr.is_record_list() {
        push(api, Some(&attr.name), "pick declared on an attribute that is not a list of records", None);
    }
    if !attr.fields.is_empty() && attr.item.is_some() {
        push(api, Some(&attr.name), "list declares both item kind and record fields", None);
    }
    let mut seen = BTreeSet::new();
    for f in &attr.fields {
        if !seen.insert(f.name.as_str()) {
            push(api, Some(&f.name), "duplicate element field", None);
        }
        check_attribute(api, f, push);
    }
}

fn attr_type(attr: &AttributeSpec) -> String {
    match attr.kind {
        AttributeKind::List if attr.is_record_list() => {
            let fields: Vec<String> = attr.fields.iter().map(|f| format!("{}: {}", f.name, attr_type(f))).collect();
            format!("list of {{{}}}", fields.join(", "))
        }
        AttributeKind::List => format!("list of {}", attr.item.unwrap_or(AttributeKind::Text)),
        k => k.to_string(),
    }
}

/// Deterministic, human-readable description used inside prompts.
pub fn describe_api(lib: &ApiLibrary, name: &str) -> Result<String, RegistryError> {
    let api = lib.require(name)?;
    let mut out = String::new();
    let _ = writeln!(out, "API {}", api.name);
    if !api.description.is_empty() {
        let _ = writeln!(out, "  {}", api.description);
    }
    let _ = writeln!(out, "  inputs:");
    for i in &api.inputs {
        let req = if i.required { "required" } else { "optional" };
        let _ = writeln!(out, "    {}: {} ({}) - {}", i.name, attr_type(i), req, i.description);
    }
    let shape = if api.returns_list { "list of records" } else { "one record" };
    let _ = writeln!(out, "  outputs ({shape}):");
    for o in &api.outputs {
        let _ = writeln!(out, "    {}: {} - {}", o.name, attr_type(o), o.description);
    }
    Ok(out)
}

/// Descriptions of every API, in library order.
pub fn describe_library(lib: &ApiLibrary) -> String {
    lib.apis.iter().map(|a| describe_api(lib, &a.name).expect("name from library")).collect::<Vec<_>>().join("\n")
}
