//! A small entity DSL with a cross-file rule checker and stub generator.
//!
//! The grammar covers entity declarations with inheritance, typed
//! attributes, and module-qualified assignments:
//!
//! ```text
//! entity ::= "entity" ["abstract"] Name ["extends" Name] "{" member* "}"
//! member ::= name ":" TypeName
//!          | name "=" Module "::" value
//! ```
//!
//! `//` comments and blank lines are ignored. Files live in layer folders
//! (`server`, `ui`, `timeslices`); the time-slices layer only permits
//! assigned references. The stub generator expands each entity into a
//! deterministic boilerplate artifact, and `acceptance` reports whether a
//! whole snapshot passes the checker and the generator — the binary
//! toolchain-acceptance signal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffcore::tokenize;
use crate::repofs::{FlatView, RepoSnapshot};

pub const REGISTRY_SCHEMA: &str = "dslbench.registry.v1";

/// Subsystem layer a DSL file belongs to, derived from its path segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Server,
    Ui,
    Timeslices,
}

/// First path segment naming a known layer, if any.
pub fn layer_of(source_key: &str) -> Option<Layer> {
    source_key.split('/').find_map(|segment| match segment {
        "server" => Some(Layer::Server),
        "ui" => Some(Layer::Ui),
        "timeslices" => Some(Layer::Timeslices),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    /// `name: TypeName`
    Typed { type_name: String },
    /// `name = Module::value`
    Assigned { module: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    pub kind: MemberKind,
    pub line: usize,
}

/// One parsed entity declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub name: String,
    pub is_abstract: bool,
    pub parent: Option<String>,
    pub members: Vec<Member>,
    pub source_key: String,
    pub layer: Option<Layer>,
    /// 1-based line of the `entity` keyword.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticCode {
    #[serde(rename = "SYNTAX")]
    Syntax,
    #[serde(rename = "UNKNOWN_TYPE")]
    UnknownType,
    #[serde(rename = "UNKNOWN_PARENT")]
    UnknownParent,
    #[serde(rename = "DUPLICATE")]
    Duplicate,
    #[serde(rename = "LAYER_RULE")]
    LayerRule,
    #[serde(rename = "DANGLING_REF")]
    DanglingRef,
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DiagnosticCode::Syntax => "SYNTAX",
            DiagnosticCode::UnknownType => "UNKNOWN_TYPE",
            DiagnosticCode::UnknownParent => "UNKNOWN_PARENT",
            DiagnosticCode::Duplicate => "DUPLICATE",
            DiagnosticCode::LayerRule => "LAYER_RULE",
            DiagnosticCode::DanglingRef => "DANGLING_REF",
        };
        f.write_str(name)
    }
}

/// One finding, tied to a file and 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub source_key: String,
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    fn error(code: DiagnosticCode, source_key: &str, line: usize, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            source_key: source_key.to_string(),
            line,
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{severity}[{}] {}:{}: {}",
            self.code, self.source_key, self.line, self.message
        )
    }
}

/// Machine-readable diagnostics, one JSON record per line.
pub fn diagnostics_to_jsonl(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for diagnostic in diagnostics {
        out.push_str(&serde_json::to_string(diagnostic).expect("diagnostic serializes"));
        out.push('\n');
    }
    out
}

/// Known primitive types, modules with their values, and externally declared
/// entity names. Lookups are total: every query answers known/unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRegistry {
    pub schema_version: String,
    pub primitive_types: BTreeSet<String>,
    pub modules: BTreeMap<String, BTreeSet<String>>,
    pub entities: BTreeSet<String>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        TypeRegistry {
            schema_version: REGISTRY_SCHEMA.to_string(),
            primitive_types: BTreeSet::new(),
            modules: BTreeMap::new(),
            entities: BTreeSet::new(),
        }
    }

    /// The registry used by fixtures and the book: primitive types
    /// `AttributeType1..=20`, two value modules, and one external base
    /// entity.
    pub fn demo() -> Self {
        let mut registry = TypeRegistry::new();
        for n in 1..=20 {
            registry.primitive_types.insert(format!("AttributeType{n}"));
        }
        registry.modules.insert(
            "FinanceProductTypeModule".to_string(),
            ["type_a", "type_b", "type_c"]
                .into_iter()
                .map(String::from)
                .collect(),
        );
        registry.modules.insert(
            "CategoryType".to_string(),
            ["loan", "lease", "balloon"]
                .into_iter()
                .map(String::from)
                .collect(),
        );
        registry.entities.insert("FinanceProduct".to_string());
        registry
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn knows_primitive(&self, name: &str) -> bool {
        self.primitive_types.contains(name)
    }

    pub fn knows_module_value(&self, module: &str, value: &str) -> bool {
        self.modules
            .get(module)
            .map(|values| values.contains(value))
            .unwrap_or(false)
    }
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self::new()
    }
}

fn is_identifier(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn strip_comment(line: &str) -> &str {
    match line.find("//") {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Parses entity declarations out of one file. Total: any input yields
/// entities plus diagnostics. After a malformed header the parser skips to
/// the next `entity` keyword; malformed member lines are skipped alone.
pub fn parse_dsl(content: &str, source_key: &str) -> (Vec<EntityDecl>, Vec<Diagnostic>) {
    let layer = layer_of(source_key);
    let mut entities = Vec::new();
    let mut diagnostics = Vec::new();
    let mut current: Option<EntityDecl> = None;
    let mut recovering = false;

    for (idx, raw_line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        let tokens = tokenize(line);

        if let Some(entity) = current.as_mut() {
            if tokens == ["}"] {
                entities.push(current.take().unwrap());
                continue;
            }
            match parse_member(&tokens, line_no) {
                Ok(member) => {
                    if entity.members.iter().any(|m| m.name == member.name) {
                        diagnostics.push(Diagnostic::error(
                            DiagnosticCode::Duplicate,
                            source_key,
                            line_no,
                            format!(
                                "member `{}` declared twice in entity `{}`",
                                member.name, entity.name
                            ),
                        ));
                    } else {
                        entity.members.push(member);
                    }
                }
                Err(message) => diagnostics.push(Diagnostic::error(
                    DiagnosticCode::Syntax,
                    source_key,
                    line_no,
                    message,
                )),
            }
            continue;
        }

        if tokens.first() == Some(&"entity") {
            recovering = false;
            match parse_header(&tokens) {
                Ok((decl, closed)) => {
                    let entity = EntityDecl {
                        source_key: source_key.to_string(),
                        layer,
                        line: line_no,
                        ..decl
                    };
                    if closed {
                        entities.push(entity);
                    } else {
                        current = Some(entity);
                    }
                }
                Err(message) => {
                    diagnostics.push(Diagnostic::error(
                        DiagnosticCode::Syntax,
                        source_key,
                        line_no,
                        message,
                    ));
                    recovering = true;
                }
            }
        } else if !recovering {
            diagnostics.push(Diagnostic::error(
                DiagnosticCode::Syntax,
                source_key,
                line_no,
                format!("expected `entity`, found `{line}`"),
            ));
            recovering = true;
        }
    }

    if let Some(entity) = current.take() {
        diagnostics.push(Diagnostic::error(
            DiagnosticCode::Syntax,
            source_key,
            entity.line,
            format!("entity `{}` is never closed", entity.name),
        ));
        entities.push(entity);
    }

    (entities, diagnostics)
}

/// `entity ["abstract"] Name ["extends" Name] "{" ["}"]` on one line.
/// Returns the declaration and whether the body was closed inline.
fn parse_header(tokens: &[&str]) -> Result<(EntityDecl, bool), String> {
    let mut pos = 1;
    let is_abstract = tokens.get(pos) == Some(&"abstract");
    if is_abstract {
        pos += 1;
    }
    let name = match tokens.get(pos) {
        Some(t) if is_identifier(t) => t.to_string(),
        _ => return Err("expected entity name after `entity`".to_string()),
    };
    pos += 1;
    let parent = if tokens.get(pos) == Some(&"extends") {
        pos += 1;
        match tokens.get(pos) {
            Some(t) if is_identifier(t) => {
                pos += 1;
                Some(t.to_string())
            }
            _ => return Err("expected parent name after `extends`".to_string()),
        }
    } else {
        None
    };
    if tokens.get(pos) != Some(&"{") {
        return Err(format!("expected `{{` in declaration of entity `{name}`"));
    }
    pos += 1;
    let closed = match tokens.get(pos) {
        None => false,
        Some(&"}") if pos + 1 == tokens.len() => true,
        Some(extra) => return Err(format!("unexpected `{extra}` after `{{`")),
    };
    Ok((
        EntityDecl {
            name,
            is_abstract,
            parent,
            members: Vec::new(),
            source_key: String::new(),
            layer: None,
            line: 0,
        },
        closed,
    ))
}

fn parse_member(tokens: &[&str], line: usize) -> Result<Member, String> {
    match tokens {
        [name, ":", type_name] if is_identifier(name) && is_identifier(type_name) => Ok(Member {
            name: name.to_string(),
            kind: MemberKind::Typed {
                type_name: type_name.to_string(),
            },
            line,
        }),
        [name, "=", module, ":", ":", value]
            if is_identifier(name) && is_identifier(module) && is_identifier(value) =>
        {
            Ok(Member {
                name: name.to_string(),
                kind: MemberKind::Assigned {
                    module: module.to_string(),
                    value: value.to_string(),
                },
                line,
            })
        }
        _ => Err(format!(
            "expected `name: Type` or `name = Module::value`, found `{}`",
            tokens.join(" ")
        )),
    }
}

/// Parses every `*.dsl` file of the snapshot and runs the cross-file rules:
/// unknown member types, unresolved parents, repository-wide name
/// collisions, typed attributes in the time-slices layer, and dangling
/// module references. All findings are diagnostics, never a failure.
pub fn check_repo(snapshot: &RepoSnapshot, registry: &TypeRegistry) -> Vec<Diagnostic> {
    let flat = snapshot.flatten();
    let mut entities: Vec<EntityDecl> = Vec::new();
    let mut diagnostics: Vec<Diagnostic> = Vec::new();

    for (key, content) in flat.entries() {
        if !key.ends_with(".dsl") {
            continue;
        }
        let (parsed, parse_diags) = parse_dsl(content, key);
        entities.extend(parsed);
        diagnostics.extend(parse_diags);
    }

    let mut first_seen: HashMap<&str, (&str, usize)> = HashMap::new();
    for entity in &entities {
        match first_seen.get(entity.name.as_str()) {
            Some((key, line)) => diagnostics.push(Diagnostic::error(
                DiagnosticCode::Duplicate,
                &entity.source_key,
                entity.line,
                format!(
                    "entity `{}` already declared at {key}:{line}",
                    entity.name
                ),
            )),
            None => {
                first_seen.insert(&entity.name, (&entity.source_key, entity.line));
            }
        }
    }

    let declared: BTreeSet<&str> = entities.iter().map(|e| e.name.as_str()).collect();
    let known_entity = |name: &str| declared.contains(name) || registry.entities.contains(name);

    for entity in &entities {
        if let Some(parent) = &entity.parent {
            if !known_entity(parent) {
                diagnostics.push(Diagnostic::error(
                    DiagnosticCode::UnknownParent,
                    &entity.source_key,
                    entity.line,
                    format!(
                        "entity `{}` extends unknown entity `{parent}`",
                        entity.name
                    ),
                ));
            }
        }
        for member in &entity.members {
            match &member.kind {
                MemberKind::Typed { type_name } => {
                    if !registry.knows_primitive(type_name) && !known_entity(type_name) {
                        diagnostics.push(Diagnostic::error(
                            DiagnosticCode::UnknownType,
                            &entity.source_key,
                            member.line,
                            format!(
                                "attribute type `{type_name}` is unknown to the generator"
                            ),
                        ));
                    }
                    if entity.layer == Some(Layer::Timeslices) {
                        diagnostics.push(Diagnostic::error(
                            DiagnosticCode::LayerRule,
                            &entity.source_key,
                            member.line,
                            format!(
                                "typed attribute `{}` is not allowed in the time-slices layer; only assigned references are permitted",
                                member.name
                            ),
                        ));
                    }
                }
                MemberKind::Assigned { module, value } => {
                    if !registry.knows_module_value(module, value) {
                        diagnostics.push(Diagnostic::error(
                            DiagnosticCode::DanglingRef,
                            &entity.source_key,
                            member.line,
                            format!("reference `{module}::{value}` does not resolve"),
                        ));
                    }
                }
            }
        }
    }

    diagnostics.sort_by(|a, b| {
        (&a.source_key, a.line, a.code).cmp(&(&b.source_key, b.line, b.code))
    });
    diagnostics
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("cannot generate stubs while {} error diagnostic(s) are outstanding", .0.len())]
    OutstandingErrors(Vec<Diagnostic>),
}

/// `attribute1` → `ATTRIBUTE_1`, matching generated-constant conventions.
fn upper_snake(name: &str) -> String {
    let mut out = String::new();
    let mut prev: Option<char> = None;
    for c in name.chars() {
        if let Some(p) = prev {
            let boundary = (p.is_lowercase() && c.is_uppercase())
                || (p.is_alphabetic() && c.is_numeric())
                || (p.is_numeric() && c.is_alphabetic());
            if boundary && p != '_' && c != '_' {
                out.push('_');
            }
        }
        out.extend(c.to_uppercase());
        prev = Some(c);
    }
    out
}

fn camel(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render_stub(entity: &EntityDecl) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "// generated stub for {} (source: {})\n",
        entity.name, entity.source_key
    ));
    let kind = if entity.is_abstract {
        "abstract class"
    } else {
        "class"
    };
    match &entity.parent {
        Some(parent) => out.push_str(&format!("{kind} {} extends {parent} {{\n", entity.name)),
        None => out.push_str(&format!("{kind} {} {{\n", entity.name)),
    }
    for member in &entity.members {
        out.push_str(&format!(
            "    constant PROPERTY_{} = \"{}\"\n",
            upper_snake(&member.name),
            member.name
        ));
    }
    for member in &entity.members {
        if let MemberKind::Typed { type_name } = &member.kind {
            out.push_str(&format!("    field {}: {type_name}\n", member.name));
        }
    }
    for member in &entity.members {
        let accessor = camel(&member.name);
        out.push_str(&format!(
            "    accessor get{accessor} / set{accessor}\n"
        ));
    }
    out.push_str("}\n");
    out
}

/// Expands every entity into a deterministic stub artifact. Output paths
/// mirror source paths under a `generated/` prefix. Refuses to run while
/// error diagnostics are outstanding.
pub fn generate_stubs(
    snapshot: &RepoSnapshot,
    registry: &TypeRegistry,
) -> Result<FlatView, GenerateError> {
    let errors: Vec<Diagnostic> = check_repo(snapshot, registry)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(GenerateError::OutstandingErrors(errors));
    }

    let mut artifacts: Vec<(String, String)> = Vec::new();
    for (key, content) in snapshot.flatten().entries() {
        if !key.ends_with(".dsl") {
            continue;
        }
        let (entities, _) = parse_dsl(content, key);
        let stem = key.strip_suffix(".dsl").unwrap_or(key);
        for entity in &entities {
            artifacts.push((
                format!("generated/{stem}/{}.txt", entity.name),
                render_stub(entity),
            ));
        }
    }
    Ok(FlatView::from_pairs(artifacts))
}

/// Outcome of the toolchain-acceptance check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acceptance {
    Pass,
    Fail(Vec<Diagnostic>),
}

impl Acceptance {
    pub fn passed(&self) -> bool {
        matches!(self, Acceptance::Pass)
    }
}

/// Pass iff the checker reports no errors and stub generation succeeds.
pub fn acceptance(snapshot: &RepoSnapshot, registry: &TypeRegistry) -> Acceptance {
    match generate_stubs(snapshot, registry) {
        Ok(_) => Acceptance::Pass,
        Err(GenerateError::OutstandingErrors(diagnostics)) => Acceptance::Fail(diagnostics),
    }
}
