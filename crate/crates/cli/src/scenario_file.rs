//! Scenario files: TOML documents mirroring the `Scenario` type.

use std::ops::Range;
use std::path::Path;

use adaptbf_core::scenario::Scenario;
use adaptbf_core::ScenarioError;
use toml_edit::{ImDocument, Item, Table, Value};

use crate::error::{CliError, ErrorCode, Result};

pub fn load(path: &Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&src, &path.display().to_string())
}

/// Parses and validates a scenario. Errors carry `origin:line:col`.
pub fn parse(src: &str, origin: &str) -> Result<Scenario> {
    let de = toml::Deserializer::new(src);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let at = inner
            .span()
            .map(|s| location(src, s.start))
            .unwrap_or_else(|| "?".to_owned());
        let key = if path.is_empty() || path == "." {
            String::new()
        } else {
            format!(" at `{path}`")
        };
        CliError::new(
            ErrorCode::Parse,
            format!("{origin}:{at}{key}: {}", inner.message()),
        )
    })?;
    scenario
        .validate()
        .map_err(|err| validation_error(src, origin, &err))?;
    Ok(scenario)
}

pub fn to_toml(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenarios always serialize")
}

fn validation_error(src: &str, origin: &str, err: &ScenarioError) -> CliError {
    let ScenarioError::Invalid { field, reason } = err;
    let at = span_of(src, field)
        .map(|s| location(src, s.start))
        .unwrap_or_else(|| "?".to_owned());
    CliError::new(
        ErrorCode::Invalid,
        format!("{origin}:{at} at `{field}`: {reason}"),
    )
}

fn location(src: &str, offset: usize) -> String {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    format!("{line}:{col}")
}

/// Byte span of the value at a dotted key path such as `jobs[1].nodes`,
/// falling back to the closest enclosing item that has one.
fn span_of(src: &str, path: &str) -> Option<Range<usize>> {
    let doc = ImDocument::parse(src).ok()?;
    let mut best = None;
    let mut node = Node::Item(doc.as_item());
    for segment in path.split('.') {
        let (key, index) = match segment.split_once('[') {
            Some((k, rest)) => (k, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (segment, None),
        };
        node = node.child(key)?;
        best = node.span().or(best);
        if let Some(i) = index {
            node = node.index(i)?;
            best = node.span().or(best);
        }
    }
    best
}

#[derive(Clone, Copy)]
enum Node<'a> {
    Item(&'a Item),
    Table(&'a Table),
    Value(&'a Value),
}

impl<'a> Node<'a> {
    fn child(self, key: &str) -> Option<Node<'a>> {
        match self {
            Node::Item(Item::Table(t)) | Node::Table(t) => t.get(key).map(Node::Item),
            Node::Item(Item::Value(Value::InlineTable(t))) | Node::Value(Value::InlineTable(t)) => {
                t.get(key).map(Node::Value)
            }
            _ => None,
        }
    }

    fn index(self, i: usize) -> Option<Node<'a>> {
        match self {
            Node::Item(Item::ArrayOfTables(a)) => a.get(i).map(Node::Table),
            Node::Item(Item::Value(Value::Array(a))) | Node::Value(Value::Array(a)) => {
                a.get(i).map(Node::Value)
            }
            _ => None,
        }
    }

    fn span(self) -> Option<Range<usize>> {
        match self {
            Node::Item(Item::Value(v)) | Node::Value(v) => v.span(),
            Node::Item(Item::Table(t)) | Node::Table(t) => t.span(),
            Node::Item(Item::ArrayOfTables(a)) => a.span(),
            Node::Item(Item::None) => None,
        }
    }
}
