//! The `get_resources` tool: schema and dispatch.

use serde::Serialize;
use serde_json::{json, Value};

use crate::llm::{ToolCallRequest, ToolSpec};
use crate::pipeline::Catalog;
use crate::summarizer::Summarizer;

pub const GET_RESOURCES: &str = "get_resources";

/// The tool spec offered to the model. The allowed names are every rendered
/// identifier followed by the kinds present in the catalog.
pub fn get_resources_spec(catalog: &Catalog) -> ToolSpec {
    let mut allowed: Vec<String> = catalog.rendered_identifiers().into_iter().map(str::to_string).collect();
    allowed.extend(catalog.kinds().iter().map(ToString::to_string));
    ToolSpec::new(
        GET_RESOURCES,
        "Retrieve short summaries of the patient's health records. Pass exact names from the allowed \
         values; a bare resource type returns every record of that type.",
        json!({
            "type": "object",
            "properties": {
                "names": {
                    "type": "array",
                    "description": "Records to retrieve, as \"type | name | date\" or a resource type.",
                    "items": {"type": "string", "enum": allowed}
                }
            },
            "required": ["names"]
        }),
    )
    .expect("static tool name is valid")
}

#[derive(Debug, Serialize)]
struct Found {
    name: String,
    identifier: String,
    summary: String,
}

#[derive(Debug, Serialize)]
struct Missing {
    name: String,
    error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

/// Runs one tool call and returns the tool message content. Problems the
/// model can fix (unknown names, bad arguments) are reported in the content
/// instead of failing the turn.
pub fn dispatch(call: &ToolCallRequest, catalog: &Catalog, summarizer: &Summarizer, locale: &str) -> String {
    if call.tool_name != GET_RESOURCES {
        return json!({
            "error": "unknown_tool",
            "message": format!("no tool named {:?}; use {GET_RESOURCES}", call.tool_name)
        })
        .to_string();
    }
    let names = match parse_names(&call.arguments) {
        Ok(names) => names,
        Err(message) => return json!({"error": "invalid_arguments", "message": message}).to_string(),
    };

    let mut results = Vec::new();
    let mut errors = Vec::new();
    for name in names {
        let Some((_, entries)) = catalog.resolve(&name) else {
            errors.push(Missing {
                name,
                error: "no_such_resource",
                message: None,
            });
            continue;
        };
        for entry in entries {
            match summarizer.summarize_entry(entry, locale) {
                Ok(summary) => results.push(Found {
                    name: name.clone(),
                    identifier: entry.rendered.clone(),
                    summary: summary.summary_text,
                }),
                Err(e) => errors.push(Missing {
                    name: entry.rendered.clone(),
                    error: "summary_unavailable",
                    message: Some(e.to_string()),
                }),
            }
        }
    }
    json!({"results": results, "errors": errors}).to_string()
}

fn parse_names(arguments: &Value) -> Result<Vec<String>, String> {
    let names = match arguments {
        Value::Object(map) => map.get("names").ok_or("missing \"names\"")?,
        Value::String(raw) => return Err(format!("arguments are not a JSON object: {raw}")),
        _ => return Err("arguments must be an object with a \"names\" array".into()),
    };
    match names {
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| "names must be strings".to_string()))
            .collect(),
        Value::String(single) => Ok(vec![single.clone()]),
        _ => Err("\"names\" must be an array of strings".into()),
    }
}
