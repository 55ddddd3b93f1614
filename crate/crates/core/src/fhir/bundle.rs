use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{FhirError, ResourceEnvelope, ResourceKind};

/// The resources of one document, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bundle {
    pub entries: Vec<ResourceEnvelope>,
    pub source_label: String,
}

impl Bundle {
    pub fn of_kind<'a>(&'a self, kind: &'a ResourceKind) -> impl Iterator<Item = &'a ResourceEnvelope> + 'a {
        self.entries.iter().filter(move |e| &e.kind == kind)
    }

    pub fn find(&self, logical_id: &str) -> Option<&ResourceEnvelope> {
        self.entries.iter().find(|e| e.logical_id == logical_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Deserialize)]
struct EntryShape {
    resource: Option<Box<RawValue>>,
}

/// Parses a FHIR JSON document into a [`Bundle`].
///
/// Accepts a `Bundle` (with or without `entry`) or a single bare resource.
/// Every `entry[*].resource` becomes exactly one envelope; entries without a
/// `resource` member are skipped.
pub fn parse_bundle(bytes: &[u8], source_label: &str) -> Result<Bundle, FhirError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| FhirError::MalformedDocument(format!("not UTF-8: {e}")))?;
    let top: BTreeMap<String, Box<RawValue>> = serde_json::from_str(text)
        .map_err(|e| FhirError::MalformedDocument(e.to_string()))?;

    let entries = if let Some(entry) = top.get("entry") {
        let items: Vec<Box<RawValue>> = serde_json::from_str(entry.get())
            .map_err(|_| FhirError::MalformedDocument("`entry` is not an array".into()))?;
        items
            .iter()
            .filter_map(|item| serde_json::from_str::<EntryShape>(item.get()).ok())
            .filter_map(|shape| shape.resource)
            .filter(|raw| raw.get() != "null")
            .map(ResourceEnvelope::from_raw)
            .collect()
    } else {
        match top.get("resourceType").map(|rt| serde_json::from_str::<String>(rt.get())) {
            Some(Ok(rt)) if rt == "Bundle" => Vec::new(),
            Some(Ok(_)) => {
                let raw = RawValue::from_string(text.trim().to_string())
                    .map_err(|e| FhirError::MalformedDocument(e.to_string()))?;
                vec![ResourceEnvelope::from_raw(raw)]
            }
            _ => {
                return Err(FhirError::MalformedDocument(
                    "neither a bundle with `entry` nor a single resource".into(),
                ))
            }
        }
    };

    tracing::debug!(label = source_label, entries = entries.len(), "parsed bundle");
    Ok(Bundle {
        entries,
        source_label: source_label.to_string(),
    })
}
