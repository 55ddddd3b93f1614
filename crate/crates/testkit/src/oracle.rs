//! Brute-force reference answers computed straight from bundle JSON.

use serde_json::Value;

/// Resources as the walker sees them: one per entry whose `resource`
/// member is present and not null.
pub fn resources(bundle: &Value) -> Vec<&Value> {
    match bundle.get("entry") {
        Some(Value::Array(entries)) => entries
            .iter()
            .filter_map(|e| e.as_object())
            .filter_map(|e| e.get("resource"))
            .filter(|r| !r.is_null())
            .collect(),
        _ if bundle.get("resourceType").and_then(Value::as_str) == Some("Bundle") => Vec::new(),
        _ => vec![bundle],
    }
}

pub fn count_entries(bundle: &Value) -> usize {
    resources(bundle).len()
}

fn of_type<'a>(bundle: &'a Value, resource_type: &str) -> Vec<&'a Value> {
    resources(bundle)
        .into_iter()
        .filter(|r| r.get("resourceType").and_then(Value::as_str) == Some(resource_type))
        .collect()
}

fn id(resource: &Value) -> String {
    resource["id"].as_str().unwrap_or_default().to_string()
}

/// Ids of MedicationRequests with an allowed status and at least one
/// allowed category code, in document order.
pub fn kept_medication_ids(bundle: &Value, statuses: &[&str], categories: &[&str]) -> Vec<String> {
    of_type(bundle, "MedicationRequest")
        .into_iter()
        .filter(|m| {
            let status_ok = m["status"].as_str().is_some_and(|s| statuses.contains(&s));
            let category_ok = m["category"].as_array().is_some_and(|cats| {
                cats.iter().any(|c| {
                    c["coding"].as_array().is_some_and(|codings| {
                        codings.iter().any(|x| x["code"].as_str().is_some_and(|code| categories.contains(&code)))
                    })
                })
            });
            status_ok && category_ok
        })
        .map(id)
        .collect()
}

/// For resources whose date field holds same-format timestamps: the ids of
/// the most recent resource per first coding code, newest first. An undated
/// resource loses to any dated one; among equal dates the earliest in the
/// document wins and keeps its place.
pub fn latest_per_code_ids(bundle: &Value, resource_type: &str, date_field: &str) -> Vec<String> {
    let items: Vec<(usize, String, Option<String>, String)> = of_type(bundle, resource_type)
        .into_iter()
        .enumerate()
        .map(|(pos, r)| {
            let code = r["code"]["coding"][0]["code"].as_str().unwrap_or_default().to_string();
            let date = r[date_field].as_str().map(str::to_string);
            (pos, code, date, id(r))
        })
        .collect();
    let mut kept: Vec<&(usize, String, Option<String>, String)> = items
        .iter()
        .filter(|(pos, code, date, _)| {
            items.iter().all(|(other_pos, other_code, other_date, _)| {
                other_code != code || other_date < date || (other_date == date && other_pos >= pos)
            })
        })
        .collect();
    kept.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    kept.into_iter().map(|k| k.3.clone()).collect()
}
