use std::collections::HashMap;

use super::{compute_identifier, FilterConfig};
use crate::fhir::ResourceEnvelope;

pub(crate) fn medication_kept(envelope: &ResourceEnvelope, config: &FilterConfig) -> bool {
    let status_ok = envelope
        .status
        .as_ref()
        .is_some_and(|s| config.medication_statuses_kept.contains(s));
    let category_ok = envelope
        .category_codes
        .iter()
        .any(|c| config.medication_categories_kept.contains(&c.code));
    status_ok && category_ok
}

/// Keeps medication requests whose status and category are both allowed,
/// in input order.
pub fn filter_medications<'a, I>(envelopes: I, config: &FilterConfig) -> Vec<&'a ResourceEnvelope>
where
    I: IntoIterator<Item = &'a ResourceEnvelope>,
{
    envelopes
        .into_iter()
        .filter(|e| medication_kept(e, config))
        .collect()
}

fn group_key(envelope: &ResourceEnvelope) -> String {
    match &envelope.primary_code {
        Some(code) => format!("code:{}", code.code),
        None => format!("name:{}", compute_identifier(envelope).display_name),
    }
}

/// Reduces envelopes to the most recent one per primary code (display name
/// when uncoded). Output is newest first; ties keep input order.
pub fn latest_per_code<'a, I>(envelopes: I) -> Vec<&'a ResourceEnvelope>
where
    I: IntoIterator<Item = &'a ResourceEnvelope>,
{
    let mut best: HashMap<String, (usize, &'a ResourceEnvelope)> = HashMap::new();
    for (position, envelope) in envelopes.into_iter().enumerate() {
        best.entry(group_key(envelope))
            .and_modify(|slot| {
                if envelope.effective_date > slot.1.effective_date {
                    *slot = (position, envelope);
                }
            })
            .or_insert((position, envelope));
    }
    let mut kept: Vec<_> = best.into_values().collect();
    kept.sort_by(|(pa, a), (pb, b)| b.effective_date.cmp(&a.effective_date).then(pa.cmp(pb)));
    kept.into_iter().map(|(_, e)| e).collect()
}
