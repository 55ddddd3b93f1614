use std::collections::{HashMap, HashSet};

use chrono::NaiveDate;
use serde::Serialize;

use super::filter::medication_kept;
use super::{compute_identifier, latest_per_code, FilterConfig, ResourceIdentifier};
use crate::fhir::{patient_demographics, Bundle, FhirError, PatientSummary, ResourceEnvelope, ResourceKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub identifier: ResourceIdentifier,
    pub rendered: String,
    pub envelope: ResourceEnvelope,
}

/// The filtered resources a chat session may request, each under a unique
/// rendered identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    pub patient: PatientSummary,
    /// The Patient resource itself; injected into chats instead of being a
    /// catalog entry.
    pub patient_resource: ResourceEnvelope,
}

/// Catalog ordering of the known kinds; `Other` kinds follow alphabetically.
const KIND_ORDER: [ResourceKind; 9] = [
    ResourceKind::MedicationRequest,
    ResourceKind::AllergyIntolerance,
    ResourceKind::Condition,
    ResourceKind::Observation,
    ResourceKind::DiagnosticReport,
    ResourceKind::Procedure,
    ResourceKind::Immunization,
    ResourceKind::Encounter,
    ResourceKind::CarePlan,
];

pub fn build_catalog(bundle: &Bundle, config: &FilterConfig, reference_date: NaiveDate) -> Result<Catalog, FhirError> {
    let patient = patient_demographics(bundle, reference_date)?;
    let patient_resource = bundle
        .of_kind(&ResourceKind::Patient)
        .next()
        .cloned()
        .ok_or(FhirError::NoPatient)?;

    let position: HashMap<*const ResourceEnvelope, usize> = bundle
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e as *const _, i))
        .collect();
    let doc_index = |e: &ResourceEnvelope| position[&(e as *const _)];

    let mut kinds: Vec<ResourceKind> = KIND_ORDER
        .iter()
        .filter(|k| config.included_kinds.contains(k))
        .cloned()
        .collect();
    kinds.extend(
        config
            .included_kinds
            .iter()
            .filter(|k| matches!(k, ResourceKind::Other(_)))
            .cloned(),
    );

    let mut selected: Vec<&ResourceEnvelope> = Vec::new();
    for kind in &kinds {
        let mut of_kind: Vec<&ResourceEnvelope> = bundle.of_kind(kind).collect();
        if *kind == ResourceKind::MedicationRequest {
            of_kind.retain(|e| medication_kept(e, config));
        }
        if *kind == ResourceKind::Condition && !config.condition_code_denylist.is_empty() {
            of_kind.retain(|e| {
                !e.primary_code
                    .as_ref()
                    .is_some_and(|c| config.condition_code_denylist.contains(&c.code))
            });
        }
        if config.latest_only_kinds.contains(kind) {
            of_kind = latest_per_code(of_kind);
        }
        selected.extend(of_kind);
    }

    if selected.len() > config.max_catalog_entries {
        let excess = selected.len() - config.max_catalog_entries;
        let mut by_age: Vec<usize> = (0..selected.len()).collect();
        // Oldest first; undated entries count as oldest; later catalog positions go first among equals.
        by_age.sort_by(|&a, &b| {
            selected[a]
                .effective_date
                .cmp(&selected[b].effective_date)
                .then(b.cmp(&a))
        });
        let dropped: HashSet<usize> = by_age.into_iter().take(excess).collect();
        selected = selected
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, e)| e)
            .collect();
    }

    let mut identifiers: Vec<ResourceIdentifier> = selected.iter().map(|e| compute_identifier(e)).collect();
    disambiguate(&mut identifiers, &selected.iter().map(|e| doc_index(e)).collect::<Vec<_>>());

    let entries = selected
        .into_iter()
        .zip(identifiers)
        .map(|(envelope, identifier)| CatalogEntry {
            rendered: identifier.render(),
            identifier,
            envelope: envelope.clone(),
        })
        .collect();

    Ok(Catalog {
        entries,
        patient,
        patient_resource,
    })
}

/// Appends ` #2`, ` #3`, ... to display names whose rendered identifiers
/// collide, numbering in document order.
fn disambiguate(identifiers: &mut [ResourceIdentifier], doc_positions: &[usize]) {
    let mut order: Vec<usize> = (0..identifiers.len()).collect();
    order.sort_by_key(|&i| doc_positions[i]);
    let mut used: HashSet<String> = HashSet::new();
    for i in order {
        let base = identifiers[i].display_name.clone();
        let mut n = 1;
        while !used.insert(identifiers[i].render()) {
            n += 1;
            identifiers[i].display_name = format!("{base} #{n}");
        }
    }
}

/// How a requested name matched catalog entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    Exact,
    DisplayName,
    Kind,
}

impl Catalog {
    pub fn rendered_identifiers(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.rendered.as_str()).collect()
    }

    pub fn kinds(&self) -> Vec<ResourceKind> {
        let mut kinds: Vec<ResourceKind> = Vec::new();
        for entry in &self.entries {
            if !kinds.contains(&entry.identifier.kind) {
                kinds.push(entry.identifier.kind.clone());
            }
        }
        kinds
    }

    pub fn of_kind<'a>(&'a self, kind: &'a ResourceKind) -> impl Iterator<Item = &'a CatalogEntry> + 'a {
        self.entries.iter().filter(move |e| &e.identifier.kind == kind)
    }

    pub fn by_logical_id(&self, logical_id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.envelope.logical_id == logical_id)
    }

    /// Resolves a requested name: exact rendered identifier first, then a
    /// display name that matches exactly one entry, then a bare kind name
    /// selecting every entry of that kind.
    pub fn resolve(&self, requested: &str) -> Option<(MatchKind, Vec<&CatalogEntry>)> {
        let requested = requested.trim();
        if let Some(entry) = self.entries.iter().find(|e| e.rendered == requested) {
            return Some((MatchKind::Exact, vec![entry]));
        }
        let by_name: Vec<_> = self
            .entries
            .iter()
            .filter(|e| e.identifier.display_name == requested)
            .collect();
        if by_name.len() == 1 {
            return Some((MatchKind::DisplayName, by_name));
        }
        let kind = ResourceKind::from(requested);
        let by_kind: Vec<_> = self.entries.iter().filter(|e| e.identifier.kind == kind).collect();
        if !by_kind.is_empty() {
            return Some((MatchKind::Kind, by_kind));
        }
        None
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One rendered identifier per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&entry.rendered);
            out.push('\n');
        }
        out
    }
}
