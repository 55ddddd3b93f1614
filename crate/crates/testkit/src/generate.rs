//! Seeded random bundles in the Synthea layout.
//!
//! Names, codes and dates come from small pools so that collisions, ties
//! and missing dates are common. Timestamps share one format, so string
//! order is time order.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

pub const MED_STATUSES: [&str; 6] = ["active", "active", "stopped", "completed", "on-hold", "cancelled"];
pub const MED_CATEGORIES: [&str; 4] = ["outpatient", "outpatient", "inpatient", "community"];

const DRUGS: [&str; 6] = [
    "Simvastatin 20 MG Oral Tablet",
    "Metformin 500 MG Oral Tablet",
    "Lisinopril 10 MG Oral Tablet",
    "Aspirin 81 MG Oral Tablet",
    "Albuterol 0.09 MG/ACTUAT Inhaler",
    "Acetaminophen 325 MG Oral Tablet",
];

/// Two codes share the display "Glucose" on purpose.
const LABS: [(&str, &str); 5] = [
    ("4548-4", "Hemoglobin A1c/Hemoglobin.total in Blood"),
    ("2339-0", "Glucose"),
    ("2345-7", "Glucose"),
    ("2093-3", "Cholesterol [Mass/volume] in Serum or Plasma"),
    ("8302-2", "Body Height"),
];

const CONDITIONS: [(&str, &str); 5] = [
    ("38341003", "Hypertension"),
    ("90560007", "Gout"),
    ("15777000", "Prediabetes"),
    ("271737000", "Anemia (disorder)"),
    ("314529007", "Medication review due (situation)"),
];

const ALLERGENS: [&str; 4] = ["Peanut (substance)", "Latex (substance)", "Aspirin", "Animal dander (substance)"];

const PROCEDURES: [&str; 3] = [
    "Medication Reconciliation (procedure)",
    "Electrocardiographic procedure",
    "Hemodialysis (procedure)",
];

fn timestamp(rng: &mut StdRng) -> Option<String> {
    if rng.random_bool(0.1) {
        return None;
    }
    let year = rng.random_range(2015..=2023);
    let month = rng.random_range(1..=3);
    Some(format!("{year}-{month:02}-01T10:00:00Z"))
}

fn put_date(resource: &mut Value, field: &str, date: Option<String>) {
    if let Some(date) = date {
        resource[field] = json!(date);
    }
}

fn concept(system: &str, code: &str, display: &str) -> Value {
    json!({"coding": [{"system": system, "code": code, "display": display}], "text": display})
}

/// Counts of each resource kind in a generated bundle.
#[derive(Debug, Clone, Copy)]
pub struct Sizes {
    pub medications: usize,
    pub observations: usize,
    pub conditions: usize,
    pub allergies: usize,
    pub procedures: usize,
    pub reports: usize,
}

impl Sizes {
    pub fn random(rng: &mut StdRng) -> Self {
        Self {
            medications: rng.random_range(0..16),
            observations: rng.random_range(0..40),
            conditions: rng.random_range(0..10),
            allergies: rng.random_range(0..6),
            procedures: rng.random_range(0..10),
            reports: rng.random_range(0..6),
        }
    }
}

/// A random bundle for `seed`; identical seeds give identical bundles.
pub fn random_bundle(seed: u64) -> Value {
    let mut rng = StdRng::seed_from_u64(seed);
    let sizes = Sizes::random(&mut rng);
    bundle_with(&mut rng, sizes)
}

pub fn bundle_with(rng: &mut StdRng, sizes: Sizes) -> Value {
    let mut entries = Vec::new();
    let mut push = |resource: Value| entries.push(json!({"fullUrl": "urn:uuid:x", "resource": resource}));

    let gender = *["male", "female"].choose(rng).expect("non-empty");
    push(json!({
        "resourceType": "Patient",
        "id": "patient",
        "name": [{"use": "official", "family": "Doe", "given": ["Sam"]}],
        "gender": gender,
        "birthDate": format!("{}-06-15", rng.random_range(1930..2020)),
    }));

    for i in 0..sizes.medications {
        let drug = *DRUGS.choose(rng).expect("non-empty");
        let mut med = json!({
            "resourceType": "MedicationRequest",
            "id": format!("med-{i}"),
            "status": MED_STATUSES.choose(rng).expect("non-empty"),
            "intent": "order",
            "medicationCodeableConcept": concept("http://www.nlm.nih.gov/research/umls/rxnorm", &format!("rx{}", drug.len()), drug),
        });
        let categories: Vec<Value> = (0..rng.random_range(0..3))
            .map(|_| {
                let code = MED_CATEGORIES.choose(rng).expect("non-empty");
                json!({"coding": [{"system": "http://terminology.hl7.org/CodeSystem/medicationrequest-category", "code": code}]})
            })
            .collect();
        if !categories.is_empty() {
            med["category"] = json!(categories);
        }
        if rng.random_bool(0.1) {
            med.as_object_mut().expect("object").remove("status");
        }
        put_date(&mut med, "authoredOn", timestamp(rng));
        push(med);
    }

    for i in 0..sizes.observations {
        let (code, display) = *LABS.choose(rng).expect("non-empty");
        let mut obs = json!({
            "resourceType": "Observation",
            "id": format!("obs-{i}"),
            "status": "final",
            "code": concept("http://loinc.org", code, display),
            "valueQuantity": {"value": rng.random_range(1..300), "unit": "mg/dL"},
        });
        put_date(&mut obs, "effectiveDateTime", timestamp(rng));
        push(obs);
    }

    for i in 0..sizes.conditions {
        let (code, display) = *CONDITIONS.choose(rng).expect("non-empty");
        let mut condition = json!({
            "resourceType": "Condition",
            "id": format!("cond-{i}"),
            "clinicalStatus": {"coding": [{"code": "active"}]},
            "code": concept("http://snomed.info/sct", code, display),
        });
        put_date(&mut condition, "onsetDateTime", timestamp(rng));
        push(condition);
    }

    for i in 0..sizes.allergies {
        let allergen = *ALLERGENS.choose(rng).expect("non-empty");
        let mut allergy = json!({
            "resourceType": "AllergyIntolerance",
            "code": {"text": allergen},
            "category": ["food"],
        });
        if rng.random_bool(0.7) {
            allergy["id"] = json!(format!("allergy-{i}"));
        }
        put_date(&mut allergy, "recordedDate", timestamp(rng));
        push(allergy);
    }

    for i in 0..sizes.procedures {
        let name = *PROCEDURES.choose(rng).expect("non-empty");
        let mut procedure = json!({
            "resourceType": "Procedure",
            "id": format!("proc-{i}"),
            "status": "completed",
            "code": {"coding": [{"system": "http://snomed.info/sct", "code": format!("p{}", name.len()), "display": name}]},
        });
        if let Some(start) = timestamp(rng) {
            procedure["performedPeriod"] = json!({"start": start});
        }
        push(procedure);
    }

    for i in 0..sizes.reports {
        let mut report = json!({
            "resourceType": "DiagnosticReport",
            "id": format!("report-{i}"),
            "status": "final",
            "code": concept("http://loinc.org", "57698-3", "Lipid panel"),
        });
        put_date(&mut report, "effectiveDateTime", timestamp(rng));
        push(report);
    }

    if rng.random_bool(0.3) {
        push(json!({"resourceType": "Provenance", "id": "prov"}));
    }
    if rng.random_bool(0.2) {
        push(json!({"resourceType": "Procedure", "id": "broken", "code": 42}));
    }
    if rng.random_bool(0.2) {
        entries.push(json!({"fullUrl": "urn:uuid:empty"}));
    }
    if rng.random_bool(0.2) {
        entries.push(json!({"resource": null}));
    }

    // Shuffle everything after the Patient so document order varies.
    let mut rest = entries.split_off(1);
    for i in (1..rest.len()).rev() {
        let j = rng.random_range(0..=i);
        rest.swap(i, j);
    }
    entries.extend(rest);
    json!({"resourceType": "Bundle", "type": "collection", "entry": entries})
}
