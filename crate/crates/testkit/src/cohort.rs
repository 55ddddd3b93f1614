//! Small single-patient bundles for cohort selection tests.

use std::path::Path;

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct CohortPatient {
    pub label: String,
    pub gender: &'static str,
    pub birth_date: String,
    pub deceased: bool,
    pub allergies: Vec<&'static str>,
    pub condition_codes: Vec<&'static str>,
}

pub fn cohort_bundle(p: &CohortPatient) -> Value {
    let mut patient = json!({
        "resourceType": "Patient",
        "id": p.label,
        "name": [{"use": "official", "family": p.label, "given": ["Test"]}],
        "gender": p.gender,
        "birthDate": p.birth_date,
    });
    if p.deceased {
        patient["deceasedDateTime"] = json!("2022-01-01T00:00:00Z");
    }
    let mut entries = vec![json!({"resource": patient})];
    for (i, code) in p.condition_codes.iter().enumerate() {
        entries.push(json!({"resource": {
            "resourceType": "Condition",
            "id": format!("{}-c{i}", p.label),
            "clinicalStatus": {"coding": [{"code": "active"}]},
            "code": {"coding": [{"system": "http://snomed.info/sct", "code": code, "display": format!("Condition {code}")}]},
            "onsetDateTime": "2015-01-01"
        }}));
    }
    for (i, allergen) in p.allergies.iter().enumerate() {
        entries.push(json!({"resource": {
            "resourceType": "AllergyIntolerance",
            "id": format!("{}-a{i}", p.label),
            "code": {"text": allergen},
            "recordedDate": "2016-01-01"
        }}));
    }
    json!({"resourceType": "Bundle", "type": "collection", "entry": entries})
}

pub fn write_corpus(dir: &Path, patients: &[CohortPatient]) {
    for p in patients {
        let path = dir.join(format!("{}.json", p.label));
        std::fs::write(&path, cohort_bundle(p).to_string()).expect("write cohort bundle");
    }
}

/// Twenty patients over six cardiovascular buckets (codes `cv1`..`cv6`)
/// plus two patients matching no bucket. Three of the living patients have
/// allergies; two deceased patients have allergies too.
pub fn twenty_patient_corpus() -> Vec<CohortPatient> {
    let p = |label: &str, gender, birth: &str, deceased, allergies: Vec<&'static str>, codes: Vec<&'static str>| {
        CohortPatient {
            label: label.to_string(),
            gender,
            birth_date: birth.to_string(),
            deceased,
            allergies,
            condition_codes: codes,
        }
    };
    vec![
        p("p01", "female", "2015-04-12", false, vec!["Latex (substance)", "Aspirin"], vec!["cv1"]),
        p("p02", "male", "2014-01-01", false, vec![], vec!["cv1"]),
        p("p03", "male", "1997-06-03", false, vec![], vec!["cv2"]),
        p("p04", "female", "1990-02-02", true, vec!["Peanut (substance)"], vec!["cv2"]),
        p("p05", "female", "1974-02-20", false, vec![], vec!["cv3", "cv1"]),
        p("p06", "male", "1970-03-03", false, vec![], vec!["cv3"]),
        p("p07", "male", "1958-05-10", false, vec![], vec!["cv4"]),
        p("p08", "female", "1960-07-07", false, vec![], vec!["cv4"]),
        p("p09", "female", "1951-08-30", false, vec![], vec!["cv5"]),
        p("p10", "male", "1945-09-09", true, vec!["Penicillin V"], vec!["cv5"]),
        p("p11", "male", "1941-03-15", false, vec!["Animal dander (substance)", "Peanut (substance)"], vec!["cv6"]),
        p("p12", "female", "1943-04-04", false, vec![], vec!["cv6"]),
        p("p13", "female", "1985-05-05", false, vec!["Mold (organism)"], vec!["cv2"]),
        p("p14", "male", "2001-06-06", false, vec![], vec!["cv3"]),
        p("p15", "female", "1999-07-07", false, vec![], vec!["cv4"]),
        p("p16", "male", "1930-08-08", true, vec![], vec!["cv6"]),
        p("p17", "female", "2010-09-09", false, vec![], vec!["cv5"]),
        p("p18", "male", "1980-10-10", false, vec![], vec!["cv1"]),
        p("p19", "female", "1965-11-11", false, vec![], vec!["other"]),
        p("p20", "male", "1955-12-12", false, vec![], vec![]),
    ]
}
