//! Shipped fixture bundles: parsing totality, demographics and the
//! filtered catalog contents of the six cohort patients.

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::NaiveDate;
use fhirlit_core::fhir::{parse_bundle, ResourceKind};
use fhirlit_core::pipeline::{build_catalog, Catalog, FilterConfig};
use fhirlit_testkit::{all_fixtures, fixture_bytes, oracle, COHORT_FIXTURES};
use serde_json::Value;

fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 12, 1).unwrap()
}

fn catalog(name: &str) -> Catalog {
    let bundle = parse_bundle(&fixture_bytes(name), name).unwrap();
    build_catalog(&bundle, &FilterConfig::default(), reference_date()).unwrap()
}

fn names(catalog: &Catalog, kind: ResourceKind) -> BTreeSet<String> {
    catalog
        .of_kind(&kind)
        .map(|e| e.identifier.display_name.clone())
        .collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn every_fixture_parses_without_dropping_entries() {
    let fixtures = all_fixtures();
    assert!(fixtures.len() >= 8);
    let started = Instant::now();
    for (name, bytes) in &fixtures {
        let bundle = parse_bundle(bytes, name).unwrap();
        let raw: Value = serde_json::from_slice(bytes).unwrap();
        let walked = oracle::resources(&raw);
        assert_eq!(bundle.len(), walked.len(), "{name}");
        for (envelope, resource) in bundle.entries.iter().zip(&walked) {
            let expected: Value = (*resource).clone();
            assert_eq!(envelope.raw_value(), expected, "{name}: payload changed");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn cohort_demographics() {
    let expected = [
        ("beatris270_bogan287", "female", 8, 8),
        ("milton509_ortiz186", "male", 26, 0),
        ("edythe31_mcdermott739", "female", 49, 0),
        ("gonzalo160_duenas839", "male", 65, 0),
        ("jacklyn830_veum823", "female", 72, 0),
        ("allen332_ferry570", "male", 82, 3),
    ];
    for (name, gender, age, allergies) in expected {
        let c = catalog(name);
        assert_eq!(c.patient.administrative_gender, gender, "{name}");
        assert_eq!(c.patient.age_years, age, "{name}");
        assert_eq!(c.patient.allergies_count, allergies, "{name}");
        assert!(!c.patient.deceased);
    }
    assert_eq!(COHORT_FIXTURES.len(), 6);
}

#[test]
fn gonzalo_medications() {
    let c = catalog("gonzalo160_duenas839");
    assert_eq!(
        names(&c, ResourceKind::MedicationRequest),
        set(&[
            "Simvastatin 20 MG Oral Tablet",
            "Vitamin B12 5 MG/ML Injectable Solution",
            "Clopidogrel 75 MG Oral Tablet",
            "Hydrochlorothiazide 25 MG Oral Tablet",
            "amLODIPine 2.5 MG Oral Tablet",
            "Metoprolol succinate 100 MG 24 HR Extended Release Oral Tablet",
            "Insulin isophane, human 70 UNT/ML / insulin, regular, human 30 UNT/ML Injectable Suspension [Humulin]",
            "Nitroglycerin 0.4 MG/ACTUAT Mucosal Spray",
            "Tacrolimus 1 MG 24 HR Extended Release Oral Tablet",
        ])
    );
    assert_eq!(c.of_kind(&ResourceKind::MedicationRequest).count(), 9);
    assert_eq!(names(&c, ResourceKind::AllergyIntolerance), BTreeSet::new());
    let reviews = c
        .of_kind(&ResourceKind::Condition)
        .filter(|e| e.identifier.display_name == "Medication review due (situation)")
        .count();
    assert_eq!(reviews, 1);
}

#[test]
fn jacklyn_medications() {
    let c = catalog("jacklyn830_veum823");
    assert_eq!(
        names(&c, ResourceKind::MedicationRequest),
        set(&[
            "Nitroglycerin 0.4 MG/ACTUAT Mucosal Spray",
            "Simvastatin 20MG Oral Tablet",
            "Clopidogrel 75 MG Oral Tablet",
            "24 HR metoprolol succinate 100 MG Extended Release Oral Tablet",
            "Acetaminophen 325 MG Oral Tablet",
            "Hydrochlorothiazide 25 MG Oral Tablet",
        ])
    );
    assert_eq!(c.of_kind(&ResourceKind::MedicationRequest).count(), 6);
}

#[test]
fn beatris_allergies() {
    let c = catalog("beatris270_bogan287");
    assert_eq!(
        names(&c, ResourceKind::AllergyIntolerance),
        set(&[
            "Latex (substance)",
            "Bee venom (substance)",
            "Mold (organism)",
            "House dust mite (organism)",
            "Animal dander (substance)",
            "Grass pollen (substance)",
            "Tree pollen (substance)",
            "Aspirin",
        ])
    );
    assert_eq!(c.of_kind(&ResourceKind::AllergyIntolerance).count(), 8);
    assert_eq!(
        names(&c, ResourceKind::MedicationRequest),
        set(&["Fexofenadine hydrochloride 30 MG Oral Tablet", "Epinephrine 1 MG/ML Auto-Injector 0.3 ML"])
    );
}

#[test]
fn milton_has_no_allergies() {
    let c = catalog("milton509_ortiz186");
    assert_eq!(c.of_kind(&ResourceKind::AllergyIntolerance).count(), 0);
    let meds = names(&c, ResourceKind::MedicationRequest);
    assert_eq!(meds.len(), 2);
    assert!(meds.contains("amLODIPine 2.5 MG Oral Tablet"));
    assert!(meds.iter().any(|m| m.starts_with("MedicationRequest ")));
    assert_eq!(
        names(&c, ResourceKind::Condition),
        set(&["Hypertension", "Hypoxemia (disorder)", "Stress (finding)"])
    );
}

#[test]
fn edythe_and_allen() {
    let edythe = catalog("edythe31_mcdermott739");
    assert_eq!(names(&edythe, ResourceKind::MedicationRequest), set(&["Jolivette 28 Day Pack"]));
    let allen = catalog("allen332_ferry570");
    assert_eq!(
        names(&allen, ResourceKind::AllergyIntolerance),
        set(&["Animal dander (substance)", "Penicillin V", "Peanut (substance)"])
    );
    assert_eq!(allen.of_kind(&ResourceKind::MedicationRequest).count(), 8);
    assert_eq!(allen.of_kind(&ResourceKind::Condition).count(), 15);
}

#[test]
fn edge_cases_degrade_instead_of_failing() {
    let bytes = fixture_bytes("edge_cases");
    let bundle = parse_bundle(&bytes, "edge_cases").unwrap();
    assert!(bundle.entries.iter().any(|e| e.is_degraded()));
    assert!(bundle
        .entries
        .iter()
        .any(|e| e.kind == ResourceKind::Other("Provenance".into())));
    assert!(bundle.entries.iter().any(|e| e.logical_id.starts_with("anon-")));

    let c = catalog("edge_cases");
    let rendered = c.rendered_identifiers();
    assert!(rendered.contains(&"AllergyIntolerance | Shellfish (substance) | 2018-08-08"));
    assert!(rendered.contains(&"AllergyIntolerance | Shellfish (substance) #2 | 2018-08-08"));
    assert!(rendered.contains(&"Observation | Body Height | 2019-06"));
    assert!(rendered.contains(&"Observation | Observation obs-9 | unknown"));
    assert!(rendered.contains(&"Condition | Gout | 2015-06-10"));
    let unique: BTreeSet<&str> = rendered.iter().copied().collect();
    assert_eq!(unique.len(), rendered.len());
}

#[test]
fn minimal_patient_has_empty_catalog() {
    let c = catalog("minimal_patient");
    assert!(c.is_empty());
    assert_eq!(c.patient.display_name(), "Ada11 Solo22");
}
