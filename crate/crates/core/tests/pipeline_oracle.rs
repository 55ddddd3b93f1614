//! Randomized bundles checked against brute-force oracles that read the
//! raw JSON directly.

use std::collections::HashSet;

use chrono::NaiveDate;
use fhirlit_core::fhir::{parse_bundle, Bundle, ResourceKind};
use fhirlit_core::pipeline::{build_catalog, filter_medications, latest_per_code, FilterConfig};
use fhirlit_testkit::generate::random_bundle;
use fhirlit_testkit::oracle;
use proptest::prelude::*;
use serde_json::Value;

fn parse(value: &Value) -> Bundle {
    parse_bundle(value.to_string().as_bytes(), "random").unwrap()
}

fn ids<'a>(envelopes: impl IntoIterator<Item = &'a fhirlit_core::fhir::ResourceEnvelope>) -> Vec<String> {
    envelopes.into_iter().map(|e| e.logical_id.clone()).collect()
}

fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
}

#[test]
fn filters_agree_with_oracles() {
    let config = FilterConfig::default();
    let mut nonempty = 0;
    for seed in 0..200u64 {
        let raw = random_bundle(seed);
        let bundle = parse(&raw);
        assert_eq!(bundle.len(), oracle::count_entries(&raw), "seed {seed}");

        let meds = ids(filter_medications(bundle.of_kind(&ResourceKind::MedicationRequest), &config));
        assert_eq!(meds, oracle::kept_medication_ids(&raw, &["active"], &["outpatient"]), "seed {seed}");
        nonempty += usize::from(!meds.is_empty());

        let obs = ids(latest_per_code(bundle.of_kind(&ResourceKind::Observation)));
        assert_eq!(obs, oracle::latest_per_code_ids(&raw, "Observation", "effectiveDateTime"), "seed {seed}");

        let conditions = ids(latest_per_code(bundle.of_kind(&ResourceKind::Condition)));
        assert_eq!(conditions, oracle::latest_per_code_ids(&raw, "Condition", "onsetDateTime"), "seed {seed}");
    }
    assert!(nonempty > 50, "generator rarely produced kept medications");
}

#[test]
fn other_statuses_and_categories_follow_config() {
    let config = FilterConfig {
        medication_statuses_kept: ["active".into(), "on-hold".into()].into(),
        medication_categories_kept: ["community".into()].into(),
        ..FilterConfig::default()
    };
    for seed in 0..100u64 {
        let raw = random_bundle(seed);
        let bundle = parse(&raw);
        let meds = ids(filter_medications(bundle.of_kind(&ResourceKind::MedicationRequest), &config));
        assert_eq!(meds, oracle::kept_medication_ids(&raw, &["active", "on-hold"], &["community"]));
    }
}

#[test]
fn catalog_respects_cap() {
    for seed in 0..100u64 {
        let bundle = parse(&random_bundle(seed));
        let full = build_catalog(&bundle, &FilterConfig::default(), reference_date()).unwrap();
        let config = FilterConfig {
            max_catalog_entries: 10,
            ..FilterConfig::default()
        };
        let capped = build_catalog(&bundle, &config, reference_date()).unwrap();
        assert_eq!(capped.len(), full.len().min(10));
        for entry in &capped.entries {
            assert!(full.entries.iter().any(|f| f.envelope == entry.envelope));
        }
        // Dropped entries are never newer than kept ones.
        let newest_dropped = full
            .entries
            .iter()
            .filter(|f| !capped.entries.iter().any(|c| c.envelope == f.envelope))
            .filter_map(|f| f.identifier.date.clone())
            .max();
        let oldest_kept = capped.entries.iter().map(|c| c.identifier.date.clone()).min().flatten();
        if let (Some(dropped), Some(kept)) = (newest_dropped, oldest_kept) {
            assert!(dropped <= kept, "seed {seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rendered_identifiers_are_unique(seed in any::<u64>()) {
        let raw = random_bundle(seed);
        let bundle = parse(&raw);
        let catalog = build_catalog(&bundle, &FilterConfig::default(), reference_date()).unwrap();
        let rendered = catalog.rendered_identifiers();
        let unique: HashSet<&str> = rendered.iter().copied().collect();
        prop_assert_eq!(unique.len(), rendered.len());
        prop_assert!(catalog.len() <= 128);
        for entry in &catalog.entries {
            let resolved = catalog.resolve(&entry.rendered).map(|(_, e)| e.len());
            prop_assert_eq!(resolved, Some(1));
        }
    }
}
