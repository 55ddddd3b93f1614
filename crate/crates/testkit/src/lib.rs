//! Test support that deliberately knows nothing about `fhirlit-core`:
//! bundle generators build plain JSON and the oracles read plain JSON, so
//! they can check the real pipeline instead of mirroring it.

pub mod cohort;
pub mod generate;
pub mod oracle;

use std::path::PathBuf;

/// Directory of the shipped fixture bundles.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/bundles")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixtures_dir().join(format!("{name}.json"))
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    let path = fixture_path(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every shipped fixture, sorted by file name.
pub fn all_fixtures() -> Vec<(String, Vec<u8>)> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir())
        .expect("fixtures dir")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), fixture_bytes(&n))).collect()
}

/// The six patients of the evaluation cohort.
pub const COHORT_FIXTURES: [&str; 6] = [
    "beatris270_bogan287",
    "milton509_ortiz186",
    "edythe31_mcdermott739",
    "gonzalo160_duenas839",
    "jacklyn830_veum823",
    "allen332_ferry570",
];
