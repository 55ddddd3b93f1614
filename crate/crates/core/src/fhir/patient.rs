use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Bundle, FhirDateTime, FhirError, ResourceKind};

/// Demographics of the single patient a bundle describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub family_name: String,
    pub given_names: Vec<String>,
    pub birth_date: NaiveDate,
    pub administrative_gender: String,
    pub age_years: u32,
    pub allergies_count: usize,
    #[serde(default)]
    pub deceased: bool,
}

impl PatientSummary {
    pub fn display_name(&self) -> String {
        let mut parts = self.given_names.clone();
        if !self.family_name.is_empty() {
            parts.push(self.family_name.clone());
        }
        parts.join(" ")
    }
}

/// Whole years from `birth` to `on`; zero when `on` precedes `birth`.
pub fn age_in_years(birth: NaiveDate, on: NaiveDate) -> u32 {
    if on <= birth {
        return 0;
    }
    let mut years = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years.max(0) as u32
}

pub fn patient_demographics(bundle: &Bundle, reference_date: NaiveDate) -> Result<PatientSummary, FhirError> {
    let patients: Vec<_> = bundle.of_kind(&ResourceKind::Patient).collect();
    let patient = match patients.as_slice() {
        [] => return Err(FhirError::NoPatient),
        [one] => *one,
        many => return Err(FhirError::MultiplePatients(many.len())),
    };
    let value = patient.raw_value();

    let names = value.get("name").and_then(Value::as_array).cloned().unwrap_or_default();
    let name = names
        .iter()
        .find(|n| n.get("use").and_then(Value::as_str) == Some("official"))
        .or_else(|| names.first());
    let family_name = name
        .and_then(|n| n.get("family"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let given_names = name
        .and_then(|n| n.get("given"))
        .and_then(Value::as_array)
        .map(|g| g.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default();

    let birth_date = value
        .get("birthDate")
        .and_then(Value::as_str)
        .ok_or(FhirError::IncompletePatient("birthDate"))?;
    let birth_date = FhirDateTime::parse(birth_date)?.date();

    let administrative_gender = value
        .get("gender")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let deceased = match (value.get("deceasedBoolean"), value.get("deceasedDateTime")) {
        (Some(Value::Bool(b)), _) => *b,
        (_, Some(Value::String(_))) => true,
        _ => false,
    };

    Ok(PatientSummary {
        family_name,
        given_names,
        birth_date,
        administrative_gender,
        age_years: age_in_years(birth_date, reference_date),
        allergies_count: bundle.of_kind(&ResourceKind::AllergyIntolerance).count(),
        deceased,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::parse_bundle;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn age_counts_whole_years() {
        assert_eq!(age_in_years(d("2015-04-12"), d("2023-04-11")), 7);
        assert_eq!(age_in_years(d("2015-04-12"), d("2023-04-12")), 8);
        assert_eq!(age_in_years(d("2015-04-12"), d("2010-01-01")), 0);
        assert_eq!(age_in_years(d("2000-02-29"), d("2001-02-28")), 0);
        assert_eq!(age_in_years(d("2000-02-29"), d("2001-03-01")), 1);
    }

    #[test]
    fn no_patient_and_multiple_patients() {
        let none = parse_bundle(br#"{"resourceType":"Bundle","entry":[]}"#, "t").unwrap();
        assert!(matches!(patient_demographics(&none, d("2023-01-01")), Err(FhirError::NoPatient)));
        let two = parse_bundle(
            br#"{"entry":[{"resource":{"resourceType":"Patient","id":"a","birthDate":"1990-01-01"}},
                          {"resource":{"resourceType":"Patient","id":"b","birthDate":"1990-01-01"}}]}"#,
            "t",
        )
        .unwrap();
        assert!(matches!(patient_demographics(&two, d("2023-01-01")), Err(FhirError::MultiplePatients(2))));
    }

    #[test]
    fn extracts_fields() {
        let b = parse_bundle(
            br#"{"entry":[{"resource":{"resourceType":"Patient","id":"a","gender":"female",
                 "name":[{"use":"nickname","given":["Bea"]},{"use":"official","family":"Bogan287","given":["Beatris270"]}],
                 "birthDate":"2015-04-12","deceasedDateTime":"2024-01-01"}},
                 {"resource":{"resourceType":"AllergyIntolerance","id":"x"}}]}"#,
            "t",
        )
        .unwrap();
        let p = patient_demographics(&b, d("2023-12-01")).unwrap();
        assert_eq!(p.display_name(), "Beatris270 Bogan287");
        assert_eq!(p.age_years, 8);
        assert_eq!(p.allergies_count, 1);
        assert_eq!(p.administrative_gender, "female");
        assert!(p.deceased);
    }
}
