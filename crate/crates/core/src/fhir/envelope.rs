use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use super::{FhirDateTime, ResourceKind};
use crate::util::sha256_hex;

/// One coding out of a FHIR `CodeableConcept`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedValue {
    pub system: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

/// A single bundle entry: the typed fields the pipeline reads plus the exact
/// source JSON of the resource.
#[derive(Debug, Clone, Serialize)]
pub struct ResourceEnvelope {
    pub kind: ResourceKind,
    pub logical_id: String,
    pub primary_code: Option<CodedValue>,
    pub display_text: Option<String>,
    pub status: Option<String>,
    pub category_codes: Vec<CodedValue>,
    pub effective_date: Option<FhirDateTime>,
    /// Set when the typed projection failed and the entry was kept as `Other`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_issue: Option<String>,
    pub raw: Box<RawValue>,
}

impl PartialEq for ResourceEnvelope {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.logical_id == other.logical_id
            && self.primary_code == other.primary_code
            && self.display_text == other.display_text
            && self.status == other.status
            && self.category_codes == other.category_codes
            && self.effective_date == other.effective_date
            && self.parse_issue == other.parse_issue
            && self.raw.get() == other.raw.get()
    }
}

impl Eq for ResourceEnvelope {}

impl ResourceEnvelope {
    /// Builds an envelope from the raw JSON of one resource. Never fails: a
    /// resource whose fields do not match the expected shapes is kept with
    /// kind `Other` and the failure recorded in `parse_issue`.
    pub fn from_raw(raw: Box<RawValue>) -> Self {
        let value: Value = serde_json::from_str(raw.get()).unwrap_or(Value::Null);
        let resource_type = value
            .get("resourceType")
            .and_then(Value::as_str)
            .map(str::to_string);
        let logical_id = value
            .get("id")
            .and_then(Value::as_str)
            .filter(|id| !id.trim().is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| format!("anon-{}", &sha256_hex(raw.get().as_bytes())[..16]));

        let kind = resource_type
            .as_deref()
            .map(ResourceKind::from)
            .unwrap_or_else(|| ResourceKind::Other("Unknown".into()));

        match Projection::extract(&kind, &value) {
            Ok(p) => Self {
                kind,
                logical_id,
                primary_code: p.primary_code,
                display_text: p.display_text,
                status: p.status,
                category_codes: p.category_codes,
                effective_date: p.effective_date,
                parse_issue: None,
                raw,
            },
            Err(issue) => Self {
                kind: ResourceKind::Other(resource_type.unwrap_or_else(|| "Unknown".into())),
                logical_id,
                primary_code: None,
                display_text: None,
                status: None,
                category_codes: Vec::new(),
                effective_date: None,
                parse_issue: Some(issue),
                raw,
            },
        }
    }

    pub fn from_value(value: &Value) -> Self {
        let raw = RawValue::from_string(value.to_string()).expect("serde_json output is valid JSON");
        Self::from_raw(raw)
    }

    /// Raw payload parsed into a `Value`.
    pub fn raw_value(&self) -> Value {
        serde_json::from_str(self.raw.get()).unwrap_or(Value::Null)
    }

    /// Raw payload re-serialized without insignificant whitespace.
    pub fn raw_compact(&self) -> String {
        self.raw_value().to_string()
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.raw.get().as_bytes())
    }

    pub fn is_degraded(&self) -> bool {
        self.parse_issue.is_some()
    }
}

#[derive(Debug, Default, Deserialize)]
struct CodeableConcept {
    #[serde(default)]
    coding: Vec<Coding>,
    text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Coding {
    system: Option<String>,
    code: Option<String>,
    display: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Reference {
    display: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Period {
    start: Option<String>,
}

impl CodeableConcept {
    fn first_code(&self) -> Option<CodedValue> {
        self.coding.iter().find_map(Coding::to_coded)
    }

    fn best_text(&self) -> Option<String> {
        non_empty(self.text.as_deref())
            .or_else(|| self.coding.iter().find_map(|c| non_empty(c.display.as_deref())))
    }
}

impl Coding {
    fn to_coded(&self) -> Option<CodedValue> {
        let code = non_empty(self.code.as_deref())?;
        Some(CodedValue {
            system: self.system.clone().unwrap_or_default(),
            code,
            display: non_empty(self.display.as_deref()),
        })
    }
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

#[derive(Default)]
struct Projection {
    primary_code: Option<CodedValue>,
    display_text: Option<String>,
    status: Option<String>,
    category_codes: Vec<CodedValue>,
    effective_date: Option<FhirDateTime>,
}

const ALLERGY_CATEGORY_SYSTEM: &str = "http://hl7.org/fhir/allergy-intolerance-category";

fn field<T: serde::de::DeserializeOwned>(value: &Value, name: &str) -> Result<Option<T>, String> {
    match value.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| format!("field `{name}`: {e}")),
    }
}

fn date_field(value: &Value, name: &str) -> Result<Option<FhirDateTime>, String> {
    field::<String>(value, name)?
        .map(|s| FhirDateTime::parse(&s).map_err(|e| format!("field `{name}`: {e}")))
        .transpose()
}

fn period_start(value: &Value, name: &str) -> Result<Option<FhirDateTime>, String> {
    field::<Period>(value, name)?
        .and_then(|p| p.start)
        .map(|s| FhirDateTime::parse(&s).map_err(|e| format!("field `{name}.start`: {e}")))
        .transpose()
}

/// First present date among `candidates`, each read either as a plain date
/// field or (suffix `Period`) as the start of a period.
fn first_date(value: &Value, candidates: &[&str]) -> Result<Option<FhirDateTime>, String> {
    for name in candidates {
        let found = if name.ends_with("Period") {
            period_start(value, name)?
        } else {
            date_field(value, name)?
        };
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

fn concept_categories(value: &Value) -> Result<Vec<CodedValue>, String> {
    Ok(field::<Vec<CodeableConcept>>(value, "category")?
        .unwrap_or_default()
        .iter()
        .flat_map(|c| c.coding.iter().filter_map(Coding::to_coded))
        .collect())
}

fn clinical_status(value: &Value) -> Result<Option<String>, String> {
    Ok(field::<CodeableConcept>(value, "clinicalStatus")?
        .and_then(|c| c.first_code())
        .map(|c| c.code))
}

impl Projection {
    fn extract(kind: &ResourceKind, value: &Value) -> Result<Self, String> {
        if !value.is_object() {
            return Err("resource is not a JSON object".into());
        }
        if let Some(id) = value.get("id") {
            if !id.is_string() {
                return Err("field `id` is not a string".into());
            }
        }
        let mut p = Projection::default();
        match kind {
            ResourceKind::Patient => {
                date_field(value, "birthDate")?;
            }
            ResourceKind::MedicationRequest => {
                p.status = field(value, "status")?;
                p.category_codes = concept_categories(value)?;
                p.effective_date = date_field(value, "authoredOn")?;
                if let Some(concept) = field::<CodeableConcept>(value, "medicationCodeableConcept")? {
                    p.primary_code = concept.first_code();
                    p.display_text = concept.best_text();
                } else if let Some(reference) = field::<Reference>(value, "medicationReference")? {
                    p.display_text = non_empty(reference.display.as_deref());
                }
            }
            ResourceKind::Observation | ResourceKind::DiagnosticReport => {
                p.status = field(value, "status")?;
                p.category_codes = concept_categories(value)?;
                p.effective_date = first_date(value, &["effectiveDateTime", "effectivePeriod", "issued"])?;
                p.set_code(field(value, "code")?);
            }
            ResourceKind::Condition => {
                p.status = clinical_status(value)?;
                p.category_codes = concept_categories(value)?;
                p.effective_date = first_date(value, &["onsetDateTime", "onsetPeriod"])?;
                p.set_code(field(value, "code")?);
            }
            ResourceKind::AllergyIntolerance => {
                p.status = clinical_status(value)?;
                p.category_codes = field::<Vec<String>>(value, "category")?
                    .unwrap_or_default()
                    .into_iter()
                    .filter(|c| !c.is_empty())
                    .map(|code| CodedValue {
                        system: ALLERGY_CATEGORY_SYSTEM.into(),
                        code,
                        display: None,
                    })
                    .collect();
                p.effective_date = first_date(value, &["onsetDateTime", "recordedDate"])?;
                p.set_code(field(value, "code")?);
            }
            ResourceKind::Procedure => {
                p.status = field(value, "status")?;
                p.category_codes = field::<CodeableConcept>(value, "category")?
                    .map(|c| c.coding.iter().filter_map(Coding::to_coded).collect())
                    .unwrap_or_default();
                p.effective_date = first_date(value, &["performedDateTime", "performedPeriod"])?;
                p.set_code(field(value, "code")?);
            }
            ResourceKind::Immunization => {
                p.status = field(value, "status")?;
                p.effective_date = date_field(value, "occurrenceDateTime")?;
                p.set_code(field(value, "vaccineCode")?);
            }
            ResourceKind::Encounter => {
                p.status = field(value, "status")?;
                p.effective_date = period_start(value, "period")?;
                let types = field::<Vec<CodeableConcept>>(value, "type")?.unwrap_or_default();
                p.set_code(types.into_iter().next());
            }
            ResourceKind::CarePlan => {
                p.status = field(value, "status")?;
                let categories = field::<Vec<CodeableConcept>>(value, "category")?.unwrap_or_default();
                p.category_codes = categories
                    .iter()
                    .flat_map(|c| c.coding.iter().filter_map(Coding::to_coded))
                    .collect();
                p.effective_date = period_start(value, "period")?;
                p.set_code(categories.into_iter().next());
            }
            ResourceKind::Other(_) => {
                if let Some(Value::String(status)) = value.get("status") {
                    p.status = Some(status.clone());
                }
            }
        }
        Ok(p)
    }

    fn set_code(&mut self, concept: Option<CodeableConcept>) {
        if let Some(concept) = concept {
            self.primary_code = concept.first_code();
            self.display_text = concept.best_text();
        }
    }
}
