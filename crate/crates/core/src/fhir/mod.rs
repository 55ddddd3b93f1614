//! Typed projection over FHIR R4 bundles.
//!
//! Only the handful of fields the catalog and chat pipeline need are typed.
//! Everything else stays in [`ResourceEnvelope::raw`], which holds the exact
//! bytes of the resource as they appeared in the source document.

mod bundle;
mod date;
mod envelope;
mod kind;
mod patient;

pub use bundle::{parse_bundle, Bundle};
pub use date::{DatePrecision, FhirDateTime};
pub use envelope::{CodedValue, ResourceEnvelope};
pub use kind::ResourceKind;
pub use patient::{patient_demographics, PatientSummary};

#[derive(Debug, thiserror::Error)]
pub enum FhirError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("bundle contains no Patient resource")]
    NoPatient,
    #[error("bundle contains {0} Patient resources")]
    MultiplePatients(usize),
    #[error("Patient resource is missing {0}")]
    IncompletePatient(&'static str),
    #[error("invalid FHIR date {0:?}")]
    InvalidDate(String),
}
