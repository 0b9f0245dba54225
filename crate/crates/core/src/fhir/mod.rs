//! Clinical stream: FHIR R4 bundle parsing and curated summaries.
//!
//! A patient's structured record enters as a FHIR R4 bundle, is flattened
//! into a read-only [`ClinicalStream`] of coded entities, and leaves as a
//! token-budgeted plain-text summary whose every line carries an inline
//! `[SYSTEM:CODE]` tag. Those tags are what lets the reconciliation engine
//! cite specific resources, so the stream offers exact-tuple [`lookup`]
//! for citation validation.
//!
//! [`lookup`]: ClinicalStream::lookup

mod parse;
mod summary;

pub use parse::{parse_bundle, parse_bundle_value, ParsedBundle};
pub use summary::{curate, render_summary, CuratedSummary, TokenBudget};

use serde::{Deserialize, Serialize};

/// The eight resource kinds the clinical stream models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Condition,
    MedicationRequest,
    AllergyIntolerance,
    Immunization,
    CarePlan,
    Observation,
    Procedure,
    Encounter,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 8] = [
        ResourceKind::Condition,
        ResourceKind::MedicationRequest,
        ResourceKind::AllergyIntolerance,
        ResourceKind::Immunization,
        ResourceKind::CarePlan,
        ResourceKind::Observation,
        ResourceKind::Procedure,
        ResourceKind::Encounter,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ResourceKind::Condition => "Condition",
            ResourceKind::MedicationRequest => "MedicationRequest",
            ResourceKind::AllergyIntolerance => "AllergyIntolerance",
            ResourceKind::Immunization => "Immunization",
            ResourceKind::CarePlan => "CarePlan",
            ResourceKind::Observation => "Observation",
            ResourceKind::Procedure => "Procedure",
            ResourceKind::Encounter => "Encounter",
        }
    }

    pub fn from_name(name: &str) -> Option<ResourceKind> {
        Self::ALL.iter().copied().find(|k| k.as_str() == name)
    }
}

impl std::fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A coded concept: terminology system, code, and display text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRef {
    pub code_system: String,
    pub code_value: String,
    pub display: String,
}

/// One flattened clinical entity: its kind, code, value text, status, and
/// temporal metadata (onset / authored / effective date, as applicable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalResource {
    pub resource_type: ResourceKind,
    pub code: CodeRef,
    /// Display text, or the measured value with units for observations.
    pub value: String,
    /// Status verbatim from the record ("active", "stopped", "resolved",
    /// ...); empty when the record carries none.
    pub status: String,
    pub temporal: Option<chrono::NaiveDate>,
}

/// A citation to a clinical resource. Identity for all matching is the
/// `(resource_type, code_system, code_value)` tuple; `display` is carried
/// for readability and never participates in comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FhirResourceRef {
    pub resource_type: String,
    pub code_system: String,
    pub code_value: String,
    #[serde(default)]
    pub display: String,
}

impl FhirResourceRef {
    pub fn new(
        resource_type: impl Into<String>,
        code_system: impl Into<String>,
        code_value: impl Into<String>,
        display: impl Into<String>,
    ) -> Self {
        Self {
            resource_type: resource_type.into(),
            code_system: code_system.into(),
            code_value: code_value.into(),
            display: display.into(),
        }
    }

    /// The exact-match identity tuple.
    pub fn identity(&self) -> (&str, &str, &str) {
        (&self.resource_type, &self.code_system, &self.code_value)
    }

    /// Identity as an owned, ordered key (for deterministic set ops).
    pub fn identity_key(&self) -> String {
        format!(
            "{}|{}|{}",
            self.resource_type, self.code_system, self.code_value
        )
    }
}

impl ClinicalResource {
    /// The citation that resolves back to this resource.
    pub fn to_ref(&self) -> FhirResourceRef {
        FhirResourceRef::new(
            self.resource_type.as_str(),
            self.code.code_system.clone(),
            self.code.code_value.clone(),
            self.code.display.clone(),
        )
    }
}

/// The clinical stream: a patient's flattened record, read-only after
/// construction. Safe to share across concurrent patient pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalStream {
    patient_id: String,
    resources: Vec<ClinicalResource>,
}

impl ClinicalStream {
    pub fn new(patient_id: impl Into<String>, resources: Vec<ClinicalResource>) -> Self {
        Self {
            patient_id: patient_id.into(),
            resources,
        }
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn resources(&self) -> &[ClinicalResource] {
        &self.resources
    }

    pub fn count_by_kind(&self, kind: ResourceKind) -> usize {
        self.resources
            .iter()
            .filter(|r| r.resource_type == kind)
            .count()
    }

    /// Resolve a citation by exact `(resource_type, code_system,
    /// code_value)` tuple. Returns the first match in stream order.
    pub fn lookup(&self, reference: &FhirResourceRef) -> Option<&ClinicalResource> {
        self.resources.iter().find(|r| {
            r.resource_type.as_str() == reference.resource_type
                && r.code.code_system == reference.code_system
                && r.code.code_value == reference.code_value
        })
    }
}

/// Parse the `[SYSTEM:CODE]`-tagged entry lines of a rendered summary back
/// into citations. The tag is the last bracket group on each `- ` line;
/// the resource type is the first.
pub fn line_citations(summary_text: &str) -> Vec<FhirResourceRef> {
    let mut refs = Vec::new();
    for line in summary_text.lines() {
        let Some(rest) = line.strip_prefix("- [") else {
            continue;
        };
        let Some(type_end) = rest.find(']') else {
            continue;
        };
        let resource_type = &rest[..type_end];
        let Some(open) = line.rfind('[') else {
            continue;
        };
        let Some(tag) = line[open + 1..].strip_suffix(']') else {
            continue;
        };
        let Some((system, code)) = tag.split_once(':') else {
            continue;
        };
        refs.push(FhirResourceRef::new(resource_type, system, code, ""));
    }
    refs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_resource() -> ClinicalResource {
        ClinicalResource {
            resource_type: ResourceKind::MedicationRequest,
            code: CodeRef {
                code_system: "RxNorm".into(),
                code_value: "314076".into(),
                display: "lisinopril 10 MG Oral Tablet".into(),
            },
            value: "lisinopril 10 MG Oral Tablet".into(),
            status: "active".into(),
            temporal: Some(chrono::NaiveDate::from_ymd_opt(2019, 7, 2).unwrap()),
        }
    }

    #[test]
    fn lookup_matches_on_identity_tuple() {
        let stream = ClinicalStream::new("p1", vec![sample_resource()]);
        let hit = FhirResourceRef::new("MedicationRequest", "RxNorm", "314076", "whatever");
        let miss = FhirResourceRef::new("MedicationRequest", "RxNorm", "999999", "");
        assert!(stream.lookup(&hit).is_some());
        assert!(stream.lookup(&miss).is_none());
    }

    #[test]
    fn display_never_participates_in_lookup() {
        let stream = ClinicalStream::new("p1", vec![sample_resource()]);
        let r = FhirResourceRef::new("MedicationRequest", "RxNorm", "314076", "WRONG DISPLAY");
        assert_eq!(
            stream.lookup(&r).unwrap().code.display,
            "lisinopril 10 MG Oral Tablet"
        );
    }

    #[test]
    fn line_citations_take_last_bracket_group() {
        let text = "KEY OBSERVATIONS (most recent):\n- [Observation] Body mass index (BMI) [Ratio] = 30.44 kg/m2 [2019-07-02] [LOINC:39156-5]\n";
        let refs = line_citations(text);
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].identity(), ("Observation", "LOINC", "39156-5"));
    }
}
