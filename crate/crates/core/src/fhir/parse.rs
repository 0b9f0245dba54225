//! FHIR R4 bundle parsing into the clinical stream.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fhir::{ClinicalResource, ClinicalStream, CodeRef, ResourceKind};

/// Result of parsing one bundle: the stream plus everything that was
/// skipped on the way.
#[derive(Debug, Clone)]
pub struct ParsedBundle {
    pub stream: ClinicalStream,
    /// Unsupported resource types encountered, with counts.
    pub skipped_unsupported: BTreeMap<String, usize>,
    /// Supported entries dropped for missing codings, one note each.
    pub warnings: Vec<String>,
    pub gender: Option<String>,
    pub birth_date: Option<NaiveDate>,
}

/// Parse a FHIR R4 Bundle document.
pub fn parse_bundle(document: &str) -> Result<ParsedBundle> {
    let value: Value = serde_json::from_str(document).map_err(|e| Error::BundleParse {
        entry: None,
        detail: format!("invalid JSON: {e}"),
    })?;
    parse_bundle_value(&value)
}

/// Parse an already-deserialized bundle document.
pub fn parse_bundle_value(bundle: &Value) -> Result<ParsedBundle> {
    if bundle.get("resourceType").and_then(Value::as_str) != Some("Bundle") {
        return Err(Error::BundleParse {
            entry: None,
            detail: "resourceType is not \"Bundle\"".into(),
        });
    }
    let entries = match bundle.get("entry") {
        None => &[] as &[Value],
        Some(Value::Array(a)) => a.as_slice(),
        Some(_) => {
            return Err(Error::BundleParse {
                entry: None,
                detail: "entry is not an array".into(),
            })
        }
    };

    let mut resources = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut patient_id = None;
    let mut gender = None;
    let mut birth_date = None;

    for (index, entry) in entries.iter().enumerate() {
        let resource = entry.get("resource").ok_or_else(|| Error::BundleParse {
            entry: Some(index),
            detail: "entry has no resource".into(),
        })?;
        let type_name = resource
            .get("resourceType")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::BundleParse {
                entry: Some(index),
                detail: "resource has no resourceType".into(),
            })?;

        if type_name == "Patient" {
            patient_id = resource
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_owned);
            gender = resource
                .get("gender")
                .and_then(Value::as_str)
                .map(str::to_owned);
            birth_date = match resource.get("birthDate").and_then(Value::as_str) {
                Some(s) => Some(parse_date(s, index)?),
                None => None,
            };
            continue;
        }

        let Some(kind) = ResourceKind::from_name(type_name) else {
            *skipped.entry(type_name.to_owned()).or_insert(0) += 1;
            continue;
        };

        match flatten(kind, resource, index)? {
            Flattened::Resources(mut rs) => resources.append(&mut rs),
            Flattened::MissingCoding => warnings.push(format!(
                "entry {index}: {type_name} has no usable coding, skipped"
            )),
        }
    }

    Ok(ParsedBundle {
        stream: ClinicalStream::new(patient_id.unwrap_or_else(|| "unknown".into()), resources),
        skipped_unsupported: skipped,
        warnings,
        gender,
        birth_date,
    })
}

enum Flattened {
    Resources(Vec<ClinicalResource>),
    MissingCoding,
}

fn flatten(kind: ResourceKind, resource: &Value, index: usize) -> Result<Flattened> {
    let out = match kind {
        ResourceKind::Condition => {
            let Some(code) = coding_of(resource.get("code")) else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: clinical_status(resource),
                temporal: date_field(resource, &["onsetDateTime"], index)?,
                code,
            }]
        }
        ResourceKind::MedicationRequest => {
            let Some(code) = coding_of(resource.get("medicationCodeableConcept")) else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: status_field(resource),
                temporal: date_field(resource, &["authoredOn"], index)?,
                code,
            }]
        }
        ResourceKind::AllergyIntolerance => {
            let Some(code) = coding_of(resource.get("code")) else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: clinical_status(resource),
                temporal: date_field(resource, &["onsetDateTime", "recordedDate"], index)?,
                code,
            }]
        }
        ResourceKind::Immunization => {
            let Some(code) = coding_of(resource.get("vaccineCode")) else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: status_field(resource),
                temporal: date_field(resource, &["occurrenceDateTime", "date"], index)?,
                code,
            }]
        }
        ResourceKind::CarePlan => return flatten_care_plan(resource, index),
        ResourceKind::Observation => {
            let Some(code) = coding_of(resource.get("code")) else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: observation_value(resource),
                // Observation lines never render a status.
                status: String::new(),
                temporal: date_field(resource, &["effectiveDateTime"], index)?,
                code,
            }]
        }
        ResourceKind::Procedure => {
            let Some(code) = coding_of(resource.get("code")) else {
                return Ok(Flattened::MissingCoding);
            };
            let temporal = match date_field(resource, &["performedDateTime"], index)? {
                Some(d) => Some(d),
                None => period_start(resource.get("performedPeriod"), index)?,
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: status_field(resource),
                temporal,
                code,
            }]
        }
        ResourceKind::Encounter => {
            let Some(code) = resource
                .get("type")
                .and_then(Value::as_array)
                .and_then(|a| a.first())
                .and_then(|t| coding_of(Some(t)))
            else {
                return Ok(Flattened::MissingCoding);
            };
            vec![ClinicalResource {
                resource_type: kind,
                value: code.display.clone(),
                status: status_field(resource),
                temporal: period_start(resource.get("period"), index)?,
                code,
            }]
        }
    };
    Ok(Flattened::Resources(out))
}

/// Care plans flatten to one entity per activity, displayed as
/// "{addressed problem}: {activity}" when the plan names what it
/// addresses.
fn flatten_care_plan(resource: &Value, index: usize) -> Result<Flattened> {
    let prefix = care_plan_context(resource);
    let temporal = period_start(resource.get("period"), index)?;
    let Some(activities) = resource.get("activity").and_then(Value::as_array) else {
        return Ok(Flattened::MissingCoding);
    };

    let mut out = Vec::new();
    for activity in activities {
        let Some(code) = coding_of(activity.get("detail").and_then(|d| d.get("code"))) else {
            continue;
        };
        let display = match &prefix {
            Some(p) => format!("{p}: {}", code.display),
            None => code.display.clone(),
        };
        out.push(ClinicalResource {
            resource_type: ResourceKind::CarePlan,
            value: display.clone(),
            // Care plan lines never render a status.
            status: String::new(),
            temporal,
            code: CodeRef {
                code_system: code.code_system,
                code_value: code.code_value,
                display,
            },
        });
    }
    if out.is_empty() {
        return Ok(Flattened::MissingCoding);
    }
    Ok(Flattened::Resources(out))
}

fn care_plan_context(resource: &Value) -> Option<String> {
    if let Some(display) = resource
        .get("addresses")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .and_then(|r| r.get("display"))
        .and_then(Value::as_str)
    {
        return Some(display.to_owned());
    }
    if let Some(reason) = resource
        .get("reasonCode")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
    {
        if let Some(text) = reason.get("text").and_then(Value::as_str) {
            return Some(text.to_owned());
        }
        if let Some(c) = coding_of(Some(reason)) {
            return Some(c.display);
        }
    }
    resource
        .get("category")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .and_then(|c| c.get("text"))
        .and_then(Value::as_str)
        .map(str::to_owned)
}

/// First coding of a CodeableConcept, with the terminology system mapped
/// to its conventional short name.
fn coding_of(concept: Option<&Value>) -> Option<CodeRef> {
    let concept = concept?;
    let coding = concept.get("coding")?.as_array()?.first()?;
    let system = coding.get("system").and_then(Value::as_str).unwrap_or("");
    let code = coding.get("code").and_then(Value::as_str)?;
    let display = coding
        .get("display")
        .and_then(Value::as_str)
        .or_else(|| concept.get("text").and_then(Value::as_str))
        .unwrap_or(code);
    Some(CodeRef {
        code_system: short_system(system).to_owned(),
        code_value: code.to_owned(),
        display: display.to_owned(),
    })
}

fn short_system(uri: &str) -> &str {
    match uri {
        "http://snomed.info/sct" => "SNOMED-CT",
        "http://www.nlm.nih.gov/research/umls/rxnorm" => "RxNorm",
        "http://loinc.org" => "LOINC",
        "http://hl7.org/fhir/sid/cvx" => "CVX",
        other => other,
    }
}

fn clinical_status(resource: &Value) -> String {
    resource
        .get("clinicalStatus")
        .and_then(|s| s.get("coding"))
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .and_then(|c| c.get("code"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_owned()
}

fn status_field(resource: &Value) -> String {
    resource
        .get("status")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_owned()
}

fn observation_value(resource: &Value) -> String {
    if let Some(q) = resource.get("valueQuantity") {
        return quantity_text(q);
    }
    if let Some(components) = resource.get("component").and_then(Value::as_array) {
        let parts: Vec<String> = components
            .iter()
            .filter_map(|c| {
                let code = coding_of(c.get("code"))?;
                let q = c.get("valueQuantity")?;
                Some(format!("{}: {}", code.display, quantity_text(q)))
            })
            .collect();
        if !parts.is_empty() {
            return parts.join(" / ");
        }
    }
    if let Some(s) = resource.get("valueString").and_then(Value::as_str) {
        return s.to_owned();
    }
    if let Some(c) = coding_of(resource.get("valueCodeableConcept")) {
        return c.display;
    }
    String::new()
}

fn quantity_text(quantity: &Value) -> String {
    let value = quantity.get("value").and_then(Value::as_f64);
    let unit = quantity.get("unit").and_then(Value::as_str).unwrap_or("");
    match value {
        Some(v) => {
            let number = if v.fract() == 0.0 {
                format!("{v:.1}")
            } else {
                format!("{v}")
            };
            if unit.is_empty() {
                number
            } else {
                format!("{number} {unit}")
            }
        }
        None => unit.to_owned(),
    }
}

fn date_field(resource: &Value, fields: &[&str], index: usize) -> Result<Option<NaiveDate>> {
    for field in fields {
        if let Some(s) = resource.get(*field).and_then(Value::as_str) {
            return Ok(Some(parse_date(s, index)?));
        }
    }
    Ok(None)
}

fn period_start(period: Option<&Value>, index: usize) -> Result<Option<NaiveDate>> {
    match period.and_then(|p| p.get("start")).and_then(Value::as_str) {
        Some(s) => Ok(Some(parse_date(s, index)?)),
        None => Ok(None),
    }
}

/// Accepts FHIR date or dateTime strings; only the calendar date is kept.
fn parse_date(s: &str, index: usize) -> Result<NaiveDate> {
    let date_part = if s.len() >= 10 { &s[..10] } else { s };
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|_| Error::BundleParse {
        entry: Some(index),
        detail: format!("invalid date {s:?}"),
    })
}
