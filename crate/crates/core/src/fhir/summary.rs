//! Curated clinical summaries.
//!
//! Curation keeps the clinically loaded core (conditions, medications,
//! allergies) unconditionally, reduces observations to the most recent
//! value per code, and trims low-priority history until the rendering fits
//! the token budget. Rendering is a pure function of the included
//! resources and is byte-deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fhir::{ClinicalResource, ClinicalStream, ResourceKind};

/// Token budget window for the curated summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub min: usize,
    pub max: usize,
}

impl TokenBudget {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min >= max {
            return Err(Error::Data(format!(
                "token budget min ({min}) must be below max ({max})"
            )));
        }
        Ok(Self { min, max })
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            min: 1100,
            max: 1600,
        }
    }
}

/// A curated summary: the rendered text, the resources behind every tagged
/// line, and the audited token estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedSummary {
    pub text: String,
    pub included: Vec<ClinicalResource>,
    /// Characters / 4, rounded up. Recorded so budgets are auditable.
    pub estimated_tokens: usize,
    /// The bundle was too small to reach the budget floor.
    pub under_floor: bool,
    /// Trimming every trimmable resource still left the summary over the
    /// budget ceiling (the untrimmable core alone exceeds it).
    pub over_ceiling: bool,
}

/// Section order of the rendered summary. Encounters are parsed into the
/// stream but never summarized.
const SECTIONS: [(ResourceKind, &str); 7] = [
    (ResourceKind::Condition, "CONDITIONS:"),
    (ResourceKind::MedicationRequest, "MEDICATIONS:"),
    (ResourceKind::AllergyIntolerance, "ALLERGIES:"),
    (ResourceKind::Immunization, "IMMUNIZATIONS:"),
    (ResourceKind::CarePlan, "CARE PLANS:"),
    (ResourceKind::Procedure, "PROCEDURES:"),
    (ResourceKind::Observation, "KEY OBSERVATIONS (most recent):"),
];

/// Build the curated summary for a stream under a token budget.
///
/// Retained unconditionally: conditions that are active, resolved, or
/// carry no status; all medications; all allergies. Observations keep only
/// the most recent value per code. When the rendering exceeds the budget
/// ceiling, procedures are trimmed oldest-first, then the oldest
/// observations; the core classes are never trimmed. Deterministic for
/// identical input.
pub fn curate(stream: &ClinicalStream, budget: TokenBudget) -> CuratedSummary {
    let mut by_kind: BTreeMap<ResourceKind, Vec<(usize, &ClinicalResource)>> = BTreeMap::new();
    for (i, r) in stream.resources().iter().enumerate() {
        by_kind.entry(r.resource_type).or_default().push((i, r));
    }
    let take = |kind: ResourceKind| by_kind.get(&kind).cloned().unwrap_or_default();

    let mut conditions: Vec<_> = take(ResourceKind::Condition)
        .into_iter()
        .filter(|(_, r)| matches!(r.status.as_str(), "active" | "resolved" | ""))
        .collect();
    // Chronological onset order, undated first; stable by stream order.
    conditions.sort_by_key(|(i, r)| (r.temporal, *i));

    let mut medications = take(ResourceKind::MedicationRequest);
    // Most recently authored first, undated last.
    medications.sort_by_key(|(i, r)| (std::cmp::Reverse(r.temporal), *i));

    let allergies = take(ResourceKind::AllergyIntolerance);
    let care_plans = take(ResourceKind::CarePlan);

    let mut immunizations = take(ResourceKind::Immunization);
    immunizations.sort_by_key(|(i, r)| (std::cmp::Reverse(r.temporal), *i));

    let mut procedures = take(ResourceKind::Procedure);
    procedures.sort_by_key(|(i, r)| (std::cmp::Reverse(r.temporal), *i));

    // Most recent observation per code (ties go to the later stream
    // entry); sections list codes in order of first appearance.
    let mut latest: BTreeMap<(&str, &str), (usize, &ClinicalResource)> = BTreeMap::new();
    let mut first_seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (i, r) in take(ResourceKind::Observation) {
        let key = (r.code.code_system.as_str(), r.code.code_value.as_str());
        let seen = *first_seen.entry(key).or_insert(i);
        match latest.get(&key) {
            Some((_, current)) if current.temporal > r.temporal => {}
            _ => {
                latest.insert(key, (seen, r));
            }
        }
    }
    let mut observations: Vec<(usize, &ClinicalResource)> = latest.into_values().collect();
    observations.sort_by_key(|(seen, _)| *seen);

    let mut included = Included {
        conditions,
        medications,
        allergies,
        immunizations,
        care_plans,
        procedures,
        observations,
    };

    let mut text = render_resources(&included.in_render_order());
    let mut over_ceiling = false;
    while estimate_tokens(&text) > budget.max {
        if !included.trim_one() {
            over_ceiling = true;
            break;
        }
        text = render_resources(&included.in_render_order());
    }

    let estimated_tokens = estimate_tokens(&text);
    CuratedSummary {
        under_floor: estimated_tokens < budget.min,
        over_ceiling,
        included: included
            .in_render_order()
            .into_iter()
            .cloned()
            .collect(),
        estimated_tokens,
        text,
    }
}

struct Included<'a> {
    conditions: Vec<(usize, &'a ClinicalResource)>,
    medications: Vec<(usize, &'a ClinicalResource)>,
    allergies: Vec<(usize, &'a ClinicalResource)>,
    immunizations: Vec<(usize, &'a ClinicalResource)>,
    care_plans: Vec<(usize, &'a ClinicalResource)>,
    procedures: Vec<(usize, &'a ClinicalResource)>,
    observations: Vec<(usize, &'a ClinicalResource)>,
}

impl<'a> Included<'a> {
    fn in_render_order(&self) -> Vec<&'a ClinicalResource> {
        [
            &self.conditions,
            &self.medications,
            &self.allergies,
            &self.immunizations,
            &self.care_plans,
            &self.procedures,
            &self.observations,
        ]
        .into_iter()
        .flatten()
        .map(|(_, r)| *r)
        .collect()
    }

    /// Drop the next lowest-priority resource: oldest procedure first,
    /// then the oldest remaining observation. Returns false when nothing
    /// trimmable is left.
    fn trim_one(&mut self) -> bool {
        for list in [&mut self.procedures, &mut self.observations] {
            if !list.is_empty() {
                let oldest = list
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, (i, r))| (r.temporal, *i))
                    .map(|(pos, _)| pos)
                    .expect("non-empty");
                list.remove(oldest);
                return true;
            }
        }
        false
    }
}

/// Render the summary text from its included resources. Byte-deterministic.
pub fn render_summary(summary: &CuratedSummary) -> String {
    render_resources(&summary.included.iter().collect::<Vec<_>>())
}

fn render_resources(resources: &[&ClinicalResource]) -> String {
    let mut sections = Vec::new();
    for (kind, header) in SECTIONS {
        let lines: Vec<String> = resources
            .iter()
            .filter(|r| r.resource_type == kind)
            .map(|r| render_line(r))
            .collect();
        if !lines.is_empty() {
            sections.push(format!("{header}\n{}", lines.join("\n")));
        }
    }
    if sections.is_empty() {
        String::new()
    } else {
        format!("{}\n", sections.join("\n\n"))
    }
}

fn render_line(r: &ClinicalResource) -> String {
    let mut line = format!("- [{}] {}", r.resource_type, r.code.display);
    if r.resource_type == ResourceKind::Observation {
        if !r.value.is_empty() {
            line.push_str(&format!(" = {}", r.value));
        }
        if let Some(d) = r.temporal {
            line.push_str(&format!(" [{d}]"));
        }
    } else {
        if !r.status.is_empty() {
            line.push_str(&format!(" ({})", r.status));
        }
        if let Some(d) = r.temporal {
            line.push_str(&format!(" [{}: {d}]", date_label(r.resource_type)));
        }
    }
    line.push_str(&format!(
        " [{}:{}]",
        r.code.code_system, r.code.code_value
    ));
    line
}

fn date_label(kind: ResourceKind) -> &'static str {
    match kind {
        ResourceKind::Condition => "onset",
        ResourceKind::MedicationRequest => "authored",
        _ => "date",
    }
}

/// Characters / 4, rounded up. The tokenizer-free estimate recorded in
/// every summary.
pub(crate) fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}
