//! Human-readable report rendering, mirroring the result tables' row
//! order: extraction quality, reconciliation (isolated vs pipeline with
//! the cascade delta), detection by resource type, then cascade detail,
//! conversation-length correlations, and real-session specificity.

use std::fmt::Write;

use crate::eval::{DimReport, EvalReport, Pearson};
use crate::recon::ContradictionType;

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn pct_opt(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_else(|| "n/a".into())
}

fn corr(p: &Option<Pearson>) -> String {
    match p {
        Some(p) => format!("r = {:.2}, p = {:.3} (n = {})", p.r, p.p, p.n),
        None => "n/a (insufficient or degenerate data)".into(),
    }
}

fn metric_row(out: &mut String, label: &str, dim2: String, dim3: String, delta: Option<String>) {
    let delta = delta.unwrap_or_default();
    let _ = writeln!(out, "  {label:<28} {dim2:>12} {dim3:>14} {delta:>8}");
}

fn signed_pct(a: Option<f64>, b: Option<f64>) -> Option<String> {
    match (a, b) {
        (Some(a), Some(b)) => Some(format!("{:+.1}%", 100.0 * (b - a))),
        _ => None,
    }
}

/// Render the full report as plain text.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "=== Dimension 1: Memory Extraction ===");
    let d1 = &report.dim1;
    let _ = writeln!(out, "  GT Recall (match + partial)   {}", pct(d1.recall));
    let _ = writeln!(out, "  Strict Recall (match only)    {}", pct(d1.strict_recall));
    let _ = writeln!(out, "  Faithfulness (/5)             {:.1}", d1.faithfulness_mean);
    let _ = writeln!(out, "  Deduplication (/5)            {:.1}", d1.deduplication_mean);
    let _ = writeln!(out, "  Ground-truth events           {}", d1.total_events);
    let _ = writeln!(out, "  Patient turns processed       {}", d1.patient_turns);
    let _ = writeln!(out, "  Final memories extracted      {}", d1.final_memories);

    let _ = writeln!(out);
    let _ = writeln!(out, "=== Dimensions 2 & 3: Reconciliation ===");
    metric_row(
        &mut out,
        "Metric",
        "Isolated".into(),
        "Full Pipeline".into(),
        Some("Delta".into()),
    );
    let d2 = &report.dim2;
    let d3 = &report.dim3;
    metric_row(
        &mut out,
        "Detection rate",
        pct(d2.detection),
        pct(d3.detection),
        signed_pct(Some(d2.detection), Some(d3.detection)),
    );
    metric_row(
        &mut out,
        "Resource-informed detection",
        pct(d2.resource_informed),
        pct(d3.resource_informed),
        signed_pct(Some(d2.resource_informed), Some(d3.resource_informed)),
    );
    metric_row(
        &mut out,
        "Safety recall",
        pct_opt(d2.safety_recall),
        pct_opt(d3.safety_recall),
        signed_pct(d2.safety_recall, d3.safety_recall),
    );
    metric_row(
        &mut out,
        "Severity within-1",
        pct(d2.severity_within1),
        pct(d3.severity_within1),
        signed_pct(Some(d2.severity_within1), Some(d3.severity_within1)),
    );
    metric_row(
        &mut out,
        "Severity exact match",
        pct(d2.severity_exact),
        pct(d3.severity_exact),
        signed_pct(Some(d2.severity_exact), Some(d3.severity_exact)),
    );
    metric_row(
        &mut out,
        "Resource recall (mean)",
        pct(d2.resource_recall_mean),
        pct(d3.resource_recall_mean),
        signed_pct(Some(d2.resource_recall_mean), Some(d3.resource_recall_mean)),
    );
    metric_row(
        &mut out,
        "Resource precision (mean)",
        pct_opt(d2.resource_precision_mean),
        pct_opt(d3.resource_precision_mean),
        signed_pct(d2.resource_precision_mean, d3.resource_precision_mean),
    );
    let _ = writeln!(
        out,
        "  (severity accuracy counts undetected scenarios as non-matching;\n   precision means exclude scenarios with no predicted references)"
    );

    let _ = writeln!(out);
    let _ = writeln!(out, "=== Detection by FHIR resource type ===");
    let _ = writeln!(
        out,
        "  {:<22} {:>10} {:>10} {:>14}",
        "Resource Type", "Scenarios", "Isolated", "Full Pipeline"
    );
    let rate3: std::collections::BTreeMap<&str, f64> = d3
        .per_type
        .iter()
        .map(|r| (r.resource_type.as_str(), r.detection_rate))
        .collect();
    for row in &d2.per_type {
        let pipeline = rate3
            .get(row.resource_type.as_str())
            .map(|r| pct(*r))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "  {:<22} {:>10} {:>10} {:>14}",
            row.resource_type,
            row.scenarios,
            pct(row.detection_rate),
            pipeline
        );
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "=== Error cascade ===");
    let c = &report.cascade;
    let _ = writeln!(
        out,
        "  Detected: isolated {} / pipeline {} of {} scenarios",
        c.dim2_detected, c.dim3_detected, c.scenario_count
    );
    let _ = writeln!(
        out,
        "  Delta {} (95% CI [{}, {}], {} resamples, seed {}, unit {:?})",
        pct(c.delta),
        pct(c.ci_low),
        pct(c.ci_high),
        c.iterations,
        c.seed,
        c.unit
    );
    let _ = writeln!(
        out,
        "  Lost through the cascade: {}; gained: {}",
        c.lost.len(),
        c.gained.len()
    );
    let _ = writeln!(
        out,
        "  Accounting: {} = {} - {} + {}",
        c.dim3_detected,
        c.dim2_detected,
        c.lost.len(),
        c.gained.len()
    );
    let _ = writeln!(out, "  Classification of detected scenarios:");
    for (label, dim) in [("isolated", d2), ("pipeline", d3)] {
        let _ = writeln!(out, "    {label}: {}", classification_line(dim));
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "=== Conversation-length correlations ===");
    let _ = writeln!(
        out,
        "  Extraction recall vs patient turns: {}",
        corr(&report.correlations.recall_vs_turns)
    );
    let _ = writeln!(
        out,
        "  Pipeline detection vs patient turns: {}",
        corr(&report.correlations.detection_vs_turns)
    );

    let _ = writeln!(out);
    let _ = writeln!(out, "=== Specificity (real sessions) ===");
    match &report.specificity {
        Some(s) => {
            let _ = writeln!(out, "  Results analyzed: {}", s.total_results);
            for (classification, fraction) in &s.fractions {
                let _ = writeln!(out, "  {:<14} {}", classification.as_str(), pct(*fraction));
            }
            let _ = writeln!(out, "  Contradictions flagged: {}", s.contradiction_count);
        }
        None => {
            let _ = writeln!(out, "  (no real-session reconciliation results)");
        }
    }
    out
}

fn classification_line(dim: &DimReport) -> String {
    if dim.classification.is_empty() {
        return "(none detected)".into();
    }
    ContradictionType::ALL
        .iter()
        .filter_map(|c| {
            dim.classification
                .get(c)
                .map(|n| format!("{} {}", c.as_str(), n))
        })
        .collect::<Vec<_>>()
        .join(", ")
}
