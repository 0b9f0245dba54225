//! Dual-stream clinical memory reconciliation.
//!
//! This crate separates a patient's conversational self-report (the narrative
//! stream) from their structured clinical record (the clinical stream, a
//! read-only FHIR R4 bundle), and reconciles every extracted memory against
//! the record instead of silently trusting the latest statement.
//!
//! The main moving parts:
//!
//! - [`fhir`] — FHIR R4 bundle parsing and the curated, inline-tagged
//!   clinical summary handed to the reconciliation prompt.
//! - [`memory`] — the mutable store of patient-reported memories, updated
//!   through explicit insert/update/delete deltas with duplicate and ID
//!   guards.
//! - [`gateway`] — structured-output chat completions: a live HTTP client
//!   for OpenAI-compatible endpoints and a deterministic scripted gateway
//!   for replayable runs.
//! - [`extraction`] — per-turn delta extraction over fixed transcripts,
//!   with per-turn snapshots for downstream judging.
//! - [`recon`] — the reconciliation engine: four-state discrepancy
//!   classification with severity, confidence, and FHIR resource citations.
//! - [`dataset`] — corpus construction: session segmentation, bundle
//!   candidate scoring, hybrid interleaving, and the two-call scenario
//!   generation pipeline.
//! - [`eval`] — the three-dimension evaluation framework, error-cascade
//!   accounting, and report rendering.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod fhir;
pub mod gateway;
pub mod memory;
pub mod prompts;
pub mod recon;
pub mod transcript;

pub use error::{Error, Result};
