//! Command implementations over file-based corpora.
//!
//! Every command reads its declared inputs, writes its declared outputs,
//! and is idempotent over unchanged inputs. Patient fan-out goes through
//! one worker pool; all file writes happen on the collecting thread, in
//! patient order, so scripted runs are byte-reproducible regardless of
//! worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use dsrecon_core::dataset::{self, demo};
use dsrecon_core::eval::{self, CascadeOptions, EvalInputs};
use dsrecon_core::extraction::{self, ExtractionOptions, ReplayTrace};
use dsrecon_core::fhir::{self, ClinicalStream, CuratedSummary, TokenBudget};
use dsrecon_core::gateway::Gateway;
use dsrecon_core::recon::{self, ReconciliationResult};
use dsrecon_core::transcript::{self, HybridTranscript};
use dsrecon_core::{Error, Result};

use crate::config::RunConfig;

/// Order-preserving parallel map over patients. Results come back in
/// input order; failures are reported per item.
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<(T, Result<R>)>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items
            .into_iter()
            .map(|t| {
                let r = f(&t);
                (t, r)
            })
            .collect();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<R>>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    items
        .into_iter()
        .zip(results)
        .map(|(t, cell)| {
            let r = cell
                .into_inner()
                .expect("result slot")
                .expect("worker pool covered every item");
            (t, r)
        })
        .collect()
}

/// Surface per-item failures on stderr; return the first error after the
/// whole batch ran (isolated failures never cancel other patients).
fn collect_failures<T: std::fmt::Display, R>(results: Vec<(T, Result<R>)>) -> Result<Vec<R>> {
    let mut out = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (item, result) in results {
        match result {
            Ok(r) => out.push(r),
            Err(e) => {
                eprintln!("error: {item}: {e}");
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn require_path(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("missing path: {what}")))
}

fn json_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == extension).unwrap_or(false))
        .collect();
    paths.sort();
    Ok(paths)
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::Data(format!("bad file name {}", path.display())))
}

/// Parse and curate every bundle in a directory, keyed by file stem.
fn load_streams(
    bundles: &Path,
    budget: TokenBudget,
) -> Result<BTreeMap<String, (ClinicalStream, CuratedSummary)>> {
    let mut out = BTreeMap::new();
    for path in json_files(bundles, "json")? {
        let pid = file_stem(&path)?;
        let parsed = fhir::parse_bundle(&std::fs::read_to_string(&path)?)?;
        let summary = fhir::curate(&parsed.stream, budget);
        out.insert(pid, (parsed.stream, summary));
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no bundles found under {}",
            bundles.display()
        )));
    }
    Ok(out)
}

fn stream_for<'a>(
    streams: &'a BTreeMap<String, (ClinicalStream, CuratedSummary)>,
    pid: &str,
) -> Result<&'a (ClinicalStream, CuratedSummary)> {
    streams
        .get(pid)
        .ok_or_else(|| Error::Data(format!("no bundle for patient {pid}")))
}

/// `gen-demo`: write a fully synthetic corpus plus its scripted fixture.
pub fn gen_demo(out: &Path, config: &demo::DemoConfig) -> Result<()> {
    let manifest = demo::generate(out, config)?;
    println!(
        "generated {} patients, {} sessions ({} real + {} synthetic), {} patient turns, {} scenarios, {} fixture entries -> {}",
        manifest.patients.len(),
        manifest.real_sessions + manifest.synthetic_sessions,
        manifest.real_sessions,
        manifest.synthetic_sessions,
        manifest.patient_turns,
        manifest.scenarios,
        manifest.fixture_entries,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SummaryManifest<'a> {
    patient_id: &'a str,
    estimated_tokens: usize,
    under_floor: bool,
    over_ceiling: bool,
    skipped_unsupported: &'a BTreeMap<String, usize>,
    warnings: &'a [String],
    included: &'a [fhir::ClinicalResource],
}

/// `curate`: bundle dir -> per-patient summary text plus sidecar manifest.
pub fn curate(config: &RunConfig, bundles: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let budget = config.budget()?;
    let mut count = 0usize;
    for path in json_files(bundles, "json")? {
        let pid = file_stem(&path)?;
        let parsed = fhir::parse_bundle(&std::fs::read_to_string(&path)?)?;
        let summary = fhir::curate(&parsed.stream, budget);
        std::fs::write(out.join(format!("{pid}.summary.txt")), &summary.text)?;
        let manifest = SummaryManifest {
            patient_id: &pid,
            estimated_tokens: summary.estimated_tokens,
            under_floor: summary.under_floor,
            over_ceiling: summary.over_ceiling,
            skipped_unsupported: &parsed.skipped_unsupported,
            warnings: &parsed.warnings,
            included: &summary.included,
        };
        std::fs::write(
            out.join(format!("{pid}.summary.json")),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        count += 1;
    }
    println!("curated {count} bundles -> {}", out.display());
    Ok(())
}

/// `segment`: raw message logs -> per-patient session files.
pub fn segment(messages: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let files = if messages.is_dir() {
        json_files(messages, "jsonl")?
    } else {
        vec![messages.to_path_buf()]
    };
    let mut sessions_total = 0usize;
    for path in &files {
        let pid = file_stem(path)?;
        let log = dataset::read_messages(path)?;
        let sessions = dataset::segment_messages(&pid, &log)?;
        sessions_total += sessions.len();
        transcript::write_transcript(
            out,
            &HybridTranscript {
                patient_id: pid,
                sessions,
            },
        )?;
    }
    println!(
        "segmented {} message logs into {sessions_total} sessions -> {}",
        files.len(),
        out.display()
    );
    Ok(())
}

/// `build-hybrid`: generate scenario sessions, interleave with the real
/// trajectory, and annotate every session with ground-truth events.
pub fn build_hybrid(
    config: &RunConfig,
    sessions: &Path,
    scenarios_path: &Path,
    bundles: &Path,
    out: &Path,
) -> Result<()> {
    let audit = config.audit_log()?;
    let generation = config.gateway(crate::config::Stage::Generation, audit.clone())?;
    let gt = config.gateway(crate::config::Stage::Generation, audit.clone())?;
    let scenarios = dataset::read_scenarios(scenarios_path)?;
    let streams = load_streams(bundles, config.budget()?)?;
    std::fs::create_dir_all(out)?;

    let mut session_files = json_files(sessions, "jsonl")?;
    session_files.sort();
    let mut built = 0usize;
    for path in &session_files {
        let pid = file_stem(path)?;
        let real = transcript::read_transcript(path)?.sessions;
        let patient_scenarios: Vec<dataset::Scenario> = scenarios
            .iter()
            .filter(|s| s.patient_id == pid)
            .cloned()
            .collect();
        let (_, summary) = stream_for(&streams, &pid)?;
        let transcript = dataset::build_hybrid(
            generation.as_ref(),
            gt.as_ref(),
            &pid,
            real,
            &patient_scenarios,
            summary,
        )?;
        transcript::write_transcript(out, &transcript)?;
        built += 1;
    }
    if let Some(a) = &audit {
        a.flush();
    }
    println!("built {built} hybrid transcripts -> {}", out.display());
    Ok(())
}

/// `replay`: run delta extraction over every patient turn of every
/// transcript.
pub fn replay(config: &RunConfig, transcripts: &Path, out: &Path) -> Result<()> {
    let audit = config.audit_log()?;
    let gateway = config.gateway(crate::config::Stage::Extraction, audit.clone())?;
    let options = ExtractionOptions {
        session_batched: config.session_batched,
    };
    std::fs::create_dir_all(out)?;
    let loaded = transcript::read_transcript_dir(transcripts)?;
    let results = parallel_map(loaded, config.workers(), |t| {
        replay_one(gateway.as_ref(), t, options)
    });
    let traces = collect_failures(
        results
            .into_iter()
            .map(|(t, r)| (t.patient_id.clone(), r))
            .collect(),
    )?;
    let mut turns = 0usize;
    for trace in &traces {
        extraction::write_trace(out, trace)?;
        turns += trace.entries.len();
    }
    if let Some(a) = &audit {
        a.flush();
    }
    println!(
        "replayed {} transcripts, {} patient turns -> {}",
        traces.len(),
        turns,
        out.display()
    );
    Ok(())
}

fn replay_one(
    gateway: &dyn Gateway,
    transcript: &HybridTranscript,
    options: ExtractionOptions,
) -> Result<ReplayTrace> {
    extraction::replay_transcript(gateway, transcript, options)
}

/// One persisted reconciliation result with its patient coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub patient_id: String,
    #[serde(flatten)]
    pub result: ReconciliationResult,
}

fn write_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    use std::io::BufRead;
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// `reconcile --isolated`: classify the ground-truth memories of every
/// synthetic session directly against the clinical stream.
pub fn reconcile_isolated(
    config: &RunConfig,
    transcripts: &Path,
    bundles: &Path,
    out_file: &Path,
) -> Result<()> {
    let audit = config.audit_log()?;
    let gateway = config.gateway(crate::config::Stage::Reconciliation, audit.clone())?;
    let streams = load_streams(bundles, config.budget()?)?;
    let loaded = transcript::read_transcript_dir(transcripts)?;
    let results = parallel_map(loaded, config.workers(), |t| {
        let (stream, summary) = stream_for(&streams, &t.patient_id)?;
        let results = recon::reconcile_gt_memories(gateway.as_ref(), t, stream, summary)?;
        Ok(results
            .into_iter()
            .map(|result| ResultRecord {
                patient_id: t.patient_id.clone(),
                result,
            })
            .collect::<Vec<_>>())
    });
    let per_patient = collect_failures(
        results
            .into_iter()
            .map(|(t, r)| (t.patient_id.clone(), r))
            .collect(),
    )?;
    let records: Vec<ResultRecord> = per_patient.into_iter().flatten().collect();
    write_results(out_file, &records)?;
    if let Some(a) = &audit {
        a.flush();
    }
    println!(
        "isolated reconciliation: {} results -> {}",
        records.len(),
        out_file.display()
    );
    Ok(())
}

/// `reconcile --pipeline`: classify the exact memories the replay
/// extracted, turn by turn.
pub fn reconcile_pipeline(
    config: &RunConfig,
    replay_dir: &Path,
    bundles: &Path,
    out_file: &Path,
) -> Result<()> {
    let audit = config.audit_log()?;
    let gateway = config.gateway(crate::config::Stage::Reconciliation, audit.clone())?;
    let streams = load_streams(bundles, config.budget()?)?;
    let patients = extraction::list_traces(replay_dir)?;
    let results = parallel_map(patients, config.workers(), |pid| {
        let trace = extraction::read_trace(replay_dir, pid)?;
        let (stream, summary) = stream_for(&streams, pid)?;
        let results = recon::reconcile_trace(gateway.as_ref(), &trace, stream, summary)?;
        Ok(results
            .into_iter()
            .map(|result| ResultRecord {
                patient_id: pid.clone(),
                result,
            })
            .collect::<Vec<_>>())
    });
    let per_patient = collect_failures(results)?;
    let records: Vec<ResultRecord> = per_patient.into_iter().flatten().collect();
    write_results(out_file, &records)?;
    if let Some(a) = &audit {
        a.flush();
    }
    println!(
        "pipeline reconciliation: {} results -> {}",
        records.len(),
        out_file.display()
    );
    Ok(())
}

/// `evaluate`: judge extraction quality, score both reconciliation passes,
/// and write the full report (JSON plus text rendering).
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    config: &RunConfig,
    transcripts_dir: &Path,
    scenarios_path: &Path,
    replay_dir: &Path,
    dim2_path: &Path,
    dim3_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let audit = config.audit_log()?;
    let gateway = config.gateway(crate::config::Stage::Judge, audit.clone())?;
    let transcripts = transcript::read_transcript_dir(transcripts_dir)?;
    let scenarios = dataset::read_scenarios(scenarios_path)?;
    let mut traces = BTreeMap::new();
    for pid in extraction::list_traces(replay_dir)? {
        traces.insert(pid.clone(), extraction::read_trace(replay_dir, &pid)?);
    }
    let dim2: Vec<(String, ReconciliationResult)> = read_results(dim2_path)?
        .into_iter()
        .map(|r| (r.patient_id, r.result))
        .collect();
    let dim3: Vec<(String, ReconciliationResult)> = read_results(dim3_path)?
        .into_iter()
        .map(|r| (r.patient_id, r.result))
        .collect();

    let report = eval::evaluate(
        gateway.as_ref(),
        &EvalInputs {
            transcripts: &transcripts,
            scenarios: &scenarios,
            traces: &traces,
            dim2_results: &dim2,
            dim3_results: &dim3,
        },
        &CascadeOptions {
            iterations: config.bootstrap.iterations,
            seed: config.bootstrap.seed,
            unit: config.bootstrap.unit,
            patient_of: BTreeMap::new(),
        },
    )?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let text = eval::report::render_text(&report);
    std::fs::write(out_dir.join("report.txt"), &text)?;
    if let Some(a) = &audit {
        a.flush();
    }
    print!("{text}");
    println!("report -> {}", out_dir.join("report.json").display());
    Ok(())
}

/// `report`: re-render a stored report.
pub fn report(report_path: &Path, out: Option<&Path>) -> Result<()> {
    let report: eval::EvalReport = serde_json::from_str(&std::fs::read_to_string(report_path)?)?;
    let text = eval::report::render_text(&report);
    match out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
