//! The full audit: schema statistics, contamination probe, and translation
//! accuracy on original and disconnected dumps, run in that order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::config::{Config, TransportMode};
use crate::contamination::{run_dc_audit, DcReport, MaskOptions, DC_PROMPT_VERSION};
use crate::dataset::Dataset;
use crate::llm::{
    run_translation_suite, HttpTransport, LlmClient, LoggedRequest, RecordingTransport, ReplayTransport, StoreError,
    TranscriptStore, TranslationOutcome, Transport, Variant,
};
use crate::report::{self, EvalColumn, ReportStamp};
use crate::stats::{compute_fact_sheet, FactSheet, Wordlist};
use crate::tsa::{evaluate_suite, EvalItem, EvalReport, TsaOptions};

pub const FACT_SHEET: &str = "fact_sheet.md";
pub const NAME_CLASSES: &str = "name_classes.csv";
pub const DC_REPORT: &str = "dc_report.md";
pub const DC_CSV: &str = "dc_per_database.csv";
pub const EVAL_REPORT: &str = "eval_report.md";
pub const EVAL_CSV: &str = "eval_per_database.csv";
pub const MANUAL_REVIEW: &str = "manual_review.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const AUDIT_LOG: &str = "audit.log";

/// Name of the request log written for a stage.
pub fn request_log_file(stage: &str) -> String {
    format!("requests_{stage}.jsonl")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    /// Completed, but some items could not be processed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageResult {
    pub stage: String,
    pub status: StageStatus,
    pub detail: String,
}

/// Report files keyed by file name, plus the stage log.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub files: BTreeMap<String, String>,
    pub stages: Vec<StageResult>,
    pub transport_failures: usize,
}

impl AuditOutcome {
    /// 0 when every stage is clean, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.transport_failures == 0 && self.stages.iter().all(|s| s.status == StageStatus::Ok) {
            0
        } else {
            1
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

/// The transport selected by `audit.mode`, backed by `audit.transcripts`.
pub fn build_transport(config: &Config) -> Result<Arc<dyn Transport>, StoreError> {
    let path = config.resolve(&config.audit.transcripts);
    Ok(match config.audit.mode {
        TransportMode::Replay => Arc::new(ReplayTransport::new(Arc::new(TranscriptStore::open_existing(&path)?))),
        TransportMode::Record => {
            let store = Arc::new(TranscriptStore::open(&path)?);
            Arc::new(RecordingTransport::new(Arc::new(HttpTransport::new(config.llm.http())), store))
        }
        TransportMode::Live => Arc::new(HttpTransport::new(config.llm.http())),
    })
}

pub fn stamp(config: &Config) -> ReportStamp {
    ReportStamp::new(config.hash(), config.audit.seed)
}

fn requests_jsonl(entries: &[(&str, Vec<LoggedRequest>)], stamp: &ReportStamp) -> String {
    let mut out = stamp.jsonl_header();
    for (dataset, log) in entries {
        for r in log {
            let mut v = serde_json::to_value(r).expect("serialises");
            v["dataset"] = (*dataset).into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
    out
}

struct Auditor<'a> {
    config: &'a Config,
    datasets: &'a [Dataset],
    client: LlmClient,
    stamp: ReportStamp,
    files: BTreeMap<String, String>,
    stages: Vec<StageResult>,
    transport_failures: usize,
}

impl Auditor<'_> {
    fn stage(&mut self, stage: String, status: StageStatus, detail: String) {
        self.stages.push(StageResult { stage, status, detail });
    }

    fn fact_sheets(&mut self, wordlist: &Wordlist) {
        let mut sheets: Vec<(String, FactSheet)> = Vec::new();
        for ds in self.datasets {
            match compute_fact_sheet(&ds.dumps, &ds.records, wordlist) {
                Ok(sheet) => {
                    self.stage(format!("fact_sheet/{}", ds.name), StageStatus::Ok, format!("{} databases", sheet.db_count));
                    sheets.push((ds.name.clone(), sheet));
                }
                Err(e) => self.stage(format!("fact_sheet/{}", ds.name), StageStatus::Failed, e.to_string()),
            }
        }
        let stamp = self.stamp.clone().with("wordlist entries", wordlist.len());
        self.files.insert(FACT_SHEET.into(), report::fact_sheet_markdown(&sheets, &stamp));
        self.files.insert(NAME_CLASSES.into(), report::name_classes_csv(&sheets, &stamp));
    }

    fn contamination(&mut self) {
        let options = MaskOptions {
            ratio: self.config.audit.mask_ratio,
            seed: self.config.audit.seed,
            exclude_pk: self.config.audit.exclude_pk,
        };
        let mut reports: Vec<(String, DcReport)> = Vec::new();
        let mut logs = Vec::new();
        for ds in self.datasets {
            let report = run_dc_audit(&ds.dumps, &self.client, &options);
            let status = if report.undecided.is_empty() { StageStatus::Ok } else { StageStatus::Partial };
            let mut detail = format!("{} scored, {} undecided", report.per_database.len(), report.undecided.len());
            for u in &report.undecided {
                let _ = write!(detail, "; {}: {}", u.database, u.reason);
            }
            self.stage(format!("dc/{}", ds.name), status, detail);
            logs.push((ds.name.as_str(), self.client.take_request_log()));
            reports.push((ds.name.clone(), report));
        }
        self.transport_failures += logs.iter().flat_map(|(_, l)| l).filter(|r| !r.ok).count();
        let stamp = self
            .stamp
            .clone()
            .with("prompt", DC_PROMPT_VERSION)
            .with("mask ratio", options.ratio)
            .with("exclude pk", options.exclude_pk);
        self.files.insert(DC_REPORT.into(), report::dc_markdown(&reports, &stamp));
        self.files.insert(DC_CSV.into(), report::dc_csv(&reports, &stamp));
        self.files.insert(request_log_file("dc"), requests_jsonl(&logs, &stamp));
    }

    /// Translates and judges every dataset under `variant`.
    fn translation(&mut self, variant: Variant) -> Vec<(String, Vec<TranslationOutcome>, Option<EvalReport>)> {
        let tsa = TsaOptions { max_instances: self.config.audit.max_instances, base_seed: self.config.audit.seed };
        let mut results = Vec::new();
        let mut logs = Vec::new();
        for ds in self.datasets {
            let stage = format!("translate/{variant}/{}", ds.name);
            let outcomes = match run_translation_suite(&ds.dumps, &ds.records, &self.client, variant) {
                Ok(o) => o,
                Err(e) => {
                    self.stage(stage, StageStatus::Failed, e.to_string());
                    continue;
                }
            };
            logs.push((ds.name.as_str(), self.client.take_request_log()));
            let failures: Vec<&TranslationOutcome> = outcomes.iter().filter(|o| o.prediction.is_transport_failure()).collect();
            self.transport_failures += failures.len();
            let status = if failures.is_empty() { StageStatus::Ok } else { StageStatus::Partial };
            let mut detail = format!("{} questions, {} transport failures", outcomes.len(), failures.len());
            if let Some(first) = failures.first() {
                let _ = write!(detail, "; first: {}", first.record.id);
            }
            self.stage(stage, status, detail);

            let items: Vec<EvalItem> =
                outcomes.iter().filter(|o| !o.prediction.is_transport_failure()).map(EvalItem::from).collect();
            let stage = format!("evaluate/{variant}/{}", ds.name);
            let report = match evaluate_suite(&items, &ds.dumps, &tsa) {
                Ok(r) => {
                    let detail = format!("{} judged, {} undecidable", r.items.len(), r.manual_review.len());
                    self.stage(stage, StageStatus::Ok, detail);
                    Some(r)
                }
                Err(e) => {
                    self.stage(stage, StageStatus::Failed, e.to_string());
                    None
                }
            };
            results.push((ds.name.clone(), outcomes, report));
        }
        let stamp = self.stamp.clone().with("variant", variant);
        self.files.insert(request_log_file(variant.as_str()), requests_jsonl(&logs, &stamp));
        results
    }

    fn log(&self) -> String {
        let mut out = self.stamp.csv_comment();
        for ds in self.datasets {
            let _ = writeln!(out, "dataset {}: {} databases, {} questions", ds.name, ds.dumps.len(), ds.records.len());
            for w in &ds.warnings {
                let _ = writeln!(out, "  warning: {w}");
            }
        }
        for s in &self.stages {
            let status = match s.status {
                StageStatus::Ok => "ok",
                StageStatus::Partial => "partial",
                StageStatus::Failed => "failed",
            };
            let _ = writeln!(out, "{}: {status}: {}", s.stage, s.detail);
        }
        let _ = writeln!(out, "transport failures: {}", self.transport_failures);
        out
    }
}

/// Runs every stage; a failing stage is logged and the next one still runs.
pub fn run_audit(config: &Config, datasets: &[Dataset], transport: Arc<dyn Transport>, wordlist: &Wordlist) -> AuditOutcome {
    let mut a = Auditor {
        config,
        datasets,
        client: LlmClient::new(transport, config.llm.params(), config.llm.concurrency),
        stamp: stamp(config),
        files: BTreeMap::new(),
        stages: Vec::new(),
        transport_failures: 0,
    };
    a.fact_sheets(wordlist);
    a.contamination();
    let original = a.translation(Variant::Original);
    let atd = a.translation(Variant::Atd);

    let mut columns = Vec::new();
    for (variant, results) in [(Variant::Original, &original), (Variant::Atd, &atd)] {
        for (dataset, _, report) in results.iter() {
            if let Some(report) = report {
                columns.push(EvalColumn { dataset, variant, report });
            }
        }
    }
    let stamp = a.stamp.clone().with("max instances", config.audit.max_instances);
    a.files.insert(EVAL_REPORT.into(), report::eval_markdown(&columns, &stamp));
    a.files.insert(EVAL_CSV.into(), report::eval_csv(&columns, &stamp));
    a.files.insert(MANUAL_REVIEW.into(), report::manual_review_jsonl(&columns, &stamp));
    let outcomes: Vec<(&str, &[TranslationOutcome])> =
        original.iter().chain(&atd).map(|(d, o, _)| (d.as_str(), o.as_slice())).collect();
    a.files.insert(PREDICTIONS.into(), report::predictions_jsonl(&outcomes, &stamp));
    let log = a.log();
    a.files.insert(AUDIT_LOG.into(), log);
    AuditOutcome { files: a.files, stages: a.stages, transport_failures: a.transport_failures }
}
