//! Markdown, CSV and JSON-lines renderings of the audit results. Output is a
//! pure function of its inputs: no timestamps, no host details.

use std::fmt::Write as _;

use serde::Serialize;

use crate::contamination::DcReport;
use crate::hardness::{HardnessHistogram, HardnessLevel, QueryRecord};
use crate::llm::{TranslationOutcome, Variant};
use crate::mcq::{AnnotationScore, ScoreReport};
use crate::stats::FactSheet;
use crate::tsa::EvalReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportStamp {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(String, String)>,
}

impl ReportStamp {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        ReportStamp {
            tool: "sqlcontam".into(),
            version: TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    fn fields(&self) -> String {
        let mut s = format!("{} {}, config sha256 {}, seed {}", self.tool, self.version, self.config_hash, self.seed);
        for (k, v) in &self.extra {
            let _ = write!(s, ", {k} {v}");
        }
        s
    }

    pub fn markdown(&self) -> String {
        format!("_{}_\n", self.fields())
    }

    pub fn csv_comment(&self) -> String {
        format!("# {}\n", self.fields())
    }

    pub fn jsonl_header(&self) -> String {
        format!("{}\n", serde_json::json!({ "meta": self }))
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn mean_std(s: Option<crate::summary::Summary>) -> String {
    match s {
        Some(s) => format!("{} (±{})", pct(s.mean), pct(s.std)),
        None => "n/a".into(),
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn level_label(level: HardnessLevel) -> &'static str {
    match level {
        HardnessLevel::Easy => "EASY",
        HardnessLevel::Medium => "MEDIUM",
        HardnessLevel::Hard => "HARD",
        HardnessLevel::ExtraHard => "EXTRA-HARD",
    }
}

/// Dataset-level schema statistics, one column per dataset.
pub fn fact_sheet_markdown(sheets: &[(String, FactSheet)], stamp: &ReportStamp) -> String {
    let mut out = format!("# Dataset fact sheet\n\n{}\n", stamp.markdown());
    let _ = write!(out, "| |");
    for (name, _) in sheets {
        let _ = write!(out, " {name} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(sheets.len()));
    out.push('\n');
    type Row = (&'static str, fn(&FactSheet) -> String);
    let rows: [Row; 8] = [
        ("#DB", |f| f.db_count.to_string()),
        ("avg #TABLES per DB", |f| format!("{:.2}", f.avg_tables_per_db)),
        ("avg #COLUMNS per TABLE", |f| format!("{:.2}", f.avg_columns_per_table)),
        ("#QUERY", |f| f.query_count.to_string()),
        ("avg #QUERY per DB", |f| format!("{:.2}", f.avg_queries_per_db)),
        ("avg #FK / #COLUMNS per DB", |f| format!("{:.2}", f.avg_fk_per_columns_per_db)),
        ("avg #COMPOUND / #COLUMNS per DB", |f| format!("{:.2}", f.avg_compound_per_columns_per_db)),
        ("avg #ABBR / #COLUMNS per DB", |f| format!("{:.2}", f.avg_abbr_per_columns_per_db)),
    ];
    for (label, value) in rows {
        let _ = write!(out, "| {label} |");
        for (_, sheet) in sheets {
            let _ = write!(out, " {} |", value(sheet));
        }
        out.push('\n');
    }
    out
}

/// Per-database schema statistics.
pub fn name_classes_csv(sheets: &[(String, FactSheet)], stamp: &ReportStamp) -> String {
    let mut out = stamp.csv_comment();
    out.push_str("dataset,database,tables,columns,foreign_keys,compound,abbreviated,queries,fk_ratio,compound_ratio,abbreviation_ratio\n");
    for (name, sheet) in sheets {
        for d in &sheet.per_database {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4}",
                csv_escape(name),
                csv_escape(&d.name),
                d.tables,
                d.columns,
                d.foreign_keys,
                d.compound_columns,
                d.abbreviated_columns,
                d.queries,
                d.fk_ratio(),
                d.compound_ratio(),
                d.abbreviation_ratio()
            );
        }
    }
    out
}

/// Mean and range per dataset, then one table of databases per dataset.
pub fn dc_markdown(reports: &[(String, DcReport)], stamp: &ReportStamp) -> String {
    let mut out = format!("# DC-accuracy\n\n{}\n", stamp.markdown());
    out.push_str("| DC-accuracy |");
    for (name, _) in reports {
        let _ = write!(out, " {name} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(reports.len()));
    out.push_str("\n| Mean |");
    for (_, r) in reports {
        let _ = write!(out, " {} |", mean_std(r.summary));
    }
    out.push_str("\n| Min - Max |");
    for (_, r) in reports {
        match r.summary {
            Some(s) => {
                let _ = write!(out, " {} - {} |", pct(s.min), pct(s.max));
            }
            None => out.push_str(" n/a |"),
        }
    }
    out.push('\n');
    for (name, r) in reports {
        let _ = write!(out, "\n## {name}\n\n| database | masked | correct | DC-accuracy |\n|---|---:|---:|---:|\n");
        for d in &r.per_database {
            let _ = writeln!(out, "| {} | {} | {} | {:.2} |", d.database, d.score.total, d.score.correct, d.score.accuracy);
        }
        for u in &r.undecided {
            let _ = writeln!(out, "| {} | | | undecided: {} |", u.database, u.reason.replace('|', "\\|"));
        }
    }
    out
}

pub fn dc_csv(reports: &[(String, DcReport)], stamp: &ReportStamp) -> String {
    let mut out = stamp.csv_comment();
    out.push_str("dataset,database,seed,masked,correct,accuracy,status\n");
    for (name, r) in reports {
        for d in &r.per_database {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},scored",
                csv_escape(name),
                csv_escape(&d.database),
                d.seed,
                d.score.total,
                d.score.correct,
                d.score.accuracy
            );
        }
        for u in &r.undecided {
            let _ = writeln!(out, "{},{},,,,,undecided", csv_escape(name), csv_escape(&u.database));
        }
    }
    out
}

/// One evaluated (dataset, variant) pair.
pub struct EvalColumn<'a> {
    pub dataset: &'a str,
    pub variant: Variant,
    pub report: &'a EvalReport,
}

fn variant_title(v: Variant) -> &'static str {
    match v {
        Variant::Original => "Original dumps",
        Variant::Atd => "Adversarial table disconnection",
    }
}

/// Mean (± sample std) accuracy over databases, one row per hardness level
/// and one column per (variant, dataset).
pub fn eval_markdown(columns: &[EvalColumn<'_>], stamp: &ReportStamp) -> String {
    let mut out = format!("# Translation accuracy\n\n{}\n", stamp.markdown());
    out.push_str("| Hardness |");
    for c in columns {
        let _ = write!(out, " {} / {} |", variant_title(c.variant), c.dataset);
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(columns.len()));
    out.push('\n');
    for level in HardnessLevel::ALL {
        let _ = write!(out, "| {} |", level_label(level));
        for c in columns {
            let _ = write!(out, " {} |", mean_std(c.report.level(level)));
        }
        out.push('\n');
    }
    out.push_str("\n| Undecidable items |");
    for c in columns {
        let _ = write!(out, " {} of {} |", c.report.manual_review.len(), c.report.items.len());
    }
    out.push('\n');
    out
}

pub fn eval_csv(columns: &[EvalColumn<'_>], stamp: &ReportStamp) -> String {
    let mut out = stamp.csv_comment();
    out.push_str("dataset,variant,database,hardness,correct,decided,undecidable,accuracy\n");
    for c in columns {
        for d in &c.report.per_database {
            for level in HardnessLevel::ALL {
                let cell = d.cells[level.index()];
                if cell.decided + cell.undecidable == 0 {
                    continue;
                }
                let acc = cell.accuracy().map(|a| format!("{a:.4}")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csv_escape(c.dataset),
                    c.variant,
                    csv_escape(&d.database),
                    level,
                    cell.correct,
                    cell.decided,
                    cell.undecidable,
                    acc
                );
            }
        }
    }
    out
}

pub fn manual_review_jsonl(columns: &[EvalColumn<'_>], stamp: &ReportStamp) -> String {
    let mut out = stamp.jsonl_header();
    for c in columns {
        for item in &c.report.manual_review {
            let mut v = serde_json::to_value(item).expect("serialises");
            v["dataset"] = c.dataset.into();
            v["variant"] = c.variant.as_str().into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn predictions_jsonl(outcomes: &[(&str, &[TranslationOutcome])], stamp: &ReportStamp) -> String {
    let mut out = stamp.jsonl_header();
    for (dataset, list) in outcomes {
        for o in list.iter() {
            let mut v = serde_json::to_value(o).expect("serialises");
            v["dataset"] = (*dataset).into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
    out
}

/// Reads a file written by [`predictions_jsonl`], returning each outcome with
/// its dataset name. The metadata line is skipped.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, TranslationOutcome)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        if v.get("meta").is_some() {
            continue;
        }
        let dataset = v.get("dataset").and_then(|d| d.as_str()).unwrap_or_default().to_string();
        let outcome: TranslationOutcome = serde_json::from_value(v).map_err(|e| format!("line {}: {e}", n + 1))?;
        out.push((dataset, outcome));
    }
    Ok(out)
}

pub fn hardness_csv(records: &[QueryRecord]) -> String {
    let mut out = String::from("id,database,hardness\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", csv_escape(&r.id), csv_escape(&r.database_name), r.hardness);
    }
    out
}

/// Query counts per database and level, with a total row.
pub fn histogram_csv(h: &HardnessHistogram) -> String {
    let mut out = String::from("database,easy,medium,hard,extra\n");
    let mut row = |name: &str, c: &[usize; 4]| {
        let _ = writeln!(out, "{},{},{},{},{}", csv_escape(name), c[0], c[1], c[2], c[3]);
    };
    for (db, counts) in &h.per_database {
        row(db, counts);
    }
    row("total", &h.totals());
    out
}

fn score_rows(out: &mut String, label: &str, s: &AnnotationScore) {
    let spread = match s.annotator_summary {
        Some(sum) => format!("{:.3} (±{:.3})", sum.mean, sum.std),
        None => "n/a".into(),
    };
    let _ = writeln!(
        out,
        "| {label} | {} | {spread} | {}/{} = {:.3} | {:.3} |",
        s.items, s.majority_correct, s.items, s.majority_accuracy, s.fleiss_kappa
    );
}

/// Annotator accuracy, majority-vote accuracy and Fleiss' kappa, pooled and
/// per trial.
pub fn mcq_score_markdown(report: &ScoreReport, stamp: &ReportStamp) -> String {
    let mut out = format!("# Multiple-choice results\n\n{}\n", stamp.markdown());
    out.push_str("| Set | Items | Annotator accuracy | Majority vote | Fleiss' kappa |\n|---|---:|---:|---:|---:|\n");
    score_rows(&mut out, "all", &report.pooled);
    for t in &report.per_trial {
        score_rows(&mut out, &format!("trial {}", t.trial), &t.score);
    }
    out.push_str("\n| Annotator | Accuracy |\n|---|---:|\n");
    for (name, acc) in report.pooled.annotators.iter().zip(&report.pooled.per_annotator) {
        let _ = writeln!(out, "| {name} | {acc:.3} |");
    }
    for note in &report.pooled.notes {
        let _ = write!(out, "\nNote: {note}\n");
    }
    out
}
