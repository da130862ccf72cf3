//! Masked-schema reconstruction probe.
//!
//! A share of each table's column names is replaced by [`MASK_TOKEN`], the
//! model is asked to restore them, and the fraction restored exactly is the
//! database's DC-accuracy.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ConversationScript, LlmClient, Message, Purpose, ScriptMeta};
use crate::model::{ident_eq, parse_dump_with_warnings, render_dump, Database, MASK_TOKEN};
use crate::summary::{derive_seed, Summary};

/// Bumped whenever [`DC_PREAMBLE`] changes; stamped into reports.
pub const DC_PROMPT_VERSION: &str = "dc-probe/1";

pub const DC_PREAMBLE: &str = "In the following SQL dump there are some [MASK] tokens. \
Each [MASK] replaces the original name of a column. \
Reconstruct the dump and return it in full, replacing every [MASK] token with the original column name. \
Answer using only SQL.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedColumn {
    pub table: String,
    pub position: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedDump {
    pub database: Database,
    /// Original names in (table order, column position) order.
    pub ground_truth: Vec<MaskedColumn>,
    pub seed: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskOptions {
    pub ratio: f64,
    pub seed: u64,
    /// Never mask primary-key columns. The per-table count is still computed
    /// from the full column count, capped by the remaining candidates.
    pub exclude_pk: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        MaskOptions { ratio: 0.25, seed: 0, exclude_pk: false }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MaskError {
    #[error("database `{0}` has no tables")]
    EmptyDatabase(String),
    #[error("table `{0}` has no columns")]
    EmptyTable(String),
    #[error("mask ratio must be in (0, 1], got {0}")]
    InvalidRatio(f64),
}

/// Columns to mask in a table of `columns` columns: `max(1, round(ratio * n))`
/// with halves rounded away from zero.
pub fn mask_count(columns: usize, ratio: f64) -> usize {
    ((ratio * columns as f64).round() as usize).clamp(1, columns.max(1))
}

pub fn mask_columns(db: &Database, options: &MaskOptions) -> Result<MaskedDump, MaskError> {
    if !(options.ratio > 0.0 && options.ratio <= 1.0) {
        return Err(MaskError::InvalidRatio(options.ratio));
    }
    if db.tables.is_empty() {
        return Err(MaskError::EmptyDatabase(db.name.clone()));
    }
    if let Some(t) = db.tables.iter().find(|t| t.columns.is_empty()) {
        return Err(MaskError::EmptyTable(t.name.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out = db.without_rows();
    let mut ground_truth = Vec::new();
    for table in &mut out.tables {
        let candidates: Vec<usize> = (0..table.columns.len())
            .filter(|&i| !(options.exclude_pk && table.is_primary_key(&table.columns[i].name)))
            .collect();
        let k = mask_count(table.columns.len(), options.ratio).min(candidates.len());
        let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
        picked.sort_unstable();
        for pos in picked {
            let original = std::mem::replace(&mut table.columns[pos].name, MASK_TOKEN.to_string());
            table.columns[pos].masked = true;
            for key in &mut table.primary_key {
                if ident_eq(key, &original) {
                    *key = MASK_TOKEN.to_string();
                }
            }
            for fk in &mut out.foreign_keys {
                if ident_eq(&fk.from_table, &table.name) && ident_eq(&fk.from_column, &original) {
                    fk.from_column = MASK_TOKEN.to_string();
                }
                if ident_eq(&fk.to_table, &table.name) && ident_eq(&fk.to_column, &original) {
                    fk.to_column = MASK_TOKEN.to_string();
                }
            }
            ground_truth.push(MaskedColumn { table: table.name.clone(), position: pos, name: original });
        }
    }
    Ok(MaskedDump { database: out, ground_truth, seed: options.seed, ratio: options.ratio })
}

/// One user message: the fixed preamble followed by the rendered masked dump.
pub fn build_dc_prompt(md: &MaskedDump) -> ConversationScript {
    ConversationScript {
        messages: vec![Message::user(format!("{DC_PREAMBLE}\n\n{}", render_dump(&md.database)))],
        meta: ScriptMeta { database: md.database.name.clone(), question_id: None, purpose: Purpose::DcProbe },
        warnings: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn normalize_name(name: &str) -> String {
    name.trim().trim_matches(|c| matches!(c, '"' | '`' | '\'' | '[' | ']')).trim().to_lowercase()
}

/// The SQL part of a reply: the concatenated fenced blocks if there are any,
/// otherwise everything from the first `CREATE`, cut after the last `;`.
fn reconstruction_sql(text: &str) -> String {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let Some(close) = body.find("```") else {
            blocks.push(body);
            break;
        };
        blocks.push(&body[..close]);
        rest = &body[close + 3..];
    }
    let sql = if blocks.is_empty() {
        let upper = text.to_ascii_uppercase();
        upper.find("CREATE").map_or("", |i| &text[i..]).to_string()
    } else {
        blocks.join("\n")
    };
    match sql.rfind(';') {
        Some(i) => sql[..=i].to_string(),
        None => sql,
    }
}

/// Scores a reconstruction against the ground truth. Never fails: anything
/// that cannot be aligned counts as a miss and is explained in `notes`.
pub fn score_reconstruction(md: &MaskedDump, reconstruction: &str) -> DcScore {
    let total = md.ground_truth.len();
    let mut notes = Vec::new();
    let parsed = match parse_dump_with_warnings(&md.database.name, &reconstruction_sql(reconstruction)) {
        Ok((db, _)) => Some(db),
        Err(e) => {
            notes.push(format!("reconstruction does not parse: {e}"));
            None
        }
    };
    let mut correct = 0;
    if let Some(rec) = parsed {
        for truth in &md.ground_truth {
            let Some(table) = rec.table(&truth.table) else {
                notes.push(format!("table `{}` missing from reconstruction", truth.table));
                continue;
            };
            let expected = md.database.table(&truth.table).map_or(0, |t| t.columns.len());
            if table.columns.len() != expected {
                notes.push(format!(
                    "table `{}` has {} columns, expected {}",
                    truth.table,
                    table.columns.len(),
                    expected
                ));
                continue;
            }
            if normalize_name(&table.columns[truth.position].name) == normalize_name(&truth.name) {
                correct += 1;
            }
        }
    }
    notes.dedup();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    DcScore { correct, total, accuracy, notes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcResult {
    pub database: String,
    pub seed: u64,
    pub score: DcScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Undecided {
    pub database: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcReport {
    pub prompt_version: String,
    pub ratio: f64,
    pub base_seed: u64,
    /// Sorted by database name.
    pub per_database: Vec<DcResult>,
    pub undecided: Vec<Undecided>,
    /// Over `per_database` accuracies; `None` when every database is undecided.
    pub summary: Option<Summary>,
}

impl DcReport {
    pub fn accuracy(&self, database: &str) -> Option<f64> {
        self.per_database.iter().find(|r| r.database == database).map(|r| r.score.accuracy)
    }
}

/// Masks every database with its own seed (derived from the base seed and the
/// database name), sends one probe per database and scores the replies.
pub fn run_dc_audit(dataset: &[Database], client: &LlmClient, options: &MaskOptions) -> DcReport {
    enum Outcome {
        Scored(DcResult),
        Undecided(Undecided),
    }
    let outcomes: Vec<Outcome> = client.pool().install(|| {
        dataset
            .par_iter()
            .map(|db| {
                let seed = derive_seed(options.seed, &db.name);
                let md = match mask_columns(db, &MaskOptions { seed, ..*options }) {
                    Ok(md) => md,
                    Err(e) => return Outcome::Undecided(Undecided { database: db.name.clone(), reason: e.to_string() }),
                };
                match client.send(&build_dc_prompt(&md)) {
                    Ok(reply) => Outcome::Scored(DcResult {
                        database: db.name.clone(),
                        seed,
                        score: score_reconstruction(&md, &reply),
                    }),
                    Err(e) => Outcome::Undecided(Undecided { database: db.name.clone(), reason: e.to_string() }),
                }
            })
            .collect()
    });
    let mut per_database = Vec::new();
    let mut undecided = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Scored(r) => per_database.push(r),
            Outcome::Undecided(u) => undecided.push(u),
        }
    }
    per_database.sort_by(|a, b| a.database.cmp(&b.database));
    undecided.sort_by(|a, b| a.database.cmp(&b.database));
    let accuracies: Vec<f64> = per_database.iter().map(|r| r.score.accuracy).collect();
    DcReport {
        prompt_version: DC_PROMPT_VERSION.to_string(),
        ratio: options.ratio,
        base_seed: options.seed,
        summary: Summary::of(&accuracies),
        per_database,
        undecided,
    }
}
