use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Suite, TsaOptions, ValuePools, VerdictStatus};
use crate::hardness::{HardnessLevel, QueryRecord};
use crate::llm::TranslationOutcome;
use crate::model::Database;
use crate::summary::{derive_seed, Summary};

/// A question with the SQL predicted for it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub record: QueryRecord,
    pub predicted: Option<String>,
}

impl From<&TranslationOutcome> for EvalItem {
    fn from(o: &TranslationOutcome) -> Self {
        EvalItem { record: o.record.clone(), predicted: o.prediction.sql().map(str::to_string) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Correct,
    Incorrect,
    Undecidable,
    /// No SQL could be obtained; scored as incorrect.
    NoPrediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemVerdict {
    pub id: String,
    pub database: String,
    pub hardness: HardnessLevel,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// An item the fuzzer could not judge, exported for a human reviewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualReviewItem {
    pub id: String,
    pub database: String,
    pub hardness: HardnessLevel,
    pub question: String,
    pub gold_sql: String,
    pub predicted_sql: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub correct: usize,
    /// Correct, incorrect and missing predictions; undecidable items excluded.
    pub decided: usize,
    pub undecidable: usize,
}

impl CellCounts {
    pub fn accuracy(&self) -> Option<f64> {
        (self.decided > 0).then(|| self.correct as f64 / self.decided as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseEval {
    pub database: String,
    /// Indexed by [`HardnessLevel::index`].
    pub cells: [CellCounts; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: HardnessLevel,
    /// Over the databases with at least one decided item at this level.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: TsaOptions,
    /// Sorted by database name.
    pub per_database: Vec<DatabaseEval>,
    pub per_level: Vec<LevelSummary>,
    /// In input order.
    pub items: Vec<ItemVerdict>,
    pub manual_review: Vec<ManualReviewItem>,
}

impl EvalReport {
    pub fn cell(&self, database: &str, level: HardnessLevel) -> Option<f64> {
        self.per_database.iter().find(|d| d.database == database)?.cells[level.index()].accuracy()
    }

    pub fn level(&self, level: HardnessLevel) -> Option<Summary> {
        self.per_level.iter().find(|l| l.level == level)?.summary
    }

    pub fn undecidable_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.manual_review.len() as f64 / self.items.len() as f64
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("question {id} refers to unknown database `{database}`")]
    UnknownDatabase { id: String, database: String },
}

/// Judges every item on fuzzed instances of its database and aggregates the
/// verdicts per database and hardness level. Each database gets one suite
/// whose pools hold the literals of all its gold and predicted queries and
/// whose seed is derived from the base seed and the database name.
pub fn evaluate_suite(items: &[EvalItem], dumps: &[Database], options: &TsaOptions) -> Result<EvalReport, EvalError> {
    let mut by_db: BTreeMap<&str, (&Database, Vec<usize>)> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let name = item.record.database_name.as_str();
        let Some(db) = dumps.iter().find(|d| d.name == name) else {
            return Err(EvalError::UnknownDatabase { id: item.record.id.clone(), database: name.to_string() });
        };
        by_db.entry(name).or_insert_with(|| (db, Vec::new())).1.push(i);
    }

    let judged: Vec<Vec<(usize, ItemVerdict)>> = by_db
        .par_iter()
        .map(|(name, (db, indices))| {
            let mut pools = ValuePools::from_database(db);
            for &i in indices {
                pools.harvest_query(&items[i].record.gold_sql);
                if let Some(p) = &items[i].predicted {
                    pools.harvest_query(p);
                }
            }
            let suite_options = TsaOptions { base_seed: derive_seed(options.base_seed, name), ..*options };
            let suite = Suite::new(db, pools, suite_options);
            let with_sql: Vec<usize> = indices.iter().copied().filter(|&i| items[i].predicted.is_some()).collect();
            let pairs: Vec<(&str, &str)> = with_sql
                .iter()
                .map(|&i| (items[i].record.gold_sql.as_str(), items[i].predicted.as_deref().expect("filtered")))
                .collect();
            let mut verdicts: BTreeMap<usize, _> = with_sql.into_iter().zip(suite.judge(&pairs)).collect();
            indices
                .iter()
                .map(|&i| {
                    let r = &items[i].record;
                    let (status, witness, reason) = match verdicts.remove(&i) {
                        None => (ItemStatus::NoPrediction, None, Some("no SQL in the response".to_string())),
                        Some(v) => {
                            let status = match v.status {
                                VerdictStatus::Correct => ItemStatus::Correct,
                                VerdictStatus::Incorrect => ItemStatus::Incorrect,
                                VerdictStatus::Undecidable => ItemStatus::Undecidable,
                            };
                            (status, v.witness, v.reason)
                        }
                    };
                    let verdict = ItemVerdict {
                        id: r.id.clone(),
                        database: r.database_name.clone(),
                        hardness: r.hardness,
                        status,
                        witness,
                        reason,
                    };
                    (i, verdict)
                })
                .collect()
        })
        .collect();

    let mut slots: Vec<Option<ItemVerdict>> = vec![None; items.len()];
    for (i, v) in judged.into_iter().flatten() {
        slots[i] = Some(v);
    }
    let verdicts: Vec<ItemVerdict> = slots.into_iter().map(|v| v.expect("every item judged")).collect();

    let mut per_db: BTreeMap<String, [CellCounts; 4]> = by_db.keys().map(|k| (k.to_string(), Default::default())).collect();
    let mut manual_review = Vec::new();
    for (item, v) in items.iter().zip(&verdicts) {
        let cell = &mut per_db.get_mut(&v.database).expect("known database")[v.hardness.index()];
        match v.status {
            ItemStatus::Correct => {
                cell.correct += 1;
                cell.decided += 1;
            }
            ItemStatus::Incorrect | ItemStatus::NoPrediction => cell.decided += 1,
            ItemStatus::Undecidable => {
                cell.undecidable += 1;
                manual_review.push(ManualReviewItem {
                    id: v.id.clone(),
                    database: v.database.clone(),
                    hardness: v.hardness,
                    question: item.record.nl_question.clone(),
                    gold_sql: item.record.gold_sql.clone(),
                    predicted_sql: item.predicted.clone().unwrap_or_default(),
                    reason: v.reason.clone().unwrap_or_default(),
                });
            }
        }
    }
    let per_database: Vec<DatabaseEval> =
        per_db.into_iter().map(|(database, cells)| DatabaseEval { database, cells }).collect();
    let per_level = HardnessLevel::ALL
        .iter()
        .map(|&level| {
            let values: Vec<f64> = per_database.iter().filter_map(|d| d.cells[level.index()].accuracy()).collect();
            LevelSummary { level, summary: Summary::of(&values) }
        })
        .collect();
    Ok(EvalReport { options: *options, per_database, per_level, items: verdicts, manual_review })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_dump;

    fn db(name: &str) -> Database {
        let mut db = parse_dump(
            "CREATE TABLE t (id INTEGER PRIMARY KEY, a INTEGER, b TEXT);
             INSERT INTO t VALUES (1, 10, 'x'), (2, 20, 'y');",
        )
        .unwrap();
        db.name = name.into();
        db
    }

    fn item(id: &str, database: &str, level: HardnessLevel, gold: &str, predicted: Option<&str>) -> EvalItem {
        EvalItem {
            record: QueryRecord {
                id: id.into(),
                nl_question: format!("question {id}"),
                gold_sql: gold.into(),
                hardness: level,
                database_name: database.into(),
            },
            predicted: predicted.map(str::to_string),
        }
    }

    const OPTS: TsaOptions = TsaOptions { max_instances: 100, base_seed: 9 };

    #[test]
    fn gold_predictions_score_full_marks() {
        let items: Vec<EvalItem> = HardnessLevel::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| item(&format!("q{i}"), "d1", l, "SELECT a FROM t WHERE a > 10", Some("SELECT a FROM t WHERE a > 10")))
            .collect();
        let report = evaluate_suite(&items, &[db("d1")], &OPTS).unwrap();
        for level in HardnessLevel::ALL {
            assert_eq!(report.cell("d1", level), Some(1.0));
            assert_eq!(report.level(level).unwrap().mean, 1.0);
        }
        assert!(report.manual_review.is_empty());
    }

    #[test]
    fn cells_and_summaries() {
        let e = HardnessLevel::Easy;
        let items = vec![
            item("a1", "d1", e, "SELECT b FROM t", Some("SELECT b FROM t")),
            item("a2", "d1", e, "SELECT b FROM t", Some("SELECT a FROM t")),
            item("b1", "d2", e, "SELECT b FROM t", Some("SELECT b FROM t")),
            item("b2", "d2", e, "SELECT b FROM t", None),
            item("b3", "d2", e, "SELECT b FROM t", Some("SELECT b FROM t")),
            item("b4", "d2", HardnessLevel::Hard, "SELECT b FROM t", Some("SELECT MEDIAN(a) FROM t")),
        ];
        let report = evaluate_suite(&items, &[db("d1"), db("d2")], &OPTS).unwrap();
        assert_eq!(report.cell("d1", e), Some(0.5));
        assert!((report.cell("d2", e).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.cell("d2", HardnessLevel::Hard), None);
        assert_eq!(report.level(HardnessLevel::Hard), None);
        let easy = report.level(e).unwrap();
        assert!((easy.mean - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(report.manual_review.len(), 1);
        assert_eq!(report.manual_review[0].id, "b4");
        assert_eq!(report.items.iter().map(|v| v.id.as_str()).collect::<Vec<_>>(), ["a1", "a2", "b1", "b2", "b3", "b4"]);
        assert_eq!(report.items[3].status, ItemStatus::NoPrediction);
    }

    #[test]
    fn unknown_database_is_rejected() {
        let items = vec![item("x", "nope", HardnessLevel::Easy, "SELECT b FROM t", None)];
        assert!(evaluate_suite(&items, &[db("d1")], &OPTS).is_err());
    }
}
