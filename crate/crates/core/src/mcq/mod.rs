//! Three-option multiple-choice tests asking humans to pick the SQL that
//! answers a question, and agreement statistics over their answers.

mod perturb;
mod score;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use perturb::{canonical_sql, perturb_query, Perturbation, PerturbationKind};
pub use score::{
    fleiss_kappa, read_annotations, score_annotations, score_report, AnnotationMatrix, AnnotationScore, KappaResult,
    ScoreReport, TrialScore,
};

use crate::hardness::QueryRecord;
use crate::model::Database;
use crate::summary::derive_seed;

pub const OPTION_LABELS: [char; 3] = ['A', 'B', 'C'];

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum McqError {
    #[error("cannot parse `{sql}`: {message}")]
    Parse { sql: String, message: String },
    #[error("no perturbation changes `{sql}`")]
    NoPerturbation { sql: String },
    #[error("no distractor candidates for question {id}")]
    EmptyPool { id: String },
    #[error("asked for {requested} items but only {available} queries are available")]
    NotEnoughQueries { requested: usize, available: usize },
    #[error("question {id} refers to unknown database `{database}`")]
    UnknownDatabase { id: String, database: String },
    #[error("question {id}: {source}")]
    Item { id: String, source: Box<McqError> },
    #[error("annotation matrix needs at least {0}")]
    TooSmall(&'static str),
    #[error("row {row}: {message}")]
    Annotation { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Gold,
    Perturbed,
    BowNearest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub nl_question: String,
    pub schema_ref: String,
    /// Canonical SQL of the three options, in display order.
    pub options: [String; 3],
    pub option_kinds: [OptionKind; 3],
    pub answer_index: usize,
    pub perturbation: PerturbationKind,
    /// Question id of the query picked as the bag-of-words neighbour.
    pub nearest_source: String,
    pub seed: u64,
    /// 1-based administration round; 0 until [`assign_trials`] runs.
    #[serde(default)]
    pub trial: u32,
}

/// Lowercased tokens, splitting on whitespace and punctuation. Underscores
/// stay inside identifiers.
pub fn bow_tokens(sql: &str) -> Vec<String> {
    sql.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn bow_counts(sql: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for t in bow_tokens(sql) {
        *counts.entry(t).or_insert(0.0) += 1.0;
    }
    counts
}

/// Cosine similarity of the token count vectors; 0 when either is empty.
pub fn bow_cosine(q1: &str, q2: &str) -> f64 {
    let (a, b) = (bow_counts(q1), bow_counts(q2));
    let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Index of the pool query most similar to `gold`; the earliest wins ties.
pub fn nearest_query(gold: &str, pool: &[&str]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in pool.iter().enumerate() {
        let s = bow_cosine(gold, q);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Distractor candidates for `records[gold]`: the other queries on the same
/// database, or of the whole dataset when that database has none, minus
/// anything canonically equal to an excluded query.
pub fn candidate_pool(records: &[QueryRecord], gold: usize, exclude: &[&str]) -> Vec<usize> {
    let canon = |sql: &str| canonical_sql(sql).unwrap_or_else(|_| sql.to_string());
    let excluded: Vec<String> = exclude.iter().map(|s| canon(s)).collect();
    let usable = |i: usize| i != gold && !excluded.contains(&canon(&records[i].gold_sql));
    let db = &records[gold].database_name;
    let same: Vec<usize> = (0..records.len()).filter(|&i| &records[i].database_name == db && usable(i)).collect();
    if !same.is_empty() {
        return same;
    }
    (0..records.len()).filter(|&i| usable(i)).collect()
}

fn build_item(records: &[QueryRecord], gold: usize, schema: &Database, seed: u64) -> Result<McqItem, McqError> {
    let record = &records[gold];
    let gold_sql = canonical_sql(&record.gold_sql)
        .map_err(|e| McqError::Parse { sql: record.gold_sql.clone(), message: e.to_string() })?;
    let perturbed = perturb_query(&record.gold_sql, schema, seed)?;
    let pool = candidate_pool(records, gold, &[&record.gold_sql, &perturbed.sql]);
    let texts: Vec<&str> = pool.iter().map(|&i| records[i].gold_sql.as_str()).collect();
    let nearest = pool[nearest_query(&record.gold_sql, &texts).ok_or(McqError::EmptyPool { id: record.id.clone() })?];
    let nearest_sql = canonical_sql(&records[nearest].gold_sql)
        .map_err(|e| McqError::Parse { sql: records[nearest].gold_sql.clone(), message: e.to_string() })?;

    let mut slots = [(gold_sql, OptionKind::Gold), (perturbed.sql, OptionKind::Perturbed), (nearest_sql, OptionKind::BowNearest)];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle"));
    slots.shuffle(&mut rng);
    let answer_index = slots.iter().position(|(_, k)| *k == OptionKind::Gold).expect("gold present");
    let [a, b, c] = slots;
    Ok(McqItem {
        id: record.id.clone(),
        nl_question: record.nl_question.clone(),
        schema_ref: record.database_name.clone(),
        options: [a.0, b.0, c.0],
        option_kinds: [a.1, b.1, c.1],
        answer_index,
        perturbation: perturbed.kind,
        nearest_source: records[nearest].id.clone(),
        seed,
        trial: 0,
    })
}

/// Draws `n_items` questions and builds one item per question. Each item's
/// seed is derived from `seed` and the question id.
pub fn build_test(records: &[QueryRecord], dumps: &[Database], n_items: usize, seed: u64) -> Result<Vec<McqItem>, McqError> {
    if records.len() < n_items {
        return Err(McqError::NotEnoughQueries { requested: n_items, available: records.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mcq/select"));
    index::sample(&mut rng, records.len(), n_items)
        .into_iter()
        .map(|i| {
            let r = &records[i];
            let schema = dumps
                .iter()
                .find(|d| d.name == r.database_name)
                .ok_or_else(|| McqError::UnknownDatabase { id: r.id.clone(), database: r.database_name.clone() })?;
            build_item(records, i, schema, derive_seed(seed, &format!("mcq/{}", r.id)))
                .map_err(|e| McqError::Item { id: r.id.clone(), source: Box::new(e) })
        })
        .collect()
}

/// Numbers the items round-robin into `trials` administration rounds.
pub fn assign_trials(items: &mut [McqItem], trials: u32) {
    let trials = trials.max(1);
    for (i, item) in items.iter_mut().enumerate() {
        item.trial = i as u32 % trials + 1;
    }
}

/// A printable answer sheet.
pub fn render_sheet(title: &str, items: &[McqItem]) -> String {
    let mut out = format!("# {title}\n\nFor each question, circle the query that answers it.\n");
    for (n, item) in items.iter().enumerate() {
        let _ = write!(out, "\n## {}. {}\n\nDatabase: `{}`\n\n", n + 1, item.nl_question, item.schema_ref);
        for (label, sql) in OPTION_LABELS.iter().zip(&item.options) {
            let _ = write!(out, "{label}.\n```sql\n{sql}\n```\n");
        }
        let _ = write!(out, "\nAnswer: ____ (item `{}`)\n", item.id);
    }
    out
}

pub fn render_answer_key(items: &[McqItem]) -> String {
    let mut out = String::from("item,key,trial\n");
    for item in items {
        let _ = writeln!(out, "{},{},{}", item.id, OPTION_LABELS[item.answer_index], item.trial);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardness::HardnessLevel;
    use crate::model::parse_dump;

    #[test]
    fn cosine_examples() {
        assert!((bow_cosine("SELECT a FROM t", "SELECT a FROM t") - 1.0).abs() < 1e-12);
        assert_eq!(bow_cosine("SELECT a FROM t", "x y z"), 0.0);
        assert!((bow_cosine("SELECT a FROM t", "SELECT b FROM t") - 0.75).abs() < 1e-12);
        assert_eq!(bow_cosine("", "SELECT 1"), 0.0);
        assert!((bow_cosine("a a b", "A,A;B b") - bow_cosine("A,A;B b", "a a b")).abs() < 1e-15);
        assert!((bow_cosine("a b", "a a b b") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_prefers_earliest_on_ties() {
        assert_eq!(nearest_query("SELECT a FROM t", &["SELECT b FROM t", "SELECT c FROM t"]), Some(0));
        assert_eq!(nearest_query("SELECT a FROM t", &["SELECT z", "select A from T"]), Some(1));
        assert_eq!(nearest_query("SELECT a FROM t", &["x"]), Some(0));
        assert_eq!(nearest_query("SELECT a FROM t", &[]), None);
    }

    fn fixture() -> (Vec<QueryRecord>, Vec<Database>) {
        let mut db = parse_dump(
            "CREATE TABLE t (id INTEGER PRIMARY KEY, a INTEGER, b TEXT);
             CREATE TABLE u (uid INTEGER PRIMARY KEY, t_id INTEGER REFERENCES t(id), c REAL);",
        )
        .unwrap();
        db.name = "d".into();
        let sqls = [
            "SELECT a FROM t WHERE b = 'x'",
            "SELECT count(*) FROM t",
            "SELECT max(c) FROM u",
            "SELECT b FROM t ORDER BY a",
            "SELECT T1.b FROM t AS T1 JOIN u AS T2 ON T1.id = T2.t_id WHERE T2.c > 1.5",
            "SELECT DISTINCT b FROM t",
            "SELECT avg(a) FROM t WHERE a > 3",
            "SELECT a, b FROM t",
        ];
        let records = sqls
            .iter()
            .enumerate()
            .map(|(i, s)| QueryRecord {
                id: format!("q{i}"),
                nl_question: format!("question {i}"),
                gold_sql: s.to_string(),
                hardness: HardnessLevel::Easy,
                database_name: "d".into(),
            })
            .collect();
        (records, vec![db])
    }

    #[test]
    fn built_items_are_valid_and_reproducible() {
        let (records, dumps) = fixture();
        let items = build_test(&records, &dumps, 6, 5).unwrap();
        assert_eq!(items, build_test(&records, &dumps, 6, 5).unwrap());
        assert_eq!(items.len(), 6);
        for item in &items {
            assert_eq!(item.option_kinds[item.answer_index], OptionKind::Gold);
            for (i, a) in item.options.iter().enumerate() {
                assert!(crate::query::parse_query(a).is_ok(), "{a}");
                assert!(item.options[i + 1..].iter().all(|b| a != b), "{item:?}");
            }
        }
        assert!(matches!(build_test(&records, &dumps, 9, 0), Err(McqError::NotEnoughQueries { .. })));
    }

    #[test]
    fn gold_position_varies_with_seed() {
        let (records, dumps) = fixture();
        let mut counts = [0usize; 3];
        for seed in 0..60 {
            for item in build_test(&records, &dumps, 8, seed).unwrap() {
                counts[item.answer_index] += 1;
            }
        }
        // 480 draws; chi-square with 2 degrees of freedom below 13.8 (p = 0.001).
        let expected = 160.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 13.8, "{counts:?}");
    }

    #[test]
    fn trials_and_sheets() {
        let (records, dumps) = fixture();
        let mut items = build_test(&records, &dumps, 4, 1).unwrap();
        assign_trials(&mut items, 2);
        assert_eq!(items.iter().map(|i| i.trial).collect::<Vec<_>>(), [1, 2, 1, 2]);
        let sheet = render_sheet("Trial 1", &items);
        assert_eq!(sheet.matches("```sql").count(), 12);
        let key = render_answer_key(&items);
        assert_eq!(key.lines().count(), 5);
    }
}
