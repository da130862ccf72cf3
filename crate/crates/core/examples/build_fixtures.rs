//! Regenerates the fixture corpus under `fixtures/` from the hand-written
//! schemas in `fixtures/schemas/`: dumps with rows, dataset manifests, the
//! MCQ dataset, and the replay transcripts of a scripted model.
//!
//! ```text
//! cargo run -p sqlcontam-core --example build_fixtures
//! ```
//!
//! The scripted model reconstructs a fixed number of masked columns per
//! database and answers translation questions correctly with fixed per-cell
//! rates, so the replayed audit yields known figures. The builder checks
//! those figures on a replay run before it exits.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sqlcontam_core::audit::{run_audit, StageStatus};
use sqlcontam_core::config::Config;
use sqlcontam_core::contamination::{build_dc_prompt, mask_columns, score_reconstruction, MaskOptions};
use sqlcontam_core::dataset::Dataset;
use sqlcontam_core::hardness::{classify, extract_features, HardnessLevel, QueryRecord};
use sqlcontam_core::llm::{
    ChatRequest, FnTransport, RecordingTransport, ReplayTransport, TranscriptStore, TransportError, Variant,
    TRANSLATION_INSTRUCTION,
};
use sqlcontam_core::mcq::perturb_query;
use sqlcontam_core::model::{parse_dump, render_dump, render_value, Affinity, Database, Row, Value};
use sqlcontam_core::stats::Wordlist;
use sqlcontam_core::summary::derive_seed;
use sqlcontam_core::tsa::{execute, test_suite_accuracy, DatabaseInstance, TsaOptions, VerdictStatus};

use HardnessLevel::{Easy, ExtraHard, Hard, Medium};

const SEED: u64 = 0x5eed;

struct DatasetPlan {
    name: &'static str,
    /// (database, correct, masked) for the scripted reconstruction.
    dc: &'static [(&'static str, usize, usize)],
    /// Databases whose probe is left out of the transcripts.
    dc_missing: &'static [&'static str],
    /// (database, questions, correct) for calibrated EASY cells of the
    /// original variant; other databases get five EASY questions.
    easy: &'static [(&'static str, usize, usize)],
    /// (database, level) cells without questions.
    empty: &'static [(&'static str, HardnessLevel)],
    /// Questions per non-calibrated cell.
    per_cell: usize,
    /// Extra EASY questions for the first databases.
    extra_easy: &'static [&'static str],
    /// Per-level success rates for the original and disconnected dumps.
    rates: [[f64; 4]; 2],
}

const SPIDER: DatasetPlan = DatasetPlan {
    name: "spider",
    dc: &[
        ("battle_death", 1, 6),
        ("car_1", 0, 0),
        ("concert_singer", 7, 9),
        ("course_teach", 0, 0),
        ("cre_Doc_Template_Mgt", 2, 5),
        ("dog_kennels", 10, 19),
        ("employee_hire_evaluation", 1, 5),
        ("flight_2", 0, 0),
        ("museum_visit", 0, 0),
        ("network_1", usize::MAX, 0),
        ("orchestra", 3, 7),
        ("pets_1", 2, 4),
        ("poker_player", 2, 4),
        ("real_estate_properties", 6, 13),
        ("singer", 0, 0),
        ("student_transcripts_tracking", 4, 18),
        ("tvshow", 0, 0),
        ("voter_1", usize::MAX, 0),
        ("wta_1", 1, 6),
    ],
    dc_missing: &["world_1"],
    easy: &[
        ("car_1", 18, 17),
        ("course_teach", 4, 3),
        ("dog_kennels", 10, 9),
        ("flight_2", 13, 11),
        ("orchestra", 7, 6),
        ("poker_player", 16, 15),
        ("student_transcripts_tracking", 26, 17),
        ("tvshow", 5, 4),
        ("voter_1", 3, 2),
        ("world_1", 24, 19),
        ("wta_1", 8, 7),
        ("battle_death", 5, 5),
        ("concert_singer", 5, 5),
        ("cre_Doc_Template_Mgt", 5, 5),
        ("employee_hire_evaluation", 5, 5),
        ("museum_visit", 5, 5),
        ("network_1", 5, 5),
        ("pets_1", 5, 5),
        ("real_estate_properties", 5, 5),
        ("singer", 5, 5),
    ],
    empty: &[
        ("course_teach", ExtraHard),
        ("poker_player", ExtraHard),
        ("real_estate_properties", ExtraHard),
        ("singer", ExtraHard),
        ("voter_1", Hard),
    ],
    per_cell: 4,
    extra_easy: &[],
    rates: [[0.9, 0.75, 0.5, 0.3], [0.85, 0.65, 0.4, 0.3]],
};

const TERMITE: DatasetPlan = DatasetPlan {
    name: "termite",
    dc: &[
        ("bowling", 1, 7),
        ("centri", 0, 0),
        ("coronavirus", 4, 9),
        ("farma", 0, 0),
        ("farmacia", 0, 0),
        ("galleria", 0, 0),
        ("hackathon", 2, 6),
        ("pratica", 0, 0),
        ("recensioni", 2, 5),
        ("voli", 0, 0),
    ],
    dc_missing: &[],
    easy: &[],
    empty: &[],
    per_cell: 5,
    extra_easy: &["bowling", "voli"],
    rates: [[0.75, 0.6, 0.3, 0.25], [0.7, 0.6, 0.3, 0.25]],
};

const NAMES: &[&str] = &[
    "Alice", "Bruno", "Carla", "Dario", "Elena", "Fabio", "Giulia", "Hugo", "Irene", "Jonas", "Karin", "Luca", "Marta",
    "Nora", "Oscar", "Paola",
];
const CITIES: &[&str] =
    &["Rome", "Milan", "Turin", "Boston", "Denver", "Lyon", "Porto", "Bergen", "Austin", "Genoa", "Leeds", "Kyoto"];
const COUNTRIES: &[&str] = &["Italy", "France", "Spain", "Norway", "Japan", "Canada", "Brazil", "Kenya"];
const WORDS: &[&str] = &[
    "alpha", "amber", "basic", "cedar", "delta", "ember", "fjord", "gamma", "harbor", "indigo", "juniper", "kilo",
    "lumen", "maple", "nova", "opal", "prism", "quartz", "river", "sierra", "tundra", "umber", "violet", "willow",
];
const NUMBER_WORDS: &[&str] =
    &["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"];

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

// ---------------------------------------------------------------- rows

fn parents_first(db: &Database) -> Vec<usize> {
    let n = db.tables.len();
    let mut done = vec![false; n];
    let mut order = Vec::new();
    while order.len() < n {
        let ready = (0..n).find(|&i| {
            !done[i]
                && db
                    .foreign_keys_from(&db.tables[i].name)
                    .filter_map(|fk| db.table_index(&fk.to_table))
                    .all(|p| p == i || done[p])
        });
        let next = ready.or_else(|| (0..n).find(|&i| !done[i])).expect("unfinished table");
        done[next] = true;
        order.push(next);
    }
    order
}

fn text_value(rng: &mut ChaCha8Rng, column: &str, row: usize) -> Value {
    let c = column.to_lowercase();
    let pick = |list: &[&str], rng: &mut ChaCha8Rng| list.choose(rng).expect("non-empty").to_string();
    let s = if c.contains("first") || c == "fname" || c == "nome" || c.contains("cognome") || c.contains("last") {
        pick(NAMES, rng)
    } else if c.contains("name") || c.contains("nome") || c.contains("titolo") || c.contains("title") {
        format!("{} {}", pick(WORDS, rng), row + 1)
    } else if ["city", "citta", "comune", "location", "sede", "capoluogo", "hometown", "venue"].iter().any(|k| c.contains(k))
    {
        pick(CITIES, rng)
    } else if ["country", "naz", "nationality", "citizenship"].iter().any(|k| c.contains(k)) {
        pick(COUNTRIES, rng)
    } else if c.contains("date") || c.contains("data") || c.contains("created") {
        format!("20{:02}-{:02}-{:02}", rng.random_range(0..24), rng.random_range(1..=12), rng.random_range(1..=28))
    } else {
        pick(WORDS, rng)
    };
    Value::Text(s)
}

fn cell_value(rng: &mut ChaCha8Rng, db: &Database, ti: usize, ci: usize, row: usize) -> Value {
    let table = &db.tables[ti];
    let column = &table.columns[ci];
    let name = column.name.to_lowercase();
    if table.primary_key.len() == 1 && table.is_primary_key(&column.name) {
        return match column.sql_type.affinity() {
            Affinity::Integer | Affinity::Boolean => Value::Integer(row as i64 + 1),
            Affinity::Real => Value::Real(row as f64 + 1.0),
            _ => {
                let prefix: String = table.name.chars().filter(char::is_ascii_alphabetic).take(3).collect();
                Value::Text(format!("{}{}", prefix.to_uppercase(), row + 1))
            }
        };
    }
    match column.sql_type.affinity() {
        Affinity::Integer => {
            let v = if name.contains("year") || name.contains("anno") || name.contains("nascita") {
                rng.random_range(1950..=2023)
            } else if name == "age" || name.contains("eta") {
                rng.random_range(18..=80)
            } else if name.starts_with("is_") || name.contains("esente") || name.contains("obbligo") {
                rng.random_range(0..=1)
            } else {
                rng.random_range(1..=200)
            };
            Value::Integer(v)
        }
        Affinity::Real => Value::Real(f64::from(rng.random_range(40..=20_000)) / 4.0),
        Affinity::Boolean => Value::Integer(rng.random_range(0..=1)),
        Affinity::Date => Value::Text(format!(
            "{}-{:02}-{:02}",
            rng.random_range(1995..=2023),
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        )),
        Affinity::Text => text_value(rng, &column.name, row),
    }
}

/// Three to six rows per table; foreign keys copy parent values and key
/// columns stay unique.
fn fill_rows(db: &mut Database) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &format!("rows/{}", db.name)));
    for ti in parents_first(db) {
        let target = rng.random_range(3..=6);
        let table = db.tables[ti].clone();
        let key: Vec<usize> = table.primary_key.iter().filter_map(|k| table.column_index(k)).collect();
        let sources: Vec<Option<Vec<Value>>> = table
            .columns
            .iter()
            .map(|c| {
                let fk = db.foreign_keys_from(&table.name).find(|fk| fk.from_column.eq_ignore_ascii_case(&c.name))?;
                let parent = db.table(&fk.to_table)?;
                let idx = parent.column_index(&fk.to_column)?;
                let values: Vec<Value> = parent.rows.iter().map(|r| r.values[idx].clone()).collect();
                (!values.is_empty()).then_some(values)
            })
            .collect();
        let unique: Vec<usize> =
            (0..table.columns.len()).filter(|&i| table.columns[i].annotations.iter().any(|a| a == "UNIQUE")).collect();
        let mut rows: Vec<Row> = Vec::new();
        let mut seen = HashSet::new();
        let mut seen_unique: Vec<HashSet<String>> = vec![HashSet::new(); unique.len()];
        for r in 0..target {
            for _ in 0..50 {
                let values: Vec<Value> = (0..table.columns.len())
                    .map(|ci| match &sources[ci] {
                        Some(pool) => pool.choose(&mut rng).expect("non-empty").clone(),
                        None => cell_value(&mut rng, db, ti, ci, r),
                    })
                    .collect();
                let k: Vec<String> = key.iter().map(|&i| render_value(&values[i])).collect();
                let fresh = unique.iter().zip(&seen_unique).all(|(&i, s)| !s.contains(&render_value(&values[i])));
                if fresh && (key.is_empty() || seen.insert(k)) {
                    for (&i, s) in unique.iter().zip(&mut seen_unique) {
                        s.insert(render_value(&values[i]));
                    }
                    rows.push(Row::new(values));
                    break;
                }
            }
        }
        db.tables[ti].rows = rows;
    }
}

fn simple_ident(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// INSERT statements in three styles, rotating per table.
fn insert_text(db: &Database) -> String {
    let mut out = String::new();
    for (i, t) in db.tables.iter().enumerate() {
        if t.rows.is_empty() {
            continue;
        }
        let name = if simple_ident(&t.name) { t.name.clone() } else { format!("\"{}\"", t.name) };
        let tuple = |r: &Row| format!("({})", r.values.iter().map(render_value).collect::<Vec<_>>().join(", "));
        match i % 3 {
            0 => {
                for r in &t.rows {
                    let _ = writeln!(out, "INSERT INTO {name} VALUES {};", tuple(r));
                }
            }
            1 => {
                let tuples: Vec<String> = t.rows.iter().map(tuple).collect();
                let _ = writeln!(out, "INSERT INTO {name} VALUES\n  {};", tuples.join(",\n  "));
            }
            _ => {
                let cols: Vec<String> = t.columns.iter().map(|c| format!("\"{}\"", c.name)).collect();
                for r in &t.rows {
                    let _ = writeln!(out, "INSERT INTO {name} ({}) VALUES {};", cols.join(", "), tuple(r));
                }
            }
        }
    }
    out
}

// ------------------------------------------------------------- queries

const QUOTE_WORDS: &[&str] = &[
    "date", "year", "type", "show", "round", "result", "language", "content", "share", "rating", "order", "group",
    "role", "key", "table", "index", "match", "matches", "values", "value", "data", "frame", "level", "name", "location",
    "section", "transcripts", "grade", "ranking", "minutes", "score", "surface", "state", "created", "hand", "weight",
    "height", "age", "sales", "title", "venue", "owner", "capacity", "average", "highest", "lowest", "label", "genre",
    "model", "make", "year_built",
];

fn q(name: &str) -> String {
    if simple_ident(name) && !QUOTE_WORDS.contains(&name.to_ascii_lowercase().as_str()) {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn words(name: &str) -> String {
    name.replace(['_', '(', ')'], " ").split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

struct Shape<'a> {
    table: &'a str,
    texts: Vec<&'a str>,
    nums: Vec<&'a str>,
    any: Vec<&'a str>,
    pk: Option<&'a str>,
}

fn shapes(db: &Database) -> Vec<Shape<'_>> {
    db.tables
        .iter()
        .map(|t| {
            let fk_cols: HashSet<String> =
                db.foreign_keys_from(&t.name).map(|fk| fk.from_column.to_lowercase()).collect();
            let plain = |c: &&sqlcontam_core::model::Column| {
                !t.is_primary_key(&c.name) && !fk_cols.contains(&c.name.to_lowercase())
            };
            let texts = t
                .columns
                .iter()
                .filter(plain)
                .filter(|c| c.sql_type.affinity() == Affinity::Text)
                .map(|c| c.name.as_str())
                .collect();
            let nums = t
                .columns
                .iter()
                .filter(plain)
                .filter(|c| matches!(c.sql_type.affinity(), Affinity::Integer | Affinity::Real))
                .map(|c| c.name.as_str())
                .collect();
            let any = t.columns.iter().filter(plain).map(|c| c.name.as_str()).collect();
            let pk = match t.primary_key.as_slice() {
                [only] => Some(only.as_str()),
                _ => None,
            };
            Shape { table: &t.name, texts, nums, any, pk }
        })
        .collect()
}

/// A literal from the column's rows: the median value, for comparisons.
fn literal(db: &Database, table: &str, column: &str) -> Option<String> {
    let t = db.table(table)?;
    let i = t.column_index(column)?;
    let mut values: Vec<&Value> = t.rows.iter().map(|r| &r.values[i]).filter(|v| !v.is_null()).collect();
    values.sort_by_key(|v| render_value(v));
    values.get(values.len() / 2).map(|v| render_value(v))
}

fn candidates(db: &Database, level: HardnessLevel) -> Vec<(String, String)> {
    let shapes = shapes(db);
    let mut out = Vec::new();
    match level {
        Easy => {
            for s in &shapes {
                let (t, tw) = (q(s.table), words(s.table));
                out.push((format!("SELECT count(*) FROM {t}"), format!("How many {tw} records are there?")));
                for &c in &s.any {
                    out.push((format!("SELECT DISTINCT {} FROM {t}", q(c)), format!("What are the distinct {} values in {tw}?", words(c))));
                }
                for &c in &s.texts {
                    out.push((format!("SELECT {} FROM {t}", q(c)), format!("List the {} of every {tw} entry.", words(c))));
                    if let Some(v) = literal(db, s.table, c) {
                        let other = s.any.iter().find(|&&o| o != c).copied().unwrap_or(c);
                        out.push((
                            format!("SELECT {} FROM {t} WHERE {} = {v}", q(other), q(c)),
                            format!("Show the {} of {tw} whose {} is {v}.", words(other), words(c)),
                        ));
                    }
                }
                for &n in &s.nums {
                    out.push((format!("SELECT max({}) FROM {t}", q(n)), format!("What is the largest {} in {tw}?", words(n))));
                    out.push((format!("SELECT avg({}) FROM {t}", q(n)), format!("What is the average {} of {tw}?", words(n))));
                    if let Some(v) = literal(db, s.table, n) {
                        for &c in s.texts.iter().take(2) {
                            out.push((
                                format!("SELECT {} FROM {t} WHERE {} > {v}", q(c), q(n)),
                                format!("Which {} belong to {tw} with {} above {v}?", words(c), words(n)),
                            ));
                        }
                    }
                    if let Some(&c) = s.texts.first() {
                        out.push((
                            format!("SELECT {} FROM {t} ORDER BY {} DESC", q(c), q(n)),
                            format!("List the {} of {tw} sorted by {} from highest to lowest.", words(c), words(n)),
                        ));
                    }
                }
            }
        }
        Medium => {
            for s in &shapes {
                let (t, tw) = (q(s.table), words(s.table));
                for &n in &s.nums {
                    if let Some(v) = literal(db, s.table, n) {
                        out.push((
                            format!("SELECT count(*) FROM {t} WHERE {} > {v}", q(n)),
                            format!("How many {tw} records have {} greater than {v}?", words(n)),
                        ));
                    }
                    out.push((
                        format!("SELECT min({0}), max({0}) FROM {t}", q(n)),
                        format!("What are the smallest and largest {} in {tw}?", words(n)),
                    ));
                }
                if let (Some(&n), Some(&c)) = (s.nums.first(), s.texts.first()) {
                    if let (Some(vn), Some(vc)) = (literal(db, s.table, n), literal(db, s.table, c)) {
                        out.push((
                            format!("SELECT {} FROM {t} WHERE {} >= {vn} AND {} <> {vc}", q(s.any[0]), q(n), q(c)),
                            format!("Show the {} of {tw} with {} at least {vn} and {} other than {vc}.", words(s.any[0]), words(n), words(c)),
                        ));
                    }
                }
            }
            for fk in &db.foreign_keys {
                let (Some(cs), Some(ps)) = (shapes.iter().find(|s| s.table == fk.from_table), shapes.iter().find(|s| s.table == fk.to_table))
                else {
                    continue;
                };
                if cs.table == ps.table {
                    continue;
                }
                let on = format!("T1.{} = T2.{}", q(&fk.from_column), q(&fk.to_column));
                let (ct, pt) = (q(cs.table), q(ps.table));
                for &pc in ps.any.iter().take(2) {
                    let cc = cs.any.first().copied().unwrap_or(&fk.from_column);
                    out.push((
                        format!("SELECT T1.{}, T2.{} FROM {ct} AS T1 JOIN {pt} AS T2 ON {on}", q(cc), q(pc)),
                        format!("For each {}, show its {} and the {} of the related {}.", words(cs.table), words(cc), words(pc), words(ps.table)),
                    ));
                }
                for &pn in ps.nums.iter().take(1) {
                    if let Some(v) = literal(db, ps.table, pn) {
                        let cc = cs.any.first().copied().unwrap_or(&fk.from_column);
                        out.push((
                            format!("SELECT T1.{} FROM {ct} AS T1 JOIN {pt} AS T2 ON {on} WHERE T2.{} < {v}", q(cc), q(pn)),
                            format!("Which {} of {} are linked to a {} with {} below {v}?", words(cc), words(cs.table), words(ps.table), words(pn)),
                        ));
                    }
                }
            }
        }
        Hard => {
            for fk in &db.foreign_keys {
                let (Some(cs), Some(ps)) = (shapes.iter().find(|s| s.table == fk.from_table), shapes.iter().find(|s| s.table == fk.to_table))
                else {
                    continue;
                };
                if cs.table == ps.table {
                    continue;
                }
                let on = format!("T1.{} = T2.{}", q(&fk.from_column), q(&fk.to_column));
                let (ct, pt) = (q(cs.table), q(ps.table));
                for &pc in ps.any.iter().take(2) {
                    out.push((
                        format!("SELECT T2.{0}, count(*) FROM {ct} AS T1 JOIN {pt} AS T2 ON {on} GROUP BY T2.{0}", q(pc)),
                        format!("For each {} of {}, how many {} are there?", words(pc), words(ps.table), words(cs.table)),
                    ));
                }
                for &cn in cs.nums.iter().take(2) {
                    if let Some(&pc) = ps.texts.first() {
                        if let Some(v) = literal(db, ps.table, pc) {
                            out.push((
                                format!("SELECT avg(T1.{}) FROM {ct} AS T1 JOIN {pt} AS T2 ON {on} WHERE T2.{} = {v}", q(cn), q(pc)),
                                format!("What is the average {} of {} whose {} has {} {v}?", words(cn), words(cs.table), words(ps.table), words(pc)),
                            ));
                        }
                    }
                    out.push((
                        format!("SELECT max(T1.{}) FROM {ct} AS T1 JOIN {pt} AS T2 ON {on}", q(cn)),
                        format!("What is the highest {} among {} that have a matching {}?", words(cn), words(cs.table), words(ps.table)),
                    ));
                }
                if let (Some(pk), Some(&pc)) = (ps.pk, ps.any.first()) {
                    out.push((
                        format!(
                            "SELECT T2.{} FROM {ct} AS T1 JOIN {pt} AS T2 ON {on} GROUP BY T2.{} HAVING count(*) >= 2",
                            q(pc),
                            q(pk)
                        ),
                        format!("Which {} of {} have at least two {}?", words(pc), words(ps.table), words(cs.table)),
                    ));
                }
            }
        }
        ExtraHard => {
            for s in &shapes {
                let (t, tw) = (q(s.table), words(s.table));
                for &n in s.nums.iter().take(2) {
                    let shown = s.texts.first().or(s.any.first()).copied().unwrap_or(n);
                    out.push((
                        format!("SELECT {} FROM {t} WHERE {1} > (SELECT avg({1}) FROM {t})", q(shown), q(n)),
                        format!("Which {} of {tw} have a {} above the average?", words(shown), words(n)),
                    ));
                }
                if let (Some(&n), Some(&c)) = (s.nums.first(), s.texts.first()) {
                    if let (Some(vn), Some(vc)) = (literal(db, s.table, n), literal(db, s.table, c)) {
                        out.push((
                            format!("SELECT {0} FROM {t} WHERE {1} < {vn} UNION SELECT {0} FROM {t} WHERE {0} = {vc}", q(c), q(n)),
                            format!("List the {} of {tw} with {} below {vn}, together with {vc}.", words(c), words(n)),
                        ));
                    }
                }
            }
            for fk in &db.foreign_keys {
                let (Some(cs), Some(ps)) = (shapes.iter().find(|s| s.table == fk.from_table), shapes.iter().find(|s| s.table == fk.to_table))
                else {
                    continue;
                };
                let (ct, pt) = (q(cs.table), q(ps.table));
                out.push((
                    format!("SELECT {} FROM {pt} EXCEPT SELECT {} FROM {ct}", q(&fk.to_column), q(&fk.from_column)),
                    format!("Which {} values of {} never appear among the {}?", words(&fk.to_column), words(ps.table), words(cs.table)),
                ));
                if let Some(&pc) = ps.any.first() {
                    out.push((
                        format!("SELECT {} FROM {pt} WHERE {} NOT IN (SELECT {} FROM {ct})", q(pc), q(&fk.to_column), q(&fk.from_column)),
                        format!("Show the {} of every {} without any {}.", words(pc), words(ps.table), words(cs.table)),
                    ));
                    out.push((
                        format!("SELECT {} FROM {pt} WHERE {} IN (SELECT {} FROM {ct})", q(pc), q(&fk.to_column), q(&fk.from_column)),
                        format!("Show the {} of every {} referenced by some {}.", words(pc), words(ps.table), words(cs.table)),
                    ));
                }
            }
        }
    }
    out
}

fn select_queries(db: &Database, level: HardnessLevel, n: usize) -> Vec<(String, String)> {
    let mut seen_sql = HashSet::new();
    let mut seen_q = HashSet::new();
    let instance = DatabaseInstance { seed: 0, database: db.clone() };
    let mut pool: Vec<(String, String)> = candidates(db, level)
        .into_iter()
        .filter(|(sql, question)| seen_sql.insert(sql.clone()) && seen_q.insert(question.clone()))
        .collect();
    for (sql, _) in &pool {
        let features = extract_features(sql, db).unwrap_or_else(|e| panic!("{}: {sql}: {e}", db.name));
        assert_eq!(classify(&features), level, "{}: {sql}", db.name);
        if let Err(e) = execute(sql, &instance) {
            panic!("{}: {sql}: {e}", db.name);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &format!("pick/{}/{level}", db.name)));
    pool.shuffle(&mut rng);
    assert!(pool.len() >= n, "{}: only {} {level} candidates, need {n}", db.name, pool.len());
    pool.truncate(n);
    pool
}

// -------------------------------------------------------- scripted model

#[derive(Clone, Copy, PartialEq)]
enum Answer {
    Gold,
    Wrong,
    Refusal,
    Unrunnable,
}

fn interpretation(db: &Database, variant: Variant) -> String {
    let n = db.tables.len();
    let count = NUMBER_WORDS.get(n).copied().map_or(n.to_string(), str::to_string);
    let names: Vec<&str> = db.tables.iter().map(|t| t.name.as_str()).collect();
    let mut out = format!("The code above includes the creation of {count} tables: {}.", names.join(", "));
    for t in &db.tables {
        let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = write!(out, " The table {} stores {}.", t.name, cols.join(", "));
    }
    match variant {
        Variant::Original => {
            let links: Vec<String> =
                db.foreign_keys.iter().map(|fk| format!("{} refers to {}", fk.from_table, fk.to_table)).collect();
            let _ = write!(out, " Relationships: {}. Sample rows are inserted for every table.", links.join("; "));
        }
        Variant::Atd => out.push_str(" No relationships between the tables are declared and no rows are inserted."),
    }
    out
}

fn format_answer(sql: &str, style: u64) -> String {
    match style % 4 {
        0 => format!("```sql\n{sql};\n```"),
        1 => format!("{sql};"),
        2 => format!("Here is the query:\n```\n{sql}\n```"),
        _ => format!("```sql\n{sql}\n```\nThis query answers the question."),
    }
}

/// Replaces the first whole-word occurrence of `from` in `sql`.
fn replace_word(sql: &str, from: &str, to: &str) -> Option<String> {
    let boundary = |c: Option<char>| c.is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '_'));
    let mut start = 0;
    while let Some(i) = sql[start..].find(from).map(|i| i + start) {
        let end = i + from.len();
        if boundary(sql[..i].chars().next_back()) && boundary(sql[end..].chars().next()) {
            return Some(format!("{}{to}{}", &sql[..i], &sql[end..]));
        }
        start = end;
    }
    None
}

/// A plausible mistake that the fuzzer tells apart from the gold query:
/// a structural perturbation, a swapped column, or a truncated result.
fn wrong_answer(gold: &str, db: &Database, id: &str) -> Option<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &format!("wrong/{id}")));
    let mut options: Vec<String> =
        (0..4u64).filter_map(|k| perturb_query(gold, db, rng.random::<u64>() ^ k).ok().map(|p| p.sql)).collect();
    let mut swaps = Vec::new();
    for t in &db.tables {
        for c in &t.columns {
            for other in t.columns.iter().filter(|o| o.name != c.name) {
                if let Some(sql) = replace_word(gold, &q(&c.name), &q(&other.name)) {
                    swaps.push(sql);
                }
            }
        }
    }
    swaps.shuffle(&mut rng);
    options.extend(swaps);
    if !gold.contains("LIMIT") {
        options.push(format!("{gold} LIMIT 1"));
    }
    let opts = TsaOptions { max_instances: 200, base_seed: 1 };
    options
        .into_iter()
        .filter(|sql| sql != gold)
        .take(40)
        .find(|sql| test_suite_accuracy(gold, sql, db, &opts).status == VerdictStatus::Incorrect)
}

struct Script {
    dc: HashMap<String, String>,
    interpretations: HashMap<String, String>,
    translations: HashMap<(String, String), String>,
}

impl Script {
    fn respond(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let first = &request.messages[0].content;
        let found = match request.messages.len() {
            1 => self.dc.get(first).or_else(|| self.interpretations.get(first)),
            _ => {
                let last = &request.messages.last().expect("non-empty").content;
                self.translations.get(&(first.clone(), last.clone()))
            }
        };
        found.cloned().ok_or_else(|| TransportError::Network("request outside the fixture script".into()))
    }
}

// --------------------------------------------------------------- build

struct Built {
    dumps: Vec<Database>,
    records: Vec<QueryRecord>,
}

fn build_dataset(plan: &DatasetPlan, root: &Path) -> Built {
    let schema_dir = root.join("fixtures/schemas").join(plan.name);
    let out_dir = root.join("fixtures").join(plan.name);
    let _ = fs::remove_dir_all(&out_dir);
    fs::create_dir_all(out_dir.join("dumps")).expect("mkdir");

    let mut files: Vec<PathBuf> = fs::read_dir(&schema_dir)
        .expect("schema dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "sql"))
        .collect();
    files.sort();

    let mut dumps = Vec::new();
    let mut records = Vec::new();
    let mut dump_paths = Vec::new();
    let mut manifest_queries = Vec::new();
    for file in files {
        let name = file.file_stem().expect("stem").to_string_lossy().to_string();
        let schema_text = fs::read_to_string(&file).expect("schema");
        let mut db = parse_dump(&schema_text).unwrap_or_else(|e| panic!("{name}: {e}"));
        db.name = name.clone();
        assert!(!db.foreign_keys.is_empty(), "{name} declares no foreign key");
        fill_rows(&mut db);
        let text = format!("{}\n{}", schema_text.trim_end(), insert_text(&db));
        let rel = format!("dumps/{name}.sql");
        fs::write(out_dir.join(&rel), &text).expect("write dump");
        let mut reparsed = parse_dump(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        reparsed.name = name.clone();
        assert_eq!(reparsed, db, "{name}: dump does not round-trip");
        rusqlite::Connection::open_in_memory()
            .and_then(|c| c.execute_batch(&format!("PRAGMA foreign_keys = OFF;\n{text}")))
            .unwrap_or_else(|e| panic!("{name}: SQLite rejects the dump: {e}"));

        let easy = plan.easy.iter().find(|e| e.0 == name).map_or(plan.per_cell, |e| e.1)
            + usize::from(plan.extra_easy.contains(&name.as_str()));
        for level in HardnessLevel::ALL {
            if plan.empty.contains(&(name.as_str(), level)) {
                continue;
            }
            let n = if level == Easy { easy } else { plan.per_cell };
            for (sql, question) in select_queries(&db, level, n) {
                let id = format!("{}-{:03}", plan.name, records.len() + 1);
                manifest_queries.push(json!({
                    "id": id, "question": question, "gold_sql": sql, "database": name, "hardness": level.as_str()
                }));
                records.push(QueryRecord {
                    id,
                    nl_question: question,
                    gold_sql: sql,
                    hardness: level,
                    database_name: name.clone(),
                });
            }
        }
        dump_paths.push(rel);
        dumps.push(db);
    }
    let manifest = json!({ "name": plan.name, "dumps": dump_paths, "queries": manifest_queries });
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n")
        .expect("write manifest");
    Built { dumps, records }
}

fn answers_for(plan: &DatasetPlan, built: &Built, variant: Variant) -> Vec<Answer> {
    let vi = usize::from(variant == Variant::Atd);
    let mut easy_seen: HashMap<&str, usize> = HashMap::new();
    built
        .records
        .iter()
        .map(|r| {
            let calibrated = variant == Variant::Original && r.hardness == Easy;
            if let (true, Some(&(_, _, correct))) = (calibrated, plan.easy.iter().find(|e| e.0 == r.database_name)) {
                let k = easy_seen.entry(r.database_name.as_str()).or_default();
                *k += 1;
                return if *k <= correct { Answer::Gold } else { Answer::Wrong };
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &format!("answer/{variant}/{}", r.id)));
            let roll: f64 = rng.random();
            let side: f64 = rng.random();
            if r.gold_sql.contains("avg(") && side < 0.06 {
                Answer::Unrunnable
            } else if roll < plan.rates[vi][r.hardness.index()] {
                Answer::Gold
            } else if side > 0.95 {
                Answer::Refusal
            } else {
                Answer::Wrong
            }
        })
        .collect()
}

fn script_dataset(plan: &DatasetPlan, built: &Built, config: &Config, script: &mut Script) {
    let options = MaskOptions { ratio: config.audit.mask_ratio, seed: config.audit.seed, exclude_pk: config.audit.exclude_pk };
    for db in &built.dumps {
        if plan.dc_missing.contains(&db.name.as_str()) {
            continue;
        }
        let &(_, correct, total) = plan.dc.iter().find(|d| d.0 == db.name).unwrap_or_else(|| panic!("no DC target for {}", db.name));
        let md = mask_columns(db, &MaskOptions { seed: derive_seed(options.seed, &db.name), ..options }).expect("mask");
        if total != 0 {
            assert_eq!(md.ground_truth.len(), total, "{}: masked column count", db.name);
        }
        let correct = correct.min(md.ground_truth.len());
        let mut guess = db.without_rows();
        for (i, truth) in md.ground_truth.iter().enumerate() {
            if i < correct {
                continue;
            }
            let wrong = format!("{}_field_{}", words(&truth.table).replace(' ', "_"), i + 1);
            let t = guess.table_mut(&truth.table).expect("table");
            t.columns[truth.position].name = wrong.clone();
            for k in &mut t.primary_key {
                if *k == truth.name {
                    *k = wrong.clone();
                }
            }
            for fk in &mut guess.foreign_keys {
                if fk.from_table == truth.table && fk.from_column == truth.name {
                    fk.from_column = wrong.clone();
                }
                if fk.to_table == truth.table && fk.to_column == truth.name {
                    fk.to_column = wrong.clone();
                }
            }
        }
        let prompt = build_dc_prompt(&md).messages.remove(0).content;
        let reply = format!("```sql\n{}```", render_dump(&guess));
        let score = score_reconstruction(&md, &reply);
        assert_eq!(score.correct, correct, "{}: {:?}", db.name, score.notes);
        script.dc.insert(prompt, reply);
    }

    for variant in [Variant::Original, Variant::Atd] {
        let shown: HashMap<&str, (String, String)> = built
            .dumps
            .iter()
            .map(|db| {
                let prepared = variant.prepare(db);
                (db.name.as_str(), (render_dump(&prepared), interpretation(db, variant)))
            })
            .collect();
        for (dump, interp) in shown.values() {
            script.interpretations.insert(dump.clone(), interp.clone());
        }
        let answers = answers_for(plan, built, variant);
        for (r, answer) in built.records.iter().zip(answers) {
            let db = built.dumps.iter().find(|d| d.name == r.database_name).expect("db");
            let style = derive_seed(SEED, &format!("style/{variant}/{}", r.id));
            let reply = match answer {
                Answer::Gold => format_answer(&r.gold_sql, style),
                Answer::Wrong => match wrong_answer(&r.gold_sql, db, &r.id) {
                    Some(sql) => format_answer(&sql, style),
                    None => {
                        assert!(
                            !(variant == Variant::Original && r.hardness == Easy && !plan.easy.is_empty()),
                            "{}: no distinguishable wrong answer for a calibrated cell",
                            r.id
                        );
                        "I am sorry, but I cannot tell which records the question refers to.".to_string()
                    }
                },
                Answer::Refusal => "I am sorry, but the schema does not contain enough information to answer this.".into(),
                Answer::Unrunnable => format_answer(&r.gold_sql.replacen("avg(", "MEDIAN(", 1), style),
            };
            let (dump, _) = &shown[r.database_name.as_str()];
            script.translations.insert((dump.clone(), format!("{TRANSLATION_INSTRUCTION}{}", r.nl_question)), reply);
        }
    }
}

fn write_mcq_dataset(root: &Path, spider: &Built, termite: &Built) {
    let dir = root.join("fixtures/mcq");
    let _ = fs::remove_dir_all(dir.join("dumps"));
    fs::create_dir_all(dir.join("dumps")).expect("mkdir");
    let mut dumps = Vec::new();
    let mut queries = Vec::new();
    for (built, source, dbs) in
        [(spider, "spider", ["concert_singer", "pets_1"]), (termite, "termite", ["hackathon", "recensioni"])]
    {
        for name in dbs {
            let rel = format!("dumps/{name}.sql");
            fs::copy(root.join("fixtures").join(source).join(&rel), dir.join(&rel)).expect("copy dump");
            dumps.push(rel);
            for r in built.records.iter().filter(|r| r.database_name == name).take(5) {
                queries.push(json!({
                    "id": format!("mcq-{:02}", queries.len() + 1),
                    "question": r.nl_question,
                    "gold_sql": r.gold_sql,
                    "database": name,
                    "hardness": r.hardness.as_str(),
                }));
            }
        }
    }
    assert_eq!(queries.len(), 20);
    let manifest = json!({ "name": "mcq", "dumps": dumps, "queries": queries });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n").expect("write");
}

const AUDIT_TOML: &str = r#"# Hermetic audit over the packaged fixtures; replays transcripts.jsonl.
[llm]
model = "gpt-3.5-turbo"
temperature = 0.0
concurrency = 4

[audit]
datasets = ["spider", "termite"]
output = "reports"
transcripts = "transcripts.jsonl"
mode = "replay"
seed = 0
mask_ratio = 0.25
max_instances = 100
"#;

fn sort_lines(path: &Path) {
    let text = fs::read_to_string(path).expect("transcripts");
    let mut lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    lines.sort_unstable();
    fs::write(path, lines.join("\n") + "\n").expect("write transcripts");
}

fn main() {
    let root = root();
    let fixtures = root.join("fixtures");
    fs::write(fixtures.join("audit.toml"), AUDIT_TOML).expect("write config");
    let config = Config::load(&fixtures.join("audit.toml")).expect("config");

    let spider = build_dataset(&SPIDER, &root);
    let termite = build_dataset(&TERMITE, &root);
    println!("spider: {} dumps, {} questions", spider.dumps.len(), spider.records.len());
    println!("termite: {} dumps, {} questions", termite.dumps.len(), termite.records.len());
    write_mcq_dataset(&root, &spider, &termite);

    let mut script = Script { dc: HashMap::new(), interpretations: HashMap::new(), translations: HashMap::new() };
    script_dataset(&SPIDER, &spider, &config, &mut script);
    script_dataset(&TERMITE, &termite, &config, &mut script);

    let datasets: Vec<Dataset> = config
        .audit
        .datasets
        .iter()
        .map(|d| Dataset::load(&config.resolve(d)).unwrap_or_else(|e| panic!("{}: {e}", d.display())))
        .collect();
    for ds in &datasets {
        assert!(ds.warnings.is_empty(), "{}: {:?}", ds.name, ds.warnings);
    }

    let transcripts = config.resolve(&config.audit.transcripts);
    let _ = fs::remove_file(&transcripts);
    let store = Arc::new(TranscriptStore::open(&transcripts).expect("store"));
    let script = Arc::new(script);
    let model = {
        let script = script.clone();
        Arc::new(FnTransport(move |r: &ChatRequest| script.respond(r)))
    };
    let wordlist = Wordlist::default();
    let recorded = run_audit(&config, &datasets, Arc::new(RecordingTransport::new(model, store)), &wordlist);
    assert_eq!(recorded.transport_failures, SPIDER.dc_missing.len());
    sort_lines(&transcripts);

    let replay = Arc::new(ReplayTransport::new(Arc::new(TranscriptStore::open_existing(&transcripts).expect("store"))));
    let outcome = run_audit(&config, &datasets, replay, &wordlist);
    for name in [sqlcontam_core::audit::EVAL_REPORT, sqlcontam_core::audit::PREDICTIONS] {
        assert_eq!(outcome.files[name], recorded.files[name], "{name}: replay differs from the recording run");
    }
    for s in &outcome.stages {
        println!("{}: {:?}: {}", s.stage, s.status, s.detail);
        let expected = if s.stage == "dc/spider" { StageStatus::Partial } else { StageStatus::Ok };
        assert_eq!(s.status, expected, "{}", s.stage);
    }
    let dc = &outcome.files[sqlcontam_core::audit::DC_REPORT];
    for needle in ["33.42 (±33.01)", "13.21 (±18.70)"] {
        assert!(dc.contains(needle), "DC report lacks {needle}:\n{dc}");
    }
    let eval = &outcome.files[sqlcontam_core::audit::EVAL_REPORT];
    assert!(eval.contains("90.11"), "eval report lacks the calibrated EASY cell:\n{eval}");
    let review = outcome.files[sqlcontam_core::audit::MANUAL_REVIEW].lines().count() - 1;
    let total = 2 * (spider.records.len() + termite.records.len());
    println!("undecidable: {review} of {total}");
    assert!(review as f64 <= 0.03 * total as f64);
    println!("wrote {}", transcripts.display());
}
