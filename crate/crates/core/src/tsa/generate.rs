use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ident_eq, Affinity, Database, Row, Table, Value};

const NULL_PROBABILITY: f64 = 0.05;
const POOL_PROBABILITY: f64 = 0.5;
const MIN_ROWS: usize = 2;
const MAX_ROWS: usize = 12;
const ROW_ATTEMPTS: usize = 64;
const SYLLABLES: [&str; 8] = ["ka", "lo", "mi", "ra", "te", "su", "no", "vi"];

/// Literal values that instance generation prefers over purely random ones.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValuePools {
    by_affinity: HashMap<AffinityKey, Vec<Value>>,
    by_column: HashMap<(String, String), Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
enum AffinityKey {
    Integer,
    Real,
    Text,
    Date,
    Boolean,
}

impl From<Affinity> for AffinityKey {
    fn from(a: Affinity) -> Self {
        match a {
            Affinity::Integer => AffinityKey::Integer,
            Affinity::Real => AffinityKey::Real,
            Affinity::Text => AffinityKey::Text,
            Affinity::Date => AffinityKey::Date,
            Affinity::Boolean => AffinityKey::Boolean,
        }
    }
}

fn push_unique(list: &mut Vec<Value>, v: Value) {
    if !list.contains(&v) {
        list.push(v);
    }
}

impl ValuePools {
    /// Pools seeded with every non-NULL value found in the database's rows.
    pub fn from_database(db: &Database) -> Self {
        let mut pools = ValuePools::default();
        for table in &db.tables {
            for (i, col) in table.columns.iter().enumerate() {
                let key = (table.name.to_lowercase(), col.name.to_lowercase());
                for row in &table.rows {
                    if let Some(v) = row.values.get(i).filter(|v| !v.is_null()) {
                        push_unique(pools.by_column.entry(key.clone()).or_default(), v.clone());
                    }
                }
            }
        }
        pools
    }

    fn add(&mut self, key: AffinityKey, v: Value) {
        push_unique(self.by_affinity.entry(key).or_default(), v);
    }

    /// Adds the literals of a query. Integers also contribute their
    /// neighbours so that boundary comparisons (`>` vs `>=`) are exercised.
    /// Scanning is lexical, so queries outside the parser's dialect still
    /// contribute.
    pub fn harvest_query(&mut self, sql: &str) {
        for lit in scan_literals(sql) {
            match lit {
                Literal::Number(text) => {
                    if let Ok(n) = text.parse::<i64>() {
                        for m in [n - 1, n, n + 1] {
                            self.add(AffinityKey::Integer, Value::Integer(m));
                            self.add(AffinityKey::Real, Value::Real(m as f64));
                        }
                    } else if let Ok(x) = text.parse::<f64>() {
                        self.add(AffinityKey::Real, Value::Real(x));
                        self.add(AffinityKey::Integer, Value::Integer(x.floor() as i64));
                        self.add(AffinityKey::Integer, Value::Integer(x.ceil() as i64));
                    }
                }
                Literal::Text(s) => {
                    if let Ok(n) = s.trim().parse::<i64>() {
                        self.add(AffinityKey::Integer, Value::Integer(n));
                    }
                    if s.contains('%') || s.contains('_') {
                        let core = s.replace(['%', '_'], "");
                        if !core.is_empty() {
                            self.add(AffinityKey::Text, Value::Text(core.clone()));
                            self.add(AffinityKey::Text, Value::Text(format!("x{core}x")));
                        }
                    }
                    self.add(AffinityKey::Date, Value::Text(s.clone()));
                    self.add(AffinityKey::Text, Value::Text(s));
                }
            }
        }
    }

    /// Harvested literals of a type family.
    pub fn for_affinity(&self, affinity: Affinity) -> &[Value] {
        self.by_affinity.get(&AffinityKey::from(affinity)).map_or(&[], Vec::as_slice)
    }

    /// Values seen in a column's original rows.
    pub fn for_column(&self, table: &str, column: &str) -> &[Value] {
        self.by_column.get(&(table.to_lowercase(), column.to_lowercase())).map_or(&[], Vec::as_slice)
    }
}

enum Literal {
    Number(String),
    Text(String),
}

/// Single-quoted strings, double-quoted words (which SQLite treats as strings
/// when no column matches) and free-standing numbers.
fn scan_literals(sql: &str) -> Vec<Literal> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\'' || c == '"' {
            let mut s = String::new();
            i += 1;
            while i < chars.len() {
                if chars[i] == c {
                    if chars.get(i + 1) == Some(&c) {
                        s.push(c);
                        i += 2;
                        continue;
                    }
                    break;
                }
                s.push(chars[i]);
                i += 1;
            }
            out.push(Literal::Text(s));
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let standalone = i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                i += 1;
            }
            if standalone {
                let mut text: String = chars[start..i].iter().collect();
                if start > 0 && chars[start - 1] == '-' {
                    text.insert(0, '-');
                }
                out.push(Literal::Number(text));
            }
        } else if c.is_alphanumeric() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

/// A populated copy of a schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatabaseInstance {
    pub seed: u64,
    pub database: Database,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("cannot generate a row for `{table}` with a unique primary key")]
    Unsatisfiable { table: String },
}

/// Parents before children; tables in foreign-key cycles keep their
/// declaration order.
fn table_order(schema: &Database) -> Vec<usize> {
    let n = schema.tables.len();
    let parents: Vec<HashSet<usize>> = schema
        .tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            schema
                .foreign_keys_from(&t.name)
                .filter_map(|fk| schema.table_index(&fk.to_table))
                .filter(|&p| p != i)
                .collect()
        })
        .collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n)
            .find(|&i| !done[i] && parents[i].iter().all(|&p| done[p]))
            .or_else(|| (0..n).find(|&i| !done[i]))
            .expect("unfinished table");
        done[next] = true;
        order.push(next);
    }
    order
}

fn random_value(rng: &mut ChaCha8Rng, affinity: Affinity) -> Value {
    match affinity {
        Affinity::Integer => Value::Integer(rng.random_range(0..=60)),
        Affinity::Real => Value::Real(f64::from(rng.random_range(0..=400)) / 4.0),
        Affinity::Boolean => Value::Integer(rng.random_range(0..=1)),
        Affinity::Date => Value::Text(format!(
            "{}-{:02}-{:02}",
            rng.random_range(1990..=2024),
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        )),
        Affinity::Text => {
            let len = rng.random_range(1..=2);
            Value::Text((0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect())
        }
    }
}

fn pooled_value(rng: &mut ChaCha8Rng, pools: &ValuePools, table: &Table, col: usize) -> Option<Value> {
    let column = &table.columns[col];
    let own = pools.for_column(&table.name, &column.name);
    let shared = pools.for_affinity(column.sql_type.affinity());
    let total = own.len() + shared.len();
    if total == 0 {
        return None;
    }
    let k = rng.random_range(0..total);
    Some(if k < own.len() { own[k].clone() } else { shared[k - own.len()].clone() })
}

fn key_of(row: &[Value], key_cols: &[usize]) -> String {
    key_cols.iter().map(|&i| format!("{:?}", row[i])).collect::<Vec<_>>().join("\u{1f}")
}

/// Fills every table of `schema` with 2 to 12 rows. Foreign-key cells copy a
/// value of the referenced column; other cells are NULL (5%, never in keys),
/// a pooled literal, or a random value of the column's type family. Rows
/// with a duplicate primary key are redrawn; a table whose key space is too
/// small for its drawn size keeps the rows it could fill.
pub fn generate_instance(schema: &Database, seed: u64, pools: &ValuePools) -> Result<DatabaseInstance, GenerationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = schema.without_rows();
    for ti in table_order(schema) {
        let table = db.tables[ti].clone();
        let key_cols: Vec<usize> = table.primary_key.iter().filter_map(|k| table.column_index(k)).collect();
        let fk_sources: Vec<Option<Vec<Value>>> = table
            .columns
            .iter()
            .map(|c| {
                let fk = db.foreign_keys_from(&table.name).find(|fk| ident_eq(&fk.from_column, &c.name))?;
                let parent = db.table(&fk.to_table)?;
                let idx = parent.column_index(&fk.to_column)?;
                let values: Vec<Value> =
                    parent.rows.iter().map(|r| r.values[idx].clone()).filter(|v| !v.is_null()).collect();
                (!values.is_empty()).then_some(values)
            })
            .collect();
        let target = rng.random_range(MIN_ROWS..=MAX_ROWS);
        let mut rows: Vec<Row> = Vec::with_capacity(target);
        let mut keys = HashSet::new();
        'rows: for _ in 0..target {
            for _ in 0..ROW_ATTEMPTS {
                let values: Vec<Value> = (0..table.columns.len())
                    .map(|ci| {
                        if let Some(source) = &fk_sources[ci] {
                            return source.choose(&mut rng).expect("non-empty").clone();
                        }
                        if !key_cols.contains(&ci) && rng.random_bool(NULL_PROBABILITY) {
                            return Value::Null;
                        }
                        if rng.random_bool(POOL_PROBABILITY) {
                            if let Some(v) = pooled_value(&mut rng, pools, &table, ci) {
                                return v;
                            }
                        }
                        random_value(&mut rng, table.columns[ci].sql_type.affinity())
                    })
                    .collect();
                if key_cols.is_empty() || keys.insert(key_of(&values, &key_cols)) {
                    rows.push(Row::new(values));
                    continue 'rows;
                }
            }
            break;
        }
        if rows.is_empty() {
            return Err(GenerationError::Unsatisfiable { table: table.name });
        }
        db.tables[ti].rows = rows;
    }
    Ok(DatabaseInstance { seed, database: db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_dump;

    fn schema() -> Database {
        parse_dump(
            "CREATE TABLE child (id INTEGER PRIMARY KEY, parent_id INTEGER REFERENCES parent (pid), note TEXT);
             CREATE TABLE parent (pid INTEGER PRIMARY KEY, name TEXT, score REAL, born DATE);",
        )
        .unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let pools = ValuePools::default();
        assert_eq!(generate_instance(&schema(), 3, &pools), generate_instance(&schema(), 3, &pools));
        assert_ne!(generate_instance(&schema(), 3, &pools), generate_instance(&schema(), 4, &pools));
    }

    #[test]
    fn rows_respect_keys() {
        let pools = ValuePools::default();
        for seed in 0..50 {
            let inst = generate_instance(&schema(), seed, &pools).unwrap().database;
            let parent = inst.table("parent").unwrap();
            let child = inst.table("child").unwrap();
            assert!((MIN_ROWS..=MAX_ROWS).contains(&parent.rows.len()));
            let pids: Vec<&Value> = parent.rows.iter().map(|r| &r.values[0]).collect();
            let unique: HashSet<String> = pids.iter().map(|v| format!("{v:?}")).collect();
            assert_eq!(unique.len(), pids.len());
            assert!(pids.iter().all(|v| !v.is_null()));
            for r in &child.rows {
                assert!(pids.contains(&&r.values[1]), "dangling child value {:?}", r.values[1]);
            }
        }
    }

    #[test]
    fn harvested_literals_reach_the_pools() {
        let mut pools = ValuePools::default();
        pools.harvest_query("SELECT name FROM parent WHERE score > 5 AND name = 'O''Hara' AND T1.x = \"France\" LIKE '%ab%'");
        let ints = pools.for_affinity(Affinity::Integer);
        for n in [4, 5, 6] {
            assert!(ints.contains(&Value::Integer(n)));
        }
        assert!(!ints.contains(&Value::Integer(1)), "T1 is an identifier, not a number");
        let texts = pools.for_affinity(Affinity::Text);
        for s in ["O'Hara", "France", "ab"] {
            assert!(texts.contains(&Value::Text(s.into())), "{s}");
        }
    }

    #[test]
    fn pooled_values_appear_in_instances() {
        let mut pools = ValuePools::default();
        pools.harvest_query("SELECT * FROM parent WHERE score = 12345");
        let hit = (0..100).any(|seed| {
            let inst = generate_instance(&schema(), seed, &pools).unwrap().database;
            inst.table("parent").unwrap().rows.iter().any(|r| r.values[2] == Value::Real(12345.0))
        });
        assert!(hit);
    }

    #[test]
    fn small_key_space_is_capped_not_fatal() {
        let db = parse_dump("CREATE TABLE flag (f BOOLEAN PRIMARY KEY);").unwrap();
        for seed in 0..20 {
            let inst = generate_instance(&db, seed, &ValuePools::default()).unwrap();
            assert!(inst.database.tables[0].rows.len() <= 2);
        }
    }

    #[test]
    fn parents_come_first() {
        let order = table_order(&schema());
        assert_eq!(order, vec![1, 0]);
    }
}
