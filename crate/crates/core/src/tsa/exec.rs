use std::cmp::Ordering;
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};
use std::sync::Arc;

use rusqlite::types::ValueRef;
use rusqlite::{params_from_iter, Connection};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DatabaseInstance;
use crate::model::{quote_ident, Value};
use crate::query::{has_top_level_order_by, parse_query};

/// Relative tolerance for comparing numeric cells.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

/// Progress callbacks (every 1000 VM steps) before a query is interrupted.
const STEP_BUDGET: u32 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Int(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob(_) => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(x) => Some(*x),
            _ => None,
        }
    }

    fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => {
                a.as_f64().expect("numeric").total_cmp(&b.as_f64().expect("numeric"))
            }
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    /// NULL equals NULL; numbers compare with [`FLOAT_TOLERANCE`]; text and
    /// blobs compare byte-wise.
    pub fn matches(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Null, Cell::Null) => true,
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Blob(a), Cell::Blob(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x - y).abs() <= FLOAT_TOLERANCE * x.abs().max(y.abs()).max(1.0),
                _ => false,
            },
        }
    }
}

/// The result relation of one query on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denotation {
    pub columns: usize,
    pub rows: Vec<Vec<Cell>>,
    /// The producing query ends with a top-level `ORDER BY`.
    pub ordered: bool,
}

fn rows_match(a: &[Vec<Cell>], b: &[Vec<Cell>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.iter().zip(y).all(|(p, q)| p.matches(q)))
}

fn sorted(rows: &[Vec<Cell>]) -> Vec<Vec<Cell>> {
    let mut rows = rows.to_vec();
    rows.sort_by(|x, y| x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal));
    rows
}

/// Sequence equality if either side is ordered, multiset equality otherwise.
/// Column names are not part of a denotation.
pub fn denotations_equal(a: &Denotation, b: &Denotation) -> bool {
    if a.columns != b.columns || a.rows.len() != b.rows.len() {
        return false;
    }
    if a.ordered || b.ordered {
        rows_match(&a.rows, &b.rows)
    } else {
        rows_match(&sorted(&a.rows), &sorted(&b.rows))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("statement is not a read-only query")]
    NotReadOnly,
    #[error("execution failed: {0}")]
    Sqlite(String),
    #[error("query exceeded the step budget")]
    Interrupted,
    #[error("cannot load instance: {0}")]
    Load(String),
}

/// Top-level `ORDER BY`, falling back to a lexical scan when the query is
/// outside the parser's dialect.
pub fn is_ordered(sql: &str) -> bool {
    if let Ok(q) = parse_query(sql) {
        return has_top_level_order_by(&q);
    }
    let upper = sql.to_ascii_uppercase();
    let bytes = upper.as_bytes();
    let mut depth = 0i32;
    let mut quote = None;
    let mut found = false;
    for (i, &b) in bytes.iter().enumerate() {
        match (quote, b) {
            (Some(q), _) if b == q => quote = None,
            (Some(_), _) => {}
            (None, b'\'' | b'"' | b'`') => quote = Some(b),
            (None, b'(') => depth += 1,
            (None, b')') => depth -= 1,
            (None, b'O') if depth == 0 && upper[i..].starts_with("ORDER") => {
                let after = upper[i + 5..].trim_start();
                let boundary = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
                if boundary && after.starts_with("BY") {
                    found = true;
                }
            }
            _ => {}
        }
    }
    found
}

/// An instance loaded into an in-memory SQLite database.
pub struct Backend {
    conn: Connection,
    steps: Arc<AtomicU32>,
}

impl Backend {
    pub fn load(inst: &DatabaseInstance) -> Result<Self, ExecError> {
        let load = |e: rusqlite::Error| ExecError::Load(e.to_string());
        let conn = Connection::open_in_memory().map_err(load)?;
        let mut ddl = String::new();
        for t in &inst.database.tables {
            let cols: Vec<String> =
                t.columns.iter().map(|c| format!("{} {}", quote_ident(&c.name), c.sql_type.as_sql())).collect();
            ddl.push_str(&format!("CREATE TABLE {} ({});\n", quote_ident(&t.name), cols.join(", ")));
        }
        conn.execute_batch(&ddl).map_err(load)?;
        for t in &inst.database.tables {
            if t.rows.is_empty() {
                continue;
            }
            let marks = vec!["?"; t.columns.len()].join(", ");
            let mut stmt =
                conn.prepare(&format!("INSERT INTO {} VALUES ({marks})", quote_ident(&t.name))).map_err(load)?;
            for row in &t.rows {
                stmt.execute(params_from_iter(row.values.iter().map(to_sql))).map_err(load)?;
            }
        }
        let steps = Arc::new(AtomicU32::new(0));
        let counter = steps.clone();
        conn.progress_handler(1000, Some(move || counter.fetch_add(1, AtomicOrdering::Relaxed) >= STEP_BUDGET))
            .map_err(load)?;
        Ok(Backend { conn, steps })
    }

    pub fn execute(&self, sql: &str) -> Result<Denotation, ExecError> {
        self.steps.store(0, AtomicOrdering::Relaxed);
        let sqlite = |e: rusqlite::Error| {
            if matches!(e.sqlite_error_code(), Some(rusqlite::ErrorCode::OperationInterrupted)) {
                ExecError::Interrupted
            } else {
                ExecError::Sqlite(e.to_string())
            }
        };
        let mut stmt = self.conn.prepare(sql).map_err(sqlite)?;
        if !stmt.readonly() {
            return Err(ExecError::NotReadOnly);
        }
        let columns = stmt.column_count();
        let mut rows = Vec::new();
        let mut cursor = stmt.query([]).map_err(sqlite)?;
        while let Some(row) = cursor.next().map_err(sqlite)? {
            let mut cells = Vec::with_capacity(columns);
            for i in 0..columns {
                cells.push(match row.get_ref(i).map_err(sqlite)? {
                    ValueRef::Null => Cell::Null,
                    ValueRef::Integer(n) => Cell::Int(n),
                    ValueRef::Real(x) => Cell::Real(x),
                    ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
                });
            }
            rows.push(cells);
        }
        Ok(Denotation { columns, rows, ordered: is_ordered(sql) })
    }
}

fn to_sql(v: &Value) -> rusqlite::types::Value {
    use rusqlite::types::Value as Sql;
    match v {
        Value::Null => Sql::Null,
        Value::Integer(n) => Sql::Integer(*n),
        Value::Real(x) => Sql::Real(*x),
        Value::Text(s) => Sql::Text(s.clone()),
        Value::Boolean(b) => Sql::Integer(i64::from(*b)),
    }
}

/// Loads `inst` and runs `sql` on it.
pub fn execute(sql: &str, inst: &DatabaseInstance) -> Result<Denotation, ExecError> {
    Backend::load(inst)?.execute(sql)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_dump, Row};

    fn inst(rows: usize) -> DatabaseInstance {
        let mut db = parse_dump("CREATE TABLE t (a INTEGER, b TEXT);").unwrap();
        db.tables[0].rows = (0..rows).map(|i| Row::new(vec![Value::Integer(i as i64), Value::Text(format!("r{i}"))])).collect();
        DatabaseInstance { seed: 0, database: db }
    }

    fn den(rows: Vec<Vec<Cell>>, ordered: bool) -> Denotation {
        Denotation { columns: rows.first().map_or(1, Vec::len), rows, ordered }
    }

    #[test]
    fn count_and_order_flag() {
        let d = execute("SELECT COUNT(*) FROM t", &inst(7)).unwrap();
        assert_eq!(d.rows, vec![vec![Cell::Int(7)]]);
        assert!(!d.ordered);
        assert!(execute("SELECT a FROM t ORDER BY a", &inst(3)).unwrap().ordered);
        assert!(!execute("SELECT a FROM (SELECT a FROM t ORDER BY a)", &inst(3)).unwrap().ordered);
    }

    #[test]
    fn failures_are_reported() {
        assert!(matches!(execute("SELECT MEDIAN(a) FROM t", &inst(3)), Err(ExecError::Sqlite(_))));
        assert!(matches!(execute("DELETE FROM t", &inst(3)), Err(ExecError::NotReadOnly)));
        let runaway = "WITH RECURSIVE n(i) AS (SELECT 1 UNION ALL SELECT i + 1 FROM n) SELECT COUNT(*) FROM n";
        assert_eq!(execute(runaway, &inst(1)), Err(ExecError::Interrupted));
    }

    #[test]
    fn comparison_rules() {
        let a = den(vec![vec![Cell::Int(1)], vec![Cell::Int(2)]], false);
        let b = den(vec![vec![Cell::Int(2)], vec![Cell::Int(1)]], false);
        assert!(denotations_equal(&a, &b));
        let ordered = Denotation { ordered: true, ..b.clone() };
        assert!(!denotations_equal(&a, &ordered));
        let wide = den(vec![vec![Cell::Int(1), Cell::Int(1)], vec![Cell::Int(2), Cell::Int(2)]], false);
        assert!(!denotations_equal(&a, &wide));
        let nulls = den(vec![vec![Cell::Null]], false);
        assert!(denotations_equal(&nulls, &nulls.clone()));
        let x = den(vec![vec![Cell::Real(0.1 + 0.2)]], false);
        let y = den(vec![vec![Cell::Real(0.3)]], false);
        assert!(denotations_equal(&x, &y));
        assert!(denotations_equal(&den(vec![vec![Cell::Int(3)]], false), &den(vec![vec![Cell::Real(3.0)]], false)));
        assert!(!denotations_equal(&den(vec![vec![Cell::Text("1".into())]], false), &den(vec![vec![Cell::Int(1)]], false)));
    }

    #[test]
    fn lexical_order_detection() {
        assert!(is_ordered("SELECT a FROM t ORDER BY a LIMIT 1 -- ("));
        assert!(!is_ordered("SELECT a FROM t WHERE x = 'ORDER BY' AND (SELECT 1 ORDER BY 1)) junk"));
    }
}
