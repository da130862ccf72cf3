use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{Database, MASK_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateTable,
    DuplicateColumn,
    EmptyColumnName,
    MaskName,
    UnknownPrimaryKeyColumn,
    UnresolvedForeignKey,
    RowArity,
}

/// One broken invariant, located by table (and column when relevant).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub table: String,
    pub column: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "{:?} at {}.{}: {}", self.kind, self.table, c, self.detail),
            None => write!(f, "{:?} at {}: {}", self.kind, self.table, self.detail),
        }
    }
}

pub fn validate(db: &Database) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, table: &str, column: Option<&str>, detail: String| {
        out.push(Violation { kind, table: table.to_string(), column: column.map(str::to_string), detail });
    };
    let mut seen_tables = HashSet::new();
    for t in &db.tables {
        if !seen_tables.insert(t.name.to_lowercase()) {
            push(ViolationKind::DuplicateTable, &t.name, None, "table name appears more than once".into());
        }
        let mut seen_cols = HashSet::new();
        for c in &t.columns {
            if c.name.is_empty() {
                push(ViolationKind::EmptyColumnName, &t.name, None, "column with empty name".into());
            }
            if c.masked != (c.name == MASK_TOKEN) {
                push(ViolationKind::MaskName, &t.name, Some(&c.name), "masked flag disagrees with column name".into());
            }
            if !c.masked && !seen_cols.insert(c.name.to_lowercase()) {
                push(ViolationKind::DuplicateColumn, &t.name, Some(&c.name), "column name appears more than once".into());
            }
        }
        for k in &t.primary_key {
            if t.column(k).is_none() {
                push(ViolationKind::UnknownPrimaryKeyColumn, &t.name, Some(k), "primary key names a missing column".into());
            }
        }
        for (i, row) in t.rows.iter().enumerate() {
            if row.values.len() != t.columns.len() {
                push(
                    ViolationKind::RowArity,
                    &t.name,
                    None,
                    format!("row {i} has {} values, expected {}", row.values.len(), t.columns.len()),
                );
            }
        }
    }
    for fk in &db.foreign_keys {
        let from_ok = db.table(&fk.from_table).is_some_and(|t| t.column(&fk.from_column).is_some());
        let to_ok = db.table(&fk.to_table).is_some_and(|t| t.column(&fk.to_column).is_some());
        if !from_ok || !to_ok {
            let end = if from_ok { "referenced" } else { "referencing" };
            push(
                ViolationKind::UnresolvedForeignKey,
                &fk.from_table,
                Some(&fk.from_column),
                format!("foreign key {fk}: {end} end does not resolve"),
            );
        }
    }
    out
}
