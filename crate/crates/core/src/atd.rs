//! Adversarial table disconnection: drop every foreign key and every row,
//! keep every name, type and primary key.

use serde::Serialize;

use crate::model::{Database, ForeignKey};

pub fn apply_atd(db: &Database) -> Database {
    let mut out = db.without_rows();
    out.foreign_keys.clear();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AtdDiff {
    pub removed_foreign_keys: Vec<ForeignKey>,
    /// (table, rows removed), only for tables that lost rows.
    pub removed_rows: Vec<(String, usize)>,
    /// Name, type or key changes; empty for a genuine ATD pair.
    pub unexpected: Vec<String>,
}

impl AtdDiff {
    pub fn is_empty(&self) -> bool {
        self.removed_foreign_keys.is_empty() && self.removed_rows.is_empty() && self.unexpected.is_empty()
    }
}

/// Compares a database with its disconnected version. Anything other than
/// lost foreign keys and rows is reported under `unexpected`.
pub fn atd_diff(before: &Database, after: &Database) -> AtdDiff {
    let mut diff = AtdDiff {
        removed_foreign_keys: before.foreign_keys.iter().filter(|fk| !after.foreign_keys.contains(fk)).cloned().collect(),
        ..AtdDiff::default()
    };
    for fk in after.foreign_keys.iter().filter(|fk| !before.foreign_keys.contains(fk)) {
        diff.unexpected.push(format!("foreign key {fk} added"));
    }
    if before.tables.len() != after.tables.len() {
        diff.unexpected.push(format!("table count changed from {} to {}", before.tables.len(), after.tables.len()));
    }
    for (b, a) in before.tables.iter().zip(&after.tables) {
        if b.name != a.name {
            diff.unexpected.push(format!("table `{}` renamed to `{}`", b.name, a.name));
        }
        if b.columns.len() != a.columns.len() {
            diff.unexpected.push(format!("table `{}` column count changed", b.name));
        }
        for (cb, ca) in b.columns.iter().zip(&a.columns) {
            if cb.name != ca.name {
                diff.unexpected.push(format!("column `{}.{}` renamed to `{}`", b.name, cb.name, ca.name));
            }
            if cb.sql_type != ca.sql_type {
                diff.unexpected.push(format!("column `{}.{}` type changed from {} to {}", b.name, cb.name, cb.sql_type, ca.sql_type));
            }
        }
        if b.primary_key != a.primary_key {
            diff.unexpected.push(format!("primary key of `{}` changed", b.name));
        }
        if a.rows.len() < b.rows.len() {
            diff.removed_rows.push((b.name.clone(), b.rows.len() - a.rows.len()));
        } else if a.rows != b.rows {
            diff.unexpected.push(format!("rows of `{}` changed", b.name));
        }
    }
    diff
}
