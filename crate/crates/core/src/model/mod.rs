//! Typed schema model for SQL dumps.
//!
//! A [`Database`] is parsed from `CREATE TABLE` / `INSERT` text, may be
//! transformed (masking, table disconnection), and is rendered back to a
//! canonical dump with [`render_dump`].

mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use lexer::Position;
pub use parser::{load_dump, parse_dump, parse_dump_with_warnings, DumpError, ParseWarning};
pub use render::{quote_ident, quote_str, render_dump, render_value};
pub use validate::{validate, Violation, ViolationKind};

/// Literal column name used for masked columns.
pub const MASK_TOKEN: &str = "[MASK]";

/// Case-insensitive identifier comparison.
pub fn ident_eq(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b) || (!a.is_ascii() && a.to_lowercase() == b.to_lowercase())
}

/// Declared column type. Anything outside the core set is kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SqlType {
    Integer,
    Real,
    Text,
    Date,
    Boolean,
    Other(String),
}

impl SqlType {
    pub fn from_raw(raw: &str) -> Self {
        match raw.to_ascii_uppercase().as_str() {
            "INTEGER" => SqlType::Integer,
            "REAL" => SqlType::Real,
            "TEXT" => SqlType::Text,
            "DATE" => SqlType::Date,
            "BOOLEAN" => SqlType::Boolean,
            _ => SqlType::Other(raw.to_string()),
        }
    }

    pub fn as_sql(&self) -> &str {
        match self {
            SqlType::Integer => "INTEGER",
            SqlType::Real => "REAL",
            SqlType::Text => "TEXT",
            SqlType::Date => "DATE",
            SqlType::Boolean => "BOOLEAN",
            SqlType::Other(raw) => raw,
        }
    }

    /// Value family used when generating data for this type, following
    /// SQLite's affinity rules for the `OTHER` spellings.
    pub fn affinity(&self) -> Affinity {
        match self {
            SqlType::Integer => Affinity::Integer,
            SqlType::Real => Affinity::Real,
            SqlType::Text => Affinity::Text,
            SqlType::Date => Affinity::Date,
            SqlType::Boolean => Affinity::Boolean,
            SqlType::Other(raw) => {
                let up = raw.to_ascii_uppercase();
                if up.contains("BOOL") || up.starts_with("BIT") {
                    Affinity::Boolean
                } else if up.contains("DATE") || up.contains("TIME") || up.contains("YEAR(") {
                    Affinity::Date
                } else if up.contains("INT") {
                    Affinity::Integer
                } else if up.contains("CHAR") || up.contains("CLOB") || up.contains("TEXT") {
                    Affinity::Text
                } else if up.contains("REAL")
                    || up.contains("FLOA")
                    || up.contains("DOUB")
                    || up.contains("DEC")
                    || up.contains("NUM")
                {
                    Affinity::Real
                } else {
                    Affinity::Text
                }
            }
        }
    }
}

impl fmt::Display for SqlType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_sql())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Affinity {
    Integer,
    Real,
    Text,
    Date,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub sql_type: SqlType,
    pub masked: bool,
    /// Column constraints other than keys (`NOT NULL`, `UNIQUE`, `DEFAULT ...`),
    /// kept as opaque text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, sql_type: SqlType) -> Self {
        let name = name.into();
        let masked = name == MASK_TOKEN;
        Column { name, sql_type, masked, annotations: Vec::new() }
    }
}

/// A scalar cell value. `Null` and `Text("")` are distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Boolean(bool),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub values: Vec<Value>,
}

impl Row {
    pub fn new(values: Vec<Value>) -> Self {
        Row { values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Table { name: name.into(), columns, primary_key: Vec::new(), rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| ident_eq(&c.name, name))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn is_primary_key(&self, column: &str) -> bool {
        self.primary_key.iter().any(|k| ident_eq(k, column))
    }

    pub fn has_masked_column(&self) -> bool {
        self.columns.iter().any(|c| c.masked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

impl fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} -> {}.{}", self.from_table, self.from_column, self.to_table, self.to_column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Database {
    pub name: String,
    pub tables: Vec<Table>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl Database {
    pub fn new(name: impl Into<String>) -> Self {
        Database { name: name.into(), tables: Vec::new(), foreign_keys: Vec::new() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| ident_eq(&t.name, name))
    }

    pub fn table_mut(&mut self, name: &str) -> Option<&mut Table> {
        self.tables.iter_mut().find(|t| ident_eq(&t.name, name))
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| ident_eq(&t.name, name))
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn row_count(&self) -> usize {
        self.tables.iter().map(|t| t.rows.len()).sum()
    }

    /// Foreign keys whose `from_table` is `table`.
    pub fn foreign_keys_from<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ForeignKey> + 'a {
        self.foreign_keys.iter().filter(move |fk| ident_eq(&fk.from_table, table))
    }

    /// Copy of the database with every row removed.
    pub fn without_rows(&self) -> Database {
        let mut db = self.clone();
        for t in &mut db.tables {
            t.rows.clear();
        }
        db
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_types_only_match_exact_keywords() {
        assert_eq!(SqlType::from_raw("integer"), SqlType::Integer);
        assert_eq!(SqlType::from_raw("INT"), SqlType::Other("INT".into()));
        assert_eq!(SqlType::from_raw("varchar(20)").affinity(), Affinity::Text);
        assert_eq!(SqlType::from_raw("decimal(10,2)").affinity(), Affinity::Real);
        assert_eq!(SqlType::from_raw("datetime").affinity(), Affinity::Date);
        assert_eq!(SqlType::from_raw("bigint").affinity(), Affinity::Integer);
    }

    #[test]
    fn identifiers_compare_case_insensitively() {
        assert!(ident_eq("ContId", "contid"));
        assert!(ident_eq("Città", "CITTÀ"));
        assert!(!ident_eq("a", "b"));
    }

    #[test]
    fn mask_token_column_is_flagged() {
        assert!(Column::new(MASK_TOKEN, SqlType::Text).masked);
        assert!(!Column::new("Continent", SqlType::Text).masked);
    }
}
