//! Dataset fact sheet: size figures, key density and column-name style.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardness::QueryRecord;
use crate::model::Database;

const BUILTIN_WORDS: &str = include_str!("../data/short_words.txt");

/// Dictionary used to decide whether a short name token is a real word.
#[derive(Debug, Clone)]
pub struct Wordlist {
    words: HashSet<String>,
    /// Tokens longer than this are never abbreviations.
    pub max_abbr_len: usize,
}

impl Default for Wordlist {
    fn default() -> Self {
        Wordlist::from_text(BUILTIN_WORDS)
    }
}

impl Wordlist {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Wordlist { words, max_abbr_len: 6 }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Membership of a lowercase token, also accepting common inflections of
    /// listed words (`opened`, `ratings`, `cities`).
    pub fn contains(&self, token: &str) -> bool {
        if self.words.contains(token) {
            return true;
        }
        let stems = [
            token.strip_suffix('s').map(str::to_string),
            token.strip_suffix("es").map(str::to_string),
            token.strip_suffix("ies").map(|s| format!("{s}y")),
            token.strip_suffix("ed").map(str::to_string),
            token.strip_suffix('d').map(str::to_string),
            token.strip_suffix("ing").map(str::to_string),
            token.strip_suffix("ing").map(|s| format!("{s}e")),
            token.strip_suffix("er").map(str::to_string),
        ];
        stems.into_iter().flatten().any(|s| s.len() > 1 && self.words.contains(&s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameClass {
    pub is_compound: bool,
    pub is_abbreviation: bool,
}

/// Splits an identifier on separators, camel-case humps and letter/digit
/// boundaries: `ContId` → `Cont`, `Id`; `GDPGrowth_2020` → `GDP`, `Growth`, `2020`.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in name.split(|c: char| !c.is_alphanumeric()).filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_alphabetic() != cur.is_alphabetic())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                out.push(chars[start..i].iter().collect());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect());
    }
    out
}

/// Compound: at least two tokens. Abbreviation: some alphabetic token of at
/// most `max_abbr_len` characters is not in the wordlist.
pub fn classify_column_name(name: &str, wordlist: &Wordlist) -> NameClass {
    let tokens = name_tokens(name);
    let is_abbreviation = tokens.iter().any(|t| {
        t.chars().all(char::is_alphabetic)
            && t.chars().count() <= wordlist.max_abbr_len
            && !wordlist.contains(&t.to_lowercase())
    });
    NameClass { is_compound: tokens.len() >= 2, is_abbreviation }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseStats {
    pub name: String,
    pub tables: usize,
    pub columns: usize,
    pub foreign_keys: usize,
    pub compound_columns: usize,
    pub abbreviated_columns: usize,
    pub queries: usize,
}

impl DatabaseStats {
    fn ratio(&self, n: usize) -> f64 {
        if self.columns == 0 {
            0.0
        } else {
            n as f64 / self.columns as f64
        }
    }

    pub fn fk_ratio(&self) -> f64 {
        self.ratio(self.foreign_keys)
    }

    pub fn compound_ratio(&self) -> f64 {
        self.ratio(self.compound_columns)
    }

    pub fn abbreviation_ratio(&self) -> f64 {
        self.ratio(self.abbreviated_columns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSheet {
    pub db_count: usize,
    pub avg_tables_per_db: f64,
    /// Total columns over total tables.
    pub avg_columns_per_table: f64,
    pub query_count: usize,
    pub avg_queries_per_db: f64,
    pub avg_fk_per_columns_per_db: f64,
    pub avg_compound_per_columns_per_db: f64,
    pub avg_abbr_per_columns_per_db: f64,
    /// Sorted by database name.
    pub per_database: Vec<DatabaseStats>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("question {id} refers to unknown database `{database}`")]
    UnknownDatabase { id: String, database: String },
}

/// Counts for one database; `queries` is left at 0.
pub fn database_stats(db: &Database, wordlist: &Wordlist) -> DatabaseStats {
    let mut stats = DatabaseStats {
        name: db.name.clone(),
        tables: db.tables.len(),
        columns: db.column_count(),
        foreign_keys: db.foreign_keys.len(),
        compound_columns: 0,
        abbreviated_columns: 0,
        queries: 0,
    };
    for col in db.tables.iter().flat_map(|t| &t.columns) {
        let class = classify_column_name(&col.name, wordlist);
        stats.compound_columns += usize::from(class.is_compound);
        stats.abbreviated_columns += usize::from(class.is_abbreviation);
    }
    stats
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

pub fn compute_fact_sheet(dumps: &[Database], records: &[QueryRecord], wordlist: &Wordlist) -> Result<FactSheet, StatsError> {
    let mut per_db: BTreeMap<String, DatabaseStats> =
        dumps.iter().map(|db| (db.name.clone(), database_stats(db, wordlist))).collect();
    for r in records {
        let stats = per_db.get_mut(&r.database_name).ok_or_else(|| StatsError::UnknownDatabase {
            id: r.id.clone(),
            database: r.database_name.clone(),
        })?;
        stats.queries += 1;
    }
    let per_database: Vec<DatabaseStats> = per_db.into_values().collect();
    let n = per_database.len();
    let tables: usize = per_database.iter().map(|d| d.tables).sum();
    let columns: usize = per_database.iter().map(|d| d.columns).sum();
    Ok(FactSheet {
        db_count: n,
        avg_tables_per_db: mean(per_database.iter().map(|d| d.tables as f64), n),
        avg_columns_per_table: if tables == 0 { 0.0 } else { columns as f64 / tables as f64 },
        query_count: records.len(),
        avg_queries_per_db: mean(per_database.iter().map(|d| d.queries as f64), n),
        avg_fk_per_columns_per_db: mean(per_database.iter().map(DatabaseStats::fk_ratio), n),
        avg_compound_per_columns_per_db: mean(per_database.iter().map(DatabaseStats::compound_ratio), n),
        avg_abbr_per_columns_per_db: mean(per_database.iter().map(DatabaseStats::abbreviation_ratio), n),
        per_database,
    })
}
