//! Query hardness: feature extraction over a parsed `SELECT` and the
//! four-level classification rule.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sqlparser::ast::{BinaryOperator, Expr, ObjectName, Query, Select, SetExpr, TableFactor, Visit, Visitor};

use crate::model::Database;
use crate::query::{column_ref, is_aggregate_call, parse_query, predicate_atoms, QueryError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub table_count: usize,
    pub join_count: usize,
    pub agg_count: usize,
    pub where_pred_count: usize,
    pub has_nesting: bool,
    pub has_setop: bool,
    pub has_order_by: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum HardnessLevel {
    Easy,
    Medium,
    Hard,
    ExtraHard,
}

impl HardnessLevel {
    pub const ALL: [HardnessLevel; 4] =
        [HardnessLevel::Easy, HardnessLevel::Medium, HardnessLevel::Hard, HardnessLevel::ExtraHard];

    pub fn as_str(self) -> &'static str {
        match self {
            HardnessLevel::Easy => "easy",
            HardnessLevel::Medium => "medium",
            HardnessLevel::Hard => "hard",
            HardnessLevel::ExtraHard => "extra",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for HardnessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HardnessLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphabetic()).collect();
        match norm.as_str() {
            "easy" => Ok(HardnessLevel::Easy),
            "medium" => Ok(HardnessLevel::Medium),
            "hard" => Ok(HardnessLevel::Hard),
            "extra" | "extrahard" => Ok(HardnessLevel::ExtraHard),
            _ => Err(format!("unknown hardness level `{s}`")),
        }
    }
}

impl From<HardnessLevel> for String {
    fn from(h: HardnessLevel) -> String {
        h.as_str().to_string()
    }
}

impl TryFrom<String> for HardnessLevel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One benchmark item: a question, its gold query and its hardness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub nl_question: String,
    pub gold_sql: String,
    pub hardness: HardnessLevel,
    pub database_name: String,
}

/// Extracts features from `sql`. When `schema` has tables, every referenced
/// table must exist in it.
pub fn extract_features(sql: &str, schema: &Database) -> Result<QueryFeatures, QueryError> {
    let q = parse_query(sql)?;
    let c = collect(&q)?;
    if !schema.tables.is_empty() {
        if let Some(missing) = c.tables.iter().find(|t| schema.table(t).is_none()) {
            return Err(QueryError::UnknownTable(missing.clone()));
        }
    }
    Ok(c.features())
}

/// Features of an already-parsed query.
pub fn features_of(q: &Query) -> Result<QueryFeatures, QueryError> {
    collect(q).map(|c| c.features())
}

fn collect(q: &Query) -> Result<Collector, QueryError> {
    let mut c = Collector::default();
    let _ = q.visit(&mut c);
    if c.tables.is_empty() {
        return Err(QueryError::NoTable);
    }
    Ok(c)
}

impl Collector {
    fn features(&self) -> QueryFeatures {
        QueryFeatures {
            table_count: self.tables.len(),
            join_count: self.joins,
            agg_count: self.aggs,
            where_pred_count: self.preds,
            has_nesting: self.nesting,
            has_setop: self.setop,
            has_order_by: self.order_by,
        }
    }
}

#[derive(Default)]
struct Collector {
    tables: BTreeSet<String>,
    ctes: HashSet<String>,
    joins: usize,
    aggs: usize,
    preds: usize,
    nesting: bool,
    setop: bool,
    order_by: bool,
}

fn contains_setop(body: &SetExpr) -> bool {
    match body {
        SetExpr::SetOperation { .. } => true,
        SetExpr::Query(q) => contains_setop(&q.body),
        _ => false,
    }
}

fn has_column_equality(selection: &Expr) -> bool {
    predicate_atoms(selection).into_iter().any(|atom| {
        matches!(atom, Expr::BinaryOp { left, op: BinaryOperator::Eq, right }
            if column_ref(left).is_some() && column_ref(right).is_some())
    })
}

impl Visitor for Collector {
    type Break = ();

    fn pre_visit_query(&mut self, q: &Query) -> ControlFlow<()> {
        if let Some(with) = &q.with {
            self.nesting = true;
            for cte in &with.cte_tables {
                self.ctes.insert(cte.alias.name.value.to_lowercase());
            }
        }
        if contains_setop(&q.body) {
            self.setop = true;
        }
        if q.order_by.is_some() {
            self.order_by = true;
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_select(&mut self, s: &Select) -> ControlFlow<()> {
        self.joins += s.from.iter().map(|twj| twj.joins.len()).sum::<usize>();
        if let Some(selection) = &s.selection {
            self.preds += predicate_atoms(selection).len();
            if s.from.len() > 1 && has_column_equality(selection) {
                self.joins += s.from.len() - 1;
            }
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_table_factor(&mut self, tf: &TableFactor) -> ControlFlow<()> {
        match tf {
            TableFactor::Derived { .. } => self.nesting = true,
            TableFactor::NestedJoin { table_with_joins, .. } => self.joins += table_with_joins.joins.len(),
            _ => {}
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_relation(&mut self, name: &ObjectName) -> ControlFlow<()> {
        if let Some(last) = name.0.last().and_then(|p| p.as_ident()) {
            let lower = last.value.to_lowercase();
            if !self.ctes.contains(&lower) {
                self.tables.insert(lower);
            }
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, e: &Expr) -> ControlFlow<()> {
        if is_aggregate_call(e) {
            self.aggs += 1;
        }
        if matches!(e, Expr::Subquery(_) | Expr::InSubquery { .. } | Expr::Exists { .. }) {
            self.nesting = true;
        }
        ControlFlow::Continue(())
    }
}

/// The four-level rule. Nesting and set operators dominate; otherwise the
/// level grows with tables, joins, aggregates and WHERE predicates.
pub fn classify(f: &QueryFeatures) -> HardnessLevel {
    if f.has_nesting || f.has_setop {
        HardnessLevel::ExtraHard
    } else if f.join_count + f.agg_count >= 2 && f.table_count >= 2 {
        HardnessLevel::Hard
    } else if f.table_count >= 2 || (f.table_count == 1 && f.agg_count + f.where_pred_count >= 2) {
        HardnessLevel::Medium
    } else {
        HardnessLevel::Easy
    }
}

/// Parses, extracts and classifies in one step.
pub fn classify_sql(sql: &str, schema: &Database) -> Result<HardnessLevel, QueryError> {
    extract_features(sql, schema).map(|f| classify(&f))
}

/// Query counts per hardness level, indexed by [`HardnessLevel::index`].
pub type LevelCounts = [usize; 4];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HardnessHistogram {
    pub per_database: BTreeMap<String, LevelCounts>,
}

impl HardnessHistogram {
    pub fn totals(&self) -> LevelCounts {
        let mut t = [0; 4];
        for counts in self.per_database.values() {
            for (acc, c) in t.iter_mut().zip(counts) {
                *acc += c;
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.totals().iter().sum()
    }

    /// Mean number of queries per (database, level) cell.
    pub fn mean_per_level_per_database(&self) -> f64 {
        let cells = self.per_database.len() * 4;
        if cells == 0 {
            0.0
        } else {
            self.total() as f64 / cells as f64
        }
    }
}

pub fn hardness_histogram(records: &[QueryRecord]) -> HardnessHistogram {
    let mut h = HardnessHistogram::default();
    for r in records {
        h.per_database.entry(r.database_name.clone()).or_insert([0; 4])[r.hardness.index()] += 1;
    }
    h
}
