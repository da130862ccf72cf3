//! Shared helpers for parsing and inspecting `SELECT` queries.

use sqlparser::ast::{Expr, Query, SetExpr, Statement};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("cannot parse query (line {line}, column {column}): {message}")]
    Parse { message: String, line: u64, column: u64 },
    #[error("expected exactly one SELECT statement, found {0}")]
    NotASelect(String),
    #[error("query references no table")]
    NoTable,
    #[error("query references unknown table `{0}`")]
    UnknownTable(String),
}

/// Parses `sql` as a single query statement (a trailing `;` is allowed).
pub fn parse_query(sql: &str) -> Result<Query, QueryError> {
    let statements = Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| {
        let message = e.to_string();
        let (line, column) = error_location(&message);
        QueryError::Parse { message, line, column }
    })?;
    match <[Statement; 1]>::try_from(statements) {
        Ok([Statement::Query(q)]) => Ok(*q),
        Ok([other]) => Err(QueryError::NotASelect(first_word(&other.to_string()))),
        Err(v) => Err(QueryError::NotASelect(format!("{} statements", v.len()))),
    }
}

fn first_word(s: &str) -> String {
    s.split_whitespace().next().unwrap_or_default().to_string()
}

fn error_location(message: &str) -> (u64, u64) {
    let grab = |key: &str| {
        message
            .find(key)
            .map(|i| &message[i + key.len()..])
            .and_then(|rest| rest.split(|c: char| !c.is_ascii_digit()).next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(0)
    };
    (grab("Line: "), grab("Column: "))
}

/// Names of the aggregate functions counted by the hardness rules.
pub const AGGREGATES: [&str; 5] = ["COUNT", "SUM", "AVG", "MIN", "MAX"];

pub fn is_aggregate_call(expr: &Expr) -> bool {
    match expr {
        Expr::Function(f) => {
            let name = f.name.to_string();
            AGGREGATES.iter().any(|a| name.eq_ignore_ascii_case(a))
        }
        _ => false,
    }
}

/// True when the query's outermost level ends with `ORDER BY`.
pub fn has_top_level_order_by(q: &Query) -> bool {
    if q.order_by.is_some() {
        return true;
    }
    // `(SELECT ... ORDER BY x)` parses as a query wrapping a nested query.
    match q.body.as_ref() {
        SetExpr::Query(inner) => has_top_level_order_by(inner),
        _ => false,
    }
}

/// Atomic predicates of a boolean expression split on AND / OR / NOT.
pub fn predicate_atoms(expr: &Expr) -> Vec<&Expr> {
    let mut out = Vec::new();
    collect_atoms(expr, &mut out);
    out
}

fn collect_atoms<'a>(expr: &'a Expr, out: &mut Vec<&'a Expr>) {
    use sqlparser::ast::{BinaryOperator, UnaryOperator};
    match expr {
        Expr::BinaryOp { left, op: BinaryOperator::And | BinaryOperator::Or, right } => {
            collect_atoms(left, out);
            collect_atoms(right, out);
        }
        Expr::UnaryOp { op: UnaryOperator::Not, expr } | Expr::Nested(expr) => collect_atoms(expr, out),
        other => out.push(other),
    }
}

/// Lowercased last component of an identifier or compound identifier.
pub fn column_ref(expr: &Expr) -> Option<(Option<String>, String)> {
    match expr {
        Expr::Identifier(id) => Some((None, id.value.clone())),
        Expr::CompoundIdentifier(parts) if parts.len() >= 2 => {
            let n = parts.len();
            Some((Some(parts[n - 2].value.clone()), parts[n - 1].value.clone()))
        }
        Expr::Nested(inner) => column_ref(inner),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_queries_and_garbage() {
        assert!(matches!(parse_query("DELETE FROM t"), Err(QueryError::NotASelect(_))));
        assert!(matches!(parse_query("SELECT 1; SELECT 2"), Err(QueryError::NotASelect(_))));
        match parse_query("SELECT FROM WHERE") {
            Err(QueryError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_by_detection_is_top_level_only() {
        assert!(has_top_level_order_by(&parse_query("SELECT a FROM t ORDER BY a").unwrap()));
        assert!(!has_top_level_order_by(
            &parse_query("SELECT a FROM (SELECT a FROM t ORDER BY a LIMIT 3)").unwrap()
        ));
    }

    #[test]
    fn atoms_split_on_connectives() {
        let q = parse_query("SELECT a FROM t WHERE (a = 1 OR b BETWEEN 1 AND 2) AND NOT c > 3").unwrap();
        let sqlparser::ast::SetExpr::Select(s) = q.body.as_ref() else { panic!() };
        assert_eq!(predicate_atoms(s.selection.as_ref().unwrap()).len(), 3);
    }
}
