use std::ops::ControlFlow;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    visit_expressions_mut, visit_relations, visit_relations_mut, Expr, FunctionArg, FunctionArgExpr,
    FunctionArguments, Ident, ObjectName, Query, Select, SelectItem, SetExpr, TableFactor, UnaryOperator,
    BinaryOperator,
};

use super::McqError;
use crate::model::{ident_eq, Database};
use crate::query::{is_aggregate_call, parse_query, AGGREGATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    DropPredicate,
    SwapAggregate,
    ReplaceColumn,
    RenameTable,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::DropPredicate,
        PerturbationKind::SwapAggregate,
        PerturbationKind::ReplaceColumn,
        PerturbationKind::RenameTable,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub sql: String,
}

/// The query as rendered by the SQL parser; options are compared and shown
/// in this form so that formatting does not give the gold query away.
pub fn canonical_sql(sql: &str) -> Result<String, crate::query::QueryError> {
    parse_query(sql).map(|q| q.to_string())
}

fn outer_select(q: &mut Query) -> Option<&mut Select> {
    let mut body = q.body.as_mut();
    loop {
        match body {
            SetExpr::Select(s) => return Some(s),
            SetExpr::SetOperation { left, .. } => body = left.as_mut(),
            SetExpr::Query(inner) => body = inner.body.as_mut(),
            _ => return None,
        }
    }
}

fn count_atoms(expr: &Expr) -> usize {
    crate::query::predicate_atoms(expr).len()
}

/// Removes the `target`-th atom; `None` means the whole expression went away.
fn drop_atom(expr: Expr, target: usize, seen: &mut usize) -> Option<Expr> {
    match expr {
        Expr::BinaryOp { left, op: op @ (BinaryOperator::And | BinaryOperator::Or), right } => {
            let l = drop_atom(*left, target, seen);
            let r = drop_atom(*right, target, seen);
            match (l, r) {
                (Some(l), Some(r)) => Some(Expr::BinaryOp { left: Box::new(l), op, right: Box::new(r) }),
                (one, None) | (None, one) => one,
            }
        }
        Expr::UnaryOp { op: UnaryOperator::Not, expr } => {
            drop_atom(*expr, target, seen).map(|e| Expr::UnaryOp { op: UnaryOperator::Not, expr: Box::new(e) })
        }
        Expr::Nested(inner) => drop_atom(*inner, target, seen).map(|e| Expr::Nested(Box::new(e))),
        atom => {
            let index = *seen;
            *seen += 1;
            (index != target).then_some(atom)
        }
    }
}

fn drop_predicate(q: &mut Query, rng: &mut ChaCha8Rng) -> bool {
    let Some(select) = outer_select(q) else { return false };
    let Some(selection) = select.selection.take() else { return false };
    let target = rng.random_range(0..count_atoms(&selection));
    select.selection = drop_atom(selection, target, &mut 0);
    true
}

fn projection_expr(item: &mut SelectItem) -> Option<&mut Expr> {
    match item {
        SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => Some(e),
        _ => None,
    }
}

fn single_arg(f: &sqlparser::ast::Function) -> Option<&FunctionArgExpr> {
    match &f.args {
        FunctionArguments::List(list) if list.args.len() == 1 => match &list.args[0] {
            FunctionArg::Unnamed(arg) => Some(arg),
            _ => None,
        },
        _ => None,
    }
}

fn swappable_aggregates(select: &mut Select) -> Vec<&mut sqlparser::ast::Function> {
    let mut out = Vec::new();
    for item in select.projection.iter_mut() {
        if let Some(Expr::Function(f)) = projection_expr(item) {
            let plain = matches!(single_arg(f), Some(FunctionArgExpr::Expr(_)));
            if plain && is_aggregate_call(&Expr::Function(f.clone())) {
                out.push(f);
            }
        }
    }
    out
}

fn swap_aggregate(q: &mut Query, rng: &mut ChaCha8Rng) -> bool {
    let Some(select) = outer_select(q) else { return false };
    let mut calls = swappable_aggregates(select);
    if calls.is_empty() {
        return false;
    }
    let i = rng.random_range(0..calls.len());
    let f = &mut calls[i];
    let current = f.name.to_string();
    let others: Vec<&str> = AGGREGATES.iter().copied().filter(|a| !a.eq_ignore_ascii_case(&current)).collect();
    let new_name = others[rng.random_range(0..others.len())];
    f.name = ObjectName::from(vec![Ident::new(new_name)]);
    true
}

/// `(qualifier used in the query, table)` for every table in the outer FROM.
fn from_tables<'a>(select: &Select, schema: &'a Database) -> Vec<(String, &'a crate::model::Table)> {
    let mut factors = Vec::new();
    for twj in &select.from {
        factors.push(&twj.relation);
        factors.extend(twj.joins.iter().map(|j| &j.relation));
    }
    factors
        .into_iter()
        .filter_map(|f| match f {
            TableFactor::Table { name, alias, .. } => {
                let table_name = name.0.last()?.as_ident()?.value.clone();
                let table = schema.table(&table_name)?;
                let qualifier = alias.as_ref().map_or(table_name, |a| a.name.value.clone());
                Some((qualifier, table))
            }
            _ => None,
        })
        .collect()
}

fn replace_column(q: &mut Query, schema: &Database, rng: &mut ChaCha8Rng) -> bool {
    let Some(select) = outer_select(q) else { return false };
    let mut tables = from_tables(select, schema);
    if tables.is_empty() {
        tables = schema.tables.iter().map(|t| (t.name.clone(), t)).collect();
    }
    let candidates: Vec<(String, String)> =
        tables.iter().flat_map(|(q, t)| t.columns.iter().map(move |c| (q.clone(), c.name.clone()))).collect();

    let mut column_refs = 0;
    for item in select.projection.iter_mut() {
        let _ = visit_expressions_mut(item, |e| {
            if matches!(e, Expr::Identifier(_) | Expr::CompoundIdentifier(_)) {
                column_refs += 1;
            }
            ControlFlow::<()>::Continue(())
        });
    }

    if column_refs > 0 {
        let target = rng.random_range(0..column_refs);
        let mut seen = 0;
        let mut done = false;
        for item in select.projection.iter_mut() {
            let _ = visit_expressions_mut(item, |e| {
                let current = match e {
                    Expr::Identifier(id) => Some((None, id.value.clone())),
                    Expr::CompoundIdentifier(parts) => {
                        let n = parts.len();
                        Some((n.checked_sub(2).map(|i| parts[i].value.clone()), parts[n - 1].value.clone()))
                    }
                    _ => None,
                };
                let Some((qualifier, column)) = current else { return ControlFlow::Continue(()) };
                seen += 1;
                if seen - 1 != target {
                    return ControlFlow::Continue(());
                }
                let options: Vec<&(String, String)> =
                    candidates.iter().filter(|(_, c)| !ident_eq(c, &column)).collect();
                if let Some((q, c)) = options.choose(rng) {
                    *e = match qualifier {
                        Some(_) => Expr::CompoundIdentifier(vec![Ident::new(q.clone()), Ident::new(c.clone())]),
                        None => Expr::Identifier(Ident::new(c.clone())),
                    };
                    done = true;
                }
                ControlFlow::Break(())
            });
        }
        return done;
    }

    let Some((_, column)) = candidates.choose(rng) else { return false };
    let column = Ident::new(column.clone());
    for item in select.projection.iter_mut() {
        match item {
            SelectItem::Wildcard(_) => {
                *item = SelectItem::UnnamedExpr(Expr::Identifier(column));
                return true;
            }
            SelectItem::UnnamedExpr(Expr::Function(f)) | SelectItem::ExprWithAlias { expr: Expr::Function(f), .. } => {
                if let FunctionArguments::List(list) = &mut f.args {
                    if let [FunctionArg::Unnamed(arg @ FunctionArgExpr::Wildcard)] = list.args.as_mut_slice() {
                        *arg = FunctionArgExpr::Expr(Expr::Identifier(column));
                        return true;
                    }
                }
            }
            _ => {}
        }
    }
    false
}

fn rename_table(q: &mut Query, schema: &Database, rng: &mut ChaCha8Rng) -> bool {
    let mut referenced: Vec<String> = Vec::new();
    let _ = visit_relations(q, |name| {
        if let Some(id) = name.0.last().and_then(|p| p.as_ident()) {
            if !referenced.iter().any(|r| ident_eq(r, &id.value)) {
                referenced.push(id.value.clone());
            }
        }
        ControlFlow::<()>::Continue(())
    });
    let unused: Vec<&str> = schema
        .tables
        .iter()
        .map(|t| t.name.as_str())
        .filter(|t| !referenced.iter().any(|r| ident_eq(r, t)))
        .collect();
    if referenced.is_empty() || unused.is_empty() {
        return false;
    }
    let old = referenced[rng.random_range(0..referenced.len())].clone();
    let new = unused[rng.random_range(0..unused.len())];
    let _ = visit_relations_mut(q, |name| {
        if name.0.last().and_then(|p| p.as_ident()).is_some_and(|id| ident_eq(&id.value, &old)) {
            *name = ObjectName::from(vec![Ident::new(new)]);
        }
        ControlFlow::<()>::Continue(())
    });
    true
}

fn apply(kind: PerturbationKind, q: &mut Query, schema: &Database, rng: &mut ChaCha8Rng) -> bool {
    match kind {
        PerturbationKind::DropPredicate => drop_predicate(q, rng),
        PerturbationKind::SwapAggregate => swap_aggregate(q, rng),
        PerturbationKind::ReplaceColumn => replace_column(q, schema, rng),
        PerturbationKind::RenameTable => rename_table(q, schema, rng),
    }
}

/// Applies one seeded operator to `gold`. Operators are tried in a seeded
/// order until one yields a parseable query that differs from the gold query
/// in canonical form; column replacement is always tried last.
pub fn perturb_query(gold: &str, schema: &Database, seed: u64) -> Result<Perturbation, McqError> {
    let parsed = parse_query(gold).map_err(|e| McqError::Parse { sql: gold.to_string(), message: e.to_string() })?;
    let canonical = parsed.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = PerturbationKind::ALL.to_vec();
    order.shuffle(&mut rng);
    if let Some(i) = order.iter().position(|&k| k == PerturbationKind::ReplaceColumn) {
        let fallback = order.remove(i);
        order.push(fallback);
    }
    for kind in order {
        let mut q = parsed.clone();
        if !apply(kind, &mut q, schema, &mut rng) {
            continue;
        }
        let sql = q.to_string();
        if sql != canonical && parse_query(&sql).is_ok() {
            return Ok(Perturbation { kind, sql });
        }
    }
    Err(McqError::NoPerturbation { sql: gold.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_dump;

    fn schema() -> Database {
        parse_dump(
            "CREATE TABLE t (id INTEGER PRIMARY KEY, a INTEGER, b TEXT);
             CREATE TABLE u (uid INTEGER PRIMARY KEY, t_id INTEGER REFERENCES t(id), c REAL);",
        )
        .unwrap()
    }

    fn with(kind: PerturbationKind, sql: &str, seed: u64) -> Option<String> {
        let mut q = parse_query(sql).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        apply(kind, &mut q, &schema(), &mut rng).then(|| q.to_string())
    }

    #[test]
    fn drop_the_only_predicate() {
        assert_eq!(with(PerturbationKind::DropPredicate, "SELECT COUNT(*) FROM t WHERE a>3", 0).unwrap(), "SELECT COUNT(*) FROM t");
        assert_eq!(with(PerturbationKind::DropPredicate, "SELECT a FROM t", 0), None);
    }

    #[test]
    fn drop_one_of_several_predicates() {
        let out: Vec<String> = (0..20)
            .filter_map(|s| with(PerturbationKind::DropPredicate, "SELECT a FROM t WHERE a > 1 AND (b = 'x' OR NOT a < 9)", s))
            .collect();
        assert!(out.contains(&"SELECT a FROM t WHERE (b = 'x' OR NOT a < 9)".to_string()));
        assert!(out.contains(&"SELECT a FROM t WHERE a > 1 AND (NOT a < 9)".to_string()));
        assert!(out.contains(&"SELECT a FROM t WHERE a > 1 AND (b = 'x')".to_string()));
    }

    #[test]
    fn swap_aggregate_needs_a_column_argument() {
        assert_eq!(with(PerturbationKind::SwapAggregate, "SELECT COUNT(*) FROM t", 0), None);
        let out = with(PerturbationKind::SwapAggregate, "SELECT max(a) FROM t", 3).unwrap();
        assert!(["SUM(a)", "AVG(a)", "MIN(a)", "COUNT(a)"].iter().any(|f| out == format!("SELECT {f} FROM t")), "{out}");
    }

    #[test]
    fn column_replacement_keeps_qualifiers() {
        for seed in 0..10 {
            let out = with(PerturbationKind::ReplaceColumn, "SELECT T1.a FROM t AS T1 JOIN u AS T2 ON T1.id = T2.t_id", seed).unwrap();
            assert!(out.starts_with("SELECT T1.") || out.starts_with("SELECT T2."), "{out}");
            assert!(!out.starts_with("SELECT T1.a "), "{out}");
        }
        assert_eq!(with(PerturbationKind::ReplaceColumn, "SELECT * FROM t", 0).map(|s| s.starts_with("SELECT * ")), Some(false));
        let counted = with(PerturbationKind::ReplaceColumn, "SELECT count(*) FROM t", 0).unwrap();
        assert!(!counted.contains('*'), "{counted}");
    }

    #[test]
    fn rename_uses_an_unreferenced_table() {
        assert_eq!(with(PerturbationKind::RenameTable, "SELECT a FROM t", 0).unwrap(), "SELECT a FROM u");
        assert_eq!(with(PerturbationKind::RenameTable, "SELECT a FROM t JOIN u ON t.id = u.t_id", 0), None);
    }

    #[test]
    fn perturbation_is_seeded_and_differs() {
        let gold = "SELECT b, sum(a) FROM t WHERE a > 2 GROUP BY b";
        let a = perturb_query(gold, &schema(), 11).unwrap();
        assert_eq!(a, perturb_query(gold, &schema(), 11).unwrap());
        assert_ne!(a.sql, canonical_sql(gold).unwrap());
        let kinds: std::collections::HashSet<_> = (0..40).map(|s| perturb_query(gold, &schema(), s).unwrap().kind).collect();
        assert_eq!(kinds.len(), 3, "{kinds:?}");
        assert!(!kinds.contains(&PerturbationKind::ReplaceColumn));
    }

    #[test]
    fn one_column_schema_cannot_be_perturbed() {
        let tiny = parse_dump("CREATE TABLE t (a INTEGER);").unwrap();
        assert!(matches!(perturb_query("SELECT a FROM t", &tiny, 0), Err(McqError::NoPerturbation { .. })));
    }
}
