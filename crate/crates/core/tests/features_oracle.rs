//! Query features checked against a token-scanning counter that shares no
//! code with the AST-based extractor.

use std::collections::BTreeSet;

use sqlcontam_core::{classify, extract_features, Database, HardnessLevel, QueryFeatures};

const QUERIES: [&str; 20] = [
    "SELECT COUNT(*) FROM continents",
    "SELECT name FROM singer WHERE age > 30 AND country = 'France'",
    "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id WHERE T2.year = 2014",
    "SELECT name FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)",
    "SELECT name FROM stadium UNION SELECT name FROM singer",
    "SELECT country, COUNT(*) FROM singer GROUP BY country HAVING COUNT(*) > 1 ORDER BY country",
    "SELECT a.x, b.y FROM a, b WHERE a.id = b.id AND a.z = 3",
    "SELECT a.x FROM a, b WHERE a.z = 3",
    "SELECT max(age), min(age), avg(age) FROM singer WHERE (age > 10 OR age < 5) AND name LIKE 'A%'",
    "SELECT name FROM people WHERE age BETWEEN 20 AND 30",
    "SELECT T1.a FROM t1 AS T1 JOIN t2 AS T2 ON T1.k = T2.k JOIN t3 AS T3 ON T2.m = T3.m ORDER BY T1.a DESC LIMIT 3",
    "SELECT count(DISTINCT country) FROM singer",
    "SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)",
    "SELECT name FROM a INTERSECT SELECT name FROM b WHERE b.c = 1",
    "SELECT x FROM (SELECT x, y FROM t WHERE y = 2) WHERE x > 1",
    "SELECT sum(price) FROM products WHERE category = 'toys' OR category = 'games' OR price < 10",
    "SELECT name FROM employee WHERE NOT city = 'Bristol'",
    "SELECT T1.name, COUNT(*) FROM employee AS T1 LEFT JOIN evaluation AS T2 ON T1.id = T2.id GROUP BY T1.id",
    "SELECT name FROM shop EXCEPT SELECT T2.name FROM hiring AS T1 JOIN shop AS T2 ON T1.shop_id = T2.shop_id",
    "SELECT id FROM t WHERE EXISTS (SELECT 1 FROM u WHERE u.tid = t.id)",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Lit,
    Sym(String),
}

fn tokenize(sql: &str) -> Vec<Tok> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' {
            i += 1;
            while i < chars.len() {
                if chars[i] == '\'' && chars.get(i + 1) == Some(&'\'') {
                    i += 2;
                } else if chars[i] == '\'' {
                    break;
                } else {
                    i += 1;
                }
            }
            i += 1;
            out.push(Tok::Lit);
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Lit);
        } else if c.is_alphanumeric() || c == '_' || c == '"' {
            let quoted = c == '"';
            let start = if quoted { i + 1 } else { i };
            i = start;
            while i < chars.len() && if quoted { chars[i] != '"' } else { chars[i].is_alphanumeric() || chars[i] == '_' } {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect::<String>().to_lowercase()));
            if quoted {
                i += 1;
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if [">=", "<=", "<>", "!="].contains(&two.as_str()) {
                out.push(Tok::Sym(two));
                i += 2;
            } else {
                out.push(Tok::Sym(c.to_string()));
                i += 1;
            }
        }
    }
    out
}

const KEYWORDS: [&str; 20] = [
    "select", "from", "where", "join", "left", "inner", "on", "as", "group", "order", "by", "having", "limit",
    "union", "intersect", "except", "and", "or", "not", "cross",
];

fn word(t: Option<&Tok>) -> Option<&str> {
    match t {
        Some(Tok::Word(w)) => Some(w),
        _ => None,
    }
}

fn is_sym(t: Option<&Tok>, s: &str) -> bool {
    matches!(t, Some(Tok::Sym(x)) if x == s)
}

/// Index just past the parenthesis closing the one opened at `open`.
fn skip_parens(toks: &[Tok], open: usize) -> usize {
    let mut depth = 0;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if is_sym(Some(t), "(") {
            depth += 1;
        } else if is_sym(Some(t), ")") {
            depth -= 1;
            if depth == 0 {
                return k + 1;
            }
        }
    }
    toks.len()
}

fn opens_subquery(toks: &[Tok], k: usize) -> bool {
    is_sym(toks.get(k), "(") && word(toks.get(k + 1)) == Some("select")
}

/// Tokens of the clause starting at `start`, up to the next clause keyword
/// at the same nesting level or the parenthesis closing the current level.
/// Subquery bodies are skipped.
fn clause(toks: &[Tok], start: usize) -> Vec<Tok> {
    const ENDS: [&str; 8] = ["group", "order", "limit", "having", "union", "intersect", "except", "where"];
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut k = start;
    while k < toks.len() {
        if opens_subquery(toks, k) {
            out.push(Tok::Lit);
            k = skip_parens(toks, k);
            continue;
        }
        let t = &toks[k];
        if is_sym(Some(t), "(") {
            depth += 1;
        } else if is_sym(Some(t), ")") {
            if depth == 0 {
                break;
            }
            depth -= 1;
        } else if depth == 0 && word(Some(t)).is_some_and(|w| ENDS.contains(&w)) {
            break;
        }
        out.push(t.clone());
        k += 1;
    }
    out
}

fn where_predicates(region: &[Tok]) -> usize {
    let mut count = 1;
    let mut pending_between = false;
    for t in region {
        match word(Some(t)) {
            Some("between") => pending_between = true,
            Some("and") if pending_between => pending_between = false,
            Some("and") | Some("or") => count += 1,
            _ => {}
        }
    }
    count
}

fn has_column_equality(region: &[Tok]) -> bool {
    let operand = |i: usize, forward: bool| -> bool {
        let t = if forward { region.get(i) } else { i.checked_sub(1).and_then(|j| region.get(j)) };
        word(t).is_some_and(|w| !KEYWORDS.contains(&w))
    };
    region.iter().enumerate().any(|(i, t)| is_sym(Some(t), "=") && operand(i, false) && operand(i + 1, true))
}

fn oracle(sql: &str) -> QueryFeatures {
    let toks = tokenize(sql);
    let mut tables = BTreeSet::new();
    let mut f = QueryFeatures::default();
    for (k, t) in toks.iter().enumerate() {
        match word(Some(t)) {
            Some("join") => {
                f.join_count += 1;
                if let Some(name) = word(toks.get(k + 1)) {
                    tables.insert(name.to_string());
                }
            }
            Some("from") => {
                let list = clause(&toks, k + 1);
                let items: Vec<&[Tok]> = list.split(|t| is_sym(Some(t), ",")).collect();
                for item in &items {
                    if let Some(name) = word(item.first()) {
                        tables.insert(name.to_string());
                    }
                }
                if items.len() > 1 {
                    let mut after = k + 1;
                    let mut depth = 0i32;
                    while after < toks.len() {
                        if opens_subquery(&toks, after) {
                            after = skip_parens(&toks, after);
                            continue;
                        }
                        if is_sym(toks.get(after), "(") {
                            depth += 1;
                        } else if is_sym(toks.get(after), ")") {
                            if depth == 0 {
                                break;
                            }
                            depth -= 1;
                        } else if depth == 0 && word(toks.get(after)) == Some("where") {
                            if has_column_equality(&clause(&toks, after + 1)) {
                                f.join_count += items.len() - 1;
                            }
                            break;
                        }
                        after += 1;
                    }
                }
            }
            Some("where") => f.where_pred_count += where_predicates(&clause(&toks, k + 1)),
            Some("count" | "sum" | "avg" | "min" | "max") if is_sym(toks.get(k + 1), "(") => f.agg_count += 1,
            Some("union" | "intersect" | "except") => f.has_setop = true,
            Some("order") if word(toks.get(k + 1)) == Some("by") => f.has_order_by = true,
            Some("select") if k > 0 && is_sym(toks.get(k - 1), "(") => f.has_nesting = true,
            Some("with") if k == 0 => f.has_nesting = true,
            _ => {}
        }
    }
    f.table_count = tables.len();
    f
}

#[test]
fn extractor_agrees_with_token_scan() {
    let schema = Database::new("any");
    let mut mismatches = Vec::new();
    for sql in QUERIES {
        let got = extract_features(sql, &schema).unwrap_or_else(|e| panic!("{sql}: {e}"));
        let want = oracle(sql);
        if got != want {
            mismatches.push(format!("{sql}\n  extractor {got:?}\n  oracle    {want:?}"));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn oracle_spot_checks() {
    let f = oracle("SELECT a.x, b.y FROM a, b WHERE a.id = b.id AND a.z = 3");
    assert_eq!((f.table_count, f.join_count, f.where_pred_count), (2, 1, 2));
    let f = oracle("SELECT name FROM people WHERE age BETWEEN 20 AND 30");
    assert_eq!(f.where_pred_count, 1);
    let f = oracle("SELECT x FROM (SELECT x, y FROM t WHERE y = 2) WHERE x > 1");
    assert_eq!((f.table_count, f.where_pred_count, f.has_nesting), (1, 2, true));
}

#[test]
fn continents_count_is_easy() {
    let f = extract_features("SELECT COUNT(*) FROM continents", &Database::new("car_1")).unwrap();
    assert_eq!((f.table_count, f.join_count, f.agg_count, f.has_nesting, f.has_setop), (1, 0, 1, false, false));
    assert_eq!(classify(&f), HardnessLevel::Easy);
}
