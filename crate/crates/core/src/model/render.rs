use std::fmt::Write;

use super::{Database, Table, Value};

pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

pub fn quote_str(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn render_value(v: &Value) -> String {
    match v {
        Value::Null => "NULL".to_string(),
        Value::Integer(i) => i.to_string(),
        Value::Real(r) => {
            let s = r.to_string();
            if s.contains(['.', 'e', 'E', 'N', 'i']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        Value::Text(s) => quote_str(s),
        Value::Boolean(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
    }
}

/// Canonical dump text: every `CREATE TABLE` in stored order, then every
/// `INSERT` grouped by table.
pub fn render_dump(db: &Database) -> String {
    let mut out = String::new();
    for table in &db.tables {
        render_create(db, table, &mut out);
    }
    for table in &db.tables {
        if table.rows.is_empty() {
            continue;
        }
        let name = quote_ident(&table.name);
        for row in &table.rows {
            let values: Vec<String> = row.values.iter().map(render_value).collect();
            let _ = writeln!(out, "INSERT INTO {name} VALUES ({});", values.join(", "));
        }
    }
    if out.is_empty() {
        out.push('\n');
    }
    out
}

fn render_create(db: &Database, table: &Table, out: &mut String) {
    let mut lines = Vec::new();
    let inline_pk = match table.primary_key.as_slice() {
        [only] => table.column_index(only),
        _ => None,
    };
    for (i, col) in table.columns.iter().enumerate() {
        let mut line = format!("  {}", quote_ident(&col.name));
        if !col.sql_type.as_sql().is_empty() {
            line.push(' ');
            line.push_str(col.sql_type.as_sql());
        }
        if inline_pk == Some(i) {
            line.push_str(" PRIMARY KEY");
        }
        for a in &col.annotations {
            line.push(' ');
            line.push_str(a);
        }
        lines.push(line);
    }
    if table.primary_key.len() > 1 {
        let cols: Vec<String> = table.primary_key.iter().map(|c| quote_ident(c)).collect();
        lines.push(format!("  PRIMARY KEY ({})", cols.join(", ")));
    }
    for fk in db.foreign_keys_from(&table.name) {
        lines.push(format!(
            "  FOREIGN KEY ({}) REFERENCES {} ({})",
            quote_ident(&fk.from_column),
            quote_ident(&fk.to_table),
            quote_ident(&fk.to_column)
        ));
    }
    let _ = writeln!(out, "CREATE TABLE {} (\n{}\n);", quote_ident(&table.name), lines.join(",\n"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_dump;

    #[test]
    fn empty_database_renders_newline() {
        assert_eq!(render_dump(&Database::new("x")), "\n");
    }

    #[test]
    fn continents_has_one_primary_key_token() {
        let db = parse_dump(r#"CREATE TABLE "continents" ("ContId" INTEGER PRIMARY KEY, "Continent" TEXT);"#).unwrap();
        let text = render_dump(&db);
        assert_eq!(text.matches("PRIMARY KEY").count(), 1);
        assert_eq!(text, "CREATE TABLE \"continents\" (\n  \"ContId\" INTEGER PRIMARY KEY,\n  \"Continent\" TEXT\n);\n");
    }

    #[test]
    fn reals_always_carry_a_decimal_point() {
        assert_eq!(render_value(&Value::Real(100.0)), "100.0");
        assert_eq!(render_value(&Value::Real(-0.25)), "-0.25");
        assert_eq!(render_value(&Value::Text("it's".into())), "'it''s'");
    }
}
