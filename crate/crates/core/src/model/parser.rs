use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::lexer::{tokenize, Position, Tok, Token};
use super::{ident_eq, Column, Database, ForeignKey, Row, SqlType, Table, Value};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("syntax error at {pos}: {message} (found `{found}`)")]
    Syntax { pos: Position, found: String, message: String },
    #[error("duplicate table `{name}` at {pos}")]
    DuplicateTable { name: String, pos: Position },
    #[error("duplicate column `{column}` in table `{table}` at {pos}")]
    DuplicateColumn { table: String, column: String, pos: Position },
    #[error("unknown table `{table}` at {pos}")]
    UnknownTable { table: String, pos: Position },
    #[error("unknown column `{column}` in table `{table}` at {pos}")]
    UnknownColumn { table: String, column: String, pos: Position },
    #[error("foreign key {fk} does not resolve: {reason}")]
    UnresolvedForeignKey { fk: String, reason: String },
    #[error("INSERT into `{table}` at {pos} has {found} values, expected {expected}")]
    Arity { table: String, expected: usize, found: usize, pos: Position },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A statement the parser skipped or a clause it dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseWarning {
    pub pos: Position,
    pub message: String,
}

/// Parses a dump into an unnamed [`Database`]. Warnings are discarded.
pub fn parse_dump(text: &str) -> Result<Database, DumpError> {
    parse_dump_with_warnings("", text).map(|(db, _)| db)
}

pub fn parse_dump_with_warnings(name: &str, text: &str) -> Result<(Database, Vec<ParseWarning>), DumpError> {
    let tokens = tokenize(text).map_err(|e| DumpError::Syntax {
        pos: e.pos,
        found: e.found,
        message: e.message.to_string(),
    })?;
    let mut p = Parser { src: text, toks: tokens, i: 0, db: Database::new(name), pending: Vec::new(), warnings: Vec::new() };
    p.run()?;
    let Parser { db, warnings, .. } = p;
    Ok((db, warnings))
}

/// Reads and parses a dump file; the database is named after the file stem.
pub fn load_dump(path: &Path) -> Result<Database, DumpError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DumpError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dump_with_warnings(&name, &text).map(|(db, _)| db)
}

struct PendingFk {
    from_table: String,
    from_columns: Vec<String>,
    to_table: String,
    to_columns: Option<Vec<String>>,
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    i: usize,
    db: Database,
    pending: Vec<PendingFk>,
    warnings: Vec<ParseWarning>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|t| &t.tok)
    }

    fn pos(&self) -> Position {
        match self.toks.get(self.i) {
            Some(t) => t.pos,
            None => {
                let mut pos = Position { offset: self.src.len(), line: 1, column: 1 };
                for c in self.src.chars() {
                    if c == '\n' {
                        pos.line += 1;
                        pos.column = 1;
                    } else {
                        pos.column += 1;
                    }
                }
                pos
            }
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|t| t.tok.clone());
        self.i += 1;
        t
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_kw(kw))
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.at_punct(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, message: impl Into<String>) -> DumpError {
        DumpError::Syntax {
            pos: self.pos(),
            found: self.peek().map_or_else(|| "end of input".to_string(), Tok::describe),
            message: message.into(),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), DumpError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected {kw}")))
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), DumpError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String, DumpError> {
        match self.peek() {
            Some(Tok::Word(w) | Tok::Quoted(w) | Tok::Str(w)) => {
                let w = w.clone();
                self.i += 1;
                Ok(w)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    /// Possibly schema-qualified name; the qualifier is dropped.
    fn object_name(&mut self) -> Result<String, DumpError> {
        let mut name = self.ident()?;
        while self.eat_punct('.') {
            name = self.ident()?;
        }
        Ok(name)
    }

    fn ident_list(&mut self) -> Result<Vec<String>, DumpError> {
        self.expect_punct('(')?;
        let mut out = Vec::new();
        loop {
            out.push(self.ident()?);
            if self.eat_kw("COLLATE") {
                self.ident()?;
            }
            let _ = self.eat_kw("ASC") || self.eat_kw("DESC");
            if self.eat_punct(',') {
                continue;
            }
            self.expect_punct(')')?;
            return Ok(out);
        }
    }

    fn at_statement_end(&self) -> bool {
        self.peek().is_none() || self.at_punct(';')
    }

    fn finish_statement(&mut self) -> Result<(), DumpError> {
        if self.eat_punct(';') || self.peek().is_none() {
            Ok(())
        } else {
            Err(self.err("expected `;`"))
        }
    }

    /// Skips to the end of the current statement, honouring parentheses and
    /// trigger bodies.
    fn skip_statement(&mut self, what: &str) {
        let pos = self.pos();
        let is_trigger = self.at_kw("CREATE")
            && (1..4).any(|k| self.peek_at(k).is_some_and(|t| t.is_kw("TRIGGER")));
        let mut depth = 0usize;
        let mut in_body = false;
        while let Some(t) = self.bump() {
            match t {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => depth = depth.saturating_sub(1),
                Tok::Word(w) if is_trigger && w.eq_ignore_ascii_case("BEGIN") => in_body = true,
                Tok::Word(w) if is_trigger && w.eq_ignore_ascii_case("END") => in_body = false,
                Tok::Punct(';') if depth == 0 && !in_body => break,
                _ => {}
            }
        }
        self.warnings.push(ParseWarning { pos, message: format!("skipped unsupported statement: {what}") });
    }

    fn run(&mut self) -> Result<(), DumpError> {
        while let Some(tok) = self.peek() {
            if tok == &Tok::Punct(';') {
                self.i += 1;
                continue;
            }
            if self.at_kw("CREATE") {
                let mut k = 1;
                while self.peek_at(k).is_some_and(|t| t.is_kw("TEMP") || t.is_kw("TEMPORARY")) {
                    k += 1;
                }
                if self.peek_at(k).is_some_and(|t| t.is_kw("TABLE")) && !self.is_create_as(k) {
                    self.i += k + 1;
                    self.create_table()?;
                    continue;
                }
                let what = (1..=2)
                    .filter_map(|k| self.peek_at(k).map(Tok::describe))
                    .fold("CREATE".to_string(), |acc, w| acc + " " + &w);
                self.skip_statement(&what);
            } else if self.at_kw("INSERT") && !self.is_insert_select() {
                self.i += 1;
                self.insert()?;
            } else {
                let what = tok.describe().to_ascii_uppercase();
                self.skip_statement(&what);
            }
        }
        self.resolve_foreign_keys()
    }

    /// `CREATE TABLE x AS SELECT ...` defines no columns we can model.
    fn is_create_as(&self, k: usize) -> bool {
        let mut j = self.i + k + 1;
        while let Some(t) = self.toks.get(j) {
            match &t.tok {
                Tok::Punct('(') | Tok::Punct(';') => return false,
                t if t.is_kw("AS") => return true,
                _ => j += 1,
            }
        }
        false
    }

    fn is_insert_select(&self) -> bool {
        let mut depth = 0usize;
        for t in &self.toks[self.i..] {
            match &t.tok {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => depth = depth.saturating_sub(1),
                Tok::Punct(';') => return false,
                t if t.is_kw("VALUES") => return false,
                t if depth == 0 && (t.is_kw("SELECT") || t.is_kw("DEFAULT")) => return true,
                _ => {}
            }
        }
        false
    }

    fn create_table(&mut self) -> Result<(), DumpError> {
        if self.eat_kw("IF") {
            self.expect_kw("NOT")?;
            self.expect_kw("EXISTS")?;
        }
        let name_pos = self.pos();
        let name = self.object_name()?;
        if self.db.table(&name).is_some() {
            return Err(DumpError::DuplicateTable { name, pos: name_pos });
        }
        let mut table = Table::new(name, Vec::new());
        self.expect_punct('(')?;
        loop {
            if self.at_table_constraint() {
                self.table_constraint(&mut table)?;
            } else {
                self.column_def(&mut table)?;
            }
            if self.eat_punct(',') {
                continue;
            }
            self.expect_punct(')')?;
            break;
        }
        while !self.at_statement_end() {
            // Table options such as WITHOUT ROWID or STRICT.
            if self.eat_kw("WITHOUT") {
                self.expect_kw("ROWID")?;
            } else if !(self.eat_kw("STRICT") || self.eat_punct(',')) {
                return Err(self.err("unexpected token after table definition"));
            }
        }
        self.finish_statement()?;
        for k in &table.primary_key {
            if table.column_index(k).is_none() {
                return Err(DumpError::UnknownColumn { table: table.name.clone(), column: k.clone(), pos: name_pos });
            }
        }
        for fk in self.pending.iter().filter(|f| ident_eq(&f.from_table, &table.name)) {
            for c in &fk.from_columns {
                if table.column_index(c).is_none() {
                    return Err(DumpError::UnknownColumn { table: table.name.clone(), column: c.clone(), pos: name_pos });
                }
            }
        }
        self.db.tables.push(table);
        Ok(())
    }

    fn at_table_constraint(&self) -> bool {
        match self.peek() {
            Some(t) if t.is_kw("CONSTRAINT") || t.is_kw("CHECK") => true,
            Some(t) if t.is_kw("PRIMARY") || t.is_kw("FOREIGN") => {
                self.peek_at(1).is_some_and(|n| n.is_kw("KEY"))
            }
            Some(t) if t.is_kw("UNIQUE") => self.peek_at(1) == Some(&Tok::Punct('(')),
            _ => false,
        }
    }

    fn table_constraint(&mut self, table: &mut Table) -> Result<(), DumpError> {
        let pos = self.pos();
        if self.eat_kw("CONSTRAINT") {
            self.ident()?;
        }
        if self.eat_kw("PRIMARY") {
            self.expect_kw("KEY")?;
            let cols = self.ident_list()?;
            self.conflict_clause()?;
            if !table.primary_key.is_empty() {
                return Err(DumpError::Syntax {
                    pos,
                    found: "PRIMARY KEY".into(),
                    message: format!("table `{}` declares more than one primary key", table.name),
                });
            }
            table.primary_key = cols;
        } else if self.eat_kw("FOREIGN") {
            self.expect_kw("KEY")?;
            let from_columns = self.ident_list()?;
            self.expect_kw("REFERENCES")?;
            let (to_table, to_columns) = self.references_tail()?;
            if let Some(to) = &to_columns {
                if to.len() != from_columns.len() {
                    return Err(DumpError::Syntax {
                        pos,
                        found: "FOREIGN KEY".into(),
                        message: "foreign key column counts differ".into(),
                    });
                }
            }
            self.pending.push(PendingFk { from_table: table.name.clone(), from_columns, to_table, to_columns });
        } else if self.eat_kw("UNIQUE") {
            self.ident_list()?;
            self.conflict_clause()?;
            self.warnings.push(ParseWarning { pos, message: format!("dropped table-level UNIQUE on `{}`", table.name) });
        } else if self.eat_kw("CHECK") {
            self.paren_raw()?;
            self.warnings.push(ParseWarning { pos, message: format!("dropped table-level CHECK on `{}`", table.name) });
        } else {
            return Err(self.err("expected table constraint"));
        }
        Ok(())
    }

    fn conflict_clause(&mut self) -> Result<(), DumpError> {
        if self.eat_kw("ON") {
            self.expect_kw("CONFLICT")?;
            self.ident()?;
        }
        Ok(())
    }

    /// Raw source text of a balanced parenthesised group, parentheses included.
    fn paren_raw(&mut self) -> Result<String, DumpError> {
        let start = self.toks.get(self.i).map(|t| t.pos.offset);
        self.expect_punct('(')?;
        let mut depth = 1usize;
        while depth > 0 {
            match self.bump() {
                Some(Tok::Punct('(')) => depth += 1,
                Some(Tok::Punct(')')) => depth -= 1,
                Some(_) => {}
                None => return Err(self.err("unbalanced parentheses")),
            }
        }
        let end = self.toks[self.i - 1].end;
        Ok(self.src[start.unwrap_or(end)..end].to_string())
    }

    fn raw_from(&self, start_tok: usize) -> String {
        let start = self.toks[start_tok].pos.offset;
        let end = self.toks[self.i - 1].end;
        self.src[start..end].split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// Parses `table [(cols)] [actions]` after REFERENCES.
    fn references_tail(&mut self) -> Result<(String, Option<Vec<String>>), DumpError> {
        let table = self.object_name()?;
        let cols = if self.at_punct('(') { Some(self.ident_list()?) } else { None };
        loop {
            if self.eat_kw("ON") {
                if !(self.eat_kw("DELETE") || self.eat_kw("UPDATE")) {
                    return Err(self.err("expected DELETE or UPDATE"));
                }
                if self.eat_kw("SET") {
                    if !(self.eat_kw("NULL") || self.eat_kw("DEFAULT")) {
                        return Err(self.err("expected NULL or DEFAULT"));
                    }
                } else if self.eat_kw("NO") {
                    self.expect_kw("ACTION")?;
                } else if !(self.eat_kw("CASCADE") || self.eat_kw("RESTRICT")) {
                    return Err(self.err("expected referential action"));
                }
            } else if self.eat_kw("MATCH") {
                self.ident()?;
            } else if self.at_kw("DEFERRABLE") || (self.at_kw("NOT") && self.peek_at(1).is_some_and(|t| t.is_kw("DEFERRABLE"))) {
                self.eat_kw("NOT");
                self.i += 1;
                if self.eat_kw("INITIALLY") && !(self.eat_kw("DEFERRED") || self.eat_kw("IMMEDIATE")) {
                    return Err(self.err("expected DEFERRED or IMMEDIATE"));
                }
            } else {
                return Ok((table, cols));
            }
        }
    }

    fn at_column_constraint_start(&self) -> bool {
        const KWS: [&str; 12] = [
            "CONSTRAINT", "PRIMARY", "NOT", "NULL", "UNIQUE", "CHECK", "DEFAULT", "COLLATE", "REFERENCES",
            "GENERATED", "AS", "AUTOINCREMENT",
        ];
        match self.peek() {
            None => true,
            Some(Tok::Punct(',' | ')')) => true,
            Some(t) => KWS.iter().any(|k| t.is_kw(k)),
        }
    }

    fn column_def(&mut self, table: &mut Table) -> Result<(), DumpError> {
        let pos = self.pos();
        let name = self.ident()?;
        if name.is_empty() {
            return Err(DumpError::Syntax { pos, found: "\"\"".into(), message: "empty column name".into() });
        }
        let mut type_words: Vec<String> = Vec::new();
        while !self.at_column_constraint_start() {
            match self.bump() {
                Some(Tok::Word(w)) => type_words.push(w),
                Some(Tok::Quoted(w)) if type_words.is_empty() => type_words.push(w),
                _ => {
                    self.i -= 1;
                    return Err(self.err("expected column type"));
                }
            }
            if self.at_punct('(') {
                let args = self.paren_raw()?;
                let compact: String = args.chars().filter(|c| !c.is_whitespace()).collect();
                if let Some(last) = type_words.last_mut() {
                    last.push_str(&compact);
                }
            }
        }
        let mut column = Column::new(name.clone(), SqlType::from_raw(&type_words.join(" ")));
        if !column.masked && table.column_index(&name).is_some() {
            return Err(DumpError::DuplicateColumn { table: table.name.clone(), column: name, pos });
        }
        loop {
            let start = self.i;
            if self.eat_kw("CONSTRAINT") {
                self.ident()?;
                continue;
            }
            if self.eat_kw("PRIMARY") {
                self.expect_kw("KEY")?;
                let _ = self.eat_kw("ASC") || self.eat_kw("DESC");
                self.conflict_clause()?;
                if !table.primary_key.is_empty() {
                    return Err(DumpError::Syntax {
                        pos,
                        found: "PRIMARY KEY".into(),
                        message: format!("table `{}` declares more than one primary key", table.name),
                    });
                }
                table.primary_key = vec![name.clone()];
                if self.eat_kw("AUTOINCREMENT") {
                    column.annotations.push("AUTOINCREMENT".into());
                }
            } else if self.eat_kw("NOT") {
                self.expect_kw("NULL")?;
                self.conflict_clause()?;
                column.annotations.push("NOT NULL".into());
            } else if self.eat_kw("NULL") {
            } else if self.eat_kw("UNIQUE") {
                self.conflict_clause()?;
                column.annotations.push("UNIQUE".into());
            } else if self.eat_kw("CHECK") {
                let body = self.paren_raw()?;
                column.annotations.push(format!("CHECK {body}"));
            } else if self.eat_kw("DEFAULT") {
                match self.peek() {
                    Some(Tok::Punct('(')) => {
                        self.paren_raw()?;
                    }
                    Some(Tok::Punct('+' | '-')) => {
                        self.i += 1;
                        match self.bump() {
                            Some(Tok::Number(_)) => {}
                            _ => {
                                self.i -= 1;
                                return Err(self.err("expected number"));
                            }
                        }
                    }
                    Some(Tok::Number(_) | Tok::Str(_) | Tok::Word(_) | Tok::Quoted(_)) => {
                        self.i += 1;
                    }
                    _ => return Err(self.err("expected default value")),
                }
                column.annotations.push(self.raw_from(start));
            } else if self.eat_kw("COLLATE") {
                self.ident()?;
                column.annotations.push(self.raw_from(start));
            } else if self.eat_kw("REFERENCES") {
                let (to_table, to_columns) = self.references_tail()?;
                if to_columns.as_ref().is_some_and(|c| c.len() != 1) {
                    return Err(self.err("column-level REFERENCES must name at most one column"));
                }
                self.pending.push(PendingFk {
                    from_table: table.name.clone(),
                    from_columns: vec![name.clone()],
                    to_table,
                    to_columns,
                });
            } else if self.at_kw("GENERATED") || self.at_kw("AS") {
                if self.eat_kw("GENERATED") {
                    self.expect_kw("ALWAYS")?;
                }
                self.expect_kw("AS")?;
                self.paren_raw()?;
                let _ = self.eat_kw("STORED") || self.eat_kw("VIRTUAL");
                column.annotations.push(self.raw_from(start));
            } else if self.eat_kw("AUTOINCREMENT") {
                column.annotations.push("AUTOINCREMENT".into());
            } else {
                break;
            }
        }
        if !(self.at_punct(',') || self.at_punct(')')) {
            return Err(self.err("unexpected token in column definition"));
        }
        table.columns.push(column);
        Ok(())
    }

    fn insert(&mut self) -> Result<(), DumpError> {
        if self.eat_kw("OR") {
            self.ident()?;
        }
        self.expect_kw("INTO")?;
        let pos = self.pos();
        let name = self.object_name()?;
        let Some(ti) = self.db.table_index(&name) else {
            return Err(DumpError::UnknownTable { table: name, pos });
        };
        let listed = if self.at_punct('(') { Some(self.ident_list()?) } else { None };
        let width = self.db.tables[ti].columns.len();
        let slots: Vec<usize> = match &listed {
            None => (0..width).collect(),
            Some(cols) => {
                let table = &self.db.tables[ti];
                let mut slots = Vec::with_capacity(cols.len());
                for c in cols {
                    match table.column_index(c) {
                        Some(j) => slots.push(j),
                        None => {
                            return Err(DumpError::UnknownColumn { table: table.name.clone(), column: c.clone(), pos })
                        }
                    }
                }
                slots
            }
        };
        self.expect_kw("VALUES")?;
        loop {
            let row_pos = self.pos();
            self.expect_punct('(')?;
            let mut values = Vec::new();
            if !self.at_punct(')') {
                loop {
                    values.push(self.literal()?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
            }
            self.expect_punct(')')?;
            if values.len() != slots.len() {
                return Err(DumpError::Arity {
                    table: self.db.tables[ti].name.clone(),
                    expected: slots.len(),
                    found: values.len(),
                    pos: row_pos,
                });
            }
            let mut row = vec![Value::Null; width];
            for (slot, v) in slots.iter().zip(values) {
                row[*slot] = v;
            }
            self.db.tables[ti].rows.push(Row::new(row));
            if !self.eat_punct(',') {
                break;
            }
        }
        self.finish_statement()
    }

    fn literal(&mut self) -> Result<Value, DumpError> {
        let negative = match self.peek() {
            Some(Tok::Punct('-')) => {
                self.i += 1;
                true
            }
            Some(Tok::Punct('+')) => {
                self.i += 1;
                false
            }
            _ => false,
        };
        let tok = self.peek().cloned();
        let value = match tok {
            Some(Tok::Number(n)) => parse_number(&n, negative),
            Some(Tok::Str(s) | Tok::Quoted(s)) if !negative => Value::Text(s),
            Some(Tok::Word(w)) if !negative && w.eq_ignore_ascii_case("NULL") => Value::Null,
            Some(Tok::Word(w)) if !negative && w.eq_ignore_ascii_case("TRUE") => Value::Boolean(true),
            Some(Tok::Word(w)) if !negative && w.eq_ignore_ascii_case("FALSE") => Value::Boolean(false),
            _ => return Err(self.err("expected literal value")),
        };
        self.i += 1;
        Ok(value)
    }

    fn resolve_foreign_keys(&mut self) -> Result<(), DumpError> {
        for p in std::mem::take(&mut self.pending) {
            let describe = || format!("{}({}) -> {}", p.from_table, p.from_columns.join(", "), p.to_table);
            let Some(target) = self.db.table(&p.to_table) else {
                return Err(DumpError::UnresolvedForeignKey { fk: describe(), reason: format!("no table `{}`", p.to_table) });
            };
            let to_columns = match p.to_columns {
                Some(cols) => cols,
                None if target.primary_key.len() == p.from_columns.len() => target.primary_key.clone(),
                None => {
                    return Err(DumpError::UnresolvedForeignKey {
                        fk: describe(),
                        reason: "no referenced column and no matching primary key".into(),
                    })
                }
            };
            let mut resolved = Vec::with_capacity(to_columns.len());
            for (from, to) in p.from_columns.iter().zip(&to_columns) {
                let Some(col) = target.column(to) else {
                    return Err(DumpError::UnresolvedForeignKey {
                        fk: describe(),
                        reason: format!("no column `{}` in `{}`", to, target.name),
                    });
                };
                resolved.push(ForeignKey {
                    from_table: p.from_table.clone(),
                    from_column: from.clone(),
                    to_table: target.name.clone(),
                    to_column: col.name.clone(),
                });
            }
            self.db.foreign_keys.extend(resolved);
        }
        Ok(())
    }
}

fn parse_number(text: &str, negative: bool) -> Value {
    let signed = if negative { format!("-{text}") } else { text.to_string() };
    if !text.contains(['.', 'e', 'E']) {
        if let Ok(i) = signed.parse::<i64>() {
            return Value::Integer(i);
        }
    }
    Value::Real(signed.parse::<f64>().unwrap_or(f64::NAN))
}
