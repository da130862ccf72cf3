use serde::{Deserialize, Serialize};

/// Result of pulling SQL out of an assistant response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extraction {
    Sql(String),
    /// The response contains no recognisable query.
    Failure,
}

impl Extraction {
    pub fn sql(&self) -> Option<&str> {
        match self {
            Extraction::Sql(s) => Some(s),
            Extraction::Failure => None,
        }
    }
}

/// Extracts the query from a chat response: the first fenced code block when
/// present, otherwise the whole text; in either case starting at the first
/// `SELECT`/`WITH` keyword and ending at the last semicolon.
pub fn extract_sql(response: &str) -> Extraction {
    let body = first_fence(response).unwrap_or(response);
    let Some(start) = query_start(body) else {
        return Extraction::Failure;
    };
    let mut sql = &body[start..];
    if let Some(end) = sql.rfind(';') {
        sql = &sql[..=end];
    } else if let Some(blank) = sql.find("\n\n") {
        sql = &sql[..blank];
    }
    let sql = sql.trim();
    if sql.is_empty() {
        Extraction::Failure
    } else {
        Extraction::Sql(sql.to_string())
    }
}

fn first_fence(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // Skip the info string (e.g. `sql`) up to the end of the fence line.
    let content_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let info = &after[..content_start];
    let content = if info.trim().chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_') {
        &after[content_start..]
    } else {
        after
    };
    Some(match content.find("```") {
        Some(close) => &content[..close],
        None => content,
    })
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Words of `text` with their byte offsets.
fn words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out.into_iter()
}

/// Byte offset of the first word that plausibly starts a query: `SELECT` in
/// capitals, `select` in any case at the start of a line, or a `WITH` that
/// opens a common table expression.
fn query_start(text: &str) -> Option<usize> {
    words(text).find_map(|(at, word)| {
        let line_start = text[..at].rfind('\n').map_or(0, |p| p + 1);
        let starts_line = text[line_start..at].trim().is_empty();
        let select = word == "SELECT" || (word.eq_ignore_ascii_case("select") && starts_line);
        let with = word.eq_ignore_ascii_case("with") && is_cte_head(&text[at + word.len()..]);
        (select || with).then_some(at)
    })
}

/// `[RECURSIVE] name [(cols)] AS (` after a WITH keyword.
fn is_cte_head(rest: &str) -> bool {
    let mut words = rest.split_whitespace();
    let mut w = words.next().unwrap_or("");
    if w.eq_ignore_ascii_case("recursive") {
        w = words.next().unwrap_or("");
    }
    let name: String = w.chars().take_while(|&c| is_word_char(c) || c == '"').collect();
    if name.is_empty() {
        return false;
    }
    let after_name = rest.find(&name).map(|i| &rest[i + name.len()..]).unwrap_or("");
    let after_name = after_name.trim_start();
    let after_cols = if after_name.starts_with('(') {
        match after_name.find(')') {
            Some(i) => after_name[i + 1..].trim_start(),
            None => return false,
        }
    } else {
        after_name
    };
    let upper = after_cols.get(..2).map(|s| s.eq_ignore_ascii_case("as")).unwrap_or(false);
    upper && after_cols[2..].trim_start().starts_with('(')
}
