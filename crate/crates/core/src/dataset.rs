//! Benchmark datasets: a JSON manifest listing dump files and questions.
//!
//! ```json
//! {
//!   "name": "termite",
//!   "dumps": ["dumps/bowling.sql", "dumps/hackathon.sql"],
//!   "queries": [
//!     {"id": "bowling-1", "question": "How many players?", "gold_sql": "SELECT count(*) FROM player",
//!      "database": "bowling", "hardness": "easy"}
//!   ]
//! }
//! ```
//!
//! Dump paths are relative to the manifest; each database is named after its
//! file stem. `id` and `hardness` are optional.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::hardness::{classify, extract_features, HardnessLevel, QueryRecord};
use crate::model::{load_dump, Database, DumpError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: String, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("{field}: {source}")]
    Dump { field: String, source: DumpError },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub manifest_path: PathBuf,
    /// As written in the manifest, relative to its directory.
    pub dump_paths: Vec<PathBuf>,
    pub dumps: Vec<Database>,
    pub records: Vec<QueryRecord>,
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Loads `manifest.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Dataset, ManifestError> {
        load_manifest(&dir.join(MANIFEST_FILE))
    }

    pub fn database(&self, name: &str) -> Option<&Database> {
        self.dumps.iter().find(|d| d.name == name)
    }
}

fn string_field(obj: &Map<String, Json>, key: &str, path: &str, required: bool) -> Result<Option<String>, ManifestError> {
    match obj.get(key) {
        None | Some(Json::Null) if !required => Ok(None),
        None => Err(field_err(format!("{path}.{key}"), "missing")),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(field_err(format!("{path}.{key}"), format!("expected a string, found {other}"))),
    }
}

fn reject_unknown(obj: &Map<String, Json>, allowed: &[&str], path: &str) -> Result<(), ManifestError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(field_err(format!("{path}.{k}"), "unknown field")),
        None => Ok(()),
    }
}

pub fn load_manifest(path: &Path) -> Result<Dataset, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
    let json: Json = serde_json::from_str(&text)
        .map_err(|e| ManifestError::Json { path: path.display().to_string(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&json, path, &|rel| base.join(rel))
}

/// Like [`load_manifest`], but each listed dump is looked up by file name in
/// `dumps_dir` instead of relative to the manifest.
pub fn load_manifest_with_dumps(path: &Path, dumps_dir: &Path) -> Result<Dataset, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
    let json: Json = serde_json::from_str(&text)
        .map_err(|e| ManifestError::Json { path: path.display().to_string(), message: e.to_string() })?;
    parse_manifest(&json, path, &|rel| dumps_dir.join(Path::new(rel).file_name().unwrap_or_default()))
}

fn dump_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    if stem == "schema" {
        if let Some(parent) = path.parent().and_then(Path::file_name) {
            return Some(parent.to_string_lossy().into_owned());
        }
    }
    Some(stem)
}

fn collect_sql(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ManifestError> {
    let io = |source| ManifestError::Io { path: dir.display().to_string(), source };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir).map_err(io)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_sql(&p, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("sql")) {
            out.push(p);
        }
    }
    Ok(())
}

/// Every `.sql` file under `dir`, recursively. A file called `schema.sql`
/// is named after its directory, any other after its file stem.
pub fn load_dump_dir(dir: &Path) -> Result<Vec<Database>, ManifestError> {
    let mut paths = Vec::new();
    collect_sql(dir, &mut paths)?;
    let mut dumps: Vec<Database> = Vec::new();
    for p in paths {
        let field = p.display().to_string();
        let mut db = load_dump(&p).map_err(|source| ManifestError::Dump { field: field.clone(), source })?;
        db.name = dump_name(&p).unwrap_or(db.name);
        if dumps.iter().any(|d| d.name == db.name) {
            return Err(field_err(field, format!("database `{}` found twice", db.name)));
        }
        dumps.push(db);
    }
    Ok(dumps)
}

fn parse_manifest(json: &Json, manifest_path: &Path, resolve: &dyn Fn(&str) -> PathBuf) -> Result<Dataset, ManifestError> {
    let root = json.as_object().ok_or_else(|| field_err("$", "expected an object"))?;
    reject_unknown(root, &["name", "dumps", "queries"], "$")?;
    let name = string_field(root, "name", "$", true)?.expect("required");
    if name.trim().is_empty() {
        return Err(field_err("$.name", "must not be empty"));
    }

    let dump_list = root.get("dumps").and_then(Json::as_array).ok_or_else(|| field_err("$.dumps", "expected an array"))?;
    let mut dump_paths = Vec::new();
    let mut dumps: Vec<Database> = Vec::new();
    for (i, entry) in dump_list.iter().enumerate() {
        let field = format!("$.dumps[{i}]");
        let rel = entry.as_str().ok_or_else(|| field_err(&field, "expected a path string"))?;
        let db = load_dump(&resolve(rel)).map_err(|source| ManifestError::Dump { field: field.clone(), source })?;
        if dumps.iter().any(|d| d.name == db.name) {
            return Err(field_err(field, format!("database `{}` listed twice", db.name)));
        }
        dump_paths.push(PathBuf::from(rel));
        dumps.push(db);
    }

    let queries = root.get("queries").and_then(Json::as_array).ok_or_else(|| field_err("$.queries", "expected an array"))?;
    let mut warnings = Vec::new();
    if queries.is_empty() {
        warnings.push("manifest lists no queries".to_string());
    }
    let mut records = Vec::with_capacity(queries.len());
    let mut ids = HashSet::new();
    for (i, q) in queries.iter().enumerate() {
        let path = format!("$.queries[{i}]");
        let obj = q.as_object().ok_or_else(|| field_err(&path, "expected an object"))?;
        reject_unknown(obj, &["id", "question", "gold_sql", "database", "hardness"], &path)?;
        let id = string_field(obj, "id", &path, false)?.unwrap_or_else(|| format!("{name}-{}", i + 1));
        if !ids.insert(id.clone()) {
            return Err(field_err(format!("{path}.id"), format!("duplicate id `{id}`")));
        }
        let question = string_field(obj, "question", &path, true)?.expect("required");
        let gold_sql = string_field(obj, "gold_sql", &path, true)?.expect("required");
        let database = string_field(obj, "database", &path, true)?.expect("required");
        let db = dumps
            .iter()
            .find(|d| d.name == database)
            .ok_or_else(|| field_err(format!("{path}.database"), format!("question {id} names unknown database `{database}`")))?;
        let features =
            extract_features(&gold_sql, db).map_err(|e| field_err(format!("{path}.gold_sql"), format!("question {id}: {e}")))?;
        let computed = classify(&features);
        let hardness = match string_field(obj, "hardness", &path, false)? {
            None => computed,
            Some(declared) => {
                let declared: HardnessLevel = declared.parse().map_err(|e: String| field_err(format!("{path}.hardness"), e))?;
                if declared != computed {
                    warnings.push(format!("question {id}: declared hardness {declared}, computed {computed}"));
                }
                declared
            }
        };
        records.push(QueryRecord { id, nl_question: question, gold_sql, hardness, database_name: database });
    }

    Ok(Dataset { name, manifest_path: manifest_path.to_path_buf(), dump_paths, dumps, records, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_dataset(dir: &Path, manifest: &str) {
        fs::create_dir_all(dir.join("dumps")).unwrap();
        fs::write(
            dir.join("dumps/shop.sql"),
            "CREATE TABLE item (id INTEGER PRIMARY KEY, name TEXT, price REAL);\nINSERT INTO item VALUES (1, 'pen', 1.5);\n",
        )
        .unwrap();
        fs::write(dir.join(MANIFEST_FILE), manifest).unwrap();
    }

    #[test]
    fn loads_records_with_computed_and_declared_hardness() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path(),
            r#"{"name": "demo", "dumps": ["dumps/shop.sql"], "queries": [
                {"question": "How many items?", "gold_sql": "SELECT count(*) FROM item", "database": "shop"},
                {"id": "x", "question": "Names", "gold_sql": "SELECT name FROM item", "database": "shop", "hardness": "hard"}
            ]}"#,
        );
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.name, "demo");
        assert_eq!(ds.dumps[0].name, "shop");
        assert_eq!(ds.records[0].id, "demo-1");
        assert_eq!(ds.records[0].hardness, HardnessLevel::Easy);
        assert_eq!(ds.records[1].hardness, HardnessLevel::Hard);
        assert_eq!(ds.warnings, ["question x: declared hardness hard, computed easy"]);
    }

    #[test]
    fn dumps_can_come_from_another_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path(),
            r#"{"name": "demo", "dumps": ["elsewhere/shop.sql"], "queries": [
                {"question": "Names", "gold_sql": "SELECT name FROM item", "database": "shop"}]}"#,
        );
        let ds = load_manifest_with_dumps(&dir.path().join(MANIFEST_FILE), &dir.path().join("dumps")).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert!(Dataset::load(dir.path()).is_err());
    }

    #[test]
    fn dump_dir_walks_subdirectories() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("database/pets")).unwrap();
        fs::write(dir.path().join("database/pets/schema.sql"), "CREATE TABLE pet (id INTEGER);\n").unwrap();
        fs::write(dir.path().join("shop.sql"), "CREATE TABLE item (id INTEGER);\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let names: Vec<String> = load_dump_dir(dir.path()).unwrap().into_iter().map(|d| d.name).collect();
        assert_eq!(names, ["pets", "shop"]);
    }

    #[test]
    fn empty_query_list_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), r#"{"name": "demo", "dumps": ["dumps/shop.sql"], "queries": []}"#);
        let ds = Dataset::load(dir.path()).unwrap();
        assert!(ds.records.is_empty());
        assert_eq!(ds.warnings.len(), 1);
    }

    fn error_of(manifest: &str) -> String {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), manifest);
        Dataset::load(dir.path()).unwrap_err().to_string()
    }

    #[test]
    fn errors_carry_field_paths() {
        let q = |body: &str| format!(r#"{{"name": "demo", "dumps": ["dumps/shop.sql"], "queries": [{body}]}}"#);
        let dangling = error_of(&q(r#"{"id": "q7", "question": "?", "gold_sql": "SELECT 1 FROM item", "database": "nope"}"#));
        assert!(dangling.starts_with("$.queries[0].database") && dangling.contains("q7"), "{dangling}");
        let bad_sql = error_of(&q(r#"{"question": "?", "gold_sql": "SELEC name", "database": "shop"}"#));
        assert!(bad_sql.starts_with("$.queries[0].gold_sql"), "{bad_sql}");
        let level = error_of(&q(r#"{"question": "?", "gold_sql": "SELECT name FROM item", "database": "shop", "hardness": "brutal"}"#));
        assert!(level.starts_with("$.queries[0].hardness"), "{level}");
        let missing = error_of(&q(r#"{"gold_sql": "SELECT name FROM item", "database": "shop"}"#));
        assert_eq!(missing, "$.queries[0].question: missing");
        assert!(error_of(r#"{"name": "d", "dumps": ["dumps/none.sql"], "queries": []}"#).starts_with("$.dumps[0]"));
        assert!(error_of(r#"{"name": "d", "dumps": [], "queries": [], "extra": 1}"#).starts_with("$.extra"));
        assert!(error_of(r#"{"name": "d", "dumps": ["dumps/shop.sql", "dumps/shop.sql"], "queries": []}"#).contains("twice"));
    }
}
