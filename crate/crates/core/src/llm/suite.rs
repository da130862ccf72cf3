use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{extract_sql, ConversationScript, Extraction, LlmClient, Message, Purpose, ScriptMeta, TransportError};
use crate::atd::apply_atd;
use crate::hardness::QueryRecord;
use crate::model::{render_dump, Database};

/// Instruction prefixed to every question.
pub const TRANSLATION_INSTRUCTION: &str = "Translate in SQL the following query. Answer using only SQL. ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Atd,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Atd => "atd",
        }
    }

    /// The database as shown to the model under this variant.
    pub fn prepare(self, db: &Database) -> Database {
        match self {
            Variant::Original => db.clone(),
            Variant::Atd => apply_atd(db),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Variant::Original),
            "atd" => Ok(Variant::Atd),
            _ => Err(format!("unknown variant `{s}` (expected original or atd)")),
        }
    }
}

pub fn build_interpretation_script(database: &str, dump: &str) -> ConversationScript {
    ConversationScript {
        messages: vec![Message::user(dump)],
        meta: ScriptMeta { database: database.to_string(), question_id: None, purpose: Purpose::Interpretation },
        warnings: Vec::new(),
    }
}

/// `[user: dump, assistant: interpretation, user: instruction + question]`.
/// An empty interpretation is omitted with a warning.
pub fn build_translation_conversation(dump: &str, interpretation: &str, question: &str) -> ConversationScript {
    let mut messages = vec![Message::user(dump)];
    let mut warnings = Vec::new();
    if interpretation.trim().is_empty() {
        warnings.push("empty interpretation omitted from the conversation".to_string());
    } else {
        messages.push(Message::assistant(interpretation));
    }
    messages.push(Message::user(format!("{TRANSLATION_INSTRUCTION}{question}")));
    ConversationScript {
        messages,
        meta: ScriptMeta { database: String::new(), question_id: None, purpose: Purpose::Translation },
        warnings,
    }
}

type Slot = Arc<Mutex<Option<Result<String, TransportError>>>>;

/// Interpretations per (database, rendered dump), fetched at most once even
/// under concurrent callers.
#[derive(Default)]
pub struct InterpretationCache {
    slots: Mutex<HashMap<(String, String), Slot>>,
}

impl InterpretationCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, database: &str, dump: &str) -> Slot {
        let key = (database.to_string(), dump.to_string());
        self.slots.lock().expect("cache lock").entry(key).or_default().clone()
    }
}

/// Sends the rendered dump as the only user message and returns the reply
/// verbatim. Results (including failures) are cached per database.
pub fn acquire_interpretation(
    db: &Database,
    client: &LlmClient,
    cache: &InterpretationCache,
) -> Result<String, TransportError> {
    let dump = render_dump(db);
    let slot = cache.slot(&db.name, &dump);
    let mut guard = slot.lock().expect("slot lock");
    if let Some(done) = guard.as_ref() {
        return done.clone();
    }
    let result = client.send(&build_interpretation_script(&db.name, &dump)).and_then(|text| {
        if text.trim().is_empty() {
            Err(TransportError::EmptyResponse)
        } else {
            Ok(text)
        }
    });
    *guard = Some(result.clone());
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Sql { sql: String, response: String },
    ExtractionFailure { response: String },
    TransportFailure { error: String },
}

impl Prediction {
    pub fn sql(&self) -> Option<&str> {
        match self {
            Prediction::Sql { sql, .. } => Some(sql),
            _ => None,
        }
    }

    pub fn is_transport_failure(&self) -> bool {
        matches!(self, Prediction::TransportFailure { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    pub record: QueryRecord,
    pub variant: Variant,
    pub prediction: Prediction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("question {id} refers to unknown database `{database}`")]
    UnknownDatabase { id: String, database: String },
}

/// One prediction per record, in record order. Transport failures are
/// carried in the outcome and do not stop the suite.
pub fn run_translation_suite(
    dumps: &[Database],
    records: &[QueryRecord],
    client: &LlmClient,
    variant: Variant,
) -> Result<Vec<TranslationOutcome>, SuiteError> {
    let mut prepared: HashMap<String, (Database, String)> = HashMap::new();
    for r in records {
        if prepared.contains_key(&r.database_name) {
            continue;
        }
        let Some(db) = dumps.iter().find(|d| d.name == r.database_name) else {
            return Err(SuiteError::UnknownDatabase { id: r.id.clone(), database: r.database_name.clone() });
        };
        let shown = variant.prepare(db);
        let text = render_dump(&shown);
        prepared.insert(r.database_name.clone(), (shown, text));
    }
    let cache = InterpretationCache::new();
    let outcomes = client.pool().install(|| {
        records
            .par_iter()
            .map(|record| {
                let (db, dump) = &prepared[&record.database_name];
                translate_one(record, db, dump, client, &cache, variant)
            })
            .collect()
    });
    Ok(outcomes)
}

fn translate_one(
    record: &QueryRecord,
    db: &Database,
    dump: &str,
    client: &LlmClient,
    cache: &InterpretationCache,
    variant: Variant,
) -> TranslationOutcome {
    let outcome = |prediction, warnings| TranslationOutcome { record: record.clone(), variant, prediction, warnings };
    let interpretation = match acquire_interpretation(db, client, cache) {
        Ok(text) => text,
        Err(TransportError::EmptyResponse) => String::new(),
        Err(e) => return outcome(Prediction::TransportFailure { error: format!("interpretation: {e}") }, Vec::new()),
    };
    let mut script = build_translation_conversation(dump, &interpretation, &record.nl_question);
    script.meta.database = record.database_name.clone();
    script.meta.question_id = Some(record.id.clone());
    let prediction = match client.send(&script) {
        Ok(response) => match extract_sql(&response) {
            Extraction::Sql(sql) => Prediction::Sql { sql, response },
            Extraction::Failure => Prediction::ExtractionFailure { response },
        },
        Err(e) => Prediction::TransportFailure { error: e.to_string() },
    };
    outcome(prediction, script.warnings)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::Ordering;

    use super::*;
    use crate::hardness::HardnessLevel;
    use crate::llm::testing::ScriptedTransport;
    use crate::llm::{ModelParams, ReplayTransport, Role, TranscriptStore};
    use crate::model::parse_dump;

    fn db() -> Database {
        let mut db = parse_dump(
            r#"CREATE TABLE "continents" ("ContId" INTEGER PRIMARY KEY, "Continent" TEXT);
               CREATE TABLE "countries" ("CountryId" INTEGER PRIMARY KEY, "Continent" INTEGER REFERENCES continents ("ContId"));
               INSERT INTO continents VALUES (1, 'america');"#,
        )
        .unwrap();
        db.name = "car_1".into();
        db
    }

    fn record(i: usize, q: &str) -> QueryRecord {
        QueryRecord {
            id: format!("q{i}"),
            nl_question: q.into(),
            gold_sql: "SELECT COUNT(*) FROM continents".into(),
            hardness: HardnessLevel::Easy,
            database_name: "car_1".into(),
        }
    }

    #[test]
    fn translation_script_shape() {
        let s = build_translation_conversation("CREATE TABLE continents ...", "interp", "What is the number of continents?");
        let roles: Vec<Role> = s.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, vec![Role::User, Role::Assistant, Role::User]);
        assert!(s.messages[2].content.ends_with("What is the number of continents?"));
        assert!(s.messages[2].content.starts_with(TRANSLATION_INSTRUCTION));
        assert_eq!(s, build_translation_conversation("CREATE TABLE continents ...", "interp", "What is the number of continents?"));

        let bare = build_translation_conversation("dump", "  ", "q?");
        assert_eq!(bare.messages.len(), 2);
        assert_eq!(bare.warnings.len(), 1);
    }

    #[test]
    fn interpretation_is_fetched_once() {
        let transport = Arc::new(ScriptedTransport::new(Some("The code above includes the creation of two tables")));
        let client = LlmClient::new(transport.clone(), ModelParams::default(), 4);
        let cache = InterpretationCache::new();
        let a = acquire_interpretation(&db(), &client, &cache).unwrap();
        let b = acquire_interpretation(&db(), &client, &cache).unwrap();
        assert_eq!(a, b);
        assert_eq!(transport.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_miss_is_an_error() {
        let client = LlmClient::new(
            Arc::new(ReplayTransport::new(Arc::new(TranscriptStore::in_memory()))),
            ModelParams::default(),
            1,
        );
        let err = acquire_interpretation(&db(), &client, &InterpretationCache::new()).unwrap_err();
        assert!(matches!(err, TransportError::ReplayMiss { .. }));
    }

    #[test]
    fn planted_refusal_becomes_a_failure_marker() {
        let mut transport = ScriptedTransport::new(Some("SELECT COUNT(*) FROM continents;"));
        transport.answers.insert("question 3".into(), "I cannot answer.".into());
        let client = LlmClient::new(Arc::new(transport), ModelParams::default(), 3);
        let records: Vec<_> = (0..10).map(|i| record(i, &format!("question {i}"))).collect();
        let out = run_translation_suite(&[db()], &records, &client, Variant::Atd).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out.iter().filter(|o| o.prediction.sql().is_some()).count(), 9);
        assert!(matches!(out[3].prediction, Prediction::ExtractionFailure { .. }));
        for req in client.request_log() {
            for token in ["FOREIGN KEY", "REFERENCES", "INSERT"] {
                assert!(!req.messages[0].content.contains(token));
            }
        }
        assert_eq!(client.request_log().iter().filter(|r| r.meta.purpose == Purpose::Interpretation).count(), 1);
    }

    #[test]
    fn unknown_database_is_rejected() {
        let client = LlmClient::new(Arc::new(ScriptedTransport::new(None)), ModelParams::default(), 1);
        let mut r = record(0, "q");
        r.database_name = "nope".into();
        assert!(run_translation_suite(&[db()], &[r], &client, Variant::Original).is_err());
    }
}
