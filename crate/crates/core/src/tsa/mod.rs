//! Test-suite accuracy: a predicted query is correct when no fuzzed database
//! instance separates its result from the gold query's result.

mod eval;
mod exec;
mod generate;
pub mod pairs;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use eval::{
    evaluate_suite, CellCounts, DatabaseEval, EvalError, EvalItem, EvalReport, ItemStatus, ItemVerdict, LevelSummary,
    ManualReviewItem,
};
pub use exec::{denotations_equal, execute, is_ordered, Backend, Cell, Denotation, ExecError, FLOAT_TOLERANCE};
pub use generate::{generate_instance, DatabaseInstance, GenerationError, ValuePools};

use crate::model::Database;
use crate::summary::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsaOptions {
    pub max_instances: usize,
    pub base_seed: u64,
}

impl Default for TsaOptions {
    fn default() -> Self {
        TsaOptions { max_instances: 1000, base_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Correct,
    Incorrect,
    Undecidable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// Seed of the first distinguishing instance; set iff `Incorrect`.
    pub witness: Option<u64>,
    pub reason: Option<String>,
    pub instances_checked: usize,
}

impl Verdict {
    fn undecidable(reason: String, instances_checked: usize) -> Self {
        Verdict { status: VerdictStatus::Undecidable, witness: None, reason: Some(reason), instances_checked }
    }
}

/// Seed of the `index`-th instance of a suite.
pub fn instance_seed(base_seed: u64, index: usize) -> u64 {
    derive_seed(base_seed, &format!("instance/{index}"))
}

/// A schema, its value pools and the instance budget. Instances are
/// regenerated from their seed, so a suite never holds more than one.
pub struct Suite<'a> {
    schema: &'a Database,
    pools: ValuePools,
    options: TsaOptions,
}

impl<'a> Suite<'a> {
    pub fn new(schema: &'a Database, pools: ValuePools, options: TsaOptions) -> Self {
        Suite { schema, pools, options }
    }

    /// Pools from the schema's rows and the literals of both queries.
    pub fn for_pair(schema: &'a Database, gold: &str, predicted: &str, options: TsaOptions) -> Self {
        let mut pools = ValuePools::from_database(schema);
        pools.harvest_query(gold);
        pools.harvest_query(predicted);
        Suite::new(schema, pools, options)
    }

    pub fn pools(&self) -> &ValuePools {
        &self.pools
    }

    pub fn instance(&self, seed: u64) -> Result<DatabaseInstance, GenerationError> {
        generate_instance(self.schema, seed, &self.pools)
    }

    /// Re-runs both queries on the instance with the given seed and reports
    /// whether their denotations differ.
    pub fn witness_distinguishes(&self, gold: &str, predicted: &str, seed: u64) -> bool {
        let Ok(inst) = self.instance(seed) else { return false };
        let Ok(backend) = Backend::load(&inst) else { return false };
        match (backend.execute(gold), backend.execute(predicted)) {
            (Ok(g), Ok(p)) => !denotations_equal(&g, &p),
            _ => false,
        }
    }

    /// Judges several `(gold, predicted)` pairs on the same instances. Each
    /// instance is generated and loaded once; a pair stops being checked at
    /// its first distinguishing instance or execution failure.
    pub fn judge(&self, pairs: &[(&str, &str)]) -> Vec<Verdict> {
        let mut verdicts: Vec<Option<Verdict>> = vec![None; pairs.len()];
        let budget = self.options.max_instances.max(1);
        for index in 0..budget {
            if verdicts.iter().all(Option::is_some) {
                break;
            }
            let seed = instance_seed(self.options.base_seed, index);
            let backend = self
                .instance(seed)
                .map_err(|e| e.to_string())
                .and_then(|inst| Backend::load(&inst).map_err(|e| e.to_string()));
            let backend = match backend {
                Ok(b) => b,
                Err(reason) => {
                    for v in verdicts.iter_mut().filter(|v| v.is_none()) {
                        *v = Some(Verdict::undecidable(format!("instance {seed}: {reason}"), index));
                    }
                    break;
                }
            };
            let mut gold_results: HashMap<&str, Result<Denotation, ExecError>> = HashMap::new();
            for (slot, &(gold, predicted)) in verdicts.iter_mut().zip(pairs) {
                if slot.is_some() {
                    continue;
                }
                let g = gold_results.entry(gold).or_insert_with(|| backend.execute(gold));
                let g = match g {
                    Ok(g) => g,
                    Err(e) => {
                        *slot = Some(Verdict::undecidable(format!("gold query fails: {e}"), index + 1));
                        continue;
                    }
                };
                match backend.execute(predicted) {
                    Err(e) => *slot = Some(Verdict::undecidable(format!("predicted query fails: {e}"), index + 1)),
                    Ok(p) if !denotations_equal(g, &p) => {
                        *slot = Some(Verdict {
                            status: VerdictStatus::Incorrect,
                            witness: Some(seed),
                            reason: None,
                            instances_checked: index + 1,
                        })
                    }
                    Ok(_) => {}
                }
            }
        }
        verdicts
            .into_iter()
            .map(|v| {
                v.unwrap_or(Verdict {
                    status: VerdictStatus::Correct,
                    witness: None,
                    reason: None,
                    instances_checked: budget,
                })
            })
            .collect()
    }
}

/// Judges one prediction against its gold query on up to
/// `options.max_instances` fuzzed instances of `schema`.
pub fn test_suite_accuracy(gold: &str, predicted: &str, schema: &Database, options: &TsaOptions) -> Verdict {
    Suite::for_pair(schema, gold, predicted, *options).judge(&[(gold, predicted)]).remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_dump;

    fn schema() -> Database {
        parse_dump("CREATE TABLE t (id INTEGER PRIMARY KEY, a INTEGER, b TEXT);").unwrap()
    }

    const FEW: TsaOptions = TsaOptions { max_instances: 200, base_seed: 1 };

    #[test]
    fn identical_queries_are_correct() {
        let v = test_suite_accuracy("SELECT a FROM t", "SELECT a FROM t", &schema(), &FEW);
        assert_eq!(v.status, VerdictStatus::Correct);
        assert_eq!(v.instances_checked, 200);
    }

    #[test]
    fn boundary_literal_is_found() {
        let gold = "SELECT id FROM t WHERE a > 5";
        let pred = "SELECT id FROM t WHERE a >= 5";
        let schema = schema();
        let v = test_suite_accuracy(gold, pred, &schema, &FEW);
        assert_eq!(v.status, VerdictStatus::Incorrect);
        let suite = Suite::for_pair(&schema, gold, pred, FEW);
        let witness = suite.instance(v.witness.unwrap()).unwrap();
        let t = witness.database.table("t").unwrap();
        assert!(t.rows.iter().any(|r| r.values[1] == crate::model::Value::Integer(5)));
        assert!(suite.witness_distinguishes(gold, pred, v.witness.unwrap()));
    }

    #[test]
    fn unsupported_function_is_undecidable() {
        let v = test_suite_accuracy("SELECT MEDIAN(a) FROM t", "SELECT AVG(a) FROM t", &schema(), &FEW);
        assert_eq!(v.status, VerdictStatus::Undecidable);
        assert!(v.reason.unwrap().contains("gold"));
    }

    #[test]
    fn verdicts_are_deterministic() {
        let a = test_suite_accuracy("SELECT b FROM t", "SELECT DISTINCT b FROM t", &schema(), &FEW);
        let b = test_suite_accuracy("SELECT b FROM t", "SELECT DISTINCT b FROM t", &schema(), &FEW);
        assert_eq!(a, b);
        assert_eq!(a.status, VerdictStatus::Incorrect);
    }
}
