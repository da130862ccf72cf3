//! Auditing toolkit for text-to-SQL benchmarks: schema-reconstruction
//! contamination probes, table disconnection, query hardness, fuzzing-based
//! equivalence judgement and dataset packaging.

pub mod atd;
pub mod audit;
pub mod config;
pub mod contamination;
pub mod dataset;
pub mod hardness;
pub mod llm;
pub mod mcq;
pub mod model;
pub mod packaging;
pub mod query;
pub mod report;
pub mod stats;
pub mod summary;
pub mod tsa;

pub use atd::{apply_atd, atd_diff, AtdDiff};
pub use hardness::{classify, extract_features, hardness_histogram, HardnessLevel, QueryFeatures, QueryRecord};
pub use model::{parse_dump, render_dump, validate, Column, Database, ForeignKey, Row, SqlType, Table, Value, MASK_TOKEN};
