use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::McqError;
use crate::summary::Summary;

const CATEGORIES: usize = 3;

/// Items × annotators matrix of chosen option indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub item_ids: Vec<String>,
    pub annotators: Vec<String>,
    pub choices: Vec<Vec<u8>>,
    /// Administration round per item, when known.
    pub trials: Vec<Option<u32>>,
}

impl AnnotationMatrix {
    /// Generic item and annotator names, no trial information.
    pub fn from_choices(choices: Vec<Vec<u8>>) -> Self {
        let width = choices.first().map_or(0, Vec::len);
        AnnotationMatrix {
            item_ids: (0..choices.len()).map(|i| format!("item{}", i + 1)).collect(),
            annotators: (0..width).map(|j| format!("annotator{}", j + 1)).collect(),
            trials: vec![None; choices.len()],
            choices,
        }
    }

    fn check(&self, key: &[u8]) -> Result<(), McqError> {
        if self.choices.is_empty() {
            return Err(McqError::TooSmall("one item"));
        }
        if self.annotators.len() < 2 {
            return Err(McqError::TooSmall("two annotators"));
        }
        if key.len() != self.choices.len() {
            return Err(McqError::Annotation { row: 0, message: format!("{} keys for {} items", key.len(), self.choices.len()) });
        }
        for (i, (row, &k)) in self.choices.iter().zip(key).enumerate() {
            if row.len() != self.annotators.len() {
                return Err(McqError::Annotation { row: i + 1, message: format!("{} answers for {} annotators", row.len(), self.annotators.len()) });
            }
            if let Some(bad) = row.iter().chain([&k]).find(|&&c| c as usize >= CATEGORIES) {
                return Err(McqError::Annotation { row: i + 1, message: format!("option index {bad} out of range") });
            }
        }
        Ok(())
    }

    fn subset(&self, rows: &[usize]) -> AnnotationMatrix {
        AnnotationMatrix {
            item_ids: rows.iter().map(|&i| self.item_ids[i].clone()).collect(),
            annotators: self.annotators.clone(),
            choices: rows.iter().map(|&i| self.choices[i].clone()).collect(),
            trials: rows.iter().map(|&i| self.trials[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    /// Chance agreement was 1, so the ratio is undefined and 1.0 is reported.
    pub degenerate: bool,
}

/// Fleiss's kappa over three categories; every row must have the same
/// number (at least two) of ratings.
pub fn fleiss_kappa(choices: &[Vec<u8>]) -> KappaResult {
    let n_items = choices.len() as f64;
    let raters = choices.first().map_or(0, Vec::len) as f64;
    let mut totals = [0f64; CATEGORIES];
    let mut agreement = 0.0;
    for row in choices {
        let mut counts = [0f64; CATEGORIES];
        for &c in row {
            counts[c as usize] += 1.0;
        }
        for j in 0..CATEGORIES {
            totals[j] += counts[j];
        }
        agreement += (counts.iter().map(|c| c * c).sum::<f64>() - raters) / (raters * (raters - 1.0));
    }
    let p_bar = agreement / n_items;
    let p_e: f64 = totals.iter().map(|t| (t / (n_items * raters)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return KappaResult { kappa: 1.0, degenerate: true };
    }
    KappaResult { kappa: (p_bar - p_e) / (1.0 - p_e), degenerate: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationScore {
    pub items: usize,
    pub annotators: Vec<String>,
    pub per_annotator: Vec<f64>,
    pub annotator_summary: Option<Summary>,
    /// Items whose plurality choice is the key; ties count as wrong.
    pub majority_correct: usize,
    pub majority_accuracy: f64,
    pub fleiss_kappa: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn score_annotations(m: &AnnotationMatrix, key: &[u8]) -> Result<AnnotationScore, McqError> {
    m.check(key)?;
    let n = m.choices.len() as f64;
    let per_annotator: Vec<f64> = (0..m.annotators.len())
        .map(|j| m.choices.iter().zip(key).filter(|(row, &k)| row[j] == k).count() as f64 / n)
        .collect();
    let majority_correct = m
        .choices
        .iter()
        .zip(key)
        .filter(|(row, &k)| {
            let mut counts = [0usize; CATEGORIES];
            for &c in row.iter() {
                counts[c as usize] += 1;
            }
            let top = counts.iter().copied().max().unwrap_or(0);
            counts[k as usize] == top && counts.iter().filter(|&&c| c == top).count() == 1
        })
        .count();
    let kappa = fleiss_kappa(&m.choices);
    let mut notes = Vec::new();
    if kappa.degenerate {
        notes.push("every answer falls in one option, so chance agreement is 1; kappa reported as 1.0".to_string());
    }
    Ok(AnnotationScore {
        items: m.choices.len(),
        annotators: m.annotators.clone(),
        annotator_summary: Summary::of(&per_annotator),
        per_annotator,
        majority_correct,
        majority_accuracy: majority_correct as f64 / n,
        fleiss_kappa: kappa.kappa,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub trial: u32,
    pub score: AnnotationScore,
}

/// Scores over all items and, when trials are recorded, per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pooled: AnnotationScore,
    pub per_trial: Vec<TrialScore>,
}

pub fn score_report(m: &AnnotationMatrix, key: &[u8]) -> Result<ScoreReport, McqError> {
    let pooled = score_annotations(m, key)?;
    let trials: BTreeSet<u32> = m.trials.iter().flatten().copied().collect();
    let per_trial = trials
        .into_iter()
        .map(|trial| {
            let rows: Vec<usize> = (0..m.trials.len()).filter(|&i| m.trials[i] == Some(trial)).collect();
            let keys: Vec<u8> = rows.iter().map(|&i| key[i]).collect();
            score_annotations(&m.subset(&rows), &keys).map(|score| TrialScore { trial, score })
        })
        .collect::<Result<_, _>>()?;
    Ok(ScoreReport { pooled, per_trial })
}

fn parse_choice(s: &str) -> Option<u8> {
    match s.trim().to_ascii_uppercase().as_str() {
        "A" | "0" => Some(0),
        "B" | "1" => Some(1),
        "C" | "2" => Some(2),
        _ => None,
    }
}

/// Reads a CSV with columns `item`, `key`, an optional `trial`, and one
/// column per annotator. Choices are `A`/`B`/`C` or `0`/`1`/`2`.
pub fn read_annotations(input: impl Read) -> Result<(AnnotationMatrix, Vec<u8>), McqError> {
    let csv_err = |row: usize, e: csv::Error| McqError::Annotation { row, message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers().map_err(|e| csv_err(0, e))?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(item_col), Some(key_col)) = (col("item"), col("key")) else {
        return Err(McqError::Annotation { row: 0, message: "header needs `item` and `key` columns".into() });
    };
    let trial_col = col("trial");
    let annotator_cols: Vec<usize> =
        (0..header.len()).filter(|&i| i != item_col && i != key_col && Some(i) != trial_col).collect();

    let mut m = AnnotationMatrix {
        item_ids: Vec::new(),
        annotators: annotator_cols.iter().map(|&i| header[i].clone()).collect(),
        choices: Vec::new(),
        trials: Vec::new(),
    };
    let mut key = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| csv_err(row, e))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str, value: &str| McqError::Annotation { row, message: format!("invalid {what} `{value}`") };
        m.item_ids.push(field(item_col).to_string());
        key.push(parse_choice(field(key_col)).ok_or_else(|| bad("key", field(key_col)))?);
        let trial = match trial_col.map(field) {
            None | Some("") => None,
            Some(t) => Some(t.parse().map_err(|_| bad("trial", t))?),
        };
        m.trials.push(trial);
        let choices = annotator_cols
            .iter()
            .map(|&i| parse_choice(field(i)).ok_or_else(|| bad(&format!("answer from {}", header[i]), field(i))))
            .collect::<Result<Vec<u8>, _>>()?;
        m.choices.push(choices);
    }
    m.check(&key)?;
    Ok((m, key))
}
