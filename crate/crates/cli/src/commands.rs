use std::fmt;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sqlcontam_core::audit::{self, build_transport, run_audit, StageStatus};
use sqlcontam_core::config::{Config, ConfigError, TransportMode};
use sqlcontam_core::contamination::{build_dc_prompt, mask_columns, run_dc_audit, MaskOptions, DC_PROMPT_VERSION};
use sqlcontam_core::dataset::{load_dump_dir, load_manifest, load_manifest_with_dumps, Dataset, ManifestError, MANIFEST_FILE};
use sqlcontam_core::llm::{run_translation_suite, LlmClient, StoreError, TranslationOutcome, Variant};
use sqlcontam_core::mcq::{assign_trials, build_test, read_annotations, render_answer_key, render_sheet, score_report};
use sqlcontam_core::model::load_dump;
use sqlcontam_core::packaging::{pack, unpack};
use sqlcontam_core::report::{self, EvalColumn};
use sqlcontam_core::stats::{compute_fact_sheet, Wordlist};
use sqlcontam_core::summary::derive_seed;
use sqlcontam_core::tsa::{evaluate_suite, EvalItem, TsaOptions};
use sqlcontam_core::{apply_atd, atd_diff, hardness_histogram, render_dump, Database};

use crate::{Cli, Command, DatasetArgs, HardnessCommand, McqCommand};

/// A problem with the invocation or configuration rather than the data run.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// The error and its causes, skipping causes already quoted by their parent.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// 2 for configuration and input errors, 1 for anything else.
pub fn error_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.is::<Usage>() || c.is::<ConfigError>() || c.is::<ManifestError>() || c.is::<StoreError>()
    });
    if config {
        2
    } else {
        1
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.audit.seed = seed;
    }
    let cwd = std::env::current_dir().context("working directory")?;
    let absolute = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { cwd.join(p) };
    if let Some(store) = &cli.record {
        config.audit.mode = TransportMode::Record;
        config.audit.transcripts = absolute(store);
    }
    if let Some(store) = &cli.replay {
        config.audit.mode = TransportMode::Replay;
        config.audit.transcripts = absolute(store);
    }
    Ok(config)
}

fn load_dataset(args: &DatasetArgs) -> Result<Dataset> {
    let manifest = args.manifest.as_ref().map(|m| if m.is_dir() { m.join(MANIFEST_FILE) } else { m.clone() });
    let ds = match (&manifest, &args.dumps) {
        (Some(m), Some(d)) => load_manifest_with_dumps(m, d)?,
        (Some(m), None) => load_manifest(m)?,
        (None, Some(d)) => dump_dir_dataset(d)?,
        (None, None) => return Err(usage("give --manifest, --dumps, or both")),
    };
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn dump_dir_dataset(dir: &Path) -> Result<Dataset> {
    let dumps = load_dump_dir(dir)?;
    if dumps.is_empty() {
        return Err(usage(format!("no .sql dumps under {}", dir.display())));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        name,
        manifest_path: PathBuf::new(),
        dump_paths: Vec::new(),
        dumps,
        records: Vec::new(),
        warnings: Vec::new(),
    })
}

fn wordlist(config: &Config, path: Option<&Path>) -> Result<Wordlist> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => match &config.audit.wordlist {
            Some(p) => config.resolve(p),
            None => return Ok(Wordlist::default()),
        },
    };
    Wordlist::load(&path).with_context(|| format!("cannot read word list {}", path.display())).map_err(|e| usage(format!("{e:#}")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => std::io::stdout().write_all(text.as_bytes()).context("stdout"),
    }
}

fn write_files(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn client(config: &Config) -> Result<LlmClient> {
    let transport = build_transport(config)?;
    Ok(LlmClient::new(transport, config.llm.params(), config.llm.concurrency))
}

fn passphrase(config: &Config) -> Result<String> {
    let var = &config.packaging.passphrase_env;
    if let Ok(p) = std::env::var(var) {
        if !p.is_empty() {
            return Ok(p);
        }
    }
    eprint!("passphrase ({var} is not set): ");
    std::io::stderr().flush().ok();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).context("reading passphrase")?;
    let p = line.trim_end_matches(['\r', '\n']).to_string();
    if p.is_empty() {
        return Err(usage("empty passphrase"));
    }
    Ok(p)
}

pub fn run(cli: Cli) -> Result<u8> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Stats { dataset, wordlist: list, out } => {
            let ds = load_dataset(&dataset)?;
            let words = wordlist(&config, list.as_deref())?;
            let sheet = compute_fact_sheet(&ds.dumps, &ds.records, &words)?;
            let sheets = [(ds.name.clone(), sheet)];
            let stamp = audit::stamp(&config).with("wordlist entries", words.len());
            let md = report::fact_sheet_markdown(&sheets, &stamp);
            match out {
                Some(dir) => write_files(&dir, &[(audit::FACT_SHEET, &md), (audit::NAME_CLASSES, &report::name_classes_csv(&sheets, &stamp))])?,
                None => emit(None, &md)?,
            }
            Ok(0)
        }
        Command::Hardness { command: HardnessCommand::Classify { dataset, out } } => {
            let ds = load_dataset(&dataset)?;
            if ds.records.is_empty() {
                return Err(usage("hardness classify needs a manifest with queries"));
            }
            let levels = report::hardness_csv(&ds.records);
            let histogram = report::histogram_csv(&hardness_histogram(&ds.records));
            match out {
                Some(dir) => write_files(&dir, &[("hardness.csv", &levels), ("hardness_histogram.csv", &histogram)])?,
                None => emit(None, &format!("{levels}\n{histogram}"))?,
            }
            Ok(0)
        }
        Command::Mask { dump, ratio, exclude_pk, prompt, out, truth } => {
            let db = load_dump(&dump).map_err(|e| usage(e.to_string()))?;
            let options = MaskOptions {
                ratio: ratio.unwrap_or(config.audit.mask_ratio),
                seed: derive_seed(config.audit.seed, &db.name),
                exclude_pk: exclude_pk || config.audit.exclude_pk,
            };
            let md = mask_columns(&db, &options).map_err(|e| usage(e.to_string()))?;
            let text = if prompt { build_dc_prompt(&md).messages[0].content.clone() } else { render_dump(&md.database) };
            emit(out.as_deref(), &text)?;
            if let Some(path) = truth {
                emit(Some(&path), &format!("{}\n", serde_json::to_string_pretty(&md.ground_truth)?))?;
            }
            Ok(0)
        }
        Command::ProbeDc { dataset, ratio, exclude_pk, out } => {
            let ds = if dataset.join(MANIFEST_FILE).is_file() {
                load_dataset(&DatasetArgs { manifest: Some(dataset), dumps: None })?
            } else {
                dump_dir_dataset(&dataset)?
            };
            let options = MaskOptions {
                ratio: ratio.unwrap_or(config.audit.mask_ratio),
                seed: config.audit.seed,
                exclude_pk: exclude_pk || config.audit.exclude_pk,
            };
            if !(options.ratio > 0.0 && options.ratio <= 1.0) {
                return Err(usage(format!("--ratio must be in (0, 1], got {}", options.ratio)));
            }
            let client = client(&config)?;
            let dc = run_dc_audit(&ds.dumps, &client, &options);
            for u in &dc.undecided {
                eprintln!("undecided: {}: {}", u.database, u.reason);
            }
            let code = u8::from(!dc.undecided.is_empty());
            let reports = [(ds.name.clone(), dc)];
            let stamp = audit::stamp(&config)
                .with("prompt", DC_PROMPT_VERSION)
                .with("mask ratio", options.ratio)
                .with("exclude pk", options.exclude_pk);
            let md = report::dc_markdown(&reports, &stamp);
            match out {
                Some(dir) => write_files(&dir, &[(audit::DC_REPORT, &md), (audit::DC_CSV, &report::dc_csv(&reports, &stamp))])?,
                None => emit(None, &md)?,
            }
            Ok(code)
        }
        Command::Atd { input, out } => {
            let db = load_dump(&input).map_err(|e| usage(e.to_string()))?;
            let atd = apply_atd(&db);
            let diff = atd_diff(&db, &atd);
            emit(Some(&out), &render_dump(&atd))?;
            let rows: usize = diff.removed_rows.iter().map(|(_, n)| n).sum();
            eprintln!("{}: removed {} foreign keys and {rows} rows", db.name, diff.removed_foreign_keys.len());
            Ok(0)
        }
        Command::Translate { dataset, variant, out } => {
            let variant: Variant = variant.parse().map_err(usage)?;
            let ds = load_dataset(&dataset)?;
            if ds.records.is_empty() {
                return Err(usage("translate needs a manifest with queries"));
            }
            let client = client(&config)?;
            let outcomes = run_translation_suite(&ds.dumps, &ds.records, &client, variant)?;
            let failures = outcomes.iter().filter(|o| o.prediction.is_transport_failure()).count();
            if failures > 0 {
                eprintln!("{failures} of {} requests failed", outcomes.len());
            }
            let stamp = audit::stamp(&config).with("variant", variant);
            emit(out.as_deref(), &report::predictions_jsonl(&[(ds.name.as_str(), &outcomes)], &stamp))?;
            Ok(u8::from(failures > 0))
        }
        Command::Evaluate { predictions, dumps, max_instances, out } => {
            let text = std::fs::read_to_string(&predictions)
                .with_context(|| format!("cannot read {}", predictions.display()))
                .map_err(|e| usage(format!("{e:#}")))?;
            let parsed = report::parse_predictions(&text).map_err(|e| usage(format!("{}: {e}", predictions.display())))?;
            let mut all: Vec<Database> = Vec::new();
            for dir in &dumps {
                for db in load_dump_dir(dir)? {
                    if all.iter().any(|d| d.name == db.name) {
                        return Err(usage(format!("database `{}` found in more than one dump directory", db.name)));
                    }
                    all.push(db);
                }
            }
            let options = TsaOptions {
                max_instances: max_instances.unwrap_or(config.audit.max_instances),
                base_seed: config.audit.seed,
            };
            let mut groups: Vec<(String, Variant, Vec<TranslationOutcome>)> = Vec::new();
            for (dataset, o) in parsed {
                match groups.iter_mut().find(|(d, v, _)| *d == dataset && *v == o.variant) {
                    Some(g) => g.2.push(o),
                    None => groups.push((dataset, o.variant, vec![o])),
                }
            }
            let mut reports = Vec::new();
            for (dataset, variant, outcomes) in &groups {
                let items: Vec<EvalItem> =
                    outcomes.iter().filter(|o| !o.prediction.is_transport_failure()).map(EvalItem::from).collect();
                let r = evaluate_suite(&items, &all, &options).map_err(|e| usage(format!("{dataset}/{variant}: {e}")))?;
                eprintln!("{dataset}/{variant}: {} judged, {} undecidable", r.items.len(), r.manual_review.len());
                reports.push(r);
            }
            let columns: Vec<EvalColumn> = groups
                .iter()
                .zip(&reports)
                .map(|((dataset, variant, _), report)| EvalColumn { dataset, variant: *variant, report })
                .collect();
            let stamp = audit::stamp(&config).with("max instances", options.max_instances);
            let md = report::eval_markdown(&columns, &stamp);
            match out {
                Some(dir) => write_files(
                    &dir,
                    &[
                        (audit::EVAL_REPORT, &md),
                        (audit::EVAL_CSV, &report::eval_csv(&columns, &stamp)),
                        (audit::MANUAL_REVIEW, &report::manual_review_jsonl(&columns, &stamp)),
                    ],
                )?,
                None => emit(None, &md)?,
            }
            Ok(0)
        }
        Command::Mcq { command: McqCommand::Build { dataset, n, trials, out } } => {
            let ds = load_dataset(&dataset)?;
            let mut items = build_test(&ds.records, &ds.dumps, n, config.audit.seed)?;
            assign_trials(&mut items, trials);
            let mut files = vec![
                ("mcq_items.json".to_string(), format!("{}\n", serde_json::to_string_pretty(&items)?)),
                ("answer_key.csv".to_string(), render_answer_key(&items)),
            ];
            for t in 1..=trials.max(1) {
                let subset: Vec<_> = items.iter().filter(|i| i.trial == t).cloned().collect();
                let title = if trials > 1 { format!("{}: trial {t}", ds.name) } else { ds.name.clone() };
                let name = if trials > 1 { format!("sheet_trial{t}.md") } else { "sheet.md".to_string() };
                files.push((name, render_sheet(&title, &subset)));
            }
            let refs: Vec<(&str, &str)> = files.iter().map(|(n, t)| (n.as_str(), t.as_str())).collect();
            write_files(&out, &refs)?;
            eprintln!("{} items written to {}", items.len(), out.display());
            Ok(0)
        }
        Command::Mcq { command: McqCommand::Score { answers, json, out } } => {
            let file = std::fs::File::open(&answers).with_context(|| format!("cannot read {}", answers.display()))?;
            let (matrix, key) = read_annotations(file).map_err(|e| usage(format!("{}: {e}", answers.display())))?;
            let scores = score_report(&matrix, &key).map_err(|e| usage(e.to_string()))?;
            let text = if json {
                format!("{}\n", serde_json::to_string_pretty(&scores)?)
            } else {
                report::mcq_score_markdown(&scores, &audit::stamp(&config))
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Pack { input, out } => {
            let pass = passphrase(&config)?;
            let bytes = pack(&input, &pass, config.packaging.kdf())?;
            std::fs::write(&out, bytes).with_context(|| format!("cannot write {}", out.display()))?;
            Ok(0)
        }
        Command::Unpack { input, out } => {
            let bytes = std::fs::read(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let pass = passphrase(&config)?;
            let ds = unpack(&bytes, &pass, &out)?;
            eprintln!("{}: {} databases, {} questions", ds.name, ds.dumps.len(), ds.records.len());
            Ok(0)
        }
        Command::Audit { out } => {
            if config.audit.datasets.is_empty() {
                bail!(usage("audit.datasets is empty"));
            }
            let datasets = config
                .audit
                .datasets
                .iter()
                .map(|d| {
                    let dir = config.resolve(d);
                    Dataset::load(&dir).with_context(|| format!("dataset {}", dir.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            for ds in &datasets {
                for w in &ds.warnings {
                    eprintln!("warning: {}: {w}", ds.name);
                }
            }
            let words = wordlist(&config, None)?;
            let transport = build_transport(&config)?;
            let outcome = run_audit(&config, &datasets, transport, &words);
            let dir = out.unwrap_or_else(|| config.resolve(&config.audit.output));
            outcome.write(&dir).with_context(|| format!("cannot write reports to {}", dir.display()))?;
            for s in &outcome.stages {
                if s.status != StageStatus::Ok {
                    eprintln!("{}: {:?}: {}", s.stage, s.status, s.detail);
                }
            }
            eprintln!("reports written to {}", dir.display());
            Ok(outcome.exit_code() as u8)
        }
    }
}
