use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sqlcontam_core::contamination::{mask_columns, MaskOptions};
use sqlcontam_core::dataset::{load_dump_dir, Dataset};
use sqlcontam_core::mcq::{canonical_sql, perturb_query};
use sqlcontam_core::packaging::{decrypt_bundle, pack, KdfParams};
use sqlcontam_core::{parse_dump, render_dump, Database};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn datasets() -> Vec<Dataset> {
    ["spider", "termite", "mcq"].iter().map(|n| Dataset::load(&fixtures().join(n)).unwrap()).collect()
}

fn structure_key(db: &Database) -> Database {
    Database { name: String::new(), ..db.clone() }
}

#[test]
fn distinct_fixture_databases_render_distinctly() {
    let mut corpus: Vec<Database> = datasets().into_iter().flat_map(|d| d.dumps).collect();
    corpus.extend(load_dump_dir(&fixtures().join("schemas")).unwrap());
    let masked: Vec<Database> = corpus
        .iter()
        .map(|db| mask_columns(db, &MaskOptions { seed: 11, ..MaskOptions::default() }).unwrap().database)
        .collect();
    corpus.extend(masked);

    let mut by_text: BTreeMap<String, Database> = BTreeMap::new();
    for db in &corpus {
        let text = render_dump(db);
        let key = structure_key(&parse_dump(&text).unwrap());
        assert_eq!(key, structure_key(db), "{} does not survive rendering", db.name);
        if let Some(previous) = by_text.insert(text, key.clone()) {
            assert_eq!(previous, key, "two different databases render to the same text ({})", db.name);
        }
    }
    assert!(by_text.len() > 60, "only {} distinct renders", by_text.len());
}

#[test]
fn continents_render_declares_one_primary_key() {
    let spider = Dataset::load(&fixtures().join("spider")).unwrap();
    let car = spider.database("car_1").unwrap();
    let continents = car.table("continents").unwrap();
    let single = Database { name: "car_1".into(), tables: vec![continents.clone()], foreign_keys: vec![] };
    assert_eq!(render_dump(&single).matches("PRIMARY KEY").count(), 1);
}

#[test]
fn perturbations_differ_from_gold_across_the_fixtures() {
    let mut checked = 0;
    for ds in datasets() {
        for (i, r) in ds.records.iter().enumerate() {
            let schema = ds.database(&r.database_name).unwrap();
            let p = perturb_query(&r.gold_sql, schema, i as u64).unwrap_or_else(|e| panic!("{}: {e}", r.id));
            assert_ne!(p.sql, canonical_sql(&r.gold_sql).unwrap(), "{}", r.id);
            assert_eq!(perturb_query(&r.gold_sql, schema, i as u64).unwrap(), p);
            checked += 1;
        }
    }
    assert!(checked >= 40);
}

#[test]
fn bundle_leaks_no_table_names() {
    let dir = fixtures().join("spider");
    let ds = Dataset::load(&dir).unwrap();
    let kdf = KdfParams { memory_kib: 64, iterations: 1, lanes: 1 };
    let bundle = pack(&dir, "correct horse", kdf).unwrap();
    let mut names: Vec<&str> = ds.dumps.iter().flat_map(|d| d.tables.iter().map(|t| t.name.as_str())).collect();
    names.sort_unstable();
    names.dedup();
    // Short names are excluded: a three-letter string turns up in a few
    // hundred kilobytes of random bytes often enough to make the test flaky.
    let scanned: Vec<&str> = names.into_iter().filter(|n| n.len() >= 6).collect();
    assert!(scanned.len() > 20);
    for name in scanned {
        for needle in [name.to_string(), name.to_lowercase(), name.to_uppercase()] {
            assert!(!bundle.windows(needle.len()).any(|w| w == needle.as_bytes()), "`{needle}` found in bundle");
        }
    }
    assert!(decrypt_bundle(&bundle, "wrong horse").is_err());
    assert!(!decrypt_bundle(&bundle, "correct horse").unwrap().is_empty());

    let mut tampered = bundle.clone();
    let last = tampered.len() - 1;
    tampered[last] ^= 1;
    assert!(decrypt_bundle(&tampered, "correct horse").is_err());
}
