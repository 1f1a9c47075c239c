use std::fs;
use std::path::{Path, PathBuf};

use entnorm::corpus::{load_corpus, save_corpus, Corpus, Entity, MentionRecord};
use entnorm::Error;
use proptest::prelude::*;

fn paths(dir: &Path) -> [PathBuf; 3] {
    ["kb.jsonl", "train.jsonl", "test.jsonl"].map(|f| dir.join(f))
}

fn load(dir: &Path) -> entnorm::Result<Corpus> {
    let [kb, train, test] = paths(dir);
    load_corpus(&kb, &train, &test)
}

#[test]
fn esappmod_sized_corpus_loads_with_its_counts() {
    let dir = tempfile::tempdir().unwrap();
    let [kb, train, test] = paths(dir.path());
    let mut kb_text = String::new();
    for i in 0..640 {
        kb_text.push_str(&format!(
            "{{\"id\":\"E{i}\",\"name\":\"Entity {i}\",\"mentions\":[\"ent{i}\"]}}\n"
        ));
    }
    let records = |n: usize, tag: &str| -> String {
        (0..n)
            .map(|j| format!("{{\"surface\":\"{tag} {j}\",\"id\":\"E{}\"}}\n", j % 640))
            .collect()
    };
    fs::write(&kb, kb_text).unwrap();
    fs::write(&train, records(3973, "train")).unwrap();
    fs::write(&test, records(2439, "test")).unwrap();
    let c = load(dir.path()).unwrap();
    assert_eq!(c.entities().len(), 640);
    assert_eq!(c.train().len(), 3973);
    assert_eq!(c.test().len(), 2439);
    assert_eq!(c.test()[5].surface, "test 5");
}

#[test]
fn minimal_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let [kb, train, test] = paths(dir.path());
    fs::write(&kb, "{\"id\":\"A\",\"name\":\"Alpha\"}\n").unwrap();
    fs::write(&train, "").unwrap();
    fs::write(&test, "\n").unwrap();
    let c = load(dir.path()).unwrap();
    assert_eq!(c.entities().len(), 1);
    assert!(c.entities()[0].kb_mentions.is_empty());
    assert!(c.train().is_empty() && c.test().is_empty());
}

#[test]
fn load_errors_name_their_cause() {
    let dir = tempfile::tempdir().unwrap();
    let [kb, train, test] = paths(dir.path());
    fs::write(&kb, "{\"id\":\"A\",\"name\":\"Alpha\",\"mentions\":[\"AL\"]}\n").unwrap();
    fs::write(&train, "{\"surface\":\"alpha\",\"id\":\"A\"}\n\n{\"surface\":\"alfa\"}\n").unwrap();
    fs::write(&test, "").unwrap();
    match load(dir.path()) {
        Err(Error::Parse { line, path, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(path, train);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }

    fs::write(&train, "{\"surface\":\"alpha\",\"id\":\"Z\"}\n").unwrap();
    assert!(matches!(load(dir.path()), Err(Error::DanglingEntity { .. })));

    fs::write(&train, "{\"surface\":\"alpha\",\"id\":\"A\"}\n").unwrap();
    fs::write(&test, "{\"surface\":\"  alpha \",\"id\":\"A\"}\n{\"surface\":\"AL\",\"id\":\"A\"}\n").unwrap();
    match load(dir.path()) {
        Err(Error::SplitOverlap(s)) => assert_eq!(s, ["alpha", "AL"]),
        other => panic!("expected an overlap error, got {other:?}"),
    }

    fs::remove_file(&test).unwrap();
    assert!(load(dir.path()).unwrap_err().is_data_error());
}

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z0-9é]{1,6}"
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(
        names in prop::collection::vec(text(), 1..6),
        surfaces in prop::collection::hash_set(text(), 0..20),
        cut in 0usize..20,
    ) {
        let entities: Vec<Entity> = names
            .iter()
            .enumerate()
            .map(|(i, n)| Entity::new(format!("E{i}"), n.clone()))
            .collect();
        let mentions: Vec<MentionRecord> = surfaces
            .into_iter()
            .enumerate()
            .map(|(i, s)| MentionRecord::new(s, format!("E{}", i % entities.len())))
            .collect();
        let cut = cut.min(mentions.len());
        let c = Corpus::new(entities, mentions[..cut].to_vec(), mentions[cut..].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let [kb, train, test] = paths(dir.path());
        save_corpus(&c, &kb, &train, &test).unwrap();
        prop_assert_eq!(load(dir.path()).unwrap(), c);
    }
}
