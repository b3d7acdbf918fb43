//! Replays the checked-in fuzz corpus through the parsers.

use std::path::PathBuf;

use leoroute::segmentation::parse_plan_dump;
use leoroute::topology::parse_edge_list;

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty());
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn config_seeds() {
    for (name, text) in corpus("parse_config") {
        let result = leoroute::parse_config(&text);
        if name.starts_with("invalid") {
            assert!(result.is_err(), "{name}");
        } else {
            result.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn plan_dump_seeds() {
    for (name, text) in corpus("parse_plan_dump") {
        parse_plan_dump(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn edge_list_seeds() {
    for (name, text) in corpus("parse_edge_list") {
        assert!(!parse_edge_list(&text)
            .unwrap_or_else(|e| panic!("{name}: {e}"))
            .is_empty());
    }
}
