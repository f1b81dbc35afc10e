//! Replays the checked-in fuzz corpus through the fuzz targets' invariants.

use std::path::PathBuf;

use datastop::config::{build_experiment, parse_config, ConfigEntries, Preset};
use datastop::error::Error;
use datastop::returns_io::{format_returns, parse_returns};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus {}", dir.display());
    out
}

#[test]
fn parse_returns_corpus() {
    for (name, text) in corpus("parse_returns") {
        if let Ok(path) = parse_returns(&text) {
            assert!(path.values().iter().all(|z| z.is_finite() && *z > 0.0), "{name}");
            assert_eq!(
                parse_returns(&format_returns(path.values())).unwrap().values(),
                path.values(),
                "{name}"
            );
        }
    }
}

#[test]
fn parse_config_corpus() {
    for (name, text) in corpus("parse_config") {
        match parse_config(&text) {
            Ok(entries) => assert!(entries.len() <= text.lines().count(), "{name}"),
            Err(e) => assert!(e.to_string().starts_with("configuration error: "), "{name}"),
        }
    }
}

#[test]
fn build_experiment_corpus() {
    for (name, text) in corpus("build_experiment") {
        let (head, body) = text.split_once('\n').unwrap_or((&text, ""));
        let overrides: Vec<String> = head.split(';').filter(|s| !s.is_empty()).map(String::from).collect();
        let file = parse_config(body).unwrap_or_else(|_| ConfigEntries::default());
        let preset = if body.len() % 2 == 0 { Some(Preset::Desk) } else { None };
        match build_experiment(&file, &overrides, None, None, preset) {
            Ok(config) => {
                config.validate().unwrap();
                config.gain_spec().unwrap();
            }
            Err(Error::Config(_)) => {}
            Err(e) => panic!("{name}: unexpected error kind: {e:?}"),
        }
    }
}
