//! Replays the checked-in fuzz seeds through the same checks as the fuzz
//! targets, so the corpus stays meaningful without a fuzzing toolchain.

use std::path::{Path, PathBuf};

use qsl_cli::parse_config_bytes;
use qsl_cli::problem::prepare;
use qsl_core::bounds::BoundKind;
use qsl_core::verify::Suite;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn expect_invalid(path: &Path) -> bool {
    let name = path.file_name().unwrap().to_str().unwrap();
    name.contains("truncated") || name.contains("unknown_field")
}

#[test]
fn parse_config_seeds() {
    for (path, data) in seeds("parse_config") {
        match parse_config_bytes(&data) {
            Ok(cfg) => {
                assert!(!expect_invalid(&path), "{} parsed", path.display());
                let json = serde_json::to_vec(&cfg).unwrap();
                assert_eq!(parse_config_bytes(&json).unwrap(), cfg, "{}", path.display());
            }
            Err(e) => assert!(expect_invalid(&path), "{}: {e}", path.display()),
        }
    }
}

#[test]
fn prepare_problem_seeds() {
    let mut prepared = 0;
    for (path, data) in seeds("prepare_problem") {
        let Ok(cfg) = parse_config_bytes(&data) else {
            continue;
        };
        let steps = cfg.grid.and_then(|g| g.steps).unwrap_or(32).min(32);
        let Ok(cfg) = cfg.with_overrides(Some(steps), None, None) else {
            continue;
        };
        if let Ok(p) = prepare(&cfg) {
            assert_eq!(p.grid.len(), steps + 1, "{}", path.display());
            prepared += 1;
        }
    }
    assert!(prepared >= 5);
}

#[test]
fn name_seeds() {
    let mut known = 0;
    for (_, data) in seeds("names") {
        let s = std::str::from_utf8(&data).unwrap();
        if let Some(k) = BoundKind::from_name(s) {
            assert_eq!(k.name(), s);
            known += 1;
        }
        if let Some(suite) = Suite::from_name(s) {
            assert_eq!(suite.name(), s);
            known += 1;
        }
    }
    assert_eq!(known, BoundKind::ALL.len() + Suite::ALL.len());
}
