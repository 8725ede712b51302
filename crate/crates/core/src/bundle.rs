//! Canonical `case.json` bundle format.
//!
//! A bundle is a directory (or archive) holding `case.json` and a `media/`
//! folder. The JSON document is the case itself plus a `format_version`
//! field, pretty-printed with sorted keys so identical cases produce
//! byte-identical files.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::case::{CaseDefinition, MediaRef, Violation};

pub const FORMAT_VERSION: u64 = 1;
pub const CASE_FILE: &str = "case.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(String),
    #[error("invalid case: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("missing media file(s): {}", .0.join(", "))]
    MissingMedia(Vec<String>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serializes a case into canonical bundle text.
pub fn serialize_case(case: &CaseDefinition) -> String {
    let mut value = serde_json::to_value(case).expect("case serializes to JSON");
    if let Value::Object(map) = &mut value {
        map.insert("format_version".to_string(), Value::from(FORMAT_VERSION));
    }
    // serde_json's default map is ordered, so keys come out sorted.
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// Parses and validates bundle text.
pub fn parse_case_bundle(text: &str) -> Result<CaseDefinition, BundleError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| BundleError::Malformed(e.to_string()))?;
    let Value::Object(map) = &mut value else {
        return Err(BundleError::Malformed("top level is not an object".into()));
    };
    match map.remove("format_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(FORMAT_VERSION) => {}
        Some(other) => return Err(BundleError::UnsupportedVersion(other.to_string())),
        None => return Err(BundleError::Malformed("missing format_version".into())),
    }
    let case: CaseDefinition =
        serde_json::from_value(value).map_err(|e| BundleError::Malformed(e.to_string()))?;
    let violations = case.validate();
    if violations.is_empty() {
        Ok(case)
    } else {
        Err(BundleError::Invalid(violations))
    }
}

/// All media references of a case, problem first, then cards in order.
pub fn media_refs(case: &CaseDefinition) -> impl Iterator<Item = &MediaRef> {
    case.problem
        .media
        .iter()
        .chain(case.actions.iter().flat_map(|c| c.media.iter()))
}

/// Non-link media paths for which `exists` returns false, deduplicated in
/// first-seen order.
pub fn missing_media(case: &CaseDefinition, exists: impl Fn(&str) -> bool) -> Vec<String> {
    let mut missing: Vec<String> = Vec::new();
    for m in media_refs(case).filter(|m| !m.is_link()) {
        if !exists(&m.path) && !missing.contains(&m.path) {
            missing.push(m.path.clone());
        }
    }
    missing
}

/// Reads and validates a bundle directory, including media presence.
pub fn read_bundle_dir(dir: &Path) -> Result<CaseDefinition, BundleError> {
    let text = fs::read_to_string(dir.join(CASE_FILE))?;
    let case = parse_case_bundle(&text)?;
    let missing = missing_media(&case, |p| dir.join(p).is_file());
    if missing.is_empty() {
        Ok(case)
    } else {
        Err(BundleError::MissingMedia(missing))
    }
}

/// Reads a bundle from either a directory or a path to its `case.json`.
pub fn read_bundle(path: &Path) -> Result<CaseDefinition, BundleError> {
    if path.is_dir() {
        read_bundle_dir(path)
    } else {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let text = fs::read_to_string(path)?;
        let case = parse_case_bundle(&text)?;
        let missing = missing_media(&case, |p| dir.join(p).is_file());
        if missing.is_empty() {
            Ok(case)
        } else {
            Err(BundleError::MissingMedia(missing))
        }
    }
}

/// Writes `case.json` and copies referenced media from `media_source` (a
/// directory whose layout mirrors the bundle-relative `media/...` paths).
pub fn write_bundle_dir(
    case: &CaseDefinition,
    out_dir: &Path,
    media_source: Option<&Path>,
) -> io::Result<()> {
    fs::create_dir_all(out_dir.join("media"))?;
    fs::write(out_dir.join(CASE_FILE), serialize_case(case))?;
    if let Some(src) = media_source {
        for m in media_refs(case).filter(|m| !m.is_link()) {
            let to = out_dir.join(&m.path);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(src.join(&m.path), to)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::*;
    use crate::testing::minimal_case;

    #[test]
    fn minimal_round_trip() {
        let case = minimal_case();
        let text = serialize_case(&case);
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("\"look\""));
        let back = parse_case_bundle(&text).unwrap();
        assert_eq!(back, case);
        assert_eq!(serialize_case(&back), text);
    }

    #[test]
    fn keys_are_sorted() {
        let text = serialize_case(&minimal_case());
        let top: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort();
        assert_eq!(top, sorted);
        assert!(top.contains(&"format_version"));
    }

    #[test]
    fn undeclared_delta_item_is_named() {
        let mut case = minimal_case();
        case.actions[0].score_deltas.insert("speed".into(), 1.0);
        let err = parse_case_bundle(&serialize_case(&case)).unwrap_err();
        let BundleError::Invalid(v) = &err else {
            panic!("{err}")
        };
        assert_eq!(v[0].invariant, Invariant::UndeclaredItem);
        assert_eq!(v[0].subject, "speed");
        assert!(err.to_string().contains("speed"));
    }

    #[test]
    fn prerequisite_cycle_is_named() {
        let mut case = minimal_case();
        let mut b = case.actions[0].clone();
        b.id = "b".into();
        case.actions[0].id = "a".into();
        case.actions[0].prerequisites.insert("b".into());
        b.prerequisites.insert("a".into());
        case.actions.push(b);
        let err = parse_case_bundle(&serialize_case(&case)).unwrap_err();
        assert!(err.to_string().contains("a -> b -> a"), "{err}");
    }

    #[test]
    fn rejects_wrong_version_and_junk() {
        let text = serialize_case(&minimal_case())
            .replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            parse_case_bundle(&text),
            Err(BundleError::UnsupportedVersion(_))
        ));
        assert!(matches!(
            parse_case_bundle("[1,2]"),
            Err(BundleError::Malformed(_))
        ));
        let text = serialize_case(&minimal_case()).replace("\"help\"", "\"helpz\"");
        assert!(matches!(
            parse_case_bundle(&text),
            Err(BundleError::Malformed(_))
        ));
    }

    #[test]
    fn media_presence() {
        let mut case = minimal_case();
        case.actions[0].media.push(MediaRef {
            kind: MediaKind::Image,
            path: "media/ecg.png".into(),
            caption: None,
        });
        case.actions[0].media.push(MediaRef {
            kind: MediaKind::WebLink,
            path: "https://example.org/x".into(),
            caption: None,
        });
        assert_eq!(missing_media(&case, |_| false), vec!["media/ecg.png"]);
        assert!(missing_media(&case, |p| p == "media/ecg.png").is_empty());
    }

    #[test]
    fn media_paths_cannot_escape() {
        let mut case = minimal_case();
        case.problem.media.push(MediaRef {
            kind: MediaKind::Image,
            path: "media/../secret.png".into(),
            caption: None,
        });
        let v = case.validate();
        assert_eq!(v[0].invariant, Invariant::MediaPath);
    }
}
