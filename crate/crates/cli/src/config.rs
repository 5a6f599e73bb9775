//! Layered configuration: built-in defaults, then a JSON file given by
//! `--config`, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Reads a configuration file. A run manifest is accepted too, in which
/// case its resolved configuration is used.
pub fn load(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("config {} is not valid JSON: {e}", path.display()))
    })?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Usage(format!(
            "config {} must hold a JSON object",
            path.display()
        )));
    };
    if map.contains_key("subcommand") {
        if let Some(Value::Object(inner)) = map.remove("config") {
            return Ok(inner);
        }
    }
    Ok(map)
}

/// Merges `defaults`, the optional config file and the non-null entries of
/// `flags`, later layers winning, and deserializes the union.
pub fn resolve<T: DeserializeOwned>(
    defaults: Value,
    file: Option<&Path>,
    flags: &impl Serialize,
) -> CliResult<T> {
    let Value::Object(mut merged) = defaults else {
        unreachable!("defaults are always an object")
    };
    if let Some(path) = file {
        merged.extend(load(path)?);
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        merged.extend(f.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("configuration: {e}")))
}

/// Parses `3..10`, `3..=10`, `5` or `3,5,7` into a list of dimensions.
pub fn parse_dims(spec: &str) -> CliResult<Vec<u32>> {
    let bad = || CliError::Usage(format!("cannot parse dimension range {spec:?}"));
    let num = |s: &str| s.trim().parse::<u32>().map_err(|_| bad());
    let dims = if let Some((lo, hi)) = spec.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        spec.split(',').map(num).collect::<CliResult<Vec<_>>>()?
    };
    if let Some(d) = dims.iter().find(|&&d| d < 3) {
        return Err(CliError::Usage(format!(
            "dimension must be at least 3, got {d}"
        )));
    }
    Ok(dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Serialize)]
    struct Flags {
        a: Option<f64>,
        b: Option<u32>,
    }

    #[derive(Deserialize, Debug, PartialEq)]
    struct Resolved {
        a: f64,
        b: u32,
        c: String,
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"a": 2.0, "b": 7}"#).unwrap();
        let r: Resolved = resolve(
            json!({"a": 1.0, "b": 1, "c": "x"}),
            Some(&path),
            &Flags {
                a: Some(3.0),
                b: None,
            },
        )
        .unwrap();
        assert_eq!(
            r,
            Resolved {
                a: 3.0,
                b: 7,
                c: "x".into()
            }
        );
    }

    #[test]
    fn missing_values_are_usage_errors() {
        let r: CliResult<Resolved> = resolve(
            json!({"c": "x"}),
            None,
            &Flags {
                a: None,
                b: Some(1),
            },
        );
        assert!(matches!(r, Err(CliError::Usage(_))));
    }

    #[test]
    fn manifests_are_accepted_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, r#"{"subcommand": "solve", "config": {"a": 5.0}}"#).unwrap();
        assert_eq!(load(&path).unwrap().get("a"), Some(&json!(5.0)));
    }

    #[test]
    fn dimension_ranges() {
        assert_eq!(parse_dims("3..10").unwrap().len(), 8);
        assert_eq!(parse_dims("3..=5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_dims("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_dims("2").is_err());
        assert!(parse_dims("5..3").is_err());
        assert!(parse_dims("x").is_err());
    }
}
