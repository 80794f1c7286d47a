//! Layered run configuration: built-in defaults, an optional TOML file with
//! flat sections, then `section.key=value` overrides from the command line.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[section]` (or of the section header when
/// `key` is empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current != section || key.is_empty() {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError {
        origin: "--set".into(),
        line: None,
        key: Some(spec.to_string()),
        message,
    };
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| err("expected section.key=value".into()))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| err("key must be qualified as section.key".into()))?;
    let slot = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match slot {
        Value::Table(t) => {
            t.insert(key.to_string(), parse_value(raw.trim()));
            Ok(())
        }
        _ => Err(err(format!("`{section}` is not a section"))),
    }
}

/// Builds the configuration for one command.
///
/// `defaults` is the command's built-in TOML. Errors carry the file line
/// of the offending key when it can be found.
pub fn load<T: DeserializeOwned>(
    defaults: &str,
    file: Option<&Path>,
    overrides: &[String],
) -> Result<T, ConfigError> {
    let mut table: Table = defaults.parse().expect("built-in defaults are valid TOML");
    let mut text = None;
    let origin = file
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<defaults>".into());
    if let Some(path) = file {
        let body = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: origin.clone(),
            line: None,
            key: None,
            message: e.to_string(),
        })?;
        let user: Table = body.parse().map_err(|e: toml::de::Error| ConfigError {
            origin: origin.clone(),
            line: e.span().map(|s| body[..s.start].lines().count().max(1)),
            key: None,
            message: e.message().to_string(),
        })?;
        for (name, v) in &user {
            if !table.contains_key(name) {
                return Err(ConfigError {
                    origin: origin.clone(),
                    line: locate(&body, name, ""),
                    key: Some(name.clone()),
                    message: "unknown section".into(),
                });
            }
            if !v.is_table() {
                return Err(ConfigError {
                    origin: origin.clone(),
                    line: None,
                    key: Some(name.clone()),
                    message: "top-level keys must be sections".into(),
                });
            }
        }
        merge(&mut table, user);
        text = Some(body);
    }
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let dotted = e.path().to_string();
        let message = e.inner().message().to_string();
        let (section, key) = dotted.split_once('.').unwrap_or((dotted.as_str(), ""));
        let line = text.as_deref().and_then(|t| locate(t, section, key));
        ConfigError {
            origin: origin.clone(),
            line,
            key: Some(dotted.clone()),
            message,
        }
    })
}

/// Validation failure on an already parsed value.
pub fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin: "config".into(),
        line: None,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::io::Write;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Grid {
        points: usize,
        lo: f64,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Cfg {
        grid: Grid,
    }

    const DEFAULTS: &str = "[grid]\npoints = 10\nlo = 0.5\n";

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn layers_in_order() {
        let f = file("[grid]\npoints = 20\n");
        let c: Cfg = load(DEFAULTS, Some(f.path()), &["grid.lo=2".into()]).unwrap();
        assert_eq!(c.grid.points, 20);
        assert_eq!(c.grid.lo, 2.0);
    }

    #[test]
    fn syntax_error_has_line() {
        let f = file("[grid]\npoints = 20\nlo = = 3\n");
        let e = load::<Cfg>(DEFAULTS, Some(f.path()), &[]).unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn type_error_names_key_and_line() {
        let f = file("# comment\n[grid]\n\npoints = \"many\"\n");
        let e = load::<Cfg>(DEFAULTS, Some(f.path()), &[]).unwrap_err();
        assert_eq!(e.line, Some(4), "{e}");
        assert!(e.to_string().contains("points"), "{e}");
    }

    #[test]
    fn unknown_field_is_located() {
        let f = file("[grid]\npoints = 4\nwidth = 3\n");
        let e = load::<Cfg>(DEFAULTS, Some(f.path()), &[]).unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
        assert!(e.to_string().contains("width"));
    }

    #[test]
    fn unknown_section_rejected() {
        let f = file("[grid]\npoints = 4\n\n[plot]\nx = 1\n");
        let e = load::<Cfg>(DEFAULTS, Some(f.path()), &[]).unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn malformed_override() {
        assert!(load::<Cfg>(DEFAULTS, None, &["points=3".into()]).is_err());
        assert!(load::<Cfg>(DEFAULTS, None, &["grid.points".into()]).is_err());
    }

    #[test]
    fn override_values_are_typed() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(
            parse_value("[1, 2]"),
            Value::Array(vec![Value::Integer(1), Value::Integer(2)])
        );
        assert_eq!(parse_value("log"), Value::String("log".into()));
    }
}
