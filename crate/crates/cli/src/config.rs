//! Flat `key = value` config files merged under command-line flags.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Parses `key = value` lines. `#` starts a comment line; values may be
/// wrapped in double quotes. Keys are flag names without the leading `--`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigError::Syntax { line: i + 1, message };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') || key.starts_with('-') {
            return Err(err(format!("invalid key `{key}`")));
        }
        if key == "config" {
            return Err(err("config files cannot include other config files".into()));
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        } else if value.contains('"') {
            return Err(err(format!("unbalanced quote in `{value}`")));
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        out.push((key, value.to_string()));
    }
    Ok(out)
}

/// Appends config entries as flags unless the same flag is already given.
/// `true` becomes a bare switch and `false` is dropped.
pub fn merge_into_args(args: &mut Vec<String>, entries: &[(String, String)]) {
    for (key, value) in entries {
        let flag = format!("--{key}");
        let present = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        match value.as_str() {
            "true" => args.push(flag),
            "false" => {}
            _ => {
                args.push(flag);
                args.push(value.clone());
            }
        }
    }
}
