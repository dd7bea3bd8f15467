//! TOML experiment configuration.
//!
//! Every field is optional; absent fields take the defaults of
//! [`ExperimentConfig`]. An empty file is a valid configuration.

use std::path::Path;

use thiserror::Error;

use crate::montecarlo::ExperimentConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", location(*.line, *.column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate().map_err(ConfigError::Validation)?;
    Ok(cfg)
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Canonical TOML text with every field spelled out.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration is always representable in TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let err = parse_config_str("n_estimates = 3\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert!(message.contains("bogus"), "{message}");
                assert_eq!(line, Some(2));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_config_str("[scenario]\nnum_ap = 3\n").unwrap_err();
        assert!(err.to_string().contains("num_ap"));
    }

    #[test]
    fn cluster_too_large_is_a_validation_error() {
        let err = parse_config_str("cluster_size = 13\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation(ref m) if m.contains("cluster_size")));
    }

    #[test]
    fn serialized_form_is_stable() {
        let text = "schemes = [\"RS-dTHP\"]\n[alpha_c]\npolicy = \"fixed\"\nvalue = 0.2\n";
        let once = serialize_config(&parse_config_str(text).unwrap());
        let twice = serialize_config(&parse_config_str(&once).unwrap());
        assert_eq!(once, twice);
    }
}
