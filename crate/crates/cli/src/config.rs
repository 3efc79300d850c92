//! Loading experiment configurations and applying `KEY=VALUE` overrides.

use std::path::Path;

use jprc_core::baselines::GridSpec;
use jprc_core::harness::ExperimentConfig;
use jprc_core::ScenarioConfig;
use serde_json::{Map, Value};

use crate::CliError;

/// Short names accepted besides full dotted paths and bare field names.
const ALIASES: &[(&str, &str)] = &[
    ("R_min", "scenario_config.min_rate"),
    ("scheme", "scheme_list"),
    ("seed", "base_seed"),
    ("snapshots", "num_snapshots"),
];

/// Sections searched for a bare field name, in order.
const SECTIONS: &[&str] = &["scenario_config", "jprc_params", "grid"];

/// Every configurable key, as a fully populated configuration.
fn template() -> Value {
    let cfg = ExperimentConfig {
        grid: Some(GridSpec { per_variable_max: Some(Vec::new()), ..GridSpec::new(1.0) }),
        figure: Some(0),
        ..ExperimentConfig::new(ScenarioConfig::default())
    };
    serde_json::to_value(cfg).expect("configuration serializes")
}

fn lookup<'a>(value: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(value, |v, key| v.as_object()?.get(*key))
}

/// Resolves an override key to a path into the configuration.
pub fn resolve_key(key: &str) -> Result<Vec<String>, CliError> {
    let template = template();
    let key = ALIASES.iter().find(|(alias, _)| *alias == key).map_or(key, |(_, path)| path);
    let split = |k: &str| k.split('.').map(str::to_string).collect::<Vec<_>>();
    if key.contains('.') {
        let path: Vec<&str> = key.split('.').collect();
        if lookup(&template, &path).is_some() {
            return Ok(split(key));
        }
    } else if template.get(key).is_some() {
        return Ok(vec![key.to_string()]);
    } else if let Some(section) = SECTIONS.iter().find(|s| lookup(&template, &[s, key]).is_some()) {
        return Ok(vec![section.to_string(), key.to_string()]);
    }
    Err(CliError::Config(format!("unknown override key `{key}`")))
}

fn parse_value(path: &[String], raw: &str) -> Value {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if path.len() == 1 && path[0] == "scheme_list" {
        if let Value::String(s) = &value {
            return match s.to_ascii_lowercase().as_str() {
                "both" => serde_json::json!(["NOMA", "OFDMA"]),
                _ => Value::Array(vec![Value::String(s.to_ascii_uppercase())]),
            };
        }
    }
    value
}

/// Applies one `KEY=VALUE` override to a configuration document.
pub fn apply_override(doc: &mut Value, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form KEY=VALUE")))?;
    let path = resolve_key(key.trim())?;
    let value = parse_value(&path, raw.trim());
    let mut node = doc;
    for (n, part) in path.iter().enumerate() {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let map = node.as_object_mut().expect("object");
        if n + 1 == path.len() {
            map.insert(part.clone(), value);
            return Ok(());
        }
        node = map.entry(part.clone()).or_insert(Value::Null);
    }
    unreachable!("override paths are never empty")
}

/// Reads a configuration file (or starts from the built-in defaults), applies
/// the overrides in order and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(ExperimentConfig::new(ScenarioConfig::default())).expect("configuration serializes"),
    };
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    let config: ExperimentConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}
