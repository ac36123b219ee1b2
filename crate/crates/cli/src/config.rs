//! Settings resolution: command-line flags over the JSON config file over
//! built-in defaults.
//!
//! The config file is one JSON object. Top-level keys are the global
//! options (`seed`, `threads`, `emit`, `allow_materialize`,
//! `clamp_normalizer`) plus one object per subcommand holding that
//! subcommand's options under their flag names with `_` for `-`:
//!
//! ```json
//! { "seed": 7, "approx": { "n": 256, "budget": 0.0625 } }
//! ```

use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

const GLOBAL_KEYS: [&str; 5] = [
    "seed",
    "threads",
    "emit",
    "allow_materialize",
    "clamp_normalizer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>, commands: &[&str]) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Usage(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        let Value::Object(root) = value else {
            return Err(CliError::Usage(
                "config file must hold a JSON object".into(),
            ));
        };
        for key in root.keys() {
            if !GLOBAL_KEYS.contains(&key.as_str()) && !commands.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("unknown config key `{key}`")));
            }
        }
        Ok(Self { root })
    }

    fn global<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.root.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    pub fn section(&self, command: &str) -> Option<&Value> {
        self.root.get(command)
    }
}

/// Options shared by every subcommand, after merging.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: u64,
    /// 0 means one thread per core.
    pub threads: usize,
    pub emit: Emit,
    pub allow_materialize: bool,
    pub clamp_normalizer: Option<f64>,
}

/// Global flags as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct GlobalFlags {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub emit: Option<Emit>,
    pub allow_materialize: bool,
    pub clamp_normalizer: Option<f64>,
}

/// `SB_SEED` replaces the built-in default seed of 0; the config file and
/// `--seed` both win over it.
pub fn resolve_globals(flags: &GlobalFlags, cfg: &ConfigFile) -> CliResult<Globals> {
    let env_seed = match std::env::var("SB_SEED") {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| {
            CliError::Usage(format!("SB_SEED must be an unsigned integer, got `{s}`"))
        })?),
        Err(_) => None,
    };
    let seed = match flags.seed {
        Some(s) => s,
        None => cfg.global("seed")?.or(env_seed).unwrap_or(0),
    };
    let clamp_normalizer = match flags.clamp_normalizer {
        Some(eps) => Some(eps),
        None => cfg.global("clamp_normalizer")?,
    };
    if let Some(eps) = clamp_normalizer {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CliError::Usage(format!(
                "--clamp-normalizer must be positive, got {eps}"
            )));
        }
    }
    Ok(Globals {
        seed,
        threads: match flags.threads {
            Some(t) => t,
            None => cfg.global("threads")?.unwrap_or(0),
        },
        emit: match flags.emit {
            Some(e) => e,
            None => cfg.global("emit")?.unwrap_or_default(),
        },
        allow_materialize: flags.allow_materialize
            || cfg.global("allow_materialize")?.unwrap_or(false),
        clamp_normalizer,
    })
}

/// Overlays the flags that were given onto the command's config section and
/// deserializes the result; fields absent from both take the settings'
/// defaults.
pub fn merge<F: Serialize, S: DeserializeOwned>(
    flags: &F,
    section: Option<&Value>,
) -> CliResult<S> {
    let mut merged = match section {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => {
            return Err(CliError::Usage(
                "config section must be a JSON object".into(),
            ))
        }
    };
    let Value::Object(given) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in given {
        if !value.is_null() {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("invalid settings: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Flags {
        n: Option<usize>,
        budget: Option<f64>,
    }

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Settings {
        n: usize,
        budget: f64,
        d: usize,
    }

    impl Default for Settings {
        fn default() -> Self {
            Self {
                n: 1,
                budget: 0.5,
                d: 3,
            }
        }
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let section = serde_json::json!({ "n": 10, "budget": 0.25 });
        let flags = Flags {
            n: Some(20),
            budget: None,
        };
        let s: Settings = merge(&flags, Some(&section)).unwrap();
        assert_eq!(
            s,
            Settings {
                n: 20,
                budget: 0.25,
                d: 3
            }
        );
    }

    #[test]
    fn unknown_config_fields_are_usage_errors() {
        let section = serde_json::json!({ "nn": 10 });
        let flags = Flags {
            n: None,
            budget: None,
        };
        let err = merge::<_, Settings>(&flags, Some(&section)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
