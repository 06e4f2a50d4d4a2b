//! Layered configuration.
//!
//! Keys are resolved from, in increasing priority: a named preset, the config
//! file, `GNUM_<KEY>` environment variables, `--set key=value` flags and the
//! global `--seed`. A file that names no preset (and no `--preset` flag) must
//! spell out every key.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use super::CliError;

/// Prefix of environment overrides: `GNUM_KAPPA2=2` sets `kappa2`.
pub const ENV_PREFIX: &str = "GNUM_";

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A literal as written on a command line: TOML syntax when it parses
/// (`2`, `0.5`, `true`, `[32, 32]`), a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn to_table<T: Serialize>(value: &T) -> Table {
    match Value::try_from(value).expect("config serializes") {
        Value::Table(t) => t,
        _ => unreachable!("configs are structs"),
    }
}

/// Overrides applied on top of a file or preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub env: Vec<(String, String)>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, table: &mut Table, known: &Table) -> Result<(), CliError> {
        for key in known.keys() {
            let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
            if let Some((_, v)) = self.env.iter().find(|(k, _)| *k == var) {
                table.insert(key.clone(), parse_value(v));
            }
        }
        for kv in &self.sets {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{kv}`")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        if let Some(seed) = self.seed {
            table.insert("seed".into(), Value::Integer(seed as i64));
        }
        Ok(())
    }
}

/// Resolve a config struct. `file` is the parsed config file, if any; a
/// `preset` key inside it wins over `preset_flag`. Without a file the
/// `fallback` preset is used. `what` names the config in error messages.
pub fn resolve<T: Serialize + DeserializeOwned>(
    what: &str,
    file: Option<Table>,
    preset_flag: Option<&str>,
    fallback: &str,
    presets: impl Fn(&str) -> Result<T, String>,
    overrides: &Overrides,
) -> Result<T, CliError> {
    let reference = to_table(&presets(fallback).map_err(CliError::Config)?);
    let has_file = file.is_some();
    let mut file = file.unwrap_or_default();
    let preset = match file.remove("preset") {
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(CliError::Config(format!("{what}: `preset` must be a string, got {other}"))),
        None => preset_flag.map(str::to_string).or_else(|| (!has_file).then(|| fallback.to_string())),
    };
    let mut table = match &preset {
        Some(name) => to_table(&presets(name).map_err(|e| CliError::Config(format!("{what}: {e}")))?),
        None => Table::new(),
    };
    table.extend(file);
    overrides.apply(&mut table, &reference)?;
    Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        CliError::Config(format!("{what}: {msg}"))
    })
}
