//! `--config file.json`: a flat JSON object whose entries become flags
//! unless the same flag was given on the command line.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, Result};

/// Removes `--config PATH` / `--config=PATH` from `argv`.
fn take_config(argv: &mut Vec<OsString>) -> Result<Option<OsString>> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Usage("--config requires a path".into()));
            }
            found = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            found = Some(OsString::from(path));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

fn given(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

fn scalar(key: &str, v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::Usage(format!(
            "config key `{key}` must hold a string, number, boolean or list"
        ))),
    }
}

/// Flags contributed by the config object, skipping those already in `argv`.
pub fn config_flags(config: &Value, argv: &[OsString]) -> Result<Vec<OsString>> {
    let Value::Object(map) = config else {
        return Err(CliError::Usage("config file must contain a JSON object".into()));
    };
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        if given(argv, &flag) {
            continue;
        }
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(|v| scalar(key, v)).collect::<Result<_>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(key, v)?.into());
            }
        }
    }
    Ok(out)
}

/// Expands a `--config` file into ordinary flags appended after the
/// explicit ones.
pub fn expand(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config(&mut argv)? else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let extra = config_flags(&value, &argv)?;
    argv.extend(extra);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn explicit_flags_win() {
        let cfg = serde_json::json!({"seed": 3, "k": 5, "timing": true, "verbose": false, "splits": [0.8, 0.1, 0.1]});
        let argv = os(&["gap", "generate", "--k=3"]);
        let flags = config_flags(&cfg, &argv).unwrap();
        let flags: Vec<String> = flags.iter().map(|f| f.to_string_lossy().into_owned()).collect();
        assert_eq!(flags, ["--seed", "3", "--splits", "0.8,0.1,0.1", "--timing"]);
    }

    #[test]
    fn config_flag_is_extracted() {
        let mut argv = os(&["gap", "solve", "--config", "c.json", "--seed", "1"]);
        assert_eq!(take_config(&mut argv).unwrap(), Some(OsString::from("c.json")));
        assert_eq!(argv, os(&["gap", "solve", "--seed", "1"]));
        let mut argv = os(&["gap", "--config"]);
        assert!(take_config(&mut argv).is_err());
        assert!(config_flags(&serde_json::json!([1]), &[]).is_err());
        assert!(config_flags(&serde_json::json!({"a": {"b": 1}}), &[]).is_err());
    }
}
