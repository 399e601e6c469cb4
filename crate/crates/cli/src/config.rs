//! `--config FILE`: plain `key = value` lines turned into extra flags.
//!
//! Keys are long flag names without the dashes. Blank lines and lines
//! starting with `#` are ignored. A key already given on the command line is
//! skipped, so flags always win. Switches take `true` or `false`.

use std::fs;

/// Flags that take no value.
const SWITCHES: &[&str] = &["rational", "paper-centering", "exact", "curve"];

pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut out = args.clone();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key = value", lineno + 1))?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!("{path}:{}: invalid key {key:?}", lineno + 1));
        }
        let flag = format!("--{key}");
        if given(&args, &flag) {
            continue;
        }
        if SWITCHES.contains(&key) {
            match value {
                "true" => out.push(flag),
                "false" => {}
                _ => return Err(format!("{path}:{}: {key} takes true or false", lineno + 1)),
            }
        } else {
            out.push(format!("{flag}={value}"));
        }
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Result<Option<String>, String> {
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--config=") {
            return Ok(Some(v.to_string()));
        }
        if a == "--config" {
            return args
                .get(i + 1)
                .cloned()
                .map(Some)
                .ok_or_else(|| "--config needs a file".to_string());
        }
    }
    Ok(None)
}

fn given(args: &[String], flag: &str) -> bool {
    args.iter()
        .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}
