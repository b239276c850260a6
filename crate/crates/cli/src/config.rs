//! Config-file overlay for the CLI.
//!
//! Any subcommand accepts `--config FILE`, a line-oriented `key = value`
//! file whose keys are long flag names without the dashes. Values from the
//! file are spliced into the argument list ahead of the user's own flags,
//! and keys the user also passed explicitly are dropped, so the precedence
//! is: explicit flag > config file > built-in default. Unknown keys fail
//! flag validation exactly like an unknown flag would.

use std::path::PathBuf;

/// Extract `--config FILE` (or `--config=FILE`) from raw args, read the
/// file, and splice its entries in after the subcommand tokens. Returns the
/// rewritten args and the config path when one was applied.
pub fn apply_overlay(raw: Vec<String>) -> Result<(Vec<String>, Option<PathBuf>), String> {
    let mut args = raw;
    let mut config_path: Option<PathBuf> = None;

    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config requires a file path".into());
            }
            args.remove(i);
            config_path = Some(PathBuf::from(args.remove(i)));
        } else if let Some(rest) = args[i].strip_prefix("--config=") {
            config_path = Some(PathBuf::from(rest));
            args.remove(i);
        } else {
            i += 1;
        }
    }

    let Some(path) = config_path else {
        return Ok((args, None));
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let entries = parse_entries(&text)?;

    // Insert after the program name and any leading subcommand words.
    let mut insert_at = 1;
    while insert_at < args.len() && !args[insert_at].starts_with('-') {
        insert_at += 1;
    }

    // Flags the user passed explicitly win over the config file.
    let explicit: Vec<String> = args[insert_at..]
        .iter()
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut spliced: Vec<String> = Vec::new();
    for (key, value) in entries {
        let flag = format!("--{key}");
        if explicit.contains(&flag) {
            continue;
        }
        match value.as_str() {
            "true" => spliced.push(flag),
            "false" => {}
            _ => {
                spliced.push(flag);
                spliced.push(value);
            }
        }
    }
    args.splice(insert_at..insert_at, spliced);
    Ok((args, Some(path)))
}

fn parse_entries(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value, got {line:?}", i + 1))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(format!("config line {}: empty key or value", i + 1));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}
