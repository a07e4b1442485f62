//! `key=value` config files merged under explicit flags.

use std::fs;
use std::path::Path;

/// Read `key=value` lines; blank lines and `#` comments are skipped.
pub fn read(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected key=value", path.display(), k + 1));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn has_flag(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    args.iter()
        .any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

/// Insert config entries missing from `args` right after the subcommand name.
pub fn merge(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = read(Path::new(&path))?;
    let Some(pos) = args.iter().position(|a| subcommands.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut extra = Vec::new();
    for (key, value) in entries {
        if has_flag(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => extra.push(format!("--{key}={value}")),
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, extra);
    Ok(out)
}
