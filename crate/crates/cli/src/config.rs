//! Optional `key = value` run files mirroring the command-line flags.
//!
//! ```text
//! # simulate.conf
//! d = 2
//! shots = 10000
//! offsets = 0.2,-0.1
//! per-trial = true
//! ```
//!
//! Keys are flag names without the leading `--` (`_` and `-` are
//! interchangeable). File values are spliced in front of the user's own
//! flags, so a flag given on the command line wins.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

pub fn parse(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got '{line}'", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Flags for a parsed file; `key = true` becomes a bare flag and
/// `key = false` is dropped.
pub fn to_flags(pairs: &[(String, String)]) -> Vec<String> {
    let mut flags = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => flags.push(format!("--{k}={v}")),
        }
    }
    flags
}

/// Removes `--config PATH` / `--config=PATH` from `argv` and returns it.
pub fn take_config_flag(argv: &mut Vec<String>) -> anyhow::Result<Option<PathBuf>> {
    let mut found = None;
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--config" {
            if i + 1 >= argv.len() {
                bail!("--config needs a file path");
            }
            found = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// `argv` (program name first) with the file's flags inserted right after
/// the subcommand.
pub fn merge(mut argv: Vec<String>, file: Option<&Path>) -> anyhow::Result<Vec<String>> {
    let Some(path) = file else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let flags = to_flags(&parse(&text)?);
    let pos = subcommand_index(&argv).map(|p| p + 1).unwrap_or(argv.len());
    let tail = argv.split_off(pos);
    argv.extend(flags);
    argv.extend(tail);
    Ok(argv)
}

/// Global flags that consume the following token.
const VALUE_FLAGS: &[&str] = &["--out-dir"];

fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if VALUE_FLAGS.contains(&a) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}
