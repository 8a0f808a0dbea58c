//! Flat `key=value` config files. Each line becomes `--key=value` right after
//! the subcommand, so flags given on the command line take precedence.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::CliError;

/// Location of `--config` among raw arguments, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got '{line}'", k + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", k + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Turns config entries into flags for `subcommand`, rejecting unknown keys.
fn entries_to_flags(subcommand: &str, entries: &[(String, String)]) -> Result<Vec<OsString>, CliError> {
    let root = Cli::command();
    let sub = root
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand '{subcommand}'")))?;
    let mut flags = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key '{key}' for {subcommand}")))?;
        if arg.get_action().takes_values() {
            flags.push(format!("--{key}={value}").into());
        } else {
            match value.as_str() {
                "true" => flags.push(format!("--{key}").into()),
                "false" => {}
                other => return Err(CliError::Usage(format!("config key '{key}' expects true or false, got '{other}'"))),
            }
        }
    }
    Ok(flags)
}

/// Raw arguments with the config file (if any) spliced in after the subcommand.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let entries = parse_config(&text)?;
    let root = Cli::command();
    let names: Vec<&str> = root.get_subcommands().map(|c| c.get_name()).collect();
    let pos = args
        .iter()
        .skip(1)
        .position(|a| names.contains(&a.to_string_lossy().as_ref()))
        .map(|p| p + 1)
        .ok_or_else(|| CliError::Usage("a subcommand is required".into()))?;
    let sub = args[pos].to_string_lossy().into_owned();
    let flags = entries_to_flags(&sub, &entries)?;
    let mut out = Vec::with_capacity(args.len() + flags.len());
    out.push(args[0].clone());
    out.push(args[pos].clone());
    out.extend(flags);
    out.extend(args[1..pos].iter().cloned());
    out.extend(args[pos + 1..].iter().cloned());
    Ok(out)
}
