//! `key = value` configuration files that mirror command-line flags.
//!
//! Entries are spliced into argv right after the subcommand name, so any flag
//! given on the command line comes later and wins.

use std::fs;

use clap::Command;

fn config_path(argv: &[String]) -> Result<Option<(usize, usize, String)>, String> {
    for (i, a) in argv.iter().enumerate().skip(1) {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return match argv.get(i + 1) {
                Some(v) => Ok(Some((i, 2, v.clone()))),
                None => Err("--config needs a path".into()),
            };
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Ok(Some((i, 1, v.to_string())));
        }
    }
    Ok(None)
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}:{}: expected `key = value`", n + 1))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(format!("{origin}:{}: empty key", n + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Returns argv with the config file's entries inserted after the
/// subcommand. Unknown keys are usage errors.
pub fn expand(argv: Vec<String>, cmd: &Command) -> Result<Vec<String>, String> {
    let Some((at, width, path)) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let entries = parse_config(&text, &path)?;
    let mut argv = argv;
    argv.drain(at..at + width);

    let Some((pos, sub)) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a).map(|s| (i, s)))
    else {
        // no subcommand: let clap report it
        return Ok(argv);
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| format!("{path}: `{key}` is not a flag of `{}`", sub.get_name()))?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}"));
            injected.push(value);
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => return Err(format!("{path}: `{key}` takes true or false, got {value:?}")),
            }
        }
    }
    argv.splice(pos + 1..pos + 1, injected);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cmd() -> Command {
        Command::new("t").subcommand(
            Command::new("train")
                .arg(Arg::new("epochs").long("epochs"))
                .arg(Arg::new("plant").long("plant").action(ArgAction::SetTrue)),
        )
    }

    fn argv(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let got = parse_config("# c\n\nepochs = 5\n--seed=2\n", "f").unwrap();
        assert_eq!(got, vec![("epochs".into(), "5".into()), ("seed".into(), "2".into())]);
        assert!(parse_config("oops\n", "f").unwrap_err().contains("f:1"));
    }

    #[test]
    fn entries_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "epochs = 5\nplant = true\n").unwrap();
        let p = path.to_str().unwrap();
        let out = expand(argv(&["m", "--config", p, "train", "--epochs", "9"]), &cmd()).unwrap();
        assert_eq!(out, argv(&["m", "train", "--epochs", "5", "--plant", "--epochs", "9"]));
        let out = expand(argv(&["m", "train", &format!("--config={p}")]), &cmd()).unwrap();
        assert_eq!(out, argv(&["m", "train", "--epochs", "5", "--plant"]));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "nope = 1\n").unwrap();
        let err = expand(argv(&["m", "train", "--config", path.to_str().unwrap()]), &cmd()).unwrap_err();
        assert!(err.contains("nope"));
    }
}
