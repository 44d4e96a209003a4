//! Sectioned `key = value` run configuration with per-command schemas.
//!
//! ```text
//! [run]
//! seed = 7
//! [grid]
//! d = 2
//! ```
//!
//! Resolution order: schema defaults, then the config file, then `--set`
//! overrides and command flags. Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

type Schema = &'static [(&'static str, &'static [(&'static str, &'static str)])];

const RUN: (&str, &[(&str, &str)]) = ("run", &[("command", ""), ("seed", "0")]);
const GRID: (&str, &[(&str, &str)]) = ("grid", &[("d", "2"), ("n", "64"), ("l", "1"), ("t", "0.25"), ("m", "256")]);
const NOISE: (&str, &[(&str, &str)]) = ("noise", &[("profile", "spectral"), ("delta", "auto")]);

const SYMBOLS: Schema = &[RUN, ("structure", &[("rule", "phi4"), ("d", "2"), ("gamma", "1/10"), ("truncation", "product")])];
const SAMPLE: Schema = &[RUN, GRID, NOISE];
const SOLVE: Schema = &[
    RUN,
    GRID,
    NOISE,
    ("solver", &[("form", "renormalized"), ("mass_sq", "0"), ("dealias", "true"), ("blowup_cap", "1e6")]),
];
const ISING: Schema = &[
    RUN,
    (
        "ising",
        &[
            ("n", "16"),
            ("d", "1"),
            ("gamma", "0.25"),
            ("beta", "auto"),
            ("mass_sq", "1"),
            ("t_end", "4"),
            ("snapshot_dt", "0.25"),
            ("log_events", "false"),
            ("rescale", "false"),
        ],
    ),
];
const ESTIMATE: Schema = &[
    RUN,
    (
        "estimator",
        &[
            ("input", ""),
            ("mode", "negative"),
            ("degree", "1"),
            ("k_min", "auto"),
            ("k_max", "auto"),
            ("max_basepoints", "auto"),
            ("aggregation", "sup"),
            ("periodic", "true"),
        ],
    ),
];
const WICK: Schema = &[RUN, ("wick", &[("d", "2"), ("deltas", "3..7"), ("l", "6.283185307179586"), ("tilde", "false")])];
const RECONSTRUCT: Schema = &[
    RUN,
    ("grid", &[("d", "2"), ("n", "32"), ("l", "1"), ("t", "0.25"), ("m", "256")]),
    ("model", &[("gamma", "1"), ("t_end", "0.25"), ("tol", "1e-8"), ("max_iter", "200"), ("levels", "2..4"), ("basepoints", "16")]),
];
const VERIFY: Schema = &[RUN, ("verify", &[("suite", "all"), ("fast", "false")])];

pub const COMMANDS: &[&str] = &["symbols", "sample", "solve", "ising", "estimate", "wick", "reconstruct", "verify"];

fn schema(command: &str) -> CliResult<Schema> {
    Ok(match command {
        "symbols" => SYMBOLS,
        "sample" => SAMPLE,
        "solve" => SOLVE,
        "ising" => ISING,
        "estimate" => ESTIMATE,
        "wick" => WICK,
        "reconstruct" => RECONSTRUCT,
        "verify" => VERIFY,
        other => return Err(CliError::Config(format!("unknown command '{other}'"))),
    })
}

/// Sections that a manifest carries in addition to the run config.
pub const MANIFEST_SECTIONS: &[&str] = &["manifest", "inputs", "outputs"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

/// Parses sectioned text. Keys before the first header, duplicate keys and
/// malformed lines are errors; `#` starts a comment line.
pub fn parse_sections(text: &str) -> CliResult<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(CliError::Config(format!("line {}: empty section name", no + 1)));
            }
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        let sec = current.as_ref().ok_or_else(|| CliError::Config(format!("line {}: key outside a section", no + 1)))?;
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", no + 1)));
        }
        if out.get_mut(sec).unwrap().insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {sec}.{k}", no + 1)));
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults for `command`, overlaid with `file` (if any) and then with
    /// `overrides` given as `section.key = value`.
    pub fn resolve(command: &str, file: Option<&str>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
        let sch = schema(command)?;
        let mut cfg = RunConfig::default();
        for (sec, keys) in sch {
            let m = cfg.sections.entry(sec.to_string()).or_default();
            for (k, v) in *keys {
                m.insert(k.to_string(), v.to_string());
            }
        }
        cfg.set("run", "command", command)?;
        if let Some(text) = file {
            for (sec, keys) in parse_sections(text)? {
                if MANIFEST_SECTIONS.contains(&sec.as_str()) {
                    continue;
                }
                for (k, v) in keys {
                    if sec == "run" && k == "command" && v != command {
                        return Err(CliError::Config(format!("config is for command '{v}', not '{command}'")));
                    }
                    cfg.set(&sec, &k, &v)?;
                }
            }
        }
        for (path, v) in overrides {
            let (sec, k) = path.split_once('.').ok_or_else(|| CliError::Config(format!("override '{path}' is not section.key")))?;
            cfg.set(sec, k, v)?;
        }
        Ok(cfg)
    }

    /// Sets an existing key; unknown sections or keys are rejected.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> CliResult<()> {
        let sec = self.sections.get_mut(section).ok_or_else(|| CliError::Config(format!("unknown section [{section}]")))?;
        let slot = sec.get_mut(key).ok_or_else(|| CliError::Config(format!("unknown key {section}.{key}")))?;
        *slot = value.to_string();
        Ok(())
    }

    /// `section.key` for a bare key that occurs in exactly one section.
    pub fn qualify(&self, key: &str) -> CliResult<String> {
        if key.contains('.') {
            return Ok(key.to_string());
        }
        let hits: Vec<&String> = self.sections.iter().filter(|(_, m)| m.contains_key(key)).map(|(s, _)| s).collect();
        match hits.as_slice() {
            [s] if !(s.as_str() == "run" && key == "command") => Ok(format!("{s}.{key}")),
            [] | [_] => Err(CliError::Config(format!("unknown option --{key} for '{}'", self.command()))),
            _ => Err(CliError::Config(format!("--{key} is ambiguous; use --set section.{key}=value"))),
        }
    }

    pub fn command(&self) -> &str {
        &self.sections["run"]["command"]
    }

    pub fn raw(&self, section: &str, key: &str) -> CliResult<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
            .ok_or_else(|| CliError::Config(format!("missing {section}.{key}")))
    }

    pub fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> CliResult<T> {
        let v = self.raw(section, key)?;
        v.parse().map_err(|_| CliError::Config(format!("{section}.{key}: cannot parse '{v}'")))
    }

    /// `None` for the literal `auto`.
    pub fn get_auto<T: std::str::FromStr>(&self, section: &str, key: &str) -> CliResult<Option<T>> {
        if self.raw(section, key)? == "auto" {
            Ok(None)
        } else {
            self.get(section, key).map(Some)
        }
    }

    pub fn get_bool(&self, section: &str, key: &str) -> CliResult<bool> {
        match self.raw(section, key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::Config(format!("{section}.{key}: expected a boolean, got '{v}'"))),
        }
    }

    /// Inclusive integer range written `a..b` or a single integer.
    pub fn get_range(&self, section: &str, key: &str) -> CliResult<(i32, i32)> {
        let v = self.raw(section, key)?;
        let bad = || CliError::Config(format!("{section}.{key}: expected a..b, got '{v}'"));
        let (a, b) = match v.split_once("..") {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let a = v.trim().parse().map_err(|_| bad())?;
                (a, a)
            }
        };
        if a > b {
            return Err(bad());
        }
        Ok((a, b))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (sec, keys) in &self.sections {
            let _ = writeln!(s, "[{sec}]");
            for (k, v) in keys {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn from_path(command: &str, path: &Path, overrides: &[(String, String)]) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::resolve(command, Some(&text), overrides)
    }
}

/// Command named in the `[run]` section of a config or manifest text.
pub fn command_of(text: &str) -> CliResult<String> {
    parse_sections(text)?
        .get("run")
        .and_then(|r| r.get("command"))
        .cloned()
        .ok_or_else(|| CliError::Config("no run.command".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_then_file_then_overrides() {
        let cfg = RunConfig::resolve("solve", Some("[grid]\nn = 32\n[run]\nseed = 3\n"), &[("grid.n".into(), "16".into())]).unwrap();
        assert_eq!(cfg.get::<usize>("grid", "n").unwrap(), 16);
        assert_eq!(cfg.get::<u64>("run", "seed").unwrap(), 3);
        assert_eq!(cfg.raw("solver", "form").unwrap(), "renormalized");
        let again = RunConfig::resolve("solve", Some(&cfg.to_text()), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn ranges_and_auto() {
        let cfg = RunConfig::resolve("wick", None, &[]).unwrap();
        assert_eq!(cfg.get_range("wick", "deltas").unwrap(), (3, 7));
        let e = RunConfig::resolve("estimate", None, &[]).unwrap();
        assert_eq!(e.get_auto::<i32>("estimator", "k_min").unwrap(), None);
    }
}
