//! Config-file defaults merged beneath command-line flags.
//!
//! A config file is a JSON object. `log_level`, `out_dir` and `seed` are
//! global; every other key names a command and holds that command's flags,
//! spelled as on the command line without the leading dashes. Values are
//! spliced into argv right after the command name, so anything the user
//! typed later overrides them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::{Map, Value};

use crate::args::LogLevel;

const GLOBAL_KEYS: [&str; 3] = ["log_level", "out_dir", "seed"];
const COMMANDS: [&str; 7] = ["ingest", "dataset", "audit", "serve", "query", "eval", "sweep"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub log_level: Option<LogLevel>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    sections: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&raw).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(raw: &str) -> anyhow::Result<Self> {
        let Value::Object(mut map) = serde_json::from_str(raw)? else {
            bail!("expected a JSON object");
        };
        for key in map.keys() {
            if !GLOBAL_KEYS.contains(&key.as_str()) && !COMMANDS.contains(&key.as_str()) {
                bail!("unknown key {key:?}");
            }
        }
        let log_level = map.remove("log_level").map(serde_json::from_value).transpose().context("log_level")?;
        let out_dir = map.remove("out_dir").map(serde_json::from_value).transpose().context("out_dir")?;
        let seed = map.remove("seed").map(serde_json::from_value).transpose().context("seed")?;
        Ok(Self { log_level, out_dir, seed, sections: map })
    }

    /// Flag tokens for a command path such as `["audit", "routing"]`.
    pub fn flags_for(&self, path: &[&str]) -> anyhow::Result<Vec<OsString>> {
        let mut node = match path.first().and_then(|c| self.sections.get(*c)) {
            Some(v) => v,
            None => return Ok(Vec::new()),
        };
        for name in &path[1..] {
            match node.get(*name) {
                Some(v) => node = v,
                None => return Ok(Vec::new()),
            }
        }
        let Value::Object(section) = node else {
            bail!("section {:?} must be an object", path.join("."));
        };
        let mut out = Vec::new();
        for (key, value) in section {
            if value.is_object() {
                continue;
            }
            let flag = format!("--{}", key.replace('_', "-"));
            push_value(&mut out, &flag, value).with_context(|| format!("{}.{key}", path.join(".")))?;
        }
        Ok(out)
    }

    /// Inserts this file's flags after the command names in `argv`.
    pub fn splice(&self, argv: &[OsString], path: &[&str]) -> anyhow::Result<Vec<OsString>> {
        let flags = self.flags_for(path)?;
        if flags.is_empty() {
            return Ok(argv.to_vec());
        }
        let at = command_end(argv, path).context("command name not found in arguments")?;
        let mut out = argv[..at].to_vec();
        out.extend(flags);
        out.extend_from_slice(&argv[at..]);
        Ok(out)
    }
}

fn push_value(out: &mut Vec<OsString>, flag: &str, value: &Value) -> anyhow::Result<()> {
    match value {
        Value::Null | Value::Bool(false) => {}
        Value::Bool(true) => out.push(flag.into()),
        Value::String(s) => out.extend([flag.into(), s.into()]),
        Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => bail!("list items must be strings or numbers"),
                })
                .collect::<anyhow::Result<_>>()?;
            out.extend([flag.into(), parts.join(",").into()]);
        }
        Value::Object(_) => unreachable!("skipped by caller"),
    }
    Ok(())
}

/// Index just past the last command name of `path` in `argv`. Global value
/// flags may precede or sit between command names, so their values are
/// skipped.
fn command_end(argv: &[OsString], path: &[&str]) -> Option<usize> {
    let mut want = path.iter();
    let mut next = want.next()?;
    let mut i = 1;
    while i < argv.len() {
        let tok = argv[i].to_string_lossy();
        if ["--config", "--log-level", "--out-dir", "--seed"].contains(&tok.as_ref()) {
            i += 2;
            continue;
        }
        if tok == *next {
            match want.next() {
                Some(n) => next = n,
                None => return Some(i + 1),
            }
        }
        i += 1;
    }
    None
}
