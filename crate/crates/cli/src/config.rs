//! Flat `key = value` configuration with per-command schemas.
//!
//! A file holds one assignment per line; `#` starts a comment. Values from
//! the file are overridden by command-line flags and `--set key=value`.
//! Every key is checked against the command's schema, and every value is
//! parsed, before any computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use slm_core::scalar_channel::builtin_prior;
use slm_core::Prior;

/// One schema entry: key, desk-scale default, `--full` default, description.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub full: Option<&'static str>,
    pub doc: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key { name, default, full: None, doc }
}

pub const fn sized(name: &'static str, default: &'static str, full: &'static str, doc: &'static str) -> Key {
    Key { name, default, full: Some(full), doc }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    File { path: String, line: usize },
    Flag(&'static str),
    Set,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag(flag) => write!(f, "--{flag}"),
            Origin::Set => write!(f, "--set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Resolved settings of one run.
#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<&'static str, (String, Origin)>,
    errors: Vec<String>,
}

fn lookup(schema: &[Key], name: &str) -> Option<&'static str> {
    schema.iter().find(|k| k.name == name).map(|k| k.name)
}

fn unknown(schema: &[Key], name: &str) -> String {
    let valid: Vec<&str> = schema.iter().map(|k| k.name).collect();
    format!("unknown key `{name}` (valid keys: {})", valid.join(", "))
}

impl Config {
    /// Schema defaults, switched to the full-size values when `full` is set.
    pub fn defaults(schema: &[Key], full: bool) -> Self {
        let values = schema
            .iter()
            .map(|k| {
                let v = if full { k.full.unwrap_or(k.default) } else { k.default };
                (k.name, (v.to_string(), Origin::Default))
            })
            .collect();
        Self { values, errors: Vec::new() }
    }

    /// Applies a config file's assignments; problems are collected with their line numbers.
    pub fn apply_text(&mut self, schema: &[Key], text: &str, path: &str) {
        let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                self.errors.push(format!("{path}:{line}: expected `key = value`, got `{content}`"));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(name) = lookup(schema, k) else {
                self.errors.push(format!("{path}:{line}: {}", unknown(schema, k)));
                continue;
            };
            if let Some(first) = seen.insert(name, line) {
                self.errors.push(format!("{path}:{line}: key `{name}` already set on line {first}"));
                continue;
            }
            self.values.insert(name, (v.to_string(), Origin::File { path: path.to_string(), line }));
        }
    }

    pub fn apply_file(&mut self, schema: &[Key], path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(schema, &text, &path.display().to_string());
        Ok(())
    }

    /// Overrides one key from a command-line flag.
    pub fn apply_flag(&mut self, schema: &[Key], name: &'static str, value: String) {
        match lookup(schema, name) {
            Some(n) => {
                self.values.insert(n, (value, Origin::Flag(name)));
            }
            None => self.errors.push(format!("--{name}: not used by this command")),
        }
    }

    /// Applies one `--set key=value`.
    pub fn apply_set(&mut self, schema: &[Key], assignment: &str) {
        let Some((k, v)) = assignment.split_once('=') else {
            self.errors.push(format!("--set {assignment}: expected key=value"));
            return;
        };
        match lookup(schema, k.trim()) {
            Some(n) => {
                self.values.insert(n, (v.trim().to_string(), Origin::Set));
            }
            None => self.errors.push(format!("--set: {}", unknown(schema, k.trim()))),
        }
    }

    fn raw(&self, name: &str) -> (&str, &Origin) {
        let (v, o) = self.values.get(name).unwrap_or_else(|| panic!("key `{name}` missing from schema"));
        (v, o)
    }

    fn parsed<T>(&mut self, name: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Option<T> {
        let (v, o) = self.raw(name);
        let out = parse(v);
        if out.is_none() {
            let msg = format!("{o}: key `{name}`: expected {what}, got `{v}`");
            self.errors.push(msg);
        }
        out
    }

    pub fn usize(&mut self, name: &str) -> usize {
        self.parsed(name, "a non-negative integer", |v| v.parse().ok()).unwrap_or(0)
    }

    pub fn positive(&mut self, name: &str) -> usize {
        self.parsed(name, "a positive integer", |v| v.parse().ok().filter(|&n: &usize| n > 0)).unwrap_or(1)
    }

    pub fn u64(&mut self, name: &str) -> u64 {
        self.parsed(name, "a non-negative integer", |v| v.parse().ok()).unwrap_or(0)
    }

    pub fn f64(&mut self, name: &str) -> f64 {
        self.parsed(name, "a finite number", |v| v.parse().ok().filter(|x: &f64| x.is_finite())).unwrap_or(0.0)
    }

    pub fn positive_f64(&mut self, name: &str) -> f64 {
        self.parsed(name, "a positive number", |v| v.parse().ok().filter(|x: &f64| x.is_finite() && *x > 0.0))
            .unwrap_or(1.0)
    }

    pub fn choice(&mut self, name: &str, options: &[&'static str]) -> &'static str {
        let what = format!("one of {}", options.join(" | "));
        self.parsed(name, &what, |v| options.iter().copied().find(|o| *o == v)).unwrap_or(options[0])
    }

    pub fn prior(&mut self, name: &str) -> Prior {
        let fallback = Prior::binary();
        let (v, o) = self.raw(name);
        match parse_prior(v) {
            Ok(p) => p,
            Err(e) => {
                let msg = format!("{o}: key `{name}`: {e}");
                self.errors.push(msg);
                fallback
            }
        }
    }

    /// Records a cross-key constraint violation.
    pub fn require(&mut self, ok: bool, names: &[&str], msg: &str) {
        if !ok {
            let origins: Vec<String> = names.iter().map(|n| format!("{} ({})", n, self.raw(n).1)).collect();
            self.errors.push(format!("{}: {msg}", origins.join(", ")));
        }
    }

    /// Fails with every collected problem, one per line.
    pub fn finish(&self) -> Result<(), ConfigError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(format!("invalid configuration:\n  {}", self.errors.join("\n  "))))
        }
    }

    /// Resolved `key -> value` pairs in key order.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, (v, _))| (k.to_string(), v.clone())).collect()
    }
}

fn numbers(args: &str) -> Result<Vec<f64>, String> {
    args.split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", a.trim())))
        .collect()
}

/// Parses a prior: a built-in name, `gaussian(mean, var)`, `bg(mu, sigma2, gamma)`
/// or `atoms(a1:w1, a2:w2, ...)`.
pub fn parse_prior(spec: &str) -> Result<Prior, String> {
    let spec = spec.trim();
    if let Some(p) = builtin_prior(spec) {
        return Ok(p);
    }
    let Some((kind, rest)) = spec.split_once('(') else {
        return Err(format!("unknown prior `{spec}`"));
    };
    let args = rest.strip_suffix(')').ok_or_else(|| format!("missing `)` in prior `{spec}`"))?;
    let bad = |e: slm_core::Error| e.to_string();
    match kind.trim() {
        "gaussian" => match numbers(args)?[..] {
            [mean, var] => Prior::gaussian(mean, var).map_err(bad),
            _ => Err("gaussian(mean, variance) takes 2 numbers".into()),
        },
        "bg" => match numbers(args)?[..] {
            [mu, sigma2, gamma] => Prior::bernoulli_gaussian(mu, sigma2, gamma).map_err(bad),
            _ => Err("bg(mu, sigma2, gamma) takes 3 numbers".into()),
        },
        "atoms" => {
            let mut atoms = Vec::new();
            let mut weights = Vec::new();
            for pair in args.split(',') {
                let (a, w) = pair.split_once(':').ok_or_else(|| format!("atom `{}` is not value:weight", pair.trim()))?;
                let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", s.trim()));
                atoms.push(parse(a)?);
                weights.push(parse(w)?);
            }
            Prior::finite_atoms(atoms, weights).map_err(bad)
        }
        other => Err(format!("unknown prior kind `{other}` (use gaussian, bg, atoms or a built-in name)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[Key] = &[key("n", "10", "size"), sized("m", "5", "50", "rows"), key("prior", "binary", "prior")];

    #[test]
    fn file_then_set_overrides() {
        let mut c = Config::defaults(SCHEMA, false);
        c.apply_text(SCHEMA, "# comment\nn = 7  # trailing\n\nprior = bg(0, 1, 0.2)\n", "x.conf");
        c.apply_set(SCHEMA, "n=9");
        assert_eq!(c.usize("n"), 9);
        assert_eq!(c.usize("m"), 5);
        assert!(c.prior("prior").is_bernoulli_gaussian());
        c.finish().unwrap();
        assert_eq!(Config::defaults(SCHEMA, true).usize("m"), 50);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut c = Config::defaults(SCHEMA, false);
        c.apply_text(SCHEMA, "n = 3\nfoo = 1\nn = 4\nbroken\nm = x\n", "run.conf");
        let _ = c.usize("m");
        let msg = c.finish().unwrap_err().0;
        assert!(msg.contains("run.conf:2: unknown key `foo`"), "{msg}");
        assert!(msg.contains("run.conf:3: key `n` already set on line 1"), "{msg}");
        assert!(msg.contains("run.conf:4: expected `key = value`"), "{msg}");
        assert!(msg.contains("run.conf:5: key `m`: expected"), "{msg}");
    }

    #[test]
    fn prior_specs() {
        assert_eq!(parse_prior("flagship").unwrap().variance(), 2e5);
        assert_eq!(parse_prior("gaussian(1, 2)").unwrap().variance(), 2.0);
        assert_eq!(parse_prior("atoms(-1:0.5, 1:0.5)").unwrap().variance(), 1.0);
        assert!(parse_prior("bg(0, 1)").is_err());
        assert!(parse_prior("cauchy(0, 1)").is_err());
        assert!(parse_prior("gaussian(0, -1)").is_err());
    }
}
