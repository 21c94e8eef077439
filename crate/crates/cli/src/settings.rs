//! `key = value` configuration and the manifest that records where each
//! resolved value came from.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use trajrec::Regime;

use crate::{input, NoiseArg, NormalizeArg, Result};

/// Every key a config file may set; anything else is a typo.
const KNOWN_KEYS: &[&str] = &[
    "out",
    "seed",
    "d",
    "k",
    "users",
    "q_true",
    "r_true",
    "regime",
    "programs_per_day",
    "vocab",
    "events",
    "instants",
    "decay",
    "normalize",
    "profiles",
    "dt",
    "alpha",
    "q",
    "r",
    "p0",
    "noise",
    "decoupled",
    "date",
    "theta",
    "catalog",
    "tracks",
    "tau",
];

/// A value that can come from a flag, a config file, or a default.
pub(crate) trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u64, f64, bool, String, Regime);

impl Value for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! value_enum {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                <$t as ValueEnum>::from_str(s, false)
            }
            fn render(&self) -> String {
                self.to_possible_value().expect("no skipped variants").get_name().to_string()
            }
        }
    )*};
}

value_enum!(NormalizeArg, NoiseArg);

#[derive(Debug, Default)]
pub struct Settings {
    source: String,
    values: BTreeMap<String, (usize, String)>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| input(format!("{source}:{}: expected key = value", i + 1)))?;
            let k = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(input(format!("{source}:{}: unknown key {k:?}", i + 1)));
            }
            if values
                .insert(k.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(input(format!("{source}:{}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Settings {
            source: source.to_string(),
            values,
        })
    }

    /// Flag, else config entry, else `default`.
    pub(crate) fn resolve<T: Value>(
        &self,
        m: &mut Manifest,
        key: &str,
        flag: Option<T>,
        default: impl FnOnce() -> T,
    ) -> Result<T> {
        let (v, origin) = match (flag, self.lookup::<T>(key)?) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "config"),
            (None, None) => (default(), "default"),
        };
        m.record(key, v.render(), origin);
        Ok(v)
    }

    pub(crate) fn optional_path(
        &self,
        m: &mut Manifest,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<Option<PathBuf>> {
        let (v, origin) = match (flag, self.lookup::<PathBuf>(key)?) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "config"),
            (None, None) => return Ok(None),
        };
        m.record(key, v.render(), origin);
        Ok(Some(v))
    }

    pub(crate) fn require_path(
        &self,
        m: &mut Manifest,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<PathBuf> {
        self.optional_path(m, key, flag)?.ok_or_else(|| {
            input(format!(
                "missing --{}: pass the flag or set {key} in --config",
                key.replace('_', "-")
            ))
        })
    }

    fn lookup<T: Value>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, raw)) => T::parse_value(raw)
                .map(Some)
                .map_err(|e| input(format!("{}:{line}: bad value for {key}: {e}", self.source))),
        }
    }
}

/// Resolved parameters in the order they were consulted.
#[derive(Debug, Default)]
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    fn record(&mut self, key: &str, value: String, origin: &str) {
        self.lines.push(format!("{key}={value}  # {origin}"));
    }

    pub(crate) fn note(&mut self, key: &str, value: String) {
        self.lines.push(format!("{key}={value}"));
    }

    pub(crate) fn render(&self, command: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={command}");
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_config_default() {
        let s = Settings::parse("q = 0.5\n# comment\nr=2\n", "cfg").unwrap();
        let mut m = Manifest::default();
        assert_eq!(s.resolve(&mut m, "q", Some(1.0), || 9.0).unwrap(), 1.0);
        assert_eq!(s.resolve(&mut m, "r", None, || 9.0).unwrap(), 2.0);
        assert_eq!(s.resolve(&mut m, "p0", None, || 9.0).unwrap(), 9.0);
        let text = m.render("track");
        assert!(text.contains("q=1  # flag"));
        assert!(text.contains("r=2  # config"));
        assert!(text.contains("p0=9  # default"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Settings::parse("nonsense", "c").is_err());
        assert!(Settings::parse("bogus = 1", "c").is_err());
        assert!(Settings::parse("q=1\nq=2", "c").is_err());
        let s = Settings::parse("q = abc", "c").unwrap();
        let err = s
            .resolve(&mut Manifest::default(), "q", None, || 0.0)
            .unwrap_err();
        assert!(err.to_string().contains("c:1"));
    }

    #[test]
    fn enum_values_round_trip() {
        assert_eq!(
            NoiseArg::parse_value("diagonal").unwrap().render(),
            "diagonal"
        );
        assert!(NormalizeArg::parse_value("min").is_err());
        assert_eq!(Regime::parse_value("bursty").unwrap(), Regime::Bursty);
    }
}
