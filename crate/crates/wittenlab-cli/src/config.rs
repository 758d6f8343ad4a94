//! Scenario files: flat `[section]` blocks of `key = value` lines.
//!
//! ```text
//! # double well sweep
//! [scenario]
//! name = dw
//!
//! [field]
//! builtin = double_well_1d      # or: input = field.csv
//! resolution = 1024
//!
//! [window]
//! range = -0.5, 0.7             # omit the section for the full window
//!
//! [sweep]
//! h = 0.2, 0.15, 0.1, 0.07, 0.05
//! degrees = 0
//! scheme = fitted
//!
//! [output]
//! dir = out/dw
//! seed = 7
//! field_coeff = GF(2)
//! prefactor = auto
//! ```
//!
//! Required: one of `field.builtin` / `field.input`, and `sweep.h`.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;
use wittenlab::landscapes::Builtin;
use wittenlab::witten::Scheme;
use wittenlab::CoefficientField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("missing h list ([sweep] h = ...)")]
    MissingH,
    #[error("missing field source ([field] builtin = ... or input = ...)")]
    MissingField,
    #[error("[field] takes either builtin or input, not both")]
    BothSources,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    Builtin(Builtin),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrefactorSelect {
    /// Use the builtin's reference model when there is one.
    Auto,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub field: FieldSource,
    pub resolution: Option<usize>,
    /// `None` is the full window.
    pub window: Option<(f64, f64)>,
    /// Strictly decreasing, positive.
    pub h: Vec<f64>,
    /// Empty means every block.
    pub degrees: Vec<usize>,
    pub scheme: Scheme,
    pub prefactor: PrefactorSelect,
    pub coefficients: CoefficientField,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// A scenario with defaults for everything but the field and sweep.
    pub fn new(field: FieldSource, h: Vec<f64>) -> Self {
        let name = match &field {
            FieldSource::Builtin(b) => b.to_string(),
            FieldSource::File(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "field".into()),
        };
        Scenario {
            name,
            field,
            resolution: None,
            window: None,
            h,
            degrees: vec![],
            scheme: Scheme::Fitted,
            prefactor: PrefactorSelect::Auto,
            coefficients: CoefficientField::default(),
            seed: 7,
            out: None,
        }
    }

    /// Serialize in the config format; `parse_config` reads it back unchanged.
    pub fn to_config(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]\nname = {}\n", self.name);
        s.push_str("[field]\n");
        match &self.field {
            FieldSource::Builtin(b) => {
                let _ = writeln!(s, "builtin = {}", builtin_text(b));
            }
            FieldSource::File(p) => {
                let _ = writeln!(s, "input = {}", p.display());
            }
        }
        if let Some(n) = self.resolution {
            let _ = writeln!(s, "resolution = {n}");
        }
        if let Some((a, b)) = self.window {
            let _ = writeln!(s, "\n[window]\nrange = {a:?}, {b:?}");
        }
        let _ = writeln!(s, "\n[sweep]\nh = {}", list(&self.h));
        if !self.degrees.is_empty() {
            let d: Vec<String> = self.degrees.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "degrees = {}", d.join(", "));
        }
        let _ = writeln!(s, "scheme = {}", scheme_name(self.scheme));
        s.push_str("\n[output]\n");
        if let Some(p) = &self.out {
            let _ = writeln!(s, "dir = {}", p.display());
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "field_coeff = {}", self.coefficients);
        let _ = writeln!(
            s,
            "prefactor = {}",
            match self.prefactor {
                PrefactorSelect::Auto => "auto",
                PrefactorSelect::None => "none",
            }
        );
        s
    }
}

/// `kwell_symmetric(4)` style text, with δ printed round-trip exact.
fn builtin_text(b: &Builtin) -> String {
    match b {
        Builtin::DegenerateMin { delta } => format!("degenerate_min({delta:?})"),
        other => other.to_string(),
    }
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Fitted => "fitted",
        Scheme::Midpoint => "midpoint",
    }
}

pub fn parse_scheme(s: &str) -> Option<Scheme> {
    match s.trim() {
        "fitted" => Some(Scheme::Fitted),
        "midpoint" => Some(Scheme::Midpoint),
        _ => None,
    }
}

const SCHEMA: [(&str, &[&str]); 5] = [
    ("scenario", &["name"]),
    ("field", &["builtin", "input", "resolution"]),
    ("window", &["range"]),
    ("sweep", &["h", "degrees", "scheme"]),
    ("output", &["dir", "seed", "field_coeff", "prefactor"]),
];

/// Comma-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", t.trim())))
        .collect()
}

/// Positive, finite and strictly decreasing.
pub fn validate_h(h: &[f64]) -> Result<(), String> {
    if h.is_empty() {
        return Err("h list is empty".into());
    }
    if let Some(x) = h.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(format!("h must be positive and finite, got {x}"));
    }
    if h.windows(2).any(|w| w[1] >= w[0]) {
        return Err("h values must be strictly decreasing".into());
    }
    Ok(())
}

pub fn parse_window(text: &str) -> Result<(f64, f64), String> {
    let v = parse_list(text)?;
    match v[..] {
        [a, b] if a < b => Ok((a, b)),
        [a, b] => Err(format!("window needs a < b, got {a}, {b}")),
        _ => Err("window takes two numbers a, b".into()),
    }
}

pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut section: Option<&str> = None;
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut name = None;
    let mut builtin = None;
    let mut input = None;
    let mut resolution = None;
    let mut window = None;
    let mut h = None;
    let mut degrees = vec![];
    let mut scheme = Scheme::Fitted;
    let mut out = None;
    let mut seed = 7u64;
    let mut coefficients = CoefficientField::default();
    let mut prefactor = PrefactorSelect::Auto;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let sec = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, msg: "unterminated section header".into() })?
                .trim();
            let known = SCHEMA.iter().find(|(s, _)| *s == sec);
            match known {
                Some((s, _)) => section = Some(s),
                None => return Err(ConfigError::UnknownSection { line, section: sec.to_string() }),
            }
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected key = value, got '{body}'") })?;
        let sec = section.ok_or_else(|| ConfigError::Syntax { line, msg: "key outside any section".into() })?;
        let keys = SCHEMA.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            return Err(ConfigError::UnknownKey { line, section: sec.to_string(), key: key.to_string() });
        }
        if seen.iter().any(|(s, k)| s == sec && k == key) {
            return Err(ConfigError::Duplicate { line, key: format!("{sec}.{key}") });
        }
        seen.push((sec.to_string(), key.to_string()));
        let bad = |msg: String| ConfigError::Value { line, key: format!("{sec}.{key}"), msg };
        if value.is_empty() {
            return Err(bad("empty value".into()));
        }
        match (sec, key) {
            ("scenario", "name") => name = Some(value.to_string()),
            ("field", "builtin") => builtin = Some(Builtin::parse(value).map_err(|e| bad(e.to_string()))?),
            ("field", "input") => input = Some(PathBuf::from(value)),
            ("field", "resolution") => {
                let n: usize = value.parse().map_err(|_| bad(format!("'{value}' is not a positive integer")))?;
                if n < 2 {
                    return Err(bad("resolution must be at least 2".into()));
                }
                resolution = Some(n);
            }
            ("window", "range") => window = Some(parse_window(value).map_err(bad)?),
            ("sweep", "h") => {
                let v = parse_list(value).map_err(bad)?;
                validate_h(&v).map_err(bad)?;
                h = Some(v);
            }
            ("sweep", "degrees") => {
                degrees = value
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|_| bad(format!("'{}' is not a degree", t.trim()))))
                    .collect::<Result<_, _>>()?;
                if degrees.iter().any(|&d| d > 1) {
                    return Err(bad("degrees must be 0 or 1".into()));
                }
            }
            ("sweep", "scheme") => scheme = parse_scheme(value).ok_or_else(|| bad(format!("unknown scheme '{value}'")))?,
            ("output", "dir") => out = Some(PathBuf::from(value)),
            ("output", "seed") => seed = value.parse().map_err(|_| bad(format!("'{value}' is not a seed")))?,
            ("output", "field_coeff") => coefficients = value.parse().map_err(|e: wittenlab::persistence::PersistenceError| bad(e.to_string()))?,
            ("output", "prefactor") => {
                prefactor = match value {
                    "auto" => PrefactorSelect::Auto,
                    "none" => PrefactorSelect::None,
                    _ => return Err(bad(format!("expected auto or none, got '{value}'"))),
                }
            }
            _ => unreachable!("schema checked above"),
        }
    }
    let field = match (builtin, input) {
        (Some(_), Some(_)) => return Err(ConfigError::BothSources),
        (Some(b), None) => FieldSource::Builtin(b),
        (None, Some(p)) => FieldSource::File(p),
        (None, None) => return Err(ConfigError::MissingField),
    };
    let h = h.ok_or(ConfigError::MissingH)?;
    let mut s = Scenario::new(field, h);
    if let Some(n) = name {
        s.name = n;
    }
    s.resolution = resolution;
    s.window = window;
    s.degrees = degrees;
    s.scheme = scheme;
    s.out = out;
    s.seed = seed;
    s.coefficients = coefficients;
    s.prefactor = prefactor;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_config("[field]\nbuiltin = cosine\n[sweep]\nh = 0.5, 0.3, 0.2\n").unwrap();
        assert_eq!(s.field, FieldSource::Builtin(Builtin::Cosine));
        assert_eq!(s.name, "cosine");
        assert_eq!(s.window, None);
        assert_eq!(s.seed, 7);
        assert_eq!(s.scheme, Scheme::Fitted);
        assert_eq!(s.coefficients, CoefficientField::Prime(2));
        assert!(s.degrees.is_empty());
    }

    #[test]
    fn missing_h() {
        assert_eq!(parse_config("[field]\nbuiltin = cosine\n"), Err(ConfigError::MissingH));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("[field]\nbuiltin = cosine\n\n[sweep]\nhh = 1\n").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { line: 5, section: "sweep".into(), key: "hh".into() });
        let e = parse_config("[fields]\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownSection { line: 1, .. }));
        let e = parse_config("[sweep]\nh = 0.1, 0.2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Value { line: 2, .. }), "{e}");
        let e = parse_config("[sweep]\nh = 0.2\nh = 0.1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Duplicate { line: 3, .. }));
        let e = parse_config("name = x\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));
        let e = parse_config("[field]\nbuiltin = nope\n").unwrap_err();
        assert!(matches!(e, ConfigError::Value { line: 2, .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = parse_config("# top\n[field]  \n builtin = kwell_symmetric(3) # three wells\n\n[sweep]\nh=0.2,0.1\n").unwrap();
        assert_eq!(s.field, FieldSource::Builtin(Builtin::KwellSymmetric { k: 3 }));
        assert_eq!(s.h, vec![0.2, 0.1]);
    }

    #[test]
    fn roundtrip_full() {
        let mut s = Scenario::new(FieldSource::Builtin(Builtin::DegenerateMin { delta: 0.1 }), vec![0.3, 0.2, 0.1]);
        s.window = Some((-0.25, 1.5));
        s.degrees = vec![0];
        s.resolution = Some(512);
        s.out = Some("out/x".into());
        s.coefficients = CoefficientField::Rationals;
        s.prefactor = PrefactorSelect::None;
        s.seed = 99;
        assert_eq!(parse_config(&s.to_config()).unwrap(), s);
    }
}
