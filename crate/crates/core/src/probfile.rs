//! Line-based `key = value` problem files with `[section]` headers.
//!
//! Sections: `[domain]`, `[grid]`, `[damping]`, `[restoring]`, `[forcing]`,
//! `[initial]`, `[time]`. Unknown sections or keys are errors. Initial data
//! and forcing profiles are either synthesized (`sine k=1 amp=1.0`, `zero`)
//! or loaded from a file with one value per line (`u0_file = <path>`,
//! relative to the problem file).

use crate::problem::{
    validate_problem, BeamDomain, DampingSpec, ForcingSpec, Grid, InitialData, PowerTerm,
    RestoringSpec, SimConfig, ValidatedProblem, ValidationError,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value` or `[section]`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key {key:?} appears before any section header")]
    KeyOutsideSection { line: usize, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key {key:?} in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("section [{section}] is missing required key {key:?}")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },
    #[error("key {key:?}: cannot parse {value:?} as a number")]
    BadNumber { key: String, value: String },
    #[error("key {key:?}: bad profile spec {value:?} (expected `zero`, `sine k=<int> amp=<num>`)")]
    BadProfile { key: String, value: String },
    #[error("key {key:?}: bad composite terms {value:?} (expected `coef:exp, coef:exp, ...`)")]
    BadTerms { key: String, value: String },
    #[error("{path}: expected {expected} values (one per line), found {got}")]
    DataFileLength {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("key {key:?}: unknown kind {value:?} (expected one of {allowed})")]
    UnknownKind {
        key: String,
        value: String,
        allowed: &'static str,
    },
    #[error("override {0:?} is not of the form section.key=value")]
    BadOverride(String),
    #[error("both {0:?} and {1:?} are set; pick one")]
    ConflictingKeys(String, String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

const SECTIONS: &[&str] = &[
    "domain",
    "grid",
    "damping",
    "restoring",
    "forcing",
    "initial",
    "time",
];

/// Parsed (but not yet validated) problem file: raw section/key/value maps
/// plus the directory data files resolve against.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    base_dir: PathBuf,
}

pub fn parse_problem_file(path: &Path) -> Result<ProblemFile, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    parse_problem_str(&text, base_dir)
}

pub fn parse_problem_str(text: &str, base_dir: PathBuf) -> Result<ProblemFile, ParseError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = match raw.find('#') {
            Some(pos) => raw[..pos].trim(),
            None => raw.trim(),
        };
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ParseError::UnknownSection(name));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ParseError::Syntax {
                line,
                text: trimmed.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section) = &current else {
            return Err(ParseError::KeyOutsideSection { line, key });
        };
        sections
            .get_mut(section)
            .expect("section inserted on header")
            .insert(key, value);
    }
    Ok(ProblemFile { sections, base_dir })
}

impl ProblemFile {
    /// Apply a `section.key=value` override on the raw map.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ParseError> {
        let Some((path, value)) = spec.split_once('=') else {
            return Err(ParseError::BadOverride(spec.to_string()));
        };
        let Some((section, key)) = path.trim().split_once('.') else {
            return Err(ParseError::BadOverride(spec.to_string()));
        };
        if !SECTIONS.contains(&section) {
            return Err(ParseError::UnknownSection(section.to_string()));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// The resolved `section.key = value` pairs in deterministic order,
    /// as recorded in run manifests.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (section, keys) in &self.sections {
            for (key, value) in keys {
                out.push((format!("{section}.{key}"), value.clone()));
            }
        }
        out
    }

    /// Build and validate the problem, consuming every key; unknown keys
    /// are errors. Returns the problem plus any data files it loaded.
    pub fn build(&self) -> Result<BuiltProblem, ParseError> {
        let mut reader = SectionReader::new(&self.sections);

        let c = reader.require_f64("domain", "c")?;
        let d = reader.require_f64("domain", "d")?;
        let domain = BeamDomain::new(c, d)?;
        let n = reader.require_f64("grid", "n")? as usize;
        let grid = Grid::new(&domain, n)?;
        let interior = grid.interior_len();
        let mut loaded = Vec::new();

        // damping
        let m = reader.require_f64("damping", "m")?;
        let form = reader
            .optional("damping", "form")?
            .unwrap_or_else(|| "canonical".to_string());
        let damping = match form.as_str() {
            "canonical" => {
                let a = reader.require_f64("damping", "a")?;
                let a1 = reader.optional_f64("damping", "a1")?.unwrap_or(a);
                let a2 = reader.optional_f64("damping", "a2")?.unwrap_or(a);
                DampingSpec::canonical_enveloped(m, a, a1, a2)
            }
            "composite" => {
                let a1 = reader.require_f64("damping", "a1")?;
                let a2 = reader.require_f64("damping", "a2")?;
                let raw = reader.require("damping", "terms")?;
                let terms = parse_terms(&raw).ok_or_else(|| ParseError::BadTerms {
                    key: "damping.terms".to_string(),
                    value: raw.clone(),
                })?;
                reader.optional("damping", "a")?; // not used by composite
                DampingSpec::composite(m, a1, a2, terms)
            }
            other => {
                return Err(ParseError::UnknownKind {
                    key: "damping.form".to_string(),
                    value: other.to_string(),
                    allowed: "canonical, composite",
                })
            }
        };

        // restoring
        let kind = reader
            .optional("restoring", "kind")?
            .unwrap_or_else(|| "zero".to_string());
        let restoring = match kind.as_str() {
            "zero" => RestoringSpec::Zero,
            "odd-power" => {
                let lambda = reader.require_f64("restoring", "lambda")?;
                let p = reader.require_f64("restoring", "p")? as u32;
                RestoringSpec::OddPower { lambda, p }
            }
            other => {
                return Err(ParseError::UnknownKind {
                    key: "restoring.kind".to_string(),
                    value: other.to_string(),
                    allowed: "zero, odd-power",
                })
            }
        };

        // forcing
        let kind = reader
            .optional("forcing", "kind")?
            .unwrap_or_else(|| "zero".to_string());
        let forcing = match kind.as_str() {
            "zero" => ForcingSpec::Zero,
            "static" | "harmonic" => {
                let values = self.profile_value(
                    &mut reader,
                    "forcing",
                    "profile",
                    "profile_file",
                    &grid,
                    interior,
                    &mut loaded,
                )?;
                let values = values.ok_or(ParseError::MissingKey {
                    section: "forcing",
                    key: "profile",
                })?;
                if kind == "static" {
                    ForcingSpec::Static { values }
                } else {
                    let omega = reader.require_f64("forcing", "omega")?;
                    ForcingSpec::Harmonic { values, omega }
                }
            }
            other => {
                return Err(ParseError::UnknownKind {
                    key: "forcing.kind".to_string(),
                    value: other.to_string(),
                    allowed: "zero, static, harmonic",
                })
            }
        };

        // initial data (defaults to zero)
        let u0 = self
            .profile_value(
                &mut reader,
                "initial",
                "u0",
                "u0_file",
                &grid,
                interior,
                &mut loaded,
            )?
            .unwrap_or_else(|| vec![0.0; interior]);
        let u1 = self
            .profile_value(
                &mut reader,
                "initial",
                "u1",
                "u1_file",
                &grid,
                interior,
                &mut loaded,
            )?
            .unwrap_or_else(|| vec![0.0; interior]);
        let init = InitialData::new(u0, u1);

        // time
        let defaults = SimConfig::default();
        let cfg = SimConfig {
            dt: reader.optional_f64("time", "dt")?.unwrap_or(defaults.dt),
            t_end: reader.require_f64("time", "T")?,
            newton_tol: reader
                .optional_f64("time", "newton_tol")?
                .unwrap_or(defaults.newton_tol),
            newton_max_iter: reader
                .optional_f64("time", "newton_max_iter")?
                .map(|x| x as u32)
                .unwrap_or(defaults.newton_max_iter),
            output_stride: reader
                .optional_f64("time", "output_stride")?
                .map(|x| x as usize)
                .unwrap_or(defaults.output_stride),
        };

        reader.finish()?;
        let problem = validate_problem(domain, grid, damping, restoring, forcing, init, cfg)?;
        Ok(BuiltProblem {
            problem,
            loaded_files: loaded,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn profile_value(
        &self,
        reader: &mut SectionReader<'_>,
        section: &'static str,
        key: &'static str,
        file_key: &'static str,
        grid: &Grid,
        expected: usize,
        loaded: &mut Vec<PathBuf>,
    ) -> Result<Option<Vec<f64>>, ParseError> {
        let inline = reader.optional(section, key)?;
        let from_file = reader.optional(section, file_key)?;
        match (inline, from_file) {
            (Some(_), Some(_)) => Err(ParseError::ConflictingKeys(
                format!("{section}.{key}"),
                format!("{section}.{file_key}"),
            )),
            (Some(spec), None) => {
                let v = parse_profile(&spec, grid).ok_or_else(|| ParseError::BadProfile {
                    key: format!("{section}.{key}"),
                    value: spec.clone(),
                })?;
                Ok(Some(v))
            }
            (None, Some(rel)) => {
                let path = self.base_dir.join(rel);
                let v = load_values(&path, expected)?;
                loaded.push(path);
                Ok(Some(v))
            }
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug)]
pub struct BuiltProblem {
    pub problem: ValidatedProblem,
    /// Data files read while building; digested into the run manifest.
    pub loaded_files: Vec<PathBuf>,
}

/// Tracks which keys were consumed so leftovers can be reported as errors.
struct SectionReader<'a> {
    sections: &'a BTreeMap<String, BTreeMap<String, String>>,
    consumed: BTreeMap<String, Vec<String>>,
}

impl<'a> SectionReader<'a> {
    fn new(sections: &'a BTreeMap<String, BTreeMap<String, String>>) -> Self {
        SectionReader {
            sections,
            consumed: BTreeMap::new(),
        }
    }

    fn optional(&mut self, section: &str, key: &str) -> Result<Option<String>, ParseError> {
        self.consumed
            .entry(section.to_string())
            .or_default()
            .push(key.to_string());
        Ok(self
            .sections
            .get(section)
            .and_then(|keys| keys.get(key))
            .cloned())
    }

    fn require(&mut self, section: &'static str, key: &'static str) -> Result<String, ParseError> {
        self.optional(section, key)?
            .ok_or(ParseError::MissingKey { section, key })
    }

    fn require_f64(&mut self, section: &'static str, key: &'static str) -> Result<f64, ParseError> {
        let raw = self.require(section, key)?;
        raw.parse().map_err(|_| ParseError::BadNumber {
            key: format!("{section}.{key}"),
            value: raw,
        })
    }

    fn optional_f64(
        &mut self,
        section: &'static str,
        key: &'static str,
    ) -> Result<Option<f64>, ParseError> {
        match self.optional(section, key)? {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| ParseError::BadNumber {
                key: format!("{section}.{key}"),
                value: raw,
            }),
        }
    }

    fn finish(self) -> Result<(), ParseError> {
        for (section, keys) in self.sections {
            let consumed = self.consumed.get(section);
            for key in keys.keys() {
                let known = consumed.map(|c| c.contains(key)).unwrap_or(false);
                if !known {
                    return Err(ParseError::UnknownKey {
                        section: section.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `zero` or `sine k=<int> amp=<num>`.
fn parse_profile(spec: &str, grid: &Grid) -> Option<Vec<f64>> {
    let mut tokens = spec.split_whitespace();
    match tokens.next()? {
        "zero" => Some(vec![0.0; grid.interior_len()]),
        "sine" => {
            let mut k: Option<usize> = None;
            let mut amp: Option<f64> = None;
            for tok in tokens {
                let (name, value) = tok.split_once('=')?;
                match name {
                    "k" => k = value.parse().ok(),
                    "amp" => amp = value.parse().ok(),
                    _ => return None,
                }
            }
            Some(grid.sine_profile(k?, amp?))
        }
        _ => None,
    }
}

/// `coef:exp, coef:exp, ...`
fn parse_terms(raw: &str) -> Option<Vec<PowerTerm>> {
    let mut terms = Vec::new();
    for part in raw.split(',') {
        let (coef, exponent) = part.trim().split_once(':')?;
        terms.push(PowerTerm {
            coef: coef.trim().parse().ok()?,
            exponent: exponent.trim().parse().ok()?,
        });
    }
    if terms.is_empty() {
        None
    } else {
        Some(terms)
    }
}

fn load_values(path: &Path, expected: usize) -> Result<Vec<f64>, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = Vec::new();
    for raw in text.lines() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse().map_err(|_| ParseError::BadNumber {
            key: path.display().to_string(),
            value: t.to_string(),
        })?);
    }
    if values.len() != expected {
        return Err(ParseError::DataFileLength {
            path: path.to_path_buf(),
            expected,
            got: values.len(),
        });
    }
    Ok(values)
}
