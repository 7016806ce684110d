//! INI-style run configuration files.
//!
//! A flat, line-oriented format that mirrors [`RunConfig`] field by
//! field, so a pricing run is fully described by a short text file:
//!
//! ```ini
//! [market]
//! spot = 90, 90
//! rate = 0.05
//! dividend = 0.10
//! sigma = 0.20
//!
//! [contract]
//! payoff = max-call        ; or: put
//! strike = 100
//!
//! [grid]
//! horizon = 3
//! steps = 100
//!
//! [run]
//! method = pia             ; pia | classical | lattice | european
//! paths = 100000
//! seed = 42
//!
//! [schedule]
//! lambda = 0.001           ; warm-start ladder down to this temperature
//! iterations = 500         ; per stage
//! ```
//!
//! An explicit schedule replaces the `lambda`/`iterations` shorthand with
//! repeated stage lines:
//!
//! ```ini
//! [schedule]
//! stage = 0.1, 200
//! stage = 0.01, 300
//! ```
//!
//! Everything after `#` or `;` on a line is a comment. Unknown sections
//! and keys are rejected rather than ignored — a typo should fail loudly
//! — and every parse error carries the 1-based line it came from.
//!
//! Optional sections: `[basis]` (`kind = auto | polynomial |
//! andersen-broadie`, `degree`, `payoff-features`), `[run]` extras
//! (`antithetic`, `dual`, `out-of-sample`), and `[classical]` (`penalty`,
//! used by the classical method; defaults to the reciprocal of the final
//! temperature).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    BasisSpec, LambdaSchedule, MarketModel, Method, Payoff, RunConfig, Stage, TimeGrid,
};

/// A parsed configuration file: the core run description plus the
/// CLI-facing extras that do not belong in [`RunConfig`].
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub run: RunConfig,
    /// Antithetic path pairing for the training batch.
    pub antithetic: bool,
    /// Compute the duality upper bound after the final stage.
    pub dual: bool,
    /// Replay the final policy on fresh paths.
    pub out_of_sample: bool,
    /// Penalty strength for the classical method; `None` means derive it
    /// from the final temperature as `1 / lambda`.
    pub penalty: Option<f64>,
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parses configuration text. See the module docs for the format.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let raw = RawConfig::parse(text)?;

    let spot = raw.require("market", "spot")?.f64_list()?;
    let model = MarketModel::new(
        spot,
        raw.require("market", "rate")?.f64()?,
        raw.require("market", "dividend")?.f64()?,
        raw.require("market", "sigma")?.f64()?,
    )?;

    let strike = raw.require("contract", "strike")?.f64()?;
    let payoff_entry = raw.require("contract", "payoff")?;
    let payoff = match payoff_entry.value {
        "max-call" => Payoff::MaxCall { strike },
        "put" => Payoff::Put { strike },
        other => {
            return Err(payoff_entry.error(format!(
                "unknown payoff `{other}` (expected `max-call` or `put`)"
            )))
        }
    };

    let grid = TimeGrid::new(
        raw.require("grid", "horizon")?.f64()?,
        raw.require("grid", "steps")?.usize()?,
    )?;

    let method_entry = raw.require("run", "method")?;
    let method = match method_entry.value {
        "pia" => Method::Pia,
        "classical" => Method::ClassicalPenalization,
        "lattice" => Method::Lattice,
        "european" => Method::European,
        other => {
            return Err(method_entry.error(format!(
                "unknown method `{other}` (expected `pia`, `classical`, `lattice`, or `european`)"
            )))
        }
    };
    let num_paths = raw.require("run", "paths")?.usize()?;
    let seed = raw.optional("run", "seed")?.map_or(Ok(0), |e| e.u64())?;
    let antithetic = raw
        .optional("run", "antithetic")?
        .map_or(Ok(false), |e| e.bool())?;
    let dual = raw
        .optional("run", "dual")?
        .map_or(Ok(false), |e| e.bool())?;
    let out_of_sample = raw
        .optional("run", "out-of-sample")?
        .map_or(Ok(false), |e| e.bool())?;

    let schedule = parse_schedule(&raw)?;
    let basis = parse_basis(&raw, model.dim())?;
    let penalty = raw
        .optional("classical", "penalty")?
        .map(|e| e.f64())
        .transpose()?;

    let run = RunConfig {
        model,
        payoff,
        grid,
        num_paths,
        seed,
        schedule,
        basis,
        method,
    };
    run.validate()?;

    Ok(FileConfig {
        run,
        antithetic,
        dual,
        out_of_sample,
        penalty,
    })
}

fn parse_schedule(raw: &RawConfig<'_>) -> Result<LambdaSchedule> {
    let stages = raw.repeated("schedule", "stage");
    if !stages.is_empty() {
        for key in ["lambda", "iterations"] {
            if let Some(entry) = raw.optional("schedule", key)? {
                return Err(entry.error(format!(
                    "`{key}` cannot be combined with explicit `stage` lines"
                )));
            }
        }
        let mut parsed = Vec::with_capacity(stages.len());
        for entry in stages {
            let parts = entry.f64_list()?;
            if parts.len() != 2 {
                return Err(entry.error("a stage needs exactly `lambda, iterations`"));
            }
            if parts[1].fract() != 0.0 || parts[1] < 1.0 {
                return Err(entry.error("stage iteration count must be a positive integer"));
            }
            parsed.push(Stage {
                lambda: parts[0],
                iterations: parts[1] as usize,
            });
        }
        return LambdaSchedule::new(parsed);
    }

    // shorthand: warm-start ladder down to a target temperature
    match (
        raw.optional("schedule", "lambda")?,
        raw.optional("schedule", "iterations")?,
    ) {
        (Some(lambda), Some(iters)) => LambdaSchedule::ladder(lambda.f64()?, iters.usize()?),
        (None, None) => LambdaSchedule::ladder(0.001, 500),
        (Some(entry), None) | (None, Some(entry)) => {
            Err(entry.error("the schedule shorthand needs both `lambda` and `iterations`"))
        }
    }
}

fn parse_basis(raw: &RawConfig<'_>, dim: usize) -> Result<BasisSpec> {
    let kind = match raw.optional("basis", "kind")? {
        None => return default_basis_checked(raw, dim),
        Some(entry) => entry,
    };
    match kind.value {
        "auto" => default_basis_checked(raw, dim),
        "andersen-broadie" => {
            reject_polynomial_keys(raw)?;
            Ok(BasisSpec::AndersenBroadie13)
        }
        "polynomial" => {
            let degree = raw
                .optional("basis", "degree")?
                .map_or(Ok(5), |e| e.usize())?;
            let payoff_features = raw
                .optional("basis", "payoff-features")?
                .map_or(Ok(true), |e| e.bool())?;
            Ok(BasisSpec::Polynomial {
                degree,
                payoff_features,
            })
        }
        other => Err(kind.error(format!(
            "unknown basis `{other}` (expected `auto`, `polynomial`, or `andersen-broadie`)"
        ))),
    }
}

fn default_basis_checked(raw: &RawConfig<'_>, dim: usize) -> Result<BasisSpec> {
    reject_polynomial_keys(raw)?;
    Ok(BasisSpec::default_for_dim(dim))
}

/// Rejects `degree`/`payoff-features` keys that the selected basis kind
/// would silently ignore.
fn reject_polynomial_keys(raw: &RawConfig<'_>) -> Result<()> {
    for key in ["degree", "payoff-features"] {
        if let Some(entry) = raw.optional("basis", key)? {
            return Err(entry.error(format!("`{key}` requires `kind = polynomial`")));
        }
    }
    Ok(())
}

/// Section/key/value triples with their source lines, plus the schema of
/// accepted names.
struct RawConfig<'a> {
    entries: Vec<Entry<'a>>,
    sections: BTreeMap<&'a str, usize>,
}

#[derive(Clone, Copy)]
struct Entry<'a> {
    section: &'a str,
    key: &'a str,
    value: &'a str,
    line: usize,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("market", &["spot", "rate", "dividend", "sigma"]),
    ("contract", &["payoff", "strike"]),
    ("grid", &["horizon", "steps"]),
    (
        "run",
        &[
            "method",
            "paths",
            "seed",
            "antithetic",
            "dual",
            "out-of-sample",
        ],
    ),
    ("schedule", &["lambda", "iterations", "stage"]),
    ("basis", &["kind", "degree", "payoff-features"]),
    ("classical", &["penalty"]),
];

impl<'a> RawConfig<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut entries: Vec<Entry<'a>> = Vec::new();
        let mut sections = BTreeMap::new();
        let mut current: Option<&'a str> = None;

        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }

            if let Some(name) = stripped.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_error(line, "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(config_error(line, format!("unknown section `[{name}]`")));
                }
                sections.entry(name).or_insert(line);
                current = Some(name);
                continue;
            }

            let section =
                current.ok_or_else(|| config_error(line, "key before any section header"))?;
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                config_error(line, "expected `key = value` or a `[section]` header")
            })?;
            let key = key.trim();
            let value = value.trim();
            let allowed = SCHEMA
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| *keys)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(config_error(
                    line,
                    format!("unknown key `{key}` in section `[{section}]`"),
                ));
            }
            if key != "stage" && entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(config_error(
                    line,
                    format!("duplicate key `{key}` in section `[{section}]`"),
                ));
            }
            if value.is_empty() {
                return Err(config_error(line, format!("empty value for `{key}`")));
            }
            entries.push(Entry {
                section,
                key,
                value,
                line,
            });
        }

        Ok(Self { entries, sections })
    }

    fn optional(&self, section: &str, key: &str) -> Result<Option<Entry<'a>>> {
        Ok(self
            .entries
            .iter()
            .find(|e| e.section == section && e.key == key)
            .copied())
    }

    fn repeated(&self, section: &str, key: &str) -> Vec<Entry<'a>> {
        self.entries
            .iter()
            .filter(|e| e.section == section && e.key == key)
            .copied()
            .collect()
    }

    fn require(&self, section: &str, key: &str) -> Result<Entry<'a>> {
        self.optional(section, key)?.ok_or_else(|| {
            let line = self.sections.get(section).copied().unwrap_or(0);
            config_error(
                line,
                format!("missing required key `{key}` in section `[{section}]`"),
            )
        })
    }
}

impl<'a> Entry<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        config_error(self.line, message)
    }

    fn f64(&self) -> Result<f64> {
        self.value
            .parse::<f64>()
            .map_err(|_| self.error(format!("`{}` is not a number", self.value)))
    }

    fn f64_list(&self) -> Result<Vec<f64>> {
        self.value
            .split([',', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| self.error(format!("`{s}` is not a number")))
            })
            .collect()
    }

    fn usize(&self) -> Result<usize> {
        self.value
            .parse::<usize>()
            .map_err(|_| self.error(format!("`{}` is not a non-negative integer", self.value)))
    }

    fn u64(&self) -> Result<u64> {
        self.value
            .parse::<u64>()
            .map_err(|_| self.error(format!("`{}` is not a non-negative integer", self.value)))
    }

    fn bool(&self) -> Result<bool> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.error(format!("`{other}` is not `true` or `false`"))),
        }
    }
}

fn config_error(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}
