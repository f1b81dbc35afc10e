//! Flat `section.key = value` configuration files.
//!
//! One key per line; `#` starts a comment; blank lines are ignored. Values are
//! scalars or comma-separated lists (Markov transition rows are separated by
//! `;`). Later layers override earlier ones in this order: scenario defaults,
//! file, preset, command-line overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::baselines::LsmConfig;
use crate::domain::{PayoffKind, PayoffSpec};
use crate::error::{Error, Result};
use crate::estimator::{ExpertGrid, ReturnConvention, SkipRule};
use crate::harness::{Algorithm, ExperimentConfig, Scenario};
use crate::kernel::KernelProfile;
use crate::oracle::FiniteModel;

/// Every key the builder understands.
pub const KEYS: &[&str] = &[
    "experiment.scenario",
    "experiment.seed",
    "experiment.train_len",
    "experiment.eval_paths",
    "experiment.repetitions",
    "experiment.horizon",
    "experiment.algorithms",
    "experiment.data",
    "experiment.output",
    "payoff.kind",
    "payoff.lower",
    "payoff.upper",
    "payoff.strike",
    "payoff.knots",
    "payoff.rate",
    "payoff.step",
    "payoff.anchor",
    "estimator.lags",
    "estimator.bandwidths",
    "estimator.prior",
    "estimator.temperature",
    "estimator.cesaro",
    "estimator.skip_step",
    "estimator.convention",
    "estimator.kernel",
    "lsm.degree",
    "lsm.train_paths",
    "lsm.ridge",
    "garch.r_star",
    "garch.lambda",
    "garch.delta0",
    "garch.delta1",
    "garch.xi1",
    "garch.burn_in",
    "garch.x0",
    "finite.kind",
    "finite.support",
    "finite.law",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// 0 for command-line overrides.
    line: usize,
}

/// Parsed key-value pairs with the line each came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigEntries {
    entries: BTreeMap<String, Entry>,
}

fn located(line: usize, key: &str, message: impl std::fmt::Display) -> Error {
    if line == 0 {
        Error::Config(format!("--set {key}: {message}"))
    } else {
        Error::Config(format!("line {line}: {key}: {message}"))
    }
}

fn check_key(key: &str) -> std::result::Result<(), String> {
    match key.split_once('.') {
        Some((section, name)) if !section.is_empty() && !name.is_empty() => {}
        _ => return Err(format!("key {key:?} must have the form section.key")),
    }
    if !KEYS.contains(&key) {
        return Err(format!("unknown key {key:?}"));
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ConfigEntries> {
    let mut out = ConfigEntries::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `section.key = value`")))?;
        let key = key.trim();
        check_key(key).map_err(|m| Error::Config(format!("line {line}: {m}")))?;
        if let Some(prev) = out.entries.get(key) {
            return Err(Error::Config(format!(
                "line {line}: {key} already set on line {}",
                prev.line
            )));
        }
        out.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

impl ConfigEntries {
    /// Applies a `key=value` override, replacing any file value.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {assignment:?}: expected key=value")))?;
        let key = key.trim();
        check_key(key).map_err(|m| Error::Config(format!("--set: {m}")))?;
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn parsed<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| located(e.line, key, m)),
        }
    }

    /// Re-locates an error raised while combining several keys onto the
    /// first of them that was set.
    fn relocate(&self, keys: &[&str], err: Error) -> Error {
        let message = match err {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        match keys.iter().find_map(|k| self.entries.get(*k).map(|e| (*k, e.line))) {
            Some((k, line)) => located(line, k, message),
            None => Error::Config(message),
        }
    }
}

fn number<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn positive_count(s: &str) -> std::result::Result<usize, String> {
    let n: usize = number(s)?;
    if n == 0 {
        return Err("must be positive".into());
    }
    Ok(n)
}

fn list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items.into_iter().map(number).collect()
}

fn positive_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = list(s)?;
    match v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(x) => Err(format!("{x} must be positive")),
        None => Ok(v),
    }
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got {s:?}")),
    }
}

fn knots(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| format!("knot {pair:?} must be price:payoff"))?;
            Ok((number(x.trim())?, number(y.trim())?))
        })
        .collect()
}

fn matrix(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    s.split(';').map(list).collect()
}

/// Desk-scale preset: small enough for continuous integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

impl Preset {
    /// 5 repetitions of 200 evaluation paths on a 500-step past, no Cesaro
    /// averaging. A staged skip is scaled with the training length.
    pub fn apply(self, config: &mut ExperimentConfig) {
        match self {
            Preset::Desk => {
                let old_len = config.train_len;
                config.repetitions = 5;
                config.eval_paths = 200;
                config.train_len = 500;
                config.estimator.cesaro = false;
                if let SkipRule::Staged { step } = config.estimator.skip {
                    let scaled = (step as f64 * 500.0 / old_len as f64).round() as usize;
                    config.estimator.skip = SkipRule::Staged { step: scaled };
                }
            }
        }
    }
}

/// Resolves the layered configuration. `scenario` and `seed` from the command
/// line take precedence over the file.
pub fn build_experiment(
    file: &ConfigEntries,
    overrides: &[String],
    scenario: Option<Scenario>,
    seed: Option<u64>,
    preset: Option<Preset>,
) -> Result<ExperimentConfig> {
    let scenario = match scenario {
        Some(s) => s,
        None => file
            .parsed("experiment.scenario", |s| {
                s.parse::<Scenario>().map_err(|e| e.to_string())
            })?
            .ok_or_else(|| Error::Config("no scenario given".into()))?,
    };
    let seed = match seed {
        Some(s) => s,
        None => file
            .parsed("experiment.seed", number::<u64>)?
            .ok_or_else(|| Error::Config("no seed given".into()))?,
    };
    let mut config = ExperimentConfig::for_scenario(scenario, seed);
    apply_entries(&mut config, file)?;
    if let Some(p) = preset {
        p.apply(&mut config);
    }
    let mut cli = ConfigEntries::default();
    for o in overrides {
        cli.set_override(o)?;
    }
    apply_entries(&mut config, &cli)?;
    config.validate()?;
    Ok(config)
}

fn apply_entries(config: &mut ExperimentConfig, e: &ConfigEntries) -> Result<()> {
    if let Some(v) = e.parsed("experiment.train_len", positive_count)? {
        config.train_len = v;
    }
    if let Some(v) = e.parsed("experiment.eval_paths", positive_count)? {
        config.eval_paths = v;
    }
    if let Some(v) = e.parsed("experiment.repetitions", positive_count)? {
        config.repetitions = v;
    }
    if let Some(v) = e.parsed("experiment.horizon", number::<usize>)? {
        config.horizon = v;
    }
    if let Some(v) = e.parsed("experiment.algorithms", |s| {
        s.split(',')
            .map(|a| a.trim().parse::<Algorithm>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()
    })? {
        config.algorithms = v;
    }
    if let Some(v) = e.get("experiment.data") {
        config.data = Some(PathBuf::from(v));
    }
    if let Some(v) = e.get("experiment.output") {
        config.output = Some(PathBuf::from(v));
    }

    apply_payoff(&mut config.payoff, e)?;

    let lags = e.parsed("estimator.lags", list::<usize>)?;
    let bandwidths = e.parsed("estimator.bandwidths", positive_list)?;
    let prior = e.parsed("estimator.prior", list::<f64>)?;
    if lags.is_some() || bandwidths.is_some() || prior.is_some() {
        let current = &config.estimator.grid;
        let mut old_lags: Vec<usize> = current.experts().iter().map(|x| x.lags).collect();
        old_lags.dedup();
        let mut old_bw: Vec<f64> = current.experts().iter().map(|x| x.bandwidth).collect();
        old_bw.sort_by(f64::total_cmp);
        old_bw.dedup();
        let lags = lags.unwrap_or(old_lags);
        let bandwidths = bandwidths.unwrap_or(old_bw);
        let keys = ["estimator.prior", "estimator.lags", "estimator.bandwidths"];
        let grid = ExpertGrid::uniform(&lags, &bandwidths).map_err(|err| e.relocate(&keys[1..], err))?;
        config.estimator.grid = match prior {
            Some(p) => ExpertGrid::new(grid.experts().to_vec(), p).map_err(|err| e.relocate(&keys, err))?,
            None => grid,
        };
    }
    if let Some(v) = e.parsed("estimator.temperature", |s| {
        if s == "auto" {
            Ok(None)
        } else {
            number::<f64>(s).map(Some)
        }
    })? {
        config.estimator.temperature = v;
    }
    if let Some(v) = e.parsed("estimator.cesaro", boolean)? {
        config.estimator.cesaro = v;
    }
    if let Some(v) = e.parsed("estimator.skip_step", number::<usize>)? {
        config.estimator.skip = if v == 0 {
            SkipRule::None
        } else {
            SkipRule::Staged { step: v }
        };
    }
    if let Some(v) = e.parsed("estimator.convention", |s| match s {
        "anchored" => Ok(ReturnConvention::IntervalAnchored),
        "step" => Ok(ReturnConvention::StepRelative),
        _ => Err(format!("expected anchored or step, got {s:?}")),
    })? {
        config.estimator.convention = v;
    }
    if let Some(v) = e.parsed("estimator.kernel", |s| match s {
        "gaussian" => Ok(KernelProfile::Gaussian),
        "compact" => Ok(KernelProfile::CompactUniform),
        _ => Err(format!("expected gaussian or compact, got {s:?}")),
    })? {
        config.estimator.kernel = v;
    }

    apply_lsm(&mut config.lsm, e)?;

    let g = &mut config.garch;
    for (key, slot) in [
        ("garch.r_star", &mut g.r_star),
        ("garch.lambda", &mut g.lambda),
        ("garch.delta0", &mut g.delta0),
        ("garch.delta1", &mut g.delta1),
        ("garch.xi1", &mut g.xi1),
        ("garch.x0", &mut g.x0),
    ] {
        if let Some(v) = e.parsed(key, number::<f64>)? {
            *slot = v;
        }
    }
    if let Some(v) = e.parsed("garch.burn_in", number::<usize>)? {
        g.burn_in = v;
    }

    let kind = e.get("finite.kind");
    let support = e.parsed("finite.support", list::<f64>)?;
    let law = e.get("finite.law");
    if kind.is_some() || support.is_some() || law.is_some() {
        let markov = match kind {
            None => config.finite.is_markov(),
            Some("iid") => false,
            Some("markov") => true,
            Some(other) => return Err(Error::Config(format!("finite.kind: unknown kind {other:?}"))),
        };
        let support = support.unwrap_or_else(|| config.finite.support().to_vec());
        let s = support.len();
        config.finite = if markov {
            let m = match e.parsed("finite.law", matrix)? {
                Some(m) => m,
                None => vec![vec![1.0 / s as f64; s]; s],
            };
            FiniteModel::markov(support, m)?
        } else {
            let p = match e.parsed("finite.law", list::<f64>)? {
                Some(p) => p,
                None => vec![1.0 / s as f64; s],
            };
            FiniteModel::iid(support, p)?
        };
    }
    Ok(())
}

fn apply_payoff(payoff: &mut PayoffSpec, e: &ConfigEntries) -> Result<()> {
    if let Some(kind) = e.parsed("payoff.kind", |s| match s {
        "butterfly" => Ok(PayoffKind::butterfly()),
        "put" => Ok(PayoffKind::Put { strike: 100.0 }),
        "table" => Ok(PayoffKind::Table { knots: Vec::new() }),
        other => Err(format!("unknown kind {other:?}")),
    })? {
        payoff.kind = kind;
    }
    let lower = e.parsed("payoff.lower", number::<f64>)?;
    let upper = e.parsed("payoff.upper", number::<f64>)?;
    let strike = e.parsed("payoff.strike", number::<f64>)?;
    let table = e.parsed("payoff.knots", knots)?;
    match &mut payoff.kind {
        PayoffKind::Butterfly { lower: l, upper: u } => {
            *l = lower.unwrap_or(*l);
            *u = upper.unwrap_or(*u);
        }
        PayoffKind::Put { strike: k } => *k = strike.unwrap_or(*k),
        PayoffKind::Table { knots: k } => {
            if let Some(t) = table {
                *k = t;
            }
        }
    }
    let foreign: &[&str] = match payoff.kind {
        PayoffKind::Butterfly { .. } => &["payoff.strike", "payoff.knots"],
        PayoffKind::Put { .. } => &["payoff.lower", "payoff.upper", "payoff.knots"],
        PayoffKind::Table { .. } => &["payoff.lower", "payoff.upper", "payoff.strike"],
    };
    if foreign.iter().any(|k| e.get(k).is_some()) {
        let message = format!("does not apply to payoff kind {}", payoff.kind.name());
        return Err(e.relocate(foreign, Error::Config(message)));
    }
    if let Some(v) = e.parsed("payoff.rate", number::<f64>)? {
        payoff.rate = v;
    }
    if let Some(v) = e.parsed("payoff.step", number::<f64>)? {
        payoff.step = v;
    }
    if let Some(v) = e.parsed("payoff.anchor", number::<f64>)? {
        payoff.anchor_price = v;
    }
    Ok(())
}

fn apply_lsm(lsm: &mut LsmConfig, e: &ConfigEntries) -> Result<()> {
    if let Some(v) = e.parsed("lsm.degree", number::<u32>)? {
        lsm.degree = v;
    }
    if let Some(v) = e.parsed("lsm.train_paths", positive_count)? {
        lsm.num_train_paths = v;
    }
    if let Some(v) = e.parsed("lsm.ridge", number::<f64>)? {
        lsm.ridge = v;
    }
    Ok(())
}
