//! Benchmark orchestration: repeated train-then-evaluate runs of every
//! stopping policy, summarized per algorithm.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{baseline_stop, lsm_fit, lsm_stop, BaselineKind, LsmConfig};
use crate::domain::{GainSpec, PayoffKind, PayoffSpec};
use crate::error::{Error, Result};
use crate::estimator::{fit_stopper, EstimatorConfig, SkipRule};
use crate::oracle::{exact_continuation, FiniteModel, OracleTables};
use crate::returns_io::read_returns;
use crate::rng::tags;
use crate::simulate::{EvalPath, GarchParams, Simulator};
use crate::stopping::decide_stop;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// GARCH(1,1) prices and a butterfly spread.
    GarchTable1,
    /// A finite-support return model with an exact oracle.
    FiniteOracle,
    /// Rolling backtest on a returns file.
    CustomData,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "garch-table1" => Ok(Scenario::GarchTable1),
            "finite-oracle" => Ok(Scenario::FiniteOracle),
            "custom-data" => Ok(Scenario::CustomData),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::GarchTable1 => "garch-table1",
            Scenario::FiniteOracle => "finite-oracle",
            Scenario::CustomData => "custom-data",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Stop at the first positive gain.
    Simple1,
    /// Stop at expiry.
    Simple2,
    /// The data-driven kernel estimator.
    New,
    /// Regression Monte Carlo on the hidden simulator state.
    Optstop,
    /// Exact optimal rule (finite models only).
    Oracle,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple1" => Ok(Algorithm::Simple1),
            "simple2" => Ok(Algorithm::Simple2),
            "new" => Ok(Algorithm::New),
            "optstop" => Ok(Algorithm::Optstop),
            "oracle" => Ok(Algorithm::Oracle),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Simple1 => "simple1",
            Algorithm::Simple2 => "simple2",
            Algorithm::New => "new",
            Algorithm::Optstop => "optstop",
            Algorithm::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// Number of training returns.
    pub train_len: usize,
    pub eval_paths: usize,
    pub repetitions: usize,
    /// `L`: exercise dates are epochs `0..=L`.
    pub horizon: usize,
    pub algorithms: Vec<Algorithm>,
    pub estimator: EstimatorConfig,
    pub payoff: PayoffSpec,
    pub lsm: LsmConfig,
    pub garch: GarchParams,
    pub finite: FiniteModel,
    /// Returns file for `custom-data`.
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Replaces the option gains built from `payoff` (library use).
    pub gains: Option<GainSpec>,
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario, seed: u64) -> Self {
        let base = Self {
            scenario,
            seed,
            train_len: 1500,
            eval_paths: 1000,
            repetitions: 100,
            horizon: 4,
            algorithms: vec![
                Algorithm::Simple1,
                Algorithm::Simple2,
                Algorithm::New,
                Algorithm::Optstop,
            ],
            estimator: EstimatorConfig {
                skip: SkipRule::Staged { step: 200 },
                ..Default::default()
            },
            payoff: PayoffSpec::default(),
            lsm: LsmConfig::default(),
            garch: GarchParams::default(),
            finite: FiniteModel::iid(vec![0.99, 1.01], vec![0.5, 0.5]).expect("valid model"),
            data: None,
            output: None,
            gains: None,
        };
        match scenario {
            Scenario::GarchTable1 => base,
            Scenario::FiniteOracle => Self {
                train_len: 5000,
                eval_paths: 10_000,
                repetitions: 1,
                horizon: 2,
                algorithms: vec![
                    Algorithm::Simple1,
                    Algorithm::Simple2,
                    Algorithm::New,
                    Algorithm::Optstop,
                    Algorithm::Oracle,
                ],
                estimator: EstimatorConfig {
                    cesaro: true,
                    ..Default::default()
                },
                payoff: PayoffSpec {
                    kind: PayoffKind::Put { strike: 100.0 },
                    ..Default::default()
                },
                ..base
            },
            Scenario::CustomData => Self {
                eval_paths: 1,
                repetitions: 1,
                algorithms: vec![Algorithm::Simple1, Algorithm::Simple2, Algorithm::New],
                ..base
            },
        }
    }

    fn simulator(&self) -> Option<Simulator> {
        match self.scenario {
            Scenario::GarchTable1 => Some(Simulator::Garch(self.garch)),
            Scenario::FiniteOracle => Some(Simulator::Finite(self.finite.clone())),
            Scenario::CustomData => None,
        }
    }

    /// The gains of the experiment. For finite models the bound is tightened
    /// to the largest reachable gain.
    pub fn gain_spec(&self) -> Result<GainSpec> {
        if let Some(g) = &self.gains {
            if g.horizon() != self.horizon {
                return Err(Error::Config("gain horizon differs from experiment.horizon".into()));
            }
            return Ok(g.clone());
        }
        let gains = GainSpec::option(self.payoff.clone(), self.horizon)?;
        if self.scenario == Scenario::FiniteOracle {
            let tables = exact_continuation(&self.finite, &gains)?;
            let reach = tables.max_gain();
            if reach > 0.0 {
                return gains.with_bound(reach);
            }
        }
        Ok(gains)
    }

    /// Checks everything that can be checked before any simulation.
    pub fn validate(&self) -> Result<()> {
        if self.train_len == 0 || self.eval_paths == 0 || self.repetitions == 0 {
            return Err(Error::Config(
                "train_len, eval_paths and repetitions must be positive".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let need = self.estimator.grid.max_lags() + self.horizon + 1;
        if self.train_len <= need {
            return Err(Error::Config(format!(
                "train_len {} must exceed max lags + horizon + 1 = {need}",
                self.train_len
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::Config(format!("algorithm {a} listed twice")));
            }
        }
        self.estimator.validate()?;
        self.payoff.validate()?;
        match self.scenario {
            Scenario::GarchTable1 => {
                self.garch.validate()?;
                if self.algorithms.contains(&Algorithm::Oracle) {
                    return Err(Error::Config("oracle needs the finite-oracle scenario".into()));
                }
            }
            Scenario::FiniteOracle => {}
            Scenario::CustomData => {
                if self.data.is_none() {
                    return Err(Error::Config("custom-data needs experiment.data".into()));
                }
                if self.eval_paths != 1 {
                    return Err(Error::Config(
                        "custom-data evaluates exactly one path per repetition".into(),
                    ));
                }
                for a in [Algorithm::Optstop, Algorithm::Oracle] {
                    if self.algorithms.contains(&a) {
                        return Err(Error::Config(format!("{a} needs a simulated scenario")));
                    }
                }
            }
        }
        if let Some(sim) = self.simulator() {
            if self.algorithms.contains(&Algorithm::Optstop) {
                self.lsm.validate(sim.state_dim())?;
            }
        }
        self.gain_spec()?;
        Ok(())
    }
}

/// Per-repetition mean payoffs of each algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub algorithms: Vec<Algorithm>,
    /// `per_rep[r][a]` is the mean payoff of algorithm `a` in repetition `r`.
    pub per_rep: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn column(&self, algorithm: Algorithm) -> Option<Vec<f64>> {
        let a = self.algorithms.iter().position(|x| *x == algorithm)?;
        Some(self.per_rep.iter().map(|row| row[a]).collect())
    }

    /// `(algorithm, mean, sd)` per algorithm.
    pub fn summary(&self) -> Result<Vec<(Algorithm, f64, f64)>> {
        self.algorithms
            .iter()
            .map(|a| {
                let (m, s) = summarize(&self.column(*a).expect("listed algorithm"))?;
                Ok((*a, m, s))
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("algorithm,repetition,mean_payoff\n");
        for (a, name) in self.algorithms.iter().enumerate() {
            for (r, row) in self.per_rep.iter().enumerate() {
                let _ = writeln!(out, "{name},{r},{:.6}", row[a]);
            }
        }
        out.push_str("\nsummary\nalgorithm,mean,sd\n");
        for (a, mean, sd) in self.summary()? {
            let _ = writeln!(out, "{a},{mean:.6},{sd:.6}");
        }
        Ok(out)
    }
}

/// Mean and sample standard deviation (divisor `count - 1`; 0 for one value).
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Argument("cannot summarize an empty sequence".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// One repetition's training returns and evaluation paths.
struct RepetitionData {
    past: Vec<f64>,
    paths: Vec<EvalPath>,
    terminal: Option<crate::simulate::Terminal>,
}

fn repetition_data(config: &ExperimentConfig, custom: Option<&[f64]>, r: usize) -> Result<RepetitionData> {
    let stream = [tags::REPETITION, r as u64];
    match (config.simulator(), custom) {
        (Some(sim), _) => {
            let x0 = match &sim {
                Simulator::Garch(p) => p.x0,
                Simulator::Finite(_) => config.payoff.anchor_price,
            };
            let (past, terminal) = sim.past(config.train_len, config.seed, &stream);
            let paths = sim.continuations(
                terminal,
                config.horizon,
                config.eval_paths,
                x0,
                config.seed,
                &stream,
                tags::EVAL,
            )?;
            Ok(RepetitionData {
                past,
                paths,
                terminal: Some(terminal),
            })
        }
        (None, Some(data)) => {
            let origin = config.train_len + r * config.horizon;
            let past = data[origin - config.train_len..origin].to_vec();
            let path = EvalPath::without_state(data[origin..origin + config.horizon].to_vec());
            Ok(RepetitionData {
                past,
                paths: vec![path],
                terminal: None,
            })
        }
        (None, None) => Err(Error::State("custom-data returns not loaded".into())),
    }
}

fn run_repetition(
    config: &ExperimentConfig,
    gains: &GainSpec,
    oracle: Option<&OracleTables>,
    custom: Option<&[f64]>,
    r: usize,
) -> Result<Vec<f64>> {
    let data = repetition_data(config, custom, r)?;
    let n = data.paths.len() as f64;
    let stream = [tags::REPETITION, r as u64];
    let mut row = Vec::with_capacity(config.algorithms.len());
    for algorithm in &config.algorithms {
        let gains_sum: f64 = match algorithm {
            Algorithm::Simple1 | Algorithm::Simple2 => {
                let kind = if *algorithm == Algorithm::Simple1 {
                    BaselineKind::FirstPositive
                } else {
                    BaselineKind::AtExpiry
                };
                data.paths
                    .iter()
                    .map(|p| baseline_stop(kind, gains, &p.returns).map(|d| d.gain))
                    .sum::<Result<f64>>()?
            }
            Algorithm::New => {
                let fitted = fit_stopper(&data.past, gains.clone(), config.estimator.clone())?;
                data.paths
                    .par_iter()
                    .map(|p| decide_stop(&fitted, gains, &p.returns).map(|d| d.gain))
                    .collect::<Result<Vec<f64>>>()?
                    .iter()
                    .sum()
            }
            Algorithm::Optstop => {
                let sim = config
                    .simulator()
                    .ok_or_else(|| Error::Config("optstop needs a simulator".into()))?;
                let terminal = data.terminal.expect("simulated repetition");
                let x0 = match &sim {
                    Simulator::Garch(p) => p.x0,
                    Simulator::Finite(_) => config.payoff.anchor_price,
                };
                let policy = lsm_fit(&config.lsm, &sim, terminal, gains, x0, config.seed, &stream)?;
                data.paths
                    .par_iter()
                    .map(|p| lsm_stop(&policy, p).map(|d| d.gain))
                    .collect::<Result<Vec<f64>>>()?
                    .iter()
                    .sum()
            }
            Algorithm::Oracle => {
                let tables = oracle.ok_or_else(|| Error::Config("oracle needs the finite-oracle scenario".into()))?;
                let rule = tables.for_past(data.past.last().copied())?;
                data.paths
                    .iter()
                    .map(|p| decide_stop(&rule, gains, &p.returns).map(|d| d.gain))
                    .sum::<Result<f64>>()?
            }
        };
        row.push(gains_sum / n);
    }
    Ok(row)
}

/// Runs every repetition (in parallel, each on its own random substream) and
/// writes the CSV to `config.output` when set.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let gains = config.gain_spec()?;
    let custom = match config.scenario {
        Scenario::CustomData => {
            let path = config.data.as_ref().expect("validated");
            let data = read_returns(path)?;
            let need = config.train_len + config.repetitions * config.horizon;
            if data.len() < need {
                return Err(Error::Data {
                    line: data.len(),
                    message: format!(
                        "{} returns cannot cover {} training returns and {} windows of {}",
                        data.len(),
                        config.train_len,
                        config.repetitions,
                        config.horizon
                    ),
                });
            }
            Some(data.values().to_vec())
        }
        _ => None,
    };
    let oracle = match config.scenario {
        Scenario::FiniteOracle if config.algorithms.contains(&Algorithm::Oracle) => {
            Some(exact_continuation(&config.finite, &gains)?)
        }
        _ => None,
    };
    let per_rep = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, &gains, oracle.as_ref(), custom.as_deref(), r))
        .collect::<Result<Vec<_>>>()?;
    let table = ResultTable {
        algorithms: config.algorithms.clone(),
        per_rep,
    };
    if let Some(path) = &config.output {
        std::fs::write(path, table.to_csv()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(table)
}
