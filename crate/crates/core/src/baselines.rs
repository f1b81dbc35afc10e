//! Comparator policies: two fixed rules and a regression Monte Carlo policy
//! that sees the simulator's hidden state.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::GainSpec;
use crate::error::{Error, Result};
use crate::rng::tags;
use crate::simulate::{EvalPath, Simulator, Terminal};
use crate::stopping::{decide_stop, ContinuationEstimate, StopDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// First epoch with a strictly positive gain, else expiry.
    FirstPositive,
    AtExpiry,
}

/// Applies a fixed rule. Trace entries carry a zero threshold.
pub fn baseline_stop(kind: BaselineKind, gains: &GainSpec, horizon: &[f64]) -> Result<StopDecision> {
    let last = gains.horizon();
    if horizon.len() < last {
        return Err(Error::Argument(format!(
            "evaluation path has {} horizon returns, need {last}",
            horizon.len()
        )));
    }
    let mut trace = Vec::with_capacity(last + 1);
    let first = match kind {
        BaselineKind::FirstPositive => 0,
        BaselineKind::AtExpiry => last,
    };
    for j in first..=last {
        let g = gains.eval(j, &horizon[..j])?;
        trace.push((g, 0.0));
        if g > 0.0 || j == last {
            return Ok(StopDecision { tau: j, gain: g, trace });
        }
    }
    unreachable!("loop always stops at the last epoch")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmConfig {
    /// Total degree of the polynomial basis.
    pub degree: u32,
    pub num_train_paths: usize,
    /// Penalty on non-intercept coefficients, on standardized features.
    pub ridge: f64,
}

impl Default for LsmConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            num_train_paths: 1000,
            ridge: 1e-8,
        }
    }
}

impl LsmConfig {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Config(format!("lsm ridge {} must be nonnegative", self.ridge)));
        }
        let dim = basis_dimension(state_dim, self.degree);
        if self.num_train_paths < dim {
            return Err(Error::Config(format!(
                "lsm needs at least {dim} training paths for degree {}, got {}",
                self.degree, self.num_train_paths
            )));
        }
        Ok(())
    }
}

/// Number of monomials of total degree at most `degree` in `vars` variables.
pub fn basis_dimension(vars: usize, degree: u32) -> usize {
    // C(vars + degree, degree)
    (1..=degree as usize).fold(1usize, |acc, i| acc * (vars + i) / i)
}

fn exponents(vars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(vars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == vars {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(vars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(vars, degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Least-squares polynomial fit of targets on standardized state features.
/// Features that are constant over the sample are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFit {
    kept: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    exponents: Vec<Vec<u32>>,
    coef: Vec<f64>,
}

impl PolynomialFit {
    pub fn fit(states: &[&[f64]], targets: &[f64], degree: u32, ridge: f64) -> Result<Self> {
        let n = states.len();
        if n == 0 || n != targets.len() {
            return Err(Error::Argument(
                "regression needs matching nonempty states and targets".into(),
            ));
        }
        let dim = states[0].len();
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for c in 0..dim {
            let m = states.iter().map(|s| s[c]).sum::<f64>() / n as f64;
            let var = states.iter().map(|s| (s[c] - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                kept.push(c);
                mean.push(m);
                scale.push(sd);
            }
        }
        let exps = exponents(kept.len(), degree);
        let p = exps.len();
        let mut fit = Self {
            kept,
            mean,
            scale,
            exponents: exps,
            coef: vec![0.0; p],
        };
        let rows: Vec<Vec<f64>> = states.par_iter().map(|s| fit.features(s)).collect();
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let y = DVector::from_column_slice(targets);
        let mut gram = x.transpose() * &x / n as f64;
        for j in 1..p {
            gram[(j, j)] += ridge;
        }
        let rhs = x.transpose() * y / n as f64;
        let coef = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::State(format!("least squares solve failed: {e}")))?,
        };
        fit.coef = coef.iter().copied().collect();
        Ok(fit)
    }

    fn features(&self, state: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .kept
            .iter()
            .enumerate()
            .map(|(i, c)| (state[*c] - self.mean[i]) / self.scale[i])
            .collect();
        self.exponents
            .iter()
            .map(|e| e.iter().zip(&z).map(|(k, v)| v.powi(*k as i32)).product())
            .collect()
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        self.features(state).iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }
}

/// Fitted regression policy: one continuation-value fit per epoch `j < L`.
#[derive(Debug, Clone)]
pub struct LsmPolicy {
    gains: GainSpec,
    fits: Vec<PolynomialFit>,
}

impl LsmPolicy {
    /// Backward induction on training paths that carry hidden states:
    /// regress `max{g_{j+1}, q_{j+1}(state_{j+1})}` on `state_j`.
    pub fn fit_on_paths(config: &LsmConfig, gains: &GainSpec, paths: &[EvalPath]) -> Result<Self> {
        let horizon = gains.horizon();
        let states: Vec<&Vec<Vec<f64>>> = paths
            .iter()
            .map(|p| {
                p.states
                    .as_ref()
                    .ok_or_else(|| Error::Argument("training path lacks hidden state".into()))
            })
            .collect::<Result<_>>()?;
        let state_dim = states.first().map_or(0, |s| s[0].len());
        config.validate(state_dim)?;
        if paths.iter().any(|p| p.returns.len() < horizon) {
            return Err(Error::Argument("training path shorter than the horizon".into()));
        }
        let bound = gains.bound();
        // value[i] = max{g_{j+1}, q_{j+1}} on path i, starting with g_L
        let mut value: Vec<f64> = paths
            .par_iter()
            .map(|p| gains.eval(horizon, &p.returns[..horizon]))
            .collect::<Result<_>>()?;
        let mut fits = Vec::with_capacity(horizon);
        for j in (0..horizon).rev() {
            let x: Vec<&[f64]> = states.iter().map(|s| s[j].as_slice()).collect();
            let fit = PolynomialFit::fit(&x, &value, config.degree, config.ridge)?;
            if j > 0 {
                value = paths
                    .par_iter()
                    .zip(&states)
                    .map(|(p, s)| {
                        let q = fit.predict(&s[j]).clamp(0.0, bound);
                        Ok(gains.eval(j, &p.returns[..j])?.max(q))
                    })
                    .collect::<Result<_>>()?;
            }
            fits.push(fit);
        }
        fits.reverse();
        Ok(Self {
            gains: gains.clone(),
            fits,
        })
    }

    /// Continuation value at epoch `j`, clipped to `[0, B]`.
    pub fn continuation_at(&self, stage: usize, state: &[f64]) -> f64 {
        if stage >= self.fits.len() {
            return 0.0;
        }
        self.fits[stage].predict(state).clamp(0.0, self.gains.bound())
    }

    pub fn gains(&self) -> &GainSpec {
        &self.gains
    }
}

/// Trains the regression policy on continuations of `terminal` drawn from
/// the `LSM` substream.
pub fn lsm_fit(
    config: &LsmConfig,
    simulator: &Simulator,
    terminal: Terminal,
    gains: &GainSpec,
    x0: f64,
    seed: u64,
    stream_tags: &[u64],
) -> Result<LsmPolicy> {
    config.validate(simulator.state_dim())?;
    let paths = simulator.continuations(
        terminal,
        gains.horizon(),
        config.num_train_paths,
        x0,
        seed,
        stream_tags,
        tags::LSM,
    )?;
    LsmPolicy::fit_on_paths(config, gains, &paths)
}

struct StatefulPath<'a> {
    policy: &'a LsmPolicy,
    states: &'a [Vec<f64>],
}

impl ContinuationEstimate for StatefulPath<'_> {
    fn horizon(&self) -> usize {
        self.policy.gains.horizon()
    }

    fn continuation(&self, stage: usize, _horizon: &[f64]) -> Result<f64> {
        Ok(self.policy.continuation_at(stage, &self.states[stage]))
    }
}

pub fn lsm_stop(policy: &LsmPolicy, path: &EvalPath) -> Result<StopDecision> {
    let states = path
        .states
        .as_deref()
        .ok_or_else(|| Error::Argument("evaluation path lacks hidden state".into()))?;
    if states.len() <= policy.gains.horizon() {
        return Err(Error::Argument("evaluation path has too few states".into()));
    }
    decide_stop(&StatefulPath { policy, states }, &policy.gains, &path.returns)
}
