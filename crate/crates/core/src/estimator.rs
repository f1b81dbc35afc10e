//! Continuation-value estimates built from a single observed return path.
//!
//! Training returns are indexed `z_1..z_n`, oldest first. A *window* with
//! origin `t` for stage `j` and lag count `k` covers `z_{t-k}..z_{t+j}`: the
//! `k + 1` returns up to `t` play the role of the observed past, the next `j`
//! play the role of the first `j` horizon returns. Every quantity below is
//! computed along the training path by treating each index `t` as a decision
//! time with sample size `t`:
//!
//! * targets `Y_j[t] = max{g_{j+1}(z_{t+1}..z_{t+j+1}), A_{j+1}[t]}` for
//!   `t <= n - j - 1`, with `A_L = 0`;
//! * expert predictions `P_j[e][t]`, the kernel-weighted mean of the targets
//!   `Y_j[i]`, `k + 1 <= i <= t - j - 1`, around the window at `t`
//!   (0 when there is no such `i` or all kernel weights vanish);
//! * loss sums `S_j[e][t] = sum_{i < t} (P_j[e][i] - Y_j[i])^2`, restricted to
//!   `i <= n - j - 1` (the residuals whose targets lie inside the training
//!   data) and to `i` past the configured skip count;
//! * weights `v_j[e][t]` proportional to `p_e exp(-S_j[e][t] / c)`;
//! * aggregated predictions `A_j[t] = sum_e v_j[e][t] P_j[e][t]`.
//!
//! Stages are fitted backwards from `L - 1` to `0`. Predictions at a fresh
//! query reuse the stored targets and weights, so an evaluation costs one
//! kernel sum per expert.

use rayon::prelude::*;

use crate::domain::{GainSpec, ReturnPath};
use crate::error::{Error, Result};
use crate::kernel::KernelProfile;
use crate::stopping::ContinuationEstimate;

/// One local-averaging estimator: `lags` past returns beyond the current one
/// and a kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expert {
    pub lags: usize,
    pub bandwidth: f64,
}

/// Finite set of experts with a strictly positive prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertGrid {
    experts: Vec<Expert>,
    prior: Vec<f64>,
}

impl ExpertGrid {
    pub fn new(experts: Vec<Expert>, prior: Vec<f64>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::Config("expert grid is empty".into()));
        }
        if experts.len() != prior.len() {
            return Err(Error::Config(format!(
                "{} experts but {} prior probabilities",
                experts.len(),
                prior.len()
            )));
        }
        for e in &experts {
            if !(e.bandwidth.is_finite() && e.bandwidth > 0.0) {
                return Err(Error::Config(format!("bandwidth {} must be positive", e.bandwidth)));
            }
            if e.lags > 64 {
                return Err(Error::Config(format!("lag count {} is unreasonably large", e.lags)));
            }
        }
        for (i, a) in experts.iter().enumerate() {
            if experts[..i].iter().any(|b| b == a) {
                return Err(Error::Config(format!(
                    "duplicate expert (k = {}, h = {})",
                    a.lags, a.bandwidth
                )));
            }
        }
        if prior.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config("prior probabilities must be strictly positive".into()));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("prior sums to {total}, expected 1")));
        }
        Ok(Self { experts, prior })
    }

    /// Every `(k, h)` combination with equal prior mass.
    pub fn uniform(lags: &[usize], bandwidths: &[f64]) -> Result<Self> {
        let experts: Vec<Expert> = lags
            .iter()
            .flat_map(|&k| bandwidths.iter().map(move |&h| Expert { lags: k, bandwidth: h }))
            .collect();
        let p = 1.0 / experts.len().max(1) as f64;
        let prior = vec![p; experts.len()];
        Self::new(experts, prior)
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn max_lags(&self) -> usize {
        self.experts.iter().map(|e| e.lags).max().unwrap_or(0)
    }
}

impl Default for ExpertGrid {
    /// `k in {0, 1, 2}`, `h in {0.001, 0.01, 0.1}`, prior 1/9 each.
    fn default() -> Self {
        Self::uniform(&[0, 1, 2], &[0.001, 0.01, 0.1]).expect("default grid is valid")
    }
}

/// How window returns are turned into kernel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnConvention {
    /// Raw one-step returns.
    StepRelative,
    /// Price ratios against the price at the window origin: `X_{t+s} / X_t`
    /// for the horizon part and `X_{t-s} / X_t` for the past part.
    #[default]
    IntervalAnchored,
}

/// Number of leading residuals dropped from the loss sums of each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkipRule {
    #[default]
    None,
    /// Stage `j` skips `(L - 1 - j) * step` residuals.
    Staged { step: usize },
}

impl SkipRule {
    pub fn skipped(self, stage: usize, horizon: usize) -> usize {
        match self {
            SkipRule::None => 0,
            SkipRule::Staged { step } => horizon.saturating_sub(1 + stage) * step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub grid: ExpertGrid,
    /// Temperature `c` of the exponential weights; `None` means `8 B^2`.
    pub temperature: Option<f64>,
    /// Average the aggregated estimates over all sample sizes `1..=n`.
    pub cesaro: bool,
    pub skip: SkipRule,
    pub convention: ReturnConvention,
    pub kernel: KernelProfile,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            grid: ExpertGrid::default(),
            temperature: None,
            cesaro: false,
            skip: SkipRule::None,
            convention: ReturnConvention::IntervalAnchored,
            kernel: KernelProfile::Gaussian,
        }
    }
}

impl EstimatorConfig {
    pub fn temperature_for(&self, bound: f64) -> f64 {
        self.temperature.unwrap_or(8.0 * bound * bound)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.temperature {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("temperature c must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Writes the kernel coordinates of one window into `out`.
///
/// `past_tail` holds the `k + 1` most recent past returns (oldest first),
/// `horizon` the returns after the window origin.
pub fn window_coordinates(convention: ReturnConvention, past_tail: &[f64], horizon: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match convention {
        ReturnConvention::StepRelative => {
            out.extend_from_slice(past_tail);
            out.extend_from_slice(horizon);
        }
        ReturnConvention::IntervalAnchored => {
            let start = out.len();
            let mut ratio = 1.0;
            for z in past_tail.iter().rev() {
                ratio /= z;
                out.push(ratio);
            }
            out[start..].reverse();
            let mut ratio = 1.0;
            for z in horizon {
                ratio *= z;
                out.push(ratio);
            }
        }
    }
}

/// `(1/n) sum_{i=1}^{n-1} r_i^2` over the residuals `r_1, r_2, ...`, ignoring
/// the first `skip` of them and any beyond `residuals.len()`.
pub fn cumulative_loss_from_residuals(residuals: &[f64], sample_size: usize, skip: usize) -> Result<f64> {
    if sample_size == 0 {
        return Err(Error::Argument("cumulative loss needs sample size >= 1".into()));
    }
    let upto = (sample_size - 1).min(residuals.len());
    let sum: f64 = residuals.iter().take(upto).skip(skip).map(|r| r * r).sum();
    Ok(sum / sample_size as f64)
}

/// Normalized weights `p_e exp(-S_e / c)`. The smallest loss is subtracted
/// before exponentiating; if the weights still degenerate the prior is
/// returned.
pub fn exponential_weights(prior: &[f64], loss_sums: &[f64], c: f64) -> Vec<f64> {
    let mut out = vec![0.0; prior.len()];
    exponential_weights_into(prior, loss_sums.iter().copied(), c, &mut out);
    out
}

fn exponential_weights_into(prior: &[f64], loss_sums: impl Iterator<Item = f64> + Clone, c: f64, out: &mut [f64]) {
    let min = loss_sums.clone().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for ((w, p), s) in out.iter_mut().zip(prior).zip(loss_sums) {
        *w = p * (-(s - min) / c).exp();
        total += *w;
    }
    if !(total.is_finite() && total > 0.0) {
        out.copy_from_slice(prior);
        return;
    }
    for w in out.iter_mut() {
        *w /= total;
    }
}

pub fn convex_combination(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

pub fn cesaro_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("Cesaro mean of no estimates".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Number of kernel evaluations [`fit_stopper`] performs.
pub fn expected_kernel_evaluations(n: usize, horizon: usize, grid: &ExpertGrid) -> u64 {
    let mut total = 0u64;
    for j in 0..horizon {
        for e in grid.experts() {
            let m = n.saturating_sub(2 * j + 1 + e.lags) as u64;
            total += m * (m + 1) / 2;
        }
    }
    total
}

/// Kernel coordinates of all training windows of one `(stage, lags)` pair.
#[derive(Debug, Clone)]
struct WindowTable {
    lags: usize,
    dim: usize,
    /// Origins `lags + 1 ..= n - stage`, `dim` coordinates each.
    data: Vec<f64>,
}

impl WindowTable {
    fn build(train: &[f64], stage: usize, lags: usize, convention: ReturnConvention) -> Self {
        let n = train.len();
        let dim = lags + stage + 1;
        let mut data = Vec::new();
        let mut buf = Vec::with_capacity(dim);
        let last = n.saturating_sub(stage);
        for t in (lags + 1)..=last {
            // z_{t-k}..z_t and z_{t+1}..z_{t+j}, 1-based
            let past = &train[t - lags - 1..t];
            let horizon = &train[t..t + stage];
            window_coordinates(convention, past, horizon, &mut buf);
            data.extend_from_slice(&buf);
        }
        Self { lags, dim, data }
    }

    #[inline]
    fn window(&self, origin: usize) -> &[f64] {
        let start = (origin - self.lags - 1) * self.dim;
        &self.data[start..start + self.dim]
    }
}

#[inline]
fn kernel_weight(kernel: KernelProfile, a: &[f64], b: &[f64], inv_h2: f64, dim: u32) -> f64 {
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sq += d * d;
    }
    kernel.weight(sq * inv_h2, dim)
}

#[derive(Debug, Clone)]
struct StageFit {
    skip: usize,
    /// `Y_j[t]`, `t = 1..=n-j-1`.
    targets: Vec<f64>,
    /// `P_j[e][t]`, `t = 1..=n-j`.
    predictions: Vec<Vec<f64>>,
    /// `loss_prefix[e][i]` = skip-filtered sum of squared residuals `1..=i`,
    /// `i = 0..=n-j-1`.
    loss_prefix: Vec<Vec<f64>>,
    /// `v_j[e][t]` for `t = 1..=n`, row-major by `t`.
    weights: Vec<f64>,
    /// `A_j[t]`, `t = 1..=n-j`.
    aggregated: Vec<f64>,
    /// One table per expert (shared contents for equal lag counts).
    tables: Vec<usize>,
    window_tables: Vec<WindowTable>,
}

impl StageFit {
    fn weights_at(&self, sample_size: usize, experts: usize) -> &[f64] {
        let start = (sample_size - 1) * experts;
        &self.weights[start..start + experts]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitDiagnostics {
    pub kernel_evaluations: u64,
    /// No expert had a usable window at any stage for the full sample size,
    /// so every estimate is identically zero.
    pub degenerate: bool,
}

/// A fit in progress; stages are added in backward order `L-1, ..., 0`.
#[derive(Debug, Clone)]
pub struct FitProgress {
    train: Vec<f64>,
    gains: GainSpec,
    config: EstimatorConfig,
    temperature: f64,
    stages: Vec<Option<StageFit>>,
    kernel_evaluations: u64,
}

impl FitProgress {
    pub fn begin(train: &[f64], gains: GainSpec, config: EstimatorConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Argument("training path is empty".into()));
        }
        if let Some(z) = train.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
            return Err(Error::Domain(format!(
                "training return {z} must be positive and finite"
            )));
        }
        config.validate()?;
        let temperature = config.temperature_for(gains.bound());
        let stages = vec![None; gains.horizon()];
        Ok(Self {
            train: train.to_vec(),
            gains,
            config,
            temperature,
            stages,
            kernel_evaluations: 0,
        })
    }

    /// The stage the next call to [`FitProgress::fit_next_stage`] fits.
    pub fn next_stage(&self) -> Option<usize> {
        self.stages.iter().rposition(Option::is_none)
    }

    pub fn fit_next_stage(&mut self) -> Result<usize> {
        let j = self
            .next_stage()
            .ok_or_else(|| Error::State("all stages already fitted".into()))?;
        let targets = self.compute_targets(j)?;
        let (stage, evals) = self.fit_stage(j, targets);
        self.kernel_evaluations += evals;
        self.stages[j] = Some(stage);
        Ok(j)
    }

    /// Training targets of stage `j`; available once stage `j` is fitted.
    pub fn stage_targets(&self, stage: usize) -> Result<&[f64]> {
        match self.stages.get(stage) {
            None => Err(Error::Argument(format!(
                "no stage {stage} below horizon {}",
                self.stages.len()
            ))),
            Some(None) => Err(Error::State(format!("stage {stage} not fitted yet"))),
            Some(Some(s)) => Ok(&s.targets),
        }
    }

    pub fn finish(self) -> Result<FittedStopper> {
        if let Some(j) = self.next_stage() {
            return Err(Error::State(format!("stage {j} not fitted yet")));
        }
        let n = self.train.len();
        let degenerate = (0..self.stages.len()).all(|j| self.config.grid.experts().iter().all(|e| e.lags + j + 1 >= n));
        let stages = self.stages.into_iter().map(|s| s.expect("checked above")).collect();
        Ok(FittedStopper {
            train: self.train,
            gains: self.gains,
            config: self.config,
            temperature: self.temperature,
            stages,
            diagnostics: FitDiagnostics {
                kernel_evaluations: self.kernel_evaluations,
                degenerate,
            },
        })
    }

    fn compute_targets(&self, j: usize) -> Result<Vec<f64>> {
        let horizon = self.gains.horizon();
        let next = if j + 1 == horizon {
            None
        } else {
            match &self.stages[j + 1] {
                Some(s) => Some(&s.aggregated),
                None => return Err(Error::State(format!("stage {} must be fitted before {j}", j + 1))),
            }
        };
        let n = self.train.len();
        let count = n.saturating_sub(j + 1);
        let bound = self.gains.bound();
        (1..=count)
            .map(|t| {
                let gain = self.gains.eval(j + 1, &self.train[t..t + j + 1])?;
                let cont = next.map_or(0.0, |a| a[t - 1]);
                Ok(gain.max(cont).min(bound))
            })
            .collect()
    }

    fn fit_stage(&self, j: usize, targets: Vec<f64>) -> (StageFit, u64) {
        let n = self.train.len();
        let grid = &self.config.grid;
        let kernel = self.config.kernel;
        let bound = self.gains.bound();
        let experts = grid.experts();

        let mut window_tables: Vec<WindowTable> = Vec::new();
        let tables: Vec<usize> = experts
            .iter()
            .map(|e| match window_tables.iter().position(|w| w.lags == e.lags) {
                Some(i) => i,
                None => {
                    window_tables.push(WindowTable::build(&self.train, j, e.lags, self.config.convention));
                    window_tables.len() - 1
                }
            })
            .collect();

        let last_origin = n.saturating_sub(j);
        let results: Vec<(Vec<f64>, u64)> = experts
            .par_iter()
            .zip(tables.par_iter())
            .map(|(e, &ti)| {
                let table = &window_tables[ti];
                let inv_h2 = 1.0 / (e.bandwidth * e.bandwidth);
                let dim = table.dim as u32;
                let mut evals = 0u64;
                let mut preds = vec![0.0; last_origin];
                for t in 1..=last_origin {
                    let Some(upper) = t.checked_sub(j + 1) else { continue };
                    if upper < e.lags + 1 {
                        continue;
                    }
                    let query = table.window(t);
                    let (mut num, mut den) = (0.0, 0.0);
                    for i in (e.lags + 1)..=upper {
                        let w = kernel_weight(kernel, query, table.window(i), inv_h2, dim);
                        num += w * targets[i - 1];
                        den += w;
                    }
                    evals += (upper - e.lags) as u64;
                    preds[t - 1] = if den > 0.0 { (num / den).clamp(0.0, bound) } else { 0.0 };
                }
                (preds, evals)
            })
            .collect();

        let evals = results.iter().map(|r| r.1).sum();
        let predictions: Vec<Vec<f64>> = results.into_iter().map(|r| r.0).collect();

        let skip = self.config.skip.skipped(j, self.gains.horizon());
        let loss_prefix: Vec<Vec<f64>> = predictions
            .iter()
            .map(|p| {
                let mut prefix = Vec::with_capacity(targets.len() + 1);
                prefix.push(0.0);
                let mut acc = 0.0;
                for (i, (pi, yi)) in p.iter().zip(&targets).enumerate() {
                    if i >= skip {
                        let r = pi - yi;
                        acc += r * r;
                    }
                    prefix.push(acc);
                }
                prefix
            })
            .collect();

        let m = experts.len();
        let mut weights = vec![0.0; n * m];
        for t in 1..=n {
            let idx = (t - 1).min(targets.len());
            exponential_weights_into(
                grid.prior(),
                loss_prefix.iter().map(|lp| lp[idx]),
                self.temperature,
                &mut weights[(t - 1) * m..t * m],
            );
        }

        let aggregated: Vec<f64> = (1..=last_origin)
            .map(|t| {
                let v = &weights[(t - 1) * m..t * m];
                let a: f64 = v.iter().zip(&predictions).map(|(w, p)| w * p[t - 1]).sum();
                a.clamp(0.0, bound)
            })
            .collect();

        let stage = StageFit {
            skip,
            targets,
            predictions,
            loss_prefix,
            weights,
            aggregated,
            tables,
            window_tables,
        };
        (stage, evals)
    }
}

/// Fits every stage of the estimator on the training returns.
pub fn fit_stopper(train: &[f64], gains: GainSpec, config: EstimatorConfig) -> Result<FittedStopper> {
    let mut progress = FitProgress::begin(train, gains, config)?;
    while progress.next_stage().is_some() {
        progress.fit_next_stage()?;
    }
    progress.finish()
}

/// Fits on the past segment of `path`.
pub fn fit_stopper_on(path: &ReturnPath, gains: GainSpec, config: EstimatorConfig) -> Result<FittedStopper> {
    fit_stopper(path.past(), gains, config)
}

/// A fully fitted estimator.
#[derive(Debug, Clone)]
pub struct FittedStopper {
    train: Vec<f64>,
    gains: GainSpec,
    config: EstimatorConfig,
    temperature: f64,
    stages: Vec<StageFit>,
    diagnostics: FitDiagnostics,
}

impl FittedStopper {
    pub fn train(&self) -> &[f64] {
        &self.train
    }

    pub fn sample_size(&self) -> usize {
        self.train.len()
    }

    pub fn gains(&self) -> &GainSpec {
        &self.gains
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }

    fn stage(&self, stage: usize) -> Result<&StageFit> {
        self.stages.get(stage).ok_or_else(|| {
            Error::Argument(format!(
                "stage {stage} has no estimator (horizon {})",
                self.stages.len()
            ))
        })
    }

    fn check_sample_size(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.train.len() {
            return Err(Error::Argument(format!(
                "sample size {m} outside 1..={}",
                self.train.len()
            )));
        }
        Ok(())
    }

    fn check_expert(&self, expert: usize) -> Result<()> {
        if expert >= self.config.grid.len() {
            return Err(Error::Argument(format!(
                "unknown expert #{expert} (grid has {})",
                self.config.grid.len()
            )));
        }
        Ok(())
    }

    fn query_coordinates(&self, stage: usize, lags: usize, past: &[f64], horizon: &[f64]) -> Result<Vec<f64>> {
        if past.len() < lags + 1 {
            return Err(Error::Argument(format!(
                "query past has {} returns, expert needs {}",
                past.len(),
                lags + 1
            )));
        }
        if horizon.len() < stage {
            return Err(Error::Argument(format!(
                "stage {stage} query needs {stage} horizon returns, got {}",
                horizon.len()
            )));
        }
        let mut out = Vec::with_capacity(lags + stage + 1);
        window_coordinates(
            self.config.convention,
            &past[past.len() - lags - 1..],
            &horizon[..stage],
            &mut out,
        );
        Ok(out)
    }

    /// Kernel weights of the training windows `lags+1..=upper` against the
    /// query, in window order.
    fn query_kernel_weights(&self, stage: usize, expert: usize, query: &[f64]) -> (usize, Vec<f64>) {
        let s = &self.stages[stage];
        let e = self.config.grid.experts()[expert];
        let table = &s.window_tables[s.tables[expert]];
        let inv_h2 = 1.0 / (e.bandwidth * e.bandwidth);
        let upper = self.train.len().saturating_sub(stage + 1);
        let weights = ((e.lags + 1)..=upper)
            .map(|i| kernel_weight(self.config.kernel, query, table.window(i), inv_h2, table.dim as u32))
            .collect();
        (e.lags, weights)
    }

    /// Prediction of one expert trained on the first `sample_size` returns,
    /// at the window formed by the tail of `past` and the first `stage`
    /// returns of `horizon`.
    pub fn expert_predict(
        &self,
        stage: usize,
        expert: usize,
        sample_size: usize,
        past: &[f64],
        horizon: &[f64],
    ) -> Result<f64> {
        let s = self.stage(stage)?;
        self.check_expert(expert)?;
        self.check_sample_size(sample_size)?;
        let e = self.config.grid.experts()[expert];
        if horizon.len() < stage {
            return Err(Error::Argument(format!(
                "stage {stage} query needs {stage} horizon returns, got {}",
                horizon.len()
            )));
        }
        let Some(upper) = sample_size.checked_sub(stage + 1) else {
            return Ok(0.0);
        };
        if upper < e.lags + 1 {
            return Ok(0.0);
        }
        let query = self.query_coordinates(stage, e.lags, past, horizon)?;
        let table = &s.window_tables[s.tables[expert]];
        let inv_h2 = 1.0 / (e.bandwidth * e.bandwidth);
        let (mut num, mut den) = (0.0, 0.0);
        for i in (e.lags + 1)..=upper {
            let w = kernel_weight(self.config.kernel, &query, table.window(i), inv_h2, table.dim as u32);
            num += w * s.targets[i - 1];
            den += w;
        }
        Ok(if den > 0.0 {
            (num / den).clamp(0.0, self.gains.bound())
        } else {
            0.0
        })
    }

    /// Targets `Y_j[t]` of stage `j`, `t = 1..=n-j-1`.
    pub fn stage_targets(&self, stage: usize) -> Result<&[f64]> {
        Ok(&self.stage(stage)?.targets)
    }

    /// One-step-ahead predictions `P_j[e][t]` along the training path.
    pub fn online_predictions(&self, stage: usize, expert: usize) -> Result<&[f64]> {
        self.check_expert(expert)?;
        Ok(&self.stage(stage)?.predictions[expert])
    }

    /// Aggregated predictions `A_j[t]` along the training path.
    pub fn aggregated_online(&self, stage: usize) -> Result<&[f64]> {
        Ok(&self.stage(stage)?.aggregated)
    }

    /// Normalized loss `S_j[e][m] / m`.
    pub fn cumulative_loss(&self, stage: usize, expert: usize, sample_size: usize) -> Result<f64> {
        let s = self.stage(stage)?;
        self.check_expert(expert)?;
        self.check_sample_size(sample_size)?;
        let idx = (sample_size - 1).min(s.targets.len());
        Ok(s.loss_prefix[expert][idx] / sample_size as f64)
    }

    /// Aggregation weights `v_j[.][m]`.
    pub fn mixture_weights(&self, stage: usize, sample_size: usize) -> Result<&[f64]> {
        let s = self.stage(stage)?;
        self.check_sample_size(sample_size)?;
        Ok(s.weights_at(sample_size, self.config.grid.len()))
    }

    /// Residuals dropped from each loss sum of `stage`.
    pub fn skipped_residuals(&self, stage: usize) -> Result<usize> {
        Ok(self.stage(stage)?.skip)
    }

    /// Weighted combination of all experts at sample size `m`.
    pub fn aggregate_predict(&self, stage: usize, sample_size: usize, past: &[f64], horizon: &[f64]) -> Result<f64> {
        let weights = self.mixture_weights(stage, sample_size)?;
        let mut total = 0.0;
        for (e, w) in weights.iter().enumerate() {
            total += w * self.expert_predict(stage, e, sample_size, past, horizon)?;
        }
        Ok(total.clamp(0.0, self.gains.bound()))
    }

    /// Mean of the aggregated estimates over sample sizes `1..=n`, each
    /// trained on the first `l` returns and evaluated at the same query.
    pub fn cesaro_predict(&self, stage: usize, past: &[f64], horizon: &[f64]) -> Result<f64> {
        let s = self.stage(stage)?;
        let n = self.train.len();
        let m = self.config.grid.len();
        let bound = self.gains.bound();
        // per expert: running numerator/denominator over windows in order
        let mut sums: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::with_capacity(m);
        if horizon.len() < stage {
            return Err(Error::Argument(format!(
                "stage {stage} query needs {stage} horizon returns, got {}",
                horizon.len()
            )));
        }
        for (e, expert) in self.config.grid.experts().iter().enumerate() {
            if expert.lags + stage + 2 > n {
                // no usable window at any sample size
                sums.push((expert.lags, Vec::new(), Vec::new()));
                continue;
            }
            let query = self.query_coordinates(stage, expert.lags, past, horizon)?;
            let (lags, weights) = self.query_kernel_weights(stage, e, &query);
            let mut num = Vec::with_capacity(weights.len());
            let mut den = Vec::with_capacity(weights.len());
            let (mut a, mut b) = (0.0, 0.0);
            for (offset, w) in weights.iter().enumerate() {
                a += w * s.targets[lags + offset];
                b += w;
                num.push(a);
                den.push(b);
            }
            sums.push((lags, num, den));
        }
        let mut total = 0.0;
        for l in 1..=n {
            let v = s.weights_at(l, m);
            let mut q = 0.0;
            for (w, (lags, num, den)) in v.iter().zip(&sums) {
                let Some(upper) = l.checked_sub(stage + 1) else {
                    continue;
                };
                if upper < lags + 1 {
                    continue;
                }
                let idx = upper - lags - 1;
                if den[idx] > 0.0 {
                    q += w * (num[idx] / den[idx]).clamp(0.0, bound);
                }
            }
            total += q.clamp(0.0, bound);
        }
        Ok(total / n as f64)
    }

    /// The continuation estimate used for stopping: Cesaro-averaged when the
    /// configuration asks for it, otherwise the aggregate at sample size `n`.
    pub fn continuation_at(&self, stage: usize, past: &[f64], horizon: &[f64]) -> Result<f64> {
        if stage == self.stages.len() {
            return Ok(0.0);
        }
        if self.config.cesaro {
            self.cesaro_predict(stage, past, horizon)
        } else {
            self.aggregate_predict(stage, self.train.len(), past, horizon)
        }
    }

    /// Largest normalized excess of the aggregated online loss over the
    /// exponential-weights bound `min_e (S_e - c ln p_e)`, across all sample
    /// sizes of `stage`. Nonpositive when the bound holds.
    pub fn dominance_gap(&self, stage: usize) -> Result<f64> {
        let s = self.stage(stage)?;
        let prior = self.config.grid.prior();
        let c = self.temperature;
        let mut agg = 0.0;
        let mut worst = f64::NEG_INFINITY;
        // sample size N uses residuals 1..=N-1
        for big_n in 1..=s.targets.len() + 1 {
            if big_n >= 2 {
                let i = big_n - 1;
                if i > s.skip {
                    let r = s.aggregated[i - 1] - s.targets[i - 1];
                    agg += r * r;
                }
            }
            let bound = s
                .loss_prefix
                .iter()
                .zip(prior)
                .map(|(lp, p)| lp[big_n - 1] - c * p.ln())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((agg - bound) / big_n as f64);
        }
        Ok(worst)
    }
}

impl ContinuationEstimate for FittedStopper {
    fn horizon(&self) -> usize {
        self.gains.horizon()
    }

    fn continuation(&self, stage: usize, horizon: &[f64]) -> Result<f64> {
        self.continuation_at(stage, &self.train, horizon)
    }
}
