//! Exact dynamic programming on finite-support return models.
//!
//! Horizon histories are encoded in mixed radix: the history
//! `(a_1, ..., a_t)` of support indices has index `((a_1 s + a_2) s + ...) + a_t`
//! among the `s^t` histories of length `t`. For Markov models every table is
//! additionally conditioned on the last observed past return (the *origin*).
//!
//! Conditioning on the whole infinite past reduces to conditioning on the
//! origin for these models, so the unconditional form of the error bound in
//! [`stopping_gap_check`] is the integrated version of the conditional one.

use crate::domain::GainSpec;
use crate::error::{Error, Result};
use crate::rng::{tags, Substream};
use crate::stopping::{decide_stop, ContinuationEstimate};

/// Default cap on the number of DP states (all epochs together).
pub const DEFAULT_STATE_CAP: usize = 1 << 22;
/// Cap on the number of stopping rules enumerated exhaustively.
pub const RULE_CAP: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum FiniteLaw {
    Iid(Vec<f64>),
    /// `matrix[a][b]` = probability of return `b` after return `a`.
    Markov(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    support: Vec<f64>,
    law: FiniteLaw,
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config(format!(
            "{what} has a negative or non-finite probability"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

impl FiniteModel {
    pub fn iid(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::check_support(&support)?;
        if probs.len() != support.len() {
            return Err(Error::Config("law and support lengths differ".into()));
        }
        check_probabilities(&probs, "law")?;
        Ok(Self {
            support,
            law: FiniteLaw::Iid(probs),
        })
    }

    pub fn markov(support: Vec<f64>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        Self::check_support(&support)?;
        if matrix.len() != support.len() || matrix.iter().any(|r| r.len() != support.len()) {
            return Err(Error::Config(
                "transition matrix must be square over the support".into(),
            ));
        }
        for (i, row) in matrix.iter().enumerate() {
            check_probabilities(row, &format!("transition row {i}"))?;
        }
        Ok(Self {
            support,
            law: FiniteLaw::Markov(matrix),
        })
    }

    fn check_support(support: &[f64]) -> Result<()> {
        if support.is_empty() {
            return Err(Error::Config("support is empty".into()));
        }
        if support.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::Config("support values must be positive and finite".into()));
        }
        for (i, a) in support.iter().enumerate() {
            if support[..i].contains(a) {
                return Err(Error::Config(format!("support value {a} repeated")));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn law(&self) -> &FiniteLaw {
        &self.law
    }

    pub fn is_markov(&self) -> bool {
        matches!(self.law, FiniteLaw::Markov(_))
    }

    /// Distribution of the next return given the previous one (ignored for
    /// i.i.d. models).
    pub fn next_law(&self, previous: usize) -> &[f64] {
        match &self.law {
            FiniteLaw::Iid(p) => p,
            FiniteLaw::Markov(m) => &m[previous],
        }
    }

    /// Stationary distribution of a single return.
    pub fn stationary(&self) -> Vec<f64> {
        match &self.law {
            FiniteLaw::Iid(p) => p.clone(),
            FiniteLaw::Markov(m) => {
                let s = self.support.len();
                // lazy chain converges for every stochastic matrix
                let mut pi = vec![1.0 / s as f64; s];
                for _ in 0..100_000 {
                    let mut next = vec![0.0; s];
                    for (a, pa) in pi.iter().enumerate() {
                        for (b, pb) in m[a].iter().enumerate() {
                            next[b] += 0.5 * pa * pb;
                        }
                        next[a] += 0.5 * pa;
                    }
                    let diff: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
                    pi = next;
                    if diff < 1e-15 {
                        break;
                    }
                }
                pi
            }
        }
    }

    /// Index of the support value equal to `z` (up to 1e-9 relative error).
    pub fn support_index(&self, z: f64) -> Option<usize> {
        self.support.iter().position(|s| (s - z).abs() <= 1e-9 * s.abs())
    }

    fn origins(&self) -> Vec<usize> {
        match self.law {
            FiniteLaw::Iid(_) => vec![0],
            FiniteLaw::Markov(_) => (0..self.support.len()).collect(),
        }
    }

    fn origin_slot(&self, last_past: Option<f64>) -> Result<usize> {
        match self.law {
            FiniteLaw::Iid(_) => Ok(0),
            FiniteLaw::Markov(_) => {
                let z = last_past.ok_or_else(|| Error::Argument("Markov model needs the last past return".into()))?;
                self.support_index(z)
                    .ok_or_else(|| Error::Argument(format!("return {z} not in the model support")))
            }
        }
    }

    /// Draws one return after `previous`.
    pub fn draw(&self, previous: usize, stream: &mut Substream) -> usize {
        stream.categorical(self.next_law(previous))
    }
}

fn history_returns(model: &FiniteModel, mut index: usize, len: usize, out: &mut Vec<f64>) {
    let s = model.support.len();
    out.clear();
    out.resize(len, 0.0);
    for slot in out.iter_mut().rev() {
        *slot = model.support[index % s];
        index /= s;
    }
}

fn state_count(s: usize, horizon: usize) -> Option<usize> {
    let mut total = 0usize;
    let mut layer = 1usize;
    for _ in 0..=horizon {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(s)?;
    }
    Some(total)
}

/// Continuation values `q_t` and value functions `V_t` on every reachable
/// history, per origin.
#[derive(Debug, Clone)]
pub struct OracleTables {
    model: FiniteModel,
    gains: GainSpec,
    /// `[origin][t][history]`.
    q: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    g: Vec<Vec<Vec<f64>>>,
}

/// Backward induction `q_t = E[max{g_{t+1}, q_{t+1}} | history]`, `q_L = 0`.
pub fn exact_continuation(model: &FiniteModel, gains: &GainSpec) -> Result<OracleTables> {
    exact_continuation_capped(model, gains, DEFAULT_STATE_CAP)
}

pub fn exact_continuation_capped(model: &FiniteModel, gains: &GainSpec, cap: usize) -> Result<OracleTables> {
    let s = model.support.len();
    let horizon = gains.horizon();
    let origins = model.origins();
    let states = state_count(s, horizon)
        .and_then(|c| c.checked_mul(origins.len()))
        .filter(|c| *c <= cap)
        .ok_or_else(|| {
            Error::Resource(format!(
                "{s}-point support over {horizon} epochs exceeds the cap of {cap} states"
            ))
        })?;
    debug_assert!(states <= cap);

    // gains do not depend on the origin
    let mut g_layers = Vec::with_capacity(horizon + 1);
    let mut buf = Vec::new();
    let mut width = 1usize;
    for t in 0..=horizon {
        let mut layer = Vec::with_capacity(width);
        for idx in 0..width {
            history_returns(model, idx, t, &mut buf);
            layer.push(gains.eval(t, &buf)?);
        }
        g_layers.push(layer);
        width *= s;
    }

    let mut q_all = Vec::with_capacity(origins.len());
    let mut v_all = Vec::with_capacity(origins.len());
    for &origin in &origins {
        let mut q = vec![Vec::new(); horizon + 1];
        let mut v = vec![Vec::new(); horizon + 1];
        q[horizon] = vec![0.0; g_layers[horizon].len()];
        v[horizon] = g_layers[horizon].clone();
        for t in (0..horizon).rev() {
            let width = g_layers[t].len();
            let mut qt = Vec::with_capacity(width);
            for idx in 0..width {
                let previous = if t == 0 { origin } else { idx % s };
                let law = model.next_law(previous);
                let value: f64 = law.iter().enumerate().map(|(a, p)| p * v[t + 1][idx * s + a]).sum();
                qt.push(value);
            }
            v[t] = qt.iter().zip(&g_layers[t]).map(|(q, g)| g.max(*q)).collect();
            q[t] = qt;
        }
        q_all.push(q);
        v_all.push(v);
    }
    let g_all = vec![g_layers; origins.len()];
    Ok(OracleTables {
        model: model.clone(),
        gains: gains.clone(),
        q: q_all,
        v: v_all,
        g: g_all,
    })
}

impl OracleTables {
    pub fn horizon(&self) -> usize {
        self.gains.horizon()
    }

    pub fn model(&self) -> &FiniteModel {
        &self.model
    }

    pub fn gains(&self) -> &GainSpec {
        &self.gains
    }

    fn history_index(&self, horizon: &[f64]) -> Result<usize> {
        let s = self.model.support.len();
        horizon.iter().try_fold(0usize, |acc, z| {
            let a = self
                .model
                .support_index(*z)
                .ok_or_else(|| Error::Argument(format!("return {z} not in the model support")))?;
            Ok(acc * s + a)
        })
    }

    /// `q_t` after the given horizon returns (`t = horizon.len()`).
    pub fn q(&self, last_past: Option<f64>, horizon: &[f64]) -> Result<f64> {
        let o = self.model.origin_slot(last_past)?;
        let t = horizon.len();
        if t > self.horizon() {
            return Err(Error::Argument(format!(
                "{t} returns beyond horizon {}",
                self.horizon()
            )));
        }
        Ok(self.q[o][t][self.history_index(horizon)?])
    }

    /// `V_t` after the given horizon returns.
    pub fn value(&self, last_past: Option<f64>, horizon: &[f64]) -> Result<f64> {
        let o = self.model.origin_slot(last_past)?;
        let t = horizon.len();
        if t > self.horizon() {
            return Err(Error::Argument(format!(
                "{t} returns beyond horizon {}",
                self.horizon()
            )));
        }
        Ok(self.v[o][t][self.history_index(horizon)?])
    }

    /// Raw layers `(g_t, q_t, V_t)` for one origin slot.
    pub fn layer(&self, origin_slot: usize, t: usize) -> (&[f64], &[f64], &[f64]) {
        (
            &self.g[origin_slot][t],
            &self.q[origin_slot][t],
            &self.v[origin_slot][t],
        )
    }

    /// Largest gain over every reachable history.
    pub fn max_gain(&self) -> f64 {
        self.g[0].iter().flatten().fold(0.0, |a, b| a.max(*b))
    }

    pub fn origin_slots(&self) -> usize {
        self.q.len()
    }

    /// Exact continuation values as a [`ContinuationEstimate`] for a fixed past.
    pub fn for_past(&self, last_past: Option<f64>) -> Result<OracleContinuation<'_>> {
        self.model.origin_slot(last_past)?;
        Ok(OracleContinuation {
            tables: self,
            last_past,
        })
    }

    /// First epoch with `g_j >= q_j` along the horizon returns.
    pub fn optimal_tau(&self, last_past: Option<f64>, horizon: &[f64]) -> Result<usize> {
        for j in 0..=self.horizon() {
            let prefix = &horizon[..j];
            let g = self.gains.eval(j, prefix)?;
            if g >= self.q(last_past, prefix)? {
                return Ok(j);
            }
        }
        unreachable!("q_L = 0 <= g_L")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleContinuation<'a> {
    tables: &'a OracleTables,
    last_past: Option<f64>,
}

impl ContinuationEstimate for OracleContinuation<'_> {
    fn horizon(&self) -> usize {
        self.tables.horizon()
    }

    fn continuation(&self, stage: usize, horizon: &[f64]) -> Result<f64> {
        self.tables.q(self.last_past, &horizon[..stage])
    }
}

#[derive(Debug, Clone)]
pub struct ValueAndRule {
    /// `sup_tau E g_tau`, averaged over the stationary law of the origin for
    /// Markov models.
    pub v0_star: f64,
    /// `max{g_0, q_0}` per origin slot.
    pub per_origin: Vec<f64>,
    pub tables: OracleTables,
}

pub fn exact_value_and_rule(model: &FiniteModel, gains: &GainSpec) -> Result<ValueAndRule> {
    let tables = exact_continuation(model, gains)?;
    let per_origin: Vec<f64> = (0..tables.origin_slots()).map(|o| tables.v[o][0][0]).collect();
    let v0_star = if model.is_markov() {
        model.stationary().iter().zip(&per_origin).map(|(p, v)| p * v).sum()
    } else {
        per_origin[0]
    };
    Ok(ValueAndRule {
        v0_star,
        per_origin,
        tables,
    })
}

/// Every full horizon path (as support indices) with its probability.
pub fn enumerate_paths(model: &FiniteModel, horizon: usize, origin: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..horizon {
        let mut next = Vec::with_capacity(out.len() * model.support.len());
        for (path, p) in &out {
            let previous = path.last().copied().unwrap_or(origin);
            for (a, pa) in model.next_law(previous).iter().enumerate() {
                let mut longer = path.clone();
                longer.push(a);
                next.push((longer, p * pa));
            }
        }
        out = next;
    }
    out
}

/// Best expected gain over every adapted stopping rule, by brute force: a rule
/// is a stop/continue flag on each history of length `< L`.
pub fn exhaustive_best_value(model: &FiniteModel, gains: &GainSpec, origin: usize) -> Result<f64> {
    let s = model.support.len();
    let horizon = gains.horizon();
    let nodes = state_count(s, horizon.saturating_sub(1)).unwrap_or(usize::MAX);
    let nodes = if horizon == 0 { 0 } else { nodes };
    if nodes > RULE_CAP as usize {
        return Err(Error::Resource(format!(
            "{nodes} decision nodes exceed 2^{RULE_CAP} rules"
        )));
    }
    let paths = enumerate_paths(model, horizon, origin);
    // per path: node id at each t < L and gains at each t <= L
    let mut offsets = Vec::with_capacity(horizon);
    let mut width = 1usize;
    let mut acc = 0usize;
    for _ in 0..horizon {
        offsets.push(acc);
        acc += width;
        width *= s;
    }
    let mut prepared = Vec::with_capacity(paths.len());
    for (path, p) in &paths {
        let returns: Vec<f64> = path.iter().map(|a| model.support[*a]).collect();
        let mut node_ids = Vec::with_capacity(horizon);
        let mut idx = 0usize;
        for (t, offset) in offsets.iter().enumerate() {
            node_ids.push(offset + idx);
            idx = idx * s + path[t];
        }
        let g: Vec<f64> = (0..=horizon)
            .map(|t| gains.eval(t, &returns[..t]))
            .collect::<Result<_>>()?;
        prepared.push((node_ids, g, *p));
    }
    let mut best = f64::NEG_INFINITY;
    for rule in 0u64..(1u64 << nodes) {
        let mut value = 0.0;
        for (node_ids, g, p) in &prepared {
            let tau = node_ids.iter().position(|id| rule >> id & 1 == 1).unwrap_or(horizon);
            value += p * g[tau];
        }
        best = best.max(value);
    }
    Ok(best)
}

/// Monte Carlo estimates of both sides of
/// `E g_{tau*} - E g_{tau_hat} <= sum_j E |q_hat_j - q_j|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the per-path difference `lhs_i - rhs_i`.
    pub combined_se: f64,
    pub paths: usize,
}

impl GapCheck {
    /// `lhs <= rhs + 3 * combined_se`.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.combined_se
    }
}

/// Runs the bound check for an estimate whose past ends with `last_past`.
/// Evaluation paths continue that past under the model's law.
pub fn stopping_gap_check<C: ContinuationEstimate + ?Sized>(
    model: &FiniteModel,
    gains: &GainSpec,
    estimate: &C,
    last_past: f64,
    num_paths: usize,
    seed: u64,
) -> Result<GapCheck> {
    if num_paths < 2 {
        return Err(Error::Argument("gap check needs at least 2 paths".into()));
    }
    let tables = exact_continuation(model, gains)?;
    let past = Some(last_past);
    let oracle = tables.for_past(past)?;
    let origin = model.support_index(last_past).unwrap_or(0);
    let horizon = gains.horizon();
    let mut stream = Substream::new(seed, &[tags::GAP]);
    let (mut sum, mut sum_sq, mut lhs, mut rhs) = (0.0, 0.0, 0.0, 0.0);
    let mut path = Vec::with_capacity(horizon);
    for _ in 0..num_paths {
        path.clear();
        let mut previous = origin;
        for _ in 0..horizon {
            previous = model.draw(previous, &mut stream);
            path.push(model.support[previous]);
        }
        let best = decide_stop(&oracle, gains, &path)?.gain;
        let ours = decide_stop(estimate, gains, &path)?.gain;
        let mut err = 0.0;
        for j in 0..horizon {
            err += (estimate.continuation(j, &path[..j])? - oracle.continuation(j, &path[..j])?).abs();
        }
        let l = best - ours;
        lhs += l;
        rhs += err;
        let d = l - err;
        sum += d;
        sum_sq += d * d;
    }
    let n = num_paths as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(GapCheck {
        lhs: lhs / n,
        rhs: rhs / n,
        combined_se: (var / n).sqrt(),
        paths: num_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PayoffKind, PayoffSpec};
    use crate::stopping::ZeroContinuation;

    fn put(strike: f64, rate: f64, horizon: usize) -> GainSpec {
        let payoff = PayoffSpec {
            kind: PayoffKind::Put { strike },
            rate,
            ..Default::default()
        };
        GainSpec::option(payoff, horizon).unwrap()
    }

    fn coin() -> FiniteModel {
        FiniteModel::iid(vec![0.9, 1.1], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(FiniteModel::iid(vec![0.9, 1.1], vec![0.6, 0.6]).is_err());
        assert!(FiniteModel::iid(vec![0.9, -1.0], vec![0.5, 0.5]).is_err());
        assert!(FiniteModel::iid(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(FiniteModel::markov(vec![0.9, 1.1], vec![vec![1.0, 0.0]]).is_err());
        let m = FiniteModel::markov(vec![0.9, 1.1], vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let pi = m.stationary();
        // pi_0 = 0.6 / (0.8 + 0.6)
        assert!((pi[0] - 0.6 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn zero_gains_zero_values() {
        let g = GainSpec::zero(3, 1.0).unwrap();
        let r = exact_value_and_rule(&coin(), &g).unwrap();
        assert_eq!(r.v0_star, 0.0);
        for t in 0..=3 {
            assert!(r.tables.layer(0, t).1.iter().all(|q| *q == 0.0));
        }
        assert_eq!(r.tables.optimal_tau(None, &[0.9, 0.9, 0.9]).unwrap(), 0);
    }

    #[test]
    fn one_step_put() {
        let g = put(100.0, 0.0, 1);
        let r = exact_value_and_rule(&coin(), &g).unwrap();
        assert!((r.tables.q(None, &[]).unwrap() - 5.0).abs() < 1e-12);
        assert!((r.v0_star - 5.0).abs() < 1e-12);
        // g_0 = f(100) = 0 < 5: continue, then forced stop
        assert_eq!(r.tables.optimal_tau(None, &[1.1]).unwrap(), 1);
        assert_eq!(r.tables.optimal_tau(None, &[0.9]).unwrap(), 1);
    }

    #[test]
    fn two_step_put_matches_enumeration() {
        let g = put(100.0, 0.0, 2);
        let r = exact_value_and_rule(&coin(), &g).unwrap();
        // hand DP: q_1(90) = (19 + 1) / 2 = 10, q_1(110) = (1 + 0) / 2 = 0.5
        assert!((r.tables.q(None, &[0.9]).unwrap() - 10.0).abs() < 1e-12);
        assert!((r.tables.q(None, &[1.1]).unwrap() - 0.5).abs() < 1e-12);
        assert!((r.v0_star - 5.25).abs() < 1e-12);
        let brute = exhaustive_best_value(&coin(), &g, 0).unwrap();
        assert!((brute - r.v0_star).abs() < 1e-12);
    }

    #[test]
    fn value_is_max_of_gain_and_continuation() {
        let g = put(100.0, 0.05, 3);
        let m = FiniteModel::markov(
            vec![0.9, 1.0, 1.1],
            vec![vec![0.2, 0.3, 0.5], vec![0.3, 0.4, 0.3], vec![0.6, 0.2, 0.2]],
        )
        .unwrap();
        let tables = exact_continuation(&m, &g).unwrap();
        assert_eq!(tables.origin_slots(), 3);
        for o in 0..3 {
            for t in 0..=3 {
                let (gl, ql, vl) = tables.layer(o, t);
                for ((gv, qv), vv) in gl.iter().zip(ql).zip(vl) {
                    assert_eq!(*vv, gv.max(*qv));
                    assert!((0.0..=g.bound()).contains(qv));
                }
            }
            assert!(tables.layer(o, 3).1.iter().all(|q| *q == 0.0));
            let brute = exhaustive_best_value(&m, &g, o).unwrap();
            assert!((brute - tables.layer(o, 0).2[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let g = put(100.0, 0.0, 30);
        assert!(matches!(exact_continuation(&coin(), &g), Err(Error::Resource(_))));
        let g = put(100.0, 0.0, 6);
        assert!(matches!(exhaustive_best_value(&coin(), &g, 0), Err(Error::Resource(_))));
    }

    #[test]
    fn oracle_substituted_gap_vanishes() {
        let g = put(100.0, 0.05, 2);
        let tables = exact_continuation(&coin(), &g).unwrap();
        let oracle = tables.for_past(None).unwrap();
        let check = stopping_gap_check(&coin(), &g, &oracle, 1.0, 500, 3).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.holds());
    }

    #[test]
    fn zero_estimate_gap_is_bounded() {
        let g = put(100.0, 0.05, 2);
        let check = stopping_gap_check(&coin(), &g, &ZeroContinuation { horizon: 2 }, 1.0, 4000, 9).unwrap();
        assert!(check.lhs > 0.0);
        assert!(check.holds(), "{check:?}");
    }
}
