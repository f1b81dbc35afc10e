//! Stopping rules driven by continuation-value estimates.

use crate::domain::GainSpec;
use crate::error::{Error, Result};

/// Anything that supplies continuation values `q_j` for the horizon returns
/// observed so far. The past is fixed by the implementor.
pub trait ContinuationEstimate {
    fn horizon(&self) -> usize;

    /// `q_j` given the first `stage` horizon returns (longer slices are
    /// truncated). Must return 0 at `stage == horizon`.
    fn continuation(&self, stage: usize, horizon: &[f64]) -> Result<f64>;
}

/// Continuation values that are identically zero.
#[derive(Debug, Clone, Copy)]
pub struct ZeroContinuation {
    pub horizon: usize,
}

impl ContinuationEstimate for ZeroContinuation {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn continuation(&self, _stage: usize, _horizon: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Constant continuation value before the last epoch.
#[derive(Debug, Clone, Copy)]
pub struct ConstantContinuation {
    pub horizon: usize,
    pub value: f64,
}

impl ContinuationEstimate for ConstantContinuation {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn continuation(&self, stage: usize, _horizon: &[f64]) -> Result<f64> {
        Ok(if stage >= self.horizon { 0.0 } else { self.value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopDecision {
    pub tau: usize,
    pub gain: f64,
    /// `(g_j, q_j)` for every epoch examined, `j = 0..=tau`.
    pub trace: Vec<(f64, f64)>,
}

/// Stops at the first epoch whose gain reaches the estimated continuation
/// value. Ties stop.
pub fn decide_stop<C: ContinuationEstimate + ?Sized>(
    estimate: &C,
    gains: &GainSpec,
    horizon: &[f64],
) -> Result<StopDecision> {
    let last = gains.horizon();
    if estimate.horizon() != last {
        return Err(Error::Argument(format!(
            "estimate horizon {} differs from gain horizon {last}",
            estimate.horizon()
        )));
    }
    if horizon.len() < last {
        return Err(Error::Argument(format!(
            "evaluation path has {} horizon returns, need {last}",
            horizon.len()
        )));
    }
    let mut trace = Vec::with_capacity(last + 1);
    for j in 0..=last {
        let g = gains.eval(j, &horizon[..j])?;
        let q = if j == last {
            0.0
        } else {
            estimate.continuation(j, &horizon[..j])?
        };
        trace.push((g, q));
        if g >= q {
            return Ok(StopDecision { tau: j, gain: g, trace });
        }
    }
    unreachable!("g_L >= 0 = q_L always stops")
}

/// `g_tau` on the first `tau` horizon returns.
pub fn realized_gain(gains: &GainSpec, tau: usize, horizon: &[f64]) -> Result<f64> {
    if tau > gains.horizon() {
        return Err(Error::Argument(format!("tau {tau} beyond horizon {}", gains.horizon())));
    }
    if horizon.len() < tau {
        return Err(Error::Argument(format!(
            "need {tau} horizon returns, got {}",
            horizon.len()
        )));
    }
    gains.eval(tau, &horizon[..tau])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PayoffSpec;
    use proptest::prelude::*;

    fn butterfly(horizon: usize) -> GainSpec {
        GainSpec::option(PayoffSpec::default(), horizon).unwrap()
    }

    #[test]
    fn zero_continuation_stops_immediately() {
        let g = butterfly(4);
        let d = decide_stop(&ZeroContinuation { horizon: 4 }, &g, &[1.0; 4]).unwrap();
        assert_eq!(d.tau, 0);
        assert_eq!(d.gain, 1.0);
        assert_eq!(d.trace, vec![(1.0, 0.0)]);
    }

    #[test]
    fn saturated_continuation_runs_to_expiry() {
        let g = butterfly(4);
        let c = ConstantContinuation { horizon: 4, value: 4.0 };
        // prices stay at 100: g_j < 4 before expiry
        let d = decide_stop(&c, &g, &[1.0; 4]).unwrap();
        assert_eq!(d.tau, 4);
        assert_eq!(d.trace.len(), 5);
        assert_eq!(d.gain, g.eval(4, &[1.0; 4]).unwrap());
    }

    #[test]
    fn short_paths_are_rejected() {
        let g = butterfly(4);
        assert!(matches!(
            decide_stop(&ZeroContinuation { horizon: 4 }, &g, &[1.0; 3]),
            Err(Error::Argument(_))
        ));
        assert!(decide_stop(&ZeroContinuation { horizon: 3 }, &g, &[1.0; 4]).is_err());
    }

    #[test]
    fn realized_gain_examples() {
        let g = butterfly(4);
        assert_eq!(realized_gain(&g, 0, &[]).unwrap(), 1.0);
        let flat = GainSpec::option(
            PayoffSpec {
                rate: 0.0,
                ..Default::default()
            },
            4,
        )
        .unwrap();
        assert_eq!(realized_gain(&flat, 4, &[1.0; 4]).unwrap(), 1.0);
        let v = realized_gain(&g, 1, &[1.03]).unwrap();
        assert!((v - 3.9503).abs() < 1e-4);
        assert!(realized_gain(&g, 5, &[1.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn tau_is_first_trace_hit(
            path in prop::collection::vec(0.9f64..1.1, 4),
            level in 0.0f64..4.0,
        ) {
            let g = butterfly(4);
            let d = decide_stop(&ConstantContinuation { horizon: 4, value: level }, &g, &path).unwrap();
            prop_assert!(d.tau <= 4);
            prop_assert_eq!(d.trace.len(), d.tau + 1);
            for (g_j, q_j) in &d.trace[..d.tau] {
                prop_assert!(g_j < q_j);
            }
            let (g_tau, q_tau) = d.trace[d.tau];
            prop_assert!(g_tau >= q_tau);
            prop_assert_eq!(d.gain, realized_gain(&g, d.tau, &path).unwrap());
        }
    }
}
