//! Return generators: a GARCH(1,1) price process in Duan form and the finite
//! models of [`crate::oracle`].
//!
//! Every simulation produces one shared past (the training data) and a set of
//! continuations that branch from the end of that past with independent future
//! innovations. Each continuation carries the hidden Markov state at every
//! epoch so the regression comparator can use it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::FiniteModel;
use crate::rng::{tags, Substream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    /// Yearly rate; the per-step drift is `r_star * step`.
    pub r_star: f64,
    pub lambda: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub xi1: f64,
    pub burn_in: usize,
    pub x0: f64,
    /// Years per step.
    pub step: f64,
}

impl Default for GarchParams {
    fn default() -> Self {
        Self {
            r_star: 0.05,
            lambda: 0.7136,
            delta0: 0.0000664,
            delta1: 0.144,
            xi1: 0.776,
            burn_in: 1600,
            x0: 100.0,
            step: 0.25,
        }
    }
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r_star,
            self.lambda,
            self.delta0,
            self.delta1,
            self.xi1,
            self.x0,
            self.step,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("GARCH parameters must be finite".into()));
        }
        if self.delta0 < 0.0 || self.delta1 < 0.0 || self.xi1 < 0.0 {
            return Err(Error::Config("GARCH delta0, delta1, xi1 must be nonnegative".into()));
        }
        if self.delta1 + self.xi1 >= 1.0 {
            return Err(Error::Config(format!(
                "delta1 + xi1 = {} is not below 1",
                self.delta1 + self.xi1
            )));
        }
        if self.x0 <= 0.0 || self.step <= 0.0 {
            return Err(Error::Config("x0 and step must be positive".into()));
        }
        Ok(())
    }

    /// `sigma_{i+1}^2` from `(sigma_i, eps_i)`.
    pub fn next_variance(&self, sigma: f64, eps: f64) -> f64 {
        let shock = sigma * eps - self.lambda * sigma;
        self.delta0 + self.delta1 * shock * shock + self.xi1 * sigma * sigma
    }

    /// Advances `(sigma, eps)` by one step with innovation `eps_next` and
    /// returns the price ratio `X_{i+1} / X_i`.
    pub fn advance(&self, state: &mut GarchState, eps_next: f64) -> f64 {
        let var = self.next_variance(state.sigma, state.eps);
        let sigma = var.sqrt();
        state.sigma = sigma;
        state.eps = eps_next;
        (self.r_star * self.step - 0.5 * var + sigma * eps_next).exp()
    }

    /// Return series driven by the given innovations from `sigma = 0`.
    pub fn returns_from_innovations(&self, innovations: &[f64]) -> Vec<f64> {
        let mut state = GarchState::default();
        innovations.iter().map(|e| self.advance(&mut state, *e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GarchState {
    pub sigma: f64,
    pub eps: f64,
}

/// State of the generator at the end of the shared past.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    Garch(GarchState),
    /// Support index of the last past return.
    Finite(usize),
}

/// One continuation `Z_1..Z_L` with hidden state at epochs `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPath {
    pub returns: Vec<f64>,
    /// `(X_j, sigma_j, eps_j)` for GARCH, `(X_j, Z_j)` for finite models.
    pub states: Option<Vec<Vec<f64>>>,
}

impl EvalPath {
    pub fn without_state(returns: Vec<f64>) -> Self {
        Self { returns, states: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPaths {
    /// Training returns, oldest first; `past.len()` is the requested length.
    pub past: Vec<f64>,
    pub terminal: Terminal,
    pub continuations: Vec<EvalPath>,
}

impl SimulatedPaths {
    /// Prices `X_{-n}..X_0` with `X_0 = x0`.
    pub fn past_prices(&self, x0: f64) -> Vec<f64> {
        let mut prices = vec![x0; self.past.len() + 1];
        for i in (0..self.past.len()).rev() {
            prices[i] = prices[i + 1] / self.past[i];
        }
        prices
    }
}

/// A seeded source of pasts and continuations.
#[derive(Debug, Clone, PartialEq)]
pub enum Simulator {
    Garch(GarchParams),
    Finite(FiniteModel),
}

fn with_tag(base: &[u64], extra: &[u64]) -> Vec<u64> {
    base.iter().chain(extra).copied().collect()
}

impl Simulator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Simulator::Garch(p) => p.validate(),
            Simulator::Finite(_) => Ok(()),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Simulator::Garch(_) => 3,
            Simulator::Finite(_) => 2,
        }
    }

    /// The shared past of `len` returns and the generator state at its end.
    pub fn past(&self, len: usize, seed: u64, stream_tags: &[u64]) -> (Vec<f64>, Terminal) {
        let mut stream = Substream::new(seed, &with_tag(stream_tags, &[tags::PAST]));
        match self {
            Simulator::Garch(p) => {
                let mut state = GarchState::default();
                for _ in 0..p.burn_in {
                    let e = stream.normal();
                    p.advance(&mut state, e);
                }
                let past = (0..len)
                    .map(|_| {
                        let e = stream.normal();
                        p.advance(&mut state, e)
                    })
                    .collect();
                (past, Terminal::Garch(state))
            }
            Simulator::Finite(m) => {
                let mut last = stream.categorical(&m.stationary());
                let mut past = Vec::with_capacity(len);
                if len > 0 {
                    past.push(m.support()[last]);
                }
                for _ in 1..len {
                    last = m.draw(last, &mut stream);
                    past.push(m.support()[last]);
                }
                (past, Terminal::Finite(last))
            }
        }
    }

    /// One continuation from `terminal` with prices anchored at `x0`.
    pub fn continuation(
        &self,
        terminal: Terminal,
        horizon: usize,
        x0: f64,
        stream: &mut Substream,
    ) -> Result<EvalPath> {
        let mut returns = Vec::with_capacity(horizon);
        let mut states = Vec::with_capacity(horizon + 1);
        let mut price = x0;
        match (self, terminal) {
            (Simulator::Garch(p), Terminal::Garch(mut state)) => {
                states.push(vec![price, state.sigma, state.eps]);
                for _ in 0..horizon {
                    let e = stream.normal();
                    let z = p.advance(&mut state, e);
                    price *= z;
                    returns.push(z);
                    states.push(vec![price, state.sigma, state.eps]);
                }
            }
            (Simulator::Finite(m), Terminal::Finite(mut last)) => {
                states.push(vec![price, m.support()[last]]);
                for _ in 0..horizon {
                    last = m.draw(last, stream);
                    let z = m.support()[last];
                    price *= z;
                    returns.push(z);
                    states.push(vec![price, z]);
                }
            }
            _ => return Err(Error::Argument("terminal state does not match the simulator".into())),
        }
        Ok(EvalPath {
            returns,
            states: Some(states),
        })
    }

    /// `count` continuations of `terminal`, continuation `i` drawn from the
    /// substream `(stream_tags, purpose, i)`.
    #[allow(clippy::too_many_arguments)]
    pub fn continuations(
        &self,
        terminal: Terminal,
        horizon: usize,
        count: usize,
        x0: f64,
        seed: u64,
        stream_tags: &[u64],
        purpose: u64,
    ) -> Result<Vec<EvalPath>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut stream = Substream::new(seed, &with_tag(stream_tags, &[purpose, i as u64]));
                self.continuation(terminal, horizon, x0, &mut stream)
            })
            .collect()
    }

    pub fn simulate(
        &self,
        past_len: usize,
        horizon: usize,
        num_eval_paths: usize,
        x0: f64,
        seed: u64,
        stream_tags: &[u64],
    ) -> Result<SimulatedPaths> {
        self.validate()?;
        let (past, terminal) = self.past(past_len, seed, stream_tags);
        let continuations = self.continuations(terminal, horizon, num_eval_paths, x0, seed, stream_tags, tags::EVAL)?;
        Ok(SimulatedPaths {
            past,
            terminal,
            continuations,
        })
    }
}

pub fn garch_paths(
    params: &GarchParams,
    past_len: usize,
    horizon: usize,
    num_eval_paths: usize,
    seed: u64,
) -> Result<SimulatedPaths> {
    Simulator::Garch(*params).simulate(past_len, horizon, num_eval_paths, params.x0, seed, &[])
}

/// Finite-model paths with prices anchored at 100.
pub fn finite_paths(
    model: &FiniteModel,
    past_len: usize,
    horizon: usize,
    num_eval_paths: usize,
    seed: u64,
) -> Result<SimulatedPaths> {
    Simulator::Finite(model.clone()).simulate(past_len, horizon, num_eval_paths, 100.0, seed, &[])
}
