//! Return paths, option payoffs and the gain sequence of a stopping problem.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Observed returns `Z`, split at `origin` into the past (training) segment and
/// the decision horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPath {
    values: Vec<f64>,
    origin: usize,
}

impl ReturnPath {
    pub fn new(values: Vec<f64>, origin: usize) -> Result<Self> {
        if origin > values.len() {
            return Err(Error::Argument(format!(
                "origin {origin} beyond path length {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!(
                "return #{i} is {v}, expected positive and finite"
            )));
        }
        Ok(Self { values, origin })
    }

    /// A path made only of past observations.
    pub fn from_past(values: Vec<f64>) -> Result<Self> {
        let origin = values.len();
        Self::new(values, origin)
    }

    /// Joins a past segment and a horizon segment.
    pub fn with_horizon(past: &[f64], horizon: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(past.len() + horizon.len());
        values.extend_from_slice(past);
        values.extend_from_slice(horizon);
        Self::new(values, past.len())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn past(&self) -> &[f64] {
        &self.values[..self.origin]
    }

    pub fn horizon(&self) -> &[f64] {
        &self.values[self.origin..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Shape of an option payoff `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    /// `max{0, min{x - lower, upper - x}}`.
    Butterfly { lower: f64, upper: f64 },
    /// `max{strike - x, 0}`.
    Put { strike: f64 },
    /// Piecewise-linear interpolation through `(price, payoff)` knots sorted by
    /// price, held constant beyond the outermost knots.
    Table { knots: Vec<(f64, f64)> },
}

impl PayoffKind {
    pub fn butterfly() -> Self {
        PayoffKind::Butterfly {
            lower: 99.0,
            upper: 107.0,
        }
    }

    /// Value of `payoff.kind` in configuration files.
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::Butterfly { .. } => "butterfly",
            PayoffKind::Put { .. } => "put",
            PayoffKind::Table { .. } => "table",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PayoffKind::Butterfly { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Config(format!(
                        "butterfly needs finite lower < upper, got {lower}, {upper}"
                    )));
                }
            }
            PayoffKind::Put { strike } => {
                if !(strike.is_finite() && *strike > 0.0) {
                    return Err(Error::Config(format!("put strike must be positive, got {strike}")));
                }
            }
            PayoffKind::Table { knots } => {
                if knots.is_empty() {
                    return Err(Error::Config("payoff table has no knots".into()));
                }
                for &(x, y) in knots {
                    if !(x.is_finite() && y.is_finite() && y >= 0.0) {
                        return Err(Error::Config(format!(
                            "payoff table knot ({x}, {y}) must be finite with nonnegative payoff"
                        )));
                    }
                }
                if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::Config("payoff table prices must be strictly increasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Analytic maximum of the payoff over all positive prices.
    pub fn max_value(&self) -> f64 {
        match self {
            PayoffKind::Butterfly { lower, upper } => (upper - lower) / 2.0,
            PayoffKind::Put { strike } => *strike,
            PayoffKind::Table { knots } => knots.iter().map(|k| k.1).fold(0.0, f64::max),
        }
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            PayoffKind::Butterfly { lower, upper } => (x - lower).min(upper - x).max(0.0),
            PayoffKind::Put { strike } => (strike - x).max(0.0),
            PayoffKind::Table { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let hi = knots.partition_point(|k| k.0 < x);
                let (x0, y0) = knots[hi - 1];
                let (x1, y1) = knots[hi];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// An option payoff together with the time grid it is exercised on.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    /// Riskless rate per unit time.
    pub rate: f64,
    /// Time length of one exercise epoch.
    pub step: f64,
    /// Price at the decision time; paths are rescaled to start here.
    pub anchor_price: f64,
}

impl Default for PayoffSpec {
    fn default() -> Self {
        Self {
            kind: PayoffKind::butterfly(),
            rate: 0.05,
            step: 0.25,
            anchor_price: 100.0,
        }
    }
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::Config(format!("rate must be nonnegative, got {}", self.rate)));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.anchor_price.is_finite() && self.anchor_price > 0.0) {
            return Err(Error::Config(format!(
                "anchor price must be positive, got {}",
                self.anchor_price
            )));
        }
        Ok(())
    }

    /// Undiscounted payoff at `price`.
    pub fn payoff(&self, price: f64) -> Result<f64> {
        if !price.is_finite() {
            return Err(Error::Domain(format!("price {price} is not finite")));
        }
        Ok(self.kind.eval_unchecked(price))
    }

    pub fn discount(&self, epoch: usize) -> f64 {
        (-self.rate * self.step * epoch as f64).exp()
    }
}

type GainFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
enum GainSource {
    Option(PayoffSpec),
    /// `g_j` receives the first `j` horizon returns.
    Custom(Arc<GainFn>),
}

/// The gains `g_0..g_L` of a stopping problem with horizon `L`, all bounded
/// by `bound`.
#[derive(Clone)]
pub struct GainSpec {
    horizon: usize,
    bound: f64,
    source: GainSource,
}

impl fmt::Debug for GainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match &self.source {
            GainSource::Option(p) => format!("{p:?}"),
            GainSource::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("GainSpec")
            .field("horizon", &self.horizon)
            .field("bound", &self.bound)
            .field("source", &source)
            .finish()
    }
}

impl GainSpec {
    /// Discounted option gains `g_j = e^{-r step j} f(anchor * Z_1 ... Z_j)`,
    /// bounded by the payoff's analytic maximum.
    pub fn option(payoff: PayoffSpec, horizon: usize) -> Result<Self> {
        payoff.validate()?;
        let bound = payoff.kind.max_value();
        if bound.is_nan() || bound <= 0.0 {
            return Err(Error::Config(
                "payoff is identically zero; gain bound must be positive".into(),
            ));
        }
        Ok(Self {
            horizon,
            bound,
            source: GainSource::Option(payoff),
        })
    }

    /// Arbitrary gains. `gain(prefix)` is `g_j` for `j = prefix.len()` and must
    /// stay within `[0, bound]`; violations surface as errors from
    /// [`GainSpec::eval`].
    pub fn custom<F>(horizon: usize, bound: f64, gain: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::Config(format!("gain bound must be positive, got {bound}")));
        }
        Ok(Self {
            horizon,
            bound,
            source: GainSource::Custom(Arc::new(gain)),
        })
    }

    /// Replaces the bound, e.g. by the largest gain reachable under a known
    /// return model. Evaluations above it become errors.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::Config(format!("gain bound must be positive, got {bound}")));
        }
        self.bound = bound;
        Ok(self)
    }

    /// Gains that are zero everywhere.
    pub fn zero(horizon: usize, bound: f64) -> Result<Self> {
        Self::custom(horizon, bound, |_| 0.0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn payoff(&self) -> Option<&PayoffSpec> {
        match &self.source {
            GainSource::Option(p) => Some(p),
            GainSource::Custom(_) => None,
        }
    }

    /// `g_j` evaluated on the first `j` horizon returns.
    pub fn eval(&self, epoch: usize, prefix: &[f64]) -> Result<f64> {
        if epoch > self.horizon {
            return Err(Error::Argument(format!(
                "epoch {epoch} beyond horizon {}",
                self.horizon
            )));
        }
        if prefix.len() != epoch {
            return Err(Error::Argument(format!(
                "g_{epoch} needs {epoch} returns, got {}",
                prefix.len()
            )));
        }
        let value = match &self.source {
            GainSource::Option(p) => {
                let price = p.anchor_price * prefix.iter().product::<f64>();
                p.discount(epoch) * p.payoff(price)?
            }
            GainSource::Custom(g) => g(prefix),
        };
        if !(0.0..=self.bound).contains(&value) {
            return Err(Error::Domain(format!(
                "g_{epoch} = {value} outside [0, {}]",
                self.bound
            )));
        }
        Ok(value)
    }
}

/// Ratios of consecutive prices.
pub fn returns_from_prices(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::Argument(format!("need at least 2 prices, got {}", prices.len())));
    }
    if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Domain(format!("price {p} must be positive and finite")));
    }
    Ok(prices.windows(2).map(|w| w[1] / w[0]).collect())
}

/// Inverse of [`returns_from_prices`] given the first price.
pub fn returns_to_prices(first: f64, returns: &[f64]) -> Vec<f64> {
    let mut prices = Vec::with_capacity(returns.len() + 1);
    prices.push(first);
    let mut x = first;
    for r in returns {
        x *= r;
        prices.push(x);
    }
    prices
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn butterfly() -> PayoffSpec {
        PayoffSpec::default()
    }

    #[test]
    fn butterfly_payoff_values() {
        let p = butterfly();
        assert_eq!(p.payoff(100.0).unwrap(), 1.0);
        assert_eq!(p.payoff(50.0).unwrap(), 0.0);
        assert_eq!(p.payoff(103.0).unwrap(), 4.0);
        assert_eq!(p.kind.max_value(), 4.0);
        assert!(matches!(p.payoff(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(p.payoff(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn option_gains() {
        let g = GainSpec::option(butterfly(), 4).unwrap();
        assert_eq!(g.bound(), 4.0);
        assert_eq!(g.eval(0, &[]).unwrap(), 1.0);
        assert_eq!(g.eval(2, &[1.0, 1.0]).unwrap(), g.payoff().unwrap().discount(2) * 1.0);

        let zero_rate = PayoffSpec {
            rate: 0.0,
            ..butterfly()
        };
        let g0 = GainSpec::option(zero_rate, 4).unwrap();
        assert_eq!(g0.eval(2, &[1.0, 1.0]).unwrap(), 1.0);

        let v = g.eval(1, &[1.03]).unwrap();
        assert!((v - (-0.0125f64).exp() * 4.0).abs() < 1e-12);
        assert!((v - 3.9503).abs() < 1e-4);

        assert!(matches!(g.eval(2, &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(g.eval(5, &[1.0; 5]), Err(Error::Argument(_))));
    }

    #[test]
    fn custom_gain_out_of_bounds_is_rejected() {
        let g = GainSpec::custom(1, 1.0, |p| if p.is_empty() { 0.5 } else { 2.0 }).unwrap();
        assert_eq!(g.eval(0, &[]).unwrap(), 0.5);
        assert!(matches!(g.eval(1, &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn table_payoff_interpolates() {
        let kind = PayoffKind::Table {
            knots: vec![(80.0, 20.0), (100.0, 0.0), (120.0, 0.0)],
        };
        kind.validate().unwrap();
        let p = PayoffSpec { kind, ..butterfly() };
        assert_eq!(p.payoff(70.0).unwrap(), 20.0);
        assert_eq!(p.payoff(90.0).unwrap(), 10.0);
        assert_eq!(p.payoff(130.0).unwrap(), 0.0);
        let bad = PayoffKind::Table {
            knots: vec![(100.0, 1.0), (90.0, 0.0)],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn returns_from_prices_examples() {
        let r = returns_from_prices(&[100.0, 110.0, 99.0]).unwrap();
        assert!((r[0] - 1.1).abs() < 1e-15 && (r[1] - 0.9).abs() < 1e-15);
        assert_eq!(returns_from_prices(&[5.0, 5.0, 5.0]).unwrap(), vec![1.0, 1.0]);
        let r = returns_from_prices(&[100.0, 100.0 * 0.0125f64.exp()]).unwrap();
        assert!((r[0] - 0.0125f64.exp()).abs() < 1e-15);
        assert!(matches!(returns_from_prices(&[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(returns_from_prices(&[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn return_path_validation() {
        assert!(ReturnPath::new(vec![1.0, 0.5], 1).is_ok());
        assert!(ReturnPath::new(vec![1.0, -0.5], 1).is_err());
        assert!(ReturnPath::new(vec![1.0, f64::NAN], 1).is_err());
        assert!(ReturnPath::new(vec![1.0], 2).is_err());
        let p = ReturnPath::with_horizon(&[1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(p.past(), &[1.0, 2.0]);
        assert_eq!(p.horizon(), &[3.0]);
    }

    proptest! {
        #[test]
        fn gains_stay_in_bounds(prefix in prop::collection::vec(0.5f64..1.5, 0..=4)) {
            let g = GainSpec::option(butterfly(), 4).unwrap();
            let v = g.eval(prefix.len(), &prefix).unwrap();
            prop_assert!((0.0..=g.bound()).contains(&v));
        }

        #[test]
        fn prices_round_trip(prices in prop::collection::vec(0.01f64..1e4, 2..50)) {
            let r = returns_from_prices(&prices).unwrap();
            let back = returns_to_prices(prices[0], &r);
            for (a, b) in prices.iter().zip(&back) {
                prop_assert!(((a - b) / a).abs() <= 1e-12);
            }
        }

        #[test]
        fn butterfly_slopes(x in 1.0f64..200.0) {
            let p = butterfly();
            prop_assume!([99.0, 103.0, 107.0].iter().all(|k| (x - k).abs() > 1e-3));
            let d = 1e-6;
            let slope = (p.payoff(x + d).unwrap() - p.payoff(x - d).unwrap()) / (2.0 * d);
            prop_assert!([0.0, 1.0, -1.0].iter().any(|s| (slope - s).abs() < 1e-6));
        }
    }
}
