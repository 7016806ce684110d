//! Market, contract, and run description types.
//!
//! Everything downstream (path generation, regression, the solvers) is
//! driven by the plain-data types in this module. Constructors validate
//! their arguments once so the numerical code can assume well-formed
//! inputs.

use crate::error::{Error, Result};

/// Risk-neutral market with `dim` independent geometric Brownian motions.
///
/// All assets share the same interest rate, dividend yield, and
/// volatility; they differ only in their spot levels. This is the
/// symmetric multi-asset setting used by the max-call benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    spot: Vec<f64>,
    rate: f64,
    dividend: f64,
    sigma: f64,
}

impl MarketModel {
    /// Builds a market from spot levels and shared dynamics parameters.
    ///
    /// # Errors
    ///
    /// Rejects an empty spot vector, non-positive or non-finite spots,
    /// negative volatility, and non-finite rate/dividend/volatility.
    pub fn new(spot: Vec<f64>, rate: f64, dividend: f64, sigma: f64) -> Result<Self> {
        if spot.is_empty() {
            return Err(Error::invalid("spot vector must not be empty"));
        }
        if spot.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::invalid("spot prices must be finite and positive"));
        }
        if !rate.is_finite() || !dividend.is_finite() {
            return Err(Error::invalid("rate and dividend must be finite"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("volatility must be finite and non-negative"));
        }
        Ok(Self {
            spot,
            rate,
            dividend,
            sigma,
        })
    }

    /// Number of assets.
    pub fn dim(&self) -> usize {
        self.spot.len()
    }

    /// Initial price of each asset.
    pub fn spot(&self) -> &[f64] {
        &self.spot
    }

    /// Continuously compounded risk-free rate.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Continuous dividend yield paid by every asset.
    pub fn dividend(&self) -> f64 {
        self.dividend
    }

    /// Shared log-volatility.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Returns a copy with all spot levels replaced by `spot`.
    pub fn with_uniform_spot(&self, spot: f64) -> Result<Self> {
        Self::new(vec![spot; self.dim()], self.rate, self.dividend, self.sigma)
    }
}

/// Exercise payoff of the contract.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    /// `(max_i S_i - K)^+` — call on the maximum of the assets.
    MaxCall { strike: f64 },
    /// `(K - S)^+` on a single asset.
    Put { strike: f64 },
}

impl Payoff {
    /// The strike `K`.
    pub fn strike(&self) -> f64 {
        match self {
            Payoff::MaxCall { strike } | Payoff::Put { strike } => *strike,
        }
    }

    /// Number of assets this payoff expects, or `None` if any dimension
    /// is accepted.
    pub fn expected_dim(&self) -> Option<usize> {
        match self {
            Payoff::MaxCall { .. } => None,
            Payoff::Put { .. } => Some(1),
        }
    }

    /// Checks that the payoff can be evaluated in a `dim`-asset market.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.expected_dim() {
            Some(expected) if expected != dim => Err(Error::Dimension { expected, got: dim }),
            _ => Ok(()),
        }
    }

    /// Evaluates the payoff, verifying the price vector length.
    pub fn evaluate(&self, prices: &[f64]) -> Result<f64> {
        self.check_dim(prices.len())?;
        if prices.is_empty() {
            return Err(Error::Dimension {
                expected: 1,
                got: 0,
            });
        }
        Ok(self.value(prices))
    }

    /// Evaluates without the length check. Callers must have validated
    /// the dimension up front; used in per-sample hot loops.
    #[inline]
    pub(crate) fn value(&self, prices: &[f64]) -> f64 {
        match self {
            Payoff::MaxCall { strike } => {
                let mut best = prices[0];
                for &p in &prices[1..] {
                    if p > best {
                        best = p;
                    }
                }
                (best - strike).max(0.0)
            }
            Payoff::Put { strike } => (strike - prices[0]).max(0.0),
        }
    }
}

/// Uniform time grid on `[0, T]` with `steps` intervals.
///
/// `time(k)` is computed as `T * k / N` so that `time(N) == T` holds
/// exactly in floating point, which keeps terminal-row logic free of
/// off-by-epsilon comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// Creates a grid with horizon `T > 0` and `steps >= 1`.
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::invalid("horizon must be finite and positive"));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    /// Terminal time `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Interval length `T / N`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Grid point `t_k`, exact at both endpoints.
    pub fn time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        self.horizon * (k as f64 / self.steps as f64)
    }
}

/// One stage of a temperature schedule: run `iterations` policy
/// iterations at temperature `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub lambda: f64,
    pub iterations: usize,
}

/// A strictly decreasing sequence of temperatures with per-stage
/// iteration counts.
///
/// Warm-starting each stage from the previous stage's value surface is
/// what makes small final temperatures reachable in a few hundred
/// iterations; see [`LambdaSchedule::ladder`] for the default used by the
/// benchmark tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    stages: Vec<Stage>,
}

/// Default rungs of the warm-start ladder, largest first.
const LADDER: [f64; 4] = [0.1, 0.05, 0.01, 0.001];

impl LambdaSchedule {
    /// Builds a schedule from explicit stages.
    ///
    /// # Errors
    ///
    /// All temperatures must be finite and positive and strictly
    /// decreasing; every stage needs at least one iteration.
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::invalid("schedule must contain at least one stage"));
        }
        for stage in &stages {
            if !stage.lambda.is_finite() || stage.lambda <= 0.0 {
                return Err(Error::invalid("stage temperatures must be positive"));
            }
            if stage.iterations == 0 {
                return Err(Error::invalid("stage iteration counts must be positive"));
            }
        }
        if stages.windows(2).any(|w| w[1].lambda >= w[0].lambda) {
            return Err(Error::invalid(
                "stage temperatures must be strictly decreasing",
            ));
        }
        Ok(Self { stages })
    }

    /// Single-stage schedule.
    pub fn constant(lambda: f64, iterations: usize) -> Result<Self> {
        Self::new(vec![Stage { lambda, iterations }])
    }

    /// The standard ladder `0.1, 0.05, 0.01, 0.001` truncated at
    /// `target`: rungs above the target are kept as warm-up stages and
    /// the target itself becomes the final stage. Every stage gets the
    /// same iteration count.
    ///
    /// ```
    /// use entropic::LambdaSchedule;
    /// let s = LambdaSchedule::ladder(0.01, 500).unwrap();
    /// let lambdas: Vec<f64> = s.stages().iter().map(|st| st.lambda).collect();
    /// assert_eq!(lambdas, vec![0.1, 0.05, 0.01]);
    /// ```
    pub fn ladder(target: f64, iterations: usize) -> Result<Self> {
        if !target.is_finite() || target <= 0.0 {
            return Err(Error::invalid("target temperature must be positive"));
        }
        let mut stages: Vec<Stage> = LADDER
            .iter()
            .filter(|&&l| l > target)
            .map(|&lambda| Stage { lambda, iterations })
            .collect();
        stages.push(Stage {
            lambda: target,
            iterations,
        });
        Self::new(stages)
    }

    /// The stages, in execution order.
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Temperature of the last stage.
    pub fn final_lambda(&self) -> f64 {
        self.stages.last().expect("schedule is non-empty").lambda
    }

    /// Total iteration count across stages.
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

/// Regression basis used for conditional expectations.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSpec {
    /// The 13-function basis for two-asset max-calls: constant, linear
    /// and quadratic terms in the (strike-scaled) prices, the cross
    /// term, powers of the running maximum and of the payoff, and the
    /// minimum.
    AndersenBroadie13,
    /// Monomials in the strike-scaled prices up to the given total
    /// degree, optionally augmented with the payoff and its square and
    /// cube.
    Polynomial {
        degree: usize,
        payoff_features: bool,
    },
}

impl BasisSpec {
    /// Sensible default for a market dimension: the dedicated 13-term
    /// basis in two dimensions, degree-5 monomials plus payoff features
    /// otherwise.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim == 2 {
            BasisSpec::AndersenBroadie13
        } else {
            BasisSpec::Polynomial {
                degree: 5,
                payoff_features: true,
            }
        }
    }
}

/// Which pricer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Policy iteration on the entropy-regularized problem.
    Pia,
    /// Classical penalty-method baseline on the same paths.
    ClassicalPenalization,
    /// Recombining-tree reference (American).
    Lattice,
    /// Plain discounted-terminal-payoff Monte Carlo.
    European,
}

/// Complete description of a pricing run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: MarketModel,
    pub payoff: Payoff,
    pub grid: TimeGrid,
    pub num_paths: usize,
    pub seed: u64,
    pub schedule: LambdaSchedule,
    pub basis: BasisSpec,
    pub method: Method,
}

impl RunConfig {
    /// Cross-field validation: payoff/market dimensions must agree, the
    /// basis must be usable in the market dimension, and there must be
    /// enough paths to regress on.
    pub fn validate(&self) -> Result<()> {
        self.payoff.check_dim(self.model.dim())?;
        match &self.basis {
            BasisSpec::AndersenBroadie13 => {
                if self.model.dim() != 2 {
                    return Err(Error::invalid(
                        "the 13-term basis is specific to two-asset markets",
                    ));
                }
            }
            BasisSpec::Polynomial { degree, .. } => {
                if *degree == 0 {
                    return Err(Error::invalid("polynomial degree must be at least 1"));
                }
                if *degree > 12 {
                    return Err(Error::invalid(
                        "polynomial degree above 12 is not supported",
                    ));
                }
            }
        }
        if self.num_paths < 2 {
            return Err(Error::invalid("need at least two paths"));
        }
        if !self.payoff.strike().is_finite() || self.payoff.strike() <= 0.0 {
            return Err(Error::invalid("strike must be finite and positive"));
        }
        Ok(())
    }
}
