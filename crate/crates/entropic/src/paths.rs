//! Monte Carlo path generation.
//!
//! Paths are stored step-major: all paths' prices at step `k` sit in one
//! contiguous block, because every downstream pass (regression,
//! policy-iteration sweeps) walks the grid one step at a time across all
//! paths. Exercise values are precomputed alongside the prices so hot
//! loops never re-evaluate the payoff.
//!
//! Randomness is reproducible by construction: path `i` draws from its
//! own counter-based stream of a seeded ChaCha generator, and draws are
//! ordered step-then-asset within the path. The sample for `(seed, path,
//! step, asset)` is therefore a pure function of those four values —
//! independent of batch size, thread count, or generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{MarketModel, Payoff, TimeGrid};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Simulated paths of the market on a time grid, with cached exercise
/// values.
///
/// Prices are laid out as `[step][path][asset]` and payoffs as
/// `[step][path]`, flattened. Step-level slices are exposed through
/// [`PathBatch::step_prices`] and [`PathBatch::step_payoffs`].
#[derive(Debug, Clone)]
pub struct PathBatch {
    model: MarketModel,
    payoff: Payoff,
    grid: TimeGrid,
    num_paths: usize,
    prices: Vec<f64>,
    payoffs: Vec<f64>,
}

impl PathBatch {
    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Prices of all assets on path `i` at step `k`.
    #[inline]
    pub fn prices_at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.dim();
        let base = (k * self.num_paths + i) * d;
        &self.prices[base..base + d]
    }

    /// Contiguous `[path][asset]` block for step `k` (length
    /// `num_paths * dim`).
    #[inline]
    pub fn step_prices(&self, k: usize) -> &[f64] {
        let d = self.dim();
        let base = k * self.num_paths * d;
        &self.prices[base..base + self.num_paths * d]
    }

    /// Exercise value on path `i` at step `k`.
    #[inline]
    pub fn exercise_value(&self, k: usize, i: usize) -> f64 {
        self.payoffs[k * self.num_paths + i]
    }

    /// Exercise values of all paths at step `k` (length `num_paths`).
    #[inline]
    pub fn step_payoffs(&self, k: usize) -> &[f64] {
        let base = k * self.num_paths;
        &self.payoffs[base..base + self.num_paths]
    }
}

/// Options for [`simulate_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Pair path `2j+1` with path `2j` using negated Gaussian draws.
    /// Requires an even number of paths.
    pub antithetic: bool,
    /// Offset added to every path's stream index, so that independent
    /// batches (e.g. a fresh evaluation set) can be drawn from the same
    /// seed without overlapping streams.
    pub stream_offset: u64,
}

/// Simulates `num_paths` paths of the market model under the pricing
/// measure, using exact log-normal stepping:
///
/// `S_{k+1} = S_k * exp((r - delta - sigma^2/2) dt + sigma sqrt(dt) Z)`.
pub fn simulate(
    model: &MarketModel,
    payoff: &Payoff,
    grid: &TimeGrid,
    num_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    simulate_with(model, payoff, grid, num_paths, seed, SimOptions::default())
}

/// [`simulate`] with antithetic pairing and/or a stream offset.
pub fn simulate_with(
    model: &MarketModel,
    payoff: &Payoff,
    grid: &TimeGrid,
    num_paths: usize,
    seed: u64,
    options: SimOptions,
) -> Result<PathBatch> {
    payoff.check_dim(model.dim())?;
    if num_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    if options.antithetic && !num_paths.is_multiple_of(2) {
        return Err(Error::invalid(
            "antithetic sampling requires an even number of paths",
        ));
    }

    let d = model.dim();
    let n_steps = grid.steps();
    let dt = grid.dt();
    let drift = (model.rate() - model.dividend() - 0.5 * model.sigma() * model.sigma()) * dt;
    let vol = model.sigma() * dt.sqrt();

    let mut prices = vec![0.0_f64; (n_steps + 1) * num_paths * d];
    let mut payoffs = vec![0.0_f64; (n_steps + 1) * num_paths];

    let mut state = vec![0.0_f64; d];
    for i in 0..num_paths {
        let (stream, sign) = if options.antithetic {
            ((i / 2) as u64, if i % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (i as u64, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(options.stream_offset + stream);

        state.copy_from_slice(model.spot());
        let base0 = i * d;
        prices[base0..base0 + d].copy_from_slice(&state);
        payoffs[i] = payoff.value(&state);

        for k in 1..=n_steps {
            for s in state.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *s *= (drift + vol * sign * z).exp();
            }
            let base = (k * num_paths + i) * d;
            prices[base..base + d].copy_from_slice(&state);
            payoffs[k * num_paths + i] = payoff.value(&state);
        }
    }

    Ok(PathBatch {
        model: model.clone(),
        payoff: payoff.clone(),
        grid: *grid,
        num_paths,
        prices,
        payoffs,
    })
}

/// Prices the European (exercise-at-expiry-only) contract by discounting
/// the terminal payoff.
pub fn european_price(
    model: &MarketModel,
    payoff: &Payoff,
    grid: &TimeGrid,
    num_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let batch = simulate(model, payoff, grid, num_paths, seed)?;
    let df = (-model.rate() * grid.horizon()).exp();
    Ok(discounted_mean(batch.step_payoffs(grid.steps()), df))
}

/// Mean and standard error of `df * values`.
pub(crate) fn discounted_mean(values: &[f64], df: f64) -> McEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| {
            let e = v - mean;
            e * e
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    McEstimate {
        value: df * mean,
        std_error: df * (var / n).sqrt(),
    }
}
