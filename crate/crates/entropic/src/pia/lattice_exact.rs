//! Policy iteration with exact conditional expectations.
//!
//! Runs the same linearized backward sweeps as the Monte Carlo solver,
//! but on a recombining tree where one-step conditional expectations are
//! exact. This isolates the iteration itself — its monotonicity and its
//! geometric convergence rate — from regression and sampling error. The
//! fixed point of the sweep map is the implicit-Euler randomized-stopping
//! surface computed by [`LatticeModel::regularized`], so iterates can be
//! compared against an independently solved reference.

use crate::error::Result;
use crate::lattice::LatticeModel;
use crate::model::{MarketModel, Payoff, TimeGrid};

/// One linearized-implicit node update.
///
/// Freezing the exponential policy weight `g = exp((pay - value)/lambda)`
/// at the current iterate turns the implicit node equation
/// `v (1 + r dt) = cont + dt * lambda * expm1((pay - v)/lambda)`
/// into a linear one:
///
/// `v' = (cont + dt * (g * value + lambda * (g - 1))) / (1 + r dt + dt * g)`.
///
/// For `pay > value` the same expression is evaluated with numerator and
/// denominator scaled by `e^{-x}`, which stays finite for arbitrarily
/// deep exercise states (the update then tends to `value + lambda`).
/// The fixed point in `value` is exactly the implicit-Euler node.
#[inline]
pub fn step_linearized_node(
    cont: f64,
    value: f64,
    pay: f64,
    lambda: f64,
    rate: f64,
    dt: f64,
) -> f64 {
    let x = (pay - value) / lambda;
    if x >= 0.0 {
        let em = (-x).exp();
        (cont * em + dt * (value + lambda * (1.0 - em))) / (em * (1.0 + rate * dt) + dt)
    } else {
        let g = x.exp();
        (cont + dt * (g * value + lambda * x.exp_m1())) / (1.0 + rate * dt + dt * g)
    }
}

/// Policy iteration on a binomial tree at a fixed temperature.
#[derive(Debug, Clone)]
pub struct LatticePia {
    lattice: LatticeModel,
    payoff: Payoff,
    lambda: f64,
    iteration: usize,
    levels: Vec<Vec<f64>>,
    payoffs: Vec<Vec<f64>>,
}

impl LatticePia {
    /// Builds the tree and initializes the iterate with the European
    /// surface, mirroring the Monte Carlo solver's starting point.
    pub fn new(model: &MarketModel, grid: &TimeGrid, payoff: &Payoff, lambda: f64) -> Result<Self> {
        let lattice = LatticeModel::new(model, grid)?;
        let levels = lattice.european(payoff)?.into_levels();
        let payoffs = (0..=grid.steps())
            .map(|k| lattice.level_payoffs(k, payoff))
            .collect();
        Ok(Self {
            lattice,
            payoff: payoff.clone(),
            lambda,
            iteration: 0,
            levels,
            payoffs,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Completed sweeps since initialization.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    /// Current iterate values at level `k`, node-index order.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    /// Changes the temperature in place, keeping the current iterate as
    /// the warm start for the next stage.
    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    /// One backward sweep; each step's exact conditional expectation sees
    /// the already-updated next level.
    pub fn sweep(&mut self) {
        let n = self.levels.len() - 1;
        let rate = self.lattice.model().rate();
        let dt = self.lattice.grid().dt();
        for k in (0..n).rev() {
            let cont = self.lattice.step_expectation(k, &self.levels[k + 1]);
            let pays = &self.payoffs[k];
            let level = &mut self.levels[k];
            for ((v, c), &p) in level.iter_mut().zip(cont).zip(pays) {
                *v = step_linearized_node(c, *v, p, self.lambda, rate, dt);
            }
        }
        self.iteration += 1;
    }

    /// Runs `count` sweeps and returns the root value.
    pub fn run(&mut self, count: usize) -> f64 {
        for _ in 0..count {
            self.sweep();
        }
        self.root()
    }

    /// Independent reference: the implicit-Euler surface this iteration
    /// converges to, solved node-by-node.
    pub fn reference_root(&self) -> Result<f64> {
        self.lattice.regularized_root(&self.payoff, self.lambda)
    }
}
