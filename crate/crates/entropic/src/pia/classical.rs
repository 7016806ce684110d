//! Power-penalty baseline.
//!
//! The classical penalized equation replaces the entropy term with a
//! one-sided linear penalty of strength `n`:
//!
//! `dv = ( r v - n * (P - v)^+ ) dt + martingale`,
//!
//! discretized with one implicit Euler step per grid interval. Because
//! the penalty is piecewise linear, each node update is a closed form —
//! no inner solve and no iteration — which makes this the natural
//! baseline for the randomized-stopping solver: one backward pass at
//! penalty `n` is the hard-threshold analogue of the soft policy at
//! temperature `1/n`.

use std::time::Instant;

use crate::error::Result;
use crate::model::{Method, RunConfig};
use crate::paths::simulate;
use crate::regression::RegressionPlan;

use super::PriceReport;

/// One implicit-Euler node update of the penalized equation.
///
/// Solves `v (1 + rate*dt) = cont + n*dt*(pay - v)^+` exactly: the
/// unconstrained value `w = cont / (1 + rate*dt)` stands when it already
/// dominates the exercise value, otherwise the penalty is active and the
/// equation stays linear:
///
/// `v = (cont + n*dt*pay) / (1 + rate*dt + n*dt)`.
///
/// The two branches agree at `w = pay`, and `penalty = 0` reduces to the
/// discounted continuation in both.
#[inline]
pub fn classical_node(cont: f64, pay: f64, penalty: f64, rate: f64, dt: f64) -> f64 {
    let w = cont / (1.0 + rate * dt);
    if w >= pay {
        w
    } else {
        (cont + penalty * dt * pay) / (1.0 + rate * dt + penalty * dt)
    }
}

/// Prices `config` with the penalized equation at strength `penalty` in a
/// single backward pass (the scheme needs no policy iteration).
pub fn run_classical_penalization(config: &RunConfig, penalty: f64) -> Result<PriceReport> {
    config.validate()?;
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(crate::error::Error::invalid(
            "penalty strength must be finite and non-negative",
        ));
    }
    let started = Instant::now();

    let batch = simulate(
        &config.model,
        &config.payoff,
        &config.grid,
        config.num_paths,
        config.seed,
    )?;
    let plan = RegressionPlan::build(&batch, &config.basis)?;

    let n = config.grid.steps();
    let m = config.num_paths;
    let rate = config.model.rate();
    let dt = config.grid.dt();

    let mut values = batch.step_payoffs(n).to_vec();
    let mut cont = vec![0.0_f64; m];
    let mut first_step_values = Vec::new();
    for k in (0..n).rev() {
        plan.cond_exp_into(k, &values, &mut cont)?;
        let pays = batch.step_payoffs(k);
        for (i, v) in values.iter_mut().enumerate() {
            *v = classical_node(cont[i], pays[i], penalty, rate, dt);
        }
        if k == 1 {
            first_step_values = values.clone();
        }
    }

    let price = values.iter().sum::<f64>() / m as f64;
    let std_error = if first_step_values.is_empty() {
        // single-step grid: fall back to the dispersion of the root pass
        dispersion(&values) / (m as f64).sqrt()
    } else {
        let df = 1.0 / (1.0 + rate * dt);
        df * dispersion(&first_step_values) / (m as f64).sqrt()
    };

    Ok(PriceReport {
        method: Method::ClassicalPenalization,
        price,
        std_error,
        lambda: None,
        iterations: 1,
        num_paths: m,
        upper_bound: None,
        lower_bound: None,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn dispersion(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values
        .iter()
        .map(|v| {
            let e = v - mean;
            e * e
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0))
    .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BasisSpec, LambdaSchedule, MarketModel, Payoff, TimeGrid};
    use crate::paths::simulate;
    use approx::assert_relative_eq;

    #[test]
    fn node_hand_values() {
        // active penalty: (1 + 10*0.1*2) / (1 + 10*0.1) = 3/2
        assert_eq!(classical_node(1.0, 2.0, 10.0, 0.0, 0.1), 1.5);
        // inactive penalty: plain discounting
        assert_relative_eq!(
            classical_node(6.0, 2.0, 10.0, 0.05, 0.1),
            6.0 / 1.005,
            epsilon = 1e-15
        );
        // zero penalty discounts in both branches
        assert_relative_eq!(
            classical_node(1.0, 2.0, 0.0, 0.05, 0.1),
            1.0 / 1.005,
            epsilon = 1e-15
        );
        // infinite-penalty limit approaches the exercise value
        assert_relative_eq!(
            classical_node(1.0, 2.0, 1e12, 0.05, 0.1),
            2.0,
            epsilon = 1e-9
        );
    }

    fn put_config(num_paths: usize, steps: usize) -> RunConfig {
        RunConfig {
            model: MarketModel::new(vec![100.0], 0.05, 0.0, 0.2).unwrap(),
            payoff: Payoff::Put { strike: 100.0 },
            grid: TimeGrid::new(1.0, steps).unwrap(),
            num_paths,
            seed: 21,
            schedule: LambdaSchedule::constant(0.1, 1).unwrap(),
            basis: BasisSpec::Polynomial {
                degree: 5,
                payoff_features: true,
            },
            method: Method::ClassicalPenalization,
        }
    }

    #[test]
    fn zero_penalty_is_compound_discounted_terminal_mean() {
        // with the penalty off, the pass composes mean-preserving
        // projections with division by (1 + r dt), so the root price is
        // the terminal mean payoff over (1 + r dt)^N exactly
        let config = put_config(3_000, 25);
        let report = run_classical_penalization(&config, 0.0).unwrap();
        let batch = simulate(
            &config.model,
            &config.payoff,
            &config.grid,
            config.num_paths,
            config.seed,
        )
        .unwrap();
        let terminal_mean = batch.step_payoffs(25).iter().sum::<f64>() / config.num_paths as f64;
        let compound = (1.0 + 0.05 * config.grid.dt()).powi(25);
        assert_relative_eq!(
            report.price,
            terminal_mean / compound,
            epsilon = 1e-10,
            max_relative = 1e-10
        );
        assert_eq!(report.method, Method::ClassicalPenalization);
        assert!(report.std_error > 0.0);
    }

    #[test]
    fn price_increases_with_penalty_strength() {
        let config = put_config(6_000, 25);
        let loose = run_classical_penalization(&config, 1.0).unwrap();
        let mid = run_classical_penalization(&config, 10.0).unwrap();
        let tight = run_classical_penalization(&config, 1_000.0).unwrap();
        assert!(
            loose.price < mid.price && mid.price < tight.price,
            "{} / {} / {}",
            loose.price,
            mid.price,
            tight.price
        );

        // strong penalty approaches the tree American value
        let lattice = crate::lattice::LatticeModel::new(&config.model, &config.grid).unwrap();
        let american = lattice.american_root(&config.payoff).unwrap();
        assert!(
            (tight.price - american).abs() < 0.25,
            "penalized {} vs American {american}",
            tight.price
        );
    }

    #[test]
    fn rejects_negative_penalty() {
        let config = put_config(100, 5);
        assert!(run_classical_penalization(&config, -1.0).is_err());
        assert!(run_classical_penalization(&config, f64::NAN).is_err());
    }
}
