//! Martingale duality upper bound.
//!
//! For any martingale `M` with `M_0 = 0`, the American value is bounded
//! above by `E[ max_k ( discounted payoff at k  -  M_k ) ]`; the bound is
//! tight when `M` is the martingale part of the discounted true value
//! process. This module builds an approximate optimal martingale from a
//! trained value surface: the surface rows are turned into fitted
//! functions of the state, evaluated along a fresh, independent batch of
//! paths, and the one-step regression residual
//!
//! `dM_{k+1} = vtil_{k+1} - E_k[ vtil_{k+1} ]`
//!
//! (with `vtil_k` the discounted fitted value and the conditional
//! expectation estimated by a projection built on the fresh batch alone)
//! is accumulated along each path. The pathwise maximum of discounted
//! exercise value minus `M` then averages to the upper bound. The better
//! the trained surface, the smaller the gap between this bound and the
//! lower estimates.

use crate::error::Result;
use crate::model::BasisSpec;
use crate::paths::{discounted_mean, simulate_with, McEstimate, SimOptions};
use crate::regression::RegressionPlan;

use super::ValueSurface;

/// Computes the duality upper bound from a trained surface.
///
/// `train_plan` must be the plan the surface was trained with; `spec` its
/// basis specification (needed to build the independent projection on the
/// evaluation batch). Fresh paths are drawn from `seed` at streams
/// shifted by `stream_offset`, which must put them out of reach of the
/// training streams.
pub fn dual_upper_bound(
    surface: &ValueSurface,
    train_plan: &RegressionPlan<'_>,
    spec: &BasisSpec,
    seed: u64,
    stream_offset: u64,
) -> Result<McEstimate> {
    let train = train_plan.batch();
    let n = train.grid().steps();
    let m = train.num_paths();
    let rate = train.model().rate();
    let horizon = train.grid().horizon();

    // Coefficient form of every interior surface row. Row 0 is a
    // constant and never enters the martingale increments; row N is the
    // payoff itself and is used exactly.
    let mut coeffs = Vec::with_capacity(n);
    coeffs.push(Vec::new());
    for k in 1..n {
        coeffs.push(train_plan.coefficients(k, surface.row(k))?);
    }

    let fresh = simulate_with(
        train.model(),
        train.payoff(),
        train.grid(),
        m,
        seed,
        SimOptions {
            antithetic: false,
            stream_offset,
        },
    )?;
    let fresh_plan = RegressionPlan::build(&fresh, spec)?;
    let basis = fresh_plan.basis();

    // Forward accumulation: M_k per path, current best of the pathwise
    // max, and the discounted fitted value at the next step.
    let mut martingale = vec![0.0_f64; m];
    let mut best: Vec<f64> = fresh.step_payoffs(0).to_vec();
    let mut vtil_next = vec![0.0_f64; m];
    let mut cond = vec![0.0_f64; m];
    let mut scratch = vec![0.0_f64; basis.len()];

    for k in 0..n {
        let t_next = train.grid().time(k + 1);
        let df_next = (-rate * t_next).exp();
        if k + 1 < n {
            let beta = &coeffs[k + 1];
            for (i, slot) in vtil_next.iter_mut().enumerate() {
                *slot = df_next
                    * basis.apply(
                        fresh.prices_at(k + 1, i),
                        fresh.exercise_value(k + 1, i),
                        beta,
                        &mut scratch,
                    );
            }
        } else {
            let df_t = (-rate * horizon).exp();
            for (slot, &p) in vtil_next.iter_mut().zip(fresh.step_payoffs(n)) {
                *slot = df_t * p;
            }
        }

        fresh_plan.cond_exp_into(k, &vtil_next, &mut cond)?;
        let pays = fresh.step_payoffs(k + 1);
        for i in 0..m {
            martingale[i] += vtil_next[i] - cond[i];
            let candidate = df_next * pays[i] - martingale[i];
            if candidate > best[i] {
                best[i] = candidate;
            }
        }
    }

    Ok(discounted_mean(&best, 1.0))
}
