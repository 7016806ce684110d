//! Policy iteration for randomized optimal stopping.
//!
//! The American price is approached through a family of soft-stopping
//! problems indexed by a temperature `lambda > 0`: the holder stops at a
//! state-dependent intensity rather than at a stopping time, and an
//! entropy penalty keeps that intensity finite. The regularized value
//! function satisfies, between exercise dates,
//!
//! `dv = ( r v - lambda * (exp((P - v)/lambda) - 1) ) dt + martingale`,
//!
//! with terminal value `P_T`. Policy iteration linearizes the driver
//! around the current iterate `v^m` and steps each path-state pair with
//! an exponential integrator over one grid interval:
//!
//! `a = exp((P - v^m)/lambda) + r`,
//! `b = exp((P - v^m)/lambda) * v^m + lambda * expm1((P - v^m)/lambda)`,
//! `v^{m+1}_k = exp(-a dt) * E_k[v^{m+1}_{k+1}] + (b/a) (1 - exp(-a dt))`,
//!
//! swept backward so each step's conditional expectation (a regression
//! from [`crate::regression`]) already sees the updated next step. The
//! iteration starts from the discounted European surface, increases
//! monotonically (after the first policy evaluation), and converges to
//! the temperature-`lambda` value; a decreasing temperature schedule
//! warm-starts each stage from the previous one.
//!
//! The exponential terms are evaluated in branch-separated form so the
//! sweep never overflows: deep in-the-money states (`x = (P - v)/lambda`
//! large) reduce algebraically to `v + lambda * (1 - e^{-x})` over
//! `1 + r e^{-x}`, which is exact even when `e^x` is far beyond the
//! floating-point range — there the iterate climbs by `lambda` per sweep
//! until the exercise region is priced in.

mod classical;
mod dual;
mod lattice_exact;

pub use classical::{classical_node, run_classical_penalization};
pub use dual::dual_upper_bound;
pub use lattice_exact::{step_linearized_node, LatticePia};

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::intensity;
use crate::model::{Method, RunConfig};
use crate::paths::{simulate_with, McEstimate, PathBatch, SimOptions};
use crate::regression::RegressionPlan;

/// Paths per parallel chunk in sweep updates (matches the regression
/// module so reductions stay deterministic).
const CHUNK: usize = 4096;

/// Stream offset for evaluation batches, far beyond any realistic path
/// count so training and evaluation draws never overlap.
const EVAL_STREAM_OFFSET: u64 = 1 << 33;

/// Per-path value estimates on every grid step, `[step][path]` flattened.
///
/// The terminal row always holds the exercise values and is never
/// rewritten by sweeps.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    num_paths: usize,
    num_steps: usize,
    iteration: usize,
    values: Vec<f64>,
}

impl ValueSurface {
    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    /// Number of grid intervals; the surface has one more row.
    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// Completed policy-iteration sweeps since initialization.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_paths..(k + 1) * self.num_paths]
    }

    #[cfg(test)]
    fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.num_paths..(k + 1) * self.num_paths]
    }

    /// Mean over paths of the time-zero row. All paths share the spot
    /// state, so this row is constant up to roundoff and its mean is the
    /// price estimate.
    pub fn root_price(&self) -> f64 {
        let row = self.row(0);
        row.iter().sum::<f64>() / row.len() as f64
    }

    /// Dispersion-based standard error of [`ValueSurface::root_price`]:
    /// the sampling error of the first regression the root value is
    /// built from.
    pub fn root_std_error(&self, discount: f64) -> f64 {
        let row = self.row(1);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row
            .iter()
            .map(|v| {
                let e = v - mean;
                e * e
            })
            .sum::<f64>()
            / (n - 1.0);
        discount * (var / n).sqrt()
    }
}

/// Builds the starting surface: the discounted European value
/// `E_k[ e^{-r (T - t_k)} P_T ]` at every step, with the exercise values
/// on the terminal row.
pub fn init_surface(plan: &RegressionPlan<'_>) -> Result<ValueSurface> {
    let batch = plan.batch();
    let m = batch.num_paths();
    let n = batch.grid().steps();
    let rate = batch.model().rate();
    let horizon = batch.grid().horizon();

    let mut values = vec![0.0_f64; (n + 1) * m];
    values[n * m..].copy_from_slice(batch.step_payoffs(n));

    let terminal = batch.step_payoffs(n);
    let mut target = vec![0.0_f64; m];
    for k in 0..n {
        let df = (-rate * (horizon - batch.grid().time(k))).exp();
        for (t, &p) in target.iter_mut().zip(terminal) {
            *t = df * p;
        }
        plan.cond_exp_into(k, &target, &mut values[k * m..(k + 1) * m])?;
    }

    Ok(ValueSurface {
        num_paths: m,
        num_steps: n,
        iteration: 0,
        values,
    })
}

/// One exponential-integrator update of a single path-state value.
///
/// `cont` is the conditional expectation of the updated next-step value,
/// `value` the current iterate at this state, `pay` the exercise value.
/// Branches keep every regime of `x = (pay - value)/lambda` finite; see
/// the module docs.
#[inline]
pub fn exp_integrator_step(
    cont: f64,
    value: f64,
    pay: f64,
    lambda: f64,
    rate: f64,
    dt: f64,
) -> f64 {
    let x = (pay - value) / lambda;
    if x >= 300.0 {
        // e^{-a dt} vanishes at double precision; rescale b/a by e^{-x}.
        let em = (-x).exp();
        (value + lambda * (1.0 - em)) / (1.0 + rate * em)
    } else {
        let g = x.exp();
        let a = g + rate;
        let b = g * value + lambda * x.exp_m1();
        let adt = a * dt;
        if adt < 1e-10 {
            // expansion avoids 0/0 when both the policy rate and the
            // interest rate vanish
            cont * (1.0 - adt) + b * dt
        } else {
            (-adt).exp() * cont + (b / a) * (-(-adt).exp_m1())
        }
    }
}

/// Statistics of one completed sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepStats {
    /// Sweeps completed so far (1-based after the first call).
    pub iteration: usize,
    pub root_price: f64,
}

/// Performs one backward policy-iteration sweep in place.
///
/// Rows above `k` hold already-updated values (the sweep is backward), so
/// the conditional expectation at `k` sees the new iterate, while the
/// coefficients `a, b` use the previous iterate still stored at row `k`.
pub fn pia_sweep(
    surface: &mut ValueSurface,
    plan: &RegressionPlan<'_>,
    lambda: f64,
) -> Result<SweepStats> {
    let batch = plan.batch();
    let m = surface.num_paths;
    let n = surface.num_steps;
    if batch.num_paths() != m || batch.grid().steps() != n {
        return Err(Error::invalid("surface and plan sizes do not match"));
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid("temperature must be finite and positive"));
    }
    let rate = batch.model().rate();
    let dt = batch.grid().dt();
    let iteration = surface.iteration + 1;

    let mut cont = vec![0.0_f64; m];
    for k in (0..n).rev() {
        // Split so the k+1 row (regression target) can be borrowed while
        // writing row k.
        let (head, tail) = surface.values.split_at_mut((k + 1) * m);
        let row_k = &mut head[k * m..];
        let row_next = &tail[..m];
        plan.cond_exp_into(k, row_next, &mut cont)
            .map_err(|e| attach_iteration(e, iteration))?;

        let pays = batch.step_payoffs(k);
        let first_bad = row_k
            .par_chunks_mut(CHUNK)
            .zip(cont.par_chunks(CHUNK))
            .zip(pays.par_chunks(CHUNK))
            .enumerate()
            .map(|(chunk_idx, ((values, conts), pays))| {
                let mut bad: Option<usize> = None;
                for (local, (v, (&c, &p))) in
                    values.iter_mut().zip(conts.iter().zip(pays)).enumerate()
                {
                    let updated = exp_integrator_step(c, *v, p, lambda, rate, dt);
                    if !updated.is_finite() && bad.is_none() {
                        bad = Some(chunk_idx * CHUNK + local);
                    }
                    *v = updated;
                }
                bad
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                },
            );
        if let Some(path) = first_bad {
            return Err(Error::NonFinite {
                path,
                step: k,
                iteration,
            });
        }
    }

    surface.iteration = iteration;
    Ok(SweepStats {
        iteration,
        root_price: surface.root_price(),
    })
}

fn attach_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} (iteration {iteration})")),
        other => other,
    }
}

/// One row of the per-sweep price trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    /// Global sweep index across all stages, 1-based.
    pub iteration: usize,
    pub lambda: f64,
    pub price: f64,
}

/// Price and standard error recorded at the end of one schedule stage.
#[derive(Debug, Clone, Copy)]
pub struct StageResult {
    pub lambda: f64,
    pub iterations: usize,
    pub price: f64,
    pub std_error: f64,
}

/// Optional extras for [`run_pia_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PiaOptions {
    /// Use antithetic path pairs for the training batch.
    pub antithetic: bool,
    /// Compute the martingale duality upper bound on a fresh batch after
    /// the final stage.
    pub dual: bool,
    /// Replay the final stopping policy on a fresh batch for an
    /// out-of-sample lower bound on the American price.
    pub out_of_sample: bool,
}

/// Headline result of a pricing run.
#[derive(Debug, Clone)]
pub struct PriceReport {
    pub method: Method,
    /// Price estimate (in-sample for the iterative methods).
    pub price: f64,
    pub std_error: f64,
    /// Final temperature, where the method has one.
    pub lambda: Option<f64>,
    /// Total sweeps performed.
    pub iterations: usize,
    pub num_paths: usize,
    /// Martingale duality upper bound, when requested.
    pub upper_bound: Option<McEstimate>,
    /// Out-of-sample policy replay, when requested.
    pub lower_bound: Option<McEstimate>,
    pub wall_time_secs: f64,
}

impl PriceReport {
    /// Key/value lines for plain-text output.
    pub fn to_lines(&self) -> Vec<(String, String)> {
        let mut lines = vec![
            ("method".into(), format!("{:?}", self.method)),
            ("price".into(), format!("{:.6}", self.price)),
            ("std_error".into(), format!("{:.6}", self.std_error)),
        ];
        if let Some(lambda) = self.lambda {
            lines.push(("lambda".into(), format!("{lambda}")));
        }
        lines.push(("iterations".into(), self.iterations.to_string()));
        lines.push(("num_paths".into(), self.num_paths.to_string()));
        if let Some(ub) = self.upper_bound {
            lines.push(("upper_bound".into(), format!("{:.6}", ub.value)));
            lines.push(("upper_bound_se".into(), format!("{:.6}", ub.std_error)));
        }
        if let Some(lb) = self.lower_bound {
            lines.push(("out_of_sample".into(), format!("{:.6}", lb.value)));
            lines.push(("out_of_sample_se".into(), format!("{:.6}", lb.std_error)));
        }
        lines.push((
            "wall_time_secs".into(),
            format!("{:.3}", self.wall_time_secs),
        ));
        lines
    }
}

/// Complete output of a policy-iteration run.
#[derive(Debug)]
pub struct PiaRun {
    pub report: PriceReport,
    /// Root price after every sweep.
    pub trace: Vec<TraceRow>,
    /// End-of-stage snapshots, one per schedule stage.
    pub stage_results: Vec<StageResult>,
    /// Final value surface (training paths).
    pub surface: ValueSurface,
}

/// Runs the full temperature schedule from `config` and returns the
/// priced run. Equivalent to [`run_pia_with`] with default options.
pub fn run_pia(config: &RunConfig) -> Result<PiaRun> {
    run_pia_with(config, &PiaOptions::default())
}

/// Runs policy iteration with explicit options.
pub fn run_pia_with(config: &RunConfig, options: &PiaOptions) -> Result<PiaRun> {
    config.validate()?;
    let started = Instant::now();

    let sim_options = SimOptions {
        antithetic: options.antithetic,
        stream_offset: 0,
    };
    let batch = simulate_with(
        &config.model,
        &config.payoff,
        &config.grid,
        config.num_paths,
        config.seed,
        sim_options,
    )?;
    let plan = RegressionPlan::build(&batch, &config.basis)?;
    let mut surface = init_surface(&plan)?;

    let discount = (-config.model.rate() * config.grid.dt()).exp();
    let mut trace = Vec::with_capacity(config.schedule.total_iterations());
    let mut stage_results = Vec::with_capacity(config.schedule.stages().len());
    for stage in config.schedule.stages() {
        for _ in 0..stage.iterations {
            let stats = pia_sweep(&mut surface, &plan, stage.lambda)?;
            trace.push(TraceRow {
                iteration: stats.iteration,
                lambda: stage.lambda,
                price: stats.root_price,
            });
        }
        stage_results.push(StageResult {
            lambda: stage.lambda,
            iterations: stage.iterations,
            price: surface.root_price(),
            std_error: surface.root_std_error(discount),
        });
    }

    let final_lambda = config.schedule.final_lambda();
    let upper_bound = if options.dual {
        Some(dual_upper_bound(
            &surface,
            &plan,
            &config.basis,
            config.seed,
            EVAL_STREAM_OFFSET,
        )?)
    } else {
        None
    };
    let lower_bound = if options.out_of_sample {
        Some(replay_policy(
            &surface,
            &plan,
            final_lambda,
            config.seed,
            EVAL_STREAM_OFFSET * 2,
        )?)
    } else {
        None
    };

    let report = PriceReport {
        method: Method::Pia,
        price: surface.root_price(),
        std_error: surface.root_std_error(discount),
        lambda: Some(final_lambda),
        iterations: surface.iteration(),
        num_paths: config.num_paths,
        upper_bound,
        lower_bound,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };

    Ok(PiaRun {
        report,
        trace,
        stage_results,
        surface,
    })
}

/// Per-path, per-step stopping intensities of the soft policy implied by
/// a value surface.
#[derive(Debug, Clone)]
pub struct PolicyView {
    num_paths: usize,
    num_steps: usize,
    intensities: Vec<f64>,
}

impl PolicyView {
    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// Stopping intensities at step `k`, one per path.
    pub fn step(&self, k: usize) -> &[f64] {
        &self.intensities[k * self.num_paths..(k + 1) * self.num_paths]
    }
}

/// Evaluates the stopping intensity `(e^x - 1)/x`, `x = (P - v)/lambda`,
/// at every non-terminal path-state of the surface.
pub fn policy_view(surface: &ValueSurface, batch: &PathBatch, lambda: f64) -> Result<PolicyView> {
    if batch.num_paths() != surface.num_paths || batch.grid().steps() != surface.num_steps {
        return Err(Error::invalid("surface and batch sizes do not match"));
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid("temperature must be finite and positive"));
    }
    let m = surface.num_paths;
    let n = surface.num_steps;
    let mut intensities = vec![0.0_f64; n * m];
    for k in 0..n {
        let row = surface.row(k);
        let pays = batch.step_payoffs(k);
        let out = &mut intensities[k * m..(k + 1) * m];
        for ((slot, &v), &p) in out.iter_mut().zip(row).zip(pays) {
            *slot = intensity(p, v, lambda);
        }
    }
    Ok(PolicyView {
        num_paths: m,
        num_steps: n,
        intensities,
    })
}

/// Replays the surface's soft-stopping policy on a fresh batch: stop over
/// `[t_k, t_{k+1})` with probability `1 - exp(-gamma dt)` where `gamma`
/// is the policy intensity at the fresh state, collect the discounted
/// payoff. Any stopping rule prices below the American value, so this is
/// a genuine out-of-sample lower bound (up to Monte Carlo error).
fn replay_policy(
    surface: &ValueSurface,
    plan: &RegressionPlan<'_>,
    lambda: f64,
    seed: u64,
    stream_offset: u64,
) -> Result<McEstimate> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let train = plan.batch();
    let n = train.grid().steps();
    let m = train.num_paths();
    let rate = train.model().rate();
    let dt = train.grid().dt();

    // Fitted-function representation of every non-terminal row.
    let mut coeffs = Vec::with_capacity(n);
    for k in 0..n {
        coeffs.push(plan.coefficients(k, surface.row(k))?);
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

    let basis = plan.basis();
    let mut scratch = vec![0.0_f64; basis.len()];
    let mut payouts = Vec::with_capacity(m);
    for i in 0..m {
        // Stopping draws get their own streams, disjoint from every
        // price stream by a further offset.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_offset + (m + i) as u64);
        let mut payout = (-rate * train.grid().horizon()).exp() * fresh.exercise_value(n, i);
        for (k, coeff) in coeffs.iter().enumerate() {
            let value = basis.apply(
                fresh.prices_at(k, i),
                fresh.exercise_value(k, i),
                coeff,
                &mut scratch,
            );
            let gamma = intensity(fresh.exercise_value(k, i), value, lambda);
            let stop_prob = -(-gamma * dt).exp_m1();
            if rng.gen::<f64>() < stop_prob {
                payout = (-rate * train.grid().time(k)).exp() * fresh.exercise_value(k, i);
                break;
            }
        }
        payouts.push(payout);
    }

    Ok(crate::paths::discounted_mean(&payouts, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BasisSpec, LambdaSchedule, MarketModel, Payoff, Stage, TimeGrid};
    use crate::paths::simulate;
    use approx::assert_relative_eq;

    fn put_config(num_paths: usize, steps: usize, schedule: LambdaSchedule) -> RunConfig {
        RunConfig {
            model: MarketModel::new(vec![100.0], 0.05, 0.0, 0.2).unwrap(),
            payoff: Payoff::Put { strike: 100.0 },
            grid: TimeGrid::new(1.0, steps).unwrap(),
            num_paths,
            seed: 99,
            schedule,
            basis: BasisSpec::Polynomial {
                degree: 5,
                payoff_features: true,
            },
            method: Method::Pia,
        }
    }

    #[test]
    fn integrator_step_reference_value() {
        // lambda = 1, rate = 0, pay = value = 0.5 gives a = 1, b = 0.5;
        // with cont = 10, dt = 0.01 the update is
        // e^{-0.01} * 10 + 0.5 * (1 - e^{-0.01}) = 9.905473420617096
        // (frozen from an independent evaluation).
        let v = exp_integrator_step(10.0, 0.5, 0.5, 1.0, 0.0, 0.01);
        assert_relative_eq!(v, 9.905_473_420_617_096, epsilon = 1e-12);
    }

    #[test]
    fn integrator_step_branch_seam_is_continuous() {
        let (cont, value, lambda, rate, dt) = (3.0, 1.0, 0.01, 0.05, 0.02);
        let below = exp_integrator_step(cont, value, value + lambda * 299.999, lambda, rate, dt);
        let above = exp_integrator_step(cont, value, value + lambda * 300.001, lambda, rate, dt);
        assert!((below - above).abs() < 1e-9, "{below} vs {above}");
    }

    #[test]
    fn integrator_step_deep_exercise_climbs_by_lambda() {
        // x beyond the representable exponential range: the update is
        // exactly value + lambda.
        let lambda = 1e-3;
        let v = exp_integrator_step(0.0, 1.0, 2.0, lambda, 0.05, 0.01);
        assert_eq!(v, 1.0 + lambda);
    }

    #[test]
    fn integrator_step_deep_continuation_discounts() {
        // x very negative: the policy never stops, so the update is the
        // discounted continuation with the entropy leak -lambda/r (1-df).
        let (cont, value, lambda, rate, dt) = (5.0, 8.0, 0.01, 0.05, 0.02);
        let pay = value - lambda * 50.0;
        let v = exp_integrator_step(cont, value, pay, lambda, rate, dt);
        let df = (-rate * dt).exp();
        let expect = df * cont - (lambda / rate) * (1.0 - df);
        assert_relative_eq!(v, expect, epsilon = 1e-10);

        // zero-rate limit: cont - lambda dt
        let v0 = exp_integrator_step(cont, value, pay, lambda, 0.0, dt);
        assert_relative_eq!(v0, cont - lambda * dt, epsilon = 1e-12);
    }

    #[test]
    fn init_surface_root_is_discounted_terminal_mean() {
        let config = put_config(2_000, 10, LambdaSchedule::constant(0.1, 1).unwrap());
        let batch = simulate(
            &config.model,
            &config.payoff,
            &config.grid,
            config.num_paths,
            config.seed,
        )
        .unwrap();
        let plan = RegressionPlan::build(&batch, &config.basis).unwrap();
        let surface = init_surface(&plan).unwrap();

        // projections preserve means, so the root of the initial surface
        // is exactly the discounted mean terminal payoff
        let df = (-0.05_f64).exp();
        let terminal_mean: f64 = batch.step_payoffs(10).iter().sum::<f64>() / 2_000.0;
        assert_relative_eq!(surface.root_price(), df * terminal_mean, epsilon = 1e-10);
        // terminal row is the raw exercise values
        assert_eq!(surface.row(10), batch.step_payoffs(10));
        assert_eq!(surface.iteration(), 0);
    }

    #[test]
    fn sweeps_converge_to_lattice_value() {
        // Moderate-size end-to-end check against the tree solution of
        // the same regularized problem. The temperature is kept fairly
        // high so the fixed point is smooth and the in-sample bias small;
        // the tolerance covers basis + Monte Carlo error.
        let schedule = LambdaSchedule::new(vec![
            Stage {
                lambda: 0.1,
                iterations: 120,
            },
            Stage {
                lambda: 0.05,
                iterations: 120,
            },
        ])
        .unwrap();
        let config = put_config(20_000, 50, schedule);
        let run = run_pia(&config).unwrap();

        let lat = crate::lattice::LatticeModel::new(&config.model, &config.grid).unwrap();
        let reference = lat.regularized_root(&config.payoff, 0.05).unwrap();
        assert!(
            (run.report.price - reference).abs() < 0.08,
            "pia {} vs lattice {reference}",
            run.report.price
        );
        assert_eq!(run.report.iterations, 240);
        assert_eq!(run.trace.len(), 240);
        assert_eq!(run.stage_results.len(), 2);
        assert_relative_eq!(
            run.stage_results[1].price,
            run.report.price,
            epsilon = 1e-12
        );
        assert!(run.report.std_error > 0.0 && run.report.std_error < 0.1);

        // the trace never decreases materially once iteration starts
        let scale = run.report.price.abs().max(1.0);
        for w in run.trace.windows(2) {
            if w[0].lambda == w[1].lambda {
                assert!(
                    w[1].price >= w[0].price - 1e-3 * scale,
                    "iteration {}: {} -> {}",
                    w[1].iteration,
                    w[0].price,
                    w[1].price
                );
            }
        }
    }

    #[test]
    fn sweep_rejects_mismatched_surface() {
        let config = put_config(500, 8, LambdaSchedule::constant(0.1, 1).unwrap());
        let batch = simulate(
            &config.model,
            &config.payoff,
            &config.grid,
            config.num_paths,
            config.seed,
        )
        .unwrap();
        let plan = RegressionPlan::build(&batch, &config.basis).unwrap();
        let mut surface = init_surface(&plan).unwrap();
        assert!(pia_sweep(&mut surface, &plan, -0.1).is_err());

        let other_grid = TimeGrid::new(1.0, 9).unwrap();
        let other = simulate(&config.model, &config.payoff, &other_grid, 500, 1).unwrap();
        let other_plan = RegressionPlan::build(&other, &config.basis).unwrap();
        assert!(pia_sweep(&mut surface, &other_plan, 0.1).is_err());
    }

    #[test]
    fn non_finite_surface_is_located() {
        let config = put_config(500, 8, LambdaSchedule::constant(0.1, 1).unwrap());
        let batch = simulate(
            &config.model,
            &config.payoff,
            &config.grid,
            config.num_paths,
            config.seed,
        )
        .unwrap();
        let plan = RegressionPlan::build(&batch, &config.basis).unwrap();
        let mut surface = init_surface(&plan).unwrap();
        // poison one value in the row the first backward step regresses
        surface.row_mut(8)[77] = f64::NAN;
        let err = pia_sweep(&mut surface, &plan, 0.1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("path 77") || msg.contains("step 7"), "{msg}");
    }

    #[test]
    fn policy_view_shapes_and_positivity() {
        let config = put_config(1_000, 12, LambdaSchedule::constant(0.1, 20).unwrap());
        let batch = simulate(
            &config.model,
            &config.payoff,
            &config.grid,
            config.num_paths,
            config.seed,
        )
        .unwrap();
        let plan = RegressionPlan::build(&batch, &config.basis).unwrap();
        let mut surface = init_surface(&plan).unwrap();
        for _ in 0..20 {
            pia_sweep(&mut surface, &plan, 0.1).unwrap();
        }
        let view = policy_view(&surface, &batch, 0.1).unwrap();
        assert_eq!(view.num_paths(), 1_000);
        assert_eq!(view.num_steps(), 12);
        for k in 0..12 {
            for &g in view.step(k) {
                assert!(g.is_finite() && g > 0.0);
            }
        }
    }

    #[test]
    fn report_lines_include_bounds_when_requested() {
        let schedule = LambdaSchedule::constant(0.1, 30).unwrap();
        let config = put_config(4_000, 10, schedule);
        let options = PiaOptions {
            antithetic: false,
            dual: true,
            out_of_sample: true,
        };
        let run = run_pia_with(&config, &options).unwrap();
        let lines = run.report.to_lines();
        let keys: Vec<&str> = lines.iter().map(|(k, _)| k.as_str()).collect();
        assert!(keys.contains(&"upper_bound"));
        assert!(keys.contains(&"out_of_sample"));

        let ub = run.report.upper_bound.unwrap();
        let lb = run.report.lower_bound.unwrap();
        // upper bound above replayed lower bound, both near the price
        assert!(
            ub.value + 3.0 * ub.std_error >= lb.value - 3.0 * lb.std_error,
            "ub {} lb {}",
            ub.value,
            lb.value
        );
        assert!((ub.value - run.report.price).abs() < 1.0);
    }
}
