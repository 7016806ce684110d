//! Recombining-tree reference prices.
//!
//! One- and two-asset binomial trees (independent trees per asset, shared
//! parameters) provide exercise-boundary-free references for the Monte
//! Carlo solvers: the American and European values by standard backward
//! induction, and the exact value of the randomized-stopping problem at a
//! fixed temperature `lambda` via an implicit-Euler node solve. The node
//! equation
//!
//! `v = c + dt * ( lambda * (exp((P - v)/lambda) - 1) - r * v )`
//!
//! (with `c` the undiscounted one-step conditional expectation and `P`
//! the exercise value) is solved in the scaled variable `x = (P - v) /
//! lambda`, where it is strictly monotone for any positive `lambda`, by
//! bracketing plus a guarded Newton polish. Solving in `x` rather than
//! `v` keeps the iteration exact even when `lambda` is tiny and the
//! exponential term turns on like a switch.

use crate::error::{Error, Result};
use crate::model::{MarketModel, Payoff, TimeGrid};

/// Largest grid for which full node surfaces are kept, per dimension.
/// Above these the quadratic/cubic node counts stop being worth holding
/// in memory; the `*_root` methods use rolling levels instead.
const MAX_SURFACE_STEPS_1D: usize = 5_000;
const MAX_SURFACE_STEPS_2D: usize = 300;

/// Binomial tree sharing its up/down factors across assets.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    model: MarketModel,
    grid: TimeGrid,
    up: f64,
    prob_up: f64,
}

impl LatticeModel {
    /// Builds the tree, checking that the risk-neutral up-probability is
    /// a probability. Zero volatility is allowed only when the rate and
    /// dividend cancel (the tree degenerates to a single constant path
    /// with `prob_up = 1/2`).
    pub fn new(model: &MarketModel, grid: &TimeGrid) -> Result<Self> {
        if model.dim() > 2 {
            return Err(Error::invalid(
                "lattice references support one or two assets",
            ));
        }
        let dt = grid.dt();
        let growth = ((model.rate() - model.dividend()) * dt).exp();
        let (up, prob_up) = if model.sigma() == 0.0 {
            if (growth - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(
                    "zero volatility requires rate == dividend on a lattice",
                ));
            }
            (1.0, 0.5)
        } else {
            let up = (model.sigma() * dt.sqrt()).exp();
            let down = 1.0 / up;
            let p = (growth - down) / (up - down);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!(
                    "up-probability {p} outside (0, 1); use more steps or higher volatility"
                )));
            }
            (up, p)
        };
        Ok(Self {
            model: model.clone(),
            grid: *grid,
            up,
            prob_up,
        })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn prob_up(&self) -> f64 {
        self.prob_up
    }

    /// Nodes in level `k`: `(k+1)^dim`.
    pub fn node_count(&self, k: usize) -> usize {
        (k + 1).pow(self.dim() as u32)
    }

    /// Asset price at tree coordinate `j` (number of up-moves) in level
    /// `k`, for the asset with spot `spot`.
    #[inline]
    fn coord_price(&self, spot: f64, k: usize, j: usize) -> f64 {
        spot * self.up.powi(2 * j as i32 - k as i32)
    }

    /// Exercise values for every node of level `k`, in node-index order
    /// (second asset fastest in two dimensions).
    pub(crate) fn level_payoffs(&self, k: usize, payoff: &Payoff) -> Vec<f64> {
        let n = k + 1;
        match self.dim() {
            1 => (0..n)
                .map(|j| payoff.value(&[self.coord_price(self.model.spot()[0], k, j)]))
                .collect(),
            _ => {
                let mut out = Vec::with_capacity(n * n);
                for j1 in 0..n {
                    let s1 = self.coord_price(self.model.spot()[0], k, j1);
                    for j2 in 0..n {
                        let s2 = self.coord_price(self.model.spot()[1], k, j2);
                        out.push(payoff.value(&[s1, s2]));
                    }
                }
                out
            }
        }
    }

    /// Undiscounted one-step conditional expectations: maps level `k+1`
    /// values to level `k`.
    pub(crate) fn step_expectation(&self, k: usize, next: &[f64]) -> Vec<f64> {
        let p = self.prob_up;
        let q = 1.0 - p;
        let n = k + 1;
        match self.dim() {
            1 => (0..n).map(|j| p * next[j + 1] + q * next[j]).collect(),
            _ => {
                let stride = k + 2;
                let mut out = Vec::with_capacity(n * n);
                for j1 in 0..n {
                    let row0 = j1 * stride;
                    let row1 = (j1 + 1) * stride;
                    for j2 in 0..n {
                        out.push(
                            p * p * next[row1 + j2 + 1]
                                + p * q * (next[row1 + j2] + next[row0 + j2 + 1])
                                + q * q * next[row0 + j2],
                        );
                    }
                }
                out
            }
        }
    }

    fn check_surface_size(&self) -> Result<()> {
        let cap = if self.dim() == 1 {
            MAX_SURFACE_STEPS_1D
        } else {
            MAX_SURFACE_STEPS_2D
        };
        if self.grid.steps() > cap {
            return Err(Error::invalid(format!(
                "{} steps exceeds the {cap}-step cap for full node surfaces; \
                 use the *_root methods",
                self.grid.steps()
            )));
        }
        Ok(())
    }

    /// American value by backward induction, full node surface.
    pub fn american(&self, payoff: &Payoff) -> Result<NodeValues> {
        self.check_surface_size()?;
        payoff.check_dim(self.dim())?;
        let n = self.grid.steps();
        let disc = (-self.model.rate() * self.grid.dt()).exp();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &levels[k + 1]);
            let pays = self.level_payoffs(k, payoff);
            for (v, pay) in level.iter_mut().zip(pays) {
                *v = (disc * *v).max(pay);
            }
            levels[k] = level;
        }
        Ok(NodeValues { levels })
    }

    /// American root value with rolling levels (no surface storage).
    pub fn american_root(&self, payoff: &Payoff) -> Result<f64> {
        payoff.check_dim(self.dim())?;
        let n = self.grid.steps();
        let disc = (-self.model.rate() * self.grid.dt()).exp();
        let mut next = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &next);
            let pays = self.level_payoffs(k, payoff);
            for (v, pay) in level.iter_mut().zip(pays) {
                *v = (disc * *v).max(pay);
            }
            next = level;
        }
        Ok(next[0])
    }

    /// European value (exercise at expiry only), full node surface.
    pub fn european(&self, payoff: &Payoff) -> Result<NodeValues> {
        self.check_surface_size()?;
        payoff.check_dim(self.dim())?;
        let n = self.grid.steps();
        let disc = (-self.model.rate() * self.grid.dt()).exp();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &levels[k + 1]);
            for v in level.iter_mut() {
                *v *= disc;
            }
            levels[k] = level;
        }
        Ok(NodeValues { levels })
    }

    /// European root value with rolling levels.
    pub fn european_root(&self, payoff: &Payoff) -> Result<f64> {
        payoff.check_dim(self.dim())?;
        let n = self.grid.steps();
        let disc = (-self.model.rate() * self.grid.dt()).exp();
        let mut next = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &next);
            for v in level.iter_mut() {
                *v *= disc;
            }
            next = level;
        }
        Ok(next[0])
    }

    /// Exact value of the randomized-stopping problem at temperature
    /// `lambda`, full node surface.
    pub fn regularized(&self, payoff: &Payoff, lambda: f64) -> Result<NodeValues> {
        self.check_surface_size()?;
        payoff.check_dim(self.dim())?;
        check_lambda(lambda)?;
        let n = self.grid.steps();
        let dt = self.grid.dt();
        let rate = self.model.rate();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &levels[k + 1]);
            let pays = self.level_payoffs(k, payoff);
            for (v, pay) in level.iter_mut().zip(pays) {
                *v = solve_regularized_node(*v, pay, lambda, rate, dt)?;
            }
            levels[k] = level;
        }
        Ok(NodeValues { levels })
    }

    /// Root value of [`LatticeModel::regularized`] with rolling levels.
    pub fn regularized_root(&self, payoff: &Payoff, lambda: f64) -> Result<f64> {
        payoff.check_dim(self.dim())?;
        check_lambda(lambda)?;
        let n = self.grid.steps();
        let dt = self.grid.dt();
        let rate = self.model.rate();
        let mut next = self.level_payoffs(n, payoff);
        for k in (0..n).rev() {
            let mut level = self.step_expectation(k, &next);
            let pays = self.level_payoffs(k, payoff);
            for (v, pay) in level.iter_mut().zip(pays) {
                *v = solve_regularized_node(*v, pay, lambda, rate, dt)?;
            }
            next = level;
        }
        Ok(next[0])
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid("temperature must be finite and positive"));
    }
    Ok(())
}

/// Node values for every level of a tree, level 0 first.
#[derive(Debug, Clone)]
pub struct NodeValues {
    levels: Vec<Vec<f64>>,
}

impl NodeValues {
    /// Values of level `k` in node-index order.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// The time-zero value.
    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    pub(crate) fn into_levels(self) -> Vec<Vec<f64>> {
        self.levels
    }
}

/// Stopping intensity of the soft-stopping policy at gap
/// `x = (exercise_value - value) / lambda`: `(e^x - 1) / x`, extended by
/// continuity to `1` at `x = 0`. The exponent is capped so deep-exercise
/// states return a large but finite rate.
pub fn intensity(exercise_value: f64, value: f64, lambda: f64) -> f64 {
    let x = ((exercise_value - value) / lambda).min(700.0);
    if x.abs() < 1e-5 {
        // series for the removable singularity
        1.0 + 0.5 * x + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Solves the implicit one-step node equation
/// `v = cont + dt * (lambda * expm1((pay - v)/lambda) - rate * v)`
/// for `v`, given the undiscounted continuation expectation `cont`.
///
/// The equation is recast in `x = (pay - v)/lambda` as
/// `G(x) = (pay - lambda x)(1 + rate dt) - cont - dt lambda expm1(x) = 0`,
/// which is strictly decreasing in `x`, then solved by geometric
/// bracketing, bisection, and a Newton polish inside the bracket.
pub fn solve_regularized_node(cont: f64, pay: f64, lambda: f64, rate: f64, dt: f64) -> Result<f64> {
    let one_r = 1.0 + rate * dt;
    let g = |x: f64| (pay - lambda * x) * one_r - cont - dt * lambda * x.exp_m1();

    // Initial guess: ignore the -lambda*x term when exercise pressure is
    // positive (log scale), otherwise linearize the exponential.
    let pressure = pay * one_r - cont;
    let mut x0 = if pressure > 0.0 {
        (pressure / (dt * lambda)).ln_1p()
    } else {
        pressure / (lambda * (one_r + dt))
    };
    if !x0.is_finite() {
        x0 = 0.0;
    }

    // Expand a bracket [lo, hi] with g(lo) >= 0 >= g(hi).
    let mut width = 0.75;
    let (mut lo, mut hi) = (x0 - width, x0 + width);
    let mut expansions = 0;
    while g(lo) < 0.0 {
        width *= 2.0;
        lo -= width;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numerical("node solve failed to bracket".into()));
        }
    }
    while g(hi) > 0.0 {
        width *= 2.0;
        hi += width;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numerical("node solve failed to bracket".into()));
        }
    }

    // Bisection to a narrow interval.
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-3 * (1.0 + lo.abs()) {
            break;
        }
    }

    // Guarded Newton from the midpoint.
    let mut x = 0.5 * (lo + hi);
    for _ in 0..60 {
        let gx = g(x);
        if gx >= 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let deriv = -lambda * one_r - dt * lambda * x.exp();
        let mut next = x - gx / deriv;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }

    Ok(pay - lambda * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn put_market() -> (MarketModel, Payoff) {
        (
            MarketModel::new(vec![100.0], 0.05, 0.0, 0.2).unwrap(),
            Payoff::Put { strike: 100.0 },
        )
    }

    fn max_call_market(s0: f64) -> (MarketModel, Payoff) {
        (
            MarketModel::new(vec![s0, s0], 0.05, 0.1, 0.2).unwrap(),
            Payoff::MaxCall { strike: 100.0 },
        )
    }

    #[test]
    fn tree_parameters() {
        let (model, _) = put_market();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        // recombination: one up then one down returns to the start
        assert_relative_eq!(lat.up() * (1.0 / lat.up()), 1.0, epsilon = 1e-15);
        assert!(lat.prob_up() > 0.0 && lat.prob_up() < 1.0);
        assert_eq!(lat.node_count(3), 4);

        let (model2, _) = max_call_market(100.0);
        let lat2 = LatticeModel::new(&model2, &grid).unwrap();
        assert_eq!(lat2.node_count(3), 16);
    }

    #[test]
    fn rejects_bad_configurations() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let model3 = MarketModel::new(vec![100.0; 3], 0.05, 0.0, 0.2).unwrap();
        assert!(LatticeModel::new(&model3, &grid).is_err());

        // drift overwhelms a tiny volatility: up-probability leaves (0,1)
        let drifty = MarketModel::new(vec![100.0], 0.2, 0.0, 0.01).unwrap();
        let coarse = TimeGrid::new(1.0, 2).unwrap();
        assert!(LatticeModel::new(&drifty, &coarse).is_err());

        // zero volatility needs rate == dividend
        let flat = MarketModel::new(vec![100.0], 0.05, 0.0, 0.0).unwrap();
        assert!(LatticeModel::new(&flat, &grid).is_err());
        let ok = MarketModel::new(vec![100.0], 0.03, 0.03, 0.0).unwrap();
        assert!(LatticeModel::new(&ok, &grid).is_ok());
    }

    #[test]
    fn surface_size_caps() {
        let (model, payoff) = put_market();
        let grid = TimeGrid::new(1.0, 6_000).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        assert!(lat.american(&payoff).is_err());
        // the rolling-root variant still works
        assert!(lat.american_root(&payoff).is_ok());
    }

    #[test]
    fn american_put_reference_value() {
        // K = 100, s0 = 100, r = 0.05, sigma = 0.2, T = 1, 200 steps:
        // 6.086382749916101 (frozen from an independent implementation).
        let (model, payoff) = put_market();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        let root = lat.american_root(&payoff).unwrap();
        assert_relative_eq!(root, 6.086_382_749_916_101, max_relative = 1e-10);
        // surface and rolling variants agree
        let surface = lat.american(&payoff).unwrap();
        assert_eq!(surface.root(), root);
        assert_eq!(surface.num_levels(), 201);
    }

    #[test]
    fn european_put_matches_closed_form() {
        // tree value frozen at 5.563533709930611; continuous-time value
        // 5.573526022256971 — the gap is the O(1/N) discretization error.
        let (model, payoff) = put_market();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        let root = lat.european_root(&payoff).unwrap();
        assert_relative_eq!(root, 5.563_533_709_930_611, max_relative = 1e-10);
        assert!((root - 5.573_526_022_256_971).abs() < 0.011);
        assert_eq!(lat.european(&payoff).unwrap().root(), root);
    }

    #[test]
    fn american_dominates_european_and_payoff() {
        let (model, payoff) = put_market();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        let amer = lat.american(&payoff).unwrap();
        let euro = lat.european(&payoff).unwrap();
        for k in 0..=100 {
            for (a, e) in amer.level(k).iter().zip(euro.level(k)) {
                assert!(a + 1e-12 >= *e);
            }
        }
    }

    #[test]
    fn node_solve_analytic_cases() {
        // cont = 1, pay = 0, lambda = 1, rate = 0, dt = 1 reduces the node
        // equation to v = e^{-v}, whose solution is the omega constant.
        let v = solve_regularized_node(1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(v, 0.567_143_290_409_783_8, epsilon = 1e-14);

        // frozen from an independent root-finder
        let v = solve_regularized_node(0.0, 1.0, 0.1, 0.0, 1.0).unwrap();
        assert_relative_eq!(v, 0.782_267_489_938_597_1, epsilon = 1e-13);

        // when cont = pay * (1 + r dt) the root sits exactly at v = pay
        let v = solve_regularized_node(2.0 * (1.0 + 0.05 * 0.5), 2.0, 0.01, 0.05, 0.5).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn node_solve_is_robust_at_tiny_temperatures() {
        // Strong exercise pressure with lambda = 1e-6 must still solve:
        // the value cannot sit below pay by more than a whisker, and the
        // defining equation must hold.
        let (cont, pay, lambda, rate, dt) = (0.5, 10.0, 1e-6, 0.05, 0.01);
        let v = solve_regularized_node(cont, pay, lambda, rate, dt).unwrap();
        // Recovering x from the returned v loses eps(pay)/lambda of
        // precision, so measure the residual at that quantization scale.
        let x = (pay - v) / lambda;
        let residual = (pay - lambda * x) * (1.0 + rate * dt) - cont - dt * lambda * x.exp_m1();
        let slope = lambda + dt * lambda * x.exp();
        let quantum = slope * f64::EPSILON * pay / lambda;
        assert!(
            residual.abs() < 4.0 * quantum,
            "residual {residual} vs {quantum}"
        );
        assert!(v <= pay && v > pay - 0.1, "v = {v}");
    }

    #[test]
    fn regularized_put_ladder() {
        // d = 1 put, N = 200 — values frozen from an independent
        // implementation; increasing towards the American value as the
        // temperature drops.
        let (model, payoff) = put_market();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        let cases = [
            (0.1, 5.894_192_764_097_607),
            (0.05, 5.971_963_380_483_652),
            (0.02, 6.030_494_507_850_379_5),
            (0.01, 6.054_537_808_099_302),
            (0.005, 6.068_578_632_656_036_5),
            (0.001, 6.082_046_196_085_336_5),
        ];
        let mut previous = 0.0;
        for (lambda, expected) in cases {
            let root = lat.regularized_root(&payoff, lambda).unwrap();
            assert_relative_eq!(root, expected, max_relative = 1e-9);
            assert!(root > previous);
            previous = root;
        }
        // all below the American value
        assert!(previous < 6.086_382_749_916_101);
        // surface agrees with the rolling root
        let surf = lat.regularized(&payoff, 0.01).unwrap();
        assert_relative_eq!(surf.root(), 6.054_537_808_099_302, max_relative = 1e-9);
    }

    #[test]
    fn zero_volatility_degenerate_tree() {
        let model = MarketModel::new(vec![90.0], 0.03, 0.03, 0.0).unwrap();
        let payoff = Payoff::Put { strike: 100.0 };
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        // immediate exercise is optimal on a frozen path
        assert_relative_eq!(lat.american_root(&payoff).unwrap(), 10.0, epsilon = 1e-12);
        // european waits and discounts: 10 e^{-0.03}
        assert_relative_eq!(
            lat.european_root(&payoff).unwrap(),
            9.704_455_335_485_082,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_asset_tree_matches_closed_form_european() {
        // European max-call against the closed-form value
        // 11.195681033054463 (s0 = 100, K = 100, r = 0.05, delta = 0.1,
        // sigma = 0.2, T = 3); tree frozen at 11.179693573456882 for
        // N = 300.
        let (model, payoff) = max_call_market(100.0);
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let lat = LatticeModel::new(&model, &grid).unwrap();
        let root = lat.european_root(&payoff).unwrap();
        assert_relative_eq!(root, 11.179_693_573_456_882, max_relative = 1e-9);
        assert!((root - 11.195_681_033_054_463).abs() < 0.02);
    }

    #[test]
    fn two_asset_american_benchmark_values() {
        // frozen product-tree values at N = 100 for the max-call table
        let cases = [
            (90.0, 8.296_193_955_843_814),
            (100.0, 14.210_613_592_008_274),
            (110.0, 21.798_589_640_595_296),
        ];
        let grid = TimeGrid::new(3.0, 100).unwrap();
        for (s0, expected) in cases {
            let (model, payoff) = max_call_market(s0);
            let lat = LatticeModel::new(&model, &grid).unwrap();
            let root = lat.american_root(&payoff).unwrap();
            assert_relative_eq!(root, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn intensity_values() {
        // (e^x - 1)/x at x = 1 and x = -10, frozen independently
        assert_relative_eq!(
            intensity(1.0, 0.0, 1.0),
            1.718_281_828_459_045_3,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            intensity(-10.0, 0.0, 1.0),
            0.099_995_460_007_023_75,
            epsilon = 1e-15
        );
        // removable singularity
        assert_eq!(intensity(5.0, 5.0, 0.1), 1.0);
        // series region is continuous with the direct formula
        let a = intensity(1e-5 - 1e-12, 0.0, 1.0);
        let b = intensity(1e-5 + 1e-12, 0.0, 1.0);
        assert!((a - b).abs() < 1e-9);
        // increasing in the exercise gap, huge but finite when deep in
        let small = intensity(0.0, 1.0, 0.1);
        let big = intensity(1.0, 0.0, 0.1);
        assert!(small < 1.0 && big > 1.0);
        assert!(intensity(1e9, 0.0, 1e-9).is_finite());
    }
}
