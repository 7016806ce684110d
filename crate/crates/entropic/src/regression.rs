//! Least-squares conditional expectation operators on a path batch.
//!
//! The solver needs, at every grid step `k`, the projection of a vector
//! of per-path values onto a fixed function basis of the step-`k` state —
//! the standard regression estimate of `E[ y | S_{t_k} ]`. A
//! [`RegressionPlan`] precomputes everything that does not depend on the
//! regression target: for each step it evaluates the feature rows (prices
//! are strike-scaled first) and computes a rank-revealing column-pivoted
//! QR factorization, keeping the orthonormal column basis `Q`. Projecting
//! a target is then two cheap passes, `z = Q^T y` followed by `Q z`.
//!
//! Working in the orthonormal basis instead of solving normal equations
//! matters: it avoids squaring the condition number of the design matrix,
//! so projections are idempotent, linear, and mean-preserving to within a
//! few ulps, and rank-deficient steps (for example zero volatility, where
//! every path is identical) automatically project onto the column span
//! that is actually present — the per-step mean in the degenerate case.
//!
//! All per-path reductions run over fixed-size chunks combined in chunk
//! order, so results are bit-identical regardless of how many rayon
//! threads are active.

use nalgebra::linalg::PermutationSequence;
use nalgebra::{DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::BasisSpec;
use crate::paths::PathBatch;

/// Paths per reduction chunk. Fixed so that parallel reductions are
/// deterministic; see the module docs.
const CHUNK: usize = 4096;

/// Columns whose pivoted `R` diagonal falls below this fraction of the
/// leading diagonal entry are treated as numerically dependent.
const RANK_TOL: f64 = 1e-12;

/// A concrete, evaluable feature basis.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    dim: usize,
    inv_strike: f64,
    len: usize,
}

#[derive(Debug, Clone)]
enum BasisKind {
    AndersenBroadie13,
    /// Monomial exponents, one multi-index per feature, plus optional
    /// payoff powers appended at the end.
    Polynomial {
        exponents: Vec<Vec<u32>>,
        payoff_features: bool,
    },
}

impl Basis {
    /// Instantiates a basis spec for a market dimension and strike.
    pub fn from_spec(spec: &BasisSpec, dim: usize, strike: f64) -> Result<Self> {
        if !strike.is_finite() || strike <= 0.0 {
            return Err(Error::invalid("strike must be finite and positive"));
        }
        let (kind, len) = match spec {
            BasisSpec::AndersenBroadie13 => {
                if dim != 2 {
                    return Err(Error::invalid(
                        "the 13-term basis is specific to two-asset markets",
                    ));
                }
                (BasisKind::AndersenBroadie13, 13)
            }
            BasisSpec::Polynomial {
                degree,
                payoff_features,
            } => {
                let exponents = monomial_exponents(dim, *degree);
                let len = exponents.len() + if *payoff_features { 3 } else { 0 };
                (
                    BasisKind::Polynomial {
                        exponents,
                        payoff_features: *payoff_features,
                    },
                    len,
                )
            }
        };
        Ok(Self {
            kind,
            dim,
            inv_strike: 1.0 / strike,
            len,
        })
    }

    /// Number of features.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Evaluates the features at one state. `prices` are raw asset
    /// prices (scaling by the strike happens internally) and
    /// `exercise_value` is the unscaled payoff at that state.
    pub fn eval_into(&self, prices: &[f64], exercise_value: f64, out: &mut [f64]) {
        debug_assert_eq!(prices.len(), self.dim);
        debug_assert_eq!(out.len(), self.len);
        match &self.kind {
            BasisKind::AndersenBroadie13 => {
                let s1 = prices[0] * self.inv_strike;
                let s2 = prices[1] * self.inv_strike;
                let (mx, mn) = if s1 >= s2 { (s1, s2) } else { (s2, s1) };
                let pay = exercise_value * self.inv_strike;
                out[0] = 1.0;
                out[1] = s1;
                out[2] = s2;
                out[3] = s1 * s1;
                out[4] = s2 * s2;
                out[5] = s1 * s2;
                out[6] = mx;
                out[7] = mx * mx;
                out[8] = mx * mx * mx;
                out[9] = pay;
                out[10] = pay * pay;
                out[11] = pay * pay * pay;
                out[12] = mn;
            }
            BasisKind::Polynomial {
                exponents,
                payoff_features,
            } => {
                for (slot, alpha) in out.iter_mut().zip(exponents) {
                    let mut value = 1.0;
                    for (a, &p) in alpha.iter().zip(prices) {
                        let s = p * self.inv_strike;
                        value *= s.powi(*a as i32);
                    }
                    *slot = value;
                }
                if *payoff_features {
                    let pay = exercise_value * self.inv_strike;
                    let base = exponents.len();
                    out[base] = pay;
                    out[base + 1] = pay * pay;
                    out[base + 2] = pay * pay * pay;
                }
            }
        }
    }

    /// Evaluates `features(state) . beta` using caller scratch of length
    /// [`Basis::len`]. This is how a fitted surface, represented by
    /// per-step coefficients from [`RegressionPlan::coefficients`], is
    /// read off at states the plan has never seen.
    pub fn apply(
        &self,
        prices: &[f64],
        exercise_value: f64,
        beta: &[f64],
        scratch: &mut [f64],
    ) -> f64 {
        self.eval_into(prices, exercise_value, scratch);
        dot(scratch, beta)
    }
}

/// All multi-indices with total degree at most `degree`, ordered by total
/// degree and then lexicographically — a deterministic column order.
fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut result = Vec::new();
    let mut current = vec![0u32; dim];
    for total in 0..=degree {
        emit_with_total(dim, total as u32, 0, &mut current, &mut result);
    }
    result
}

fn emit_with_total(
    dim: usize,
    remaining: u32,
    pos: usize,
    current: &mut Vec<u32>,
    result: &mut Vec<Vec<u32>>,
) {
    if pos == dim - 1 {
        current[pos] = remaining;
        result.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        emit_with_total(dim, remaining - e, pos + 1, current, result);
    }
}

/// Per-step factorization: the triangular factor and pivoting needed to
/// translate orthonormal-basis solutions back to raw-feature
/// coefficients. The orthonormal columns themselves live in the plan's
/// flat buffer.
struct StepFactor {
    r_factor: DMatrix<f64>,
    perm: PermutationSequence<Dyn>,
    rank: usize,
}

/// Precomputed regression operators for every step of a path batch.
///
/// Built once per batch with [`RegressionPlan::build`]; afterwards
/// [`RegressionPlan::cond_exp`] projects arbitrary targets at any
/// non-terminal step.
pub struct RegressionPlan<'a> {
    batch: &'a PathBatch,
    basis: Basis,
    /// `[step][column][path]`, flattened: the orthonormal column basis of
    /// each step's design matrix, zero-padded past the numerical rank.
    /// Column-major within a step so that both projection passes stream
    /// over contiguous memory.
    q_cols: Vec<f64>,
    factors: Vec<StepFactor>,
}

impl<'a> RegressionPlan<'a> {
    /// Evaluates and factorizes every non-terminal step's design matrix.
    pub fn build(batch: &'a PathBatch, spec: &BasisSpec) -> Result<Self> {
        let basis = Basis::from_spec(spec, batch.dim(), batch.payoff().strike())?;
        let p = basis.len();
        let m = batch.num_paths();
        let n_steps = batch.grid().steps();
        if m < p {
            return Err(Error::Numerical(format!(
                "regression is underdetermined: {m} paths for {p} features"
            )));
        }

        let mut q_cols = vec![0.0_f64; n_steps * m * p];
        let mut factors = Vec::with_capacity(n_steps);
        let mut design = DMatrix::<f64>::zeros(m, p);
        let mut row = vec![0.0_f64; p];
        for k in 0..n_steps {
            let step_prices = batch.step_prices(k);
            let step_payoffs = batch.step_payoffs(k);
            for i in 0..m {
                basis.eval_into(
                    &step_prices[i * batch.dim()..(i + 1) * batch.dim()],
                    step_payoffs[i],
                    &mut row,
                );
                for (j, &value) in row.iter().enumerate() {
                    design[(i, j)] = value;
                }
            }

            let qr = design.clone().col_piv_qr();
            let q = qr.q();
            let r_factor = qr.r();
            let lead = r_factor[(0, 0)].abs();
            if !lead.is_finite() || lead == 0.0 {
                return Err(Error::Numerical(format!(
                    "design matrix vanished at step {k}"
                )));
            }
            let rank = (0..p.min(r_factor.nrows()))
                .take_while(|&j| r_factor[(j, j)].abs() > RANK_TOL * lead)
                .count()
                .max(1);

            // nalgebra matrices are column-major, so each kept column is
            // one contiguous copy; dropped columns stay zero.
            let step_block = &mut q_cols[k * m * p..(k + 1) * m * p];
            for j in 0..rank {
                step_block[j * m..(j + 1) * m].copy_from_slice(&q.as_slice()[j * m..(j + 1) * m]);
            }

            factors.push(StepFactor {
                r_factor,
                perm: qr.p().clone(),
                rank,
            });
        }

        Ok(Self {
            batch,
            basis,
            q_cols,
            factors,
        })
    }

    pub fn batch(&self) -> &'a PathBatch {
        self.batch
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Projects `target` (one value per path) onto the step-`k` basis and
    /// evaluates the fit on every path: the regression estimate of the
    /// conditional expectation given the step-`k` state.
    pub fn cond_exp(&self, k: usize, target: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0_f64; target.len()];
        self.cond_exp_into(k, target, &mut out)?;
        Ok(out)
    }

    /// [`RegressionPlan::cond_exp`] writing into a caller buffer.
    pub fn cond_exp_into(&self, k: usize, target: &[f64], out: &mut [f64]) -> Result<()> {
        let z = self.project(k, target)?;
        let m = self.batch.num_paths();
        let p = self.basis.len();
        debug_assert_eq!(out.len(), m);
        let cols = &self.q_cols[k * m * p..(k + 1) * m * p];
        let rank = self.factors[k].rank;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(chunk_idx, chunk)| {
                let i0 = chunk_idx * CHUNK;
                chunk.fill(0.0);
                for (j, &zj) in z.iter().enumerate().take(rank) {
                    let col = &cols[j * m + i0..j * m + i0 + chunk.len()];
                    for (slot, &q) in chunk.iter_mut().zip(col) {
                        *slot += zj * q;
                    }
                }
            });
        Ok(())
    }

    /// Raw-feature regression coefficients of `target` at step `k`, for
    /// evaluating the fitted function away from the plan's own paths via
    /// [`Basis::apply`].
    pub fn coefficients(&self, k: usize, target: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(k, target)?;
        let factor = &self.factors[k];
        let p = self.basis.len();
        let rank = factor.rank;
        let z_r = DVector::from_iterator(rank, z.iter().take(rank).copied());
        let w = factor
            .r_factor
            .view((0, 0), (rank, rank))
            .solve_upper_triangular(&z_r)
            .ok_or_else(|| Error::Numerical(format!("triangular solve failed at step {k}")))?;
        let mut beta = DVector::zeros(p);
        for j in 0..rank {
            beta[j] = w[j];
        }
        factor.perm.inv_permute_rows(&mut beta);
        Ok(beta.data.into())
    }

    /// `Q^T target` with a fused finiteness check.
    fn project(&self, k: usize, target: &[f64]) -> Result<Vec<f64>> {
        let m = self.batch.num_paths();
        let p = self.basis.len();
        if target.len() != m {
            return Err(Error::invalid(format!(
                "target has {} entries for {m} paths",
                target.len()
            )));
        }
        if k >= self.factors.len() {
            return Err(Error::invalid(format!(
                "no regression at step {k} (valid steps are 0..{})",
                self.factors.len()
            )));
        }
        let cols = &self.q_cols[k * m * p..(k + 1) * m * p];
        accumulate_qty(cols, target, m, p, self.factors[k].rank, k)
    }
}

/// Dot product with four independent accumulators. The fixed summation
/// pattern lets the compiler vectorize the reduction while keeping the
/// result identical from run to run.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Q^T y` over fixed path chunks combined in chunk order, with a fused
/// finiteness check; reports the first non-finite target entry by path
/// index. `cols` holds `p` columns of length `m`, column-major.
fn accumulate_qty(
    cols: &[f64],
    target: &[f64],
    m: usize,
    p: usize,
    rank: usize,
    step: usize,
) -> Result<Vec<f64>> {
    let partials: Vec<std::result::Result<Vec<f64>, usize>> = target
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, ys)| {
            let i0 = chunk_idx * CHUNK;
            for (local_i, y) in ys.iter().enumerate() {
                if !y.is_finite() {
                    return Err(i0 + local_i);
                }
            }
            let mut local = vec![0.0_f64; p];
            for (j, acc) in local.iter_mut().enumerate().take(rank) {
                let col = &cols[j * m + i0..j * m + i0 + ys.len()];
                *acc = dot(col, ys);
            }
            Ok(local)
        })
        .collect();

    let mut qty = vec![0.0_f64; p];
    for partial in partials {
        match partial {
            Ok(local) => {
                for (acc, l) in qty.iter_mut().zip(&local) {
                    *acc += l;
                }
            }
            Err(path) => {
                return Err(Error::Numerical(format!(
                    "non-finite regression target at step {step}, path {path}"
                )))
            }
        }
    }
    Ok(qty)
}
