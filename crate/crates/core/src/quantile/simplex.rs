//! Revised primal simplex specialised to the L1-penalised quantile regression LP.
//!
//! The LP is written in standard form with `n` equality rows
//!
//! ```text
//! min  sum_t (tau/n) u+_t + ((1-tau)/n) u-_t + lambda * sum_j (b+_j + b-_j)
//! s.t. a+ - a- + X (b+ - b-) + u+ - u- = y,   all variables >= 0
//! ```
//!
//! Variables are laid out in sign pairs: `2q` is the positive part and
//! `2q + 1` the negative part of pair `q`. Pair 0 is the intercept, pairs
//! `1..=p` the coefficients and pairs `p+1..=p+n` the residuals. The residual
//! slacks give a feasible starting basis, so no phase one is needed, and a
//! change of `lambda` only touches costs, so any previous basis stays primal
//! feasible (warm start along a penalty path).
//!
//! After the primary objective is optimal two lexicographic stages run on the
//! optimal face: minimise `||beta||_1`, then minimise the intercept. This pins
//! down a unique, reproducible vertex when the optimum is not unique.

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1, ArrayView2};


use super::QuantileError;

const REFACTOR_EVERY: usize = 100;
const PIVOT_TOL: f64 = 1e-11;

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Stage {
    Loss,
    L1Norm,
    Intercept,
}

pub(crate) struct QuantileLp<'a> {
    y: ArrayView1<'a, f64>,
    /// design columns stored contiguously, column j at `j * n`
    xcols: Vec<f64>,
    tau: f64,
    n: usize,
    p: usize,
    /// basis[row] = variable index
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// dense row-major inverse of the basis matrix
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    pub(crate) pivots: usize,
}

impl<'a> QuantileLp<'a> {
    pub(crate) fn new(y: ArrayView1<'a, f64>, x: ArrayView2<'a, f64>, tau: f64) -> Self {
        let n = y.len();
        let p = x.ncols();
        let nv = 2 * (1 + p + n);
        let mut basis = Vec::with_capacity(n);
        let mut is_basic = vec![false; nv];
        let mut binv = vec![0.0; n * n];
        let mut xb = vec![0.0; n];
        for t in 0..n {
            let plus = 2 * (1 + p + t);
            let var = if y[t] >= 0.0 { plus } else { plus + 1 };
            basis.push(var);
            is_basic[var] = true;
            binv[t * n + t] = if y[t] >= 0.0 { 1.0 } else { -1.0 };
            xb[t] = y[t].abs();
        }
        let mut xcols = Vec::with_capacity(n * p);
        for col in x.columns() {
            xcols.extend(col.iter());
        }
        QuantileLp {
            y,
            xcols,
            tau,
            n,
            p,
            basis,
            is_basic,
            binv,
            xb,
            since_refactor: 0,
            pivots: 0,
        }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.xcols[j * self.n..(j + 1) * self.n]
    }

    fn num_vars(&self) -> usize {
        2 * (1 + self.p + self.n)
    }

    fn cost(&self, stage: Stage, var: usize, lambda: f64) -> f64 {
        let pair = var / 2;
        let negative = var % 2 == 1;
        match stage {
            Stage::Loss => {
                if pair == 0 {
                    0.0
                } else if pair <= self.p {
                    lambda
                } else if negative {
                    (1.0 - self.tau) / self.n as f64
                } else {
                    self.tau / self.n as f64
                }
            }
            Stage::L1Norm => {
                if pair >= 1 && pair <= self.p {
                    1.0
                } else {
                    0.0
                }
            }
            Stage::Intercept => match (pair, negative) {
                (0, false) => 1.0,
                (0, true) => -1.0,
                _ => 0.0,
            },
        }
    }

    /// `B^{-1} a` for the positive member of a pair (negate for the other sign).
    fn ftran_pair(&self, pair: usize, out: &mut [f64]) {
        let n = self.n;
        if pair == 0 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.binv[i * n..(i + 1) * n].iter().sum();
            }
        } else if pair <= self.p {
            let col = self.column(pair - 1);
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&self.binv[i * n..(i + 1) * n], col);
            }
        } else {
            let t = pair - 1 - self.p;
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.binv[i * n + t];
            }
        }
    }

    /// `pi^T a` for the positive member of every pair, given simplex multipliers.
    fn price_pairs(&self, pi: &[f64], out: &mut [f64]) {
        out[0] = pi.iter().sum();
        for j in 0..self.p {
            out[1 + j] = dot(pi, self.column(j));
        }
        out[1 + self.p..].copy_from_slice(pi);
    }

    fn multipliers(&self, costs: &[f64], pi: &mut [f64]) {
        let n = self.n;
        pi.iter_mut().for_each(|v| *v = 0.0);
        for (r, &var) in self.basis.iter().enumerate() {
            let c = costs[var];
            if c != 0.0 {
                let row = &self.binv[r * n..(r + 1) * n];
                pi.iter_mut().zip(row).for_each(|(p, b)| *p += c * b);
            }
        }
    }

    fn refactor(&mut self) -> Result<(), QuantileError> {
        let n = self.n;
        let mut b = DMatrix::<f64>::zeros(n, n);
        let mut col = vec![0.0; n];
        for (r, &var) in self.basis.iter().enumerate() {
            let pair = var / 2;
            let sign = if var % 2 == 0 { 1.0 } else { -1.0 };
            col.iter_mut().for_each(|v| *v = 0.0);
            if pair == 0 {
                col.iter_mut().for_each(|v| *v = sign);
            } else if pair <= self.p {
                for (v, xv) in col.iter_mut().zip(self.column(pair - 1)) {
                    *v = sign * xv;
                }
            } else {
                col[pair - 1 - self.p] = sign;
            }
            for t in 0..n {
                b[(t, r)] = col[t];
            }
        }
        let inv = b.try_inverse().ok_or_else(|| {
            QuantileError::NumericalFailure("basis matrix became singular".into())
        })?;
        for i in 0..n {
            for j in 0..n {
                self.binv[i * n + j] = inv[(i, j)];
            }
        }
        for i in 0..n {
            let row = &self.binv[i * n..(i + 1) * n];
            self.xb[i] = row.iter().zip(self.y.iter()).map(|(a, b)| a * b).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, row: usize, entering: usize, w: &[f64], step: f64) {
        let n = self.n;
        let pivot = w[row];
        let (before, rest) = self.binv.split_at_mut(row * n);
        let (prow, after) = rest.split_at_mut(n);
        prow.iter_mut().for_each(|v| *v /= pivot);
        for (i, chunk) in before.chunks_mut(n).enumerate() {
            let f = w[i];
            if f != 0.0 {
                chunk.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        for (k, chunk) in after.chunks_mut(n).enumerate() {
            let f = w[row + 1 + k];
            if f != 0.0 {
                chunk.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        for (i, v) in self.xb.iter_mut().enumerate() {
            if i == row {
                *v = step;
            } else {
                *v = (*v - w[i] * step).max(0.0);
            }
        }
        self.is_basic[self.basis[row]] = false;
        self.is_basic[entering] = true;
        self.basis[row] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    /// Basic, barred, or the mirror of a basic variable. Entering the mirror
    /// only moves along `-e_r`, never improves any stage objective, and would
    /// make the basis singular.
    #[inline]
    fn skip(&self, var: usize, barred: &[bool]) -> bool {
        self.is_basic[var] || self.is_basic[var ^ 1] || barred[var]
    }

    /// Optimise one stage. `barred` marks variables fixed at zero by earlier
    /// stages. Returns `None` when the stage objective is unbounded, otherwise
    /// the number of free nonbasic variables left with a zero reduced cost.
    fn run_stage(
        &mut self,
        stage: Stage,
        lambda: f64,
        barred: &mut [bool],
        budget: &mut usize,
    ) -> Result<Option<usize>, QuantileError> {
        let n = self.n;
        let npairs = 1 + self.p + self.n;
        let nv = self.num_vars();
        let costs: Vec<f64> = (0..nv).map(|v| self.cost(stage, v, lambda)).collect();
        let cost_scale = costs
            .iter()
            .map(|c| c.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let dtol = 1e-11 * cost_scale;
        let mut pi = vec![0.0; n];
        let mut g = vec![0.0; npairs];
        let mut w = vec![0.0; n];
        let mut bland = false;
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            self.multipliers(&costs, &mut pi);
            self.price_pairs(&pi, &mut g);

            let mut entering = None;
            let mut best = -dtol;
            for var in 0..nv {
                if self.skip(var, barred) {
                    continue;
                }
                let gv = if var % 2 == 0 { g[var / 2] } else { -g[var / 2] };
                let d = costs[var] - gv;
                if d < best {
                    entering = Some(var);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                // optimal for this stage: freeze every strictly positive reduced cost
                let mut ties = 0;
                for var in 0..nv {
                    if self.is_basic[var] || barred[var] {
                        continue;
                    }
                    let gv = if var % 2 == 0 { g[var / 2] } else { -g[var / 2] };
                    if costs[var] - gv > dtol {
                        barred[var] = true;
                    } else if !self.is_basic[var ^ 1] {
                        ties += 1;
                    }
                }
                return Ok(Some(ties));
            };

            if *budget == 0 {
                return Err(QuantileError::NumericalFailure(
                    "simplex iteration cap reached".into(),
                ));
            }
            *budget -= 1;

            self.ftran_pair(q / 2, &mut w);
            if q % 2 == 1 {
                w.iter_mut().for_each(|v| *v = -*v);
            }
            let mut leave: Option<usize> = None;
            let mut min_ratio = f64::INFINITY;
            for i in 0..n {
                if w[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / w[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            let tie = (ratio - min_ratio).abs() <= 1e-12 * (1.0 + min_ratio);
                            if tie {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    w[i] > w[l]
                                }
                            } else {
                                ratio < min_ratio
                            }
                        }
                    };
                    if better {
                        leave = Some(i);
                        min_ratio = ratio;
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(None);
            };
            let step = self.xb[r].max(0.0) / w[r];
            bland = step <= 1e-14;
            self.pivot(r, q, &w, step);
        }
    }

    /// Solve at `lambda`, warm-starting from the current basis.
    pub(crate) fn solve_at(&mut self, lambda: f64) -> Result<(), QuantileError> {
        let mut budget = 50 * (self.n + self.p);
        let mut barred = vec![false; self.num_vars()];
        let ties = self
            .run_stage(Stage::Loss, lambda, &mut barred, &mut budget)?
            .ok_or_else(|| {
                QuantileError::NumericalFailure("unbounded direction in quantile objective".into())
            })?;
        if ties == 0 {
            // dual nondegenerate: the optimal vertex is unique
            return Ok(());
        }
        let optimum = self.objective(lambda);
        // Stages on the optimal face; an unbounded ray here only means the
        // tie-break cannot be resolved, so the current vertex is kept.
        if let Some(ties) = self.run_stage(Stage::L1Norm, lambda, &mut barred, &mut budget)? {
            if ties > 0 {
                self.run_stage(Stage::Intercept, lambda, &mut barred, &mut budget)?;
            }
        }
        if self.objective(lambda) > optimum + 1e-9 * (1.0 + optimum.abs()) {
            return Err(QuantileError::NumericalFailure("tie-break left the optimal face".into()));
        }
        Ok(())
    }

    fn objective(&self, lambda: f64) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&var, &v)| self.cost(Stage::Loss, var, lambda) * v)
            .sum()
    }

    /// Current intercept and coefficients.
    pub(crate) fn solution(&self) -> (f64, Array1<f64>) {
        let mut vals = vec![0.0; self.num_vars()];
        for (r, &var) in self.basis.iter().enumerate() {
            vals[var] = self.xb[r];
        }
        let alpha = vals[0] - vals[1];
        let beta = Array1::from_iter((1..=self.p).map(|q| vals[2 * q] - vals[2 * q + 1]));
        (alpha, beta)
    }
}
