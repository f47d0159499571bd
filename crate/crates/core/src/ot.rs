//! Entropic optimal transport between empirical measures.
//!
//! [`sinkhorn`] solves `min <P, C> + eps * KL(P | a b^T)` over couplings of the
//! marginals `a`, `b` with log-domain scaling iterations. Small `eps` with
//! costs in `[0, 2]` underflows the multiplicative form, so only the
//! log-domain form is provided.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to feature norms in the cosine cost.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("cost matrix must be non-empty".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "cost matrix entries",
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged cost rows".into()));
        }
        Self::new(n, m, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i)).expect("same size")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, self.rows, self.cols, &self.entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Marginals {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        for (name, v) in [("a", &a), ("b", &b)] {
            if v.is_empty() {
                return Err(Error::InvalidArgument(format!("marginal {name} is empty")));
            }
            if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("marginal {name} has a negative entry")));
            }
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "marginal {name} sums to {total}, not 1"
                )));
            }
        }
        Ok(Self { a, b })
    }

    /// Empirical measures put equal mass on every sample.
    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            a: vec![1.0 / n as f64; n],
            b: vec![1.0 / m as f64; m],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    coupling: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    /// `||P 1 - a||_1 + ||P^T 1 - b||_1` at exit.
    pub marginal_violation: f64,
}

impl TransportPlan {
    /// A plan built directly from a coupling matrix, for tests and oracles.
    pub fn from_coupling(rows: usize, cols: usize, coupling: Vec<f64>) -> Result<Self> {
        if coupling.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "coupling",
                expected: rows * cols,
                actual: coupling.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            coupling,
            converged: true,
            iterations_used: 0,
            marginal_violation: 0.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coupling[i * self.cols..(i + 1) * self.cols]
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, p) in sums.iter_mut().zip(self.row(i)) {
                *s += p;
            }
        }
        sums
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, self.rows, self.cols, &self.coupling)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSettings {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 5000,
            tolerance: 1e-6,
        }
    }
}

impl SinkhornSettings {
    /// Sharper regularization used by the evaluation metric.
    pub fn evaluation() -> Self {
        Self {
            epsilon: 0.005,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Rows/columns whose feature vector had (near) zero norm.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DegenerateFeatures {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl DegenerateFeatures {
    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }
}

/// `C[i][j] = 1 - <x_i, y_j> / (|x_i| |y_j|)`, with norms floored at [`NORM_FLOOR`].
pub fn cosine_cost_matrix(
    left: &[Vec<f64>],
    right: &[Vec<f64>],
) -> Result<(CostMatrix, DegenerateFeatures)> {
    let width = left
        .first()
        .or(right.first())
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("no feature vectors".into()))?;
    for v in left.iter().chain(right) {
        if v.len() != width {
            return Err(Error::DimensionMismatch {
                context: "cosine feature width",
                expected: width,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("cosine features"));
        }
    }
    let mut degenerate = DegenerateFeatures::default();
    let norms = |vs: &[Vec<f64>], flagged: &mut Vec<usize>| -> Vec<f64> {
        vs.iter()
            .enumerate()
            .map(|(k, v)| {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n < NORM_FLOOR {
                    flagged.push(k);
                }
                n.max(NORM_FLOOR)
            })
            .collect()
    };
    let left_norms = norms(left, &mut degenerate.left);
    let right_norms = norms(right, &mut degenerate.right);
    let cost = CostMatrix::from_fn(left.len(), right.len(), |i, j| {
        let dot: f64 = left[i].iter().zip(&right[j]).map(|(x, y)| x * y).sum();
        (1.0 - dot / (left_norms[i] * right_norms[j])).clamp(0.0, 2.0)
    })?;
    Ok((cost, degenerate))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn sinkhorn(
    cost: &CostMatrix,
    marginals: &Marginals,
    settings: &SinkhornSettings,
) -> Result<TransportPlan> {
    settings.validate()?;
    let (n, m) = (cost.rows(), cost.cols());
    if marginals.a.len() != n || marginals.b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "sinkhorn marginals",
            expected: n * m,
            actual: marginals.a.len() * marginals.b.len(),
        });
    }
    if cost.entries().iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }

    let eps = settings.epsilon;
    let log_a: Vec<f64> = marginals.a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = marginals.b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;
    let mut violation = f64::INFINITY;

    let potentials_ok = |pot: &[f64], log_mass: &[f64]| {
        pot.iter()
            .zip(log_mass)
            .all(|(p, lm)| if lm.is_finite() { p.is_finite() } else { !p.is_nan() })
    };

    while iterations < settings.max_iterations {
        iterations += 1;
        for i in 0..n {
            let row = cost.row(i);
            let lse = log_sum_exp((0..m).map(|j| (g[j] - row[j]) / eps));
            f[i] = eps * (log_a[i] - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost.get(i, j)) / eps));
            g[j] = eps * (log_b[j] - lse);
        }
        if !potentials_ok(&f, &log_a) || !potentials_ok(&g, &log_b) {
            return Err(Error::UnderRegularized { epsilon: eps });
        }
        // Columns are exact right after the g update; only rows can violate.
        violation = (0..n)
            .map(|i| {
                let row = cost.row(i);
                let mass: f64 = (0..m).map(|j| ((f[i] + g[j] - row[j]) / eps).exp()).sum();
                (mass - marginals.a[i]).abs()
            })
            .sum();
        if !violation.is_finite() {
            return Err(Error::UnderRegularized { epsilon: eps });
        }
        if violation <= settings.tolerance {
            converged = true;
            break;
        }
    }

    let coupling: Vec<f64> = (0..n)
        .flat_map(|i| {
            let (f, g) = (&f, &g);
            (0..m).map(move |j| ((f[i] + g[j] - cost.get(i, j)) / eps).exp())
        })
        .collect();
    let mut plan = TransportPlan {
        rows: n,
        cols: m,
        coupling,
        converged,
        iterations_used: iterations,
        marginal_violation: 0.0,
    };
    let row_err: f64 = plan.row_sums().iter().zip(&marginals.a).map(|(s, a)| (s - a).abs()).sum();
    let col_err: f64 = plan.col_sums().iter().zip(&marginals.b).map(|(s, b)| (s - b).abs()).sum();
    plan.marginal_violation = row_err + col_err;
    debug_assert!(!converged || violation <= settings.tolerance);
    Ok(plan)
}

/// `sum_ij C_ij P_ij`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.rows() != cost.rows() || plan.cols() != cost.cols() {
        return Err(Error::DimensionMismatch {
            context: "transport cost shape",
            expected: cost.rows() * cost.cols(),
            actual: plan.rows() * plan.cols(),
        });
    }
    Ok(plan
        .coupling()
        .iter()
        .zip(cost.entries())
        .map(|(p, c)| p * c)
        .sum())
}

/// Unregularized OT value for uniform square problems, by enumerating permutations.
///
/// With uniform marginals on an `n x n` problem the optimum sits at a vertex of
/// the Birkhoff polytope, so the minimum mean matched cost over all `n!`
/// permutations is exact. Limited to `n <= 8`.
pub fn exact_ot_uniform_square(cost: &CostMatrix) -> Result<f64> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::InvalidArgument(format!(
            "exact OT needs a square problem, got {}x{}",
            n,
            cost.cols()
        )));
    }
    if n > 8 {
        return Err(Error::InvalidArgument(format!("exact OT limited to n <= 8, got {n}")));
    }
    // Heap's algorithm.
    let mut perm: Vec<usize> = (0..n).collect();
    let matched = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>();
    let mut best = matched(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(matched(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}

fn write_matrix_csv<W: Write>(mut out: W, rows: usize, cols: usize, entries: &[f64]) -> Result<()> {
    writeln!(out, "rows={rows},cols={cols}")?;
    for i in 0..rows {
        let line: Vec<String> = entries[i * cols..(i + 1) * cols]
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
