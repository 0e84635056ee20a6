//! Equilibria of the Lotka-Volterra system `dx/dt = x (1 - x + B x)`.
//!
//! The feasible branch solves `(I - B) x = 1` directly. The saturated
//! branch solves the linear complementarity problem
//!
//! ```text
//! w = M x + q,  x >= 0,  w >= 0,  x^T w = 0,   M = I - B,  q = -1
//! ```
//!
//! which is uniquely solvable whenever `M + M^T` is positive definite.

use crate::csvfmt::CsvTable;
use crate::lu::LuSolver;
use crate::spectral::is_pd_cholesky;
use crate::{Error, Matrix, Result};

/// Cutoff below which an abundance counts as extinct.
pub const DEFAULT_SURVIVOR_THRESHOLD: f64 = 1e-8;
/// Reject `I - B` when its condition estimate exceeds this.
pub const MAX_CONDITION: f64 = 1e12;
pub const LCP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivorStats {
    /// Fraction of components above the survivor threshold.
    pub phi: f64,
    pub mean_x: f64,
    pub mean_x2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSolution {
    pub x: Vec<f64>,
    pub feasible: bool,
    /// `max |x - 1 - Bx|` over all components for the linear solve, and
    /// over the surviving components for the complementarity solve.
    pub lin_residual: f64,
    /// See [`lcp_residual`].
    pub lcp_residual: f64,
    pub stats: SurvivorStats,
}

pub fn survivor_stats(x: &[f64]) -> SurvivorStats {
    survivor_stats_with(x, DEFAULT_SURVIVOR_THRESHOLD)
}

/// Averages run over all components, extinct ones included.
pub fn survivor_stats_with(x: &[f64], threshold: f64) -> SurvivorStats {
    let n = x.len().max(1) as f64;
    SurvivorStats {
        phi: x.iter().filter(|&&v| v > threshold).count() as f64 / n,
        mean_x: x.iter().sum::<f64>() / n,
        mean_x2: x.iter().map(|v| v * v).sum::<f64>() / n,
    }
}

fn i_minus(b: &Matrix) -> Result<Matrix> {
    let n = b.square_dim()?;
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - b[(i, j)]
        } else {
            -b[(i, j)]
        }
    }))
}

/// `max_k |x_k - 1 - (Bx)_k|` over the components selected by `keep`.
fn linear_residual(b: &Matrix, x: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let bx = b.mul_vec(x);
    (0..x.len())
        .filter(|&k| keep(k))
        .map(|k| (x[k] - 1.0 - bx[k]).abs())
        .fold(0.0, f64::max)
}

/// Largest violation of `x >= 0`, `w >= 0`, `min(x_k, w_k) = 0` with
/// `w = M x + q`.
pub fn lcp_residual(m: &Matrix, q: &[f64], x: &[f64]) -> f64 {
    let w = m.mul_vec(x);
    x.iter()
        .zip(w.iter().zip(q))
        .map(|(&xk, (&mk, &qk))| {
            let wk = mk + qk;
            (-xk).max(-wk).max(xk.min(wk)).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Solves `x = 1 + B x`. `feasible` is the exact sign test `min x_k > 0`.
pub fn solve_feasible(b: &Matrix) -> Result<EquilibriumSolution> {
    let n = b.square_dim()?;
    let m = i_minus(b)?;
    let lu = LuSolver::from_matrix(&m)?;
    let condition = lu.condition_estimate();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let ones = vec![1.0; n];
    let mut x = lu.solve(&ones);
    // one step of iterative refinement
    let r: Vec<f64> = m.mul_vec(&x).iter().map(|v| 1.0 - v).collect();
    for (xi, di) in x.iter_mut().zip(lu.solve(&r)) {
        *xi += di;
    }
    let q = vec![-1.0; n];
    Ok(EquilibriumSolution {
        feasible: x.iter().all(|&v| v > 0.0),
        lin_residual: linear_residual(b, &x, |_| true),
        lcp_residual: lcp_residual(&m, &q, &x),
        stats: survivor_stats(&x),
        x,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcpMethod {
    /// Block principal pivoting, falling back to Lemke if it stalls.
    Auto,
    /// Complementary pivoting with lexicographic ratio test.
    Lemke,
    /// Block principal pivoting with a single-index safeguard.
    PrincipalPivoting,
    /// Projected Gauss-Seidel followed by a support polish.
    ProjectedGaussSeidel,
}

#[derive(Clone, Copy, Debug)]
pub struct LcpOptions {
    pub method: LcpMethod,
    pub tol: f64,
    /// Pivot or sweep budget; `None` picks a size-dependent default.
    pub max_iter: Option<usize>,
    pub survivor_threshold: f64,
    /// Relaxation for projected Gauss-Seidel, in `(0, 1]`.
    pub omega: f64,
}

impl Default for LcpOptions {
    fn default() -> Self {
        Self {
            method: LcpMethod::Auto,
            tol: LCP_TOL,
            max_iter: None,
            survivor_threshold: DEFAULT_SURVIVOR_THRESHOLD,
            omega: 1.0,
        }
    }
}

/// Saturated equilibrium with default options.
pub fn solve_lcp(b: &Matrix) -> Result<EquilibriumSolution> {
    solve_lcp_with(b, &LcpOptions::default())
}

/// Saturated equilibrium: the unique solution of the complementarity
/// problem when `2I - (B + B^T)` is positive definite.
pub fn solve_lcp_with(b: &Matrix, opts: &LcpOptions) -> Result<EquilibriumSolution> {
    let n = b.square_dim()?;
    if !is_pd_cholesky(b)? {
        return Err(Error::Precondition(
            "2I - (B + B^T) is not positive definite; the complementarity solution may not be unique"
                .into(),
        ));
    }
    let m = i_minus(b)?;
    let q = vec![-1.0; n];
    let raw = match opts.method {
        LcpMethod::Lemke => lemke(&m, &q, opts.max_iter.unwrap_or(50 * n + 100))?,
        LcpMethod::PrincipalPivoting => {
            principal_pivoting(&m, &q, opts.max_iter.unwrap_or(10 * n + 50))?
        }
        LcpMethod::ProjectedGaussSeidel => projected_gauss_seidel(
            &m,
            &q,
            opts.omega,
            opts.tol * 1e-2,
            opts.max_iter.unwrap_or(100_000),
        )?,
        LcpMethod::Auto => match principal_pivoting(&m, &q, opts.max_iter.unwrap_or(10 * n + 50)) {
            Ok(x) => x,
            Err(Error::Convergence { .. }) | Err(Error::Singular { .. }) => {
                lemke(&m, &q, 50 * n + 100)?
            }
            Err(e) => return Err(e),
        },
    };
    let mut x = raw;
    let mut residual = lcp_residual(&m, &q, &x);
    if residual > opts.tol {
        if let Some(polished) = polish_support(&m, &q, &x, opts.survivor_threshold) {
            let r = lcp_residual(&m, &q, &polished);
            if r < residual {
                x = polished;
                residual = r;
            }
        }
    }
    if residual > opts.tol {
        return Err(Error::Convergence {
            method: "lcp",
            iterations: opts.max_iter.unwrap_or(0),
            residual,
        });
    }
    let threshold = opts.survivor_threshold;
    Ok(EquilibriumSolution {
        feasible: x.iter().all(|&v| v > threshold),
        lin_residual: linear_residual(b, &x, |k| x[k] > threshold),
        lcp_residual: residual,
        stats: survivor_stats_with(&x, threshold),
        x,
    })
}

fn principal_submatrix(m: &Matrix, idx: &[usize]) -> faer::Mat<f64> {
    faer::Mat::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// Solves `M_SS x_S = -q_S` on `support`, zero elsewhere.
fn solve_on_support(m: &Matrix, q: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; q.len()];
    if support.is_empty() {
        return Ok(x);
    }
    let lu = LuSolver::new(&principal_submatrix(m, support))?;
    let rhs: Vec<f64> = support.iter().map(|&i| -q[i]).collect();
    for (&i, v) in support.iter().zip(lu.solve(&rhs)) {
        x[i] = v;
    }
    Ok(x)
}

/// Re-solves on the support of an approximate solution and keeps the
/// result when it is sign-consistent.
fn polish_support(m: &Matrix, q: &[f64], x: &[f64], threshold: f64) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > threshold).collect();
    let mut y = solve_on_support(m, q, &support).ok()?;
    if support.iter().any(|&i| y[i] < 0.0) {
        return None;
    }
    for v in &mut y {
        *v = v.max(0.0);
    }
    Some(y)
}

/// Block principal pivoting (Judice-Pires) for `w = Mx + q`.
///
/// All infeasible indices are exchanged while the infeasibility count keeps
/// dropping; after three non-improving block exchanges only the largest
/// infeasible index is exchanged, which terminates for P-matrices.
pub fn principal_pivoting(m: &Matrix, q: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let n = m.square_dim()?;
    if q.len() != n {
        return Err(Error::Shape(format!(
            "q has length {} but M is {n}x{n}",
            q.len()
        )));
    }
    const BACKUP: usize = 3;
    let scale = q.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-13 * scale;
    let mut basic: Vec<bool> = q.iter().map(|&v| v < 0.0).collect();
    let mut best = usize::MAX;
    let mut budget = BACKUP;
    let mut last_violation = f64::INFINITY;
    for _ in 0..max_iter {
        let support: Vec<usize> = (0..n).filter(|&i| basic[i]).collect();
        let x = solve_on_support(m, q, &support)?;
        let w = m.mul_vec(&x);
        let infeasible: Vec<usize> = (0..n)
            .filter(|&i| {
                if basic[i] {
                    x[i] < -tol
                } else {
                    w[i] + q[i] < -tol
                }
            })
            .collect();
        last_violation = infeasible
            .iter()
            .map(|&i| if basic[i] { -x[i] } else { -(w[i] + q[i]) })
            .fold(0.0, f64::max);
        if infeasible.is_empty() {
            return Ok(x.into_iter().map(|v| v.max(0.0)).collect());
        }
        if infeasible.len() < best {
            best = infeasible.len();
            budget = BACKUP;
            infeasible.iter().for_each(|&i| basic[i] = !basic[i]);
        } else if budget > 0 {
            budget -= 1;
            infeasible.iter().for_each(|&i| basic[i] = !basic[i]);
        } else {
            let i = *infeasible.last().expect("nonempty");
            basic[i] = !basic[i];
        }
    }
    Err(Error::Convergence {
        method: "principal pivoting",
        iterations: max_iter,
        residual: last_violation,
    })
}

/// Projected Gauss-Seidel: `x_k <- max(0, x_k - omega (Mx + q)_k / M_kk)`,
/// swept in index order until the largest update falls below `tol`.
pub fn projected_gauss_seidel(
    m: &Matrix,
    q: &[f64],
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    let n = m.square_dim()?;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::Domain(format!(
            "relaxation must lie in (0, 1], got {omega}"
        )));
    }
    if (0..n).any(|k| !(m[(k, k)] > 0.0)) {
        return Err(Error::Precondition(
            "projected Gauss-Seidel needs a positive diagonal".into(),
        ));
    }
    let mut x = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_sweeps {
        change = 0.0;
        for k in 0..n {
            let wk: f64 = m.row(k).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + q[k];
            let next = (x[k] - omega * wk / m[(k, k)]).max(0.0);
            change = f64::max(change, (next - x[k]).abs());
            x[k] = next;
        }
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        method: "projected Gauss-Seidel",
        iterations: max_sweeps,
        residual: change,
    })
}

/// Lemke's complementary pivoting with covering vector `d = 1` and a
/// lexicographic minimum-ratio rule.
///
/// Tableau columns are `w_1..w_n, z_1..z_n, z_0`; the `w` block carries the
/// inverse of the current basis, which feeds the lexicographic tie-break.
pub fn lemke(m: &Matrix, q: &[f64], max_pivots: usize) -> Result<Vec<f64>> {
    let n = m.square_dim()?;
    if q.len() != n {
        return Err(Error::Shape(format!(
            "q has length {} but M is {n}x{n}",
            q.len()
        )));
    }
    if q.iter().all(|&v| v >= 0.0) {
        return Ok(vec![0.0; n]);
    }
    let z0 = 2 * n;
    let cols = 2 * n + 1;
    let mut tab = vec![0.0; n * cols];
    let mut rhs = q.to_vec();
    for i in 0..n {
        let row = &mut tab[i * cols..(i + 1) * cols];
        row[i] = 1.0;
        for j in 0..n {
            row[n + j] = -m[(i, j)];
        }
        row[z0] = -1.0;
    }
    let mut basis: Vec<usize> = (0..n).collect();

    // z0 enters at level max(-q_i); among ties the lexicographic rule picks
    // the last row.
    let qmin = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * qmin.abs().max(1.0);
    let first = (0..n)
        .rev()
        .find(|&i| q[i] <= qmin + tie)
        .expect("some row attains the min");
    pivot(&mut tab, &mut rhs, cols, first, z0);
    let mut leaving = basis[first];
    basis[first] = z0;

    for _ in 0..max_pivots {
        let entering = if leaving < n {
            n + leaving
        } else {
            leaving - n
        };
        let Some(r) = lex_ratio_test(&tab, &rhs, cols, n, entering, &basis, z0) else {
            return Err(Error::Convergence {
                method: "lemke (secondary ray)",
                iterations: 0,
                residual: f64::INFINITY,
            });
        };
        pivot(&mut tab, &mut rhs, cols, r, entering);
        leaving = basis[r];
        basis[r] = entering;
        if leaving == z0 {
            let mut z = vec![0.0; n];
            for (i, &v) in basis.iter().enumerate() {
                if (n..2 * n).contains(&v) {
                    z[v - n] = rhs[i].max(0.0);
                }
            }
            return Ok(z);
        }
    }
    Err(Error::Convergence {
        method: "lemke",
        iterations: max_pivots,
        residual: f64::INFINITY,
    })
}

fn pivot(tab: &mut [f64], rhs: &mut [f64], cols: usize, r: usize, e: usize) {
    let n = rhs.len();
    let p = tab[r * cols + e];
    for v in &mut tab[r * cols..(r + 1) * cols] {
        *v /= p;
    }
    rhs[r] /= p;
    let (pivot_row, pivot_rhs) = (tab[r * cols..(r + 1) * cols].to_vec(), rhs[r]);
    for i in (0..n).filter(|&i| i != r) {
        let f = tab[i * cols + e];
        if f == 0.0 {
            continue;
        }
        for (v, pv) in tab[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        tab[i * cols + e] = 0.0;
        rhs[i] -= f * pivot_rhs;
    }
}

fn lex_ratio_test(
    tab: &[f64],
    rhs: &[f64],
    cols: usize,
    n: usize,
    e: usize,
    basis: &[usize],
    z0: usize,
) -> Option<usize> {
    let col_scale = (0..n).map(|i| tab[i * cols + e].abs()).fold(0.0, f64::max);
    let piv_tol = 1e-11 * col_scale.max(1.0);
    let mut candidates: Vec<usize> = (0..n).filter(|&i| tab[i * cols + e] > piv_tol).collect();
    if candidates.is_empty() {
        return None;
    }
    let key = |i: usize, c: Option<usize>| {
        let v = match c {
            None => rhs[i],
            Some(j) => tab[i * cols + j],
        };
        v / tab[i * cols + e]
    };
    // narrow on the ratio column first, then on columns of the basis inverse
    for c in std::iter::once(None).chain((0..n).map(Some)) {
        let best = candidates
            .iter()
            .map(|&i| key(i, c))
            .fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * best.abs().max(1e-3);
        candidates.retain(|&i| key(i, c) <= best + tol);
        if c.is_none() {
            if let Some(&i) = candidates.iter().find(|&&i| basis[i] == z0) {
                return Some(i);
            }
        }
        if candidates.len() == 1 {
            break;
        }
    }
    candidates.first().copied()
}

pub const EQUILIBRIUM_HEADER: [&str; 11] = [
    "seed",
    "n",
    "rho",
    "mu",
    "alpha",
    "feasible",
    "phi",
    "mean_x",
    "mean_x2",
    "lin_residual",
    "lcp_residual",
];

pub fn equilibrium_table() -> CsvTable {
    CsvTable::new(&EQUILIBRIUM_HEADER)
}
