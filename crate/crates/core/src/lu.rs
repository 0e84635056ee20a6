//! LU solves with a 1-norm condition estimate, on top of `faer`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::{Error, Matrix, Result};

pub(crate) struct LuSolver {
    lu: PartialPivLu<f64>,
    n: usize,
    norm1: f64,
}

impl LuSolver {
    pub fn new(m: &Mat<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::Shape(format!(
                "expected square, got {}x{}",
                n,
                m.ncols()
            )));
        }
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = m.partial_piv_lu();
        let u = lu.U();
        if (0..n).any(|i| !(u[(i, i)] != 0.0 && u[(i, i)].is_finite())) {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        Ok(Self { lu, n, norm1 })
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(&m.to_faer())
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut col = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(col.as_mut());
        (0..self.n).map(|i| col[(i, 0)]).collect()
    }

    fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let mut col = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_transpose_in_place(col.as_mut());
        (0..self.n).map(|i| col[(i, 0)]).collect()
    }

    /// Hager's estimate of `||M||_1 ||M^-1||_1` (a lower bound, usually
    /// within a small factor of the true condition number).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            if !estimate.is_finite() {
                return f64::INFINITY;
            }
            let sign: Vec<f64> = y
                .iter()
                .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let z = self.solve_transpose(&sign);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        estimate * self.norm1
    }
}
