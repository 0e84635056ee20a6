#![allow(dead_code)]

use elliptic_lv::Matrix;

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &v)| {
            let mut row = r.clone();
            row.push(v);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            let pivot_row = m[c].clone();
            for (v, p) in m[r].iter_mut().zip(&pivot_row).skip(c) {
                *v -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (m[c][n] - s) / m[c][c];
    }
    Some(x)
}

/// Solves the complementarity problem `w = Mx + q` by trying every support.
/// Returns the first sign-consistent candidate.
pub fn brute_force_lcp(m: &Matrix, q: &[f64]) -> Option<Vec<f64>> {
    let n = q.len();
    assert!(n <= 16, "support enumeration is exponential");
    let tol = 1e-12;
    for mask in 0u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| support.iter().map(|&j| m[(i, j)]).collect())
            .collect();
        let rhs: Vec<f64> = support.iter().map(|&i| -q[i]).collect();
        let Some(xs) = gauss_solve(&sub, &rhs) else {
            continue;
        };
        if xs.iter().any(|&v| v < -tol) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (&i, &v) in support.iter().zip(&xs) {
            x[i] = v;
        }
        let w: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum::<f64>() + q[i])
            .collect();
        if (0..n)
            .filter(|i| !support.contains(i))
            .all(|i| w[i] >= -tol)
        {
            return Some(x);
        }
    }
    None
}

/// `I - B`.
pub fn i_minus(b: &Matrix) -> Matrix {
    let n = b.rows();
    Matrix::from_fn(
        n,
        n,
        |i, j| if i == j { 1.0 - b[(i, j)] } else { -b[(i, j)] },
    )
}

/// Composite Simpson rule on `[lo, hi]` with `2k` panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + h * i as f64);
    }
    s * h / 3.0
}

/// Truncated normal moments `(P(Z > -d), E[Z | Z > -d], E[Z^2 | Z > -d])` by
/// quadrature of the defining integrals over `[-d, 12]`.
pub fn quadrature_moments(d: f64) -> (f64, f64, f64) {
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let lo = -d;
    let hi = 12.0f64.max(lo + 12.0);
    let k = 20_000;
    let p = simpson(pdf, lo, hi, k);
    let m1 = simpson(|z| z * pdf(z), lo, hi, k);
    let m2 = simpson(|z| z * z * pdf(z), lo, hi, k);
    (p, m1 / p, m2 / p)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
