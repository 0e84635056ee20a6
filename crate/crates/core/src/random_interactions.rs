//! Sampling of the correlated Gaussian matrix `A` and assembly of the
//! interaction matrix `B = A / (alpha sqrt(n)) + (mu / n) 1 1^T`.
//!
//! `A` is produced as `Gamma(X)` where `X` has i.i.d. standard normal
//! entries drawn row-major from one [`NormalStream`]. The diagonal of `A`
//! is kept (it is part of the model) and enters `B`.

use crate::csvfmt::fmt_f64;
use crate::rng::NormalStream;
use crate::{Error, Matrix, Result};

/// Parameters of one elliptic-model instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub rho: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(n: usize, rho: f64, mu: f64, alpha: f64) -> Result<Self> {
        let p = Self { n, rho, mu, alpha };
        p.validate()?;
        Ok(p)
    }

    /// Interaction strength on the feasibility scale `alpha = kappa sqrt(log n)`.
    pub fn with_kappa(n: usize, rho: f64, mu: f64, kappa: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!(
                "kappa scaling needs n >= 2, got {n}"
            )));
        }
        Self::new(n, rho, mu, kappa * (n as f64).ln().sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        check_rho(self.rho)?;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )))
    }
}

/// Per-pair correlations `rho_ij`, `i < j`, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceProfile {
    n: usize,
    values: Vec<f64>,
}

impl CovarianceProfile {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "profile for n = {n} needs {expected} entries, got {}",
                values.len()
            )));
        }
        for &r in &values {
            check_rho(r)?;
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, rho: f64) -> Result<Self> {
        Self::new(n, vec![rho; n * n.saturating_sub(1) / 2])
    }

    /// Correlations drawn independently and uniformly in `[-1, 1]`.
    pub fn uniform(n: usize, seed: u64) -> Self {
        let mut s = NormalStream::new(seed);
        let values = (0..n * n.saturating_sub(1) / 2)
            .map(|_| s.uniform_in(-1.0, 1.0))
            .collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Correlation of the pair `{i, j}`, `i != j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        assert!(i != j && j < self.n, "profile index out of range");
        // rows 0..i contribute (n-1) + (n-2) + ... + (n-i) entries
        let offset = i * (2 * self.n - i - 1) / 2;
        self.values[offset + (j - i - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The correlating map `Gamma` with a constant coefficient `rho`.
///
/// For `i < j`: `G_ij = a X_ij + b X_ji`, `G_ji = a X_ij - b X_ji` with
/// `a = sqrt((1+rho)/2)`, `b = sqrt((1-rho)/2)`; the diagonal is copied.
pub fn gamma_map(x: &Matrix, rho: f64) -> Result<Matrix> {
    check_rho(rho)?;
    let n = x.square_dim()?;
    let (a, b) = gamma_coefficients(rho);
    Ok(apply_gamma(x, n, |_, _| (a, b)))
}

/// `Gamma` with a per-pair correlation taken from `profile`.
pub fn gamma_map_profile(x: &Matrix, profile: &CovarianceProfile) -> Result<Matrix> {
    let n = x.square_dim()?;
    if profile.n() != n {
        return Err(Error::Shape(format!(
            "profile is for n = {} but matrix is {n}x{n}",
            profile.n()
        )));
    }
    Ok(apply_gamma(x, n, |i, j| {
        gamma_coefficients(profile.get(i, j))
    }))
}

fn gamma_coefficients(rho: f64) -> (f64, f64) {
    (((1.0 + rho) / 2.0).sqrt(), ((1.0 - rho) / 2.0).sqrt())
}

fn apply_gamma(x: &Matrix, n: usize, coeff: impl Fn(usize, usize) -> (f64, f64)) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = x[(i, i)];
        for j in i + 1..n {
            let (a, b) = coeff(i, j);
            let (upper, lower) = (x[(i, j)], x[(j, i)]);
            out[(i, j)] = a * upper + b * lower;
            out[(j, i)] = a * upper - b * lower;
        }
    }
    out
}

/// `n x n` matrix of i.i.d. standard normals, filled row-major.
pub fn sample_iid_gaussian(n: usize, seed: u64) -> Matrix {
    let mut s = NormalStream::new(seed);
    let mut m = Matrix::zeros(n, n);
    s.fill_normal(m.as_mut_slice());
    m
}

/// A sampled instance: raw correlated Gaussian `a`, assembled `b`, provenance.
#[derive(Clone, Debug)]
pub struct InteractionMatrix {
    pub a: Matrix,
    pub b: Matrix,
    pub params: ModelParams,
    pub seed: u64,
}

impl InteractionMatrix {
    /// Assembles `b` from a given raw matrix `a`.
    pub fn assemble(a: Matrix, params: ModelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = a.square_dim()?;
        if n != params.n {
            return Err(Error::Shape(format!(
                "raw matrix is {n}x{n} but params.n = {}",
                params.n
            )));
        }
        let scale = 1.0 / (params.alpha * (n as f64).sqrt());
        let shift = params.mu / n as f64;
        let b = Matrix::from_fn(n, n, |i, j| a[(i, j)] * scale + shift);
        Ok(Self { a, b, params, seed })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Row-major dump: a `# n,rho,mu,alpha,seed` header line, a comment
    /// line with the values, then one line per row of `b`.
    pub fn dump_csv(&self) -> String {
        let p = &self.params;
        let mut out = String::from("# n,rho,mu,alpha,seed\n");
        out.push_str(&format!(
            "# {},{},{},{},{}\n",
            p.n,
            fmt_f64(p.rho),
            fmt_f64(p.mu),
            fmt_f64(p.alpha),
            self.seed
        ));
        for i in 0..p.n {
            let line: Vec<String> = self.b.row(i).iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Samples `B` under the constant-correlation elliptic model.
pub fn sample_interaction(params: &ModelParams, seed: u64) -> Result<InteractionMatrix> {
    params.validate()?;
    let x = sample_iid_gaussian(params.n, seed);
    InteractionMatrix::assemble(gamma_map(&x, params.rho)?, *params, seed)
}

/// Samples `B` with per-pair correlations; `params.rho` is ignored.
pub fn sample_interaction_profile(
    params: &ModelParams,
    profile: &CovarianceProfile,
    seed: u64,
) -> Result<InteractionMatrix> {
    params.validate()?;
    let x = sample_iid_gaussian(params.n, seed);
    InteractionMatrix::assemble(gamma_map_profile(&x, profile)?, *params, seed)
}

/// Parses the output of [`InteractionMatrix::dump_csv`] back into `(params, seed, b)`.
pub fn parse_matrix_dump(text: &str) -> Result<(ModelParams, u64, Matrix)> {
    let bad = |msg: &str| Error::Shape(format!("malformed matrix dump: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some("# n,rho,mu,alpha,seed") {
        return Err(bad("missing header"));
    }
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| bad("missing metadata"))?;
    let fields: Vec<&str> = meta.split(',').collect();
    if fields.len() != 5 {
        return Err(bad("metadata needs 5 fields"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("non-numeric metadata"));
    let n: usize = fields[0].parse().map_err(|_| bad("n"))?;
    let params = ModelParams::new(n, num(fields[1])?, num(fields[2])?, num(fields[3])?)?;
    let seed: u64 = fields[4].parse().map_err(|_| bad("seed"))?;
    let mut data = Vec::with_capacity(n * n);
    for line in lines.filter(|l| !l.is_empty()) {
        for v in line.split(',') {
            data.push(num(v)?);
        }
    }
    Ok((params, seed, Matrix::from_row_major(n, n, data)?))
}
