//! Eigenvalue and norm computations, together with the closed-form
//! asymptotic predictions that gate stability.

use faer::Side;

use crate::csvfmt::CsvTable;
use crate::random_interactions::InteractionMatrix;
use crate::{row, Error, Matrix, Result};

pub type Complex = faer::c64;

/// `sqrt(2(1 + rho))`, the smallest interaction strength for which the
/// centered symmetrized bulk stays below 2.
pub fn critical_alpha(rho: f64) -> f64 {
    (2.0 * (1.0 + rho)).sqrt()
}

/// Upper root `mu+ = 1/2 + 1/2 sqrt(1 - 2(1+rho)/alpha^2)` of the stability
/// polynomial, defined only when `alpha > sqrt(2(1+rho))`.
pub fn admissible_mu_max(rho: f64, alpha: f64) -> Option<f64> {
    if !(rho.abs() <= 1.0) || !(alpha > 0.0) || !(alpha > critical_alpha(rho)) {
        return None;
    }
    Some(0.5 + 0.5 * (1.0 - 2.0 * (1.0 + rho) / (alpha * alpha)).sqrt())
}

/// Membership of `(rho, alpha, mu)` in the admissible parameter set, with
/// both inequalities strict.
pub fn is_admissible(rho: f64, alpha: f64, mu: f64) -> bool {
    admissible_mu_max(rho, alpha).is_some_and(|mu_max| mu < mu_max)
}

/// Right edge `2 sqrt(2(1+rho)) / alpha` of the semicircle support of
/// `(A + A^T) / (alpha sqrt(n))`.
pub fn bulk_edge(rho: f64, alpha: f64) -> f64 {
    2.0 * critical_alpha(rho) / alpha
}

/// Mean shift above which the rank-one perturbation `(2 mu / n) 1 1^T`
/// separates an outlier: `sqrt(1+rho) / (sqrt(2) alpha)`.
pub fn outlier_threshold(rho: f64, alpha: f64) -> f64 {
    (1.0 + rho).sqrt() / (std::f64::consts::SQRT_2 * alpha)
}

/// Almost-sure limit of `lambda_max(B + B^T)`.
///
/// Equal to the bulk edge up to the outlier threshold (inclusive), and to
/// `2 mu + (1 + rho) / (alpha^2 mu)` beyond it. The two branches agree at
/// the threshold.
pub fn predicted_lambda_max_sym(rho: f64, alpha: f64, mu: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if mu > outlier_threshold(rho, alpha) {
        Ok(2.0 * mu + (1.0 + rho) / (alpha * alpha * mu))
    } else {
        Ok(bulk_edge(rho, alpha))
    }
}

/// Largest singular value bound `sqrt(2)(sqrt(1+rho) + sqrt(1-rho))` for
/// `A / sqrt(n)`.
pub fn spectral_norm_bound(rho: f64) -> f64 {
    std::f64::consts::SQRT_2 * ((1.0 + rho).sqrt() + (1.0 - rho).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityVerdict {
    /// `lambda_max(B + B^T)`.
    pub lambda_max_sym: f64,
    /// Asymptotic value of `lambda_max_sym`, when model parameters are known.
    pub predicted_edge: Option<f64>,
    pub is_admissible: Option<bool>,
    /// Whether `2I - (B + B^T)` is positive definite, i.e. `lambda_max_sym < 2`.
    pub is_pd: bool,
}

/// Largest eigenvalue of `m + m^T` via dense symmetric tridiagonalization.
pub fn lambda_max_sym(m: &Matrix) -> Result<f64> {
    let n = m.square_dim()?;
    if n == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let s = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)] + m[(j, i)]);
    let eig = s
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("symmetric eigensolver: {e:?} (n = {n})")))?;
    Ok(eig[n - 1])
}

/// Decides whether `(I - B) + (I - B)^T` is positive definite.
///
/// `lambda_max = 2` exactly counts as not positive definite.
pub fn check_stability_pd(b: &Matrix) -> Result<StabilityVerdict> {
    let lambda_max = lambda_max_sym(b)?;
    Ok(StabilityVerdict {
        lambda_max_sym: lambda_max,
        predicted_edge: None,
        is_admissible: None,
        is_pd: lambda_max < 2.0,
    })
}

/// [`check_stability_pd`] with the asymptotic prediction for the instance's
/// parameters filled in.
pub fn check_instance_stability(im: &InteractionMatrix) -> Result<StabilityVerdict> {
    let p = &im.params;
    let mut v = check_stability_pd(&im.b)?;
    v.predicted_edge = Some(predicted_lambda_max_sym(p.rho, p.alpha, p.mu)?);
    v.is_admissible = Some(is_admissible(p.rho, p.alpha, p.mu));
    Ok(v)
}

/// Positive-definiteness of `2I - (B + B^T)` through a Cholesky attempt.
pub fn is_pd_cholesky(b: &Matrix) -> Result<bool> {
    let n = b.square_dim()?;
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| {
        let d = if i == j { 2.0 } else { 0.0 };
        d - b[(i, j)] - b[(j, i)]
    });
    Ok(m.llt(Side::Lower).is_ok())
}

/// All eigenvalues of a general real square matrix, unordered.
pub fn empirical_spectrum(a: &Matrix) -> Result<Vec<Complex>> {
    let n = a.square_dim()?;
    a.to_faer()
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("nonsymmetric eigensolver: {e:?} (n = {n})")))
}

/// Fraction of `eigs` with `Re^2/(1+rho)^2 + Im^2/(1-rho)^2 <= inflation`.
pub fn fraction_inside_ellipse(eigs: &[Complex], rho: f64, inflation: f64) -> f64 {
    if eigs.is_empty() {
        return 1.0;
    }
    let (ax, ay) = ((1.0 + rho).powi(2), (1.0 - rho).powi(2));
    let inside = eigs
        .iter()
        .filter(|z| z.re * z.re / ax + z.im * z.im / ay <= inflation)
        .count();
    inside as f64 / eigs.len() as f64
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    let n = a.square_dim()?;
    if n == 0 {
        return Ok(0.0);
    }
    let sv = a
        .to_faer()
        .singular_values()
        .map_err(|e| Error::Eigen(format!("svd: {e:?} (n = {n})")))?;
    Ok(sv[0])
}

pub fn spectrum_csv(eigs: &[Complex]) -> CsvTable {
    let mut t = CsvTable::new(&["re", "im"]);
    for z in eigs {
        t.push(row![z.re, z.im]);
    }
    t
}

pub const VERDICT_HEADER: [&str; 7] = [
    "rho",
    "alpha",
    "mu",
    "lambda_max",
    "predicted_edge",
    "is_admissible",
    "is_pd",
];
