//! Extreme-value scalings of Gaussian maxima and the statistics used to
//! check their Gumbel limit.

use crate::csvfmt::CsvTable;
use crate::{Error, Matrix, Result};

/// Normalizing constants for the maximum of `n` standard Gaussians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvtScalings {
    /// `sqrt(2 log n)`
    pub alpha_star: f64,
    /// `alpha_star - log(4 pi log n) / (2 alpha_star)`
    pub beta_star: f64,
    pub n: f64,
}

impl EvtScalings {
    /// `alpha*(max - beta*)`, whose law tends to Gumbel.
    pub fn max_statistic(&self, max: f64) -> f64 {
        self.alpha_star * (max - self.beta_star)
    }

    /// `-alpha*(min + beta*)`, which has the same Gumbel limit.
    pub fn min_statistic(&self, min: f64) -> f64 {
        -self.alpha_star * (min + self.beta_star)
    }
}

pub fn critical_scalings(n: usize) -> Result<EvtScalings> {
    critical_scalings_real(n as f64)
}

/// Same as [`critical_scalings`] for a real-valued size.
pub fn critical_scalings_real(n: f64) -> Result<EvtScalings> {
    if !(n >= 2.0) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "extreme-value scalings need n >= 2, got {n}"
        )));
    }
    let log_n = n.ln();
    let alpha_star = (2.0 * log_n).sqrt();
    let beta_star = alpha_star - (4.0 * std::f64::consts::PI * log_n).ln() / (2.0 * alpha_star);
    Ok(EvtScalings {
        alpha_star,
        beta_star,
        n,
    })
}

/// Gumbel distribution function `exp(-exp(-x))`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// Normalized row sums `Z_k = n^{-1/2} sum_i a_ki`.
pub fn row_sums(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.square_dim()?;
    let s = 1.0 / (n.max(1) as f64).sqrt();
    Ok((0..n).map(|k| a.row(k).iter().sum::<f64>() * s).collect())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample Kolmogorov-Smirnov distance `sup |F_m - cdf|`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain(
            "KS distance needs at least one sample".into(),
        ));
    }
    let xs = sorted(samples);
    let m = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max))
}

/// Two-sample Kolmogorov-Smirnov distance between empirical laws.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("KS distance needs nonempty samples".into()));
    }
    let (xs, ys) = (sorted(a), sorted(b));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Max and min statistics of the normalized row sums of one matrix.
pub fn extreme_statistics(a: &Matrix) -> Result<(f64, f64)> {
    let n = a.square_dim()?;
    let sc = critical_scalings(n)?;
    let z = row_sums(a)?;
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = z.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((sc.max_statistic(max), sc.min_statistic(min)))
}

pub fn evt_table() -> CsvTable {
    CsvTable::new(&["trial", "statistic_max", "statistic_min"])
}
