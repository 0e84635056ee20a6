//! Cavity fixed-point system for the surviving fraction `phi`, the moments
//! `m = <x>`, `q = <x^2>` and the response `v`.
//!
//! With `Delta = (1 + m mu) alpha / sqrt(q)` and `Z ~ N(0, 1)`:
//!
//! ```text
//! phi = P(Z > -Delta)
//! m   = phi / (1 - rho v / alpha) * ((1 + m mu) + sqrt(q)/alpha E[Z | Z > -Delta])
//! q   = phi / (1 - rho v / alpha)^2 * ((1 + m mu)^2
//!         + 2 (1 + m mu) sqrt(q)/alpha E[Z | Z > -Delta] + q/alpha^2 E[Z^2 | Z > -Delta])
//! v   = phi / (alpha - rho v)
//! ```

use crate::csvfmt::CsvTable;
use crate::{row, Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function through `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Mills ratio `P(Z > x) / pdf(x)` for large positive `x`, by continued
/// fraction.
fn mills_ratio(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=80).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// Moments of a standard normal conditioned on `Z > -delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedMoments {
    /// `P(Z > -delta) = Phi(delta)`
    pub p: f64,
    /// `E[Z | Z > -delta] = pdf(delta) / Phi(delta)`
    pub e1: f64,
    /// `E[Z^2 | Z > -delta] = 1 - delta e1`
    pub e2: f64,
}

pub fn truncated_moments(delta: f64) -> TruncatedMoments {
    if delta == f64::INFINITY {
        return TruncatedMoments {
            p: 1.0,
            e1: 0.0,
            e2: 1.0,
        };
    }
    let (p, e1) = if delta < -30.0 {
        // Phi(delta) = pdf(delta) R(-delta); the ratio avoids 0/0 far in the tail
        let r = mills_ratio(-delta);
        (normal_pdf(delta) * r, 1.0 / r)
    } else {
        let p = normal_cdf(delta);
        (p, normal_pdf(delta) / p)
    };
    TruncatedMoments {
        p,
        e1,
        e2: 1.0 - delta * e1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityState {
    pub phi: f64,
    /// `<x>`
    pub m: f64,
    /// `<x^2>`
    pub q: f64,
    pub v: f64,
}

impl CavityState {
    /// The `alpha -> infinity` feasible limit used as default start.
    pub fn feasible_limit(alpha: f64, mu: f64) -> Self {
        let m = if mu < 1.0 { 1.0 / (1.0 - mu) } else { 1.0 };
        Self {
            phi: 1.0,
            m,
            q: m * m,
            v: 1.0 / alpha,
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        [
            self.phi - other.phi,
            self.m - other.m,
            self.q - other.q,
            self.v - other.v,
        ]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max)
    }

    fn mix(&self, other: &Self, theta: f64) -> Self {
        let lerp = |a: f64, b: f64| (1.0 - theta) * a + theta * b;
        Self {
            phi: lerp(self.phi, other.phi),
            m: lerp(self.m, other.m),
            q: lerp(self.q, other.q),
            v: lerp(self.v, other.v),
        }
    }

    fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.m.is_finite() && self.q.is_finite() && self.v.is_finite()
    }
}

/// `Delta = (1 + m mu) alpha / sqrt(q)`.
pub fn cavity_delta(m: f64, q: f64, alpha: f64, mu: f64) -> f64 {
    (1.0 + m * mu) * alpha / q.sqrt()
}

/// Right-hand sides of the four cavity equations at `state`.
///
/// `phi` is updated first and the fresh value feeds the other three
/// equations; `v` on the right-hand side is the input `v`.
pub fn cavity_rhs(state: &CavityState, rho: f64, alpha: f64, mu: f64) -> Result<CavityState> {
    if !(state.q > 0.0) {
        return Err(Error::Domain(format!(
            "cavity equations need q > 0, got {}",
            state.q
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let denom = 1.0 - rho * state.v / alpha;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Domain(format!(
            "1 - rho v / alpha vanishes (rho = {rho}, v = {}, alpha = {alpha})",
            state.v
        )));
    }
    let drive = 1.0 + state.m * mu;
    let spread = state.q.sqrt() / alpha;
    let tm = truncated_moments(drive / spread);
    let phi = tm.p;
    Ok(CavityState {
        phi,
        m: phi / denom * (drive + spread * tm.e1),
        q: phi / (denom * denom)
            * (drive * drive + 2.0 * drive * spread * tm.e1 + spread * spread * tm.e2),
        v: phi / (alpha - rho * state.v),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct CavityOptions {
    pub init: Option<CavityState>,
    /// Initial damping `theta` in `state <- (1 - theta) state + theta rhs(state)`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CavityOptions {
    fn default() -> Self {
        Self {
            init: None,
            damping: 0.5,
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavitySolution {
    pub state: CavityState,
    /// `||state - cavity_rhs(state)||_inf`
    pub residual: f64,
    pub iterations: usize,
    /// Damping in effect when the iteration stopped.
    pub damping: f64,
}

/// Damped Picard iteration on the cavity system.
///
/// The damping is halved whenever the residual grows three times in a row.
pub fn solve_cavity(rho: f64, alpha: f64, mu: f64, opts: &CavityOptions) -> Result<CavitySolution> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let mut state = opts
        .init
        .unwrap_or_else(|| CavityState::feasible_limit(alpha, mu));
    let mut theta = opts.damping;
    let mut prev = f64::INFINITY;
    let mut growth = 0;
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let next = cavity_rhs(&state, rho, alpha, mu).map_err(|e| Error::Divergence {
            time: it as f64,
            reason: format!("{e}; retry with a smaller damping"),
        })?;
        residual = state.sup_distance(&next);
        if !residual.is_finite() || !next.is_finite() {
            return Err(Error::Divergence {
                time: it as f64,
                reason: "non-finite cavity iterate; retry with a smaller damping".into(),
            });
        }
        if residual <= opts.tol {
            return Ok(CavitySolution {
                state,
                residual,
                iterations: it,
                damping: theta,
            });
        }
        if residual > prev {
            growth += 1;
            if growth >= 3 {
                theta = (theta * 0.5).max(1e-4);
                growth = 0;
            }
        } else {
            growth = 0;
        }
        prev = residual;
        state = state.mix(&next, theta);
    }
    Err(Error::Convergence {
        method: "cavity fixed point",
        iterations: opts.max_iter,
        residual,
    })
}

/// Solves along an `alpha` grid, warm-starting each point from its
/// neighbour when the default start fails.
pub fn solve_cavity_curve(
    rho: f64,
    mu: f64,
    alphas: &[f64],
    opts: &CavityOptions,
) -> Vec<Result<CavitySolution>> {
    // walk from the largest alpha, where the feasible-limit start is best
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    let mut out: Vec<Option<Result<CavitySolution>>> = (0..alphas.len()).map(|_| None).collect();
    let mut previous: Option<CavityState> = None;
    for idx in order {
        let alpha = alphas[idx];
        let mut res = solve_cavity(rho, alpha, mu, opts);
        if res.is_err() {
            if let Some(prev) = previous {
                let warm = CavityOptions {
                    init: Some(prev),
                    ..*opts
                };
                res = solve_cavity(rho, alpha, mu, &warm);
            }
        }
        if let Ok(sol) = &res {
            previous = Some(sol.state);
        }
        out[idx] = Some(res);
    }
    out.into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

/// Largest disagreement between fixed points reached from several starts.
///
/// Uniqueness of the fixed point is not guaranteed; callers report a large
/// spread as a warning.
pub fn multi_start_spread(rho: f64, alpha: f64, mu: f64, opts: &CavityOptions) -> Result<f64> {
    let base = CavityState::feasible_limit(alpha, mu);
    let starts = [
        base,
        CavityState {
            phi: 0.5,
            m: 0.5 * base.m,
            q: 0.5 * base.q,
            v: 0.5 / alpha,
        },
        CavityState {
            phi: 0.9,
            m: 2.0 * base.m,
            q: 4.0 * base.q,
            v: 2.0 / alpha,
        },
    ];
    let mut sols = Vec::new();
    for s in starts {
        sols.push(
            solve_cavity(
                rho,
                alpha,
                mu,
                &CavityOptions {
                    init: Some(s),
                    ..*opts
                },
            )?
            .state,
        );
    }
    Ok(sols
        .iter()
        .flat_map(|a| sols.iter().map(move |b| a.sup_distance(b)))
        .fold(0.0, f64::max))
}

pub fn cavity_table() -> CsvTable {
    CsvTable::new(&[
        "rho",
        "alpha",
        "mu",
        "phi",
        "mean_x",
        "mean_x2",
        "v",
        "residual",
        "iterations",
    ])
}

pub fn push_cavity_row(table: &mut CsvTable, rho: f64, alpha: f64, mu: f64, sol: &CavitySolution) {
    let s = &sol.state;
    table.push(row![
        rho,
        alpha,
        mu,
        s.phi,
        s.m,
        s.q,
        s.v,
        sol.residual,
        sol.iterations
    ]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!((normal_cdf(-10.0) / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn moments_at_zero_and_one() {
        let t = truncated_moments(0.0);
        assert_eq!(t.p, 0.5);
        assert!((t.e1 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(t.e2, 1.0);

        let t = truncated_moments(1.0);
        assert!((t.p - 0.841345).abs() < 1e-6);
        assert!((t.e1 - 0.287600).abs() < 1e-6);
        assert!((t.e2 - 0.712400).abs() < 1e-6);
    }

    #[test]
    fn moments_without_truncation() {
        for d in [40.0, f64::INFINITY] {
            let t = truncated_moments(d);
            assert_eq!(t.p, 1.0);
            assert!(t.e1.abs() < 1e-300);
            assert_eq!(t.e2, 1.0);
        }
    }

    #[test]
    fn deep_tail_is_continuous() {
        let a = truncated_moments(-29.999_999);
        let b = truncated_moments(-30.000_001);
        assert!((a.e1 / b.e1 - 1.0).abs() < 1e-6);
        assert!((a.p / b.p - 1.0).abs() < 1e-3);
        // conditional variance stays nonnegative deep in the tail
        let t = truncated_moments(-50.0);
        assert!(t.e2 >= t.e1 * t.e1 * (1.0 - 1e-9));
    }

    #[test]
    fn rhs_large_alpha_survival() {
        let s = CavityState {
            phi: 1.0,
            m: 1.0,
            q: 1.0,
            v: 0.0,
        };
        let r = cavity_rhs(&s, 0.3, 100.0, 0.0).unwrap();
        assert!((r.phi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rhs_uncorrelated_response() {
        let s = CavityState {
            phi: 0.7,
            m: 0.8,
            q: 1.1,
            v: 0.4,
        };
        let r = cavity_rhs(&s, 0.0, 2.5, 0.3).unwrap();
        assert_eq!(r.v, r.phi / 2.5);
    }

    #[test]
    fn rhs_rejects_bad_state() {
        let s = CavityState {
            phi: 1.0,
            m: 1.0,
            q: 0.0,
            v: 0.1,
        };
        assert!(cavity_rhs(&s, 0.0, 2.0, 0.0).is_err());
        let s = CavityState {
            phi: 1.0,
            m: 1.0,
            q: 1.0,
            v: 4.0,
        };
        assert!(cavity_rhs(&s, 0.5, 2.0, 0.0).is_err());
    }

    #[test]
    fn large_alpha_limit() {
        let sol = solve_cavity(0.0, 100.0, 0.0, &CavityOptions::default()).unwrap();
        let s = sol.state;
        assert!(sol.residual <= 1e-10);
        assert!((s.phi - 1.0).abs() < 1e-2);
        assert!((s.m - 1.0).abs() < 1e-2);
        assert!((s.q - 1.0).abs() < 1e-2);
        assert!((s.v - 0.01).abs() < 1e-2);
    }

    #[test]
    fn fixed_point_is_self_consistent() {
        let (rho, alpha, mu) = (0.5, 4.0, 0.2);
        let sol = solve_cavity(rho, alpha, mu, &CavityOptions::default()).unwrap();
        let again = cavity_rhs(&sol.state, rho, alpha, mu).unwrap();
        assert!(again.sup_distance(&sol.state) <= 1e-10);
        let s = sol.state;
        let delta = cavity_delta(s.m, s.q, alpha, mu);
        assert!((normal_cdf(delta) - s.phi).abs() <= 1e-10);
        assert!((s.v * (alpha - rho * s.v) - s.phi).abs() <= 1e-10);
    }

    #[test]
    fn prey_predator_keeps_more_species() {
        let opts = CavityOptions::default();
        let neg = solve_cavity(-0.9, 2.5, 0.0, &opts).unwrap().state.phi;
        let pos = solve_cavity(0.9, 2.5, 0.0, &opts).unwrap().state.phi;
        assert!(neg > pos, "{neg} vs {pos}");
    }

    #[test]
    fn curve_matches_pointwise() {
        let alphas = [2.0, 3.0, 5.0];
        let curve = solve_cavity_curve(0.5, 0.2, &alphas, &CavityOptions::default());
        for (alpha, res) in alphas.iter().zip(curve) {
            let point = solve_cavity(0.5, *alpha, 0.2, &CavityOptions::default()).unwrap();
            assert!(res.unwrap().state.sup_distance(&point.state) < 1e-8);
        }
    }

    #[test]
    fn starts_agree() {
        let spread = multi_start_spread(0.5, 3.0, 0.2, &CavityOptions::default()).unwrap();
        assert!(spread < 1e-8, "{spread}");
    }

    #[test]
    fn bad_arguments() {
        let o = CavityOptions::default();
        assert!(solve_cavity(0.0, 0.0, 0.0, &o).is_err());
        assert!(solve_cavity(1.5, 2.0, 0.0, &o).is_err());
        assert!(solve_cavity(0.0, 2.0, 0.0, &CavityOptions { damping: 0.0, ..o }).is_err());
    }
}
