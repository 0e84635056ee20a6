//! Integration of `dx_k/dt = x_k (1 - x_k + (B x)_k)` with an adaptive
//! Dormand-Prince 5(4) pair.
//!
//! Steps that would make any abundance nonpositive are rejected and the step
//! size halved; states are never clamped.

use crate::csvfmt::CsvTable;
use crate::{Error, Matrix, Result};

/// Abundance magnitude treated as blow-up.
pub const BLOW_UP: f64 = 1e12;
pub const DEFAULT_HORIZON: f64 = 200.0;

#[derive(Clone, Copy, Debug)]
pub struct StepControls {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            initial_step: 1e-2,
            max_step: 1.0,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub converged: bool,
    /// Sup-norm distance of the last state to the reference, if one was given.
    pub final_distance: Option<f64>,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Rows `t,x_1,...,x_n`, keeping every `stride`-th sample and the last one.
    pub fn to_csv(&self, stride: usize) -> CsvTable {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x_{k}")));
        let mut table = CsvTable::new(&header);
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        for (i, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            if i % stride == 0 || i == last {
                let mut row = vec![crate::csvfmt::Cell::F(*t)];
                row.extend(x.iter().map(|&v| crate::csvfmt::Cell::F(v)));
                table.push(row);
            }
        }
        table
    }
}

fn lv_rhs(b: &Matrix, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let bx: f64 = b.row(k).iter().zip(x).map(|(a, v)| a * v).sum();
        *o = x[k] * (1.0 - x[k] + bx);
    }
}

// Dormand-Prince tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `x0 > 0` over `[0, t_end]`, recording every accepted step.
pub fn integrate(
    b: &Matrix,
    x0: &[f64],
    t_end: f64,
    controls: &StepControls,
) -> Result<Trajectory> {
    let n = b.square_dim()?;
    if x0.len() != n {
        return Err(Error::Shape(format!(
            "x0 has length {} but B is {n}x{n}",
            x0.len()
        )));
    }
    if x0.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Precondition(
            "initial abundances must be positive".into(),
        ));
    }
    if !(t_end > 0.0) {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let mut t = 0.0;
    let mut y = x0.to_vec();
    let mut h = controls.initial_step.min(t_end).min(controls.max_step);
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    lv_rhs(b, &y, &mut k[0]);

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y.clone()],
        converged: false,
        final_distance: None,
        rejected_steps: 0,
    };

    for _ in 0..controls.max_steps {
        if t >= t_end {
            return Ok(traj);
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let incr: f64 = (0..s).map(|j| A[s][j] * k[j][i]).sum();
                stage[i] = y[i] + h * incr;
            }
            lv_rhs(b, &stage, &mut k[s]);
        }
        // stage 7 is evaluated at the fifth-order solution
        y_new.copy_from_slice(&stage);
        let mut err = 0.0f64;
        for i in 0..n {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let sc = controls.atol + controls.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        let positive = y_new.iter().all(|&v| v > 0.0 && v.is_finite());
        if positive && err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            if let Some(big) = y.iter().find(|v| v.abs() > BLOW_UP) {
                return Err(Error::Divergence {
                    time: t,
                    reason: format!("abundance reached {big:.3e}"),
                });
            }
            traj.times.push(t);
            traj.states.push(y.clone());
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(controls.max_step);
        } else {
            traj.rejected_steps += 1;
            h *= if positive && err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
            } else {
                0.5
            };
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::Divergence {
                time: t,
                reason: "step size underflow".into(),
            });
        }
    }
    if t >= t_end {
        return Ok(traj);
    }
    Err(Error::Convergence {
        method: "Dormand-Prince",
        iterations: controls.max_steps,
        residual: t_end - t,
    })
}

/// Integrates and then scores convergence against `x_ref` with [`converged_to`].
pub fn integrate_towards(
    b: &Matrix,
    x0: &[f64],
    t_end: f64,
    controls: &StepControls,
    x_ref: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    let mut traj = integrate(b, x0, t_end, controls)?;
    traj.final_distance = Some(sup_distance(traj.last_state(), x_ref));
    traj.converged = converged_to(&traj, x_ref, tol);
    Ok(traj)
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// True when the last state is within `tol` of `x_ref` (sup norm) and the
/// distance does not grow over the last quarter of the time span.
///
/// "Does not grow" means no sample of the window exceeds the distance at the
/// window start by more than `tol / 100`, and the final distance is no larger
/// than the starting one (same slack).
pub fn converged_to(traj: &Trajectory, x_ref: &[f64], tol: f64) -> bool {
    let Some(last) = traj.states.last() else {
        return false;
    };
    if sup_distance(last, x_ref) > tol {
        return false;
    }
    let t_last = *traj.times.last().expect("times match states");
    let t_start = traj.times[0] + 0.75 * (t_last - traj.times[0]);
    let window: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= t_start)
        .map(|(_, x)| sup_distance(x, x_ref))
        .collect();
    let slack = tol * 1e-2;
    let d0 = window[0];
    window.iter().all(|&d| d <= d0 + slack)
}
