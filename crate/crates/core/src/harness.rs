//! Experiment definitions, configuration and parallel trial execution.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]. Trial `t`
//! of experiment `e` draws from `trial_seed(base_seed, e, t)`, trials run on a
//! fixed-size worker pool and results are reduced in trial order, so the CSV
//! output does not depend on the number of workers.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Deserialize;

use crate::cavity::{self, CavityOptions};
use crate::csvfmt::{Cell, CsvTable};
use crate::dynamics::{self, StepControls};
use crate::equilibrium::{self, survivor_stats};
use crate::random_interactions::{
    gamma_map, gamma_map_profile, sample_iid_gaussian, CovarianceProfile, InteractionMatrix,
    ModelParams,
};
use crate::rng::{trial_seed, NormalStream};
use crate::{evt, row, spectral, Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Transition,
    #[serde(alias = "admissible")]
    AdmissibleMap,
    #[serde(alias = "dynamics")]
    DynamicsDemo,
    Cavity,
    CavityVsMc,
    CorrelationImpact,
    Stability,
    Equilibrium,
    Evt,
}

impl Experiment {
    /// Tag mixed into trial seeds.
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Transition => "transition",
            Experiment::AdmissibleMap => "admissible-map",
            Experiment::DynamicsDemo => "dynamics-demo",
            Experiment::Cavity => "cavity",
            Experiment::CavityVsMc => "cavity-vs-mc",
            Experiment::CorrelationImpact => "correlation-impact",
            Experiment::Stability => "stability",
            Experiment::Equilibrium => "equilibrium",
            Experiment::Evt => "evt",
        }
    }
}

/// A parameter grid: a single value, an explicit list, or `points` evenly
/// spaced values from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Value(f64),
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Grid::Value(v) => Ok(vec![*v]),
            Grid::List(v) => Ok(v.clone()),
            Grid::Range {
                start,
                stop,
                points,
            } => linspace(*start, *stop, *points),
        }
    }
}

pub fn linspace(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    match points {
        0 => Err(Error::Config(
            "a grid range needs at least one point".into(),
        )),
        1 => Ok(vec![start]),
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            Ok((0..points)
                .map(|i| {
                    if i == points - 1 {
                        stop
                    } else {
                        start + step * i as f64
                    }
                })
                .collect())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Every pair gets its own correlation drawn once from U[-1, 1].
    Uniform,
}

/// Initial condition family for the dynamics demo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    /// Independent U[0.1, 2] abundances.
    Uniform,
    /// First start is all ones, later starts are uniform.
    Ones,
}

/// Configuration file layout. Every field is optional; missing fields take
/// the experiment's defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub base_seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub rho: Option<Grid>,
    pub alpha: Option<Grid>,
    pub kappa: Option<Grid>,
    pub mu: Option<Grid>,
    pub profile: Option<ProfileKind>,
    pub t_end: Option<f64>,
    pub starts: Option<usize>,
    pub start: Option<StartKind>,
    pub stride: Option<usize>,
}

/// Command-line overrides; set fields win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub base_seed: Option<u64>,
    pub trials: Option<usize>,
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub output_path: Option<PathBuf>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
    pub profile: Option<ProfileKind>,
    pub t_end: f64,
    pub starts: usize,
    pub start: StartKind,
    /// Keep every `stride`-th trajectory sample.
    pub stride: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            n: 500,
            trials: 200,
            base_seed: 0,
            workers: 1,
            output_path: None,
            rho: vec![0.0],
            alpha: vec![2.0],
            kappa: vec![2.0],
            mu: vec![0.0],
            profile: None,
            t_end: dynamics::DEFAULT_HORIZON,
            starts: 2,
            start: StartKind::Uniform,
            stride: 1,
        };
        match experiment {
            Experiment::Spectrum => {
                c.trials = 1;
                c.rho = vec![0.5];
                c.alpha = vec![1.0];
            }
            Experiment::Transition => {
                c.rho = vec![-0.5, 0.0, 0.5];
                c.kappa = linspace(0.5, 2.7, 12).expect("nonempty");
            }
            Experiment::AdmissibleMap => {
                c.rho = linspace(-0.95, 0.95, 39).expect("nonempty");
                c.alpha = linspace(0.5, 5.0, 46).expect("nonempty");
            }
            Experiment::DynamicsDemo => {
                c.n = 10;
                c.trials = 1;
                c.alpha = vec![2.0];
            }
            Experiment::Cavity => {
                c.trials = 1;
                c.rho = vec![0.5];
                c.mu = vec![0.2];
                c.alpha = linspace(2.0, 10.0, 33).expect("nonempty");
            }
            Experiment::CavityVsMc => {
                c.rho = vec![0.5];
                c.mu = vec![0.2];
                c.alpha = linspace(2.2, 10.0, 8).expect("nonempty");
            }
            Experiment::CorrelationImpact => {
                c.trials = 1;
                c.rho = linspace(-0.9, 0.9, 7).expect("nonempty");
                c.alpha = linspace(2.0, 6.0, 21).expect("nonempty");
            }
            Experiment::Stability => {
                c.trials = 20;
                c.rho = vec![-0.5, 0.0, 0.5];
                c.alpha = vec![1.5, 2.0, 3.0];
            }
            Experiment::Equilibrium => {
                c.trials = 20;
                c.rho = vec![0.5];
                c.mu = vec![0.2];
                c.alpha = vec![3.0];
            }
            Experiment::Evt => {
                c.n = 2000;
                c.trials = 500;
                c.rho = vec![0.5];
            }
        }
        c
    }

    /// Defaults for the experiment, then the file, then `overrides`.
    ///
    /// `experiment` (the subcommand) takes precedence over the file's
    /// `experiment` key; if both are absent this is a configuration error.
    pub fn resolve(
        experiment: Option<Experiment>,
        file: &ConfigFile,
        overrides: &Overrides,
    ) -> Result<Self> {
        let experiment = experiment
            .or(file.experiment)
            .ok_or_else(|| Error::Config("no experiment given".into()))?;
        let mut c = Self::defaults(experiment);
        let grid = |g: &Option<Grid>, dst: &mut Vec<f64>| -> Result<()> {
            if let Some(g) = g {
                *dst = g.values()?;
            }
            Ok(())
        };
        grid(&file.rho, &mut c.rho)?;
        grid(&file.alpha, &mut c.alpha)?;
        grid(&file.kappa, &mut c.kappa)?;
        grid(&file.mu, &mut c.mu)?;
        c.n = file.n.unwrap_or(c.n);
        c.trials = overrides.trials.or(file.trials).unwrap_or(c.trials);
        c.base_seed = overrides
            .base_seed
            .or(file.base_seed)
            .unwrap_or(c.base_seed);
        c.workers = overrides.workers.or(file.workers).unwrap_or(c.workers);
        c.output_path = overrides
            .output_path
            .clone()
            .or_else(|| file.output_path.clone());
        c.profile = file.profile.or(c.profile);
        c.t_end = file.t_end.unwrap_or(c.t_end);
        c.starts = file.starts.unwrap_or(c.starts);
        c.start = file.start.unwrap_or(c.start);
        c.stride = file.stride.unwrap_or(c.stride);
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(
        text: &str,
        experiment: Option<Experiment>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        Self::resolve(experiment, &file, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        for (name, grid) in [
            ("rho", &self.rho),
            ("alpha", &self.alpha),
            ("kappa", &self.kappa),
            ("mu", &self.mu),
        ] {
            if grid.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} grid has a non-finite value"));
            }
        }
        if self.rho.iter().any(|r| r.abs() > 1.0) {
            return bad("rho values must lie in [-1, 1]".into());
        }
        if self.alpha.iter().any(|&a| a <= 0.0) {
            return bad("alpha values must be positive".into());
        }
        match self.experiment {
            Experiment::Transition => {
                if self.kappa.iter().any(|&k| !(k > 0.0 && k <= 3.0)) {
                    return bad("kappa values must lie in (0, 3]".into());
                }
                if self.mu.iter().any(|&m| m >= 1.0) {
                    return bad("mu must be below 1".into());
                }
            }
            Experiment::DynamicsDemo => {
                if !(self.t_end > 0.0) {
                    return bad("t_end must be positive".into());
                }
                if self.starts < 1 {
                    return bad("starts must be at least 1".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A finished experiment: the CSV plus diagnostic notes for stderr.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub table: CsvTable,
    pub notes: Vec<String>,
}

impl RunOutput {
    fn bare(table: CsvTable) -> Self {
        Self {
            table,
            notes: Vec::new(),
        }
    }
}

/// Maps `f` over `0..count` on `workers` threads, in index order.
pub fn par_map<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tag = cfg.experiment.tag();
    let out = match cfg.experiment {
        Experiment::Spectrum => run_spectrum(cfg),
        Experiment::Transition => run_transition(cfg),
        Experiment::AdmissibleMap => run_admissible_map(cfg).map(RunOutput::bare),
        Experiment::DynamicsDemo => run_dynamics_demo(cfg),
        Experiment::Cavity | Experiment::CorrelationImpact => run_cavity_grid(cfg),
        Experiment::CavityVsMc => run_cavity_vs_mc(cfg),
        Experiment::Stability => run_stability(cfg),
        Experiment::Equilibrium => run_equilibrium(cfg),
        Experiment::Evt => run_evt(cfg),
    };
    out.map_err(|e| e.context(format!("experiment {tag}")))
}

fn build_b(a: Matrix, params: ModelParams, seed: u64) -> Result<InteractionMatrix> {
    InteractionMatrix::assemble(a, params, seed)
}

/// Feasibility transition over a `kappa` grid with `alpha = kappa sqrt(ln n)`.
///
/// Each trial draws one i.i.d. matrix and reuses it for every `rho` and
/// `kappa`. With `profile = "uniform"` an extra curve uses a correlation
/// profile drawn once from `trial_seed(base_seed, "profile", 0)`.
pub fn run_transition(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n;
    let profile = cfg.profile.map(|ProfileKind::Uniform| {
        CovarianceProfile::uniform(n, trial_seed(cfg.base_seed, "profile", 0))
    });
    // (rho, profile) curves
    let mut curves: Vec<(f64, bool)> = cfg.rho.iter().map(|&r| (r, false)).collect();
    if profile.is_some() {
        curves.push((f64::NAN, true));
    }
    let cells: Vec<(usize, f64, f64)> = curves
        .iter()
        .enumerate()
        .flat_map(|(c, _)| {
            cfg.kappa
                .iter()
                .flat_map(|&k| cfg.mu.iter().map(move |&m| (c, k, m)))
                .collect::<Vec<_>>()
        })
        .collect();
    let per_trial = par_map(cfg.workers, cfg.trials, |t| -> Result<Vec<bool>> {
        let seed = trial_seed(cfg.base_seed, "transition", t as u64);
        let x = sample_iid_gaussian(n, seed);
        let mut a_cache: Vec<Option<Matrix>> = vec![None; curves.len()];
        let mut out = Vec::with_capacity(cells.len());
        for &(c, kappa, mu) in &cells {
            if a_cache[c].is_none() {
                let (rho, is_profile) = curves[c];
                a_cache[c] = Some(if is_profile {
                    gamma_map_profile(&x, profile.as_ref().expect("profile curve"))?
                } else {
                    gamma_map(&x, rho)?
                });
            }
            let a = a_cache[c].clone().expect("filled above");
            let rho = if curves[c].1 { 0.0 } else { curves[c].0 };
            let params = ModelParams::with_kappa(n, rho, mu, kappa)?;
            let im = build_b(a, params, seed)?;
            let feasible = match equilibrium::solve_feasible(&im.b) {
                Ok(sol) => sol.feasible,
                Err(Error::Singular { .. }) => false,
                Err(e) => return Err(e),
            };
            out.push(feasible);
        }
        Ok(out)
    })?;
    let mut counts = vec![0usize; cells.len()];
    for trial in per_trial {
        for (c, f) in counts.iter_mut().zip(trial?) {
            *c += usize::from(f);
        }
    }
    let mut table = CsvTable::new(&[
        "rho",
        "kappa",
        "n",
        "trials",
        "feasible_fraction",
        "base_seed",
        "mu",
        "profile",
    ]);
    for (&(c, kappa, mu), &count) in cells.iter().zip(&counts) {
        let (rho, is_profile) = curves[c];
        table.push(row![
            rho,
            kappa,
            n,
            cfg.trials,
            count as f64 / cfg.trials as f64,
            cfg.base_seed,
            mu,
            if is_profile { "uniform" } else { "none" }
        ]);
    }
    Ok(RunOutput::bare(table))
}

/// Largest admissible `mu` on a `(rho, alpha)` grid; `-inf` where no `mu`
/// is admissible.
pub fn run_admissible_map(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["rho", "alpha", "mu_max", "admissible_any"]);
    for &rho in &cfg.rho {
        for &alpha in &cfg.alpha {
            let mu_max = spectral::admissible_mu_max(rho, alpha);
            table.push(row![
                rho,
                alpha,
                mu_max.unwrap_or(f64::NEG_INFINITY),
                mu_max.is_some()
            ]);
        }
    }
    Ok(table)
}

/// Cavity predictions against Monte-Carlo averages of saturated equilibria.
///
/// Trials whose `2I - (B + B^T)` is not positive definite are skipped and
/// reported in the `warning` column; grid points outside the admissible set
/// get no Monte-Carlo estimate.
pub fn run_cavity_vs_mc(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n;
    let mut table = CsvTable::new(&[
        "alpha",
        "phi_theory",
        "phi_mc",
        "mean_theory",
        "mean_mc",
        "q_theory",
        "q_mc",
        "n",
        "trials",
        "rho",
        "mu",
        "base_seed",
        "warning",
    ]);
    let mut notes = Vec::new();
    let opts = CavityOptions::default();
    for &rho in &cfg.rho {
        for &mu in &cfg.mu {
            let theory = cavity::solve_cavity_curve(rho, mu, &cfg.alpha, &opts);
            let inside: Vec<bool> = cfg
                .alpha
                .iter()
                .map(|&a| spectral::is_admissible(rho, a, mu))
                .collect();
            let per_trial = par_map(cfg.workers, cfg.trials, |t| -> Result<Vec<Option<_>>> {
                let seed = trial_seed(cfg.base_seed, "cavity-vs-mc", t as u64);
                let a = gamma_map(&sample_iid_gaussian(n, seed), rho)?;
                let mut out = Vec::with_capacity(cfg.alpha.len());
                for (&alpha, &ok) in cfg.alpha.iter().zip(&inside) {
                    if !ok {
                        out.push(None);
                        continue;
                    }
                    let params = ModelParams::new(n, rho, mu, alpha)?;
                    let im = build_b(a.clone(), params, seed)?;
                    match equilibrium::solve_lcp(&im.b) {
                        Ok(sol) => out.push(Some(sol.stats)),
                        Err(Error::Precondition(_)) => out.push(None),
                        Err(e) => {
                            return Err(e.context(format!("trial {t} seed {seed} alpha {alpha}")))
                        }
                    }
                }
                Ok(out)
            })?;
            let per_trial: Vec<Vec<_>> = per_trial.into_iter().collect::<Result<_>>()?;
            for (i, &alpha) in cfg.alpha.iter().enumerate() {
                let (mut sum_phi, mut sum_m, mut sum_q, mut used) = (0.0, 0.0, 0.0, 0usize);
                for trial in &per_trial {
                    if let Some(s) = trial[i] {
                        sum_phi += s.phi;
                        sum_m += s.mean_x;
                        sum_q += s.mean_x2;
                        used += 1;
                    }
                }
                let mut warnings = Vec::new();
                if !inside[i] {
                    warnings.push("outside admissible set".to_string());
                } else if used < cfg.trials {
                    warnings.push(format!(
                        "{} trials not positive definite",
                        cfg.trials - used
                    ));
                }
                let th = match &theory[i] {
                    Ok(sol) => sol.state,
                    Err(e) => {
                        warnings.push(format!("cavity: {e}"));
                        notes.push(format!(
                            "rho {rho} mu {mu} alpha {alpha}: cavity failed: {e}"
                        ));
                        cavity::CavityState {
                            phi: f64::NAN,
                            m: f64::NAN,
                            q: f64::NAN,
                            v: f64::NAN,
                        }
                    }
                };
                let avg = |s: f64| if used > 0 { s / used as f64 } else { f64::NAN };
                table.push(row![
                    alpha,
                    th.phi,
                    avg(sum_phi),
                    th.m,
                    avg(sum_m),
                    th.q,
                    avg(sum_q),
                    n,
                    used,
                    rho,
                    mu,
                    cfg.base_seed,
                    warnings.join("; ")
                ]);
            }
        }
    }
    Ok(RunOutput { table, notes })
}

/// Non-Hermitian spectrum of one sampled `B`.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut table = CsvTable::new(&["re", "im", "n", "rho", "alpha", "mu", "seed"]);
    let (rho, alpha, mu) = (cfg.rho[0], cfg.alpha[0], cfg.mu[0]);
    let params = ModelParams::new(cfg.n, rho, mu, alpha)?;
    let spectra = par_map(cfg.workers, cfg.trials, |t| {
        let seed = trial_seed(cfg.base_seed, "spectrum", t as u64);
        let im = crate::random_interactions::sample_interaction(&params, seed)?;
        Ok::<_, Error>((seed, spectral::empirical_spectrum(&im.b)?))
    })?;
    let mut notes = Vec::new();
    for s in spectra {
        let (seed, eigs) = s?;
        // inside the support scaled back to A / sqrt(n)
        let scaled: Vec<_> = eigs.iter().map(|z| *z * alpha).collect();
        if mu == 0.0 {
            notes.push(format!(
                "seed {seed}: fraction inside 1.05-inflated ellipse {:.4}",
                spectral::fraction_inside_ellipse(&scaled, rho, 1.05)
            ));
        }
        for z in eigs {
            table.push(row![z.re, z.im, cfg.n, rho, alpha, mu, seed]);
        }
    }
    Ok(RunOutput { table, notes })
}

fn initial_condition(cfg: &ExperimentConfig, k: usize) -> Vec<f64> {
    if cfg.start == StartKind::Ones && k == 0 {
        return vec![1.0; cfg.n];
    }
    let mut s = NormalStream::new(trial_seed(cfg.base_seed, "dynamics-start", k as u64));
    (0..cfg.n).map(|_| s.uniform_in(0.1, 2.0)).collect()
}

/// Trajectories of one sampled system from `starts` initial conditions,
/// compared with the saturated equilibrium when it is unique.
pub fn run_dynamics_demo(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (rho, alpha, mu) = (cfg.rho[0], cfg.alpha[0], cfg.mu[0]);
    let params = ModelParams::new(cfg.n, rho, mu, alpha)?;
    let seed = trial_seed(cfg.base_seed, "dynamics-demo", 0);
    let im = crate::random_interactions::sample_interaction(&params, seed)?;
    let reference = match equilibrium::solve_lcp(&im.b) {
        Ok(sol) => Some(sol),
        Err(Error::Precondition(_)) => None,
        Err(e) => return Err(e),
    };
    let controls = StepControls::default();
    let trajectories = par_map(cfg.workers, cfg.starts, |k| {
        let x0 = initial_condition(cfg, k);
        match &reference {
            Some(r) => dynamics::integrate_towards(&im.b, &x0, cfg.t_end, &controls, &r.x, 1e-6),
            None => dynamics::integrate(&im.b, &x0, cfg.t_end, &controls),
        }
    })?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=cfg.n).map(|k| format!("x_{k}")));
    header.extend(["start", "seed"].map(String::from));
    let mut table = CsvTable::new(&header);
    let mut notes = Vec::new();
    for (k, traj) in trajectories.into_iter().enumerate() {
        let traj = traj.map_err(|e| e.context(format!("start {k}")))?;
        let sub = traj.to_csv(cfg.stride);
        for r in sub.rows() {
            let mut cells: Vec<Cell> = r.iter().map(|s| Cell::S(s.clone())).collect();
            cells.push(Cell::U(k as u64));
            cells.push(Cell::U(seed));
            table.push(cells);
        }
        if let (Some(r), Some(d)) = (&reference, traj.final_distance) {
            notes.push(format!(
                "start {k}: distance to complementarity solution {d:.3e} at t = {} ({}), survivors {}/{}",
                cfg.t_end,
                if traj.converged { "converged" } else { "not converged" },
                r.x.iter().filter(|&&v| v > equilibrium::DEFAULT_SURVIVOR_THRESHOLD).count(),
                cfg.n
            ));
        }
    }
    if reference.is_none() {
        notes.push("2I - (B + B^T) is not positive definite; no reference equilibrium".into());
    }
    Ok(RunOutput { table, notes })
}

/// Cavity solutions over `rho x mu` curves in `alpha`, with continuation
/// along each curve. A point without a fixed point fails the run.
pub fn run_cavity_grid(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let curves: Vec<(f64, f64)> = cfg
        .rho
        .iter()
        .flat_map(|&r| cfg.mu.iter().map(move |&m| (r, m)))
        .collect();
    let opts = CavityOptions::default();
    let solved = par_map(cfg.workers, curves.len(), |c| {
        let (rho, mu) = curves[c];
        let sols = cavity::solve_cavity_curve(rho, mu, &cfg.alpha, &opts);
        let spreads: Vec<Option<f64>> = cfg
            .alpha
            .iter()
            .map(|&a| cavity::multi_start_spread(rho, a, mu, &opts).ok())
            .collect();
        (sols, spreads)
    })?;
    let mut table = cavity::cavity_table();
    let mut notes = Vec::new();
    for (&(rho, mu), (sols, spreads)) in curves.iter().zip(solved) {
        for ((&alpha, sol), spread) in cfg.alpha.iter().zip(sols).zip(spreads) {
            let sol = sol.map_err(|e| e.context(format!("rho {rho} mu {mu} alpha {alpha}")))?;
            cavity::push_cavity_row(&mut table, rho, alpha, mu, &sol);
            if let Some(d) = spread.filter(|&d| d > 1e-6) {
                notes.push(format!(
                    "rho {rho} mu {mu} alpha {alpha}: starts disagree by {d:.3e}; fixed point may not be unique"
                ));
            }
        }
    }
    Ok(RunOutput { table, notes })
}

fn param_cells(cfg: &ExperimentConfig) -> Vec<(f64, f64, f64)> {
    let mut cells = Vec::new();
    for &rho in &cfg.rho {
        for &alpha in &cfg.alpha {
            for &mu in &cfg.mu {
                cells.push((rho, alpha, mu));
            }
        }
    }
    cells
}

/// Positive-definiteness verdicts against the asymptotic prediction.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cells = param_cells(cfg);
    let results = par_map(cfg.workers, cfg.trials * cells.len(), |job| {
        let (t, c) = (job / cells.len(), job % cells.len());
        let (rho, alpha, mu) = cells[c];
        let seed = trial_seed(cfg.base_seed, "stability", t as u64);
        let params = ModelParams::new(cfg.n, rho, mu, alpha)?;
        let im = crate::random_interactions::sample_interaction(&params, seed)?;
        Ok::<_, Error>((seed, spectral::check_instance_stability(&im)?))
    })?;
    let mut header: Vec<&str> = vec!["seed", "n"];
    header.extend(spectral::VERDICT_HEADER);
    let mut table = CsvTable::new(&header);
    for (job, r) in results.into_iter().enumerate() {
        let (seed, v) = r?;
        let (rho, alpha, mu) = cells[job % cells.len()];
        table.push(row![
            seed,
            cfg.n,
            rho,
            alpha,
            mu,
            v.lambda_max_sym,
            v.predicted_edge.unwrap_or(f64::NAN),
            v.is_admissible.unwrap_or(false),
            v.is_pd
        ]);
    }
    Ok(RunOutput::bare(table))
}

/// Saturated equilibria of sampled systems.
pub fn run_equilibrium(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cells = param_cells(cfg);
    let results = par_map(cfg.workers, cfg.trials * cells.len(), |job| {
        let (t, c) = (job / cells.len(), job % cells.len());
        let (rho, alpha, mu) = cells[c];
        let seed = trial_seed(cfg.base_seed, "equilibrium", t as u64);
        let params = ModelParams::new(cfg.n, rho, mu, alpha)?;
        let im = crate::random_interactions::sample_interaction(&params, seed)?;
        match equilibrium::solve_lcp(&im.b) {
            Ok(sol) => Ok(Some((seed, sol))),
            Err(Error::Precondition(_)) => Ok(None),
            Err(e) => Err(e.context(format!("seed {seed}"))),
        }
    })?;
    let mut table = equilibrium::equilibrium_table();
    let mut skipped = 0;
    for (job, r) in results.into_iter().enumerate() {
        let (rho, alpha, mu) = cells[job % cells.len()];
        let Some((seed, sol)) = r? else {
            skipped += 1;
            continue;
        };
        let stats = survivor_stats(&sol.x);
        table.push(row![
            seed,
            cfg.n,
            rho,
            mu,
            alpha,
            sol.feasible,
            stats.phi,
            stats.mean_x,
            stats.mean_x2,
            sol.lin_residual,
            sol.lcp_residual
        ]);
    }
    let notes = if skipped > 0 {
        vec![format!(
            "{skipped} instances skipped: 2I - (B + B^T) not positive definite"
        )]
    } else {
        Vec::new()
    };
    Ok(RunOutput { table, notes })
}

/// Normalized extremes of row sums of `A / sqrt(n)`, one row per trial.
pub fn run_evt(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rho = cfg.rho[0];
    let stats = par_map(cfg.workers, cfg.trials, |t| {
        let seed = trial_seed(cfg.base_seed, "evt", t as u64);
        let a = gamma_map(&sample_iid_gaussian(cfg.n, seed), rho)?;
        evt::extreme_statistics(&a)
    })?;
    let mut table = evt::evt_table();
    let mut maxima = Vec::with_capacity(cfg.trials);
    for (t, s) in stats.into_iter().enumerate() {
        let (mx, mn) = s?;
        maxima.push(mx);
        table.push(row![t, mx, mn]);
    }
    let ks = evt::ks_distance(&maxima, evt::gumbel_cdf)?;
    Ok(RunOutput {
        table,
        notes: vec![format!(
            "KS distance of the max statistic to Gumbel: {ks:.4}"
        )],
    })
}
