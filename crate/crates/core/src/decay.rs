//! Decay experiments: initial data with prescribed low-frequency profiles,
//! norm time series, rate fits and small-data audits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, chemin_lerner_norm, BesovParams, Exponent, TimeExponent};
use crate::error::{Error, Result};
use crate::littlewood_paley::{BlockTables, DyadicCutoffs};
use crate::solver::{evolve_linear, evolve_nonlinear_partial, Abort, SnapshotSchedule, Trajectory};
use crate::spectral::{forward_transform, fractional_derivative, inverse_transform, GridSpec, RealField, SpectralField};
use crate::stats::{linear_fit, spread};
use crate::systems::{check_structure, default_xi_grid, resolve_model, SystemSpec};

/// Fraction of the spectral-gap time scale kept as the validity horizon.
pub const HORIZON_FRACTION: f64 = 0.1;

/// Derivative orders sampled for the time-weighted functional.
pub const ELL_SAMPLES: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataKind {
    /// `|xi|^{s - 1/2} e^{-(xi/xi_c)^2}` with random phases, mean zero.
    BesovTail { s: f64 },
    /// Physical Gaussian of width `1/xi_c` (nonzero mean).
    GaussianL1,
    /// Random phases times `(1 - chi(xi/2)) e^{-(xi/xi_c)^2}`: blocks `j >= 1` only.
    HighFreqOnly,
    /// One Fourier mode nearest to `xi`.
    SingleTone { xi: f64 },
    /// Physical samples from a binary field container.
    Custom { path: PathBuf },
}

impl DataKind {
    /// Low-frequency index `s` with data in `dot B^{-s}_{2,inf}`, when known.
    pub fn decay_index(&self) -> Option<f64> {
        match self {
            DataKind::BesovTail { s } => Some(*s),
            DataKind::GaussianL1 => Some(0.5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Random,
    /// Random unit vector orthogonal to the equilibrium subspace.
    RandomInMPerp,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    #[serde(flatten)]
    pub kind: DataKind,
    /// Target sup norm of the physical field.
    pub amplitude: f64,
    pub direction: Direction,
    pub seed: u64,
    pub spectral_cutoff: f64,
}

impl InitialDataSpec {
    pub fn new(kind: DataKind, amplitude: f64, seed: u64) -> Self {
        Self {
            kind,
            amplitude,
            direction: Direction::Random,
            seed,
            spectral_cutoff: 1.0,
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self { amplitude, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn unit_direction(spec: &SystemSpec, dir: &Direction, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = spec.dim_state();
    let v: Vec<f64> = match dir {
        Direction::Fixed(v) => {
            if v.len() != n {
                return Err(Error::InvalidInput(format!("direction has {} entries, system has {n}", v.len())));
            }
            v.clone()
        }
        Direction::Random => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        Direction::RandomInMPerp => {
            let raw = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let p = spec.equilibrium_projector();
            (&raw - &p * &raw).iter().cloned().collect()
        }
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::InvalidInput("direction must be a nonzero finite vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Builds the initial datum on `grid` (components taken from the system) and
/// scales it to the requested sup norm.
pub fn synthesize_initial_data(spec: &SystemSpec, grid: &GridSpec, data: &InitialDataSpec) -> Result<SpectralField> {
    let grid = grid.with_components(spec.dim_state())?;
    if !(data.amplitude > 0.0) || !data.amplitude.is_finite() {
        return Err(Error::InvalidInput(format!("amplitude must be positive, got {}", data.amplitude)));
    }
    let xc = data.spectral_cutoff;
    if !(xc >= 8.0 * grid.xi_min() && xc <= grid.xi_nyquist() / 4.0) {
        return Err(Error::InvalidInput(format!(
            "spectral cutoff {xc} not resolved: need {} <= xi_c <= {}",
            8.0 * grid.xi_min(),
            grid.xi_nyquist() / 4.0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(data.seed);
    let dir = unit_direction(spec, &data.direction, &mut rng)?;
    let cut = DyadicCutoffs::default();
    let n = grid.num_points();
    let nc = spec.dim_state();
    let random_profile = |rng: &mut ChaCha8Rng, amp: &dyn Fn(f64) -> f64| {
        let mut f = SpectralField::zeros(grid);
        for i in 1..=n / 2 {
            let xi = grid.xi(i);
            let a = amp(xi);
            let phase = if i == n / 2 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
            };
            for c in 0..nc {
                f.mode_mut(i)[c] = phase * a * dir[c];
            }
            if i != n / 2 {
                let p = grid.partner(i);
                for c in 0..nc {
                    f.mode_mut(p)[c] = (phase * a * dir[c]).conj();
                }
            }
        }
        f
    };
    let f = match &data.kind {
        DataKind::BesovTail { s } => {
            if !(*s > 0.0 && *s <= 0.5) {
                return Err(Error::InvalidInput(format!("besov tail index must lie in (0, 1/2], got {s}")));
            }
            let s = *s;
            random_profile(&mut rng, &|xi: f64| xi.abs().powf(s - 0.5) * (-(xi / xc).powi(2)).exp())
        }
        DataKind::HighFreqOnly => random_profile(&mut rng, &|xi: f64| {
            (1.0 - cut.chi(xi / 2.0)) * (-(xi / xc).powi(2)).exp()
        }),
        DataKind::GaussianL1 => crate::sampling::gaussian(&grid, grid.box_length() / 2.0, 1.0 / xc, &dir),
        DataKind::SingleTone { xi } => {
            let k = (xi * grid.box_length() / std::f64::consts::TAU).round() as i64;
            if k <= 0 || k as usize >= n / 2 {
                return Err(Error::InvalidInput(format!("tone frequency {xi} not resolved")));
            }
            let mut f = SpectralField::zeros(grid);
            let i = grid.index_of(k);
            let p = grid.partner(i);
            for c in 0..nc {
                f.mode_mut(i)[c] = Complex64::new(dir[c], 0.0);
                f.mode_mut(p)[c] = Complex64::new(dir[c], 0.0);
            }
            f
        }
        DataKind::Custom { path } => {
            let real = RealField::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))?;
            if *real.grid() != grid {
                return Err(Error::InvalidInput(format!(
                    "custom field grid {:?} differs from experiment grid {:?}",
                    real.grid(),
                    grid
                )));
            }
            forward_transform(&real)
        }
    };
    let sup = inverse_transform(&f)?.sup_norm();
    if !(sup > 0.0) {
        return Err(Error::InvalidInput("synthesized datum vanishes on the grid".into()));
    }
    Ok(f.scale(data.amplitude / sup))
}

/// `beta / (c xi_min^2)`; `None` when `c = 0` (no decay, no horizon).
pub fn torus_validity_horizon(grid: &GridSpec, c: f64) -> Option<f64> {
    if !(c > 0.0) {
        return None;
    }
    Some(HORIZON_FRACTION / (c * grid.xi_min().powi(2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// `||Lambda^ell z||_{L^2}`.
    L2,
    /// `||z||_{dot B^ell_{2,1}}`.
    BesovB21,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedNorm {
    pub ell: f64,
    pub kind: NormKind,
}

impl TrackedNorm {
    pub fn l2(ell: f64) -> Self {
        Self { ell, kind: NormKind::L2 }
    }

    pub fn label(&self) -> String {
        match self.kind {
            NormKind::L2 => format!("lambda{}_l2", self.ell),
            NormKind::BesovB21 => format!("b{}_21", self.ell),
        }
    }

    /// Norm of the mean-free part of `z` (the mean is a conserved torus mode).
    pub fn evaluate(&self, z: &SpectralField, tables: &BlockTables) -> Result<f64> {
        let mut z = z.clone();
        z.mode_mut(0).fill(Complex64::new(0.0, 0.0));
        let z = &z;
        match self.kind {
            NormKind::L2 => Ok(if self.ell == 0.0 {
                z.l2_norm()
            } else {
                fractional_derivative(z, self.ell)?.l2_norm()
            }),
            NormKind::BesovB21 => Ok(besov_norm(z, &BesovParams::homogeneous(self.ell, 2.0, 1.0)?, tables)?.value),
        }
    }
}

/// Geometric sample times `t_min * q^k` ending at `t_max`, preceded by `0`.
pub fn geometric_times(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || count < 2 {
        return Err(Error::InvalidInput(format!("bad geometric sequence ({t_min}, {t_max}, {count})")));
    }
    let q = (t_max / t_min).powf(1.0 / (count - 1) as f64);
    let mut v = vec![0.0];
    v.extend((0..count).map(|k| if k == count - 1 { t_max } else { t_min * q.powi(k as i32) }));
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct DecayExperiment {
    pub system: SystemSpec,
    pub grid: GridSpec,
    pub data: InitialDataSpec,
    pub sample_times: Vec<f64>,
    pub tracked_norms: Vec<TrackedNorm>,
    pub fit_window: (f64, f64),
    pub linear_only: bool,
    /// Step size of nonlinear runs.
    pub dt: f64,
    /// Allowed `|fitted - theoretical|`.
    pub tolerance: f64,
}

/// Serializable form of a [`DecayExperiment`] (model by name or descriptor path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub num_points: usize,
    pub box_length: f64,
    pub data: InitialDataSpec,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    pub tracked: Vec<TrackedNorm>,
    pub fit_window: (f64, f64),
    #[serde(default)]
    pub linear_only: bool,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_dt() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn build(&self) -> Result<DecayExperiment> {
        let system = resolve_model(&self.model)?;
        let grid = GridSpec::new(self.num_points, self.box_length, system.dim_state())?;
        Ok(DecayExperiment {
            system,
            grid,
            data: self.data.clone(),
            sample_times: geometric_times(self.t_min, self.t_max, self.samples)?,
            tracked_norms: self.tracked.clone(),
            fit_window: self.fit_window,
            linear_only: self.linear_only,
            dt: self.dt,
            tolerance: self.tolerance,
        })
    }
}

/// Log-log rate fit with a log-linear comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// Slope of `log(value)` against `t`.
    pub exponential_rate: f64,
    pub exponential_r_squared: f64,
    /// False when the series is better described by exponential decay.
    pub algebraic: bool,
}

/// Least-squares slope of `log(value)` against `log(1 + t)` over the window.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .cloned()
        .filter(|(t, _)| *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12)
        .collect();
    if pts.len() < 8 {
        return Err(Error::InvalidInput(format!("rate fit needs >= 8 samples in window, got {}", pts.len())));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-positive value {v} at t = {t}")));
    }
    let ly: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let lx: Vec<f64> = pts.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let tx: Vec<f64> = pts.iter().map(|(t, _)| *t).collect();
    let alg = linear_fit(&lx, &ly).ok_or_else(|| Error::InvalidInput("degenerate fit window".into()))?;
    let exp = linear_fit(&tx, &ly).ok_or_else(|| Error::InvalidInput("degenerate fit window".into()))?;
    let algebraic = !(exp.r_squared >= 0.99 && exp.r_squared > alg.r_squared);
    Ok(RateFit {
        slope: alg.slope,
        stderr: alg.stderr,
        r_squared: alg.r_squared,
        samples: pts.len(),
        exponential_rate: exp.slope,
        exponential_r_squared: exp.r_squared,
        algebraic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub norm: TrackedNorm,
    pub values: Vec<f64>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub theoretical: Option<f64>,
    pub residual: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub system: String,
    pub grid: GridSpec,
    pub data: InitialDataSpec,
    pub linear_only: bool,
    pub dt: f64,
    pub fit_window: (f64, f64),
    pub tolerance: f64,
    pub dissipation_constant: f64,
    pub horizon: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub series: Vec<NormSeries>,
    /// `sup_{tau <= t} ||z||_{B^{3/2}_{2,1}}` at each sample.
    pub energy_e0: Vec<f64>,
    /// Time-weighted functional at each sample (empty without a decay index).
    pub energy_e1: Vec<f64>,
    /// `E_0 = ||z0||_{B^{3/2}_{2,1}} + ||z0||_{dot B^{-s}_{2,inf}}`.
    pub data_norm: Option<f64>,
    /// `sup_t E_1(t) / E_0(0)`.
    pub e1_over_e0: Option<f64>,
    pub abort: Option<Abort>,
    pub meta: RunMetadata,
    pub pass: bool,
}

impl DecayReport {
    pub fn series_for(&self, norm: TrackedNorm) -> Option<&NormSeries> {
        self.series.iter().find(|s| s.norm == norm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `t` and one per tracked norm.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for s in &self.series {
            header.push(',');
            header.push_str(&s.norm.label());
        }
        writeln!(w, "{header}")?;
        for (k, t) in self.times.iter().enumerate() {
            write!(w, "{t:.17e}")?;
            for s in &self.series {
                write!(w, ",{:.17e}", s.values[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn b3221() -> BesovParams {
    BesovParams {
        s: 1.5,
        p: Exponent::Finite(2.0),
        r: Exponent::Finite(1.0),
        homogeneous: false,
    }
}

/// Running `E_0(t)` and `E_1(t)` over trajectory samples.
pub fn energy_functionals(traj: &Trajectory, s: Option<f64>, tables: &BlockTables) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut e0 = Vec::with_capacity(traj.len());
    let mut e1 = Vec::new();
    let mut run0: f64 = 0.0;
    let mut run_l2: f64 = 0.0;
    let mut run_b = [0.0f64; ELL_SAMPLES.len()];
    for (t, z) in traj.times.iter().zip(&traj.snapshots) {
        run0 = run0.max(besov_norm(z, &b3221(), tables)?.value);
        e0.push(run0);
        if let Some(s) = s {
            run_l2 = run_l2.max((1.0 + t).powf(s / 2.0) * z.l2_norm());
            for (k, &ell) in ELL_SAMPLES.iter().enumerate().skip(1) {
                let b = besov_norm(z, &BesovParams::homogeneous(ell, 2.0, 1.0)?, tables)?.value;
                run_b[k] = run_b[k].max((1.0 + t).powf((s + ell) / 2.0) * b);
            }
            e1.push(run_l2 + run_b.iter().cloned().fold(0.0, f64::max));
        }
    }
    Ok((e0, e1))
}

/// `||z0||_{B^{3/2}_{2,1}} + ||z0||_{dot B^{-s}_{2,inf}}`.
pub fn data_norm(z0: &SpectralField, s: f64, tables: &BlockTables) -> Result<f64> {
    let neg = BesovParams {
        s: -s,
        p: Exponent::Finite(2.0),
        r: Exponent::Infinite,
        homogeneous: true,
    };
    Ok(besov_norm(z0, &b3221(), tables)?.value + besov_norm(z0, &neg, tables)?.value)
}

/// Evolves the datum, tracks the requested norms and fits their rates.
pub fn run_experiment(exp: &DecayExperiment) -> Result<DecayReport> {
    let spec = if exp.linear_only { exp.system.linearized() } else { exp.system.clone() };
    let structure = check_structure(&exp.system, &default_xi_grid());
    if !structure.pass {
        return Err(Error::Constraint(format!("system {} fails the structure checks", exp.system.name())));
    }
    let c = structure.dissipation_constant;
    let horizon = torus_validity_horizon(&exp.grid, c);
    let (lo, hi) = exp.fit_window;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!("bad fit window ({lo}, {hi})")));
    }
    if let Some(h) = horizon {
        if hi > h {
            return Err(Error::Constraint(format!("fit window ends at {hi}, beyond the validity horizon {h:.4e}")));
        }
    }
    for n in &exp.tracked_norms {
        if !(0.0..=0.5).contains(&n.ell) {
            return Err(Error::InvalidInput(format!("tracked derivative order {} outside [0, 1/2]", n.ell)));
        }
    }
    let mut notes = Vec::new();
    if let (Some(h), DataKind::BesovTail { .. } | DataKind::GaussianL1) = (horizon, &exp.data.kind) {
        if hi > h / 10.0 {
            notes.push(format!("fit window end {hi} exceeds horizon/10 = {:.4e}", h / 10.0));
        }
    }
    let s_index = exp.data.kind.decay_index();
    if !exp.linear_only {
        if let DataKind::BesovTail { s } = exp.data.kind {
            if s <= 0.25 {
                return Err(Error::InvalidInput(format!("nonlinear runs need s in (1/4, 1/2], got {s}")));
            }
        }
    }
    let z0 = synthesize_initial_data(&exp.system, &exp.grid, &exp.data)?;
    let grid = *z0.grid();
    let tables = BlockTables::new(grid, DyadicCutoffs::default());
    let (traj, abort) = if exp.linear_only {
        (evolve_linear(&spec, &z0, &exp.sample_times)?, None)
    } else {
        let t_final = exp.sample_times.iter().cloned().fold(0.0, f64::max);
        let at: Vec<f64> = exp.sample_times.iter().cloned().filter(|t| *t > 0.0).collect();
        evolve_nonlinear_partial(&spec, &z0, t_final, exp.dt, &SnapshotSchedule::At(at))?
    };
    if let Some(a) = &abort {
        notes.push(format!("aborted at t = {}: {}", a.time, a.reason));
    }
    let mut series = Vec::with_capacity(exp.tracked_norms.len());
    for norm in &exp.tracked_norms {
        let values = traj
            .snapshots
            .par_iter()
            .map(|z| norm.evaluate(z, &tables))
            .collect::<Result<Vec<f64>>>()?;
        let pts: Vec<(f64, f64)> = traj.times.iter().cloned().zip(values.iter().cloned()).collect();
        let (fit, fit_error) = match fit_rate(&pts, exp.fit_window) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let theoretical = s_index.map(|s| -(s + norm.ell) / 2.0);
        let residual = match (fit, theoretical) {
            (Some(f), Some(th)) => Some(f.slope - th),
            _ => None,
        };
        let pass = abort.is_none()
            && match (&exp.data.kind, fit, residual) {
                (DataKind::HighFreqOnly, Some(f), _) => !f.algebraic,
                (_, Some(f), Some(r)) => f.algebraic && r.abs() <= exp.tolerance,
                _ => false,
            };
        series.push(NormSeries {
            norm: *norm,
            values,
            fit,
            fit_error,
            theoretical,
            residual,
            pass,
        });
    }
    let (energy_e0, energy_e1) = energy_functionals(&traj, s_index, &tables)?;
    let data_norm = s_index.map(|s| data_norm(&z0, s, &tables)).transpose()?;
    let e1_over_e0 = if energy_e1.is_empty() || energy_e0.is_empty() {
        None
    } else {
        Some(energy_e1.last().unwrap() / energy_e0[0])
    };
    let pass = abort.is_none() && !series.is_empty() && series.iter().all(|s| s.pass);
    Ok(DecayReport {
        times: traj.times.clone(),
        series,
        energy_e0,
        energy_e1,
        data_norm,
        e1_over_e0,
        abort,
        meta: RunMetadata {
            system: exp.system.name().to_string(),
            grid,
            data: exp.data.clone(),
            linear_only: exp.linear_only,
            dt: if exp.linear_only { 0.0 } else { traj.meta.dt },
            fit_window: exp.fit_window,
            tolerance: exp.tolerance,
            dissipation_constant: c,
            horizon,
            notes,
        },
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub amplitude: f64,
    /// `sup_t E_1(t)`.
    pub sup_e1: f64,
    pub data_norm: f64,
    pub ratio: f64,
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallDataAudit {
    pub system: String,
    pub runs: Vec<AuditRun>,
    pub spread: f64,
    pub monotone: bool,
    pub pass: bool,
}

/// `sup_t E_1 / E_0` at each amplitude of the base experiment's datum.
/// Passes when no run aborts, ratios lie within a factor 2 of each other and
/// do not grow by more than 20% as the amplitude decreases.
pub fn proposition_4_1_audit(base: &DecayExperiment, amplitudes: &[f64]) -> Result<SmallDataAudit> {
    if amplitudes.is_empty() || amplitudes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("amplitudes must be a decreasing list".into()));
    }
    let s = base
        .data
        .kind
        .decay_index()
        .ok_or_else(|| Error::InvalidInput("audit data needs a low-frequency index".into()))?;
    let runs = amplitudes
        .par_iter()
        .map(|&a| {
            let exp = DecayExperiment {
                data: base.data.with_amplitude(a),
                tracked_norms: vec![],
                ..base.clone()
            };
            let spec = if exp.linear_only { exp.system.linearized() } else { exp.system.clone() };
            let z0 = synthesize_initial_data(&exp.system, &exp.grid, &exp.data)?;
            let tables = BlockTables::new(*z0.grid(), DyadicCutoffs::default());
            let (traj, abort) = if exp.linear_only {
                (evolve_linear(&spec, &z0, &exp.sample_times)?, None)
            } else {
                let t_final = exp.sample_times.iter().cloned().fold(0.0, f64::max);
                let at: Vec<f64> = exp.sample_times.iter().cloned().filter(|t| *t > 0.0).collect();
                evolve_nonlinear_partial(&spec, &z0, t_final, exp.dt, &SnapshotSchedule::At(at))?
            };
            let (_, e1) = energy_functionals(&traj, Some(s), &tables)?;
            let sup_e1 = e1.last().cloned().unwrap_or(0.0);
            let d = data_norm(&z0, s, &tables)?;
            Ok(AuditRun {
                amplitude: a,
                sup_e1,
                data_norm: d,
                ratio: sup_e1 / d,
                abort,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    let spread = spread(&ratios);
    let monotone = ratios.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let pass = runs.iter().all(|r| r.abort.is_none() && r.ratio.is_finite()) && spread <= 2.0 && monotone;
    Ok(SmallDataAudit {
        system: base.system.name().to_string(),
        runs,
        spread,
        monotone,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRun {
    pub seed: u64,
    pub amplitude: f64,
    /// `||W||_{L~^inf(B^{3/2}_{2,1})}`.
    pub sup_norm: f64,
    /// `||(I - P_M) W||_{L~^2(B^{3/2}_{2,1})}`.
    pub damped_dissipation: f64,
    /// `||Lambda W||_{L~^2(B^{1/2}_{2,1})}`.
    pub gradient_dissipation: f64,
    pub lhs: f64,
    pub data_norm: f64,
    pub c0: f64,
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub system: String,
    pub t_final: f64,
    pub dt: f64,
    pub runs: Vec<EnergyRun>,
    pub c0_spread: f64,
    /// For amplitude pairs `(a, a/2)`: ratio of left sides at equal seed.
    pub halving_ratios: BTreeMap<String, f64>,
    pub stability_limit: f64,
    pub pass: bool,
}

/// Fits `C0` in `LHS <= C0 ||W0||_{B^{3/2}_{2,1}}` (with unit dissipation
/// weight) over seeds and amplitudes.
pub fn energy_inequality_audit(
    spec: &SystemSpec,
    grid: &GridSpec,
    data: &InitialDataSpec,
    seeds: &[u64],
    amplitudes: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<EnergyAudit> {
    let cases: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| amplitudes.iter().map(move |&a| (s, a))).collect();
    if cases.is_empty() {
        return Err(Error::InvalidInput("energy audit needs seeds and amplitudes".into()));
    }
    let proj = spec.equilibrium_projector();
    let nc = spec.dim_state();
    let runs = cases
        .par_iter()
        .map(|&(seed, amp)| {
            let d = data.with_seed(seed).with_amplitude(amp);
            let z0 = synthesize_initial_data(spec, grid, &d)?;
            let tables = BlockTables::new(*z0.grid(), DyadicCutoffs::default());
            let (traj, abort) = evolve_nonlinear_partial(spec, &z0, t_final, dt, &SnapshotSchedule::Every(1))?;
            let damped: Vec<SpectralField> = traj
                .snapshots
                .iter()
                .map(|z| {
                    let mut out = z.clone();
                    for i in 0..z.grid().num_points() {
                        let m = z.mode(i);
                        let o = out.mode_mut(i);
                        for r in 0..nc {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for c in 0..nc {
                                acc += proj[(r, c)] * m[c];
                            }
                            o[r] = m[r] - acc;
                        }
                    }
                    out
                })
                .collect();
            let grads = traj
                .snapshots
                .iter()
                .map(|z| fractional_derivative(z, 1.0))
                .collect::<Result<Vec<_>>>()?;
            let sup_norm = chemin_lerner_norm(&traj.snapshots, &traj.times, TimeExponent::Infinity, &b3221(), &tables)?;
            let damped_dissipation = chemin_lerner_norm(&damped, &traj.times, TimeExponent::Two, &b3221(), &tables)?;
            let gradient_dissipation = chemin_lerner_norm(
                &grads,
                &traj.times,
                TimeExponent::Two,
                &BesovParams::inhomogeneous(0.5, 2.0, 1.0)?,
                &tables,
            )?;
            let lhs = sup_norm + damped_dissipation + gradient_dissipation;
            let dn = besov_norm(&z0, &b3221(), &tables)?.value;
            Ok(EnergyRun {
                seed,
                amplitude: amp,
                sup_norm,
                damped_dissipation,
                gradient_dissipation,
                lhs,
                data_norm: dn,
                c0: lhs / dn,
                abort,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c0: Vec<f64> = runs.iter().map(|r| r.c0).collect();
    let c0_spread = spread(&c0);
    let mut halving_ratios = BTreeMap::new();
    for r in &runs {
        if let Some(h) = runs
            .iter()
            .find(|q| q.seed == r.seed && (q.amplitude - r.amplitude / 2.0).abs() <= 1e-12 * r.amplitude)
        {
            halving_ratios.insert(format!("seed{}_a{:e}", r.seed, r.amplitude), r.lhs / h.lhs);
        }
    }
    let stability_limit = 4.0;
    let pass = runs.iter().all(|r| r.abort.is_none() && r.c0.is_finite() && r.c0 > 0.0) && c0_spread <= stability_limit;
    Ok(EnergyAudit {
        system: spec.name().to_string(),
        t_final,
        dt,
        runs,
        c0_spread,
        halving_ratios,
        stability_limit,
        pass,
    })
}
