//! Fourier-space evolution: exact per-mode linear propagation, a second-order
//! exponential integrator for the nonlinear system, frequency-localized
//! Duhamel terms and low-frequency envelope diagnostics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, lr_aggregate, BesovParams, Exponent};
use crate::error::{Error, Result};
use crate::linalg::{self, flatten, matvec, matvec_add, CMatrix};
use crate::littlewood_paley::{BlockTables, DyadicCutoffs};
use crate::spectral::{
    forward_transform, fractional_derivative, inverse_transform, inverse_unchecked, lambda_symbol,
    GridSpec, RealField, SpectralField,
};
use crate::systems::{eta1, fit_dissipation_constant, log_grid, spectral_envelope, SystemSpec};

/// Growth factor of the L² norm that ends a nonlinear run.
pub const GROWTH_LIMIT: f64 = 10.0;

/// Integrator metadata of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMeta {
    /// 0 for exact linear propagation, 2 for the exponential integrator.
    pub order: u32,
    pub dt: f64,
    pub steps: usize,
    pub dealias_fraction: f64,
    pub max_asymmetry: f64,
}

/// Snapshots of a solution at increasing times starting at 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    pub system: SystemSpec,
    pub meta: StepMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &SpectralField)> {
        self.times.last().map(|&t| (t, self.snapshots.last().unwrap()))
    }

    /// Index of the snapshot at time `t` (within `1e-9` relative).
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// On-disk description of a stored trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub system: String,
    pub grid: GridSpec,
    pub labels: Vec<String>,
    pub meta: StepMeta,
    pub times: Vec<f64>,
    pub files: Vec<String>,
}

/// Writes one binary container per snapshot and `manifest.json` into `dir`.
pub fn write_trajectory(traj: &Trajectory, dir: &Path) -> Result<TrajectoryManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.len());
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:05}.bsvf");
        let real = inverse_transform(snap)?;
        real.write_binary(std::io::BufWriter::new(fs::File::create(dir.join(&name))?))?;
        files.push(name);
    }
    let manifest = TrajectoryManifest {
        system: traj.system.name().to_string(),
        grid: traj.grid,
        labels: traj.system.labels().to_vec(),
        meta: traj.meta,
        times: traj.times.clone(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a trajectory written by [`write_trajectory`].
pub fn read_trajectory(dir: &Path) -> Result<(TrajectoryManifest, Vec<SpectralField>)> {
    let manifest: TrajectoryManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let snaps = manifest
        .files
        .iter()
        .map(|f| {
            let real = RealField::read_binary(std::io::BufReader::new(fs::File::open(dir.join(f))?))?;
            Ok(forward_transform(&real))
        })
        .collect::<Result<_>>()?;
    Ok((manifest, snaps))
}

/// Mode indices evolved explicitly; the rest follow by conjugation.
fn half_modes(grid: &GridSpec) -> std::ops::RangeInclusive<usize> {
    0..=grid.num_points() / 2
}

/// Symbol used for mode `i`; the convective (odd) part is dropped at Nyquist,
/// where `xi` and `-xi` alias.
fn mode_symbol(spec: &SystemSpec, grid: &GridSpec, i: usize) -> CMatrix {
    if i == grid.num_points() / 2 {
        spec.symbol(0.0)
    } else {
        spec.symbol(grid.xi(i))
    }
}

fn check_field(spec: &SystemSpec, z: &SpectralField) -> Result<()> {
    if z.grid().n_components() != spec.dim_state() {
        return Err(Error::InvalidInput(format!(
            "field has {} components, system has {}",
            z.grid().n_components(),
            spec.dim_state()
        )));
    }
    let tol = crate::spectral::HERMITIAN_TOLERANCE * z.max_abs().max(1.0);
    let defect = z.hermitian_defect();
    if defect > tol {
        return Err(Error::HermitianViolation {
            defect,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Writes per-mode results for `i <= n/2` into a field and fills partners by
/// conjugation; the Nyquist mode keeps its real part.
fn assemble(grid: GridSpec, nc: usize, half: &[Vec<Complex64>]) -> SpectralField {
    let n = grid.num_points();
    let mut out = SpectralField::zeros(grid);
    for (i, v) in half.iter().enumerate() {
        if i == n / 2 {
            for (c, z) in v.iter().enumerate() {
                out.mode_mut(i)[c] = Complex64::new(z.re, 0.0);
            }
            continue;
        }
        out.mode_mut(i)[..nc].copy_from_slice(v);
        if i != 0 {
            let p = grid.partner(i);
            for (c, z) in v.iter().enumerate() {
                out.mode_mut(p)[c] = z.conj();
            }
        } else {
            for z in out.mode_mut(0) {
                z.im = 0.0;
            }
        }
    }
    out
}

fn validate_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidInput("times must be finite and nonnegative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("times must be strictly increasing".into()));
    }
    let mut out = times.to_vec();
    if out.first() != Some(&0.0) {
        out.insert(0, 0.0);
    }
    Ok(out)
}

/// `e^{t Phi(i xi_k)} z0(k)` at each requested time (a leading `t = 0` is added
/// when absent); every time is computed directly, not by stepping.
pub fn evolve_linear(spec: &SystemSpec, z0: &SpectralField, times: &[f64]) -> Result<Trajectory> {
    check_field(spec, z0)?;
    let times = validate_times(times)?;
    let grid = *z0.grid();
    let nc = spec.dim_state();
    let per_mode: Vec<Vec<Vec<Complex64>>> = half_modes(&grid)
        .into_par_iter()
        .map(|i| {
            let z = z0.mode(i);
            if z.iter().all(|v| v.norm_sqr() == 0.0) {
                return Ok(vec![vec![Complex64::new(0.0, 0.0); nc]; times.len()]);
            }
            let phi = mode_symbol(spec, &grid, i);
            times
                .iter()
                .map(|&t| {
                    let e = flatten(&linalg::matrix_exponential(&phi, t)?);
                    let mut out = vec![Complex64::new(0.0, 0.0); nc];
                    matvec(&e, z, &mut out);
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let snapshots = (0..times.len())
        .map(|k| {
            let half: Vec<Vec<Complex64>> = per_mode.iter().map(|m| m[k].clone()).collect();
            assemble(grid, nc, &half)
        })
        .collect();
    Ok(Trajectory {
        grid,
        times,
        snapshots,
        system: spec.clone(),
        meta: StepMeta {
            order: 0,
            dt: 0.0,
            steps: 0,
            dealias_fraction: 1.0,
            max_asymmetry: 0.0,
        },
    })
}

/// Per-mode `e^{h Phi}`, `h phi_1(h Phi)` and `h phi_2(h Phi)` for modes
/// `0..=n/2`, flattened row-major.
#[derive(Debug, Clone)]
pub struct PropagatorTable {
    grid: GridSpec,
    dim: usize,
    dt: f64,
    exp: Vec<Complex64>,
    phi1: Vec<Complex64>,
    phi2: Vec<Complex64>,
}

impl PropagatorTable {
    pub fn new(spec: &SystemSpec, grid: &GridSpec, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be finite and >= 0, got {dt}")));
        }
        let n = spec.dim_state();
        let parts: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> = half_modes(grid)
            .into_par_iter()
            .map(|i| {
                let a = mode_symbol(spec, grid, i) * Complex64::new(dt, 0.0);
                let (e, p1, p2) = linalg::phi_functions(&a)?;
                let h = Complex64::new(dt, 0.0);
                Ok((flatten(&e), flatten(&(p1 * h)), flatten(&(p2 * h))))
            })
            .collect::<Result<_>>()?;
        let mut exp = Vec::with_capacity(parts.len() * n * n);
        let mut phi1 = Vec::with_capacity(parts.len() * n * n);
        let mut phi2 = Vec::with_capacity(parts.len() * n * n);
        for (e, a, b) in parts {
            exp.extend(e);
            phi1.extend(a);
            phi2.extend(b);
        }
        Ok(Self {
            grid: *grid,
            dim: n,
            dt,
            exp,
            phi1,
            phi2,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn block<'a>(&self, table: &'a [Complex64], i: usize) -> &'a [Complex64] {
        let nn = self.dim * self.dim;
        &table[i * nn..(i + 1) * nn]
    }

    /// `e^{h Phi(i xi_i)}` as a dense matrix.
    pub fn exponential(&self, i: usize) -> CMatrix {
        CMatrix::from_row_slice(self.dim, self.dim, self.block(&self.exp, i))
    }

    /// `h phi_1(h Phi(i xi_i))`.
    pub fn duhamel_weight(&self, i: usize) -> CMatrix {
        CMatrix::from_row_slice(self.dim, self.dim, self.block(&self.phi1, i))
    }

    /// `h phi_2(h Phi(i xi_i))`.
    pub fn corrector_weight(&self, i: usize) -> CMatrix {
        CMatrix::from_row_slice(self.dim, self.dim, self.block(&self.phi2, i))
    }
}

/// When snapshots of a nonlinear run are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotSchedule {
    /// Every `k` steps, plus the final state.
    Every(usize),
    /// At the given times, rounded to the nearest step.
    At(Vec<f64>),
}

/// Reason a nonlinear run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub step: usize,
    pub time: f64,
    pub reason: String,
}

impl From<Abort> for Error {
    fn from(a: Abort) -> Self {
        Error::Aborted {
            step: a.step,
            time: a.time,
            reason: a.reason,
        }
    }
}

/// Mode-space nonlinear term `(A0)^{-1} (i xi P(z)^ + Q(z)^)` with modes above
/// `cut * n/2` removed.
pub fn nonlinear_term(spec: &SystemSpec, z: &SpectralField, cut: f64) -> SpectralField {
    let grid = *z.grid();
    let n = grid.num_points();
    let nc = spec.dim_state();
    let real = inverse_unchecked(z);
    let np = real.samples().len() / nc;
    let mut p = vec![0.0; real.samples().len()];
    let mut q = vec![0.0; real.samples().len()];
    let mut any_source = false;
    p.par_chunks_mut(nc)
        .zip(real.samples().par_chunks(nc))
        .for_each(|(out, zz)| spec.flux(zz, out));
    for m in 0..np {
        let zz = real.point(m);
        spec.source(zz, &mut q[m * nc..(m + 1) * nc]);
    }
    if q.iter().any(|v| *v != 0.0) {
        any_source = true;
    }
    let to_field = |v: Vec<f64>| -> SpectralField {
        match RealField::new(grid, v) {
            Ok(f) => forward_transform(&f),
            Err(_) => {
                let mut bad = SpectralField::zeros(grid);
                bad.coefficients_mut().fill(Complex64::new(f64::NAN, 0.0));
                bad
            }
        }
    };
    let ph = to_field(p);
    let qh = if any_source { Some(to_field(q)) } else { None };
    let a0i = spec.a0_inverse();
    let k_cut = cut * (n / 2) as f64;
    let mut out = SpectralField::zeros(grid);
    let mut v = vec![Complex64::new(0.0, 0.0); nc];
    for i in 0..n {
        if (grid.mode(i).abs() as f64) > k_cut {
            continue;
        }
        let xi = grid.xi(i);
        for c in 0..nc {
            v[c] = Complex64::new(0.0, xi) * ph.mode(i)[c];
            if let Some(qh) = &qh {
                v[c] += qh.mode(i)[c];
            }
        }
        let o = out.mode_mut(i);
        for r in 0..nc {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..nc {
                acc += a0i[(r, c)] * v[c];
            }
            o[r] = acc;
        }
    }
    out
}

fn apply_table(table: &PropagatorTable, which: &[Complex64], z: &SpectralField, out: &mut SpectralField, add: bool) {
    let grid = table.grid;
    let nc = table.dim;
    let n = grid.num_points();
    for i in half_modes(&grid) {
        let m = table.block(which, i);
        let src: Vec<Complex64> = z.mode(i).to_vec();
        let dst = out.mode_mut(i);
        if add {
            matvec_add(m, &src, dst);
        } else {
            matvec(m, &src, dst);
        }
        if i == n / 2 {
            for d in dst.iter_mut() {
                d.im = 0.0;
            }
        }
    }
    for i in 1..n / 2 {
        let p = grid.partner(i);
        for c in 0..nc {
            let v = out.mode(i)[c].conj();
            out.mode_mut(p)[c] = v;
        }
    }
    for d in out.mode_mut(0) {
        d.im = 0.0;
    }
}

fn schedule_steps(schedule: &SnapshotSchedule, dt: f64, steps: usize) -> Result<Vec<usize>> {
    let mut out = match schedule {
        SnapshotSchedule::Every(k) => {
            if *k == 0 {
                return Err(Error::InvalidInput("snapshot stride must be positive".into()));
            }
            let mut v: Vec<usize> = (0..=steps).step_by(*k).collect();
            if *v.last().unwrap() != steps {
                v.push(steps);
            }
            v
        }
        SnapshotSchedule::At(times) => {
            let mut v = vec![0];
            for &t in times {
                if !(t >= 0.0) {
                    return Err(Error::InvalidInput("snapshot times must be >= 0".into()));
                }
                let s = (t / dt).round() as usize;
                if s > steps {
                    return Err(Error::InvalidInput(format!("snapshot time {t} beyond final time")));
                }
                v.push(s);
            }
            v
        }
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Exponential predictor-corrector (ETD2RK) up to time `t_final`; returns the
/// recorded part of the trajectory and the abort reason if the run stopped
/// early.
pub fn evolve_nonlinear_partial(
    spec: &SystemSpec,
    z0: &SpectralField,
    t_final: f64,
    dt: f64,
    schedule: &SnapshotSchedule,
) -> Result<(Trajectory, Option<Abort>)> {
    check_field(spec, z0)?;
    if !(dt > 0.0) || !(t_final >= 0.0) || !dt.is_finite() || !t_final.is_finite() {
        return Err(Error::InvalidInput(format!("need dt > 0 and T >= 0, got dt={dt}, T={t_final}")));
    }
    let steps = (t_final / dt).round().max(if t_final > 0.0 { 1.0 } else { 0.0 }) as usize;
    let h = if steps > 0 { t_final / steps as f64 } else { dt };
    let record = schedule_steps(schedule, h, steps)?;
    let grid = *z0.grid();
    let table = PropagatorTable::new(spec, &grid, h)?;
    let cut = spec.dealias_fraction();
    let linear = spec.is_linear();
    let initial = z0.l2_norm();
    let mut u = z0.clone();
    u.symmetrize();
    let mut times = Vec::new();
    let mut snaps = Vec::new();
    let mut next = 0;
    if record[0] == 0 {
        times.push(0.0);
        snaps.push(u.clone());
        next = 1;
    }
    let mut max_asym: f64 = 0.0;
    let mut abort = None;
    let mut a = SpectralField::zeros(grid);
    let mut unew = SpectralField::zeros(grid);
    for step in 1..=steps {
        if linear {
            apply_table(&table, &table.exp, &u, &mut unew, false);
        } else {
            let nu = nonlinear_term(spec, &u, cut);
            apply_table(&table, &table.exp, &u, &mut a, false);
            apply_table(&table, &table.phi1, &nu, &mut a, true);
            let na = nonlinear_term(spec, &a, cut);
            let diff = na.axpby(1.0, &nu, -1.0)?;
            unew.coefficients_mut().copy_from_slice(a.coefficients());
            apply_table(&table, &table.phi2, &diff, &mut unew, true);
        }
        std::mem::swap(&mut u, &mut unew);
        max_asym = max_asym.max(u.symmetrize());
        let t = step as f64 * h;
        let norm = u.l2_norm();
        if !norm.is_finite() {
            abort = Some(Abort { step, time: t, reason: "non-finite state".into() });
            break;
        }
        if initial > 0.0 && norm > GROWTH_LIMIT * initial {
            abort = Some(Abort {
                step,
                time: t,
                reason: format!("left small-data regime: L2 norm grew {:.3e}x", norm / initial),
            });
            break;
        }
        if next < record.len() && record[next] == step {
            times.push(t);
            snaps.push(u.clone());
            next += 1;
        }
    }
    Ok((
        Trajectory {
            grid,
            times,
            snapshots: snaps,
            system: spec.clone(),
            meta: StepMeta {
                order: 2,
                dt: h,
                steps,
                dealias_fraction: cut,
                max_asymmetry: max_asym,
            },
        },
        abort,
    ))
}

/// As [`evolve_nonlinear_partial`], failing on abort.
pub fn evolve_nonlinear(
    spec: &SystemSpec,
    z0: &SpectralField,
    t_final: f64,
    dt: f64,
    schedule: &SnapshotSchedule,
) -> Result<Trajectory> {
    let (traj, abort) = evolve_nonlinear_partial(spec, z0, t_final, dt, schedule)?;
    match abort {
        Some(a) => Err(a.into()),
        None => Ok(traj),
    }
}

/// Trapezoid approximation of `int_0^t G(t - tau) N(z(tau)) dtau` over the
/// trajectory samples up to `t` (uniformly spaced, at least two).
pub fn duhamel_integral(spec: &SystemSpec, traj: &Trajectory, t: f64) -> Result<SpectralField> {
    let end = traj
        .index_of_time(t)
        .ok_or_else(|| Error::InvalidInput(format!("t = {t} is not a trajectory sample time")))?;
    if end < 1 {
        return Err(Error::InvalidInput("Duhamel quadrature needs at least two samples".into()));
    }
    let dts = traj.times[1] - traj.times[0];
    for w in traj.times[..=end].windows(2) {
        if ((w[1] - w[0]) - dts).abs() > 1e-9 * dts {
            return Err(Error::InvalidInput("Duhamel quadrature needs uniform samples".into()));
        }
    }
    let grid = traj.grid;
    let table = PropagatorTable::new(spec, &grid, dts)?;
    let cut = spec.dealias_fraction();
    // Horner form: S <- e^{dts Phi} S + w_i N_i, i = 0..=end.
    let mut s = SpectralField::zeros(grid);
    let mut tmp = SpectralField::zeros(grid);
    for i in 0..=end {
        if i > 0 {
            apply_table(&table, &table.exp, &s, &mut tmp, false);
            std::mem::swap(&mut s, &mut tmp);
        }
        let w = if i == 0 || i == end { 0.5 * dts } else { dts };
        let n = nonlinear_term(spec, &traj.snapshots[i], cut);
        s = s.axpby(1.0, &n, w)?;
    }
    Ok(s)
}

/// `Delta_j Lambda^ell` applied to the Duhamel integral at time `t`.
pub fn localized_duhamel_term(
    spec: &SystemSpec,
    traj: &Trajectory,
    j: i32,
    ell: f64,
    t: f64,
    homogeneous: bool,
    tables: &BlockTables,
) -> Result<SpectralField> {
    let d = duhamel_integral(spec, traj, t)?;
    let d = fractional_derivative(&d, ell)?;
    tables.block(&d, j, homogeneous)
}

/// Residual `||z(t) - G(t) z0 - sum_j Delta_j D(t)||` with the sum over all
/// inhomogeneous blocks, relative to `||z(t)||`.
pub fn duhamel_residual(spec: &SystemSpec, traj: &Trajectory, t: f64, cut: &DyadicCutoffs) -> Result<f64> {
    let idx = traj
        .index_of_time(t)
        .ok_or_else(|| Error::InvalidInput(format!("t = {t} is not a trajectory sample time")))?;
    let lin = evolve_linear(&spec.linearized(), &traj.snapshots[0], &[t])?;
    let lin_t = lin.snapshots.last().unwrap();
    let tables = BlockTables::new(traj.grid, *cut);
    let d = duhamel_integral(spec, traj, t)?;
    let mut sum = SpectralField::zeros(traj.grid);
    for j in tables.inhomogeneous_indices() {
        sum = sum.axpby(1.0, &tables.block(&d, j, false)?, 1.0)?;
    }
    let z = &traj.snapshots[idx];
    let r = z.axpby(1.0, lin_t, -1.0)?.axpby(1.0, &sum, -1.0)?;
    Ok(r.l2_norm() / z.l2_norm().max(f64::MIN_POSITIVE))
}

/// Largest `r` with `max Re lambda(i xi) <= -(c/2) xi^2` on `0 < |xi| <= r`,
/// scanned on a log grid over `[1e-3, 1e3]`.
pub fn low_frequency_radius(spec: &SystemSpec, c: f64) -> f64 {
    let grid = log_grid(1e-3, 1e3, 4000);
    let env = spectral_envelope(spec, &grid);
    let mut r0 = 0.0;
    for p in &env {
        match p.max_real {
            Some(m) if m <= -0.5 * c * p.xi * p.xi => r0 = p.xi,
            _ => break,
        }
    }
    r0
}

/// `j0 = floor(log2(3 r0 / 8))`.
pub fn low_frequency_block(r0: f64) -> i32 {
    (3.0 * r0 / 8.0).log2().floor() as i32
}

/// Low-frequency envelope statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    /// `||Delta_{-1} Lambda^ell G(t) (A0)^{-1} P_x||_2`.
    DivergenceLowBlock,
    /// `l^r_{j <= j0}` of `2^{j ell} ||dot Delta_j G(t) (A0)^{-1} P_x||_2`.
    DivergenceBlocks,
    /// `l^r_{j <= j0}` of `2^{j ell} ||dot Delta_j G(t) (A0)^{-1} Q||_2` for `Q in M^perp`.
    SourceBlocks,
}

impl LemmaId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "3.2" | "divergence-low-block" => Ok(LemmaId::DivergenceLowBlock),
            "3.3" | "divergence-blocks" => Ok(LemmaId::DivergenceBlocks),
            "3.4" | "source-blocks" => Ok(LemmaId::SourceBlocks),
            other => Err(Error::InvalidInput(format!("unknown lemma id {other:?}"))),
        }
    }
}

/// Exponents of a lemma check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    pub sigma: f64,
    pub ell: f64,
    pub s: f64,
    pub r: Exponent,
}

impl LemmaParams {
    /// Algebraic exponent `(s + ell + 1 - sigma)/2`.
    pub fn rate(&self) -> f64 {
        (self.s + self.ell + 1.0 - self.sigma) / 2.0
    }

    fn validate(&self, lemma: LemmaId) -> Result<()> {
        match lemma {
            LemmaId::DivergenceLowBlock => {
                if self.ell + 1.0 - self.sigma < 0.0 || self.s <= 0.0 {
                    return Err(Error::Constraint(format!(
                        "need ell + 1 - sigma >= 0 and s > 0 (ell={}, sigma={}, s={})",
                        self.ell, self.sigma, self.s
                    )));
                }
            }
            LemmaId::DivergenceBlocks | LemmaId::SourceBlocks => {
                if self.s + self.ell + 1.0 - self.sigma <= 0.0 {
                    return Err(Error::Constraint(format!(
                        "need s + ell + 1 - sigma > 0 (ell={}, sigma={}, s={})",
                        self.ell, self.sigma, self.s
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Time series of a lemma's left side against its envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaBoundReport {
    pub lemma: LemmaId,
    pub params: LemmaParams,
    pub r0: f64,
    pub j0: i32,
    pub dissipation_constant: f64,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub envelope: Vec<f64>,
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    /// For the source lemma: `max_{t >= 10}` of this envelope ratio over the
    /// ratio against the purely algebraic envelope.
    pub comparison_ratio: Option<f64>,
}

/// Low-frequency structure shared by lemma checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowFrequencyData {
    pub c: f64,
    pub r0: f64,
    pub j0: i32,
}

impl LowFrequencyData {
    pub fn of(spec: &SystemSpec) -> Self {
        let c = fit_dissipation_constant(&spectral_envelope(spec, &crate::systems::default_xi_grid())).c;
        let r0 = low_frequency_radius(spec, c);
        Self {
            c,
            r0,
            j0: low_frequency_block(r0),
        }
    }
}

/// Evaluates a lemma's left side and envelope on `data` (the `P` or `Q` field)
/// at the given times.
pub fn verify_lemma_bound(
    spec: &SystemSpec,
    lemma: LemmaId,
    data: &SpectralField,
    params: LemmaParams,
    times: &[f64],
    cut: &DyadicCutoffs,
    low: Option<LowFrequencyData>,
) -> Result<LemmaBoundReport> {
    params.validate(lemma)?;
    if data.grid().n_components() != spec.dim_state() {
        return Err(Error::InvalidInput("datum has the wrong component count".into()));
    }
    if lemma == LemmaId::SourceBlocks {
        let proj = spec.equilibrium_projector();
        let mut worst: f64 = 0.0;
        let nc = spec.dim_state();
        for i in 0..data.grid().num_points() {
            let m = data.mode(i);
            for r in 0..nc {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..nc {
                    acc += proj[(r, c)] * m[c];
                }
                worst = worst.max(acc.norm());
            }
        }
        if worst > 1e-12 * data.max_abs().max(1e-300) {
            return Err(Error::Constraint("source datum must take values in M^perp".into()));
        }
    }
    let low = low.unwrap_or_else(|| LowFrequencyData::of(spec));
    let grid = *data.grid();
    let tables = BlockTables::new(grid, *cut);
    let a0i: DMatrix<f64> = spec.a0_inverse().clone();
    // Forcing g = (A0)^{-1} (i xi P) or (A0)^{-1} Q.
    let nc = spec.dim_state();
    let mut g = SpectralField::zeros(grid);
    for i in 0..grid.num_points() {
        let xi = grid.xi(i);
        let src = data.mode(i).to_vec();
        let o = g.mode_mut(i);
        for r in 0..nc {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..nc {
                let v = if lemma == LemmaId::SourceBlocks {
                    src[c]
                } else {
                    Complex64::new(0.0, xi) * src[c]
                };
                acc += a0i[(r, c)] * v;
            }
            o[r] = acc;
        }
    }
    g.symmetrize();
    let traj = evolve_linear(&spec.linearized(), &g, times)?;
    let sigma_data = fractional_derivative(data, params.sigma)?;
    let neg_s = BesovParams {
        s: -params.s,
        p: Exponent::Finite(2.0),
        r: Exponent::Infinite,
        homogeneous: true,
    };
    let data_norm = besov_norm(&sigma_data, &neg_s, &tables)?.value;
    let range = tables.range();
    let low_blocks: Vec<i32> = range.iter().filter(|&j| j <= low.j0).collect();
    let block_sum = |f: &SpectralField| -> Result<f64> {
        let terms = low_blocks
            .iter()
            .map(|&j| Ok(2f64.powi(j).powf(params.ell) * tables.block_l2_norm(f, j, true)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(lr_aggregate(terms, params.r))
    };
    let q_blocks = if lemma == LemmaId::SourceBlocks {
        block_sum(data)?
    } else {
        0.0
    };
    let mut lhs = Vec::with_capacity(traj.len());
    let mut envelope = Vec::with_capacity(traj.len());
    let mut algebraic = Vec::with_capacity(traj.len());
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        let value = match lemma {
            LemmaId::DivergenceLowBlock => {
                let f = fractional_derivative(snap, params.ell)?;
                tables.block(&f, -1, false)?.l2_norm()
            }
            LemmaId::DivergenceBlocks | LemmaId::SourceBlocks => block_sum(snap)?,
        };
        let alg = (1.0 + t).powf(-params.rate()) * data_norm;
        let env = match lemma {
            LemmaId::SourceBlocks => (-low.c * t).exp() * q_blocks + alg,
            _ => alg,
        };
        lhs.push(value);
        envelope.push(env);
        algebraic.push(alg);
    }
    let ratios: Vec<f64> = lhs.iter().zip(&envelope).map(|(a, b)| a / b).collect();
    let sup_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let comparison_ratio = (lemma == LemmaId::SourceBlocks).then(|| {
        traj.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= 10.0)
            .map(|(k, _)| (lhs[k] / envelope[k]) / (lhs[k] / algebraic[k]))
            .fold(0.0, f64::max)
    });
    Ok(LemmaBoundReport {
        lemma,
        params,
        r0: low.r0,
        j0: low.j0,
        dissipation_constant: low.c,
        times: traj.times,
        lhs,
        envelope,
        ratios,
        sup_ratio,
        comparison_ratio,
    })
}

/// Width range of seeded lemma data.
pub const LEMMA_DATUM_WIDTH: (f64, f64) = (2.5, 3.5);

/// Seeded lemma datum: a Gaussian bump with random width, center and
/// direction; projected onto `M^perp` for the source lemma.
pub fn lemma_datum(spec: &SystemSpec, grid: &GridSpec, lemma: LemmaId, seed: u64) -> Result<SpectralField> {
    let nc = spec.dim_state();
    let grid = grid.with_components(nc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.random_range(LEMMA_DATUM_WIDTH.0..LEMMA_DATUM_WIDTH.1);
    let center = grid.box_length() * rng.random_range(0.4..0.6);
    let mut dir: Vec<f64> = (0..nc).map(|_| rng.random_range(-1.0..1.0)).collect();
    if lemma == LemmaId::SourceBlocks {
        let proj = spec.equilibrium_projector();
        let v = nalgebra::DVector::from_vec(dir.clone());
        let w = &v - &proj * &v;
        dir = w.iter().cloned().collect();
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("degenerate datum direction".into()));
    }
    let dir: Vec<f64> = dir.iter().map(|v| v / norm).collect();
    let mut f = crate::sampling::gaussian(&grid, center, width, &dir);
    if lemma == LemmaId::SourceBlocks {
        // Remove roundoff leakage into M.
        let proj = spec.equilibrium_projector();
        for i in 0..grid.num_points() {
            let m = f.mode(i).to_vec();
            let o = f.mode_mut(i);
            for r in 0..nc {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..nc {
                    acc += proj[(r, c)] * m[c];
                }
                o[r] = m[r] - acc;
            }
        }
    }
    Ok(f)
}

/// Lemma sup-ratios over several data seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSweepReport {
    pub lemma: LemmaId,
    pub params: LemmaParams,
    pub seeds: Vec<u64>,
    pub sup_ratios: Vec<f64>,
    pub spread: f64,
    pub comparison_ratio_max: Option<f64>,
    pub stability_limit: f64,
    pub pass: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Runs [`verify_lemma_bound`] for each seed and checks the spread of the
/// sup-ratios (and, for the source lemma, the comparison ratio `<= 1.1`).
pub fn lemma_seed_sweep(
    spec: &SystemSpec,
    grid: &GridSpec,
    lemma: LemmaId,
    params: LemmaParams,
    seeds: &[u64],
    times: &[f64],
    cut: &DyadicCutoffs,
) -> Result<LemmaSweepReport> {
    let low = LowFrequencyData::of(spec);
    let reports: Vec<LemmaBoundReport> = seeds
        .par_iter()
        .map(|&seed| {
            let data = lemma_datum(spec, grid, lemma, seed)?;
            verify_lemma_bound(spec, lemma, &data, params, times, cut, Some(low))
        })
        .collect::<Result<_>>()?;
    let sup_ratios: Vec<f64> = reports.iter().map(|r| r.sup_ratio).collect();
    let spread = crate::stats::spread(&sup_ratios);
    let comparison_ratio_max = (lemma == LemmaId::SourceBlocks)
        .then(|| reports.iter().filter_map(|r| r.comparison_ratio).fold(0.0, f64::max));
    let stability_limit = 2.0;
    let pass = sup_ratios.iter().all(|r| r.is_finite() && *r > 0.0)
        && spread <= stability_limit
        && comparison_ratio_max.is_none_or(|c| c <= 1.1);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("r0".into(), low.r0);
    diagnostics.insert("j0".into(), low.j0 as f64);
    diagnostics.insert("c".into(), low.c);
    Ok(LemmaSweepReport {
        lemma,
        params,
        seeds: seeds.to_vec(),
        sup_ratios,
        spread,
        comparison_ratio_max,
        stability_limit,
        pass,
        diagnostics,
    })
}

/// `A0`-weighted L² norm of homogeneous block `j` of `z`.
pub fn weighted_block_energy(spec: &SystemSpec, z: &SpectralField, j: i32, tables: &BlockTables) -> Result<f64> {
    let b = tables.block(z, j, true)?;
    let scale = z.grid().norm_scale();
    let mut acc = 0.0;
    for i in 0..z.grid().num_points() {
        acc += spec.energy_weight(b.mode(i));
    }
    Ok(scale * acc.max(0.0).sqrt())
}

/// Dissipation constant restricted to `|xi| >= 3/4` (uniform envelope region).
pub fn high_frequency_constant(spec: &SystemSpec) -> f64 {
    let env = spectral_envelope(spec, &log_grid(0.75, 1e3, 400));
    env.iter()
        .filter_map(|p| p.max_real.map(|m| -m / eta1(p.xi)))
        .fold(f64::INFINITY, f64::min)
}

/// `Lambda^ell` symbol, re-exported for callers assembling multipliers.
pub fn lambda(xi: f64, ell: f64) -> f64 {
    lambda_symbol(xi, ell)
}
