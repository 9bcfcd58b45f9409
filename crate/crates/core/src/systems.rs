//! Symmetric dissipative hyperbolic systems `A0 z_t + A1 z_x + L z = P(z)_x + Q(z)`
//! in one space dimension: structure checks, the linear symbol, dissipation
//! envelopes, the built-in models and model descriptors.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Pointwise nonlinearity `z -> out`, both of length `dim_state`.
pub type Nonlinearity = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Symmetry tolerance for the structure checks.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Largest principal angle accepted between `ker L` and the equilibrium basis.
pub const KERNEL_ANGLE_TOLERANCE: f64 = 1e-10;

/// Pressure law of the damped Euler model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PressureLaw {
    /// `p = kappa rho^gamma`
    Gamma { kappa: f64, gamma: f64 },
    /// `p = kappa rho`
    Isothermal { kappa: f64 },
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::Gamma {
            kappa: 1.0,
            gamma: 1.4,
        }
    }
}

impl PressureLaw {
    pub fn p(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Gamma { kappa, gamma } => kappa * rho.powf(gamma),
            PressureLaw::Isothermal { kappa } => kappa * rho,
        }
    }

    pub fn dp(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Gamma { kappa, gamma } => kappa * gamma * rho.powf(gamma - 1.0),
            PressureLaw::Isothermal { kappa } => kappa,
        }
    }
}

fn default_one() -> f64 {
    1.0
}

fn default_third() -> f64 {
    1.0 / 3.0
}

/// Constitutive law selecting the nonlinear terms, by name and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum LawSpec {
    /// `P = Q = 0`.
    None,
    /// `P = (0, q2 / rho_bar)` with the damped Euler remainder `q2`.
    DampedEuler {
        #[serde(default = "default_one")]
        rho_bar: f64,
        #[serde(default)]
        pressure: PressureLaw,
    },
    /// `psi(r) = a^2 r + cubic r^3`, `P = (psi(r) - psi(0) - a^2 r, 0, 0, 0)`.
    ThermoelasticCubic {
        #[serde(default = "default_one")]
        a: f64,
        #[serde(default = "default_third")]
        cubic: f64,
    },
    /// `sigma(z) = z + cubic z^3`, `P = (0, 0, 0, sigma(z) - sigma(0) - z)`.
    TimoshenkoCubic {
        #[serde(default = "default_third")]
        cubic: f64,
    },
}

impl LawSpec {
    /// Polynomial degree used to choose the dealiasing rule.
    pub fn degree(&self) -> u32 {
        match self {
            LawSpec::None => 1,
            LawSpec::DampedEuler { .. } => 2,
            LawSpec::ThermoelasticCubic { .. } | LawSpec::TimoshenkoCubic { .. } => 3,
        }
    }

    fn state_dim(&self) -> Option<usize> {
        match self {
            LawSpec::None => None,
            LawSpec::DampedEuler { .. } => Some(2),
            LawSpec::ThermoelasticCubic { .. } | LawSpec::TimoshenkoCubic { .. } => Some(4),
        }
    }

    fn flux(&self) -> Nonlinearity {
        match *self {
            LawSpec::None => zero_nonlinearity(),
            LawSpec::DampedEuler { rho_bar, pressure } => {
                let dp_bar = pressure.dp(rho_bar);
                let p_bar = pressure.p(rho_bar);
                Arc::new(move |z, out| {
                    let rho = rho_bar + z[0];
                    let v = z[1];
                    let q2 = -rho_bar * rho_bar * v * v / rho
                        - (pressure.p(rho) - p_bar - dp_bar * z[0]);
                    out[0] = 0.0;
                    out[1] = q2 / rho_bar;
                })
            }
            LawSpec::ThermoelasticCubic { cubic, .. } => Arc::new(move |z, out| {
                let r = z[1];
                out.fill(0.0);
                out[0] = cubic * r * r * r;
            }),
            LawSpec::TimoshenkoCubic { cubic } => Arc::new(move |z, out| {
                let s = z[2];
                out.fill(0.0);
                out[3] = cubic * s * s * s;
            }),
        }
    }
}

fn zero_nonlinearity() -> Nonlinearity {
    Arc::new(|_, out| out.fill(0.0))
}

/// A system `A0 z_t + A1 z_x + L z = P(z)_x + Q(z)`.
#[derive(Clone)]
pub struct SystemSpec {
    name: String,
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    l_mat: DMatrix<f64>,
    equilibrium_basis: Vec<DVector<f64>>,
    labels: Vec<String>,
    law: Option<LawSpec>,
    flux: Nonlinearity,
    source: Nonlinearity,
    degree: u32,
    a0_inv: DMatrix<f64>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("a0", &self.a0)
            .field("a1", &self.a1)
            .field("l_mat", &self.l_mat)
            .field("law", &self.law)
            .finish_non_exhaustive()
    }
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Descriptor(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Descriptor(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl SystemSpec {
    /// Builds a linear system; the equilibrium basis defaults to a computed
    /// orthonormal basis of `ker L`.
    pub fn new(
        name: impl Into<String>,
        a0: DMatrix<f64>,
        a1: DMatrix<f64>,
        l_mat: DMatrix<f64>,
        equilibrium_basis: Option<Vec<DVector<f64>>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = a0.nrows();
        if n == 0 {
            return Err(Error::Descriptor("a0 is empty".into()));
        }
        check_square("a0", &a0, n)?;
        check_square("a1", &a1, n)?;
        check_square("l", &l_mat, n)?;
        let a0_inv = a0
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("a0 is not invertible".into()))?;
        let basis = match equilibrium_basis {
            Some(b) => {
                for (i, v) in b.iter().enumerate() {
                    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Descriptor(format!(
                            "equilibrium_basis[{i}] must be a finite vector of length {n}"
                        )));
                    }
                }
                b
            }
            None => kernel_basis(&l_mat),
        };
        let labels = match labels {
            Some(l) if l.len() != n => {
                return Err(Error::Descriptor(format!(
                    "labels has {} entries, expected {n}",
                    l.len()
                )))
            }
            Some(l) => l,
            None => (0..n).map(|i| format!("z{i}")).collect(),
        };
        Ok(Self {
            name: name.into(),
            a0,
            a1,
            l_mat,
            equilibrium_basis: basis,
            labels,
            law: Some(LawSpec::None),
            flux: zero_nonlinearity(),
            source: zero_nonlinearity(),
            degree: 1,
            a0_inv,
        })
    }

    /// Attaches a named constitutive law.
    pub fn with_law(mut self, law: LawSpec) -> Result<Self> {
        if let Some(d) = law.state_dim() {
            if d != self.dim_state() {
                return Err(Error::Descriptor(format!(
                    "law {law:?} needs a {d}-component state, system has {}",
                    self.dim_state()
                )));
            }
        }
        self.flux = law.flux();
        self.source = zero_nonlinearity();
        self.degree = law.degree();
        self.law = Some(law);
        Ok(self)
    }

    /// Attaches custom nonlinearities of the given polynomial degree.
    pub fn with_nonlinearities(mut self, flux: Nonlinearity, source: Nonlinearity, degree: u32) -> Self {
        self.flux = flux;
        self.source = source;
        self.degree = degree.max(1);
        self.law = None;
        self
    }

    /// The same linear part with `P = Q = 0`.
    pub fn linearized(&self) -> Self {
        let mut s = self.clone();
        s.flux = zero_nonlinearity();
        s.source = zero_nonlinearity();
        s.degree = 1;
        s.law = Some(LawSpec::None);
        s
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.a0.nrows()
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn a0_inverse(&self) -> &DMatrix<f64> {
        &self.a0_inv
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn l_mat(&self) -> &DMatrix<f64> {
        &self.l_mat
    }

    pub fn equilibrium_basis(&self) -> &[DVector<f64>] {
        &self.equilibrium_basis
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn law(&self) -> Option<&LawSpec> {
        self.law.as_ref()
    }

    /// Polynomial degree of the nonlinearity (1 when linear).
    pub fn nonlinear_degree(&self) -> u32 {
        self.degree
    }

    pub fn is_linear(&self) -> bool {
        self.degree <= 1
    }

    pub fn flux(&self, z: &[f64], out: &mut [f64]) {
        (self.flux)(z, out)
    }

    pub fn source(&self, z: &[f64], out: &mut [f64]) {
        (self.source)(z, out)
    }

    /// Fraction of the Nyquist band kept after dealiasing: `2/3` for quadratic,
    /// `1/2` for cubic and higher nonlinearities.
    pub fn dealias_fraction(&self) -> f64 {
        match self.degree {
            0..=2 => 2.0 / 3.0,
            _ => 0.5,
        }
    }

    /// `Phi(i xi) = -(A0)^{-1} (i xi A1 + L)`.
    pub fn symbol(&self, xi: f64) -> CMatrix {
        let n = self.dim_state();
        CMatrix::from_fn(n, n, |i, j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += self.a0_inv[(i, k)] * Complex64::new(self.l_mat[(k, j)], xi * self.a1[(k, j)]);
            }
            -acc
        })
    }

    /// `z^T A0 z`.
    pub fn energy_weight(&self, z: &[Complex64]) -> f64 {
        let n = self.dim_state();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (z[i].conj() * z[j]).re * self.a0[(i, j)];
            }
        }
        acc
    }

    /// Orthogonal projector onto the span of the equilibrium basis.
    pub fn equilibrium_projector(&self) -> DMatrix<f64> {
        let n = self.dim_state();
        let q = orthonormal_columns(&self.equilibrium_basis, n);
        &q * q.transpose()
    }
}

fn orthonormal_columns(vectors: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let m = DMatrix::from_columns(vectors);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax.max(1.0))
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis of `ker M` by singular value decomposition.
pub fn kernel_basis(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = m.ncols();
    let full = m.clone().resize(n.max(m.nrows()), n, 0.0);
    let svd = full.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * smax.max(1.0);
    (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose())
        .collect()
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal columns; 1 when the dimensions differ.
fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let residual = b - a * (a.transpose() * b);
    let r_ab = residual.singular_values().iter().cloned().fold(0.0, f64::max);
    let residual = a - b * (b.transpose() * a);
    let r_ba = residual.singular_values().iter().cloned().fold(0.0, f64::max);
    r_ab.max(r_ba)
}

/// Condition (A) flags and the quantities behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionA {
    pub a0_spd: bool,
    pub a1_symmetric: bool,
    pub l_symmetric: bool,
    /// Nonnegativity of the symmetric part `(L + L^T)/2`.
    pub l_nonneg: bool,
    pub kernel_match: bool,
    pub a0_min_eigenvalue: f64,
    pub l_sym_min_eigenvalue: f64,
    pub kernel_dimension: usize,
    pub kernel_angle: f64,
}

impl ConditionA {
    pub fn pass(&self) -> bool {
        self.a0_spd && self.a1_symmetric && self.l_nonneg && self.kernel_match
    }
}

/// Outcome of the Kawashima-Shizuta check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ConditionK {
    Pass,
    /// An eigenvector of `A1 - mu A0` lying in `ker L`.
    Fail { eigenvalue: f64, witness: Vec<f64> },
    Indeterminate { reason: String },
}

impl ConditionK {
    pub fn passed(&self) -> bool {
        matches!(self, ConditionK::Pass)
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            ConditionK::Fail { witness, .. } => Some(witness),
            _ => None,
        }
    }
}

/// Structure report of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub system: String,
    pub condition_a: ConditionA,
    pub condition_k: ConditionK,
    pub dissipation_constant: f64,
    /// A frequency where `max Re lambda >= 0`, when one exists.
    pub dissipation_witness: Option<f64>,
    /// Frequency attaining the minimal ratio.
    pub dissipation_argmin: Option<f64>,
    pub pass: bool,
    pub notes: Vec<String>,
}

fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOLERANCE * scale
}

/// Condition (A): `A0` symmetric positive definite, `A1` symmetric, `L`
/// nonnegative (symmetric part) with kernel equal to the equilibrium space.
pub fn check_condition_a(spec: &SystemSpec) -> ConditionA {
    let n = spec.dim_state();
    let a0_sym = is_symmetric(&spec.a0);
    let a0_min = symmetric_min_eigenvalue(&((&spec.a0 + spec.a0.transpose()) * 0.5));
    let l_sym_part = (&spec.l_mat + spec.l_mat.transpose()) * 0.5;
    let l_min = symmetric_min_eigenvalue(&l_sym_part);
    let l_scale = spec.l_mat.amax().max(1.0);
    let kernel = kernel_basis(&spec.l_mat);
    let k = orthonormal_columns(&kernel, n);
    let e = orthonormal_columns(&spec.equilibrium_basis, n);
    let angle = subspace_distance(&k, &e);
    ConditionA {
        a0_spd: a0_sym && a0_min > 0.0,
        a1_symmetric: is_symmetric(&spec.a1),
        l_symmetric: is_symmetric(&spec.l_mat),
        l_nonneg: l_min >= -SYMMETRY_TOLERANCE * l_scale,
        kernel_match: k.ncols() == e.ncols() && angle <= KERNEL_ANGLE_TOLERANCE,
        a0_min_eigenvalue: a0_min,
        l_sym_min_eigenvalue: l_min,
        kernel_dimension: kernel.len(),
        kernel_angle: angle,
    }
}

/// Condition (K) by the eigenvector criterion: no eigenvector of the pencil
/// `A1 - mu A0` lies in `ker L`.
pub fn check_condition_k(spec: &SystemSpec) -> ConditionK {
    let n = spec.dim_state();
    let a = check_condition_a(spec);
    if !a.a0_spd || !a.a1_symmetric {
        return ConditionK::Indeterminate {
            reason: "pencil criterion needs symmetric A1 and positive definite A0".into(),
        };
    }
    let kernel = orthonormal_columns(&kernel_basis(&spec.l_mat), n);
    if kernel.ncols() == 0 {
        return ConditionK::Pass;
    }
    // A0^{-1/2} A1 A0^{-1/2} is symmetric with the pencil's eigenvalues.
    let eig0 = spec.a0.clone().symmetric_eigen();
    let inv_sqrt = &eig0.eigenvectors
        * DMatrix::from_diagonal(&eig0.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig0.eigenvectors.transpose();
    let s = &inv_sqrt * &spec.a1 * &inv_sqrt;
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let scale = eig.eigenvalues.amax().max(1.0);
    let cluster_tol = 1e-8 * scale;
    let mut start = 0;
    while start < n {
        let mu = eig.eigenvalues[order[start]];
        let mut end = start + 1;
        while end < n && (eig.eigenvalues[order[end]] - mu).abs() <= cluster_tol {
            end += 1;
        }
        let space: Vec<DVector<f64>> = order[start..end]
            .iter()
            .map(|&i| &inv_sqrt * eig.eigenvectors.column(i))
            .collect();
        let e = orthonormal_columns(&space, n);
        let mut joint = DMatrix::zeros(n, e.ncols() + kernel.ncols());
        joint.view_mut((0, 0), (n, e.ncols())).copy_from(&e);
        joint.view_mut((0, e.ncols()), (n, kernel.ncols())).copy_from(&kernel);
        let rows = joint.nrows().max(joint.ncols());
        let padded = joint.clone().resize(rows, joint.ncols(), 0.0);
        let svd = padded.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors");
        let (kmin, smin) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if smin <= 1e-8 {
            let coeffs = v_t.row(kmin).transpose();
            let mut w: DVector<f64> = &e * coeffs.rows(0, e.ncols());
            w /= w.norm();
            let lead = w.iter().cloned().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
            if lead < 0.0 {
                w = -w;
            }
            let w: Vec<f64> = w.iter().map(|v| if v.abs() < 1e-15 { 0.0 } else { *v }).collect();
            return ConditionK::Fail {
                eigenvalue: mu,
                witness: w,
            };
        }
        start = end;
    }
    ConditionK::Pass
}

/// `eta_1(xi) = xi^2 / (1 + xi^2)`.
pub fn eta1(xi: f64) -> f64 {
    xi * xi / (1.0 + xi * xi)
}

/// Largest real part of the spectrum of `Phi(i xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub xi: f64,
    pub max_real: Option<f64>,
    pub error: Option<String>,
}

/// `max Re lambda(Phi(i xi))` on each grid frequency (parallel over `xi`).
pub fn spectral_envelope(spec: &SystemSpec, xi_grid: &[f64]) -> Vec<EnvelopePoint> {
    xi_grid
        .par_iter()
        .map(|&xi| match linalg::eigenvalues(&spec.symbol(xi)) {
            Ok(ev) => EnvelopePoint {
                xi,
                max_real: Some(ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)),
                error: None,
            },
            Err(e) => EnvelopePoint {
                xi,
                max_real: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Fitted envelope constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationFit {
    pub c: f64,
    pub argmin: Option<f64>,
    /// First `xi != 0` with `max Re lambda >= 0` (or an eigensolver failure).
    pub witness: Option<f64>,
}

/// `c = min_{xi != 0} (-max Re lambda) / eta_1(xi)`; zero with a witness when
/// some nonzero frequency is not strictly damped.
pub fn fit_dissipation_constant(envelope: &[EnvelopePoint]) -> DissipationFit {
    let mut c = f64::INFINITY;
    let mut argmin = None;
    for p in envelope.iter().filter(|p| p.xi != 0.0) {
        let Some(m) = p.max_real else {
            return DissipationFit { c: 0.0, argmin: None, witness: Some(p.xi) };
        };
        if m >= -1e-13 {
            return DissipationFit { c: 0.0, argmin: None, witness: Some(p.xi) };
        }
        let ratio = -m / eta1(p.xi);
        if ratio < c {
            c = ratio;
            argmin = Some(p.xi);
        }
    }
    if c.is_infinite() {
        c = 0.0;
    }
    DissipationFit { c, argmin, witness: None }
}

/// `count` log-spaced frequencies in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default certification sweep: 400 log-spaced points on `[1e-3, 1e3]`.
pub fn default_xi_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 400)
}

/// Runs conditions (A) and (K) and fits the dissipation constant.
pub fn check_structure(spec: &SystemSpec, xi_grid: &[f64]) -> StructureReport {
    let condition_a = check_condition_a(spec);
    let condition_k = check_condition_k(spec);
    let fit = fit_dissipation_constant(&spectral_envelope(spec, xi_grid));
    let mut notes = Vec::new();
    if !condition_a.l_symmetric {
        notes.push("L is not symmetric; nonnegativity checked on (L + L^T)/2".into());
    }
    if let Some(xi) = fit.witness {
        notes.push(format!("Phi(i xi) is not strictly damped at xi = {xi:e}"));
    }
    if let ConditionK::Indeterminate { reason } = &condition_k {
        notes.push(format!("condition (K) indeterminate: {reason}"));
    }
    let pass = condition_a.pass() && condition_k.passed() && fit.c > 0.0;
    StructureReport {
        system: spec.name.clone(),
        condition_a,
        condition_k,
        dissipation_constant: fit.c,
        dissipation_witness: fit.witness,
        dissipation_argmin: fit.argmin,
        pass,
        notes,
    }
}

/// Quadratic-vanishing audit of the nonlinear terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `max_dir ||P(eps z)|| / eps^2` at `eps = 1e-3` and `1e-4`.
    pub flux_ratios: [f64; 2],
    pub source_ratios: [f64; 2],
    /// Largest `|<Q(z), e>|` over sampled `z` and equilibrium vectors `e`.
    pub source_equilibrium_component: f64,
    pub pass: bool,
}

/// Checks `P, Q = O(|z|^2)` along `directions` random unit vectors and `Q in M^perp`.
pub fn nonlinearity_vanishing(spec: &SystemSpec, directions: usize, seed: u64) -> VanishingReport {
    use rand::{Rng, SeedableRng};
    let n = spec.dim_state();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..directions.max(1))
        .map(|i| {
            if i < n {
                (0..n).map(|k| f64::from(u8::from(k == i))).collect()
            } else {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    let mut out = vec![0.0; n];
    let mut ratio = |f: &dyn Fn(&[f64], &mut [f64]), eps: f64| {
        dirs.iter()
            .map(|d| {
                let z: Vec<f64> = d.iter().map(|v| v * eps).collect();
                f(&z, &mut out);
                out.iter().map(|x| x * x).sum::<f64>().sqrt() / (eps * eps)
            })
            .fold(0.0, f64::max)
    };
    let flux_ratios = [ratio(&|z, o| spec.flux(z, o), 1e-3), ratio(&|z, o| spec.flux(z, o), 1e-4)];
    let source_ratios = [
        ratio(&|z, o| spec.source(z, o), 1e-3),
        ratio(&|z, o| spec.source(z, o), 1e-4),
    ];
    let mut eq_comp: f64 = 0.0;
    for d in &dirs {
        for amp in [1e-2, 1e-1, 0.5] {
            let z: Vec<f64> = d.iter().map(|v| v * amp).collect();
            spec.source(&z, &mut out);
            for e in &spec.equilibrium_basis {
                let dot: f64 = e.iter().zip(&out).map(|(a, b)| a * b).sum();
                eq_comp = eq_comp.max(dot.abs() / e.norm());
            }
        }
    }
    let converged = |r: [f64; 2]| (r[0] - r[1]).abs() <= 0.01 * r[0].abs().max(r[1].abs()).max(1.0);
    VanishingReport {
        flux_ratios,
        source_ratios,
        source_equilibrium_component: eq_comp,
        pass: converged(flux_ratios) && converged(source_ratios) && eq_comp <= 1e-12,
    }
}

fn mat(n: usize, rows: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, rows)
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Damped Euler in `w = (rho - rho_bar, upsilon)`.
pub fn make_damped_euler(rho_bar: f64, pressure: PressureLaw) -> Result<SystemSpec> {
    if !(rho_bar > 0.0) || !rho_bar.is_finite() {
        return Err(Error::InvalidInput(format!("rho_bar must be positive, got {rho_bar}")));
    }
    let dp = pressure.dp(rho_bar);
    if !(dp > 0.0) {
        return Err(Error::InvalidInput(format!("need p'(rho_bar) > 0, got {dp}")));
    }
    let a_bar = dp / rho_bar;
    let c = a_bar * rho_bar;
    SystemSpec::new(
        "damped-euler",
        mat(2, &[a_bar, 0.0, 0.0, rho_bar]),
        mat(2, &[0.0, c, c, 0.0]),
        mat(2, &[0.0, 0.0, 0.0, rho_bar]),
        Some(vec![unit(2, 0)]),
        Some(vec!["rho".into(), "upsilon".into()]),
    )?
    .with_law(LawSpec::DampedEuler { rho_bar, pressure })
}

/// Thermoelasticity with second sound in `W = (v, r, theta, q)`,
/// `psi(r) = a^2 r + cubic r^3`.
pub fn make_thermoelasticity(a: f64, cubic: f64) -> Result<SystemSpec> {
    if !(a > 0.0) || !a.is_finite() || !cubic.is_finite() {
        return Err(Error::InvalidInput(format!("need psi'(0) = a^2 > 0, got a = {a}")));
    }
    let a2 = a * a;
    // Read off v_t - a^2 r_x + theta_x, a^2 (r_t - v_x), theta_t + v_x + q_x, q_t + theta_x.
    #[rustfmt::skip]
    let a1 = mat(4, &[
        0.0, -a2, 1.0, 0.0,
        -a2, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    ]);
    let mut l = DMatrix::zeros(4, 4);
    l[(3, 3)] = 1.0;
    SystemSpec::new(
        "thermoelasticity",
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, a2, 1.0, 1.0])),
        a1,
        l,
        Some(vec![unit(4, 0), unit(4, 1), unit(4, 2)]),
        Some(vec!["v".into(), "r".into(), "theta".into(), "q".into()]),
    )?
    .with_law(LawSpec::ThermoelasticCubic { a, cubic })
}

/// Timoshenko with equal wave speeds in `V = (v, u, z, y)`,
/// `sigma(z) = sigma_prime_0 z + cubic z^3`.
pub fn make_timoshenko(sigma_prime_0: f64, cubic: f64) -> Result<SystemSpec> {
    if sigma_prime_0 != 1.0 {
        return Err(Error::InvalidInput(format!(
            "only equal wave speeds are supported: sigma'(0) must be 1, got {sigma_prime_0}"
        )));
    }
    if !cubic.is_finite() {
        return Err(Error::InvalidInput("sigma coefficients must be finite".into()));
    }
    #[rustfmt::skip]
    let a1 = mat(4, &[
        0.0, -1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, -1.0,
        0.0, 0.0, -1.0, 0.0,
    ]);
    #[rustfmt::skip]
    let l = mat(4, &[
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 1.0,
    ]);
    SystemSpec::new(
        "timoshenko",
        DMatrix::identity(4, 4),
        a1,
        l,
        Some(vec![unit(4, 1), unit(4, 2)]),
        Some(vec!["v".into(), "u".into(), "z".into(), "y".into()]),
    )?
    .with_law(LawSpec::TimoshenkoCubic { cubic })
}

/// Names accepted by [`builtin`].
pub const BUILTIN_MODELS: [&str; 3] = ["damped-euler", "thermoelasticity", "timoshenko"];

/// Built-in model with default constitutive laws.
pub fn builtin(name: &str) -> Result<SystemSpec> {
    match name {
        "damped-euler" => make_damped_euler(1.0, PressureLaw::default()),
        "thermoelasticity" => make_thermoelasticity(1.0, 1.0 / 3.0),
        "timoshenko" => make_timoshenko(1.0, 1.0 / 3.0),
        other => Err(Error::InvalidInput(format!(
            "unknown model {other:?}; built-ins are {}",
            BUILTIN_MODELS.join(", ")
        ))),
    }
}

/// The decoupled system `A0 = I`, wave block on components 1-2 and damping on
/// component 3 only; it violates condition (K).
pub fn decoupled_counterexample() -> SystemSpec {
    let mut l = DMatrix::zeros(3, 3);
    l[(2, 2)] = 1.0;
    SystemSpec::new(
        "decoupled",
        DMatrix::identity(3, 3),
        mat(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        l,
        None,
        None,
    )
    .expect("valid counterexample")
}

/// On-disk model description (TOML); matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    #[serde(default = "default_model_name")]
    pub name: String,
    pub a0: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    #[serde(default)]
    pub equilibrium_basis: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default = "default_law")]
    pub law: LawSpec,
}

fn default_model_name() -> String {
    "custom".into()
}

fn default_law() -> LawSpec {
    LawSpec::None
}

fn to_matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Descriptor(format!("{field}: matrix has no rows")));
    }
    let m = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(Error::Descriptor(format!(
                "{field}: row {i} has {} entries, row 0 has {m}",
                r.len()
            )));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::Descriptor(format!("{field}[{i}][{j}] is not finite")));
        }
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ModelDescriptor {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Descriptor(e.to_string()))
    }

    /// Descriptor reproducing a system (law included when it is named).
    pub fn from_spec(spec: &SystemSpec) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
        Self {
            name: spec.name.clone(),
            a0: rows(&spec.a0),
            a1: rows(&spec.a1),
            l: rows(&spec.l_mat),
            equilibrium_basis: Some(spec.equilibrium_basis.iter().map(|v| v.iter().cloned().collect()).collect()),
            labels: Some(spec.labels.clone()),
            law: spec.law.unwrap_or(LawSpec::None),
        }
    }

    pub fn to_spec(&self) -> Result<SystemSpec> {
        let a0 = to_matrix("a0", &self.a0)?;
        let n = a0.nrows();
        if a0.ncols() != n {
            return Err(Error::Descriptor(format!("a0 is {}x{}, must be square", n, a0.ncols())));
        }
        let a1 = to_matrix("a1", &self.a1)?;
        let l = to_matrix("l", &self.l)?;
        for (name, m) in [("a1", &a1), ("l", &l)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Descriptor(format!(
                    "{name} is {}x{} but a0 is {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let basis = self
            .equilibrium_basis
            .as_ref()
            .map(|b| b.iter().map(|v| DVector::from_vec(v.clone())).collect());
        SystemSpec::new(self.name.clone(), a0, a1, l, basis, self.labels.clone())?.with_law(self.law)
    }
}

/// Reads a model descriptor file.
pub fn load_model_descriptor(path: &Path) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)?;
    ModelDescriptor::from_toml(&text)
        .map_err(|e| Error::Descriptor(format!("{}: {e}", path.display())))?
        .to_spec()
}

/// Resolves a built-in name or a descriptor path.
pub fn resolve_model(name_or_path: &str) -> Result<SystemSpec> {
    if BUILTIN_MODELS.contains(&name_or_path) {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        load_model_descriptor(path)
    } else {
        builtin(name_or_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn builtins_certify() {
        for name in BUILTIN_MODELS {
            let spec = builtin(name).unwrap();
            let r = check_structure(&spec, &default_xi_grid());
            assert!(r.pass, "{name}: {r:?}");
            assert!(r.dissipation_constant > 0.0);
            assert!(r.condition_k.witness().is_none());
        }
        let t = check_structure(&builtin("timoshenko").unwrap(), &default_xi_grid());
        assert!(!t.condition_a.l_symmetric);
    }

    #[test]
    fn counterexample_fails_k_with_witness() {
        let r = check_structure(&decoupled_counterexample(), &default_xi_grid());
        assert!(!r.pass);
        match &r.condition_k {
            ConditionK::Fail { witness, eigenvalue } => {
                let s = 0.5f64.sqrt();
                assert!((witness[0] - s).abs() < 1e-12 && (witness[1] - s).abs() < 1e-12);
                assert_eq!(witness[2], 0.0);
                assert!((eigenvalue - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.dissipation_constant, 0.0);
        assert!(r.dissipation_witness.is_some());
    }

    #[test]
    fn euler_symbol_matches_quadratic() {
        let spec = make_damped_euler(1.0, PressureLaw::Isothermal { kappa: 1.0 }).unwrap();
        for xi in [0.1, 0.3, 1.0, 7.0] {
            let ev = sorted(linalg::eigenvalues(&spec.symbol(xi)).unwrap());
            let disc = Complex64::new(1.0 - 4.0 * xi * xi, 0.0).sqrt();
            let roots = sorted(vec![(-1.0 + disc) / 2.0, (-1.0 - disc) / 2.0]);
            for (a, b) in ev.iter().zip(&roots) {
                assert!((a - b).norm() < 1e-12, "xi={xi}");
            }
        }
        let ev = linalg::eigenvalues(&spec.symbol(0.1)).unwrap();
        let top = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        assert!((top + 0.010102).abs() < 1e-6);
    }

    #[test]
    fn zero_frequency_spectra() {
        let t = linalg::eigenvalues(&builtin("timoshenko").unwrap().symbol(0.0)).unwrap();
        let s3 = 3f64.sqrt();
        let expected = sorted(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.5, s3 / 2.0),
            Complex64::new(-0.5, -s3 / 2.0),
        ]);
        for (a, b) in sorted(t).iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
        let th = sorted(linalg::eigenvalues(&builtin("thermoelasticity").unwrap().symbol(0.0)).unwrap());
        assert!((th[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!(th[1..].iter().all(|z| z.norm() < 1e-14));
        for name in BUILTIN_MODELS {
            let env = spectral_envelope(&builtin(name).unwrap(), &[0.0]);
            assert!(env[0].max_real.unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn euler_envelope_ratio() {
        let spec = make_damped_euler(1.0, PressureLaw::Isothermal { kappa: 1.0 }).unwrap();
        let env = spectral_envelope(&spec, &[1.0]);
        assert!((env[0].max_real.unwrap() + 0.5).abs() < 1e-13);
        assert_eq!(eta1(1.0), 0.5);
        let fit = fit_dissipation_constant(&env);
        assert!((fit.c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undamped_wave_has_no_constant() {
        let spec = SystemSpec::new(
            "wave",
            DMatrix::identity(2, 2),
            mat(2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::zeros(2, 2),
            None,
            None,
        )
        .unwrap();
        let fit = fit_dissipation_constant(&spectral_envelope(&spec, &log_grid(0.1, 10.0, 5)));
        assert_eq!(fit.c, 0.0);
        assert!(fit.witness.is_some());
        let a = check_condition_a(&spec);
        assert!(a.kernel_match && a.kernel_dimension == 2);
    }

    #[test]
    fn timoshenko_symmetric_part() {
        let spec = builtin("timoshenko").unwrap();
        let s = (spec.l_mat() + spec.l_mat().transpose()) * 0.5;
        let mut d = DMatrix::zeros(4, 4);
        d[(3, 3)] = 1.0;
        assert_eq!(s, d);
        let mut z = [0.0; 4];
        spec.flux(&[0.0, 0.0, 0.3, 0.0], &mut z);
        assert!((z[3] - 0.009).abs() < 1e-15);
    }

    #[test]
    fn nonlinearities_vanish_quadratically() {
        for name in BUILTIN_MODELS {
            let r = nonlinearity_vanishing(&builtin(name).unwrap(), 8, 1);
            assert!(r.pass, "{name}: {r:?}");
        }
        let e = builtin("damped-euler").unwrap();
        let mut out = [1.0; 2];
        e.flux(&[0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        let mut o = [0.0; 4];
        builtin("thermoelasticity").unwrap().flux(&[0.0, 0.3, 0.0, 0.0], &mut o);
        assert!((o[0] - 0.009).abs() < 1e-15);
    }

    #[test]
    fn symbol_conjugate_symmetry() {
        for name in BUILTIN_MODELS {
            let s = builtin(name).unwrap();
            for xi in [0.2, 3.0] {
                assert_eq!(s.symbol(-xi), s.symbol(xi).map(|z| z.conj()));
            }
        }
    }

    #[test]
    fn constructor_errors() {
        assert!(make_damped_euler(0.0, PressureLaw::default()).is_err());
        assert!(make_thermoelasticity(0.0, 1.0).is_err());
        assert!(make_timoshenko(2.0, 1.0).is_err());
        assert!(builtin("nope").unwrap_err().to_string().contains("timoshenko"));
        let singular = SystemSpec::new(
            "s",
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            None,
            None,
        );
        assert!(matches!(singular, Err(Error::Singular(_))));
    }

    #[test]
    fn descriptor_round_trip() {
        for name in BUILTIN_MODELS {
            let spec = builtin(name).unwrap();
            let text = ModelDescriptor::from_spec(&spec).to_toml().unwrap();
            let back = ModelDescriptor::from_toml(&text).unwrap().to_spec().unwrap();
            let xi = default_xi_grid();
            assert_eq!(check_structure(&spec, &xi), check_structure(&back, &xi));
            assert_eq!(back.law(), spec.law());
        }
    }

    #[test]
    fn descriptor_diagnostics() {
        let missing = "a1 = [[0.0]]\nl = [[0.0]]\n";
        let err = ModelDescriptor::from_toml(missing).unwrap_err().to_string();
        assert!(err.contains("a0"), "{err}");
        let mismatch = r#"
a0 = [[1.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0]]
a1 = [[0.0,0.0,0.0],[0.0,0.0,0.0],[0.0,0.0,0.0]]
l = [[0.0,0.0,0.0,0.0],[0.0,0.0,0.0,0.0],[0.0,0.0,0.0,0.0],[0.0,0.0,0.0,0.0]]
"#;
        let err = ModelDescriptor::from_toml(mismatch).unwrap().to_spec().unwrap_err().to_string();
        assert!(err.contains("l is 4x4"), "{err}");
        let unknown = "a0 = [[1.0]]\na1 = [[0.0]]\nl = [[1.0]]\n[law]\nname = \"van-der-waals\"\n";
        assert!(ModelDescriptor::from_toml(unknown).is_err());
        let nonfinite = "a0 = [[nan]]\na1 = [[0.0]]\nl = [[1.0]]\n";
        let err = ModelDescriptor::from_toml(nonfinite).unwrap().to_spec().unwrap_err().to_string();
        assert!(err.contains("a0[0][0]"), "{err}");
    }
}
