//! Periodic grids, unitary discrete Fourier transforms and Fourier multipliers.
//!
//! # Conventions
//!
//! A [`GridSpec`] samples the torus `[0, L)` at `x_m = m L / n`. Mode `k` has
//! frequency `xi_k = 2 pi k / L` with `k` in `[-n/2, n/2 - 1]`; coefficients are
//! stored in FFT order (index `i` holds `k = i` for `i < n/2` and `k = i - n`
//! otherwise). The forward transform is unitary:
//!
//! ```text
//! zhat(k) = n^{-1/2} sum_m z(x_m) exp(-2 pi i k m / n)
//! ```
//!
//! so a constant field `c` has `zhat(0) = c sqrt(n)`. Every norm carries the
//! continuum factor `sqrt(L / n)`, which makes grid refinement converge to
//! `L^2(0, L)` norms: a unit cosine has norm `sqrt(L / 2)`.
//!
//! Fields hold `N`-vector samples. Real samples are point-major (`samples[m * N + c]`),
//! spectral coefficients mode-major (`coefficients[i * N + c]`). The Nyquist mode
//! `k = -n/2` is its own Hermitian partner and is kept real by every multiplier.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the Hermitian defect accepted by [`inverse_transform`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Magic bytes opening a binary field snapshot.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"BSVF";
/// Layout version written after the magic.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Uniform periodic grid for an `N`-component state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    num_points: usize,
    box_length: f64,
    n_components: usize,
}

impl GridSpec {
    pub fn new(num_points: usize, box_length: f64, n_components: usize) -> Result<Self> {
        if num_points < 16 || !num_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "num_points must be a power of two >= 16, got {num_points}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive and finite, got {box_length}"
            )));
        }
        if n_components == 0 {
            return Err(Error::InvalidGrid("n_components must be positive".into()));
        }
        Ok(Self {
            num_points,
            box_length,
            n_components,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Same sampling, different state dimension.
    pub fn with_components(&self, n_components: usize) -> Result<Self> {
        Self::new(self.num_points, self.box_length, n_components)
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.num_points as f64
    }

    /// Continuum scaling `sqrt(L / n)` applied to discrete 2-norms.
    pub fn norm_scale(&self) -> f64 {
        self.dx().sqrt()
    }

    /// Lowest nonzero resolved frequency `2 pi / L`.
    pub fn xi_min(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// Nyquist frequency `pi n / L`.
    pub fn xi_nyquist(&self) -> f64 {
        PI * self.num_points as f64 / self.box_length
    }

    /// Integer wavenumber held at storage index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.num_points;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Storage index of wavenumber `k` (taken modulo `n`).
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.num_points as i64) as usize
    }

    /// Angular frequency at storage index `i`.
    pub fn xi(&self, i: usize) -> f64 {
        self.mode(i) as f64 * self.xi_min()
    }

    /// Storage index of the Hermitian partner `-k`.
    pub fn partner(&self, i: usize) -> usize {
        (self.num_points - i) % self.num_points
    }

    pub fn nyquist_index(&self) -> usize {
        self.num_points / 2
    }

    pub fn x(&self, m: usize) -> f64 {
        m as f64 * self.dx()
    }

    /// All frequencies in storage order.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.xi(i)).collect()
    }
}

/// Real `N`-vector samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    samples: Vec<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        let expected = grid.num_points * grid.n_components;
        if samples.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at point {} component {}",
                pos / grid.n_components,
                pos % grid.n_components
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.num_points * grid.n_components],
        }
    }

    /// Samples `f(x)` component-wise; `f` writes the `N`-vector at `x`.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let nc = grid.n_components;
        let mut samples = vec![0.0; grid.num_points * nc];
        for (m, chunk) in samples.chunks_exact_mut(nc).enumerate() {
            f(grid.x(m), chunk);
        }
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// State vector at point `m`.
    pub fn point(&self, m: usize) -> &[f64] {
        let nc = self.grid.n_components;
        &self.samples[m * nc..(m + 1) * nc]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        let nc = self.grid.n_components;
        self.samples.iter().skip(c).step_by(nc).copied().collect()
    }

    /// Pointwise Euclidean magnitude of the state vector.
    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .chunks_exact(self.grid.n_components)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// `L^q(0, L)` norm of the pointwise Euclidean magnitude, `q >= 1` or infinite.
    pub fn lp_norm(&self, q: f64) -> f64 {
        if q.is_infinite() {
            return self.magnitudes().fold(0.0, f64::max);
        }
        let sum: f64 = self.magnitudes().map(|v| v.powf(q)).sum();
        (self.grid.dx() * sum).powf(1.0 / q)
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.samples.iter().map(|v| v * v).sum();
        self.grid.norm_scale() * sum.sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    /// Writes the little-endian snapshot container:
    /// magic `BSVF`, `u32` version, `u64` num_points, `f64` box_length,
    /// `u64` n_components, then `num_points * n_components` `f64` samples point-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.num_points as u64).to_le_bytes())?;
        w.write_all(&self.grid.box_length.to_le_bytes())?;
        w.write_all(&(self.grid.n_components as u64).to_le_bytes())?;
        for v in &self.samples {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(Error::InvalidInput("bad snapshot magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let num_points = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let box_length = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n_components = u64::from_le_bytes(b8) as usize;
        let grid = GridSpec::new(num_points, box_length, n_components)?;
        let mut samples = Vec::with_capacity(num_points * n_components);
        for _ in 0..num_points * n_components {
            r.read_exact(&mut b8)?;
            samples.push(f64::from_le_bytes(b8));
        }
        Self::new(grid, samples)
    }

    /// CSV with header `x,<label_0>,...` and one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W, labels: &[String]) -> Result<()> {
        let nc = self.grid.n_components;
        let mut header = String::from("x");
        for c in 0..nc {
            header.push(',');
            match labels.get(c) {
                Some(l) => header.push_str(l),
                None => header.push_str(&format!("z{c}")),
            }
        }
        writeln!(w, "{header}")?;
        for m in 0..self.grid.num_points {
            let mut line = format!("{}", self.grid.x(m));
            for v in self.point(m) {
                line.push_str(&format!(",{v:e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Complex Fourier coefficients of an `N`-vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, coefficients: Vec<Complex64>) -> Result<Self> {
        let expected = grid.num_points * grid.n_components;
        if coefficients.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} coefficients, got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coefficients: vec![Complex64::new(0.0, 0.0); grid.num_points * grid.n_components],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Coefficient vector of the mode stored at index `i`.
    pub fn mode(&self, i: usize) -> &[Complex64] {
        let nc = self.grid.n_components;
        &self.coefficients[i * nc..(i + 1) * nc]
    }

    pub fn mode_mut(&mut self, i: usize) -> &mut [Complex64] {
        let nc = self.grid.n_components;
        &mut self.coefficients[i * nc..(i + 1) * nc]
    }

    /// Largest `|zhat(k) - conj(zhat(-k))|` over all modes and components.
    pub fn hermitian_defect(&self) -> f64 {
        let nc = self.grid.n_components;
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.num_points {
            let p = self.grid.partner(i);
            for c in 0..nc {
                let d = self.coefficients[i * nc + c] - self.coefficients[p * nc + c].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Projects onto Hermitian-symmetric coefficients, returning the defect removed.
    pub fn symmetrize(&mut self) -> f64 {
        let defect = self.hermitian_defect();
        let nc = self.grid.n_components;
        for i in 0..=self.grid.num_points / 2 {
            let p = self.grid.partner(i);
            for c in 0..nc {
                let a = self.coefficients[i * nc + c];
                let b = self.coefficients[p * nc + c];
                let avg = (a + b.conj()) * 0.5;
                self.coefficients[i * nc + c] = avg;
                self.coefficients[p * nc + c] = avg.conj();
            }
        }
        defect
    }

    /// Physical-space `L^2` norm evaluated through Plancherel.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.coefficients.iter().map(|c| c.norm_sqr()).sum();
        self.grid.norm_scale() * sum.sqrt()
    }

    /// `L^2` norm of component `c` only.
    pub fn component_l2_norm(&self, c: usize) -> f64 {
        let nc = self.grid.n_components;
        let sum: f64 = self
            .coefficients
            .iter()
            .skip(c)
            .step_by(nc)
            .map(|z| z.norm_sqr())
            .sum();
        self.grid.norm_scale() * sum.sqrt()
    }

    /// Keeps only component `c` (others zeroed).
    pub fn select_component(&self, c: usize) -> SpectralField {
        let nc = self.grid.n_components;
        let mut out = self.clone();
        for (idx, z) in out.coefficients.iter_mut().enumerate() {
            if idx % nc != c {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// Component-wise linear combination `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &SpectralField, b: f64) -> Result<SpectralField> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("grid mismatch".into()));
        }
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(SpectralField {
            grid: self.grid,
            coefficients,
        })
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            coefficients: self.coefficients.iter().map(|z| z * a).collect(),
        }
    }

    fn keep_nyquist_real(&mut self) {
        let nyq = self.grid.nyquist_index();
        for z in self.mode_mut(nyq) {
            z.im = 0.0;
        }
    }

    /// Applies a scalar multiplier `m(xi)` to every component.
    pub fn apply_scalar(&self, m: impl Fn(f64) -> Complex64) -> SpectralField {
        let nc = self.grid.n_components;
        let mut out = self.clone();
        for i in 0..self.grid.num_points {
            let factor = m(self.grid.xi(i));
            for z in &mut out.coefficients[i * nc..(i + 1) * nc] {
                *z *= factor;
            }
        }
        out.keep_nyquist_real();
        out
    }

    /// Applies a real scalar multiplier, the common case for cutoffs and `|xi|^l`.
    pub fn apply_real(&self, m: impl Fn(f64) -> f64) -> SpectralField {
        let nc = self.grid.n_components;
        let mut out = self.clone();
        for i in 0..self.grid.num_points {
            let factor = m(self.grid.xi(i));
            for z in &mut out.coefficients[i * nc..(i + 1) * nc] {
                *z *= factor;
            }
        }
        out
    }

    /// Applies a precomputed table of real factors, one per storage index.
    pub fn apply_table(&self, table: &[f64]) -> SpectralField {
        debug_assert_eq!(table.len(), self.grid.num_points);
        let nc = self.grid.n_components;
        let mut out = self.clone();
        for (chunk, &f) in out.coefficients.chunks_exact_mut(nc).zip(table) {
            for z in chunk {
                *z *= f;
            }
        }
        out
    }
}

fn fft_plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    type PlanCache = Mutex<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>;
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Unitary forward transform of a real field.
pub fn forward_transform(f: &RealField) -> SpectralField {
    let grid = f.grid;
    let n = grid.num_points;
    let nc = grid.n_components;
    let (fwd, _) = fft_plans(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut coefficients = vec![Complex64::new(0.0, 0.0); n * nc];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..nc {
        for (m, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(f.samples[m * nc + c], 0.0);
        }
        fwd.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            coefficients[i * nc + c] = b * scale;
        }
    }
    SpectralField { grid, coefficients }
}

/// Unitary inverse transform; rejects coefficients that are not Hermitian-symmetric
/// within [`HERMITIAN_TOLERANCE`] (relative to `max(1, max |zhat|)`).
pub fn inverse_transform(field: &SpectralField) -> Result<RealField> {
    let tolerance = HERMITIAN_TOLERANCE * field.max_abs().max(1.0);
    let defect = field.hermitian_defect();
    if defect > tolerance {
        return Err(Error::HermitianViolation { defect, tolerance });
    }
    Ok(inverse_unchecked(field))
}

/// Inverse transform keeping the real part, without the symmetry check.
pub(crate) fn inverse_unchecked(field: &SpectralField) -> RealField {
    let grid = field.grid;
    let n = grid.num_points;
    let nc = grid.n_components;
    let (_, inv) = fft_plans(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut samples = vec![0.0; n * nc];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..nc {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = field.coefficients[i * nc + c];
        }
        inv.process(&mut buf);
        for (m, b) in buf.iter().enumerate() {
            samples[m * nc + c] = b.re * scale;
        }
    }
    RealField { grid, samples }
}

/// Applies a matrix-valued multiplier `m(xi)` (N x N complex) mode by mode.
pub fn apply_multiplier(
    field: &SpectralField,
    m: impl Fn(f64) -> DMatrix<Complex64>,
) -> Result<SpectralField> {
    let grid = field.grid;
    let nc = grid.n_components;
    let mut out = field.clone();
    for i in 0..grid.num_points {
        let xi = grid.xi(i);
        let mat = m(xi);
        if mat.nrows() != nc || mat.ncols() != nc {
            return Err(Error::InvalidInput(format!(
                "multiplier at xi = {xi} is {}x{}, expected {nc}x{nc}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let src = field.mode(i);
        let dst = out.mode_mut(i);
        for (r, d) in dst.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, s) in src.iter().enumerate() {
                acc += mat[(r, c)] * s;
            }
            *d = acc;
        }
    }
    out.keep_nyquist_real();
    Ok(out)
}

type ScalarFactor = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// A scalar Fourier multiplier, possibly a composition of factors.
///
/// Composition applies factors in sequence, so `m1.then(m2)` reproduces applying
/// `m1` and then `m2` bit for bit.
#[derive(Clone)]
pub struct ScalarMultiplier {
    factors: Vec<ScalarFactor>,
}

impl ScalarMultiplier {
    pub fn new(f: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            factors: vec![Arc::new(f)],
        }
    }

    pub fn identity() -> Self {
        Self { factors: vec![] }
    }

    /// Spectral derivative `i xi`.
    pub fn derivative() -> Self {
        Self::new(|xi| Complex64::new(0.0, xi))
    }

    /// `self` followed by `next`.
    pub fn then(mut self, next: ScalarMultiplier) -> Self {
        self.factors.extend(next.factors);
        self
    }

    pub fn apply(&self, field: &SpectralField) -> SpectralField {
        let mut out = field.clone();
        for f in &self.factors {
            out = out.apply_scalar(|xi| f(xi));
        }
        out
    }
}

/// Symbol of `Lambda^l = |D|^l` at `xi`, with the mean mode kept only for `l = 0`.
pub fn lambda_symbol(xi: f64, order: f64) -> f64 {
    if order == 0.0 {
        1.0
    } else if xi == 0.0 {
        0.0
    } else {
        xi.abs().powf(order)
    }
}

/// `Lambda^l F`: multiplies coefficients by `|xi|^l`.
pub fn fractional_derivative(field: &SpectralField, order: f64) -> Result<SpectralField> {
    if !(order.is_finite() && order >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "fractional order must be >= 0, got {order}"
        )));
    }
    Ok(field.apply_real(|xi| lambda_symbol(xi, order)))
}

/// `L^2` norm of a real field; identical to [`SpectralField::l2_norm`] up to rounding.
pub fn l2_norm(f: &RealField) -> f64 {
    f.l2_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64, nc: usize) -> GridSpec {
        GridSpec::new(n, l, nc).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..g.num_points() * g.n_components())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        RealField::new(g, samples).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new(8, 1.0, 1).is_err());
        assert!(GridSpec::new(48, 1.0, 1).is_err());
        assert!(GridSpec::new(64, 0.0, 1).is_err());
        assert!(GridSpec::new(64, 1.0, 0).is_err());
    }

    #[test]
    fn mode_ordering() {
        let g = grid(16, 2.0 * PI, 1);
        assert_eq!(g.mode(0), 0);
        assert_eq!(g.mode(7), 7);
        assert_eq!(g.mode(8), -8);
        assert_eq!(g.mode(15), -1);
        assert_eq!(g.partner(1), 15);
        assert_eq!(g.partner(8), 8);
        assert_eq!(g.index_of(-3), 13);
    }

    #[test]
    fn constant_field_has_only_mean_mode() {
        let g = grid(64, 3.0, 2);
        let f = RealField::from_fn(g, |_, v| {
            v[0] = 2.5;
            v[1] = -1.0;
        })
        .unwrap();
        let fh = forward_transform(&f);
        let root_n = 8.0;
        assert!((fh.mode(0)[0].re - 2.5 * root_n).abs() < 1e-12);
        assert!((fh.mode(0)[1].re + root_n).abs() < 1e-12);
        for i in 1..64 {
            assert!(fh.mode(i).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn cosine_has_two_modes() {
        let l = 5.0;
        let g = grid(32, l, 1);
        let f = RealField::from_fn(g, |x, v| v[0] = (2.0 * PI * x / l).cos()).unwrap();
        let fh = forward_transform(&f);
        for i in 0..32 {
            let k = g.mode(i);
            let mag = fh.mode(i)[0].norm();
            if k.abs() == 1 {
                assert!((mag - 32f64.sqrt() / 2.0).abs() < 1e-12);
            } else {
                assert!(mag < 1e-12, "mode {k} = {mag}");
            }
        }
    }

    #[test]
    fn forward_rejects_nonfinite() {
        let g = grid(16, 1.0, 1);
        let mut s = vec![0.0; 16];
        s[3] = f64::NAN;
        assert!(RealField::new(g, s).is_err());
    }

    #[test]
    fn inverse_of_zero_and_single_mode() {
        let g = grid(32, 2.0 * PI, 1);
        let zero = inverse_transform(&SpectralField::zeros(g)).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));

        let mut fh = SpectralField::zeros(g);
        let amp = 32f64.sqrt() / 2.0;
        fh.mode_mut(1)[0] = Complex64::new(amp, 0.0);
        fh.mode_mut(31)[0] = Complex64::new(amp, 0.0);
        let f = inverse_transform(&fh).unwrap();
        for m in 0..32 {
            assert!((f.samples()[m] - g.x(m).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_rejects_asymmetric_coefficients() {
        let g = grid(32, 1.0, 1);
        let mut fh = SpectralField::zeros(g);
        fh.mode_mut(1)[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            inverse_transform(&fh),
            Err(Error::HermitianViolation { .. })
        ));
    }

    #[test]
    fn roundtrip_over_many_seeds() {
        let g = grid(128, 7.0, 3);
        for seed in 0..100 {
            let f = random_field(g, seed);
            let back = inverse_transform(&forward_transform(&f)).unwrap();
            let err: f64 = f
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = f.samples().iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-12 * norm, "seed {seed}: {err}");
        }
    }

    #[test]
    fn plancherel_over_many_seeds() {
        let g = grid(256, 11.0, 2);
        for seed in 0..100 {
            let f = random_field(g, seed);
            let phys = l2_norm(&f);
            let spec = forward_transform(&f).l2_norm();
            assert!((phys - spec).abs() <= 1e-12 * phys);
        }
    }

    #[test]
    fn unit_tone_norm() {
        let l = 13.0;
        let g = grid(64, l, 1);
        let f = RealField::from_fn(g, |x, v| v[0] = (4.0 * PI * x / l).cos()).unwrap();
        assert!((l2_norm(&f) - (l / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(l2_norm(&RealField::zeros(g)), 0.0);
    }

    #[test]
    fn derivative_of_cosine_is_scaled_sine() {
        let l = 3.0;
        let g = grid(64, l, 1);
        let f = RealField::from_fn(g, |x, v| v[0] = (2.0 * PI * x / l).cos()).unwrap();
        let d = ScalarMultiplier::derivative().apply(&forward_transform(&f));
        let df = inverse_transform(&d).unwrap();
        let w = 2.0 * PI / l;
        for m in 0..64 {
            assert!((df.samples()[m] + w * (w * g.x(m)).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_multipliers() {
        let g = grid(32, 1.0, 2);
        let fh = forward_transform(&random_field(g, 4));
        assert_eq!(ScalarMultiplier::identity().apply(&fh), fh);
        let id = apply_multiplier(&fh, |_| DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id, fh);
        assert!(apply_multiplier(&fh, |_| DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn composition_is_bitwise() {
        let g = grid(64, 9.0, 2);
        let fh = forward_transform(&random_field(g, 9));
        let m1 = ScalarMultiplier::new(|xi| Complex64::new(xi.cos(), 0.3 * xi));
        let m2 = ScalarMultiplier::new(|xi| Complex64::new(1.0 / (1.0 + xi * xi), -xi.sin()));
        let sequential = m2.apply(&m1.apply(&fh));
        let composed = m1.then(m2).apply(&fh);
        assert_eq!(sequential, composed);
    }

    #[test]
    fn fractional_orders() {
        let g = grid(64, 2.0 * PI, 1);
        let f = RealField::from_fn(g, |x, v| v[0] = (4.0 * x).sin()).unwrap();
        let fh = forward_transform(&f);
        assert_eq!(fractional_derivative(&fh, 0.0).unwrap(), fh);
        let half = fractional_derivative(&fh, 0.5).unwrap();
        assert!((half.l2_norm() - 2.0 * fh.l2_norm()).abs() < 1e-12);
        let one = fractional_derivative(&fh, 1.0).unwrap();
        assert!((one.l2_norm() - 4.0 * fh.l2_norm()).abs() < 1e-12);
        assert!(fractional_derivative(&fh, -0.5).is_err());

        let c = RealField::from_fn(g, |_, v| v[0] = 1.0).unwrap();
        let ch = forward_transform(&c);
        assert_eq!(fractional_derivative(&ch, 0.7).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn snapshot_roundtrip_and_layout() {
        let g = grid(16, 2.5, 2);
        let f = random_field(g, 1);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 + 16 * 2 * 8);
        assert_eq!(&buf[0..4], b"BSVF");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 2.5);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 2);
        assert_eq!(
            f64::from_le_bytes(buf[32..40].try_into().unwrap()),
            f.samples()[0]
        );
        let back = RealField::read_binary(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = grid(16, 1.0, 2);
        let f = RealField::zeros(g);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &["rho".to_string(), "v".to_string()])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,rho,v\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
