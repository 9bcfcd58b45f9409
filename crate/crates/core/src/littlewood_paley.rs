//! Dyadic cutoffs and Littlewood-Paley block operators.
//!
//! `chi` equals 1 on `|xi| <= 3/4` and vanishes for `|xi| >= 4/3`; in between it is
//! glued from `g(x) = exp(-x^{-order})`. The annulus profile is the telescoping
//! difference `phi(xi) = chi(xi / 2) - chi(xi)`, supported in `3/4 <= |xi| <= 8/3`,
//! so `chi + sum_{j >= 0} phi(2^{-j} .) = 1` holds by cancellation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    fractional_derivative, inverse_unchecked, GridSpec, SpectralField,
};
use num_complex::Complex64;

/// Inner radius of the annulus and plateau radius of `chi`.
pub const INNER_RADIUS: f64 = 3.0 / 4.0;
/// Support radius of `chi`.
pub const BALL_RADIUS: f64 = 4.0 / 3.0;
/// Outer radius of the annulus.
pub const OUTER_RADIUS: f64 = 8.0 / 3.0;

/// The cutoff pair `(chi, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicCutoffs {
    smoothness_order: u32,
}

impl Default for DyadicCutoffs {
    fn default() -> Self {
        Self {
            smoothness_order: 1,
        }
    }
}

fn glue(x: f64, order: u32) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-x.powi(-(order as i32))).exp()
    }
}

impl DyadicCutoffs {
    pub fn smoothness_order(&self) -> u32 {
        self.smoothness_order
    }

    /// Radial ball profile.
    pub fn chi(&self, xi: f64) -> f64 {
        let r = xi.abs();
        if r <= INNER_RADIUS {
            return 1.0;
        }
        if r >= BALL_RADIUS {
            return 0.0;
        }
        let t = (r - INNER_RADIUS) / (BALL_RADIUS - INNER_RADIUS);
        let a = glue(1.0 - t, self.smoothness_order);
        let b = glue(t, self.smoothness_order);
        a / (a + b)
    }

    /// Radial annulus profile.
    pub fn phi(&self, xi: f64) -> f64 {
        self.chi(xi / 2.0) - self.chi(xi)
    }

    /// `phi(2^{-j} xi)`.
    pub fn phi_j(&self, j: i32, xi: f64) -> f64 {
        self.phi(xi * 2f64.powi(-j))
    }

    /// `int phi(xi)^2 d xi` over the real line by composite Simpson quadrature.
    pub fn phi_l2_squared(&self) -> f64 {
        let n = 20_000;
        let (a, b) = (INNER_RADIUS, OUTER_RADIUS);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.phi(a + i as f64 * h).powi(2);
        }
        2.0 * acc * h / 3.0
    }
}

/// Builds the cutoff pair; `smoothness_order >= 1`.
pub fn build_cutoffs(smoothness_order: u32) -> Result<DyadicCutoffs> {
    if smoothness_order == 0 {
        return Err(Error::InvalidInput("smoothness_order must be >= 1".into()));
    }
    Ok(DyadicCutoffs { smoothness_order })
}

/// Resolvable homogeneous block indices on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockIndexRange {
    pub j_min: i32,
    pub j_max: i32,
}

impl BlockIndexRange {
    pub fn contains(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn len(&self) -> usize {
        (self.j_max - self.j_min + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.j_max < self.j_min
    }
}

/// `j_min = floor(log2(2 pi / L)) - 1`, `j_max = ceil(log2(pi n / L)) + 1`.
pub fn block_range(grid: &GridSpec, _cut: &DyadicCutoffs) -> BlockIndexRange {
    let j_min = grid.xi_min().log2().floor() as i32 - 1;
    let j_max = grid.xi_nyquist().log2().ceil() as i32 + 1;
    BlockIndexRange { j_min, j_max }
}

fn check_index(j: i32, homogeneous: bool, range: &BlockIndexRange) -> Result<()> {
    let lo = if homogeneous { range.j_min } else { -1 };
    if homogeneous && !range.contains(j) || !homogeneous && j > range.j_max {
        return Err(Error::BlockOutOfRange {
            j,
            lo,
            hi: range.j_max,
        });
    }
    Ok(())
}

/// `Delta_j F` (inhomogeneous) or `dot Delta_j F` (homogeneous).
///
/// Inhomogeneous blocks with `j <= -2` are identically zero.
pub fn block(
    field: &SpectralField,
    j: i32,
    homogeneous: bool,
    cut: &DyadicCutoffs,
) -> Result<SpectralField> {
    let range = block_range(field.grid(), cut);
    check_index(j, homogeneous, &range)?;
    if !homogeneous && j <= -2 {
        return Ok(SpectralField::zeros(*field.grid()));
    }
    if !homogeneous && j == -1 {
        return Ok(field.apply_real(|xi| cut.chi(xi)));
    }
    Ok(field.apply_real(|xi| cut.phi_j(j, xi)))
}

/// Cutoff values tabulated on one grid, reused across many block applications.
#[derive(Debug, Clone)]
pub struct BlockTables {
    grid: GridSpec,
    cut: DyadicCutoffs,
    range: BlockIndexRange,
    chi: Vec<f64>,
    phi: BTreeMap<i32, Vec<f64>>,
}

impl BlockTables {
    pub fn new(grid: GridSpec, cut: DyadicCutoffs) -> Self {
        let range = block_range(&grid, &cut);
        let xis = grid.frequencies();
        let chi = xis.iter().map(|&xi| cut.chi(xi)).collect();
        let phi = range
            .iter()
            .map(|j| (j, xis.iter().map(|&xi| cut.phi_j(j, xi)).collect()))
            .collect();
        Self {
            grid,
            cut,
            range,
            chi,
            phi,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cutoffs(&self) -> &DyadicCutoffs {
        &self.cut
    }

    pub fn range(&self) -> BlockIndexRange {
        self.range
    }

    pub fn chi_table(&self) -> &[f64] {
        &self.chi
    }

    pub fn phi_table(&self, j: i32) -> Option<&[f64]> {
        self.phi.get(&j).map(|v| v.as_slice())
    }

    /// Multiplier table of block `j`: `phi_j` when homogeneous, `chi` for the
    /// inhomogeneous `j = -1`.
    pub fn table(&self, j: i32, homogeneous: bool) -> Result<&[f64]> {
        check_index(j, homogeneous, &self.range)?;
        if !homogeneous && j == -1 {
            return Ok(&self.chi);
        }
        if !homogeneous && j < -1 {
            return Err(Error::BlockOutOfRange {
                j,
                lo: -1,
                hi: self.range.j_max,
            });
        }
        Ok(self.phi[&j].as_slice())
    }

    /// Inhomogeneous block indices `-1..=j_max`.
    pub fn inhomogeneous_indices(&self) -> impl Iterator<Item = i32> {
        -1..=self.range.j_max
    }

    pub fn block(&self, field: &SpectralField, j: i32, homogeneous: bool) -> Result<SpectralField> {
        if !homogeneous && j <= -2 {
            check_index(j, homogeneous, &self.range)?;
            return Ok(SpectralField::zeros(*field.grid()));
        }
        Ok(field.apply_table(self.table(j, homogeneous)?))
    }

    /// `L^2` norm of a block without materializing it.
    pub fn block_l2_norm(&self, field: &SpectralField, j: i32, homogeneous: bool) -> Result<f64> {
        if !homogeneous && j <= -2 {
            return Ok(0.0);
        }
        let table = self.table(j, homogeneous)?;
        let nc = self.grid.n_components();
        let mut acc = 0.0;
        for (chunk, &f) in field.coefficients().chunks_exact(nc).zip(table) {
            if f != 0.0 {
                let s: f64 = chunk.iter().map(|z| z.norm_sqr()).sum();
                acc += f * f * s;
            }
        }
        Ok(self.grid.norm_scale() * acc.sqrt())
    }

    /// Writes `xi,chi,phi_<j>...` rows for every grid frequency with `k >= 0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("xi,chi");
        for j in self.range.iter() {
            header.push_str(&format!(",phi_{j}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.grid.num_points() / 2 {
            let mut line = format!("{:e},{:e}", self.grid.xi(i), self.chi[i]);
            for j in self.range.iter() {
                line.push_str(&format!(",{:e}", self.phi[&j][i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// `||Lambda^alpha dot Delta_j f||_2 / (2^{j alpha} ||dot Delta_j f||_2)`.
pub fn bernstein_block_ratio(block_field: &SpectralField, j: i32, alpha: f64) -> Result<f64> {
    let base = block_field.l2_norm();
    if base == 0.0 {
        return Err(Error::InvalidInput("block is identically zero".into()));
    }
    let lifted = if alpha >= 0.0 {
        fractional_derivative(block_field, alpha)?
    } else {
        block_field.apply_real(|xi| if xi == 0.0 { 0.0 } else { xi.abs().powf(alpha) })
    };
    Ok(lifted.l2_norm() / (2f64.powi(j).powf(alpha) * base))
}

/// Empirical constant in `||Lambda^alpha f||_inf <= C lambda^{alpha + 1/2} ||f||_2`
/// for random data with spectrum in `|xi| <= lambda`.
pub fn low_frequency_bernstein_constant(
    grid: &GridSpec,
    lambda: f64,
    alpha: f64,
    seed: u64,
) -> Result<f64> {
    if lambda < grid.xi_min() || lambda > grid.xi_nyquist() {
        return Err(Error::InvalidInput(format!(
            "radius {lambda} not resolvable on the grid"
        )));
    }
    let g = grid.with_components(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(g);
    for i in 0..=g.num_points() / 2 {
        let xi = g.xi(i);
        if xi.abs() <= lambda && i != g.nyquist_index() {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            f.mode_mut(i)[0] = z;
            let p = g.partner(i);
            f.mode_mut(p)[0] = z.conj();
        }
    }
    f.mode_mut(0)[0].im = 0.0;
    let lifted = fractional_derivative(&f, alpha)?;
    let sup = inverse_unchecked(&lifted).sup_norm();
    Ok(sup / (lambda.powf(alpha + 0.5) * f.l2_norm()))
}
