//! Seeded random test fields used by the inequality verifiers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::littlewood_paley::DyadicCutoffs;
use crate::spectral::{forward_transform, GridSpec, RealField, SpectralField};

/// Family a random sample is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// A handful of tones below `max_xi` with random amplitudes and phases.
    MixedTones { max_xi: f64 },
    /// One Gaussian bump with random center and width in `[width_lo, width_hi]`.
    Gaussian { width_lo: f64, width_hi: f64 },
    /// Random coefficients localized to homogeneous block `j`.
    SingleBlock { j: i32 },
}

/// Draws one scalar sample (component count taken from `grid`, all components
/// filled independently).
pub fn random_field<R: Rng>(
    grid: &GridSpec,
    kind: FieldKind,
    cut: &DyadicCutoffs,
    rng: &mut R,
) -> SpectralField {
    match kind {
        FieldKind::MixedTones { max_xi } => mixed_tones(grid, max_xi, rng),
        FieldKind::Gaussian { width_lo, width_hi } => {
            let width = rng.random_range(width_lo..=width_hi);
            let center = rng.random_range(0.25..0.75) * grid.box_length();
            let amps: Vec<f64> = (0..grid.n_components())
                .map(|_| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            gaussian(grid, center, width, &amps)
        }
        FieldKind::SingleBlock { j } => single_block(grid, j, cut, rng),
    }
}

/// Mixed tones with random amplitudes; every component independent.
pub fn mixed_tones<R: Rng>(grid: &GridSpec, max_xi: f64, rng: &mut R) -> SpectralField {
    let nc = grid.n_components();
    let mut f = SpectralField::zeros(*grid);
    let k_max = ((max_xi / grid.xi_min()).floor() as i64)
        .clamp(1, grid.num_points() as i64 / 2 - 1);
    let tones = rng.random_range(3..=8);
    for _ in 0..tones {
        let k = rng.random_range(1..=k_max);
        let i = grid.index_of(k);
        let p = grid.partner(i);
        for c in 0..nc {
            let amp = rng.random_range(0.1..1.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let z = Complex64::from_polar(amp, phase);
            f.mode_mut(i)[c] += z;
            f.mode_mut(p)[c] += z.conj();
        }
    }
    f
}

/// Periodized Gaussian `amp_c exp(-((x - center) / width)^2)` per component.
pub fn gaussian(grid: &GridSpec, center: f64, width: f64, amps: &[f64]) -> SpectralField {
    let l = grid.box_length();
    let f = RealField::from_fn(*grid, |x, v| {
        let mut d = (x - center).rem_euclid(l);
        if d > l / 2.0 {
            d -= l;
        }
        let g = (-(d / width).powi(2)).exp();
        for (c, out) in v.iter_mut().enumerate() {
            *out = amps[c % amps.len()] * g;
        }
    })
    .expect("gaussian samples are finite");
    forward_transform(&f)
}

/// Random Hermitian coefficients multiplied by `phi(2^{-j} xi)`; mean-free.
pub fn single_block<R: Rng>(
    grid: &GridSpec,
    j: i32,
    cut: &DyadicCutoffs,
    rng: &mut R,
) -> SpectralField {
    let nc = grid.n_components();
    let mut f = SpectralField::zeros(*grid);
    for i in 1..grid.num_points() / 2 {
        let w = cut.phi_j(j, grid.xi(i));
        if w == 0.0 {
            continue;
        }
        let p = grid.partner(i);
        for c in 0..nc {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
            f.mode_mut(i)[c] = z;
            f.mode_mut(p)[c] = z.conj();
        }
    }
    f
}

/// Removes the mean mode.
pub fn mean_free(mut f: SpectralField) -> SpectralField {
    for z in f.mode_mut(0) {
        *z = Complex64::new(0.0, 0.0);
    }
    f
}
