//! Shared fixtures for the benchmarks.

use besovlab::{synthesize_initial_data, DataKind, GridSpec, InitialDataSpec, SpectralField, SystemSpec};

/// Besov-tail datum of amplitude `1e-3` on an `n`-point grid of length `200 pi`.
pub fn fixture(spec: &SystemSpec, n: usize) -> SpectralField {
    let grid = GridSpec::new(n, 200.0 * std::f64::consts::PI, spec.dim_state()).expect("valid grid");
    let data = InitialDataSpec::new(DataKind::BesovTail { s: 0.5 }, 1e-3, 7);
    synthesize_initial_data(spec, &grid, &data).expect("valid datum")
}
